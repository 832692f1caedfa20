//! Chebyshev expansion of `exp(-i H dt)` for Hermitian operators given as a
//! matrix-vector product.

use num_complex::Complex64;

/// Bessel functions `J_0(x) … J_{n-1}(x)` by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = (n + 20 + ax as usize + 10 * (ax.sqrt() as usize)) | 1;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut norm = 0.0;
    let mut vals = vec![0.0; start + 1];
    vals[start] = j;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / ax * j - jp1;
        jp1 = j;
        j = jm1;
        vals[k - 1] = j;
        if j.abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    for (k, v) in vals.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for k in 0..n {
        let mut v = vals[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        out[k] = v;
    }
    out
}

/// Applies `exp(-i H dt)` to `psi` in place. `e_min`/`e_max` must bound the
/// spectrum of `H`.
pub fn chebyshev_propagate<F>(
    matvec: F,
    e_min: f64,
    e_max: f64,
    dt: f64,
    psi: &mut [Complex64],
    tol: f64,
) -> usize
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let center = 0.5 * (e_max + e_min);
    let radius = (0.5 * (e_max - e_min)).max(1e-12) * 1.01;
    let a = radius * dt;
    let n_terms = (a.abs() * 1.5 + 30.0) as usize + 20;
    let bessel = bessel_j_sequence(a, n_terms);
    let n = psi.len();
    let scaled = |v: &[Complex64], out: &mut [Complex64]| {
        matvec(v, out);
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o = (*o - *x * center) / radius;
        }
    };

    let mut t_prev: Vec<Complex64> = psi.to_vec();
    let mut t_cur = vec![Complex64::new(0.0, 0.0); n];
    scaled(&t_prev, &mut t_cur);
    let mut acc: Vec<Complex64> = t_prev.iter().map(|x| *x * bessel[0]).collect();
    let mut phase = Complex64::new(0.0, -1.0);
    let mut used = 1;
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n_terms {
        let coeff = phase * (2.0 * bessel[k]);
        for (a, t) in acc.iter_mut().zip(t_cur.iter()) {
            *a += *t * coeff;
        }
        used = k + 1;
        if k as f64 > a.abs() && bessel[k].abs() < tol {
            break;
        }
        scaled(&t_cur, &mut scratch);
        for i in 0..n {
            scratch[i] = scratch[i] * 2.0 - t_prev[i];
        }
        std::mem::swap(&mut t_prev, &mut t_cur);
        std::mem::swap(&mut t_cur, &mut scratch);
        phase *= Complex64::new(0.0, -1.0);
    }
    let global = Complex64::new(0.0, -center * dt).exp();
    for (p, a) in psi.iter_mut().zip(acc) {
        *p = a * global;
    }
    used
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_matches_known_values() {
        let j = bessel_j_sequence(1.0, 4);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((j[2] - 0.114_903_484_931_900_5).abs() < 1e-14);
        let j = bessel_j_sequence(30.0, 2);
        assert!((j[0] - (-0.086_367_983_581_040_2)).abs() < 1e-13);
    }

    #[test]
    fn propagates_two_level_rotation() {
        // H = σ_x: exp(-iσ_x t)|0> = cos t |0> - i sin t |1>
        let mv = |v: &[Complex64], o: &mut [Complex64]| {
            o[0] = v[1];
            o[1] = v[0];
        };
        let mut psi = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let t = 7.3;
        chebyshev_propagate(mv, -1.0, 1.0, t, &mut psi, 1e-15);
        assert!((psi[0] - Complex64::new(t.cos(), 0.0)).norm() < 1e-12);
        assert!((psi[1] - Complex64::new(0.0, -t.sin())).norm() < 1e-12);
    }
}

//! Simplex-truncated multi-index basis and the coupling coefficients of the
//! hierarchy.

use crate::bath::ExponentialBcf;
use crate::Complex64;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("hierarchy basis of {size} states exceeds the bound {bound}")]
    TooLarge { size: u128, bound: usize },
    #[error("invalid hierarchy request: {0}")]
    Invalid(String),
}

pub const NONE: u32 = u32::MAX;

/// All multi-indices `k` with `|k| ≤ k_max` over `Σ M_n` slots, ordered by
/// level and lexicographically (largest leading entry first) within a level.
#[derive(Debug, Clone)]
pub struct HierarchyBasis {
    pub term_counts: Vec<usize>,
    pub k_max: usize,
    offsets: Vec<usize>,
    m_total: usize,
    entries: Vec<u8>,
    position: HashMap<Vec<u8>, usize>,
    up: Vec<u32>,
    down: Vec<u32>,
    level_start: Vec<usize>,
}

pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn compositions(level: usize, slots: usize, prefix: &mut Vec<u8>, out: &mut Vec<u8>) {
    if slots == 1 {
        prefix.push(level as u8);
        out.extend_from_slice(prefix);
        prefix.pop();
        return;
    }
    for first in (0..=level).rev() {
        prefix.push(first as u8);
        compositions(level - first, slots - 1, prefix, out);
        prefix.pop();
    }
}

pub const DEFAULT_MAX_BASIS: usize = 2_000_000;

pub fn build_basis(term_counts: &[usize], k_max: usize) -> Result<HierarchyBasis, HierarchyError> {
    build_basis_bounded(term_counts, k_max, DEFAULT_MAX_BASIS)
}

pub fn build_basis_bounded(
    term_counts: &[usize],
    k_max: usize,
    bound: usize,
) -> Result<HierarchyBasis, HierarchyError> {
    if term_counts.is_empty() || term_counts.contains(&0) {
        return Err(HierarchyError::Invalid(format!(
            "term counts must be ≥ 1, got {term_counts:?}"
        )));
    }
    if k_max > u8::MAX as usize {
        return Err(HierarchyError::Invalid(format!("k_max {k_max} too large")));
    }
    let m_total: usize = term_counts.iter().sum();
    let size = binomial((k_max + m_total) as u64, m_total as u64);
    if size > bound as u128 {
        return Err(HierarchyError::TooLarge { size, bound });
    }
    let size = size as usize;
    let mut entries = Vec::with_capacity(size * m_total);
    let mut level_start = Vec::with_capacity(k_max + 2);
    let mut prefix = Vec::with_capacity(m_total);
    for level in 0..=k_max {
        level_start.push(entries.len() / m_total);
        compositions(level, m_total, &mut prefix, &mut entries);
    }
    level_start.push(size);
    debug_assert_eq!(entries.len(), size * m_total);

    let mut position = HashMap::with_capacity(size);
    for (i, k) in entries.chunks(m_total).enumerate() {
        position.insert(k.to_vec(), i);
    }
    let mut up = vec![NONE; size * m_total];
    let mut down = vec![NONE; size * m_total];
    let mut key = vec![0u8; m_total];
    for i in 0..size {
        key.copy_from_slice(&entries[i * m_total..(i + 1) * m_total]);
        let level: usize = key.iter().map(|&x| x as usize).sum();
        for j in 0..m_total {
            if level < k_max {
                key[j] += 1;
                up[i * m_total + j] = position[&key] as u32;
                key[j] -= 1;
            }
            if key[j] > 0 {
                key[j] -= 1;
                down[i * m_total + j] = position[&key] as u32;
                key[j] += 1;
            }
        }
    }
    let mut offsets = Vec::with_capacity(term_counts.len());
    let mut acc = 0;
    for &m in term_counts {
        offsets.push(acc);
        acc += m;
    }
    Ok(HierarchyBasis {
        term_counts: term_counts.to_vec(),
        k_max,
        offsets,
        m_total,
        entries,
        position,
        up,
        down,
        level_start,
    })
}

impl HierarchyBasis {
    pub fn len(&self) -> usize {
        self.entries.len() / self.m_total
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m_total(&self) -> usize {
        self.m_total
    }

    pub fn num_baths(&self) -> usize {
        self.term_counts.len()
    }

    /// Flat slot of term `μ` of bath `n`.
    pub fn slot(&self, bath: usize, term: usize) -> usize {
        self.offsets[bath] + term
    }

    pub fn index(&self, ordinal: usize) -> &[u8] {
        &self.entries[ordinal * self.m_total..(ordinal + 1) * self.m_total]
    }

    pub fn level(&self, ordinal: usize) -> usize {
        self.index(ordinal).iter().map(|&x| x as usize).sum()
    }

    /// Ordinals `[start, end)` of hierarchy level `l`.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        self.level_start[level]..self.level_start[level + 1]
    }

    pub fn position(&self, k: &[u8]) -> Option<usize> {
        self.position.get(k).copied()
    }

    #[inline]
    pub fn up_slot(&self, ordinal: usize, slot: usize) -> u32 {
        self.up[ordinal * self.m_total + slot]
    }

    #[inline]
    pub fn down_slot(&self, ordinal: usize, slot: usize) -> u32 {
        self.down[ordinal * self.m_total + slot]
    }

    pub fn neighbors(
        &self,
        ordinal: usize,
        bath: usize,
        term: usize,
    ) -> Result<(Option<usize>, Option<usize>), HierarchyError> {
        if ordinal >= self.len() {
            return Err(HierarchyError::Invalid(format!(
                "ordinal {ordinal} out of range"
            )));
        }
        if bath >= self.term_counts.len() || term >= self.term_counts[bath] {
            return Err(HierarchyError::Invalid(format!(
                "no term {term} for bath {bath}"
            )));
        }
        let s = self.slot(bath, term);
        let f = |v: u32| (v != NONE).then_some(v as usize);
        Ok((f(self.up_slot(ordinal, s)), f(self.down_slot(ordinal, s))))
    }

    /// Ordinal of the first-level state `e_{n,μ}`.
    pub fn first_level(&self, bath: usize, term: usize) -> Option<usize> {
        let v = self.up_slot(0, self.slot(bath, term));
        (v != NONE).then_some(v as usize)
    }
}

/// Per-slot `√G`, `W` and per-ordinal dampings `Σ k·W`.
#[derive(Debug, Clone)]
pub struct HopsCoefficients {
    pub sqrt_g: Vec<Complex64>,
    pub w: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub bath_of_slot: Vec<usize>,
    pub damping: Vec<Complex64>,
}

impl HopsCoefficients {
    pub fn new(basis: &HierarchyBasis, bcfs: &[ExponentialBcf]) -> Result<Self, HierarchyError> {
        if bcfs.len() != basis.num_baths() {
            return Err(HierarchyError::Invalid(format!(
                "{} BCFs for {} baths",
                bcfs.len(),
                basis.num_baths()
            )));
        }
        let mut sqrt_g = Vec::new();
        let mut w = Vec::new();
        let mut g = Vec::new();
        let mut bath_of_slot = Vec::new();
        for (n, (bcf, &m)) in bcfs.iter().zip(&basis.term_counts).enumerate() {
            if bcf.len() != m {
                return Err(HierarchyError::Invalid(format!(
                    "bath {n}: BCF has {} terms, basis expects {m}",
                    bcf.len()
                )));
            }
            for t in &bcf.terms {
                sqrt_g.push(t.g.sqrt());
                w.push(t.w);
                g.push(t.g);
                bath_of_slot.push(n);
            }
        }
        let damping = (0..basis.len())
            .map(|i| {
                basis
                    .index(i)
                    .iter()
                    .zip(&w)
                    .map(|(&k, w)| *w * k as f64)
                    .sum()
            })
            .collect();
        Ok(Self {
            sqrt_g,
            w,
            g,
            bath_of_slot,
            damping,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_bases() {
        let b = build_basis(&[1], 4).unwrap();
        assert_eq!(b.len(), 5);
        for i in 0..5 {
            assert_eq!(b.index(i), &[i as u8]);
        }
        assert_eq!(build_basis(&[5, 5], 4).unwrap().len(), 1001);
        let z = build_basis(&[3], 0).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z.index(0), &[0, 0, 0]);
    }

    #[test]
    fn size_bound_is_enforced() {
        match build_basis_bounded(&[5, 5], 6, 1000) {
            Err(HierarchyError::TooLarge { size, .. }) => assert_eq!(size, 8008),
            other => panic!("{other:?}"),
        }
        assert!(build_basis(&[0], 2).is_err());
    }

    #[test]
    fn neighbor_edges() {
        let b = build_basis(&[2, 3], 3).unwrap();
        for n in 0..2 {
            for m in 0..b.term_counts[n] {
                assert_eq!(b.neighbors(0, n, m).unwrap().1, None);
            }
        }
        for i in b.level_range(3) {
            for n in 0..2 {
                for m in 0..b.term_counts[n] {
                    assert_eq!(b.neighbors(i, n, m).unwrap().0, None);
                }
            }
        }
        assert!(b.neighbors(0, 2, 0).is_err());
        assert!(b.neighbors(0, 0, 2).is_err());
    }

    #[test]
    fn damping_sums_rates() {
        use crate::bath::BcfTerm;
        let b = build_basis(&[2], 2).unwrap();
        let bcf = ExponentialBcf::new(
            vec![
                BcfTerm {
                    g: Complex64::new(1.0, 0.0),
                    w: Complex64::new(1.0, 2.0),
                },
                BcfTerm {
                    g: Complex64::new(-1.0, 0.0),
                    w: Complex64::new(3.0, 0.0),
                },
            ],
            0.0,
        )
        .unwrap();
        let c = HopsCoefficients::new(&b, &[bcf]).unwrap();
        let i = b.position(&[1, 1]).unwrap();
        assert_eq!(c.damping[i], Complex64::new(4.0, 2.0));
        assert_eq!(c.sqrt_g[1], Complex64::new(0.0, 1.0));
    }

    proptest! {
        #[test]
        fn count_closure_and_bijectivity(m in 1usize..6, k in 0usize..5, split in 0usize..5) {
            let counts = if split > 0 && split < m { vec![split, m - split] } else { vec![m] };
            let b = build_basis(&counts, k).unwrap();
            prop_assert_eq!(b.len() as u128, binomial((k + m) as u64, m as u64));
            for i in 0..b.len() {
                prop_assert_eq!(b.position(b.index(i)), Some(i));
                let lvl = b.level(i);
                prop_assert!(b.level_range(lvl).contains(&i));
                for s in 0..m {
                    let d = b.down_slot(i, s);
                    if b.index(i)[s] > 0 {
                        prop_assert!(d != NONE);
                        prop_assert_eq!(b.up_slot(d as usize, s) as usize, i);
                    } else {
                        prop_assert_eq!(d, NONE);
                    }
                    let u = b.up_slot(i, s);
                    if u != NONE {
                        prop_assert_eq!(b.down_slot(u as usize, s) as usize, i);
                    }
                }
            }
        }
    }
}

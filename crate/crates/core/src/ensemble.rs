//! Streaming ensemble statistics and a deterministic parallel trajectory
//! runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Elementwise running mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Welford {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length mismatch");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Combines two partial accumulators (Chan et al.).
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2[i] / (self.count - 1) as f64
    }

    /// Standard error of the mean.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        (self.variance(i) / self.count as f64).sqrt()
    }
}

/// Running mean and covariance of a small vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovWelford {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major co-moment matrix.
    pub c2: Vec<f64>,
}

impl CovWelford {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            c2: vec![0.0; len * len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        let k = self.mean.len();
        self.count += 1;
        let n = self.count as f64;
        let d_old: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for i in 0..k {
            self.mean[i] += d_old[i] / n;
        }
        for i in 0..k {
            let d_new = x[i] - self.mean[i];
            for j in 0..k {
                self.c2[j * k + i] += d_old[j] * d_new;
            }
        }
    }

    pub fn merge(&mut self, other: &CovWelford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let k = self.mean.len();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        for i in 0..k {
            for j in 0..k {
                self.c2[i * k + j] += other.c2[i * k + j] + d[i] * d[j] * na * nb / n;
            }
        }
        for i in 0..k {
            self.mean[i] += d[i] * nb / n;
        }
        self.count += other.count;
    }

    /// Covariance of the means.
    pub fn mean_cov(&self, i: usize, j: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let k = self.mean.len();
        self.c2[i * k + j] / ((self.count - 1) as f64 * self.count as f64)
    }

    pub fn stderr(&self, i: usize) -> f64 {
        self.mean_cov(i, i).sqrt()
    }
}

/// Anything that can absorb one trajectory's result and merge with peers.
pub trait Accumulate: Send {
    type Item;
    fn add(&mut self, item: &Self::Item);
    fn merge(&mut self, other: &Self);
    fn record_abort(&mut self, reason: String);
}

/// Runs `n` trajectories on `workers` threads. Trajectories are grouped in
/// fixed chunks whose partial accumulators are merged in chunk order, so the
/// result does not depend on the worker count.
pub fn run_ensemble<A, F, G>(n: u64, workers: usize, chunk: u64, make_acc: G, trajectory: F) -> A
where
    A: Accumulate,
    G: Fn() -> A + Sync,
    F: Fn(u64) -> Result<A::Item, String> + Sync,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let work = |c: u64| {
        let mut acc = make_acc();
        for i in c * chunk..((c + 1) * chunk).min(n) {
            match trajectory(i) {
                Ok(item) => acc.add(&item),
                Err(e) => acc.record_abort(format!("trajectory {i}: {e}")),
            }
        }
        acc
    };
    let partials: Vec<A> = if workers <= 1 {
        (0..n_chunks).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..n_chunks).into_par_iter().map(work).collect())
    };
    let mut total = make_acc();
    for p in &partials {
        total.merge(p);
    }
    total
}

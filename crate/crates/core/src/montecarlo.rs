//! Replication driver and estimates with seed provenance.
//!
//! Replications are evaluated in fixed-size chunks, possibly in parallel,
//! and always reduced in replication-index order, so every estimate is
//! independent of the number of worker threads.

use rayon::prelude::*;

use crate::noise::SeedStream;

/// Replications evaluated per parallel batch.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedProvenance {
    pub master: u64,
    pub tag: String,
}

impl From<&SeedStream> for SeedProvenance {
    fn from(s: &SeedStream) -> Self {
        Self { master: s.master, tag: s.tag.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replications: usize,
    pub provenance: SeedProvenance,
}

impl MCEstimate {
    /// `sqrt(mean)` with delta-method standard error, for root-mean-square norms.
    pub fn sqrt(&self) -> MCEstimate {
        let root = self.mean.max(0.0).sqrt();
        let stderr = if root > 0.0 { self.stderr / (2.0 * root) } else { 0.0 };
        MCEstimate { mean: root, stderr, ..self.clone() }
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, provenance: SeedProvenance) -> MCEstimate {
        MCEstimate { mean: self.mean(), stderr: self.stderr(), replications: self.count, provenance }
    }
}

/// Evaluates `eval` on `SeedStream(master, tag, r)` for `r = 0..reps` and
/// feeds the results to `consume` in increasing `r`.
pub fn replicate<T, F, C>(master: u64, tag: &str, reps: usize, eval: F, mut consume: C)
where
    T: Send,
    F: Fn(&SeedStream) -> T + Sync,
    C: FnMut(usize, T),
{
    let base = SeedStream::new(master, tag, 0);
    let mut start = 0;
    while start < reps {
        let end = (start + CHUNK).min(reps);
        let batch: Vec<T> = (start..end).into_par_iter().map(|r| eval(&base.with_index(r as u64))).collect();
        for (offset, value) in batch.into_iter().enumerate() {
            consume(start + offset, value);
        }
        start = end;
    }
}

/// Mean of `eval` over `reps` seeded replications, with `stderr = sd/√reps`.
pub fn mc_run<F>(tag: &str, reps: usize, eval: F, master: u64) -> MCEstimate
where
    F: Fn(&SeedStream) -> f64 + Sync,
{
    let mut acc = Welford::default();
    replicate(master, tag, reps, eval, |_, x| acc.push(x));
    acc.estimate(SeedProvenance { master, tag: tag.to_string() })
}

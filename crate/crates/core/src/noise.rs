//! Brownian paths on nested time grids and the coupled pair `(W, W̃)`.
//!
//! `W̃ = W̄ + B̃` where `W̄` interpolates `W` linearly between coarse times and
//! `B̃` is a fresh Brownian bridge on every coarse cell. Both processes are
//! Brownian motions, they coincide at the coarse times and are conditionally
//! independent in between.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::fmt_g;

/// Time points `0 = t_0 < t_1 < … < t_n = 1`.
#[derive(Clone, Debug)]
pub struct Grid {
    times: Arc<[f64]>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || self.times == other.times
    }
}

impl Grid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two time points".into()));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("grid must start at 0 and end at 1".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidGrid(format!("times not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { times: times.into() })
    }

    /// `t_i = i/n`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform grid needs at least one cell");
        Self { times: (0..=n).map(|i| i as f64 / n as f64).collect() }
    }

    /// Splits every cell into `factor` equal parts. Existing times are kept
    /// bit for bit.
    pub fn refine(&self, factor: usize) -> Self {
        assert!(factor >= 1, "refinement factor must be positive");
        let mut out = Vec::with_capacity(self.cells() * factor + 1);
        for w in self.times.windows(2) {
            out.push(w[0]);
            for j in 1..factor {
                out.push(w[0] + (w[1] - w[0]) * (j as f64 / factor as f64));
            }
        }
        out.push(1.0);
        Self { times: out.into() }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cells(&self) -> usize {
        self.times.len() - 1
    }

    /// Positions of this grid's times inside `finer`.
    pub fn embed_in(&self, finer: &Grid) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.times.len());
        let mut j = 0;
        for &t in self.times.iter() {
            while j < finer.times.len() && finer.times[j] < t {
                j += 1;
            }
            if j == finer.times.len() || finer.times[j] != t {
                return Err(Error::IncompatibleGrids(t));
            }
            idx.push(j);
        }
        Ok(idx)
    }

    /// `true` if `t_i` equals `i/n` up to rounding.
    pub fn is_equidistant(&self) -> bool {
        let n = self.cells() as f64;
        self.times.iter().enumerate().all(|(i, &t)| (t - i as f64 / n).abs() <= 1e-12)
    }
}

/// Values of a Brownian-type path at the times of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FinePath {
    grid: Grid,
    values: Vec<f64>,
}

impl FinePath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.times.len() {
            return Err(Error::InvalidGrid(format!("{} values for {} times", values.len(), grid.times.len())));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidGrid("path must start at 0".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_end(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// `W` and `W̃` on a fine grid, equal at every coarse time.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPathPair {
    pub coarse: Grid,
    pub fine: Grid,
    pub w: Vec<f64>,
    pub w_tilde: Vec<f64>,
}

impl CoupledPathPair {
    pub fn path(&self) -> FinePath {
        FinePath { grid: self.fine.clone(), values: self.w.clone() }
    }

    pub fn tilde_path(&self) -> FinePath {
        FinePath { grid: self.fine.clone(), values: self.w_tilde.clone() }
    }

    /// `time,w,w_tilde` rows at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,w,w_tilde\n");
        for ((t, w), wt) in self.fine.times().iter().zip(&self.w).zip(&self.w_tilde) {
            let _ = writeln!(out, "{},{},{}", fmt_g(*t, 17), fmt_g(*w, 17), fmt_g(*wt, 17));
        }
        out
    }
}

/// Reproducible random stream identified by `(master seed, tag, index)`.
///
/// The key of a ChaCha8 generator is derived from the master seed and the
/// tag; the replication index selects the generator's stream. Streams for
/// different `(tag, index)` pairs never overlap, and the same triple always
/// produces the same numbers regardless of which thread asks for them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedStream {
    pub master: u64,
    pub tag: Arc<str>,
    pub index: u64,
}

impl SeedStream {
    pub fn new(master: u64, tag: impl Into<Arc<str>>, index: u64) -> Self {
        Self { master, tag: tag.into(), index }
    }

    pub fn with_index(&self, index: u64) -> Self {
        Self { master: self.master, tag: Arc::clone(&self.tag), index }
    }

    /// Stream with tag `"{tag}/{label}"` and the same master seed and index.
    pub fn child(&self, label: &str) -> Self {
        Self { master: self.master, tag: format!("{}/{label}", self.tag).into(), index: self.index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master ^ fnv1a(self.tag.as_bytes()).rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Brownian motion sampler for a fixed grid.
#[derive(Clone, Debug)]
pub struct BrownianSampler {
    grid: Grid,
    sqrt_dt: Vec<f64>,
}

impl BrownianSampler {
    pub fn new(grid: &Grid) -> Self {
        let sqrt_dt = grid.times.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
        Self { grid: grid.clone(), sqrt_dt }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FinePath {
        let mut values = Vec::with_capacity(self.sqrt_dt.len() + 1);
        let mut w = 0.0;
        values.push(w);
        for &s in &self.sqrt_dt {
            let z: f64 = rng.sample(StandardNormal);
            w += s * z;
            values.push(w);
        }
        FinePath { grid: self.grid.clone(), values }
    }

    /// Calls `step(j, W_{s_j})` for `j = 1..=N` with the values [`Self::sample`]
    /// would store, without storing them.
    #[inline]
    pub(crate) fn stream<R: Rng + ?Sized>(&self, rng: &mut R, mut step: impl FnMut(usize, f64)) {
        let mut w = 0.0;
        for (j, &s) in self.sqrt_dt.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            w += s * z;
            step(j + 1, w);
        }
    }
}

/// Independent centred normal increments with variance equal to the cell length.
pub fn sample_brownian<R: Rng + ?Sized>(fine: &Grid, rng: &mut R) -> FinePath {
    BrownianSampler::new(fine).sample(rng)
}

/// One fine point lying strictly inside a coarse cell.
#[derive(Clone, Copy, Debug)]
struct Interior {
    /// Weights of the left and right coarse values in `W̄`.
    left_weight: f64,
    right_weight: f64,
    /// Sequential bridge step: `b ← decay·b + sd·z`.
    decay: f64,
    sd: f64,
}

/// Precomputed coupling plan for a pair of nested grids.
#[derive(Clone, Debug)]
pub struct Coupler {
    coarse: Grid,
    fine: Grid,
    /// Fine index of every coarse time.
    anchors: Vec<usize>,
    /// Coefficients for every fine index (unused at anchors).
    interior: Vec<Interior>,
}

impl Coupler {
    pub fn new(coarse: &Grid, fine: &Grid) -> Result<Self> {
        let anchors = coarse.embed_in(fine)?;
        let s = fine.times();
        let mut interior = vec![Interior { left_weight: 1.0, right_weight: 0.0, decay: 0.0, sd: 0.0 }; s.len()];
        for w in anchors.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (t0, t1) = (s[a], s[b]);
            for j in a + 1..b {
                let frac = (t1 - s[j]) / (t1 - s[j - 1]);
                interior[j] = Interior {
                    left_weight: (t1 - s[j]) / (t1 - t0),
                    right_weight: (s[j] - t0) / (t1 - t0),
                    decay: frac,
                    sd: ((s[j] - s[j - 1]) * frac).sqrt(),
                };
            }
        }
        Ok(Self { coarse: coarse.clone(), fine: fine.clone(), anchors, interior })
    }

    pub fn coarse(&self) -> &Grid {
        &self.coarse
    }

    pub fn fine(&self) -> &Grid {
        &self.fine
    }

    /// Fine-grid index of every coarse time.
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    fn check_path(&self, path: &FinePath) -> Result<()> {
        if path.grid != self.fine {
            return Err(Error::InvalidGrid("path does not live on the coupler's fine grid".into()));
        }
        Ok(())
    }

    /// `W̄` on the fine grid.
    pub fn interpolate(&self, path: &FinePath) -> Result<FinePath> {
        self.check_path(path)?;
        let w = &path.values;
        let mut out = w.clone();
        for win in self.anchors.windows(2) {
            let (a, b) = (win[0], win[1]);
            for (x, c) in out[a + 1..b].iter_mut().zip(&self.interior[a + 1..b]) {
                *x = c.right_weight * w[b] + c.left_weight * w[a];
            }
        }
        Ok(FinePath { grid: self.fine.clone(), values: out })
    }

    /// Builds `(W, W̄ + B̃)` with a fresh bridge `B̃` on every coarse cell.
    pub fn couple<R: Rng + ?Sized>(&self, path: &FinePath, rng: &mut R) -> Result<CoupledPathPair> {
        self.check_path(path)?;
        let w = &path.values;
        let mut tilde = w.clone();
        for win in self.anchors.windows(2) {
            let (a, b) = (win[0], win[1]);
            let mut bridge = 0.0;
            for (x, c) in tilde[a + 1..b].iter_mut().zip(&self.interior[a + 1..b]) {
                let z: f64 = rng.sample(StandardNormal);
                bridge = c.decay * bridge + c.sd * z;
                *x = c.right_weight * w[b] + c.left_weight * w[a] + bridge;
            }
        }
        Ok(CoupledPathPair { coarse: self.coarse.clone(), fine: self.fine.clone(), w: w.clone(), w_tilde: tilde })
    }
}

impl Coupler {
    /// Calls `step(j, W_{s_j}, W̃_{s_j})` for `j = 1..=N`, producing exactly the
    /// values of `sampler.sample(rng_w)` coupled with `self.couple(_, rng_b)`
    /// while holding one coarse cell in `buf`.
    #[inline]
    pub(crate) fn stream<R1, R2>(
        &self,
        sampler: &BrownianSampler,
        rng_w: &mut R1,
        rng_b: &mut R2,
        buf: &mut Vec<f64>,
        mut step: impl FnMut(usize, f64, f64),
    ) where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        debug_assert!(sampler.grid == self.fine);
        let mut w = 0.0;
        for win in self.anchors.windows(2) {
            let (a, b) = (win[0], win[1]);
            let wa = w;
            buf.clear();
            for &s in &sampler.sqrt_dt[a..b] {
                let z: f64 = rng_w.sample(StandardNormal);
                w += s * z;
                buf.push(w);
            }
            let wb = w;
            let mut bridge = 0.0;
            for j in a + 1..b {
                let c = &self.interior[j];
                let z: f64 = rng_b.sample(StandardNormal);
                bridge = c.decay * bridge + c.sd * z;
                step(j, buf[j - a - 1], c.right_weight * wb + c.left_weight * wa + bridge);
            }
            step(b, wb, wb);
        }
    }
}

/// Piecewise linear interpolation `W̄` of `path` at the coarse times,
/// evaluated on the path's own grid.
pub fn piecewise_linear(path: &FinePath, coarse: &Grid) -> Result<FinePath> {
    Coupler::new(coarse, &path.grid)?.interpolate(path)
}

/// The coupled pair `(W, W̃)` for `path` and the coarse grid.
pub fn couple<R: Rng + ?Sized>(path: &FinePath, coarse: &Grid, rng: &mut R) -> Result<CoupledPathPair> {
    Coupler::new(coarse, &path.grid)?.couple(path, rng)
}

#[derive(Clone, Copy, Debug)]
enum RefineStep {
    Existing(usize),
    /// `x ← keep·x + (weight·right + sd·z)` with `right` the next existing
    /// value and `keep = 1 − weight`.
    Bridge {
        right: usize,
        keep: f64,
        weight: f64,
        sd: f64,
    },
}

/// Precomputed plan for conditional refinement of a path onto a finer grid.
#[derive(Clone, Debug)]
pub struct BridgeRefiner {
    grid: Grid,
    finer: Grid,
    steps: Vec<RefineStep>,
}

impl BridgeRefiner {
    pub fn new(grid: &Grid, finer: &Grid) -> Result<Self> {
        let anchors = grid.embed_in(finer)?;
        let s = finer.times();
        let mut steps = Vec::with_capacity(s.len());
        for (k, w) in anchors.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            steps.push(RefineStep::Existing(k));
            for j in a + 1..b {
                let rem = s[b] - s[j - 1];
                let dt = s[j] - s[j - 1];
                steps.push(RefineStep::Bridge {
                    right: k + 1,
                    keep: (s[b] - s[j]) / rem,
                    weight: dt / rem,
                    sd: (dt * (s[b] - s[j]) / rem).sqrt(),
                });
            }
        }
        steps.push(RefineStep::Existing(anchors.len() - 1));
        Ok(Self { grid: grid.clone(), finer: finer.clone(), steps })
    }

    pub fn finer(&self) -> &Grid {
        &self.finer
    }

    pub fn refine<R: Rng + ?Sized>(&self, path: &FinePath, rng: &mut R) -> Result<FinePath> {
        if path.grid != self.grid {
            return Err(Error::InvalidGrid("path does not live on the refiner's grid".into()));
        }
        let v = &path.values;
        let mut out = Vec::with_capacity(self.steps.len());
        let mut x = 0.0;
        for step in &self.steps {
            x = match *step {
                RefineStep::Existing(k) => v[k],
                RefineStep::Bridge { right, keep, weight, sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    keep * x + (weight * v[right] + sd * z)
                }
            };
            out.push(x);
        }
        Ok(FinePath { grid: self.finer.clone(), values: out })
    }
}

impl BridgeRefiner {
    /// Calls `step(j, value_j)` for every index of the finer grid, with the
    /// values [`Self::refine`] would return for the same `rng`.
    #[inline]
    pub(crate) fn stream<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R, mut step: impl FnMut(usize, f64)) {
        let mut x = 0.0;
        for (j, st) in self.steps.iter().enumerate() {
            x = match *st {
                RefineStep::Existing(k) => values[k],
                RefineStep::Bridge { right, keep, weight, sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    keep * x + (weight * values[right] + sd * z)
                }
            };
            step(j, x);
        }
    }
}

/// Path on `finer` agreeing with `path` at its times, with new values drawn
/// from the Brownian bridge between neighbouring known values.
pub fn bridge_refine<R: Rng + ?Sized>(path: &FinePath, finer: &Grid, rng: &mut R) -> Result<FinePath> {
    BridgeRefiner::new(&path.grid, finer)?.refine(path, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.1, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.9]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Grid::uniform(8).is_equidistant());
        assert!(!Grid::new(vec![0.0, 0.3, 1.0]).unwrap().is_equidistant());
    }

    #[test]
    fn refinement_embeds_coarse_times() {
        let g = Grid::new(vec![0.0, 0.3, 0.35, 1.0]).unwrap();
        let f = g.refine(7);
        assert_eq!(f.cells(), 21);
        assert_eq!(g.embed_in(&f).unwrap(), vec![0, 7, 14, 21]);
        assert_eq!(f.embed_in(&f.refine(2)).unwrap().len(), 22);
        assert!(matches!(f.embed_in(&g), Err(Error::IncompatibleGrids(_))));
    }

    #[test]
    fn brownian_starts_at_zero_and_is_deterministic() {
        let g = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let s = SeedStream::new(7, "bm", 3);
        let p = sample_brownian(&g, &mut s.rng());
        assert_eq!(p.values()[0], 0.0);
        assert_eq!(p, sample_brownian(&g, &mut s.rng()));
        assert_ne!(p, sample_brownian(&g, &mut s.with_index(4).rng()));
    }

    #[test]
    fn terminal_variance_is_one() {
        let g = Grid::uniform(1);
        let xs: Vec<f64> =
            (0..100_000).map(|r| sample_brownian(&g, &mut SeedStream::new(11, "var", r).rng()).at_end()).collect();
        let (_, v) = stats(&xs);
        // stderr of a normal sample variance is σ²√(2/(n-1))
        assert!((v - 1.0).abs() < 4.0 * (2.0f64 / 99_999.0).sqrt(), "{v}");
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::uniform(4);
        let p = FinePath::new(g.clone(), vec![0.0, 1.0, -1.0, 0.5, 2.0]).unwrap();
        assert_eq!(piecewise_linear(&p, &g).unwrap(), p);

        let fine = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let p = FinePath::new(fine.clone(), vec![0.0, 7.0, 2.0]).unwrap();
        let bar = piecewise_linear(&p, &Grid::uniform(1)).unwrap();
        assert_eq!(bar.values(), &[0.0, 1.0, 2.0]);

        let zero = FinePath::new(fine, vec![0.0; 3]).unwrap();
        assert_eq!(piecewise_linear(&zero, &Grid::uniform(1)).unwrap().values(), &[0.0; 3]);
    }

    #[test]
    fn interpolation_rejects_foreign_coarse_grid() {
        let p = FinePath::new(Grid::uniform(2), vec![0.0, 1.0, 2.0]).unwrap();
        assert!(piecewise_linear(&p, &Grid::uniform(3)).is_err());
        assert!(couple(&p, &Grid::uniform(3), &mut SeedStream::new(0, "x", 0).rng()).is_err());
    }

    #[test]
    fn degenerate_coupling_is_identity() {
        let g = Grid::uniform(5);
        let mut rng = SeedStream::new(1, "c", 0).rng();
        let p = sample_brownian(&g, &mut rng);
        let pair = couple(&p, &g, &mut rng).unwrap();
        assert_eq!(pair.w, pair.w_tilde);
    }

    #[test]
    fn coupled_paths_agree_bitwise_at_coarse_times() {
        let coarse = Grid::new(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        let fine = coarse.refine(9);
        let coupler = Coupler::new(&coarse, &fine).unwrap();
        for r in 0..50 {
            let mut rng = SeedStream::new(2, "c", r).rng();
            let p = sample_brownian(&fine, &mut rng);
            let pair = coupler.couple(&p, &mut rng).unwrap();
            for &a in coupler.anchors() {
                assert_eq!(pair.w[a].to_bits(), pair.w_tilde[a].to_bits());
            }
            assert_ne!(pair.w[1], pair.w_tilde[1]);
        }
    }

    #[test]
    fn bridge_refine_examples() {
        let g = Grid::uniform(4);
        let mut rng = SeedStream::new(3, "r", 0).rng();
        let p = sample_brownian(&g, &mut rng);
        assert_eq!(bridge_refine(&p, &g, &mut rng).unwrap(), p);

        let finer = g.refine(3);
        let q = bridge_refine(&p, &finer, &mut rng).unwrap();
        for (k, &j) in g.embed_in(&finer).unwrap().iter().enumerate() {
            assert_eq!(q.values()[j].to_bits(), p.values()[k].to_bits());
        }
        assert!(bridge_refine(&q, &g, &mut rng).is_err());
    }

    #[test]
    fn bridge_midpoint_variance() {
        let base = Grid::uniform(1);
        let finer = base.refine(2);
        let refiner = BridgeRefiner::new(&base, &finer).unwrap();
        let zero = FinePath::new(base, vec![0.0, 0.0]).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|r| refiner.refine(&zero, &mut SeedStream::new(4, "mid", r).rng()).unwrap().values()[1])
            .collect();
        let (_, v) = stats(&xs);
        assert!((v - 0.25).abs() < 4.0 * 0.25 * (2.0f64 / 99_999.0).sqrt(), "{v}");
    }

    #[test]
    fn csv_dump() {
        let g = Grid::uniform(2);
        let p = FinePath::new(g.clone(), vec![0.0, 0.1, -0.25]).unwrap();
        let pair = couple(&p, &g, &mut SeedStream::new(0, "csv", 0).rng()).unwrap();
        let csv = pair.to_csv();
        assert_eq!(csv.lines().next(), Some("time,w,w_tilde"));
        assert_eq!(csv.lines().nth(1), Some("0,0,0"));
        assert_eq!(csv.lines().nth(2), Some("0.5,0.10000000000000001,0.10000000000000001"));
    }
}

//! Monte Carlo experiments on the coupled pair `(W, W̃)`: distances of the
//! coupled SDE solutions and occupation integrals, errors of the Euler scheme
//! and the Riemann-sum estimator, per-cell decompositions and rate fits.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::drift::PiecewiseLipschitzFn;
use crate::error::{Error, Result};
use crate::format::fmt_e;
use crate::montecarlo::{replicate, MCEstimate, SeedProvenance, Welford};
use crate::noise::{BridgeRefiner, BrownianSampler, CoupledPathPair, Coupler, Grid, SeedStream};
use crate::solvers::{euler_visit, left_riemann, SdeSpec};

/// Smallest replication count accepted by [`ExperimentConfig::validate`].
pub const MIN_REPLICATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// SDE under study; occupation experiments only use its drift.
    pub spec: SdeSpec,
    /// Coarse cell counts, strictly increasing.
    pub n_list: Vec<usize>,
    /// Fine steps per coarse cell for coupled experiments.
    pub fine_factor: usize,
    /// Fine steps per coarse cell for reference solutions.
    pub ref_factor: usize,
    /// Error norm exponent, 1 or 2.
    pub p: u32,
    pub replications: usize,
    pub seed: u64,
    pub tag: String,
}

impl ExperimentConfig {
    pub fn new(spec: SdeSpec) -> Self {
        Self {
            spec,
            n_list: vec![16, 32, 64, 128, 256, 512, 1024],
            fine_factor: 64,
            ref_factor: 256,
            p: 1,
            replications: 100_000,
            seed: 1,
            tag: "run".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        if self.n_list[0] == 0 {
            return bad("n_list entries must be positive".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_list {:?} is not strictly increasing", self.n_list));
        }
        if self.fine_factor < 2 {
            return bad(format!("fine_factor {} < 2", self.fine_factor));
        }
        if self.ref_factor < 2 {
            return bad(format!("ref_factor {} < 2", self.ref_factor));
        }
        if self.replications < MIN_REPLICATIONS {
            return bad(format!("replications {} < {MIN_REPLICATIONS}", self.replications));
        }
        if self.p != 1 && self.p != 2 {
            return bad(format!("p = {} is not 1 or 2", self.p));
        }
        Ok(())
    }

    fn drift(&self) -> &PiecewiseLipschitzFn {
        self.spec.drift()
    }

    fn stream_tag(&self, kind: &str, n: usize) -> String {
        format!("{}/{kind}/n={n}", self.tag)
    }
}

/// One row of an error table: `L_1` and `L_2` norms of the same replications.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    /// `E|Z|`.
    pub l1: MCEstimate,
    /// `E[Z²]^{1/2}` with delta-method standard error.
    pub l2: MCEstimate,
    /// `E|Z|^{2/3} E[Z⁴]^{1/3} / E[Z²]`, at least 1 by Hölder's inequality
    /// (NaN if every sample is zero).
    pub holder_ratio: f64,
}

impl ErrorRow {
    pub fn norm(&self, p: u32) -> &MCEstimate {
        if p == 2 {
            &self.l2
        } else {
            &self.l1
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub metric: String,
    pub p: u32,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// `(n, estimate)` pairs for the table's own `p`.
    pub fn points(&self) -> Vec<(usize, f64)> {
        self.points_for(self.p)
    }

    pub fn points_for(&self, p: u32) -> Vec<(usize, f64)> {
        self.rows.iter().map(|r| (r.n, r.norm(p).mean)).collect()
    }

    pub fn estimates(&self, p: u32) -> Vec<&MCEstimate> {
        self.rows.iter().map(|r| r.norm(p)).collect()
    }

    /// Fit of the table's own norm; `None` when fewer than three positive points.
    pub fn fit(&self) -> Option<RateFit> {
        fit_rate(&self.points()).ok()
    }

    /// CSV with header `n,p,metric,estimate,stderr,replications,master_seed`,
    /// followed by `# slope=… intercept=… r2=…` when a fit is possible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,p,metric,estimate,stderr,replications,master_seed\n");
        for row in &self.rows {
            let e = row.norm(self.p);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.n,
                self.p,
                self.metric,
                fmt_e(e.mean, 10),
                fmt_e(e.stderr, 10),
                e.replications,
                e.provenance.master
            );
        }
        if let Some(fit) = self.fit() {
            let _ = writeln!(out, "{}", fit.comment_line());
        }
        out
    }
}

/// Accumulates `|z|`, `z²` and `z⁴` for one table row.
#[derive(Default)]
struct NormAccumulator {
    abs: Welford,
    square: Welford,
    fourth: Welford,
}

impl NormAccumulator {
    fn push(&mut self, z: f64) {
        let a = z.abs();
        self.abs.push(a);
        self.square.push(a * a);
        self.fourth.push(a * a * a * a);
    }

    fn row(&self, n: usize, provenance: SeedProvenance) -> ErrorRow {
        let l1 = self.abs.estimate(provenance.clone());
        let l2 = self.square.estimate(provenance).sqrt();
        let holder_ratio = self.abs.mean().powf(2.0 / 3.0) * self.fourth.mean().powf(1.0 / 3.0) / self.square.mean();
        ErrorRow { n, l1, l2, holder_ratio }
    }
}

fn run_table<F>(cfg: &ExperimentConfig, metric: &str, per_n: impl Fn(usize) -> Result<F>) -> Result<ErrorTable>
where
    F: Fn(&SeedStream) -> f64 + Sync,
{
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let eval = per_n(n)?;
        let tag = cfg.stream_tag(metric, n);
        let mut acc = NormAccumulator::default();
        replicate(cfg.seed, &tag, cfg.replications, eval, |_, z| acc.push(z));
        rows.push(acc.row(n, SeedProvenance { master: cfg.seed, tag }));
    }
    Ok(ErrorTable { metric: metric.to_string(), p: cfg.p, rows })
}

fn coupled_grids(cfg: &ExperimentConfig, n: usize) -> Result<(BrownianSampler, Coupler)> {
    let coarse = Grid::uniform(n);
    let fine = coarse.refine(cfg.fine_factor);
    Ok((BrownianSampler::new(&fine), Coupler::new(&coarse, &fine)?))
}

/// Generators for one replication of a coupled experiment: `W` is drawn from
/// the stream itself, the bridges of `W̃` from its `bridge` child.
fn coupled_rngs(s: &SeedStream) -> (ChaCha8Rng, ChaCha8Rng) {
    (s.rng(), s.child("bridge").rng())
}

/// `(W, W̃)` for one replication, materialised on the fine grid.
pub fn coupled_pair(sampler: &BrownianSampler, coupler: &Coupler, s: &SeedStream) -> Result<CoupledPathPair> {
    let (mut rng_w, mut rng_b) = coupled_rngs(s);
    coupler.couple(&sampler.sample(&mut rng_w), &mut rng_b)
}

/// `X₁ − X̃₁` for one replication; equals Euler on [`coupled_pair`] bit for bit.
fn sde_gap(spec: &SdeSpec, sampler: &BrownianSampler, coupler: &Coupler, s: &SeedStream) -> f64 {
    let (mut rng_w, mut rng_b) = coupled_rngs(s);
    let (drift, x0) = (spec.drift(), spec.x0());
    let t = coupler.fine().times();
    let (mut x, mut y, mut dx, mut dy) = (x0, x0, 0.0, 0.0);
    let mut buf = Vec::new();
    coupler.stream(sampler, &mut rng_w, &mut rng_b, &mut buf, |j, w, v| {
        let dt = t[j] - t[j - 1];
        dx += drift.eval(x) * dt;
        dy += drift.eval(y) * dt;
        x = dx + (x0 + w);
        y = dy + (x0 + v);
    });
    x - y
}

/// `∫μ(W) − ∫μ(W̃)` for one replication, left-endpoint sums on the fine grid.
fn occupation_gap(drift: &PiecewiseLipschitzFn, sampler: &BrownianSampler, coupler: &Coupler, s: &SeedStream) -> f64 {
    let (mut rng_w, mut rng_b) = coupled_rngs(s);
    let t = coupler.fine().times();
    let (mut a, mut b, mut prev_w, mut prev_v) = (0.0, 0.0, 0.0, 0.0);
    let mut buf = Vec::new();
    coupler.stream(sampler, &mut rng_w, &mut rng_b, &mut buf, |j, w, v| {
        let dt = t[j] - t[j - 1];
        a += drift.eval(prev_w) * dt;
        b += drift.eval(prev_v) * dt;
        (prev_w, prev_v) = (w, v);
    });
    a - b
}

/// `E[|X₁ − X̃₁|^p]^{1/p}` for Euler solutions driven by the coupled pair on
/// the `fine_factor`-refinement of the equidistant `n`-grid.
pub fn coupled_sde_distance(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    let spec = &cfg.spec;
    run_table(cfg, "coupled_sde_distance", |n| {
        let (sampler, coupler) = coupled_grids(cfg, n)?;
        Ok(move |s: &SeedStream| sde_gap(spec, &sampler, &coupler, s))
    })
}

/// `E[|∫μ(W) − ∫μ(W̃)|^p]^{1/p}` with left-endpoint sums on the fine grid.
pub fn coupled_occupation_distance(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    let drift = cfg.drift();
    run_table(cfg, "coupled_occupation_distance", |n| {
        let (sampler, coupler) = coupled_grids(cfg, n)?;
        Ok(move |s: &SeedStream| occupation_gap(drift, &sampler, &coupler, s))
    })
}

/// `X₁^{ref} − X̂₁(n)` for one replication. The coarse path and its bridge
/// refinement are drawn from one generator, in that order.
fn scheme_gap(spec: &SdeSpec, sampler: &BrownianSampler, refiner: &BridgeRefiner, s: &SeedStream) -> f64 {
    let mut rng = s.rng();
    let (drift, x0) = (spec.drift(), spec.x0());
    let path = sampler.sample(&mut rng);
    let approx = euler_visit(drift, x0, path.grid().times(), path.values(), |_, _| {});
    let t = refiner.finer().times();
    let (mut x, mut d) = (x0, 0.0);
    refiner.stream(path.values(), &mut rng, |j, w| {
        if j > 0 {
            d += drift.eval(x) * (t[j] - t[j - 1]);
            x = d + (x0 + w);
        }
    });
    x - approx
}

/// `∫μ(W)` on the fine grid minus the coarse Riemann sum, for one replication.
fn riemann_gap(drift: &PiecewiseLipschitzFn, sampler: &BrownianSampler, anchors: &[usize], s: &SeedStream) -> f64 {
    let n = anchors.len() - 1;
    let t = sampler.grid().times();
    let mut rng = s.rng();
    let (mut fine, mut prev) = (0.0, 0.0);
    let mut coarse = drift.eval(0.0);
    let mut next = 1;
    sampler.stream(&mut rng, |j, w| {
        fine += drift.eval(prev) * (t[j] - t[j - 1]);
        prev = w;
        if next < n && j == anchors[next] {
            coarse += drift.eval(w);
            next += 1;
        }
    });
    fine - coarse / n as f64
}

/// `E[|X₁^{ref} − X̂₁(n)|^p]^{1/p}`: Euler with `n` equidistant steps against
/// Euler on the `ref_factor`-refinement, driven by the bridge-refined noise.
pub fn scheme_error(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    let spec = &cfg.spec;
    run_table(cfg, "scheme_error", |n| {
        let coarse = Grid::uniform(n);
        let sampler = BrownianSampler::new(&coarse);
        let refiner = BridgeRefiner::new(&coarse, &coarse.refine(cfg.ref_factor))?;
        Ok(move |s: &SeedStream| scheme_gap(spec, &sampler, &refiner, s))
    })
}

/// Error of `n^{-1} Σ μ(W_{(i-1)/n})` against the fine left-endpoint sum.
pub fn riemann_occupation_error(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    let drift = cfg.drift();
    run_table(cfg, "riemann_occupation_error", |n| {
        let coarse = Grid::uniform(n);
        let fine = coarse.refine(cfg.fine_factor);
        let anchors = coarse.embed_in(&fine)?;
        let sampler = BrownianSampler::new(&fine);
        Ok(move |s: &SeedStream| riemann_gap(drift, &sampler, &anchors, s))
    })
}

/// Per-cell terms of `E|X_{t_i} − X̃_{t_i}|² = E|X_{t_{i-1}} − X̃_{t_{i-1}}|² + 2 m_i + d_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellDiagnostics {
    pub n: usize,
    /// `m_i = E[(X_{t_{i-1}} − X̃_{t_{i-1}}) ∫_{cell} (μ(X) − μ(X̃))]`.
    pub m: Vec<MCEstimate>,
    /// `d_i = E[(∫_{cell} (μ(X) − μ(X̃)))²]`.
    pub d: Vec<MCEstimate>,
    /// Direct estimate of `E|X₁ − X̃₁|²`.
    pub delta_n: MCEstimate,
    /// Per-replication `Σ_i (2 D_{i-1} I_i + I_i²)`.
    pub telescoped: MCEstimate,
}

impl CellDiagnostics {
    /// `(2Σm̂ + Σd̂, Δ̂_n, combined stderr)`.
    pub fn sum_check(&self) -> (f64, f64, f64) {
        let lhs = 2.0 * self.m.iter().map(|e| e.mean).sum::<f64>() + self.d.iter().map(|e| e.mean).sum::<f64>();
        let se = self.telescoped.stderr.hypot(self.delta_n.stderr);
        (lhs, self.delta_n.mean, se)
    }
}

struct CellSample {
    m: Vec<f64>,
    d: Vec<f64>,
    delta: f64,
    telescoped: f64,
}

/// Monte Carlo estimates of `m_i` and `d_i` for every coarse cell of the
/// equidistant `n`-grid. Requires a nondecreasing drift.
pub fn cell_diagnostics(cfg: &ExperimentConfig, n: usize) -> Result<CellDiagnostics> {
    cfg.validate()?;
    let inc = cfg.drift().validate().increasing;
    if !inc.holds {
        return Err(Error::Config(format!("cell diagnostics need an increasing drift: {}", inc.detail)));
    }
    let spec = &cfg.spec;
    let drift = spec.drift();
    let (sampler, coupler) = coupled_grids(cfg, n)?;
    let anchors = coupler.anchors().to_vec();
    let eval = |s: &SeedStream| {
        let pair = coupled_pair(&sampler, &coupler, s).expect("sampler and coupler share the fine grid");
        let t = pair.fine.times();
        let mut xs = Vec::with_capacity(t.len());
        euler_visit(drift, spec.x0(), t, &pair.w, |_, x| xs.push(x));
        let mut xts = Vec::with_capacity(t.len());
        euler_visit(drift, spec.x0(), t, &pair.w_tilde, |_, x| xts.push(x));
        let mut m = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut telescoped = 0.0;
        for w in anchors.windows(2) {
            let (a, b) = (w[0], w[1]);
            let gap = xs[a] - xts[a];
            let mut integral = 0.0;
            for j in a + 1..=b {
                integral += (drift.eval(xs[j - 1]) - drift.eval(xts[j - 1])) * (t[j] - t[j - 1]);
            }
            m.push(gap * integral);
            d.push(integral * integral);
            telescoped += 2.0 * gap * integral + integral * integral;
        }
        let last = xs.len() - 1;
        let delta = (xs[last] - xts[last]).powi(2);
        CellSample { m, d, delta, telescoped }
    };
    let tag = cfg.stream_tag("cell_diagnostics", n);
    let mut m_acc = vec![Welford::default(); n];
    let mut d_acc = vec![Welford::default(); n];
    let (mut delta_acc, mut tel_acc) = (Welford::default(), Welford::default());
    replicate(cfg.seed, &tag, cfg.replications, eval, |_, s| {
        for i in 0..n {
            m_acc[i].push(s.m[i]);
            d_acc[i].push(s.d[i]);
        }
        delta_acc.push(s.delta);
        tel_acc.push(s.telescoped);
    });
    let prov = SeedProvenance { master: cfg.seed, tag };
    Ok(CellDiagnostics {
        n,
        m: m_acc.iter().map(|w| w.estimate(prov.clone())).collect(),
        d: d_acc.iter().map(|w| w.estimate(prov.clone())).collect(),
        delta_n: delta_acc.estimate(prov.clone()),
        telescoped: tel_acc.estimate(prov),
    })
}

/// `E[J_i²]` per coarse cell, `J_i = ∫_{cell} (μ(W_s) − μ(W̃_s)) ds`.
pub fn occupation_cells(cfg: &ExperimentConfig, n: usize) -> Result<Vec<MCEstimate>> {
    cfg.validate()?;
    let drift = cfg.drift();
    let (sampler, coupler) = coupled_grids(cfg, n)?;
    let anchors = coupler.anchors().to_vec();
    let eval = |s: &SeedStream| {
        let pair = coupled_pair(&sampler, &coupler, s).expect("sampler and coupler share the fine grid");
        let t = pair.fine.times();
        anchors
            .windows(2)
            .map(|w| {
                let j = left_riemann(drift, &t[w[0]..=w[1]], &pair.w[w[0]..=w[1]])
                    - left_riemann(drift, &t[w[0]..=w[1]], &pair.w_tilde[w[0]..=w[1]]);
                j * j
            })
            .collect::<Vec<f64>>()
    };
    let tag = cfg.stream_tag("occupation_cells", n);
    let mut acc = vec![Welford::default(); n];
    replicate(cfg.seed, &tag, cfg.replications, eval, |_, v| {
        for (a, x) in acc.iter_mut().zip(v) {
            a.push(x);
        }
    });
    let prov = SeedProvenance { master: cfg.seed, tag };
    Ok(acc.iter().map(|w| w.estimate(prov.clone())).collect())
}

/// `(1/2)·distance ≤ scheme error + slack·(combined stderr)` at one `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceRow {
    pub n: usize,
    pub half_distance: f64,
    pub scheme_error: f64,
    pub combined_stderr: f64,
    pub holds: bool,
}

/// Compares half the coupled distance with the scheme error row by row, in
/// norm `p`, allowing `slack` combined standard errors.
pub fn coherence(distance: &ErrorTable, scheme: &ErrorTable, p: u32, slack: f64) -> Result<Vec<CoherenceRow>> {
    distance
        .rows
        .iter()
        .map(|row| {
            let other = scheme
                .rows
                .iter()
                .find(|r| r.n == row.n)
                .ok_or_else(|| Error::Config(format!("scheme table has no row for n = {}", row.n)))?;
            let (a, b) = (row.norm(p), other.norm(p));
            let half_distance = 0.5 * a.mean;
            let combined_stderr = (0.5 * a.stderr).hypot(b.stderr);
            Ok(CoherenceRow {
                n: row.n,
                half_distance,
                scheme_error: b.mean,
                combined_stderr,
                holds: half_distance <= b.mean + slack * combined_stderr,
            })
        })
        .collect()
}

/// Least-squares fit of `log(error)` against `log(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `log(error) − (intercept + slope·log(n))` per input point.
    pub residuals: Vec<f64>,
}

impl RateFit {
    pub fn comment_line(&self) -> String {
        format!("# slope={} intercept={} r2={}", fmt_e(self.slope, 10), fmt_e(self.intercept, 10), fmt_e(self.r2, 10))
    }
}

pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::RateFit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(&(n, e)) = points.iter().find(|&&(n, e)| e.is_nan() || e <= 0.0 || n == 0) {
        return Err(Error::RateFit(format!("nonpositive point (n = {n}, error = {e})")));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all n are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r2, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(drift: PiecewiseLipschitzFn) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(SdeSpec::new(drift, 0.0).unwrap());
        c.n_list = vec![2, 4, 8];
        c.fine_factor = 8;
        c.ref_factor = 8;
        c.replications = 1000;
        c
    }

    fn kernels_setup() -> (SdeSpec, BrownianSampler, Coupler) {
        let spec =
            SdeSpec::new(PiecewiseLipschitzFn::staircase(0.1, &[(0.0, 1.0), (0.3, 0.5)]).unwrap(), 0.05).unwrap();
        let coarse = Grid::uniform(8);
        let fine = coarse.refine(16);
        (spec, BrownianSampler::new(&fine), Coupler::new(&coarse, &fine).unwrap())
    }

    #[test]
    fn streamed_coupled_kernels_match_materialised_paths() {
        let (spec, sampler, coupler) = kernels_setup();
        let drift = spec.drift();
        for r in 0..50 {
            let s = SeedStream::new(4, "k", r);
            let pair = coupled_pair(&sampler, &coupler, &s).unwrap();
            let t = pair.fine.times();
            let x = euler_visit(drift, spec.x0(), t, &pair.w, |_, _| {});
            let y = euler_visit(drift, spec.x0(), t, &pair.w_tilde, |_, _| {});
            assert_eq!(sde_gap(&spec, &sampler, &coupler, &s), x - y);
            let occ = left_riemann(drift, t, &pair.w) - left_riemann(drift, t, &pair.w_tilde);
            assert_eq!(occupation_gap(drift, &sampler, &coupler, &s), occ);
        }
    }

    #[test]
    fn streamed_scheme_and_riemann_kernels_match_materialised_paths() {
        use crate::solvers::occupation_riemann;
        let (spec, fine_sampler, _) = kernels_setup();
        let drift = spec.drift();
        let coarse = Grid::uniform(8);
        let sampler = BrownianSampler::new(&coarse);
        let refiner = BridgeRefiner::new(&coarse, &coarse.refine(16)).unwrap();
        let anchors = coarse.embed_in(&coarse.refine(16)).unwrap();
        for r in 0..50 {
            let s = SeedStream::new(5, "k", r);
            let mut rng = s.rng();
            let path = sampler.sample(&mut rng);
            let fine = refiner.refine(&path, &mut rng).unwrap();
            let approx = euler_visit(drift, spec.x0(), coarse.times(), path.values(), |_, _| {});
            let reference = euler_visit(drift, spec.x0(), fine.grid().times(), fine.values(), |_, _| {});
            assert_eq!(scheme_gap(&spec, &sampler, &refiner, &s), reference - approx);

            let w = fine_sampler.sample(&mut s.rng());
            let at_coarse: Vec<f64> = anchors.iter().map(|&j| w.values()[j]).collect();
            let expected = left_riemann(drift, w.grid().times(), w.values())
                - occupation_riemann(drift, &at_coarse, &coarse).unwrap();
            assert_eq!(riemann_gap(drift, &fine_sampler, &anchors, &s), expected);
        }
    }

    #[test]
    fn config_invariants() {
        let base = cfg(PiecewiseLipschitzFn::constant(0.0));
        assert!(base.validate().is_ok());
        for broken in [
            ExperimentConfig { n_list: vec![4, 4], ..base.clone() },
            ExperimentConfig { n_list: vec![], ..base.clone() },
            ExperimentConfig { fine_factor: 1, ..base.clone() },
            ExperimentConfig { replications: 999, ..base.clone() },
            ExperimentConfig { p: 3, ..base.clone() },
        ] {
            assert!(matches!(broken.validate(), Err(Error::Config(_))), "{broken:?}");
            assert!(coupled_sde_distance(&broken).is_err());
        }
    }

    #[test]
    fn zero_drift_distances_vanish() {
        let c = cfg(PiecewiseLipschitzFn::constant(0.0));
        for table in [coupled_sde_distance(&c).unwrap(), scheme_error(&c).unwrap()] {
            for row in &table.rows {
                assert_eq!((row.l1.mean, row.l2.mean, row.l1.stderr), (0.0, 0.0, 0.0), "{}", table.metric);
            }
        }
    }

    #[test]
    fn constant_drift_distances_vanish() {
        // dyadic constant and grids keep the drift sums exact
        let c = cfg(PiecewiseLipschitzFn::constant(0.5));
        for table in [
            coupled_sde_distance(&c).unwrap(),
            scheme_error(&c).unwrap(),
            coupled_occupation_distance(&c).unwrap(),
            riemann_occupation_error(&c).unwrap(),
        ] {
            for row in &table.rows {
                assert_eq!(row.l1.mean, 0.0, "{} n={}", table.metric, row.n);
            }
        }
    }

    #[test]
    fn zero_drift_cells_vanish() {
        let c = cfg(PiecewiseLipschitzFn::constant(0.0));
        let diag = cell_diagnostics(&c, 4).unwrap();
        assert_eq!(diag.m.len(), 4);
        assert!(diag.m.iter().chain(&diag.d).all(|e| e.mean == 0.0));
    }

    #[test]
    fn cell_diagnostics_need_increasing_drift() {
        let c = cfg(PiecewiseLipschitzFn::step(0.0, 1.0, 0.0));
        assert!(matches!(cell_diagnostics(&c, 4), Err(Error::Config(_))));
    }

    #[test]
    fn fit_examples() {
        let ns = [16usize, 32, 64, 128];
        let exact: Vec<_> = ns.iter().map(|&n| (n, 7.0 * (n as f64).powf(-0.75))).collect();
        let f = fit_rate(&exact).unwrap();
        assert!((f.slope + 0.75).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!((f.intercept - 7f64.ln()).abs() < 1e-12);

        let flat: Vec<_> = ns.iter().map(|&n| (n, 3.0)).collect();
        assert!(fit_rate(&flat).unwrap().slope.abs() < 1e-15);

        let half: Vec<_> = ns.iter().map(|&n| (n, (n as f64).powf(-0.5))).collect();
        assert!((fit_rate(&half).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_rate(&[(1, 1.0), (2, 0.5)]).is_err());
        assert!(fit_rate(&[(1, 1.0), (2, 0.0), (4, 0.25)]).is_err());
        assert!(fit_rate(&[(1, 1.0), (2, -0.5), (4, 0.25)]).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = cfg(PiecewiseLipschitzFn::indicator_nonneg());
        let csv = coupled_sde_distance(&c).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,p,metric,estimate,stderr,replications,master_seed");
        assert!(lines[1].starts_with("2,1,coupled_sde_distance,"));
        assert!(lines[1].ends_with(",1000,1"));
        assert!(lines[4].starts_with("# slope="));
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn coherence_needs_matching_rows() {
        let c = cfg(PiecewiseLipschitzFn::indicator_nonneg());
        let a = coupled_sde_distance(&c).unwrap();
        let b = scheme_error(&ExperimentConfig { n_list: vec![2, 4], ..c }).unwrap();
        assert!(coherence(&a, &b, 1, 6.0).is_err());
    }
}

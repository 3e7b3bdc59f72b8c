//! Piecewise-Lipschitz drift coefficients.
//!
//! A drift is described by finitely many breakpoints `ξ_1 < … < ξ_k`, one
//! piece per open interval between consecutive breakpoints (with `ξ_0 = -∞`
//! and `ξ_{k+1} = +∞`), and an explicit value at every breakpoint. Pieces are
//! either affine, in which case every property is checked exactly, or generic
//! evaluators carrying declared constants that are checked by dense sampling.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared evaluator of a generic piece.
pub type PieceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    /// Straight line through the declared endpoint limits; constant on
    /// half-infinite pieces. Used for generic pieces loaded from text.
    Interpolated,
    Custom(PieceFn),
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluator::Interpolated => f.write_str("Interpolated"),
            Evaluator::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A black-box piece together with the constants its user vouches for.
#[derive(Clone, Debug)]
pub struct GenericPiece {
    eval: Evaluator,
    /// Lipschitz constant on the open piece.
    pub lipschitz: Option<f64>,
    /// Limit as `x` decreases to the lower endpoint (required when finite).
    pub lower_limit: Option<f64>,
    /// Limit as `x` increases to the upper endpoint (required when finite).
    pub upper_limit: Option<f64>,
    /// Lipschitz constant of the derivative, if known.
    pub derivative_lipschitz: Option<f64>,
    /// Bound on `|f|` over the piece, if known.
    pub bound: Option<f64>,
}

impl GenericPiece {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Evaluator::Custom(Arc::new(f)),
            lipschitz: None,
            lower_limit: None,
            upper_limit: None,
            derivative_lipschitz: None,
            bound: None,
        }
    }

    /// Piece defined only through its declarations: the line joining the two
    /// endpoint limits.
    pub fn interpolated(lipschitz: Option<f64>, lower: Option<f64>, upper: Option<f64>) -> Self {
        Self {
            eval: Evaluator::Interpolated,
            lipschitz,
            lower_limit: lower,
            upper_limit: upper,
            derivative_lipschitz: Some(0.0),
            bound: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_limits(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.lower_limit = lower;
        self.upper_limit = upper;
        self
    }

    pub fn with_derivative_lipschitz(mut self, l: f64) -> Self {
        self.derivative_lipschitz = Some(l);
        self
    }

    pub fn with_bound(mut self, b: f64) -> Self {
        self.bound = Some(b);
        self
    }

    fn eval(&self, x: f64, lo: f64, hi: f64) -> f64 {
        match &self.eval {
            Evaluator::Custom(f) => f(x),
            Evaluator::Interpolated => match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    let a = self.lower_limit.unwrap_or(0.0);
                    let b = self.upper_limit.unwrap_or(0.0);
                    a + (b - a) * ((x - lo) / (hi - lo))
                }
                (true, false) => self.lower_limit.unwrap_or(0.0),
                (false, true) => self.upper_limit.unwrap_or(0.0),
                (false, false) => 0.0,
            },
        }
    }
}

impl PartialEq for GenericPiece {
    fn eq(&self, other: &Self) -> bool {
        let same_eval = match (&self.eval, &other.eval) {
            (Evaluator::Interpolated, Evaluator::Interpolated) => true,
            (Evaluator::Custom(a), Evaluator::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        };
        same_eval
            && self.lipschitz == other.lipschitz
            && self.lower_limit == other.lower_limit
            && self.upper_limit == other.upper_limit
            && self.derivative_lipschitz == other.derivative_lipschitz
            && self.bound == other.bound
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Piece {
    Affine { intercept: f64, slope: f64 },
    Generic(GenericPiece),
}

impl Piece {
    pub fn affine(intercept: f64, slope: f64) -> Self {
        Piece::Affine { intercept, slope }
    }

    pub fn constant(c: f64) -> Self {
        Piece::Affine { intercept: c, slope: 0.0 }
    }

    /// Lipschitz constant if known (exact for affine pieces).
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Piece::Affine { slope, .. } => Some(slope.abs()),
            Piece::Generic(g) => g.lipschitz,
        }
    }
}

/// Scalar drift, Lipschitz on each piece, with possible jumps at breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLipschitzFn {
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
    values: Vec<f64>,
}

impl PiecewiseLipschitzFn {
    /// Builds a drift from breakpoints, `k + 1` pieces and optional breakpoint
    /// values. Missing values default to the right limit.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>, values: Option<Vec<f64>>) -> Result<Self> {
        let k = breakpoints.len();
        if pieces.len() != k + 1 {
            return Err(Error::InvalidDrift(format!("{} breakpoints need {} pieces, got {}", k, k + 1, pieces.len())));
        }
        if let Some(x) = breakpoints.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidDrift(format!("non-finite breakpoint {x}")));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDrift(format!("breakpoints not strictly increasing: {} >= {}", w[0], w[1])));
        }
        let mut f = Self { breakpoints, pieces, values: Vec::new() };
        for (j, piece) in f.pieces.iter().enumerate() {
            let Piece::Generic(g) = piece else { continue };
            let (lo, hi) = f.piece_bounds(j);
            let declared = |v: Option<f64>| v.is_some_and(f64::is_finite);
            if lo.is_finite() && !declared(g.lower_limit) {
                return Err(Error::InvalidDrift(format!("piece {j} lacks a finite limit at {lo}")));
            }
            if hi.is_finite() && !declared(g.upper_limit) {
                return Err(Error::InvalidDrift(format!("piece {j} lacks a finite limit at {hi}")));
            }
        }
        f.values = match values {
            Some(v) => {
                if v.len() != k {
                    return Err(Error::InvalidDrift(format!("expected {k} breakpoint values, got {}", v.len())));
                }
                v
            }
            None => (1..=k).map(|i| f.limits_unchecked(i).1).collect(),
        };
        if let Some(v) = f.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDrift(format!("non-finite breakpoint value {v}")));
        }
        Ok(f)
    }

    /// Single affine piece on the whole line.
    pub fn affine(intercept: f64, slope: f64) -> Self {
        Self { breakpoints: Vec::new(), pieces: vec![Piece::affine(intercept, slope)], values: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::affine(c, 0.0)
    }

    /// `low` on `(-∞, at)`, `high` on `[at, ∞)`.
    pub fn step(at: f64, low: f64, high: f64) -> Self {
        Self { breakpoints: vec![at], pieces: vec![Piece::constant(low), Piece::constant(high)], values: vec![high] }
    }

    /// The indicator of `[0, ∞)`.
    pub fn indicator_nonneg() -> Self {
        Self::step(0.0, 0.0, 1.0)
    }

    /// Affine pieces `(intercept, slope)` with right-limit breakpoint values.
    pub fn from_affine(breakpoints: Vec<f64>, pieces: &[(f64, f64)]) -> Result<Self> {
        let pieces = pieces.iter().map(|&(a, b)| Piece::affine(a, b)).collect();
        Self::new(breakpoints, pieces, None)
    }

    /// Nondecreasing step function with the given jumps, starting from `base`.
    pub fn staircase(base: f64, jumps: &[(f64, f64)]) -> Result<Self> {
        let mut level = base;
        let mut pieces = vec![Piece::constant(level)];
        for &(_, size) in jumps {
            level += size;
            pieces.push(Piece::constant(level));
        }
        Self::new(jumps.iter().map(|j| j.0).collect(), pieces, None)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn breakpoint_values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_breakpoints(&self) -> usize {
        self.breakpoints.len()
    }

    /// `(lo, hi)` of piece `j` (0-based).
    pub fn piece_bounds(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.breakpoints[j - 1] };
        let hi = self.breakpoints.get(j).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let bps = &self.breakpoints;
        // a short scan keeps the piece index predictable along a path
        let j = if bps.len() <= 8 {
            let mut j = 0;
            while j < bps.len() && bps[j] < x {
                j += 1;
            }
            j
        } else {
            bps.partition_point(|&b| b < x)
        };
        if bps.get(j) == Some(&x) {
            return self.values[j];
        }
        match &self.pieces[j] {
            Piece::Affine { intercept, slope } => intercept + slope * x,
            Piece::Generic(g) => {
                let (lo, hi) = self.piece_bounds(j);
                g.eval(x, lo, hi)
            }
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.breakpoints.len() {
            return Err(Error::BreakpointIndex { index: i, count: self.breakpoints.len() });
        }
        Ok(())
    }

    fn limits_unchecked(&self, i: usize) -> (f64, f64) {
        let xi = self.breakpoints[i - 1];
        let left = match &self.pieces[i - 1] {
            Piece::Affine { intercept, slope } => intercept + slope * xi,
            Piece::Generic(g) => g.upper_limit.unwrap_or(f64::NAN),
        };
        let right = match &self.pieces[i] {
            Piece::Affine { intercept, slope } => intercept + slope * xi,
            Piece::Generic(g) => g.lower_limit.unwrap_or(f64::NAN),
        };
        (left, right)
    }

    /// `(μ(ξ_i−), μ(ξ_i+))` for the 1-based breakpoint index `i`.
    pub fn one_sided_limits(&self, i: usize) -> Result<(f64, f64)> {
        self.check_index(i)?;
        Ok(self.limits_unchecked(i))
    }

    /// `μ(ξ_i+) − μ(ξ_i−)`.
    pub fn jump(&self, i: usize) -> Result<f64> {
        let (l, r) = self.one_sided_limits(i)?;
        Ok(r - l)
    }

    /// 1-based indices `i` with `(x − ξ_i)(y − ξ_i) ≤ 0`.
    pub fn straddles(&self, x: f64, y: f64) -> Vec<usize> {
        self.breakpoints.iter().enumerate().filter(|(_, &xi)| (x - xi) * (y - xi) <= 0.0).map(|(i, _)| i + 1).collect()
    }

    /// The drift `x ↦ μ(x − a)`.
    pub fn shifted(&self, a: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Affine { intercept, slope } if *slope == 0.0 => Piece::constant(*intercept),
                Piece::Affine { intercept, slope } => Piece::affine(intercept - slope * a, *slope),
                Piece::Generic(g) => {
                    let mut g = g.clone();
                    if let Evaluator::Custom(f) = &g.eval {
                        let f = Arc::clone(f);
                        g.eval = Evaluator::Custom(Arc::new(move |x| f(x - a)));
                    }
                    Piece::Generic(g)
                }
            })
            .collect();
        Self { breakpoints: self.breakpoints.iter().map(|b| b + a).collect(), pieces, values: self.values.clone() }
    }

    /// Finite `c` with `|μ(x)| ≤ c (1 + |x|)` for all `x`.
    ///
    /// Uses the anchor construction: with `L` the largest piece Lipschitz
    /// constant and an anchor `x_j` in each piece,
    /// `|μ(x)| ≤ max(max_i |μ(ξ_i)|, max_j (L|x_j| + |μ(x_j)|)) + L|x|`.
    /// The result is checked on a grid over `[-100, 100]`.
    pub fn linear_growth_constant(&self) -> Result<f64> {
        let mut lip: f64 = 0.0;
        for (j, p) in self.pieces.iter().enumerate() {
            lip = lip.max(p.lipschitz().ok_or(Error::MissingLipschitz { piece: j })?);
        }
        let mut anchor_bound = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..self.pieces.len() {
            let x = self.anchor(j);
            anchor_bound = anchor_bound.max(lip * x.abs() + self.eval(x).abs());
        }
        let c = lip.max(anchor_bound);
        let n = 200_001;
        for s in 0..n {
            let x = -100.0 + 200.0 * s as f64 / (n - 1) as f64;
            if self.eval(x).abs() > c * (1.0 + x.abs()) * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::GrowthViolation { c, x });
            }
        }
        for &x in &self.breakpoints {
            for y in [x - 1e-8, x, x + 1e-8] {
                if self.eval(y).abs() > c * (1.0 + y.abs()) * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::GrowthViolation { c, x: y });
                }
            }
        }
        Ok(c)
    }

    fn anchor(&self, j: usize) -> f64 {
        let (lo, hi) = self.piece_bounds(j);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        }
    }

    /// Checks conditions (μ1)–(μ5) with the default sampling options.
    pub fn validate(&self) -> ConditionReport {
        self.validate_with(&ValidationOptions::default())
    }

    pub fn validate_with(&self, opts: &ValidationOptions) -> ConditionReport {
        ConditionReport {
            lipschitz: self.check_lipschitz(opts),
            smooth_pieces: self.check_derivative(opts),
            has_jump: self.check_jump(),
            increasing: self.check_increasing(opts),
            bounded: self.check_bounded(opts),
        }
    }

    fn samples(&self, j: usize, opts: &ValidationOptions) -> Vec<f64> {
        let (lo, hi) = self.piece_bounds(j);
        let w = opts.window;
        let (mut a, mut b) = (lo.max(-w), hi.min(w));
        if a >= b {
            // piece lies outside the window: probe a unit stretch at its finite end
            if lo.is_finite() && lo >= w {
                (a, b) = (lo, lo + 1.0);
            } else {
                (a, b) = (hi - 1.0, hi);
            }
        }
        let (a, b) = (if a == lo { a + opts.edge_offset } else { a }, if b == hi { b - opts.edge_offset } else { b });
        let n = opts.samples_per_piece.max(2);
        let mut xs: Vec<f64> = (0..n).map(|s| a + (b - a) * (s as f64 / (n - 1) as f64)).collect();
        if lo.is_finite() {
            xs.insert(0, lo + opts.edge_offset * 0.5);
        }
        if hi.is_finite() {
            xs.push(hi - opts.edge_offset * 0.5);
        }
        xs.dedup();
        xs
    }

    fn check_lipschitz(&self, opts: &ValidationOptions) -> ConditionCheck {
        for (j, p) in self.pieces.iter().enumerate() {
            let Piece::Generic(g) = p else { continue };
            let Some(l) = g.lipschitz else {
                return ConditionCheck::fail(format!("piece {j} has no declared Lipschitz constant"), None);
            };
            let (lo, hi) = self.piece_bounds(j);
            let xs = self.samples(j, opts);
            let ys: Vec<f64> = xs.iter().map(|&x| g.eval(x, lo, hi)).collect();
            for k in 1..xs.len() {
                let slack = 1e-12 * (1.0 + ys[k].abs() + ys[k - 1].abs());
                if (ys[k] - ys[k - 1]).abs() > l * (xs[k] - xs[k - 1]) * (1.0 + 1e-9) + slack {
                    return ConditionCheck::fail(
                        format!("piece {j}: difference quotient exceeds declared constant {l}"),
                        Some(Witness::Pair(xs[k - 1], xs[k])),
                    );
                }
            }
            let tol = |v: f64| l * opts.edge_offset + 1e-9 * (1.0 + v.abs());
            if let (true, Some(v)) = (lo.is_finite(), g.lower_limit) {
                if (ys[0] - v).abs() > tol(v) {
                    return ConditionCheck::fail(
                        format!("piece {j}: declared limit {v} at {lo} disagrees with evaluator"),
                        Some(Witness::Point(xs[0])),
                    );
                }
            }
            if let (true, Some(v)) = (hi.is_finite(), g.upper_limit) {
                let last = ys.len() - 1;
                if (ys[last] - v).abs() > tol(v) {
                    return ConditionCheck::fail(
                        format!("piece {j}: declared limit {v} at {hi} disagrees with evaluator"),
                        Some(Witness::Point(xs[last])),
                    );
                }
            }
        }
        ConditionCheck::pass("every piece is Lipschitz")
    }

    fn check_derivative(&self, opts: &ValidationOptions) -> ConditionCheck {
        for (j, p) in self.pieces.iter().enumerate() {
            let Piece::Generic(g) = p else { continue };
            let (lo, hi) = self.piece_bounds(j);
            let cap = g.derivative_lipschitz.map_or(opts.derivative_cap, |l| l * (1.0 + 1e-6) + 1e-6);
            // uniform interior samples only, the edge points would dominate the spacing
            let xs: Vec<f64> = {
                let all = self.samples(j, opts);
                let skip_lo = usize::from(lo.is_finite());
                let skip_hi = usize::from(hi.is_finite());
                all[skip_lo..all.len() - skip_hi].to_vec()
            };
            let slopes: Vec<(f64, f64)> = xs
                .windows(2)
                .map(|w| (0.5 * (w[0] + w[1]), (g.eval(w[1], lo, hi) - g.eval(w[0], lo, hi)) / (w[1] - w[0])))
                .collect();
            for s in slopes.windows(2) {
                let q = (s[1].1 - s[0].1).abs() / (s[1].0 - s[0].0);
                if q > cap {
                    return ConditionCheck::fail(
                        format!("piece {j}: finite-difference derivative quotient {q:.3e} exceeds {cap:.3e}"),
                        Some(Witness::Pair(s[0].0, s[1].0)),
                    );
                }
            }
        }
        ConditionCheck::pass("every piece has a Lipschitz derivative")
    }

    fn check_jump(&self) -> ConditionCheck {
        for i in 1..=self.num_breakpoints() {
            let (l, r) = self.limits_unchecked(i);
            if r != l {
                return ConditionCheck::pass(format!("jump {} at breakpoint {i}", r - l));
            }
        }
        ConditionCheck::fail("no nonzero jump", None)
    }

    fn check_increasing(&self, opts: &ValidationOptions) -> ConditionCheck {
        for (j, p) in self.pieces.iter().enumerate() {
            match p {
                Piece::Affine { slope, .. } => {
                    if *slope < 0.0 {
                        let (lo, hi) = self.piece_bounds(j);
                        return ConditionCheck::fail(
                            format!("piece {j} has negative slope {slope}"),
                            Some(Witness::Point(self.anchor(j).clamp(lo, hi))),
                        );
                    }
                }
                Piece::Generic(g) => {
                    let (lo, hi) = self.piece_bounds(j);
                    let xs = self.samples(j, opts);
                    for w in xs.windows(2) {
                        let (a, b) = (g.eval(w[0], lo, hi), g.eval(w[1], lo, hi));
                        if b < a - 1e-12 * (1.0 + a.abs()) {
                            return ConditionCheck::fail(
                                format!("piece {j} decreases"),
                                Some(Witness::Pair(w[0], w[1])),
                            );
                        }
                    }
                }
            }
        }
        for i in 1..=self.num_breakpoints() {
            let (l, r) = self.limits_unchecked(i);
            let xi = self.breakpoints[i - 1];
            let v = self.values[i - 1];
            if r < l {
                return ConditionCheck::fail(
                    format!("negative jump {} at breakpoint {i}", r - l),
                    Some(Witness::Point(xi)),
                );
            }
            if !(l..=r).contains(&v) {
                return ConditionCheck::fail(
                    format!("value {v} at breakpoint {i} outside [{l}, {r}]"),
                    Some(Witness::Point(xi)),
                );
            }
        }
        ConditionCheck::pass("nondecreasing")
    }

    fn check_bounded(&self, opts: &ValidationOptions) -> ConditionCheck {
        let last = self.pieces.len() - 1;
        for j in [0, last] {
            match &self.pieces[j] {
                Piece::Affine { slope, .. } => {
                    if *slope != 0.0 {
                        let x = if j == 0 { -opts.window } else { opts.window };
                        return ConditionCheck::fail(
                            format!("piece {j} is affine with slope {slope} on an unbounded interval"),
                            Some(Witness::Point(x)),
                        );
                    }
                }
                Piece::Generic(g) => {
                    let (lo, hi) = self.piece_bounds(j);
                    let bound = match (&g.eval, g.bound) {
                        (_, Some(b)) => b,
                        (Evaluator::Interpolated, None) if !(lo.is_infinite() && hi.is_infinite()) => {
                            g.lower_limit.or(g.upper_limit).unwrap_or(0.0).abs()
                        }
                        _ => {
                            return ConditionCheck::fail(
                                format!("piece {j} is unbounded or has no declared bound"),
                                None,
                            )
                        }
                    };
                    if let Some(&x) =
                        self.samples(j, opts).iter().find(|&&x| g.eval(x, lo, hi).abs() > bound * (1.0 + 1e-12))
                    {
                        return ConditionCheck::fail(
                            format!("piece {j} exceeds its declared bound {bound}"),
                            Some(Witness::Point(x)),
                        );
                    }
                }
            }
        }
        ConditionCheck::pass("bounded")
    }

    /// Text form: `piece` and `breakpoint` lines, one per item.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, p) in self.pieces.iter().enumerate() {
            let (lo, hi) = self.piece_bounds(j);
            match p {
                Piece::Affine { intercept, slope } => {
                    out.push_str(&format!("piece {lo} {hi} affine {intercept} {slope}\n"));
                }
                Piece::Generic(g) => {
                    let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
                    out.push_str(&format!(
                        "piece {lo} {hi} generic {} {} {}\n",
                        num(g.lipschitz),
                        num(g.lower_limit),
                        num(g.upper_limit)
                    ));
                }
            }
        }
        for (xi, v) in self.breakpoints.iter().zip(&self.values) {
            out.push_str(&format!("breakpoint {xi} {v}\n"));
        }
        out
    }

    /// Parses the text form. `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                lines.push((no + 1, line));
            }
        }
        Self::from_lines(&lines)
    }

    /// Builds a drift from already-tokenised `piece` / `breakpoint` lines,
    /// tagged with their source line numbers.
    pub fn from_lines(lines: &[(usize, &str)]) -> Result<Self> {
        let syntax = |line: usize, message: String| Error::DriftSyntax { line, message };
        let num = |line: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>().map_err(|_| syntax(line, format!("bad number {tok:?}")))
        };
        let mut pieces: Vec<(usize, f64, f64, Piece)> = Vec::new();
        let mut values: Vec<(usize, f64, f64)> = Vec::new();
        for &(no, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["piece", lo, hi, "affine", a, b] => {
                    let (a, b) = (num(no, a)?, num(no, b)?);
                    if !a.is_finite() || !b.is_finite() {
                        return Err(syntax(no, "affine coefficients must be finite".into()));
                    }
                    pieces.push((no, num(no, lo)?, num(no, hi)?, Piece::affine(a, b)));
                }
                ["piece", lo, hi, "generic", l, left, right] => {
                    let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
                    let (lo, hi) = (num(no, lo)?, num(no, hi)?);
                    if lo.is_infinite() && hi.is_infinite() {
                        return Err(syntax(no, "a generic piece from text needs a finite endpoint".into()));
                    }
                    let g = GenericPiece::interpolated(opt(num(no, l)?), opt(num(no, left)?), opt(num(no, right)?));
                    pieces.push((no, lo, hi, Piece::Generic(g)));
                }
                ["breakpoint", xi, v] => values.push((no, num(no, xi)?, num(no, v)?)),
                _ => return Err(syntax(no, format!("unrecognised line {line:?}"))),
            }
        }
        if pieces.is_empty() {
            return Err(Error::InvalidDrift("no pieces".into()));
        }
        pieces.sort_by(|a, b| a.1.total_cmp(&b.1));
        if pieces[0].1 != f64::NEG_INFINITY {
            return Err(syntax(pieces[0].0, "first piece must start at -inf".into()));
        }
        let last = pieces.last().unwrap();
        if last.2 != f64::INFINITY {
            return Err(syntax(last.0, "last piece must end at inf".into()));
        }
        let mut breakpoints = Vec::new();
        for w in pieces.windows(2) {
            if w[0].2 != w[1].1 {
                return Err(syntax(w[1].0, format!("gap or overlap between {} and {}", w[0].2, w[1].1)));
            }
            breakpoints.push(w[0].2);
        }
        let mut declared = vec![None; breakpoints.len()];
        for (no, xi, v) in values {
            let idx = breakpoints
                .iter()
                .position(|&b| b == xi)
                .ok_or_else(|| syntax(no, format!("{xi} is not a piece boundary")))?;
            if declared[idx].replace(v).is_some() {
                return Err(syntax(no, format!("duplicate breakpoint {xi}")));
            }
        }
        let pieces: Vec<Piece> = pieces.into_iter().map(|p| p.3).collect();
        let mut f = Self::new(breakpoints, pieces, None)?;
        for (slot, v) in f.values.iter_mut().zip(declared) {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::InvalidDrift(format!("non-finite breakpoint value {v}")));
                }
                *slot = v;
            }
        }
        Ok(f)
    }
}

/// Sampling parameters for the heuristic checks on generic pieces.
#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub samples_per_piece: usize,
    /// Pieces are sampled on their intersection with `[-window, window]`.
    pub window: f64,
    /// Distance of the endpoint-adjacent samples from finite endpoints.
    pub edge_offset: f64,
    /// Largest finite-difference derivative quotient accepted for (μ2) when
    /// no derivative Lipschitz constant is declared.
    pub derivative_cap: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { samples_per_piece: 10_000, window: 100.0, edge_offset: 1e-8, derivative_cap: 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    Point(f64),
    Pair(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    pub detail: String,
    pub witness: Option<Witness>,
}

impl ConditionCheck {
    fn pass(detail: impl Into<String>) -> Self {
        Self { holds: true, detail: detail.into(), witness: None }
    }

    fn fail(detail: impl Into<String>, witness: Option<Witness>) -> Self {
        Self { holds: false, detail: detail.into(), witness }
    }
}

/// Outcome of checking (μ1) piecewise Lipschitz, (μ2) piecewise Lipschitz
/// derivative, (μ3) some nonzero jump, (μ4) increasing and (μ5) bounded.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub lipschitz: ConditionCheck,
    pub smooth_pieces: ConditionCheck,
    pub has_jump: ConditionCheck,
    pub increasing: ConditionCheck,
    pub bounded: ConditionCheck,
}

impl ConditionReport {
    pub fn checks(&self) -> [(&'static str, &ConditionCheck); 5] {
        [
            ("mu1", &self.lipschitz),
            ("mu2", &self.smooth_pieces),
            ("mu3", &self.has_jump),
            ("mu4", &self.increasing),
            ("mu5", &self.bounded),
        ]
    }

    pub fn all_hold(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.holds)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.checks().iter().map(|(name, c)| format!("({name})={}", if c.holds { "ok" } else { "fail" })).collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_identity() -> PiecewiseLipschitzFn {
        PiecewiseLipschitzFn::from_affine(vec![1.0], &[(0.0, 1.0), (2.0, 1.0)]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let ind = PiecewiseLipschitzFn::indicator_nonneg();
        assert_eq!(ind.eval(-0.5), 0.0);
        assert_eq!(ind.eval(0.0), 1.0);
        assert_eq!(shifted_identity().eval(3.0), 5.0);
    }

    #[test]
    fn limits_and_jumps() {
        let ind = PiecewiseLipschitzFn::indicator_nonneg();
        assert_eq!(ind.one_sided_limits(1).unwrap(), (0.0, 1.0));
        assert_eq!(ind.jump(1).unwrap(), 1.0);
        let f = shifted_identity();
        assert_eq!(f.one_sided_limits(1).unwrap(), (1.0, 3.0));
        assert_eq!(f.jump(1).unwrap(), 2.0);
        let cont = PiecewiseLipschitzFn::from_affine(vec![0.0], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(cont.one_sided_limits(1).unwrap(), (0.0, 0.0));
        assert_eq!(cont.jump(1).unwrap(), 0.0);
    }

    #[test]
    fn breakpoint_index_out_of_range() {
        let ind = PiecewiseLipschitzFn::indicator_nonneg();
        assert!(matches!(ind.jump(0), Err(Error::BreakpointIndex { .. })));
        assert!(matches!(ind.one_sided_limits(2), Err(Error::BreakpointIndex { .. })));
    }

    #[test]
    fn validate_examples() {
        assert!(PiecewiseLipschitzFn::indicator_nonneg().validate().all_hold());

        let r = shifted_identity().validate();
        assert!(r.lipschitz.holds && r.smooth_pieces.holds && r.has_jump.holds && r.increasing.holds);
        assert!(!r.bounded.holds);

        let dec = PiecewiseLipschitzFn::step(0.0, 0.0, -1.0).validate();
        assert!(!dec.increasing.holds);
        assert_eq!(dec.increasing.witness, Some(Witness::Point(0.0)));
    }

    #[test]
    fn jump_flag_matches_jumps() {
        let cont = PiecewiseLipschitzFn::from_affine(vec![0.0], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(!cont.validate().has_jump.holds);
        assert!(PiecewiseLipschitzFn::indicator_nonneg().validate().has_jump.holds);
    }

    #[test]
    fn breakpoint_value_outside_limits_breaks_monotonicity() {
        let f = PiecewiseLipschitzFn::new(vec![0.0], vec![Piece::constant(0.0), Piece::constant(1.0)], Some(vec![2.0]))
            .unwrap();
        assert!(!f.validate().increasing.holds);
    }

    #[test]
    fn generic_piece_checks() {
        let tanh = GenericPiece::new(f64::tanh).with_lipschitz(1.0).with_derivative_lipschitz(1.0).with_bound(1.0);
        let f = PiecewiseLipschitzFn::new(vec![], vec![Piece::Generic(tanh)], None).unwrap();
        let r = f.validate();
        assert!(r.lipschitz.holds, "{}", r.lipschitz.detail);
        assert!(r.smooth_pieces.holds, "{}", r.smooth_pieces.detail);
        assert!(r.increasing.holds && r.bounded.holds);
        assert!(!r.has_jump.holds);

        let liar = GenericPiece::new(|x| 3.0 * x).with_lipschitz(1.0);
        let f = PiecewiseLipschitzFn::new(vec![], vec![Piece::Generic(liar)], None).unwrap();
        let r = f.validate();
        assert!(!r.lipschitz.holds);
        assert!(matches!(r.lipschitz.witness, Some(Witness::Pair(..))));
        assert!(matches!(f.linear_growth_constant(), Err(Error::GrowthViolation { .. })));

        let undeclared = GenericPiece::new(|x| x);
        let f = PiecewiseLipschitzFn::new(vec![], vec![Piece::Generic(undeclared)], None).unwrap();
        assert!(!f.validate().lipschitz.holds);
        assert_eq!(f.linear_growth_constant(), Err(Error::MissingLipschitz { piece: 0 }));
    }

    #[test]
    fn generic_piece_needs_limits_at_finite_ends() {
        let g = GenericPiece::new(|x| x).with_lipschitz(1.0);
        let err = PiecewiseLipschitzFn::new(vec![0.0], vec![Piece::constant(0.0), Piece::Generic(g)], None);
        assert!(err.is_err());
        let g = GenericPiece::new(|x| x).with_lipschitz(1.0).with_limits(Some(0.0), None);
        let f = PiecewiseLipschitzFn::new(vec![0.0], vec![Piece::constant(0.0), Piece::Generic(g)], None).unwrap();
        assert_eq!(f.one_sided_limits(1).unwrap(), (0.0, 0.0));
        assert!(f.validate().lipschitz.holds);
    }

    #[test]
    fn wrong_declared_limit_is_reported() {
        let g = GenericPiece::new(|x| x).with_lipschitz(1.0).with_limits(Some(0.5), None);
        let f = PiecewiseLipschitzFn::new(vec![0.0], vec![Piece::constant(0.0), Piece::Generic(g)], None).unwrap();
        let r = f.validate();
        assert!(!r.lipschitz.holds);
        assert!(matches!(r.lipschitz.witness, Some(Witness::Point(_))));
    }

    #[test]
    fn linear_growth_examples() {
        let c = PiecewiseLipschitzFn::indicator_nonneg().linear_growth_constant().unwrap();
        assert!(c >= 1.0);
        assert_eq!(PiecewiseLipschitzFn::constant(0.0).linear_growth_constant().unwrap(), 0.0);
        assert!(PiecewiseLipschitzFn::affine(0.0, 1.0).linear_growth_constant().unwrap() >= 1.0);
    }

    #[test]
    fn straddle_examples() {
        let f = PiecewiseLipschitzFn::indicator_nonneg();
        assert_eq!(f.straddles(-1.0, 1.0), vec![1]);
        assert_eq!(f.straddles(5.0, 5.0), Vec::<usize>::new());
        let g = PiecewiseLipschitzFn::staircase(0.0, &[(0.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(g.straddles(1.0, 3.0), vec![2]);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(PiecewiseLipschitzFn::from_affine(vec![1.0, 1.0], &[(0.0, 0.0); 3]).is_err());
        assert!(PiecewiseLipschitzFn::from_affine(vec![2.0, 1.0], &[(0.0, 0.0); 3]).is_err());
        assert!(PiecewiseLipschitzFn::from_affine(vec![1.0], &[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let f = PiecewiseLipschitzFn::from_affine(vec![-1.0, 0.5], &[(0.0, 0.0), (1.0, 0.25), (3.0, 0.0)]).unwrap();
        assert_eq!(PiecewiseLipschitzFn::parse(&f.to_text()).unwrap(), f);

        let text = "# step\npiece -inf 0 affine 0 0\npiece 0 inf affine 1 0\nbreakpoint 0 1\n";
        assert_eq!(PiecewiseLipschitzFn::parse(text).unwrap(), PiecewiseLipschitzFn::indicator_nonneg());
    }

    #[test]
    fn text_generic_pieces() {
        let text = "piece -inf 0 affine 0 0\npiece 0 1 generic 2 0 2\npiece 1 inf generic nan 2 nan\n";
        let f = PiecewiseLipschitzFn::parse(text).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(7.0), 2.0);
        assert!(!f.validate().lipschitz.holds); // last piece has no declared constant
        assert_eq!(PiecewiseLipschitzFn::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn text_errors() {
        for bad in [
            "piece 0 inf affine 1 0\n",
            "piece -inf 0 affine 0 0\n",
            "piece -inf 0 affine 0 0\npiece 1 inf affine 0 0\n",
            "piece -inf inf affine x 0\n",
            "piece -inf inf generic 1 0 0\n",
            "piece -inf 0 affine 0 0\npiece 0 inf affine 1 0\nbreakpoint 3 1\n",
            "bogus\n",
        ] {
            assert!(PiecewiseLipschitzFn::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn missing_breakpoint_line_defaults_to_right_limit() {
        let f = PiecewiseLipschitzFn::parse("piece -inf 0 affine 0 0\npiece 0 inf affine 1 0\n").unwrap();
        assert_eq!(f.breakpoint_values(), &[1.0]);
    }

    #[test]
    fn report_display() {
        let r = PiecewiseLipschitzFn::indicator_nonneg().validate();
        assert_eq!(r.to_string(), "(mu1)=ok (mu2)=ok (mu3)=ok (mu4)=ok (mu5)=ok");
    }
}

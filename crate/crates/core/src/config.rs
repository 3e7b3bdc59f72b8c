//! Flat `key = value` experiment configs.
//!
//! ```text
//! # Euler with a unit step drift
//! x0 = 0
//! n_list = 16, 32, 64
//! replications = 20000
//! piece = -inf 0 affine 0 0
//! piece = 0 inf affine 1 0
//! breakpoint = 0 1
//! ```
//!
//! The drift is given either inline through repeated `piece` / `breakpoint`
//! keys or by `drift_file`, a path (relative to the config file) holding the
//! same lines without the `=`. Without either, the drift is `1{x ≥ 0}`.

use std::fmt::Write as _;
use std::path::Path;

use crate::drift::PiecewiseLipschitzFn;
use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::solvers::SdeSpec;

const KEYS: [&str; 11] = [
    "x0",
    "n_list",
    "fine_factor",
    "ref_factor",
    "p",
    "replications",
    "seed",
    "tag",
    "piece",
    "breakpoint",
    "drift_file",
];

fn config_err(line: usize, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {message}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| config_err(line, format!("bad value {value:?} for {key}")))
}

pub fn parse_n_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad n_list entry {t:?}"))).collect()
}

/// Parses config text. `base` resolves a relative `drift_file`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig> {
    let mut x0 = 0.0;
    let mut drift_lines: Vec<(usize, String)> = Vec::new();
    let mut drift_file: Option<(usize, String)> = None;
    let mut cfg = ExperimentConfig::new(SdeSpec::new(PiecewiseLipschitzFn::indicator_nonneg(), 0.0)?);
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| config_err(no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(config_err(no, format!("unknown key {key:?}")));
        };
        let repeatable = key == "piece" || key == "breakpoint";
        if !repeatable && seen.contains(&key) {
            return Err(config_err(no, format!("duplicate key {key:?}")));
        }
        seen.push(key);
        match key {
            "x0" => x0 = parse_num(no, key, value)?,
            "n_list" => cfg.n_list = parse_n_list(value).map_err(|m| config_err(no, m))?,
            "fine_factor" => cfg.fine_factor = parse_num(no, key, value)?,
            "ref_factor" => cfg.ref_factor = parse_num(no, key, value)?,
            "p" => cfg.p = parse_num(no, key, value)?,
            "replications" => cfg.replications = parse_num(no, key, value)?,
            "seed" => cfg.seed = parse_num(no, key, value)?,
            "tag" => {
                if value.is_empty() {
                    return Err(config_err(no, "empty tag"));
                }
                cfg.tag = value.to_string();
            }
            "drift_file" => drift_file = Some((no, value.to_string())),
            _ => drift_lines.push((no, format!("{key} {value}"))),
        }
    }
    let drift = match (drift_file, drift_lines.is_empty()) {
        (Some((no, _)), false) => return Err(config_err(no, "drift_file conflicts with inline drift lines")),
        (Some((_, file)), true) => {
            let path = base.map_or_else(|| Path::new(&file).to_path_buf(), |b| b.join(&file));
            load_drift(&path)?
        }
        (None, false) => {
            let lines: Vec<(usize, &str)> = drift_lines.iter().map(|(n, l)| (*n, l.as_str())).collect();
            PiecewiseLipschitzFn::from_lines(&lines)?
        }
        (None, true) => PiecewiseLipschitzFn::indicator_nonneg(),
    };
    cfg.spec = SdeSpec::new(drift, x0)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = read(path)?;
    parse_config(&text, path.parent())
}

/// Reads a drift from a file of `piece` / `breakpoint` lines, or from a
/// config file whose drift keys use `key = value` form.
pub fn load_drift(path: &Path) -> Result<PiecewiseLipschitzFn> {
    let text = read(path)?;
    if text.lines().any(|l| l.split('#').next().unwrap_or("").contains('=')) {
        Ok(parse_config(&text, path.parent())?.spec.drift().clone())
    } else {
        PiecewiseLipschitzFn::parse(&text)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Emits a config that [`parse_config`] maps back to an equal value, with
/// the drift inlined.
pub fn to_config_text(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let n_list: Vec<String> = cfg.n_list.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(out, "x0 = {}", cfg.spec.x0());
    let _ = writeln!(out, "n_list = {}", n_list.join(", "));
    let _ = writeln!(out, "fine_factor = {}", cfg.fine_factor);
    let _ = writeln!(out, "ref_factor = {}", cfg.ref_factor);
    let _ = writeln!(out, "p = {}", cfg.p);
    let _ = writeln!(out, "replications = {}", cfg.replications);
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "tag = {}", cfg.tag);
    for line in cfg.spec.drift().to_text().lines() {
        if let Some((key, rest)) = line.split_once(' ') {
            let _ = writeln!(out, "{key} = {rest}");
        }
    }
    out
}

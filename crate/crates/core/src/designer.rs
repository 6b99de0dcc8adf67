//! Greedy search for a degree sequence whose return tail follows a target.
//!
//! The cumulative tail `q(n) = Σ_{i ≤ n} P(T > i)` is compared with a target
//! `g` at the checkpoints `n_t = 2^t`. Levels are fixed one at a time: each
//! palette value is tried at the current level (continued by repetition
//! below it), the tail is measured with common random numbers, and the value
//! with the smallest `Σ_t log²(q(n_t)/g(n_t))` is kept. A second sweep
//! revisits every level once with the rest of the sequence fixed.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{check_return_target, geometric_grid, TargetFn, Violation};
use crate::fit::{fit_exponent, FitError, FitModel, FitResult};
use crate::orbit::{cumulative_q, sample_return_time, OrbitError, ReturnTailEstimate};
use crate::seed::{self, stream};
use crate::tree::{DegreeSequence, Extension, TreeError, MAX_DEGREE};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("target is not admissible: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Inadmissible(Vec<Violation>),
    #[error("no sequence kept q within ×{band} of the target; best was {}", .best.sequence)]
    Unreachable { band: f64, best: Box<Design> },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone)]
pub struct DesignerConfig {
    pub m_star: usize,
    /// Allowed degrees; defaults to `{2, m_star}`.
    pub palette: Option<Vec<u8>>,
    pub n_max: u64,
    /// Trials per tail measurement.
    pub trials: u64,
    /// Multiplicative acceptance band `[1/C, C]`.
    pub band: f64,
    /// Upper log-Lipschitz exponent used in the admissibility check.
    pub gamma: f64,
    /// Number of explicitly designed levels; defaults to `⌈log₂ n_max / 2⌉ + 2`.
    pub levels: Option<usize>,
    /// Fit window of the tail exponent; defaults to `[2^8, n_max]`.
    pub fit_window: Option<(u64, u64)>,
    pub seed: u64,
}

impl DesignerConfig {
    pub fn new(m_star: usize, n_max: u64, seed: u64) -> Self {
        DesignerConfig {
            m_star,
            palette: None,
            n_max,
            trials: 20_000,
            band: 4.0,
            gamma: 0.95,
            levels: None,
            fit_window: None,
            seed,
        }
    }

    fn palette(&self) -> Vec<u8> {
        let mut p = self.palette.clone().unwrap_or_else(|| vec![2, self.m_star as u8]);
        p.sort_unstable();
        p.dedup();
        p
    }

    fn levels(&self) -> usize {
        self.levels.unwrap_or_else(|| (64 - self.n_max.leading_zeros() as usize).div_ceil(2) + 2)
    }

    fn fit_window(&self) -> (u64, u64) {
        self.fit_window.unwrap_or((256.min(self.n_max), self.n_max))
    }
}

/// Measured against target at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub n: u64,
    pub p_hat: f64,
    pub q: f64,
    pub g: f64,
    pub ratio: f64,
}

/// Summary of one measured sequence.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub sequence: String,
    pub cost: f64,
    pub tail_exponent: Option<f64>,
    pub rows: Vec<CalibrationRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Design {
    #[serde(serialize_with = "serialize_display")]
    pub sequence: DegreeSequence,
    pub table: Vec<CalibrationRow>,
    /// Fit of `P̂(T > n)` in the fit window.
    pub tail_fit: FitResult<f64>,
    pub within_band: bool,
    pub band: f64,
    /// Constant sequences `m ≡ 2` and `m ≡ m_star`.
    pub references: Vec<Calibration>,
    /// Every candidate tried, in order.
    pub history: Vec<Calibration>,
}

fn serialize_display<S: serde::Serializer>(m: &DegreeSequence, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(m)
}

impl Design {
    /// CSV with header `n,p_hat,q,g,ratio`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,p_hat,q,g,ratio")?;
        for r in &self.table {
            writeln!(w, "{},{},{},{},{}", r.n, r.p_hat, r.q, r.g, r.ratio)?;
        }
        Ok(())
    }
}

fn checkpoints(n_max: u64) -> Vec<u64> {
    let mut c: Vec<u64> = (0..64).map(|t| 1u64 << t).take_while(|&n| n <= n_max).collect();
    if *c.last().unwrap() != n_max {
        c.push(n_max);
    }
    c
}

struct Measurer<'a> {
    cfg: &'a DesignerConfig,
    target: &'a TargetFn<f64>,
    checkpoints: Vec<u64>,
}

impl Measurer<'_> {
    fn tail(&self, m: &DegreeSequence) -> Result<ReturnTailEstimate<f64>, OrbitError> {
        // common random numbers: trial i uses the same stream for every candidate
        let times: Vec<Option<u64>> = (0..self.cfg.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::trajectory_rng(self.cfg.seed, stream::DESIGNER, i);
                sample_return_time(m, self.cfg.n_max, &mut rng)
            })
            .collect();
        ReturnTailEstimate::from_return_times(&times, self.cfg.n_max, self.cfg.seed)
    }

    fn measure(&self, m: &DegreeSequence) -> Result<(Calibration, ReturnTailEstimate<f64>), DesignError> {
        let tail = self.tail(m)?;
        let q = cumulative_q(&tail);
        let mut rows = Vec::with_capacity(self.checkpoints.len());
        let mut cost = 0.0;
        for &n in &self.checkpoints {
            let qn = q.at(n)?;
            let g = self.target.eval(n as f64).unwrap_or(f64::NAN);
            let ratio = qn / g;
            cost += ratio.ln().powi(2);
            rows.push(CalibrationRow { n, p_hat: tail.p_at(n)?, q: qn, g, ratio });
        }
        if cost.is_nan() {
            cost = f64::INFINITY;
        }
        let tail_exponent = tail_fit(&tail, self.cfg.fit_window()).ok().map(|f| f.exponent);
        Ok((Calibration { sequence: m.to_string(), cost, tail_exponent, rows }, tail))
    }
}

/// Fit of the survival function `P̂(T > n)` on the checkpoints `2^t` and
/// `⌊2^{t+1/2}⌋` inside `window`.
pub fn tail_fit(tail: &ReturnTailEstimate<f64>, window: (u64, u64)) -> Result<FitResult<f64>, DesignError> {
    let mut pts = Vec::new();
    for x in geometric_grid(tail.n_max() as f64, 2) {
        let n = x.floor() as u64;
        if n >= window.0 && n <= window.1 {
            let p = tail.p_at(n)?;
            if p > 0.0 {
                pts.push((n as f64, p));
            }
        }
    }
    Ok(fit_exponent(&pts, (window.0 as f64, window.1 as f64), FitModel::Power)?)
}

fn build(prefix: &[u8]) -> Result<DegreeSequence, TreeError> {
    DegreeSequence::new(prefix.to_vec(), Extension::RepeatLast)
}

/// Designs a degree sequence whose cumulative return tail tracks `target`.
pub fn design_degree_sequence(target: &TargetFn<f64>, cfg: &DesignerConfig) -> Result<Design, DesignError> {
    if cfg.m_star < 2 || cfg.m_star > MAX_DEGREE {
        return Err(DesignError::InvalidArgument(format!(
            "m_star must lie in 2..={MAX_DEGREE}, got {}",
            cfg.m_star
        )));
    }
    let palette = cfg.palette();
    if palette.iter().any(|&d| d < 2 || d as usize > cfg.m_star) {
        return Err(DesignError::InvalidArgument(format!(
            "palette {palette:?} must lie in 2..={}",
            cfg.m_star
        )));
    }
    if cfg.n_max < 16 || cfg.trials == 0 {
        return Err(DesignError::InvalidArgument("need n_max ≥ 16 and trials ≥ 1".into()));
    }
    let violations = check_return_target(target, cfg.gamma, &geometric_grid(cfg.n_max as f64, 2));
    if !violations.is_empty() {
        return Err(DesignError::Inadmissible(violations));
    }

    let measurer = Measurer { cfg, target, checkpoints: checkpoints(cfg.n_max) };
    let mut references = Vec::new();
    for d in [2usize, cfg.m_star] {
        references.push(measurer.measure(&DegreeSequence::constant(d)?)?.0);
    }
    references.dedup_by(|a, b| a.sequence == b.sequence);

    let mut history = Vec::new();
    let mut memo: Vec<(Vec<u8>, f64)> = Vec::new();
    let mut cost_of = |prefix: &[u8], history: &mut Vec<Calibration>| -> Result<f64, DesignError> {
        let m = build(prefix)?;
        // trailing repeats do not change the sequence
        let key = m.prefix().to_vec();
        if let Some((_, c)) = memo.iter().find(|(k, _)| *k == key) {
            return Ok(*c);
        }
        let (cal, _) = measurer.measure(&m)?;
        let c = cal.cost;
        history.push(cal);
        memo.push((key, c));
        Ok(c)
    };

    let levels = cfg.levels();
    let mut chosen: Vec<u8> = Vec::with_capacity(levels);
    for _ in 0..levels {
        let mut best: Option<(u8, f64)> = None;
        for &d in &palette {
            chosen.push(d);
            let c = cost_of(&chosen, &mut history)?;
            chosen.pop();
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((d, c));
            }
        }
        chosen.push(best.unwrap().0);
    }
    for level in 0..levels {
        let mut best = (chosen[level], cost_of(&chosen, &mut history)?);
        for &d in &palette {
            if d == best.0 {
                continue;
            }
            let mut trial = chosen.clone();
            trial[level] = d;
            let c = cost_of(&trial, &mut history)?;
            if c < best.1 {
                best = (d, c);
            }
        }
        chosen[level] = best.0;
    }

    let sequence = build(&chosen)?;
    let (cal, tail) = measurer.measure(&sequence)?;
    let tail_fit = tail_fit(&tail, cfg.fit_window())?;
    let (lo, hi) = cfg.fit_window();
    let within_band = cal
        .rows
        .iter()
        .filter(|r| r.n >= lo && r.n <= hi)
        .all(|r| r.ratio >= 1.0 / cfg.band && r.ratio <= cfg.band);
    let design = Design {
        sequence,
        table: cal.rows,
        tail_fit,
        within_band,
        band: cfg.band,
        references,
        history,
    };
    if within_band {
        Ok(design)
    } else {
        Err(DesignError::Unreachable { band: cfg.band, best: Box::new(design) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_rejected() {
        let cfg = DesignerConfig::new(3, 1 << 10, 1);
        let err = design_degree_sequence(&TargetFn::power(0.0), &cfg).unwrap_err();
        assert!(matches!(err, DesignError::Inadmissible(_)));
    }

    #[test]
    fn bad_palette_is_rejected() {
        let mut cfg = DesignerConfig::new(3, 1 << 10, 1);
        cfg.palette = Some(vec![2, 5]);
        assert!(matches!(
            design_degree_sequence(&TargetFn::power(0.6), &cfg),
            Err(DesignError::InvalidArgument(_))
        ));
    }

    #[test]
    fn small_design_respects_palette() {
        let mut cfg = DesignerConfig::new(3, 1 << 10, 7);
        cfg.trials = 2000;
        let design = match design_degree_sequence(&TargetFn::power(0.6), &cfg) {
            Ok(d) => d,
            Err(DesignError::Unreachable { best, .. }) => *best,
            Err(e) => panic!("{e}"),
        };
        for l in 1..40 {
            let d = design.sequence.degree(l);
            assert!((2..=3).contains(&d));
        }
        assert_eq!(design.references.len(), 2);
    }

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoints(20), vec![1, 2, 4, 8, 16, 20]);
        assert_eq!(checkpoints(16), vec![1, 2, 4, 8, 16]);
    }
}

//! Experiment configuration, presets and the report pipeline.
//!
//! A run writes CSV tables and a `summary.json` into the output directory.
//! Every CSV depends only on the configuration (seed included), never on the
//! number of worker threads.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bounds::{bounds_report, g_of, geometric_grid, validate_target, BoundsError, BoundsReport, TargetFn, TargetSpec};
use crate::designer::{design_degree_sequence, tail_fit, DesignError, DesignerConfig};
use crate::fit::{fit_exponent, FitError, FitModel, FitResult};
use crate::lamp::{Integers, LampFunctions, LampKind, Lamplighter, Z2};
use crate::orbit::{estimate_return_tail, OrbitError, ReturnTailEstimate};
use crate::seed::stream;
use crate::tree::{DegreeSequence, TreeError};
use crate::wreath::{
    default_grid, plug_in_entropy, run_batch, run_product_trajectory, BatchSummary, ProductTrajectory,
    TrajectoryStats, WalkError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("thread pool: {0}")]
    Pool(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Closed acceptance interval `[lo, hi]`.
pub type Band = [f64; 2];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Acceptance {
    pub speed_exponent: Option<Band>,
    pub entropy_exponent: Option<Band>,
    /// Fitted slope of `mean_D / mean_proxy_H`.
    pub ratio_slope: Option<Band>,
    /// Fitted exponent of `P̂(T > n)`.
    pub tail_exponent: Option<Band>,
    /// Measured proxies must lie in `[lower / C, C · upper]`.
    pub sandwich_factor: Option<f64>,
    pub sandwich_range: Option<[u64; 2]>,
    /// Product fits must match the larger component fit within this.
    pub product_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    /// Target `g(n) = n^g_exponent`.
    pub g_exponent: Option<f64>,
    /// Target given through the speed function, `g = f² / n`.
    pub target: Option<String>,
    /// Two-column table for `g`.
    pub g_table: Option<PathBuf>,
    pub m_star: usize,
    pub palette: Option<Vec<u8>>,
    pub trials: u64,
    pub band: f64,
    pub gamma: f64,
    pub levels: Option<usize>,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            g_exponent: None,
            target: None,
            g_table: None,
            m_star: 3,
            palette: None,
            trials: 20_000,
            band: 4.0,
            gamma: 0.95,
            levels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub degrees: String,
    pub lamp: LampKind,
    #[serde(default = "default_entropy_model")]
    pub entropy_model: FitModel,
}

fn default_entropy_model() -> FitModel {
    FitModel::Power
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSection {
    pub left: Component,
    pub right: Component,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub input: Option<PathBuf>,
    pub column: Option<String>,
    pub model: Option<FitModel>,
}

/// Full experiment description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Degree sequence, e.g. `"2|repeat"` or `"2,3|periodic"`.
    pub degrees: String,
    pub lamp: LampKind,
    pub n_max: u64,
    pub trajectories: u64,
    pub grid: Option<Vec<u64>>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub out: PathBuf,
    pub tail_trials: u64,
    pub tail_n_max: Option<u64>,
    pub fit_window: Option<[u64; 2]>,
    pub speed_model: FitModel,
    pub entropy_model: FitModel,
    /// Speed/entropy target to validate, `power:beta=…,delta=…,gamma=…`.
    pub target: Option<String>,
    pub write_observables: bool,
    pub acceptance: Acceptance,
    pub design: Option<DesignSection>,
    pub product: Option<ProductSection>,
    pub fit: Option<FitSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            degrees: "2|repeat".into(),
            lamp: LampKind::Integers,
            n_max: 1 << 12,
            trajectories: 100,
            grid: None,
            seed: 1,
            threads: 0,
            out: PathBuf::from("out"),
            tail_trials: 100_000,
            tail_n_max: None,
            fit_window: None,
            speed_model: FitModel::Power,
            entropy_model: FitModel::Power,
            target: None,
            write_observables: false,
            acceptance: Acceptance::default(),
            design: None,
            product: None,
            fit: None,
        }
    }
}

pub const PRESETS: [&str; 5] =
    ["thm2_clause1_baseline", "thm2_clause2_baseline", "z2_note", "product_clause1_clause2", "design_g06"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentConfig {
            name: name.to_string(),
            n_max: 1 << 18,
            trajectories: 1000,
            out: PathBuf::from("out").join(name),
            ..Default::default()
        };
        let speed = Some([0.67, 0.83]);
        let cfg = match name {
            "thm2_clause1_baseline" => ExperimentConfig {
                entropy_model: FitModel::LogCorrected,
                acceptance: Acceptance {
                    speed_exponent: speed,
                    entropy_exponent: Some([0.4, 0.6]),
                    sandwich_factor: Some(8.0),
                    sandwich_range: Some([1 << 6, 1 << 16]),
                    ..Default::default()
                },
                ..base
            },
            "thm2_clause2_baseline" => ExperimentConfig {
                lamp: LampKind::Lamplighter,
                target: Some("power:beta=0.75,delta=0.75,gamma=0.8".into()),
                acceptance: Acceptance {
                    speed_exponent: speed,
                    entropy_exponent: Some([0.67, 0.83]),
                    ratio_slope: Some([-0.05, 0.05]),
                    ..Default::default()
                },
                ..base
            },
            "z2_note" => ExperimentConfig {
                lamp: LampKind::Z2,
                acceptance: Acceptance { entropy_exponent: Some([0.4, 0.6]), ..Default::default() },
                ..base
            },
            "product_clause1_clause2" => ExperimentConfig {
                product: Some(ProductSection {
                    left: Component {
                        degrees: "2|repeat".into(),
                        lamp: LampKind::Integers,
                        entropy_model: FitModel::LogCorrected,
                    },
                    right: Component {
                        degrees: "2|repeat".into(),
                        lamp: LampKind::Lamplighter,
                        entropy_model: FitModel::Power,
                    },
                }),
                acceptance: Acceptance { product_tolerance: Some(0.05), ..Default::default() },
                ..base
            },
            "design_g06" => ExperimentConfig {
                n_max: 1 << 16,
                design: Some(DesignSection { g_exponent: Some(0.6), ..Default::default() }),
                acceptance: Acceptance { tail_exponent: Some([-0.5, -0.3]), ..Default::default() },
                ..base
            },
            other => return Err(ExperimentError::UnknownPreset(other.to_string())),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n_max < 1 {
            return bad("n_max must be at least 1".into());
        }
        if self.trajectories < 1 {
            return bad("trajectories must be at least 1".into());
        }
        if self.tail_trials < 1 {
            return bad("tail_trials must be at least 1".into());
        }
        if let Some(g) = &self.grid {
            if g.iter().any(|&n| n < 1 || n > self.n_max) {
                return bad(format!("grid must lie in [1, {}]", self.n_max));
            }
        }
        if let Some([lo, hi]) = self.fit_window {
            if lo > hi {
                return bad("fit_window must be increasing".into());
            }
        }
        self.degree_sequence()?;
        Ok(())
    }

    pub fn degree_sequence(&self) -> Result<DegreeSequence> {
        Ok(self.degrees.parse()?)
    }

    pub fn walk_grid(&self) -> Vec<u64> {
        match &self.grid {
            Some(g) => {
                let mut g = g.clone();
                g.sort_unstable();
                g.dedup();
                g
            }
            None => default_grid(self.n_max),
        }
    }

    pub fn fit_window(&self) -> (u64, u64) {
        match self.fit_window {
            Some([lo, hi]) => (lo, hi),
            None => (256.min(self.n_max), self.n_max),
        }
    }

    pub fn tail_horizon(&self) -> u64 {
        self.tail_n_max.unwrap_or(self.n_max)
    }
}

/// Outcome of one acceptance band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub band: Band,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, band: Band) -> Self {
        Check { name: name.into(), value, band, pass: value >= band[0] && value <= band[1] }
    }
}

/// Result of a pipeline run.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Value,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Which parts of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub tail: bool,
    pub walk: bool,
    pub bounds: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { tail: true, walk: true, bounds: true };
    pub const TAIL: Stages = Stages { tail: true, walk: false, bounds: false };
    pub const WALK: Stages = Stages { tail: false, walk: true, bounds: false };
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
        Ok(Output { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let io = |source| ExperimentError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, mut summary: Value, checks: Vec<Check>) -> Result<Report> {
        let pass = checks.iter().all(|c| c.pass);
        summary["checks"] = json!(checks);
        summary["verdict"] = json!(if pass { "pass" } else { "fail" });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        self.write("summary.json", |w| writeln!(w, "{text}"))?;
        Ok(Report { summary, checks, files: self.files })
    }
}

fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn grid_series(grid: &[u64], ys: &[f64]) -> Vec<(f64, f64)> {
    grid.iter().zip(ys).filter(|(n, _)| **n >= 1).map(|(n, y)| (*n as f64, *y)).collect()
}

fn fit_in(grid: &[u64], ys: &[f64], window: (u64, u64), model: FitModel) -> Result<FitResult<f64>> {
    Ok(fit_exponent(&grid_series(grid, ys), (window.0 as f64, window.1 as f64), model)?)
}

/// Monomorphizes `$body` for the lamp group selected by `$kind`.
macro_rules! with_lamp {
    ($kind:expr, |$g:ident| $body:expr) => {
        match $kind {
            LampKind::Integers => {
                let $g = Integers::default();
                $body
            }
            LampKind::Z2 => {
                let $g = Z2::default();
                $body
            }
            LampKind::Lamplighter => {
                let $g = Lamplighter::default();
                $body
            }
        }
    };
}

fn batch_for(
    cfg: &ExperimentConfig,
    m: &DegreeSequence,
    lamp: &LampFunctions<f64>,
    grid: &[u64],
) -> Result<(BatchSummary<f64>, Vec<TrajectoryStats<f64>>)> {
    Ok(with_lamp!(cfg.lamp, |g| run_batch(
        &g,
        m,
        lamp,
        cfg.n_max,
        grid,
        cfg.trajectories,
        cfg.seed,
        stream::TRAJECTORY
    ))?)
}

fn fit_json(f: &FitResult<f64>) -> Value {
    json!({
        "exponent": f.exponent,
        "intercept": f.intercept,
        "r_squared": f.r_squared,
        "window": [f.window.0, f.window.1],
        "points": f.points,
        "model": f.model,
    })
}

/// Runs the selected stages: return tail, trajectories with proxies and
/// fits, and the bound curves.
pub fn run_experiment(cfg: &ExperimentConfig, stages: Stages) -> Result<Report> {
    cfg.validate()?;
    with_pool(cfg.threads, || run_experiment_inner(cfg, stages))?
}

fn run_experiment_inner(cfg: &ExperimentConfig, stages: Stages) -> Result<Report> {
    let m = cfg.degree_sequence()?;
    let mut out = Output::new(&cfg.out)?;
    let mut summary = json!({ "name": cfg.name, "config": cfg, "degree_sequence": m.to_string() });
    let mut checks = Vec::new();
    let window = cfg.fit_window();
    let lamp = LampFunctions::<f64>::for_kind(cfg.lamp);

    let mut tail: Option<ReturnTailEstimate<f64>> = None;
    if stages.tail || stages.bounds {
        let horizon = if stages.bounds { cfg.tail_horizon().max(cfg.n_max) } else { cfg.tail_horizon() };
        let t = estimate_return_tail::<f64>(&m, horizon, cfg.tail_trials, cfg.seed)?;
        out.write("tail.csv", |w| t.write_csv(w))?;
        let fit = tail_fit(&t, (window.0, window.1.min(horizon))).ok();
        summary["tail"] = json!({
            "trials": t.trials,
            "n_max": horizon,
            "p_at_n_max": t.p_at(horizon)?,
            "fit": fit.as_ref().map(fit_json),
        });
        if let (Some(band), Some(f)) = (cfg.acceptance.tail_exponent, &fit) {
            checks.push(Check::new("tail_exponent", f.exponent, band));
        }
        tail = Some(t);
    }

    let mut batch = None;
    if stages.walk || stages.bounds {
        let grid = cfg.walk_grid();
        let (summary_b, stats) = batch_for(cfg, &m, &lamp, &grid)?;
        out.write("walk.csv", |w| summary_b.write_csv(w))?;
        out.write("lamp.csv", |w| lamp.write_csv(w, 64))?;
        if cfg.write_observables {
            out.write("observables.txt", |w| {
                for (i, t) in stats.iter().enumerate() {
                    for (n, d) in t.n_grid.iter().zip(&t.observables) {
                        writeln!(w, "{n} {i} {d:016x}")?;
                    }
                }
                Ok(())
            })?;
        }
        let speed = fit_in(&grid, &summary_b.mean_d, window, cfg.speed_model)?;
        let entropy = fit_in(&grid, &summary_b.mean_proxy_h, window, cfg.entropy_model)?;
        let ratio_series: Vec<f64> =
            summary_b.mean_d.iter().zip(&summary_b.mean_proxy_h).map(|(d, h)| d / h).collect();
        let ratio = fit_in(&grid, &ratio_series, window, FitModel::Power).ok();
        summary["walk"] = json!({
            "trajectories": cfg.trajectories,
            "n_max": cfg.n_max,
            "speed_fit": fit_json(&speed),
            "entropy_proxy_fit": fit_json(&entropy),
            "ratio_fit": ratio.as_ref().map(fit_json),
            "lamp_extension": format!("{:?}", lamp.extension()),
            "plug_in_entropy": summary_b.n_grid.iter().zip(&summary_b.plug_in).map(|(n, e)| json!({
                "n": n, "naive": e.naive, "miller_madow": e.miller_madow,
                "std_error": e.std_error, "distinct": e.distinct,
            })).collect::<Vec<_>>(),
        });
        if let Some(b) = cfg.acceptance.speed_exponent {
            checks.push(Check::new("speed_exponent", speed.exponent, b));
        }
        if let Some(b) = cfg.acceptance.entropy_exponent {
            checks.push(Check::new("entropy_exponent", entropy.exponent, b));
        }
        if let (Some(b), Some(r)) = (cfg.acceptance.ratio_slope, &ratio) {
            checks.push(Check::new("ratio_slope", r.exponent, b));
        }
        batch = Some(summary_b);
    }

    if stages.bounds {
        let (t, b) = (tail.as_ref().unwrap(), batch.as_ref().unwrap());
        let report = bounds_report(t, &lamp, &b.n_grid)?;
        out.write("bounds.csv", |w| report.write_csv(w))?;
        summary["bounds"] = json!({ "provenance": report.provenance });
        if let Some(c) = cfg.acceptance.sandwich_factor {
            let range = cfg.acceptance.sandwich_range.unwrap_or([1, cfg.n_max]);
            checks.extend(sandwich_checks(&report, b, c, range));
        }
    }

    if let Some(spec) = &cfg.target {
        let spec: TargetSpec<f64> = spec.parse()?;
        let check = validate_target(&spec, &geometric_grid(cfg.n_max as f64, 2), 2.0);
        summary["target"] = json!({
            "ok": check.ok(),
            "violations": check.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "flagged_points": check.flagged().count(),
            "band_slack": check.band_slack,
        });
    }

    out.finish(summary, checks)
}

/// Worst-case position of the proxies inside the bound curves, as a
/// `[lower / C, C · upper]` check per quantity.
pub fn sandwich_checks(report: &BoundsReport<f64>, batch: &BatchSummary<f64>, c: f64, range: [u64; 2]) -> Vec<Check> {
    let mut speed = f64::INFINITY;
    let mut entropy = f64::INFINITY;
    for (row, (d, h)) in report.rows.iter().zip(batch.mean_d.iter().zip(&batch.mean_proxy_h)) {
        if row.n < range[0] || row.n > range[1] {
            continue;
        }
        // slack needed: both ratios must be ≤ C
        let s = (row.speed_lower / d).max(d / row.speed_upper);
        let e = (row.entropy_lower / h).max(h / row.entropy_upper);
        speed = speed.min(1.0 / s);
        entropy = entropy.min(1.0 / e);
    }
    vec![
        Check::new("speed_sandwich_margin", speed, [1.0 / c, f64::INFINITY]),
        Check::new("entropy_sandwich_margin", entropy, [1.0 / c, f64::INFINITY]),
    ]
}

/// Grid-wise product observables of a batch of product trajectories.
#[derive(Debug, Clone)]
pub struct ProductSummary {
    pub n_grid: Vec<u64>,
    pub mean_d: [Vec<f64>; 2],
    pub mean_h: [Vec<f64>; 2],
    pub mean_d_sum: Vec<f64>,
    pub mean_d_max: Vec<f64>,
    pub mean_h_sum: Vec<f64>,
    pub distinct_joint: Vec<u64>,
}

impl ProductSummary {
    fn from_trajectories(grid: &[u64], trajs: &[ProductTrajectory<f64>]) -> Self {
        let k = trajs.len() as f64;
        let avg = |f: &dyn Fn(&ProductTrajectory<f64>, usize) -> f64| -> Vec<f64> {
            (0..grid.len()).map(|j| trajs.iter().map(|t| f(t, j)).sum::<f64>() / k).collect()
        };
        ProductSummary {
            n_grid: grid.to_vec(),
            mean_d: [avg(&|t, j| t.left.displacement[j]), avg(&|t, j| t.right.displacement[j])],
            mean_h: [avg(&|t, j| t.left.entropy_proxy[j]), avg(&|t, j| t.right.entropy_proxy[j])],
            mean_d_sum: avg(&|t, j| t.sum_displacement(j)),
            mean_d_max: avg(&|t, j| t.max_displacement(j)),
            mean_h_sum: avg(&|t, j| t.sum_entropy_proxy(j)),
            distinct_joint: (0..grid.len())
                .map(|j| plug_in_entropy::<f64, _>(trajs.iter().map(|t| t.joint_observable(j))).distinct)
                .collect(),
        }
    }

    /// CSV with header
    /// `n,mean_D_left,mean_D_right,mean_D_sum,mean_D_max,mean_H_left,mean_H_right,mean_H_sum,distinct_joint`.
    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "n,mean_D_left,mean_D_right,mean_D_sum,mean_D_max,mean_H_left,mean_H_right,mean_H_sum,distinct_joint")?;
        for j in 0..self.n_grid.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.n_grid[j],
                self.mean_d[0][j],
                self.mean_d[1][j],
                self.mean_d_sum[j],
                self.mean_d_max[j],
                self.mean_h[0][j],
                self.mean_h[1][j],
                self.mean_h_sum[j],
                self.distinct_joint[j]
            )?;
        }
        Ok(())
    }
}

/// Runs the product walk of two components with independent steps.
pub fn run_product_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    with_pool(cfg.threads, || run_product_inner(cfg))?
}

fn product_batch(cfg: &ExperimentConfig, left: &Component, right: &Component, grid: &[u64]) -> Result<Vec<ProductTrajectory<f64>>> {
    use rayon::prelude::*;
    let ma: DegreeSequence = left.degrees.parse()?;
    let mb: DegreeSequence = right.degrees.parse()?;
    let la = LampFunctions::<f64>::for_kind(left.lamp);
    let lb = LampFunctions::<f64>::for_kind(right.lamp);
    let out: std::result::Result<Vec<_>, WalkError> = with_lamp!(left.lamp, |ga| with_lamp!(right.lamp, |gb| {
        (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| run_product_trajectory((&ga, &ma, &la), (&gb, &mb, &lb), cfg.n_max, grid, cfg.seed, i))
            .collect()
    }));
    Ok(out?)
}

fn run_product_inner(cfg: &ExperimentConfig) -> Result<Report> {
    let section = cfg
        .product
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("product run needs a [product] section".into()))?;
    let grid = cfg.walk_grid();
    let window = cfg.fit_window();
    let trajs = product_batch(cfg, &section.left, &section.right, &grid)?;
    let s = ProductSummary::from_trajectories(&grid, &trajs);
    let mut out = Output::new(&cfg.out)?;
    out.write("product.csv", |w| s.write_csv(w))?;

    let fit = |ys: &[f64], model| fit_in(&grid, ys, window, model);
    let speed = [fit(&s.mean_d[0], FitModel::Power)?, fit(&s.mean_d[1], FitModel::Power)?];
    let entropy = [fit(&s.mean_h[0], FitModel::Power)?, fit(&s.mean_h[1], FitModel::Power)?];
    let speed_sum = fit(&s.mean_d_sum, FitModel::Power)?;
    let speed_max = fit(&s.mean_d_max, FitModel::Power)?;
    let entropy_sum = fit(&s.mean_h_sum, FitModel::Power)?;
    let left_entropy_model = fit(&s.mean_h[0], section.left.entropy_model)?;
    let right_entropy_model = fit(&s.mean_h[1], section.right.entropy_model)?;

    let max_speed = speed[0].exponent.max(speed[1].exponent);
    let max_entropy = entropy[0].exponent.max(entropy[1].exponent);
    // max(D_A, D_B) ≤ D_A + D_B ≤ 2 max(D_A, D_B) holds per trajectory
    let sandwich_ok = trajs.iter().all(|t| {
        (0..grid.len()).all(|j| {
            let (sum, max) = (t.sum_displacement(j), t.max_displacement(j));
            max <= sum && sum <= 2.0 * max
        })
    });
    let mut checks = vec![Check::new("max_sum_sandwich", if sandwich_ok { 1.0 } else { 0.0 }, [1.0, 1.0])];
    if let Some(tol) = cfg.acceptance.product_tolerance {
        checks.push(Check::new("product_speed_minus_max", speed_sum.exponent - max_speed, [-tol, tol]));
        checks.push(Check::new("product_entropy_minus_max", entropy_sum.exponent - max_entropy, [-tol, tol]));
    }
    let summary = json!({
        "name": cfg.name,
        "config": cfg,
        "product": {
            "trajectories": cfg.trajectories,
            "left": { "speed_fit": fit_json(&speed[0]), "entropy_proxy_fit": fit_json(&entropy[0]),
                      "entropy_proxy_fit_model": fit_json(&left_entropy_model) },
            "right": { "speed_fit": fit_json(&speed[1]), "entropy_proxy_fit": fit_json(&entropy[1]),
                       "entropy_proxy_fit_model": fit_json(&right_entropy_model) },
            "sum_speed_fit": fit_json(&speed_sum),
            "max_speed_fit": fit_json(&speed_max),
            "sum_entropy_fit": fit_json(&entropy_sum),
            "componentwise_max": { "speed": max_speed, "entropy": max_entropy },
        },
    });
    out.finish(summary, checks)
}

/// Designs a degree sequence for the `[design]` section target.
pub fn run_design(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    with_pool(cfg.threads, || run_design_inner(cfg))?
}

fn design_target(section: &DesignSection) -> Result<TargetFn<f64>> {
    match (section.g_exponent, &section.target, &section.g_table) {
        (Some(e), None, None) => Ok(TargetFn::power(e)),
        (None, Some(t), None) => Ok(g_of(&t.parse::<TargetSpec<f64>>()?.f)),
        (None, None, Some(p)) => Ok(TargetFn::read_table(p)?),
        _ => Err(ExperimentError::Config(
            "[design] needs exactly one of g_exponent, target, g_table".into(),
        )),
    }
}

fn run_design_inner(cfg: &ExperimentConfig) -> Result<Report> {
    let section = cfg.design.clone().unwrap_or_default();
    let target = design_target(&section)?;
    let n_max = cfg.tail_horizon();
    let dcfg = DesignerConfig {
        m_star: section.m_star,
        palette: section.palette.clone(),
        n_max,
        trials: section.trials,
        band: section.band,
        gamma: section.gamma,
        levels: section.levels,
        fit_window: Some((cfg.fit_window().0, n_max)),
        seed: cfg.seed,
    };
    let (design, reached) = match design_degree_sequence(&target, &dcfg) {
        Ok(d) => (d, true),
        Err(DesignError::Unreachable { best, .. }) => (*best, false),
        Err(e) => return Err(e.into()),
    };
    let mut out = Output::new(&cfg.out)?;
    out.write("design.csv", |w| design.write_csv(w))?;
    let mut checks = vec![Check::new("design_band", if reached { 1.0 } else { 0.0 }, [1.0, 1.0])];
    if let Some(b) = cfg.acceptance.tail_exponent {
        checks.push(Check::new("tail_exponent", design.tail_fit.exponent, b));
    }
    let summary = json!({
        "name": cfg.name,
        "config": cfg,
        "target_g": target.to_string(),
        "design": design,
    });
    out.finish(summary, checks)
}

/// Fits one column of a CSV file against its first column.
pub fn fit_csv(path: &Path, column: &str, window: (f64, f64), model: FitModel) -> Result<FitResult<f64>> {
    let bad = |msg: String| ExperimentError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => ExperimentError::Io { path: path.to_path_buf(), source },
        other => bad(format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| ExperimentError::Config(format!("column {column:?} not in {:?}", header.iter().collect::<Vec<_>>())))?;
    let mut series = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let parse = |k: usize| -> Result<f64> {
            row.get(k).and_then(|c| c.parse::<f64>().ok()).ok_or_else(|| bad(format!("bad row {}", i + 2)))
        };
        series.push((parse(0)?, parse(col)?));
    }
    Ok(fit_exponent(&series, window, model)?)
}

/// Fits a CSV column and writes the result to `summary.json`.
pub fn run_fit(cfg: &ExperimentConfig) -> Result<Report> {
    let section = cfg.fit.clone().unwrap_or_default();
    let input = section
        .input
        .ok_or_else(|| ExperimentError::Config("fit needs an input file".into()))?;
    let column = section.column.unwrap_or_else(|| "mean_D".into());
    let model = section.model.unwrap_or(FitModel::Power);
    let window = cfg.fit_window();
    let fit = fit_csv(&input, &column, (window.0 as f64, window.1 as f64), model)?;
    let mut out = Output::new(&cfg.out)?;
    out.write("fit.csv", |w| {
        writeln!(w, "column,model,exponent,intercept,r_squared,window_lo,window_hi,points")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            column,
            serde_json::to_value(model).unwrap().as_str().unwrap(),
            fit.exponent,
            fit.intercept,
            fit.r_squared,
            fit.window.0,
            fit.window.1,
            fit.points
        )
    })?;
    let mut checks = Vec::new();
    if let Some(b) = cfg.acceptance.speed_exponent {
        checks.push(Check::new("exponent", fit.exponent, b));
    }
    let summary = json!({ "name": cfg.name, "input": input, "column": column, "fit": fit_json(&fit) });
    out.finish(summary, checks)
}

/// Runs a preset end to end: design presets run the designer, product
/// presets the product walk, everything else the full pipeline.
pub fn run_config(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.design.is_some() {
        run_design(cfg)
    } else if cfg.product.is_some() {
        run_product_experiment(cfg)
    } else {
        run_experiment(cfg, Stages::ALL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(matches!(ExperimentConfig::preset("nope"), Err(ExperimentError::UnknownPreset(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::preset("product_clause1_clause2").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ExperimentConfig::from_toml("n_maxx = 3").is_err());
        assert!(ExperimentConfig::from_toml("lamp = \"Q\"").is_err());
        let cfg = ExperimentConfig::from_toml("lamp = \"Z2wrZ\"\nn_max = 64\nseed = 9").unwrap();
        assert_eq!(cfg.lamp, LampKind::Lamplighter);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cfg = ExperimentConfig { trajectories: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { grid: Some(vec![0, 4]), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { degrees: "1|repeat".into(), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_pipeline_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            n_max: 1 << 10,
            trajectories: 8,
            tail_trials: 500,
            out: dir.path().to_path_buf(),
            threads: 1,
            acceptance: Acceptance { speed_exponent: Some([0.0, 2.0]), ..Default::default() },
            ..Default::default()
        };
        let r = run_experiment(&cfg, Stages::ALL).unwrap();
        assert!(r.passed());
        for f in ["tail.csv", "walk.csv", "bounds.csv", "lamp.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let walk = fs::read_to_string(dir.path().join("walk.csv")).unwrap();
        assert!(walk.starts_with("n,mean_D,se_D,mean_proxy_H,se_proxy_H,distinct_observables\n"));
        let fit = fit_csv(&dir.path().join("walk.csv"), "mean_D", (16.0, 1024.0), FitModel::Power).unwrap();
        assert!(fit.exponent > 0.3);
    }
}

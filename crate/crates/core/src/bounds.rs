//! Target growth functions, their admissibility checks, and the speed and
//! entropy bound curves built from a measured return tail.
//!
//! With `p(n) ≤ P(T > n)` and `q(n) = Σ_{i ≤ n} P(T > i)`:
//!
//! ```text
//! speed   n·p·λ̲(1/p)  ≲ E|X_n| ≲ q·λ̄(n/q)
//! entropy n·p·h(1/p)  ≲ H(X_n) ≲ q·(h(n/q) + log(n+1))
//! ```

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::lamp::LampFunctions;
use crate::num::Real;
use crate::orbit::{cumulative_q, OrbitError, ReturnTailEstimate};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("cannot parse target {0:?}")]
    Parse(String),
    #[error("table {path}: {msg}")]
    Table { path: String, msg: String },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("input lengths differ")]
    Shape,
}

/// A positive function on `[1, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetFn<T> {
    Power { exponent: T },
    /// Sorted `(n, value)` pairs, interpolated linearly in log-log scale.
    Table { points: Vec<(T, T)> },
}

impl<T: Real> TargetFn<T> {
    pub fn power(exponent: T) -> Self {
        TargetFn::Power { exponent }
    }

    /// `None` outside the tabulated range.
    pub fn eval(&self, n: T) -> Option<T> {
        match self {
            TargetFn::Power { exponent } => Some(n.powf(*exponent)),
            TargetFn::Table { points } => {
                let first = points.first()?;
                let last = points.last()?;
                if n < first.0 || n > last.0 {
                    return None;
                }
                let i = points.partition_point(|p| p.0 <= n);
                if i == points.len() {
                    return Some(last.1);
                }
                let (a, b) = (points[i - 1], points[i]);
                let t = (n.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
                Some((a.1.ln() * (T::one() - t) + b.1.ln() * t).exp())
            }
        }
    }

    /// Parses a two-column `n value` table (comma or whitespace separated,
    /// `#` comments, optional header line).
    pub fn parse_table(text: &str, origin: &str) -> Result<Self, BoundsError> {
        let err = |msg: String| BoundsError::Table { path: origin.to_string(), msg };
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(err(format!("line {}: expected two columns", lineno + 1)));
            }
            let (Ok(n), Ok(v)) = (cols[0].parse::<f64>(), cols[1].parse::<f64>()) else {
                if points.is_empty() {
                    continue; // header
                }
                return Err(err(format!("line {}: not a number", lineno + 1)));
            };
            if !(n > 0.0 && v > 0.0) {
                return Err(err(format!("line {}: values must be positive", lineno + 1)));
            }
            points.push((T::c(n), T::c(v)));
        }
        if points.len() < 2 {
            return Err(err("need at least two rows".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(err("first column must be strictly increasing".into()));
        }
        Ok(TargetFn::Table { points })
    }

    pub fn read_table(path: &Path) -> Result<Self, BoundsError> {
        let text = std::fs::read_to_string(path).map_err(|e| BoundsError::Table {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse_table(&text, &path.display().to_string())
    }
}

impl<T: Real> fmt::Display for TargetFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetFn::Power { exponent } => write!(f, "n^{exponent}"),
            TargetFn::Table { points } => write!(f, "table[{} rows]", points.len()),
        }
    }
}

/// `g(n) = f(n)² / n`.
pub fn g_of<T: Real>(f: &TargetFn<T>) -> TargetFn<T> {
    match f {
        TargetFn::Power { exponent } => TargetFn::Power { exponent: T::c(2.0) * *exponent - T::one() },
        TargetFn::Table { points } => {
            TargetFn::Table { points: points.iter().map(|&(n, v)| (n, v * v / n)).collect() }
        }
    }
}

/// Speed target `f`, entropy target `h` and the upper log-Lipschitz exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec<T> {
    pub f: TargetFn<T>,
    pub h: TargetFn<T>,
    pub gamma: T,
}

impl<T: Real> TargetSpec<T> {
    pub fn g(&self) -> TargetFn<T> {
        g_of(&self.f)
    }
}

impl<T: Real> FromStr for TargetSpec<T> {
    type Err = BoundsError;

    /// `power:beta=0.8,delta=0.75,gamma=0.85`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BoundsError::Parse(s.to_string());
        let body = s.trim().strip_prefix("power:").ok_or_else(bad)?;
        let (mut beta, mut delta, mut gamma) = (None, None, None);
        for part in body.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "beta" => beta = Some(v),
                "delta" => delta = Some(v),
                "gamma" => gamma = Some(v),
                _ => return Err(bad()),
            }
        }
        Ok(TargetSpec {
            f: TargetFn::power(T::c(beta.ok_or_else(bad)?)),
            h: TargetFn::power(T::c(delta.ok_or_else(bad)?)),
            gamma: T::c(gamma.ok_or_else(bad)?),
        })
    }
}

/// Points `2^{i/per_octave}` from 1 to `n_max`.
pub fn geometric_grid<T: Real>(n_max: T, per_octave: u32) -> Vec<T> {
    let steps = (n_max.log2() * T::from_count(per_octave as u64)).floor().to_u64().unwrap_or(0);
    (0..=steps)
        .map(|i| T::c(2.0).powf(T::from_count(i) / T::from_count(per_octave as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    GammaRange { gamma: f64 },
    Normalization { which: &'static str, value: f64 },
    NotEvaluable { which: &'static str, n: f64 },
    /// `f(an) < a^c f(n)`; `ratio = f(an) / (a^c f(n))`.
    LowerLipschitz { which: &'static str, n: f64, a: f64, ratio: f64 },
    /// `f(an) > a^γ f(n)`; `ratio = f(an) / (a^γ f(n))`.
    UpperLipschitz { which: &'static str, n: f64, a: f64, ratio: f64 },
    /// `h(n) / f(n)` above the slack.
    EntropyAboveSpeed { n: f64, ratio: f64 },
    /// `f(n) / √(n h(n) / log(n+1))` above the slack.
    SpeedAboveEntropyBound { n: f64, ratio: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GammaRange { gamma } => write!(f, "gamma = {gamma} outside [3/4, 1)"),
            Violation::Normalization { which, value } => write!(f, "{which}(1) = {value}, expected 1"),
            Violation::NotEvaluable { which, n } => write!(f, "{which} not evaluable at n = {n}"),
            Violation::LowerLipschitz { which, n, a, ratio } => {
                write!(f, "{which}: lower log-Lipschitz bound fails at n = {n}, a = {a} (ratio {ratio:.4})")
            }
            Violation::UpperLipschitz { which, n, a, ratio } => {
                write!(f, "{which}: upper log-Lipschitz bound fails at n = {n}, a = {a} (ratio {ratio:.4})")
            }
            Violation::EntropyAboveSpeed { n, ratio } => write!(f, "h/f = {ratio:.4} at n = {n}"),
            Violation::SpeedAboveEntropyBound { n, ratio } => {
                write!(f, "f / sqrt(n h / log(n+1)) = {ratio:.4} at n = {n}")
            }
        }
    }
}

/// Ratios of the speed-entropy relation at one grid point; values above 1
/// exceed the relation with constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandMargin {
    pub n: f64,
    pub entropy_over_speed: f64,
    pub speed_over_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetCheck {
    pub violations: Vec<Violation>,
    pub margins: Vec<BandMargin>,
    pub band_slack: f64,
}

impl TargetCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Grid points where the relation holds only thanks to the slack.
    pub fn flagged(&self) -> impl Iterator<Item = &BandMargin> {
        self.margins.iter().filter(|m| m.entropy_over_speed > 1.0 || m.speed_over_bound > 1.0)
    }
}

const REL_TOL: f64 = 1e-9;

/// `a^lo f(n) ≤ f(an) ≤ a^hi f(n)` over every pair of grid points.
pub fn check_log_lipschitz<T: Real>(
    which: &'static str,
    f: &TargetFn<T>,
    lo: T,
    hi: T,
    grid: &[T],
) -> Vec<Violation> {
    let vals: Vec<Option<T>> = grid.iter().map(|&n| f.eval(n)).collect();
    let mut out = Vec::new();
    for (i, &n) in grid.iter().enumerate() {
        let Some(fi) = vals[i] else {
            out.push(Violation::NotEvaluable { which, n: n.to_f64_lossy() });
            continue;
        };
        for (j, &an) in grid.iter().enumerate().skip(i + 1) {
            let Some(fj) = vals[j] else { continue };
            let a = an / n;
            let lower = fj / (a.powf(lo) * fi);
            let upper = fj / (a.powf(hi) * fi);
            if lower.to_f64_lossy() < 1.0 - REL_TOL {
                out.push(Violation::LowerLipschitz {
                    which,
                    n: n.to_f64_lossy(),
                    a: a.to_f64_lossy(),
                    ratio: lower.to_f64_lossy(),
                });
            }
            if upper.to_f64_lossy() > 1.0 + REL_TOL {
                out.push(Violation::UpperLipschitz {
                    which,
                    n: n.to_f64_lossy(),
                    a: a.to_f64_lossy(),
                    ratio: upper.to_f64_lossy(),
                });
            }
        }
    }
    out
}

/// Checks normalization, both log-Lipschitz windows and the speed-entropy
/// relation `h ≤ f ≤ √(n h / log(n+1))` (constant 1, violations reported
/// only beyond `band_slack`).
pub fn validate_target<T: Real>(spec: &TargetSpec<T>, grid: &[T], band_slack: T) -> TargetCheck {
    let mut violations = Vec::new();
    let gamma = spec.gamma.to_f64_lossy();
    if !(0.75..1.0).contains(&gamma) {
        violations.push(Violation::GammaRange { gamma });
    }
    for (which, func) in [("f", &spec.f), ("h", &spec.h)] {
        match func.eval(T::one()) {
            Some(v) if (v - T::one()).abs().to_f64_lossy() <= REL_TOL => {}
            Some(v) => violations.push(Violation::Normalization { which, value: v.to_f64_lossy() }),
            None => violations.push(Violation::NotEvaluable { which, n: 1.0 }),
        }
        violations.extend(check_log_lipschitz(which, func, T::c(0.75), spec.gamma, grid));
    }
    let mut margins = Vec::new();
    let slack = band_slack.to_f64_lossy();
    for &n in grid {
        let (Some(f), Some(h)) = (spec.f.eval(n), spec.h.eval(n)) else { continue };
        let bound = (n * h / (n + T::one()).ln()).sqrt();
        let m = BandMargin {
            n: n.to_f64_lossy(),
            entropy_over_speed: (h / f).to_f64_lossy(),
            speed_over_bound: (f / bound).to_f64_lossy(),
        };
        if m.entropy_over_speed > slack * (1.0 + REL_TOL) {
            violations.push(Violation::EntropyAboveSpeed { n: m.n, ratio: m.entropy_over_speed });
        }
        if m.speed_over_bound > slack * (1.0 + REL_TOL) {
            violations.push(Violation::SpeedAboveEntropyBound { n: m.n, ratio: m.speed_over_bound });
        }
        margins.push(m);
    }
    TargetCheck { violations, margins, band_slack: slack }
}

/// `a^{1/2} g(n) ≤ g(an) ≤ a^γ g(n)` on the grid.
pub fn check_return_target<T: Real>(g: &TargetFn<T>, gamma: T, grid: &[T]) -> Vec<Violation> {
    check_log_lipschitz("g", g, T::c(0.5), gamma, grid)
}

/// One row of [`BoundsReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsRow<T> {
    pub n: u64,
    pub p: T,
    pub p_ci: (T, T),
    pub q: T,
    pub speed_lower: T,
    pub speed_upper: T,
    pub entropy_lower: T,
    pub entropy_upper: T,
    /// Lamp functions were evaluated beyond their exact horizon.
    pub lamp_extended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport<T> {
    pub rows: Vec<BoundsRow<T>>,
    /// Where `p` and `q` come from.
    pub provenance: String,
}

impl<T: Real> BoundsReport<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "n,p_hat,p_ci_low,p_ci_high,q,speed_lower,speed_upper,entropy_lower,entropy_upper,lamp_extended"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.p,
                r.p_ci.0,
                r.p_ci.1,
                r.q,
                r.speed_lower,
                r.speed_upper,
                r.entropy_lower,
                r.entropy_upper,
                r.lamp_extended
            )?;
        }
        Ok(())
    }
}

/// `n·p·F(1/p)`, taken as 0 when `p = 0`.
fn lower_curve<T: Real>(n: T, p: T, f: impl Fn(T) -> T) -> T {
    if p <= T::zero() {
        T::zero()
    } else {
        n * p * f(T::one() / p)
    }
}

/// Evaluates the four curves from explicit `p` and `q` values.
pub fn bounds_from_curves<T: Real>(
    n_grid: &[u64],
    p: &[T],
    p_ci: &[(T, T)],
    q: &[T],
    lamp: &LampFunctions<T>,
    provenance: &str,
) -> Result<BoundsReport<T>, BoundsError> {
    if p.len() != n_grid.len() || q.len() != n_grid.len() || p_ci.len() != n_grid.len() {
        return Err(BoundsError::Shape);
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (j, &n) in n_grid.iter().enumerate() {
        let nn = T::from_count(n);
        let (pj, qj) = (p[j], q[j]);
        let lam_inf = |x: T| lamp.lambda_inf_at(x).unwrap_or(T::zero());
        let lam_bar = |x: T| lamp.lambda_bar_at(x).unwrap_or(T::zero());
        let h = |x: T| lamp.entropy_at(x).unwrap_or(T::zero());
        let ratio = if qj > T::zero() { nn / qj } else { T::zero() };
        let inv_p = if pj > T::zero() { (T::one() / pj).ceil() } else { T::zero() };
        let lamp_extended = [inv_p, ratio.ceil()]
            .iter()
            .any(|x| !lamp.is_exact(x.to_u64().unwrap_or(u64::MAX)));
        rows.push(BoundsRow {
            n,
            p: pj,
            p_ci: p_ci[j],
            q: qj,
            speed_lower: lower_curve(nn, pj, lam_inf),
            speed_upper: qj * lam_bar(ratio),
            entropy_lower: lower_curve(nn, pj, h),
            entropy_upper: qj * (h(ratio) + (nn + T::one()).ln()),
            lamp_extended,
        });
    }
    Ok(BoundsReport { rows, provenance: provenance.to_string() })
}

/// Bound curves with `p = P̂(T > n)` and `q` its cumulative sum.
pub fn bounds_report<T: Real>(
    tail: &ReturnTailEstimate<T>,
    lamp: &LampFunctions<T>,
    n_grid: &[u64],
) -> Result<BoundsReport<T>, BoundsError> {
    let q_fn = cumulative_q(tail);
    let mut p = Vec::new();
    let mut ci = Vec::new();
    let mut q = Vec::new();
    for &n in n_grid {
        p.push(tail.p_at(n)?);
        ci.push(tail.ci_at(n)?);
        q.push(q_fn.at(n)?);
    }
    let provenance = format!(
        "p = Monte Carlo P(T>n) with 95% Wilson interval, q = cumulative sum of p; {} trials, seed {}",
        tail.trials, tail.seed
    );
    bounds_from_curves(n_grid, &p, &ci, &q, lamp, &provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(beta: f64, delta: f64, gamma: f64) -> TargetSpec<f64> {
        TargetSpec { f: TargetFn::power(beta), h: TargetFn::power(delta), gamma }
    }

    fn grid() -> Vec<f64> {
        geometric_grid((1u64 << 20) as f64, 2)
    }

    #[test]
    fn parse_power_spec() {
        let s: TargetSpec<f64> = "power:beta=0.8,delta=0.75,gamma=0.85".parse().unwrap();
        assert_eq!(s, spec(0.8, 0.75, 0.85));
        assert!("power:beta=0.8".parse::<TargetSpec<f64>>().is_err());
        assert!("linear:beta=1".parse::<TargetSpec<f64>>().is_err());
    }

    #[test]
    fn accepted_example() {
        let r = validate_target(&spec(0.8, 0.75, 0.85), &grid(), 2.0);
        assert!(r.ok(), "{:?}", r.violations);
        assert!(r.flagged().count() > 0);
    }

    #[test]
    fn speed_above_entropy_bound_is_located() {
        let r = validate_target(&spec(0.9, 0.76, 0.95), &grid(), 2.0);
        let failing: Vec<f64> = r
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::SpeedAboveEntropyBound { n, .. } => Some(*n),
                _ => None,
            })
            .collect();
        assert!(!failing.is_empty());
        assert_eq!(*failing.last().unwrap(), (1u64 << 20) as f64);
    }

    #[test]
    fn slow_speed_violates_lower_window() {
        let r = validate_target(&spec(0.7, 0.7, 0.85), &grid(), 2.0);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::LowerLipschitz { which: "f", .. })));
    }

    #[test]
    fn g_examples() {
        let g = g_of(&TargetFn::power(1.0));
        assert_eq!(g.eval(37.0), Some(37.0));
        assert_eq!(g_of(&TargetFn::power(0.5)).eval(1000.0), Some(1.0));
        assert!((g_of(&TargetFn::power(0.75f64)).eval(4.0).unwrap() - 2.0).abs() < 1e-12);
        let table = TargetFn::<f64>::parse_table("n,f\n1 1\n4 8\n", "t").unwrap();
        assert!((g_of(&table).eval(4.0).unwrap() - 16.0).abs() < 1e-12);
        assert!(!check_return_target(&g_of(&TargetFn::power(0.5)), 0.9, &grid()).is_empty());
    }

    #[test]
    fn table_interpolation() {
        let t = TargetFn::<f64>::parse_table("# f\n1 1\n4 2\n16 4\n", "t").unwrap();
        assert!((t.eval(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(t.eval(16.0), Some(4.0));
        assert_eq!(t.eval(17.0), None);
        assert!(TargetFn::<f64>::parse_table("1 1\n1 2\n", "t").is_err());
        assert!(TargetFn::<f64>::parse_table("1 1 3\n", "t").is_err());
    }

    #[test]
    fn degenerate_tail_gives_plain_lower_bound() {
        let lamp = LampFunctions::<f64>::integers(64);
        let grid = [1u64, 2, 8, 32];
        let ones = vec![1.0; 4];
        let q: Vec<f64> = grid.iter().map(|&n| n as f64 + 1.0).collect();
        let ci = vec![(1.0, 1.0); 4];
        let r = bounds_from_curves(&grid, &ones, &ci, &q, &lamp, "test").unwrap();
        for row in &r.rows {
            assert!((row.speed_lower - row.n as f64 * lamp.lambda_inf(1)).abs() < 1e-12);
            assert!(row.entropy_upper >= row.entropy_lower);
        }
    }

    fn closed_form_accepts(beta: f64, delta: f64, gamma: f64, n_max: f64) -> Option<bool> {
        // decisions within this distance of a threshold are left to the grid
        let eps: f64 = 0.01;
        let near = |x: f64| x.abs() < eps;
        let band_exp = beta - (1.0 + delta) / 2.0;
        let sup_band = (0..=20_000)
            .map(|i| {
                let x = n_max.ln() * i as f64 / 20_000.0;
                band_exp * x + 0.5 * (x.exp() + 1.0).ln().ln()
            })
            .fold(f64::MIN, f64::max);
        let ent = (delta - beta) * n_max.ln();
        let checks = [beta - 0.75, delta - 0.75, gamma - beta, gamma - delta];
        if checks.iter().any(|c| near(*c)) || near(sup_band - 2f64.ln()) || near(ent - 2f64.ln()) {
            return None;
        }
        Some(checks.iter().all(|c| *c > 0.0) && sup_band <= 2f64.ln() && ent <= 2f64.ln())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn validator_matches_closed_form(beta in 0.65f64..1.0, delta in 0.65f64..1.0, gamma in 0.76f64..0.99) {
            let grid = geometric_grid((1u64 << 20) as f64, 4);
            let expected = closed_form_accepts(beta, delta, gamma, (1u64 << 20) as f64);
            prop_assume!(expected.is_some());
            let r = validate_target(&spec(beta, delta, gamma), &grid, 2.0);
            prop_assert_eq!(r.ok(), expected.unwrap(), "{:?}", r.violations.first());
        }

        #[test]
        fn admissible_speed_gives_admissible_return_target(beta in 0.75f64..0.99, gamma in 0.76f64..0.99) {
            prop_assume!(beta <= gamma);
            let grid = geometric_grid((1u64 << 20) as f64, 2);
            let f = TargetFn::power(beta);
            prop_assert!(check_log_lipschitz("f", &f, 0.75, gamma, &grid).is_empty());
            prop_assert!(check_return_target(&g_of(&f), gamma, &grid).is_empty());
        }

        #[test]
        fn larger_p_never_lowers_the_lower_curves(
            kind in 0usize..3,
            base in proptest::collection::vec(0.001f64..1.0, 6),
            bump in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let lamp = LampFunctions::<f64>::for_kind(
                [crate::lamp::LampKind::Integers, crate::lamp::LampKind::Z2, crate::lamp::LampKind::Lamplighter][kind],
            );
            let grid = [4u64, 16, 64, 256, 1024, 4096];
            let bigger: Vec<f64> = base.iter().zip(&bump).map(|(p, b)| p + (1.0 - p) * b).collect();
            let q: Vec<f64> = grid.iter().map(|&n| (n as f64).sqrt() + 1.0).collect();
            let ci = vec![(0.0, 1.0); 6];
            let a = bounds_from_curves(&grid, &base, &ci, &q, &lamp, "").unwrap();
            let b = bounds_from_curves(&grid, &bigger, &ci, &q, &lamp, "").unwrap();
            for (x, y) in a.rows.iter().zip(&b.rows) {
                prop_assert!(y.speed_lower >= x.speed_lower * (1.0 - 1e-12));
                prop_assert!(y.entropy_lower >= x.entropy_lower * (1.0 - 1e-12));
            }
        }
    }
}

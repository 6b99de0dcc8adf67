//! Least-squares exponent fits in log-log coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 4 points in the window [{lo}, {hi}], found {found}")]
    TooFewPoints { lo: f64, hi: f64, found: usize },
    #[error("non-positive value {y} at n = {n}")]
    NonPositive { n: f64, y: f64 },
    #[error("degenerate window: all abscissae coincide")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `log y = β log n + c`.
    Power,
    /// `log y = β log n + log log(n+1) + c`.
    LogCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult<T> {
    pub exponent: T,
    pub intercept: T,
    pub r_squared: T,
    pub window: (T, T),
    pub points: usize,
    pub model: FitModel,
}

/// Fits `y ≈ C n^β` (optionally times `log(n+1)`) on the points with
/// `n` inside `window`.
pub fn fit_exponent<T: Real>(series: &[(T, T)], window: (T, T), model: FitModel) -> Result<FitResult<T>, FitError> {
    let pts: Vec<(T, T)> = series
        .iter()
        .copied()
        .filter(|(n, _)| *n >= window.0 && *n <= window.1)
        .collect();
    if pts.len() < 4 {
        return Err(FitError::TooFewPoints {
            lo: window.0.to_f64_lossy(),
            hi: window.1.to_f64_lossy(),
            found: pts.len(),
        });
    }
    let mut xs = Vec::with_capacity(pts.len());
    let mut zs = Vec::with_capacity(pts.len());
    for (n, y) in pts {
        if y.is_nan() || n.is_nan() || y <= T::zero() || n <= T::zero() {
            return Err(FitError::NonPositive { n: n.to_f64_lossy(), y: y.to_f64_lossy() });
        }
        let mut z = y.ln();
        if model == FitModel::LogCorrected {
            z = z - (n + T::one()).ln().ln();
        }
        xs.push(n.ln());
        zs.push(z);
    }
    let k = T::from_count(xs.len() as u64);
    let mx = xs.iter().copied().sum::<T>() / k;
    let mz = zs.iter().copied().sum::<T>() / k;
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let sxz: T = xs.iter().zip(&zs).map(|(x, z)| (*x - mx) * (*z - mz)).sum();
    let szz: T = zs.iter().map(|z| (*z - mz) * (*z - mz)).sum();
    if sxx <= T::zero() {
        return Err(FitError::Degenerate);
    }
    let beta = sxz / sxx;
    let intercept = mz - beta * mx;
    let r_squared = if szz <= T::epsilon() * T::c(16.0) * (T::one() + mz * mz) * k {
        T::one()
    } else {
        (sxz * sxz / (sxx * szz)).min(T::one()).max(T::zero())
    };
    Ok(FitResult { exponent: beta, intercept, r_squared, window, points: xs.len(), model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..=18).map(|t| {
            let n = (1u64 << t) as f64;
            (n, f(n))
        }).collect()
    }

    #[test]
    fn exact_power_law() {
        let r = fit_exponent(&series(|n| n.powf(0.75)), (1.0, 1e9), FitModel::Power).unwrap();
        assert!((r.exponent - 0.75).abs() < 1e-6);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_corrected_model() {
        let s = series(|n| n.sqrt() * (n + 1.0).ln());
        let r = fit_exponent(&s, (64.0, (1u64 << 18) as f64), FitModel::LogCorrected).unwrap();
        assert!((r.exponent - 0.5).abs() < 0.02);
        let plain = fit_exponent(&s, (64.0, (1u64 << 18) as f64), FitModel::Power).unwrap();
        assert!(plain.exponent > 0.55);
    }

    #[test]
    fn constant_series() {
        let r = fit_exponent(&series(|_| 3.0), (1.0, 1e9), FitModel::Power).unwrap();
        assert!(r.exponent.abs() < 1e-12);
        assert_eq!(r.r_squared, 1.0);
    }

    #[test]
    fn errors() {
        let s = series(|n| n);
        assert!(matches!(fit_exponent(&s, (1.0, 4.0), FitModel::Power), Err(FitError::TooFewPoints { .. })));
        let mut bad = s.clone();
        bad[5].1 = 0.0;
        assert!(matches!(fit_exponent(&bad, (1.0, 1e9), FitModel::Power), Err(FitError::NonPositive { .. })));
        let flat = vec![(4.0, 1.0); 5];
        assert_eq!(fit_exponent(&flat, (1.0, 8.0), FitModel::Power), Err(FitError::Degenerate));
    }

    #[test]
    fn single_precision() {
        let s: Vec<(f32, f32)> = (0..12).map(|t| {
            let n = (1u32 << t) as f32;
            (n, n.powf(0.9))
        }).collect();
        let r = fit_exponent(&s, (1.0, 1e6), FitModel::Power).unwrap();
        assert!((r.exponent - 0.9).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn recovers_synthetic_exponents(idx in 0usize..3, c in 0.1f64..10.0) {
            let beta = [0.5, 0.75, 0.9][idx];
            let r = fit_exponent(&series(|n| c * n.powf(beta)), (256.0, 1e9), FitModel::Power).unwrap();
            prop_assert!((r.exponent - beta).abs() < 1e-3);
            prop_assert!(r.r_squared >= 0.0 && r.r_squared <= 1.0);
        }
    }
}

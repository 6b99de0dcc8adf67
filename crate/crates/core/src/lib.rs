//! Simulation toolkit for switch-walk-switch random walks on permutational
//! wreath products `Λ ≀_S M_m` over piecewise mother groups acting on
//! spherically symmetric rooted trees.
//!
//! Group arithmetic ([`tree`], [`portrait`], [`lamp`] elements) is exact and
//! integral. The statistical layer (entropy and speed tables, return tails,
//! bound curves, fits) is generic over [`num::Real`]; the aliases below fix
//! it to `f64`.

pub mod bounds;
pub mod designer;
pub mod experiment;
pub mod fit;
pub mod lamp;
pub mod num;
pub mod orbit;
pub mod portrait;
pub mod seed;
pub mod tree;
pub mod wreath;

pub use lamp::{LampGroup, LampKind};
pub use tree::{DegreeSequence, GeneratorMove, Perm, Site};
pub use wreath::WreathState;

pub type LampFunctions64 = lamp::LampFunctions<f64>;
pub type ReturnTailEstimate64 = orbit::ReturnTailEstimate<f64>;
pub type CumulativeQ64 = orbit::CumulativeQ<f64>;
pub type BoundsReport64 = bounds::BoundsReport<f64>;
pub type TargetSpec64 = bounds::TargetSpec<f64>;
pub type TargetFn64 = bounds::TargetFn<f64>;
pub type FitResult64 = fit::FitResult<f64>;
pub type TrajectoryStats64 = wreath::TrajectoryStats<f64>;
pub type BatchSummary64 = wreath::BatchSummary<f64>;
pub type EntropyEstimate64 = wreath::EntropyEstimate<f64>;

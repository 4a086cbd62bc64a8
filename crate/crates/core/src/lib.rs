//! Hermite variations of fractional Brownian motion: exact synthesis, limit
//! theorems and precise-asymptotics series.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fgn;
pub mod hermite;
pub mod limitlaws;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod series;
pub mod variations;
pub mod verify;

pub use error::{Error, Result};
pub use fgn::{FgnSample, Hurst, PathSpec};
pub use hermite::HermiteOrder;
pub use series::{SeriesEstimate, SeriesKind};
pub use variations::{NormalizationConstants, Regime, VariationStatistic};

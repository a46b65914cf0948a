//! SmoothGrad and VarGrad as Monte Carlo estimators over smooth score
//! functions, side by side with their closed-form higher-order derivative
//! series and remainder bounds.

pub mod error;
pub mod expr;
pub mod gauss;
pub mod highdiff;
pub mod jet;
pub mod multiindex;

pub use error::{Error, Result};
pub use expr::{Degree, ScoreFunction, Smoothness};
pub use gauss::Sigma;
pub use highdiff::DerivativeTable;
pub use multiindex::MultiIndex;
pub mod estimators;
pub mod rng;
pub mod stats;
pub mod tape;

pub use estimators::{AttributionVector, Method, NoiseSpec};
pub mod series;

pub use series::{BallSpec, SeriesEvaluation};
pub mod oracle;
pub mod experiment;

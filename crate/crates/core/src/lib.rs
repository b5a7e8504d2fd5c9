//! Gap filling of a sparse optical vegetation series with a dense radar
//! series through a two-output Gaussian process (semiparametric latent
//! factor model), with single-output GP and interpolation baselines.

pub mod assess;
pub mod cli;
pub mod covariance;
pub mod error;
pub mod gp;
pub mod interp;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod mogp;
pub mod optimize;
pub mod phenosynth;
pub mod series;

pub use error::{Error, Result};
pub use series::{PredictionBand, TimeSeries, TrainConfig};

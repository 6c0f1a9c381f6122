//! Inference of daily incidence and stepwise reproduction numbers from
//! death counts.
//!
//! The pipeline: death counts are modeled as Poisson draws around an
//! intensity obtained by convolving a latent scaled-incidence series with an
//! infection-to-death delay kernel. The incidence itself obeys a discrete
//! renewal equation driven by a piecewise-constant reproduction number. A
//! gradient fit of the log-incidence minimizes a weighted Poisson data loss
//! plus a sparsity-promoting penalty on day-over-day reproduction-number
//! changes; sweeping the penalty strength and scoring by information
//! criterion or by change-point timing against recorded interventions picks
//! the final model.

pub mod error;
pub mod evaluation;
pub mod fitter;
pub mod io;
pub mod kernels;
pub mod model;
pub mod pipeline;
pub mod selection;
pub mod series;
pub mod simulator;

pub use error::{Error, Result};
pub use fitter::{fit, FitConfig, FitResult};
pub use kernels::{default_death_delay, default_generation_interval, GammaSpec, Kernel};
pub use model::{
    data_loss, detection_reproduction_number, dynamics_loss, expected_deaths, objective,
    poisson_loglik, reproduction_number, reproduction_number_guarded, LossBreakdown,
    DEFAULT_LOG_GUARD, LOG_CHANGE_THRESHOLD,
};
pub use series::{DeathSeries, IncidenceSeries, IntensitySeries, ReproductionSeries};

//! Phase-space displacement echoes in the quantized kicked rotator.
//!
//! The crate is organised bottom-up:
//!
//! * [`state`]: torus discretisation, coherent states, basis changes and the
//!   momentum-boost operator.
//! * [`floquet`]: split-operator application of the kicked-rotator Floquet
//!   operator, plus a dense-matrix reference for small dimensions.
//! * [`echo`]: per-state echo series and seeded ensemble averages.
//! * [`theory`]: closed-form decay, freeze and saturation predictions.
//! * [`classical`]: the standard map and a Benettin Lyapunov estimator.
//! * [`analysis`]: decay-rate fits and saturation plateaus.
//! * [`experiment`]: config files, CSV/manifest output and the run drivers
//!   used by the `dispecho` binary.

pub mod analysis;
pub mod classical;
pub mod echo;
mod error;
pub mod experiment;
pub mod floquet;
pub mod state;
pub mod theory;

pub use error::{Error, Result};

pub use analysis::{
    default_fit_window, fit_decay, lyapunov_window, tail_saturation, DecayFit, FitWindow,
    TailSaturation,
};
pub use classical::{benettin_lyapunov, standard_map_step, LyapunovEstimate, PhasePoint};
pub use echo::{echo_series, ensemble_echo, EchoSeries, EnsembleConfig, SigmaPolicy, StateEcho};
pub use floquet::{dense_floquet, Direction, FloquetOperator, KickedRotatorParams};
pub use state::{CoherentParams, MomentumState, QuantumState, TorusGrid};
pub use theory::{
    freeze_term, g_function, lyapunov_rate, predicted_echo, saturation_prediction,
    y_correlation_prediction, TheoryParams,
};

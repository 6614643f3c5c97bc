//! Simulation and analysis toolkit for the multi-user MIMO uplink over
//! time-varying Rayleigh fading channels.
//!
//! The library follows the signal path end to end:
//!
//! * [`channel`] — Gauss-Markov (AR(1)) channel evolution, pilot and data
//!   observations, deterministic per-trial random streams.
//! * [`estimation`] — two-lag and memoryless MMSE channel estimators with
//!   their conditional error statistics.
//! * [`receivers`] — linear uplink receivers built from those statistics,
//!   from matched filtering to the MSE-optimal combiner.
//! * [`sinr`] — instantaneous and average SINR evaluation, plus
//!   deterministic-equivalent (large-system) fixed points.
//! * [`rmt`] — small random-matrix oracles used to cross-check the
//!   large-system machinery.
//! * [`pilot`] — closed-form pilot-power optimization under a per-block
//!   power budget.
//! * [`scenario`], [`sim`], [`output`] — experiment descriptions, the Monte
//!   Carlo driver, and table/CSV/JSON emission.
//!
//! Every stochastic routine takes an explicit RNG seeded per trial
//! ([`channel::trial_rng`]), so results are bit-reproducible for a given
//! master seed regardless of thread count.

pub mod channel;
pub mod estimation;
mod error;
pub mod output;
pub mod pilot;
pub mod receivers;
pub mod rmt;
pub mod scenario;
pub mod sim;
pub mod sinr;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dynamically sized complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dynamically sized complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

pub use channel::{MatrixUserParams, SystemConfig, UserParams};
pub use estimation::{ConditionalStats, ScalarConditionalStats, StackedEstimate};
pub use output::{Metadata, OutputFormat, ResultRow};
pub use pilot::{PilotOptProblem, PilotOptimum, QuarticCoeffs};
pub use receivers::{MrcVariant, Receiver, ReceiverInputs, ReceiverKind, UserRealization};
pub use scenario::{FigurePreset, PresetKind, Scenario, SweepSpec, SweepVar, UserTemplate};
pub use sim::{run_scenario, run_scenario_with_threads};
pub use sinr::{FixedPointOptions, FixedPointState, PhiFamily};

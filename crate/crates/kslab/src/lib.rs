//! kslab: a numerical laboratory for 2D parabolic-elliptic chemotaxis
//! dynamics with sub-logistic damping.
//!
//! The library simulates
//!
//! ```text
//! u_t = lap(u) - div(u grad v) + f(u),      0 = lap(v) + u - v
//! ```
//!
//! on a rectangle with no-flux boundaries, where the source family is
//! `f(u) = r u - mu u^2 / ln^p(u+e)`. It is built to exhibit the
//! critical-mass dichotomy of the undamped system (small bumps spread,
//! heavy bumps collapse under grid refinement) and to show that the
//! logarithmically weakened quadratic damping with `p = 1` keeps the same
//! supercritical data bounded. A companion lab numerically exercises the
//! interpolation and equi-integrability estimates that underpin the
//! boundedness argument.
//!
//! Start with the runnable examples (`cargo run --release --example NAME`):
//!
//! - `diffusion_decay` - pure-diffusion eigenmode decay against the exact rate
//! - `elliptic_convergence` - manufactured-solution order study for the signal solve
//! - `critical_mass_dichotomy` - subcritical vs supercritical bump verdicts
//! - `sublogistic_rescue` - the damped supercritical run staying bounded
//! - `gn_constant` - empirical interpolation-constant estimation
//! - `truncation_lab` - calibrate/verify protocol for the truncation inequality
//! - `equi_integrability` - tail-mass probe over trajectory snapshots
//!
//! The thin `kslab` binary exposes the same machinery as subcommands
//! (`simulate`, `preset`, `lab`, `refine`).

pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod inequality;
pub mod presets;
pub mod sources;
pub mod stepper;

pub use error::{KsError, Result};

//! Biased random voter model toolkit.
//!
//! The forward spin system lives on a finite torus and is simulated through
//! its graphical construction. The coalescing dual lives on `Z^d` (or on the
//! same torus, when it is compared against forward runs) and carries the
//! Feynman–Kac weight `exp(-∫ V_β(A_s) ds)`. Disorder averages are taken
//! analytically through Laplace transforms of dual local times.
//!
//! Module map:
//!
//! * [`kernel`]: jump distributions, characteristic functions, torus folding.
//! * [`disorder`]: atomic bias laws, `ν₁`, `ν₂`, Laplace transforms, bias fields.
//! * [`localfn`]: local functions, Möbius coefficients, monotonicity lemmas.
//! * [`forward`]: spin dynamics and the monotone coupling.
//! * [`dual`]: coalescing dual, quenched and annealed estimators, walker ranges.
//! * [`exact`]: uniformization oracles on tiny tori and the exact 1-d range law.
//! * [`range`]: range statistics and the Donsker–Varadhan constant.
//! * [`harness`]: configs, experiment runs, exponent fits, sandwich reports.

pub mod disorder;
pub mod dual;
pub mod exact;
pub mod forward;
pub mod harness;
pub mod kernel;
pub mod localfn;
pub mod range;
pub mod rng;
pub mod site;
pub mod stats;

mod error;

pub use error::{Error, Result};

//! Fluid and stochastic models of revenue-shared hybrid P2P content
//! distribution.
//!
//! A legal channel (provider CDN plus a P2P swarm whose seeds receive a share
//! of every sale) competes for users with a free illicit swarm. Demand follows
//! Bass diffusion or a constant-rate baseline. The crate provides
//!
//! - [`fluid`]: the deterministic ODE model and its RK4 integrator,
//! - [`stochastic`]: an exact-jump simulation of the finite system,
//! - [`economics`]: revenue accounting, share-fraction sweeps and scaling
//!   experiments,
//! - [`scenario`] and [`output`]: configuration files and CSV/SVG emission.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::field_reassign_with_default)]

pub mod demand;
pub mod economics;
pub mod error;
pub mod fluid;
pub mod market;
pub mod output;
pub mod plot;
pub mod scenario;
pub mod stochastic;
pub mod validate;

pub use error::{Error, Result};
pub use fluid::{MarketState, SwarmParams, Trajectory};
pub use market::{EconParams, Swarm};
pub use scenario::{Regime, Scenario};

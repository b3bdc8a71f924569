//! Solvers for the Buckley-Leverett two-phase displacement Riemann problem.
//!
//! The crate provides three routes to the same physics and the machinery to
//! cross-validate them:
//!
//! * [`flux`] - the fractional-flow curve and its entropy-consistent
//!   convex-hull (Welge) construction;
//! * [`moc`] - the analytical method-of-characteristics solution
//!   (rarefaction + shock) plus a first-order Godunov finite-volume oracle;
//! * [`net`] / [`optim`] / [`pinn`] - a small feed-forward network with exact
//!   input and parameter derivatives, Adam, and the physics-informed loss in
//!   both its naive and entropy-constrained forms;
//! * [`stochastic`] - the parameterized network over a random Darcy velocity
//!   together with a Monte-Carlo-over-MOC baseline and ensemble statistics;
//! * [`io`] - CSV/JSON serialization for profiles, losses, envelopes and
//!   model checkpoints.
//!
//! Everything is deterministic for a fixed set of seeds.

pub mod error;
pub mod flux;
pub mod io;
pub mod moc;
pub mod net;
pub mod optim;
pub mod pinn;
pub mod stochastic;

pub use error::{Error, Result};

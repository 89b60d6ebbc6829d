//! Numerical laboratory for Type-II blow-up of rotationally symmetric,
//! asymptotically cylindrical mean curvature flow.
//!
//! The flow is studied in the self-similar variables
//! `τ = -log(T-t)`, `φ = u (T-t)^{-1/2}`, `y = x (T-t)^{γ-1/2}`, `z = φ e^{γτ}`
//! and mostly through `λ = -1/y`. The modules build the formal tip and
//! exterior solutions, the barrier pairs enclosing them, evolve the rescaled
//! PDE between those barriers and extract the blow-up rate, the tip soliton
//! and the exterior approach rate from the trajectory.

pub mod analysis;
pub mod barriers;
pub mod config;
pub mod error;
pub mod exec;
pub mod formal;
pub mod grid;
pub mod io;
pub mod ode;
pub mod operators;
pub mod params;
pub mod profiles;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

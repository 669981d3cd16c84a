//! Constrained ground states of the 2D rotational nonlinear Schrodinger
//! (Gross-Pitaevskii) energy
//!
//! `E(u) = int |grad u|^2 + V |u|^2 - Omega x^perp.(iu, grad u) - 2 rho^(p-1)/(p+1) |u|^(p+1)`
//!
//! on the unit-mass sphere, for `1 < p < 3`, together with the scalar
//! profile `-Lap w + w - w^p = 0` that governs the large-`rho` limit.
//!
//! Numerics are generic over [`Real`]; the aliases below fix `f64`.

pub mod asymptotics;
pub mod energy;
pub mod error;
pub mod grid;
pub(crate) mod linalg;
pub mod minimize;
pub mod potentials;
pub mod scalar;
pub mod scalar_ground;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::{Point, Real};

pub type Grid = grid::GridSpec<f64>;
pub type Field = grid::ComplexField<f64>;
pub type RealField = grid::RealField<f64>;
pub type Profile = scalar_ground::RadialProfile<f64>;
pub type Potential = potentials::PotentialSpec<f64>;
pub type Problem = energy::GpProblem<f64>;
pub type Config = minimize::SolveConfig<f64>;
pub type GroundState = minimize::GroundState<f64>;
pub type BlowupReport = asymptotics::BlowupReport<f64>;

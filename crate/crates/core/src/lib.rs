//! Polyatomic gas relaxation with mixed resonant and inelastic collisions.
//!
//! The crate covers the collision model, Maxwellian equilibria, Monte Carlo
//! and deterministic collision integrals, Chapman-Enskog transport and
//! relaxation coefficients, a DSMC relaxation oracle and a 1-D two-temperature
//! fluid solver.

pub mod chapman_enskog;
pub mod collision;
pub mod dsmc;
pub mod equilibrium;
pub mod fluid;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod rng;

pub use chapman_enskog::{CeOptions, CoefficientProvider, GramMethod, LocalCoefficients, TransportCoefficients};
pub use equilibrium::{MacroState, Maxwellian, Moments, Particle};
pub use error::{Error, Result};
pub use fluid::{Boundary, FluidParams, Primitive, ScalingMode};
pub use model::{GasModel, Pair, Vec3};
pub use rng::{McEstimate, Rng};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

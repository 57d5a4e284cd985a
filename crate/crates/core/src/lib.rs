//! Exact simulation of a finite-N cell-polarity particle system on a sphere,
//! together with the large-N predictions it is checked against.
//!
//! Molecules bind to the membrane spontaneously (`k_on`), fall off (`k_off`),
//! and recruit cytosolic copies next to themselves (`k_fb`). Each molecule
//! carries the clan of the spontaneous binding it descends from and diffuses
//! on a sphere of radius `R`. [`engine`] runs the exact Gillespie jump chain,
//! [`genealogy`] extracts clan statistics, [`alleles`] holds the independent
//! reference samplers and [`model`] the closed-form predictions.
//!
//! The numerical code is generic over [`Real`]; [`Params`] and [`Derived`]
//! also work over exact rationals via [`Scalar`].

pub mod alleles;
pub mod engine;
pub mod genealogy;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sphere;
pub mod stats;

pub use engine::{ClanId, EngineError, MembraneState, Simulator};
pub use model::{Derived, ParamError, Params};
pub use scalar::{Real, Scalar};
pub use sphere::{HemisphereMode, Point};

pub type Params64 = Params<f64>;
pub type Derived64 = Derived<f64>;
pub type Point64 = Point<f64>;
pub type MembraneState64 = MembraneState<f64>;
pub type Simulator64 = Simulator<f64>;

pub type Params32 = Params<f32>;
pub type Simulator32 = Simulator<f32>;

/// Exact parameters; `derive()` then evaluates every closed form without rounding.
pub type RationalParams = Params<num_rational::BigRational>;
pub type RationalDerived = Derived<num_rational::BigRational>;

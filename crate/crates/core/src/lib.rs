//! Verification, simulation and bounded synthesis of finite-state plans
//! under noisy acting and sensing.
//!
//! The engine works over grounded finite action theories ([`theory`]).
//! Plans are finite memoryless controllers ([`controller`]). Three
//! execution semantics are provided: deterministic runs and runs over
//! nature's alternative outcomes ([`exec_exact`]), and belief-level runs
//! driven by readings from a designated real world ([`exec_epistemic`]).
//! [`montecarlo`] samples executions as a statistical cross-check and
//! [`synth`] enumerates controllers up to a state budget.
//!
//! Weights are generic over [`Scalar`]; `f64` is the default and
//! [`Rational`] gives exact arithmetic for table-only domains.

pub mod belief;
pub mod controller;
pub mod error;
pub mod exec_epistemic;
pub mod exec_exact;
pub mod generate;
pub mod montecarlo;
pub mod scalar;
pub mod synth;
pub mod theory;

pub use controller::{enumerate_controllers, CompiledController, Controller, Defect};
pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};
pub use theory::{parse_domain, Domain, Formula, Reading, WorldState};

pub type DomainF64 = Domain<f64>;
pub type DomainF32 = Domain<f32>;
pub type ExactDomain = Domain<Rational>;

pub type BeliefF64 = belief::BeliefState<f64>;
pub type BeliefF32 = belief::BeliefState<f32>;
pub type ExactBelief = belief::BeliefState<Rational>;

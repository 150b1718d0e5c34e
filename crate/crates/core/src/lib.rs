//! Propagation of singularly perturbed Schrödinger dynamics in the
//! Schrödinger, parallel-transport (PT) and von Neumann formulations.
//!
//! The crate is organised bottom-up:
//!
//! * [`state`] – orbital sets, density matrices and gauge-invariant comparison.
//! * [`hamiltonians`] – the 2×2 avoided-crossing model, a small real chain
//!   model and the 1D finite-difference nonlinear Schrödinger equation, plus
//!   the effective Hamiltonians `H^e` of every PT variant.
//! * [`dynamics`] – right-hand sides of each formulation.
//! * [`solvers`] – Anderson-mixing fixed-point solver for implicit stages.
//! * [`integrators`] – RK4, implicit midpoint (GL2) and Crank–Nicolson steppers
//!   and the trajectory driver.
//! * [`reference`] – spectral oracles: adiabatic evolution, PT transport
//!   operator, von Neumann propagation, occupations.
//! * [`analysis`] – error metric, log-log fits, turning points, observables
//!   and Anderson cost accounting.
//! * [`experiment`] – run configuration and the sweep drivers used by the CLI.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hamiltonians;
pub mod integrators;
pub mod reference;
pub mod solvers;
pub mod state;

#[cfg(test)]
pub(crate) mod testutil;

pub use analysis::{ConvergenceStudy, LineFit};
pub use dynamics::DynamicsKind;
pub use error::{Error, Result};
pub use experiment::{Method, RunConfig};
pub use hamiltonians::{
    ChainHamiltonian, HamiltonianSpec, NlseHamiltonian, ProblemConfig, ToyHamiltonian,
};
pub use integrators::{IntegratorConfig, Scheme, Trajectory};
pub use solvers::{AndersonConfig, PreconditionerKind, SolveReport};
pub use state::{CMatrix, Complex64, DensityMatrix, OrbitalSet, RealImagPair};

//! Shared fixtures for the criterion benches.

use ptgauge::{HamiltonianSpec, NlseHamiltonian, ProblemConfig};

/// Toy two-level problem at ε = `eps`, δ = 1.
pub fn toy(eps: f64) -> ProblemConfig {
    ProblemConfig::toy(1.0, eps)
}

/// Standard NLSE problem at ε = `eps` on a coarse grid.
pub fn nlse(eps: f64, hx: f64) -> ProblemConfig {
    ProblemConfig::new(HamiltonianSpec::Nlse(NlseHamiltonian::with_spacing(hx)), eps, 1.0)
}

//! Spectral oracles that do not go through the production propagators.

use nalgebra::SymmetricEigen;

use crate::dynamics::{Flow, VonNeumannFlow};
use crate::error::{Error, Result};
use crate::hamiltonians::{HamiltonianSpec, ProblemConfig};
use crate::integrators::{propagate_flow, IntegratorConfig, Scheme, Trajectory};
use crate::state::{density_from_orbitals, CMatrix, Complex64, OrbitalSet};

/// Gaps below this are treated as closed.
pub const MIN_GAP: f64 = 1e-6;
/// Central-difference step for `Q̇`.
pub const QDOT_STEP: f64 = 1e-6;

/// Eigen-decomposition with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    /// `λ_{n} − λ_{n−1}`: separation of the lowest `n` levels from the rest.
    pub fn gap(&self, n: usize) -> f64 {
        match (self.eigenvalues.get(n.wrapping_sub(1)), self.eigenvalues.get(n)) {
            (Some(a), Some(b)) => b - a,
            _ => f64::INFINITY,
        }
    }

    /// Projector onto the lowest `n` eigenvectors.
    pub fn projector(&self, n: usize) -> CMatrix {
        let v = self.eigenvectors.columns(0, n);
        &v * v.adjoint()
    }

    /// Rotates each eigenvector so that its overlap with the matching column
    /// of `prev` is real and positive.
    pub fn align_phases(&mut self, prev: &Spectrum) {
        for (mut col, old) in self.eigenvectors.column_iter_mut().zip(prev.eigenvectors.column_iter()) {
            let z = old.dotc(&col);
            if z.norm() > 0.0 {
                col *= z.conj() / z.norm();
            }
        }
    }
}

/// Dense Hermitian eigen-decomposition, ascending order.
pub fn eig_hermitian(h: &CMatrix) -> Result<Spectrum> {
    if !h.is_square() {
        return Err(Error::shape(format!("{0}x{0}", h.nrows()), format!("{}x{}", h.nrows(), h.ncols())));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian"));
    }
    let dev = (h - h.adjoint()).norm();
    if dev > 1e-10 * h.norm().max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMatrix::zeros(h.nrows(), h.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // deterministic phase: largest component real positive
        let pivot = col.iter().copied().fold(Complex64::new(0.0, 0.0), |best, z| {
            if z.norm() > best.norm() * (1.0 + 1e-12) { z } else { best }
        });
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        eigenvectors.set_column(dst, &(col * phase));
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Spectra along `times`, phase-continuous from one sample to the next.
pub fn spectrum_path(ham: &HamiltonianSpec, times: &[f64]) -> Result<Vec<Spectrum>> {
    let mut out: Vec<Spectrum> = Vec::with_capacity(times.len());
    for &t in times {
        let mut s = eig_hermitian(&ham.matrix(t)?)?;
        if let Some(prev) = out.last() {
            s.align_phases(prev);
        }
        out.push(s);
    }
    Ok(out)
}

fn checked_spectrum(ham: &HamiltonianSpec, t: f64, n: usize) -> Result<Spectrum> {
    let s = eig_hermitian(&ham.matrix(t)?)?;
    let gap = s.gap(n);
    if gap < MIN_GAP {
        return Err(Error::GapClosed { t, gap });
    }
    Ok(s)
}

/// `Q(t)`, the projector onto the lowest `n` eigenvectors of `H(t)`.
pub fn spectral_projector(ham: &HamiltonianSpec, t: f64, n: usize) -> Result<CMatrix> {
    Ok(checked_spectrum(ham, t, n)?.projector(n))
}

/// `Q̇(t)` by central differences with step [`QDOT_STEP`].
pub fn q_dot(problem: &ProblemConfig, t: f64) -> Result<CMatrix> {
    let n = problem.orbitals;
    let ham = &problem.hamiltonian;
    checked_spectrum(ham, t, n)?;
    let plus = spectral_projector(ham, t + QDOT_STEP, n)?;
    let minus = spectral_projector(ham, t - QDOT_STEP, n)?;
    Ok((plus - minus) / Complex64::new(2.0 * QDOT_STEP, 0.0))
}

/// `Q̇(t) = Σ_{k occupied, j empty} (P_j H′ P_k + P_k H′ P_j)/(λ_k − λ_j)`
/// from first-order perturbation theory; needs a closed-form `H′`.
pub fn q_dot_analytic(problem: &ProblemConfig, t: f64) -> Result<CMatrix> {
    let n = problem.orbitals;
    let ham = &problem.hamiltonian;
    let dh = ham
        .time_derivative(t)
        .ok_or_else(|| Error::Unsupported("closed-form time derivative".into()))?;
    let s = checked_spectrum(ham, t, n)?;
    let v = &s.eigenvectors;
    let coupling = v.adjoint() * dh * v;
    let d = v.nrows();
    let mut out = CMatrix::zeros(d, d);
    for k in 0..n {
        for j in n..d {
            let w = coupling[(j, k)] / (s.eigenvalues[k] - s.eigenvalues[j]);
            let term = v.column(j) * v.column(k).adjoint() * w;
            out += &term + term.adjoint();
        }
    }
    Ok(out)
}

fn q_and_qdot(problem: &ProblemConfig, t: f64) -> Result<(CMatrix, CMatrix)> {
    let q = spectral_projector(&problem.hamiltonian, t, problem.orbitals)?;
    let qd = match q_dot_analytic(problem, t) {
        Err(Error::Unsupported(_)) => q_dot(problem, t)?,
        other => other?,
    };
    Ok((q, qd))
}

/// Adiabatic evolution `∂tφ_A = [Q̇, Q]φ_A` from the problem's initial state,
/// integrated by RK4. The flow is ε-free, so moderate steps suffice.
pub fn adiabatic_reference(problem: &ProblemConfig, integ: &IntegratorConfig) -> Result<Trajectory> {
    problem.validate()?;
    if integ.scheme != Scheme::Rk4 {
        return Err(Error::Config("adiabatic reference is integrated with RK4".into()));
    }
    let flow = |t: f64, x: &CMatrix, out: &mut CMatrix| -> Result<()> {
        let (q, qd) = q_and_qdot(problem, t)?;
        let comm = &qd * &q - &q * &qd;
        *out = comm * x;
        Ok(())
    };
    let phi0 = problem.initial_state()?;
    let traj = propagate_flow(&flow, 0.0, problem.final_time, phi0.data(), integ)?;
    if let Some(err) = traj.failure.clone() {
        return Err(err);
    }
    for (i, &t) in traj.times.iter().enumerate() {
        let q = spectral_projector(&problem.hamiltonian, t, problem.orbitals)?;
        let x = traj.view(i);
        let leak = (&x - &q * x).norm();
        if leak > 1e-8 {
            return Err(Error::Config(format!(
                "adiabatic state left the eigenspace at t = {t} (‖(I − Q)φ_A‖ = {leak:.3e}); reduce h"
            )));
        }
    }
    Ok(traj)
}

/// Parallel-transport evolution operator: jointly integrates
/// `iε∂tP = [H, P]` and `∂t𝒯 = [Ṗ, P]𝒯` with RK4 from `P(0) = φ₀φ₀*`,
/// `𝒯(0) = I`. Returns the recorded `𝒯(t)`.
pub fn pt_transport_operator(problem: &ProblemConfig, integ: &IntegratorConfig) -> Result<Trajectory> {
    problem.validate()?;
    let d = problem.hamiltonian.dim();
    if d > 64 {
        return Err(Error::Unsupported(format!("transport operator for d = {d}")));
    }
    if integ.scheme != Scheme::Rk4 {
        return Err(Error::Config("transport operator is integrated with RK4".into()));
    }
    let vn = VonNeumannFlow::new(problem);
    let flow = |t: f64, x: &CMatrix, out: &mut CMatrix| -> Result<()> {
        let p = x.columns(0, d).into_owned();
        let tr = x.columns(d, d);
        let mut pdot = CMatrix::zeros(d, d);
        vn.eval(t, &p, &mut pdot)?;
        let a = &pdot * &p - &p * &pdot;
        out.columns_mut(0, d).copy_from(&pdot);
        out.columns_mut(d, d).copy_from(&(a * tr));
        Ok(())
    };
    let phi0 = problem.initial_state()?;
    let p0 = density_from_orbitals(&phi0)?;
    let mut x0 = CMatrix::zeros(d, 2 * d);
    x0.columns_mut(0, d).copy_from(p0.data());
    x0.columns_mut(d, d).fill_with_identity();
    let joint = propagate_flow(&flow, 0.0, problem.final_time, &x0, integ)?;
    if let Some(err) = joint.failure.clone() {
        return Err(err);
    }
    let mut out = Trajectory::new(d, d);
    out.steps = joint.steps;
    for (i, &t) in joint.times.iter().enumerate() {
        let tr = joint.view(i).columns(d, d).into_owned();
        let dev = (tr.ad_mul(&tr) - CMatrix::identity(d, d)).norm();
        if dev > 1e-6 {
            return Err(Error::Unitarity(dev));
        }
        out.push(t, &tr, joint.reports[i]);
    }
    Ok(out)
}

/// Propagates `iε∂tP = [H(t, P), P]` from `P(0) = φ₀φ₀*` with the
/// configured scheme. Samples are `d × d` density matrices.
pub fn von_neumann_propagate(problem: &ProblemConfig, integ: &IntegratorConfig) -> Result<Trajectory> {
    problem.validate()?;
    let d = problem.hamiltonian.dim();
    if d > 64 {
        return Err(Error::Unsupported(format!("von Neumann propagation for d = {d}")));
    }
    let p0 = density_from_orbitals(&problem.initial_state()?)?;
    let flow = VonNeumannFlow::new(problem);
    propagate_flow(&flow, 0.0, problem.final_time, p0.data(), integ)
}

/// `Σ_j |⟨φ_j, e_level⟩|²` with `level` counted from 0 (ground state).
pub fn occupation(phi: &OrbitalSet, spectrum: &Spectrum, level: usize) -> Result<f64> {
    let len = spectrum.eigenvalues.len();
    if level >= len {
        return Err(Error::IndexOutOfRange { index: level, len });
    }
    if phi.dim() != len {
        return Err(Error::shape(len, phi.dim()));
    }
    let e = spectrum.eigenvectors.column(level);
    Ok(phi.data().column_iter().map(|c| c.dotc(&e).norm_sqr()).sum())
}

/// Occupation of `level` at every recorded sample of `traj`.
pub fn occupation_path(ham: &HamiltonianSpec, traj: &Trajectory, level: usize) -> Result<Vec<f64>> {
    let spectra = spectrum_path(ham, &traj.times)?;
    spectra
        .iter()
        .enumerate()
        .map(|(i, s)| occupation(&traj.state(i), s, level))
        .collect()
}

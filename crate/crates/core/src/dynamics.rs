//! Right-hand sides `∂t u = f(t, u)` of every formulation.
//!
//! Integrators only see the [`Flow`] trait, so the same stepper drives
//! Schrödinger, PT, PT-Hamiltonian and von Neumann dynamics.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{effective_apply_self, local_density, InstantHamiltonian, ProblemConfig};
use crate::state::{CMatrix, Complex64, DensityMatrix, OrbitalSet, RMatrix, RealImagPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Schrodinger,
    Pt,
    PtHamiltonian,
    VonNeumann,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 4] = [
        DynamicsKind::Schrodinger,
        DynamicsKind::Pt,
        DynamicsKind::PtHamiltonian,
        DynamicsKind::VonNeumann,
    ];

    /// Short label used in method names such as `PT-Ham-GL2`.
    pub fn label(self) -> &'static str {
        match self {
            DynamicsKind::Schrodinger => "S",
            DynamicsKind::Pt => "PT",
            DynamicsKind::PtHamiltonian => "PT-Ham",
            DynamicsKind::VonNeumann => "vN",
        }
    }

    /// True for the gauges whose reference solution is the PT trajectory.
    pub fn is_pt_family(self) -> bool {
        matches!(self, DynamicsKind::Pt | DynamicsKind::PtHamiltonian)
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DynamicsKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown dynamics '{s}' (expected one of S, PT, PT-Ham, vN)"
                ))
            })
    }
}

/// An autonomous-form ODE `∂t x = f(t, x)` on complex matrices.
pub trait Flow {
    fn eval(&self, t: f64, x: &CMatrix, out: &mut CMatrix) -> Result<()>;

    /// Approximately applies `(I − (h/2)·L)⁻¹` to a stage residual, `L` being
    /// the stiff linear part of the flow. The default leaves it unchanged.
    fn precondition_stage(&self, _h: f64, _residual: &mut CMatrix) {}
}

impl<F> Flow for F
where
    F: Fn(f64, &CMatrix, &mut CMatrix) -> Result<()>,
{
    fn eval(&self, t: f64, x: &CMatrix, out: &mut CMatrix) -> Result<()> {
        self(t, x, out)
    }
}

/// `∂tΦ = H^e(t, Φ)Φ / (iε)` for one of the orbital formulations.
///
/// Caches the frozen Hamiltonian so repeated evaluations at one time (the
/// fixed-point iterations of an implicit stage) skip rebuilding the potential.
pub struct OrbitalFlow<'a> {
    problem: &'a ProblemConfig,
    kind: DynamicsKind,
    cache: RefCell<Option<InstantHamiltonian<'a>>>,
}

impl<'a> OrbitalFlow<'a> {
    pub fn new(problem: &'a ProblemConfig, kind: DynamicsKind) -> Result<Self> {
        if kind == DynamicsKind::VonNeumann {
            return Err(Error::Unsupported(
                "von Neumann dynamics acts on density matrices".into(),
            ));
        }
        Ok(Self {
            problem,
            kind,
            cache: RefCell::new(None),
        })
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }
}

impl Flow for OrbitalFlow<'_> {
    fn eval(&self, t: f64, x: &CMatrix, out: &mut CMatrix) -> Result<()> {
        let mut cache = self.cache.borrow_mut();
        if cache.as_ref().is_none_or(|h| h.time() != t) {
            *cache = Some(self.problem.hamiltonian.at(t));
        }
        let inst = cache.as_ref().expect("cache filled above");
        effective_apply_self(inst, self.kind, x, out)?;
        *out *= Complex64::new(0.0, -1.0 / self.problem.epsilon);
        Ok(())
    }

    /// `L = K/(iε)` with `K` the kinetic operator, so the stage matrix is
    /// `I + (ih/2ε)·K`.
    fn precondition_stage(&self, h: f64, residual: &mut CMatrix) {
        let c = Complex64::new(0.0, 0.5 * h / self.problem.epsilon);
        self.problem.hamiltonian.kinetic_inverse(c, residual);
    }
}

/// `∂tP = [H(t, P), P] / (iε)` on dense density matrices.
pub struct VonNeumannFlow<'a> {
    problem: &'a ProblemConfig,
}

impl<'a> VonNeumannFlow<'a> {
    pub fn new(problem: &'a ProblemConfig) -> Self {
        Self { problem }
    }
}

impl Flow for VonNeumannFlow<'_> {
    fn eval(&self, t: f64, p: &CMatrix, out: &mut CMatrix) -> Result<()> {
        let mut h = self.problem.hamiltonian.matrix(t)?;
        let g = self.problem.hamiltonian.coupling();
        if g != 0.0 {
            for k in 0..h.nrows() {
                h[(k, k)] += p[(k, k)].re * g;
            }
        }
        let comm = &h * p - p * &h;
        *out = comm * Complex64::new(0.0, -1.0 / self.problem.epsilon);
        Ok(())
    }
}

fn orbital_rhs(cfg: &ProblemConfig, kind: DynamicsKind, t: f64, phi: &OrbitalSet) -> Result<OrbitalSet> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be > 0, got {}", cfg.epsilon)));
    }
    if phi.dim() != cfg.hamiltonian.dim() {
        return Err(Error::shape(cfg.hamiltonian.dim(), phi.dim()));
    }
    let flow = OrbitalFlow::new(cfg, kind)?;
    let mut out = CMatrix::zeros(phi.dim(), phi.orbitals());
    flow.eval(t, phi.data(), &mut out)?;
    OrbitalSet::new(out)
}

/// `H(t, P)Φ / (iε)`.
pub fn rhs_schrodinger(cfg: &ProblemConfig, t: f64, phi: &OrbitalSet) -> Result<OrbitalSet> {
    orbital_rhs(cfg, DynamicsKind::Schrodinger, t, phi)
}

/// `(HΦ − Φ(Φ*HΦ)) / (iε)`.
pub fn rhs_pt(cfg: &ProblemConfig, t: f64, phi: &OrbitalSet) -> Result<OrbitalSet> {
    orbital_rhs(cfg, DynamicsKind::Pt, t, phi)
}

/// `H^e Φ / (iε)` with the norm-weighted Hamiltonian form; valid off the unit sphere.
pub fn rhs_pt_hamiltonian(cfg: &ProblemConfig, t: f64, phi: &OrbitalSet) -> Result<OrbitalSet> {
    orbital_rhs(cfg, DynamicsKind::PtHamiltonian, t, phi)
}

/// `[H(t, P), P] / (iε)`.
pub fn rhs_von_neumann(cfg: &ProblemConfig, t: f64, p: &DensityMatrix) -> Result<DensityMatrix> {
    if p.dim() != cfg.hamiltonian.dim() {
        return Err(Error::shape(cfg.hamiltonian.dim(), p.dim()));
    }
    if p.hermiticity_error() > 1e-10 {
        return Err(Error::NotHermitian(p.hermiticity_error()));
    }
    let mut out = CMatrix::zeros(p.dim(), p.dim());
    VonNeumannFlow::new(cfg).eval(t, p.data(), &mut out)?;
    DensityMatrix::new(out)
}

/// Real-variable form of the PT-Hamiltonian equations for a real symmetric
/// linear `H` and `N = 1`:
///
/// `∂t q = [Hp(2 − qᵀq − pᵀp) − (qᵀHq + pᵀHp)p] / ε`
/// `∂t p = [−Hq(2 − qᵀq − pᵀp) + (qᵀHq + pᵀHp)q] / ε`
pub fn pt_hamiltonian_components(h: &RMatrix, pair: &RealImagPair, epsilon: f64) -> Result<(RMatrix, RMatrix)> {
    let (q, p) = (&pair.q, &pair.p);
    if q.ncols() != 1 {
        return Err(Error::Unsupported("component form is implemented for N = 1".into()));
    }
    if h.nrows() != q.nrows() || h.ncols() != q.nrows() {
        return Err(Error::shape(q.nrows(), h.nrows()));
    }
    let hq = h * q;
    let hp = h * p;
    let energy = q.dot(&hq) + p.dot(&hp);
    let weight = 2.0 - q.dot(q) - p.dot(p);
    let qdot = (hp * weight - p * energy) / epsilon;
    let pdot = (hq * (-weight) + q * energy) / epsilon;
    Ok((qdot, pdot))
}

/// Energy functional of the formulation, without the conjugate `E` term.
///
/// * Schrödinger: `[tr(Φ*H₀Φ) + (g/2)Σρ²] / (2ε)`
/// * PT and PT-Hamiltonian: `[tr(Φ*H₀Φ(2I − Φ*Φ)) + gΣρ²·(2 − Φ*Φ)] / (2ε) − gΣρ²/(4ε)`,
///   the nonlinear terms only for `N = 1`.
pub fn energy_functional(cfg: &ProblemConfig, kind: DynamicsKind, t: f64, phi: &OrbitalSet) -> Result<f64> {
    if phi.dim() != cfg.hamiltonian.dim() {
        return Err(Error::shape(cfg.hamiltonian.dim(), phi.dim()));
    }
    let inst = cfg.hamiltonian.at(t);
    let x = phi.data();
    let h0x = inst.apply_linear(x);
    let b = x.ad_mul(&h0x);
    let g = inst.coupling();
    let quartic = if g != 0.0 {
        local_density(x).iter().map(|r| r * r).sum::<f64>()
    } else {
        0.0
    };
    let eps = cfg.epsilon;
    match kind {
        DynamicsKind::Schrodinger => Ok((b.trace().re + 0.5 * g * quartic) / (2.0 * eps)),
        DynamicsKind::Pt | DynamicsKind::PtHamiltonian => {
            let n = phi.orbitals();
            if n == 1 {
                let w = 2.0 - x.norm_squared();
                Ok(((b[(0, 0)].re + g * quartic) * w) / (2.0 * eps) - g * quartic / (4.0 * eps))
            } else if g == 0.0 {
                let a = CMatrix::identity(n, n) * Complex64::new(2.0, 0.0) - x.ad_mul(x);
                Ok((b * a).trace().re / (2.0 * eps))
            } else {
                Err(Error::Unsupported("nonlinear energy for N > 1".into()))
            }
        }
        DynamicsKind::VonNeumann => Err(Error::Unsupported(
            "energy functional of the density-matrix flow".into(),
        )),
    }
}

//! Model Hamiltonians and the effective operators `H^e` of the PT variants.
//!
//! Every model splits as `H(t, P) = H₀(t) + g·diag(ρ)` with the local density
//! `ρ_k = Σ_j |Φ_kj|²`. The toy and chain models are linear (`g = 0`).

use nalgebra::ComplexField;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsKind;
use crate::error::{Error, Result};
use crate::reference::eig_hermitian;
use crate::state::{axpy, CMatrix, Complex64, OrbitalSet};

/// Two-level avoided crossing `H(t) = [[t−t0, δ], [δ, −(t−t0)]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyHamiltonian {
    pub t0: f64,
    pub delta: f64,
    /// Evaluate `H` at this fixed time regardless of `t` (time-independent variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_at: Option<f64>,
}

impl ToyHamiltonian {
    pub fn new(t0: f64, delta: f64) -> Self {
        Self {
            t0,
            delta,
            frozen_at: None,
        }
    }

    pub fn frozen(t0: f64, delta: f64, at: f64) -> Self {
        Self {
            t0,
            delta,
            frozen_at: Some(at),
        }
    }

    fn detuning(&self, t: f64) -> f64 {
        self.frozen_at.unwrap_or(t) - self.t0
    }

    /// `∓√((t−t0)² + δ²)`, ascending.
    pub fn eigenvalues(&self, t: f64) -> [f64; 2] {
        let r = self.detuning(t).hypot(self.delta);
        [-r, r]
    }
}

/// Real symmetric tridiagonal chain with linearly drifting site energies:
/// `H_kk(t) = levels[k] + slopes[k]·(t − t0)`, `H_{k,k±1} = coupling`.
///
/// Small synthetic model for the multi-orbital (N > 1) equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainHamiltonian {
    pub levels: Vec<f64>,
    pub slopes: Vec<f64>,
    pub coupling: f64,
    #[serde(default)]
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_at: Option<f64>,
}

impl ChainHamiltonian {
    /// Four sites with a wide gap between the two lowest and two highest levels.
    pub fn four_site() -> Self {
        Self {
            levels: vec![-1.5, -1.0, 1.0, 1.5],
            slopes: vec![0.6, -0.6, 0.6, -0.6],
            coupling: 0.3,
            t0: 0.5,
            frozen_at: None,
        }
    }

    fn diagonal(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let dt = self.frozen_at.unwrap_or(t) - self.t0;
        self.levels
            .iter()
            .zip(&self.slopes)
            .map(move |(e, s)| e + s * dt)
    }
}

/// How the coefficient vector is normalised when forming `g|φ|²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityScaling {
    /// `ρ_k = |φ_k|²` with `Σ|φ_k|² = 1`.
    #[default]
    L2,
    /// Grid-function normalisation `Σ|ψ_k|² h_x = 1`, i.e. `ρ_k = |φ_k|²/h_x`.
    Grid,
}

/// Gaussian well `V(x,t) = −depth·exp(−width·(x − R(t))²)` with centre
/// `R(t) = base + Σ a·exp(−rate·(t − c)²)` over `bumps = [a, c, rate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingWell {
    pub depth: f64,
    pub width: f64,
    pub base: f64,
    pub bumps: Vec<[f64; 3]>,
}

impl Default for MovingWell {
    fn default() -> Self {
        Self {
            depth: 1.0,
            width: 0.1,
            base: 25.0,
            bumps: vec![[1.5, 0.1, 25.0], [1.0, 0.5, 25.0]],
        }
    }
}

impl MovingWell {
    pub fn center(&self, t: f64) -> f64 {
        self.base
            + self
                .bumps
                .iter()
                .map(|[a, c, rate]| a * (-rate * (t - c).powi(2)).exp())
                .sum::<f64>()
    }

    pub fn value(&self, x: f64, center: f64) -> f64 {
        -self.depth * (-self.width * (x - center).powi(2)).exp()
    }
}

/// Periodic 1D nonlinear Schrödinger operator
/// `−½∂²ₓ + V(x,t) + g|ψ|²` on nodes `x_k = k·h_x`, `h_x = L/d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlseHamiltonian {
    pub length: f64,
    pub grid: usize,
    pub coupling: f64,
    #[serde(default)]
    pub density_scaling: DensityScaling,
    #[serde(default)]
    pub well: MovingWell,
}

impl NlseHamiltonian {
    /// Solves `(I + c·K) y = r` in place, column by column, where `K = −½∂²ₓ`
    /// is the periodic three-point kinetic operator.
    pub fn solve_shifted_kinetic(&self, c: Complex64, r: &mut CMatrix) {
        let hx2 = self.spacing().powi(2);
        let diag = vec![Complex64::new(1.0, 0.0) + c / hx2; self.grid];
        let off = -c / (2.0 * hx2);
        for mut col in r.column_iter_mut() {
            let rhs: Vec<Complex64> = col.iter().copied().collect();
            let y = solve_periodic_tridiagonal(off, &diag, &rhs);
            col.iter_mut().zip(y).for_each(|(a, b)| *a = b);
        }
    }

    /// `L = 50`, `h_x = 0.025`, `g = 2.5`.
    pub fn standard() -> Self {
        Self::with_spacing(0.025)
    }

    pub fn with_spacing(hx: f64) -> Self {
        let length = 50.0;
        Self {
            length,
            grid: (length / hx).round() as usize,
            coupling: 2.5,
            density_scaling: DensityScaling::L2,
            well: MovingWell::default(),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.grid as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let hx = self.spacing();
        (0..self.grid).map(|k| k as f64 * hx).collect()
    }

    pub fn potential(&self, t: f64) -> Vec<f64> {
        let r = self.well.center(t);
        let hx = self.spacing();
        (0..self.grid)
            .map(|k| self.well.value(k as f64 * hx, r))
            .collect()
    }

    /// Coupling multiplying `|φ_k|²` for the chosen normalisation.
    pub fn effective_coupling(&self) -> f64 {
        match self.density_scaling {
            DensityScaling::L2 => self.coupling,
            DensityScaling::Grid => self.coupling / self.spacing(),
        }
    }

    /// Self-consistent ground state of `H(t, P)` by shifted inverse iteration
    /// with the density refreshed every sweep. Converges once the eigen-residual
    /// `‖Hφ − λφ‖` drops below `tol`. Returns the state and `λ = φ*Hφ`.
    pub fn ground_state(&self, t: f64, tol: f64, max_iter: usize) -> Result<(OrbitalSet, f64)> {
        let d = self.grid;
        let hx = self.spacing();
        let g = self.effective_coupling();
        let v = self.potential(t);
        let kin = 1.0 / (hx * hx);
        let off = -0.5 * kin;
        let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
        // H − σ ≥ min(V) − σ > 0 because the kinetic and g·ρ terms are non-negative.
        let shift = vmin - 0.5;

        let r = self.well.center(t);
        let mut phi: Vec<f64> = (0..d)
            .map(|k| (-0.5 * (k as f64 * hx - r).powi(2)).exp())
            .collect();
        normalize(&mut phi);

        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let pot: Vec<f64> = v
                .iter()
                .zip(&phi)
                .map(|(vk, p)| vk + g * p * p)
                .collect();
            let hphi = apply_periodic(&phi, &pot, kin, off);
            lambda = dot(&phi, &hphi);
            let res = hphi
                .iter()
                .zip(&phi)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if res <= tol {
                let data = CMatrix::from_iterator(d, 1, phi.iter().map(|&x| Complex64::new(x, 0.0)));
                return Ok((OrbitalSet::new(data)?, lambda));
            }
            let diag: Vec<f64> = pot.iter().map(|p| kin + p - shift).collect();
            phi = solve_periodic_tridiagonal(off, &diag, &phi);
            normalize(&mut phi);
        }
        Err(Error::Config(format!(
            "ground state did not converge in {max_iter} sweeps (λ = {lambda})"
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn apply_periodic(x: &[f64], pot: &[f64], kin: f64, off: f64) -> Vec<f64> {
    let d = x.len();
    (0..d)
        .map(|k| {
            let left = x[(k + d - 1) % d];
            let right = x[(k + 1) % d];
            (kin + pot[k]) * x[k] + off * (left + right)
        })
        .collect()
}

/// Solves a symmetric cyclic tridiagonal system with constant off-diagonal
/// `off` (including the corner entries) by Sherman–Morrison on top of the
/// Thomas algorithm.
pub(crate) fn solve_periodic_tridiagonal<T>(off: T, diag: &[T], rhs: &[T]) -> Vec<T>
where
    T: ComplexField + Copy,
{
    let n = diag.len();
    assert!(n >= 3, "cyclic solve needs at least 3 unknowns");
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= off * off / gamma;

    let thomas = |r: &[T]| -> Vec<T> {
        let mut c = vec![T::zero(); n];
        let mut x = vec![T::zero(); n];
        c[0] = off / b[0];
        x[0] = r[0] / b[0];
        for i in 1..n {
            let m = b[i] - off * c[i - 1];
            c[i] = off / m;
            x[i] = (r[i] - off * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c[i] * next;
        }
        x
    };

    let y = thomas(rhs);
    let mut u = vec![T::zero(); n];
    u[0] = gamma;
    u[n - 1] = off;
    let z = thomas(&u);
    let vy = y[0] + off / gamma * y[n - 1];
    let vz = z[0] + off / gamma * z[n - 1];
    let f = vy / (T::one() + vz);
    y.iter().zip(&z).map(|(&yi, &zi)| yi - f * zi).collect()
}

/// Problem definition selected in the run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HamiltonianSpec {
    Toy(ToyHamiltonian),
    Chain(ChainHamiltonian),
    Nlse(NlseHamiltonian),
}

impl HamiltonianSpec {
    /// Applies `(I + c·K)⁻¹` for the stiff kinetic part `K` of grid models;
    /// a no-op for the small dense models.
    pub fn kinetic_inverse(&self, c: Complex64, r: &mut CMatrix) {
        if let HamiltonianSpec::Nlse(n) = self {
            n.solve_shifted_kinetic(c, r);
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HamiltonianSpec::Toy(_) => 2,
            HamiltonianSpec::Chain(c) => c.levels.len(),
            HamiltonianSpec::Nlse(n) => n.grid,
        }
    }

    /// Coefficient of the local density term.
    pub fn coupling(&self) -> f64 {
        match self {
            HamiltonianSpec::Nlse(n) => n.effective_coupling(),
            _ => 0.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.coupling() == 0.0
    }

    /// Freezes the explicit time dependence at `t`.
    pub fn at(&self, t: f64) -> InstantHamiltonian<'_> {
        let potential = match self {
            HamiltonianSpec::Nlse(n) => n.potential(t),
            _ => Vec::new(),
        };
        InstantHamiltonian {
            spec: self,
            t,
            potential,
        }
    }

    /// Dense `H₀(t)`; refuses grids above 512 points.
    pub fn matrix(&self, t: f64) -> Result<CMatrix> {
        let d = self.dim();
        if d > 512 {
            return Err(Error::Unsupported(format!(
                "dense Hamiltonian for d = {d}"
            )));
        }
        let inst = self.at(t);
        let eye = CMatrix::identity(d, d);
        let mut out = CMatrix::zeros(d, d);
        inst.apply_linear_into(&eye, &mut out);
        Ok(out)
    }

    /// `∂H₀/∂t` where available in closed form.
    pub fn time_derivative(&self, _t: f64) -> Option<CMatrix> {
        let diag: Vec<f64> = match self {
            HamiltonianSpec::Toy(toy) if toy.frozen_at.is_none() => vec![1.0, -1.0],
            HamiltonianSpec::Toy(_) => vec![0.0, 0.0],
            HamiltonianSpec::Chain(c) if c.frozen_at.is_none() => c.slopes.clone(),
            HamiltonianSpec::Chain(c) => vec![0.0; c.levels.len()],
            HamiltonianSpec::Nlse(_) => return None,
        };
        let v = nalgebra::DVector::from_iterator(
            diag.len(),
            diag.into_iter().map(|x| Complex64::new(x, 0.0)),
        );
        Some(CMatrix::from_diagonal(&v))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HamiltonianSpec::Toy(t) if !(t.delta > 0.0) => {
                Err(Error::Config("toy delta must be > 0".into()))
            }
            HamiltonianSpec::Chain(c) if c.levels.len() != c.slopes.len() || c.levels.is_empty() => {
                Err(Error::Config("chain levels and slopes must have equal, non-zero length".into()))
            }
            HamiltonianSpec::Nlse(n) if n.grid < 3 || !(n.length > 0.0) => {
                Err(Error::Config("nlse needs length > 0 and at least 3 grid points".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A Hamiltonian with its explicit time dependence evaluated at one instant.
pub struct InstantHamiltonian<'a> {
    spec: &'a HamiltonianSpec,
    t: f64,
    potential: Vec<f64>,
}

impl InstantHamiltonian<'_> {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn coupling(&self) -> f64 {
        self.spec.coupling()
    }

    /// `out = H₀(t)·x`, column by column.
    pub fn apply_linear_into(&self, x: &CMatrix, out: &mut CMatrix) {
        debug_assert_eq!(x.shape(), out.shape());
        match self.spec {
            HamiltonianSpec::Toy(toy) => {
                let a = toy.detuning(self.t);
                let b = toy.delta;
                for j in 0..x.ncols() {
                    let (x0, x1) = (x[(0, j)], x[(1, j)]);
                    out[(0, j)] = x0 * a + x1 * b;
                    out[(1, j)] = x0 * b - x1 * a;
                }
            }
            HamiltonianSpec::Chain(chain) => {
                let d = x.nrows();
                let diag: Vec<f64> = chain.diagonal(self.t).collect();
                let c = chain.coupling;
                for j in 0..x.ncols() {
                    for k in 0..d {
                        let mut acc = x[(k, j)] * diag[k];
                        if k > 0 {
                            acc += x[(k - 1, j)] * c;
                        }
                        if k + 1 < d {
                            acc += x[(k + 1, j)] * c;
                        }
                        out[(k, j)] = acc;
                    }
                }
            }
            HamiltonianSpec::Nlse(nlse) => {
                let d = x.nrows();
                let hx = nlse.spacing();
                let kin = 1.0 / (hx * hx);
                let off = -0.5 * kin;
                for j in 0..x.ncols() {
                    let col = x.column(j);
                    let mut dst = out.column_mut(j);
                    for k in 0..d {
                        let left = col[if k == 0 { d - 1 } else { k - 1 }];
                        let right = col[if k + 1 == d { 0 } else { k + 1 }];
                        dst[k] = col[k] * (kin + self.potential[k]) + (left + right) * off;
                    }
                }
            }
        }
    }

    pub fn apply_linear(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        self.apply_linear_into(x, &mut out);
        out
    }
}

/// Local density `ρ_k = Σ_j |Φ_kj|²`.
pub fn local_density(phi: &CMatrix) -> Vec<f64> {
    let mut rho = vec![0.0; phi.nrows()];
    for col in phi.column_iter() {
        for (r, z) in rho.iter_mut().zip(col.iter()) {
            *r += z.norm_sqr();
        }
    }
    rho
}

fn scale_rows(weights: &[f64], x: &CMatrix) -> CMatrix {
    CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * weights[i])
}

/// Formulation-specific effective Hamiltonian `H^e(t, φ)` frozen at a state,
/// usable as a linear operator on arbitrary vectors:
///
/// `H^e V = (H₀V + c₁·gρ⊙V)·A − V·B − c₂·gρ⊙V`
///
/// * Schrödinger: `c₁ = 1, A = I, B = 0, c₂ = 0`
/// * PT: `c₁ = 1, A = I, B = Φ*HΦ, c₂ = 0`
/// * PT-Hamiltonian: `c₁ = 2, A = 2I − Φ*Φ, B = Φ*HΦ, c₂ = 1`
///
/// where `H = H₀ + g·diag(ρ)` and `ρ` is the local density of the frozen state.
pub struct EffectiveOperator<'a> {
    inst: &'a InstantHamiltonian<'a>,
    g_rho: Option<Vec<f64>>,
    c1: f64,
    c2: f64,
    right: Option<CMatrix>,
    shift: Option<CMatrix>,
}

impl<'a> EffectiveOperator<'a> {
    pub fn new(inst: &'a InstantHamiltonian<'a>, kind: DynamicsKind, phi: &CMatrix) -> Result<Self> {
        if phi.nrows() != inst.dim() {
            return Err(Error::shape(inst.dim(), phi.nrows()));
        }
        let g = inst.coupling();
        let g_rho = (g != 0.0).then(|| local_density(phi).into_iter().map(|r| g * r).collect::<Vec<_>>());
        let h_phi = {
            let mut out = inst.apply_linear(phi);
            if let Some(w) = &g_rho {
                out += scale_rows(w, phi);
            }
            out
        };
        let n = phi.ncols();
        let (c1, c2, right, shift) = match kind {
            DynamicsKind::Schrodinger => (1.0, 0.0, None, None),
            DynamicsKind::Pt => (1.0, 0.0, None, Some(phi.ad_mul(&h_phi))),
            DynamicsKind::PtHamiltonian => {
                let a = CMatrix::identity(n, n) * Complex64::new(2.0, 0.0) - phi.ad_mul(phi);
                (2.0, 1.0, Some(a), Some(phi.ad_mul(&h_phi)))
            }
            DynamicsKind::VonNeumann => {
                return Err(Error::Unsupported(
                    "von Neumann dynamics has no orbital effective Hamiltonian".into(),
                ))
            }
        };
        Ok(Self {
            inst,
            g_rho,
            c1,
            c2,
            right,
            shift,
        })
    }

    pub fn apply(&self, v: &CMatrix) -> CMatrix {
        let mut out = self.inst.apply_linear(v);
        if let Some(w) = &self.g_rho {
            out += scale_rows(w, v) * Complex64::new(self.c1, 0.0);
        }
        if let Some(a) = &self.right {
            out = out * a;
        }
        if let Some(b) = &self.shift {
            out -= v * b;
        }
        if let (Some(w), true) = (&self.g_rho, self.c2 != 0.0) {
            out -= scale_rows(w, v) * Complex64::new(self.c2, 0.0);
        }
        out
    }
}

/// `out = H^e(t, φ)·φ` for the orbital formulations, evaluating `H₀φ` once.
pub(crate) fn effective_apply_self(
    inst: &InstantHamiltonian<'_>,
    kind: DynamicsKind,
    phi: &CMatrix,
    out: &mut CMatrix,
) -> Result<()> {
    inst.apply_linear_into(phi, out);
    let g = inst.coupling();
    let nonlinear = (g != 0.0).then(|| {
        let rho = local_density(phi);
        let w: Vec<f64> = rho.into_iter().map(|r| g * r).collect();
        scale_rows(&w, phi)
    });
    match kind {
        DynamicsKind::Schrodinger => {
            if let Some(nl) = &nonlinear {
                *out += nl;
            }
        }
        DynamicsKind::Pt => {
            if let Some(nl) = &nonlinear {
                *out += nl;
            }
            let b = phi.ad_mul(out);
            out.gemm(Complex64::new(-1.0, 0.0), phi, &b, Complex64::new(1.0, 0.0));
        }
        DynamicsKind::PtHamiltonian => {
            // out holds H₀φ; B = φ*(H₀φ + Nl), result = (H₀φ + 2Nl)A − φB − Nl.
            let n = phi.ncols();
            let mut b = phi.ad_mul(out);
            if let Some(nl) = &nonlinear {
                b += phi.ad_mul(nl);
                axpy(out, Complex64::new(2.0, 0.0), nl);
            }
            if n == 1 {
                let a = Complex64::new(2.0 - phi.norm_squared(), 0.0);
                *out *= a;
            } else {
                let a = CMatrix::identity(n, n) * Complex64::new(2.0, 0.0) - phi.ad_mul(phi);
                *out = &*out * a;
            }
            out.gemm(Complex64::new(-1.0, 0.0), phi, &b, Complex64::new(1.0, 0.0));
            if let Some(nl) = &nonlinear {
                *out -= nl;
            }
        }
        DynamicsKind::VonNeumann => {
            return Err(Error::Unsupported(
                "von Neumann dynamics has no orbital effective Hamiltonian".into(),
            ))
        }
    }
    Ok(())
}

/// `H(t, P)·Φ` with `P = ΦΦ*` entering through the local density.
pub fn apply_h(ham: &HamiltonianSpec, t: f64, phi: &OrbitalSet) -> Result<OrbitalSet> {
    effective_h_apply(ham, t, phi, DynamicsKind::Schrodinger)
}

/// `H^e(t, Φ)·Φ` for the requested formulation.
pub fn effective_h_apply(
    ham: &HamiltonianSpec,
    t: f64,
    phi: &OrbitalSet,
    kind: DynamicsKind,
) -> Result<OrbitalSet> {
    if phi.dim() != ham.dim() {
        return Err(Error::shape(ham.dim(), phi.dim()));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    let inst = ham.at(t);
    let mut out = CMatrix::zeros(phi.dim(), phi.orbitals());
    effective_apply_self(&inst, kind, phi.data(), &mut out)?;
    OrbitalSet::new(out)
}

/// A full problem: Hamiltonian, `ε`, final time and orbital count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub epsilon: f64,
    pub final_time: f64,
    #[serde(default = "one")]
    pub orbitals: usize,
    pub hamiltonian: HamiltonianSpec,
}

fn one() -> usize {
    1
}

impl ProblemConfig {
    pub fn new(hamiltonian: HamiltonianSpec, epsilon: f64, final_time: f64) -> Self {
        Self {
            epsilon,
            final_time,
            orbitals: 1,
            hamiltonian,
        }
    }

    pub fn toy(delta: f64, epsilon: f64) -> Self {
        Self::new(HamiltonianSpec::Toy(ToyHamiltonian::new(0.5, delta)), epsilon, 1.0)
    }

    pub fn with_orbitals(mut self, n: usize) -> Self {
        self.orbitals = n;
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return Err(Error::Config(format!("final time must be > 0, got {}", self.final_time)));
        }
        if self.orbitals == 0 || self.orbitals > self.hamiltonian.dim() {
            return Err(Error::Config(format!(
                "orbital count {} outside 1..={}",
                self.orbitals,
                self.hamiltonian.dim()
            )));
        }
        self.hamiltonian.validate()
    }

    /// Lowest `N` eigenvectors of `H(0)` (self-consistent ground state for
    /// the NLSE). Each column's largest component is made real positive.
    pub fn initial_state(&self) -> Result<OrbitalSet> {
        self.validate()?;
        match &self.hamiltonian {
            HamiltonianSpec::Nlse(nlse) => {
                if self.orbitals != 1 {
                    return Err(Error::Unsupported("NLSE initial state with N > 1".into()));
                }
                Ok(nlse.ground_state(0.0, 1e-10, 20_000)?.0)
            }
            ham => {
                let spectrum = eig_hermitian(&ham.matrix(0.0)?)?;
                let n = self.orbitals;
                let mut vecs = spectrum.eigenvectors.columns(0, n).into_owned();
                for mut col in vecs.column_iter_mut() {
                    let (imax, _) = col
                        .iter()
                        .enumerate()
                        .fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 + 1e-12 { (i, z.norm()) } else { acc });
                    let phase = col[imax].conj() / col[imax].norm();
                    col *= phase;
                }
                OrbitalSet::new(vecs)
            }
        }
    }
}

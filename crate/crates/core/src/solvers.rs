//! Anderson-accelerated fixed-point iteration for the implicit stages.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{axpy, CMatrix, Complex64};

/// Settings of the Anderson mixing.
///
/// `mixing_dim` counts stored iterates including the current one, so at most
/// `mixing_dim − 1` difference pairs enter the least-squares problem and
/// `mixing_dim = 1` is plain damped iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AndersonConfig {
    #[serde(rename = "alpha")]
    pub step_length: f64,
    pub mixing_dim: usize,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub preconditioner: PreconditionerKind,
}

/// Residual preconditioning of the implicit stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    #[default]
    None,
    /// Exact inverse of the stage matrix restricted to the kinetic operator
    /// (grid models only; a no-op elsewhere).
    Kinetic,
}

impl Default for AndersonConfig {
    fn default() -> Self {
        Self {
            step_length: 1.0,
            mixing_dim: 20,
            tol: 1e-8,
            max_iter: 200,
            preconditioner: PreconditionerKind::None,
        }
    }
}

impl AndersonConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_length > 0.0 && self.step_length <= 1.0) {
            return Err(Error::Config(format!(
                "anderson.alpha must lie in (0, 1], got {}",
                self.step_length
            )));
        }
        if self.mixing_dim == 0 {
            return Err(Error::Config("anderson.mixing_dim must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("anderson.tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("anderson.max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one fixed-point solve. `iterations` counts evaluations of the map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Combines the reports of consecutive solves.
    pub fn merge(self, other: SolveReport) -> SolveReport {
        SolveReport {
            iterations: self.iterations + other.iterations,
            final_residual: self.final_residual.max(other.final_residual),
            converged: self.converged && other.converged,
        }
    }

    /// Neutral element of [`SolveReport::merge`].
    pub fn empty() -> SolveReport {
        SolveReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
        }
    }
}

/// Maps a residual `F(x) − x` to the update direction used by the mixing.
pub trait Preconditioner {
    fn apply(&self, residual: &mut CMatrix);
}

/// No preconditioning.
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, _residual: &mut CMatrix) {}
}

/// Solves `x = F(x)` starting from `x0`, without preconditioning.
///
/// Returns the first iterate whose residual `‖F(x) − x‖₂` (over the flattened
/// real and imaginary parts) is at most `tol`. Running out of iterations, or a
/// non-finite residual, yields a non-converged report rather than an error;
/// errors raised by `map` are passed through.
pub fn anderson_solve<F>(map: F, x0: &CMatrix, cfg: &AndersonConfig) -> Result<(CMatrix, SolveReport)>
where
    F: FnMut(&CMatrix, &mut CMatrix) -> Result<()>,
{
    anderson_solve_preconditioned(map, &Identity, x0, cfg)
}

pub fn anderson_solve_preconditioned<F, P>(
    map: F,
    precond: &P,
    x0: &CMatrix,
    cfg: &AndersonConfig,
) -> Result<(CMatrix, SolveReport)>
where
    F: FnMut(&CMatrix, &mut CMatrix) -> Result<()>,
    P: Preconditioner + ?Sized,
{
    iterate(map, precond, x0, cfg, false)
}

/// Like [`anderson_solve_preconditioned`], but on convergence returns the
/// image `F(x)` of the accepted iterate instead of `x` itself. Both lie within
/// `tol` of each other; for midpoint-type stage maps the image is the one that
/// inherits the map's structure (e.g. norm conservation).
pub fn anderson_solve_image<F, P>(map: F, precond: &P, x0: &CMatrix, cfg: &AndersonConfig) -> Result<(CMatrix, SolveReport)>
where
    F: FnMut(&CMatrix, &mut CMatrix) -> Result<()>,
    P: Preconditioner + ?Sized,
{
    iterate(map, precond, x0, cfg, true)
}

fn iterate<F, P>(mut map: F, precond: &P, x0: &CMatrix, cfg: &AndersonConfig, image: bool) -> Result<(CMatrix, SolveReport)>
where
    F: FnMut(&CMatrix, &mut CMatrix) -> Result<()>,
    P: Preconditioner + ?Sized,
{
    let alpha = Complex64::new(cfg.step_length, 0.0);
    let history = cfg.mixing_dim.saturating_sub(1);
    let mut x = x0.clone();
    let mut fx = CMatrix::zeros(x.nrows(), x.ncols());
    let mut prev: Option<(CMatrix, CMatrix)> = None;
    let mut dx: VecDeque<CMatrix> = VecDeque::with_capacity(history);
    let mut df: VecDeque<CMatrix> = VecDeque::with_capacity(history);
    let mut gram: VecDeque<VecDeque<f64>> = VecDeque::with_capacity(history);
    let mut residual = f64::INFINITY;

    for k in 1..=cfg.max_iter {
        map(&x, &mut fx)?;
        // fx ← F(x) − x
        fx -= &x;
        residual = fx.norm();
        if residual <= cfg.tol {
            if image {
                fx += &x;
                x = fx;
            }
            return Ok((x, SolveReport { iterations: k, final_residual: residual, converged: true }));
        }
        if !residual.is_finite() {
            return Ok((x, SolveReport { iterations: k, final_residual: residual, converged: false }));
        }
        precond.apply(&mut fx);

        if history > 0 {
            if let Some((px, pf)) = prev.take() {
                if dx.len() == history {
                    dx.pop_front();
                    df.pop_front();
                    gram.pop_front();
                    gram.iter_mut().for_each(|row| {
                        row.pop_front();
                    });
                }
                let new_dx = &x - px;
                let new_df = &fx - pf;
                // gram[i][j] = Re⟨ΔF_i, ΔF_j⟩
                let dots: Vec<f64> = df.iter().map(|col| col.dotc(&new_df).re).collect();
                for (row, d) in gram.iter_mut().zip(&dots) {
                    row.push_back(*d);
                }
                let mut row: VecDeque<f64> = dots.iter().copied().collect();
                row.push_back(new_df.norm_squared());
                gram.push_back(row);
                dx.push_back(new_dx);
                df.push_back(new_df);
            }
            prev = Some((x.clone(), fx.clone()));
        }

        // x ← x + αf − (ΔX + αΔF)γ,  γ = argmin ‖f − ΔFγ‖ over real γ. The stage
        // maps involve Φ* and are only ℝ-linear, so complex γ would not match
        // the real least-squares problem and stalls.
        let mut next = &x + &fx * alpha;
        loop {
            let m = df.len();
            if m == 0 {
                break;
            }
            let rhs = DVector::from_iterator(m, df.iter().map(|col| col.dotc(&fx).re));
            match solve_normal_equations(&gram, rhs) {
                Some(gamma) => {
                    for (i, &g) in gamma.iter().enumerate() {
                        let g = Complex64::new(g, 0.0);
                        axpy(&mut next, -g, &dx[i]);
                        axpy(&mut next, -g * alpha, &df[i]);
                    }
                    break;
                }
                None => {
                    dx.pop_front();
                    df.pop_front();
                    gram.pop_front();
                    gram.iter_mut().for_each(|row| {
                        row.pop_front();
                    });
                }
            }
        }
        x = next;
    }
    Ok((x, SolveReport { iterations: cfg.max_iter, final_residual: residual, converged: false }))
}

const RIDGE: f64 = 1e-12;
const CONDITION_LIMIT: f64 = 1e12;

/// Normal equations of the mixing least-squares problem, equilibrated to unit
/// diagonal and ridge-regularised; `None` when they are too ill-conditioned
/// to trust.
fn solve_normal_equations(gram: &VecDeque<VecDeque<f64>>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let m = gram.len();
    let scale: Vec<f64> = (0..m).map(|i| gram[i][i].sqrt().recip()).collect();
    if scale.iter().any(|s| !s.is_finite()) {
        return None;
    }
    let mut a = DMatrix::from_fn(m, m, |i, j| gram[i][j] * scale[i] * scale[j]);
    for i in 0..m {
        a[(i, i)] += RIDGE;
    }
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let (lo, hi) = (0..m).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
        let v = l[(i, i)].abs();
        (lo.min(v), hi.max(v))
    });
    if (hi / lo).powi(2) > CONDITION_LIMIT {
        return None;
    }
    let scaled_rhs = DVector::from_fn(m, |i, _| rhs[i] * scale[i]);
    let mut gamma = chol.solve(&scaled_rhs);
    for (g, s) in gamma.iter_mut().zip(&scale) {
        *g *= *s;
    }
    Some(gamma)
}

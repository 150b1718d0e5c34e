//! RK4, implicit midpoint (GL2) and Crank–Nicolson steppers plus the
//! trajectory driver.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrixView;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsKind, Flow, OrbitalFlow};
use crate::error::{Error, Result};
use crate::hamiltonians::ProblemConfig;
use crate::solvers::{anderson_solve_image, AndersonConfig, Identity, Preconditioner, PreconditionerKind, SolveReport};
use crate::state::{axpy, lowdin_orthonormalize, CMatrix, Complex64, OrbitalSet};

/// Written `RK4`, `GL2` or `CN` (case-insensitive on input).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    Rk4,
    Gl2,
    Cn,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Rk4, Scheme::Gl2, Scheme::Cn];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Rk4 => "RK4",
            Scheme::Gl2 => "GL2",
            Scheme::Cn => "CN",
        }
    }

    pub fn is_implicit(self) -> bool {
        !matches!(self, Scheme::Rk4)
    }

    /// Classical order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            Scheme::Rk4 => 4,
            Scheme::Gl2 | Scheme::Cn => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}' (expected one of RK4, GL2, CN)")))
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.label().into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub h: f64,
    #[serde(default, rename = "anderson")]
    pub solver: AndersonConfig,
    /// Keep only states at multiples of this interval (plus the final time).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    /// Replace a failed implicit step by two half steps instead of aborting.
    #[serde(default)]
    pub retry_halve: bool,
    /// Restore orthonormal columns after every step. Only meaningful for
    /// flows that conserve `Φ*Φ`. Implicit reference runs use it to wipe out
    /// the norm error left by the solver tolerance; RK4 does better without
    /// it since its update is already compensated.
    #[serde(default)]
    pub renormalize: bool,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, h: f64) -> Self {
        Self {
            scheme,
            h,
            solver: AndersonConfig::default(),
            record_interval: None,
            retry_halve: false,
            renormalize: false,
        }
    }

    pub fn with_solver(mut self, solver: AndersonConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.solver.tol = tol;
        self
    }

    pub fn recording_every(mut self, interval: f64) -> Self {
        self.record_interval = Some(interval);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Config(format!("time step must be > 0, got {}", self.h)));
        }
        if let Some(iv) = self.record_interval {
            if !(iv > 0.0) {
                return Err(Error::Config(format!("record interval must be > 0, got {iv}")));
            }
        }
        self.solver.validate()
    }

    /// Number of steps to reach `final_time`; the last step absorbs rounding.
    pub fn step_count(&self, final_time: f64) -> usize {
        ((final_time / self.h).round() as usize).max(1)
    }

    fn stride(&self) -> usize {
        match self.record_interval {
            Some(iv) if iv > self.h => (iv / self.h).round().max(1.0) as usize,
            _ => 1,
        }
    }
}

/// Recorded states of one propagation.
///
/// States are stored contiguously; `reports[i]` aggregates the implicit
/// solves performed since the previous recorded sample (empty for RK4 and
/// for the initial sample).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub reports: Vec<SolveReport>,
    /// Steps actually taken (including halved sub-steps).
    pub steps: usize,
    /// Why propagation stopped early, if it did.
    pub failure: Option<Error>,
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Trajectory {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            times: Vec::new(),
            reports: Vec::new(),
            steps: 0,
            failure: None,
            rows,
            cols,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: &CMatrix, report: SolveReport) {
        debug_assert_eq!(state.shape(), (self.rows, self.cols));
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.reports.push(report);
        self.data.extend_from_slice(state.as_slice());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn view(&self, i: usize) -> DMatrixView<'_, Complex64> {
        let n = self.rows * self.cols;
        DMatrixView::from_slice(&self.data[i * n..(i + 1) * n], self.rows, self.cols)
    }

    pub fn state(&self, i: usize) -> OrbitalSet {
        OrbitalSet::from_matrix_unchecked(self.view(i).into_owned())
    }

    pub fn states(&self) -> impl Iterator<Item = OrbitalSet> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    pub fn final_state(&self) -> Option<OrbitalSet> {
        self.len().checked_sub(1).map(|i| self.state(i))
    }

    /// Index of the sample at time `t` (within `tol`).
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    pub fn total_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.iterations).sum()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Preallocated stage buffers for [`rk4_step_into`], plus the Kahan carry
/// of the running sum `x += Δx`. Reuse one workspace for a whole run: with
/// 10⁶ steps the uncompensated update drifts by ~1e-12.
pub struct Rk4Workspace {
    k: [CMatrix; 4],
    tmp: CMatrix,
    carry: CMatrix,
}

impl Rk4Workspace {
    pub fn new(rows: usize, cols: usize) -> Self {
        let z = CMatrix::zeros(rows, cols);
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z.clone(),
            carry: z,
        }
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// One classical RK4 step, overwriting `x`.
pub fn rk4_step_into<F: Flow + ?Sized>(flow: &F, t: f64, x: &mut CMatrix, h: f64, ws: &mut Rk4Workspace) -> Result<()> {
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    flow.eval(t, x, k1)?;
    tmp.copy_from(x);
    axpy(tmp, real(0.5 * h), k1);
    flow.eval(t + 0.5 * h, tmp, k2)?;
    tmp.copy_from(x);
    axpy(tmp, real(0.5 * h), k2);
    flow.eval(t + 0.5 * h, tmp, k3)?;
    tmp.copy_from(x);
    axpy(tmp, real(h), k3);
    flow.eval(t + h, tmp, k4)?;
    tmp.copy_from(k1);
    tmp.zip_apply(k4, |a, b| *a += b);
    tmp.scale_mut(h / 6.0);
    axpy(tmp, real(h / 3.0), k2);
    axpy(tmp, real(h / 3.0), k3);
    let carry = &mut ws.carry;
    for ((xi, di), ci) in x.iter_mut().zip(tmp.iter()).zip(carry.iter_mut()) {
        let y = di - *ci;
        let s = *xi + y;
        *ci = (s - *xi) - y;
        *xi = s;
    }
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("RK4 stage"))
    }
}

pub fn rk4_step<F: Flow + ?Sized>(flow: &F, t: f64, x: &CMatrix, h: f64) -> Result<CMatrix> {
    let mut ws = Rk4Workspace::new(x.nrows(), x.ncols());
    let mut y = x.clone();
    rk4_step_into(flow, t, &mut y, h, &mut ws)?;
    Ok(y)
}

/// Implicit midpoint step `y = x + h·f(t + h/2, (x + y)/2)`, warm-started at `x`.
pub fn gl2_step<F: Flow + ?Sized>(flow: &F, t: f64, x: &CMatrix, h: f64, solver: &AndersonConfig) -> Result<(CMatrix, SolveReport)> {
    let tm = t + 0.5 * h;
    let mut mid = x.clone();
    let map = |y: &CMatrix, out: &mut CMatrix| {
        mid.copy_from(x);
        mid += y;
        mid *= real(0.5);
        flow.eval(tm, &mid, out)?;
        *out *= real(h);
        *out += x;
        Ok(())
    };
    solve_stage(flow, map, x, h, solver)
}

/// Trapezoidal step `y = x + (h/2)·(f(t, x) + f(t + h, y))`, warm-started at `x`.
pub fn cn_step<F: Flow + ?Sized>(flow: &F, t: f64, x: &CMatrix, h: f64, solver: &AndersonConfig) -> Result<(CMatrix, SolveReport)> {
    let mut base = CMatrix::zeros(x.nrows(), x.ncols());
    flow.eval(t, x, &mut base)?;
    base *= real(0.5 * h);
    base += x;
    let map = |y: &CMatrix, out: &mut CMatrix| {
        flow.eval(t + h, y, out)?;
        *out *= real(0.5 * h);
        *out += &base;
        Ok(())
    };
    solve_stage(flow, map, x, h, solver)
}

/// Stage residual preconditioner backed by [`Flow::precondition_stage`].
struct StagePreconditioner<'a, F: ?Sized> {
    flow: &'a F,
    h: f64,
}

impl<F: Flow + ?Sized> Preconditioner for StagePreconditioner<'_, F> {
    fn apply(&self, residual: &mut CMatrix) {
        self.flow.precondition_stage(self.h, residual);
    }
}

fn solve_stage<F, M>(flow: &F, map: M, x: &CMatrix, h: f64, solver: &AndersonConfig) -> Result<(CMatrix, SolveReport)>
where
    F: Flow + ?Sized,
    M: FnMut(&CMatrix, &mut CMatrix) -> Result<()>,
{
    match solver.preconditioner {
        PreconditionerKind::None => anderson_solve_image(map, &Identity, x, solver),
        PreconditionerKind::Kinetic => anderson_solve_image(map, &StagePreconditioner { flow, h }, x, solver),
    }
}

const MAX_HALVINGS: u32 = 8;
const BLOW_UP_FACTOR: f64 = 1e3;

struct Stepper<'a, F: ?Sized> {
    flow: &'a F,
    cfg: &'a IntegratorConfig,
    ws: Rk4Workspace,
}

impl<F: Flow + ?Sized> Stepper<'_, F> {
    fn step(&mut self, t: f64, x: &mut CMatrix, h: f64, depth: u32) -> Result<SolveReport> {
        let result = match self.cfg.scheme {
            Scheme::Rk4 => return rk4_step_into(self.flow, t, x, h, &mut self.ws).map(|_| SolveReport::empty()),
            Scheme::Gl2 => gl2_step(self.flow, t, x, h, &self.cfg.solver)?,
            Scheme::Cn => cn_step(self.flow, t, x, h, &self.cfg.solver)?,
        };
        match result {
            (y, rep) if rep.converged => {
                *x = y;
                Ok(rep)
            }
            (_, rep) if self.cfg.retry_halve && depth < MAX_HALVINGS => {
                let first = self.step(t, x, 0.5 * h, depth + 1)?;
                let second = self.step(t + 0.5 * h, x, 0.5 * h, depth + 1)?;
                Ok(SolveReport { iterations: rep.iterations, ..SolveReport::empty() }
                    .merge(first)
                    .merge(second))
            }
            (_, rep) => Err(Error::SolverDiverged(rep)),
        }
    }
}

/// Integrates `∂t x = f(t, x)` from `t0` to `t_end` on the uniform grid
/// `t0 + n·h`, the last step shortened or stretched to land on `t_end`.
///
/// A failed step ends the run; the trajectory keeps everything recorded so
/// far and carries the error in `failure`.
pub fn propagate_flow<F: Flow + ?Sized>(flow: &F, t0: f64, t_end: f64, x0: &CMatrix, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(Error::Config(format!("final time {t_end} must exceed start {t0}")));
    }
    let steps = cfg.step_count(t_end - t0);
    let stride = cfg.stride();
    let h = cfg.h;
    let norm0 = x0.norm();

    let mut traj = Trajectory::new(x0.nrows(), x0.ncols());
    traj.push(t0, x0, SolveReport::empty());
    let mut stepper = Stepper {
        flow,
        cfg,
        ws: Rk4Workspace::new(x0.nrows(), x0.ncols()),
    };
    let mut x = x0.clone();
    let mut pending = SolveReport::empty();
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        let t_next = if n + 1 == steps { t_end } else { t0 + (n + 1) as f64 * h };
        match stepper.step(t, &mut x, t_next - t, 0) {
            Ok(rep) => pending = pending.merge(rep),
            Err(e) => {
                traj.failure = Some(e);
                break;
            }
        }
        traj.steps += 1;
        if cfg.renormalize {
            lowdin_orthonormalize(&mut x);
        }
        let norm = x.norm();
        if !norm.is_finite() {
            traj.failure = Some(Error::NonFinite("state"));
            break;
        }
        if norm > BLOW_UP_FACTOR * norm0.max(f64::MIN_POSITIVE) {
            traj.failure = Some(Error::BlowUp(norm));
            break;
        }
        if (n + 1) % stride == 0 || n + 1 == steps {
            traj.push(t_next, &x, pending);
            pending = SolveReport::empty();
        }
    }
    Ok(traj)
}

/// Propagates an orbital formulation over `[0, T]`.
pub fn propagate(problem: &ProblemConfig, kind: DynamicsKind, integ: &IntegratorConfig, phi0: &OrbitalSet) -> Result<Trajectory> {
    problem.validate()?;
    if phi0.dim() != problem.hamiltonian.dim() || phi0.orbitals() != problem.orbitals {
        return Err(Error::shape(
            format!("{}x{}", problem.hamiltonian.dim(), problem.orbitals),
            format!("{}x{}", phi0.dim(), phi0.orbitals()),
        ));
    }
    let flow = OrbitalFlow::new(problem, kind)?;
    propagate_flow(&flow, 0.0, problem.final_time, phi0.data(), integ)
}

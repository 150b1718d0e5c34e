//! Error metrics, log-log fits, turning points, observables and cost accounting.

use serde::Serialize;

use crate::dynamics::{energy_functional, DynamicsKind};
use crate::error::{Error, Result};
use crate::hamiltonians::{HamiltonianSpec, ProblemConfig};
use crate::integrators::Trajectory;
use crate::state::gauge_distance;

/// Tolerance when matching sample times of two trajectories.
pub const TIME_MATCH_TOL: f64 = 1e-9;

/// Pairs of sample indices `(i, j)` with `a.times[i] ≈ b.times[j]`.
pub fn common_samples(a: &Trajectory, b: &Trajectory) -> Vec<(usize, usize)> {
    a.times
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| b.index_of(t, TIME_MATCH_TOL).map(|j| (i, j)))
        .collect()
}

/// `max_n ‖u_n − u_ref(t_n)‖₂` over the sample times both trajectories share.
pub fn error_metric(traj: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if traj.shape() != reference.shape() {
        return Err(Error::shape(format!("{:?}", reference.shape()), format!("{:?}", traj.shape())));
    }
    let pairs = common_samples(traj, reference);
    if pairs.is_empty() {
        return Err(Error::NoCommonTimes);
    }
    Ok(pairs
        .into_iter()
        .map(|(i, j)| (traj.view(i) - reference.view(j)).norm())
        .fold(0.0, f64::max))
}

/// `max_n ‖P_a(t_n) − P_b(t_n)‖_F` over shared sample times.
pub fn max_gauge_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let pairs = common_samples(a, b);
    if pairs.is_empty() {
        return Err(Error::NoCommonTimes);
    }
    pairs
        .into_iter()
        .map(|(i, j)| gauge_distance(&a.state(i), &b.state(j)))
        .try_fold(0.0_f64, |acc, d| d.map(|d| acc.max(d)))
}

/// Largest central-difference derivative norm `‖(u_{i+1} − u_{i−1})/(t_{i+1} − t_{i−1})‖`
/// over interior samples.
pub fn max_derivative_norm(traj: &Trajectory) -> Result<f64> {
    if traj.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: traj.len() });
    }
    Ok((1..traj.len() - 1)
        .map(|i| (traj.view(i + 1) - traj.view(i - 1)).norm() / (traj.times[i + 1] - traj.times[i - 1]))
        .fold(0.0, f64::max))
}

/// Least-squares line `log y = slope·log x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Log-log least-squares fit.
pub fn slope_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::shape(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositive);
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope fit needs at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// One point of a step-size sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyPoint {
    pub h: f64,
    pub error: f64,
    pub diverged: bool,
    pub anderson_iters: usize,
    pub wall_seconds: f64,
}

/// Turning points of an error curve. For single-stage curves only `h_t1` is set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TurningPoints {
    pub h_t1: Option<f64>,
    pub plateau: Option<f64>,
    pub h_t2: Option<f64>,
}

/// Errors `e(h, ε)` of one method over a step-size sweep, largest `h` first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub method: String,
    pub eps: f64,
    pub points: Vec<StudyPoint>,
}

impl ConvergenceStudy {
    pub fn new(method: impl Into<String>, eps: f64, mut points: Vec<StudyPoint>) -> Self {
        points.sort_by(|a, b| b.h.total_cmp(&a.h));
        Self {
            method: method.into(),
            eps,
            points,
        }
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.h).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.error).collect()
    }

    /// Non-diverged points with a finite positive error.
    pub fn usable(&self) -> impl Iterator<Item = &StudyPoint> {
        self.points
            .iter()
            .filter(|p| !p.diverged && p.error.is_finite() && p.error > 0.0)
    }

    /// Log-log fit of the usable points with `h_lo ≤ h ≤ h_hi`.
    pub fn fit_range(&self, h_lo: f64, h_hi: f64) -> Result<LineFit> {
        let (hs, es): (Vec<f64>, Vec<f64>) = self
            .usable()
            .filter(|p| p.h >= h_lo * (1.0 - 1e-12) && p.h <= h_hi * (1.0 + 1e-12))
            .map(|p| (p.h, p.error))
            .unzip();
        slope_fit(&hs, &es)
    }

    pub fn total_iterations(&self) -> usize {
        self.points.iter().map(|p| p.anderson_iters).sum()
    }
}

fn usable_sorted(study: &ConvergenceStudy, h1: f64, h2: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
    study
        .usable()
        .filter(|p| p.h >= lo * (1.0 - 1e-12) && p.h <= hi * (1.0 + 1e-12))
        .map(|p| (p.h, p.error))
        .collect()
}

fn adjacent_slopes(pts: &[(f64, f64)]) -> Vec<f64> {
    pts.windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect()
}

/// Largest sampled `h ∈ [h1, h2]` at which the two-point log-log slope to the
/// next smaller sample exceeds 1. `Ok(None)` when no pair qualifies.
pub fn turning_point(study: &ConvergenceStudy, h1: f64, h2: f64) -> Result<Option<f64>> {
    let pts = usable_sorted(study, h1, h2);
    if pts.len() < 6 {
        return Err(Error::TooFewPoints { needed: 6, got: pts.len() });
    }
    let slopes = adjacent_slopes(&pts);
    Ok(slopes.iter().position(|&s| s > 1.0).map(|i| pts[i].0))
}

/// Slope below which an adjacent pair counts as flat.
pub const PLATEAU_SLOPE: f64 = 0.3;

/// Two-stage detection for curves that converge, stall on a plateau and
/// converge again:
///
/// 1. `h_T1` by the slope rule restricted to the coarse half (in `log h`) of
///    the sweep;
/// 2. the plateau is the first run of at least two adjacent pairs below `h_T1`
///    with slope under [`PLATEAU_SLOPE`]; its magnitude is the geometric mean
///    of the errors on it;
/// 3. `h_T2` by the slope rule again, below the plateau.
pub fn two_stage_turning_points(study: &ConvergenceStudy, h1: f64, h2: f64) -> Result<TurningPoints> {
    let pts = usable_sorted(study, h1, h2);
    if pts.len() < 6 {
        return Err(Error::TooFewPoints { needed: 6, got: pts.len() });
    }
    let slopes = adjacent_slopes(&pts);
    let split = (pts[0].0 * pts[pts.len() - 1].0).sqrt();
    let mut out = TurningPoints::default();
    let Some(i1) = slopes.iter().enumerate().position(|(i, &s)| s > 1.0 && pts[i].0 >= split) else {
        return Ok(out);
    };
    out.h_t1 = Some(pts[i1].0);

    let mut i = i1 + 1;
    let (start, end) = loop {
        if i >= slopes.len() {
            return Ok(out);
        }
        if slopes[i] < PLATEAU_SLOPE {
            let mut j = i;
            while j < slopes.len() && slopes[j] < PLATEAU_SLOPE {
                j += 1;
            }
            if j - i >= 2 {
                break (i, j);
            }
            i = j;
        } else {
            i += 1;
        }
    };
    // pairs start..end cover points start..=end
    let logs: f64 = pts[start..=end].iter().map(|p| p.1.ln()).sum();
    out.plateau = Some((logs / (end - start + 1) as f64).exp());
    out.h_t2 = slopes[end..].iter().position(|&s| s > 1.0).map(|k| pts[end + k].0);
    Ok(out)
}

/// Per-sample observables of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observables {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub x_center: Option<f64>,
}

/// Norm, the formulation's energy functional and, on grids, the orbital
/// centre `Σ x_k|φ_k|² / Σ|φ_k|²`.
pub fn observables(traj: &Trajectory, problem: &ProblemConfig, kind: DynamicsKind) -> Result<Vec<Observables>> {
    let nodes = match &problem.hamiltonian {
        HamiltonianSpec::Nlse(n) => Some(n.nodes()),
        _ => None,
    };
    (0..traj.len())
        .map(|i| {
            let state = traj.state(i);
            let t = traj.times[i];
            let energy = energy_functional(problem, kind, t, &state)?;
            let x_center = nodes.as_ref().map(|x| orbital_center(x, &state.into_inner()));
            Ok(Observables {
                t,
                norm: traj.view(i).norm(),
                energy,
                x_center,
            })
        })
        .collect()
}

pub fn orbital_center(nodes: &[f64], phi: &crate::state::CMatrix) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for col in phi.column_iter() {
        for (x, z) in nodes.iter().zip(col.iter()) {
            num += x * z.norm_sqr();
            den += z.norm_sqr();
        }
    }
    num / den
}

/// One row of the cost table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub method: String,
    pub h: f64,
    pub error: f64,
    pub total_anderson_iters: usize,
}

/// Flattens studies into `(method, h, error, iterations)` rows, dropping diverged runs.
pub fn cost_report(studies: &[ConvergenceStudy]) -> Vec<CostRow> {
    studies
        .iter()
        .flat_map(|s| {
            s.usable().map(move |p| CostRow {
                method: s.method.clone(),
                h: p.h,
                error: p.error,
                total_anderson_iters: p.anderson_iters,
            })
        })
        .collect()
}

/// Cheapest run of `study` reaching error `≤ level`.
pub fn cost_at(study: &ConvergenceStudy, level: f64) -> Option<usize> {
    study
        .usable()
        .filter(|p| p.error <= level)
        .map(|p| p.anderson_iters)
        .min()
}

/// Compares `a` against `b` at every error level attained by both (the
/// errors of either method's runs, restricted to levels both reach). Returns
/// `(level, cost_a, cost_b)` triples.
pub fn matched_costs(a: &ConvergenceStudy, b: &ConvergenceStudy) -> Vec<(f64, usize, usize)> {
    let mut levels: Vec<f64> = a.usable().chain(b.usable()).map(|p| p.error).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
        .into_iter()
        .filter_map(|e| Some((e, cost_at(a, e)?, cost_at(b, e)?)))
        .collect()
}

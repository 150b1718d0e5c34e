//! Run configuration and the sweep drivers behind the command-line tool.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{error_metric, matched_costs, slope_fit, two_stage_turning_points, turning_point, ConvergenceStudy, StudyPoint, TurningPoints};
use crate::dynamics::DynamicsKind;
use crate::error::{Error, Result};
use crate::hamiltonians::ProblemConfig;
use crate::integrators::{propagate, IntegratorConfig, Scheme, Trajectory};
use crate::solvers::AndersonConfig;

/// A formulation paired with a time stepper, written like `PT-Ham-GL2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    pub kind: DynamicsKind,
    pub scheme: Scheme,
}

impl Method {
    pub const fn new(kind: DynamicsKind, scheme: Scheme) -> Self {
        Self { kind, scheme }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind, self.scheme)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, scheme) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("method '{s}' is not of the form <dynamics>-<scheme>, e.g. PT-GL2")))?;
        let kind: DynamicsKind = kind.parse()?;
        if kind == DynamicsKind::VonNeumann {
            return Err(Error::Config("von Neumann dynamics is only available as an oracle".into()));
        }
        Ok(Method::new(kind, scheme.parse()?))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Step sizes of a sweep: an explicit list, or a log-spaced range whose
/// entries are rounded to multiples of `quantum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSweep {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        per_decade: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantum: Option<f64>,
    },
}

impl StepSweep {
    /// Distinct step sizes, largest first.
    pub fn values(&self) -> Result<Vec<f64>> {
        let mut hs = match self {
            StepSweep::List(v) => v.clone(),
            StepSweep::Range { min, max, per_decade, quantum } => {
                if !(*min > 0.0 && max >= min) || *per_decade == 0 {
                    return Err(Error::Config(format!(
                        "bad sweep range min = {min}, max = {max}, per_decade = {per_decade}"
                    )));
                }
                let n = ((max / min).log10() * *per_decade as f64).round() as usize;
                (0..=n)
                    .map(|k| {
                        let h = if n == 0 { *min } else { min * (max / min).powf(k as f64 / n as f64) };
                        match quantum {
                            Some(q) => ((h / q).round().max(1.0)) * q,
                            None => h,
                        }
                    })
                    .collect()
            }
        };
        if hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::Config("step sizes must be finite and > 0".into()));
        }
        hs.sort_by(|a, b| b.total_cmp(a));
        hs.dedup();
        Ok(hs)
    }
}

/// How reference solutions are computed. S methods are compared with the
/// Schrödinger-gauge reference, PT and PT-Hamiltonian methods with the PT one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub scheme: Scheme,
    pub h: f64,
    /// Samples are kept at multiples of this interval.
    pub record_interval: f64,
    /// Solver tolerance when `scheme` is implicit.
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            h: 1e-6,
            record_interval: 1e-6,
            tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Measure wall time; when false the `wall_seconds` column is 0 so the
    /// output is reproducible bit for bit.
    #[serde(default)]
    pub wall_clock: bool,
    /// Drop the orbital columns of trajectory CSVs.
    #[serde(default)]
    pub observables_only: bool,
}

/// Everything a run needs. Serialises back to the TOML it was read from,
/// with every default made explicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    /// Step size for `propagate` and the fixed step of `scaling`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_sweep: Option<StepSweep>,
    /// ε values for `scaling`, `turning-point` and multi-ε `converge` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_values: Option<Vec<f64>>,
    /// Sampling interval of `propagate` output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    #[serde(default)]
    pub retry_halve: bool,
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub anderson: AndersonConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(problem: ProblemConfig, methods: Vec<Method>) -> Self {
        Self {
            methods,
            h: None,
            h_sweep: None,
            eps_values: None,
            record_interval: None,
            retry_halve: false,
            seed: 0,
            problem,
            anderson: AndersonConfig::default(),
            reference: ReferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.problem.validate()?;
        self.anderson.validate()?;
        if let Some(h) = self.h {
            IntegratorConfig::new(Scheme::Rk4, h).validate()?;
        }
        if let Some(s) = &self.h_sweep {
            s.values()?;
        }
        for &eps in self.eps_values.iter().flatten() {
            self.problem.with_epsilon(eps).validate()?;
        }
        let r = &self.reference;
        if !(r.h > 0.0 && r.record_interval > 0.0 && r.tol > 0.0) {
            return Err(Error::Config("reference h, record_interval and tol must be > 0".into()));
        }
        Ok(())
    }

    pub fn integrator(&self, method: Method, h: f64) -> IntegratorConfig {
        IntegratorConfig {
            scheme: method.scheme,
            h,
            solver: self.anderson,
            record_interval: None,
            retry_halve: self.retry_halve,
            renormalize: false,
        }
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.eps_values.clone().unwrap_or_else(|| vec![self.problem.epsilon])
    }

    fn require_h(&self) -> Result<f64> {
        self.h.ok_or_else(|| Error::Config("this command needs `h`".into()))
    }

    fn require_sweep(&self) -> Result<Vec<f64>> {
        self.h_sweep
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs `h_sweep`".into()))?
            .values()
    }
}

/// Formulation used as the reference for `kind`.
pub fn reference_kind(kind: DynamicsKind) -> DynamicsKind {
    if kind.is_pt_family() {
        DynamicsKind::Pt
    } else {
        kind
    }
}

/// Fine-step reference trajectory in the gauge of `kind`.
pub fn compute_reference(problem: &ProblemConfig, cfg: &ReferenceConfig, kind: DynamicsKind) -> Result<Trajectory> {
    let integ = IntegratorConfig {
        scheme: cfg.scheme,
        h: cfg.h,
        solver: AndersonConfig::default().with_tol(cfg.tol),
        record_interval: Some(cfg.record_interval),
        retry_halve: false,
        renormalize: cfg.scheme.is_implicit(),
    };
    let phi0 = problem.initial_state()?;
    let traj = propagate(problem, reference_kind(kind), &integ, &phi0)?;
    match traj.failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Reference trajectories for each gauge a set of methods needs.
pub struct References {
    pub schrodinger: Option<Trajectory>,
    pub pt: Option<Trajectory>,
}

impl References {
    pub fn compute(problem: &ProblemConfig, cfg: &ReferenceConfig, methods: &[Method]) -> Result<Self> {
        let need = |pt: bool| methods.iter().any(|m| m.kind.is_pt_family() == pt);
        let kinds = [(need(false), DynamicsKind::Schrodinger), (need(true), DynamicsKind::Pt)];
        let mut refs: Vec<Option<Trajectory>> = kinds
            .par_iter()
            .map(|&(needed, kind)| needed.then(|| compute_reference(problem, cfg, kind)).transpose())
            .collect::<Result<_>>()?;
        let pt = refs.pop().flatten();
        let schrodinger = refs.pop().flatten();
        Ok(Self { schrodinger, pt })
    }

    pub fn for_kind(&self, kind: DynamicsKind) -> Result<&Trajectory> {
        let r = if kind.is_pt_family() { &self.pt } else { &self.schrodinger };
        r.as_ref()
            .ok_or_else(|| Error::Config(format!("no reference computed for {kind} methods")))
    }
}

/// Errors above this count as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 10.0;

/// Runs one method at step `h` and scores it against the matching reference.
/// Method runs keep samples on the reference's recording grid.
pub fn score_run(
    problem: &ProblemConfig,
    method: Method,
    integ: &IntegratorConfig,
    refs: &References,
    ref_interval: f64,
    wall_clock: bool,
) -> Result<StudyPoint> {
    let h = integ.h;
    let ratio = ref_interval / h;
    let aligned = |r: f64| (r - r.round()).abs() <= 1e-9 * r.max(1.0);
    if !(aligned(ratio) || aligned(1.0 / ratio)) {
        return Err(Error::Config(format!(
            "step {h} is neither a multiple nor a divisor of the reference sampling interval {ref_interval}"
        )));
    }
    let integ = IntegratorConfig {
        record_interval: (h < ref_interval).then_some(ref_interval),
        ..integ.clone()
    };
    let reference = refs.for_kind(method.kind)?;
    let phi0 = problem.initial_state()?;
    let start = Instant::now();
    let traj = propagate(problem, method.kind, &integ, &phi0)?;
    let wall = start.elapsed().as_secs_f64();
    let error = error_metric(&traj, reference).unwrap_or(f64::NAN);
    let diverged = !traj.completed() || !error.is_finite() || error > DIVERGENCE_THRESHOLD;
    Ok(StudyPoint {
        h,
        error,
        diverged,
        anderson_iters: traj.total_iterations(),
        wall_seconds: if wall_clock { wall } else { 0.0 },
    })
}

/// Errors of every method over the step sizes `hs`, one study per method in
/// the order given. Runs are spread over the rayon pool.
pub fn convergence_sweep(cfg: &RunConfig, problem: &ProblemConfig, hs: &[f64], refs: &References) -> Result<Vec<ConvergenceStudy>> {
    let jobs: Vec<(Method, f64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| hs.iter().map(move |&h| (m, h)))
        .collect();
    let points: Vec<StudyPoint> = jobs
        .par_iter()
        .map(|&(m, h)| {
            score_run(problem, m, &cfg.integrator(m, h), refs, cfg.reference.record_interval, cfg.output.wall_clock)
        })
        .collect::<Result<_>>()?;
    let mut points = points.into_iter();
    Ok(cfg
        .methods
        .iter()
        .map(|m| ConvergenceStudy::new(m.to_string(), problem.epsilon, points.by_ref().take(hs.len()).collect()))
        .collect())
}

/// `converge`: an `h_sweep` for every ε of the run.
pub fn run_converge(cfg: &RunConfig) -> Result<Vec<ConvergenceStudy>> {
    cfg.validate()?;
    let hs = cfg.require_sweep()?;
    let mut out = Vec::new();
    for eps in cfg.eps_list() {
        let problem = cfg.problem.with_epsilon(eps);
        let refs = References::compute(&problem, &cfg.reference, &cfg.methods)?;
        out.extend(convergence_sweep(cfg, &problem, &hs, &refs)?);
    }
    Ok(out)
}

/// One fitted scaling law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub method: String,
    /// The fixed step (`h=…`) or the turning-point stage (`h_T`, `h_T1`, `plateau`, `h_T2`).
    pub fixed_h_or_stage: String,
    pub slope: f64,
    pub r2: f64,
}

/// Raw data behind a [`ScalingRow`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub method: String,
    pub fixed_h_or_stage: String,
    pub eps: f64,
    pub value: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub points: Vec<ScalingPoint>,
}

impl ScalingReport {
    pub fn slope(&self, method: &str, stage: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.fixed_h_or_stage == stage)
            .map(|r| r.slope)
    }

    fn fit_all(&mut self) {
        let mut keys: Vec<(String, String)> = Vec::new();
        for p in &self.points {
            let key = (p.method.clone(), p.fixed_h_or_stage.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (method, stage) in keys {
            let (xs, ys): (Vec<f64>, Vec<f64>) = self
                .points
                .iter()
                .filter(|p| p.method == method && p.fixed_h_or_stage == stage && !p.diverged)
                .map(|p| (p.eps, p.value))
                .unzip();
            let (slope, r2) = match slope_fit(&xs, &ys) {
                Ok(fit) => (fit.slope, fit.r2),
                Err(_) => (f64::NAN, f64::NAN),
            };
            self.rows.push(ScalingRow { method, fixed_h_or_stage: stage, slope, r2 });
        }
    }
}

/// `scaling`: error at the fixed step `h` against ε, fitted per method.
pub fn run_scaling(cfg: &RunConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    let h = cfg.require_h()?;
    let stage = format!("h={h}");
    let mut report = ScalingReport::default();
    for eps in cfg.eps_list() {
        let problem = cfg.problem.with_epsilon(eps);
        let refs = References::compute(&problem, &cfg.reference, &cfg.methods)?;
        for study in convergence_sweep(cfg, &problem, &[h], &refs)? {
            let p = &study.points[0];
            report.points.push(ScalingPoint {
                method: study.method,
                fixed_h_or_stage: stage.clone(),
                eps,
                value: p.error,
                diverged: p.diverged,
            });
        }
    }
    report.fit_all();
    Ok(report)
}

/// Errors at or above this count as saturated. A single orbital can be off
/// by at most 2, so beyond `0.95·2` at least one orbital no longer tracks the
/// reference. For N > 1 the error curve can sit on several such levels
/// (`2√N` when every orbital is lost, ≈ 2 with one lost) and none of them
/// says anything about the step size.
pub const SATURATION_ERROR: f64 = 0.95 * 2.0;

/// Largest sampled step below which every run is converged and unsaturated,
/// i.e. the upper end of the window in which turning points are sought.
pub fn unsaturated_limit(study: &ConvergenceStudy) -> Option<f64> {
    study
        .points
        .iter()
        .rev()
        .take_while(|p| !p.diverged && p.error < SATURATION_ERROR)
        .last()
        .map(|p| p.h)
}

/// [`matched_costs`] restricted to error levels below [`SATURATION_ERROR`]:
/// a saturated run reaches no accuracy level worth pricing.
pub fn unsaturated_matched_costs(a: &ConvergenceStudy, b: &ConvergenceStudy) -> Vec<(f64, usize, usize)> {
    matched_costs(a, b).into_iter().filter(|&(e, _, _)| e < SATURATION_ERROR).collect()
}

/// Turning points of one study: the single-stage rule for Schrödinger-gauge
/// methods, the two-stage rule for PT methods, both over the unsaturated
/// part of the sweep.
pub fn study_turning_points(study: &ConvergenceStudy, method: Method) -> Result<TurningPoints> {
    let lo = study.h_values().into_iter().fold(f64::INFINITY, f64::min);
    let hi = unsaturated_limit(study).unwrap_or(lo);
    if method.kind.is_pt_family() {
        two_stage_turning_points(study, lo, hi)
    } else {
        Ok(TurningPoints { h_t1: turning_point(study, lo, hi)?, ..Default::default() })
    }
}

/// `turning-point`: full sweeps for every ε, turning points per study and
/// their ε-scaling.
pub fn run_turning_points(cfg: &RunConfig) -> Result<(Vec<ConvergenceStudy>, ScalingReport)> {
    cfg.validate()?;
    let hs = cfg.require_sweep()?;
    let mut studies = Vec::new();
    let mut report = ScalingReport::default();
    for eps in cfg.eps_list() {
        let problem = cfg.problem.with_epsilon(eps);
        let refs = References::compute(&problem, &cfg.reference, &cfg.methods)?;
        let batch = convergence_sweep(cfg, &problem, &hs, &refs)?;
        for (study, &method) in batch.iter().zip(&cfg.methods) {
            let tp = study_turning_points(study, method)?;
            let stages: Vec<(&str, Option<f64>)> = if method.kind.is_pt_family() {
                vec![("h_T1", tp.h_t1), ("plateau", tp.plateau), ("h_T2", tp.h_t2)]
            } else {
                vec![("h_T", tp.h_t1)]
            };
            for (stage, value) in stages {
                report.points.push(ScalingPoint {
                    method: study.method.clone(),
                    fixed_h_or_stage: stage.into(),
                    eps,
                    value: value.unwrap_or(f64::NAN),
                    diverged: value.is_none(),
                });
            }
        }
        studies.extend(batch);
    }
    report.fit_all();
    Ok((studies, report))
}

/// `propagate`: the single configured method at step `h`.
pub fn run_propagate(cfg: &RunConfig) -> Result<(Method, Trajectory)> {
    cfg.validate()?;
    let [method] = cfg.methods[..] else {
        return Err(Error::Config(format!(
            "propagate runs exactly one method, got {}",
            cfg.methods.len()
        )));
    };
    let mut integ = cfg.integrator(method, cfg.require_h()?);
    integ.record_interval = cfg.record_interval;
    let phi0 = cfg.problem.initial_state()?;
    Ok((method, propagate(&cfg.problem, method.kind, &integ, &phi0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
methods = ["S-GL2", "PT-Ham-GL2"]
h = 1e-3

[h_sweep]
min = 1e-3
max = 0.1
per_decade = 4
quantum = 1e-6

[problem]
epsilon = 0.01
final_time = 1.0

[problem.hamiltonian]
kind = "toy"
t0 = 0.5
delta = 1.0
"#;

    #[test]
    fn method_labels() {
        for s in ["S-RK4", "PT-GL2", "PT-Ham-GL2", "PT-CN", "S-CN"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("PT".parse::<Method>().is_err());
        assert!("vN-GL2".parse::<Method>().is_err());
        assert!("PT-RK9".parse::<Method>().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::from_toml_str(TOY).unwrap();
        assert_eq!(cfg.anderson, AndersonConfig::default());
        let text = cfg.to_toml_string();
        let again = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_toml_string());
        assert!(text.contains("mixing_dim = 20"));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str(&format!("bogus = 1\n{TOY}")).is_err());
        let bad = TOY.replace("epsilon = 0.01", "epsilon = -1.0");
        assert!(matches!(RunConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = TOY.replace("\"S-GL2\"", "\"S-GL3\"");
        let msg = RunConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("GL2") && msg.contains("RK4") && msg.contains("CN"));
    }

    #[test]
    fn sweep_values_are_descending_and_quantised() {
        let s = StepSweep::Range { min: 1e-5, max: 0.5, per_decade: 16, quantum: Some(1e-6) };
        let v = s.values().unwrap();
        assert!(v.windows(2).all(|w| w[0] > w[1]));
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[v.len() - 1] - 1e-5).abs() < 1e-15);
        for h in &v {
            assert!(((h / 1e-6) - (h / 1e-6).round()).abs() < 1e-6);
        }
    }

    #[test]
    fn small_convergence_sweep_is_deterministic() {
        let mut cfg = RunConfig::from_toml_str(TOY).unwrap();
        cfg.reference = ReferenceConfig { scheme: Scheme::Rk4, h: 1e-5, record_interval: 1e-3, tol: 1e-13 };
        cfg.h_sweep = Some(StepSweep::List(vec![0.1, 0.05, 0.01]));
        let a = run_converge(&cfg).unwrap();
        let b = run_converge(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|s| s.points.len() == 3));
        // at h = 0.1 both are saturated; below that PT-Ham-GL2 wins clearly
        let (s, p) = (&a[0].points[2], &a[1].points[2]);
        assert!((s.h - 0.01).abs() < 1e-15);
        assert!(p.error < 0.1 * s.error, "{} {}", s.error, p.error);
    }

    #[test]
    fn misaligned_step_is_rejected() {
        let mut cfg = RunConfig::from_toml_str(TOY).unwrap();
        cfg.reference = ReferenceConfig { scheme: Scheme::Rk4, h: 1e-4, record_interval: 1e-3, tol: 1e-13 };
        cfg.h_sweep = Some(StepSweep::List(vec![0.0015]));
        assert!(matches!(run_converge(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn propagate_needs_one_method() {
        let cfg = RunConfig::from_toml_str(TOY).unwrap();
        assert!(run_propagate(&cfg).is_err());
        let mut one = cfg.clone();
        one.methods.truncate(1);
        let (m, traj) = run_propagate(&one).unwrap();
        assert_eq!(m.to_string(), "S-GL2");
        assert_eq!(traj.len(), 1001);
    }
}

//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each,
//! followed by the individual checks.
//!
//! Select criteria by number or name fragment:
//! `cargo test --test acceptance -- 2 5 criterion_11`.
//! `PTGAUGE_ACCEPTANCE_SMOKE=1` skips the full-resolution NLSE runs.

use std::error::Error as StdError;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ptgauge::analysis::{common_samples, max_derivative_norm, max_gauge_distance, observables, slope_fit, ConvergenceStudy};
use ptgauge::experiment::{
    compute_reference, convergence_sweep, run_scaling, run_turning_points, unsaturated_matched_costs, ReferenceConfig,
    References, ScalingReport, StepSweep, SATURATION_ERROR,
};
use ptgauge::integrators::propagate;
use ptgauge::reference::{adiabatic_reference, occupation_path, pt_transport_operator, von_neumann_propagate};
use ptgauge::{
    AndersonConfig, ChainHamiltonian, CMatrix, DynamicsKind, HamiltonianSpec, IntegratorConfig, Method, NlseHamiltonian,
    PreconditionerKind, ProblemConfig, RunConfig, Scheme, ToyHamiltonian, Trajectory,
};

type Outcome = Result<(), Box<dyn StdError>>;

#[derive(Default)]
struct Verdict {
    checks: Vec<(bool, String)>,
}

impl Verdict {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((ok, detail.into()));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.0)
    }
}

const EPS_SWEEP: [f64; 5] = [0.04, 0.02, 0.01, 0.005, 0.002];

fn methods(labels: &[&str]) -> Vec<Method> {
    labels.iter().map(|s| s.parse().expect("method label")).collect()
}

fn toy(eps: f64) -> ProblemConfig {
    ProblemConfig::toy(1.0, eps)
}

/// Four-site chain with two orbitals.
fn chain(eps: f64) -> ProblemConfig {
    ProblemConfig::new(HamiltonianSpec::Chain(ChainHamiltonian::four_site()), eps, 1.0).with_orbitals(2)
}

fn variants(eps: f64) -> [(&'static str, ProblemConfig); 2] {
    [("toy", toy(eps)), ("chain N=2", chain(eps))]
}

fn sweep(
    problem: &ProblemConfig,
    labels: &[&str],
    hs: &[f64],
    reference: ReferenceConfig,
    anderson: AndersonConfig,
) -> Result<Vec<ConvergenceStudy>, Box<dyn StdError>> {
    let mut cfg = RunConfig::new(problem.clone(), methods(labels));
    cfg.anderson = anderson;
    cfg.reference = reference;
    let refs = References::compute(problem, &cfg.reference, &cfg.methods)?;
    Ok(convergence_sweep(&cfg, problem, hs, &refs)?)
}

fn tight(tol: f64) -> AndersonConfig {
    AndersonConfig::default().with_tol(tol)
}

fn slope_of(report: &ScalingReport, method: &str, stage: &str) -> f64 {
    report
        .rows
        .iter()
        .find(|r| r.method == method && (r.fixed_h_or_stage == stage || stage.is_empty()))
        .map_or(f64::NAN, |r| r.slope)
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn max_over<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn stationarity(v: &mut Verdict) -> Outcome {
    let toy = ProblemConfig::new(HamiltonianSpec::Toy(ToyHamiltonian::frozen(0.5, 1.0, 0.5)), 0.01, 10.0);
    let mut frozen = ChainHamiltonian::four_site();
    frozen.frozen_at = Some(frozen.t0);
    let chain = ProblemConfig::new(HamiltonianSpec::Chain(frozen), 0.01, 10.0).with_orbitals(2);
    // at h/ε = 10 the stage residual bottoms out near 1e-12 in round-off
    let integ = IntegratorConfig::new(Scheme::Gl2, 0.1).with_tol(1e-10);
    for (name, p) in [("toy", toy), ("chain N=2", chain)] {
        let phi0 = p.initial_state()?;
        let traj = propagate(&p, DynamicsKind::Pt, &integ, &phi0)?;
        let steps = traj.len() - 1;
        let drift = traj
            .states()
            .map(|s| s.distance(&phi0))
            .collect::<Result<Vec<_>, _>>()?;
        let drift = max_over(drift);
        v.check(
            traj.completed() && steps == 100 && drift <= 1e-8,
            format!("{name}: PT-GL2 h=0.1, {steps} steps, max ‖φ_n − φ₀‖ = {drift:.2e} (≤ 1e-8)"),
        );
    }
    Ok(())
}

fn convergence_orders(v: &mut Verdict) -> Outcome {
    let hs = StepSweep::Range { min: 1e-5, max: 1e-3, per_decade: 4, quantum: Some(1e-6) }.values()?;
    let labels = ["S-RK4", "PT-RK4", "S-GL2", "PT-GL2", "PT-Ham-GL2", "PT-CN"];
    for (name, p) in variants(0.01) {
        let studies = sweep(&p, &labels, &hs, ReferenceConfig::default(), tight(1e-13))?;
        for s in &studies {
            let (lo, hi, want) = if s.method.ends_with("RK4") { (1e-4, 1e-3, 4.0) } else { (1e-5, 1e-4, 2.0) };
            let fit = s.fit_range(lo, hi)?;
            v.check(
                within(fit.slope, want, 0.2),
                format!("{name} {}: slope {:.3} over h ∈ [{lo:e}, {hi:e}] (want {want} ± 0.2)", s.method, fit.slope),
            );
        }
    }
    Ok(())
}

fn eps_order_gain(v: &mut Verdict) -> Outcome {
    for (name, p) in variants(0.01) {
        let mut cfg = RunConfig::new(p, methods(&["S-RK4", "PT-RK4", "S-GL2", "PT-Ham-GL2"]));
        cfg.anderson = tight(1e-13);
        cfg.h = Some(1e-4);
        cfg.eps_values = Some(EPS_SWEEP.to_vec());
        let rep = run_scaling(&cfg)?;
        // e ∝ ε^{-p}: the gain is p_S − p_PT, i.e. slope_PT − slope_S
        for (s, pt) in [("S-RK4", "PT-RK4"), ("S-GL2", "PT-Ham-GL2")] {
            let (a, b) = (-slope_of(&rep, s, ""), -slope_of(&rep, pt, ""));
            v.check(
                within(a - b, 1.0, 0.3),
                format!("{name}: ε-order {s} {a:.3} − {pt} {b:.3} = {:.3} (want 1 ± 0.3)", a - b),
            );
        }
    }
    Ok(())
}

fn turning_points(v: &mut Verdict) -> Outcome {
    for (name, p) in variants(0.01) {
        let mut cfg = RunConfig::new(p, methods(&["S-GL2", "PT-Ham-GL2"]));
        cfg.anderson = tight(1e-12);
        cfg.h_sweep = Some(StepSweep::Range { min: 1e-4, max: 0.5, per_decade: 16, quantum: Some(1e-6) });
        cfg.eps_values = Some(EPS_SWEEP.to_vec());
        let (_, rep) = run_turning_points(&cfg)?;
        for (method, stage, want, tol) in [
            ("S-GL2", "h_T", 1.5, 0.2),
            ("PT-Ham-GL2", "h_T1", 0.5, 0.2),
            ("PT-Ham-GL2", "plateau", 1.0, 0.3),
        ] {
            let s = slope_of(&rep, method, stage);
            v.check(within(s, want, tol), format!("{name} {method} {stage}: ε-slope {s:.3} (want {want} ± {tol})"));
        }
    }
    Ok(())
}

/// `|‖φ‖ − 1|` for one orbital, `‖Φ*Φ − I‖` otherwise.
fn norm_defect(t: &Trajectory) -> f64 {
    max_over(t.states().map(|s| if s.orbitals() == 1 { (s.norm() - 1.0).abs() } else { s.orthonormality_error() }))
}

fn norm_conservation(v: &mut Verdict) -> Outcome {
    for (name, p) in variants(0.01) {
        let long = ProblemConfig { final_time: 10.0, ..p.clone() };
        let phi0 = p.initial_state()?;
        let n = phi0.orbitals() as f64;
        let integ = IntegratorConfig::new(Scheme::Gl2, 1e-3).with_tol(1e-12);
        for kind in [DynamicsKind::Pt, DynamicsKind::PtHamiltonian] {
            let traj = propagate(&long, kind, &integ, &phi0)?;
            let steps = traj.len() - 1;
            let dev = norm_defect(&traj);
            v.check(
                traj.completed() && steps == 10_000 && dev <= 1e-10,
                format!("{name} {kind}-GL2: {steps} steps, max norm defect {dev:.2e} (≤ 1e-10)"),
            );
            if n > 1.0 {
                let frob = max_over(traj.states().map(|s| (s.norm().powi(2) - n).abs()));
                v.check(frob <= 1e-10, format!("{name} {kind}-GL2: max |‖Φ‖²_F − N| = {frob:.2e} (≤ 1e-10)"));
            }
        }
        for h in [1e-2, 5e-3, 1e-3] {
            let integ = IntegratorConfig::new(Scheme::Cn, h).with_tol(1e-12);
            let traj = propagate(&p, DynamicsKind::Pt, &integ, &phi0)?;
            let dev = norm_defect(&traj);
            v.check(traj.completed() && dev <= 1e-6, format!("{name} PT-CN h={h}: norm drift {dev:.2e} over T=1 (≤ 1e-6)"));
        }
    }
    Ok(())
}

fn record(scheme: Scheme, h: f64) -> IntegratorConfig {
    IntegratorConfig::new(scheme, h).with_tol(1e-13).recording_every(1e-3)
}

fn projector_of(x: &CMatrix) -> CMatrix {
    x * x.adjoint()
}

fn gauge_invariance(v: &mut Verdict) -> Outcome {
    for (name, p) in variants(0.01) {
        let phi0 = p.initial_state()?;
        let s = propagate(&p, DynamicsKind::Schrodinger, &record(Scheme::Gl2, 1e-5), &phi0)?;
        let pt = propagate(&p, DynamicsKind::Pt, &record(Scheme::Gl2, 1e-5), &phi0)?;
        let vn = von_neumann_propagate(&p, &record(Scheme::Rk4, 1e-5))?;
        let d = max_gauge_distance(&s, &pt)?;
        v.check(
            s.completed() && pt.completed() && d <= 1e-6,
            format!("{name}: max gauge distance S-GL2 vs PT-GL2 = {d:.2e} (≤ 1e-6)"),
        );
        for (label, traj) in [("S-GL2", &s), ("PT-GL2", &pt)] {
            let pairs = common_samples(traj, &vn);
            let dev = max_over(pairs.iter().map(|&(i, j)| (projector_of(&traj.view(i).into_owned()) - vn.view(j)).norm()));
            v.check(
                pairs.len() > 900 && dev <= 1e-5,
                format!("{name}: {label} density vs von Neumann oracle = {dev:.2e} over {} samples (≤ 1e-5)", pairs.len()),
            );
        }
    }
    Ok(())
}

fn transport_equivalence(v: &mut Verdict) -> Outcome {
    for (name, p) in variants(0.01) {
        let phi0 = p.initial_state()?;
        let integ = record(Scheme::Rk4, 1e-5);
        let op = pt_transport_operator(&p, &integ)?;
        let pt = propagate(&p, DynamicsKind::Pt, &integ, &phi0)?;
        let pairs = common_samples(&op, &pt);
        let dev = max_over(pairs.iter().map(|&(i, j)| (op.view(i) * phi0.data() - pt.view(j)).norm()));
        let d = op.shape().0;
        let unitary = max_over((0..op.len()).map(|i| {
            let u = op.view(i);
            (u.ad_mul(&u) - CMatrix::identity(d, d)).norm()
        }));
        v.check(
            pairs.len() > 900 && dev <= 1e-5,
            format!("{name}: max ‖𝒯(t)Φ(0) − Φ_PT(t)‖ = {dev:.2e} (≤ 1e-5)"),
        );
        v.check(unitary <= 1e-8, format!("{name}: max ‖𝒯*𝒯 − I‖ = {unitary:.2e} (≤ 1e-8)"));
    }
    Ok(())
}

/// Fine renormalised references recorded every `1e-5`, for derivative checks.
fn fine_reference(p: &ProblemConfig, kind: DynamicsKind) -> Result<Trajectory, Box<dyn StdError>> {
    let cfg = ReferenceConfig { record_interval: 1e-5, ..ReferenceConfig::default() };
    Ok(compute_reference(p, &cfg, kind)?)
}

fn adiabatic_theorem(v: &mut Verdict) -> Outcome {
    let eps = [0.04, 0.02, 0.01, 0.005];
    let mut dist = Vec::new();
    for &e in &eps {
        let p = toy(e);
        let pt = fine_reference(&p, DynamicsKind::Pt)?;
        let a = adiabatic_reference(&p, &IntegratorConfig::new(Scheme::Rk4, 1e-5))?;
        let d = common_samples(&pt, &a)
            .into_iter()
            .map(|(i, j)| pt.state(i).distance(&a.state(j)))
            .collect::<Result<Vec<_>, _>>()?;
        dist.push(max_over(d));
    }
    let fit = slope_fit(&eps, &dist)?;
    v.check(
        within(fit.slope, 1.0, 0.2),
        format!("max_t ‖φ − φ_A‖ = {} for ε = {eps:?}: slope {:.3} (want 1 ± 0.2)", sci(&dist), fit.slope),
    );
    Ok(())
}

fn derivative_scaling(v: &mut Verdict) -> Outcome {
    let eps = [0.04, 0.02, 0.01, 0.005];
    let (mut dpt, mut ds) = (Vec::new(), Vec::new());
    for &e in &eps {
        let p = toy(e);
        dpt.push(max_derivative_norm(&fine_reference(&p, DynamicsKind::Pt)?)?);
        ds.push(max_derivative_norm(&fine_reference(&p, DynamicsKind::Schrodinger)?)?);
    }
    for (label, ys, want) in [("‖φ̇_PT‖", &dpt, 0.0), ("‖ψ̇_S‖", &ds, -1.0)] {
        let fit = slope_fit(&eps, ys)?;
        v.check(
            within(fit.slope, want, 0.2),
            format!("max_t {label} = {}: slope {:.3} (want {want} ± 0.2)", sci(ys), fit.slope),
        );
    }
    Ok(())
}

fn beyond_adiabatic(v: &mut Verdict) -> Outcome {
    let eps = 0.002;
    let hs = StepSweep::Range { min: 1e-5, max: 1e-2, per_decade: 4, quantum: Some(1e-6) }.values()?;
    let pts = ["PT-GL2", "PT-Ham-GL2", "PT-CN"];
    let mut ratios: Vec<Vec<f64>> = Vec::new();
    let deltas = [0.07, 0.05, 0.03];
    let cap = SATURATION_ERROR;
    for &delta in &deltas {
        let p = ProblemConfig::toy(delta, eps);
        let studies = sweep(&p, &["S-GL2", "PT-GL2", "PT-Ham-GL2", "PT-CN"], &hs, ReferenceConfig::default(), tight(1e-13))?;
        let s = &studies[0];
        let mut row = Vec::new();
        for pt in &studies[1..] {
            let both: Vec<(f64, f64, f64)> = s
                .points
                .iter()
                .zip(&pt.points)
                .filter(|(a, b)| !a.diverged && !b.diverged)
                .map(|(a, b)| (a.h, a.error, b.error))
                .collect();
            let worse: Vec<f64> = both.iter().filter(|t| t.2 > t.1).map(|t| t.0).collect();
            v.check(
                worse.is_empty() && !both.is_empty(),
                format!("δ={delta} {}: PT ≤ S at all {} converged h (violations at {worse:?})", pt.method, both.len()),
            );
            let logs: Vec<f64> = both.iter().filter(|t| t.1 < cap).map(|t| (t.2 / t.1).ln()).collect();
            row.push((logs.iter().sum::<f64>() / logs.len() as f64).exp());
        }
        ratios.push(row);

        let reference = compute_reference(&p, &ReferenceConfig { record_interval: 1e-3, ..ReferenceConfig::default() }, DynamicsKind::Pt)?;
        let occ = occupation_path(&p.hamiltonian, &reference, 1)?;
        let samples = reference.times.iter().zip(&occ);
        let before = max_over(samples.clone().filter(|(t, _)| **t <= 0.4).map(|(_, o)| *o));
        let after: Vec<f64> = samples.filter(|(t, _)| **t >= 0.8).map(|(_, o)| *o).collect();
        let plateau = after.iter().sum::<f64>() / after.len() as f64;
        // Landau–Zener: diabatic slope difference 2, coupling δ, ħ = ε
        let lz = (-PI * delta * delta / eps).exp();
        v.check(
            before <= 1e-3 && (plateau / lz - 1.0).abs() <= 0.05,
            format!("δ={delta}: level-2 occupation ≤ {before:.1e} for t ≤ 0.4, plateau {plateau:.4e} vs Landau–Zener {lz:.4e}"),
        );
    }
    for (k, pt) in pts.iter().enumerate() {
        let r: Vec<f64> = ratios.iter().map(|row| row[k]).collect();
        v.check(
            r.windows(2).all(|w| w[0] < w[1]) && r.iter().all(|&x| x < 1.0),
            format!("{pt}/S-GL2 mean error ratio over unsaturated h for δ = {deltas:?}: {r:.3?} (increasing, < 1)"),
        );
    }
    Ok(())
}

fn nlse(hx: f64, eps: f64) -> ProblemConfig {
    ProblemConfig::new(HamiltonianSpec::Nlse(NlseHamiltonian::with_spacing(hx)), eps, 1.0)
}

fn nlse_solver() -> AndersonConfig {
    AndersonConfig { preconditioner: PreconditionerKind::Kinetic, ..AndersonConfig::default() }
}

fn nlse_reference() -> ReferenceConfig {
    ReferenceConfig { scheme: Scheme::Gl2, h: 1e-5, record_interval: 1e-3, tol: 1e-10 }
}

fn smoke() -> bool {
    std::env::var_os("PTGAUGE_ACCEPTANCE_SMOKE").is_some()
}

fn nlse_cost(v: &mut Verdict) -> Outcome {
    let hs = [0.008, 0.004, 0.002, 0.001, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5];
    let grids: &[f64] = if smoke() { &[0.1] } else { &[0.1, 0.025] };
    for &hx in grids {
        let start = Instant::now();
        let p = nlse(hx, 0.0025);
        let studies = sweep(&p, &["S-GL2", "PT-GL2", "PT-Ham-GL2", "PT-CN"], &hs, nlse_reference(), nlse_solver())?;
        let secs = start.elapsed().as_secs_f64();
        let budget = if hx >= 0.1 { 120.0 } else { 1800.0 };
        v.check(secs <= budget, format!("hx={hx}: sweep took {secs:.0} s (≤ {budget:.0} s)"));
        for pt in &studies[1..] {
            let matched = unsaturated_matched_costs(&studies[0], pt);
            let bad: Vec<f64> = matched.iter().filter(|m| m.2 >= m.1).map(|m| m.0).collect();
            v.check(
                matched.len() >= 3 && bad.is_empty(),
                format!("hx={hx} {}: cheaper than S-GL2 at {}/{} matched unsaturated levels (violations at {})", pt.method, matched.len() - bad.len(), matched.len(), sci(&bad)),
            );
        }
    }
    Ok(())
}

fn nlse_observable(v: &mut Verdict) -> Outcome {
    let hx = if smoke() { 0.1 } else { 0.025 };
    let p = nlse(hx, 0.005);
    let kind = DynamicsKind::Schrodinger;
    let reference = compute_reference(&p, &nlse_reference(), kind)?;
    let centre = |t: &Trajectory, k: DynamicsKind| -> Result<Vec<f64>, Box<dyn StdError>> {
        Ok(observables(t, &p, k)?.into_iter().map(|o| o.x_center.unwrap_or(f64::NAN)).collect())
    };
    let xr = centre(&reference, kind)?;
    let phi0 = p.initial_state()?;
    let mut dev = Vec::new();
    for m in methods(&["S-GL2", "PT-GL2"]) {
        let integ = IntegratorConfig::new(m.scheme, 0.004).with_solver(nlse_solver());
        let traj = propagate(&p, m.kind, &integ, &phi0)?;
        let x = centre(&traj, m.kind)?;
        let d = max_over(common_samples(&traj, &reference).into_iter().map(|(i, j)| (x[i] - xr[j]).abs()));
        v.check(traj.completed(), format!("hx={hx} {m} h=0.004: max |⟨x⟩ − ⟨x⟩_ref| = {d:.4e}"));
        dev.push(d);
    }
    let ratio = dev[0] / dev[1];
    v.check(ratio >= 5.0, format!("S-GL2/PT-GL2 deviation ratio {ratio:.2} (≥ 5)"));
    Ok(())
}

type Criterion = (u32, &'static str, fn(&mut Verdict) -> Outcome);

const CRITERIA: [Criterion; 12] = [
    (1, "stationarity", stationarity),
    (2, "convergence_orders", convergence_orders),
    (3, "eps_order_gain", eps_order_gain),
    (4, "turning_points", turning_points),
    (5, "norm_conservation", norm_conservation),
    (6, "gauge_invariance", gauge_invariance),
    (7, "transport_equivalence", transport_equivalence),
    (8, "adiabatic_theorem", adiabatic_theorem),
    (9, "derivative_scaling", derivative_scaling),
    (10, "beyond_adiabatic", beyond_adiabatic),
    (11, "nlse_cost", nlse_cost),
    (12, "nlse_observable", nlse_observable),
];

fn key(n: u32, name: &str) -> String {
    format!("criterion_{n:02}_{name}")
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("{}: test", key(n, name));
        }
        return ExitCode::SUCCESS;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let selected = |n: u32, name: &str| {
        filters.is_empty()
            || filters.iter().any(|f| match f.parse::<u32>() { Ok(k) => k == n, Err(_) => key(n, name).contains(f.as_str()) })
    };
    let mut failed = Vec::new();
    for (n, name, run) in CRITERIA.into_iter().filter(|c| selected(c.0, c.1)) {
        let start = Instant::now();
        let mut v = Verdict::default();
        match catch_unwind(AssertUnwindSafe(|| run(&mut v))) {
            Ok(Ok(())) => {}
            Ok(Err(e)) => v.check(false, format!("error: {e}")),
            Err(_) => v.check(false, "panicked"),
        }
        let status = if v.passed() { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {} ({:.1} s)", key(n, name), start.elapsed().as_secs_f64());
        for (ok, detail) in &v.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "FAILED" });
        }
        if !v.passed() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

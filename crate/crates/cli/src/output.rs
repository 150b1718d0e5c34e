//! CSV rendering. Floats are written with 17 significant digits, which
//! round-trips every f64 exactly.

use std::fmt::Write;

use ptgauge::analysis::{ConvergenceStudy, Observables};
use ptgauge::experiment::ScalingReport;
use ptgauge::{RunConfig, Trajectory};

pub const PREAMBLE_TAG: &str = "# ptgauge ";

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// `# ptgauge <command>` then the effective config, one `# ` line each.
pub fn preamble(command: &str, cfg: &RunConfig) -> String {
    let mut s = format!("{PREAMBLE_TAG}{command}\n");
    for line in cfg.to_toml_string().lines() {
        if line.is_empty() {
            s.push_str("#\n");
        } else {
            writeln!(s, "# {line}").unwrap();
        }
    }
    s
}

/// Orbital column names: `phi_k` for one orbital, `phi<j>_k` otherwise.
fn orbital_labels(rows: usize, cols: usize) -> Vec<String> {
    (0..cols)
        .flat_map(|j| {
            (0..rows).map(move |k| if cols == 1 { format!("phi_{k}") } else { format!("phi{j}_{k}") })
        })
        .collect()
}

pub fn propagate_table(traj: &Trajectory, obs: &[Observables], observables_only: bool) -> String {
    let (rows, cols) = traj.shape();
    let labels = if observables_only { Vec::new() } else { orbital_labels(rows, cols) };
    let with_x = obs.first().is_some_and(|o| o.x_center.is_some());

    let mut head = vec!["t".to_string()];
    head.extend(labels.iter().map(|l| format!("re_{l}")));
    head.extend(labels.iter().map(|l| format!("im_{l}")));
    head.extend(["norm".into(), "energy".into()]);
    if with_x {
        head.push("x_center".into());
    }
    head.push("anderson_iters".into());

    let mut s = head.join(",");
    s.push('\n');
    for (i, o) in obs.iter().enumerate() {
        let mut row = vec![num(o.t)];
        if !observables_only {
            // column-major: orbital j, component k
            let state = traj.view(i);
            row.extend(state.iter().map(|z| num(z.re)));
            row.extend(state.iter().map(|z| num(z.im)));
        }
        row.push(num(o.norm));
        row.push(num(o.energy));
        if let Some(x) = o.x_center {
            row.push(num(x));
        }
        row.push(traj.reports[i].iterations.to_string());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn converge_table(studies: &[ConvergenceStudy]) -> String {
    let mut s = String::from("method,eps,h,error,diverged,total_anderson_iters,wall_seconds\n");
    for study in studies {
        for p in &study.points {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                study.method,
                num(study.eps),
                num(p.h),
                num(p.error),
                p.diverged,
                p.anderson_iters,
                num(p.wall_seconds)
            )
            .unwrap();
        }
    }
    s
}

/// Fitted slopes, then the raw points behind them.
pub fn scaling_tables(report: &ScalingReport) -> String {
    let mut s = String::from("method,fixed_h_or_stage,slope,r2\n");
    for r in &report.rows {
        writeln!(s, "{},{},{},{}", r.method, r.fixed_h_or_stage, num(r.slope), num(r.r2)).unwrap();
    }
    s.push_str("# points\nmethod,fixed_h_or_stage,eps,value,diverged\n");
    for p in &report.points {
        writeln!(s, "{},{},{},{},{}", p.method, p.fixed_h_or_stage, num(p.eps), num(p.value), p.diverged).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits: String = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).collect();
            assert_eq!(digits.len(), 17);
        }
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn orbital_labels_are_column_major() {
        assert_eq!(orbital_labels(2, 1), ["phi_0", "phi_1"]);
        assert_eq!(orbital_labels(2, 2), ["phi0_0", "phi0_1", "phi1_0", "phi1_1"]);
    }
}

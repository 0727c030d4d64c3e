//! Side-by-side runs of scenarios that share a robot.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use crate::runner::{create_dir, run, write_file, HarnessError, RunOutput};
use crate::scenario::Scenario;

/// Runs every scenario on its own thread; results keep the input order.
///
/// Needs at least two scenarios on the same robot model and time step.
pub fn compare(scenarios: &[Scenario]) -> Result<Vec<RunOutput>, HarnessError> {
    if scenarios.len() < 2 {
        return Err(HarnessError::Usage("compare needs at least two scenarios".into()));
    }
    let first = &scenarios[0];
    for s in &scenarios[1..] {
        if s.model != first.model {
            return Err(HarnessError::Usage(format!(
                "`{}` and `{}` use different robot models",
                first.name, s.name
            )));
        }
        if s.sim.dt != first.sim.dt {
            return Err(HarnessError::Usage(format!(
                "`{}` and `{}` use different time steps",
                first.name, s.name
            )));
        }
    }
    thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// One row per run: steady-state errors in mm and rad, settling time, peak torque, breaches.
pub fn table(runs: &[RunOutput]) -> String {
    let width = runs.iter().map(|r| r.name.len()).max().unwrap_or(0).max("scenario".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>12}  {:>12}  {:>11}  {:>13}  {:>8}",
        "scenario", "ss_pos [mm]", "ss_rot [rad]", "settle [s]", "max_tau [Nm]", "breaches"
    );
    for r in runs {
        let m = &r.metrics;
        let settle = m.settling_time.map_or_else(|| "-".to_owned(), |t| format!("{t:.3}"));
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.4}  {:>12.5}  {:>11}  {:>13.2}  {:>8}",
            r.name,
            m.steady_state_pos_err * 1e3,
            m.steady_state_rot_err,
            settle,
            m.max_torque,
            m.limit_breaches
        );
    }
    out
}

/// Writes `table.txt`, `metrics.json` and `errors.dat` into `dir`.
///
/// `errors.dat` is whitespace-separated columns for external plotting: time,
/// then `|e_pos|` and `|e_rot|` of each run. Runs shorter than the longest are
/// padded with `nan`.
pub fn write_comparison(runs: &[RunOutput], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    create_dir(dir)?;
    let table_path = dir.join("table.txt");
    write_file(&table_path, |w| w.write_all(table(runs).as_bytes()))?;

    let metrics_path = dir.join("metrics.json");
    let rows: Vec<_> = runs
        .iter()
        .map(|r| serde_json::json!({ "name": r.name, "metrics": r.metrics }))
        .collect();
    write_file(&metrics_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &rows)?;
        w.write_all(b"\n")
    })?;

    let errors_path = dir.join("errors.dat");
    write_file(&errors_path, |w| {
        write!(w, "# t")?;
        for (i, r) in runs.iter().enumerate() {
            write!(w, " pos_{i}_{} rot_{i}_{}", r.name, r.name)?;
        }
        writeln!(w)?;
        let longest = runs.iter().max_by_key(|r| r.log.rows.len()).expect("at least one run");
        for (k, row) in longest.log.rows.iter().enumerate() {
            write!(w, "{}", row.t)?;
            for r in runs {
                match r.log.rows.get(k) {
                    Some(x) => write!(w, " {} {}", x.e_pos.norm(), x.e_rot.norm())?,
                    None => write!(w, " nan nan")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(vec![table_path, metrics_path, errors_path])
}

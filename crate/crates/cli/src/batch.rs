use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use evac_core::sim::Metrics;

use crate::{read, simulate, Solver};

pub struct Row {
    pub scenario: String,
    pub seed: Option<u64>,
    pub solver: Option<Solver>,
    pub metrics: Metrics,
}

/// Every (scenario, seed, solver) combination, each on its own thread.
/// Rows come back in input order whatever the finishing order.
pub fn run_all(
    scenarios: &[PathBuf],
    seeds: &[u64],
    solvers: &[Solver],
) -> anyhow::Result<Vec<Row>> {
    let seeds: Vec<Option<u64>> = if seeds.is_empty() {
        vec![None]
    } else {
        seeds.iter().copied().map(Some).collect()
    };
    let solvers: Vec<Option<Solver>> = if solvers.is_empty() {
        vec![None]
    } else {
        solvers.iter().copied().map(Some).collect()
    };
    let bundles = scenarios
        .iter()
        .map(|p| read(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for b in &bundles {
        for &seed in &seeds {
            for &solver in &solvers {
                jobs.push((b, seed, solver));
            }
        }
    }
    thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(b, seed, solver)| {
                scope.spawn(move || {
                    simulate(b, seed, solver).map(|out| Row {
                        scenario: b.scenario.name.clone(),
                        seed: seed.or(Some(b.scenario.seed)),
                        solver,
                        metrics: out.metrics,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

fn solver_name(s: Option<Solver>) -> &'static str {
    s.map_or("scenario", Solver::name)
}

pub fn write(dir: &Path, rows: &[Row]) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("batch.csv"))?;
    writeln!(
        f,
        "scenario,seed,solver,tet,ct,max_patient_wait,total_evacuated"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            solver_name(r.solver),
            r.metrics.tet,
            r.metrics.ct,
            r.metrics.max_patient_wait,
            r.metrics.total_evacuated
        )?;
    }
    Ok(())
}

pub fn table(rows: &[Row]) -> String {
    let mut s = format!(
        "{:<16} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10}\n",
        "scenario", "seed", "solver", "TET", "CT", "max wait", "evacuated"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:>8} {:>9} {:>10.1} {:>10.1} {:>10.1} {:>10}\n",
            r.scenario,
            r.seed.map(|x| x.to_string()).unwrap_or_default(),
            solver_name(r.solver),
            r.metrics.tet,
            r.metrics.ct,
            r.metrics.max_patient_wait,
            r.metrics.total_evacuated
        ));
    }
    s
}

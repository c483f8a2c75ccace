use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use evac_core::sim::trace::{write_metrics_csv, write_trace};
use evac_core::sim::{Metrics, RunOutput};

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes every artifact of one run under `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("trace.jsonl"))?;
    write_trace(&mut w, &out.trace)?;
    w.flush()?;

    let mut w = create(&dir.join("metrics.json"))?;
    serde_json::to_writer_pretty(&mut w, &out.metrics)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(&dir.join("metrics.csv"))?;
    write_metrics_csv(&mut w, &out.metrics)?;
    w.flush()?;

    let mut w = create(&dir.join("plans.json"))?;
    serde_json::to_writer_pretty(&mut w, &out.plans)?;
    writeln!(w)?;
    w.flush()?;

    let signals = dir.join("signals");
    fs::create_dir_all(&signals)?;
    for (node, c) in &out.signals {
        let mut w = create(&signals.join(format!("node_{}.csv", node.0)))?;
        c.write_trace_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&signals.join(format!("node_{}_service.csv", node.0)))?;
        writeln!(w, "t,vehicle,event,class,score,pending")?;
        for r in c.service_log() {
            writeln!(
                w,
                "{},{},{:?},{:?},{},{}",
                r.t,
                r.vehicle.0,
                r.event,
                r.score.class,
                r.score.value,
                r.pending.len()
            )?;
        }
        w.flush()?;
    }

    let solvers = dir.join("solvers");
    fs::create_dir_all(&solvers)?;
    for (i, (name, info)) in out.solves.iter().enumerate() {
        let mut w = create(&solvers.join(format!("{i:02}_{name}.csv")))?;
        writeln!(
            w,
            "# mode {}",
            serde_json::to_string(&info.mode)?.trim_matches('"')
        )?;
        writeln!(w, "generation,primary,secondary")?;
        for (g, row) in info.history.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{g},{}", cells.join(","))?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn metrics_table(m: &Metrics) -> String {
    let mut rows = vec![
        (
            "total evacuation time (s)".to_string(),
            format!("{:.1}", m.tet),
        ),
        ("congestion time (s)".to_string(), format!("{:.1}", m.ct)),
        (
            "max patient wait (s)".to_string(),
            format!("{:.1}", m.max_patient_wait),
        ),
        ("total evacuated".to_string(), m.total_evacuated.to_string()),
    ];
    for (d, l) in &m.notification_latency {
        rows.push((format!("latency {} (s)", d.name()), format!("{l:.1}")));
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        s.push_str(&format!("{k:<width$}  {v:>10}\n"));
    }
    s
}

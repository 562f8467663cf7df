//! Parallel incentive sweep with a resumable CSV log and gnuplot data.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sbrp_core::simulation::{summarize, validate_grid, CurvePoint, Simulator};
use sbrp_core::{SavingsCurve, Scenario};

use crate::{Error, Result};

pub const CSV_HEADER: &str = "tau,replicas,mean_savings,std_savings,p_fail,mean_buses,mean_optouts";

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; all cores when `None`.
    pub threads: Option<usize>,
    /// Keep rows already in the CSV and only run the missing levels.
    pub resume: bool,
    /// Per-level progress lines on stderr.
    pub progress: bool,
}

fn csv_preamble(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash}\n# seed={seed}\n{CSV_HEADER}\n")
}

pub fn csv_row(p: &CurvePoint) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        p.tau, p.replicas, p.mean_savings, p.std_savings, p.p_fail, p.mean_buses, p.mean_optouts
    )
}

/// Full CSV text for a finished curve.
pub fn curve_to_csv(curve: &SavingsCurve, config_hash: &str, seed: u64) -> String {
    let mut out = csv_preamble(config_hash, seed);
    for p in &curve.points {
        out.push_str(&csv_row(p));
        out.push('\n');
    }
    out
}

/// Reads rows written by [`curve_to_csv`], checking that the file belongs to
/// the same configuration and seed.
pub fn read_csv(path: &Path, text: &str, config_hash: &str, seed: u64) -> Result<Vec<CurvePoint>> {
    let mismatch = |what: &str| {
        Error::invalid(
            path.display().to_string(),
            format!("{what} differs from this run; remove the file or drop --resume"),
        )
    };
    let mut lines = text.lines().enumerate();
    let expect = [format!("# config_hash={config_hash}"), format!("# seed={seed}"), CSV_HEADER.to_string()];
    for (want, what) in expect.iter().zip(["config hash", "seed", "header"]) {
        match lines.next() {
            Some((_, l)) if l == want => {}
            _ => return Err(mismatch(what)),
        }
    }
    let mut points = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { path: path.to_path_buf(), line: k + 1, column: 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let replicas: usize = f[1].parse().map_err(|e| bad(format!("{:?}: {e}", f[1])))?;
        points.push(CurvePoint {
            tau: num(f[0])?,
            replicas,
            mean_savings: num(f[2])?,
            std_savings: num(f[3])?,
            p_fail: num(f[4])?,
            mean_buses: num(f[5])?,
            mean_optouts: num(f[6])?,
            degenerate: replicas == 1,
        });
    }
    Ok(points)
}

/// One block per series, `tau value` per line, blocks separated by two blank
/// lines so gnuplot can address them with `index`.
pub fn plot_data(curve: &SavingsCurve) -> String {
    let series: [(&str, fn(&CurvePoint) -> f64); 5] = [
        ("mean_savings", |p| p.mean_savings),
        ("std_savings", |p| p.std_savings),
        ("p_fail", |p| p.p_fail),
        ("mean_buses", |p| p.mean_buses),
        ("mean_optouts", |p| p.mean_optouts),
    ];
    let mut out = String::new();
    for (k, (name, get)) in series.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# {name}\n"));
        for p in &curve.points {
            out.push_str(&format!("{} {}\n", p.tau, get(p)));
        }
    }
    out
}

/// All replicas at one level on the current pool, in replica order.
pub fn parallel_replicas(sim: &Simulator, tau: f64, replicas: usize, seed: u64) -> Result<Vec<Scenario>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| sim.run_replica(tau, r, seed))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::from)
}

/// Runs the sweep, appending each level to `csv` as soon as it finishes.
/// The result is identical for any thread count.
pub fn run_sweep(
    sim: &Simulator,
    taus: &[f64],
    replicas: usize,
    seed: u64,
    config_hash: &str,
    csv: Option<&Path>,
    options: &SweepOptions,
) -> Result<SavingsCurve> {
    validate_grid(taus)?;
    if replicas == 0 {
        return Err(Error::invalid("sweep.replicas", "must be at least 1"));
    }
    let mut done = Vec::new();
    if let Some(path) = csv {
        let existing = if options.resume && path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(read_csv(path, &text, config_hash, seed)?)
        } else {
            None
        };
        match existing {
            Some(points) => done = points,
            None => std::fs::write(path, csv_preamble(config_hash, seed)).map_err(|e| Error::io(path, e))?,
        }
        for p in &done {
            if !taus.contains(&p.tau) || p.replicas != replicas {
                return Err(Error::invalid(
                    path.display().to_string(),
                    format!("row for tau={} does not belong to this grid", p.tau),
                ));
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Solver(e.to_string()))?;
    let mut curve = SavingsCurve::default();
    for (k, &tau) in taus.iter().enumerate() {
        if let Some(p) = done.iter().find(|p| p.tau == tau) {
            curve.points.push(p.clone());
            continue;
        }
        let start = Instant::now();
        let scenarios = pool.install(|| parallel_replicas(sim, tau, replicas, seed))?;
        let point = summarize(tau, &scenarios)?;
        if let Some(path) = csv {
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", csv_row(&point)).map_err(|e| Error::io(path, e))?;
        }
        if options.progress {
            eprintln!(
                "[{}/{}] tau={} mean_savings={:.1} p_fail={:.3} mean_buses={:.2} ({:.1}s)",
                k + 1,
                taus.len(),
                tau,
                point.mean_savings,
                point.p_fail,
                point.mean_buses,
                start.elapsed().as_secs_f64()
            );
        }
        curve.points.push(point);
    }
    Ok(curve)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbrp::config::RunConfig;
use sbrp::files::{self, Provenance};
use sbrp::lp::{write_lp, LpModel};
use sbrp::sweep::{plot_data, run_sweep, SweepOptions};
use sbrp::{Error, Result};
use sbrp_core::optout::CalibrationAnchors;
use sbrp_core::routing::milp::build_milp;
use sbrp_core::simulation::{routing_problem, Simulator};
use sbrp_core::{
    build_candidate_sets, fit_ridership, generate_synthetic, solve_allocation, solve_routing, Allocation,
    Instance, OptOutModel, RidershipModel, RoutingProblem, SyntheticParams,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "sbrp", version, about = "School bus routing with an open opt-out offer")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set bus.capacity=40`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic instance with Beta-distributed student coordinates.
    Generate {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Defaults to `sweep.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Affine ridership model matching the configured mean.
    FitRidership {
        instance: PathBuf,
        #[arg(long)]
        mean: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Opt-out coefficients from anchor probabilities.
    CalibrateOptout {
        #[arg(long)]
        d_close: Option<f64>,
        #[arg(long)]
        p_high: Option<f64>,
        #[arg(long)]
        tau_high: Option<f64>,
        #[arg(long)]
        d_far: Option<f64>,
        #[arg(long)]
        p_low: Option<f64>,
        #[arg(long)]
        tau_low: Option<f64>,
        #[arg(long)]
        epsilon0: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Open stops and assign every student to one.
    Allocate {
        instance: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Chance-constrained routes for an allocation.
    Route {
        instance: PathBuf,
        /// Allocation file; solved on the fly when absent.
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Routing model in LP format.
    ExportMilp {
        instance: PathBuf,
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Expected savings over the incentive grid.
    Sweep {
        instance: PathBuf,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write gnuplot-style series to this file.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Keep finished levels already in the output file.
        #[arg(long, requires = "out")]
        resume: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Check an instance and optionally an allocation and a plan against it.
    Validate {
        instance: PathBuf,
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => files::write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

fn provenance(cfg: &RunConfig, seed: u64) -> Provenance {
    Provenance { config_hash: cfg.hash(), seed }
}

fn ridership(cfg: &RunConfig, instance: &Instance, mean: Option<f64>) -> Result<RidershipModel> {
    let d: Vec<f64> = instance.students.iter().map(|s| s.dist_school).collect();
    fit_ridership(&d, mean.unwrap_or(cfg.ridership.mean), cfg.ridership.transform.into())
        .map_err(|e| Error::invalid("ridership", e))
}

fn allocation(instance: &Instance, path: Option<&Path>) -> Result<Allocation> {
    match path {
        Some(p) => files::load_allocation(instance, p),
        None => {
            let cands = build_candidate_sets(instance).map_err(|e| Error::invalid("instance", e))?;
            solve_allocation(&cands, instance.stop_capacity).map_err(|e| Error::Solver(e.to_string()))
        }
    }
}

fn problem(cfg: &RunConfig, instance: &Instance, alloc: &Allocation) -> Result<RoutingProblem> {
    let model = ridership(cfg, instance, None)?;
    routing_problem(instance, alloc, &model, &cfg.planning()?).map_err(|e| Error::invalid("routing", e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Generate { n, alpha, beta, seed, output } => {
            let seed = seed.unwrap_or(cfg.sweep.base_seed);
            let params = SyntheticParams {
                side: cfg.instance.side,
                walk_limit: cfg.instance.walk_limit,
                stop_capacity: cfg.instance.stop_capacity,
                stop_spacing: cfg.instance.stop_spacing,
                ..SyntheticParams::new(n, alpha, beta, seed)
            };
            let instance = generate_synthetic(&params).map_err(|e| Error::invalid("generate", e))?;
            emit(&output, &files::instance_to_json(&instance, Some(&provenance(&cfg, seed))))
        }
        Command::FitRidership { instance, mean, output } => {
            let (inst, _) = files::load_instance(&instance)?;
            let m = ridership(&cfg, &inst, mean)?;
            let rho: Vec<f64> = inst.students.iter().map(|s| m.individual_ridership(s.dist_school)).collect();
            let value = json!({
                "rho0": m.rho0,
                "rho1": m.rho1,
                "transform": cfg.ridership.transform,
                "mean": rho.iter().sum::<f64>() / rho.len() as f64,
                "provenance": provenance(&cfg, inst.seed),
            });
            emit(&output, &pretty(&value))
        }
        Command::CalibrateOptout { d_close, p_high, tau_high, d_far, p_low, tau_low, epsilon0, output } => {
            let given = cfg.optout.anchors();
            let pick = |flag: Option<f64>, f: fn(&CalibrationAnchors) -> f64, key: &str| {
                flag.or(given.as_ref().map(f))
                    .ok_or_else(|| Error::invalid("calibrate-optout", format!("missing anchor {key}")))
            };
            let anchors = CalibrationAnchors {
                d_close: pick(d_close, |a| a.d_close, "d_close")?,
                p_high: pick(p_high, |a| a.p_high, "p_high")?,
                tau_high: pick(tau_high, |a| a.tau_high, "tau_high")?,
                d_far: pick(d_far, |a| a.d_far, "d_far")?,
                p_low: pick(p_low, |a| a.p_low, "p_low")?,
                tau_low: pick(tau_low, |a| a.tau_low, "tau_low")?,
                epsilon0: pick(epsilon0, |a| a.epsilon0, "epsilon0")?,
            };
            let m = OptOutModel::calibrate(&anchors).map_err(|e| Error::invalid("calibrate-optout", e))?;
            let value = json!({
                "a": m.a,
                "b": m.b,
                "c": m.c,
                "provenance": provenance(&cfg, cfg.sweep.base_seed),
            });
            emit(&output, &pretty(&value))
        }
        Command::Allocate { instance, output } => {
            let (inst, _) = files::load_instance(&instance)?;
            let alloc = allocation(&inst, None)?;
            emit(&output, &files::allocation_to_json(&inst, &alloc, Some(&provenance(&cfg, inst.seed))))
        }
        Command::Route { instance, allocation: alloc_path, output } => {
            let (inst, _) = files::load_instance(&instance)?;
            let alloc = allocation(&inst, alloc_path.as_deref())?;
            let p = problem(&cfg, &inst, &alloc)?;
            let plan = solve_routing(&p).map_err(|e| Error::Solver(e.to_string()))?;
            emit(&output, &files::plan_to_json(&p, &plan, Some(&provenance(&cfg, inst.seed))))
        }
        Command::ExportMilp { instance, allocation: alloc_path, output } => {
            let (inst, _) = files::load_instance(&instance)?;
            let alloc = allocation(&inst, alloc_path.as_deref())?;
            let p = problem(&cfg, &inst, &alloc)?;
            let model = build_milp(&p).map_err(|e| Error::invalid("export-milp", e))?;
            let comments = vec![
                format!("W = {}", model.bus_weight),
                "objective = W * buses + total_time".to_string(),
                format!("config_hash = {}", cfg.hash()),
                format!("seed = {}", inst.seed),
                format!("stops = {}, buses = {}", p.n_stops(), p.fleet.len()),
            ];
            emit(&output, &write_lp(&LpModel::from_milp(&model, comments)))
        }
        Command::Sweep { instance, replicas, seed, threads, plot_data: plot_path, resume, out, quiet } => {
            let (inst, _) = files::load_instance(&instance)?;
            let model = ridership(&cfg, &inst, None)?;
            let replicas = replicas.unwrap_or(cfg.sweep.replicas);
            let seed = seed.unwrap_or(cfg.sweep.base_seed);
            let sim = Simulator::new(inst, model, cfg.optout.model()?, cfg.planning()?, cfg.cost_params()?)?;
            let options = SweepOptions { threads, resume, progress: !quiet };
            let hash = cfg.hash();
            let curve = run_sweep(&sim, &cfg.sweep.grid(), replicas, seed, &hash, out.as_deref(), &options)?;
            if out.is_none() {
                print!("{}", sbrp::sweep::curve_to_csv(&curve, &hash, seed));
            }
            if let Some(path) = plot_path {
                let text = format!("# config_hash={hash}\n# seed={seed}\n{}", plot_data(&curve));
                files::write_text(&path, &text)?;
            }
            Ok(())
        }
        Command::Validate { instance, allocation: alloc_path, plan } => {
            let (inst, _) = files::load_instance(&instance)?;
            build_candidate_sets(&inst).map_err(|e| Error::invalid("instance", e))?;
            let mut report = json!({
                "ok": true,
                "students": inst.students.len(),
                "stops": inst.stops.len(),
            });
            if alloc_path.is_some() || plan.is_some() {
                let alloc = allocation(&inst, alloc_path.as_deref())?;
                report["open_stops"] = json!(alloc.open_count);
                if let Some(path) = plan {
                    let p = problem(&cfg, &inst, &alloc)?;
                    let plan = files::load_plan(&p, &path)?;
                    report["buses"] = json!(plan.bus_count);
                }
            }
            print!("{}", pretty(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use barrier_transfer::benchmarks::{load_benchmark, Scale, BENCHMARK_NAMES};
use barrier_transfer::certify::{verify_cbc_on_grid_with, CertifyOptions};
use barrier_transfer::config::ProblemDef;
use barrier_transfer::grid::build_grid;
use barrier_transfer::model::ControlLaw as Law;
use barrier_transfer::report::{
    full_run, trajectories_csv, verdict_csv, violation_map, FullRunOptions, Slice,
};
use barrier_transfer::simulate::{rollouts, sample_initial_states};
use barrier_transfer::transfer::run_transfer_observed;
use barrier_transfer::{BenchmarkDef, ControlLaw, Mlp};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "barrier-transfer", version, about = "Transfer barrier-certified controllers to perturbed systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-check the source certificate on the source closed loop.
    VerifySource(Common),
    /// Train the inverse-dynamics controller until the validity condition holds.
    Transfer(Common),
    /// Grid-check the source certificate on the target closed loop under a trained controller.
    CertifyTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: PathBuf,
    },
    /// Roll out a closed loop from sampled initial states.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sel: LoopSelect,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        /// Defaults to the benchmark horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Per-grid-point barrier values and violation flags as CSV.
    ViolationMap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sel: LoopSelect,
    },
    /// Verify, transfer, certify and simulate, writing the full report bundle.
    FullRun {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Print the names of the shipped benchmarks.
    List,
}

#[derive(Args)]
struct Common {
    /// Shipped benchmark name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    benchmark: Option<String>,
    /// Problem description file (same schema as the shipped benchmarks).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the grid spacing of the selected scale.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Fixed coordinates for maps of systems with more than two states, e.g. `2=0,3=0`.
    #[arg(long)]
    slice: Option<Slice>,
}

#[derive(Args)]
struct LoopSelect {
    #[arg(long, value_enum, default_value_t = SystemArg::Target)]
    system: SystemArg,
    /// Trained network; without it the source controller is used.
    #[arg(long)]
    controller: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SystemArg {
    Source,
    Target,
}

impl Common {
    fn load(&self) -> Result<BenchmarkDef> {
        let scale = match self.scale {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        };
        let mut def: BenchmarkDef = match (&self.benchmark, &self.config) {
            (Some(name), _) => load_benchmark(name, scale)?,
            (None, Some(path)) => {
                let p = ProblemDef::from_path(path).with_context(|| format!("reading {}", path.display()))?;
                BenchmarkDef::from_problem(&p, scale)?
            }
            (None, None) => bail!("either --benchmark or --config is required"),
        };
        if let Some(e) = self.epsilon {
            match scale {
                Scale::Desk => def.epsilon_desk = e,
                Scale::Paper => def.epsilon_paper = e,
            }
        }
        if let Some(s) = self.seed {
            def.transfer.seed = s;
        }
        if let Some(lr) = self.lr {
            def.transfer.learning_rate = lr;
        }
        if let Some(r) = self.max_rounds {
            def.transfer.max_outer_rounds = r;
        }
        def.transfer.validate()?;
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(def)
    }
}

fn load_controller(def: &BenchmarkDef, path: &Path) -> Result<ControlLaw> {
    let net = Mlp::load(path).with_context(|| format!("loading {}", path.display()))?;
    if net.input_dim() != def.target.state_dim() || net.output_dim() != def.target.input_dim() {
        bail!(
            "controller maps {} -> {}, the system needs {} -> {}",
            net.input_dim(),
            net.output_dim(),
            def.target.state_dim(),
            def.target.input_dim()
        );
    }
    Ok(Law::neural(net, def.target.input_box.clone()))
}

fn write(out: &Path, name: &str, body: &str) -> Result<()> {
    let p = out.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    println!("wrote {}", p.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::List => {
            for n in BENCHMARK_NAMES {
                println!("{n}");
            }
            Ok(0)
        }
        Command::VerifySource(c) => {
            let def = c.load()?;
            let grid = build_grid(&def.source.state_box, def.epsilon())?;
            let v = verify_cbc_on_grid_with(
                &def.source_cbc,
                &def.source,
                &def.source_controller,
                &def.spec,
                &grid,
                &CertifyOptions::with_decrease(def.decrease),
            )?;
            write(&c.out, "source_verdict.csv", &verdict_csv(&v))?;
            println!(
                "{} grid points, violations per condition {:?}, certified = {}",
                grid.len(),
                v.violation_counts,
                v.all_ok()
            );
            Ok(if v.all_ok() { 0 } else { 2 })
        }
        Command::Transfer(c) => {
            let def = c.load()?;
            let grid = build_grid(&def.source.state_box, def.epsilon())?;
            let (mut report, law) = run_transfer_observed(
                &def.source,
                &def.source_controller,
                &def.source_cbc,
                &def.target,
                &grid,
                &def.transfer,
                |r| {
                    println!(
                        "round {:>3}  E = {:.3e}  L_khat = {:.3}  lhs = {:.3e}",
                        r.round, r.mismatch_e, r.lip_k_hat, r.validity_lhs
                    )
                },
            )?;
            if let Some(net) = law.network() {
                net.save(&c.out.join("controller.bin"))?;
                report.final_controller = Some("controller.bin".into());
            }
            write(&c.out, "transfer_trace.csv", &report.to_csv())?;
            println!("converged = {}", report.converged);
            Ok(if report.converged { 0 } else { 2 })
        }
        Command::CertifyTarget { common, controller } => {
            let def = common.load()?;
            let law = load_controller(&def, &controller)?;
            let grid = build_grid(&def.target.state_box, def.epsilon())?;
            let v = verify_cbc_on_grid_with(
                &def.source_cbc,
                &def.target,
                &law,
                &def.spec,
                &grid,
                &CertifyOptions::with_decrease(def.decrease),
            )?;
            write(&common.out, "target_verdict.csv", &verdict_csv(&v))?;
            println!("violations per condition {:?}, certified = {}", v.violation_counts, v.all_ok());
            Ok(if v.all_ok() { 0 } else { 2 })
        }
        Command::Simulate {
            common,
            sel,
            rollouts: n,
            horizon,
        } => {
            let def = common.load()?;
            let (sys, law) = pick_loop(&def, &sel)?;
            let x0s = sample_initial_states(&def.spec, n, def.transfer.seed);
            let trajs = rollouts(sys, &law, &x0s, horizon.unwrap_or(def.spec.horizon), &def.spec)?;
            write(&common.out, "trajectories.csv", &trajectories_csv(&trajs))?;
            let bad = trajs.iter().filter(|t| t.entered_unsafe).count();
            println!("{bad} of {} rollouts entered the unsafe set", trajs.len());
            Ok(0)
        }
        Command::ViolationMap { common, sel } => {
            let def = common.load()?;
            let (sys, law) = pick_loop(&def, &sel)?;
            let grid = build_grid(&sys.state_box, def.epsilon())?;
            let slice = match (&common.slice, grid.dim() > 2) {
                (Some(s), _) => Some(s.clone()),
                (None, true) => Some(Slice::default_for(&grid)),
                (None, false) => None,
            };
            let (csv, count) = violation_map(
                &def.source_cbc,
                sys,
                &law,
                &def.spec,
                &grid,
                def.decrease,
                slice.as_ref(),
            )?;
            write(&common.out, "violation_map.csv", &csv)?;
            println!("{count} flagged points");
            Ok(0)
        }
        Command::FullRun {
            common,
            rollouts,
            horizon,
        } => {
            let def = common.load()?;
            let outcome = full_run(
                &def,
                &common.out,
                &FullRunOptions {
                    rollouts,
                    horizon,
                    slice: common.slice.clone(),
                },
            )?;
            for p in &outcome.artifacts {
                println!("wrote {}", p.display());
            }
            println!(
                "converged = {}, target certified = {}, unsafe rollouts = {}",
                outcome.converged, outcome.target_certified, outcome.unsafe_rollouts
            );
            Ok(outcome.exit_code as u8)
        }
    }
}

fn pick_loop<'a>(def: &'a BenchmarkDef, sel: &LoopSelect) -> Result<(&'a barrier_transfer::DtSystem, ControlLaw)> {
    let sys = match sel.system {
        SystemArg::Source => &def.source,
        SystemArg::Target => &def.target,
    };
    let law = match &sel.controller {
        Some(p) => load_controller(def, p)?,
        None => def.source_controller.clone(),
    };
    Ok((sys, law))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

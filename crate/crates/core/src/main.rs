use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use romkit::fom::cavity_self_refinement;
use romkit::pipeline::{self, PodMethod, RunConfig, SpreadRule};
use romkit::RomError;

#[derive(Parser)]
#[command(name = "romkit", version, about = "Offline/online POD-Galerkin reduced-order modelling")]
struct Cli {
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact root, overriding the configuration.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Standard,
    Nested,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spread {
    Median,
    Conditioned,
    Fixed,
}

#[derive(Subcommand)]
enum Command {
    /// Run the FOM at every training μ and store snapshots.
    Generate {
        /// Training μ, one per line, whitespace or comma separated.
        #[arg(long)]
        param_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the lid-driven cavity refinement check instead.
        #[arg(long)]
        cavity_test: bool,
    },
    /// Build the lifting functions.
    Lift,
    /// Compute POD bases and supremizers.
    Pod {
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Energy threshold applied to every field.
        #[arg(long, conflicts_with = "rank")]
        threshold: Option<f64>,
        /// Rank applied to every field.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Assemble the reduced operators.
    Project,
    /// Train the eddy-viscosity interpolant.
    TrainRbf {
        #[arg(long, value_enum)]
        spread: Option<Spread>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Integrate the ROM at one μ.
    Solve {
        /// Inlet velocities, one per parametrized inlet.
        #[arg(long, num_args = 1.., required = true)]
        mu: Vec<f64>,
        /// Time step; defaults to the FOM step.
        #[arg(long)]
        dt: Option<f64>,
        /// Final time; defaults to the FOM horizon.
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the ROM and compare with a FOM run at the same μ.
    Eval {
        /// Inlet velocities, one per parametrized inlet.
        #[arg(long, num_args = 1.., required = true)]
        mu: Vec<f64>,
        /// Time step; defaults to the FOM step.
        #[arg(long)]
        dt: Option<f64>,
        /// Final time; defaults to the FOM horizon.
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// All offline stages, then evaluation at every configured test μ.
    Pipeline,
}

fn parse_params(path: &PathBuf) -> Result<Vec<Vec<f64>>, RomError> {
    let text = std::fs::read_to_string(path).map_err(|e| RomError::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mu = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| RomError::config(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(mu);
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), RomError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = &cli.root {
        cfg.output = r.clone();
    }
    let stage = |cfg: &RunConfig, name: &str| -> Result<(), RomError> {
        cfg.validate()?;
        let fom = romkit::fom::Fom::new(cfg.fom.clone())?;
        std::fs::create_dir_all(cfg.root())?;
        let ran = pipeline::run_stage(cfg, &fom, name, false)?;
        pipeline::write_run_manifest(cfg)?;
        println!("{name}: {}", if ran { "done" } else { "cached" });
        Ok(())
    };
    match cli.command {
        Command::Generate { param_file, out, cavity_test } => {
            if cavity_test {
                let c = cavity_self_refinement(32, 100.0, 40.0, 1e-6)?;
                println!("cavity {}x{} vs {}x{}: centerline deviation {:.3}% (converged: {})", c.coarse, c.coarse, c.fine, c.fine, 100.0 * c.deviation, c.converged);
                return Ok(());
            }
            if let Some(p) = param_file {
                cfg.training_mu = parse_params(&p)?;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            stage(&cfg, "generate")
        }
        Command::Lift => stage(&cfg, "lift"),
        Command::Pod { method, threshold, rank } => {
            if let Some(m) = method {
                cfg.pod.method = match m {
                    Method::Standard => PodMethod::Standard,
                    Method::Nested => PodMethod::Nested,
                };
            }
            for f in [&mut cfg.pod.velocity, &mut cfg.pod.pressure, &mut cfg.pod.temperature, &mut cfg.pod.nut] {
                if let Some(t) = threshold {
                    f.energy = Some(t);
                }
                if let Some(r) = rank {
                    f.rank = Some(r);
                    f.energy = None;
                }
            }
            stage(&cfg, "pod")
        }
        Command::Project => stage(&cfg, "project"),
        Command::TrainRbf { spread, gamma, lambda } => {
            if let Some(s) = spread {
                cfg.rbf.spread = match s {
                    Spread::Median => SpreadRule::Median,
                    Spread::Conditioned => SpreadRule::Conditioned,
                    Spread::Fixed => SpreadRule::Fixed,
                };
            }
            if let Some(g) = gamma {
                cfg.rbf.gamma = g;
                if spread.is_none() {
                    cfg.rbf.spread = SpreadRule::Fixed;
                }
            }
            if let Some(l) = lambda {
                cfg.rbf.lambda = l;
            }
            stage(&cfg, "train-rbf")
        }
        Command::Solve { mu, dt, t_final, out } => online(&cfg, mu, dt, t_final, out, false),
        Command::Eval { mu, dt, t_final, out } => online(&cfg, mu, dt, t_final, out, true),
        Command::Pipeline => {
            for r in pipeline::pipeline(&cfg)? {
                if let Some(rep) = &r.report {
                    print_report(&r.out_dir, rep)?;
                }
            }
            Ok(())
        }
    }
}

fn online(cfg: &RunConfig, mu: Vec<f64>, dt: Option<f64>, t_final: Option<f64>, out: PathBuf, reference: bool) -> Result<(), RomError> {
    cfg.validate()?;
    let om = pipeline::load_online(cfg)?;
    let (d, t) = pipeline::online_time(cfg);
    let r = pipeline::online(cfg, &om, &mu, dt.unwrap_or(d), t_final.unwrap_or(t), &out, reference).map_err(|e| e.in_stage(if reference { "eval" } else { "solve" }))?;
    if r.extrapolation {
        eprintln!("warning: μ = {mu:?} is outside the training range");
    }
    println!("ROM: {} steps in {:.4} s, max |R a| = {:.2e}", r.trajectory.states.len() - 1, r.trajectory.wall_seconds, r.trajectory.max_constraint);
    if let Some(rep) = &r.report {
        print_report(&out, rep)?;
    }
    Ok(())
}

fn print_report(dir: &std::path::Path, rep: &romkit::eval::ErrorReport) -> Result<(), RomError> {
    println!("{}", dir.display());
    for name in rep.series.keys() {
        match rep.stats(name) {
            Ok(s) => println!("  {name:>4}: min {:.3}%  max {:.3}%  avg {:.3}%", s.min, s.max, s.avg),
            Err(_) => println!("  {name:>4}: undefined"),
        }
    }
    println!("  FOM {:.2} s, ROM {:.4} s, speedup {:.1}", rep.fom_seconds, rep.rom_seconds, rep.speedup()?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let root = match &e {
                RomError::Stage { source, .. } => source.as_ref(),
                other => other,
            };
            if matches!(root, RomError::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlab::harness::{inspect_landscape, render_json, run_study, Artifact, ExperimentConfig, Provenance, Study, StudyOutput};
use mlab::injection::InjectionMode;
use mlab::par::{set_threads, Execution};
use mlab::{Error, Result};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mlab", version = mlab::harness::VERSION, about = "Metastability experiments for clipped heavy-tailed SGD")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); defaults to the subcommand's built-in study.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config's (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; MLAB_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Critical points and attraction fields.
    Landscape {
        #[command(subcommand)]
        action: LandscapeAction,
    },
    /// Typical transition graph and communication classes.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// SGD simulations.
    Simulate {
        #[command(subcommand)]
        action: SimulateAction,
    },
    /// Limiting rate constants and Markov chains.
    Limit {
        #[command(subcommand)]
        action: LimitAction,
    },
    /// Simulation against the limiting chain.
    Compare {
        #[command(subcommand)]
        action: CompareAction,
    },
    /// Heavy-tailed noise injection on synthetic problems.
    Inject {
        #[command(subcommand)]
        action: InjectAction,
    },
}

#[derive(Subcommand)]
enum LandscapeAction {
    Inspect,
}

#[derive(Subcommand)]
enum GraphAction {
    Build,
}

#[derive(Subcommand)]
enum SimulateAction {
    /// First-exit times over learning-rate grids.
    Exit,
    /// Time spent in each attraction field.
    Occupancy,
    /// The two-dimensional experiment.
    R2,
}

#[derive(Subcommand)]
enum LimitAction {
    Rates,
    Ctmc {
        /// Communication class (one-based).
        #[arg(long)]
        class: usize,
    },
}

#[derive(Subcommand)]
enum CompareAction {
    Ctmc,
}

#[derive(Subcommand)]
enum InjectAction {
    Demo(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Independent,
    Shared,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Clipping threshold, or `none`.
    #[arg(long, value_parser = parse_threshold)]
    b: Option<Threshold>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    phase1: Option<u64>,
    #[arg(long)]
    phase2: Option<u64>,
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Clone, Copy)]
struct Threshold(Option<f64>);

fn parse_threshold(s: &str) -> std::result::Result<Threshold, String> {
    if s.eq_ignore_ascii_case("none") {
        Ok(Threshold(None))
    } else {
        s.parse::<f64>().map(|b| Threshold(Some(b))).map_err(|e| e.to_string())
    }
}

fn load(common: &Common, kind: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(Study::default_of(kind)?),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn expect_kind(cfg: &ExperimentConfig, kind: &str) -> Result<()> {
    if cfg.study.kind() != kind {
        return Err(Error::config(format!("this subcommand runs a {kind} study, config has {}", cfg.study.kind())));
    }
    Ok(())
}

fn apply_demo(cfg: &mut ExperimentConfig, a: &DemoArgs) -> Result<()> {
    let Study::InjectDemo { problem, seeds, injection, data_seed, .. } = &mut cfg.study else {
        unreachable!("kind checked");
    };
    if let Some(p) = &a.problem {
        if p != problem {
            *problem = p.clone();
            // configured settings belong to the old problem
            *injection = None;
        }
    }
    if let Some(s) = a.seeds {
        *seeds = s;
    }
    let mut inj = match injection {
        Some(i) => *i,
        None => mlab::injection::Problem::by_name(problem, *data_seed)?.default_config(),
    };
    if let Some(m) = a.mode {
        inj.mode = match m {
            Mode::Independent => InjectionMode::Independent,
            Mode::Shared => InjectionMode::Shared,
        };
    }
    if let Some(c) = a.c {
        inj.c = c;
    }
    if let Some(al) = a.alpha {
        inj.alpha = al;
    }
    if let Some(Threshold(b)) = a.b {
        inj.b = b;
    }
    if let Some(e) = a.eta {
        inj.eta = e;
    }
    if let Some(p) = a.phase1 {
        inj.phase1 = p;
    }
    if let Some(p) = a.phase2 {
        inj.phase2 = p;
    }
    *injection = Some(inj);
    cfg.validate()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.common.threads {
        set_threads(t);
    }
    let exec = Execution::Parallel;
    let common = &cli.common;
    let (cfg, output) = match &cli.command {
        Command::Landscape { action: LandscapeAction::Inspect } => {
            let cfg = load(common, "graph")?;
            let v = inspect_landscape(&cfg)?;
            let prov = Provenance::of(&cfg.canonical_json());
            let contents = render_json(&prov, "landscape", v.clone());
            (cfg, StudyOutput { summary: v, artifacts: vec![Artifact { name: "landscape.json".into(), contents }] })
        }
        Command::Graph { action: GraphAction::Build } => study(common, "graph", exec)?,
        Command::Simulate { action } => {
            let kind = match action {
                SimulateAction::Exit => "exit_scaling",
                SimulateAction::Occupancy => "occupancy",
                SimulateAction::R2 => "r2",
            };
            study(common, kind, exec)?
        }
        Command::Limit { action: LimitAction::Rates } => study(common, "rates", exec)?,
        Command::Limit { action: LimitAction::Ctmc { class: k } } => {
            let mut cfg = load(common, "rates")?;
            expect_kind(&cfg, "rates")?;
            if let Study::Rates { class, .. } = &mut cfg.study {
                *class = Some(*k);
            }
            cfg.validate()?;
            let out = run_study(&cfg, exec)?;
            (cfg, out)
        }
        Command::Compare { action: CompareAction::Ctmc } => study(common, "ctmc_compare", exec)?,
        Command::Inject { action: InjectAction::Demo(a) } => {
            let mut cfg = load(common, "inject_demo")?;
            expect_kind(&cfg, "inject_demo")?;
            apply_demo(&mut cfg, a)?;
            let out = run_study(&cfg, exec)?;
            (cfg, out)
        }
    };
    let dir = common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    output.write_to(&dir)?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&output.summary)?);
    for a in &output.artifacts {
        eprintln!("wrote {}", dir.join(&a.name).display());
    }
    Ok(())
}

fn study(common: &Common, kind: &str, exec: Execution) -> Result<(ExperimentConfig, StudyOutput)> {
    let cfg = load(common, kind)?;
    expect_kind(&cfg, kind)?;
    let out = run_study(&cfg, exec)?;
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

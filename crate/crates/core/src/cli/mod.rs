//! Command-line front end: simulate, synth, certify, demo and sweep.
//!
//! Exit codes: 0 success (an empty certificate included), 1 usage or input
//! error, 2 simulation divergence, 3 infeasible program, 4 solver failure.

pub mod config;
pub mod demo;
pub mod pipeline;
mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use demo::{demo_config, run_demo, DemoReport};
pub use pipeline::{Certificate, Dataset, Pipeline};
pub use sweep::{run_sweep, SweepRow};

use crate::error::{Error, Result};
use crate::simlab::DisturbanceSpec;

#[derive(Debug, Parser)]
#[command(
    name = "ddnc",
    version,
    about = "Data-driven nonlinearity-cancelling controller design"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run experiments on a plant and write trajectory CSVs.
    Simulate(SimulateArgs),
    /// Design a controller from data.
    Synth(SynthArgs),
    /// Estimate an attraction or invariance region for a design.
    Certify(CertifyArgs),
    /// Reproduce one of the shipped examples (1 to 10).
    Demo(DemoArgs),
    /// Repeat a pipeline over seeds, disturbance levels and repetitions.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pipeline config; the flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog plant to excite.
    #[arg(long, visible_alias = "model")]
    pub example: Option<String>,
    /// Number of transitions.
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Uniform disturbance bound on |d|.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of repeated experiments with the same inputs.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Trajectory CSVs; averaged when several. Simulated from the config when absent.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Result JSON written by `synth`.
    #[arg(long)]
    pub result: PathBuf,
    /// Experiment CSVs, checked against the region of a `pi` certificate.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Example number, 1 to 10.
    pub id: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    /// Disturbance bounds to sweep; the config's value when absent.
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    /// Repetition counts to sweep; the config's value when absent.
    #[arg(long, value_delimiter = ',')]
    pub repetitions: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.dir.clone())
}

fn simulate_config(a: &SimulateArgs) -> Result<RunConfig> {
    let mut cfg = match (&a.config, &a.example) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::parse(&format!(
            "[model]\nname = {}\n[synthesis]\nmode = \"exact\"\n",
            toml::Value::String(name.clone())
        ))?,
        (None, None) => return Err(Error::Input("simulate needs --example or --config".into())),
    };
    if let (Some(_), Some(name)) = (&a.config, &a.example) {
        cfg.model.name = Some(name.clone());
        cfg.model.custom = None;
    }
    if let Some(t) = a.horizon {
        cfg.experiment.horizon = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.delta {
        cfg.disturbance = DisturbanceSpec::Uniform { delta: d };
    }
    if let Some(r) = a.reps {
        cfg.experiment.repetitions = r;
    }
    Ok(cfg)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = simulate_config(&a)?;
    let dir = out_dir(&cfg, a.out);
    let p = Pipeline::new(cfg)?;
    let runs = p.simulate()?;
    let m = pipeline::write_simulation(&p, &runs, &dir)?;
    println!(
        "wrote {} trajectory file(s) for {} to {}",
        m.repetitions,
        m.model,
        dir.display()
    );
    Ok(())
}

fn dataset(p: &Pipeline, data: &[PathBuf]) -> Result<Dataset> {
    if data.is_empty() {
        p.dataset(p.simulate()?)
    } else {
        p.load_dataset(data)
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let dir = out_dir(&cfg, a.out);
    std::fs::create_dir_all(&dir)?;
    let p = Pipeline::new(cfg)?;
    let ds = dataset(&p, &a.data)?;
    match p.synthesize(&ds) {
        Ok(r) => {
            pipeline::write_json(&dir.join("result.json"), &r)?;
            print!("{}", r.gain_table());
            println!("objective {:.6e}, claim {:?}", r.objective, r.claim);
            Ok(())
        }
        Err(e) => {
            let status = serde_json::json!({
                "status": match e { Error::Infeasible(_) => "infeasible", Error::Solver(_) => "solver_failure", _ => "error" },
                "exit_code": e.exit_code(),
                "message": e.to_string(),
                "config_sha256": p.config_sha256(),
                "dataset_sha256": ds.sha256,
            });
            pipeline::write_json(&dir.join("result.json"), &status)?;
            Err(e)
        }
    }
}

fn cmd_certify(a: CertifyArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let dir = out_dir(&cfg, a.out);
    let p = Pipeline::new(cfg)?;
    let result = pipeline::read_result(&a.result)?;
    let ds = if a.data.is_empty() {
        None
    } else {
        Some(p.load_dataset(&a.data)?)
    };
    let cert = p.certify(&result, ds.as_ref())?;
    pipeline::write_certificate(&cert, &dir)?;
    match cert.gamma {
        Some(g) => println!("{} certificate, gamma = {g:.6}", cert.kind),
        None => println!("empty certificate"),
    }
    Ok(())
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let report = run_demo(a.id, &a.out)?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let dir = out_dir(&cfg, a.out);
    std::fs::create_dir_all(&dir)?;
    let seeds: Vec<u64> = (a.first_seed..a.first_seed + a.seeds).collect();
    let rows = run_sweep(&cfg, &seeds, &a.delta, &a.repetitions)?;
    let path = dir.join("sweep.csv");
    sweep::write_csv(&rows, &path)?;
    print!("{}", sweep::summary(&rows));
    println!("wrote {}", path.display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

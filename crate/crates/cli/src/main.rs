//! `rallyproc` command-line entry point.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rallyproc::calibration::{calibrate, panel_state, pipeline_triple, CalibrationConfig, OutcomeTriple};
use rallyproc::experiments::starting_state_value;
use rallyproc_cli::export::{self, ArtifactId, Format};
use rallyproc_cli::pipeline::EMPIRICAL_TRIPLE;
use rallyproc_cli::{Pipeline, RunConfig, Suite};

#[derive(Parser)]
#[command(name = "rallyproc", version, about = "Tennis point MRP/MDP pipeline with tunable execution error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Root seed of every random stream.
    #[arg(long, default_value_t = RunConfig::default().seed)]
    seed: u64,
    /// Intention draws per state when building transitions.
    #[arg(long = "n", default_value_t = 1000)]
    n: usize,
    /// Sweep ε = 1..=E.
    #[arg(long = "eps-max", default_value_t = 20)]
    eps_max: u32,
    /// Explicit ε levels (comma separated, must include 1); overrides --eps-max.
    #[arg(long = "eps", value_delimiter = ',')]
    eps: Option<Vec<u32>>,
    /// Landings per state for the distribution fits.
    #[arg(long, default_value_t = 1000)]
    fit_samples: usize,
    /// Simulated point starts per family for the start weights.
    #[arg(long, default_value_t = 100_000)]
    starts: usize,
    /// Pipeline shots per ε for the outcome table.
    #[arg(long, default_value_t = 100_000)]
    table_shots: usize,
    /// Court layout JSON (defaults to the shipped layout).
    #[arg(long)]
    court: Option<PathBuf>,
    /// Generator parameter JSON (defaults to the shipped parameters).
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Output directory (artifacts go under <out>/cache).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (RALLYPROC_THREADS overrides).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self, suites: Vec<Suite>) -> RunConfig {
        RunConfig {
            seed: self.seed,
            n: self.n,
            e_max: self.eps_max,
            epsilons: self.eps.clone(),
            fit_samples: self.fit_samples,
            starts: self.starts,
            table_shots: self.table_shots,
            court_path: self.court.clone(),
            generator_path: self.generator.clone(),
            out_dir: self.out.clone(),
            suites,
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit intention and execution distributions.
    Fit(Common),
    /// Build transition models for every ε of the sweep.
    BuildTransitions(Common),
    /// Evaluate π̂ and solve for π* at every ε.
    Solve(Common),
    /// Run experiment suites and write one CSV per suite.
    RunExperiments {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = Suite::ALL.to_vec())]
        suite: Vec<Suite>,
    },
    /// Every stage and every suite.
    Run(Common),
    /// Tune winner and unforced-error rates to a target outcome triple.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Target (win, error, in-play) in percent.
        #[arg(long, value_delimiter = ',', default_values_t = [EMPIRICAL_TRIPLE.0, EMPIRICAL_TRIPLE.1, EMPIRICAL_TRIPLE.2])]
        target: Vec<f64>,
        /// Accepted max-component distance (fraction).
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        /// Where to write the tuned parameters.
        #[arg(long)]
        write: PathBuf,
    },
    /// Export a value function, policy or experiment table.
    Export {
        #[command(flatten)]
        common: Common,
        /// `mrp:<ε>`, `mdp:<ε>`, `policy:<ε>` or a suite name.
        #[arg(long)]
        artifact: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        to: PathBuf,
    },
}

fn init_threads(config: &RunConfig) -> Result<()> {
    if let Some(n) = config.worker_threads() {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    Ok(())
}

fn pipeline(common: &Common, suites: Vec<Suite>) -> Result<Pipeline> {
    let config = common.config(suites);
    config.validate()?;
    init_threads(&config)?;
    Pipeline::new(config)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Fit(c) => {
            let mut p = pipeline(&c, Vec::new())?;
            let d = p.fit()?;
            let fallbacks = d.states.iter().flat_map(|s| &s.execution).filter(|e| e.fallback).count();
            println!("fitted {} states ({fallbacks} isotropic fallbacks)", d.states.len());
            p.write_manifest()?;
        }
        Command::BuildTransitions(c) => {
            let mut p = pipeline(&c, Vec::new())?;
            for e in p.config.epsilon_levels() {
                let path = p.transitions(e)?;
                println!("ε = {e:>2}: {}", path.display());
            }
            p.write_manifest()?;
        }
        Command::Solve(c) => {
            let mut p = pipeline(&c, Vec::new())?;
            let weights = p.start_weights()?;
            println!("eps,mrp_serve,mrp_return,mrp_combined,mdp_combined");
            for e in p.config.epsilon_levels() {
                let (mrp, mdp) = (p.values(e, "mrp")?, p.values(e, "mdp")?);
                let mrp = starting_state_value(&p.census, &mrp.values, &weights)?;
                let mdp = starting_state_value(&p.census, &mdp.values, &weights)?;
                println!("{e},{:.4},{:.4},{:.4},{:.4}", mrp.serve_value, mrp.return_value, mrp.combined, mdp.combined);
            }
            p.write_manifest()?;
        }
        Command::RunExperiments { common, suite } => {
            let mut p = pipeline(&common, suite.clone())?;
            for s in suite {
                println!("{}", p.experiment(s)?.display());
            }
            p.write_manifest()?;
        }
        Command::Run(c) => {
            let config = c.config(Suite::ALL.to_vec());
            config.validate()?;
            init_threads(&config)?;
            let out = config.out_dir.clone();
            let m = rallyproc_cli::run_pipeline(config)?;
            println!("{} artifacts, {} tables; manifest at {}", m.artifacts.len(), m.outputs.len(), out.join("manifest.json").display());
        }
        Command::Calibrate { common, target, tolerance, write } => {
            let p = pipeline(&common, Vec::new())?;
            let [w, e, i] = target[..] else { anyhow::bail!("--target needs three percentages") };
            let cfg = CalibrationConfig {
                target: OutcomeTriple::from_percent(w, e, i)?,
                tolerance,
                fit_samples: common.fit_samples,
                seed: common.seed,
                ..CalibrationConfig::default()
            };
            let report = calibrate(&p.layout, &p.params, &cfg)?;
            std::fs::write(&write, report.params.to_json())?;
            let t = report.simulated;
            println!(
                "ε = {}: expected ({:.2}, {:.2}, {:.2})%, simulated ({:.2}, {:.2}, {:.2})% after {} rounds",
                p.params.calibration.epsilon,
                100.0 * report.expected.win,
                100.0 * report.expected.error,
                100.0 * report.expected.in_play,
                100.0 * t.win,
                100.0 * t.error,
                100.0 * t.in_play,
                report.rounds
            );
            let tuned = rallyproc::shotgen::ShotGenerator::new(&p.layout, &report.params)?;
            let state = panel_state(&report.params);
            let mut rng = rallyproc::rng::stream(common.seed, rallyproc::rng::Purpose::Calibrate, 0, 2);
            let fit = rallyproc::distfit::fit_state(&tuned, &state, common.fit_samples, &mut rng)?;
            println!("eps,win,error,in_play");
            for e in 1..=common.eps_max {
                let t = pipeline_triple(&tuned, &state, &fit, e, common.table_shots, common.seed)?;
                println!("{e},{:.4},{:.4},{:.4}", t.win, t.error, t.in_play);
            }
            println!("wrote {}", write.display());
        }
        Command::Export { common, artifact, format, to } => {
            let id = ArtifactId::parse(&artifact)?;
            let suites = match &id {
                ArtifactId::Table(name) => Suite::ALL.iter().copied().filter(|s| s.name() == name).collect(),
                _ => Vec::new(),
            };
            let mut p = pipeline(&common, suites.clone())?;
            match id {
                ArtifactId::Values { which, epsilon } => {
                    let vf = p.values(epsilon, which)?;
                    export::write_values(&vf, &p.census, format, &to)?;
                }
                ArtifactId::Policy { epsilon } => {
                    let policy = p.policy(epsilon)?;
                    export::write_policy(&policy, &p.census, &p.layout, format, &to)?;
                }
                ArtifactId::Table(_) => {
                    let csv = p.experiment(suites[0])?;
                    export::write_table(&csv, format, &to)?;
                }
            }
            println!("wrote {}", to.display());
        }
    }
    Ok(())
}

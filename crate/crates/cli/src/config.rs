//! Run configuration shared by every subcommand.

use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

/// Largest execution-error level a run may sweep to.
pub const MAX_EPSILON: u32 = 64;

/// An experiment suite; each writes one CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Suite {
    #[value(name = "fig5")]
    #[serde(rename = "fig5")]
    Fig5,
    #[value(name = "fig6")]
    #[serde(rename = "fig6")]
    Fig6,
    #[value(name = "fig7")]
    #[serde(rename = "fig7")]
    Fig7,
    #[value(name = "fig8")]
    #[serde(rename = "fig8")]
    Fig8,
    #[value(name = "appendixA")]
    #[serde(rename = "appendixA")]
    AppendixA,
    #[value(name = "appendixB")]
    #[serde(rename = "appendixB")]
    AppendixB,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Fig5, Suite::Fig6, Suite::Fig7, Suite::Fig8, Suite::AppendixA, Suite::AppendixB];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Fig5 => "fig5",
            Suite::Fig6 => "fig6",
            Suite::Fig7 => "fig7",
            Suite::Fig8 => "fig8",
            Suite::AppendixA => "appendixA",
            Suite::AppendixB => "appendixB",
        }
    }

    /// Whether the suite reads transition models.
    pub fn needs_models(self) -> bool {
        self != Suite::AppendixA
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Root of all randomness in the run.
    pub seed: u64,
    /// Intention-policy draws per state when building transitions.
    pub n: usize,
    /// Sweep `ε = 1..=e_max` unless `epsilons` lists a subset.
    pub e_max: u32,
    pub epsilons: Option<Vec<u32>>,
    /// Unconditioned landings per state for the distribution fits.
    pub fit_samples: usize,
    /// Simulated point starts per family for the start weights.
    pub starts: usize,
    /// Pipeline shots per ε for the outcome table.
    pub table_shots: usize,
    pub court_path: Option<PathBuf>,
    pub generator_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub suites: Vec<Suite>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20210611,
            n: 1000,
            e_max: 20,
            epsilons: None,
            fit_samples: 1000,
            starts: 100_000,
            table_shots: 100_000,
            court_path: None,
            generator_path: None,
            out_dir: PathBuf::from("out"),
            suites: Suite::ALL.to_vec(),
            threads: None,
        }
    }
}

impl RunConfig {
    /// Reject invalid settings before any stage runs.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!("N must be at least 1");
        }
        if !(1..=MAX_EPSILON).contains(&self.e_max) {
            bail!("E must lie in 1..={MAX_EPSILON}, got {}", self.e_max);
        }
        if let Some(list) = &self.epsilons {
            if list.is_empty() || list.iter().any(|e| !(1..=MAX_EPSILON).contains(e)) {
                bail!("every ε must lie in 1..={MAX_EPSILON}, got {list:?}");
            }
            if !list.contains(&1) {
                bail!("the ε list must include 1 (perfect execution is the scenario baseline)");
            }
        }
        if self.fit_samples == 0 || self.starts == 0 || self.table_shots == 0 {
            bail!("sample counts must be positive");
        }
        for path in [&self.court_path, &self.generator_path].into_iter().flatten() {
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
        }
        if self.threads == Some(0) {
            bail!("thread count must be positive");
        }
        Ok(())
    }

    /// The ε levels of the sweep, ascending.
    pub fn epsilon_levels(&self) -> Vec<u32> {
        match &self.epsilons {
            Some(list) => {
                let mut v = list.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => (1..=self.e_max).collect(),
        }
    }

    /// Worker threads: `RALLYPROC_THREADS` overrides the configured count.
    pub fn worker_threads(&self) -> Option<usize> {
        std::env::var("RALLYPROC_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).or(self.threads)
    }
}

//! Pipeline stages (fit → build-transitions → solve → run-experiments) over
//! the content-addressed cache, and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rallyproc::calibration::{panel_state, pipeline_triple, OutcomeTriple};
use rallyproc::distfit::{Distributions, Epsilon};
use rallyproc::experiments::{epsilon_outcome_table, Experiments, ModelSource, NStepScenario, StartWeights};
use rallyproc::geometry::CourtLayout;
use rallyproc::shotgen::{GeneratorParams, ShotGenerator};
use rallyproc::solver::{Policy, Solver, ValueFunction};
use rallyproc::state::StateCensus;
use rallyproc::transitions::{build, BuildConfig, TransitionModel};

use crate::cache::{key, ArtifactRecord, Cache};
use crate::config::{RunConfig, Suite, MAX_EPSILON};

/// Empirical outcome triple of an average professional, in percent.
pub const EMPIRICAL_TRIPLE: (f64, f64, f64) = (13.0, 13.4, 73.6);
/// Shift of the play-style sweep.
pub const PLAYSTYLE_SHIFT: f64 = 0.5;

/// Contents of `manifest.json`. Deliberately free of timestamps and
/// absolute paths so identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub n: usize,
    pub epsilons: Vec<u32>,
    pub fit_samples: usize,
    pub starts: usize,
    pub table_shots: usize,
    pub census_states: usize,
    pub census_hash: String,
    pub artifacts: Vec<ArtifactRecord>,
    /// Exported tables, relative path → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Optimal policy as action ids per transient state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub epsilon: u32,
    pub actions: Vec<u8>,
}

/// Loads transition models from the cache on demand, keeping ε = 1 and the
/// most recently used model in memory.
pub struct CachedModels {
    paths: BTreeMap<u32, PathBuf>,
    perfect: Mutex<Option<Arc<TransitionModel>>>,
    last: Mutex<Option<(u32, Arc<TransitionModel>)>>,
}

impl CachedModels {
    pub fn new(paths: BTreeMap<u32, PathBuf>) -> Self {
        CachedModels { paths, perfect: Mutex::new(None), last: Mutex::new(None) }
    }

    fn load(&self, eps: u32) -> rallyproc::Result<Arc<TransitionModel>> {
        let path = self.paths.get(&eps).ok_or(rallyproc::Error::MissingModel(eps))?;
        let file = File::open(path)?;
        Ok(Arc::new(TransitionModel::read_from(BufReader::new(file))?))
    }
}

impl ModelSource for CachedModels {
    fn model(&self, eps: u32) -> rallyproc::Result<Arc<TransitionModel>> {
        if eps == 1 {
            let mut slot = self.perfect.lock().expect("model cache lock");
            if let Some(m) = slot.as_ref() {
                return Ok(Arc::clone(m));
            }
            let m = self.load(1)?;
            *slot = Some(Arc::clone(&m));
            return Ok(m);
        }
        let mut slot = self.last.lock().expect("model cache lock");
        if let Some((e, m)) = slot.as_ref() {
            if *e == eps {
                return Ok(Arc::clone(m));
            }
        }
        let m = self.load(eps)?;
        *slot = Some((eps, Arc::clone(&m)));
        Ok(m)
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub layout: CourtLayout,
    pub params: GeneratorParams,
    pub census: StateCensus,
    cache: Cache,
    records: Vec<ArtifactRecord>,
    outputs: BTreeMap<String, String>,
    dists: Option<Arc<Distributions>>,
    fit_key: Option<String>,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let layout = match &config.court_path {
            Some(p) => CourtLayout::load(p).with_context(|| format!("loading court layout {}", p.display()))?,
            None => CourtLayout::default_v1(),
        };
        let params = match &config.generator_path {
            Some(p) => GeneratorParams::load(p).with_context(|| format!("loading generator {}", p.display()))?,
            None => GeneratorParams::default_v1(),
        };
        let census = layout.enumerate_states(&layout.pruning).context("enumerating states")?;
        let cache = Cache::new(&config.out_dir)?;
        Ok(Pipeline { config, layout, params, census, cache, records: Vec::new(), outputs: BTreeMap::new(), dists: None, fit_key: None })
    }

    pub fn generator(&self) -> Result<ShotGenerator<'_>> {
        Ok(ShotGenerator::new(&self.layout, &self.params)?)
    }

    fn record(&mut self, rec: ArtifactRecord, hit: bool) {
        log::info!("{} {} ({})", if hit { "cached" } else { "built" }, rec.stage, rec.dir);
        if !self.records.iter().any(|r| r.dir == rec.dir) {
            self.records.push(rec);
        }
    }

    fn base_key(&self, stage: &str, extra: &[&[u8]]) -> String {
        let params = self.params.to_json();
        let mut parts: Vec<&[u8]> = vec![stage.as_bytes(), self.layout.source_json().as_bytes(), params.as_bytes()];
        parts.extend_from_slice(extra);
        key(&parts)
    }

    fn fit_key(&mut self) -> String {
        if let Some(k) = &self.fit_key {
            return k.clone();
        }
        let k = self.base_key("fit", &[&self.config.fit_samples.to_le_bytes(), &self.config.seed.to_le_bytes()]);
        self.fit_key = Some(k.clone());
        k
    }

    /// Stage `fit`: intention and execution distributions of every state.
    pub fn fit(&mut self) -> Result<Arc<Distributions>> {
        if let Some(d) = &self.dists {
            return Ok(Arc::clone(d));
        }
        let k = self.fit_key();
        let (rec, hit) = {
            let generator = self.generator()?;
            let (census, n, seed) = (&self.census, self.config.fit_samples, self.config.seed);
            self.cache.stage("fit", &k, |dir| {
                let d = Distributions::fit(&generator, census, n, seed)?;
                d.write_to(BufWriter::new(File::create(dir.join("distributions.bin"))?))?;
                Ok(())
            })?
        };
        let path = self.cache.dir("fit", &k).join("distributions.bin");
        self.record(rec, hit);
        let d = Distributions::read_from(BufReader::new(File::open(&path)?)).context("reading distributions")?;
        d.check_census(&self.census)?;
        let d = Arc::new(d);
        self.dists = Some(Arc::clone(&d));
        Ok(d)
    }

    /// Stage `starts`: frequency of each serve and return start state.
    pub fn start_weights(&mut self) -> Result<StartWeights> {
        let k = self.base_key("starts", &[&self.config.starts.to_le_bytes(), &self.config.seed.to_le_bytes()]);
        let (rec, hit) = {
            let generator = self.generator()?;
            let (census, n, seed) = (&self.census, self.config.starts, self.config.seed);
            self.cache.stage("starts", &k, |dir| {
                let w = StartWeights::estimate(&generator, census, n, seed)?;
                fs::write(dir.join("start_weights.json"), serde_json::to_string(&w)?)?;
                Ok(())
            })?
        };
        let path = self.cache.dir("starts", &k).join("start_weights.json");
        self.record(rec, hit);
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn build_config(&self) -> BuildConfig {
        BuildConfig { n: self.config.n, seed: self.config.seed, ..BuildConfig::default() }
    }

    fn transitions_key(&mut self, eps: u32) -> String {
        let fit = self.fit_key();
        let cfg = serde_json::to_string(&self.build_config()).expect("config serializes");
        key(&[b"transitions", fit.as_bytes(), cfg.as_bytes(), &eps.to_le_bytes()])
    }

    /// Stage `transitions`: `P_ε` for one ε; returns the model file.
    pub fn transitions(&mut self, eps: u32) -> Result<PathBuf> {
        let dists = self.fit()?;
        let k = self.transitions_key(eps);
        let cfg = self.build_config();
        let (rec, hit) = {
            let generator = self.generator()?;
            let census = &self.census;
            self.cache.stage("transitions", &k, |dir| {
                let eps = Epsilon::new(eps, MAX_EPSILON)?;
                let model = build(&generator, census, &dists, eps, &cfg)?;
                model.write_to(BufWriter::new(File::create(dir.join("model.bin"))?))?;
                Ok(())
            })
            .with_context(|| format!("ε = {eps}"))?
        };
        self.record(rec, hit);
        Ok(self.cache.dir("transitions", &k).join("model.bin"))
    }

    /// Build every ε of the sweep.
    pub fn models(&mut self) -> Result<CachedModels> {
        let mut paths = BTreeMap::new();
        for e in self.config.epsilon_levels() {
            paths.insert(e, self.transitions(e)?);
        }
        Ok(CachedModels::new(paths))
    }

    pub fn load_model(&mut self, eps: u32) -> Result<TransitionModel> {
        let path = self.transitions(eps)?;
        let model = TransitionModel::read_from(BufReader::new(File::open(&path)?))?;
        model.check_census(&self.census)?;
        Ok(model)
    }

    /// Stage `solve`: `V^π̂`, `V*` and `π*` for one ε.
    pub fn solve(&mut self, eps: u32) -> Result<PathBuf> {
        let model_path = self.transitions(eps)?;
        let dists = self.fit()?;
        let k = key(&[b"solve", self.transitions_key(eps).as_bytes()]);
        let (rec, hit) = self.cache.stage("solve", &k, |dir| {
            let model = TransitionModel::read_from(BufReader::new(File::open(&model_path)?))?;
            let intentions: Vec<_> = dists.states.iter().map(|f| f.intention.clone()).collect();
            let solver = Solver::new(&model);
            let mrp = solver.evaluate_mrp(&intentions)?;
            let (mdp, policy) = solver.solve_mdp()?;
            let actions = policy.actions(&model).expect("deterministic").iter().map(|a| a.0).collect();
            fs::write(dir.join("mrp.json"), serde_json::to_string(&mrp)?)?;
            fs::write(dir.join("mdp.json"), serde_json::to_string(&mdp)?)?;
            fs::write(dir.join("policy.json"), serde_json::to_string(&PolicyArtifact { epsilon: eps, actions })?)?;
            Ok(())
        })?;
        self.record(rec, hit);
        Ok(self.cache.dir("solve", &k))
    }

    pub fn values(&mut self, eps: u32, which: &str) -> Result<ValueFunction> {
        let dir = self.solve(eps)?;
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(format!("{which}.json")))?)?)
    }

    pub fn policy(&mut self, eps: u32) -> Result<PolicyArtifact> {
        let dir = self.solve(eps)?;
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("policy.json"))?)?)
    }

    /// Stage `experiments`: one suite's table; also copied to `<out>/<suite>.csv`.
    pub fn experiment(&mut self, suite: Suite) -> Result<PathBuf> {
        let eps = self.config.epsilon_levels();
        let dists = self.fit()?;
        let weights = self.start_weights()?;
        let mut parts: Vec<String> = vec![suite.name().into(), self.fit_key(), serde_json::to_string(&weights)?];
        let models = if suite.needs_models() {
            for &e in &eps {
                parts.push(self.transitions_key(e));
            }
            Some(self.models()?)
        } else {
            parts.push(format!("{}:{}", self.config.table_shots, self.config.seed));
            None
        };
        parts.push(format!("{eps:?}"));
        let k = key(&parts.iter().map(|p| p.as_bytes()).collect::<Vec<_>>());
        let file = format!("{}.csv", suite.name());
        let (rec, hit) = {
            let generator = self.generator()?;
            let (layout, census, config) = (&self.layout, &self.census, &self.config);
            self.cache.stage("experiments", &k, |dir| {
                let ex = Experiments { layout, census, dists: &dists, weights: &weights, epsilons: eps.clone() };
                let table = match (suite, &models) {
                    (Suite::Fig5, Some(m)) => ex.error_scenario_sweep(m)?,
                    (Suite::Fig6, Some(m)) => ex.playstyle_sweep(m, PLAYSTYLE_SHIFT)?,
                    (Suite::Fig7, Some(m)) => ex.optimal_action_table(m)?,
                    (Suite::Fig8, Some(m)) => ex.nstep_scenario_suite(m, &NStepScenario::standard())?,
                    (Suite::AppendixB, Some(m)) => ex.absorbing_decomposition(m)?,
                    (Suite::AppendixA, _) => {
                        let state = panel_state(generator.params());
                        let s = census.index_of(&state).context("calibration panel state was pruned")?;
                        let rows = outcome_rows(&generator, &state, &dists, s, &eps, config)?;
                        let (w, e, p) = EMPIRICAL_TRIPLE;
                        epsilon_outcome_table(&rows, &OutcomeTriple::from_percent(w, e, p)?)
                    }
                    _ => unreachable!("model suites always receive models"),
                };
                fs::write(dir.join(&file), table.to_csv())?;
                Ok(())
            })
            .with_context(|| format!("suite {}", suite.name()))?
        };
        self.record(rec, hit);
        let src = self.cache.dir("experiments", &k).join(&file);
        let dst = self.config.out_dir.join(&file);
        fs::copy(&src, &dst).with_context(|| format!("writing {}", dst.display()))?;
        self.outputs.insert(file, crate::cache::file_sha256(&dst)?);
        Ok(dst)
    }

    /// Write `manifest.json` for the stages touched so far.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.config.seed,
            n: self.config.n,
            epsilons: self.config.epsilon_levels(),
            fit_samples: self.config.fit_samples,
            starts: self.config.starts,
            table_shots: self.config.table_shots,
            census_states: self.census.n_transient(),
            census_hash: hex::encode(self.census.hash()),
            artifacts: self.records.clone(),
            outputs: self.outputs.clone(),
        };
        let path = self.config.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

fn outcome_rows(
    generator: &ShotGenerator<'_>,
    state: &rallyproc::state::State,
    dists: &Distributions,
    s: usize,
    eps: &[u32],
    config: &RunConfig,
) -> Result<Vec<(u32, OutcomeTriple)>> {
    let fit = &dists.states[s];
    // The table needs no transition models, so it always covers every level
    // up to the sweep's maximum; average-ε selection depends on it.
    let e_max = eps.iter().copied().max().unwrap_or(1);
    (1..=e_max).map(|e| Ok((e, pipeline_triple(generator, state, fit, e, config.table_shots, config.seed)?))).collect()
}

/// Run every stage and suite of `config`, then write the manifest.
pub fn run_pipeline(config: RunConfig) -> Result<Manifest> {
    let mut p = Pipeline::new(config)?;
    p.fit()?;
    p.start_weights()?;
    for e in p.config.epsilon_levels() {
        p.solve(e)?;
    }
    for suite in p.config.suites.clone() {
        p.experiment(suite)?;
    }
    p.write_manifest()
}

/// Convenience for tests and tools: the policy of `artifact` as a solver policy.
pub fn as_policy(artifact: &PolicyArtifact, model: &TransitionModel) -> Result<Policy> {
    let rows = artifact
        .actions
        .iter()
        .enumerate()
        .map(|(s, &a)| {
            model
                .rows(s)
                .iter()
                .position(|r| r.action.0 == a)
                .with_context(|| format!("action {a} not available in state {s}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Policy::Deterministic(rows))
}

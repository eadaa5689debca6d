//! Analyses over the transition models of an ε sweep: starting-state values,
//! error-scenario isolation, play styles, optimal-action distributions,
//! n-optimal-shot scenarios, average-ε selection and the ad/deuce outcome
//! decomposition.
//!
//! Every analysis returns a [`Table`] whose columns are `scenario`,
//! `measure` and one `eps_<k>` column per execution-error level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::OutcomeTriple;
use crate::distfit::{Distributions, IntentionDistribution};
use crate::error::{Error, Result};
use crate::geometry::{CourtLayout, Side};
use crate::rng::{stream, Purpose};
use crate::shotgen::ShotGenerator;
use crate::solver::{Policy, Solver, ValueFunction};
use crate::state::{ShotType, State, StateCensus, StateClass};
use crate::transitions::{patch_epsilon, ScenarioClass, TransitionModel};

/// Point starts simulated per family when estimating start weights.
pub const DEFAULT_STARTS: usize = 100_000;

/// Empirical frequency of the states a point starts in, per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartWeights {
    /// `(state index, frequency)` over serve states, summing to 1.
    pub serve: Vec<(usize, f64)>,
    /// `(state index, frequency)` over return states, summing to 1.
    pub ret: Vec<(usize, f64)>,
}

impl StartWeights {
    /// Estimate from `n` simulated starts per family. Starts in pruned
    /// states are attributed to the nearest surviving state.
    pub fn estimate(generator: &ShotGenerator<'_>, census: &StateCensus, n: usize, seed: u64) -> Result<Self> {
        let family = |serving: bool| -> Result<Vec<(usize, f64)>> {
            const CHUNK: usize = 4096;
            let counts = (0..n.div_ceil(CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream(seed, Purpose::Starts, u32::from(serving), c as u64);
                    let mut hits: BTreeMap<usize, u64> = BTreeMap::new();
                    for _ in 0..CHUNK.min(n - c * CHUNK) {
                        let State::Transient { a, b, shot } = generator.sample_start(serving, &mut rng) else {
                            unreachable!("starts are transient")
                        };
                        let s = census
                            .snap(a, b, shot)
                            .ok_or_else(|| Error::Census(format!("no surviving {shot} state near ({}, {})", a.0, b.0)))?;
                        *hits.entry(s).or_default() += 1;
                    }
                    Ok(hits)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total: BTreeMap<usize, u64> = BTreeMap::new();
            for h in counts {
                for (s, c) in h {
                    *total.entry(s).or_default() += c;
                }
            }
            Ok(total.into_iter().map(|(s, c)| (s, c as f64 / n as f64)).collect())
        };
        Ok(StartWeights { serve: family(true)?, ret: family(false)? })
    }
}

/// `V(starting-state)` for one value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartingStateValue {
    pub serve_value: f64,
    pub return_value: f64,
    /// Mean of the two: A is equally likely to serve or return.
    pub combined: f64,
}

/// Weighted serve and return values of `values` (indexed by state).
pub fn starting_state_value(census: &StateCensus, values: &[f64], weights: &StartWeights) -> Result<StartingStateValue> {
    let family = |w: &[(usize, f64)], shot: ShotType| -> Result<f64> {
        if w.is_empty() {
            if let Some(s) = census.indices_of_shot(shot).find(|&s| values[s] != 0.0) {
                return Err(Error::MissingWeight(s));
            }
            return Ok(0.0);
        }
        let total: f64 = w.iter().map(|x| x.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Artifact(format!("{shot} start weights sum to {total}")));
        }
        w.iter()
            .map(|&(s, p)| {
                if census.shot(s) != Some(shot) {
                    return Err(Error::MissingWeight(s));
                }
                Ok(p * values[s])
            })
            .sum()
    };
    let serve_value = family(&weights.serve, ShotType::Serve)?;
    let return_value = family(&weights.ret, ShotType::Return)?;
    Ok(StartingStateValue { serve_value, return_value, combined: 0.5 * (serve_value + return_value) })
}

/// One line of a [`Table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub measure: String,
    pub values: Vec<f64>,
}

/// Scenario × measure × ε table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub epsilons: Vec<u32>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn new(epsilons: &[u32]) -> Self {
        Table { epsilons: epsilons.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, scenario: &str, measure: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.epsilons.len());
        self.rows.push(TableRow { scenario: scenario.to_string(), measure: measure.to_string(), values });
    }

    pub fn get(&self, scenario: &str, measure: &str) -> Option<&[f64]> {
        self.rows.iter().find(|r| r.scenario == scenario && r.measure == measure).map(|r| r.values.as_slice())
    }

    /// Value at one ε.
    pub fn at(&self, scenario: &str, measure: &str, eps: u32) -> Option<f64> {
        let i = self.epsilons.iter().position(|&e| e == eps)?;
        self.get(scenario, measure).map(|v| v[i])
    }

    /// CSV text with header `scenario,measure,eps_1,…`. Floats use the
    /// shortest representation that round-trips, so output is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,measure");
        for e in &self.epsilons {
            let _ = write!(out, ",eps_{e}");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.scenario);
            out.push(',');
            out.push_str(&r.measure);
            for v in &r.values {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

/// Supplies the transition model of each ε.
pub trait ModelSource: Sync {
    fn model(&self, eps: u32) -> Result<Arc<TransitionModel>>;
}

impl ModelSource for BTreeMap<u32, Arc<TransitionModel>> {
    fn model(&self, eps: u32) -> Result<Arc<TransitionModel>> {
        self.get(&eps).cloned().ok_or(Error::MissingModel(eps))
    }
}

/// Play-style perturbation of the intention distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaystyleMode {
    Average,
    Conservative,
    Aggressive,
}

impl PlaystyleMode {
    pub const ALL: [PlaystyleMode; 3] = [PlaystyleMode::Average, PlaystyleMode::Conservative, PlaystyleMode::Aggressive];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaystyleMode::Average => "average",
            PlaystyleMode::Conservative => "conservative",
            PlaystyleMode::Aggressive => "aggressive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaystyleTransform {
    pub mode: PlaystyleMode,
    pub shift: f64,
}

impl PlaystyleTransform {
    pub fn new(mode: PlaystyleMode) -> Self {
        PlaystyleTransform { mode, shift: 0.5 }
    }
}

/// Scale the mass of conservative (or aggressive) intentions by `1 + shift`
/// and renormalize.
pub fn playstyle_transform(layout: &CourtLayout, f: &IntentionDistribution, t: PlaystyleTransform) -> IntentionDistribution {
    let boost = |conservative: bool| match t.mode {
        PlaystyleMode::Average => false,
        PlaystyleMode::Conservative => conservative,
        PlaystyleMode::Aggressive => !conservative,
    };
    let mut probs: Vec<f64> = f
        .actions
        .iter()
        .zip(&f.probs)
        .map(|(&a, &p)| if boost(layout.action(a).conservative) { p * (1.0 + t.shift) } else { p })
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    IntentionDistribution { actions: f.actions.clone(), probs }
}

/// Which states an optimal-action histogram counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramFilter {
    All,
    /// Both players in their two deepest rows.
    BehindBaseline,
}

impl HistogramFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            HistogramFilter::All => "all",
            HistogramFilter::BehindBaseline => "behind-baseline",
        }
    }

    fn keeps(self, layout: &CourtLayout, state: &State) -> bool {
        match (self, state) {
            (HistogramFilter::All, _) => true,
            (HistogramFilter::BehindBaseline, State::Transient { a, b, .. }) => {
                let deep = layout.spec.rows - 2;
                layout.cell(*a).row >= deep && layout.cell(*b).row >= deep
            }
            _ => false,
        }
    }
}

/// Frequency of each chosen action over the filtered states.
pub fn optimal_action_histogram(
    layout: &CourtLayout,
    census: &StateCensus,
    model: &TransitionModel,
    policy: &Policy,
    filter: HistogramFilter,
) -> Result<BTreeMap<String, f64>> {
    let actions = policy.actions(model).ok_or_else(|| Error::Artifact("histogram needs a deterministic policy".into()))?;
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    let mut n = 0.0;
    for (s, a) in actions.iter().enumerate() {
        if filter.keeps(layout, &census.state(s)) {
            *counts.entry(layout.action(*a).name.clone()).or_default() += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        counts.values_mut().for_each(|c| *c /= n);
    }
    Ok(counts)
}

/// Total mass of conservative actions in a histogram.
pub fn conservative_mass(layout: &CourtLayout, histogram: &BTreeMap<String, f64>) -> f64 {
    histogram
        .iter()
        .filter(|(name, _)| layout.action_by_name(name).is_some_and(|a| a.conservative))
        .map(|(_, p)| p)
        .sum()
}

/// Largest ε whose error rate does not exceed the empirical one; ties go to
/// the smaller ε, and ε = 1 is returned when every row exceeds it.
pub fn select_average_epsilon(table: &[(u32, OutcomeTriple)], empirical: &OutcomeTriple) -> u32 {
    for w in table.windows(2) {
        if w[1].1.error < w[0].1.error {
            log::warn!("error rate drops from ε={} to ε={} (sampling noise)", w[0].0, w[1].0);
        }
    }
    let Some(&(_, best)) = table.iter().filter(|r| r.1.error <= empirical.error).max_by_key(|r| r.0) else {
        return 1;
    };
    // Equal error rates (a plateau) resolve to the smallest such ε.
    table.iter().filter(|r| r.1.error == best.error).map(|r| r.0).min().unwrap_or(1)
}

/// A state predicate selecting where an optimal action is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageSet {
    None,
    Serve,
    Return,
    ServeOrReturn,
    Rally,
    All,
}

impl StageSet {
    fn contains(self, shot: Option<ShotType>) -> bool {
        match (self, shot) {
            (StageSet::All, Some(_)) => true,
            (StageSet::Serve, Some(ShotType::Serve)) => true,
            (StageSet::Return, Some(ShotType::Return)) => true,
            (StageSet::ServeOrReturn, Some(ShotType::Serve | ShotType::Return)) => true,
            (StageSet::Rally, Some(ShotType::Rally)) => true,
            _ => false,
        }
    }
}

/// A named n-optimal-shot scenario: `stages[k]` is the state set where
/// A plays optimally at decision epoch `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NStepScenario {
    pub name: String,
    pub stages: Vec<StageSet>,
}

impl NStepScenario {
    fn new(name: &str, stages: &[StageSet]) -> Self {
        NStepScenario { name: name.to_string(), stages: stages.to_vec() }
    }

    /// The standard suite. Serving and returning count as one shot since A
    /// does exactly one of them per point, and A's second shot is always a
    /// rally shot.
    pub fn standard() -> Vec<NStepScenario> {
        use StageSet::*;
        let mut v = vec![
            NStepScenario::new("zero-optimal", &[]),
            NStepScenario::new("return-only", &[Return]),
            NStepScenario::new("serve-only", &[Serve]),
            NStepScenario::new("first-rally-only", &[None, Rally]),
            NStepScenario::new("serve-and-return", &[ServeOrReturn]),
        ];
        for (n, name) in [(2, "two-optimal"), (3, "three-optimal"), (4, "four-optimal"), (5, "five-optimal")] {
            v.push(NStepScenario::new(name, &vec![All; n]));
        }
        v
    }
}

/// Shared inputs of every analysis.
pub struct Experiments<'a> {
    pub layout: &'a CourtLayout,
    pub census: &'a StateCensus,
    pub dists: &'a Distributions,
    pub weights: &'a StartWeights,
    pub epsilons: Vec<u32>,
}

/// Labels of the three starting-state aggregates, in table order.
pub const VALUE_MEASURES: [&str; 3] = ["serve", "return", "combined"];

fn push_values(table: &mut Table, scenario: &str, values: &[StartingStateValue]) {
    table.push(scenario, "serve", values.iter().map(|v| v.serve_value).collect());
    table.push(scenario, "return", values.iter().map(|v| v.return_value).collect());
    table.push(scenario, "combined", values.iter().map(|v| v.combined).collect());
}

impl<'a> Experiments<'a> {
    pub fn intentions(&self) -> Vec<IntentionDistribution> {
        self.dists.states.iter().map(|f| f.intention.clone()).collect()
    }

    pub fn start_value(&self, v: &ValueFunction) -> Result<StartingStateValue> {
        starting_state_value(self.census, &v.values, self.weights)
    }

    /// Value of `π̂` under each error scenario: ε in the scenario's class,
    /// perfect execution elsewhere.
    pub fn error_scenario_sweep(&self, models: &dyn ModelSource) -> Result<Table> {
        let intentions = self.intentions();
        let perfect = models.model(1)?;
        let mut table = Table::new(&self.epsilons);
        for class in ScenarioClass::ALL {
            let mut values = Vec::with_capacity(self.epsilons.len());
            for &e in &self.epsilons {
                let mut set = BTreeMap::from([(1, Arc::clone(&perfect))]);
                set.insert(e, models.model(e)?);
                let patched = patch_epsilon(self.census, &BTreeMap::from([(class, e)]), &set)?;
                let v = Solver::new(&patched).evaluate_mrp(&intentions)?;
                values.push(self.start_value(&v)?);
            }
            push_values(&mut table, &class.to_string(), &values);
        }
        Ok(table)
    }

    /// Value of uniformly more conservative or aggressive play per ε.
    pub fn playstyle_sweep(&self, models: &dyn ModelSource, shift: f64) -> Result<Table> {
        let base = self.intentions();
        let styled: Vec<(PlaystyleMode, Vec<IntentionDistribution>)> = PlaystyleMode::ALL
            .iter()
            .map(|&mode| {
                let t = PlaystyleTransform { mode, shift };
                (mode, base.iter().map(|f| playstyle_transform(self.layout, f, t)).collect())
            })
            .collect();
        let mut per_mode: Vec<Vec<StartingStateValue>> = vec![Vec::new(); styled.len()];
        for &e in &self.epsilons {
            let model = models.model(e)?;
            let solver = Solver::new(&model);
            for (i, (_, f)) in styled.iter().enumerate() {
                per_mode[i].push(self.start_value(&solver.evaluate_mrp(f)?)?);
            }
        }
        let mut table = Table::new(&self.epsilons);
        for ((mode, _), values) in styled.iter().zip(&per_mode) {
            push_values(&mut table, mode.as_str(), values);
        }
        Ok(table)
    }

    /// Distribution of optimal actions per ε, over all states and over
    /// baseline rallies; measure `conservative` is the total 'M' mass.
    pub fn optimal_action_table(&self, models: &dyn ModelSource) -> Result<Table> {
        let filters = [HistogramFilter::All, HistogramFilter::BehindBaseline];
        let mut hists: Vec<Vec<BTreeMap<String, f64>>> = vec![Vec::new(); filters.len()];
        for &e in &self.epsilons {
            let model = models.model(e)?;
            let (_, policy) = Solver::new(&model).solve_mdp()?;
            for (i, &f) in filters.iter().enumerate() {
                hists[i].push(optimal_action_histogram(self.layout, self.census, &model, &policy, f)?);
            }
        }
        let mut table = Table::new(&self.epsilons);
        for (f, per_eps) in filters.iter().zip(&hists) {
            for action in self.layout.actions() {
                table.push(f.as_str(), &action.name, per_eps.iter().map(|h| h.get(&action.name).copied().unwrap_or(0.0)).collect());
            }
            table.push(f.as_str(), "conservative", per_eps.iter().map(|h| conservative_mass(self.layout, h)).collect());
        }
        Ok(table)
    }

    /// Starting-state values of n-optimal-shot policies, bracketed by the
    /// `mrp` (no optimal shots) and `mdp` (all optimal) envelopes.
    pub fn nstep_scenario_suite(&self, models: &dyn ModelSource, scenarios: &[NStepScenario]) -> Result<Table> {
        let intentions = self.intentions();
        let mut rows: Vec<Vec<StartingStateValue>> = vec![Vec::new(); scenarios.len() + 2];
        for &e in &self.epsilons {
            let model = models.model(e)?;
            let solver = Solver::new(&model);
            let base = solver.evaluate_mrp(&intentions)?;
            rows[0].push(self.start_value(&base)?);
            let (opt, _) = solver.solve_mdp()?;
            rows[1].push(self.start_value(&opt)?);
            for (i, sc) in scenarios.iter().enumerate() {
                let preds: Vec<Box<dyn Fn(usize) -> bool>> = sc
                    .stages
                    .iter()
                    .map(|&set| {
                        let m = Arc::clone(&model);
                        Box::new(move |s: usize| set.contains(m.shot(s))) as Box<dyn Fn(usize) -> bool>
                    })
                    .collect();
                let stages: Vec<&dyn Fn(usize) -> bool> = preds.iter().map(|p| p.as_ref()).collect();
                let (_, v) = solver.nstep(&intentions, &base, &stages)?;
                rows[i + 2].push(starting_state_value(self.census, &v, self.weights)?);
            }
        }
        let mut table = Table::new(&self.epsilons);
        push_values(&mut table, "mrp", &rows[0]);
        push_values(&mut table, "mdp", &rows[1]);
        for (sc, values) in scenarios.iter().zip(&rows[2..]) {
            push_values(&mut table, &sc.name, values);
        }
        Ok(table)
    }

    /// Mean `π̂`-weighted outcome-tag mass of A's shot over the ad and deuce
    /// rally states, per ε.
    pub fn absorbing_decomposition(&self, models: &dyn ModelSource) -> Result<Table> {
        let classes = [Side::Ad, Side::Deuce].map(|side| StateClass { shot: ShotType::Rally, side });
        const TAGS: [&str; 5] = ["a-winner", "a-error", "b-winner", "b-error", "continue"];
        let mut sums = vec![vec![vec![0.0; self.epsilons.len()]; TAGS.len()]; classes.len()];
        for (j, &e) in self.epsilons.iter().enumerate() {
            let model = models.model(e)?;
            let fault = *model.fault_rule();
            for (c, class) in classes.iter().enumerate() {
                let states: Vec<usize> = self.census.transient_indices().filter(|&s| self.census.class(s) == Some(*class)).collect();
                for &s in &states {
                    let f = &self.dists.states[s].intention;
                    for (k, row) in model.rows(s).iter().enumerate() {
                        let m = row.tag_mass(&fault);
                        let w = f.probs[k] / states.len() as f64;
                        for (t, x) in [m.a_winner, m.a_error, m.b_winner, m.b_error, m.cont].into_iter().enumerate() {
                            sums[c][t][j] += w * x;
                        }
                    }
                }
            }
        }
        let mut table = Table::new(&self.epsilons);
        for (class, per_tag) in classes.iter().zip(sums) {
            for (tag, values) in TAGS.iter().zip(per_tag) {
                table.push(&class.name(), tag, values);
            }
        }
        Ok(table)
    }
}

/// Pipeline outcome table with the selected average ε as a final row.
pub fn epsilon_outcome_table(rows: &[(u32, OutcomeTriple)], empirical: &OutcomeTriple) -> Table {
    let eps: Vec<u32> = rows.iter().map(|r| r.0).collect();
    let mut table = Table::new(&eps);
    table.push("pipeline", "win", rows.iter().map(|r| r.1.win).collect());
    table.push("pipeline", "error", rows.iter().map(|r| r.1.error).collect());
    table.push("pipeline", "in-play", rows.iter().map(|r| r.1.in_play).collect());
    let chosen = select_average_epsilon(rows, empirical);
    table.push("selected", "is-average", eps.iter().map(|&e| if e == chosen { 1.0 } else { 0.0 }).collect());
    table
}

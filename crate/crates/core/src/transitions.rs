//! Monte-Carlo transition tables `P_ε(s′ | s, a)`.
//!
//! For every transient state, intentions are drawn from `f_s`, landings from
//! `N(μ_{s,a}, εΣ_{s,a})`, Player A's shot is generated at that landing and
//! Player B's unconditioned reply stitched on. Rows keep exact integer counts
//! per outcome tag; probabilities are derived on demand. A serve fault is not
//! sampled onward: its mass is split analytically between repeating the serve
//! and losing the point.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{refit_intention, Distributions, Epsilon, IntentionDistribution};
use crate::error::{Error, Result};
use crate::geometry::{ActionId, Side};
use crate::rng::{stream, Purpose};
use crate::shotgen::{Outcome, ShotGenerator};
use crate::state::{ShotType, State, StateCensus, StateClass};

/// How a transition's probability mass is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeTag {
    AWinner,
    AError,
    BWinner,
    BError,
    Continue,
}

impl OutcomeTag {
    /// Absorbing state reached by the tag, if any: `true` for W, `false` for L.
    pub fn wins(self) -> Option<bool> {
        match self {
            OutcomeTag::AWinner | OutcomeTag::BError => Some(true),
            OutcomeTag::AError | OutcomeTag::BWinner => Some(false),
            OutcomeTag::Continue => None,
        }
    }
}

/// Bayes' rule: `P(first | fault) = P(fault | first) P(first) / P(fault)`.
pub fn bayes(p_fault_given_first: f64, p_first: f64, p_fault: f64) -> f64 {
    p_fault_given_first * p_first / p_fault
}

/// What happens to a faulted serve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultDisposition {
    RepeatServe,
    Lose,
}

/// Split of a fault's probability mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSplit {
    pub repeat: f64,
    pub lose: f64,
}

/// Serve-fault handling: a fault was on a first serve (repeat) with
/// probability `p_first`, otherwise on a second serve (point lost).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultRule {
    pub p_first: f64,
}

impl Default for FaultRule {
    fn default() -> Self {
        // Tour-level rates: 37.9% of first serves fault, 72.5% of serves are
        // first serves, 30.2% of all serves fault.
        FaultRule { p_first: bayes(0.379, 0.725, 0.302) }
    }
}

impl FaultRule {
    /// Analytic split of fault mass `mass` observed in a state with shot type `shot`.
    pub fn split(&self, shot: Option<ShotType>, mass: f64) -> Result<FaultSplit> {
        if shot != Some(ShotType::Serve) {
            return Err(Error::NotServeState);
        }
        Ok(FaultSplit { repeat: self.p_first * mass, lose: (1.0 - self.p_first) * mass })
    }

    /// Sampled disposition of a single fault.
    pub fn dispose<R: Rng + ?Sized>(&self, shot: Option<ShotType>, rng: &mut R) -> Result<FaultDisposition> {
        if shot != Some(ShotType::Serve) {
            return Err(Error::NotServeState);
        }
        Ok(if rng.random::<f64>() < self.p_first { FaultDisposition::RepeatServe } else { FaultDisposition::Lose })
    }

    /// Chance that the rule models a third serve after a fault: both the
    /// first and the repeated serve would have to be classed as "second".
    pub fn third_serve_probability(&self) -> f64 {
        (1.0 - self.p_first).powi(2)
    }
}

/// Counts for one `(s, a)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub action: ActionId,
    pub n: u32,
    pub a_win: u32,
    /// A's errors on non-serve shots.
    pub a_err: u32,
    /// A's serve faults.
    pub fault: u32,
    pub b_win: u32,
    pub b_err: u32,
    /// Transient successors `(state index, count)`, ascending by index.
    pub next: Vec<(u32, u32)>,
}

/// Per-tag probability mass of a row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TagMass {
    pub a_winner: f64,
    pub a_error: f64,
    pub b_winner: f64,
    pub b_error: f64,
    pub cont: f64,
}

impl TagMass {
    pub fn total(&self) -> f64 {
        self.a_winner + self.a_error + self.b_winner + self.b_error + self.cont
    }
}

impl Row {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self) -> bool {
        let next: u64 = self.next.iter().map(|&(_, c)| u64::from(c)).sum();
        let total = u64::from(self.a_win)
            + u64::from(self.a_err)
            + u64::from(self.fault)
            + u64::from(self.b_win)
            + u64::from(self.b_err)
            + next;
        total == u64::from(self.n) && self.next.windows(2).all(|w| w[0].0 < w[1].0)
    }

    pub fn tag_mass(&self, fault: &FaultRule) -> TagMass {
        if self.n == 0 {
            return TagMass::default();
        }
        let n = f64::from(self.n);
        let f = f64::from(self.fault) / n;
        TagMass {
            a_winner: f64::from(self.a_win) / n,
            a_error: f64::from(self.a_err) / n + (1.0 - fault.p_first) * f,
            b_winner: f64::from(self.b_win) / n,
            b_error: f64::from(self.b_err) / n,
            cont: self.next.iter().map(|&(_, c)| f64::from(c)).sum::<f64>() / n + fault.p_first * f,
        }
    }
}

/// One state's rows, aligned with its action set, plus the execution-error
/// level they were simulated at.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlock {
    pub epsilon: u32,
    pub rows: Vec<Row>,
}

/// Dense probability view of a row: absorbing masses, self-loop and the
/// remaining transient successors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowProbs {
    pub won: f64,
    pub lost: f64,
    pub self_loop: f64,
    pub next: Vec<(usize, f64)>,
}

/// Sparse tables for all transient states. Transient states are `0..n`;
/// `W = n`, `L = n + 1`.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    epsilon: u32,
    fault: FaultRule,
    census_hash: [u8; 32],
    shots: Vec<Option<ShotType>>,
    blocks: Vec<Arc<StateBlock>>,
}

impl PartialEq for TransitionModel {
    fn eq(&self, other: &Self) -> bool {
        self.epsilon == other.epsilon
            && self.fault == other.fault
            && self.census_hash == other.census_hash
            && self.shots == other.shots
            && self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| Arc::ptr_eq(a, b) || a == b)
    }
}

impl TransitionModel {
    /// Assemble a model from explicit blocks. `shots[s]` marks serve states
    /// (which may carry fault counts).
    pub fn from_blocks(
        epsilon: u32,
        fault: FaultRule,
        census_hash: [u8; 32],
        shots: Vec<Option<ShotType>>,
        blocks: Vec<StateBlock>,
    ) -> Result<Self> {
        let model =
            TransitionModel { epsilon, fault, census_hash, shots, blocks: blocks.into_iter().map(Arc::new).collect() };
        model.validate()?;
        Ok(model)
    }

    pub fn epsilon(&self) -> u32 {
        self.epsilon
    }

    pub fn fault_rule(&self) -> &FaultRule {
        &self.fault
    }

    pub fn census_hash(&self) -> [u8; 32] {
        self.census_hash
    }

    pub fn n_transient(&self) -> usize {
        self.blocks.len()
    }

    pub fn won(&self) -> usize {
        self.blocks.len()
    }

    pub fn lost(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn block(&self, s: usize) -> &StateBlock {
        &self.blocks[s]
    }

    pub fn rows(&self, s: usize) -> &[Row] {
        &self.blocks[s].rows
    }

    pub fn shot(&self, s: usize) -> Option<ShotType> {
        self.shots[s]
    }

    /// Execution-error level each state's rows were simulated at.
    pub fn provenance(&self, s: usize) -> u32 {
        self.blocks[s].epsilon
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    /// Probabilities of row `k` of state `s`.
    pub fn row_probs(&self, s: usize, k: usize) -> RowProbs {
        let row = &self.blocks[s].rows[k];
        let mut out = RowProbs::default();
        if row.n == 0 {
            return out;
        }
        let tags = row.tag_mass(&self.fault);
        out.won = tags.a_winner + tags.b_error;
        out.lost = tags.a_error + tags.b_winner;
        let n = f64::from(row.n);
        out.self_loop = self.fault.p_first * f64::from(row.fault) / n;
        for &(t, c) in &row.next {
            let p = f64::from(c) / n;
            if t as usize == s {
                out.self_loop += p;
            } else {
                out.next.push((t as usize, p));
            }
        }
        out
    }

    /// Stochasticity, tag and successor checks.
    pub fn validate(&self) -> Result<()> {
        if self.shots.len() != self.blocks.len() {
            return Err(Error::Artifact("shot-type table does not match the state count".into()));
        }
        for (s, block) in self.blocks.iter().enumerate() {
            for (k, row) in block.rows.iter().enumerate() {
                if !row.check() {
                    return Err(Error::Artifact(format!("row ({s}, {k}) counts are inconsistent")));
                }
                if row.fault > 0 && self.shots[s] != Some(ShotType::Serve) {
                    return Err(Error::Artifact(format!("fault counted in non-serve state {s}")));
                }
                if let Some(&(t, _)) = row.next.last() {
                    if t as usize >= self.blocks.len() {
                        return Err(Error::Artifact(format!("row ({s}, {k}) references unknown state {t}")));
                    }
                }
                if row.n > 0 {
                    let p = self.row_probs(s, k);
                    let sum = p.won + p.lost + p.self_loop + p.next.iter().map(|x| x.1).sum::<f64>();
                    if (sum - 1.0).abs() > 1e-12 {
                        return Err(Error::Artifact(format!("row ({s}, {k}) sums to {sum}")));
                    }
                }
            }
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"RPTRANS1";

    /// Binary layout (little endian): magic `RPTRANS1`, census hash (32 bytes),
    /// ε (u32), fault split `p_first` (f64), state count (u32), then per state:
    /// shot type (u8: 0 serve, 1 return, 2 rally, 255 none), provenance ε (u32),
    /// row count (u32) and per row: action id (u8), then u32 counts
    /// `n, a_win, a_err, fault, b_win, b_err`, successor count `m` (u32) and `m`
    /// `(state, count)` u32 pairs in ascending state order.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&self.census_hash)?;
        w.write_u32::<LittleEndian>(self.epsilon)?;
        w.write_f64::<LittleEndian>(self.fault.p_first)?;
        w.write_u32::<LittleEndian>(self.blocks.len() as u32)?;
        for (s, block) in self.blocks.iter().enumerate() {
            w.write_u8(match self.shots[s] {
                Some(ShotType::Serve) => 0,
                Some(ShotType::Return) => 1,
                Some(ShotType::Rally) => 2,
                None => 255,
            })?;
            w.write_u32::<LittleEndian>(block.epsilon)?;
            w.write_u32::<LittleEndian>(block.rows.len() as u32)?;
            for row in &block.rows {
                w.write_u8(row.action.0)?;
                for v in [row.n, row.a_win, row.a_err, row.fault, row.b_win, row.b_err, row.next.len() as u32] {
                    w.write_u32::<LittleEndian>(v)?;
                }
                for &(t, c) in &row.next {
                    w.write_u32::<LittleEndian>(t)?;
                    w.write_u32::<LittleEndian>(c)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Artifact("not a transition model file".into()));
        }
        let mut census_hash = [0u8; 32];
        r.read_exact(&mut census_hash)?;
        let epsilon = r.read_u32::<LittleEndian>()?;
        let fault = FaultRule { p_first: r.read_f64::<LittleEndian>()? };
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut shots = Vec::with_capacity(n);
        let mut blocks = Vec::with_capacity(n);
        for _ in 0..n {
            shots.push(match r.read_u8()? {
                0 => Some(ShotType::Serve),
                1 => Some(ShotType::Return),
                2 => Some(ShotType::Rally),
                255 => None,
                other => return Err(Error::Artifact(format!("unknown shot code {other}"))),
            });
            let eps = r.read_u32::<LittleEndian>()?;
            let k = r.read_u32::<LittleEndian>()? as usize;
            let mut rows = Vec::with_capacity(k);
            for _ in 0..k {
                let action = ActionId(r.read_u8()?);
                let mut v = [0u32; 7];
                for x in v.iter_mut() {
                    *x = r.read_u32::<LittleEndian>()?;
                }
                let mut next = Vec::with_capacity(v[6] as usize);
                for _ in 0..v[6] {
                    let t = r.read_u32::<LittleEndian>()?;
                    let c = r.read_u32::<LittleEndian>()?;
                    next.push((t, c));
                }
                rows.push(Row { action, n: v[0], a_win: v[1], a_err: v[2], fault: v[3], b_win: v[4], b_err: v[5], next });
            }
            blocks.push(StateBlock { epsilon: eps, rows });
        }
        Self::from_blocks(epsilon, fault, census_hash, shots, blocks)
    }

    pub fn check_census(&self, census: &StateCensus) -> Result<()> {
        if self.census_hash != census.hash() || self.blocks.len() != census.n_transient() {
            return Err(Error::Artifact("transition model belongs to a different state census".into()));
        }
        Ok(())
    }
}

/// Settings for [`build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Intention-policy draws per state (`N`).
    pub n: usize,
    pub seed: u64,
    /// Samples simulated for an action the intention draws never picked.
    pub forced_samples: u32,
    /// Rows with fewer draws than this are topped up to it.
    pub min_row_samples: u32,
    /// Refit `f_s` per ε from scaled execution draws.
    pub refit_intentions: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { n: 1000, seed: 0, forced_samples: 200, min_row_samples: 50, refit_intentions: false }
    }
}

#[derive(Default)]
struct RowAcc {
    n: u32,
    a_win: u32,
    a_err: u32,
    fault: u32,
    b_win: u32,
    b_err: u32,
    next: Vec<u32>,
}

impl RowAcc {
    fn finish(mut self, action: ActionId) -> Row {
        self.next.sort_unstable();
        let mut next: Vec<(u32, u32)> = Vec::new();
        for t in self.next {
            match next.last_mut() {
                Some((last, c)) if *last == t => *c += 1,
                _ => next.push((t, 1)),
            }
        }
        Row { action, n: self.n, a_win: self.a_win, a_err: self.a_err, fault: self.fault, b_win: self.b_win, b_err: self.b_err, next }
    }
}

/// Simulate one A shot at `landing` plus B's reply and record it.
fn simulate_into<R: Rng + ?Sized>(
    generator: &ShotGenerator<'_>,
    census: &StateCensus,
    state: &State,
    landing: crate::geometry::Point,
    acc: &mut RowAcc,
    rng: &mut R,
) -> Result<()> {
    let rec = generator.generate_shot(state, Some(landing), rng)?;
    acc.n += 1;
    match rec.outcome {
        Outcome::Winner => acc.a_win += 1,
        Outcome::Error if rec.shot_type == ShotType::Serve => acc.fault += 1,
        Outcome::Error => acc.a_err += 1,
        Outcome::InPlay => {
            let aux = rec.terminal_state.expect("in-play shots carry terminal conditions");
            match generator.generate_return(&aux, rng) {
                (Outcome::Winner, _) => acc.b_win += 1,
                (Outcome::Error, _) => acc.b_err += 1,
                (Outcome::InPlay, Some(State::Transient { a, b, shot })) => {
                    let t = census
                        .snap(a, b, shot)
                        .ok_or_else(|| Error::Census(format!("no surviving state near ({}, {}, {shot})", a.0, b.0)))?;
                    acc.next.push(t as u32);
                }
                (Outcome::InPlay, _) => unreachable!("in-play replies produce a transient state"),
            }
        }
    }
    Ok(())
}

/// Build one state's block.
pub fn build_state(
    generator: &ShotGenerator<'_>,
    census: &StateCensus,
    dists: &Distributions,
    s: usize,
    eps: Epsilon,
    config: &BuildConfig,
) -> Result<StateBlock> {
    let fit = dists.state(s).ok_or(Error::MissingIntention(s))?;
    let state = census.state(s);
    let e = f64::from(eps.value());
    let mut rng = stream(config.seed, Purpose::Build, eps.value(), s as u64);
    let refit;
    let intention: &IntentionDistribution = if config.refit_intentions {
        let mut r = stream(config.seed, Purpose::Refit, eps.value(), s as u64);
        refit = refit_intention(generator.layout(), census.action_kind(s), fit, eps, config.n, &mut r)?;
        &refit
    } else {
        &fit.intention
    };
    let mut accs: Vec<RowAcc> = (0..fit.execution.len()).map(|_| RowAcc::default()).collect();
    for _ in 0..config.n {
        let k = intention.sample_index(&mut rng);
        let landing = fit.execution[k].sample(e, &mut rng);
        simulate_into(generator, census, &state, landing, &mut accs[k], &mut rng)?;
    }
    // Forced pass: every action gets enough draws for a usable row.
    let mut rng = stream(config.seed, Purpose::Forced, eps.value(), s as u64);
    for (k, acc) in accs.iter_mut().enumerate() {
        let target = if acc.n == 0 { config.forced_samples } else { config.min_row_samples };
        while acc.n < target {
            let landing = fit.execution[k].sample(e, &mut rng);
            simulate_into(generator, census, &state, landing, acc, &mut rng)?;
        }
    }
    let rows = accs.into_iter().zip(&fit.intention.actions).map(|(acc, &a)| acc.finish(a)).collect();
    Ok(StateBlock { epsilon: eps.value(), rows })
}

/// Build `P_ε` for every transient state (in parallel, order independent).
pub fn build(
    generator: &ShotGenerator<'_>,
    census: &StateCensus,
    dists: &Distributions,
    eps: Epsilon,
    config: &BuildConfig,
) -> Result<TransitionModel> {
    if config.n == 0 {
        return Err(Error::Artifact("transition build needs N ≥ 1".into()));
    }
    dists.check_census(census)?;
    let blocks = census
        .transient_indices()
        .into_par_iter()
        .map(|s| build_state(generator, census, dists, s, eps, config))
        .collect::<Result<Vec<_>>>()?;
    let shots = census.transient_indices().map(|s| census.shot(s)).collect();
    TransitionModel::from_blocks(eps.value(), FaultRule::default(), census.hash(), shots, blocks)
}

/// A group of states whose rows an error scenario replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioClass {
    Total,
    Class(StateClass),
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 7] = [
        ScenarioClass::Total,
        ScenarioClass::Class(StateClass { shot: ShotType::Serve, side: Side::Ad }),
        ScenarioClass::Class(StateClass { shot: ShotType::Serve, side: Side::Deuce }),
        ScenarioClass::Class(StateClass { shot: ShotType::Return, side: Side::Ad }),
        ScenarioClass::Class(StateClass { shot: ShotType::Return, side: Side::Deuce }),
        ScenarioClass::Class(StateClass { shot: ShotType::Rally, side: Side::Ad }),
        ScenarioClass::Class(StateClass { shot: ShotType::Rally, side: Side::Deuce }),
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.to_string() == name).ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn contains(&self, class: Option<StateClass>) -> bool {
        match self {
            ScenarioClass::Total => class.is_some(),
            ScenarioClass::Class(c) => class == Some(*c),
        }
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioClass::Total => f.write_str("total"),
            ScenarioClass::Class(c) => f.write_str(&c.name()),
        }
    }
}

/// Composite model: states of each listed class take their rows from
/// `models[ε]`, every other state from `models[1]`. A specific class
/// overrides `total`.
pub fn patch_epsilon(
    census: &StateCensus,
    base: &BTreeMap<ScenarioClass, u32>,
    models: &BTreeMap<u32, Arc<TransitionModel>>,
) -> Result<TransitionModel> {
    let perfect = models.get(&1).ok_or(Error::MissingModel(1))?;
    perfect.check_census(census)?;
    let mut blocks = Vec::with_capacity(census.n_transient());
    for s in census.transient_indices() {
        let class = census.class(s);
        let eps = base
            .iter()
            .filter(|(c, _)| c.contains(class))
            .max_by_key(|(c, _)| matches!(c, ScenarioClass::Class(_)))
            .map_or(1, |(_, &e)| e);
        let source = models.get(&eps).ok_or(Error::MissingModel(eps))?;
        blocks.push(Arc::clone(&source.blocks[s]));
    }
    let uniform = blocks.iter().map(|b| b.epsilon).collect::<std::collections::BTreeSet<_>>();
    let epsilon = if uniform.len() == 1 { *uniform.iter().next().unwrap() } else { 0 };
    Ok(TransitionModel {
        epsilon,
        fault: perfect.fault,
        census_hash: perfect.census_hash,
        shots: perfect.shots.clone(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(action: u8, a_win: u32, a_err: u32, fault: u32, next: Vec<(u32, u32)>) -> Row {
        let n = a_win + a_err + fault + next.iter().map(|x| x.1).sum::<u32>();
        Row { action: ActionId(action), n, a_win, a_err, fault, b_win: 0, b_err: 0, next }
    }

    #[test]
    fn bayes_fault_constant() {
        let p = bayes(0.379, 0.725, 0.302);
        assert!((p - 0.910).abs() < 5e-4, "{p}");
        assert!((FaultRule::default().third_serve_probability() - 0.0081).abs() < 1e-4);
    }

    #[test]
    fn fault_split_conserves_mass() {
        let rule = FaultRule::default();
        let split = rule.split(Some(ShotType::Serve), 0.3).unwrap();
        assert_relative_eq!(split.repeat + split.lose, 0.3, epsilon = 1e-15);
        assert_relative_eq!(split.repeat, 0.3 * rule.p_first, epsilon = 1e-15);
        assert!(matches!(rule.split(Some(ShotType::Rally), 0.3), Err(Error::NotServeState)));
        assert!(matches!(rule.split(None, 0.3), Err(Error::NotServeState)));
    }

    #[test]
    fn serve_fault_row_stays_stochastic() {
        let model = TransitionModel::from_blocks(
            1,
            FaultRule::default(),
            [0; 32],
            vec![Some(ShotType::Serve)],
            vec![StateBlock { epsilon: 1, rows: vec![row(0, 4, 0, 3, vec![])] }],
        )
        .unwrap();
        let p = model.row_probs(0, 0);
        let f = 3.0 / 7.0;
        assert_relative_eq!(p.self_loop, FaultRule::default().p_first * f, epsilon = 1e-15);
        assert_relative_eq!(p.lost, (1.0 - FaultRule::default().p_first) * f, epsilon = 1e-15);
        assert_relative_eq!(p.won + p.lost + p.self_loop, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn faults_outside_serve_states_are_rejected() {
        let bad = TransitionModel::from_blocks(
            1,
            FaultRule::default(),
            [0; 32],
            vec![Some(ShotType::Rally)],
            vec![StateBlock { epsilon: 1, rows: vec![row(0, 1, 0, 1, vec![])] }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let mut r = row(0, 1, 1, 0, vec![(0, 2)]);
        r.n += 1;
        let bad = TransitionModel::from_blocks(1, FaultRule::default(), [0; 32], vec![Some(ShotType::Rally)], vec![
            StateBlock { epsilon: 1, rows: vec![r] },
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn tags_map_to_absorbing_states() {
        assert_eq!(OutcomeTag::AWinner.wins(), Some(true));
        assert_eq!(OutcomeTag::BError.wins(), Some(true));
        assert_eq!(OutcomeTag::AError.wins(), Some(false));
        assert_eq!(OutcomeTag::BWinner.wins(), Some(false));
        assert_eq!(OutcomeTag::Continue.wins(), None);
    }

    #[test]
    fn scenario_class_names_roundtrip() {
        for c in ScenarioClass::ALL {
            assert_eq!(ScenarioClass::parse(&c.to_string()).unwrap(), c);
        }
        assert!(matches!(ScenarioClass::parse("lob"), Err(Error::UnknownClass(_))));
        assert_eq!(ScenarioClass::parse("ad-serve").unwrap().to_string(), "ad-serve");
    }

    #[test]
    fn model_roundtrips_through_binary() {
        let model = TransitionModel::from_blocks(
            4,
            FaultRule::default(),
            [3; 32],
            vec![Some(ShotType::Serve), Some(ShotType::Rally)],
            vec![
                StateBlock { epsilon: 4, rows: vec![row(0, 1, 0, 2, vec![(1, 3)]), row(1, 0, 0, 1, vec![(0, 1)])] },
                StateBlock { epsilon: 4, rows: vec![row(7, 2, 1, 0, vec![(1, 5)])] },
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(TransitionModel::read_from(buf.as_slice()).unwrap(), model);
    }
}

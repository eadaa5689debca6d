//! Policy evaluation and optimization on an absorbing transition model.
//!
//! Values are win probabilities: the reward is 1 on entering `W`, absorbing
//! states have value 0, and there is no discounting. Every solver therefore
//! checks properness (absorption reachable) before iterating.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distfit::IntentionDistribution;
use crate::error::{Error, Result};
use crate::geometry::ActionId;
use crate::transitions::TransitionModel;

/// Convergence threshold on the ∞-norm Bellman residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Gauss–Seidel sweeps before falling back to a dense solve.
pub const MAX_SWEEPS: usize = 100_000;
/// Steps after which a rollout is declared non-absorbing.
pub const MAX_ROLLOUT_STEPS: u64 = 1_000_000;

/// Value of every state; `values[W] = values[L] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub epsilon: u32,
    pub policy_id: String,
    pub bellman_residual: f64,
}

impl ValueFunction {
    pub fn transient(&self) -> &[f64] {
        &self.values[..self.values.len() - 2]
    }
}

/// What a decision rule does in one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    /// Sample from the intention distribution `f_s`.
    Intention,
    /// Play this row of the state's action set.
    Action(usize),
}

/// A decision rule `d` over all transient states.
pub type DecisionRule = Vec<Choice>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// The randomized intention policy `π̂`.
    Intention,
    /// A stationary deterministic policy (row index per state).
    Deterministic(Vec<usize>),
    /// `(d¹, …, dⁿ, d̂, d̂, …)`.
    Composite(Vec<DecisionRule>),
}

impl Policy {
    /// Decision rule applied at decision epoch `epoch` (0-based).
    pub fn choice(&self, epoch: usize, s: usize) -> Choice {
        match self {
            Policy::Intention => Choice::Intention,
            Policy::Deterministic(d) => Choice::Action(d[s]),
            Policy::Composite(stages) => stages.get(epoch).map_or(Choice::Intention, |d| d[s]),
        }
    }

    /// Action ids of a deterministic policy.
    pub fn actions(&self, model: &TransitionModel) -> Option<Vec<ActionId>> {
        match self {
            Policy::Deterministic(d) => Some(d.iter().enumerate().map(|(s, &k)| model.rows(s)[k].action).collect()),
            _ => None,
        }
    }
}

/// Flattened probabilities of every `(s, a)` row.
#[derive(Debug, Clone)]
pub struct Compiled {
    n: usize,
    row_start: Vec<usize>,
    won: Vec<f64>,
    lost: Vec<f64>,
    self_loop: Vec<f64>,
    entry_start: Vec<usize>,
    entries: Vec<(u32, f64)>,
    empty: Vec<bool>,
}

impl Compiled {
    pub fn new(model: &TransitionModel) -> Self {
        let n = model.n_transient();
        let mut c = Compiled {
            n,
            row_start: Vec::with_capacity(n + 1),
            won: Vec::new(),
            lost: Vec::new(),
            self_loop: Vec::new(),
            entry_start: vec![0],
            entries: Vec::new(),
            empty: Vec::new(),
        };
        c.row_start.push(0);
        for s in 0..n {
            for k in 0..model.rows(s).len() {
                let p = model.row_probs(s, k);
                c.won.push(p.won);
                c.lost.push(p.lost);
                c.self_loop.push(p.self_loop);
                c.empty.push(model.rows(s)[k].is_empty());
                c.entries.extend(p.next.iter().map(|&(t, q)| (t as u32, q)));
                c.entry_start.push(c.entries.len());
            }
            c.row_start.push(c.won.len());
        }
        c
    }

    pub fn n_transient(&self) -> usize {
        self.n
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.row_start[s + 1] - self.row_start[s]
    }

    fn row(&self, s: usize, k: usize) -> usize {
        self.row_start[s] + k
    }

    fn entries(&self, r: usize) -> &[(u32, f64)] {
        &self.entries[self.entry_start[r]..self.entry_start[r + 1]]
    }

    /// One-step backup `Σ P(s′)(r + V(s′))` of row `r` of state `s`.
    fn backup(&self, s: usize, r: usize, v: &[f64]) -> f64 {
        self.won[r] + self.self_loop[r] * v[s] + self.entries(r).iter().map(|&(t, p)| p * v[t as usize]).sum::<f64>()
    }

    /// Backup with the self-loop solved exactly: `(r + Σ_{s′≠s} P V) / (1 − P(s|s))`.
    fn backup_exact_loop(&self, r: usize, v: &[f64]) -> f64 {
        let rest = self.won[r] + self.entries(r).iter().map(|&(t, p)| p * v[t as usize]).sum::<f64>();
        let stay = self.self_loop[r];
        if stay < 1.0 {
            rest / (1.0 - stay)
        } else {
            0.0
        }
    }
}

/// A stationary Markov chain: one merged row per transient state.
struct Chain {
    won: Vec<f64>,
    self_loop: Vec<f64>,
    start: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

fn weights(intentions: &[IntentionDistribution], s: usize, choice: Choice, n_actions: usize) -> Result<Vec<(usize, f64)>> {
    Ok(match choice {
        Choice::Action(k) => vec![(k, 1.0)],
        Choice::Intention => {
            let intention = intentions.get(s).ok_or(Error::MissingIntention(s))?;
            debug_assert_eq!(intention.probs.len(), n_actions);
            intention.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(k, &p)| (k, p)).collect()
        }
    })
}

impl Chain {
    fn new(c: &Compiled, intentions: &[IntentionDistribution], rule: &[Choice]) -> Result<Chain> {
        let n = c.n;
        let mut chain = Chain { won: vec![0.0; n], self_loop: vec![0.0; n], start: vec![0], entries: Vec::new() };
        let mut scratch = vec![0.0; n];
        let mut touched = Vec::new();
        for s in 0..n {
            for (k, w) in weights(intentions, s, rule[s], c.n_actions(s))? {
                let r = c.row(s, k);
                chain.won[s] += w * c.won[r];
                chain.self_loop[s] += w * c.self_loop[r];
                for &(t, p) in c.entries(r) {
                    if scratch[t as usize] == 0.0 {
                        touched.push(t);
                    }
                    scratch[t as usize] += w * p;
                }
            }
            touched.sort_unstable();
            for &t in &touched {
                chain.entries.push((t, scratch[t as usize]));
                scratch[t as usize] = 0.0;
            }
            touched.clear();
            chain.start.push(chain.entries.len());
        }
        Ok(chain)
    }

    fn entries(&self, s: usize) -> &[(u32, f64)] {
        &self.entries[self.start[s]..self.start[s + 1]]
    }

    /// States from which absorption cannot be reached.
    fn unabsorbed(&self) -> Vec<usize> {
        let n = self.won.len();
        let mut reverse: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut reaches = vec![false; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            let rest: f64 = self.entries(s).iter().map(|e| e.1).sum();
            // Absorbing mass is whatever does not stay transient.
            if 1.0 - self.self_loop[s] - rest > 1e-15 || self.won[s] > 0.0 {
                reaches[s] = true;
                queue.push_back(s);
            }
            for &(t, p) in self.entries(s) {
                if p > 0.0 {
                    reverse[t as usize].push(s as u32);
                }
            }
        }
        while let Some(t) = queue.pop_front() {
            for &s in &reverse[t] {
                if !reaches[s as usize] {
                    reaches[s as usize] = true;
                    queue.push_back(s as usize);
                }
            }
        }
        (0..n).filter(|&s| !reaches[s]).collect()
    }

    fn residual(&self, v: &[f64]) -> f64 {
        (0..self.won.len())
            .map(|s| {
                let tv = self.won[s]
                    + self.self_loop[s] * v[s]
                    + self.entries(s).iter().map(|&(t, p)| p * v[t as usize]).sum::<f64>();
                (tv - v[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn solve(&self) -> Result<(Vec<f64>, f64)> {
        let bad = self.unabsorbed();
        if !bad.is_empty() {
            return Err(Error::Improper { states: bad });
        }
        let n = self.won.len();
        let mut v = vec![0.0; n + 2];
        for _ in 0..MAX_SWEEPS {
            let mut delta = 0.0f64;
            for s in 0..n {
                let rest = self.won[s] + self.entries(s).iter().map(|&(t, p)| p * v[t as usize]).sum::<f64>();
                let new = rest / (1.0 - self.self_loop[s]);
                delta = delta.max((new - v[s]).abs());
                v[s] = new;
            }
            if delta < 0.01 * RESIDUAL_TOLERANCE {
                let res = self.residual(&v);
                if res < RESIDUAL_TOLERANCE {
                    return Ok((v, res));
                }
            }
        }
        log::warn!("Gauss–Seidel did not converge in {MAX_SWEEPS} sweeps; using a dense solve");
        self.solve_dense()
    }

    fn solve_dense(&self) -> Result<(Vec<f64>, f64)> {
        let n = self.won.len();
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            a[(s, s)] -= self.self_loop[s];
            for &(t, p) in self.entries(s) {
                a[(s, t as usize)] -= p;
            }
            b[s] = self.won[s];
        }
        let x = a.lu().solve(&b).ok_or_else(|| Error::Improper { states: Vec::new() })?;
        let mut v: Vec<f64> = x.iter().copied().collect();
        v.extend([0.0, 0.0]);
        let res = self.residual(&v);
        Ok((v, res))
    }
}

/// Value of a stationary decision rule (deterministic, intention, or mixed per state).
pub fn evaluate_rule(
    model: &TransitionModel,
    intentions: &[IntentionDistribution],
    rule: &[Choice],
    policy_id: &str,
) -> Result<ValueFunction> {
    let c = Compiled::new(model);
    evaluate_rule_compiled(&c, model.epsilon(), intentions, rule, policy_id)
}

fn evaluate_rule_compiled(
    c: &Compiled,
    epsilon: u32,
    intentions: &[IntentionDistribution],
    rule: &[Choice],
    policy_id: &str,
) -> Result<ValueFunction> {
    let chain = Chain::new(c, intentions, rule)?;
    let (values, bellman_residual) = chain.solve()?;
    Ok(ValueFunction { values, epsilon, policy_id: policy_id.to_string(), bellman_residual })
}

/// `V^π̂`: value of playing the intention distribution in every state.
pub fn evaluate_mrp(model: &TransitionModel, intentions: &[IntentionDistribution]) -> Result<ValueFunction> {
    let rule = vec![Choice::Intention; model.n_transient()];
    evaluate_rule(model, intentions, &rule, "intention")
}

/// Require every `(s, a)` row to reach states strictly closer to absorption,
/// which makes every stationary deterministic policy proper.
pub fn check_all_policies_proper(c: &Compiled) -> Result<()> {
    let n = c.n;
    let mut assigned = vec![false; n];
    let mut progress = true;
    while progress {
        progress = false;
        for s in 0..n {
            if assigned[s] {
                continue;
            }
            let ok = (0..c.n_actions(s)).all(|k| {
                let r = c.row(s, k);
                c.won[r] > 0.0 || c.lost[r] > 0.0 || c.entries(r).iter().any(|&(t, p)| p > 0.0 && assigned[t as usize])
            });
            if ok {
                assigned[s] = true;
                progress = true;
            }
        }
    }
    let mut offending = Vec::new();
    for s in (0..n).filter(|&s| !assigned[s]) {
        for k in 0..c.n_actions(s) {
            let r = c.row(s, k);
            let ok = c.won[r] > 0.0 || c.lost[r] > 0.0 || c.entries(r).iter().any(|&(t, p)| p > 0.0 && assigned[t as usize]);
            if !ok {
                offending.push((s, ActionId(k as u8)));
            }
        }
    }
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::ImproperRows { rows: offending })
    }
}

/// Greedy row for state `s` against `v`; ties go to the lowest action id
/// (rows are stored in ascending id order, so the first maximum wins).
fn argmax(c: &Compiled, s: usize, v: &[f64], exact_loop: bool) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..c.n_actions(s) {
        let r = c.row(s, k);
        let q = if exact_loop { c.backup_exact_loop(r, v) } else { c.backup(s, r, v) };
        if q > best.1 {
            best = (k, q);
        }
    }
    best
}

/// Optimal value `V*` and a deterministic optimal policy `π*`.
pub fn solve_mdp(model: &TransitionModel) -> Result<(ValueFunction, Policy)> {
    let c = Compiled::new(model);
    solve_mdp_compiled(&c, model.epsilon())
}

fn solve_mdp_compiled(c: &Compiled, epsilon: u32) -> Result<(ValueFunction, Policy)> {
    check_all_policies_proper(c)?;
    let n = c.n;
    let mut v = vec![0.0; n + 2];
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut delta = 0.0f64;
        for s in 0..n {
            let (_, q) = argmax(c, s, &v, true);
            delta = delta.max((q - v[s]).abs());
            v[s] = q;
        }
        if delta < 1e-3 * RESIDUAL_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("value iteration stopped after {MAX_SWEEPS} sweeps");
    }
    let decisions: Vec<usize> = (0..n).map(|s| argmax(c, s, &v, false).0).collect();
    let rule: Vec<Choice> = decisions.iter().map(|&k| Choice::Action(k)).collect();
    let mut vf = evaluate_rule_compiled(c, epsilon, &[], &rule, "optimal")?;
    // Report the optimality residual ‖T*V − V‖∞ of the returned values.
    vf.bellman_residual = (0..n).map(|s| (argmax(c, s, &vf.values, false).1 - vf.values[s]).abs()).fold(0.0, f64::max);
    Ok((vf, Policy::Deterministic(decisions)))
}

/// One greedy stage against `cost_to_go`: states where `restrict` holds take
/// the best row, all others keep the intention rule. Returns the rule and the
/// one-step backup values.
pub fn greedy_step(
    model: &TransitionModel,
    intentions: &[IntentionDistribution],
    cost_to_go: &[f64],
    restrict: &dyn Fn(usize) -> bool,
) -> Result<(DecisionRule, Vec<f64>)> {
    let c = Compiled::new(model);
    greedy_step_compiled(&c, intentions, cost_to_go, restrict)
}

fn greedy_step_compiled(
    c: &Compiled,
    intentions: &[IntentionDistribution],
    cost_to_go: &[f64],
    restrict: &dyn Fn(usize) -> bool,
) -> Result<(DecisionRule, Vec<f64>)> {
    let n = c.n;
    let mut rule = Vec::with_capacity(n);
    let mut values = vec![0.0; n + 2];
    for s in 0..n {
        if restrict(s) {
            let (k, q) = argmax(c, s, cost_to_go, false);
            rule.push(Choice::Action(k));
            values[s] = q;
        } else {
            let q = weights(intentions, s, Choice::Intention, c.n_actions(s))?
                .into_iter()
                .map(|(k, w)| w * c.backup(s, c.row(s, k), cost_to_go))
                .sum();
            rule.push(Choice::Intention);
            values[s] = q;
        }
    }
    Ok((rule, values))
}

/// Reusable solver state for one model: compiled rows plus `V^π̂`.
pub struct Solver<'m> {
    model: &'m TransitionModel,
    compiled: Compiled,
}

impl<'m> Solver<'m> {
    pub fn new(model: &'m TransitionModel) -> Self {
        Solver { model, compiled: Compiled::new(model) }
    }

    pub fn model(&self) -> &'m TransitionModel {
        self.model
    }

    pub fn evaluate_mrp(&self, intentions: &[IntentionDistribution]) -> Result<ValueFunction> {
        let rule = vec![Choice::Intention; self.compiled.n];
        evaluate_rule_compiled(&self.compiled, self.model.epsilon(), intentions, &rule, "intention")
    }

    pub fn evaluate_rule(&self, intentions: &[IntentionDistribution], rule: &[Choice], id: &str) -> Result<ValueFunction> {
        evaluate_rule_compiled(&self.compiled, self.model.epsilon(), intentions, rule, id)
    }

    pub fn solve_mdp(&self) -> Result<(ValueFunction, Policy)> {
        solve_mdp_compiled(&self.compiled, self.model.epsilon())
    }

    pub fn greedy_step(
        &self,
        intentions: &[IntentionDistribution],
        cost_to_go: &[f64],
        restrict: &dyn Fn(usize) -> bool,
    ) -> Result<(DecisionRule, Vec<f64>)> {
        greedy_step_compiled(&self.compiled, intentions, cost_to_go, restrict)
    }

    /// `π^n`: stages `d¹..dⁿ` built backward from `V^π̂`; `stages[k]` is the
    /// restrict set of decision epoch `k + 1`.
    pub fn nstep(
        &self,
        intentions: &[IntentionDistribution],
        base: &ValueFunction,
        stages: &[&dyn Fn(usize) -> bool],
    ) -> Result<(Policy, Vec<f64>)> {
        let mut v = base.values.clone();
        let mut rules = Vec::with_capacity(stages.len());
        for restrict in stages.iter().rev() {
            let (rule, next) = self.greedy_step(intentions, &v, *restrict)?;
            rules.push(rule);
            v = next;
        }
        rules.reverse();
        Ok((Policy::Composite(rules), v))
    }

    /// Policy iteration from `π̂`. Returns the final values, policy and the
    /// number of improvement steps. A state's action only changes when the
    /// improvement exceeds round-off, so the iteration cannot cycle on ties.
    pub fn policy_iteration(
        &self,
        intentions: &[IntentionDistribution],
        max_iterations: usize,
    ) -> Result<(ValueFunction, Policy, usize)> {
        let c = &self.compiled;
        let mut v = self.evaluate_mrp(intentions)?;
        let mut current: Option<Vec<usize>> = None;
        for it in 1..=max_iterations {
            let mut next = Vec::with_capacity(c.n);
            for s in 0..c.n {
                let (k, q) = argmax(c, s, &v.values, false);
                let keep = current.as_ref().and_then(|cur| {
                    let old = c.backup(s, c.row(s, cur[s]), &v.values);
                    (q - old <= 1e-12).then_some(cur[s])
                });
                next.push(keep.unwrap_or(k));
            }
            if current.as_ref() == Some(&next) {
                return Ok((v, Policy::Deterministic(next), it - 1));
            }
            let rule: Vec<Choice> = next.iter().map(|&k| Choice::Action(k)).collect();
            v = evaluate_rule_compiled(c, self.model.epsilon(), intentions, &rule, "policy-iteration")?;
            current = Some(next);
        }
        let policy = Policy::Deterministic(current.unwrap_or_default());
        Ok((v, policy, max_iterations))
    }

    /// Fraction of `trials` trajectories from `start` absorbed at `W`.
    pub fn rollout_check<R: Rng + ?Sized>(
        &self,
        intentions: &[IntentionDistribution],
        policy: &Policy,
        start: usize,
        trials: u64,
        rng: &mut R,
    ) -> Result<f64> {
        let c = &self.compiled;
        let (won, lost) = (c.n, c.n + 1);
        let mut wins = 0u64;
        for _ in 0..trials {
            let mut s = start;
            let mut epoch = 0usize;
            loop {
                if epoch as u64 >= MAX_ROLLOUT_STEPS {
                    return Err(Error::NonAbsorbing { start, steps: MAX_ROLLOUT_STEPS });
                }
                let k = match policy.choice(epoch, s) {
                    Choice::Action(k) => k,
                    Choice::Intention => intentions.get(s).ok_or(Error::MissingIntention(s))?.sample_index(rng),
                };
                let r = c.row(s, k);
                if c.empty[r] {
                    return Err(Error::ImproperRows { rows: vec![(s, ActionId(k as u8))] });
                }
                let mut u: f64 = rng.random();
                let next = 'pick: {
                    if u < c.won[r] {
                        break 'pick won;
                    }
                    u -= c.won[r];
                    if u < c.self_loop[r] {
                        break 'pick s;
                    }
                    u -= c.self_loop[r];
                    for &(t, p) in c.entries(r) {
                        if u < p {
                            break 'pick t as usize;
                        }
                        u -= p;
                    }
                    lost
                };
                epoch += 1;
                if next == won {
                    wins += 1;
                    break;
                }
                if next == lost {
                    break;
                }
                s = next;
            }
        }
        Ok(wins as f64 / trials as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ShotType;
    use crate::transitions::{FaultRule, Row, StateBlock};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Row with `won`/`lost` counts and transient successors.
    fn row(action: u8, won: u32, lost: u32, next: &[(u32, u32)]) -> Row {
        let n = won + lost + next.iter().map(|x| x.1).sum::<u32>();
        Row { action: ActionId(action), n, a_win: won, a_err: lost, fault: 0, b_win: 0, b_err: 0, next: next.to_vec() }
    }

    fn model(blocks: Vec<Vec<Row>>) -> TransitionModel {
        let n = blocks.len();
        TransitionModel::from_blocks(
            1,
            FaultRule::default(),
            [0; 32],
            vec![Some(ShotType::Rally); n],
            blocks.into_iter().map(|rows| StateBlock { epsilon: 1, rows }).collect(),
        )
        .unwrap()
    }

    fn uniform(m: &TransitionModel) -> Vec<IntentionDistribution> {
        (0..m.n_transient())
            .map(|s| IntentionDistribution::uniform(&m.rows(s).iter().map(|r| r.action).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn one_step_absorption() {
        for (w, l, expect) in [(0, 1, 0.0), (1, 1, 0.5), (1, 0, 1.0)] {
            let m = model(vec![vec![row(0, w, l, &[])]]);
            let v = evaluate_mrp(&m, &uniform(&m)).unwrap();
            assert_relative_eq!(v.values[0], expect, epsilon = 1e-15);
            assert_eq!(v.values[1..], [0.0, 0.0]);
        }
    }

    #[test]
    fn self_loop_geometric_series() {
        let m = model(vec![vec![row(0, 3, 2, &[(0, 5)])]]);
        let v = evaluate_mrp(&m, &uniform(&m)).unwrap();
        assert_relative_eq!(v.values[0], 0.6, epsilon = 1e-12);
        assert!(v.bellman_residual < RESIDUAL_TOLERANCE);
    }

    #[test]
    fn improper_chain_is_rejected() {
        let m = model(vec![vec![row(0, 0, 0, &[(1, 1)])], vec![row(0, 0, 0, &[(0, 1)])]]);
        assert!(matches!(evaluate_mrp(&m, &uniform(&m)), Err(Error::Improper { .. })));
        assert!(matches!(solve_mdp(&m), Err(Error::ImproperRows { .. })));
    }

    #[test]
    fn mdp_picks_the_better_action() {
        let m = model(vec![vec![row(0, 4, 6, &[]), row(1, 6, 4, &[])]]);
        let (v, pi) = solve_mdp(&m).unwrap();
        assert_relative_eq!(v.values[0], 0.6, epsilon = 1e-12);
        assert_eq!(pi, Policy::Deterministic(vec![1]));
    }

    #[test]
    fn ties_go_to_the_lowest_action() {
        let m = model(vec![vec![row(2, 1, 1, &[]), row(5, 1, 1, &[])]]);
        let (_, pi) = solve_mdp(&m).unwrap();
        assert_eq!(pi.actions(&m).unwrap(), vec![ActionId(2)]);
    }

    #[test]
    fn three_state_chain_back_substitution() {
        // s0 → W ½, s1 ½; s1 → W ½, L ½.
        let m = model(vec![vec![row(0, 1, 0, &[(1, 1)])], vec![row(0, 1, 1, &[])]]);
        let v = evaluate_mrp(&m, &uniform(&m)).unwrap();
        assert_relative_eq!(v.values[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(v.values[0], 0.75, epsilon = 1e-12);
        let (vs, _) = solve_mdp(&m).unwrap();
        assert_relative_eq!(vs.values[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn greedy_step_with_empty_restrict_reproduces_mrp() {
        let m = model(vec![
            vec![row(0, 1, 2, &[(1, 3)]), row(1, 2, 1, &[(0, 1)])],
            vec![row(0, 1, 1, &[(0, 1), (1, 1)]), row(1, 0, 3, &[(0, 2)])],
        ]);
        let f = uniform(&m);
        let solver = Solver::new(&m);
        let v = solver.evaluate_mrp(&f).unwrap();
        let (rule, backup) = solver.greedy_step(&f, &v.values, &|_| false).unwrap();
        assert!(rule.iter().all(|c| *c == Choice::Intention));
        for s in 0..2 {
            assert!((backup[s] - v.values[s]).abs() < 1e-10);
        }
        let (_, better) = solver.greedy_step(&f, &v.values, &|_| true).unwrap();
        assert!(better.iter().zip(&v.values).all(|(b, a)| *b >= *a - 1e-12));
    }

    #[test]
    fn rollout_matches_hand_solved_chain() {
        let m = model(vec![vec![row(0, 3, 2, &[(0, 5)])]]);
        let f = uniform(&m);
        let solver = Solver::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let freq = solver.rollout_check(&f, &Policy::Intention, 0, 100_000, &mut rng).unwrap();
        let sd = (0.6f64 * 0.4 / 100_000.0).sqrt();
        assert!((freq - 0.6).abs() < 3.0 * sd);

        let sure = model(vec![vec![row(0, 1, 0, &[])]]);
        let solver = Solver::new(&sure);
        assert_eq!(solver.rollout_check(&uniform(&sure), &Policy::Intention, 0, 10_000, &mut rng).unwrap(), 1.0);
    }

    #[test]
    fn composite_policy_switches_after_its_stages() {
        // Action 0 always loops back; action 1 wins half the time.
        let m = model(vec![vec![row(0, 1, 0, &[(0, 99)]), row(1, 1, 1, &[])]]);
        let f = vec![IntentionDistribution { actions: vec![ActionId(0), ActionId(1)], probs: vec![0.0, 1.0] }];
        let pi = Policy::Composite(vec![vec![Choice::Action(0)]]);
        assert_eq!(pi.choice(0, 0), Choice::Action(0));
        assert_eq!(pi.choice(1, 0), Choice::Intention);
        let solver = Solver::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let freq = solver.rollout_check(&f, &pi, 0, 100_000, &mut rng).unwrap();
        // First shot: W 0.01, back to s 0.99 then the intention rule wins ½.
        let expect = 0.01 + 0.99 * 0.5;
        assert!((freq - expect).abs() < 3.0 * (expect * (1.0 - expect) / 1e5f64).sqrt());
    }
}

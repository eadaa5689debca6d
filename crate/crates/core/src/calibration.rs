//! Shot-outcome frequencies at a reference state and the search that tunes
//! the generator's winner and unforced-error rates to a target triple.
//!
//! A *pipeline shot* aims by drawing an intention from `f_s`, lands by drawing
//! from the scaled execution distribution, and is then resolved by the
//! generator. An *unconditioned shot* lets the generator pick the landing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{fit_state, StateFit};
use crate::error::{Error, Result};
use crate::geometry::{CellId, CourtLayout, Half, Point, Side};
use crate::rng::{stream, Purpose};
use crate::shotgen::{GeneratorParams, Outcome, ShotGenerator};
use crate::state::{ShotType, State};

/// Shots simulated per parallel chunk (each chunk has its own stream).
const CHUNK: usize = 4096;

/// Fractions of shots that were winners, errors and still in play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTriple {
    pub win: f64,
    pub error: f64,
    pub in_play: f64,
}

impl OutcomeTriple {
    /// Triple from percentages, e.g. `(13.0, 13.4, 73.6)`.
    pub fn from_percent(win: f64, error: f64, in_play: f64) -> Result<Self> {
        let t = OutcomeTriple { win: win / 100.0, error: error / 100.0, in_play: in_play / 100.0 };
        let parts = [t.win, t.error, t.in_play];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Targets(format!("({win}, {error}, {in_play}) is not a distribution in percent")));
        }
        Ok(t)
    }

    /// Largest absolute difference over the three components.
    pub fn distance(&self, other: &OutcomeTriple) -> f64 {
        (self.win - other.win).abs().max((self.error - other.error).abs()).max((self.in_play - other.in_play).abs())
    }

    fn from_counts(c: [u64; 3]) -> Self {
        let n = (c[0] + c[1] + c[2]).max(1) as f64;
        OutcomeTriple { win: c[0] as f64 / n, error: c[1] as f64 / n, in_play: c[2] as f64 / n }
    }
}

/// The reference state of the generator's calibration panel.
pub fn panel_state(params: &GeneratorParams) -> State {
    let p = &params.calibration;
    State::Transient { a: CellId(p.hitter_cell), b: CellId(p.receiver_cell), shot: p.shot }
}

fn tally(outcome: Outcome, c: &mut [u64; 3]) {
    match outcome {
        Outcome::Winner => c[0] += 1,
        Outcome::Error => c[1] += 1,
        Outcome::InPlay => c[2] += 1,
    }
}

fn chunked(shots: usize, seed: u64, purpose: Purpose, eps: u32, f: impl Fn(&mut rand_chacha::ChaCha8Rng, &mut [u64; 3]) -> Result<()> + Sync) -> Result<OutcomeTriple> {
    let chunks = shots.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, purpose, eps, i as u64);
            let mut c = [0u64; 3];
            for _ in 0..CHUNK.min(shots - i * CHUNK) {
                f(&mut rng, &mut c)?;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = counts.iter().fold([0u64; 3], |acc, c| [acc[0] + c[0], acc[1] + c[1], acc[2] + c[2]]);
    Ok(OutcomeTriple::from_counts(total))
}

/// Outcomes of shots whose landing the generator chooses.
pub fn unconditioned_triple(generator: &ShotGenerator<'_>, state: &State, shots: usize, seed: u64) -> Result<OutcomeTriple> {
    chunked(shots, seed, Purpose::Calibrate, 0, |rng, c| {
        tally(generator.generate_shot(state, None, rng)?.outcome, c);
        Ok(())
    })
}

/// Outcomes of pipeline shots at execution error `eps`.
pub fn pipeline_triple(
    generator: &ShotGenerator<'_>,
    state: &State,
    fit: &StateFit,
    eps: u32,
    shots: usize,
    seed: u64,
) -> Result<OutcomeTriple> {
    chunked(shots, seed, Purpose::OutcomeTable, eps, |rng, c| {
        let k = fit.intention.sample_index(rng);
        let landing = fit.execution[k].sample(f64::from(eps), rng);
        tally(generator.generate_shot(state, Some(landing), rng)?.outcome, c);
        Ok(())
    })
}

/// Pipeline outcome triple for every `ε ∈ 1..=e_max`.
pub fn epsilon_table(
    generator: &ShotGenerator<'_>,
    state: &State,
    fit: &StateFit,
    e_max: u32,
    shots: usize,
    seed: u64,
) -> Result<Vec<(u32, OutcomeTriple)>> {
    (1..=e_max).map(|e| Ok((e, pipeline_triple(generator, state, fit, e, shots, seed)?))).collect()
}

/// Fixed pipeline landings at the panel state; the search re-scores them
/// analytically, so the objective is smooth in the tuned parameters.
struct Panel {
    shots: Vec<(Point, Point, Point, bool)>,
    side: Side,
    shot: ShotType,
}

impl Panel {
    fn draw(generator: &ShotGenerator<'_>, state: &State, fit: &StateFit, eps: u32, n: usize, rng: &mut impl Rng) -> Result<Self> {
        let State::Transient { a, b, shot } = *state else {
            return Err(Error::AbsorbingState);
        };
        let layout = generator.layout();
        let mut shots = Vec::with_capacity(n);
        let mut side = Side::Deuce;
        for _ in 0..n {
            let (hitter, receiver) = generator.sample_positions(a, b, rng);
            side = Side::of(Half::A, hitter.y);
            let k = fit.intention.sample_index(rng);
            let landing = fit.execution[k].sample(f64::from(eps), rng);
            let inb = layout.spec.in_bounds(landing, generator.landing_kind(hitter, shot));
            shots.push((hitter, receiver, landing, inb));
        }
        Ok(Panel { shots, side, shot })
    }

    fn expected(&self, generator: &ShotGenerator<'_>) -> OutcomeTriple {
        let pu = generator.unforced_probability(self.shot, self.side, Default::default());
        let (mut win, mut err) = (0.0, 0.0);
        for &(hitter, receiver, landing, inb) in &self.shots {
            if !inb {
                err += 1.0;
                continue;
            }
            let pw = generator.winner_probability(hitter, receiver, landing, self.shot);
            win += pw;
            err += (1.0 - pw) * pu;
        }
        let n = self.shots.len() as f64;
        OutcomeTriple { win: win / n, error: err / n, in_play: 1.0 - (win + err) / n }
    }
}

/// Settings for [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub target: OutcomeTriple,
    /// Accepted max-component distance between target and achieved triple.
    pub tolerance: f64,
    /// Coordinate-search rounds.
    pub max_rounds: usize,
    /// Landings per state used by the panel's distribution fit.
    pub fit_samples: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target: OutcomeTriple { win: 0.130, error: 0.134, in_play: 0.736 },
            tolerance: 0.01,
            max_rounds: 60,
            fit_samples: 1000,
            seed: 20210611,
        }
    }
}

/// Outcome of a calibration search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: GeneratorParams,
    /// Expected triple of the tuned parameters on the fixed panel.
    pub expected: OutcomeTriple,
    /// Monte-Carlo triple of fresh pipeline shots with the tuned parameters.
    pub simulated: OutcomeTriple,
    pub rounds: usize,
}

/// Tune the winner intercept and base unforced-error rate of the panel's shot
/// type so pipeline shots at the panel's ε match `config.target`. The ad/deuce
/// ratio of unforced rates is preserved.
pub fn calibrate(layout: &CourtLayout, params: &GeneratorParams, config: &CalibrationConfig) -> Result<CalibrationReport> {
    let target = config.target;
    let sum = target.win + target.error + target.in_play;
    let parts = [target.win, target.error, target.in_play];
    if (sum - 1.0).abs() > 1e-6 || parts.iter().any(|p| !(0.0..=1.0).contains(p)) || target.win <= 0.0 || target.error <= 0.0 {
        return Err(Error::Targets(format!("target triple must be a positive distribution, got {target:?}")));
    }
    let panel_cfg = params.calibration;
    let state = panel_state(params);
    let generator = ShotGenerator::new(layout, params)?;
    let mut rng = stream(config.seed, Purpose::Calibrate, panel_cfg.epsilon, 1);
    let fit = fit_state(&generator, &state, config.fit_samples, &mut rng)?;
    let panel = Panel::draw(&generator, &state, &fit, panel_cfg.epsilon, panel_cfg.shots as usize, &mut rng)?;

    let shot = panel_cfg.shot;
    let mut tuned = params.clone();
    let base = *tuned.unforced.get(shot);
    let ad_ratio = if base.deuce > 0.0 { base.ad / base.deuce } else { 1.0 };
    let score = |p: &GeneratorParams| -> Result<OutcomeTriple> { Ok(panel.expected(&ShotGenerator::new(layout, p)?)) };

    let mut rounds = 0;
    let mut current = score(&tuned)?;
    while rounds < config.max_rounds && current.distance(&target) > 1e-4 {
        rounds += 1;
        // Winner rate is monotone in the intercept: one bisection step per round.
        let intercept = solve_monotone(-12.0, 4.0, |x| {
            let mut p = tuned.clone();
            p.winner.get_mut(shot).intercept = x;
            score(&p).map(|t| t.win - target.win)
        })?;
        tuned.winner.get_mut(shot).intercept = intercept;
        // Error rate is monotone in the unforced base rate (on the logit scale).
        let side = panel.side;
        let l = solve_monotone(-14.0, 0.0, |x| {
            let mut p = tuned.clone();
            set_unforced(&mut p, shot, side, sigmoid(x), ad_ratio);
            score(&p).map(|t| t.error - target.error)
        })?;
        set_unforced(&mut tuned, shot, side, sigmoid(l), ad_ratio);
        let next = score(&tuned)?;
        if (next.distance(&target) - current.distance(&target)).abs() < 1e-9 {
            current = next;
            break;
        }
        current = next;
    }
    if current.distance(&target) > config.tolerance {
        return Err(Error::CalibrationBudget { distance: current.distance(&target) });
    }
    let tuned_gen = ShotGenerator::new(layout, &tuned)?;
    let simulated = pipeline_triple(&tuned_gen, &state, &fit, panel_cfg.epsilon, panel_cfg.shots as usize, config.seed)?;
    Ok(CalibrationReport { params: tuned, expected: current, simulated, rounds })
}

fn set_unforced(p: &mut GeneratorParams, shot: ShotType, side: Side, rate: f64, ad_ratio: f64) {
    let rates = p.unforced.get_mut(shot);
    let (deuce, ad) = match side {
        Side::Deuce => (rate, rate * ad_ratio),
        Side::Ad => (rate / ad_ratio, rate),
    };
    rates.deuce = deuce.min(0.99);
    rates.ad = ad.min(0.99);
}

/// Root of an increasing function on `[lo, hi]` by bisection; clamps to the
/// bracket end when there is no sign change.
fn solve_monotone(lo: f64, hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    if f(a)? >= 0.0 {
        return Ok(a);
    }
    if f(b)? <= 0.0 {
        return Ok(b);
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if f(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_triples_must_sum_to_one_hundred() {
        assert!(OutcomeTriple::from_percent(13.0, 13.4, 73.6).is_ok());
        assert!(matches!(OutcomeTriple::from_percent(13.0, 13.4, 70.0), Err(Error::Targets(_))));
    }

    #[test]
    fn bisection_finds_the_root() {
        let x = solve_monotone(-5.0, 5.0, |x| Ok(x - 1.25)).unwrap();
        assert!((x - 1.25).abs() < 1e-12);
        assert_eq!(solve_monotone(-5.0, 5.0, |_| Ok(1.0)).unwrap(), -5.0);
    }
}

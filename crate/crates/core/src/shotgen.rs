//! Parametric shot generator.
//!
//! Landing locations come from Gaussian mixtures keyed by shot type and the
//! hitter's region, winners from a logistic model of the landing geometry,
//! and unforced errors from an independent draw whose rate rises when the
//! hitter had to run. The receiver moves toward the interception point of
//! the ball (limited by reach); the hitter recovers toward a home position.
//!
//! All geometry is computed in the *striker frame*: the striker stands on
//! A's half (`x < 0`) and hits toward `x > 0`. Player B's shots are produced
//! by rotating the court half a turn, hitting, and rotating back.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ActionKind, CellId, CourtLayout, Half, Point, Side};
use crate::state::{ShotType, State};

const DEFAULT_GENERATOR_JSON: &str = include_str!("../data/generator.v1.json");

/// Where on their half the striker stands when hitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    /// Inside the service line.
    Front,
    /// At or behind the service line.
    Back,
    /// Either.
    Any,
}

/// One value per shot type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerShot<T> {
    pub serve: T,
    #[serde(rename = "return")]
    pub ret: T,
    pub rally: T,
}

impl<T> PerShot<T> {
    pub fn get(&self, shot: ShotType) -> &T {
        match shot {
            ShotType::Serve => &self.serve,
            ShotType::Return => &self.ret,
            ShotType::Rally => &self.rally,
        }
    }

    pub fn get_mut(&mut self, shot: ShotType) -> &mut T {
        match shot {
            ShotType::Serve => &mut self.serve,
            ShotType::Return => &mut self.ret,
            ShotType::Rally => &mut self.rally,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideRates {
    pub deuce: f64,
    pub ad: f64,
}

impl SideRates {
    pub fn get(&self, side: Side) -> f64 {
        match side {
            Side::Deuce => self.deuce,
            Side::Ad => self.ad,
        }
    }

    pub fn get_mut(&mut self, side: Side) -> &mut f64 {
        match side {
            Side::Deuce => &mut self.deuce,
            Side::Ad => &mut self.ad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    /// Mean landing `[x, y]` in the striker frame.
    pub mean: [f64; 2],
    /// Standard deviations along x and y.
    pub sd: [f64; 2],
    /// Correlation between x and y.
    #[serde(default)]
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingMixture {
    pub shot: ShotType,
    pub side: Side,
    pub zone: Zone,
    pub components: Vec<MixtureComponent>,
}

/// Winner logit `intercept + distance·d + depth·x̂ + lateral·ŷ + attack·f̂`, where
/// `d` is the landing's distance from the receiver, `x̂` the landing depth as a
/// fraction of the baseline distance, `ŷ` its closeness to the sideline as a
/// fraction of the singles half-width and `f̂` how far inside the service line
/// the striker stands (0 at or behind it, 1 at the net).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinnerLogit {
    pub intercept: f64,
    pub distance: f64,
    pub depth: f64,
    pub lateral: f64,
    #[serde(default)]
    pub attack: f64,
}

/// Logit increments on the unforced-error rate for a pressured striker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureCoefficients {
    /// Per fraction of the reach that had to be covered.
    pub run: f64,
    /// Per metre by which the interception point was missed.
    pub shortfall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    /// Furthest a receiver can move before the ball arrives (m).
    pub reach_m: PerShot<f64>,
    /// Distance the ball travels past its bounce before it is struck (m).
    pub carry_m: PerShot<f64>,
    /// Fraction of the way the striker recovers toward home after hitting.
    pub recovery: f64,
    /// Isotropic positional noise (m) after moving.
    pub noise_sd_m: f64,
    /// Striker-frame recovery target when hitting from the back.
    pub home_back: Point,
    /// Striker-frame recovery target when hitting from the front.
    pub home_front: Point,
}

/// Normal spread around a nominal start position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spot {
    /// Distance behind the net (m).
    pub depth_m: f64,
    /// Distance from the centre line toward the serving side (m).
    pub lateral_m: f64,
    pub sd_m: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPositions {
    pub server: Spot,
    pub receiver: Spot,
}

/// State used to calibrate the generator against observed outcome rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPanel {
    pub hitter_cell: u8,
    pub receiver_cell: u8,
    pub shot: ShotType,
    pub epsilon: u32,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub format: String,
    pub version: u32,
    pub rng_seed: u64,
    pub mixtures: Vec<LandingMixture>,
    pub winner: PerShot<WinnerLogit>,
    pub unforced: PerShot<SideRates>,
    pub pressure: PressureCoefficients,
    pub movement: Movement,
    pub starts: StartPositions,
    pub calibration: CalibrationPanel,
}

impl GeneratorParams {
    pub fn default_v1() -> Self {
        Self::from_json(DEFAULT_GENERATOR_JSON).expect("bundled generator parameters are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: GeneratorParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generator(msg));
        if self.format != "rallyproc-generator" || self.version != 1 {
            return bad(format!("unsupported format {} v{}", self.format, self.version));
        }
        for m in &self.mixtures {
            let label = format!("{:?}/{:?}/{:?}", m.shot, m.side, m.zone);
            if m.components.is_empty() {
                return bad(format!("mixture {label} has no components"));
            }
            let mut total = 0.0;
            for c in &m.components {
                if !(c.weight >= 0.0) {
                    return bad(format!("mixture {label} has a negative weight"));
                }
                if !(c.sd[0] > 0.0 && c.sd[1] > 0.0 && c.rho.abs() < 1.0) {
                    return bad(format!("mixture {label} has a covariance that is not positive definite"));
                }
                if !(c.mean[0].is_finite() && c.mean[1].is_finite()) {
                    return bad(format!("mixture {label} has a non-finite mean"));
                }
                total += c.weight;
            }
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("mixture {label} weights sum to {total}"));
            }
        }
        for shot in ShotType::ALL {
            for side in [Side::Deuce, Side::Ad] {
                for zone in [Zone::Front, Zone::Back] {
                    if self.mixture(shot, side, zone).is_none() {
                        return bad(format!("no landing mixture for {shot} from the {side:?} {zone:?}"));
                    }
                }
                let rate = self.unforced.get(shot).get(side);
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("unforced error rate {rate} outside [0, 1)"));
                }
            }
            let w = self.winner.get(shot);
            if ![w.intercept, w.distance, w.depth, w.lateral, w.attack].iter().all(|v| v.is_finite()) {
                return bad(format!("non-finite winner coefficient for {shot}"));
            }
            if !(*self.movement.reach_m.get(shot) > 0.0 && *self.movement.carry_m.get(shot) >= 0.0) {
                return bad(format!("movement reach/carry invalid for {shot}"));
            }
        }
        if !(0.0..=1.0).contains(&self.movement.recovery) || !(self.movement.noise_sd_m >= 0.0) {
            return bad("movement recovery must be in [0, 1] and noise nonnegative".into());
        }
        if self.calibration.shots == 0 || self.calibration.epsilon == 0 {
            return bad("calibration panel needs shots and epsilon ≥ 1".into());
        }
        Ok(())
    }

    /// The landing mixture for a striker; an exact zone match wins over `Any`.
    pub fn mixture(&self, shot: ShotType, side: Side, zone: Zone) -> Option<&LandingMixture> {
        let matches = |z: Zone| self.mixtures.iter().find(|m| m.shot == shot && m.side == side && m.zone == z);
        matches(zone).or_else(|| matches(Zone::Any))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Winner,
    Error,
    InPlay,
}

/// How hard the striker had to work to reach the ball.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stretch {
    /// Distance run as a fraction of the reach, in `[0, 1]`.
    pub run_frac: f64,
    /// Metres by which the interception point was missed.
    pub shortfall_m: f64,
}

/// Terminal conditions of Player A's in-play shot: Player B is about to strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxState {
    /// Player B's position (global coordinates, B's half).
    pub striker_pos: Point,
    /// Player A's position (global coordinates, A's half).
    pub other_pos: Point,
    /// Where A's shot bounced.
    pub incoming_landing: Point,
    /// The shot B is about to play.
    pub striker_shot: ShotType,
    pub stretch: Stretch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub hitter_pos: Point,
    pub receiver_pos: Point,
    pub shot_type: ShotType,
    pub landing: Point,
    pub outcome: Outcome,
    pub terminal_state: Option<AuxState>,
}

/// Result of one strike in the striker frame.
#[derive(Debug, Clone, Copy)]
struct Strike {
    landing: Point,
    outcome: Outcome,
    receiver_after: Point,
    hitter_after: Point,
    receiver_stretch: Stretch,
}

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Shot type of the reply to a shot of type `shot`.
pub fn reply_type(shot: ShotType) -> ShotType {
    match shot {
        ShotType::Serve => ShotType::Return,
        _ => ShotType::Rally,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShotGenerator<'a> {
    layout: &'a CourtLayout,
    params: &'a GeneratorParams,
}

impl<'a> ShotGenerator<'a> {
    pub fn new(layout: &'a CourtLayout, params: &'a GeneratorParams) -> Result<Self> {
        params.validate()?;
        Ok(ShotGenerator { layout, params })
    }

    pub fn layout(&self) -> &'a CourtLayout {
        self.layout
    }

    pub fn params(&self) -> &'a GeneratorParams {
        self.params
    }

    /// Uniform positions inside A's and B's cells.
    pub fn sample_positions<R: Rng + ?Sized>(&self, a: CellId, b: CellId, rng: &mut R) -> (Point, Point) {
        let pick = |id: CellId, rng: &mut R| {
            let r = self.layout.cell(id).bounds;
            Point::new(rng.random_range(r.x0..=r.x1), rng.random_range(r.y0..=r.y1))
        };
        let pa = pick(a, rng);
        let pb = pick(b, rng);
        (pa, pb)
    }

    fn zone(&self, striker: Point) -> Zone {
        if striker.x.abs() < self.layout.spec.service_line_m {
            Zone::Front
        } else {
            Zone::Back
        }
    }

    /// Which in-bounds test applies to a striker-frame shot.
    pub fn landing_kind(&self, striker: Point, shot: ShotType) -> ActionKind {
        match shot {
            ShotType::Serve => ActionKind::serve(Side::of(Half::A, striker.y)),
            _ => ActionKind::Rally,
        }
    }

    /// Unconditioned landing for a striker-frame shot.
    pub fn sample_landing<R: Rng + ?Sized>(&self, striker: Point, shot: ShotType, rng: &mut R) -> Point {
        let side = Side::of(Half::A, striker.y);
        let mixture = self.params.mixture(shot, side, self.zone(striker)).expect("validated mixtures");
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = mixture.components.last().expect("nonempty");
        for c in &mixture.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let (z1, z2) = (normal(rng), normal(rng));
        let x = chosen.mean[0] + chosen.sd[0] * z1;
        let y = chosen.mean[1] + chosen.sd[1] * (chosen.rho * z1 + (1.0 - chosen.rho * chosen.rho).sqrt() * z2);
        Point::new(x, y)
    }

    /// Winner probability of an in-bounds striker-frame landing.
    pub fn winner_probability(&self, striker: Point, receiver: Point, landing: Point, shot: ShotType) -> f64 {
        let w = self.params.winner.get(shot);
        let spec = &self.layout.spec;
        let depth = (landing.x / spec.baseline_m).clamp(0.0, 1.0);
        let lateral = (landing.y.abs() / spec.singles_half_width_m).clamp(0.0, 1.0);
        let attack = ((spec.service_line_m - striker.x.abs()) / spec.service_line_m).clamp(0.0, 1.0);
        sigmoid(
            w.intercept
                + w.distance * landing.distance(receiver)
                + w.depth * depth
                + w.lateral * lateral
                + w.attack * attack,
        )
    }

    /// Probability that an in-bounds, non-winning shot is nonetheless missed.
    pub fn unforced_probability(&self, shot: ShotType, side: Side, stretch: Stretch) -> f64 {
        let base = self.params.unforced.get(shot).get(side);
        if base <= 0.0 {
            return 0.0;
        }
        let p = &self.params.pressure;
        sigmoid(logit(base) + p.run * stretch.run_frac + p.shortfall * stretch.shortfall_m)
    }

    fn strike<R: Rng + ?Sized>(
        &self,
        striker: Point,
        receiver: Point,
        shot: ShotType,
        target: Option<Point>,
        stretch: Stretch,
        rng: &mut R,
    ) -> Strike {
        let landing = match target {
            Some(t) => t,
            None => self.sample_landing(striker, shot, rng),
        };
        let mut strike = Strike {
            landing,
            outcome: Outcome::Error,
            receiver_after: receiver,
            hitter_after: striker,
            receiver_stretch: Stretch::default(),
        };
        if !self.layout.spec.in_bounds(landing, self.landing_kind(striker, shot)) {
            return strike;
        }
        if rng.random::<f64>() < self.winner_probability(striker, receiver, landing, shot) {
            strike.outcome = Outcome::Winner;
            return strike;
        }
        let side = Side::of(Half::A, striker.y);
        if rng.random::<f64>() < self.unforced_probability(shot, side, stretch) {
            return strike;
        }
        strike.outcome = Outcome::InPlay;
        self.move_players(&mut strike, striker, receiver, shot, rng);
        strike
    }

    fn move_players<R: Rng + ?Sized>(
        &self,
        strike: &mut Strike,
        striker: Point,
        receiver: Point,
        shot: ShotType,
        rng: &mut R,
    ) {
        let mv = &self.params.movement;
        let landing = strike.landing;
        let (dx, dy) = (landing.x - striker.x, landing.y - striker.y);
        let len = dx.hypot(dy);
        let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (1.0, 0.0) };
        let carry = *mv.carry_m.get(shot);
        let intercept =
            self.layout.clamp_to_half(Point::new(landing.x + carry * ux, landing.y + carry * uy), Half::B);
        let reach = *mv.reach_m.get(shot);
        let need = receiver.distance(intercept);
        let (reached, shortfall) = if need <= reach {
            (intercept, 0.0)
        } else {
            let f = reach / need;
            (Point::new(receiver.x + f * (intercept.x - receiver.x), receiver.y + f * (intercept.y - receiver.y)), need - reach)
        };
        let noisy = Point::new(reached.x + mv.noise_sd_m * normal(rng), reached.y + mv.noise_sd_m * normal(rng));
        strike.receiver_after = self.layout.clamp_to_half(noisy, Half::B);
        strike.receiver_stretch = Stretch { run_frac: need.min(reach) / reach, shortfall_m: shortfall };

        let home = match self.zone(striker) {
            Zone::Front => mv.home_front,
            _ => mv.home_back,
        };
        let recovered = Point::new(
            striker.x + mv.recovery * (home.x - striker.x) + mv.noise_sd_m * normal(rng),
            striker.y + mv.recovery * (home.y - striker.y) + mv.noise_sd_m * normal(rng),
        );
        strike.hitter_after = self.layout.clamp_to_half(recovered, Half::A);
    }

    /// Player A's shot from a transient state, optionally aimed at `target`
    /// (which is then the landing exactly).
    pub fn generate_shot<R: Rng + ?Sized>(&self, state: &State, target: Option<Point>, rng: &mut R) -> Result<ShotRecord> {
        let State::Transient { a, b, shot } = *state else {
            return Err(Error::AbsorbingState);
        };
        let (hitter, receiver) = self.sample_positions(a, b, rng);
        Ok(self.shot_from(hitter, receiver, shot, target, rng))
    }

    /// Player A's shot from explicit positions (A on `x < 0`).
    pub fn shot_from<R: Rng + ?Sized>(
        &self,
        hitter: Point,
        receiver: Point,
        shot: ShotType,
        target: Option<Point>,
        rng: &mut R,
    ) -> ShotRecord {
        let s = self.strike(hitter, receiver, shot, target, Stretch::default(), rng);
        let terminal_state = (s.outcome == Outcome::InPlay).then_some(AuxState {
            striker_pos: s.receiver_after,
            other_pos: s.hitter_after,
            incoming_landing: s.landing,
            striker_shot: reply_type(shot),
            stretch: s.receiver_stretch,
        });
        ShotRecord { hitter_pos: hitter, receiver_pos: receiver, shot_type: shot, landing: s.landing, outcome: s.outcome, terminal_state }
    }

    /// Player B's unconditioned reply. Outcome is from B's perspective:
    /// B's error wins the point for A, B's winner loses it.
    pub fn generate_return<R: Rng + ?Sized>(&self, aux: &AuxState, rng: &mut R) -> (Outcome, Option<State>) {
        let s = self.strike(aux.striker_pos.flipped(), aux.other_pos.flipped(), aux.striker_shot, None, aux.stretch, rng);
        if s.outcome != Outcome::InPlay {
            return (s.outcome, None);
        }
        let a = self.layout.locate_cell(s.receiver_after.flipped()).expect("clamped into A's half");
        let b = self.layout.locate_cell(s.hitter_after.flipped()).expect("clamped into B's half");
        (Outcome::InPlay, Some(State::Transient { a, b, shot: ShotType::Rally }))
    }

    /// Nominal serve positions for a server on `side`, striker frame: the
    /// server on A's half and the receiver diagonally opposite on B's half.
    pub fn serve_positions<R: Rng + ?Sized>(&self, side: Side, rng: &mut R) -> (Point, Point) {
        let st = &self.params.starts;
        // A's deuce court is y < 0; the receiver stands on B's matching side, y > 0.
        // Players never stand across the centre line, hence the reflections.
        let sign = match side {
            Side::Deuce => -1.0,
            Side::Ad => 1.0,
        };
        let server = Point::new(
            -(st.server.depth_m + st.server.sd_m[0] * normal(rng)),
            sign * (st.server.lateral_m + st.server.sd_m[1] * normal(rng)).abs(),
        );
        let receiver = Point::new(
            st.receiver.depth_m + st.receiver.sd_m[0] * normal(rng),
            -sign * (st.receiver.lateral_m + st.receiver.sd_m[1] * normal(rng)).abs(),
        );
        (self.layout.clamp_to_half(server, Half::A), self.layout.clamp_to_half(receiver, Half::B))
    }

    /// Draw the state at which a point starts. With `serving`, A serves;
    /// otherwise B serves and the point starts when A is about to return an
    /// in-play serve.
    pub fn sample_start<R: Rng + ?Sized>(&self, serving: bool, rng: &mut R) -> State {
        loop {
            let side = if rng.random::<bool>() { Side::Deuce } else { Side::Ad };
            let (server, receiver) = self.serve_positions(side, rng);
            if serving {
                let a = self.layout.locate_cell(server).expect("clamped");
                let b = self.layout.locate_cell(receiver).expect("clamped");
                return State::Transient { a, b, shot: ShotType::Serve };
            }
            let s = self.strike(server, receiver, ShotType::Serve, None, Stretch::default(), rng);
            if s.outcome == Outcome::InPlay {
                let a = self.layout.locate_cell(s.receiver_after.flipped()).expect("clamped");
                let b = self.layout.locate_cell(s.hitter_after.flipped()).expect("clamped");
                return State::Transient { a, b, shot: ShotType::Return };
            }
        }
    }
}

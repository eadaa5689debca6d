//! Intention distributions `f_s` and perfect-execution Gaussians `N(μ, Σ)`.
//!
//! An intention distribution is the share of a state's unconditioned,
//! in-bounds landings falling in each aim region. An execution distribution
//! is a bivariate normal fitted to the landings inside one region whose
//! covariance is then rescaled by a scalar so that 90% of its mass lies inside
//! the region. Execution error `ε` multiplies that covariance.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{ActionId, ActionKind, ActionRegion, CourtLayout, Point, Rect};
use crate::rng::{stream, Purpose};
use crate::shotgen::ShotGenerator;
use crate::state::{State, StateCensus};

/// Probability mass each perfect-execution Gaussian keeps inside its region.
pub const TARGET_MASS: f64 = 0.90;
/// Tolerance on [`TARGET_MASS`] accepted from the scale search.
pub const MASS_TOLERANCE: f64 = 0.005;
/// Minimum number of in-region samples for a moment fit.
pub const MIN_FIT_SAMPLES: usize = 10;
/// Default largest execution-error level.
pub const DEFAULT_MAX_EPSILON: u32 = 20;

/// Execution-error level `ε ∈ 1..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Epsilon {
    value: u32,
    max: u32,
}

impl Epsilon {
    pub fn new(value: u32, max: u32) -> Result<Self> {
        if value < 1 || value > max {
            return Err(Error::Epsilon { value, max });
        }
        Ok(Epsilon { value, max })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn max(self) -> u32 {
        self.max
    }
}

/// Symmetric 2×2 matrix stored as `(xx, xy, yy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn scaled(self, c: f64) -> Cov2 {
        Cov2 { xx: c * self.xx, xy: c * self.xy, yy: c * self.yy }
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_positive_definite(self) -> bool {
        self.xx > 0.0 && self.yy > 0.0 && self.det() > 0.0
    }

    pub fn eigenvalues(self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let r = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - r, mean + r)
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(self) -> (f64, f64, f64) {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }
}

/// `N(μ_{s,a}, Σ_{s,a})` for one aim region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionDistribution {
    pub mean: Point,
    pub cov: Cov2,
    pub region: ActionId,
    /// True when the isotropic fallback replaced a moment fit.
    pub fallback: bool,
}

impl ExecutionDistribution {
    /// Covariance multiplied by `ε`; the mean is unchanged.
    pub fn scale(&self, eps: Epsilon) -> ExecutionDistribution {
        ExecutionDistribution { cov: self.cov.scaled(f64::from(eps.value())), ..*self }
    }

    /// Draw a landing from `N(μ, εΣ)`.
    pub fn sample<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> Point {
        let (l11, l21, l22) = self.cov.cholesky();
        let k = eps.sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        Point::new(self.mean.x + k * l11 * z1, self.mean.y + k * (l21 * z1 + l22 * z2))
    }

    /// Mass inside `region` at execution error `eps` (quadrature).
    pub fn mass_in(&self, region: &ActionRegion, eps: f64) -> f64 {
        gaussian_mass(self.mean, self.cov.scaled(eps), &region.rects)
    }
}

/// `f_s` over `A_s`, aligned with the state's action list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionDistribution {
    pub actions: Vec<ActionId>,
    pub probs: Vec<f64>,
}

impl IntentionDistribution {
    pub fn uniform(actions: &[ActionId]) -> Self {
        let p = 1.0 / actions.len() as f64;
        IntentionDistribution { actions: actions.to_vec(), probs: vec![p; actions.len()] }
    }

    pub fn prob(&self, action: ActionId) -> f64 {
        self.actions.iter().position(|&a| a == action).map_or(0.0, |i| self.probs[i])
    }

    /// Draw an action index (into `actions`) by inverse CDF.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Share of in-bounds landings per region of `A_s`; out-of-bounds landings are
/// dropped, and a sample with nothing in bounds yields the uniform distribution.
pub fn fit_intention(
    layout: &CourtLayout,
    actions: &[ActionId],
    kind: ActionKind,
    samples: &[Point],
) -> Result<IntentionDistribution> {
    let first = *actions.first().ok_or_else(|| Error::Census("empty action set".into()))?;
    if samples.is_empty() {
        return Err(Error::Fit { region: first, reason: "no samples".into() });
    }
    let mut counts = vec![0u64; actions.len()];
    let mut inbound = 0u64;
    for &p in samples {
        if let Some(id) = layout.locate_action(p, kind) {
            if let Ok(i) = actions.binary_search(&id) {
                counts[i] += 1;
                inbound += 1;
            }
        }
    }
    if inbound == 0 {
        return Ok(IntentionDistribution::uniform(actions));
    }
    let probs = counts.iter().map(|&c| c as f64 / inbound as f64).collect();
    Ok(IntentionDistribution { actions: actions.to_vec(), probs })
}

/// Moment fit to landings inside `region`, rescaled to 90% in-region mass.
pub fn fit_execution(region: &ActionRegion, samples: &[Point]) -> Result<ExecutionDistribution> {
    let fail = |reason: String| Err(Error::Fit { region: region.id, reason });
    let inside: Vec<Point> = samples.iter().copied().filter(|p| region.contains(*p)).collect();
    if inside.len() < MIN_FIT_SAMPLES {
        return fail(format!("{} samples inside the region, need {MIN_FIT_SAMPLES}", inside.len()));
    }
    let n = inside.len() as f64;
    let mx = inside.iter().map(|p| p.x).sum::<f64>() / n;
    let my = inside.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &inside {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let cov = Cov2 { xx: sxx / (n - 1.0), xy: sxy / (n - 1.0), yy: syy / (n - 1.0) };
    let scale = cov.xx + cov.yy;
    if !(scale > 0.0) || cov.det() <= 1e-10 * scale * scale {
        return fail("landings are collinear".into());
    }
    let mean = clamp_into(region, Point::new(mx, my));
    normalize(ExecutionDistribution { mean, cov, region: region.id, fallback: false }, region)
}

/// Isotropic Gaussian at the region's centroid with `σ = width / 6`,
/// rescaled to 90% in-region mass like a moment fit.
pub fn isotropic_fallback(region: &ActionRegion) -> ExecutionDistribution {
    let b = region.bounds();
    let sigma = b.width() / 6.0;
    let cov = Cov2 { xx: sigma * sigma, xy: 0.0, yy: sigma * sigma };
    let dist = ExecutionDistribution { mean: clamp_into(region, region.centroid()), cov, region: region.id, fallback: true };
    normalize(dist, region).expect("isotropic Gaussians at the centroid always normalize")
}

/// Moment fit with the isotropic fallback substituted on failure.
pub fn fit_execution_or_fallback(region: &ActionRegion, samples: &[Point]) -> ExecutionDistribution {
    fit_execution(region, samples).unwrap_or_else(|_| isotropic_fallback(region))
}

/// Pull a point strictly inside the region (1% of its extent from the edges).
fn clamp_into(region: &ActionRegion, p: Point) -> Point {
    if region.contains(p) && !on_boundary(region, p) {
        return p;
    }
    let mut best = p;
    let mut best_d = f64::INFINITY;
    for r in &region.rects {
        let (mx, my) = (0.01 * r.depth(), 0.01 * r.width());
        let q = Point::new(p.x.clamp(r.x0 + mx, r.x1 - mx), p.y.clamp(r.y0 + my, r.y1 - my));
        let d = q.distance(p);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

fn on_boundary(region: &ActionRegion, p: Point) -> bool {
    region.rects.iter().all(|r| !(p.x > r.x0 && p.x < r.x1 && p.y > r.y0 && p.y < r.y1))
}

/// Multiplier `c` such that `N(μ, cΣ)` has [`TARGET_MASS`] inside the region.
pub fn mass_scale(mean: Point, cov: Cov2, region: &ActionRegion) -> Option<f64> {
    let f = |log_c: f64| gaussian_mass(mean, cov.scaled(log_c.exp()), &region.rects) - TARGET_MASS;
    // Bracket the root in log c; mass falls from 1 to 0 as c grows.
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let mut steps = 0;
    while flo < 0.0 {
        lo -= 2.0;
        flo = f(lo);
        steps += 1;
        if steps > 40 {
            return None;
        }
    }
    while fhi > 0.0 {
        hi += 2.0;
        fhi = f(hi);
        steps += 1;
        if steps > 80 {
            return None;
        }
    }
    if flo == 0.0 {
        return Some(lo.exp());
    }
    // Illinois false position.
    let mut side = 0i8;
    for _ in 0..200 {
        let mid = (lo * fhi - hi * flo) / (fhi - flo);
        let fm = f(mid);
        if fm.abs() < 1e-9 || (hi - lo).abs() < 1e-13 {
            return Some(mid.exp());
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            fhi = fm;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

fn normalize(dist: ExecutionDistribution, region: &ActionRegion) -> Result<ExecutionDistribution> {
    let c = mass_scale(dist.mean, dist.cov, region)
        .ok_or_else(|| Error::Fit { region: region.id, reason: "no covariance scale reaches 90% mass".into() })?;
    let out = ExecutionDistribution { cov: dist.cov.scaled(c), ..dist };
    let mass = out.mass_in(region, 1.0);
    if (mass - TARGET_MASS).abs() > MASS_TOLERANCE {
        return Err(Error::Fit { region: region.id, reason: format!("normalized mass {mass:.4}") });
    }
    Ok(out)
}

// Ten-point Gauss–Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] =
    [0.148_874_338_981_631_2, 0.433_395_394_129_247_2, 0.679_409_568_299_024_4, 0.865_063_366_688_984_5, 0.973_906_528_517_171_7];
const GL_WEIGHTS: [f64; 5] =
    [0.295_524_224_714_752_9, 0.269_266_719_309_996_3, 0.219_086_362_515_982_0, 0.149_451_349_150_580_6, 0.066_671_344_308_688_1];

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite ten-point Gauss–Legendre integral of `f` over `[a, b]` using
/// panels no wider than `panel`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let n = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let mid = a + (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

/// Mass of `N(mean, cov)` inside a union of non-overlapping rectangles.
///
/// Integrates the x-marginal against the conditional normal CDF of y; the
/// outer integral runs in standardized units, truncated at ±9σ.
pub fn gaussian_mass(mean: Point, cov: Cov2, rects: &[Rect]) -> f64 {
    let sx = cov.xx.sqrt();
    let beta = cov.xy / cov.xx;
    let sc = (cov.yy - cov.xy * beta).max(0.0).sqrt();
    let mut total = 0.0;
    for r in rects {
        let z0 = ((r.x0 - mean.x) / sx).max(-9.0);
        let z1 = ((r.x1 - mean.x) / sx).min(9.0);
        total += gauss_legendre(
            |z| {
                let cm = mean.y + beta * sx * z;
                norm_pdf(z) * (norm_cdf((r.y1 - cm) / sc) - norm_cdf((r.y0 - cm) / sc))
            },
            z0,
            z1,
            1.0,
        );
    }
    total.clamp(0.0, 1.0)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Independent quasi-Monte-Carlo estimate of [`gaussian_mass`]: the density is
/// averaged over a Halton point set covering each rectangle clipped to ±9σ.
pub fn gaussian_mass_qmc(mean: Point, cov: Cov2, rects: &[Rect], points: usize) -> f64 {
    let det = cov.det();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let (ixx, ixy, iyy) = (cov.yy / det, -cov.xy / det, cov.xx / det);
    let (sx, sy) = (cov.xx.sqrt(), cov.yy.sqrt());
    let mut total = 0.0;
    for r in rects {
        let x0 = r.x0.max(mean.x - 9.0 * sx);
        let x1 = r.x1.min(mean.x + 9.0 * sx);
        let y0 = r.y0.max(mean.y - 9.0 * sy);
        let y1 = r.y1.min(mean.y + 9.0 * sy);
        if !(x1 > x0 && y1 > y0) {
            continue;
        }
        let area = (x1 - x0) * (y1 - y0);
        let mut sum = 0.0;
        for i in 1..=points as u64 {
            let x = x0 + (x1 - x0) * radical_inverse(i, 2) - mean.x;
            let y = y0 + (y1 - y0) * radical_inverse(i, 3) - mean.y;
            sum += (-0.5 * (ixx * x * x + 2.0 * ixy * x * y + iyy * y * y)).exp();
        }
        total += norm * area * sum / points as f64;
    }
    total
}

/// Intention and execution distributions for one transient state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFit {
    pub intention: IntentionDistribution,
    /// Aligned with `intention.actions`.
    pub execution: Vec<ExecutionDistribution>,
}

impl StateFit {
    pub fn execution_for(&self, action: ActionId) -> Option<&ExecutionDistribution> {
        self.intention.actions.iter().position(|&a| a == action).map(|i| &self.execution[i])
    }
}

/// Fit one state from `n` unconditioned landings.
pub fn fit_state<R: Rng + ?Sized>(
    generator: &ShotGenerator<'_>,
    state: &State,
    n: usize,
    rng: &mut R,
) -> Result<StateFit> {
    let State::Transient { a, b, shot } = *state else {
        return Err(Error::AbsorbingState);
    };
    let layout = generator.layout();
    let kind = state.action_kind(layout).expect("transient");
    let actions = layout.action_set(state);
    let samples: Vec<Point> = (0..n)
        .map(|_| {
            let (hitter, _) = generator.sample_positions(a, b, rng);
            generator.sample_landing(hitter, shot, rng)
        })
        .collect();
    let intention = fit_intention(layout, &actions, kind, &samples)?;
    let execution = actions.iter().map(|&id| fit_execution_or_fallback(layout.action(id), &samples)).collect();
    Ok(StateFit { intention, execution })
}

/// Fitted distributions for every transient state of a census.
#[derive(Debug, Clone, PartialEq)]
pub struct Distributions {
    pub census_hash: [u8; 32],
    pub samples_per_state: u32,
    pub seed: u64,
    pub states: Vec<StateFit>,
}

const DIST_MAGIC: &[u8; 8] = b"RPDIST01";

impl Distributions {
    /// Fit all transient states in parallel; state `i` uses its own stream.
    pub fn fit(generator: &ShotGenerator<'_>, census: &StateCensus, n: usize, seed: u64) -> Result<Self> {
        let states = census
            .transient_indices()
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, Purpose::Fit, 0, i as u64);
                fit_state(generator, &census.state(i), n, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Distributions { census_hash: census.hash(), samples_per_state: n as u32, seed, states })
    }

    pub fn state(&self, index: usize) -> Option<&StateFit> {
        self.states.get(index)
    }

    /// Binary layout (little endian): magic `RPDIST01`, census hash (32 bytes),
    /// samples per state (u32), seed (u64), state count (u32); then per state an
    /// action count (u32) followed by one 58-byte record per action:
    /// action id (u8), fallback flag (u8), f_s(a), μx, μy, Σxx, Σxy, Σyy (f64).
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(DIST_MAGIC)?;
        w.write_all(&self.census_hash)?;
        w.write_u32::<LittleEndian>(self.samples_per_state)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u32::<LittleEndian>(self.states.len() as u32)?;
        for fit in &self.states {
            w.write_u32::<LittleEndian>(fit.intention.actions.len() as u32)?;
            for (k, e) in fit.execution.iter().enumerate() {
                w.write_u8(fit.intention.actions[k].0)?;
                w.write_u8(u8::from(e.fallback))?;
                for v in [fit.intention.probs[k], e.mean.x, e.mean.y, e.cov.xx, e.cov.xy, e.cov.yy] {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DIST_MAGIC {
            return Err(Error::Artifact("not a distributions file".into()));
        }
        let mut census_hash = [0u8; 32];
        r.read_exact(&mut census_hash)?;
        let samples_per_state = r.read_u32::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            let k = r.read_u32::<LittleEndian>()? as usize;
            let mut actions = Vec::with_capacity(k);
            let mut probs = Vec::with_capacity(k);
            let mut execution = Vec::with_capacity(k);
            for _ in 0..k {
                let id = ActionId(r.read_u8()?);
                let fallback = r.read_u8()? != 0;
                let mut v = [0.0; 6];
                for x in v.iter_mut() {
                    *x = r.read_f64::<LittleEndian>()?;
                }
                actions.push(id);
                probs.push(v[0]);
                execution.push(ExecutionDistribution {
                    mean: Point::new(v[1], v[2]),
                    cov: Cov2 { xx: v[3], xy: v[4], yy: v[5] },
                    region: id,
                    fallback,
                });
            }
            states.push(StateFit { intention: IntentionDistribution { actions, probs }, execution });
        }
        Ok(Distributions { census_hash, samples_per_state, seed, states })
    }

    /// Check that the artifact belongs to `census`.
    pub fn check_census(&self, census: &StateCensus) -> Result<()> {
        if self.census_hash != census.hash() || self.states.len() != census.n_transient() {
            return Err(Error::Artifact("distributions were fitted for a different state census".into()));
        }
        Ok(())
    }
}

/// Optional per-ε intention refit: draw `⌊n·f_s(a)⌋` landings from each
/// `N(μ_{s,a}, εΣ_{s,a})` and recompute in-bounds proportions.
pub fn refit_intention<R: Rng + ?Sized>(
    layout: &CourtLayout,
    kind: ActionKind,
    fit: &StateFit,
    eps: Epsilon,
    n: usize,
    rng: &mut R,
) -> Result<IntentionDistribution> {
    let mut samples = Vec::with_capacity(n);
    for (k, e) in fit.execution.iter().enumerate() {
        let draws = (n as f64 * fit.intention.probs[k]).floor() as usize;
        for _ in 0..draws {
            samples.push(e.sample(f64::from(eps.value()), rng));
        }
    }
    if samples.is_empty() {
        return Ok(fit.intention.clone());
    }
    fit_intention(layout, &fit.intention.actions, kind, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ActionKind;
    use crate::shotgen::GeneratorParams;
    use crate::state::ShotType;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn region(layout: &CourtLayout, name: &str) -> ActionRegion {
        layout.action_by_name(name).unwrap().clone()
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_19() {
        let got = gauss_legendre(|x| x.powi(19) + x.powi(18), -1.0, 1.0, 2.0);
        assert_relative_eq!(got, 2.0 / 19.0, epsilon = 1e-14);
        assert_relative_eq!(GL_WEIGHTS.iter().sum::<f64>() * 2.0, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn mass_of_independent_normal_factorizes() {
        let rect = Rect { x0: -1.0, x1: 2.0, y0: -0.5, y1: 1.5 };
        let got = gaussian_mass(Point::new(0.0, 0.0), Cov2 { xx: 1.0, xy: 0.0, yy: 4.0 }, &[rect]);
        let want = (norm_cdf(2.0) - norm_cdf(-1.0)) * (norm_cdf(0.75) - norm_cdf(-0.25));
        assert_relative_eq!(got, want, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_and_qmc_agree_for_correlated_normals() {
        let rect = Rect { x0: 4.2, x1: 5.6, y0: 0.0, y1: 1.4 };
        let cov = Cov2 { xx: 0.16, xy: 0.05, yy: 0.09 };
        let mean = Point::new(4.8, 0.6);
        let quad = gaussian_mass(mean, cov, &[rect]);
        let qmc = gaussian_mass_qmc(mean, cov, &[rect], 200_000);
        assert!((quad - qmc).abs() < 1e-3, "{quad} vs {qmc}");
    }

    #[test]
    fn epsilon_bounds() {
        assert!(Epsilon::new(1, 20).is_ok());
        assert!(Epsilon::new(20, 20).is_ok());
        assert!(matches!(Epsilon::new(0, 20), Err(Error::Epsilon { .. })));
        assert!(Epsilon::new(21, 20).is_err());
    }

    #[test]
    fn intention_degenerate_and_counting() {
        let layout = CourtLayout::default_v1();
        let actions: Vec<ActionId> = layout.actions_of_kind(ActionKind::Rally).map(|a| a.id).collect();
        let md2 = region(&layout, "MD2");
        let f = fit_intention(&layout, &actions, ActionKind::Rally, &vec![md2.centroid(); 150]).unwrap();
        assert_eq!(f.prob(md2.id), 1.0);

        let bd1 = region(&layout, "BD1");
        let ba1 = region(&layout, "BA1");
        let mut samples = vec![bd1.centroid(); 60];
        samples.extend(vec![ba1.centroid(); 40]);
        samples.extend(vec![Point::new(13.0, 0.0); 10]);
        let f = fit_intention(&layout, &actions, ActionKind::Rally, &samples).unwrap();
        assert_relative_eq!(f.prob(bd1.id), 0.6, epsilon = 1e-15);
        assert_relative_eq!(f.prob(ba1.id), 0.4, epsilon = 1e-15);
        assert_relative_eq!(f.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        assert!(fit_intention(&layout, &actions, ActionKind::Rally, &[]).is_err());
        let all_out = fit_intention(&layout, &actions, ActionKind::Rally, &[Point::new(20.0, 0.0); 100]).unwrap();
        assert_eq!(all_out, IntentionDistribution::uniform(&actions));
    }

    #[test]
    fn uniform_landings_give_area_proportions() {
        let layout = CourtLayout::default_v1();
        let actions: Vec<ActionId> = layout.actions_of_kind(ActionKind::Rally).map(|a| a.id).collect();
        let half = layout.spec.singles_half();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let samples: Vec<Point> =
            (0..n).map(|_| Point::new(rng.random_range(half.x0..half.x1), rng.random_range(half.y0..half.y1))).collect();
        let f = fit_intention(&layout, &actions, ActionKind::Rally, &samples).unwrap();
        for (k, &id) in actions.iter().enumerate() {
            let p = layout.action(id).area() / half.area();
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f.probs[k] - p).abs() < 3.0 * sd + 1e-12, "{}: {} vs {}", layout.action(id).name, f.probs[k], p);
        }
    }

    #[test]
    fn truncated_standard_normal_needs_analytic_scale() {
        // Square of half-width h: the truncated per-axis variance is
        // v = 1 - 2hφ(h)/(2Φ(h)-1); 90% mass needs σ = h / z with
        // 2Φ(z) - 1 = sqrt(0.9). Hence c = σ² / v.
        let h = 1.8;
        let v = 1.0 - 2.0 * h * norm_pdf(h) / (2.0 * norm_cdf(h) - 1.0);
        let per_axis = TARGET_MASS.sqrt();
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * norm_cdf(mid) - 1.0 < per_axis {
                lo = mid
            } else {
                hi = mid
            }
        }
        let c_oracle = (h / lo).powi(2) / v;

        let rect = Rect { x0: -h, x1: h, y0: -h, y1: h };
        let c = mass_scale(Point::new(0.0, 0.0), Cov2 { xx: v, xy: 0.0, yy: v }, &ActionRegion {
            id: ActionId(0),
            name: "T".into(),
            kind: ActionKind::Rally,
            rects: vec![rect],
            conservative: false,
        })
        .unwrap();
        assert_relative_eq!(c, c_oracle, epsilon = 1e-6);
        assert!(c > 1.0 && c < 1.25);

        // The same from samples: a large truncated sample lands near the oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut samples = Vec::new();
        while samples.len() < 400_000 {
            let (x, y): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            if x.abs() <= h && y.abs() <= h {
                samples.push(Point::new(x, y));
            }
        }
        let reg = ActionRegion { id: ActionId(0), name: "T".into(), kind: ActionKind::Rally, rects: vec![rect], conservative: false };
        let fit = fit_execution(&reg, &samples).unwrap();
        assert!((fit.cov.xx / v - c_oracle).abs() < 0.02);
        assert_relative_eq!(fit.mass_in(&reg, 1.0), TARGET_MASS, epsilon = 1e-6);
    }

    #[test]
    fn collinear_samples_fail_and_fallback_normalizes() {
        let layout = CourtLayout::default_v1();
        let md2 = region(&layout, "MD2");
        let line: Vec<Point> = (0..50).map(|i| Point::new(4.3 + 0.02 * f64::from(i), 0.7)).collect();
        assert!(matches!(fit_execution(&md2, &line), Err(Error::Fit { .. })));
        assert!(matches!(fit_execution(&md2, &line[..5]), Err(Error::Fit { .. })));
        let fb = fit_execution_or_fallback(&md2, &line);
        assert!(fb.fallback);
        assert_relative_eq!(fb.mass_in(&md2, 1.0), TARGET_MASS, epsilon = 1e-6);
        assert!(md2.contains(fb.mean));
    }

    #[test]
    fn scaling_multiplies_eigenvalues() {
        let e = ExecutionDistribution {
            mean: Point::new(5.0, 1.0),
            cov: Cov2 { xx: 0.2, xy: 0.05, yy: 0.1 },
            region: ActionId(10),
            fallback: false,
        };
        assert_eq!(e.scale(Epsilon::new(1, 20).unwrap()), e);
        let s = e.scale(Epsilon::new(4, 20).unwrap());
        let (a0, a1) = e.cov.eigenvalues();
        let (b0, b1) = s.cov.eigenvalues();
        assert_relative_eq!(b0, 4.0 * a0, max_relative = 1e-12);
        assert_relative_eq!(b1, 4.0 * a1, max_relative = 1e-12);
        assert_eq!(s.mean, e.mean);
    }

    #[test]
    fn fitted_state_has_target_mass_and_decreasing_mass_in_eps() {
        let layout = CourtLayout::default_v1();
        let params = GeneratorParams::default_v1();
        let g = ShotGenerator::new(&layout, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fit = fit_state(&g, &State::transient(37, 84, ShotType::Rally), 1000, &mut rng).unwrap();
        assert_relative_eq!(fit.intention.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for e in &fit.execution {
            let reg = layout.action(e.region);
            let masses: Vec<f64> = [1.0, 4.0, 13.0, 20.0].iter().map(|&k| e.mass_in(reg, k)).collect();
            assert!((masses[0] - TARGET_MASS).abs() <= MASS_TOLERANCE);
            assert!(masses.windows(2).all(|w| w[1] < w[0]), "{}: {masses:?}", reg.name);
        }
    }

    #[test]
    fn refitted_gaussian_recovers_moments() {
        let e = ExecutionDistribution {
            mean: Point::new(9.0, -2.0),
            cov: Cov2 { xx: 0.09, xy: -0.02, yy: 0.25 },
            region: ActionId(0),
            fallback: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let pts: Vec<Point> = (0..n).map(|_| e.sample(1.0, &mut rng)).collect();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n as f64;
        let cxx = pts.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cxy = pts.iter().map(|p| (p.x - mx) * (p.y - my)).sum::<f64>() / (n - 1) as f64;
        let cyy = pts.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mx - e.mean.x).abs() < 0.02 && (my - e.mean.y).abs() < 0.02);
        assert!((cxx / e.cov.xx - 1.0).abs() < 0.02);
        assert!((cyy / e.cov.yy - 1.0).abs() < 0.02);
        // Off-diagonal error measured relative to the geometric mean of the variances.
        assert!((cxy - e.cov.xy).abs() / (e.cov.xx * e.cov.yy).sqrt() < 0.02);
    }

    #[test]
    fn distributions_roundtrip_through_binary() {
        let layout = CourtLayout::default_v1();
        let params = GeneratorParams::default_v1();
        let g = ShotGenerator::new(&layout, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states = vec![
            fit_state(&g, &State::transient(39, 83, ShotType::Serve), 300, &mut rng).unwrap(),
            fit_state(&g, &State::transient(37, 84, ShotType::Rally), 300, &mut rng).unwrap(),
        ];
        let d = Distributions { census_hash: [7; 32], samples_per_state: 300, seed: 9, states };
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(Distributions::read_from(buf.as_slice()).unwrap(), d);
    }
}

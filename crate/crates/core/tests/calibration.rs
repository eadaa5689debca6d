//! Generator calibration against observed outcome rates of an average player.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rallyproc::calibration::{
    calibrate, panel_state, pipeline_triple, unconditioned_triple, CalibrationConfig, OutcomeTriple,
};
use rallyproc::distfit::fit_state;
use rallyproc::error::Error;
use rallyproc::geometry::CourtLayout;
use rallyproc::shotgen::{GeneratorParams, ShotGenerator};

fn observed() -> OutcomeTriple {
    OutcomeTriple::from_percent(13.0, 13.4, 73.6).unwrap()
}

#[test]
fn shipped_parameters_are_a_fixed_point() {
    let layout = CourtLayout::default_v1();
    let params = GeneratorParams::default_v1();
    let report = calibrate(&layout, &params, &CalibrationConfig::default()).unwrap();
    assert!(report.expected.distance(&observed()) < 0.01, "{:?}", report.expected);
    assert!(report.simulated.distance(&observed()) < 0.01, "{:?}", report.simulated);
    let shot = params.calibration.shot;
    let (before, after) = (params.winner.get(shot).intercept, report.params.winner.get(shot).intercept);
    assert!((before - after).abs() < 0.15, "intercept moved {before} → {after}");
}

#[test]
fn calibration_recovers_from_a_perturbed_start() {
    let layout = CourtLayout::default_v1();
    let shipped = GeneratorParams::default_v1();
    let shot = shipped.calibration.shot;
    let mut params = shipped.clone();
    params.winner.get_mut(shot).intercept -= 1.5;
    let rates = params.unforced.get_mut(shot);
    rates.deuce *= 3.0;
    rates.ad *= 3.0;
    let report = calibrate(&layout, &params, &CalibrationConfig::default()).unwrap();
    assert!(report.simulated.distance(&observed()) < 0.03, "{:?}", report.simulated);
    // The ad/deuce asymmetry of unforced errors is preserved.
    let (old, new) = (shipped.unforced.get(shot), report.params.unforced.get(shot));
    assert!((old.ad / old.deuce - new.ad / new.deuce).abs() < 1e-9);
}

#[test]
fn impossible_targets_are_rejected() {
    let layout = CourtLayout::default_v1();
    let params = GeneratorParams::default_v1();
    let config = CalibrationConfig {
        target: OutcomeTriple { win: 1.0, error: 1.0, in_play: -1.0 },
        ..CalibrationConfig::default()
    };
    assert!(matches!(calibrate(&layout, &params, &config), Err(Error::Targets(_))));
}

#[test]
fn average_error_pipeline_shots_match_observed_rates() {
    let layout = CourtLayout::default_v1();
    let params = GeneratorParams::default_v1();
    let generator = ShotGenerator::new(&layout, &params).unwrap();
    let state = panel_state(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fit = fit_state(&generator, &state, 1000, &mut rng).unwrap();
    let t = pipeline_triple(&generator, &state, &fit, params.calibration.epsilon, 100_000, 11).unwrap();
    assert!(t.distance(&observed()) < 0.03, "{t:?}");
    assert!((t.win + t.error + t.in_play - 1.0).abs() < 1e-12);

    // Perfect execution rarely misses the court.
    let perfect = pipeline_triple(&generator, &state, &fit, 1, 100_000, 11).unwrap();
    assert!(perfect.error < t.error);

    let raw = unconditioned_triple(&generator, &state, 20_000, 3).unwrap();
    assert!((raw.win + raw.error + raw.in_play - 1.0).abs() < 1e-12);
}

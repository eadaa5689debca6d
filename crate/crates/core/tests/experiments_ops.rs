//! Pure experiment operations: play-style reweighting, average-ε selection,
//! starting-state aggregation and table output.

use approx::assert_relative_eq;

use rallyproc::calibration::OutcomeTriple;
use rallyproc::distfit::IntentionDistribution;
use rallyproc::error::Error;
use rallyproc::experiments::{
    epsilon_outcome_table, playstyle_transform, select_average_epsilon, starting_state_value, PlaystyleMode,
    PlaystyleTransform, StartWeights, Table,
};
use rallyproc::geometry::CourtLayout;
use rallyproc::state::ShotType;

fn intention(layout: &CourtLayout, named: &[(&str, f64)]) -> IntentionDistribution {
    IntentionDistribution {
        actions: named.iter().map(|(n, _)| layout.action_by_name(n).unwrap().id).collect(),
        probs: named.iter().map(|x| x.1).collect(),
    }
}

#[test]
fn conservative_shift_reweights_and_renormalizes() {
    let layout = CourtLayout::default_v1();
    let f = intention(&layout, &[("MD2", 0.5), ("BD1", 0.5)]);
    let g = playstyle_transform(&layout, &f, PlaystyleTransform::new(PlaystyleMode::Conservative));
    assert_relative_eq!(g.probs[0], 0.6, epsilon = 1e-12);
    assert_relative_eq!(g.probs[1], 0.4, epsilon = 1e-12);
    let h = playstyle_transform(&layout, &f, PlaystyleTransform::new(PlaystyleMode::Aggressive));
    assert_relative_eq!(h.probs[0], 0.4, epsilon = 1e-12);
    assert_relative_eq!(h.probs[1], 0.6, epsilon = 1e-12);
    assert_eq!(playstyle_transform(&layout, &f, PlaystyleTransform::new(PlaystyleMode::Average)), f);
}

#[test]
fn uniform_conservative_support_is_unchanged() {
    let layout = CourtLayout::default_v1();
    let f = intention(&layout, &[("MD1", 0.2), ("MA3", 0.3), ("MD4", 0.5)]);
    let g = playstyle_transform(&layout, &f, PlaystyleTransform::new(PlaystyleMode::Conservative));
    for (a, b) in f.probs.iter().zip(&g.probs) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

/// Error-rate column observed for ε = 1..=20 on real match data, with the
/// win column alongside; the empirical average player sits at 13.4% errors.
const OBSERVED: [(f64, f64); 20] = [
    (14.4, 0.4),
    (14.4, 1.8),
    (14.0, 3.2),
    (14.1, 4.8),
    (13.9, 6.1),
    (13.6, 7.3),
    (13.6, 8.2),
    (13.4, 9.0),
    (13.6, 10.1),
    (13.2, 10.8),
    (13.3, 11.6),
    (13.2, 12.3),
    (13.0, 13.0),
    (13.0, 13.6),
    (12.9, 14.2),
    (13.0, 15.0),
    (12.9, 15.4),
    (13.0, 16.1),
    (12.8, 16.8),
    (12.5, 17.1),
];

fn observed_table() -> Vec<(u32, OutcomeTriple)> {
    OBSERVED
        .iter()
        .enumerate()
        .map(|(i, &(w, e))| (i as u32 + 1, OutcomeTriple::from_percent(w, e, 100.0 - w - e).unwrap()))
        .collect()
}

#[test]
fn average_epsilon_does_not_go_over_the_empirical_error() {
    let empirical = OutcomeTriple::from_percent(13.0, 13.4, 73.6).unwrap();
    assert_eq!(select_average_epsilon(&observed_table(), &empirical), 13);
}

#[test]
fn average_epsilon_extremes() {
    let table = observed_table();
    let low = OutcomeTriple { win: 0.14, error: 0.003, in_play: 0.857 };
    assert_eq!(select_average_epsilon(&table, &low), 1);
    let high = OutcomeTriple { win: 0.0, error: 1.0, in_play: 0.0 };
    assert_eq!(select_average_epsilon(&table, &high), 20);
}

#[test]
fn error_plateau_resolves_to_smallest_epsilon() {
    let t = |e: f64| OutcomeTriple { win: 0.1, error: e, in_play: 0.9 - e };
    let table = vec![(1, t(0.05)), (2, t(0.10)), (3, t(0.10)), (4, t(0.20))];
    assert_eq!(select_average_epsilon(&table, &t(0.12)), 2);
}

#[test]
fn outcome_table_marks_selected_epsilon() {
    let empirical = OutcomeTriple::from_percent(13.0, 13.4, 73.6).unwrap();
    let table = epsilon_outcome_table(&observed_table(), &empirical);
    assert_eq!(table.at("selected", "is-average", 13), Some(1.0));
    assert_eq!(table.get("selected", "is-average").unwrap().iter().sum::<f64>(), 1.0);
    assert_relative_eq!(table.at("pipeline", "error", 20).unwrap(), 0.171, epsilon = 1e-12);
}

#[test]
fn invalid_percentages_are_rejected() {
    assert!(matches!(OutcomeTriple::from_percent(1.0, 1.0, -1.0), Err(Error::Targets(_))));
    assert!(matches!(OutcomeTriple::from_percent(50.0, 50.0, 50.0), Err(Error::Targets(_))));
}

#[test]
fn starting_state_value_weights_serve_and_return() {
    let layout = CourtLayout::default_v1();
    let census = layout.enumerate_states(&layout.pruning.clone()).unwrap();
    let serve: Vec<usize> = census.indices_of_shot(ShotType::Serve).take(2).collect();
    let ret: Vec<usize> = census.indices_of_shot(ShotType::Return).take(1).collect();
    let mut values = vec![0.0; census.len()];
    values[serve[0]] = 0.8;
    values[serve[1]] = 0.4;
    values[ret[0]] = 0.3;
    let weights = StartWeights { serve: vec![(serve[0], 0.25), (serve[1], 0.75)], ret: vec![(ret[0], 1.0)] };
    let v = starting_state_value(&census, &values, &weights).unwrap();
    assert_relative_eq!(v.serve_value, 0.5, epsilon = 1e-12);
    assert_relative_eq!(v.return_value, 0.3, epsilon = 1e-12);
    assert_relative_eq!(v.combined, 0.4, epsilon = 1e-12);

    let ones = vec![1.0; census.len()];
    let v = starting_state_value(&census, &ones, &weights).unwrap();
    assert_relative_eq!(v.combined, 1.0, epsilon = 1e-12);
}

#[test]
fn starting_state_value_rejects_bad_weights() {
    let layout = CourtLayout::default_v1();
    let census = layout.enumerate_states(&layout.pruning.clone()).unwrap();
    let serve = census.indices_of_shot(ShotType::Serve).next().unwrap();
    let ret = census.indices_of_shot(ShotType::Return).next().unwrap();
    let rally = census.indices_of_shot(ShotType::Rally).next().unwrap();
    let values = vec![0.5; census.len()];

    let short = StartWeights { serve: vec![(serve, 0.5)], ret: vec![(ret, 1.0)] };
    assert!(matches!(starting_state_value(&census, &values, &short), Err(Error::Artifact(_))));
    let wrong_family = StartWeights { serve: vec![(rally, 1.0)], ret: vec![(ret, 1.0)] };
    assert!(matches!(starting_state_value(&census, &values, &wrong_family), Err(Error::MissingWeight(s)) if s == rally));
    let missing = StartWeights { serve: vec![(serve, 1.0)], ret: vec![] };
    assert!(matches!(starting_state_value(&census, &values, &missing), Err(Error::MissingWeight(_))));
}

#[test]
fn table_csv_has_one_column_per_epsilon() {
    let eps = [1, 4, 13];
    let mut t = Table::new(&eps);
    t.push("mrp", "serve", vec![0.1, 1.0 / 3.0, 0.7]);
    t.push("mdp", "serve", vec![0.2, 0.5, 0.9]);
    let csv = t.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,measure,eps_1,eps_4,eps_13");
    assert_eq!(lines.len(), 3);
    for line in &lines {
        assert_eq!(line.split(',').count(), 2 + eps.len());
    }
    let third: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(third, 1.0 / 3.0);
    assert_eq!(t.at("mdp", "serve", 13), Some(0.9));
    assert_eq!(t.at("mdp", "serve", 2), None);
}

//! Point states `(σ_A, σ_B, ω)` plus the absorbing outcomes, and the census of
//! states that survive pruning.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{ActionId, ActionKind, CellId, CourtLayout, Half, PruningRules, Side, CELLS_PER_HALF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotType {
    Serve,
    Return,
    Rally,
}

impl ShotType {
    pub const ALL: [ShotType; 3] = [ShotType::Serve, ShotType::Return, ShotType::Rally];

    pub fn as_str(self) -> &'static str {
        match self {
            ShotType::Serve => "serve",
            ShotType::Return => "return",
            ShotType::Rally => "rally",
        }
    }

    pub fn parse(s: &str) -> Option<ShotType> {
        ShotType::ALL.into_iter().find(|t| t.as_str() == s)
    }

    fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ShotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    /// Player A is about to strike; `a` is on A's half, `b` on B's half.
    Transient { a: CellId, b: CellId, shot: ShotType },
    /// Point won by A.
    Won,
    /// Point lost by A.
    Lost,
}

impl State {
    pub fn transient(a: u8, b: u8, shot: ShotType) -> State {
        State::Transient { a: CellId(a), b: CellId(b), shot }
    }

    pub fn is_absorbing(&self) -> bool {
        !matches!(self, State::Transient { .. })
    }

    pub fn shot(&self) -> Option<ShotType> {
        match self {
            State::Transient { shot, .. } => Some(*shot),
            _ => None,
        }
    }

    /// Side of the court Player A strikes from.
    pub fn side(&self, layout: &CourtLayout) -> Option<Side> {
        match self {
            State::Transient { a, .. } => Some(layout.cell(*a).side()),
            _ => None,
        }
    }

    pub fn class(&self, layout: &CourtLayout) -> Option<StateClass> {
        match self {
            State::Transient { shot, .. } => Some(StateClass { shot: *shot, side: self.side(layout)? }),
            _ => None,
        }
    }

    /// Which family of aim regions A may choose from.
    pub fn action_kind(&self, layout: &CourtLayout) -> Option<ActionKind> {
        match self {
            State::Transient { shot: ShotType::Serve, .. } => Some(ActionKind::serve(self.side(layout)?)),
            State::Transient { .. } => Some(ActionKind::Rally),
            _ => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Transient { a, b, shot } => write!(f, "({}, {}, {})", a.0, b.0, shot),
            State::Won => f.write_str("W"),
            State::Lost => f.write_str("L"),
        }
    }
}

/// Shot type and A's side; ad/deuce rallies are classified by where A hits from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateClass {
    pub shot: ShotType,
    pub side: Side,
}

impl StateClass {
    pub fn name(&self) -> String {
        let side = match self.side {
            Side::Ad => "ad",
            Side::Deuce => "deuce",
        };
        format!("{side}-{}", self.shot)
    }
}

const NO_STATE: u32 = u32::MAX;

/// The enumerated state space. Transient states come first, ordered by
/// `(shot, σ_A, σ_B)`, followed by `W` and `L`.
#[derive(Debug, Clone)]
pub struct StateCensus {
    states: Vec<State>,
    classes: Vec<Option<StateClass>>,
    kinds: Vec<ActionKind>,
    action_sets: [Vec<ActionId>; 3],
    row_offsets: Vec<usize>,
    lookup: Vec<u32>,
    snapped: Vec<u32>,
    n_transient: usize,
    hash: [u8; 32],
}

fn lookup_slot(a: CellId, b: CellId, shot: ShotType) -> usize {
    (shot.ordinal() * CELLS_PER_HALF + a.local()) * CELLS_PER_HALF + b.local()
}

fn kind_slot(kind: ActionKind) -> usize {
    match kind {
        ActionKind::ServeDeuce => 0,
        ActionKind::ServeAd => 1,
        ActionKind::Rally => 2,
    }
}

impl StateCensus {
    pub(crate) fn build(layout: &CourtLayout, pruning: &PruningRules) -> Result<Self> {
        let mut states = Vec::new();
        for shot in ShotType::ALL {
            for a in 1..=CELLS_PER_HALF as u8 {
                for b in (CELLS_PER_HALF as u8 + 1)..=(2 * CELLS_PER_HALF) as u8 {
                    if pruning.keeps(layout, CellId(a), CellId(b), shot) {
                        states.push(State::transient(a, b, shot));
                    }
                }
            }
        }
        if !states.iter().any(|s| s.shot() == Some(ShotType::Serve)) {
            return Err(Error::NoServeStates);
        }
        let n_transient = states.len();
        states.push(State::Won);
        states.push(State::Lost);

        let mut lookup = vec![NO_STATE; 3 * CELLS_PER_HALF * CELLS_PER_HALF];
        for (i, s) in states.iter().enumerate() {
            if let State::Transient { a, b, shot } = *s {
                lookup[lookup_slot(a, b, shot)] = i as u32;
            }
        }

        // Pruned combinations reached by stitching snap to the nearest surviving
        // state of the same shot type (sum of centre distances, lowest index on ties).
        let mut snapped = lookup.clone();
        for shot in ShotType::ALL {
            let candidates: Vec<(usize, CellId, CellId)> = states[..n_transient]
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match *s {
                    State::Transient { a, b, shot: t } if t == shot => Some((i, a, b)),
                    _ => None,
                })
                .collect();
            for a in 1..=CELLS_PER_HALF as u8 {
                for b in (CELLS_PER_HALF as u8 + 1)..=(2 * CELLS_PER_HALF) as u8 {
                    let slot = lookup_slot(CellId(a), CellId(b), shot);
                    if snapped[slot] != NO_STATE {
                        continue;
                    }
                    let (pa, pb) = (layout.cell(CellId(a)).center(), layout.cell(CellId(b)).center());
                    let best = candidates
                        .iter()
                        .map(|&(i, ca, cb)| {
                            let d = pa.distance(layout.cell(ca).center()) + pb.distance(layout.cell(cb).center());
                            (d, i)
                        })
                        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    if let Some((_, i)) = best {
                        snapped[slot] = i as u32;
                    }
                }
            }
        }

        let action_sets: [Vec<ActionId>; 3] = [
            layout.actions_of_kind(ActionKind::ServeDeuce).map(|a| a.id).collect(),
            layout.actions_of_kind(ActionKind::ServeAd).map(|a| a.id).collect(),
            layout.actions_of_kind(ActionKind::Rally).map(|a| a.id).collect(),
        ];
        let classes: Vec<Option<StateClass>> = states.iter().map(|s| s.class(layout)).collect();
        let kinds: Vec<ActionKind> =
            states[..n_transient].iter().map(|s| s.action_kind(layout).expect("transient")).collect();
        let mut row_offsets = Vec::with_capacity(n_transient + 1);
        row_offsets.push(0);
        for k in &kinds {
            let next = row_offsets.last().unwrap() + action_sets[kind_slot(*k)].len();
            row_offsets.push(next);
        }

        let mut hasher = Sha256::new();
        hasher.update(b"rallyproc-census-v1\n");
        for s in &states {
            hasher.update(s.to_string().as_bytes());
            hasher.update(b"\n");
        }
        for set in &action_sets {
            for id in set {
                hasher.update([id.0]);
            }
        }
        let hash = hasher.finalize().into();

        Ok(StateCensus { states, classes, kinds, action_sets, row_offsets, lookup, snapped, n_transient, hash })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_transient(&self) -> usize {
        self.n_transient
    }

    pub fn won(&self) -> usize {
        self.n_transient
    }

    pub fn lost(&self) -> usize {
        self.n_transient + 1
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, index: usize) -> State {
        self.states[index]
    }

    pub fn class(&self, index: usize) -> Option<StateClass> {
        self.classes[index]
    }

    pub fn shot(&self, index: usize) -> Option<ShotType> {
        self.classes[index].map(|c| c.shot)
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        match *state {
            State::Won => Some(self.won()),
            State::Lost => Some(self.lost()),
            State::Transient { a, b, shot } => {
                if a.half() != Half::A || b.half() != Half::B {
                    return None;
                }
                match self.lookup[lookup_slot(a, b, shot)] {
                    NO_STATE => None,
                    i => Some(i as usize),
                }
            }
        }
    }

    /// Like [`index_of`](Self::index_of) but maps pruned combinations to their
    /// nearest surviving neighbour.
    pub fn snap(&self, a: CellId, b: CellId, shot: ShotType) -> Option<usize> {
        if a.half() != Half::A || b.half() != Half::B {
            return None;
        }
        match self.snapped[lookup_slot(a, b, shot)] {
            NO_STATE => None,
            i => Some(i as usize),
        }
    }

    pub fn action_kind(&self, index: usize) -> ActionKind {
        self.kinds[index]
    }

    /// `A_s` for a transient state, ascending by id.
    pub fn actions(&self, index: usize) -> &[ActionId] {
        &self.action_sets[kind_slot(self.kinds[index])]
    }

    /// Position of `action` within `A_s`.
    pub fn local_action(&self, index: usize, action: ActionId) -> Option<usize> {
        self.actions(index).binary_search(&action).ok()
    }

    /// Offset of state `index`'s first `(s, a)` row in a flat row table.
    pub fn row_offset(&self, index: usize) -> usize {
        self.row_offsets[index]
    }

    pub fn n_rows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn transient_indices(&self) -> std::ops::Range<usize> {
        0..self.n_transient
    }

    pub fn indices_of_shot(&self, shot: ShotType) -> impl Iterator<Item = usize> + '_ {
        self.transient_indices().filter(move |&i| self.shot(i) == Some(shot))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PruneRule;

    #[test]
    fn unpruned_census_has_5292_transient_states() {
        let layout = CourtLayout::default_v1();
        let census = layout.enumerate_states(&PruningRules::none()).unwrap();
        assert_eq!(census.n_transient(), 42 * 42 * 3);
        assert_eq!(census.len(), 5292 + 2);
    }

    #[test]
    fn shipped_pruning_leaves_3600_transient_states() {
        let layout = CourtLayout::default_v1();
        let census = layout.enumerate_states(&layout.pruning).unwrap();
        assert_eq!(census.n_transient(), 3600);
        assert_eq!(census.state(census.won()), State::Won);
        assert_eq!(census.state(census.lost()), State::Lost);
        let serve = census.indices_of_shot(ShotType::Serve).count();
        let ret = census.indices_of_shot(ShotType::Return).count();
        assert_eq!((serve, ret, 3600 - serve - ret), (936, 936, 1728));
    }

    #[test]
    fn server_at_net_rule_removes_net_row_serves() {
        let layout = CourtLayout::default_v1();
        let rules = PruningRules { version: 0, rules: vec![PruneRule::ServerAtNet] };
        let census = layout.enumerate_states(&rules).unwrap();
        for s in census.states() {
            if let State::Transient { a, shot: ShotType::Serve, .. } = s {
                assert_ne!(layout.cell(*a).row, 0);
            }
        }
        assert_eq!(census.indices_of_shot(ShotType::Serve).count(), 36 * 42);
        assert_eq!(census.indices_of_shot(ShotType::Rally).count(), 42 * 42);
    }

    #[test]
    fn pruning_everything_fails() {
        let layout = CourtLayout::default_v1();
        let rules = PruningRules { version: 0, rules: vec![PruneRule::ServerAheadOfRow { min_row: 7 }] };
        assert!(matches!(layout.enumerate_states(&rules), Err(Error::NoServeStates)));
    }

    #[test]
    fn ordering_is_deterministic_and_lookup_roundtrips() {
        let layout = CourtLayout::default_v1();
        let c1 = layout.enumerate_states(&layout.pruning).unwrap();
        let c2 = layout.enumerate_states(&layout.pruning).unwrap();
        assert_eq!(c1.states(), c2.states());
        assert_eq!(c1.hash(), c2.hash());
        for (i, s) in c1.states().iter().enumerate() {
            assert_eq!(c1.index_of(s), Some(i));
        }
    }

    #[test]
    fn pruned_rally_states_snap_to_survivors() {
        let layout = CourtLayout::default_v1();
        let census = layout.enumerate_states(&layout.pruning).unwrap();
        let (a, b) = (layout.cell_at(Half::A, 0, 2), layout.cell_at(Half::B, 0, 3));
        let pruned = State::Transient { a, b, shot: ShotType::Rally };
        assert_eq!(census.index_of(&pruned), None);
        let i = census.snap(a, b, ShotType::Rally).unwrap();
        assert_eq!(census.shot(i), Some(ShotType::Rally));
        assert!(census.index_of(&census.state(i)).is_some());
    }

    #[test]
    fn action_sets_follow_shot_and_side() {
        let layout = CourtLayout::default_v1();
        let census = layout.enumerate_states(&layout.pruning).unwrap();
        for i in census.transient_indices() {
            let n = census.actions(i).len();
            match census.shot(i).unwrap() {
                ShotType::Serve => {
                    assert_eq!(n, 3);
                    let side = census.class(i).unwrap().side;
                    assert!(census.actions(i).iter().all(|&id| layout.action(id).kind == ActionKind::serve(side)));
                }
                _ => assert_eq!(n, 39),
            }
        }
        assert_eq!(census.n_rows(), 936 * 3 + (936 + 1728) * 39);
    }
}

//! Court coordinates, the 84-cell position grid and the named aim regions.
//!
//! Global coordinates put the net on `x = 0`. Player A occupies the half with
//! `x < 0` and Player B the half with `x > 0`, so `|x|` is the distance from the
//! net. `y` is the signed distance from the centre line. A player's deuce side
//! is their right-hand side: `y < 0` for A and `y > 0` for B.
//!
//! Cells are numbered `half * 42 + row * cols + col + 1`, where row 0 touches
//! the net and col 0 is the most negative `y`. Points on a shared boundary
//! belong to the lower-indexed cell (or region).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{ShotType, State, StateCensus};

const DEFAULT_COURT_JSON: &str = include_str!("../data/court.v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Rotation by half a turn about the centre mark; swaps the roles of A and B.
    pub fn flipped(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Half {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Deuce,
    Ad,
}

impl Side {
    /// Side of a point for the player who owns `half`.
    pub fn of(half: Half, y: f64) -> Side {
        match half {
            Half::A if y < 0.0 => Side::Deuce,
            Half::B if y > 0.0 => Side::Deuce,
            _ => Side::Ad,
        }
    }
}

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(r: [f64; 4]) -> Self {
        Rect { x0: r[0], x1: r[1], y0: r[2], y1: r[3] }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.x1, r.y0, r.y1]
    }
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn width(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn depth(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn overlap_area(&self, other: &Rect) -> f64 {
        let dx = self.x1.min(other.x1) - self.x0.max(other.x0);
        let dy = self.y1.min(other.y1) - self.y0.max(other.y0);
        if dx > 0.0 && dy > 0.0 {
            dx * dy
        } else {
            0.0
        }
    }

    fn within(&self, outer: &Rect, tol: f64) -> bool {
        self.x0 >= outer.x0 - tol
            && self.x1 <= outer.x1 + tol
            && self.y0 >= outer.y0 - tol
            && self.y1 <= outer.y1 + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourtSpec {
    pub half_length_m: f64,
    pub width_m: f64,
    pub rows: u8,
    pub cols: u8,
    pub baseline_m: f64,
    pub service_line_m: f64,
    pub singles_half_width_m: f64,
}

impl Default for CourtSpec {
    fn default() -> Self {
        CourtSpec {
            half_length_m: 13.885,
            width_m: 10.97,
            rows: 7,
            cols: 6,
            baseline_m: 11.885,
            service_line_m: 6.40,
            singles_half_width_m: 4.115,
        }
    }
}

impl CourtSpec {
    pub fn validate(&self) -> Result<()> {
        let cells = u32::from(self.rows) * u32::from(self.cols);
        if cells != CELLS_PER_HALF as u32 {
            return Err(Error::Layout(format!("rows × cols must be 42, got {cells}")));
        }
        if self.cols % 2 != 0 {
            return Err(Error::Layout("column count must be even".into()));
        }
        if !(self.half_length_m > self.baseline_m) {
            return Err(Error::Layout("grid must extend behind the baseline".into()));
        }
        if !(self.width_m > 2.0 * self.singles_half_width_m) {
            return Err(Error::Layout("grid narrower than the singles court".into()));
        }
        if !(self.service_line_m > 0.0 && self.service_line_m < self.baseline_m) {
            return Err(Error::Layout("service line must lie between net and baseline".into()));
        }
        Ok(())
    }

    pub fn row_depth(&self) -> f64 {
        self.half_length_m / f64::from(self.rows)
    }

    pub fn col_width(&self) -> f64 {
        self.width_m / f64::from(self.cols)
    }

    /// Half of the singles court on B's side (the target half for A's shots).
    pub fn singles_half(&self) -> Rect {
        Rect {
            x0: 0.0,
            x1: self.baseline_m,
            y0: -self.singles_half_width_m,
            y1: self.singles_half_width_m,
        }
    }

    /// Service box on B's half receiving a serve aimed at `side` (B's deuce is `y > 0`).
    pub fn service_box(&self, side: Side) -> Rect {
        let w = self.singles_half_width_m;
        match side {
            Side::Deuce => Rect { x0: 0.0, x1: self.service_line_m, y0: 0.0, y1: w },
            Side::Ad => Rect { x0: 0.0, x1: self.service_line_m, y0: -w, y1: 0.0 },
        }
    }

    /// Whether a landing on B's half is in bounds for a shot of `kind`.
    pub fn in_bounds(&self, p: Point, kind: ActionKind) -> bool {
        match kind {
            ActionKind::ServeDeuce => self.service_box(Side::Deuce).contains(p),
            ActionKind::ServeAd => self.service_box(Side::Ad).contains(p),
            ActionKind::Rally => self.singles_half().contains(p),
        }
    }
}

pub const CELLS_PER_HALF: usize = 42;
pub const TOTAL_CELLS: usize = 2 * CELLS_PER_HALF;

/// 1-based cell index: 1..=42 on A's half, 43..=84 on B's half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u8);

impl CellId {
    pub fn half(self) -> Half {
        if usize::from(self.0) <= CELLS_PER_HALF {
            Half::A
        } else {
            Half::B
        }
    }

    /// Zero-based position within the cell's own half.
    pub fn local(self) -> usize {
        (usize::from(self.0) - 1) % CELLS_PER_HALF
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: CellId,
    pub half: Half,
    pub row: u8,
    pub col: u8,
    pub bounds: Rect,
}

impl Cell {
    pub fn center(&self) -> Point {
        self.bounds.center()
    }

    pub fn side(&self) -> Side {
        Side::of(self.half, self.center().y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    ServeDeuce,
    ServeAd,
    Rally,
}

impl ActionKind {
    pub fn serve(side: Side) -> Self {
        match side {
            Side::Deuce => ActionKind::ServeDeuce,
            Side::Ad => ActionKind::ServeAd,
        }
    }
}

/// Index into [`CourtLayout::actions`]; ordering is the tie-break order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u8);

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRegion {
    pub id: ActionId,
    pub name: String,
    pub kind: ActionKind,
    pub rects: Vec<Rect>,
    pub conservative: bool,
}

impl ActionRegion {
    pub fn contains(&self, p: Point) -> bool {
        self.rects.iter().any(|r| r.contains(p))
    }

    pub fn area(&self) -> f64 {
        self.rects.iter().map(Rect::area).sum()
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Point {
        let area = self.area();
        let (mut x, mut y) = (0.0, 0.0);
        for r in &self.rects {
            let c = r.center();
            x += c.x * r.area();
            y += c.y * r.area();
        }
        Point::new(x / area, y / area)
    }

    /// Bounding box of the union.
    pub fn bounds(&self) -> Rect {
        self.rects.iter().fold(
            Rect { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY },
            |b, r| Rect { x0: b.x0.min(r.x0), x1: b.x1.max(r.x1), y0: b.y0.min(r.y0), y1: b.y1.max(r.y1) },
        )
    }
}

/// State pruning rules. Row numbers count from the net (row 0 touches it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PruneRule {
    /// Server standing in the row adjacent to the net.
    ServerAtNet,
    /// Server standing closer to the net than `min_row`.
    ServerAheadOfRow { min_row: u8 },
    /// Receiver deep (row ≥ `min_row`) in the outermost column on the server's
    /// own side of the centre line, i.e. nowhere near the target service box.
    ReceiverWrongSide { min_row: u8 },
    /// Rally with both players at or inside `max_row`.
    BothAtNet { max_row: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PruningRules {
    pub version: u32,
    pub rules: Vec<PruneRule>,
}

impl PruningRules {
    pub fn none() -> Self {
        PruningRules { version: 0, rules: Vec::new() }
    }

    /// Whether a transient state survives every rule.
    pub fn keeps(&self, layout: &CourtLayout, a: CellId, b: CellId, shot: ShotType) -> bool {
        let (ca, cb) = (layout.cell(a), layout.cell(b));
        // Server and receiver of the point's first shot, if any.
        let serve_roles = match shot {
            ShotType::Serve => Some((ca, cb)),
            ShotType::Return => Some((cb, ca)),
            ShotType::Rally => None,
        };
        let last_col = layout.spec.cols - 1;
        self.rules.iter().all(|rule| match (*rule, serve_roles) {
            (PruneRule::ServerAtNet, Some((server, _))) => server.row != 0,
            (PruneRule::ServerAheadOfRow { min_row }, Some((server, _))) => server.row >= min_row,
            (PruneRule::ReceiverWrongSide { min_row }, Some((server, receiver))) => {
                let wrong_col = if server.center().y < 0.0 { 0 } else { last_col };
                !(receiver.col == wrong_col && receiver.row >= min_row)
            }
            (PruneRule::BothAtNet { max_row }, None) => !(ca.row <= max_row && cb.row <= max_row),
            _ => true,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActionRecord {
    name: String,
    kind: ActionKind,
    rects: Vec<Rect>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridRecord {
    half_length_m: f64,
    width_m: f64,
    rows: u8,
    cols: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinesRecord {
    baseline_m: f64,
    service_line_m: f64,
    singles_half_width_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayoutFile {
    format: String,
    version: u32,
    grid: GridRecord,
    lines: LinesRecord,
    pruning: PruningRules,
    actions: Vec<ActionRecord>,
}

/// The court grid plus the action tiling, loaded from `court.v1.json`.
#[derive(Debug, Clone)]
pub struct CourtLayout {
    pub spec: CourtSpec,
    pub pruning: PruningRules,
    actions: Vec<ActionRegion>,
    cells: Vec<Cell>,
    row_edges: Vec<f64>,
    col_edges: Vec<f64>,
    source_json: String,
}

const AREA_TOL: f64 = 1e-9;

impl CourtLayout {
    /// The shipped layout.
    pub fn default_v1() -> Self {
        Self::from_json(DEFAULT_COURT_JSON).expect("shipped court layout is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LayoutFile = serde_json::from_str(text)?;
        if file.format != "rallyproc-court" || file.version != 1 {
            return Err(Error::Layout(format!("unsupported layout {} v{}", file.format, file.version)));
        }
        let spec = CourtSpec {
            half_length_m: file.grid.half_length_m,
            width_m: file.grid.width_m,
            rows: file.grid.rows,
            cols: file.grid.cols,
            baseline_m: file.lines.baseline_m,
            service_line_m: file.lines.service_line_m,
            singles_half_width_m: file.lines.singles_half_width_m,
        };
        if file.actions.len() > usize::from(u8::MAX) {
            return Err(Error::Layout("too many actions".into()));
        }
        let actions = file
            .actions
            .into_iter()
            .enumerate()
            .map(|(i, a)| ActionRegion {
                id: ActionId(i as u8),
                conservative: a.name.starts_with('M'),
                name: a.name,
                kind: a.kind,
                rects: a.rects,
            })
            .collect();
        Self::new(spec, file.pruning, actions, text.to_owned())
    }

    fn new(spec: CourtSpec, pruning: PruningRules, actions: Vec<ActionRegion>, source_json: String) -> Result<Self> {
        spec.validate()?;
        let dx = spec.row_depth();
        let dy = spec.col_width();
        let row_edges: Vec<f64> = (0..=spec.rows)
            .map(|r| if r == spec.rows { spec.half_length_m } else { f64::from(r) * dx })
            .collect();
        let col_edges: Vec<f64> = (0..=spec.cols)
            .map(|c| if c == spec.cols { 0.5 * spec.width_m } else { -0.5 * spec.width_m + f64::from(c) * dy })
            .collect();
        let mut cells = Vec::with_capacity(TOTAL_CELLS);
        for half in [Half::A, Half::B] {
            for row in 0..spec.rows {
                for col in 0..spec.cols {
                    let (near, far) = (row_edges[usize::from(row)], row_edges[usize::from(row) + 1]);
                    let (x0, x1) = match half {
                        Half::A => (-far, -near),
                        Half::B => (near, far),
                    };
                    let index = cells.len() as u8 + 1;
                    cells.push(Cell {
                        index: CellId(index),
                        half,
                        row,
                        col,
                        bounds: Rect { x0, x1, y0: col_edges[usize::from(col)], y1: col_edges[usize::from(col) + 1] },
                    });
                }
            }
        }
        let layout = CourtLayout { spec, pruning, actions, cells, row_edges, col_edges, source_json };
        layout.validate_actions()?;
        Ok(layout)
    }

    fn validate_actions(&self) -> Result<()> {
        let count = |k| self.actions.iter().filter(|a| a.kind == k).count();
        let (deuce, ad, rally) = (count(ActionKind::ServeDeuce), count(ActionKind::ServeAd), count(ActionKind::Rally));
        if deuce != 3 || ad != 3 || rally != 39 {
            return Err(Error::Layout(format!(
                "expected 3+3 serve and 39 rally actions, found {deuce}+{ad} and {rally}"
            )));
        }
        let mut names = BTreeSet::new();
        for a in &self.actions {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Layout(format!("duplicate action name {}", a.name)));
            }
            if a.rects.is_empty() || a.rects.iter().any(|r| !(r.x1 > r.x0 && r.y1 > r.y0)) {
                return Err(Error::Layout(format!("action {} has an empty rectangle", a.name)));
            }
        }
        for kind in [ActionKind::ServeDeuce, ActionKind::ServeAd, ActionKind::Rally] {
            let outer = match kind {
                ActionKind::ServeDeuce => self.spec.service_box(Side::Deuce),
                ActionKind::ServeAd => self.spec.service_box(Side::Ad),
                ActionKind::Rally => self.spec.singles_half(),
            };
            let rects: Vec<(ActionId, Rect)> = self
                .actions
                .iter()
                .filter(|a| a.kind == kind)
                .flat_map(|a| a.rects.iter().map(move |r| (a.id, *r)))
                .collect();
            for (id, r) in &rects {
                if !r.within(&outer, 1e-12) {
                    return Err(Error::Layout(format!("{} leaves its legal area", self.action(*id).name)));
                }
            }
            for (i, (_, r)) in rects.iter().enumerate() {
                for (_, s) in &rects[i + 1..] {
                    if r.overlap_area(s) > AREA_TOL {
                        return Err(Error::Layout(format!("overlapping {kind:?} regions")));
                    }
                }
            }
            let total: f64 = rects.iter().map(|(_, r)| r.area()).sum();
            if kind == ActionKind::Rally && (total - outer.area()).abs() > AREA_TOL * outer.area() {
                return Err(Error::Layout(format!(
                    "rally regions cover {total} m², singles half is {} m²",
                    outer.area()
                )));
            }
        }
        Ok(())
    }

    pub fn source_json(&self) -> &str {
        &self.source_json
    }

    pub fn actions(&self) -> &[ActionRegion] {
        &self.actions
    }

    pub fn action(&self, id: ActionId) -> &ActionRegion {
        &self.actions[usize::from(id.0)]
    }

    pub fn action_by_name(&self, name: &str) -> Option<&ActionRegion> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn actions_of_kind(&self, kind: ActionKind) -> impl Iterator<Item = &ActionRegion> {
        self.actions.iter().filter(move |a| a.kind == kind)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[usize::from(id.0) - 1]
    }

    pub fn cell_at(&self, half: Half, row: u8, col: u8) -> CellId {
        let base = match half {
            Half::A => 0,
            Half::B => CELLS_PER_HALF,
        };
        CellId((base + usize::from(row) * usize::from(self.spec.cols) + usize::from(col) + 1) as u8)
    }

    /// The cell containing `p`, or `None` outside the grid.
    pub fn locate_cell(&self, p: Point) -> Option<CellId> {
        let depth = p.x.abs();
        if !(depth <= self.spec.half_length_m) || !(p.y.abs() <= 0.5 * self.spec.width_m) {
            return None;
        }
        let half = if p.x <= 0.0 { Half::A } else { Half::B };
        let row = self.row_edges[1..].iter().position(|&edge| depth <= edge)?;
        let col = self.col_edges[1..].iter().position(|&edge| p.y <= edge)?;
        Some(self.cell_at(half, row as u8, col as u8))
    }

    /// Aim region of `kind` containing a landing on B's half, `None` if out of bounds.
    pub fn locate_action(&self, p: Point, kind: ActionKind) -> Option<ActionId> {
        if !self.spec.in_bounds(p, kind) {
            return None;
        }
        self.actions.iter().find(|a| a.kind == kind && a.contains(p)).map(|a| a.id)
    }

    /// Clamp a point into the grid of the given half.
    pub fn clamp_to_half(&self, p: Point, half: Half) -> Point {
        let l = self.spec.half_length_m;
        let w = 0.5 * self.spec.width_m;
        let x = match half {
            Half::A => p.x.clamp(-l, -1e-9),
            Half::B => p.x.clamp(1e-9, l),
        };
        Point::new(x, p.y.clamp(-w, w))
    }

    /// Action set `A_s` of a transient state, in ascending id order.
    pub fn action_set(&self, state: &State) -> Vec<ActionId> {
        match state.action_kind(self) {
            Some(kind) => self.actions_of_kind(kind).map(|a| a.id).collect(),
            None => Vec::new(),
        }
    }

    /// All surviving transient states plus `W` and `L`, in census order.
    pub fn enumerate_states(&self, pruning: &PruningRules) -> Result<StateCensus> {
        StateCensus::build(self, pruning)
    }
}

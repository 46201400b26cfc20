//! Feature windows over action streams.
//!
//! A window is `a` adjacent actions of one game that are all successful
//! moves by the same team in the same period. Each contributes
//! `(f(e), start_x, start_y)` per action, so a row has `3a` features.
//! Training rows carry the xT of the next successful move as target;
//! defensive rows carry the interception or tackle that ended the play.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Action, ActionType, GameId, GameStream, PlayerId};
use crate::xt::{action_xt, XtError, XtSurface};

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("window length must be at least 1, got {0}")]
    InvalidWindow(usize),
    #[error(transparent)]
    Xt(#[from] XtError),
    #[error("expected {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("scaler cannot be fitted: {0}")]
    Unfittable(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed table {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefensiveKind {
    Interception,
    Tackle,
}

impl DefensiveKind {
    pub fn name(self) -> &'static str {
        match self {
            DefensiveKind::Interception => "interception",
            DefensiveKind::Tackle => "tackle",
        }
    }

    fn of(ty: ActionType) -> Option<Self> {
        match ty {
            ActionType::Interception => Some(DefensiveKind::Interception),
            ActionType::Tackle => Some(DefensiveKind::Tackle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub game_id: GameId,
    /// Index of the terminal event: the target move, or the defensive action.
    pub event_idx: usize,
    /// The defending player, for defensive rows.
    pub player_id: Option<PlayerId>,
    /// Start location of the defensive action, when known.
    pub location: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub target: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub a: usize,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(a: usize) -> Self {
        Self { a, rows: Vec::new() }
    }

    pub fn width(&self) -> usize {
        3 * self.a
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Fills in each row's location from the defensive action it points at.
    pub fn attach_locations(&mut self, games: &[GameStream]) {
        let by_id: HashMap<&GameId, &GameStream> = games.iter().map(|g| (&g.game_id, g)).collect();
        for row in &mut self.rows {
            let p = &mut row.provenance;
            if let Some(a) = by_id.get(&p.game_id).and_then(|g| g.actions.get(p.event_idx)) {
                p.location = Some((a.start_x, a.start_y));
            }
        }
    }
}

/// The two defensive-action tables built from one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DefensiveTables {
    pub interceptions: FeatureTable,
    pub tackles: FeatureTable,
}

impl DefensiveTables {
    pub fn get(&self, kind: DefensiveKind) -> &FeatureTable {
        match kind {
            DefensiveKind::Interception => &self.interceptions,
            DefensiveKind::Tackle => &self.tackles,
        }
    }
}

fn window_qualifies(window: &[Action]) -> bool {
    let Some(first) = window.first() else {
        return false;
    };
    window
        .iter()
        .all(|a| a.is_successful_move() && a.team_id == first.team_id && a.period == first.period)
}

fn window_features(window: &[Action], surface: &XtSurface) -> Result<Vec<f64>, XtError> {
    let mut features = Vec::with_capacity(3 * window.len());
    for a in window {
        features.push(action_xt(surface, a)?);
        features.push(a.start_x);
        features.push(a.start_y);
    }
    Ok(features)
}

/// One row per run of `a + 1` qualifying actions; the first `a` are inputs
/// and the xT of the last is the target.
pub fn build_training_set(
    games: &[GameStream],
    surface: &XtSurface,
    a: usize,
) -> Result<FeatureTable, SequenceError> {
    if a < 1 {
        return Err(SequenceError::InvalidWindow(a));
    }
    let mut table = FeatureTable::new(a);
    for game in games {
        for (start, window) in game.actions.windows(a + 1).enumerate() {
            if !window_qualifies(window) {
                continue;
            }
            let (inputs, next) = window.split_at(a);
            table.rows.push(FeatureRow {
                features: window_features(inputs, surface)?,
                target: Some(action_xt(surface, &next[0])?),
                provenance: Provenance {
                    game_id: game.game_id.clone(),
                    event_idx: start + a,
                    player_id: None,
                    location: None,
                },
            });
        }
    }
    Ok(table)
}

/// Rows for plays ended by a successful interception or tackle from the
/// opposing team, either directly after the `a` qualifying actions or after
/// one failed action by the attacking team.
pub fn build_da_sets(
    games: &[GameStream],
    surface: &XtSurface,
    a: usize,
) -> Result<DefensiveTables, SequenceError> {
    if a < 1 {
        return Err(SequenceError::InvalidWindow(a));
    }
    let mut interceptions = FeatureTable::new(a);
    let mut tackles = FeatureTable::new(a);
    for game in games {
        let actions = &game.actions;
        for (d, da) in actions.iter().enumerate() {
            let Some(kind) = DefensiveKind::of(da.action_type) else {
                continue;
            };
            if !da.result.is_success() {
                continue;
            }
            let Some(end) = window_end(actions, d) else {
                continue;
            };
            if end < a {
                continue;
            }
            let window = &actions[end - a..end];
            if !window_qualifies(window)
                || window[0].team_id == da.team_id
                || window[0].period != da.period
            {
                continue;
            }
            let row = FeatureRow {
                features: window_features(window, surface)?,
                target: None,
                provenance: Provenance {
                    game_id: game.game_id.clone(),
                    event_idx: d,
                    player_id: Some(da.player_id.clone()),
                    location: Some((da.start_x, da.start_y)),
                },
            };
            match kind {
                DefensiveKind::Interception => interceptions.rows.push(row),
                DefensiveKind::Tackle => tackles.rows.push(row),
            }
        }
    }
    Ok(DefensiveTables {
        interceptions,
        tackles,
    })
}

/// Exclusive end of the input window for the defensive action at `d`: the
/// action right before it, or one earlier when that action is a failure by
/// the attacking side.
fn window_end(actions: &[Action], d: usize) -> Option<usize> {
    let prev = actions.get(d.checked_sub(1)?)?;
    if prev.is_successful_move() {
        return Some(d);
    }
    let da = &actions[d];
    if !prev.result.is_success() && prev.team_id != da.team_id && prev.period == da.period {
        let before = actions.get(d.checked_sub(2)?)?;
        // the failed action must belong to the same attack as the window
        if before.team_id == prev.team_id {
            return Some(d - 1);
        }
    }
    None
}

/// Per-column min-max scaling fitted on a training table. The last column
/// is the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

pub fn fit_scaler(table: &FeatureTable) -> Result<Scaler, SequenceError> {
    if table.rows.is_empty() {
        return Err(SequenceError::Unfittable("table is empty".into()));
    }
    let width = table.width() + 1;
    let mut mins = vec![f64::INFINITY; width];
    let mut maxs = vec![f64::NEG_INFINITY; width];
    for row in &table.rows {
        if row.features.len() != table.width() {
            return Err(SequenceError::Dimension {
                expected: table.width(),
                got: row.features.len(),
            });
        }
        let target = row
            .target
            .ok_or_else(|| SequenceError::Unfittable("row without target".into()))?;
        for (j, v) in row.features.iter().copied().chain([target]).enumerate() {
            if !v.is_finite() {
                return Err(SequenceError::Unfittable(format!("non-finite value in column {j}")));
            }
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    Ok(Scaler { mins, maxs })
}

impl Scaler {
    pub fn n_columns(&self) -> usize {
        self.mins.len()
    }

    pub fn n_features(&self) -> usize {
        self.mins.len() - 1
    }

    fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.maxs[j] - self.mins[j];
        if range == 0.0 {
            0.0
        } else {
            (v - self.mins[j]) / range
        }
    }

    fn unscale(&self, j: usize, v: f64) -> f64 {
        v * (self.maxs[j] - self.mins[j]) + self.mins[j]
    }

    /// Scales a feature vector. Values outside the fitted range land outside
    /// `[0, 1]`; nothing is clipped.
    pub fn transform(&self, features: &[f64]) -> Result<Vec<f64>, SequenceError> {
        if features.len() != self.n_features() {
            return Err(SequenceError::Dimension {
                expected: self.n_features(),
                got: features.len(),
            });
        }
        Ok(features.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect())
    }

    /// Undoes `transform`. Constant columns come back as their fitted value.
    pub fn inverse_transform(&self, scaled: &[f64]) -> Result<Vec<f64>, SequenceError> {
        if scaled.len() != self.n_features() {
            return Err(SequenceError::Dimension {
                expected: self.n_features(),
                got: scaled.len(),
            });
        }
        Ok(scaled.iter().enumerate().map(|(j, &v)| self.unscale(j, v)).collect())
    }

    pub fn transform_target(&self, v: f64) -> f64 {
        self.scale(self.n_features(), v)
    }

    pub fn inverse_transform_target(&self, v: f64) -> f64 {
        self.unscale(self.n_features(), v)
    }

    /// Scaled copy of a table; targets are scaled when present.
    pub fn transform_table(&self, table: &FeatureTable) -> Result<FeatureTable, SequenceError> {
        let rows = table
            .rows
            .iter()
            .map(|r| {
                Ok(FeatureRow {
                    features: self.transform(&r.features)?,
                    target: r.target.map(|t| self.transform_target(t)),
                    provenance: r.provenance.clone(),
                })
            })
            .collect::<Result<_, SequenceError>>()?;
        Ok(FeatureTable { a: table.a, rows })
    }
}

/// Writes `f1..f3a,target,game_id,event_idx,player_id`.
pub fn write_table(path: &Path, table: &FeatureTable) -> Result<(), SequenceError> {
    let mut out = String::new();
    for j in 1..=table.width() {
        write!(out, "f{j},").expect("string write");
    }
    out.push_str("target,game_id,event_idx,player_id\n");
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in &table.rows {
        let mut rec: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
        rec.push(row.target.map(|t| t.to_string()).unwrap_or_default());
        rec.push(row.provenance.game_id.to_string());
        rec.push(row.provenance.event_idx.to_string());
        rec.push(row.provenance.player_id.as_ref().map(|p| p.to_string()).unwrap_or_default());
        wtr.write_record(&rec).map_err(|e| SequenceError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    out.push_str(&String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf8 csv"));
    fs::write(path, out).map_err(|source| SequenceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_table(path: &Path) -> Result<FeatureTable, SequenceError> {
    let bad = |reason: String| SequenceError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|source| SequenceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let n = headers.len();
    if n < 7 || (n - 4) % 3 != 0 {
        return Err(bad(format!("{n} columns cannot hold 3a features plus 4 trailing columns")));
    }
    let width = n - 4;
    let expected: Vec<String> = (1..=width)
        .map(|j| format!("f{j}"))
        .chain(["target", "game_id", "event_idx", "player_id"].map(String::from))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad("unexpected header".into()));
    }
    let mut table = FeatureTable::new(width / 3);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |j: usize| {
            rec[j]
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: column {} is not a number", i + 2, j + 1)))
        };
        let features = (0..width).map(num).collect::<Result<Vec<_>, _>>()?;
        let target = if rec[width].is_empty() { None } else { Some(num(width)?) };
        let event_idx = rec[width + 2]
            .parse()
            .map_err(|_| bad(format!("row {}: bad event_idx", i + 2)))?;
        let player = &rec[width + 3];
        table.rows.push(FeatureRow {
            features,
            target,
            provenance: Provenance {
                game_id: rec[width + 1].into(),
                event_idx,
                player_id: (!player.is_empty()).then(|| player.into()),
                location: None,
            },
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{generate_synthetic_corpus, Outcome};
    use crate::xt::{fit_grid, solve_xt, GridModel};

    fn flat_surface() -> XtSurface {
        // 2x1 grid: left half 0, right half 0.5
        let m = GridModel::from_parts(2, 1, vec![0.0, 1.0], vec![0.0, 0.5], vec![1.0, 0.0], vec![0.0; 4]).unwrap();
        solve_xt(&m, 1e-9, 10).unwrap()
    }

    fn act(team: &str, ty: ActionType, ok: bool, x: f64) -> Action {
        Action {
            game_id: "g".into(),
            period: 1,
            time_seconds: 0.0,
            team_id: team.into(),
            player_id: format!("{team}9").into(),
            player_name: String::new(),
            start_x: x,
            start_y: 30.0,
            end_x: x + 30.0,
            end_y: 30.0,
            action_type: ty,
            result: if ok { Outcome::Success } else { Outcome::Fail },
        }
    }

    fn game(actions: Vec<Action>) -> Vec<GameStream> {
        vec![GameStream::new("g".into(), actions)]
    }

    #[test]
    fn three_passes_one_row() {
        let g = game(vec![
            act("A", ActionType::Pass, true, 10.0),
            act("A", ActionType::Pass, true, 40.0),
            act("A", ActionType::Dribble, true, 60.0),
        ]);
        let t = build_training_set(&g, &flat_surface(), 2).unwrap();
        assert_eq!(t.len(), 1);
        let r = &t.rows[0];
        assert_eq!(r.features, vec![0.0, 10.0, 30.0, 0.5, 40.0, 30.0]);
        assert_eq!(r.target, Some(0.0));
        assert_eq!(r.provenance.event_idx, 2);
    }

    #[test]
    fn opposing_team_breaks_window() {
        let g = game(vec![
            act("A", ActionType::Pass, true, 10.0),
            act("A", ActionType::Pass, true, 40.0),
            act("B", ActionType::Pass, true, 60.0),
        ]);
        assert_eq!(build_training_set(&g, &flat_surface(), 2).unwrap().len(), 0);
    }

    #[test]
    fn period_boundary_breaks_window() {
        let mut late = act("A", ActionType::Pass, true, 60.0);
        late.period = 2;
        let g = game(vec![act("A", ActionType::Pass, true, 10.0), act("A", ActionType::Pass, true, 40.0), late]);
        assert_eq!(build_training_set(&g, &flat_surface(), 2).unwrap().len(), 0);
    }

    #[test]
    fn zero_window_rejected() {
        assert!(matches!(build_training_set(&[], &flat_surface(), 0), Err(SequenceError::InvalidWindow(0))));
        assert!(build_da_sets(&[], &flat_surface(), 0).is_err());
    }

    #[test]
    fn failed_pass_then_interception() {
        let g = game(vec![
            act("A", ActionType::Pass, true, 10.0),
            act("A", ActionType::Pass, true, 40.0),
            act("A", ActionType::Pass, false, 60.0),
            act("B", ActionType::Interception, true, 30.0),
        ]);
        let t = build_da_sets(&g, &flat_surface(), 2).unwrap();
        assert_eq!(t.interceptions.len(), 1);
        assert!(t.tackles.is_empty());
        let p = &t.interceptions.rows[0].provenance;
        assert_eq!(p.player_id.as_ref().unwrap().as_str(), "B9");
        assert_eq!(p.event_idx, 3);
        assert_eq!(p.location, Some((30.0, 30.0)));
        assert_eq!(t.interceptions.rows[0].target, None);
    }

    #[test]
    fn direct_tackle() {
        let g = game(vec![
            act("A", ActionType::Pass, true, 10.0),
            act("A", ActionType::Pass, true, 40.0),
            act("B", ActionType::Tackle, true, 30.0),
        ]);
        let t = build_da_sets(&g, &flat_surface(), 2).unwrap();
        assert_eq!(t.tackles.len(), 1);
        assert!(t.interceptions.is_empty());
    }

    #[test]
    fn unqualified_da_patterns_are_skipped() {
        let surface = flat_surface();
        // own-team tackle, failed tackle, two failures before the DA, window too short
        let cases = [
            vec![act("A", ActionType::Pass, true, 10.0), act("A", ActionType::Pass, true, 40.0), act("A", ActionType::Tackle, true, 30.0)],
            vec![act("A", ActionType::Pass, true, 10.0), act("A", ActionType::Pass, true, 40.0), act("B", ActionType::Tackle, false, 30.0)],
            vec![
                act("A", ActionType::Pass, true, 10.0),
                act("A", ActionType::Pass, true, 40.0),
                act("A", ActionType::Pass, false, 40.0),
                act("A", ActionType::Dribble, false, 40.0),
                act("B", ActionType::Interception, true, 30.0),
            ],
            vec![act("A", ActionType::Pass, true, 10.0), act("B", ActionType::Interception, true, 30.0)],
        ];
        for actions in cases {
            let t = build_da_sets(&game(actions), &surface, 2).unwrap();
            assert_eq!(t.interceptions.len() + t.tackles.len(), 0);
        }
    }

    /// Independent scanner: tokenizes every action and matches patterns on
    /// the token string.
    fn brute_counts(games: &[GameStream], a: usize) -> (usize, usize, usize) {
        let mut train = 0;
        let mut da = [0usize; 2];
        for g in games {
            let acts = &g.actions;
            let ok_move = |i: usize| {
                let x = &acts[i];
                matches!(x.action_type, ActionType::Pass | ActionType::Dribble | ActionType::Cross | ActionType::Clearance)
                    && x.result == Outcome::Success
            };
            let same = |i: usize, j: usize| acts[i].team_id == acts[j].team_id && acts[i].period == acts[j].period;
            for i in 0..acts.len() {
                if i + a < acts.len() && (i..=i + a).all(|k| ok_move(k) && same(k, i)) {
                    train += 1;
                }
            }
            for d in 0..acts.len() {
                let kind = match acts[d].action_type {
                    ActionType::Interception => 0,
                    ActionType::Tackle => 1,
                    _ => continue,
                };
                if acts[d].result != Outcome::Success {
                    continue;
                }
                let mut matched = false;
                // pattern (i)
                if d >= a && (d - a..d).all(|k| ok_move(k) && same(k, d - a)) && acts[d - a].team_id != acts[d].team_id && acts[d - a].period == acts[d].period {
                    matched = true;
                }
                // pattern (ii)
                if d > a {
                    let f = d - 1;
                    if acts[f].result == Outcome::Fail
                        && (f - a..f).all(|k| ok_move(k) && same(k, f - a))
                        && same(f, f - a)
                        && acts[f].team_id != acts[d].team_id
                        && acts[f].period == acts[d].period
                    {
                        matched = true;
                    }
                }
                if matched {
                    da[kind] += 1;
                }
            }
        }
        (train, da[0], da[1])
    }

    #[test]
    fn counts_match_brute_force_scanner() {
        let games = generate_synthetic_corpus(50, 7).unwrap();
        let surface = solve_xt(&fit_grid(&games).unwrap(), 1e-6, 100).unwrap();
        let mut prev = (usize::MAX, usize::MAX, usize::MAX);
        for a in 1..=3 {
            let t = build_training_set(&games, &surface, a).unwrap();
            let d = build_da_sets(&games, &surface, a).unwrap();
            let got = (t.len(), d.interceptions.len(), d.tackles.len());
            assert_eq!(got, brute_counts(&games, a), "a = {a}");
            assert!(got.0 <= prev.0 && got.1 <= prev.1 && got.2 <= prev.2);
            assert!(t.rows.iter().all(|r| r.features.len() == 3 * a));
            prev = got;
        }
    }

    #[test]
    fn scaler_midpoint_and_round_trip() {
        let mut t = FeatureTable::new(1);
        for (f, target) in [(2.0, 0.0), (4.0, 0.0173), (3.0, -0.01)] {
            t.rows.push(FeatureRow {
                features: vec![f, f, 1.0],
                target: Some(target),
                provenance: Provenance { game_id: "g".into(), event_idx: 0, player_id: None, location: None },
            });
        }
        let s = fit_scaler(&t).unwrap();
        assert_eq!(s.transform(&[3.0, 2.0, 1.0]).unwrap(), vec![0.5, 0.0, 0.0]);
        let v = 0.0173;
        assert!((s.inverse_transform_target(s.transform_target(v)) - v).abs() <= 1e-12);
        // out of training range: no clipping
        let out = s.transform(&[6.0, 0.0, 5.0]).unwrap();
        assert_eq!(out[0], 2.0);
        assert_eq!(out[1], -1.0);
        assert_eq!(out[2], 0.0);
        assert!(matches!(s.transform(&[1.0]), Err(SequenceError::Dimension { expected: 3, got: 1 })));
    }

    #[test]
    fn scaler_needs_targets() {
        assert!(fit_scaler(&FeatureTable::new(2)).is_err());
        let mut t = FeatureTable::new(1);
        t.rows.push(FeatureRow {
            features: vec![1.0, 2.0, 3.0],
            target: None,
            provenance: Provenance { game_id: "g".into(), event_idx: 0, player_id: None, location: None },
        });
        assert!(fit_scaler(&t).is_err());
    }

    proptest::proptest! {
        #[test]
        fn scaler_round_trip(lo in -1.0f64..0.0, hi in 0.001f64..1.0, v in -2.0f64..2.0) {
            let s = Scaler { mins: vec![0.0, lo], maxs: vec![1.0, hi] };
            let back = s.inverse_transform_target(s.transform_target(v));
            proptest::prop_assert!((back - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let games = generate_synthetic_corpus(3, 5).unwrap();
        let surface = solve_xt(&fit_grid(&games).unwrap(), 1e-6, 100).unwrap();
        let t = build_training_set(&games, &surface, 2).unwrap();
        let d = build_da_sets(&games, &surface, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&p, &t).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("f1,f2,f3,f4,f5,f6,target,game_id,event_idx,player_id\n"));
        assert_eq!(read_table(&p).unwrap(), t);
        write_table(&p, &d.tackles).unwrap();
        let mut back = read_table(&p).unwrap();
        assert!(back.rows.iter().all(|r| r.provenance.location.is_none()));
        back.attach_locations(&games);
        assert_eq!(back, d.tackles);
    }
}

//! Expected threat on a zoned pitch.
//!
//! Each zone's value is the chance of scoring directly from it plus the
//! chance of moving the ball on, weighted by where moves from that zone go:
//!
//! ```text
//! xT[z] = s[z] * g[z] + m[z] * sum_w T[z][w] * xT[w]
//! ```
//!
//! Solved by synchronous value iteration from an all-zero surface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::events::{Action, ActionType, GameStream, Outcome, PITCH_LENGTH, PITCH_WIDTH};

pub const GRID_COLS: usize = 16;
pub const GRID_ROWS: usize = 12;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;

const PROB_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum XtError {
    #[error("coordinate ({x}, {y}) lies outside the pitch")]
    OffPitch { x: f64, y: f64 },
    #[error("corpus contains no shots or moving actions")]
    EmptyCorpus,
    #[error("invalid grid model: {0}")]
    InvalidModel(String),
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),
    #[error("{action_type} with result {result:?} has no xT value; only successful moves do")]
    NotValuable {
        action_type: ActionType,
        result: Outcome,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed surface file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Zone {
    pub col: usize,
    pub row: usize,
}

/// Zone of a point on the standard 16 x 12 grid.
pub fn zone_of(x: f64, y: f64) -> Result<Zone, XtError> {
    zone_in_grid(x, y, GRID_COLS, GRID_ROWS)
}

pub fn zone_in_grid(x: f64, y: f64, cols: usize, rows: usize) -> Result<Zone, XtError> {
    if !(0.0..=PITCH_LENGTH).contains(&x) || !(0.0..=PITCH_WIDTH).contains(&y) {
        return Err(XtError::OffPitch { x, y });
    }
    let col = ((x / PITCH_LENGTH * cols as f64).floor() as usize).min(cols - 1);
    let row = ((y / PITCH_WIDTH * rows as f64).floor() as usize).min(rows - 1);
    Ok(Zone { col, row })
}

/// Raw per-zone tallies behind a fitted model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZoneCounts {
    pub shots: u64,
    pub goals: u64,
    pub moves: u64,
    pub successful_moves: u64,
}

/// Tallies that can be built per game and merged in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCounts {
    cols: usize,
    rows: usize,
    zones: Vec<ZoneCounts>,
    flows: Vec<u64>,
}

impl GridCounts {
    pub fn new(cols: usize, rows: usize) -> Self {
        let n = cols * rows;
        Self {
            cols,
            rows,
            zones: vec![ZoneCounts::default(); n],
            flows: vec![0; n * n],
        }
    }

    fn index(&self, z: Zone) -> usize {
        z.row * self.cols + z.col
    }

    pub fn add_game(&mut self, game: &GameStream) -> Result<(), XtError> {
        for a in &game.actions {
            self.add_action(a)?;
        }
        Ok(())
    }

    pub fn add_action(&mut self, a: &Action) -> Result<(), XtError> {
        let from = self.index(zone_in_grid(a.start_x, a.start_y, self.cols, self.rows)?);
        if a.action_type == ActionType::Shot {
            self.zones[from].shots += 1;
            if a.result.is_success() {
                self.zones[from].goals += 1;
            }
        } else if a.action_type.is_moving() {
            self.zones[from].moves += 1;
            if a.result.is_success() {
                let to = self.index(zone_in_grid(a.end_x, a.end_y, self.cols, self.rows)?);
                self.zones[from].successful_moves += 1;
                self.flows[from * self.zones.len() + to] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &GridCounts) {
        assert_eq!((self.cols, self.rows), (other.cols, other.rows));
        for (a, b) in self.zones.iter_mut().zip(&other.zones) {
            a.shots += b.shots;
            a.goals += b.goals;
            a.moves += b.moves;
            a.successful_moves += b.successful_moves;
        }
        for (a, b) in self.flows.iter_mut().zip(&other.flows) {
            *a += b;
        }
    }

    pub fn into_model(self) -> Result<GridModel, XtError> {
        if self.zones.iter().all(|z| z.shots + z.moves == 0) {
            return Err(XtError::EmptyCorpus);
        }
        let n = self.zones.len();
        let mut shoot = vec![0.0; n];
        let mut score = vec![0.0; n];
        let mut mov = vec![0.0; n];
        let mut transition = vec![0.0; n * n];
        for (z, c) in self.zones.iter().enumerate() {
            let acted = c.shots + c.moves;
            if acted > 0 {
                shoot[z] = c.shots as f64 / acted as f64;
                mov[z] = 1.0 - shoot[z];
            }
            if c.shots > 0 {
                score[z] = c.goals as f64 / c.shots as f64;
            }
            if c.successful_moves > 0 {
                let total = c.moves as f64;
                for w in 0..n {
                    transition[z * n + w] = self.flows[z * n + w] as f64 / total;
                }
            }
        }
        Ok(GridModel {
            cols: self.cols,
            rows: self.rows,
            shoot,
            score,
            mov,
            transition,
            counts: self.zones,
        })
    }
}

/// Per-zone shoot, score and move probabilities plus the zone transition
/// matrix (row-major, `transition[from * n + to]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    cols: usize,
    rows: usize,
    shoot: Vec<f64>,
    score: Vec<f64>,
    mov: Vec<f64>,
    transition: Vec<f64>,
    counts: Vec<ZoneCounts>,
}

impl GridModel {
    /// Builds a model from explicit probabilities, checking its invariants.
    pub fn from_parts(
        cols: usize,
        rows: usize,
        shoot: Vec<f64>,
        score: Vec<f64>,
        mov: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self, XtError> {
        let n = cols * rows;
        let model = GridModel {
            cols,
            rows,
            shoot,
            score,
            mov,
            transition,
            counts: vec![ZoneCounts::default(); n],
        };
        model.check()?;
        Ok(model)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_zones(&self) -> usize {
        self.cols * self.rows
    }

    pub fn index(&self, zone: Zone) -> usize {
        zone.row * self.cols + zone.col
    }

    pub fn shoot(&self) -> &[f64] {
        &self.shoot
    }

    pub fn score(&self) -> &[f64] {
        &self.score
    }

    pub fn mov(&self) -> &[f64] {
        &self.mov
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        let n = self.n_zones();
        &self.transition[from * n..(from + 1) * n]
    }

    pub fn counts(&self) -> &[ZoneCounts] {
        &self.counts
    }

    /// Verifies probability ranges, `s + m` in {0, 1}, and that transition
    /// rows sum to at most 1.
    pub fn check(&self) -> Result<(), XtError> {
        let n = self.n_zones();
        if n == 0 {
            return Err(XtError::InvalidModel("grid has no zones".into()));
        }
        for (name, v) in [("shoot", &self.shoot), ("score", &self.score), ("move", &self.mov)] {
            if v.len() != n {
                return Err(XtError::InvalidModel(format!("{name} has {} entries, expected {n}", v.len())));
            }
        }
        if self.transition.len() != n * n {
            return Err(XtError::InvalidModel(format!(
                "transition has {} entries, expected {}",
                self.transition.len(),
                n * n
            )));
        }
        let is_prob = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        for z in 0..n {
            for p in [self.shoot[z], self.score[z], self.mov[z]] {
                if !is_prob(p) {
                    return Err(XtError::InvalidModel(format!("zone {z} has probability {p}")));
                }
            }
            let sm = self.shoot[z] + self.mov[z];
            if sm.abs() > PROB_SLACK && (sm - 1.0).abs() > PROB_SLACK {
                return Err(XtError::InvalidModel(format!("zone {z}: s + m = {sm}")));
            }
            let row = self.transition_row(z);
            if let Some(p) = row.iter().find(|p| !is_prob(**p)) {
                return Err(XtError::InvalidModel(format!("zone {z} transition entry {p}")));
            }
            let total: f64 = row.iter().sum();
            if total > 1.0 + PROB_SLACK {
                return Err(XtError::InvalidModel(format!("zone {z} transition row sums to {total}")));
            }
        }
        Ok(())
    }
}

/// Estimates the 16 x 12 model from a corpus. Moves are passes, dribbles,
/// crosses and clearances. `T[z][w]` is the share of all moves from `z`
/// that reached `w` successfully, so a row sums to the zone's completion
/// rate and a lost ball carries no onward value.
pub fn fit_grid(games: &[GameStream]) -> Result<GridModel, XtError> {
    let mut counts = GridCounts::new(GRID_COLS, GRID_ROWS);
    for game in games {
        counts.add_game(game)?;
    }
    counts.into_model()
}

/// One synchronous application of the xT equation to `values`.
pub fn bellman_step(model: &GridModel, values: &[f64]) -> Vec<f64> {
    (0..model.n_zones())
        .map(|z| {
            let onward: f64 = model
                .transition_row(z)
                .iter()
                .zip(values)
                .map(|(t, v)| t * v)
                .sum();
            model.shoot[z] * model.score[z] + model.mov[z] * onward
        })
        .collect()
}

/// Max absolute difference between `values` and one more application of the equation.
pub fn equation_residual(model: &GridModel, values: &[f64]) -> f64 {
    max_abs_diff(&bellman_step(model, values), values)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct XtSurface {
    cols: usize,
    rows: usize,
    values: Vec<f64>,
    pub iterations_used: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub tol: f64,
}

impl XtSurface {
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, zone: Zone) -> f64 {
        self.values[zone.row * self.cols + zone.col]
    }

    pub fn value_at(&self, x: f64, y: f64) -> Result<f64, XtError> {
        Ok(self.value(zone_in_grid(x, y, self.cols, self.rows)?))
    }
}

/// Iterates from zero until the largest per-zone change drops below `tol`
/// or `max_iter` sweeps have run. Hitting the cap is reported through
/// `converged = false`, not as an error.
pub fn solve_xt(model: &GridModel, tol: f64, max_iter: usize) -> Result<XtSurface, XtError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(XtError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(XtError::InvalidParameter("max_iter must be positive".into()));
    }
    model.check()?;
    let mut values = vec![0.0; model.n_zones()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = bellman_step(model, &values);
        residual = max_abs_diff(&next, &values);
        values = next;
        iterations += 1;
        if residual < tol {
            break;
        }
    }
    Ok(XtSurface {
        cols: model.cols,
        rows: model.rows,
        values,
        iterations_used: iterations,
        final_residual: residual,
        converged: residual < tol,
        tol,
    })
}

/// The xT value of a successful move: destination zone value minus origin
/// zone value. Backward moves come out negative.
pub fn action_xt(surface: &XtSurface, action: &Action) -> Result<f64, XtError> {
    if !action.is_successful_move() {
        return Err(XtError::NotValuable {
            action_type: action.action_type,
            result: action.result,
        });
    }
    Ok(surface.value_at(action.end_x, action.end_y)? - surface.value_at(action.start_x, action.start_y)?)
}

/// Metadata stored beside an exported surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMeta {
    pub corpus_fingerprint: String,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Writes `col,row,xt` rows plus a `key = value` sidecar next to `path`.
pub fn write_surface(path: &Path, surface: &XtSurface, corpus_fingerprint: &str) -> Result<(), XtError> {
    let mut csv = String::from("col,row,xt\n");
    for col in 0..surface.cols {
        for row in 0..surface.rows {
            writeln!(csv, "{col},{row},{}", surface.value(Zone { col, row })).expect("string write");
        }
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| XtError::Io { path, source }
    };
    fs::write(path, csv).map_err(io(path))?;
    let meta = format!(
        "cols = {}\nrows = {}\ntol = {}\niterations_used = {}\nfinal_residual = {}\nconverged = {}\ncorpus_fingerprint = {}\n",
        surface.cols,
        surface.rows,
        surface.tol,
        surface.iterations_used,
        surface.final_residual,
        surface.converged,
        corpus_fingerprint
    );
    let side = sidecar_path(path);
    fs::write(&side, meta).map_err(io(&side))
}

pub fn read_surface(path: &Path) -> Result<(XtSurface, SurfaceMeta), XtError> {
    let bad = |reason: String| XtError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let side = sidecar_path(path);
    let meta_text = fs::read_to_string(&side).map_err(|source| XtError::Io {
        path: side.clone(),
        source,
    })?;
    let mut kv = std::collections::HashMap::new();
    for line in meta_text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("sidecar line without `=`: {line}")))?;
        kv.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    fn get<T: std::str::FromStr>(
        kv: &std::collections::HashMap<String, String>,
        key: &str,
    ) -> Result<T, String> {
        kv.get(key)
            .ok_or_else(|| format!("sidecar missing `{key}`"))?
            .parse()
            .map_err(|_| format!("sidecar key `{key}` unparseable"))
    }
    let cols: usize = get(&kv, "cols").map_err(bad)?;
    let rows: usize = get(&kv, "rows").map_err(bad)?;
    let mut values = vec![f64::NAN; cols * rows];
    let text = fs::read_to_string(path).map_err(|source| XtError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next() != Some("col,row,xt") {
        return Err(bad("expected header `col,row,xt`".into()));
    }
    for line in lines.filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let parsed = match parts.as_slice() {
            [c, r, v] => c
                .parse::<usize>()
                .ok()
                .zip(r.parse::<usize>().ok())
                .zip(v.parse::<f64>().ok()),
            _ => None,
        };
        let ((col, row), v) = parsed.ok_or_else(|| bad(format!("bad row `{line}`")))?;
        if col >= cols || row >= rows {
            return Err(bad(format!("zone ({col},{row}) outside {cols}x{rows}")));
        }
        values[row * cols + col] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(bad("surface is missing zones".into()));
    }
    let surface = XtSurface {
        cols,
        rows,
        values,
        iterations_used: get(&kv, "iterations_used").map_err(bad)?,
        final_residual: get(&kv, "final_residual").map_err(bad)?,
        converged: get(&kv, "converged").map_err(bad)?,
        tol: get(&kv, "tol").map_err(bad)?,
    };
    let meta = SurfaceMeta {
        corpus_fingerprint: get(&kv, "corpus_fingerprint").map_err(bad)?,
    };
    Ok((surface, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::generate_synthetic_corpus;

    fn act(ty: ActionType, ok: bool, start: (f64, f64), end: (f64, f64)) -> Action {
        Action {
            game_id: "g".into(),
            period: 1,
            time_seconds: 0.0,
            team_id: "A".into(),
            player_id: "p".into(),
            player_name: String::new(),
            start_x: start.0,
            start_y: start.1,
            end_x: end.0,
            end_y: end.1,
            action_type: ty,
            result: if ok { Outcome::Success } else { Outcome::Fail },
        }
    }

    fn two_zone() -> GridModel {
        // zone 0 = A (shoots, scores half the time), zone 1 = B (always moves to A)
        GridModel::from_parts(
            2,
            1,
            vec![1.0, 0.0],
            vec![0.5, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn zone_of_corners_and_reference_point() {
        assert_eq!(zone_of(0.0, 0.0).unwrap(), Zone { col: 0, row: 0 });
        assert_eq!(zone_of(105.0, 68.0).unwrap(), Zone { col: 15, row: 11 });
        assert_eq!(zone_of(52.0588, 34.4304).unwrap(), Zone { col: 7, row: 6 });
        assert!(matches!(zone_of(105.1, 3.0), Err(XtError::OffPitch { .. })));
        assert!(zone_of(3.0, -0.1).is_err());
    }

    #[test]
    fn shots_only_zone() {
        let shots: Vec<_> = (0..4)
            .map(|i| act(ActionType::Shot, i == 0, (100.0, 30.0), (105.0, 34.0)))
            .collect();
        let model = fit_grid(&[GameStream::new("g".into(), shots)]).unwrap();
        let z = model.index(zone_of(100.0, 30.0).unwrap());
        assert_eq!(model.shoot()[z], 1.0);
        assert_eq!(model.mov()[z], 0.0);
        assert_eq!(model.score()[z], 0.25);
    }

    #[test]
    fn passes_only_give_unit_transition() {
        let passes: Vec<_> = (0..3)
            .map(|_| act(ActionType::Pass, true, (10.0, 10.0), (60.0, 40.0)))
            .collect();
        let model = fit_grid(&[GameStream::new("g".into(), passes)]).unwrap();
        let a = model.index(zone_of(10.0, 10.0).unwrap());
        let b = model.index(zone_of(60.0, 40.0).unwrap());
        assert_eq!(model.transition_row(a)[b], 1.0);
        assert_eq!(model.shoot()[a], 0.0);
        assert_eq!(model.mov()[a], 1.0);
        // an untouched zone stays all-zero
        assert_eq!(model.transition_row(b).iter().sum::<f64>(), 0.0);
        assert_eq!(model.mov()[b], 0.0);
    }

    #[test]
    fn failed_moves_count_toward_move_share_only() {
        let actions = vec![
            act(ActionType::Pass, false, (10.0, 10.0), (60.0, 40.0)),
            act(ActionType::Shot, false, (10.0, 10.0), (105.0, 34.0)),
            act(ActionType::Dribble, true, (10.0, 10.0), (12.0, 10.0)),
        ];
        let model = fit_grid(&[GameStream::new("g".into(), actions)]).unwrap();
        let a = model.index(zone_of(10.0, 10.0).unwrap());
        assert!((model.shoot()[a] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(model.transition_row(a)[a], 0.5);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(fit_grid(&[]), Err(XtError::EmptyCorpus)));
        let only_da = vec![act(ActionType::Interception, true, (1.0, 1.0), (1.0, 1.0))];
        assert!(matches!(
            fit_grid(&[GameStream::new("g".into(), only_da)]),
            Err(XtError::EmptyCorpus)
        ));
    }

    #[test]
    fn no_goal_source_gives_zero_surface_in_one_sweep() {
        let n = 4;
        let model = GridModel::from_parts(
            2,
            2,
            vec![0.5; n],
            vec![0.0; n],
            vec![0.5; n],
            vec![0.25; n * n],
        )
        .unwrap();
        let s = solve_xt(&model, 1e-6, 100).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert_eq!(s.iterations_used, 1);
        assert!(s.converged);
    }

    #[test]
    fn two_zone_fixed_point() {
        let s = solve_xt(&two_zone(), 1e-9, 100).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5]);
        assert!(s.converged);
        assert_eq!(s.iterations_used, 3);
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let s = solve_xt(&two_zone(), 1e-9, 1).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations_used, 1);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(solve_xt(&two_zone(), 0.0, 10).is_err());
        assert!(solve_xt(&two_zone(), 1e-6, 0).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        let bad_sum = GridModel::from_parts(1, 1, vec![0.5], vec![0.0], vec![0.4], vec![1.0]);
        assert!(bad_sum.is_err());
        let bad_row = GridModel::from_parts(2, 1, vec![0.0; 2], vec![0.0; 2], vec![1.0; 2], vec![0.5, 0.7, 1.0, 0.0]);
        assert!(bad_row.is_err());
        let nan = GridModel::from_parts(1, 1, vec![f64::NAN], vec![0.0], vec![1.0], vec![1.0]);
        assert!(nan.is_err());
    }

    #[test]
    fn action_xt_is_a_delta() {
        let s = solve_xt(&two_zone(), 1e-9, 100).unwrap();
        // zone A spans x in [0, 52.5), zone B the rest
        let b_to_a = act(ActionType::Pass, true, (80.0, 30.0), (10.0, 30.0));
        assert_eq!(action_xt(&s, &b_to_a).unwrap(), 0.0);
        let same = act(ActionType::Clearance, true, (80.0, 30.0), (81.0, 30.0));
        assert_eq!(action_xt(&s, &same).unwrap(), 0.0);
        let failed = act(ActionType::Pass, false, (80.0, 30.0), (10.0, 30.0));
        assert!(matches!(action_xt(&s, &failed), Err(XtError::NotValuable { .. })));
        let tackle = act(ActionType::Tackle, true, (80.0, 30.0), (80.0, 30.0));
        assert!(action_xt(&s, &tackle).is_err());
    }

    #[test]
    fn fitted_surface_rewards_forward_passes() {
        let games = generate_synthetic_corpus(50, 7).unwrap();
        let model = fit_grid(&games).unwrap();
        let s = solve_xt(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let pass = act(ActionType::Pass, true, (20.0, 34.0), (90.0, 34.0));
        assert!(action_xt(&s, &pass).unwrap() > 0.0);
        let back = act(ActionType::Pass, true, (90.0, 34.0), (20.0, 34.0));
        assert!(action_xt(&s, &back).unwrap() < 0.0);
    }

    #[test]
    fn fit_matches_single_pass_counter() {
        let games = generate_synthetic_corpus(50, 7).unwrap();
        let model = fit_grid(&games).unwrap();
        model.check().unwrap();
        // independent tally keyed by (col,row) tuples
        let zone = |x: f64, y: f64| {
            (
                ((x * 16.0 / 105.0) as usize).min(15),
                ((y * 12.0 / 68.0) as usize).min(11),
            )
        };
        let mut shots = std::collections::HashMap::new();
        let mut goals = std::collections::HashMap::new();
        let mut moves = std::collections::HashMap::new();
        let mut flows = std::collections::HashMap::<_, u64>::new();
        let mut succ = std::collections::HashMap::new();
        for a in games.iter().flat_map(|g| &g.actions) {
            let z = zone(a.start_x, a.start_y);
            match a.action_type {
                ActionType::Shot => {
                    *shots.entry(z).or_insert(0u64) += 1;
                    if a.result == Outcome::Success {
                        *goals.entry(z).or_insert(0u64) += 1;
                    }
                }
                ActionType::Pass | ActionType::Dribble | ActionType::Cross | ActionType::Clearance => {
                    *moves.entry(z).or_insert(0u64) += 1;
                    if a.result == Outcome::Success {
                        *succ.entry(z).or_insert(0u64) += 1;
                        *flows.entry((z, zone(a.end_x, a.end_y))).or_insert(0) += 1;
                    }
                }
                _ => {}
            }
        }
        for col in 0..16 {
            for row in 0..12 {
                let z = (col, row);
                let i = model.index(Zone { col, row });
                let sh = *shots.get(&z).unwrap_or(&0) as f64;
                let mv = *moves.get(&z).unwrap_or(&0) as f64;
                let s_exp = if sh + mv > 0.0 { sh / (sh + mv) } else { 0.0 };
                assert!((model.shoot()[i] - s_exp).abs() < 1e-15);
                if sh + mv > 0.0 {
                    assert!((model.shoot()[i] + model.mov()[i] - 1.0).abs() < 1e-15);
                }
                let g_exp = if sh > 0.0 { *goals.get(&z).unwrap_or(&0) as f64 / sh } else { 0.0 };
                assert!((model.score()[i] - g_exp).abs() < 1e-15);
                let su = *succ.get(&z).unwrap_or(&0) as f64;
                let row_sum: f64 = model.transition_row(i).iter().sum();
                if su > 0.0 {
                    assert!((row_sum - su / mv).abs() < 1e-12);
                    for c2 in 0..16 {
                        for r2 in 0..12 {
                            let f = *flows.get(&(z, (c2, r2))).unwrap_or(&0) as f64;
                            let j = model.index(Zone { col: c2, row: r2 });
                            assert!((model.transition_row(i)[j] - f / mv).abs() < 1e-15);
                        }
                    }
                } else {
                    assert_eq!(row_sum, 0.0);
                }
            }
        }
    }

    #[test]
    fn merged_partial_counts_equal_whole_corpus_fit() {
        let games = generate_synthetic_corpus(6, 3).unwrap();
        let whole = fit_grid(&games).unwrap();
        let mut left = GridCounts::new(GRID_COLS, GRID_ROWS);
        let mut right = GridCounts::new(GRID_COLS, GRID_ROWS);
        for g in &games[..2] {
            left.add_game(g).unwrap();
        }
        for g in &games[2..] {
            right.add_game(g).unwrap();
        }
        right.merge(&left);
        assert_eq!(right.into_model().unwrap(), whole);
    }

    #[test]
    fn surface_export_round_trips() {
        let games = generate_synthetic_corpus(3, 11).unwrap();
        let s = solve_xt(&fit_grid(&games).unwrap(), 1e-6, 100).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        write_surface(&path, &s, "abc").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 193);
        let (back, meta) = read_surface(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(meta.corpus_fingerprint, "abc");
    }
}

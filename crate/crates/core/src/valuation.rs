//! Per-action DAxT values and per-player aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::events::{GameId, PlayerId};
use crate::net::{NetError, TrainedModel};
use crate::sequences::{DefensiveKind, FeatureTable, Provenance};

pub const DEFAULT_MIN_INTERCEPTIONS: usize = 100;
pub const DEFAULT_MIN_TACKLES: usize = 50;

#[derive(Debug, Error)]
pub enum ValuationError {
    #[error("table has window length {table}, model expects {model}")]
    WindowMismatch { table: usize, model: usize },
    #[error("row {row}: {source}")]
    Predict {
        row: usize,
        #[source]
        source: NetError,
    },
    #[error("row {row}: defensive row has no player")]
    MissingPlayer { row: usize },
    #[error("row {row}: prediction {value} is not finite")]
    NonFinite { row: usize, value: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuedAction {
    pub game_id: GameId,
    pub event_idx: usize,
    pub player_id: PlayerId,
    pub kind: DefensiveKind,
    pub daxt: f64,
    pub location: (f64, f64),
}

/// Predicts the xT of the move each defensive action prevented. The table
/// holds raw features; the model applies its own scaler.
pub fn value_defensive_actions(
    model: &TrainedModel,
    table: &FeatureTable,
    kind: DefensiveKind,
) -> Result<Vec<ValuedAction>, ValuationError> {
    if table.a != model.a {
        return Err(ValuationError::WindowMismatch {
            table: table.a,
            model: model.a,
        });
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let daxt = model
                .predict(&r.features)
                .map_err(|source| ValuationError::Predict { row, source })?;
            if !daxt.is_finite() {
                return Err(ValuationError::NonFinite { row, value: daxt });
            }
            let Provenance {
                game_id,
                event_idx,
                player_id,
                location,
            } = &r.provenance;
            Ok(ValuedAction {
                game_id: game_id.clone(),
                event_idx: *event_idx,
                player_id: player_id.clone().ok_or(ValuationError::MissingPlayer { row })?,
                kind,
                daxt,
                location: location.unwrap_or((f64::NAN, f64::NAN)),
            })
        })
        .collect()
}

/// Exact floating-point accumulator (Shewchuk's non-overlapping partials).
/// `value()` is the correctly rounded sum of everything added, independent
/// of order, so merged per-player totals reproduce the grand total bit for bit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, mut x: f64) {
        let mut kept = 0;
        for i in 0..self.partials.len() {
            let mut y = self.partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction, as in Python's math.fsum.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KindTotals {
    pub sum: ExactSum,
    pub count: usize,
}

impl KindTotals {
    pub fn total(&self) -> f64 {
        self.sum.value()
    }

    pub fn average(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total() / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerDefStats {
    pub player_id: PlayerId,
    pub interceptions: KindTotals,
    pub tackles: KindTotals,
}

impl PlayerDefStats {
    pub fn kind(&self, kind: DefensiveKind) -> &KindTotals {
        match kind {
            DefensiveKind::Interception => &self.interceptions,
            DefensiveKind::Tackle => &self.tackles,
        }
    }

    fn kind_mut(&mut self, kind: DefensiveKind) -> &mut KindTotals {
        match kind {
            DefensiveKind::Interception => &mut self.interceptions,
            DefensiveKind::Tackle => &mut self.tackles,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Every player with at least one valued action, ordered by id.
    pub players: Vec<PlayerDefStats>,
    pub min_interceptions: usize,
    pub min_tackles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderRow {
    pub player_id: PlayerId,
    pub value: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn threshold(&self, kind: DefensiveKind) -> usize {
        match kind {
            DefensiveKind::Interception => self.min_interceptions,
            DefensiveKind::Tackle => self.min_tackles,
        }
    }

    pub fn total(&self, kind: DefensiveKind) -> ExactSum {
        let mut s = ExactSum::default();
        for p in &self.players {
            s.merge(&p.kind(kind).sum);
        }
        s
    }

    pub fn get(&self, player: &PlayerId) -> Option<&PlayerDefStats> {
        self.players
            .binary_search_by(|p| p.player_id.cmp(player))
            .ok()
            .map(|i| &self.players[i])
    }

    /// Players by summed value, descending. Every player is included.
    pub fn totals_view(&self, kind: DefensiveKind) -> Vec<LeaderRow> {
        let rows = self
            .players
            .iter()
            .filter(|p| p.kind(kind).count > 0)
            .map(|p| LeaderRow {
                player_id: p.player_id.clone(),
                value: p.kind(kind).total(),
                count: p.kind(kind).count,
            })
            .collect();
        descending(rows)
    }

    /// Players by average value, descending, restricted to those meeting the
    /// kind's count threshold.
    pub fn averages_view(&self, kind: DefensiveKind) -> Vec<LeaderRow> {
        let min = self.threshold(kind);
        let rows = self
            .players
            .iter()
            .filter(|p| p.kind(kind).count >= min.max(1))
            .map(|p| LeaderRow {
                player_id: p.player_id.clone(),
                value: p.kind(kind).average().expect("count checked"),
                count: p.kind(kind).count,
            })
            .collect();
        descending(rows)
    }
}

fn descending(mut rows: Vec<LeaderRow>) -> Vec<LeaderRow> {
    rows.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.player_id.cmp(&b.player_id)));
    rows
}

pub fn aggregate_players(valued: &[ValuedAction], min_interceptions: usize, min_tackles: usize) -> Aggregate {
    let mut by_player: BTreeMap<&PlayerId, PlayerDefStats> = BTreeMap::new();
    for v in valued {
        let entry = by_player.entry(&v.player_id).or_insert_with(|| PlayerDefStats {
            player_id: v.player_id.clone(),
            interceptions: KindTotals::default(),
            tackles: KindTotals::default(),
        });
        let k = entry.kind_mut(v.kind);
        k.sum.add(v.daxt);
        k.count += 1;
    }
    Aggregate {
        players: by_player.into_values().collect(),
        min_interceptions,
        min_tackles,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ValuationError + '_ {
    move |source| ValuationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn opt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub const VALUED_HEADER: &str = "game_id,event_idx,player_id,kind,x,y,daxt";

pub fn write_valued_actions(path: &Path, valued: &[ValuedAction]) -> Result<(), ValuationError> {
    let mut out = format!("{VALUED_HEADER}\n");
    for v in valued {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            v.game_id,
            v.event_idx,
            v.player_id,
            v.kind.name(),
            opt_num(v.location.0),
            opt_num(v.location.1),
            v.daxt
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_valued_actions(path: &Path) -> Result<Vec<ValuedAction>, ValuationError> {
    let bad = |reason: String| ValuationError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if headers.iter().ne(VALUED_HEADER.split(',')) {
        return Err(bad(format!("expected header {VALUED_HEADER}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64, ValuationError> {
            if rec[j].is_empty() {
                return Ok(f64::NAN);
            }
            rec[j].parse().map_err(|_| bad(format!("line {line}: column {} is not a number", j + 1)))
        };
        let kind = match &rec[3] {
            "interception" => DefensiveKind::Interception,
            "tackle" => DefensiveKind::Tackle,
            other => return Err(bad(format!("line {line}: unknown kind {other:?}"))),
        };
        out.push(ValuedAction {
            game_id: rec[0].into(),
            event_idx: rec[1].parse().map_err(|_| bad(format!("line {line}: bad event_idx")))?,
            player_id: rec[2].into(),
            kind,
            location: (num(4)?, num(5)?),
            daxt: num(6)?,
        });
    }
    Ok(out)
}

pub fn write_player_stats(path: &Path, agg: &Aggregate) -> Result<(), ValuationError> {
    let mut out = String::from(
        "player_id,interception_sum,interception_count,interception_avg,tackle_sum,tackle_count,tackle_avg\n",
    );
    for p in &agg.players {
        let avg = |k: &KindTotals| k.average().map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.player_id,
            p.interceptions.total(),
            p.interceptions.count,
            avg(&p.interceptions),
            p.tackles.total(),
            p.tackles.count,
            avg(&p.tackles)
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// `player,value,count`, the layout of the leaderboard tables.
pub fn write_leaderboard(path: &Path, rows: &[LeaderRow]) -> Result<(), ValuationError> {
    let mut out = String::from("player,value,count\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.player_id, r.value, r.count).expect("string write");
    }
    fs::write(path, out).map_err(io_err(path))
}

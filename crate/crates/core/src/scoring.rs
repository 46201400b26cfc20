//! Defender score: Clearance xT and Pass xT per player, 0–100 normalization
//! within a position pool, the weighted score, ranking and the market-value
//! correlation.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::events::{ActionType, GameStream, PlayerId};
use crate::stats::{pearson, StatsError, TestResult};
use crate::valuation::Aggregate;
use crate::xt::{action_xt, XtError, XtSurface};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("empty player pool")]
    EmptyPool,
    #[error("{0} players overlap the market-value file; at least 3 are needed")]
    TooFewOverlapping(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Xt(#[from] XtError),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    CenterBack,
    FullBack,
    DefensiveMidfielder,
    Other,
}

impl Position {
    pub const ALL: [Position; 4] = [
        Position::CenterBack,
        Position::FullBack,
        Position::DefensiveMidfielder,
        Position::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Position::CenterBack => "center_back",
            Position::FullBack => "full_back",
            Position::DefensiveMidfielder => "defensive_midfielder",
            Position::Other => "other",
        }
    }

    /// Unknown labels fall into `Other`.
    pub fn from_label(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "center_back" | "centre_back" | "cb" => Position::CenterBack,
            "full_back" | "fb" | "left_back" | "right_back" => Position::FullBack,
            "defensive_midfielder" | "dm" | "cdm" => Position::DefensiveMidfielder,
            _ => Position::Other,
        }
    }
}

/// Per-player summed xT of successful clearances and successful passes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MoveTotals {
    pub cxt: f64,
    pub pxt: f64,
}

pub fn compute_cxt_pxt(
    games: &[GameStream],
    surface: &XtSurface,
) -> Result<BTreeMap<PlayerId, MoveTotals>, ScoringError> {
    let mut out: BTreeMap<PlayerId, MoveTotals> = BTreeMap::new();
    for a in games.iter().flat_map(|g| &g.actions) {
        if !a.result.is_success() {
            continue;
        }
        match a.action_type {
            ActionType::Clearance => out.entry(a.player_id.clone()).or_default().cxt += action_xt(surface, a)?,
            ActionType::Pass => out.entry(a.player_id.clone()).or_default().pxt += action_xt(surface, a)?,
            _ => {}
        }
    }
    Ok(out)
}

/// Cumulative raw features in score order: I_V, T_V, CxT, PxT.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub player_id: PlayerId,
    pub values: [f64; 4],
}

/// Joins the defensive totals with the move totals. Every player present in
/// either source appears; missing parts are 0.
pub fn raw_features(agg: &Aggregate, moves: &BTreeMap<PlayerId, MoveTotals>) -> Vec<RawFeatures> {
    let mut ids: Vec<&PlayerId> = agg.players.iter().map(|p| &p.player_id).chain(moves.keys()).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let (iv, tv) = agg
                .get(id)
                .map_or((0.0, 0.0), |p| (p.interceptions.total(), p.tackles.total()));
            let m = moves.get(id).copied().unwrap_or_default();
            RawFeatures {
                player_id: id.clone(),
                values: [iv, tv, m.cxt, m.pxt],
            }
        })
        .collect()
}

/// Per feature, `100 (v − min) / (max − min)`; a constant column maps to 0.
pub fn normalize_pool(pool: &[RawFeatures]) -> Result<Vec<[f64; 4]>, ScoringError> {
    if pool.is_empty() {
        return Err(ScoringError::EmptyPool);
    }
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for p in pool {
        for j in 0..4 {
            lo[j] = lo[j].min(p.values[j]);
            hi[j] = hi[j].max(p.values[j]);
        }
    }
    Ok(pool
        .iter()
        .map(|p| {
            std::array::from_fn(|j| {
                let span = hi[j] - lo[j];
                if span > 0.0 {
                    (100.0 * (p.values[j] - lo[j]) / span).clamp(0.0, 100.0)
                } else {
                    0.0
                }
            })
        })
        .collect())
}

/// Multipliers on each normalized feature. All 1.0 gives the plain score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub interception: f64,
    pub tackle: f64,
    pub clearance: f64,
    pub pass: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            interception: 1.0,
            tackle: 1.0,
            clearance: 1.0,
            pass: 1.0,
        }
    }
}

impl Weights {
    /// Parses `default` or `i,t,c,p`.
    pub fn parse(s: &str) -> Result<Self, ScoringError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("default") {
            return Ok(Self::default());
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ScoringError::InvalidWeights(format!("{s:?} is not four comma-separated numbers")))?;
        let [interception, tackle, clearance, pass] = parts[..] else {
            return Err(ScoringError::InvalidWeights(format!("expected 4 weights, got {}", parts.len())));
        };
        let w = Self { interception, tackle, clearance, pass };
        if w.as_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ScoringError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.interception, self.tackle, self.clearance, self.pass]
    }
}

/// `((I + T + C) / 3 + P) / 4` with each term scaled by its weight.
pub fn defender_score(features: [f64; 4], weights: &Weights) -> f64 {
    let [i, t, c, p] = features;
    ((weights.interception * i + weights.tackle * t + weights.clearance * c) / 3.0 + weights.pass * p) / 4.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenderScore {
    pub player_id: PlayerId,
    pub position: Position,
    pub raw: [f64; 4],
    pub normalized: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchRecord {
    pub goals_conceded: u32,
    pub appearances: u32,
}

/// Scores every player, normalizing within each position group. Players
/// with fewer than `min_appearances` (when a match file is given) are left
/// out of the pool. Output is grouped by position, then ordered by id.
pub fn score_players(
    pool: &[RawFeatures],
    positions: &HashMap<PlayerId, Position>,
    matches: Option<&HashMap<PlayerId, MatchRecord>>,
    min_appearances: u32,
    weights: &Weights,
) -> Result<Vec<DefenderScore>, ScoringError> {
    let mut groups: BTreeMap<Position, Vec<&RawFeatures>> = BTreeMap::new();
    for p in pool {
        if let Some(m) = matches {
            let apps = m.get(&p.player_id).map_or(0, |r| r.appearances);
            if apps < min_appearances {
                continue;
            }
        }
        let pos = positions.get(&p.player_id).copied().unwrap_or(Position::Other);
        groups.entry(pos).or_default().push(p);
    }
    let mut out = Vec::new();
    for (position, members) in groups {
        let owned: Vec<RawFeatures> = members.into_iter().cloned().collect();
        let normalized = normalize_pool(&owned)?;
        for (raw, norm) in owned.into_iter().zip(normalized) {
            out.push(DefenderScore {
                score: defender_score(norm, weights),
                player_id: raw.player_id,
                position,
                raw: raw.values,
                normalized: norm,
            });
        }
    }
    Ok(out)
}

/// Descending score, optionally restricted to one position. Ties break on id.
pub fn rank(scores: &[DefenderScore], position: Option<Position>) -> Vec<DefenderScore> {
    let mut out: Vec<DefenderScore> = scores
        .iter()
        .filter(|s| position.is_none_or(|p| s.position == p))
        .cloned()
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.player_id.cmp(&b.player_id)));
    out
}

/// Pearson r between score and market value over the players in both sets,
/// in score-table order.
pub fn correlate_market_value(
    scores: &[DefenderScore],
    values: &HashMap<PlayerId, f64>,
) -> Result<(TestResult, Vec<(f64, f64)>), ScoringError> {
    let pairs: Vec<(f64, f64)> = scores
        .iter()
        .filter_map(|s| values.get(&s.player_id).map(|v| (s.score, *v)))
        .collect();
    if pairs.len() < 3 {
        return Err(ScoringError::TooFewOverlapping(pairs.len()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok((pearson(&x, &y)?, pairs))
}

// ---- external files ----

fn read_records(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>, ScoringError> {
    let bad = |reason: String| ScoringError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| ScoringError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut idx = Vec::new();
    for name in expected {
        idx.push(
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| bad(format!("missing column {name}")))?,
        );
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        out.push(idx.iter().map(|&i| &rec[i]).collect());
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, column: &str, v: &str) -> Result<T, ScoringError> {
    v.parse().map_err(|_| ScoringError::Malformed {
        path: path.to_path_buf(),
        reason: format!("line {line}: {column} {v:?} is not valid"),
    })
}

/// `player_id,position`
pub fn read_positions(path: &Path) -> Result<HashMap<PlayerId, Position>, ScoringError> {
    Ok(read_records(path, &["player_id", "position"])?
        .into_iter()
        .map(|r| (PlayerId::from(&r[0]), Position::from_label(&r[1])))
        .collect())
}

/// `player_id,player_name,market_value_millions`
pub fn read_market_values(path: &Path) -> Result<HashMap<PlayerId, f64>, ScoringError> {
    read_records(path, &["player_id", "market_value_millions"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok((PlayerId::from(&r[0]), parse_field(path, i + 2, "market_value_millions", &r[1])?)))
        .collect()
}

/// `player_id,goals_conceded,appearances`
pub fn read_matches(path: &Path) -> Result<HashMap<PlayerId, MatchRecord>, ScoringError> {
    read_records(path, &["player_id", "goals_conceded", "appearances"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 2;
            Ok((
                PlayerId::from(&r[0]),
                MatchRecord {
                    goals_conceded: parse_field(path, line, "goals_conceded", &r[1])?,
                    appearances: parse_field(path, line, "appearances", &r[2])?,
                },
            ))
        })
        .collect()
}

fn write_text(path: &Path, text: String) -> Result<(), ScoringError> {
    fs::write(path, text).map_err(|source| ScoringError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_scores(path: &Path, scores: &[DefenderScore]) -> Result<(), ScoringError> {
    let mut out =
        String::from("player_id,position,iv_raw,tv_raw,cxt_raw,pxt_raw,iv,tv,cxt,pxt,score\n");
    for s in scores {
        let [a, b, c, d] = s.raw;
        let [e, f, g, h] = s.normalized;
        writeln!(out, "{},{},{a},{b},{c},{d},{e},{f},{g},{h},{}", s.player_id, s.position.name(), s.score)
            .expect("string write");
    }
    write_text(path, out)
}

/// Ranked table; with a match file the goals-conceded columns are joined in.
pub fn write_ranking(
    path: &Path,
    ranked: &[DefenderScore],
    matches: Option<&HashMap<PlayerId, MatchRecord>>,
) -> Result<(), ScoringError> {
    let mut out = String::from("player,score");
    if matches.is_some() {
        out.push_str(",goals_conceded,appearances,gc_per_appearance");
    }
    out.push('\n');
    for s in ranked {
        write!(out, "{},{}", s.player_id, s.score).expect("string write");
        if let Some(m) = matches {
            match m.get(&s.player_id) {
                Some(r) if r.appearances > 0 => {
                    let gca = f64::from(r.goals_conceded) / f64::from(r.appearances);
                    write!(out, ",{},{},{gca}", r.goals_conceded, r.appearances).expect("string write");
                }
                Some(r) => write!(out, ",{},0,", r.goals_conceded).expect("string write"),
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    write_text(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::generate_synthetic_corpus;
    use crate::xt::{fit_grid, solve_xt};
    use proptest::prelude::*;

    fn raw(id: &str, v: [f64; 4]) -> RawFeatures {
        RawFeatures { player_id: id.into(), values: v }
    }

    #[test]
    fn score_examples() {
        let w = Weights::default();
        assert_eq!(defender_score([100.0; 4], &w), 50.0);
        assert_eq!(defender_score([0.0; 4], &w), 0.0);
        assert!((defender_score([30.0, 60.0, 90.0, 80.0], &w) - 35.0).abs() < 1e-12);
    }

    #[test]
    fn pass_weighs_three_times_each_defensive_feature() {
        let w = Weights::default();
        let base = [30.0, 60.0, 90.0, 80.0];
        let h = 1e-3;
        let d = |j: usize| {
            let (mut up, mut dn) = (base, base);
            up[j] += h;
            dn[j] -= h;
            (defender_score(up, &w) - defender_score(dn, &w)) / (2.0 * h)
        };
        assert!((d(3) - 0.25).abs() < 1e-9);
        assert!((d(0) - 1.0 / 12.0).abs() < 1e-9);
        assert!((d(3) - 3.0 * d(0)).abs() < 1e-9);
    }

    #[test]
    fn normalize_examples() {
        let pool = [raw("a", [2.0, 1.0, 0.0, 5.0]), raw("b", [4.0, 1.0, 0.0, 5.0]), raw("c", [6.0, 1.0, 1.0, 5.0])];
        let n = normalize_pool(&pool).unwrap();
        assert_eq!([n[0][0], n[1][0], n[2][0]], [0.0, 50.0, 100.0]);
        assert!(n.iter().all(|r| r[1] == 0.0 && r[3] == 0.0));
        assert!(matches!(normalize_pool(&[]), Err(ScoringError::EmptyPool)));
    }

    #[test]
    fn weights_parse() {
        assert_eq!(Weights::parse("default").unwrap(), Weights::default());
        let w = Weights::parse("1, 2, 0.5, 1").unwrap();
        assert_eq!(w.as_array(), [1.0, 2.0, 0.5, 1.0]);
        assert!(Weights::parse("1,2,3").is_err());
        assert!(Weights::parse("1,2,3,-1").is_err());
    }

    #[test]
    fn cxt_pxt_match_filter_and_sum() {
        let games = generate_synthetic_corpus(3, 11).unwrap();
        let s = solve_xt(&fit_grid(&games).unwrap(), 1e-6, 100).unwrap();
        let got = compute_cxt_pxt(&games, &s).unwrap();
        let mut checked = 0;
        for (id, m) in &got {
            let mut c = 0.0;
            let mut p = 0.0;
            for g in &games {
                for a in &g.actions {
                    if &a.player_id == id && a.result.is_success() {
                        let d = s.value_at(a.end_x, a.end_y).unwrap() - s.value_at(a.start_x, a.start_y).unwrap();
                        match a.action_type {
                            ActionType::Clearance => c += d,
                            ActionType::Pass => p += d,
                            _ => {}
                        }
                    }
                }
            }
            assert!((m.cxt - c).abs() < 1e-12 && (m.pxt - p).abs() < 1e-12);
            checked += 1;
        }
        assert!(checked > 20);
    }

    fn scored(pool: &[RawFeatures]) -> Vec<DefenderScore> {
        score_players(pool, &HashMap::new(), None, 0, &Weights::default()).unwrap()
    }

    #[test]
    fn appearance_filter_and_positions() {
        let pool = [raw("a", [1.0, 2.0, 3.0, 4.0]), raw("b", [2.0, 1.0, 3.0, 0.0]), raw("c", [0.0; 4])];
        let positions: HashMap<PlayerId, Position> =
            [("a".into(), Position::CenterBack), ("b".into(), Position::CenterBack)].into();
        let matches: HashMap<PlayerId, MatchRecord> = [
            ("a".into(), MatchRecord { goals_conceded: 3, appearances: 10 }),
            ("b".into(), MatchRecord { goals_conceded: 1, appearances: 2 }),
            ("c".into(), MatchRecord { goals_conceded: 0, appearances: 10 }),
        ]
        .into();
        let s = score_players(&pool, &positions, Some(&matches), 5, &Weights::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].player_id.as_str(), s[0].position), ("a", Position::CenterBack));
        assert_eq!((s[1].player_id.as_str(), s[1].position), ("c", Position::Other));
        // Singleton pools are degenerate in every column.
        assert!(s.iter().all(|d| d.score == 0.0));
    }

    #[test]
    fn market_value_correlation() {
        let pool: Vec<RawFeatures> = (0..6).map(|i| raw(&format!("p{i}"), [i as f64; 4])).collect();
        let s = scored(&pool);
        let values: HashMap<PlayerId, f64> = s.iter().map(|d| (d.player_id.clone(), 2.0 * d.score + 1.0)).collect();
        let (r, pairs) = correlate_market_value(&s, &values).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert_eq!(pairs.len(), 6);
        let one: HashMap<PlayerId, f64> = [("p1".into(), 3.0)].into();
        assert!(matches!(correlate_market_value(&s, &one), Err(ScoringError::TooFewOverlapping(1))));
    }

    #[test]
    fn noisy_market_values_use_the_stats_pearson() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(25);
        let pool: Vec<RawFeatures> =
            (0..25).map(|i| raw(&format!("p{i:02}"), std::array::from_fn(|_| rng.gen_range(0.0..1.0)))).collect();
        let s = scored(&pool);
        let values: HashMap<PlayerId, f64> =
            s.iter().map(|d| (d.player_id.clone(), d.score * 0.4 + rng.gen_range(0.0..10.0))).collect();
        let (r, _) = correlate_market_value(&s, &values).unwrap();
        let x: Vec<f64> = s.iter().map(|d| d.score).collect();
        let y: Vec<f64> = s.iter().map(|d| values[&d.player_id]).collect();
        assert_eq!(r, pearson(&x, &y).unwrap());
    }

    #[test]
    fn ranking_is_descending_within_position() {
        let pool = [raw("a", [1.0; 4]), raw("b", [3.0; 4]), raw("c", [2.0; 4])];
        let r = rank(&scored(&pool), None);
        let ids: Vec<&str> = r.iter().map(|d| d.player_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert!(rank(&r, Some(Position::FullBack)).is_empty());
    }

    #[test]
    fn readers_parse_external_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pos.csv");
        fs::write(&p, "player_id,position\nx,center_back\ny, Full Back\nz,goalkeeper\n").unwrap();
        let pos = read_positions(&p).unwrap();
        assert_eq!(pos[&"y".into()], Position::FullBack);
        assert_eq!(pos[&"z".into()], Position::Other);
        let m = dir.path().join("mv.csv");
        fs::write(&m, "player_id,player_name,market_value_millions\nx,\"Doe, J\",12.5\n").unwrap();
        assert_eq!(read_market_values(&m).unwrap()[&"x".into()], 12.5);
        fs::write(&m, "player_id,player_name,market_value_millions\nx,J,lots\n").unwrap();
        assert!(matches!(read_market_values(&m), Err(ScoringError::Malformed { .. })));
        let g = dir.path().join("m.csv");
        fs::write(&g, "player_id,goals_conceded,appearances\nx,4,8\n").unwrap();
        assert_eq!(read_matches(&g).unwrap()[&"x".into()], MatchRecord { goals_conceded: 4, appearances: 8 });
    }

    proptest! {
        #[test]
        fn ranking_survives_affine_rescaling(
            vals in proptest::collection::vec(proptest::array::uniform4(-1.0f64..1.0), 2..30),
            scale in proptest::array::uniform4(0.1f64..50.0),
            shift in proptest::array::uniform4(-10.0f64..10.0),
        ) {
            let pool: Vec<RawFeatures> =
                vals.iter().enumerate().map(|(i, v)| raw(&format!("p{i:02}"), *v)).collect();
            let moved: Vec<RawFeatures> = pool
                .iter()
                .map(|r| raw(r.player_id.as_str(), std::array::from_fn(|j| scale[j] * r.values[j] + shift[j])))
                .collect();
            let a = rank(&scored(&pool), None);
            let b = rank(&scored(&moved), None);
            // Compare orderings with ties collapsed, since rescaling can split exact ties by rounding.
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.score - y.score).abs() < 1e-9);
            }
            let ids_a: Vec<_> = a.iter().map(|d| d.player_id.clone()).collect();
            let ids_b: Vec<_> = b.iter().map(|d| d.player_id.clone()).collect();
            let strict = a.windows(2).all(|w| w[0].score - w[1].score > 1e-9);
            if strict {
                prop_assert_eq!(ids_a, ids_b);
            }
            for d in &a {
                prop_assert!((0.0..=50.0).contains(&d.score));
                prop_assert!(d.normalized.iter().all(|v| (0.0..=100.0).contains(v)));
            }
        }
    }
}

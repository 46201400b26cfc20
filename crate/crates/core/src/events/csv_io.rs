use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{
    count_inversions, Action, ActionType, EventError, GameId, GameStream, Outcome, PITCH_LENGTH,
    PITCH_WIDTH,
};

pub const SPADL_HEADER: [&str; 12] = [
    "game_id",
    "period",
    "time_seconds",
    "team_id",
    "player_id",
    "start_x",
    "start_y",
    "end_x",
    "end_y",
    "result_id",
    "type_name",
    "player_name",
];

const REQUIRED: [&str; 11] = [
    "game_id",
    "period",
    "time_seconds",
    "team_id",
    "player_id",
    "start_x",
    "start_y",
    "end_x",
    "end_y",
    "result_id",
    "type_name",
];

/// Ingestion counters, printed as a one-line summary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub clamped: usize,
    pub unknown_types: usize,
    pub out_of_order: usize,
    pub zero_length_games: usize,
    /// First few rejection messages, `line: reason`.
    pub rejections: Vec<String>,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows_read={} rows_rejected={} clamped={} unknown_types={} out_of_order={} zero_length_games={}",
            self.rows_read,
            self.rows_rejected,
            self.clamped,
            self.unknown_types,
            self.out_of_order,
            self.zero_length_games
        )?;
        for r in &self.rejections {
            write!(f, "\n  rejected {r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub games: Vec<GameStream>,
    pub diagnostics: Diagnostics,
}

pub fn parse_spadl_csv(path: impl AsRef<Path>) -> Result<ParsedCorpus, EventError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spadl_reader(file)
}

/// Parses SPADL rows, grouping by game in order of first appearance.
pub fn parse_spadl_reader<R: Read>(reader: R) -> Result<ParsedCorpus, EventError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let mut cols = HashMap::new();
    for name in REQUIRED {
        let idx = index_of(name).ok_or(EventError::MissingColumn(name))?;
        cols.insert(name, idx);
    }
    let name_col = index_of("player_name");

    let mut diag = Diagnostics::default();
    let mut order: Vec<GameId> = Vec::new();
    let mut grouped: HashMap<GameId, (Vec<Action>, usize)> = HashMap::new();

    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        diag.rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                reject(&mut diag, line, e.to_string());
                continue;
            }
        };
        let field = |name: &str| record.get(cols[name]).unwrap_or("");
        match parse_row(&field, name_col.and_then(|c| record.get(c))) {
            Ok((action, clamps)) => {
                diag.clamped += clamps;
                if action.action_type == ActionType::Other {
                    diag.unknown_types += 1;
                }
                let slot = grouped.entry(action.game_id.clone()).or_insert_with(|| {
                    order.push(action.game_id.clone());
                    (Vec::new(), 0)
                });
                slot.1 += clamps;
                slot.0.push(action);
            }
            Err(reason) => reject(&mut diag, line, reason),
        }
    }

    let games = order
        .into_iter()
        .map(|id| {
            let (actions, clamped) = grouped.remove(&id).expect("grouped by key");
            diag.out_of_order += count_inversions(&actions);
            let mut game = GameStream::new(id, actions);
            game.clamped = clamped;
            game
        })
        .collect();
    Ok(ParsedCorpus {
        games,
        diagnostics: diag,
    })
}

fn reject(diag: &mut Diagnostics, line: usize, reason: String) {
    diag.rows_rejected += 1;
    if diag.rejections.len() < 10 {
        diag.rejections.push(format!("line {line}: {reason}"));
    }
}

fn parse_row<'a>(
    field: &dyn Fn(&str) -> &'a str,
    player_name: Option<&str>,
) -> Result<(Action, usize), String> {
    let num = |name: &str| -> Result<f64, String> {
        let raw = field(name);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("column `{name}` is not a finite number: {raw:?}")),
        }
    };
    let period: u8 = field("period")
        .parse()
        .map_err(|_| format!("column `period` is not an integer: {:?}", field("period")))?;
    if !(1..=2).contains(&period) {
        return Err(format!("period {period} outside 1..2"));
    }
    let time_seconds = num("time_seconds")?;
    if time_seconds < 0.0 {
        return Err(format!("negative time_seconds {time_seconds}"));
    }
    let result_id: i64 = field("result_id")
        .parse()
        .map_err(|_| format!("column `result_id` is not an integer: {:?}", field("result_id")))?;

    let mut clamps = 0;
    let mut coord = |name: &str, max: f64| -> Result<f64, String> {
        let v = num(name)?;
        let c = v.clamp(0.0, max);
        if c != v {
            clamps += 1;
        }
        Ok(c)
    };
    let start_x = coord("start_x", PITCH_LENGTH)?;
    let start_y = coord("start_y", PITCH_WIDTH)?;
    let end_x = coord("end_x", PITCH_LENGTH)?;
    let end_y = coord("end_y", PITCH_WIDTH)?;

    let action = Action {
        game_id: field("game_id").into(),
        period,
        time_seconds,
        team_id: field("team_id").into(),
        player_id: field("player_id").into(),
        player_name: player_name.unwrap_or("").to_owned(),
        start_x,
        start_y,
        end_x,
        end_y,
        action_type: ActionType::from_name(field("type_name")),
        result: if result_id == 1 {
            Outcome::Success
        } else {
            Outcome::Fail
        },
    };
    Ok((action, clamps))
}

pub fn write_spadl_csv(path: impl AsRef<Path>, games: &[GameStream]) -> Result<(), EventError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_spadl_writer(file, games)
}

/// Writes the canonical CSV form. Floats use the shortest round-trip
/// representation, so parsing the output reproduces the stream exactly.
pub fn write_spadl_writer<W: Write>(writer: W, games: &[GameStream]) -> Result<(), EventError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SPADL_HEADER)?;
    for game in games {
        for a in &game.actions {
            wtr.write_record([
                a.game_id.as_str(),
                &a.period.to_string(),
                &a.time_seconds.to_string(),
                a.team_id.as_str(),
                a.player_id.as_str(),
                &a.start_x.to_string(),
                &a.start_y.to_string(),
                &a.end_x.to_string(),
                &a.end_y.to_string(),
                &a.result.result_id().to_string(),
                a.action_type.name(),
                &a.player_name,
            ])?;
        }
    }
    wtr.flush().map_err(|source| EventError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

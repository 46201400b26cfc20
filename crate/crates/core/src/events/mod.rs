//! Canonical action records and the streams they form.

mod csv_io;
mod synth;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{parse_spadl_csv, parse_spadl_reader, write_spadl_csv, write_spadl_writer, Diagnostics, ParsedCorpus, SPADL_HEADER};
pub use synth::{generate_synthetic_corpus, generate_with_config, PlayerProfile, Role, SynthConfig, SynthLeague};

/// Pitch length in meters; the acting team always attacks toward `x = PITCH_LENGTH`.
pub const PITCH_LENGTH: f64 = 105.0;
/// Pitch width in meters.
pub const PITCH_WIDTH: f64 = 68.0;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Opaque game identifier.
    GameId
);
id_newtype!(
    /// Opaque team identifier.
    TeamId
);
id_newtype!(
    /// Opaque player identifier.
    PlayerId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Pass,
    Dribble,
    Cross,
    Shot,
    Clearance,
    Interception,
    Tackle,
    Other,
}

impl ActionType {
    pub const ALL: [ActionType; 8] = [
        ActionType::Pass,
        ActionType::Dribble,
        ActionType::Cross,
        ActionType::Shot,
        ActionType::Clearance,
        ActionType::Interception,
        ActionType::Tackle,
        ActionType::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Pass => "pass",
            ActionType::Dribble => "dribble",
            ActionType::Cross => "cross",
            ActionType::Shot => "shot",
            ActionType::Clearance => "clearance",
            ActionType::Interception => "interception",
            ActionType::Tackle => "tackle",
            ActionType::Other => "other",
        }
    }

    /// Maps a SPADL type name onto the vocabulary. Take-ons and carries are
    /// folded into `Dribble`; anything unrecognised becomes `Other`.
    pub fn from_name(name: &str) -> ActionType {
        match name.trim().to_ascii_lowercase().as_str() {
            "pass" => ActionType::Pass,
            "dribble" | "take_on" | "carry" => ActionType::Dribble,
            "cross" => ActionType::Cross,
            "shot" => ActionType::Shot,
            "clearance" => ActionType::Clearance,
            "interception" => ActionType::Interception,
            "tackle" => ActionType::Tackle,
            _ => ActionType::Other,
        }
    }

    /// Actions that carry the ball from one zone to another and so have an xT value.
    pub fn is_moving(self) -> bool {
        matches!(
            self,
            ActionType::Pass | ActionType::Dribble | ActionType::Cross | ActionType::Clearance
        )
    }

    pub fn is_defensive(self) -> bool {
        matches!(self, ActionType::Interception | ActionType::Tackle)
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Fail,
}

impl Outcome {
    pub fn result_id(self) -> u8 {
        match self {
            Outcome::Success => 1,
            Outcome::Fail => 0,
        }
    }

    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

/// One on-ball action in SPADL form. Coordinates are in meters, oriented so
/// that the acting team attacks toward `x = 105`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub game_id: GameId,
    pub period: u8,
    pub time_seconds: f64,
    pub team_id: TeamId,
    pub player_id: PlayerId,
    pub player_name: String,
    pub start_x: f64,
    pub start_y: f64,
    pub end_x: f64,
    pub end_y: f64,
    pub action_type: ActionType,
    pub result: Outcome,
}

impl Action {
    pub fn is_successful_move(&self) -> bool {
        self.action_type.is_moving() && self.result.is_success()
    }

    fn order_key_cmp(&self, other: &Action) -> Ordering {
        self.period
            .cmp(&other.period)
            .then(self.time_seconds.total_cmp(&other.time_seconds))
    }
}

/// All actions of one game, both teams interleaved in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct GameStream {
    pub game_id: GameId,
    pub actions: Vec<Action>,
    pub teams: BTreeSet<TeamId>,
    /// Coordinates clamped onto the pitch while ingesting this game.
    pub clamped: usize,
}

impl GameStream {
    /// Builds a stream, stably sorting actions by `(period, time_seconds)`.
    pub fn new(game_id: GameId, mut actions: Vec<Action>) -> Self {
        actions.sort_by(Action::order_key_cmp);
        let teams = actions.iter().map(|a| a.team_id.clone()).collect();
        Self {
            game_id,
            actions,
            teams,
            clamped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Returns a copy with the ordering invariant restored.
    pub fn sorted(&self) -> Self {
        let mut game = GameStream::new(self.game_id.clone(), self.actions.clone());
        game.clamped = self.clamped;
        game
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamReport {
    /// Pairs of actions whose order contradicts `(period, time_seconds)`.
    pub out_of_order: usize,
    pub unknown_types: usize,
    pub clamped: usize,
    pub zero_length: bool,
}

impl fmt::Display for StreamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "out_of_order={} unknown_types={} clamped={} zero_length={}",
            self.out_of_order, self.unknown_types, self.clamped, self.zero_length
        )
    }
}

/// Reports problems without altering the stream. Unknown types are actions
/// mapped to [`ActionType::Other`].
pub fn validate_stream(game: &GameStream) -> StreamReport {
    StreamReport {
        out_of_order: count_inversions(&game.actions),
        unknown_types: game
            .actions
            .iter()
            .filter(|a| a.action_type == ActionType::Other)
            .count(),
        clamped: game.clamped,
        zero_length: game.actions.is_empty(),
    }
}

/// Counts inversions of the `(period, time_seconds)` key by merge sort.
pub(crate) fn count_inversions(actions: &[Action]) -> usize {
    fn sort_count(keys: &mut [(u8, f64)], buf: &mut Vec<(u8, f64)>) -> usize {
        let n = keys.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort_count(&mut keys[..mid], buf) + sort_count(&mut keys[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if cmp_key(&keys[j], &keys[i]) == Ordering::Less {
                inv += mid - i;
                buf.push(keys[j]);
                j += 1;
            } else {
                buf.push(keys[i]);
                i += 1;
            }
        }
        buf.extend_from_slice(&keys[i..mid]);
        buf.extend_from_slice(&keys[j..n]);
        keys.copy_from_slice(buf);
        inv
    }
    fn cmp_key(a: &(u8, f64), b: &(u8, f64)) -> Ordering {
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
    }

    let mut keys: Vec<(u8, f64)> = actions.iter().map(|a| (a.period, a.time_seconds)).collect();
    let mut buf = Vec::with_capacity(keys.len());
    sort_count(&mut keys, &mut buf)
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid synthetic corpus request: {0}")]
    InvalidRequest(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn action(period: u8, t: f64, team: &str, ty: ActionType) -> Action {
        Action {
            game_id: "g".into(),
            period,
            time_seconds: t,
            team_id: team.into(),
            player_id: format!("{team}-p").into(),
            player_name: String::new(),
            start_x: 50.0,
            start_y: 34.0,
            end_x: 60.0,
            end_y: 34.0,
            action_type: ty,
            result: Outcome::Success,
        }
    }

    fn brute_inversions(actions: &[Action]) -> usize {
        let mut n = 0;
        for i in 0..actions.len() {
            for j in i + 1..actions.len() {
                if actions[i].order_key_cmp(&actions[j]) == Ordering::Greater {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn well_formed_game_reports_nothing() {
        let actions: Vec<_> = (0..10)
            .map(|i| action(1, i as f64, "A", ActionType::Pass))
            .collect();
        let game = GameStream::new("g".into(), actions);
        assert_eq!(validate_stream(&game), StreamReport::default());
    }

    #[test]
    fn unknown_type_is_counted() {
        let mut actions: Vec<_> = (0..5)
            .map(|i| action(1, i as f64, "A", ActionType::Pass))
            .collect();
        actions[2].action_type = ActionType::from_name("foul");
        let game = GameStream::new("g".into(), actions);
        assert_eq!(validate_stream(&game).unknown_types, 1);
    }

    #[test]
    fn swapped_times_count_one_inversion_then_sort_fixes() {
        let mut actions: Vec<_> = (0..6)
            .map(|i| action(1, i as f64, "A", ActionType::Pass))
            .collect();
        actions.swap(2, 3);
        let raw = GameStream {
            game_id: "g".into(),
            teams: ["A".into()].into_iter().collect(),
            actions,
            clamped: 0,
        };
        assert_eq!(brute_inversions(&raw.actions), 1);
        assert_eq!(validate_stream(&raw).out_of_order, 1);
        assert_eq!(validate_stream(&raw.sorted()).out_of_order, 0);
    }

    #[test]
    fn empty_game_is_zero_length() {
        let game = GameStream::new("g".into(), vec![]);
        assert!(validate_stream(&game).zero_length);
    }

    #[test]
    fn sort_is_stable_on_ties() {
        let mut a = action(1, 2.0, "A", ActionType::Dribble);
        let mut b = action(1, 2.0, "A", ActionType::Pass);
        a.player_id = "first".into();
        b.player_id = "second".into();
        let c = action(1, 1.0, "B", ActionType::Tackle);
        let game = GameStream::new("g".into(), vec![a, b, c]);
        let ids: Vec<_> = game.actions.iter().map(|a| a.player_id.as_str()).collect();
        assert_eq!(ids, ["B-p", "first", "second"]);
        assert_eq!(game.teams.len(), 2);
    }

    #[test]
    fn period_dominates_time() {
        let a = action(2, 1.0, "A", ActionType::Pass);
        let b = action(1, 2000.0, "A", ActionType::Pass);
        let game = GameStream::new("g".into(), vec![a, b]);
        assert_eq!(game.actions[0].period, 1);
    }

    proptest::proptest! {
        #[test]
        fn merge_inversions_match_brute_force(keys in proptest::collection::vec((1u8..=2, 0u32..20), 0..40)) {
            let actions: Vec<_> = keys
                .iter()
                .map(|&(p, t)| action(p, t as f64, "A", ActionType::Pass))
                .collect();
            proptest::prop_assert_eq!(count_inversions(&actions), brute_inversions(&actions));
        }
    }

    #[test]
    fn type_name_mapping() {
        assert_eq!(ActionType::from_name("take_on"), ActionType::Dribble);
        assert_eq!(ActionType::from_name("throw_in"), ActionType::Other);
        for ty in ActionType::ALL {
            assert_eq!(ActionType::from_name(ty.name()), ty);
        }
        assert!(ActionType::Clearance.is_moving());
        assert!(!ActionType::Interception.is_moving());
        assert!(!ActionType::Shot.is_moving());
    }
}

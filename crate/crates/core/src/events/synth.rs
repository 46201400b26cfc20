//! Seeded synthetic league: possession chains that mimic the shape of real
//! SPADL streams closely enough to exercise every stage of the pipeline.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::{
    Action, ActionType, EventError, GameId, GameStream, Outcome, PlayerId, TeamId, PITCH_LENGTH,
    PITCH_WIDTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Goalkeeper,
    CenterBack,
    FullBack,
    DefensiveMidfielder,
    Midfielder,
    Winger,
    Striker,
}

impl Role {
    const SQUAD: [Role; 11] = [
        Role::Goalkeeper,
        Role::CenterBack,
        Role::CenterBack,
        Role::FullBack,
        Role::FullBack,
        Role::DefensiveMidfielder,
        Role::Midfielder,
        Role::Midfielder,
        Role::Winger,
        Role::Winger,
        Role::Striker,
    ];

    /// Typical x position (own frame) the role operates around.
    fn home_x(self) -> f64 {
        match self {
            Role::Goalkeeper => 5.0,
            Role::CenterBack => 22.0,
            Role::FullBack => 32.0,
            Role::DefensiveMidfielder => 42.0,
            Role::Midfielder => 55.0,
            Role::Winger => 75.0,
            Role::Striker => 88.0,
        }
    }

    fn abbrev(self) -> &'static str {
        match self {
            Role::Goalkeeper => "GK",
            Role::CenterBack => "CB",
            Role::FullBack => "FB",
            Role::DefensiveMidfielder => "DM",
            Role::Midfielder => "CM",
            Role::Winger => "W",
            Role::Striker => "ST",
        }
    }

    fn base_value(self) -> f64 {
        match self {
            Role::Goalkeeper => 12.0,
            Role::CenterBack => 25.0,
            Role::FullBack => 20.0,
            Role::DefensiveMidfielder => 28.0,
            Role::Midfielder => 30.0,
            Role::Winger => 35.0,
            Role::Striker => 40.0,
        }
    }

    /// Position label used by the scoring positions file.
    pub fn position_label(self) -> &'static str {
        match self {
            Role::CenterBack => "center_back",
            Role::FullBack => "full_back",
            Role::DefensiveMidfielder => "defensive_midfielder",
            _ => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerProfile {
    pub player_id: PlayerId,
    pub team_id: TeamId,
    pub name: String,
    pub role: Role,
    /// Latent defending ability; scales how often the player makes defensive actions.
    pub defending: f64,
    pub market_value_millions: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub actions_per_game: usize,
    pub n_teams: usize,
    /// Chance per on-ball step of an unmodelled event (foul, throw-in, ...).
    pub other_rate: f64,
    /// Base chance per step that the carrier is tackled before acting.
    pub tackle_rate: f64,
    pub tackle_success: f64,
    /// Chance a failed pass or cross is followed by an opponent interception.
    pub interception_after_failed_pass: f64,
    /// Chance a failed dribble is followed by an opponent tackle.
    pub tackle_after_failed_dribble: f64,
    /// Clearance chance at the own goal line, fading to zero at x = 30.
    pub clearance_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            actions_per_game: 1000,
            n_teams: 8,
            other_rate: 0.03,
            tackle_rate: 0.035,
            tackle_success: 0.65,
            interception_after_failed_pass: 0.5,
            tackle_after_failed_dribble: 0.6,
            clearance_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthLeague {
    pub players: Vec<PlayerProfile>,
    pub games: Vec<GameStream>,
}

impl SynthLeague {
    /// `(player, goals conceded, appearances)` per player. Every squad member
    /// plays every game of their team.
    pub fn match_records(&self) -> Vec<(PlayerId, u32, u32)> {
        let mut per_team: std::collections::BTreeMap<&TeamId, (u32, u32)> = Default::default();
        for g in &self.games {
            for team in &g.teams {
                let conceded = g
                    .actions
                    .iter()
                    .filter(|a| a.action_type == ActionType::Shot && a.result.is_success() && &a.team_id != team)
                    .count() as u32;
                let e = per_team.entry(team).or_default();
                e.0 += conceded;
                e.1 += 1;
            }
        }
        self.players
            .iter()
            .map(|p| {
                let (gc, apps) = per_team.get(&p.team_id).copied().unwrap_or_default();
                (p.player_id.clone(), gc, apps)
            })
            .collect()
    }
}

/// `n_games` seeded games with the default configuration.
pub fn generate_synthetic_corpus(n_games: usize, seed: u64) -> Result<Vec<GameStream>, EventError> {
    Ok(generate_with_config(n_games, seed, &SynthConfig::default())?.games)
}

pub fn generate_with_config(
    n_games: usize,
    seed: u64,
    config: &SynthConfig,
) -> Result<SynthLeague, EventError> {
    if n_games < 1 {
        return Err(EventError::InvalidRequest("n_games must be at least 1".into()));
    }
    if config.n_teams < 2 {
        return Err(EventError::InvalidRequest("need at least two teams".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players = league_players(config.n_teams, &mut rng);
    let games = (0..n_games)
        .map(|g| {
            let home = g % config.n_teams;
            let away = (home + 1 + (g / config.n_teams) % (config.n_teams - 1)) % config.n_teams;
            let sim = GameSim {
                config,
                game_id: GameId(format!("{}", 10_000 + g)),
                squads: [squad(&players, home), squad(&players, away)],
                actions: Vec::with_capacity(config.actions_per_game + 8),
            };
            sim.run(&mut rng)
        })
        .collect();
    Ok(SynthLeague { players, games })
}

fn league_players(n_teams: usize, rng: &mut ChaCha8Rng) -> Vec<PlayerProfile> {
    let noise = Normal::new(0.0, 0.35).expect("valid sd");
    let mut players = Vec::with_capacity(n_teams * Role::SQUAD.len());
    for t in 0..n_teams {
        let team_id = TeamId(format!("T{t:02}"));
        for (k, &role) in Role::SQUAD.iter().enumerate() {
            let defending: f64 = rng.gen_range(0.5..1.5);
            let value = role.base_value() * defending * f64::exp(noise.sample(rng));
            players.push(PlayerProfile {
                player_id: PlayerId(format!("T{t:02}P{k:02}")),
                team_id: team_id.clone(),
                name: format!("T{t:02} {}{k}", role.abbrev()),
                role,
                defending,
                market_value_millions: round_to(value, 2),
            });
        }
    }
    players
}

fn squad(players: &[PlayerProfile], team: usize) -> Vec<PlayerProfile> {
    let n = Role::SQUAD.len();
    players[team * n..(team + 1) * n].to_vec()
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (v * k).round() / k
}

#[derive(Clone, Copy)]
enum Kind {
    Attack,
    Defend,
}

struct GameSim<'a> {
    config: &'a SynthConfig,
    game_id: GameId,
    squads: [Vec<PlayerProfile>; 2],
    actions: Vec<Action>,
}

struct Ball {
    side: usize,
    x: f64,
    y: f64,
    last_dx: f64,
}

impl Ball {
    fn turnover(&mut self, x: f64, y: f64) {
        self.side = 1 - self.side;
        self.x = PITCH_LENGTH - x;
        self.y = PITCH_WIDTH - y;
        self.last_dx = 0.0;
    }

    fn restart(&mut self, side: usize, x: f64, y: f64) {
        self.side = side;
        self.x = x;
        self.y = y;
        self.last_dx = 0.0;
    }
}

impl GameSim<'_> {
    fn run(mut self, rng: &mut ChaCha8Rng) -> GameStream {
        let gap = Exp::new(1.0 / 3.0).expect("positive rate");
        let per_period = self.config.actions_per_game / 2;
        for period in 1..=2u8 {
            let mut ball = Ball {
                side: usize::from(period == 2),
                x: 52.5,
                y: 34.0,
                last_dx: 0.0,
            };
            let mut t = 0.0;
            let target = self.actions.len() + per_period;
            while self.actions.len() < target {
                t = round_to(t + 1.0 + gap.sample(rng), 1);
                self.step(period, t, &mut ball, rng);
            }
        }
        let mut game = GameStream::new(self.game_id.clone(), self.actions);
        // Both teams appear in the metadata even if one never touched the ball.
        for s in &self.squads {
            game.teams.insert(s[0].team_id.clone());
        }
        game
    }

    fn pick(&self, side: usize, x: f64, kind: Kind, rng: &mut ChaCha8Rng) -> &PlayerProfile {
        let squad = &self.squads[side];
        let weights: Vec<f64> = squad
            .iter()
            .map(|p| {
                let mut w = (-(x - p.role.home_x()).abs() / 12.0).exp();
                if p.role == Role::Goalkeeper && x > 15.0 {
                    w *= 0.2;
                }
                if let Kind::Defend = kind {
                    w *= p.defending;
                }
                w
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (p, w) in squad.iter().zip(&weights) {
            if u < *w {
                return p;
            }
            u -= w;
        }
        squad.last().expect("non-empty squad")
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        period: u8,
        t: f64,
        player: PlayerProfile,
        ty: ActionType,
        start: (f64, f64),
        end: (f64, f64),
        ok: bool,
    ) {
        let cx = |v: f64| round_to(v.clamp(0.0, PITCH_LENGTH), 4);
        let cy = |v: f64| round_to(v.clamp(0.0, PITCH_WIDTH), 4);
        self.actions.push(Action {
            game_id: self.game_id.clone(),
            period,
            time_seconds: t,
            team_id: player.team_id,
            player_id: player.player_id,
            player_name: player.name,
            start_x: cx(start.0),
            start_y: cy(start.1),
            end_x: cx(end.0),
            end_y: cy(end.1),
            action_type: ty,
            result: if ok { Outcome::Success } else { Outcome::Fail },
        });
    }

    fn step(&mut self, period: u8, t: f64, ball: &mut Ball, rng: &mut ChaCha8Rng) {
        let cfg = self.config;
        let (x, y) = (ball.x, ball.y);
        let att = ball.side;
        let def = 1 - att;
        let (dx_def, dy_def) = (PITCH_LENGTH - x, PITCH_WIDTH - y);

        if rng.gen::<f64>() < cfg.other_rate {
            let p = self.pick(att, x, Kind::Attack, rng).clone();
            self.emit(period, t, p, ActionType::Other, (x, y), (x, y), true);
            return;
        }

        // Pressure grows as the attack approaches the defenders' goal.
        if rng.gen::<f64>() < cfg.tackle_rate * (0.5 + x / PITCH_LENGTH) {
            let p = self.pick(def, dx_def, Kind::Defend, rng).clone();
            let won = rng.gen::<f64>() < cfg.tackle_success;
            self.emit(period, t, p, ActionType::Tackle, (dx_def, dy_def), (dx_def, dy_def), won);
            if won {
                ball.turnover(x, y);
            }
            return;
        }

        let goal_dist = (PITCH_LENGTH - x).hypot(34.0 - y);
        let shot_p = if x > 80.0 { 0.45 * (-goal_dist / 9.0).exp() } else { 0.0 };
        if rng.gen::<f64>() < shot_p {
            let p = self.pick(att, x, Kind::Attack, rng).clone();
            let scored = rng.gen::<f64>() < 0.5 * (-goal_dist / 8.0).exp();
            let aim = 34.0 + Normal::new(0.0, 2.0).expect("sd").sample(rng);
            self.emit(period, t, p, ActionType::Shot, (x, y), (PITCH_LENGTH, aim), scored);
            if scored {
                ball.restart(def, 52.5, 34.0);
            } else {
                ball.restart(def, 5.5, 34.0);
            }
            return;
        }

        if x < 30.0 && rng.gen::<f64>() < cfg.clearance_rate * (1.0 - x / 30.0) {
            let p = self.pick(att, x, Kind::Attack, rng).clone();
            let end = (x + rng.gen_range(30.0..55.0), rng.gen_range(5.0..63.0));
            let kept = rng.gen::<f64>() < 0.55;
            self.emit(period, t, p, ActionType::Clearance, (x, y), end, kept);
            let end = self.last_end();
            if kept {
                ball.last_dx = end.0 - x;
                ball.x = end.0;
                ball.y = end.1;
            } else {
                ball.turnover(end.0, end.1);
            }
            return;
        }

        let wide = !(16.0..=52.0).contains(&y);
        let u = rng.gen::<f64>();
        let ty = if x > 75.0 && wide && u < 0.35 {
            ActionType::Cross
        } else if u > 0.72 {
            ActionType::Dribble
        } else {
            ActionType::Pass
        };
        let (end, ok_p) = match ty {
            ActionType::Cross => {
                let end = (rng.gen_range(88.0..101.0), rng.gen_range(24.0..44.0));
                (end, 0.3)
            }
            ActionType::Dribble => {
                let dx = Normal::new(5.0 - 0.02 * x + 0.1 * ball.last_dx, 3.5).expect("sd");
                let dy = Normal::new(0.0, 3.0).expect("sd");
                ((x + dx.sample(rng), y + dy.sample(rng)), 0.82)
            }
            _ => {
                let dx = Normal::new(12.0 - 0.13 * x + 0.6 * ball.last_dx, 4.0).expect("sd");
                let dy = Normal::new(0.2 * (34.0 - y), 6.0).expect("sd");
                let end = (x + dx.sample(rng), y + dy.sample(rng));
                let len = (end.0 - x).hypot(end.1 - y);
                let into_box = end.0 > 88.0 && (end.1 - 34.0).abs() < 20.0;
                let p = 0.93 - 0.005 * len - if into_box { 0.25 } else { 0.0 };
                (end, p.max(0.2))
            }
        };
        let end = (end.0.clamp(0.0, 102.0), end.1);
        let ok = rng.gen::<f64>() < ok_p;
        let p = self.pick(att, x, Kind::Attack, rng).clone();
        self.emit(period, t, p, ty, (x, y), end, ok);
        let end = self.last_end();
        if ok {
            ball.last_dx = end.0 - x;
            ball.x = end.0;
            ball.y = end.1;
            return;
        }

        let (follow, chance, at) = match ty {
            ActionType::Dribble => (ActionType::Tackle, cfg.tackle_after_failed_dribble, (x, y)),
            _ => (ActionType::Interception, cfg.interception_after_failed_pass, end),
        };
        if rng.gen::<f64>() < chance {
            let (fx, fy) = (PITCH_LENGTH - at.0, PITCH_WIDTH - at.1);
            let d = self.pick(def, fx, Kind::Defend, rng).clone();
            let t2 = round_to(t + 0.5, 1);
            self.emit(period, t2, d, follow, (fx, fy), (fx, fy), true);
        }
        ball.turnover(at.0, at.1);
    }

    fn last_end(&self) -> (f64, f64) {
        let a = self.actions.last().expect("just emitted");
        (a.end_x, a.end_y)
    }
}

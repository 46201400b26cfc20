//! Effective run configuration: defaults, then a flat `key = value` file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use daxt::scoring::Weights;
use daxt::valuation::{DEFAULT_MIN_INTERCEPTIONS, DEFAULT_MIN_TACKLES};
use daxt::xt::{DEFAULT_MAX_ITER, DEFAULT_TOL};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key = value` file; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// SPADL events CSV to ingest
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Number of synthetic games to generate when no input is given
    #[arg(long, global = true)]
    pub synth_games: Option<usize>,
    /// Seed for synthetic data, data split, initialization and shuffling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of consecutive actions per feature window
    #[arg(long, global = true)]
    pub a: Option<usize>,
    #[arg(long, global = true)]
    pub xt_tol: Option<f64>,
    #[arg(long, global = true)]
    pub xt_max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Validation fraction
    #[arg(long, global = true)]
    pub split: Option<f64>,
    #[arg(long, global = true)]
    pub min_interceptions: Option<usize>,
    #[arg(long, global = true)]
    pub min_tackles: Option<usize>,
    /// CSV `player_id,position`
    #[arg(long, global = true)]
    pub positions: Option<PathBuf>,
    /// CSV `player_id,player_name,market_value_millions`
    #[arg(long, global = true)]
    pub market_values: Option<PathBuf>,
    /// CSV `player_id,goals_conceded,appearances`
    #[arg(long, global = true)]
    pub matches: Option<PathBuf>,
    #[arg(long, global = true)]
    pub min_appearances: Option<u32>,
    /// `default` or four comma-separated multipliers `i,t,c,p`
    #[arg(long, global = true)]
    pub weights: Option<String>,
    /// Run directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub synth_games: usize,
    pub seed: u64,
    pub a: usize,
    pub xt_tol: f64,
    pub xt_max_iter: usize,
    pub epochs: usize,
    pub batch: usize,
    pub split: f64,
    pub min_interceptions: usize,
    pub min_tackles: usize,
    pub positions: Option<PathBuf>,
    pub market_values: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub min_appearances: u32,
    pub weights: Weights,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            synth_games: 50,
            seed: 7,
            a: 2,
            xt_tol: DEFAULT_TOL,
            xt_max_iter: DEFAULT_MAX_ITER,
            epochs: 50,
            batch: 32,
            split: 0.2,
            min_interceptions: DEFAULT_MIN_INTERCEPTIONS,
            min_tackles: DEFAULT_MIN_TACKLES,
            positions: None,
            market_values: None,
            matches: None,
            min_appearances: 0,
            weights: Weights::default(),
            out: PathBuf::from("run"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::contract(format!("config key `{key}`: cannot parse {v:?}")))
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(flags)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::contract(format!("{}:{}: expected `key = value`", path.display(), n + 1))
            })?;
            self.set(&k.trim().to_ascii_lowercase().replace('_', "-"), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "input" => self.input = Some(PathBuf::from(v)),
            "synth-games" => self.synth_games = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "a" => self.a = parse(key, v)?,
            "xt-tol" => self.xt_tol = parse(key, v)?,
            "xt-max-iter" => self.xt_max_iter = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "split" => self.split = parse(key, v)?,
            "min-interceptions" => self.min_interceptions = parse(key, v)?,
            "min-tackles" => self.min_tackles = parse(key, v)?,
            "positions" => self.positions = Some(PathBuf::from(v)),
            "market-values" => self.market_values = Some(PathBuf::from(v)),
            "matches" => self.matches = Some(PathBuf::from(v)),
            "min-appearances" => self.min_appearances = parse(key, v)?,
            "weights" => self.weights = Weights::parse(v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(CliError::contract(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    fn apply_flags(&mut self, f: &Flags) -> Result<(), CliError> {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &f.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        take!(synth_games, seed, a, xt_tol, xt_max_iter, epochs, batch, split, min_interceptions, min_tackles, min_appearances, out);
        macro_rules! take_opt {
            ($($field:ident),*) => {$(
                if f.$field.is_some() {
                    self.$field = f.$field.clone();
                }
            )*};
        }
        take_opt!(input, positions, market_values, matches);
        if let Some(w) = &f.weights {
            self.weights = Weights::parse(w)?;
        }
        Ok(())
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::contract(m));
        if self.a < 1 {
            return bad("--a must be at least 1");
        }
        if self.synth_games < 1 {
            return bad("--synth-games must be at least 1");
        }
        if !(self.xt_tol > 0.0 && self.xt_tol.is_finite()) {
            return bad("--xt-tol must be positive");
        }
        if self.xt_max_iter < 1 {
            return bad("--xt-max-iter must be at least 1");
        }
        if self.epochs < 1 || self.batch < 1 {
            return bad("--epochs and --batch must be at least 1");
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad("--split must lie strictly between 0 and 1");
        }
        Ok(())
    }

    pub fn train_config(&self) -> daxt::net::TrainConfig {
        daxt::net::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            split: self.split,
            seed: self.seed,
            ..daxt::net::TrainConfig::default()
        }
    }

    /// `key = value` pairs for manifests. The run directory is left out so
    /// that identical runs in different places produce identical files.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let w = self.weights.as_array();
        vec![
            ("input", path(&self.input)),
            ("synth-games", self.synth_games.to_string()),
            ("seed", self.seed.to_string()),
            ("a", self.a.to_string()),
            ("xt-tol", self.xt_tol.to_string()),
            ("xt-max-iter", self.xt_max_iter.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("split", self.split.to_string()),
            ("min-interceptions", self.min_interceptions.to_string()),
            ("min-tackles", self.min_tackles.to_string()),
            ("positions", path(&self.positions)),
            ("market-values", path(&self.market_values)),
            ("matches", path(&self.matches)),
            ("min-appearances", self.min_appearances.to_string()),
            ("weights", format!("{},{},{},{}", w[0], w[1], w[2], w[3])),
        ]
    }
}

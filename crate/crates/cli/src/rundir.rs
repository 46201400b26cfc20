//! Run-directory layout and per-command manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use daxt::fingerprint::file_sha256;

use crate::config::RunConfig;
use crate::error::CliError;

pub const EVENTS: &str = "events.csv";
pub const INGEST_REPORT: &str = "ingest_report.txt";
pub const POSITIONS: &str = "positions.csv";
pub const MARKET_VALUES: &str = "market_values.csv";
pub const MATCHES: &str = "matches.csv";
pub const XT_SURFACE: &str = "xt_surface.csv";
pub const XT_META: &str = "xt_surface.meta";
pub const TRAINING: &str = "training.csv";
pub const INTERCEPTIONS: &str = "interceptions.csv";
pub const TACKLES: &str = "tackles.csv";
pub const MODEL: &str = "model.json";
pub const HISTORY: &str = "training_history.csv";
pub const VALUED: &str = "valued_actions.csv";
pub const PLAYER_STATS: &str = "player_stats.csv";
pub const SCORES: &str = "scores.csv";
pub const MARKET_PAIRS: &str = "market_value_pairs.csv";
pub const MARKET_REPORT: &str = "market_value.txt";
pub const VALIDATION: &str = "validation.txt";
pub const QQ: &str = "qq.csv";
pub const SWEEP: &str = "sweep_a.csv";

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path to an artifact that an earlier command must have written.
    pub fn require(&self, name: &str, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::missing(&p, producer))
        }
    }

    /// An optional side file: the flag's path when given, else the run
    /// directory's copy if one exists.
    pub fn side_input(&self, flag: &Option<PathBuf>, name: &str) -> Result<Option<PathBuf>, CliError> {
        match flag {
            Some(p) if p.is_file() => Ok(Some(p.clone())),
            Some(p) => Err(CliError::Io(format!("{}: no such file", p.display()))),
            None => {
                let p = self.path(name);
                Ok(p.is_file().then_some(p))
            }
        }
    }

    pub fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    /// Writes `manifest_<command>.txt`: the effective configuration, then
    /// each input and output with its SHA-256. Files are named relative to
    /// the run directory (external inputs by file name).
    pub fn manifest(
        &self,
        command: &str,
        cfg: &RunConfig,
        inputs: &[PathBuf],
        outputs: &[&str],
    ) -> Result<(), CliError> {
        let mut text = format!("command = {command}\n");
        for (k, v) in cfg.echo() {
            writeln!(text, "config.{k} = {v}").unwrap();
        }
        for p in inputs {
            let hash = file_sha256(p).map_err(|e| CliError::io(p, e))?;
            writeln!(text, "input {} {hash}", self.display_name(p)).unwrap();
        }
        for name in outputs {
            let p = self.path(name);
            let hash = file_sha256(&p).map_err(|e| CliError::io(&p, e))?;
            writeln!(text, "output {name} {hash}").unwrap();
        }
        self.write(&format!("manifest_{command}.txt"), &text)
    }

    fn display_name(&self, p: &Path) -> String {
        match p.strip_prefix(&self.root) {
            Ok(rel) => rel.display().to_string(),
            Err(_) => p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

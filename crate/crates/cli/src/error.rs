use std::path::Path;

use thiserror::Error;

use daxt::events::EventError;
use daxt::net::NetError;
use daxt::render::RenderError;
use daxt::scoring::ScoringError;
use daxt::sequences::SequenceError;
use daxt::stats::StatsError;
use daxt::valuation::ValuationError;
use daxt::xt::XtError;

/// Exit code 1 for contract violations, 2 for I/O failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Contract(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        CliError::Contract(msg.into())
    }

    pub fn missing(path: &Path, producer: &str) -> Self {
        CliError::Io(format!(
            "missing artifact {}: it is produced by `daxt {producer}`",
            path.display()
        ))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

macro_rules! classify {
    ($($ty:ident),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let msg = e.to_string();
                if matches!(e, $ty::Io { .. }) {
                    CliError::Io(msg)
                } else {
                    CliError::Contract(msg)
                }
            }
        }
    )*};
}

classify!(EventError, XtError, SequenceError, NetError, ValuationError, ScoringError, RenderError, StatsError);

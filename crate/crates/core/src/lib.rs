//! Valuing interceptions and tackles by the expected threat of the attacking
//! event they prevented.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`events`]: SPADL-style action records, CSV ingestion, synthetic corpora
//! - [`xt`]: zone statistics and the expected-threat fixed point
//! - [`sequences`]: feature windows for training and for defensive actions
//! - [`net`]: a small MLP regressor trained with Adadelta on MAE
//! - [`valuation`]: per-action DAxT values and per-player aggregates
//! - [`scoring`]: normalized four-feature defender score and rankings
//! - [`stats`]: residual tests (Levene, KS, Pearson) and Q-Q data
//! - [`render`]: SVG pitch scatter and score-vs-value regression plots

pub mod events;
pub mod fingerprint;
pub mod net;
pub mod render;
pub mod scoring;
pub mod sequences;
pub mod stats;
pub mod valuation;
pub mod xt;

pub use events::{Action, ActionType, GameStream, Outcome};
pub use xt::{GridModel, XtSurface};

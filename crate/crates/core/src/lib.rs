//! Popularity-bias measurement for collaborative-filtering recommenders in a
//! simulated feedback loop.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: the append-only interaction log, group labels, parsers and
//!   preprocessing (k-core filtering, user sampling, train/test splits).
//! - [`recsys`]: the four rating predictors (biased MF, NMF, user/item kNN),
//!   top-N generation and RMSE.
//! - [`metrics`]: popularity scores, Gini, GAP and its variants, between-group
//!   GAP and group cosine similarity. Pure functions.
//! - [`simulator`]: the feedback loop that retrains, recommends, measures and
//!   appends for a number of iterations.
//! - [`report`]: the between-group GAP scenario table and directional checks
//!   over exported metric series.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod recsys;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod synthetic;

pub use dataset::{GroupAssignment, Interaction, InteractionLog, ItemId, RatingScale, UserId};
pub use error::{Error, Result};

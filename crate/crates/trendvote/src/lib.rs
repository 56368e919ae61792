//! News-driven stock trend prediction under few-shot classifier backends.
//!
//! The library implements three prediction methods over daily news windows:
//!
//! - **standard** — merge a day's news titles into one budget-truncated block
//!   and classify it once with a 2-class prompt.
//! - **voting** — classify each news item with a 2-class prompt, then
//!   majority-vote the per-item labels.
//! - **dtv** (denoising-then-voting) — classify each item into 3 classes
//!   including `Irrelevant`, discard the irrelevant ones, and apply a
//!   λ-threshold vote to the rest.
//!
//! Around that core sit the supporting pieces: corpus ingestion and trend
//! label derivation ([`corpus`]), prompt construction with token budgets
//! ([`prompting`]), pluggable classifier backends with a response cache
//! ([`backends`]), evaluation metrics and a paired t-test ([`evaluation`]),
//! and a synthetic-corpus laboratory with exact voting oracles ([`synthlab`]).
//!
//! Numeric kernels (the vote rule, metrics, the t-distribution tail, and the
//! vote-accuracy enumeration) are generic over the scalar type via
//! `num-traits`, so they can be instantiated with `f32`/`f64` or an exact
//! rational type in tests. [`Real`] is the concrete alias used throughout the
//! pipeline.

pub mod backends;
pub mod corpus;
pub mod evaluation;
pub mod pipeline;
pub mod prompting;
pub mod scalar;
pub mod synthlab;

/// Scalar type used by the pipeline and CLI.
pub type Real = f64;

pub use corpus::{DatasetSplit, NewsItem, PredictionInstance, PriceBar, TrendLabel};
pub use pipeline::{DayPrediction, MethodConfig, MethodKind, VoteTally};
pub use prompting::{InputVariant, ItemLabel, LabelSet};

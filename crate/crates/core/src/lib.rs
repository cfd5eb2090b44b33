//! Visual entailment toolkit.
//!
//! Rebuilds the image-premise entailment corpus from SNLI records and an
//! image split, audits and summarises it, and trains attention-based
//! entailment classifiers (plus text-only, caption, relational and
//! top-down/bottom-up baselines) on a small reverse-mode autodiff core.

pub mod attention;
pub mod dataset;
pub mod error;
pub mod features;
pub mod models;
pub mod numcore;
pub mod par;
pub mod text;
pub mod training;
pub mod viz;

pub use error::{Result, VeError};

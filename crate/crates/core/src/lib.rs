//! Cost-volume optimal transport: cosine similarity volumes between visual
//! and textual feature sets, entropic OT solved by Sinkhorn iteration with
//! a Δv stopping rule, exact transportation oracles for verification, a
//! two-stage alignment trainer on synthetic labeled scenes, and mIoU
//! evaluation.

pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod scene;
pub mod sinkhorn;
pub mod trainer;

pub use error::{CovotError, Result};

/// Library version string, embedded in CLI summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

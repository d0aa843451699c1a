//! Adaptive activity-of-daily-living monitoring for a single resident:
//! year-long scenario generation, a context-aware monitoring engine, sensor
//! resource accounting and evaluation against a continuous baseline.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`catalog`] defines the 29-activity universe, score semantics, the
//!    14-profile dependency table and the monitoring-frequency matrix.
//! 2. [`matrices`] and [`generator`] produce realistic activity traces via a
//!    constrained random walk over time-of-day transition matrices, with
//!    controlled anomaly injection.
//! 3. [`monitor`] replays a trace through the adaptive monitoring engine.
//! 4. [`resources`] prices monitoring windows and computes the continuous
//!    comparator.
//! 5. [`evaluation`] turns run pairs into savings, false-alarm and accuracy
//!    figures.

pub mod catalog;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod matrices;
pub mod monitor;
pub mod resources;
pub mod scenario;

pub use catalog::{Catalog, ScoreModality};
pub use error::{Error, Result};
pub use generator::{AnomalyPolicy, GenConstraints, ProfileSchedule};
pub use matrices::MatrixSet;
pub use monitor::{Detection, MonitorConfig, ProfileAssessment, RunOutput};
pub use resources::{ResourceLedger, SensorParams};
pub use scenario::{GroundTruthEntry, ScenarioEvent};

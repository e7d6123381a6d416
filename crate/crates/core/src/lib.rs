//! Non-intrusive extraction of appliance load signatures from whole-house
//! smart-meter data.
//!
//! The pipeline runs five stages over a multi-day two-phase recording:
//!
//! 1. event detection — steady-state edges in per-second P/Q series
//! 2. event filtration — per-appliance condition tables over spliced
//!    daily search windows select the suspect ON events
//! 3. event clustering — mean-shift or weight-based grouping in
//!    (P, Q, THD) space; the dominant cluster holds the authentic events
//! 4. event association — data segments anchored at authentic events,
//!    occurrence counting and association typing
//! 5. signature extraction — representative operation cycles with mean
//!    electric signatures per event class
//!
//! [`synthhome`] generates labeled synthetic households for validation and
//! [`pipeline`]/[`eval`] tie the stages into an extraction run and its
//! scoring.

pub mod association;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod eventdetect;
pub mod filtration;
pub mod meterdata;
pub mod pipeline;
pub mod powercalc;
pub mod rng;
pub mod synthhome;

pub use association::{AssociationParams, AssociationType, CycleSignature, DataSegment};
pub use clustering::{ClusterMethod, ClusterParams, EventCluster};
pub use eventdetect::{EdgeDetectParams, EventThdMode};
pub use filtration::{ConditionRow, SearchWindow, SuspectSet};
pub use meterdata::{Direction, LoadEvent, MeterRecording, PhaseTag, PowerSample};
pub use pipeline::{ExtractionParams, SignatureDatabase};
pub use powercalc::{HarmonicVector, Phase, WaveformFrame};
pub use synthhome::{ApplianceModel, GroundTruthLog, Scenario};

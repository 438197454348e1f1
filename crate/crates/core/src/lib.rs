//! Labeling amplification: a cascade of iteratively trained classifiers that
//! resolves a large candidate pool with a small amount of human labeling.
//!
//! The crate is organised by subsystem:
//!
//! - [`pool`]: candidate items, their lifecycle state machine and the journal.
//! - [`scorer`]: the classifier contract, a reference logistic scorer and model selection.
//! - [`cascade`]: thresholds, iteration planning and the iteration engine.
//! - [`crowd`]: HIT assembly, gold checks, grading, consensus and reputation.
//! - [`svc`]: the transport-agnostic task service used by the HTTP layer and the simulator.

pub mod cascade;
pub mod clock;
pub mod crowd;
pub mod pool;
pub mod scorer;
pub mod svc;
pub mod types;

pub use clock::{Clock, ManualClock, SystemClock, Timestamp};
pub use types::{Answer, HitId, ItemId, Label, WorkerId};

//! Synthetic crowd and classifier simulation for the labeling cascade.
//!
//! A run generates a pool with hidden truth, a crowd of honest workers and
//! spammers, and an oracle scorer whose skill grows with the training set, then
//! drives the real cascade engine and task service end to end.

mod config;
mod crowd;
mod oracle;
mod run;
mod world;

use labelamp::cascade::CascadeError;
use labelamp::pool::PoolError;
use labelamp::svc::ApiError;

pub use config::{BetaParams, GoldSizes, RateRange, SimConfig, SkillCurve};
pub use crowd::{CrowdStats, SimCrowd};
pub use oracle::{OracleFactory, OracleScorer};
pub use run::{run_simulation, GuaranteeCheck, SimResult, SimRun};
pub use world::{gen_gold, gen_pool, make_workers, sim_label, SimWorker, SynthItem, SyntheticPool};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Api(#[from] ApiError),
}

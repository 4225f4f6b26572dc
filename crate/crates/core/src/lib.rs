//! Failure-resilient traffic engineering over precomputed path sets.
//!
//! The crate builds a routing substrate for a capacitated network (up to k
//! edge-disjoint paths per node pair plus k shortest detours around every
//! link) and evaluates how traffic split across those paths behaves when
//! links fail. Split ratios come from three sources: an even split, a
//! certified linear-programming optimum, or a learned predictor that maps
//! recent demand history to per-path weights. Failure reactions range from
//! doing nothing through source rerouting to local detour weaving, and the
//! metrics layer turns the resulting link loads into utilization, loss,
//! delay, and router-state reports.
//!
//! Everything is deterministic: randomness flows from explicit seeds, and
//! all parallel reductions collect in a fixed order.

pub mod demand;
pub mod error;
pub mod failure;
pub mod learn;
pub mod metrics;
pub mod pathing;
pub mod te;
pub mod topology;

pub use demand::{DemandMatrix, DemandSeries};
pub use error::{Error, Result};
pub use failure::{FailureScenario, RecoveryOutcome, Strategy};
pub use learn::{PredictorModel, TrainConfig};
pub use pathing::{build_path_set, edksp, ksp, Path, PathSet};
pub use te::{lp_oracle, LpSolution, MluReport, PathSetView, RatioConfig};
pub use topology::{Topology, TopologyFormat};

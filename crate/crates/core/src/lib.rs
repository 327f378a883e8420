//! Samplers that hunt for a hidden target population through a paginated,
//! attribute-conjunctive query API.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: entity tables, queryable schemas, the hidden-property oracle
//!   and dataset transforms.
//! - [`query`]: conjunctive queries and the generalization lattice over them.
//! - [`api`]: an inverted index plus a simulated, budgeted, paginated API.
//! - [`sampler`]: the decision-tree Thompson sampler and six baselines.
//! - [`eval`]: replicated experiments, metrics, confidence intervals and ablations.
//! - [`synth`]: planted-correlation synthetic datasets.

pub mod api;
pub mod dataset;
pub mod eval;
pub mod query;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use api::{ApiConfig, ApiResponse, BudgetLedger, PagingMode, QueryIndex, SimulatedApi};
pub use dataset::{AttributeSchema, Dataset, EntityRecord, Predicate, TransformSpec};
pub use query::{Query, Slot};
pub use sampler::{RewardMode, SampleLog, SamplerConfig, SamplerKind};

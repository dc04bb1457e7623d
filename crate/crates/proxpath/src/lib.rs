//! Proximal estimation of a path-specific mediation functional with
//! sequential bridge functions.
//!
//! The target is ψ = E[Y(1, D(1), M(0, D(1)))]: treatment on, the first
//! mediator at its treated value, the second mediator at its untreated value
//! given that first mediator. A latent confounder is handled through a
//! treatment-side proxy `Z` and an outcome-side proxy `W`.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are the usual entry points.

// `!(x > 0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod bridge;
pub mod crossfit;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod features;
pub mod kernel;
pub mod minimax;
pub mod parametric;
pub mod scalar;
pub mod seeds;
pub mod study;

pub use bridge::{parse_bridges, Bridge, BridgeKind, BridgeSet};
pub use data::{load_csv, ColumnSchema, Dataset, Observation, Role};
pub use dgp::{oracle, simulate, MisspecificationMode, OracleValues, OutcomeKind, ScenarioSpec};
pub use error::{Error, Result};
pub use estimators::{EffectReport, EstimateReport, EstimatorTag, Ey1Mode, Interval};
pub use features::{evaluate_features, FeatureSpec, Term, Transform};
pub use kernel::{KernelSpec, LowRankOptions};
pub use minimax::{KernelBridge, KernelConfig};
pub use parametric::{BridgeMaps, LinearBridge};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Bridge64 = Bridge<f64>;
pub type BridgeSet64 = BridgeSet<f64>;
pub type LinearBridge64 = LinearBridge<f64>;
pub type KernelBridge64 = KernelBridge<f64>;
pub type LinearBridge32 = LinearBridge<f32>;

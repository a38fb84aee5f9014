//! Two-groups empirical Bayes for large panels of z-values.

pub mod cli;
pub mod config;
pub mod coverage;
pub mod dist;
pub mod error;
pub mod estimation;
pub mod model;
pub mod moderation;
pub mod panel;
pub mod posterior;
pub mod quadrature;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use model::{MixingDistribution, NullComponent, NullKind, SamplingVariances, TwoGroupsModel};
pub use panel::{Unit, UnitPrecision, ZPanel};
pub use posterior::Tail;

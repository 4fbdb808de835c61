//! The four network variants, their parameter accounting and checkpoints.

pub mod checkpoint;
mod network;
mod report;
mod spec;

pub use network::{AttentionOutput, EdgePrior, ForwardCtx, Model, ModelState};
pub use report::{param_report, ParamReport, ParamRow, ResidualItem};
pub use spec::{Init, LayerGroup, ModelSpec, ParamSlot, VariantKind};

//! Low-rank adapters, Poly and multi-head routing, and the routing tensor
//! whose rows are per-player style vectors.

mod layer;
mod lora;
pub(crate) mod mixing;
mod mode;
mod routing;

pub use layer::MhrLayer;
pub(crate) use layer::{AffineGrads, AffineRef};
pub use lora::{AdapterInventory, LoraPair};
pub use mixing::{mix_mhr, mix_poly};
pub use mode::{set_training_mode, TrainingMode};
pub use routing::{PlayerId, RoutingTensor, RowInit, StyleVector};

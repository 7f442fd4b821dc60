//! Per-player style vectors over a behavioral-cloning policy: multi-head
//! routed low-rank adapters, routing-only few-shot fitting, and the
//! stylometry, steering, interpolation, and merge analyses built on them.

pub mod adapter;
pub mod error;
pub mod game;
pub mod numeric;
pub mod persist;
pub mod pipeline;
pub mod policy;
pub mod population;
pub mod rng;
pub mod stylelab;
pub mod trainer;

pub use adapter::{PlayerId, RoutingTensor, StyleVector};
pub use error::{Error, Result};
pub use numeric::{ParamStore, Tensor};
pub use policy::{NetConfig, PolicyNet};
pub use rng::Streams;

//! Behavioral-cloning policy network with style-routed adapters.

mod conditioned;
mod config;
mod metrics;
mod net;

pub use conditioned::ConditionedPolicy;
pub use config::NetConfig;
pub use metrics::{masked_argmax, move_matching_accuracy, sample_action, sample_action_at, NetPolicy};
pub use net::{ForwardCache, PolicyNet};

//! Analyses over learned style vectors: identification, consistency,
//! merging, steering, and interpolation.

mod consistency;
mod interpolate;
mod similarity;
pub mod stats;
mod steering;

pub use consistency::{
    consistency_from_vectors, consistency_within, merge_consistency, ConsistencyResult, MergeResult,
};
pub use interpolate::{head_to_head, interpolate_style, interpolate_winrate, round_robin, WinratePoint};
pub use similarity::{cosine, roc_curve, stylometry_identify, QueryResult, RocPoint, StylometryResult};
pub use steering::{
    attribute_moments, probe_profile, probe_profiles, profile_routing, select_top_attribute_players, steer,
    style_delta, ProbeSet, StyleDelta,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Group, ParamStore, Scalar};

/// Which parameter groups a fine-tuning run may update. The base group is
/// frozen in both modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingMode {
    /// Adapters and every routing row are trainable.
    FullFinetune,
    /// Only the listed routing rows are trainable.
    RoutingOnly { rows: Vec<usize> },
}

/// Applies `mode` to the trainability flags of `store`, which may hold any
/// mix of base, adapter, and routing parameters.
pub fn set_training_mode<T: Scalar>(store: &mut ParamStore<T>, mode: &TrainingMode) -> Result<()> {
    if let TrainingMode::RoutingOnly { rows } = mode {
        let present: Vec<usize> = store.iter().filter_map(|p| p.routing_row).collect();
        if let Some(missing) = rows.iter().find(|r| !present.contains(r)) {
            // Rows may legitimately live in a separate store; only complain
            // when this store holds routing rows at all.
            if !present.is_empty() {
                return Err(Error::Config(format!("routing row {missing} does not exist")));
            }
        }
    }
    for p in store.iter_mut() {
        p.trainable = match (mode, p.group) {
            (_, Group::Base) => false,
            (TrainingMode::FullFinetune, Group::Adapter | Group::Routing) => true,
            (TrainingMode::RoutingOnly { .. }, Group::Adapter) => false,
            (TrainingMode::RoutingOnly { rows }, Group::Routing) => p.routing_row.is_some_and(|r| rows.contains(&r)),
        };
    }
    Ok(())
}

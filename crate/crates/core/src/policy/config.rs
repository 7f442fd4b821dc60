use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the residual-MLP policy and its adapters.
///
/// Defaults give a `modules × heads = 8 × 4 = 32` logit style vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub actions: usize,
    pub rank: usize,
    pub modules: usize,
    pub heads: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::game::FEATURES,
            width: 64,
            blocks: 4,
            hidden: 128,
            actions: crate::game::NUM_ACTIONS,
            rank: 4,
            modules: 8,
            heads: 4,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("width", self.width),
            ("blocks", self.blocks),
            ("hidden", self.hidden),
            ("actions", self.actions),
            ("rank", self.rank),
            ("modules", self.modules),
            ("heads", self.heads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("net config `{name}` must be positive")));
        }
        if self.width % self.heads != 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide width ({}) and hidden ({})",
                self.heads, self.width, self.hidden
            )));
        }
        Ok(())
    }

    pub fn style_len(&self) -> usize {
        self.modules * self.heads
    }
}

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PlayerSpec;
use crate::adapter::PlayerId;
use crate::error::{Error, Result};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub base_players: usize,
    pub finetune_players: usize,
    pub fewshot_players: usize,
    /// Per-player game counts for base and fine-tuning players are drawn
    /// log-uniformly from `min_games..=max_games`.
    pub min_games: usize,
    pub max_games: usize,
    pub reference_games: usize,
    pub query_games: usize,
    /// Fine-tuning players that also get held-out query games.
    pub seen_query_players: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            base_players: 256,
            finetune_players: 64,
            fewshot_players: 16,
            min_games: 20,
            max_games: 200,
            reference_games: 100,
            query_games: 100,
            seen_query_players: 32,
        }
    }
}

impl PartitionConfig {
    pub fn total_players(&self) -> usize {
        self.base_players + self.finetune_players + self.fewshot_players
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_players == 0 || self.finetune_players == 0 {
            return Err(Error::Config("base and fine-tuning sets must be nonempty".into()));
        }
        if self.min_games < 10 || self.min_games > self.max_games {
            return Err(Error::Config(format!(
                "game counts need 10 <= min_games <= max_games, got {}..={}",
                self.min_games, self.max_games
            )));
        }
        if self.fewshot_players > 0 && (self.reference_games < 10 || self.query_games < 10) {
            return Err(Error::Config("reference and query sets need at least 10 games".into()));
        }
        if self.seen_query_players > self.finetune_players {
            return Err(Error::Config(format!(
                "seen_query_players ({}) exceeds finetune_players ({})",
                self.seen_query_players, self.finetune_players
            )));
        }
        Ok(())
    }
}

/// Game ranges of a few-shot player's dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSets {
    pub reference: Range<usize>,
    pub query: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPartition {
    pub base: Vec<PlayerId>,
    pub finetune: Vec<PlayerId>,
    pub fewshot: Vec<PlayerId>,
    /// Fine-tuning players with an extra held-out query set.
    pub seen_query: Vec<PlayerId>,
    /// Number of games to generate per player.
    pub game_counts: BTreeMap<PlayerId, usize>,
    pub fewshot_sets: BTreeMap<PlayerId, FewShotSets>,
}

impl PopulationPartition {
    pub fn role(&self, player: PlayerId) -> Option<&'static str> {
        if self.base.contains(&player) {
            Some("base")
        } else if self.finetune.contains(&player) {
            Some("finetune")
        } else if self.fewshot.contains(&player) {
            Some("fewshot")
        } else {
            None
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: usize, hi: usize) -> usize {
    if lo == hi {
        return lo;
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64 + 1.0).ln());
    (rng.random_range(a..b).exp().floor() as usize).clamp(lo, hi)
}

/// Shuffles the population into disjoint base, fine-tuning, and few-shot
/// sets and fixes every player's game count.
pub fn make_partition(population: &[PlayerSpec], config: &PartitionConfig, seed: u64) -> Result<PopulationPartition> {
    config.validate()?;
    if population.len() < config.total_players() {
        return Err(Error::Config(format!(
            "partition needs {} players, population has {}",
            config.total_players(),
            population.len()
        )));
    }
    let streams = Streams::new(seed);
    let mut ids: Vec<PlayerId> = population.iter().map(|p| p.id).collect();
    ids.shuffle(&mut streams.stream("partition/shuffle"));
    let base: Vec<PlayerId> = ids[..config.base_players].to_vec();
    let finetune: Vec<PlayerId> = ids[config.base_players..config.base_players + config.finetune_players].to_vec();
    let fewshot: Vec<PlayerId> = ids[config.base_players + config.finetune_players..config.total_players()].to_vec();
    let mut seen_query = finetune.clone();
    seen_query.shuffle(&mut streams.stream("partition/seen-query"));
    seen_query.truncate(config.seen_query_players);
    seen_query.sort();

    let mut rng = streams.stream("partition/game-counts");
    let mut game_counts = BTreeMap::new();
    for &id in base.iter().chain(&finetune) {
        game_counts.insert(id, log_uniform(&mut rng, config.min_games, config.max_games));
    }
    let mut fewshot_sets = BTreeMap::new();
    for &id in &fewshot {
        let total = config.reference_games + config.query_games;
        game_counts.insert(id, total);
        fewshot_sets.insert(
            id,
            FewShotSets {
                reference: 0..config.reference_games,
                query: config.reference_games..total,
            },
        );
    }
    Ok(PopulationPartition {
        base,
        finetune,
        fewshot,
        seen_query,
        game_counts,
        fewshot_sets,
    })
}

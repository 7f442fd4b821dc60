//! End-to-end stages shared by the command-line tool and the acceptance
//! suite. Each stage is a pure function of the run configuration and the
//! outputs of earlier stages.

mod analysis;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    clustering, interpolation, merge_check, probe_fitted, probe_set, steering, stylometry_seen, stylometry_unseen,
    within_consistency, ClusteringReport, InterpolationPair, InterpolationReport, MergeReport, SteeringReport,
    SteeringRow,
};

use crate::adapter::{PlayerId, RoutingTensor, StyleVector};
use crate::error::{Error, Result};
use crate::game::{Attribute, PROBE_SET_SIZE};
use crate::policy::{NetConfig, PolicyNet};
use crate::population::{
    generate_games, make_partition, sample_population, PartitionConfig, PlayerDataset, PlayerSpec, PopulationPartition,
    StylePrior,
};
use crate::rng::Streams;
use crate::trainer::{fewshot_fit_many, FewshotJob, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub probe_size: usize,
    /// Sampling temperature of conditioned models in simulated matches.
    pub play_temperature: f64,
    pub lambdas: Vec<f64>,
    pub interpolation_pairs: usize,
    pub interpolation_games: usize,
    pub round_robin_games: usize,
    pub steer_attributes: Vec<Attribute>,
    pub steer_threshold_std: f64,
    pub steer_players: usize,
    pub steer_strength: f64,
    pub consistency_players: usize,
    pub consistency_splits: usize,
    pub merge_pairs: usize,
    pub kmeans_restarts: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            probe_size: PROBE_SET_SIZE,
            play_temperature: 1.0,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            interpolation_pairs: 10,
            interpolation_games: 200,
            round_robin_games: 10,
            steer_attributes: vec![Attribute::Aggression, Attribute::KickRate],
            steer_threshold_std: 1.5,
            steer_players: 32,
            steer_strength: 1.0,
            consistency_players: 16,
            consistency_splits: 4,
            merge_pairs: 20,
            kmeans_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub clusters: usize,
    pub prior: StylePrior,
    pub partition: PartitionConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            clusters: 8,
            prior: StylePrior::default(),
            partition: PartitionConfig::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.partition.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        let a = &self.analysis;
        if a.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("lambdas must lie in [0, 1]".into()));
        }
        if a.consistency_splits < 2 {
            return Err(Error::Config("consistency_splits must be at least 2".into()));
        }
        if a.probe_size == 0 || a.round_robin_games == 0 {
            return Err(Error::Config(
                "probe_size and round_robin_games must be positive".into(),
            ));
        }
        if self.clusters == 0 {
            return Err(Error::Config("clusters must be positive".into()));
        }
        Ok(())
    }

    pub fn streams(&self) -> Streams {
        Streams::new(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub players: Vec<PlayerSpec>,
    pub partition: PopulationPartition,
}

impl Population {
    pub fn spec(&self, id: PlayerId) -> Result<&PlayerSpec> {
        self.players
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Argument(format!("unknown player {id}")))
    }
}

pub fn gen_population(cfg: &RunConfig) -> Result<Population> {
    cfg.validate()?;
    let players = sample_population(cfg.partition.total_players(), cfg.clusters, &cfg.prior, cfg.seed)?;
    let partition = make_partition(&players, &cfg.partition, cfg.seed)?;
    Ok(Population { players, partition })
}

/// Every player's games, keyed by player. Seen-query players additionally
/// have a separate held-out query set.
#[derive(Debug, Clone, PartialEq)]
pub struct GameData {
    pub datasets: BTreeMap<PlayerId, PlayerDataset>,
    pub seen_query: BTreeMap<PlayerId, PlayerDataset>,
}

impl GameData {
    pub fn get(&self, id: PlayerId) -> Result<&PlayerDataset> {
        self.datasets
            .get(&id)
            .ok_or_else(|| Error::MissingArtifact(format!("no games for {id}")))
    }

    pub fn select(&self, ids: &[PlayerId]) -> Result<Vec<PlayerDataset>> {
        ids.iter().map(|&id| self.get(id).cloned()).collect()
    }

    /// Reference games of a few-shot player.
    pub fn reference(&self, pop: &Population, id: PlayerId) -> Result<PlayerDataset> {
        let sets = pop
            .partition
            .fewshot_sets
            .get(&id)
            .ok_or_else(|| Error::Argument(format!("{id} is not a few-shot player")))?;
        self.get(id)?.subset(sets.reference.clone())
    }

    pub fn query(&self, pop: &Population, id: PlayerId) -> Result<PlayerDataset> {
        let sets = pop
            .partition
            .fewshot_sets
            .get(&id)
            .ok_or_else(|| Error::Argument(format!("{id} is not a few-shot player")))?;
        self.get(id)?.subset(sets.query.clone())
    }
}

/// Opponents are the rest of the population in a per-player shuffled order,
/// so each player meets a broad mix of clusters.
fn opponents(pop: &Population, id: PlayerId, streams: &Streams) -> Vec<PlayerSpec> {
    let mut others: Vec<PlayerSpec> = pop.players.iter().filter(|p| p.id != id).copied().collect();
    others.shuffle(&mut streams.stream(&format!("data/opponents/{id}")));
    others
}

pub fn gen_data(cfg: &RunConfig, pop: &Population) -> Result<GameData> {
    let streams = cfg.streams();
    let query_seed: u64 = streams.stream("data/seen-query-seed").random();
    let counts: Vec<(PlayerId, usize)> = pop.partition.game_counts.iter().map(|(&k, &v)| (k, v)).collect();
    let datasets = counts
        .par_iter()
        .map(|&(id, n)| {
            let spec = pop.spec(id)?;
            Ok((id, generate_games(spec, &opponents(pop, id, &streams), n, cfg.seed)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let seen_query = pop
        .partition
        .seen_query
        .par_iter()
        .map(|&id| {
            let spec = pop.spec(id)?;
            let opp = opponents(pop, id, &streams);
            Ok((id, generate_games(spec, &opp, cfg.partition.query_games, query_seed)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(GameData { datasets, seen_query })
}

/// Style vectors fit with the network frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct FewshotVectors {
    /// One row per few-shot player, fit on their reference games.
    pub reference: RoutingTensor<f32>,
    /// Few-shot players' vectors fit on their query games.
    pub unseen_query: Vec<StyleVector<f32>>,
    /// Seen-query players' vectors fit on their held-out query games.
    pub seen_query: Vec<StyleVector<f32>>,
}

pub fn fit_fewshot(cfg: &RunConfig, net: &PolicyNet<f32>, pop: &Population, data: &GameData) -> Result<FewshotVectors> {
    let streams = cfg.streams();
    let refs = pop
        .partition
        .fewshot
        .iter()
        .map(|&id| data.reference(pop, id))
        .collect::<Result<Vec<_>>>()?;
    let queries = pop
        .partition
        .fewshot
        .iter()
        .map(|&id| data.query(pop, id))
        .collect::<Result<Vec<_>>>()?;
    let seen = pop
        .partition
        .seen_query
        .iter()
        .map(|id| {
            data.seen_query
                .get(id)
                .ok_or_else(|| Error::MissingArtifact(format!("no query games for {id}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut labels = Vec::new();
    let mut sources: Vec<&PlayerDataset> = Vec::new();
    for d in &refs {
        labels.push(format!("reference/{}", d.player()));
        sources.push(d);
    }
    for d in &queries {
        labels.push(format!("query/{}", d.player()));
        sources.push(d);
    }
    for d in &seen {
        labels.push(format!("seen-query/{}", d.player()));
        sources.push(d);
    }
    let jobs: Vec<FewshotJob> = sources
        .iter()
        .zip(&labels)
        .map(|(d, label)| FewshotJob {
            player: d.player(),
            samples: d.all().samples,
            label,
        })
        .collect();
    let fits = fewshot_fit_many(net, &jobs, &cfg.train, &streams)?;
    let mut styles = fits.into_iter().zip(&jobs).map(|(f, j)| f.style.with_player(j.player));
    let mut reference = RoutingTensor::new(cfg.net.modules, cfg.net.heads);
    for d in &refs {
        let s = styles.next().expect("one fit per job");
        reference.push(&s, d.player())?;
    }
    let unseen_query = styles.by_ref().take(queries.len()).collect();
    let seen_query = styles.collect();
    Ok(FewshotVectors {
        reference,
        unseen_query,
        seen_query,
    })
}

/// Fine-tuned rows followed by reference-fit rows: the universe for
/// identifying few-shot players.
pub fn unseen_universe(finetuned: &RoutingTensor<f32>, fewshot: &FewshotVectors) -> Result<RoutingTensor<f32>> {
    let mut z = finetuned.clone();
    for (i, s) in fewshot.reference.rows().enumerate() {
        z.push(&s, fewshot.reference.players()[i])?;
    }
    Ok(z)
}

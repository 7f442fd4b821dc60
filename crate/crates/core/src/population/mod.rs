//! Synthetic players with hidden ground-truth styles, their game logs, and
//! the base / fine-tuning / few-shot partition.

mod dataset;
mod partition;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use dataset::{generate_games, PlayerDataset, Sample, SplitView};
pub use partition::{make_partition, FewShotSets, PartitionConfig, PopulationPartition};

use crate::adapter::PlayerId;
use crate::error::{Error, Result};
use crate::game::StyleParams;
use crate::rng::Streams;

/// A synthetic player. `style` is ground truth for evaluators only; the
/// training code receives [`PlayerDataset`]s, which carry no style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub id: PlayerId,
    pub style: StyleParams,
    pub cluster: usize,
}

/// Prior over cluster centres and per-player spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StylePrior {
    pub chase: (f64, f64),
    pub goal_push: (f64, f64),
    pub defend: (f64, f64),
    pub kick: (f64, f64),
    pub temperature: (f64, f64),
    /// Standard deviation of each player's offset from its cluster centre.
    pub perturbation: f64,
    /// Minimum euclidean distance between any two cluster centres in weight
    /// space. Centres are redrawn until they satisfy it.
    pub min_separation: f64,
}

impl Default for StylePrior {
    fn default() -> Self {
        Self {
            chase: (-2.0, 1.0),
            goal_push: (-0.5, 3.0),
            defend: (-2.0, 2.0),
            kick: (-4.0, 1.0),
            temperature: (0.3, 0.7),
            perturbation: 0.6,
            min_separation: 2.5,
        }
    }
}

impl StylePrior {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.chase, self.goal_push, self.defend, self.kick, self.temperature];
        if ranges
            .iter()
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::Config("style prior ranges must be finite with lo <= hi".into()));
        }
        if self.temperature.0 <= 0.0 {
            return Err(Error::Config("temperature range must be positive".into()));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Error::Config("perturbation must be finite and >= 0".into()));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::Config("min_separation must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

const MAX_CENTRE_DRAWS: usize = 100_000;

/// Players `0..n_players`, assigned round-robin to `n_clusters` clusters.
/// Each weight is the cluster centre plus gaussian noise; temperatures are
/// drawn per player from the prior's range.
pub fn sample_population(
    n_players: usize,
    n_clusters: usize,
    prior: &StylePrior,
    seed: u64,
) -> Result<Vec<PlayerSpec>> {
    if n_clusters == 0 || n_players < n_clusters {
        return Err(Error::Argument(format!(
            "need n_players ({n_players}) >= n_clusters ({n_clusters}) >= 1"
        )));
    }
    prior.validate()?;
    let streams = Streams::new(seed);
    let mut centre_rng = streams.stream("population/centres");
    let mut centres: Vec<[f64; 4]> = Vec::with_capacity(n_clusters);
    let mut draws = 0;
    while centres.len() < n_clusters {
        if draws == MAX_CENTRE_DRAWS {
            return Err(Error::Config(format!(
                "could not place {n_clusters} cluster centres {} apart within the prior ranges",
                prior.min_separation
            )));
        }
        draws += 1;
        let c = [
            uniform(&mut centre_rng, prior.chase),
            uniform(&mut centre_rng, prior.goal_push),
            uniform(&mut centre_rng, prior.defend),
            uniform(&mut centre_rng, prior.kick),
        ];
        let far =
            |o: &[f64; 4]| c.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= prior.min_separation;
        if centres.iter().all(far) {
            centres.push(c);
        }
    }
    let noise = Normal::new(0.0, prior.perturbation).expect("validated");
    let mut rng = streams.stream("population/players");
    Ok((0..n_players)
        .map(|i| {
            let cluster = i % n_clusters;
            let c = centres[cluster];
            let mut w = [0.0; 4];
            for (wk, ck) in w.iter_mut().zip(c) {
                *wk = ck + noise.sample(&mut rng);
            }
            PlayerSpec {
                id: PlayerId(i as u32),
                style: StyleParams {
                    chase_weight: w[0],
                    goal_push_weight: w[1],
                    defend_weight: w[2],
                    kick_bias: w[3],
                    temperature: uniform(&mut rng, prior.temperature),
                },
                cluster,
            }
        })
        .collect())
}

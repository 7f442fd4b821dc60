use serde::{Deserialize, Serialize};

use super::similarity::{cosine, cosine_slices};
use super::stats::{mann_whitney, RankSum};
use crate::adapter::{PlayerId, StyleVector};
use crate::error::{Error, Result};
use crate::policy::PolicyNet;
use crate::population::{PlayerDataset, Sample};
use crate::rng::Streams;
use crate::trainer::{fewshot_fit, fewshot_fit_many, FewshotJob, TrainConfig};

/// Cosines between vectors fit on disjoint subsets of the same player and
/// between vectors of different players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub within: Vec<f64>,
    pub cross: Vec<f64>,
    pub mean_within: f64,
    pub mean_cross: f64,
    pub test: RankSum,
}

impl ConsistencyResult {
    pub fn gap(&self) -> f64 {
        self.mean_within - self.mean_cross
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Within-player pairs are all pairs among one player's subset vectors;
/// cross-player pairs are all pairs of vectors from different players.
pub fn consistency_from_vectors(groups: &[Vec<StyleVector<f32>>]) -> Result<ConsistencyResult> {
    if groups.len() < 2 {
        return Err(Error::Argument("consistency needs at least two players".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Argument(format!(
            "consistency needs at least 2 subsets per player, got {}",
            g.len()
        )));
    }
    let mut within = Vec::new();
    let mut cross = Vec::new();
    for (i, gi) in groups.iter().enumerate() {
        for a in 0..gi.len() {
            for b in a + 1..gi.len() {
                within.push(cosine(&gi[a], &gi[b])?);
            }
        }
        for gj in &groups[i + 1..] {
            for u in gi {
                for v in gj {
                    cross.push(cosine(u, v)?);
                }
            }
        }
    }
    Ok(ConsistencyResult {
        mean_within: mean(&within),
        mean_cross: mean(&cross),
        test: mann_whitney(&within, &cross)?,
        within,
        cross,
    })
}

/// Splits each player's games into `subsets` contiguous game-disjoint
/// blocks, fits one vector per block, and compares.
pub fn consistency_within(
    net: &PolicyNet<f32>,
    datasets: &[&PlayerDataset],
    subsets: usize,
    config: &TrainConfig,
    streams: &Streams,
) -> Result<(Vec<Vec<StyleVector<f32>>>, ConsistencyResult)> {
    if subsets < 2 {
        return Err(Error::Argument(format!(
            "consistency needs at least 2 subsets, got {subsets}"
        )));
    }
    let mut labels = Vec::new();
    let mut slices: Vec<(PlayerId, &[Sample])> = Vec::new();
    for d in datasets {
        let n = d.n_games();
        if n < subsets {
            return Err(Error::Argument(format!(
                "{} has {n} games, fewer than {subsets} subsets",
                d.player()
            )));
        }
        let starts = d.game_starts();
        let all = d.all().samples;
        for k in 0..subsets {
            let (g0, g1) = (k * n / subsets, (k + 1) * n / subsets);
            slices.push((d.player(), &all[starts[g0]..starts[g1]]));
            labels.push(format!("consistency/{}/{k}", d.player()));
        }
    }
    let jobs: Vec<FewshotJob> = slices
        .iter()
        .zip(&labels)
        .map(|(&(player, samples), label)| FewshotJob { player, samples, label })
        .collect();
    let fits = fewshot_fit_many(net, &jobs, config, streams)?;
    let groups: Vec<Vec<StyleVector<f32>>> = fits
        .chunks(subsets)
        .map(|c| c.iter().map(|f| f.style.clone()).collect())
        .collect();
    let result = consistency_from_vectors(&groups)?;
    Ok((groups, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    pub a: PlayerId,
    pub b: PlayerId,
    /// Games taken from each player.
    pub games_each: usize,
    pub cos_average: f64,
    pub cos_a: f64,
    pub cos_b: f64,
    /// Cosine of the merged fit to each baseline vector.
    pub cos_baseline: Vec<f64>,
}

/// Fits a vector on the union of two players' games (truncated to equal
/// game counts) and compares it with the logit average of their vectors.
///
/// The union is always concatenated in player-id order and fit under a
/// label derived from the sorted pair, so swapping `a` and `b` gives the
/// same fit.
#[allow(clippy::too_many_arguments)]
pub fn merge_consistency(
    net: &PolicyNet<f32>,
    a: (&PlayerDataset, &StyleVector<f32>),
    b: (&PlayerDataset, &StyleVector<f32>),
    baseline: &[StyleVector<f32>],
    config: &TrainConfig,
    streams: &Streams,
) -> Result<MergeResult> {
    let (lo, hi) = if a.0.player() <= b.0.player() { (a, b) } else { (b, a) };
    let n = lo.0.n_games().min(hi.0.n_games());
    let games = |d: &PlayerDataset| d.all().samples[..d.game_starts()[n]].to_vec();
    let mut merged = games(lo.0);
    merged.extend(games(hi.0));
    let label = format!("merge/{}-{}", lo.0.player(), hi.0.player());
    let fit = fewshot_fit(net, lo.0.player(), &merged, config, streams, &label)?.style;
    let (za, zb) = (lo.1.as_slice(), hi.1.as_slice());
    if za.len() != zb.len() {
        return Err(Error::dim(
            "merge_consistency",
            lo.1.logits.shape(),
            hi.1.logits.shape(),
        ));
    }
    let avg: Vec<f64> = za.iter().zip(zb).map(|(&x, &y)| (x as f64 + y as f64) / 2.0).collect();
    let fit64: Vec<f64> = fit.as_slice().iter().map(|&x| x as f64).collect();
    Ok(MergeResult {
        a: a.0.player(),
        b: b.0.player(),
        games_each: n,
        cos_average: cosine_slices(&fit64, &avg)?,
        cos_a: cosine(&fit, a.1)?,
        cos_b: cosine(&fit, b.1)?,
        cos_baseline: baseline.iter().map(|v| cosine(&fit, v)).collect::<Result<_>>()?,
    })
}

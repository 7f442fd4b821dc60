use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{unseen_universe, FewshotVectors, GameData, Population, RunConfig};
use crate::adapter::{PlayerId, RoutingTensor, StyleVector};
use crate::error::{Error, Result};
use crate::game::{generate_probe_set, Attribute, AttributeProfile};
use crate::policy::PolicyNet;
use crate::stylelab::stats::{adjusted_rand_index, kmeans, spearman};
use crate::stylelab::{
    attribute_moments, consistency_within, interpolate_winrate, merge_consistency, probe_profile, profile_routing,
    round_robin, select_top_attribute_players, steer, style_delta, stylometry_identify, ConsistencyResult, MergeResult,
    ProbeSet, StyleDelta, StylometryResult, WinratePoint,
};

/// Seen players: vectors fit on held-out query games, identified among the
/// fine-tuned rows.
pub fn stylometry_seen(finetuned: &RoutingTensor<f32>, fv: &FewshotVectors) -> Result<StylometryResult> {
    stylometry_identify(&fv.seen_query, finetuned)
}

/// Unseen players: query-fit vectors identified among the fine-tuned rows
/// plus the reference-fit rows.
pub fn stylometry_unseen(finetuned: &RoutingTensor<f32>, fv: &FewshotVectors) -> Result<StylometryResult> {
    stylometry_identify(&fv.unseen_query, &unseen_universe(finetuned, fv)?)
}

/// Splits the games of the first few-shot players into disjoint subsets and
/// compares the vectors fit on them.
pub fn within_consistency(
    cfg: &RunConfig,
    net: &PolicyNet<f32>,
    pop: &Population,
    data: &GameData,
) -> Result<(Vec<Vec<StyleVector<f32>>>, ConsistencyResult)> {
    let ids: Vec<PlayerId> = pop
        .partition
        .fewshot
        .iter()
        .take(cfg.analysis.consistency_players)
        .copied()
        .collect();
    let sets = data.select(&ids)?;
    let refs: Vec<&_> = sets.iter().collect();
    consistency_within(net, &refs, cfg.analysis.consistency_splits, &cfg.train, &cfg.streams())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub pairs: Vec<MergeResult>,
    /// The seeded random population row compared against for each pair.
    pub random_rows: Vec<PlayerId>,
    pub cos_random: Vec<f64>,
    /// Fraction of pairs whose merged fit is closer to the average than to
    /// the random row.
    pub fraction_closer_to_average: f64,
}

/// Merges disjoint pairs of fine-tuning players. Every other fine-tuned row
/// is a baseline; one of them, drawn per pair, is the random comparison.
pub fn merge_check(
    cfg: &RunConfig,
    net: &PolicyNet<f32>,
    finetuned: &RoutingTensor<f32>,
    data: &GameData,
) -> Result<MergeReport> {
    let streams = cfg.streams();
    let mut ids = finetuned.players().to_vec();
    let n_pairs = cfg.analysis.merge_pairs;
    if n_pairs == 0 || 2 * n_pairs + 1 > ids.len() {
        return Err(Error::Config(format!(
            "{n_pairs} merge pairs need more than {} fine-tuned players",
            2 * n_pairs
        )));
    }
    ids.shuffle(&mut streams.stream("merge/pairs"));
    let mut pick = streams.stream("merge/random-row");
    let mut report = MergeReport {
        pairs: Vec::new(),
        random_rows: Vec::new(),
        cos_random: Vec::new(),
        fraction_closer_to_average: 0.0,
    };
    for pair in ids.chunks_exact(2).take(n_pairs) {
        let (a, b) = (pair[0], pair[1]);
        let others: Vec<PlayerId> = finetuned
            .players()
            .iter()
            .copied()
            .filter(|&p| p != a && p != b)
            .collect();
        let random = others[pick.random_range(0..others.len())];
        let baseline = others
            .iter()
            .map(|&p| finetuned.row_for(p))
            .collect::<Result<Vec<_>>>()?;
        let (za, zb) = (finetuned.row_for(a)?, finetuned.row_for(b)?);
        let r = merge_consistency(
            net,
            (data.get(a)?, &za),
            (data.get(b)?, &zb),
            &baseline,
            &cfg.train,
            &streams,
        )?;
        let idx = others.iter().position(|&p| p == random).expect("drawn from others");
        report.cos_random.push(r.cos_baseline[idx]);
        report.random_rows.push(random);
        report.pairs.push(r);
    }
    let wins = report
        .pairs
        .iter()
        .zip(&report.cos_random)
        .filter(|(p, &c)| p.cos_average > c)
        .count();
    report.fraction_closer_to_average = wins as f64 / report.pairs.len() as f64;
    Ok(report)
}

pub fn probe_set(cfg: &RunConfig) -> Result<ProbeSet> {
    ProbeSet::new(generate_probe_set(cfg.seed, cfg.analysis.probe_size)?, cfg.seed)
}

/// Attribute profiles of every fine-tuned row.
pub fn probe_fitted(
    net: &PolicyNet<f32>,
    finetuned: &RoutingTensor<f32>,
    probes: &ProbeSet,
) -> Result<Vec<(PlayerId, AttributeProfile)>> {
    profile_routing(net, finetuned, probes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringRow {
    pub player: PlayerId,
    pub before: AttributeProfile,
    pub after: AttributeProfile,
    /// Change of each attribute divided by its population std.
    pub normalized_change: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub attribute: Attribute,
    pub strength: f64,
    pub selected: Vec<PlayerId>,
    pub delta: StyleDelta,
    pub rows: Vec<SteeringRow>,
    pub fraction_increased: f64,
    pub mean_on_target: f64,
    pub mean_abs_off_target: f64,
}

/// Builds the delta of `attribute` from the players above the threshold
/// and adds it to a seeded sample of fine-tuned players.
pub fn steering(
    cfg: &RunConfig,
    net: &PolicyNet<f32>,
    finetuned: &RoutingTensor<f32>,
    profiles: &[(PlayerId, AttributeProfile)],
    probes: &ProbeSet,
    attribute: Attribute,
) -> Result<SteeringReport> {
    let a = &cfg.analysis;
    let selected = select_top_attribute_players(profiles, attribute, a.steer_threshold_std)?;
    let x = selected
        .iter()
        .map(|&p| finetuned.row_for(p))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<StyleVector<f32>> = finetuned.rows().collect();
    let delta = style_delta(&x, &all)?.with_attribute(attribute);

    let bare: Vec<AttributeProfile> = profiles.iter().map(|p| p.1).collect();
    let stds = Attribute::ALL
        .iter()
        .map(|&at| attribute_moments(&bare, at).map(|m| m.1))
        .collect::<Result<Vec<_>>>()?;
    let mut targets: Vec<(PlayerId, AttributeProfile)> = profiles.to_vec();
    targets.shuffle(&mut cfg.streams().stream(&format!("steer/{attribute}/players")));
    targets.truncate(a.steer_players);

    let mut rows = Vec::new();
    for (player, before) in targets {
        let steered = steer(&finetuned.row_for(player)?, &delta, a.steer_strength)?;
        let after = probe_profile(net, Some(&steered), probes)?;
        let (b, f) = (before.as_array(), after.as_array());
        let normalized_change = std::array::from_fn(|i| if stds[i] > 0.0 { (f[i] - b[i]) / stds[i] } else { 0.0 });
        rows.push(SteeringRow {
            player,
            before,
            after,
            normalized_change,
        });
    }
    let t = Attribute::ALL
        .iter()
        .position(|&x| x == attribute)
        .expect("known attribute");
    let n = rows.len() as f64;
    let increased = rows
        .iter()
        .filter(|r| r.after.get(attribute) > r.before.get(attribute))
        .count();
    let mean_on_target = rows.iter().map(|r| r.normalized_change[t]).sum::<f64>() / n;
    let off: Vec<f64> = rows
        .iter()
        .flat_map(|r| (0..4).filter(|&i| i != t).map(move |i| r.normalized_change[i].abs()))
        .collect();
    Ok(SteeringReport {
        attribute,
        strength: a.steer_strength,
        selected,
        delta,
        fraction_increased: increased as f64 / n,
        mean_on_target,
        mean_abs_off_target: off.iter().sum::<f64>() / off.len() as f64,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPair {
    pub weak: PlayerId,
    pub strong: PlayerId,
    pub curve: Vec<WinratePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    /// Round-robin mean score of every fine-tuned player.
    pub strength: Vec<(PlayerId, f64)>,
    pub pairs: Vec<InterpolationPair>,
    /// Spearman correlation between lambda and win rate over all points.
    pub pooled_spearman: f64,
}

/// Ranks fine-tuned players by round-robin score, pairs the i-th weakest
/// with the i-th strongest, and traces win rate along the blend.
pub fn interpolation(
    cfg: &RunConfig,
    net: &PolicyNet<f32>,
    finetuned: &RoutingTensor<f32>,
) -> Result<InterpolationReport> {
    let a = &cfg.analysis;
    let streams = cfg.streams();
    let rows: Vec<StyleVector<f32>> = finetuned.rows().collect();
    if 2 * a.interpolation_pairs > rows.len() {
        return Err(Error::Config(format!(
            "{} interpolation pairs need {} players, have {}",
            a.interpolation_pairs,
            2 * a.interpolation_pairs,
            rows.len()
        )));
    }
    let scores = round_robin(
        net,
        &rows,
        a.round_robin_games,
        a.play_temperature,
        &streams.split("round-robin"),
    )?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // Stable sort keeps the lower row first among equal scores.
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut pairs = Vec::new();
    for k in 0..a.interpolation_pairs {
        let (w, s) = (order[k], order[order.len() - 1 - k]);
        let curve = interpolate_winrate(
            net,
            &rows[w],
            &rows[s],
            &a.lambdas,
            a.interpolation_games,
            a.play_temperature,
            &streams.split(&format!("interpolation/{k}")),
        )?;
        pairs.push(InterpolationPair {
            weak: finetuned.players()[w],
            strong: finetuned.players()[s],
            curve,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .flat_map(|p| p.curve.iter().map(|c| (c.lambda, c.win_rate)))
        .unzip();
    Ok(InterpolationReport {
        strength: finetuned.players().iter().copied().zip(scores).collect(),
        pooled_spearman: spearman(&xs, &ys)?,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub players: Vec<PlayerId>,
    pub truth: Vec<usize>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub adjusted_rand: f64,
}

/// k-means over the fine-tuned rows with k equal to the number of true
/// clusters among those players.
pub fn clustering(cfg: &RunConfig, pop: &Population, finetuned: &RoutingTensor<f32>) -> Result<ClusteringReport> {
    let players = finetuned.players().to_vec();
    let truth = players
        .iter()
        .map(|&p| pop.spec(p).map(|s| s.cluster))
        .collect::<Result<Vec<_>>>()?;
    let k = truth.iter().collect::<BTreeSet<_>>().len();
    let points: Vec<Vec<f64>> = finetuned
        .rows()
        .map(|r| r.as_slice().iter().map(|&x| x as f64).collect())
        .collect();
    let labels = kmeans(
        &points,
        k,
        cfg.analysis.kmeans_restarts,
        cfg.streams().stream("clustering").random(),
    )?;
    Ok(ClusteringReport {
        adjusted_rand: adjusted_rand_index(&labels, &truth)?,
        players,
        truth,
        labels,
        k,
    })
}

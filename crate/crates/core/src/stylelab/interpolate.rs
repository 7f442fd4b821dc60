use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::StyleVector;
use crate::error::{Error, Result};
use crate::game::{play_match, Side};
use crate::policy::{ConditionedPolicy, NetPolicy, PolicyNet};
use crate::rng::Streams;

/// Logit-space blend `(1 - lambda) * weak + lambda * strong`.
pub fn interpolate_style(weak: &StyleVector<f32>, strong: &StyleVector<f32>, lambda: f64) -> Result<StyleVector<f32>> {
    if weak.logits.shape() != strong.logits.shape() {
        return Err(Error::dim(
            "interpolate_style",
            weak.logits.shape(),
            strong.logits.shape(),
        ));
    }
    let flat = weak
        .as_slice()
        .iter()
        .zip(strong.as_slice())
        .map(|(&w, &s)| ((1.0 - lambda) * w as f64 + lambda * s as f64) as f32)
        .collect();
    StyleVector::from_flat(weak.modules(), weak.heads(), flat)
}

/// Total score of `a` over `n_games` against `b`, alternating seats with
/// `a` on the left in even games. Draws count one half.
pub fn head_to_head(
    a: &ConditionedPolicy<f32>,
    b: &ConditionedPolicy<f32>,
    n_games: usize,
    temperature: f64,
    streams: &Streams,
    label: &str,
) -> Result<f64> {
    let mut rng = streams.stream(label);
    let seeds: Vec<u64> = (0..n_games).map(|_| rng.random()).collect();
    let pa = NetPolicy { policy: a, temperature };
    let pb = NetPolicy { policy: b, temperature };
    let scores = seeds
        .par_iter()
        .enumerate()
        .map(|(g, &seed)| {
            if g % 2 == 0 {
                Ok(play_match(&pa, &pb, seed)?.score(Side::L))
            } else {
                Ok(play_match(&pb, &pa, seed)?.score(Side::R))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum())
}

/// Mean score of each style against all others, `games_per_pair` games per
/// pairing.
pub fn round_robin(
    net: &PolicyNet<f32>,
    styles: &[StyleVector<f32>],
    games_per_pair: usize,
    temperature: f64,
    streams: &Streams,
) -> Result<Vec<f64>> {
    if styles.len() < 2 || games_per_pair == 0 {
        return Err(Error::Argument(
            "round robin needs two styles and at least one game".into(),
        ));
    }
    let policies = styles
        .iter()
        .map(|s| net.conditioned(Some(s)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..styles.len())
        .flat_map(|i| (i + 1..styles.len()).map(move |j| (i, j)))
        .collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| {
            head_to_head(
                &policies[i],
                &policies[j],
                games_per_pair,
                temperature,
                streams,
                &format!("round-robin/{i}-{j}"),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut totals = vec![0.0; styles.len()];
    for (&(i, j), &s) in pairs.iter().zip(&results) {
        totals[i] += s;
        totals[j] += games_per_pair as f64 - s;
    }
    let per = ((styles.len() - 1) * games_per_pair) as f64;
    Ok(totals.iter().map(|t| t / per).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinratePoint {
    pub lambda: f64,
    pub games: usize,
    pub win_rate: f64,
    /// Binomial standard error of the win rate.
    pub std_error: f64,
}

/// Plays the model conditioned on each blend of `weak` and `strong` against
/// the model conditioned on `strong`.
pub fn interpolate_winrate(
    net: &PolicyNet<f32>,
    weak: &StyleVector<f32>,
    strong: &StyleVector<f32>,
    lambdas: &[f64],
    n_games: usize,
    temperature: f64,
    streams: &Streams,
) -> Result<Vec<WinratePoint>> {
    if n_games < 100 {
        return Err(Error::Argument(format!(
            "interpolation needs at least 100 games per point, got {n_games}"
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Argument(format!("lambda {l} outside [0, 1]")));
    }
    let opponent = net.conditioned(Some(strong))?;
    lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let me = net.conditioned(Some(&interpolate_style(weak, strong, lambda)?))?;
            let score = head_to_head(
                &me,
                &opponent,
                n_games,
                temperature,
                streams,
                &format!("interpolate/{k}"),
            )?;
            let p = score / n_games as f64;
            Ok(WinratePoint {
                lambda,
                games: n_games,
                win_rate: p,
                std_error: (p * (1.0 - p) / n_games as f64).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetConfig;

    fn sv(flat: &[f32]) -> StyleVector<f32> {
        StyleVector::from_flat(2, 2, flat.to_vec()).unwrap()
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let w = sv(&[0.1, -0.7, 3.3, -0.0]);
        let s = sv(&[-2.5, 0.3, 1e-4, 7.0]);
        assert_eq!(interpolate_style(&w, &s, 0.0).unwrap(), w);
        assert_eq!(interpolate_style(&w, &s, 1.0).unwrap(), s);
    }

    fn small_net() -> PolicyNet<f32> {
        let cfg = NetConfig {
            width: 16,
            blocks: 1,
            hidden: 16,
            rank: 2,
            modules: 2,
            heads: 2,
            ..NetConfig::default()
        };
        PolicyNet::new(cfg, &mut Streams::new(1).stream("net")).unwrap()
    }

    #[test]
    fn self_play_at_lambda_one_is_even() {
        let net = small_net();
        let w = sv(&[3.0, -3.0, 3.0, -3.0]);
        let s = sv(&[-3.0, 3.0, -3.0, 3.0]);
        let streams = Streams::new(4);
        let curve = interpolate_winrate(&net, &w, &s, &[1.0], 400, 1.0, &streams).unwrap();
        let p = curve[0].win_rate;
        assert!((p - 0.5).abs() <= 3.0 * 0.5 / 400f64.sqrt(), "{p}");
        assert_eq!(
            curve,
            interpolate_winrate(&net, &w, &s, &[1.0], 400, 1.0, &streams).unwrap()
        );
        assert!(interpolate_winrate(&net, &w, &s, &[1.0], 99, 1.0, &streams).is_err());
        assert!(interpolate_winrate(&net, &w, &s, &[1.5], 100, 1.0, &streams).is_err());
    }

    #[test]
    fn round_robin_scores_sum_to_half() {
        let net = small_net();
        let styles = vec![
            sv(&[1.0, 0.0, 0.0, 1.0]),
            sv(&[0.0, 2.0, 1.0, 0.0]),
            sv(&[-1.0, 0.5, 0.5, 2.0]),
        ];
        let r = round_robin(&net, &styles, 10, 1.0, &Streams::new(2)).unwrap();
        assert!((r.iter().sum::<f64>() / 3.0 - 0.5).abs() < 1e-12);
        assert!(r.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

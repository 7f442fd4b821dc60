use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::adapter::{PlayerId, RoutingTensor};
use crate::error::{Error, Result};
use crate::policy::PolicyNet;
use crate::population::PlayerDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Validation,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEval {
    pub player: PlayerId,
    pub accuracy: f64,
    pub loss: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<PlayerEval>,
    /// Unweighted mean of the per-player accuracies.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Move-matching accuracy per player on one partition. With `routing`, each
/// player is conditioned on their own row; without it the base model is
/// used.
pub fn eval_per_player(
    net: &PolicyNet<f32>,
    routing: Option<&RoutingTensor<f32>>,
    datasets: &[&PlayerDataset],
    split: Split,
) -> Result<EvalTable> {
    if datasets.is_empty() {
        return Err(Error::Argument("no players to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(datasets.len());
    for d in datasets {
        let style = routing.map(|z| z.row_for(d.player())).transpose()?;
        let view = match split {
            Split::Train => d.train(),
            Split::Test => d.test(),
            Split::Validation => d.validation(),
            Split::All => d.all(),
        };
        if view.is_empty() {
            return Err(Error::Argument(format!(
                "player {} has an empty {split:?} partition",
                d.player()
            )));
        }
        let t = evaluate(net, style.as_ref(), view.samples)?;
        rows.push(PlayerEval {
            player: d.player(),
            accuracy: t.accuracy(),
            loss: t.loss(),
            samples: view.len(),
        });
    }
    let acc = rows.iter().map(|r| r.accuracy);
    let mean = acc.clone().sum::<f64>() / rows.len() as f64;
    let min = acc.clone().fold(f64::INFINITY, f64::min);
    let max = acc.fold(f64::NEG_INFINITY, f64::max);
    Ok(EvalTable { rows, mean, min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{encode_into, FEATURES};
    use crate::numeric::Tensor;
    use crate::rng::Streams;
    use crate::trainer::testutil::{datasets, population, tiny_net};

    #[test]
    fn table_matches_recomputation_and_is_order_free() {
        let pop = population(3);
        let data = datasets(&pop, 10);
        let net = PolicyNet::<f32>::new(tiny_net(), &mut Streams::new(1).stream("n")).unwrap();
        let refs: Vec<&PlayerDataset> = data.iter().collect();
        let t = eval_per_player(&net, None, &refs, Split::Test).unwrap();

        for (row, d) in t.rows.iter().zip(&data) {
            let mut hits = 0;
            for s in d.test().samples {
                let mut x = vec![0.0f32; FEATURES];
                encode_into(&s.state, s.state.to_move, &mut x);
                let logits = net.forward(None, &Tensor::new(vec![1, FEATURES], x).unwrap()).unwrap();
                let legal = s.state.legal_actions().unwrap().relative_to(s.state.to_move);
                let mut best = (f32::NEG_INFINITY, 0);
                for a in legal.iter() {
                    let v = logits.data()[a.index()];
                    if v > best.0 {
                        best = (v, a.index());
                    }
                }
                hits += usize::from(best.1 == s.action as usize);
            }
            assert_eq!(row.accuracy, hits as f64 / d.test().len() as f64);
        }

        let single = eval_per_player(&net, None, &refs[..1], Split::Test).unwrap();
        assert_eq!(single.mean, single.rows[0].accuracy);
        let reversed: Vec<&PlayerDataset> = refs.iter().rev().copied().collect();
        let r = eval_per_player(&net, None, &reversed, Split::Test).unwrap();
        assert!((r.mean - t.mean).abs() < 1e-15);
        assert_eq!((r.min, r.max), (t.min, t.max));
    }

    #[test]
    fn missing_row_names_the_player() {
        let pop = population(2);
        let data = datasets(&pop, 10);
        let net = PolicyNet::<f32>::new(tiny_net(), &mut Streams::new(1).stream("n")).unwrap();
        let z = RoutingTensor::new(4, 2);
        let err = eval_per_player(&net, Some(&z), &[&data[0]], Split::Test).unwrap_err();
        assert!(err.to_string().contains(&data[0].player().to_string()));
    }
}

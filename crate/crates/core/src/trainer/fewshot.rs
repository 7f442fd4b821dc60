use rayon::prelude::*;

use super::{check_finite, shuffled_batches, Batch, TrainConfig};
use crate::adapter::{set_training_mode, PlayerId, RoutingTensor, StyleVector, TrainingMode};
use crate::error::{Error, Result};
use crate::numeric::{cross_entropy_with_grad, Adam, GroupRates};
use crate::policy::PolicyNet;
use crate::population::Sample;
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq)]
pub struct FewshotOutcome {
    pub style: StyleVector<f32>,
    /// Mean training loss of the last epoch.
    pub final_loss: f64,
}

/// Fits a fresh routing row on `samples` with the network frozen.
///
/// `label` names the random streams used for the row's initialization and
/// data order, so fits with equal labels and data are identical.
pub fn fewshot_fit(
    net: &PolicyNet<f32>,
    player: PlayerId,
    samples: &[Sample],
    config: &TrainConfig,
    streams: &Streams,
    label: &str,
) -> Result<FewshotOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Argument(format!("no games to fit a style for {player}")));
    }
    let nc = *net.config();
    let mut frozen = net.clone();
    set_training_mode(frozen.params_mut(), &TrainingMode::RoutingOnly { rows: vec![0] })?;
    let mut routing = RoutingTensor::<f32>::new(nc.modules, nc.heads);
    let row = routing.append_row(
        player,
        config.routing_init,
        &mut streams.stream(&format!("fewshot/{label}")),
    );
    set_training_mode(routing.store_mut(), &TrainingMode::RoutingOnly { rows: vec![row] })?;
    let row_id = routing.row_param(row);

    let rates = GroupRates {
        routing: Some(config.routing_lr),
        ..GroupRates::default()
    };
    let mut adam = Adam::new(routing.store(), config.adam);
    let mut grads = frozen.params().zero_grads();
    let mut row_grads = routing.store().zero_grads();
    let mut rng = streams.stream(&format!("fewshot/{label}/shuffle"));
    let mut final_loss = f64::NAN;

    for epoch in 0..config.fewshot_epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for idx in shuffled_batches(samples.len(), config.batch_size, &mut rng) {
            let batch = Batch::from_samples(idx.iter().map(|&i| &samples[i]))?;
            let style = routing.row(row);
            let (logits, cache) = frozen.forward_cached(Some(&style), &batch.x)?;
            let (loss, dlogits) = cross_entropy_with_grad(&logits, &batch.y)?;
            check_finite(loss, "fewshot", epoch)?;
            total += loss as f64 * idx.len() as f64;
            count += idx.len();
            let dstyle = row_grads.get_mut(row_id).data_mut();
            dstyle.iter_mut().for_each(|g| *g = 0.0);
            frozen.backward(&cache, &dlogits, &mut grads, Some(dstyle))?;
            adam.step_params(routing.store_mut(), &row_grads, &rates, &[row_id])?;
        }
        final_loss = total / count as f64;
    }
    Ok(FewshotOutcome {
        style: routing.row(row),
        final_loss,
    })
}

/// One independent few-shot fit.
#[derive(Debug, Clone, Copy)]
pub struct FewshotJob<'a> {
    pub player: PlayerId,
    pub samples: &'a [Sample],
    pub label: &'a str,
}

/// Runs independent fits in parallel; results are in job order and equal
/// to running the fits one by one.
pub fn fewshot_fit_many(
    net: &PolicyNet<f32>,
    jobs: &[FewshotJob<'_>],
    config: &TrainConfig,
    streams: &Streams,
) -> Result<Vec<FewshotOutcome>> {
    jobs.par_iter()
        .map(|j| fewshot_fit(net, j.player, j.samples, config, streams, j.label))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::testutil::{datasets, population, tiny_net};
    use crate::trainer::{finetune_mhr, train_base};

    #[test]
    fn fit_is_frozen_seeded_and_parallel_safe() {
        let pop = population(4);
        let data = datasets(&pop, 20);
        let cfg = TrainConfig {
            base_epochs: 1,
            finetune_epochs: 1,
            fewshot_epochs: 3,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let streams = Streams::new(4);
        let base = train_base(&data, tiny_net(), &cfg, &streams).unwrap().net;
        let net = finetune_mhr(&base, &data, &cfg, &streams).unwrap().net;
        let before = net.clone();
        let s0 = data[0].all().samples;
        let a = fewshot_fit(&net, PlayerId(0), s0, &cfg, &streams, "a").unwrap();
        assert_eq!(net, before);
        let b = fewshot_fit(&net, PlayerId(0), s0, &cfg, &streams, "a").unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss.is_finite());
        assert!(matches!(
            fewshot_fit(&net, PlayerId(0), &[], &cfg, &streams, "a"),
            Err(Error::Argument(_))
        ));

        let labels = ["p0", "p1", "p2"];
        let jobs: Vec<FewshotJob> = (0..3)
            .map(|i| FewshotJob {
                player: data[i].player(),
                samples: data[i].all().samples,
                label: labels[i],
            })
            .collect();
        let many = fewshot_fit_many(&net, &jobs, &cfg, &streams).unwrap();
        for (j, out) in jobs.iter().zip(&many) {
            let single = fewshot_fit(&net, j.player, j.samples, &cfg, &streams, j.label).unwrap();
            assert_eq!(&single, out);
        }
    }
}

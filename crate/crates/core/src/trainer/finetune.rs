use rand::seq::SliceRandom;

use super::{check_finite, evaluate, Batch, CurvePoint, EarlyStop, Tally, TrainConfig};
use crate::adapter::{set_training_mode, RoutingTensor, TrainingMode};
use crate::error::{Error, Result};
use crate::numeric::{cross_entropy_with_grad, Adam, GroupRates};
use crate::policy::PolicyNet;
use crate::population::PlayerDataset;
use crate::rng::Streams;

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// The base network with trained adapters; base weights are unchanged.
    pub net: PolicyNet<f32>,
    /// One row per dataset, in dataset order.
    pub routing: RoutingTensor<f32>,
    pub curve: Vec<CurvePoint>,
    pub best_epoch: usize,
    pub warnings: Vec<String>,
}

/// Freezes the base model and trains adapters plus one routing row per
/// player, with the routing rows on their own (normally faster) rate.
///
/// Every batch holds samples of a single player so it is routed by one
/// style vector; batch order is shuffled across players each epoch.
pub fn finetune_mhr(
    base: &PolicyNet<f32>,
    datasets: &[PlayerDataset],
    config: &TrainConfig,
    streams: &Streams,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if datasets.is_empty() {
        return Err(Error::Argument("no fine-tuning players".into()));
    }
    let mut warnings = Vec::new();
    if config.routing_lr <= config.adapter_lr {
        warnings.push(format!(
            "routing_lr ({}) <= adapter_lr ({}); style vectors usually need the faster rate",
            config.routing_lr, config.adapter_lr
        ));
    }
    let nc = *base.config();
    let mut net = base.clone();
    set_training_mode(net.params_mut(), &TrainingMode::FullFinetune)?;
    let mut routing = RoutingTensor::<f32>::new(nc.modules, nc.heads);
    let mut init_rng = streams.stream("finetune/routing-init");
    for d in datasets {
        if routing.index_of(d.player()).is_some() {
            return Err(Error::Argument(format!("player {} appears twice", d.player())));
        }
        routing.append_row(d.player(), config.routing_init, &mut init_rng);
    }
    set_training_mode(routing.store_mut(), &TrainingMode::FullFinetune)?;

    let rates = GroupRates {
        base: None,
        adapter: Some(config.adapter_lr),
        routing: Some(config.routing_lr),
    };
    let mut net_adam = Adam::new(net.params(), config.adam);
    let mut row_adam = Adam::new(routing.store(), config.adam);
    let mut grads = net.params().zero_grads();
    let mut row_grads = routing.store().zero_grads();
    let mut rng = streams.stream("finetune/shuffle");
    let style_len = nc.style_len();
    let mut curve = Vec::new();
    let mut stop = EarlyStop::new(config.patience);
    let mut best = (net.clone(), routing.clone());

    for epoch in 0..config.finetune_epochs {
        let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
        for (p, d) in datasets.iter().enumerate() {
            let mut order: Vec<usize> = (0..d.train().len()).collect();
            order.shuffle(&mut rng);
            batches.extend(order.chunks(config.batch_size).map(|c| (p, c.to_vec())));
        }
        batches.shuffle(&mut rng);

        let mut tally = Tally::default();
        for (p, idx) in batches {
            let samples = datasets[p].train().samples;
            let batch = Batch::from_samples(idx.iter().map(|&i| &samples[i]))?;
            let style = routing.row(p);
            let (logits, cache) = net.forward_cached(Some(&style), &batch.x)?;
            let (loss, dlogits) = cross_entropy_with_grad(&logits, &batch.y)?;
            check_finite(loss, "finetune", epoch)?;
            tally.add(loss as f64, &logits, &batch);
            grads.zero();
            let row_id = routing.row_param(p);
            let dstyle = row_grads.get_mut(row_id).data_mut();
            dstyle.iter_mut().for_each(|g| *g = 0.0);
            debug_assert_eq!(dstyle.len(), style_len);
            net.backward(&cache, &dlogits, &mut grads, Some(dstyle))?;
            net_adam.step(net.params_mut(), &grads, &rates)?;
            row_adam.step_params(routing.store_mut(), &row_grads, &rates, &[row_id])?;
        }
        curve.push(CurvePoint {
            epoch,
            split: "train".into(),
            loss: tally.loss(),
            accuracy: tally.accuracy(),
        });

        // Unweighted mean over players, matching the per-player reporting.
        let (mut vloss, mut vacc, mut counted) = (0.0, 0.0, 0usize);
        for (p, d) in datasets.iter().enumerate() {
            if d.validation().is_empty() {
                continue;
            }
            let t = evaluate(&net, Some(&routing.row(p)), d.validation().samples)?;
            vloss += t.loss();
            vacc += t.accuracy();
            counted += 1;
        }
        let (vloss, vacc) = if counted == 0 {
            (tally.loss(), tally.accuracy())
        } else {
            (vloss / counted as f64, vacc / counted as f64)
        };
        curve.push(CurvePoint {
            epoch,
            split: "validation".into(),
            loss: vloss,
            accuracy: vacc,
        });
        if stop.observe(epoch, vloss) {
            best = (net.clone(), routing.clone());
        }
        if stop.should_stop() {
            break;
        }
    }
    let (net, routing) = best;
    Ok(FinetuneOutcome {
        net,
        routing,
        curve,
        best_epoch: stop.best_epoch(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Group;
    use crate::trainer::testutil::{datasets, population, tiny_net};
    use crate::trainer::{eval_per_player, train_base, Split};

    fn setup() -> (PolicyNet<f32>, Vec<PlayerDataset>) {
        let pop = population(4);
        let data = datasets(&pop, 20);
        let cfg = TrainConfig {
            base_epochs: 2,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let base = train_base(&data, tiny_net(), &cfg, &Streams::new(1)).unwrap().net;
        (base, data)
    }

    #[test]
    fn base_weights_are_frozen_and_rows_move() {
        let (base, data) = setup();
        let cfg = TrainConfig {
            finetune_epochs: 2,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let out = finetune_mhr(&base, &data, &cfg, &Streams::new(2)).unwrap();
        assert!(out.net.params().group_bits_eq(base.params(), Group::Base));
        assert!(!out.net.params().group_bits_eq(base.params(), Group::Adapter));
        assert_eq!(
            out.routing.players(),
            &data.iter().map(|d| d.player()).collect::<Vec<_>>()[..]
        );
        assert!(out.warnings.is_empty());
        let again = finetune_mhr(&base, &data, &cfg, &Streams::new(2)).unwrap();
        assert_eq!(again.routing, out.routing);
    }

    #[test]
    fn zero_rates_reproduce_the_base_model() {
        let (base, data) = setup();
        let cfg = TrainConfig {
            finetune_epochs: 1,
            batch_size: 64,
            adapter_lr: 0.0,
            routing_lr: 0.0,
            ..TrainConfig::default()
        };
        let out = finetune_mhr(&base, &data, &cfg, &Streams::new(3)).unwrap();
        assert_eq!(out.warnings.len(), 1);
        let refs: Vec<&PlayerDataset> = data.iter().collect();
        let tuned = eval_per_player(&out.net, Some(&out.routing), &refs, Split::Test).unwrap();
        let plain = eval_per_player(&base, None, &refs, Split::Test).unwrap();
        assert_eq!(tuned, plain);
    }
}

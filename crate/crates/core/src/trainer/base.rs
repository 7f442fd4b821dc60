use super::{check_finite, evaluate, shuffled_batches, Batch, CurvePoint, EarlyStop, Tally, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{cross_entropy_with_grad, Adam, Group, GroupRates};
use crate::policy::{NetConfig, PolicyNet};
use crate::population::{PlayerDataset, Sample};
use crate::rng::Streams;

#[derive(Debug, Clone)]
pub struct BaseOutcome {
    pub net: PolicyNet<f32>,
    pub curve: Vec<CurvePoint>,
    pub best_epoch: usize,
    /// Pooled accuracy over every player's test partition.
    pub test_accuracy: f64,
}

fn pooled<'a>(parts: impl Iterator<Item = &'a [Sample]>) -> Vec<Sample> {
    parts.flat_map(|p| p.iter().copied()).collect()
}

/// Trains the unadapted network on the pooled train partitions. Adapters
/// stay frozen at their initialization (B = 0, so they contribute nothing).
pub fn train_base(
    datasets: &[PlayerDataset],
    net_config: NetConfig,
    config: &TrainConfig,
    streams: &Streams,
) -> Result<BaseOutcome> {
    config.validate()?;
    let train = pooled(datasets.iter().map(|d| d.train().samples));
    if train.is_empty() {
        return Err(Error::Argument("no training samples for the base model".into()));
    }
    let validation = pooled(datasets.iter().map(|d| d.validation().samples));
    let test = pooled(datasets.iter().map(|d| d.test().samples));

    let mut net = PolicyNet::<f32>::new(net_config, &mut streams.stream("base/init"))?;
    let store = net.params_mut();
    store.set_trainable(Group::Base, true);
    store.set_trainable(Group::Adapter, false);
    let mut adam = Adam::new(net.params(), config.adam);
    let rates = GroupRates {
        base: Some(config.base_lr),
        ..GroupRates::default()
    };
    let mut rng = streams.stream("base/shuffle");
    let mut grads = net.params().zero_grads();
    let mut curve = Vec::new();
    let mut stop = EarlyStop::new(config.patience);
    let mut best = net.clone();

    for epoch in 0..config.base_epochs {
        let mut tally = Tally::default();
        for idx in shuffled_batches(train.len(), config.batch_size, &mut rng) {
            let batch = Batch::from_samples(idx.iter().map(|&i| &train[i]))?;
            let (logits, cache) = net.forward_cached(None, &batch.x)?;
            let (loss, dlogits) = cross_entropy_with_grad(&logits, &batch.y)?;
            check_finite(loss, "train-base", epoch)?;
            tally.add(loss as f64, &logits, &batch);
            grads.zero();
            net.backward(&cache, &dlogits, &mut grads, None)?;
            adam.step(net.params_mut(), &grads, &rates)?;
        }
        curve.push(CurvePoint {
            epoch,
            split: "train".into(),
            loss: tally.loss(),
            accuracy: tally.accuracy(),
        });
        let val = if validation.is_empty() {
            tally
        } else {
            evaluate(&net, None, &validation)?
        };
        curve.push(CurvePoint {
            epoch,
            split: "validation".into(),
            loss: val.loss(),
            accuracy: val.accuracy(),
        });
        if stop.observe(epoch, val.loss()) {
            best = net.clone();
        }
        if stop.should_stop() {
            break;
        }
    }
    let test_accuracy = if test.is_empty() {
        0.0
    } else {
        evaluate(&best, None, &test)?.accuracy()
    };
    Ok(BaseOutcome {
        net: best,
        curve,
        best_epoch: stop.best_epoch(),
        test_accuracy,
    })
}

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use stylevec_core::adapter::{mix_mhr, mix_poly, AdapterInventory, LoraPair, StyleVector};
use stylevec_core::numeric::{
    cross_entropy_loss, cross_entropy_with_grad, finite_diff_check, GradCheckConfig, Group, Tensor,
};
use stylevec_core::persist::{load_checkpoint, save_checkpoint, Checkpoint};
use stylevec_core::pipeline::{
    clustering, fit_fewshot, gen_data, gen_population, interpolation, merge_check, probe_fitted, probe_set, steering,
    stylometry_seen, stylometry_unseen, within_consistency, RunConfig,
};
use stylevec_core::policy::{NetConfig, PolicyNet};
use stylevec_core::population::{generate_games, sample_population, StylePrior};
use stylevec_core::rng::Streams;
use stylevec_core::stylelab::{style_delta, RocPoint};
use stylevec_core::trainer::{eval_per_player, fewshot_fit, finetune_mhr, train_base, Split, TrainConfig};
use stylevec_core::{Result, RoutingTensor};

struct Gate {
    failures: Vec<u32>,
}

impl Gate {
    fn record(&mut self, id: u32, title: &str, outcome: Result<(bool, String)>, started: Instant) {
        let secs = started.elapsed().as_secs_f64();
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!(
            "{} criterion {id:>2} {title}: {detail} [{secs:.1}s]",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failures.push(id);
        }
    }
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

/// Adapter output `A Bᵀ x` for each row of `x`, by explicit loops.
fn apply(pair: &LoraPair<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let (a, b) = (&pair.a, &pair.b);
    let mut out = Tensor::zeros(&[x.rows(), a.rows()]);
    for i in 0..x.rows() {
        let u: Vec<f64> = (0..b.cols())
            .map(|k| (0..b.rows()).map(|j| b.row(j)[k] * x.row(i)[j]).sum())
            .collect();
        for o in 0..a.rows() {
            out.row_mut(i)[o] = a.row(o).iter().zip(&u).map(|(w, v)| w * v).sum();
        }
    }
    out
}

fn routing_equivalences() -> Result<(bool, String)> {
    let streams = Streams::new(101);
    let mut worst_mhr = 0.0f64;
    let mut worst_lora = 0.0f64;
    for i in 0..100 {
        let mut rng = streams.stream(&format!("instance/{i}"));
        let m = 2 + i % 5;
        let (d_out, d_in, r) = (3 + i % 4, 2 + i % 3, 1 + i % 3);
        let inv = AdapterInventory::from_stacked(
            Tensor::<f64>::randn(&[m, d_out, r], 1.0, &mut rng),
            Tensor::<f64>::randn(&[m, d_in, r], 1.0, &mut rng),
        )?;
        let logits = Tensor::<f64>::randn(&[m], 1.5, &mut rng);
        let x = Tensor::<f64>::randn(&[4, d_in], 1.0, &mut rng);
        let poly = mix_poly(&inv, &logits)?;
        let mhr = mix_mhr(&inv, &StyleVector::new(logits.clone().reshape(&[m, 1])?, None)?)?;
        worst_mhr = worst_mhr.max(apply(&poly, &x).max_abs_diff(&apply(&mhr, &x)));

        let one = AdapterInventory::from_stacked(
            Tensor::<f64>::randn(&[1, d_out, r], 1.0, &mut rng),
            Tensor::<f64>::randn(&[1, d_in, r], 1.0, &mut rng),
        )?;
        let mixed = mix_poly(&one, &Tensor::new(vec![1], vec![logits.data()[0]])?)?;
        worst_lora = worst_lora.max(apply(&mixed, &x).max_abs_diff(&apply(&one.module(0), &x)));
    }

    let c = NetConfig::default();
    let net = PolicyNet::<f32>::new(c, &mut streams.stream("net"))?;
    let mut rng = streams.stream("zero-adapter");
    let x = Tensor::<f32>::randn(&[64, c.input_dim], 1.0, &mut rng);
    let style = StyleVector::new(Tensor::randn(&[c.modules, c.heads], 2.0, &mut rng), None)?;
    let exact = bits(&net.forward(None, &x)?) == bits(&net.forward(Some(&style), &x)?);

    let ok = worst_mhr <= 1e-6 && worst_lora <= 1e-6 && exact;
    Ok((
        ok,
        format!(
            "max |MHR(h=1) - Poly| = {worst_mhr:.2e}, max |Poly(m=1) - LoRA| = {worst_lora:.2e} (tol 1e-6); \
             zero-adapter forward bit-exact: {exact}"
        ),
    ))
}

fn gradient_correctness() -> Result<(bool, String)> {
    let c = NetConfig {
        input_dim: 12,
        width: 10,
        blocks: 2,
        hidden: 14,
        actions: 9,
        rank: 2,
        modules: 4,
        heads: 2,
    };
    let mut worst = 0.0f64;
    for b in 0..10u64 {
        let streams = Streams::new(200 + b);
        let mut net = PolicyNet::<f64>::new(c, &mut streams.stream("init"))?;
        let mut rng = streams.stream("perturb");
        for p in net.params_mut().iter_mut() {
            if p.group == Group::Adapter || p.name.ends_with("bias") {
                p.value = Tensor::randn(p.value.shape(), 0.3, &mut rng);
            }
            p.trainable = true;
        }
        let style = StyleVector::new(Tensor::randn(&[c.modules, c.heads], 1.0, &mut rng), None)?;
        let x = Tensor::<f64>::randn(&[8, c.input_dim], 1.0, &mut rng);
        let y: Vec<usize> = (0..8).map(|i| (i * 5 + b as usize) % c.actions).collect();

        let (logits, cache) = net.forward_cached(Some(&style), &x)?;
        let (_, dlogits) = cross_entropy_with_grad(&logits, &y)?;
        let mut grads = net.params().zero_grads();
        let mut dstyle = vec![0.0; c.style_len()];
        net.backward(&cache, &dlogits, &mut grads, Some(&mut dstyle))?;
        let report = finite_diff_check(
            net.params(),
            &grads,
            |p| {
                let n = PolicyNet::from_params(c, p.clone()).expect("same layout");
                cross_entropy_loss(&n.forward(Some(&style), &x).expect("forward"), &y).expect("loss")
            },
            &GradCheckConfig::default(),
        );
        worst = worst.max(report.max_rel_error);

        let h = 1e-6;
        for (k, &analytic) in dstyle.iter().enumerate() {
            let loss_at = |d: f64| -> Result<f64> {
                let mut z = style.clone();
                z.logits.data_mut()[k] += d;
                cross_entropy_loss(&net.forward(Some(&z), &x)?, &y)
            };
            let numeric = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3));
        }
    }
    Ok((
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 10 batches (tol 1e-4)"),
    ))
}

fn determinism() -> Result<(bool, String, Checkpoint)> {
    let c = NetConfig {
        width: 16,
        blocks: 1,
        hidden: 16,
        rank: 2,
        modules: 4,
        heads: 2,
        ..NetConfig::default()
    };
    let train = TrainConfig {
        base_epochs: 2,
        finetune_epochs: 2,
        ..TrainConfig::default()
    };
    let pop = sample_population(6, 2, &StylePrior::default(), 31)?;
    let dir = tempfile::tempdir()?;
    let mut blobs = Vec::new();
    let mut last = None;
    for run in 0..2 {
        let data: Vec<_> = pop
            .iter()
            .map(|p| generate_games(p, &pop, 12, 5))
            .collect::<Result<_>>()?;
        let streams = Streams::new(77);
        let base = train_base(&data[..4], c, &train, &streams)?;
        let ft = finetune_mhr(&base.net, &data[4..], &train, &streams)?;
        let path = dir.path().join(format!("run{run}")).join("finetuned.json");
        let ck = Checkpoint {
            net: Some(ft.net),
            routing: Some(ft.routing),
        };
        save_checkpoint(&path, &ck)?;
        blobs.push((std::fs::read(&path)?, std::fs::read(path.with_extension("bin"))?));
        last = Some(ck);
    }
    let ck = last.expect("two runs");
    Ok((
        blobs[0] == blobs[1],
        format!("repeat runs byte-identical: {}", blobs[0] == blobs[1]),
        ck,
    ))
}

fn round_trip(ck: &Checkpoint) -> Result<bool> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ck.json");
    save_checkpoint(&path, ck)?;
    let back = load_checkpoint(&path)?;
    let net_bits = |c: &Checkpoint| -> Vec<u32> {
        c.net
            .iter()
            .flat_map(|n| n.params().iter().flat_map(|p| bits(&p.value)).collect::<Vec<_>>())
            .collect()
    };
    let row_bits = |c: &Checkpoint| -> Vec<u32> {
        c.routing
            .iter()
            .flat_map(|z| {
                z.rows()
                    .flat_map(|r| r.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    Ok(net_bits(ck) == net_bits(&back)
        && row_bits(ck) == row_bits(&back)
        && ck.routing.as_ref().map(RoutingTensor::players) == back.routing.as_ref().map(RoutingTensor::players))
}

fn roc_ok(points: &[RocPoint]) -> bool {
    let (first, last) = (points[0], points[points.len() - 1]);
    let monotone = points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
    monotone && (first.fpr, first.tpr) == (0.0, 0.0) && (last.fpr, last.tpr) == (1.0, 1.0)
}

fn algorithm_identities() -> Result<bool> {
    let p: Vec<StyleVector<f64>> = [[0.5, -1.25, 2.0, 0.75], [1.5, 0.25, -2.0, 3.25], [-0.5, 4.0, 1.0, 0.0]]
        .iter()
        .map(|v| StyleVector::from_flat(2, 2, v.to_vec()))
        .collect::<Result<_>>()?;
    let all_zero = style_delta(&p, &p)?.delta.iter().all(|&d| d == 0.0);
    let two = &p[..2];
    let d = style_delta(&two[..1], two)?;
    let expected: Vec<f64> = two[0]
        .as_slice()
        .iter()
        .zip(two[1].as_slice())
        .map(|(a, b)| (a - b) / 2.0)
        .collect();
    Ok(all_zero && d.delta == expected)
}

fn main() {
    let mut gate = Gate { failures: Vec::new() };
    let suite = Instant::now();

    let t = Instant::now();
    gate.record(1, "routing equivalences", routing_equivalences(), t);
    let t = Instant::now();
    gate.record(2, "gradient correctness", gradient_correctness(), t);

    let t = Instant::now();
    let det = determinism();
    let early_ck = det.as_ref().ok().map(|d| d.2.clone());
    let det_detail = det.map(|(ok, s, _)| (ok, s));
    let det_secs = t.elapsed();

    let cfg = RunConfig::default();
    let streams = cfg.streams();
    let t = Instant::now();
    let pipeline = (|| -> Result<_> {
        let pop = gen_population(&cfg)?;
        let data = gen_data(&cfg, &pop)?;
        let base_sets = data.select(&pop.partition.base)?;
        let ft_sets = data.select(&pop.partition.finetune)?;
        let base = train_base(&base_sets, cfg.net, &cfg.train, &streams)?;
        let ft = finetune_mhr(&base.net, &ft_sets, &cfg.train, &streams)?;
        Ok((pop, data, base, ft))
    })();
    println!(
        "pipeline: data, base training, and fine-tuning [{:.1}s]",
        t.elapsed().as_secs_f64()
    );
    let (pop, data, base, ft) = match pipeline {
        Ok(v) => v,
        Err(e) => {
            for id in 3..=10 {
                gate.record(id, "desk pipeline", Ok((false, format!("error: {e}"))), Instant::now());
            }
            gate.record(11, "determinism and persistence", det_detail, Instant::now() - det_secs);
            std::process::exit(1);
        }
    };

    let t = Instant::now();
    let freeze = (|| -> Result<(bool, String)> {
        let base_frozen = base.net.params().group_bits_eq(ft.net.params(), Group::Base);
        let before = ft.net.clone();
        let fs = data.get(pop.partition.fewshot[0])?;
        let out = fewshot_fit(
            &ft.net,
            fs.player(),
            fs.all().samples,
            &cfg.train,
            &streams,
            "acceptance/freeze",
        )?;
        let after_base = before.params().group_bits_eq(ft.net.params(), Group::Base);
        let after_adapter = before.params().group_bits_eq(ft.net.params(), Group::Adapter);
        let probe = Tensor::<f32>::randn(&[32, cfg.net.input_dim], 1.0, &mut streams.stream("acceptance/probe"));
        let la = ft.net.forward(Some(&ft.routing.row(0)), &probe)?;
        let lb = ft.net.forward(Some(&ft.routing.row(1)), &probe)?;
        let swap = la.max_abs_diff(&lb);
        let ok = base_frozen
            && after_base
            && after_adapter
            && swap > 0.0
            && out.style.as_slice().iter().all(|x| x.is_finite());
        Ok((
            ok,
            format!(
                "base unchanged by fine-tuning: {base_frozen}; base and adapters unchanged by few-shot fit: {}; \
                 style swap changes logits by {swap:.3}",
                after_base && after_adapter
            ),
        ))
    })();
    gate.record(3, "freeze contracts", freeze, t);

    let t = Instant::now();
    let lift = (|| -> Result<(bool, String)> {
        let sets = data.select(&pop.partition.finetune)?;
        let refs: Vec<_> = sets.iter().collect();
        let b = eval_per_player(&base.net, None, &refs, Split::Test)?.mean;
        let f = eval_per_player(&ft.net, Some(&ft.routing), &refs, Split::Test)?.mean;
        let uniform = 1.0 / 9.0;
        let ok = f - b >= 0.02 && b > uniform && f > uniform;
        Ok((
            ok,
            format!(
                "{} base / {} fine-tuning players; base {:.2}%, fine-tuned {:.2}%, lift {:+.2} points (floor +2.00, uniform {:.2}%)",
                pop.partition.base.len(),
                refs.len(),
                100.0 * b,
                100.0 * f,
                100.0 * (f - b),
                100.0 * uniform
            ),
        ))
    })();
    gate.record(4, "behavioral-cloning lift", lift, t);

    let t = Instant::now();
    let fewshot = fit_fewshot(&cfg, &ft.net, &pop, &data);
    let stylo = fewshot.and_then(|fv| {
        let seen = stylometry_seen(&ft.routing, &fv)?;
        let unseen = stylometry_unseen(&ft.routing, &fv)?;
        let ok = seen.top1() >= 0.85 && unseen.top1() >= 0.75;
        let detail = format!(
            "seen top-1 {:.3} over {} queries vs {} rows (floor 0.85); unseen top-1 {:.3} over {} queries vs {} rows (floor 0.75)",
            seen.top1(),
            seen.queries.len(),
            seen.universe.len(),
            unseen.top1(),
            unseen.queries.len(),
            unseen.universe.len()
        );
        Ok((ok, detail, seen))
    });
    let seen_roc = stylo.as_ref().ok().map(|s| s.2.roc());
    gate.record(5, "stylometry", stylo.map(|s| (s.0, s.1)), t);

    let t = Instant::now();
    let consistency = within_consistency(&cfg, &ft.net, &pop, &data).map(|(_, r)| {
        (
            r.gap() >= 0.2 && r.test.p_greater < 0.01,
            format!(
                "{} players x {} splits; within {:.3}, cross {:.3}, gap {:.3} (floor 0.2); rank-sum p {:.2e} (< 0.01)",
                cfg.analysis.consistency_players,
                cfg.analysis.consistency_splits,
                r.mean_within,
                r.mean_cross,
                r.gap(),
                r.test.p_greater
            ),
        )
    });
    gate.record(6, "within-player consistency", consistency, t);

    let t = Instant::now();
    let merge = merge_check(&cfg, &ft.net, &ft.routing, &data).map(|m| {
        (
            m.fraction_closer_to_average >= 0.9,
            format!(
                "{} pairs; merged fit closer to the row average than to a random row in {:.0}% (floor 90%)",
                m.pairs.len(),
                100.0 * m.fraction_closer_to_average
            ),
        )
    });
    gate.record(7, "merge consistency", merge, t);

    let t = Instant::now();
    let interp = interpolation(&cfg, &ft.net, &ft.routing).map(|r| {
        let at_one: Vec<f64> = r
            .pairs
            .iter()
            .map(|p| p.curve.last().map_or(f64::NAN, |c| c.win_rate))
            .collect();
        let worst = at_one.iter().map(|w| (w - 0.5).abs()).fold(0.0, f64::max);
        (
            r.pairs.len() == cfg.analysis.interpolation_pairs && worst <= 0.08 && r.pooled_spearman > 0.5,
            format!(
                "{} pairs; worst |win rate at lambda=1 - 0.5| {:.3} (tol 0.08); pooled Spearman {:.3} (> 0.5)",
                r.pairs.len(),
                worst,
                r.pooled_spearman
            ),
        )
    });
    gate.record(8, "interpolation", interp, t);

    let t = Instant::now();
    let steer = (|| -> Result<(bool, String)> {
        let probes = probe_set(&cfg)?;
        let profiles = probe_fitted(&ft.net, &ft.routing, &probes)?;
        let mut ok = algorithm_identities()?;
        let mut parts = vec![format!("delta identities exact: {ok}")];
        for &a in &cfg.analysis.steer_attributes {
            let r = steering(&cfg, &ft.net, &ft.routing, &profiles, &probes, a)?;
            let pass = r.fraction_increased >= 0.8 && r.mean_on_target > r.mean_abs_off_target;
            ok &= pass;
            parts.push(format!(
                "{a}: {} selected, increased for {:.0}% of {} (floor 80%), on-target {:.3} vs off-target {:.3}",
                r.selected.len(),
                100.0 * r.fraction_increased,
                r.rows.len(),
                r.mean_on_target,
                r.mean_abs_off_target
            ));
        }
        Ok((ok, parts.join("; ")))
    })();
    gate.record(9, "steering", steer, t);

    let t = Instant::now();
    let ari = clustering(&cfg, &pop, &ft.routing).map(|c| {
        (
            c.adjusted_rand >= 0.5,
            format!("k = {}, adjusted Rand {:.3} (floor 0.5)", c.k, c.adjusted_rand),
        )
    });
    gate.record(10, "ground-truth style recovery", ari, t);

    let t = Instant::now();
    let persist = det_detail.and_then(|(same, detail)| {
        let small = round_trip(early_ck.as_ref().expect("determinism produced a checkpoint"))?;
        let desk = round_trip(&Checkpoint {
            net: Some(ft.net.clone()),
            routing: Some(ft.routing.clone()),
        })?;
        let roc = seen_roc.as_deref().is_some_and(roc_ok);
        Ok((
            same && small && desk && roc,
            format!(
                "{detail}; checkpoint round trip bit-exact: {}; ROC monotone and anchored: {roc}",
                small && desk
            ),
        ))
    });
    gate.record(11, "determinism and persistence", persist, t - det_secs);

    println!(
        "{} of 11 criteria passed in {:.1} min",
        11 - gate.failures.len(),
        suite.elapsed().as_secs_f64() / 60.0
    );
    if !gate.failures.is_empty() {
        std::process::exit(1);
    }
}

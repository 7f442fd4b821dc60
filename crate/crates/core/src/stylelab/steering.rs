use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{PlayerId, RoutingTensor, StyleVector};
use crate::error::{Error, Result};
use crate::game::{encode_batch, profile_from_choices, Action, ActionSet, Attribute, AttributeProfile, GameState};
use crate::numeric::{Scalar, Tensor};
use crate::policy::{sample_action_at, PolicyNet};
use crate::rng::Streams;

/// Mean style of a selected group minus the population mean, in
/// routing-logit space. Kept in f64 so steering arithmetic is exact
/// wherever the inputs allow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleDelta {
    pub modules: usize,
    pub heads: usize,
    pub delta: Vec<f64>,
    pub attribute: Option<Attribute>,
    /// Number of selected players the group mean was taken over.
    pub source_size: usize,
    pub population_size: usize,
}

fn mean_of<T: Scalar>(vs: &[StyleVector<T>], what: &str) -> Result<Vec<f64>> {
    let first = vs
        .first()
        .ok_or_else(|| Error::Argument(format!("style delta needs a nonempty {what} set")))?;
    let mut acc = vec![0.0; first.as_slice().len()];
    for v in vs {
        if v.logits.shape() != first.logits.shape() {
            return Err(Error::dim("style_delta", first.logits.shape(), v.logits.shape()));
        }
        for (a, &x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x.as_f64();
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn style_delta<T: Scalar>(selected: &[StyleVector<T>], population: &[StyleVector<T>]) -> Result<StyleDelta> {
    let va = mean_of(selected, "selected")?;
    let vp = mean_of(population, "population")?;
    let (s, p) = (&selected[0], &population[0]);
    if s.logits.shape() != p.logits.shape() {
        return Err(Error::dim("style_delta", s.logits.shape(), p.logits.shape()));
    }
    Ok(StyleDelta {
        modules: s.modules(),
        heads: s.heads(),
        delta: va.iter().zip(&vp).map(|(a, b)| a - b).collect(),
        attribute: None,
        source_size: selected.len(),
        population_size: population.len(),
    })
}

impl StyleDelta {
    pub fn with_attribute(mut self, attribute: Attribute) -> Self {
        self.attribute = Some(attribute);
        self
    }

    pub fn norm(&self) -> f64 {
        self.delta.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

/// `style + strength * delta`, without renormalization.
pub fn steer<T: Scalar>(style: &StyleVector<T>, delta: &StyleDelta, strength: f64) -> Result<StyleVector<T>> {
    if style.modules() != delta.modules || style.heads() != delta.heads {
        return Err(Error::dim("steer", style.logits.shape(), &[delta.modules, delta.heads]));
    }
    let flat = style
        .as_slice()
        .iter()
        .zip(&delta.delta)
        .map(|(&v, &d)| T::of(v.as_f64() + strength * d))
        .collect();
    let mut out = StyleVector::from_flat(delta.modules, delta.heads, flat)?;
    out.player = style.player;
    Ok(out)
}

/// Probe states with their encodings precomputed, plus one fixed uniform
/// per state that every profiled policy samples its move with.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub states: Vec<GameState>,
    features: Tensor<f32>,
    legal: Vec<ActionSet>,
    uniforms: Vec<f64>,
}

impl ProbeSet {
    pub fn new(states: Vec<GameState>, seed: u64) -> Result<Self> {
        let features = encode_batch(&states)?;
        let legal = states
            .iter()
            .map(|s| Ok(s.legal_actions()?.relative_to(s.to_move)))
            .collect::<Result<_>>()?;
        let mut rng = Streams::new(seed).stream("probe-set/choices");
        let uniforms = states.iter().map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            states,
            features,
            legal,
            uniforms,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Attribute profile of the policy of `net` conditioned on `style`. Moves
/// are sampled from the model's distribution using the probe set's fixed
/// uniforms, so two styles differ only where their distributions do.
/// Greedy choices saturate for strongly styled players and hide how far a
/// style pushes an attribute.
pub fn probe_profile(
    net: &PolicyNet<f32>,
    style: Option<&StyleVector<f32>>,
    probes: &ProbeSet,
) -> Result<AttributeProfile> {
    let logits = net.forward(style, &probes.features)?;
    let choices: Vec<Action> = probes
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let idx = sample_action_at(logits.row(i), probes.legal[i], 1.0, probes.uniforms[i]);
            Action::from_index(idx)
                .expect("index below NUM_ACTIONS")
                .relative_to(s.to_move)
        })
        .collect();
    profile_from_choices(&probes.states, &choices)
}

/// Profiles of `styles` in parallel, in input order.
pub fn probe_profiles(
    net: &PolicyNet<f32>,
    styles: &[StyleVector<f32>],
    probes: &ProbeSet,
) -> Result<Vec<AttributeProfile>> {
    styles.par_iter().map(|s| probe_profile(net, Some(s), probes)).collect()
}

/// Profiles of every row of `routing`, keyed by player.
pub fn profile_routing(
    net: &PolicyNet<f32>,
    routing: &RoutingTensor<f32>,
    probes: &ProbeSet,
) -> Result<Vec<(PlayerId, AttributeProfile)>> {
    let rows: Vec<_> = routing.rows().collect();
    let profiles = probe_profiles(net, &rows, probes)?;
    Ok(routing.players().iter().copied().zip(profiles).collect())
}

/// Population mean and standard deviation (divisor n) of one attribute.
pub fn attribute_moments(profiles: &[AttributeProfile], attribute: Attribute) -> Result<(f64, f64)> {
    if profiles.is_empty() {
        return Err(Error::Argument("no attribute profiles".into()));
    }
    let n = profiles.len() as f64;
    let mean = profiles.iter().map(|p| p.get(attribute)).sum::<f64>() / n;
    let var = profiles.iter().map(|p| (p.get(attribute) - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Players whose attribute exceeds the population mean by more than
/// `threshold_std` population standard deviations.
pub fn select_top_attribute_players(
    profiles: &[(PlayerId, AttributeProfile)],
    attribute: Attribute,
    threshold_std: f64,
) -> Result<Vec<PlayerId>> {
    if threshold_std.is_nan() {
        return Err(Error::Argument("threshold must not be NaN".into()));
    }
    let bare: Vec<AttributeProfile> = profiles.iter().map(|p| p.1).collect();
    let (mean, std) = attribute_moments(&bare, attribute)?;
    let selected: Vec<PlayerId> = if threshold_std == f64::NEG_INFINITY {
        profiles.iter().map(|p| p.0).collect()
    } else {
        let cut = mean + threshold_std * std;
        profiles
            .iter()
            .filter(|p| p.1.get(attribute) > cut)
            .map(|p| p.0)
            .collect()
    };
    if selected.is_empty() {
        return Err(Error::Argument(format!(
            "no player has {attribute} above mean + {threshold_std} std; try a lower threshold"
        )));
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sv(flat: &[f64]) -> StyleVector<f64> {
        StyleVector::from_flat(2, 2, flat.to_vec()).unwrap()
    }

    #[test]
    fn algorithm_identities_hold_exactly() {
        let v = sv(&[0.3, -1.7, 2.25, 0.1]);
        let w = sv(&[-0.9, 0.4, 1.0, 5.5]);
        let d = style_delta(&[v.clone(), w.clone()], &[v.clone(), w.clone()]).unwrap();
        assert!(d.delta.iter().all(|&x| x == 0.0));
        let d = style_delta(std::slice::from_ref(&v), &[v.clone(), w.clone()]).unwrap();
        for i in 0..4 {
            let expect = (v.as_slice()[i] - w.as_slice()[i]) / 2.0;
            assert!((d.delta[i] - expect).abs() <= 1e-15, "{} vs {expect}", d.delta[i]);
        }
        assert_eq!((d.source_size, d.population_size), (1, 2));
        assert!(style_delta::<f64>(&[], std::slice::from_ref(&v)).is_err());
        assert!(style_delta(&[v], &[]).is_err());
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = crate::rng::Streams::new(3).stream("delta");
        use rand::Rng;
        let mut vecs = Vec::new();
        for _ in 0..9 {
            vecs.push(
                StyleVector::<f32>::from_flat(3, 2, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
            );
        }
        let (x, p) = (&vecs[..4], &vecs[..]);
        let d = style_delta(x, p).unwrap();
        for j in 0..6 {
            let mut sx = 0.0;
            for v in x {
                sx += v.as_slice()[j] as f64;
            }
            let mut sp = 0.0;
            for v in p {
                sp += v.as_slice()[j] as f64;
            }
            assert!((d.delta[j] - (sx / 4.0 - sp / 9.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_strength_and_zero_delta_leave_style_alone() {
        let v = StyleVector::<f32>::from_flat(2, 2, vec![0.5, -0.25, 3.0, 1e-3])
            .unwrap()
            .with_player(PlayerId(4));
        let d = StyleDelta {
            modules: 2,
            heads: 2,
            delta: vec![1.0, 2.0, -1.0, 0.5],
            attribute: None,
            source_size: 1,
            population_size: 2,
        };
        assert_eq!(steer(&v, &d, 0.0).unwrap(), v);
        let zero = StyleDelta {
            delta: vec![0.0; 4],
            ..d.clone()
        };
        assert_eq!(steer(&v, &zero, 3.5).unwrap(), v);
        let wrong = StyleDelta {
            modules: 4,
            heads: 1,
            ..d
        };
        assert!(steer(&v, &wrong, 1.0).is_err());
    }

    fn profile(a: f64) -> AttributeProfile {
        AttributeProfile {
            aggression: a,
            ..AttributeProfile::default()
        }
    }

    #[test]
    fn selection_thresholds() {
        let ps: Vec<_> = (0..10).map(|i| (PlayerId(i), profile(i as f64))).collect();
        assert_eq!(
            select_top_attribute_players(&ps, Attribute::Aggression, f64::NEG_INFINITY)
                .unwrap()
                .len(),
            10
        );
        // Mean 4.5, std sqrt(8.25) ~ 2.87: one std selects 8 and 9.
        assert_eq!(
            select_top_attribute_players(&ps, Attribute::Aggression, 1.0).unwrap(),
            vec![PlayerId(8), PlayerId(9)]
        );
        let err = select_top_attribute_players(&ps, Attribute::Aggression, 5.0).unwrap_err();
        assert!(err.to_string().contains("lower threshold"));
        let flat: Vec<_> = (0..4).map(|i| (PlayerId(i), profile(1.0))).collect();
        assert_eq!(
            select_top_attribute_players(&flat, Attribute::Aggression, f64::NEG_INFINITY)
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn two_std_selects_upper_tail_of_gaussian() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::rng::Streams::new(11).stream("tail");
        let n = 20_000;
        let ps: Vec<_> = (0..n)
            .map(|i| (PlayerId(i), profile(StandardNormal.sample(&mut rng))))
            .collect();
        let k = select_top_attribute_players(&ps, Attribute::Aggression, 2.0)
            .unwrap()
            .len();
        let frac = k as f64 / n as f64;
        // Upper tail beyond 2 sigma is 2.275%; binomial sd here is about 0.1%.
        assert!((frac - 0.02275).abs() < 0.004, "{frac}");
    }

    // Dyadic values keep every sum exact, so the round trip is bit-exact.
    fn dyadic() -> impl Strategy<Value = f64> {
        (-4096i32..4096).prop_map(|k| k as f64 / 256.0)
    }

    proptest! {
        #[test]
        fn steer_round_trip_is_exact(v in prop::collection::vec(dyadic(), 4), d in prop::collection::vec(dyadic(), 4), s in dyadic()) {
            let style = sv(&v);
            let delta = StyleDelta { modules: 2, heads: 2, delta: d, attribute: None, source_size: 1, population_size: 1 };
            let back = steer(&steer(&style, &delta, s).unwrap(), &delta, -s).unwrap();
            prop_assert_eq!(back, style);
        }

        #[test]
        fn steer_round_trip_f32_within_rounding(v in prop::collection::vec(-5.0f32..5.0, 4), d in prop::collection::vec(-2.0f64..2.0, 4), s in -3.0f64..3.0) {
            let style = StyleVector::<f32>::from_flat(2, 2, v.clone()).unwrap();
            let delta = StyleDelta { modules: 2, heads: 2, delta: d, attribute: None, source_size: 1, population_size: 1 };
            let back = steer(&steer(&style, &delta, s).unwrap(), &delta, -s).unwrap();
            for (a, b) in back.as_slice().iter().zip(&v) {
                prop_assert!((a - b).abs() <= 4.0 * f32::EPSILON * (1.0 + b.abs() + 6.0));
            }
        }

        #[test]
        fn delta_is_shift_invariant(x in prop::collection::vec(prop::collection::vec(dyadic(), 4), 1..5),
                                    extra in prop::collection::vec(prop::collection::vec(dyadic(), 4), 0..5),
                                    c in prop::collection::vec(dyadic(), 4)) {
            let xs: Vec<_> = x.iter().map(|v| sv(v)).collect();
            let ps: Vec<_> = x.iter().chain(&extra).map(|v| sv(v)).collect();
            let shift = |vs: &[StyleVector<f64>]| -> Vec<StyleVector<f64>> {
                vs.iter().map(|v| sv(&v.as_slice().iter().zip(&c).map(|(a, b)| a + b).collect::<Vec<_>>())).collect()
            };
            let a = style_delta(&xs, &ps).unwrap();
            let b = style_delta(&shift(&xs), &shift(&ps)).unwrap();
            for (p, q) in a.delta.iter().zip(&b.delta) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }
}

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{action_features, play_match, Action, GameState, ScriptedPolicy, StyleParams};
use crate::error::{Error, Result};
use crate::rng::Streams;

/// Bumped whenever probe-set generation changes.
pub const PROBE_SET_VERSION: u32 = 1;
pub const PROBE_SET_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Aggression,
    GoalThreat,
    Defensiveness,
    KickRate,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Aggression,
        Attribute::GoalThreat,
        Attribute::Defensiveness,
        Attribute::KickRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Aggression => "aggression",
            Attribute::GoalThreat => "goal_threat",
            Attribute::Defensiveness => "defensiveness",
            Attribute::KickRate => "kick_rate",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown attribute `{s}`")))
    }
}

/// Mean heuristic changes of a player's chosen moves over the probe set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub aggression: f64,
    pub goal_threat: f64,
    pub defensiveness: f64,
    pub kick_rate: f64,
}

impl AttributeProfile {
    pub fn get(&self, a: Attribute) -> f64 {
        match a {
            Attribute::Aggression => self.aggression,
            Attribute::GoalThreat => self.goal_threat,
            Attribute::Defensiveness => self.defensiveness,
            Attribute::KickRate => self.kick_rate,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        Attribute::ALL.map(|a| self.get(a))
    }
}

/// Profile of the moves `choices[i]` made in `probes[i]`.
pub fn profile_from_choices(probes: &[GameState], choices: &[Action]) -> Result<AttributeProfile> {
    if probes.is_empty() {
        return Err(Error::Argument("empty probe set".into()));
    }
    if probes.len() != choices.len() {
        return Err(Error::dim("profile_from_choices", &[probes.len()], &[choices.len()]));
    }
    let mut sum = AttributeProfile::default();
    for (state, &a) in probes.iter().zip(choices) {
        let f = action_features(state, a)?;
        sum.aggression += f.chase;
        sum.goal_threat += f.goal;
        sum.defensiveness += f64::from(u8::from(f.between));
        sum.kick_rate += f64::from(u8::from(f.kick));
    }
    let n = probes.len() as f64;
    Ok(AttributeProfile {
        aggression: sum.aggression / n,
        goal_threat: sum.goal_threat / n,
        defensiveness: sum.defensiveness / n,
        kick_rate: sum.kick_rate / n,
    })
}

pub fn probe_attributes(
    mut choose: impl FnMut(&GameState) -> Result<Action>,
    probes: &[GameState],
) -> Result<AttributeProfile> {
    let choices = probes.iter().map(&mut choose).collect::<Result<Vec<_>>>()?;
    profile_from_choices(probes, &choices)
}

fn probe_style<R: Rng + ?Sized>(rng: &mut R) -> StyleParams {
    StyleParams {
        chase_weight: rng.random_range(-0.5..2.5),
        goal_push_weight: rng.random_range(-0.5..2.5),
        defend_weight: rng.random_range(-1.0..2.0),
        kick_bias: rng.random_range(-2.0..1.5),
        temperature: rng.random_range(0.4..1.5),
    }
}

/// Nonterminal states sampled from playouts between randomly drawn
/// scripted agents. Deterministic in `seed`.
pub fn generate_probe_set(seed: u64, size: usize) -> Result<Vec<GameState>> {
    if size == 0 {
        return Err(Error::Argument("probe set size must be positive".into()));
    }
    let streams = Streams::new(seed).split(&format!("probe-set/v{PROBE_SET_VERSION}"));
    let mut rng = streams.stream("styles");
    let mut out = Vec::with_capacity(size);
    let mut game = 0u64;
    while out.len() < size {
        let l = ScriptedPolicy::sampling(probe_style(&mut rng));
        let r = ScriptedPolicy::sampling(probe_style(&mut rng));
        let result = play_match(&l, &r, rng.random::<u64>() ^ game)?;
        for rec in &result.trajectory {
            if out.len() < size && rng.random_bool(0.15) {
                out.push(rec.state);
            }
        }
        game += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::scripted_policy;

    fn probes() -> Vec<GameState> {
        generate_probe_set(7, PROBE_SET_SIZE).unwrap()
    }

    #[test]
    fn probe_set_is_deterministic_and_live() {
        let a = generate_probe_set(7, 300).unwrap();
        assert_eq!(a, generate_probe_set(7, 300).unwrap());
        assert_ne!(a, generate_probe_set(8, 300).unwrap());
        assert!(a.iter().all(|s| !s.is_terminal() && s.is_well_formed()));
        assert!(generate_probe_set(7, 0).is_err());
    }

    #[test]
    fn always_stay_is_neutral() {
        let p = probes();
        let prof = probe_attributes(|_| Ok(Action::Stay), &p).unwrap();
        assert_eq!(prof.aggression, 0.0);
        assert_eq!(prof.goal_threat, 0.0);
        assert_eq!(prof.kick_rate, 0.0);
        assert!(matches!(
            probe_attributes(|_| Ok(Action::Stay), &[]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn kick_lover_kicks_whenever_possible() {
        let p = probes();
        let style = StyleParams {
            chase_weight: 0.3,
            goal_push_weight: 0.5,
            defend_weight: 0.2,
            kick_bias: 1e3,
            temperature: 1.0,
        };
        let prof = probe_attributes(|s| Ok(scripted_policy(&style, s)?.argmax()), &p).unwrap();
        let kickable = p
            .iter()
            .filter(|s| s.legal_actions().unwrap().iter().any(Action::is_kick))
            .count();
        assert_eq!(prof.kick_rate, kickable as f64 / p.len() as f64);
        assert!(kickable > 0);
    }

    #[test]
    fn attributes_monotone_in_their_weight() {
        let p = probes();
        let base = StyleParams {
            chase_weight: 0.5,
            goal_push_weight: 0.5,
            defend_weight: 0.5,
            kick_bias: 0.0,
            temperature: 1.0,
        };
        let grid = [-2.0, -0.5, 0.5, 1.5, 3.0];
        type Setter = fn(&mut StyleParams, f64);
        let cases: [(Attribute, Setter); 4] = [
            (Attribute::Aggression, |s, w| s.chase_weight = w),
            (Attribute::GoalThreat, |s, w| s.goal_push_weight = w),
            (Attribute::Defensiveness, |s, w| s.defend_weight = w),
            (Attribute::KickRate, |s, w| s.kick_bias = w),
        ];
        for (attr, set) in cases {
            let mut last = f64::NEG_INFINITY;
            for &w in &grid {
                let mut style = base;
                set(&mut style, w);
                let prof = probe_attributes(|s| Ok(scripted_policy(&style, s)?.argmax()), &p).unwrap();
                let v = prof.get(attr);
                assert!(v >= last - 1e-12, "{attr} fell from {last} to {v} at weight {w}");
                last = v;
            }
        }
    }

    #[test]
    fn attribute_names_parse() {
        for a in Attribute::ALL {
            assert_eq!(a.name().parse::<Attribute>().unwrap(), a);
        }
        assert!("speed".parse::<Attribute>().is_err());
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSet, GameState, Side, NUM_ACTIONS};
use crate::error::{Error, Result};

/// Weights of a scripted agent. Positive weights mean more of the
/// corresponding behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub chase_weight: f64,
    pub goal_push_weight: f64,
    pub defend_weight: f64,
    pub kick_bias: f64,
    pub temperature: f64,
}

impl StyleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.chase_weight,
            self.goal_push_weight,
            self.defend_weight,
            self.kick_bias,
            self.temperature,
        ];
        if all.iter().any(|x| !x.is_finite()) || self.temperature <= 0.0 {
            return Err(Error::Argument(format!("invalid style parameters {self:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.chase_weight,
            self.goal_push_weight,
            self.defend_weight,
            self.kick_bias,
            self.temperature,
        ]
    }
}

/// Heuristic changes caused by one action of the side to move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionFeatures {
    /// Decrease of the mover's Manhattan distance to the ball.
    pub chase: f64,
    /// Decrease of the ball's distance to the goal the mover attacks.
    pub goal: f64,
    /// Mover ends inside the cone between the ball and its own goal.
    pub between: bool,
    pub kick: bool,
}

fn between(state: &GameState, side: Side) -> bool {
    let me = state.agent(side);
    let t = match side {
        Side::L => state.ball.x - me.x,
        Side::R => me.x - state.ball.x,
    };
    t > 0 && (me.y - state.ball.y).abs() <= t
}

pub fn action_features(state: &GameState, action: Action) -> Result<ActionFeatures> {
    let side = state.to_move;
    let next = state.apply(action)?;
    let b = &state.board;
    let d_ball = |s: &GameState| s.agent(side).manhattan(s.ball) as f64;
    Ok(ActionFeatures {
        chase: d_ball(state) - d_ball(&next),
        goal: (b.goal_distance(state.ball, side) - b.goal_distance(next.ball, side)) as f64,
        between: between(&next, side),
        kick: action.is_kick(),
    })
}

/// Probabilities over the nine actions in board frame; zero off the legal
/// set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDist {
    pub probs: [f64; NUM_ACTIONS],
    pub legal: ActionSet,
}

impl ActionDist {
    /// Softmax of `scores` over `legal`, scaled by `1/temperature`.
    pub fn from_scores(scores: &[f64; NUM_ACTIONS], legal: ActionSet, temperature: f64) -> Self {
        let max = legal
            .iter()
            .map(|a| scores[a.index()] / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = [0.0; NUM_ACTIONS];
        let mut sum = 0.0;
        for a in legal.iter() {
            let p = (scores[a.index()] / temperature - max).exp();
            probs[a.index()] = p;
            sum += p;
        }
        probs.iter_mut().for_each(|p| *p /= sum);
        Self { probs, legal }
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.probs[a.index()]
    }

    /// Most likely legal action, lowest index on ties.
    pub fn argmax(&self) -> Action {
        let mut best = Action::Stay;
        let mut best_p = f64::NEG_INFINITY;
        for a in self.legal.iter() {
            if self.probs[a.index()] > best_p {
                best = a;
                best_p = self.probs[a.index()];
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = Action::Stay;
        for a in self.legal.iter() {
            acc += self.probs[a.index()];
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }
}

/// Raw scores of every legal action; illegal entries are `-inf`.
pub fn scripted_scores(params: &StyleParams, state: &GameState) -> Result<([f64; NUM_ACTIONS], ActionSet)> {
    let legal = state.legal_actions()?;
    let mut scores = [f64::NEG_INFINITY; NUM_ACTIONS];
    for a in legal.iter() {
        let f = action_features(state, a)?;
        scores[a.index()] = params.chase_weight * f.chase
            + params.goal_push_weight * f.goal
            + params.defend_weight * f64::from(u8::from(f.between))
            + params.kick_bias * f64::from(u8::from(f.kick));
    }
    Ok((scores, legal))
}

pub fn scripted_policy(params: &StyleParams, state: &GameState) -> Result<ActionDist> {
    params.validate()?;
    let (scores, legal) = scripted_scores(params, state)?;
    Ok(ActionDist::from_scores(&scores, legal, params.temperature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Board, Pos};
    use crate::rng::Streams;

    fn params(chase: f64, push: f64, defend: f64, kick: f64, t: f64) -> StyleParams {
        StyleParams {
            chase_weight: chase,
            goal_push_weight: push,
            defend_weight: defend,
            kick_bias: kick,
            temperature: t,
        }
    }

    fn random_states(n: usize, seed: u64) -> Vec<GameState> {
        let mut rng = Streams::new(seed).stream("states");
        let board = Board::default();
        let mut out = Vec::new();
        while out.len() < n {
            let mut cell = || Pos::new(rng.random_range(0..board.width), rng.random_range(0..board.height));
            let s = GameState {
                board,
                left: cell(),
                right: cell(),
                ball: cell(),
                to_move: if out.len() % 2 == 0 { Side::L } else { Side::R },
                ply: 0,
                outcome: None,
            };
            let ball_in_goal = board.is_goal_row(s.ball.y) && (s.ball.x == 0 || s.ball.x == board.width - 1);
            if s.is_well_formed() && !ball_in_goal {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let p = params(1.0, 2.0, 0.5, -1.0, 1e6);
        for s in random_states(200, 1) {
            let d = scripted_policy(&p, &s).unwrap();
            let u = 1.0 / d.legal.len() as f64;
            for a in d.legal.iter() {
                assert!((d.prob(a) - u).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn chase_dominance() {
        let p = params(1e4, 0.0, 0.0, 0.0, 1.0);
        for s in random_states(500, 2) {
            let legal = s.legal_actions().unwrap();
            let can_close = legal.iter().any(|a| action_features(&s, a).unwrap().chase > 0.0);
            let best = scripted_policy(&p, &s).unwrap().argmax();
            if can_close {
                assert!(action_features(&s, best).unwrap().chase > 0.0, "{s:?} chose {best}");
            }
        }
    }

    // Rules restated directly from cell geometry, independent of
    // `action_features`.
    fn oracle_dist(p: &StyleParams, s: &GameState) -> [f64; NUM_ACTIONS] {
        let me = s.to_move;
        let legal = s.legal_actions().unwrap();
        let mut w = [0.0; NUM_ACTIONS];
        let mut total = 0.0;
        for a in legal.iter() {
            let n = s.apply(a).unwrap();
            let (m0, m1) = (s.agent(me), n.agent(me));
            let dist = |a: Pos, b: Pos| ((a.x - b.x).abs() + (a.y - b.y).abs()) as f64;
            let goal_x = if me == Side::L { 8.0 } else { 0.0 };
            let gd = |b: Pos| (goal_x - b.x as f64).abs() + ((b.y as f64 - 3.0).abs() - 1.0).max(0.0);
            let ahead = if me == Side::L {
                n.ball.x - m1.x
            } else {
                m1.x - n.ball.x
            } as f64;
            let cone = ahead > 0.0 && ((m1.y - n.ball.y).abs() as f64) <= ahead;
            let score = p.chase_weight * (dist(m0, s.ball) - dist(m1, n.ball))
                + p.goal_push_weight * (gd(s.ball) - gd(n.ball))
                + p.defend_weight * if cone { 1.0 } else { 0.0 }
                + p.kick_bias * if a.is_kick() { 1.0 } else { 0.0 };
            w[a.index()] = (score / p.temperature).exp();
            total += w[a.index()];
        }
        w.map(|x| x / total)
    }

    #[test]
    fn matches_score_softmax_oracle() {
        let p = params(0.7, 1.3, 0.4, -0.2, 0.8);
        for s in random_states(300, 3) {
            let d = scripted_policy(&p, &s).unwrap();
            let o = oracle_dist(&p, &s);
            for (p, q) in d.probs.iter().zip(&o) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_temperature_and_terminal() {
        let s = GameState::initial(Board::default());
        assert!(scripted_policy(&params(1.0, 1.0, 1.0, 1.0, 0.0), &s).is_err());
        let mut t = s;
        t.outcome = Some(super::super::Outcome::Draw);
        assert!(matches!(
            scripted_policy(&params(1.0, 1.0, 1.0, 1.0, 1.0), &t),
            Err(Error::Contract(_))
        ));
    }
}

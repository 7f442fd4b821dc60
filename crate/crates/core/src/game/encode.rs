use super::{Dir, GameState, Side};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const FEATURES: usize = 20;

/// Writes the features of `state` as seen by `perspective` into `out`.
///
/// The encoding is always expressed in a frame where the viewer attacks
/// east; a view from R is the view from L of the mirrored state.
pub fn encode_into(state: &GameState, perspective: Side, out: &mut [f32]) {
    assert_eq!(out.len(), FEATURES, "feature buffer length");
    let s = match perspective {
        Side::L => *state,
        Side::R => state.mirror(),
    };
    let b = s.board;
    let w1 = (b.width - 1) as f32;
    let h1 = (b.height - 1) as f32;
    let nx = |x: i8| 2.0 * x as f32 / w1 - 1.0;
    let ny = |y: i8| 2.0 * y as f32 / h1 - 1.0;
    let (me, opp, ball) = (s.left, s.right, s.ball);
    let mid = b.height / 2;
    let target_y = ball.y.clamp(mid - 1, mid + 1);
    let span = w1 + h1;

    out[0] = nx(me.x);
    out[1] = ny(me.y);
    out[2] = nx(opp.x);
    out[3] = ny(opp.y);
    out[4] = nx(ball.x);
    out[5] = ny(ball.y);
    out[6] = (ball.x - me.x) as f32 / w1;
    out[7] = (ball.y - me.y) as f32 / h1;
    out[8] = (b.attack_goal_x(Side::L) - ball.x) as f32 / w1;
    out[9] = (target_y - ball.y) as f32 / h1;
    for (k, dir) in Dir::ALL.into_iter().enumerate() {
        out[10 + k] = if me.step(dir) == ball { 1.0 } else { 0.0 };
    }
    out[14] = if s.to_move == Side::L { 1.0 } else { -1.0 };
    out[15] = s.ply as f32 / b.ply_cap as f32;
    out[16] = me.manhattan(ball) as f32 / span;
    out[17] = b.goal_distance(ball, Side::L) as f32 / span;
    out[18] = 1.0;
    out[19] = -1.0;
}

pub fn encode_state(state: &GameState, perspective: Side) -> Tensor<f32> {
    let mut out = Tensor::zeros(&[FEATURES]);
    encode_into(state, perspective, out.data_mut());
    out
}

/// `[n, FEATURES]` batch with each state seen by its side to move.
pub fn encode_batch(states: &[GameState]) -> Result<Tensor<f32>> {
    if states.is_empty() {
        return Err(Error::Argument("cannot encode an empty batch".into()));
    }
    let mut out = Tensor::zeros(&[states.len(), FEATURES]);
    for (i, s) in states.iter().enumerate() {
        encode_into(s, s.to_move, out.row_mut(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::game::{Board, Pos};
    use crate::rng::Streams;

    fn random_state(board: Board, rng: &mut impl Rng) -> GameState {
        loop {
            let mut cell = || Pos::new(rng.random_range(0..board.width), rng.random_range(0..board.height));
            let (left, right, ball) = (cell(), cell(), cell());
            let s = GameState {
                board,
                left,
                right,
                ball,
                to_move: if rng.random_bool(0.5) { Side::L } else { Side::R },
                ply: rng.random_range(0..board.ply_cap),
                outcome: None,
            };
            if s.is_well_formed() {
                return s;
            }
        }
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let mut rng = Streams::new(5).stream("mirror");
        for _ in 0..1000 {
            let s = random_state(Board::default(), &mut rng);
            let a = encode_state(&s, Side::R);
            let b = encode_state(&s.mirror(), Side::L);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn centred_position_negates_under_perspective_swap() {
        let s = GameState::initial(Board::default());
        let l = encode_state(&s, Side::L);
        let r = encode_state(&s, Side::R);
        assert_eq!(r.data()[0], -l.data()[2]);
        assert_eq!(r.data()[2], -l.data()[0]);
        assert_eq!(r.data()[6], l.data()[6]);
        assert_eq!(r.data()[14], -l.data()[14]);
        assert!(encode_batch(&[]).is_err());
    }

    #[test]
    fn features_bounded_on_small_board_sweep() {
        let board = Board {
            width: 4,
            height: 3,
            ..Board::default()
        };
        let cells: Vec<Pos> = board.cells().collect();
        let mut count = 0;
        for &left in &cells {
            for &right in &cells {
                for &ball in &cells {
                    for to_move in [Side::L, Side::R] {
                        for ply in [0, 57, 199] {
                            let s = GameState {
                                board,
                                left,
                                right,
                                ball,
                                to_move,
                                ply,
                                outcome: None,
                            };
                            if !s.is_well_formed() {
                                continue;
                            }
                            for p in [Side::L, Side::R] {
                                let f = encode_state(&s, p);
                                assert!(f.data().iter().all(|v| (-1.0..=1.0).contains(v)), "{s:?}");
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(count, 12 * 11 * 10 * 2 * 3 * 2);
    }
}

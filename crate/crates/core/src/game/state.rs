use serde::{Deserialize, Serialize};

use super::{Action, ActionSet, Board, Dir, Pos, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Win(Side),
    Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub board: Board,
    pub left: Pos,
    pub right: Pos,
    pub ball: Pos,
    pub to_move: Side,
    pub ply: u16,
    pub outcome: Option<Outcome>,
}

impl GameState {
    /// Agents at the centres of their halves, ball in the middle, L to move.
    pub fn initial(board: Board) -> Self {
        let mid_y = board.height / 2;
        let left_x = board.width / 4;
        Self {
            board,
            left: Pos::new(left_x, mid_y),
            right: board.mirror(Pos::new(left_x, mid_y)),
            ball: Pos::new(board.width / 2, mid_y),
            to_move: Side::L,
            ply: 0,
            outcome: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn agent(&self, side: Side) -> Pos {
        match side {
            Side::L => self.left,
            Side::R => self.right,
        }
    }

    fn agent_mut(&mut self, side: Side) -> &mut Pos {
        match side {
            Side::L => &mut self.left,
            Side::R => &mut self.right,
        }
    }

    /// Positions are pairwise distinct and in bounds, and a terminal flag is
    /// set exactly when a result exists.
    pub fn is_well_formed(&self) -> bool {
        let b = &self.board;
        b.contains(self.left)
            && b.contains(self.right)
            && b.contains(self.ball)
            && self.left != self.right
            && self.left != self.ball
            && self.right != self.ball
            && self.ply <= b.ply_cap
    }

    /// Reflects the board east-west and swaps the roles of L and R.
    pub fn mirror(&self) -> GameState {
        let b = &self.board;
        GameState {
            board: self.board,
            left: b.mirror(self.right),
            right: b.mirror(self.left),
            ball: b.mirror(self.ball),
            to_move: self.to_move.opponent(),
            ply: self.ply,
            outcome: self.outcome.map(|o| match o {
                Outcome::Win(s) => Outcome::Win(s.opponent()),
                Outcome::Draw => Outcome::Draw,
            }),
        }
    }

    fn ensure_live(&self) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::Contract("no actions in a terminal state".into()));
        }
        Ok(())
    }

    fn move_is_legal(&self, dir: Dir) -> bool {
        let me = self.agent(self.to_move);
        let opp = self.agent(self.to_move.opponent());
        let dest = me.step(dir);
        if !self.board.contains(dest) || dest == opp {
            return false;
        }
        if dest == self.ball {
            let push = self.ball.step(dir);
            return self.board.contains(push) && push != opp;
        }
        true
    }

    pub fn legal_actions(&self) -> Result<ActionSet> {
        self.ensure_live()?;
        let me = self.agent(self.to_move);
        let mut set = ActionSet::default();
        set.insert(Action::Stay);
        for dir in Dir::ALL {
            if self.move_is_legal(dir) {
                set.insert(Action::Move(dir));
            }
        }
        if me.manhattan(self.ball) == 1 {
            for dir in Dir::ALL {
                set.insert(Action::Kick(dir));
            }
        }
        Ok(set)
    }

    fn goal_for(&self, ball: Pos) -> Option<Side> {
        if !self.board.is_goal_row(ball.y) {
            return None;
        }
        if ball.x == self.board.attack_goal_x(Side::L) {
            Some(Side::L)
        } else if ball.x == self.board.attack_goal_x(Side::R) {
            Some(Side::R)
        } else {
            None
        }
    }

    /// Next state after the side to move plays `action` (board frame).
    pub fn apply(&self, action: Action) -> Result<GameState> {
        if !self.legal_actions()?.contains(action) {
            return Err(Error::Contract(format!("illegal action {action} in {self:?}")));
        }
        let mover = self.to_move;
        let mut next = *self;
        let mut scorer = None;
        match action {
            Action::Stay => {}
            Action::Move(dir) => {
                let dest = self.agent(mover).step(dir);
                if dest == self.ball {
                    next.ball = self.ball.step(dir);
                    scorer = self.goal_for(next.ball);
                }
                *next.agent_mut(mover) = dest;
            }
            Action::Kick(dir) => {
                for _ in 0..self.board.kick_range {
                    let cell = next.ball.step(dir);
                    if !self.board.contains(cell) || cell == self.left || cell == self.right {
                        break;
                    }
                    next.ball = cell;
                    scorer = self.goal_for(cell);
                    if scorer.is_some() {
                        break;
                    }
                }
            }
        }
        next.ply += 1;
        next.to_move = mover.opponent();
        next.outcome = match scorer {
            Some(side) => Some(Outcome::Win(side)),
            None if next.ply >= self.board.ply_cap => Some(Outcome::Draw),
            None => None,
        };
        Ok(next)
    }
}

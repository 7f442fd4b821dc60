//! GridSoccer: a deterministic two-player ball-pushing game on a 9×7 board,
//! with scripted style-parameterized agents and interpretable attribute
//! probes.
//!
//! Player L defends the west edge and attacks the east edge. A goal is
//! scored when the ball enters one of the three centre cells of an edge
//! column; the side attacking that edge wins, whoever moved the ball.

mod attributes;
mod encode;
mod play;
mod scripted;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use attributes::{
    generate_probe_set, probe_attributes, profile_from_choices, Attribute, AttributeProfile, PROBE_SET_SIZE,
    PROBE_SET_VERSION,
};
pub use encode::{encode_batch, encode_into, encode_state, FEATURES};
pub use play::{play_match, FnPolicy, MatchResult, PlyRecord, Policy, ScriptedPolicy};
pub use scripted::{action_features, scripted_policy, scripted_scores, ActionDist, ActionFeatures, StyleParams};
pub use state::{GameState, Outcome};

pub const NUM_ACTIONS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Side::L => 0,
            Side::R => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Side> {
        match i {
            0 => Some(Side::L),
            1 => Some(Side::R),
            _ => None,
        }
    }
}

/// Board geometry. The default is the 9×7 game; smaller boards exist for
/// exhaustive rule checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Board {
    pub width: i8,
    pub height: i8,
    pub kick_range: i8,
    pub ply_cap: u16,
}

impl Default for Board {
    fn default() -> Self {
        Self {
            width: 9,
            height: 7,
            kick_range: 3,
            ply_cap: 200,
        }
    }
}

impl Board {
    pub fn contains(&self, p: Pos) -> bool {
        (0..self.width).contains(&p.x) && (0..self.height).contains(&p.y)
    }

    /// The three centre rows of each edge column form the goals.
    pub fn is_goal_row(&self, y: i8) -> bool {
        let mid = self.height / 2;
        (mid - 1..=mid + 1).contains(&y)
    }

    pub fn own_goal_x(&self, side: Side) -> i8 {
        match side {
            Side::L => 0,
            Side::R => self.width - 1,
        }
    }

    pub fn attack_goal_x(&self, side: Side) -> i8 {
        self.own_goal_x(side.opponent())
    }

    /// Manhattan distance from `p` to the nearest goal cell attacked by
    /// `side`.
    pub fn goal_distance(&self, p: Pos, side: Side) -> i32 {
        let mid = self.height / 2;
        let dy = ((p.y - mid).abs() - 1).max(0);
        (self.attack_goal_x(side) - p.x).abs() as i32 + dy as i32
    }

    pub fn mirror(&self, p: Pos) -> Pos {
        Pos::new(self.width - 1 - p.x, p.y)
    }

    pub fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Pos::new(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: i8,
    pub y: i8,
}

impl Pos {
    pub const fn new(x: i8, y: i8) -> Self {
        Self { x, y }
    }

    pub fn step(self, dir: Dir) -> Pos {
        let (dx, dy) = dir.delta();
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.x - other.x).abs() as i32 + (self.y - other.y).abs() as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    N,
    S,
    E,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::S, Dir::E, Dir::W];

    /// North is increasing `y`; east is increasing `x`.
    pub fn delta(self) -> (i8, i8) {
        match self {
            Dir::N => (0, 1),
            Dir::S => (0, -1),
            Dir::E => (1, 0),
            Dir::W => (-1, 0),
        }
    }

    pub fn mirrored(self) -> Dir {
        match self {
            Dir::E => Dir::W,
            Dir::W => Dir::E,
            d => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stay,
    Move(Dir),
    Kick(Dir),
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Stay,
        Action::Move(Dir::N),
        Action::Move(Dir::S),
        Action::Move(Dir::E),
        Action::Move(Dir::W),
        Action::Kick(Dir::N),
        Action::Kick(Dir::S),
        Action::Kick(Dir::E),
        Action::Kick(Dir::W),
    ];

    pub fn index(self) -> usize {
        let d = |d: Dir| Dir::ALL.iter().position(|&x| x == d).expect("direction");
        match self {
            Action::Stay => 0,
            Action::Move(dir) => 1 + d(dir),
            Action::Kick(dir) => 5 + d(dir),
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn is_kick(self) -> bool {
        matches!(self, Action::Kick(_))
    }

    pub fn mirrored(self) -> Action {
        match self {
            Action::Stay => Action::Stay,
            Action::Move(d) => Action::Move(d.mirrored()),
            Action::Kick(d) => Action::Kick(d.mirrored()),
        }
    }

    /// Converts between the board frame and `side`'s own frame, in which
    /// the side always attacks east. The map is an involution.
    pub fn relative_to(self, side: Side) -> Action {
        match side {
            Side::L => self,
            Side::R => self.mirrored(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Stay => write!(f, "stay"),
            Action::Move(d) => write!(f, "move-{d:?}"),
            Action::Kick(d) => write!(f, "kick-{d:?}"),
        }
    }
}

/// Set of actions as a bitmask over [`Action::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u16);

impl ActionSet {
    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(&self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    pub fn relative_to(self, side: Side) -> ActionSet {
        let mut out = ActionSet::default();
        for a in self.iter() {
            out.insert(a.relative_to(side));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_indices_round_trip() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
            assert_eq!(a.relative_to(Side::R).relative_to(Side::R), *a);
        }
        assert_eq!(Action::from_index(9), None);
    }

    #[test]
    fn goal_geometry() {
        let b = Board::default();
        assert!((2..=4).all(|y| b.is_goal_row(y)));
        assert!(!b.is_goal_row(1) && !b.is_goal_row(5));
        assert_eq!(b.goal_distance(Pos::new(8, 3), Side::L), 0);
        assert_eq!(b.goal_distance(Pos::new(8, 6), Side::L), 2);
        assert_eq!(b.goal_distance(Pos::new(4, 3), Side::R), 4);
        let small = Board {
            width: 4,
            height: 3,
            ..Board::default()
        };
        assert!((0..3).all(|y| small.is_goal_row(y)));
    }
}

use std::ops::Range;

use rand::Rng;

use super::PlayerSpec;
use crate::adapter::PlayerId;
use crate::error::{Error, Result};
use crate::game::{play_match, Action, GameState, ScriptedPolicy, Side};
use crate::rng::Streams;

/// One recorded decision: the raw state and the mover-relative action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub state: GameState,
    pub action: u8,
}

impl Sample {
    /// The recorded action in board coordinates.
    pub fn board_action(&self) -> Action {
        Action::from_index(self.action as usize)
            .expect("stored action indices are below NUM_ACTIONS")
            .relative_to(self.state.to_move)
    }
}

/// A contiguous run of samples (one partition or a whole dataset).
#[derive(Debug, Clone, Copy)]
pub struct SplitView<'a> {
    pub samples: &'a [Sample],
}

impl SplitView<'_> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One player's decisions grouped by game, split 80/10/10 by game into
/// train / test / validation (in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerDataset {
    player: PlayerId,
    samples: Vec<Sample>,
    /// Sample offset of each game, plus the total at the end.
    game_starts: Vec<usize>,
    n_train: usize,
    n_test: usize,
}

/// Game counts `(train, test, validation)`; test and validation each get
/// `round(n / 10)` games but at least one.
pub fn split_counts(n_games: usize) -> Result<(usize, usize, usize)> {
    if n_games < 10 {
        return Err(Error::Argument(format!(
            "need at least 10 games to split, got {n_games}"
        )));
    }
    let tenth = ((n_games as f64) / 10.0).round().max(1.0) as usize;
    Ok((n_games - 2 * tenth, tenth, tenth))
}

impl PlayerDataset {
    /// Builds a dataset from per-game samples; games are kept in order.
    pub fn from_games(player: PlayerId, games: Vec<Vec<Sample>>) -> Result<Self> {
        let (n_train, n_test, _) = split_counts(games.len())?;
        let mut game_starts = Vec::with_capacity(games.len() + 1);
        let mut samples = Vec::new();
        for g in games {
            if g.is_empty() {
                return Err(Error::Argument(format!("empty game for player {player}")));
            }
            game_starts.push(samples.len());
            samples.extend(g);
        }
        game_starts.push(samples.len());
        Ok(Self {
            player,
            samples,
            game_starts,
            n_train,
            n_test,
        })
    }

    /// Reassembles a dataset from stored parts, validating the layout.
    pub fn from_parts(
        player: PlayerId,
        samples: Vec<Sample>,
        game_starts: Vec<usize>,
        n_train: usize,
        n_test: usize,
    ) -> Result<Self> {
        let n_games = game_starts.len().saturating_sub(1);
        let ok = game_starts.first() == Some(&0)
            && game_starts.last() == Some(&samples.len())
            && game_starts.windows(2).all(|w| w[0] < w[1])
            && split_counts(n_games).is_ok_and(|(tr, te, _)| (tr, te) == (n_train, n_test));
        if !ok {
            return Err(Error::Format(format!(
                "inconsistent dataset layout for player {player}"
            )));
        }
        Ok(Self {
            player,
            samples,
            game_starts,
            n_train,
            n_test,
        })
    }

    pub fn player(&self) -> PlayerId {
        self.player
    }

    pub fn n_games(&self) -> usize {
        self.game_starts.len() - 1
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn game_starts(&self) -> &[usize] {
        &self.game_starts
    }

    pub fn split_games(&self) -> (usize, usize, usize) {
        (self.n_train, self.n_test, self.n_games() - self.n_train - self.n_test)
    }

    pub fn game(&self, g: usize) -> &[Sample] {
        &self.samples[self.game_starts[g]..self.game_starts[g + 1]]
    }

    fn games_view(&self, games: Range<usize>) -> SplitView<'_> {
        SplitView {
            samples: &self.samples[self.game_starts[games.start]..self.game_starts[games.end]],
        }
    }

    pub fn all(&self) -> SplitView<'_> {
        SplitView { samples: &self.samples }
    }

    pub fn train(&self) -> SplitView<'_> {
        self.games_view(0..self.n_train)
    }

    pub fn test(&self) -> SplitView<'_> {
        self.games_view(self.n_train..self.n_train + self.n_test)
    }

    pub fn validation(&self) -> SplitView<'_> {
        self.games_view(self.n_train + self.n_test..self.n_games())
    }

    /// A new dataset over a contiguous range of games, re-split 80/10/10.
    pub fn subset(&self, games: Range<usize>) -> Result<Self> {
        if games.end > self.n_games() || games.start >= games.end {
            return Err(Error::Argument(format!(
                "game range {games:?} outside 0..{}",
                self.n_games()
            )));
        }
        let per_game = games.map(|g| self.game(g).to_vec()).collect();
        Self::from_games(self.player, per_game)
    }

    /// Games of several datasets back to back, attributed to `player`.
    pub fn concat(player: PlayerId, parts: &[&PlayerDataset]) -> Result<Self> {
        let games = parts
            .iter()
            .flat_map(|d| (0..d.n_games()).map(move |g| d.game(g).to_vec()))
            .collect();
        Self::from_games(player, games)
    }
}

/// Plays `n_games` for `spec` against `opponents` in rotation, alternating
/// seats, and records only the focal player's decisions.
pub fn generate_games(spec: &PlayerSpec, opponents: &[PlayerSpec], n_games: usize, seed: u64) -> Result<PlayerDataset> {
    split_counts(n_games)?;
    if opponents.is_empty() {
        return Err(Error::Argument("opponent pool is empty".into()));
    }
    let mut rng = Streams::new(seed).stream(&format!("games/{}", spec.id));
    let me = ScriptedPolicy::sampling(spec.style);
    let mut games = Vec::with_capacity(n_games);
    for g in 0..n_games {
        let opp = ScriptedPolicy::sampling(opponents[g % opponents.len()].style);
        let (side, result) = if g % 2 == 0 {
            (Side::L, play_match(&me, &opp, rng.random())?)
        } else {
            (Side::R, play_match(&opp, &me, rng.random())?)
        };
        let samples = result
            .trajectory
            .iter()
            .filter(|p| p.state.to_move == side)
            .map(|p| Sample {
                state: p.state,
                action: p.action.relative_to(side).index() as u8,
            })
            .collect();
        games.push(samples);
    }
    PlayerDataset::from_games(spec.id, games)
}

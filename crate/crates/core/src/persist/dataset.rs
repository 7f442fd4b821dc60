//! Compact binary game logs: a header, then per player the game layout and
//! one 10-byte record per decision.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{open_artifact, FORMAT_VERSION};
use crate::adapter::PlayerId;
use crate::error::{Error, Result};
use crate::game::{Board, GameState, Pos, Side};
use crate::population::{PlayerDataset, Sample};

const MAGIC: &[u8; 4] = b"SVDS";

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Argument(format!("{v} does not fit the dataset format")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn truncated(e: Error) -> Error {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Format("dataset file is truncated".into())
        }
        other => other,
    }
}

pub fn write_datasets<W: Write>(mut w: W, datasets: &[&PlayerDataset]) -> Result<()> {
    let board = datasets
        .iter()
        .flat_map(|d| d.all().samples.first())
        .map(|s| s.state.board)
        .next()
        .unwrap_or_default();
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION as usize)?;
    w.write_all(&[board.width as u8, board.height as u8, board.kick_range as u8, 0])?;
    w.write_all(&board.ply_cap.to_le_bytes())?;
    put_u32(&mut w, datasets.len())?;
    for d in datasets {
        let (n_train, n_test, _) = d.split_games();
        put_u32(&mut w, d.player().0 as usize)?;
        put_u32(&mut w, d.n_games())?;
        put_u32(&mut w, n_train)?;
        put_u32(&mut w, n_test)?;
        for &s in d.game_starts() {
            put_u32(&mut w, s)?;
        }
        for s in d.all().samples {
            let st = &s.state;
            if st.board != board || st.outcome.is_some() {
                return Err(Error::Argument("samples must be live states on one board".into()));
            }
            w.write_all(&[
                st.left.x as u8,
                st.left.y as u8,
                st.right.x as u8,
                st.right.y as u8,
                st.ball.x as u8,
                st.ball.y as u8,
                st.to_move.index(),
            ])?;
            w.write_all(&st.ply.to_le_bytes())?;
            w.write_all(&[s.action])?;
        }
    }
    Ok(())
}

pub fn read_datasets<R: Read>(mut r: R) -> Result<Vec<PlayerDataset>> {
    read_inner(&mut r).map_err(truncated)
}

fn read_inner<R: Read>(r: &mut R) -> Result<Vec<PlayerDataset>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("dataset format {version} is not supported")));
    }
    let mut geo = [0u8; 6];
    r.read_exact(&mut geo)?;
    let board = Board {
        width: geo[0] as i8,
        height: geo[1] as i8,
        kick_range: geo[2] as i8,
        ply_cap: u16::from_le_bytes([geo[4], geo[5]]),
    };
    let n = get_u32(r)?;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let player = PlayerId(get_u32(r)? as u32);
        let games = get_u32(r)?;
        let n_train = get_u32(r)?;
        let n_test = get_u32(r)?;
        let starts = (0..=games).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        let total = *starts.last().expect("games + 1 entries");
        let mut samples = Vec::with_capacity(total.min(1 << 24));
        let mut rec = [0u8; 10];
        for _ in 0..total {
            r.read_exact(&mut rec)?;
            let pos = |i: usize| Pos::new(rec[i] as i8, rec[i + 1] as i8);
            let state = GameState {
                board,
                left: pos(0),
                right: pos(2),
                ball: pos(4),
                to_move: if rec[6] == 0 { Side::L } else { Side::R },
                ply: u16::from_le_bytes([rec[7], rec[8]]),
                outcome: None,
            };
            if !state.is_well_formed() || rec[6] > 1 || rec[9] as usize >= crate::game::NUM_ACTIONS {
                return Err(Error::Format(format!("corrupt record for {player}")));
            }
            samples.push(Sample { state, action: rec[9] });
        }
        out.push(PlayerDataset::from_parts(player, samples, starts, n_train, n_test)?);
    }
    Ok(out)
}

pub fn save_datasets(path: &Path, datasets: &[&PlayerDataset]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_datasets(&mut w, datasets)?;
    w.flush()?;
    Ok(())
}

pub fn load_datasets(path: &Path) -> Result<Vec<PlayerDataset>> {
    read_datasets(BufReader::new(open_artifact(path)?))
}

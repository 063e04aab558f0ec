//! Flat binary snapshots.
//!
//! ```text
//! VNSF1
//! dim 2
//! nx 32
//! ny 32
//! hx 0.03125
//! hy 0.03125
//! t 0.1
//! bc periodic
//!
//! <little-endian f64 payload: rho, v1, (v2), c; each row-major>
//! ```
//!
//! Floats in the header use the shortest representation that parses back to
//! the same bits, so `decode(encode(s)) == s` bitwise.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{BcKind, Grid, ScalarField, State, VectorField};

pub const MAGIC: &str = "VNSF1";

const KEYS: [&str; 7] = ["dim", "nx", "ny", "hx", "hy", "t", "bc"];

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Snapshot(msg.into()))
}

pub fn encode(state: &State) -> Vec<u8> {
    let g = state.grid();
    let mut out = format!(
        "{MAGIC}\ndim {}\nnx {}\nny {}\nhx {:?}\nhy {:?}\nt {:?}\nbc {}\n\n",
        g.dim(),
        g.nx(),
        g.ny(),
        g.hx(),
        g.hy(),
        state.t,
        g.bc().token()
    )
    .into_bytes();
    out.reserve(8 * (g.dim() + 2) * g.cells());
    let fields = std::iter::once(state.rho.values()).chain((0..g.dim()).map(|a| state.v.comp(a))).chain(std::iter::once(state.c.values()));
    for f in fields {
        for x in f {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Header {
    dim: usize,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    t: f64,
    bc: BcKind,
}

fn parse_header(text: &str) -> Result<Header> {
    let mut lines = text.split('\n');
    if lines.next() != Some(MAGIC) {
        return err(format!("bad magic, expected {MAGIC}"));
    }
    let mut values: [Option<&str>; 7] = [None; 7];
    for line in lines {
        let (key, value) = match line.split_once(' ') {
            Some(kv) => kv,
            None => return err(format!("malformed header line {line:?}")),
        };
        let slot = match KEYS.iter().position(|k| *k == key) {
            Some(i) => i,
            None => return err(format!("unknown header key {key:?}")),
        };
        if values[slot].replace(value).is_some() {
            return err(format!("duplicate header key {key:?}"));
        }
    }
    let get = |i: usize| values[i].ok_or_else(|| Error::Snapshot(format!("missing header key {:?}", KEYS[i])));
    let int =
        |i: usize| -> Result<usize> { get(i)?.parse().map_err(|_| Error::Snapshot(format!("{} is not a nonnegative integer", KEYS[i]))) };
    let real = |i: usize| -> Result<f64> { get(i)?.parse().map_err(|_| Error::Snapshot(format!("{} is not a number", KEYS[i]))) };
    let bc_token = get(6)?;
    let bc = BcKind::from_token(bc_token).ok_or_else(|| Error::Snapshot(format!("unknown bc {bc_token:?}")))?;
    Ok(Header { dim: int(0)?, nx: int(1)?, ny: int(2)?, hx: real(3)?, hy: real(4)?, t: real(5)?, bc })
}

/// Decodes a snapshot. Only shapes are checked, so trajectories with small
/// undershoots read back unchanged.
pub fn decode(bytes: &[u8]) -> Result<State> {
    if !bytes.starts_with(MAGIC.as_bytes()) {
        return err(format!("bad magic, expected {MAGIC}"));
    }
    let split = match bytes.windows(2).position(|w| w == b"\n\n") {
        Some(p) => p,
        None => return err("header is not terminated by a blank line"),
    };
    let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Snapshot("header is not UTF-8".into()))?;
    let h = parse_header(text)?;
    let payload = &bytes[split + 2..];

    let n_fields = h.dim.checked_add(2);
    let expected = n_fields.and_then(|k| k.checked_mul(h.nx)).and_then(|k| k.checked_mul(h.ny)).and_then(|k| k.checked_mul(8));
    let expected = match expected {
        Some(e) => e,
        None => return err("header dimensions overflow"),
    };
    if payload.len() < expected {
        return err(format!("truncated payload: expected {expected} bytes, found {}", payload.len()));
    }
    if payload.len() > expected {
        return err(format!("header/payload size disagreement: header implies {expected} bytes, found {}", payload.len()));
    }
    let grid = Grid::from_spacing(h.dim, h.nx, h.ny, h.hx, h.hy, h.bc)?;
    if grid.ny() != h.ny {
        return err(format!("ny = {} does not match a {}-D grid", h.ny, h.dim));
    }
    let n = grid.cells();
    let floats: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    let rho = ScalarField::new(grid, floats[..n].to_vec())?;
    let v = VectorField::new(grid, floats[n..(1 + h.dim) * n].to_vec())?;
    let c = ScalarField::new(grid, floats[(1 + h.dim) * n..].to_vec())?;
    State::assemble(h.t, rho, v, c)
}

pub fn write_snapshot(state: &State, path: &Path) -> Result<()> {
    fs::write(path, encode(state))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<State> {
    decode(&fs::read(path)?)
}

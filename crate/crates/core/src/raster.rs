//! Bit-packed spike raster dumps.
//!
//! A dump is a sequence of records, one per spike train:
//!
//! ```text
//! "SPK1" | T: u32 | N: u32 | C: u32 | H: u32 | W: u32 | T * ceil(size / 8) bytes
//! ```
//!
//! All integers are little-endian. Each plane is packed LSB-first: element
//! `i` lives in bit `i % 8` of byte `i / 8`; padding bits are zero.

use std::io::Write;

use crate::error::{Error, Result};
use crate::spike::SpikeTrain;

pub const MAGIC: &[u8; 4] = b"SPK1";
const HEADER_LEN: usize = 4 + 5 * 4;

fn plane_bytes(size: usize) -> usize {
    size.div_ceil(8)
}

pub fn write_raster(out: &mut impl Write, train: &SpikeTrain) -> Result<()> {
    let to_u32 = |v: usize| {
        u32::try_from(v)
            .map_err(|_| Error::format("spike raster", format!("extent {v} exceeds u32")))
    };
    out.write_all(MAGIC)?;
    out.write_all(&to_u32(train.window())?.to_le_bytes())?;
    for d in train.shape() {
        out.write_all(&to_u32(d)?.to_le_bytes())?;
    }
    let mut buf = vec![0u8; plane_bytes(train.plane_len())];
    for t in 0..train.window() {
        buf.fill(0);
        for (i, &bit) in train.plane(t).iter().enumerate() {
            if bit {
                buf[i / 8] |= 1 << (i % 8);
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Parses every record in a dump.
pub fn read_rasters(bytes: &[u8]) -> Result<Vec<SpikeTrain>> {
    let mut trains = Vec::new();
    let mut rest = bytes;
    if rest.is_empty() {
        return Err(Error::format("spike raster", "empty file"));
    }
    while !rest.is_empty() {
        let (train, used) = read_one(rest)?;
        trains.push(train);
        rest = &rest[used..];
    }
    Ok(trains)
}

fn read_one(bytes: &[u8]) -> Result<(SpikeTrain, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("spike raster", "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(
            "spike raster",
            format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    let word = |k: usize| {
        u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize
    };
    let window = word(0);
    let shape = [word(1), word(2), word(3), word(4)];
    if window == 0 {
        return Err(Error::format("spike raster", "zero time window"));
    }
    let size = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("spike raster", "shape overflows"))?;
    let pb = plane_bytes(size);
    let body = window
        .checked_mul(pb)
        .ok_or_else(|| Error::format("spike raster", "size overflows"))?;
    if bytes.len() - HEADER_LEN < body {
        return Err(Error::format(
            "spike raster",
            format!(
                "expected {body} payload bytes, found {}",
                bytes.len() - HEADER_LEN
            ),
        ));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + body];
    let mut bits = Vec::with_capacity(window * size);
    for t in 0..window {
        let plane = &payload[t * pb..(t + 1) * pb];
        bits.extend((0..size).map(|i| plane[i / 8] >> (i % 8) & 1 == 1));
    }
    Ok((
        SpikeTrain::from_bits(window, shape, bits)?,
        HEADER_LEN + body,
    ))
}

/// Counts set bits and slots in a dump without materializing trains.
pub fn count_raster(bytes: &[u8]) -> Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    if rest.is_empty() {
        return Err(Error::format("spike raster", "empty file"));
    }
    while !rest.is_empty() {
        let (train, used) = read_one(rest)?;
        out.push((train.fired(), train.slots()));
        rest = &rest[used..];
    }
    Ok(out)
}

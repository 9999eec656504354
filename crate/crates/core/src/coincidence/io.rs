//! Tag file formats.
//!
//! Binary, little-endian:
//!
//! ```text
//! "HTAG" | u32 version = 1 | u64 resolution_fs | u8 n_channels | u64 n_tags
//! n_tags × { u8 channel | u64 ticks }
//! ```
//!
//! The binary header has no duration field; on read the duration is taken as
//! one tick past the last tag.
//!
//! Text: `#`-prefixed header comments (`resolution_fs`, `n_channels`,
//! `duration_ticks`), an optional `channel,ticks` column row, then one tag per
//! line.

use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::tags::{TagHeader, TagStream, TimeTag};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HTAG";
pub const VERSION: u32 = 1;

/// Byte length of the binary header.
pub const HEADER_LEN: usize = 4 + 4 + 8 + 1 + 8;
/// Byte length of one binary record.
pub const RECORD_LEN: usize = 9;

pub fn write_binary<W: Write>(stream: &TagStream, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u64::<LittleEndian>(stream.header.resolution_fs)?;
    out.write_u8(stream.header.n_channels)?;
    out.write_u64::<LittleEndian>(stream.tags.len() as u64)?;
    let mut buf = Vec::with_capacity(RECORD_LEN * 4096);
    for chunk in stream.tags.chunks(4096) {
        buf.clear();
        for t in chunk {
            buf.push(t.channel);
            buf.extend_from_slice(&t.ticks.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<TagStream> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let resolution_fs = input.read_u64::<LittleEndian>()?;
    let n_channels = input.read_u8()?;
    let n_tags = input.read_u64::<LittleEndian>()?;
    let mut tags = Vec::with_capacity(n_tags.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN];
    for _ in 0..n_tags {
        input.read_exact(&mut rec)?;
        let ticks = u64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        tags.push(TimeTag::new(rec[0], ticks));
    }
    let duration_ticks = tags.last().map_or(0, |t| t.ticks + 1);
    TagStream::new(
        TagHeader {
            resolution_fs,
            n_channels,
            duration_ticks,
        },
        tags,
    )
}

pub fn write_text<W: Write>(stream: &TagStream, mut out: W) -> Result<()> {
    writeln!(out, "# resolution_fs: {}", stream.header.resolution_fs)?;
    writeln!(out, "# n_channels: {}", stream.header.n_channels)?;
    writeln!(out, "# duration_ticks: {}", stream.header.duration_ticks)?;
    writeln!(out, "channel,ticks")?;
    for t in &stream.tags {
        writeln!(out, "{},{}", t.channel, t.ticks)?;
    }
    Ok(())
}

pub fn read_text<R: BufRead>(input: R) -> Result<TagStream> {
    let mut resolution_fs = None;
    let mut n_channels = None;
    let mut duration_ticks = None;
    let mut tags = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let value = value.trim();
                let parse = |v: &str| {
                    v.parse::<u64>()
                        .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
                };
                match key.trim() {
                    "resolution_fs" => resolution_fs = Some(parse(value)?),
                    "n_channels" => n_channels = Some(parse(value)? as u8),
                    "duration_ticks" => duration_ticks = Some(parse(value)?),
                    _ => {}
                }
            }
            continue;
        }
        if line.eq_ignore_ascii_case("channel,ticks") {
            continue;
        }
        let (ch, ticks) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {}: expected `channel,ticks`", lineno + 1)))?;
        let ch = ch
            .trim()
            .parse::<u8>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        let ticks = ticks
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        tags.push(TimeTag::new(ch, ticks));
    }
    let resolution_fs =
        resolution_fs.ok_or_else(|| Error::Format("missing `# resolution_fs:` header".into()))?;
    let n_channels = n_channels.unwrap_or(3);
    let duration_ticks = duration_ticks.unwrap_or_else(|| tags.last().map_or(0, |t| t.ticks + 1));
    TagStream::new(
        TagHeader {
            resolution_fs,
            n_channels,
            duration_ticks,
        },
        tags,
    )
}

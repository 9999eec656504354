use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const IDLER: u8 = 0;
pub const SIGNAL1: u8 = 1;
pub const SIGNAL2: u8 = 2;

/// One detection event: channel and timestamp in tag-resolution ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub ticks: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(channel: u8, ticks: u64) -> Self {
        Self { ticks, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagHeader {
    /// Tick length in femtoseconds.
    pub resolution_fs: u64,
    pub n_channels: u8,
    /// Acquisition length in ticks.
    pub duration_ticks: u64,
}

impl TagHeader {
    pub fn new(resolution_s: f64, n_channels: u8, duration_s: f64) -> Result<Self> {
        let resolution_fs = (resolution_s * 1e15).round();
        if !(resolution_fs >= 1.0) {
            return Err(invalid("tag_resolution", "must be at least 1 fs"));
        }
        if !(duration_s >= 0.0) {
            return Err(invalid("duration", "must be >= 0"));
        }
        let resolution_fs = resolution_fs as u64;
        let duration_ticks = (duration_s * 1e15 / resolution_fs as f64).round() as u64;
        Ok(Self {
            resolution_fs,
            n_channels,
            duration_ticks,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution_fs as f64 * 1e-15
    }

    pub fn duration(&self) -> f64 {
        self.duration_ticks as f64 * self.resolution()
    }

    /// Converts seconds to a whole number of ticks, rounding to nearest.
    pub fn to_ticks(&self, seconds: f64) -> u64 {
        (seconds / self.resolution()).round().max(0.0) as u64
    }
}

/// A globally time-sorted sequence of tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub header: TagHeader,
    pub tags: Vec<TimeTag>,
}

impl TagStream {
    /// Wraps tags, rejecting unsorted input or out-of-range channels.
    pub fn new(header: TagHeader, tags: Vec<TimeTag>) -> Result<Self> {
        if header.resolution_fs == 0 {
            return Err(invalid("resolution_fs", "must be positive"));
        }
        check_sorted(&tags)?;
        if let Some(t) = tags.iter().find(|t| t.channel >= header.n_channels) {
            return Err(invalid(
                "channel",
                format!("tag channel {} exceeds channel count {}", t.channel, header.n_channels),
            ));
        }
        Ok(Self { header, tags })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn count(&self, channel: u8) -> u64 {
        self.tags.iter().filter(|t| t.channel == channel).count() as u64
    }
}

pub fn check_sorted(tags: &[TimeTag]) -> Result<()> {
    for (i, w) in tags.windows(2).enumerate() {
        if w[1].ticks < w[0].ticks {
            return Err(Error::Unsorted {
                index: i + 1,
                previous: w[0].ticks,
                current: w[1].ticks,
            });
        }
    }
    Ok(())
}

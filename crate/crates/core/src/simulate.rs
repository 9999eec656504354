//! Monte-Carlo time-tag streams for an idler detector and a signal arm split
//! onto two detectors.
//!
//! Pairs are emitted as a homogeneous Poisson process. Each pair's signal is
//! displaced from its idler by a uniform offset on `±1/(2B)`, which is the
//! rectangular `|C(τ)|²` of the source. Every photon then independently
//! survives with the detector efficiency, picks up uniform jitter, is floored
//! to the tag grid, and finally passes a per-channel non-paralyzable dead
//! time. Intra-beam thermal bunching is not simulated; its correlation time
//! is a thousand times shorter than one tag tick.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). The duration is cut into
//! 1 ms blocks and block `k` draws from the stream `k` of a generator seeded
//! with `rng_seed`, so blocks are generated in parallel and the output does
//! not depend on thread count or batch size.

use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use crate::coincidence::{HeraldAccumulator, HeraldAnalysis, TagHeader, TagStream, TimeTag};
use crate::error::{invalid, Error, Result};
use crate::model::SpdcParams;
use crate::par;
use crate::response::DetectorModel;

/// Length of one independently seeded generation block (s).
pub const BLOCK: f64 = 1e-3;

/// Default cap on the number of tags `generate` will hold in memory.
pub const DEFAULT_TAG_BUDGET: u64 = 150_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub source: SpdcParams,
    /// Detectors for channels i, s1, s2.
    pub detectors: [DetectorModel; 3],
    /// Probability that a signal photon goes to s1.
    pub splitter_ratio: f64,
    /// Simulated acquisition time (s).
    pub duration: f64,
    pub rng_seed: u64,
    pub tag_budget: u64,
}

impl SimConfig {
    pub fn new(source: SpdcParams, detector: DetectorModel, duration: f64, rng_seed: u64) -> Self {
        Self {
            source,
            detectors: [detector; 3],
            splitter_ratio: 0.5,
            duration,
            rng_seed,
            tag_budget: DEFAULT_TAG_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return Err(invalid("splitter_ratio", "must lie in [0, 1]"));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        let res = self.detectors[0].tag_resolution;
        if self.detectors.iter().any(|d| d.tag_resolution != res) {
            return Err(invalid("tag_resolution", "must be the same on every channel"));
        }
        Ok(())
    }

    pub fn header(&self) -> Result<TagHeader> {
        TagHeader::new(self.detectors[0].tag_resolution, 3, self.duration)
    }

    /// Mean number of tags before dead-time losses.
    pub fn expected_tags(&self) -> f64 {
        let [i, s1, s2] = self.detectors.map(|d| d.efficiency);
        let s = self.splitter_ratio;
        self.source.pair_rate() * self.duration * (i + s * s1 + (1.0 - s) * s2)
    }

    fn n_blocks(&self) -> u64 {
        (self.duration / BLOCK).ceil().max(1.0) as u64
    }

    /// Largest distance a tag can land before its pair's emission time.
    fn margin(&self) -> f64 {
        let jitter = self.detectors.iter().map(|d| d.jitter_halfwidth).fold(0.0, f64::max);
        jitter + 0.5 / self.source.bandwidth()
    }

    fn block_tags(&self, block: u64) -> Vec<TimeTag> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(block);
        let res = self.detectors[0].tag_resolution;
        let start = block as f64 * BLOCK;
        let end = (start + BLOCK).min(self.duration);
        let rate = self.source.pair_rate();
        let half = 0.5 / self.source.bandwidth();
        let expected = ((end - start) * rate * 1.2) as usize + 16;
        let mut out = Vec::with_capacity(expected);
        let mut emit = |rng: &mut ChaCha8Rng, ch: usize, t: f64| {
            let d = &self.detectors[ch];
            if rng.random::<f64>() < d.efficiency {
                let t = t + d.jitter_halfwidth * (2.0 * rng.random::<f64>() - 1.0);
                if t >= 0.0 && t < self.duration {
                    out.push(TimeTag::new(ch as u8, (t / res).floor() as u64));
                }
            }
        };
        let mut t = start;
        loop {
            let gap: f64 = Exp1.sample(&mut rng);
            t += gap / rate;
            if t >= end {
                break;
            }
            emit(&mut rng, 0, t);
            let ts = t + half * (2.0 * rng.random::<f64>() - 1.0);
            let ch = if rng.random::<f64>() < self.splitter_ratio { 1 } else { 2 };
            emit(&mut rng, ch, ts);
        }
        out
    }

    /// Sorted chunks of the final stream, `batch_blocks` generation blocks at a time.
    pub fn chunks(&self, batch_blocks: u64) -> Result<TagChunks<'_>> {
        self.validate()?;
        let res = self.detectors[0].tag_resolution;
        let dead_ticks = self.detectors.map(|d| {
            let x = d.dead_time / res;
            (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as u64
        });
        Ok(TagChunks {
            cfg: self,
            next_block: 0,
            n_blocks: self.n_blocks(),
            batch: batch_blocks.max(1),
            carry: Vec::new(),
            dead: DeadTime {
                ticks: dead_ticks,
                last: [None; 3],
            },
        })
    }
}

/// Per-channel non-paralyzable dead time on tick counts.
#[derive(Debug, Clone)]
struct DeadTime {
    ticks: [u64; 3],
    last: [Option<u64>; 3],
}

impl DeadTime {
    fn apply(&mut self, tags: &mut Vec<TimeTag>) {
        tags.retain(|t| {
            let ch = t.channel as usize;
            match self.last[ch] {
                Some(prev) if t.ticks - prev < self.ticks[ch] => false,
                _ => {
                    self.last[ch] = Some(t.ticks);
                    true
                }
            }
        });
    }
}

/// Iterator over sorted, dead-time filtered tag chunks.
#[derive(Debug)]
pub struct TagChunks<'a> {
    cfg: &'a SimConfig,
    next_block: u64,
    n_blocks: u64,
    batch: u64,
    carry: Vec<TimeTag>,
    dead: DeadTime,
}

impl Iterator for TagChunks<'_> {
    type Item = Vec<TimeTag>;

    fn next(&mut self) -> Option<Vec<TimeTag>> {
        if self.next_block >= self.n_blocks && self.carry.is_empty() {
            return None;
        }
        let first = self.next_block;
        let last = (first + self.batch).min(self.n_blocks);
        self.next_block = last;
        let blocks = par::map_range((last - first) as usize, |k| self.cfg.block_tags(first + k as u64));
        let mut tags = std::mem::take(&mut self.carry);
        tags.reserve(blocks.iter().map(Vec::len).sum());
        for b in blocks {
            tags.extend(b);
        }
        par::sort_unstable(&mut tags);
        if last < self.n_blocks {
            // later blocks can still produce tags down to this tick
            let safe = (last as f64 * BLOCK - self.cfg.margin()) / self.cfg.detectors[0].tag_resolution;
            let safe = safe.floor().max(0.0) as u64;
            let cut = tags.partition_point(|t| t.ticks < safe);
            self.carry = tags.split_off(cut);
        }
        self.dead.apply(&mut tags);
        Some(tags)
    }
}

/// Generates a whole stream in memory.
pub fn generate(cfg: &SimConfig) -> Result<TagStream> {
    cfg.validate()?;
    let expected = cfg.expected_tags();
    if expected > cfg.tag_budget as f64 {
        let expected_tags = expected.ceil() as u64;
        return Err(Error::TagBudget {
            expected_tags,
            bytes: expected_tags * std::mem::size_of::<TimeTag>() as u64,
            limit: cfg.tag_budget,
        });
    }
    let mut tags = Vec::with_capacity((expected * 1.01) as usize + 64);
    for chunk in cfg.chunks(64)? {
        tags.extend(chunk);
    }
    TagStream::new(cfg.header()?, tags)
}

/// Simulates and counts heralded coincidences without materializing the
/// stream; generation runs on a producer thread feeding the correlator.
pub fn analyze_heralded(cfg: &SimConfig, range: f64) -> Result<HeraldAnalysis> {
    let header = cfg.header()?;
    let range_ticks = header.to_ticks(range).max(1);
    let mut acc = HeraldAccumulator::new(header.resolution_fs, range_ticks)?;
    let chunks = cfg.chunks(32)?;
    std::thread::scope(|s| -> Result<()> {
        let (tx, rx) = mpsc::sync_channel::<Vec<TimeTag>>(2);
        s.spawn(move || {
            for chunk in chunks {
                if tx.send(chunk).is_err() {
                    break;
                }
            }
        });
        for chunk in rx {
            acc.push(&chunk)?;
        }
        Ok(())
    })?;
    acc.finish(cfg.duration)
}

/// Adds independent Poisson background at `rate` counts/s to every channel.
/// Background tags bypass dead time.
pub fn inject_background(stream: &TagStream, rate: f64, seed: u64) -> Result<TagStream> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(invalid("background_rate", "must be >= 0"));
    }
    let ticks = stream.header.duration_ticks;
    if rate == 0.0 || ticks == 0 {
        return Ok(stream.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = rate * stream.header.duration();
    let poisson = Poisson::new(lambda).map_err(|e| invalid("background_rate", e.to_string()))?;
    let mut tags = stream.tags.clone();
    for ch in 0..stream.header.n_channels {
        let n = poisson.sample(&mut rng) as u64;
        tags.extend((0..n).map(|_| TimeTag::new(ch, rng.random_range(0..ticks))));
    }
    par::sort_unstable(&mut tags);
    TagStream::new(stream.header, tags)
}

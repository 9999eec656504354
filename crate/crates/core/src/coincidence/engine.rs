//! Streaming correlation engine.
//!
//! Tags arrive time-sorted. Each anchor tag (e.g. an idler click) is held
//! until the stream has advanced `range` ticks past it; at that point every
//! partner tag that can fall in `[anchor - range, anchor + range)` has been
//! seen and the anchor is histogrammed against the buffered partners. Partner
//! buffers only keep tags that some pending anchor can still reach, so memory
//! is bounded by the window occupancy, not the stream length.

use std::collections::VecDeque;

use super::tags::{check_sorted, TimeTag};
use crate::error::{invalid, Error, Result};
use crate::par;

/// What to correlate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelatorSpec {
    pub anchor: u8,
    /// One or two partner channels.
    pub partners: Vec<u8>,
    /// Half-range of the delay axis in ticks; delays span `[-range, range)`.
    pub range: u64,
    /// Bin width in ticks; must divide `range`.
    pub bin: u64,
    /// Also accumulate the two-partner surface (requires two partners).
    pub triples: bool,
}

impl CorrelatorSpec {
    pub fn pair(anchor: u8, partner: u8, range: u64, bin: u64) -> Self {
        Self {
            anchor,
            partners: vec![partner],
            range,
            bin,
            triples: false,
        }
    }

    pub fn heralded(anchor: u8, s1: u8, s2: u8, range: u64) -> Self {
        Self {
            anchor,
            partners: vec![s1, s2],
            range,
            bin: 1,
            triples: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partners.is_empty() || self.partners.len() > 2 {
            return Err(invalid("partners", "need one or two partner channels"));
        }
        if self.partners.contains(&self.anchor) {
            return Err(invalid("partners", "anchor channel cannot be its own partner"));
        }
        if self.partners.len() == 2 && self.partners[0] == self.partners[1] {
            return Err(invalid("partners", "partner channels must differ"));
        }
        if self.triples && self.partners.len() != 2 {
            return Err(invalid("triples", "triple surface needs two partner channels"));
        }
        if self.range == 0 || self.bin == 0 || self.range % self.bin != 0 {
            return Err(invalid("bin", "bin width must be positive and divide the range"));
        }
        Ok(())
    }

    /// Bins per delay axis.
    pub fn nbins(&self) -> usize {
        (2 * self.range / self.bin) as usize
    }
}

/// Raw counts produced by a [`Correlator`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationCounts {
    pub spec: CorrelatorSpec,
    /// Anchor-partner delay histograms, one per partner.
    pub pairs: Vec<Vec<u64>>,
    /// Row-major `[bin(partner0) * nbins + bin(partner1)]`, empty without triples.
    pub surface: Vec<u64>,
    pub anchors: u64,
}

impl CorrelationCounts {
    fn zeroed(spec: CorrelatorSpec) -> Self {
        let n = spec.nbins();
        let surface = if spec.triples { vec![0; n * n] } else { Vec::new() };
        Self {
            pairs: vec![vec![0; n]; spec.partners.len()],
            surface,
            anchors: 0,
            spec,
        }
    }

    /// Adds another shard's counts. Specs must match.
    pub fn merge(&mut self, other: &CorrelationCounts) {
        assert_eq!(self.spec, other.spec, "merging counts from different specs");
        for (a, b) in self.pairs.iter_mut().zip(&other.pairs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.surface.iter_mut().zip(&other.surface) {
            *x += y;
        }
        self.anchors += other.anchors;
    }
}

/// Single-pass streaming correlator. Feed sorted chunks with [`push`](Self::push),
/// then call [`finish`](Self::finish).
#[derive(Debug)]
pub struct Correlator {
    counts: CorrelationCounts,
    pending: VecDeque<u64>,
    buffers: Vec<VecDeque<u64>>,
    last: Option<u64>,
    seen: usize,
    /// Only anchors with ticks in `[lo, hi)` are counted (sharding).
    anchor_span: (u64, u64),
    scratch: [Vec<usize>; 2],
}

impl Correlator {
    pub fn new(spec: CorrelatorSpec) -> Result<Self> {
        Self::with_anchor_span(spec, 0, u64::MAX)
    }

    pub fn with_anchor_span(spec: CorrelatorSpec, lo: u64, hi: u64) -> Result<Self> {
        spec.validate()?;
        let np = spec.partners.len();
        Ok(Self {
            counts: CorrelationCounts::zeroed(spec),
            pending: VecDeque::new(),
            buffers: vec![VecDeque::new(); np],
            last: None,
            seen: 0,
            anchor_span: (lo, hi),
            scratch: [Vec::new(), Vec::new()],
        })
    }

    /// Largest number of tags buffered at once so far is bounded by the
    /// window occupancy; this reports the current buffer size.
    pub fn buffered(&self) -> usize {
        self.pending.len() + self.buffers.iter().map(VecDeque::len).sum::<usize>()
    }

    pub fn push(&mut self, tags: &[TimeTag]) -> Result<()> {
        let range = self.counts.spec.range;
        let anchor = self.counts.spec.anchor;
        for tag in tags {
            let t = tag.ticks;
            if let Some(prev) = self.last {
                if t < prev {
                    return Err(Error::Unsorted {
                        index: self.seen,
                        previous: prev,
                        current: t,
                    });
                }
            }
            self.last = Some(t);
            self.seen += 1;

            while let Some(&ta) = self.pending.front() {
                if t >= ta.saturating_add(range) {
                    self.pending.pop_front();
                    self.finalize(ta);
                } else {
                    break;
                }
            }
            if tag.channel == anchor {
                if t >= self.anchor_span.0 && t < self.anchor_span.1 {
                    self.pending.push_back(t);
                }
            } else if let Some(p) = self.counts.spec.partners.iter().position(|&c| c == tag.channel) {
                self.buffers[p].push_back(t);
            }
            let oldest = self.pending.front().copied().unwrap_or(t);
            let horizon = oldest.saturating_sub(range);
            for buf in &mut self.buffers {
                while buf.front().is_some_and(|&x| x < horizon) {
                    buf.pop_front();
                }
            }
        }
        Ok(())
    }

    fn finalize(&mut self, ta: u64) {
        let spec = &self.counts.spec;
        let range = spec.range;
        let bin = spec.bin;
        let lo = ta.saturating_sub(range);
        let hi = ta.saturating_add(range);
        self.counts.anchors += 1;
        for (p, buf) in self.buffers.iter().enumerate() {
            let start = buf.partition_point(|&x| x < lo);
            let end = buf.partition_point(|&x| x < hi);
            let bins = &mut self.scratch[p];
            bins.clear();
            for &tb in buf.range(start..end) {
                let idx = ((tb + range - ta) / bin) as usize;
                self.counts.pairs[p][idx] += 1;
                bins.push(idx);
            }
        }
        if spec.triples {
            let n = spec.nbins();
            for &b1 in &self.scratch[0] {
                let row = b1 * n;
                for &b2 in &self.scratch[1] {
                    self.counts.surface[row + b2] += 1;
                }
            }
        }
    }

    pub fn finish(mut self) -> CorrelationCounts {
        while let Some(ta) = self.pending.pop_front() {
            self.finalize(ta);
        }
        self.counts
    }
}

/// Tags per shard when correlating an in-memory stream.
const SHARD_TAGS: usize = 1 << 20;

/// Correlates a sorted in-memory tag slice. The slice is cut into time
/// shards whose inputs overlap by `range` on each side; each shard only
/// counts its own anchors, so merged counts equal a single sequential pass.
pub fn correlate(tags: &[TimeTag], spec: &CorrelatorSpec) -> Result<CorrelationCounts> {
    spec.validate()?;
    check_sorted(tags)?;
    if tags.len() <= SHARD_TAGS {
        let mut c = Correlator::new(spec.clone())?;
        c.push(tags)?;
        return Ok(c.finish());
    }
    correlate_sharded(tags, spec, tags.len().div_ceil(SHARD_TAGS))
}

/// Sharded correlation with an explicit shard count.
pub fn correlate_sharded(tags: &[TimeTag], spec: &CorrelatorSpec, shards: usize) -> Result<CorrelationCounts> {
    spec.validate()?;
    let shards = shards.max(1);
    let step = tags.len().div_ceil(shards).max(1);
    // shard boundaries in ticks, taken at tag positions
    let mut bounds: Vec<u64> = (1..shards)
        .filter_map(|k| tags.get(k * step).map(|t| t.ticks))
        .collect();
    bounds.dedup();
    let mut edges = Vec::with_capacity(bounds.len() + 2);
    edges.push(0u64);
    edges.extend(bounds);
    edges.push(u64::MAX);
    let range = spec.range;
    let parts = par::map_range(edges.len() - 1, |k| -> Result<CorrelationCounts> {
        let (lo, hi) = (edges[k], edges[k + 1]);
        let from = tags.partition_point(|t| t.ticks < lo.saturating_sub(range));
        let to = tags.partition_point(|t| t.ticks < hi.saturating_add(range));
        let mut c = Correlator::with_anchor_span(spec.clone(), lo, hi)?;
        c.push(&tags[from..to])?;
        Ok(c.finish())
    });
    let mut total = CorrelationCounts::zeroed(spec.clone());
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

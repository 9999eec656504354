//! Counting engine: singles rates, delay histograms, triple-coincidence
//! surfaces and the empirical coherence estimators built from them.
//!
//! Everything works on integer ticks. A coincidence window of full width
//! `n` ticks around delay `d` is the half-open set `[d - n/2, d - n/2 + n)`
//! (integer division), so for odd `n` it is symmetric about `d` and for even
//! `n` the delay `d + n/2` is excluded. Since both timestamps are floored to
//! the tick grid, an `n`-tick window corresponds to a continuous window of
//! width `n · resolution` on average.

pub mod engine;
pub mod io;
pub mod tags;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use engine::{correlate, correlate_sharded, CorrelationCounts, Correlator, CorrelatorSpec};
pub use tags::{check_sorted, TagHeader, TagStream, TimeTag, IDLER, SIGNAL1, SIGNAL2};

use crate::curve::{Curve, CurvePoint};
use crate::error::{invalid, Error, Result};

/// Count rate per channel in 1/s. Channels without tags report zero.
pub fn singles(stream: &TagStream) -> Result<BTreeMap<u8, f64>> {
    let duration = stream.header.duration();
    if !(duration > 0.0) {
        return Err(Error::ZeroDuration);
    }
    let mut counts = vec![0u64; stream.header.n_channels as usize];
    for t in &stream.tags {
        counts[t.channel as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(ch, n)| (ch as u8, n as f64 / duration))
        .collect())
}

/// One histogram axis: delays from `-range` to `range` ticks in bins of `bin` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub bin_ticks: u64,
    pub range_ticks: u64,
    pub resolution_fs: u64,
}

impl Axis {
    pub fn nbins(&self) -> usize {
        (2 * self.range_ticks / self.bin_ticks) as usize
    }

    /// Delay in seconds at the start of bin `k`.
    pub fn bin_start(&self, k: usize) -> f64 {
        (k as i64 * self.bin_ticks as i64 - self.range_ticks as i64) as f64 * self.resolution_fs as f64 * 1e-15
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_ticks as f64 * self.resolution_fs as f64 * 1e-15
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    /// Anchor channel first, then the partner channel(s).
    pub channels: Vec<u8>,
    pub singles_rates: Vec<f64>,
    pub duration: f64,
    pub coin_halfwidth: Option<f64>,
}

/// 1-D delay histogram or 2-D triple surface (row-major, first axis slow).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub axes: Vec<Axis>,
    pub counts: Vec<u64>,
    pub meta: HistogramMeta,
}

impl CoincidenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-bin normalized correlation `counts / (r_A r_B Δ T)` of a 1-D histogram.
    pub fn g2_per_bin(&self) -> Curve {
        let axis = self.axes[0];
        let norm = self.meta.singles_rates[0] * self.meta.singles_rates[1] * axis.bin_width() * self.meta.duration;
        Curve {
            points: self
                .counts
                .iter()
                .enumerate()
                .map(|(k, &n)| CurvePoint {
                    x: axis.bin_start(k),
                    value: n as f64 / norm,
                    sigma: Some((n as f64).sqrt() / norm),
                })
                .collect(),
        }
    }

    /// CSV with `# key: value` metadata. 1-D: `delay,counts`; 2-D: `delay_1,delay_2,counts`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "# channels: {:?}", self.meta.channels);
        let _ = writeln!(s, "# singles_rates: {:?}", self.meta.singles_rates);
        let _ = writeln!(s, "# duration: {:e}", self.meta.duration);
        if let Some(tc) = self.meta.coin_halfwidth {
            let _ = writeln!(s, "# coin_halfwidth: {tc:e}");
        }
        let _ = writeln!(s, "# bin_width: {:e}", self.axes[0].bin_width());
        match self.axes.as_slice() {
            [a] => {
                let _ = writeln!(s, "delay,counts");
                for (k, n) in self.counts.iter().enumerate() {
                    let _ = writeln!(s, "{:e},{n}", a.bin_start(k));
                }
            }
            [a, b] => {
                let _ = writeln!(s, "delay_1,delay_2,counts");
                let nb = b.nbins();
                for (k, n) in self.counts.iter().enumerate() {
                    let _ = writeln!(s, "{:e},{:e},{n}", a.bin_start(k / nb), b.bin_start(k % nb));
                }
            }
            _ => {}
        }
        s
    }
}

fn ticks_for(header: &TagHeader, seconds: f64, name: &'static str) -> Result<u64> {
    if !(seconds > 0.0) {
        return Err(invalid(name, "must be > 0"));
    }
    Ok(header.to_ticks(seconds).max(1))
}

fn rates(stream: &TagStream, channels: &[u8]) -> Result<Vec<f64>> {
    let s = singles(stream)?;
    Ok(channels.iter().map(|c| s.get(c).copied().unwrap_or(0.0)).collect())
}

/// Histogram of `t_B - t_A` over `[-range, range)`.
pub fn delay_histogram(stream: &TagStream, a: u8, b: u8, bin_width: f64, range: f64) -> Result<CoincidenceHistogram> {
    let bin = ticks_for(&stream.header, bin_width, "bin_width")?;
    let range = ticks_for(&stream.header, range, "range")?.div_ceil(bin) * bin;
    let singles_rates = rates(stream, &[a, b])?;
    let spec = CorrelatorSpec::pair(a, b, range, bin);
    let counts = correlate(&stream.tags, &spec)?;
    Ok(CoincidenceHistogram {
        axes: vec![Axis {
            bin_ticks: bin,
            range_ticks: range,
            resolution_fs: stream.header.resolution_fs,
        }],
        counts: counts.pairs.into_iter().next().expect("one partner"),
        meta: HistogramMeta {
            channels: vec![a, b],
            singles_rates,
            duration: stream.header.duration(),
            coin_halfwidth: None,
        },
    })
}

/// Surface over `(t_s1 - t_i, t_s2 - t_i)` at tick resolution.
pub fn triple_surface(stream: &TagStream, tau_coin: f64, range: f64) -> Result<CoincidenceHistogram> {
    let analysis = HeraldAnalysis::from_stream(stream, range)?;
    let axis = analysis.axis();
    Ok(CoincidenceHistogram {
        axes: vec![axis, axis],
        counts: analysis.counts.surface.clone(),
        meta: HistogramMeta {
            channels: vec![IDLER, SIGNAL1, SIGNAL2],
            singles_rates: analysis.rates().to_vec(),
            duration: analysis.duration,
            coin_halfwidth: Some(tau_coin),
        },
    })
}

/// Empirical conditional coherence `ḡ_c(τ)` with Poisson error bars.
pub fn g2c_profile(stream: &TagStream, tau_coin: f64, range: f64) -> Result<Curve> {
    HeraldAnalysis::from_stream(stream, range)?.g2c_curve(tau_coin, 1)
}

/// Streaming accumulator for heralded measurements on channels i, s1, s2.
#[derive(Debug)]
pub struct HeraldAccumulator {
    correlator: Correlator,
    singles: [u64; 3],
    resolution_fs: u64,
    range_ticks: u64,
}

impl HeraldAccumulator {
    pub fn new(resolution_fs: u64, range_ticks: u64) -> Result<Self> {
        if resolution_fs == 0 {
            return Err(invalid("resolution_fs", "must be positive"));
        }
        Ok(Self {
            correlator: Correlator::new(CorrelatorSpec::heralded(IDLER, SIGNAL1, SIGNAL2, range_ticks))?,
            singles: [0; 3],
            resolution_fs,
            range_ticks,
        })
    }

    pub fn push(&mut self, tags: &[TimeTag]) -> Result<()> {
        self.correlator.push(tags)?;
        for t in tags {
            if let Some(n) = self.singles.get_mut(t.channel as usize) {
                *n += 1;
            }
        }
        Ok(())
    }

    pub fn finish(self, duration: f64) -> Result<HeraldAnalysis> {
        if !(duration > 0.0) {
            return Err(Error::ZeroDuration);
        }
        Ok(HeraldAnalysis::new(
            self.correlator.finish(),
            self.singles,
            duration,
            self.resolution_fs,
            self.range_ticks,
        ))
    }
}

/// Heralded counts with prefix sums for fast window queries.
#[derive(Debug, Clone)]
pub struct HeraldAnalysis {
    pub counts: CorrelationCounts,
    pub singles: [u64; 3],
    pub duration: f64,
    pub resolution_fs: u64,
    pub range_ticks: u64,
    cum_pairs: [Vec<u64>; 2],
    cum_surface: Vec<u64>,
}

/// Half-open bin range `[lo, hi)` of a window of `width` ticks centered at delay `d`.
fn window_bins(range: u64, d: i64, width: u64) -> Option<(usize, usize)> {
    let lo = d - (width / 2) as i64 + range as i64;
    let hi = lo + width as i64;
    (lo >= 0 && hi <= 2 * range as i64).then_some((lo as usize, hi as usize))
}

impl HeraldAnalysis {
    fn new(counts: CorrelationCounts, singles: [u64; 3], duration: f64, resolution_fs: u64, range_ticks: u64) -> Self {
        let cum = |v: &[u64]| {
            let mut c = Vec::with_capacity(v.len() + 1);
            c.push(0);
            let mut acc = 0;
            for &x in v {
                acc += x;
                c.push(acc);
            }
            c
        };
        let n = counts.spec.nbins();
        let mut cs = vec![0u64; (n + 1) * (n + 1)];
        for r in 0..n {
            let mut row = 0;
            for c in 0..n {
                row += counts.surface[r * n + c];
                cs[(r + 1) * (n + 1) + c + 1] = cs[r * (n + 1) + c + 1] + row;
            }
        }
        Self {
            cum_pairs: [cum(&counts.pairs[0]), cum(&counts.pairs[1])],
            cum_surface: cs,
            counts,
            singles,
            duration,
            resolution_fs,
            range_ticks,
        }
    }

    /// Counts a whole in-memory stream; `range` is the delay half-range in seconds.
    pub fn from_stream(stream: &TagStream, range: f64) -> Result<Self> {
        if stream.header.n_channels < 3 {
            return Err(invalid("n_channels", "heralded analysis needs channels i, s1 and s2"));
        }
        let duration = stream.header.duration();
        if !(duration > 0.0) {
            return Err(Error::ZeroDuration);
        }
        let range_ticks = ticks_for(&stream.header, range, "range")?;
        let counts = correlate(
            &stream.tags,
            &CorrelatorSpec::heralded(IDLER, SIGNAL1, SIGNAL2, range_ticks),
        )?;
        let mut singles = [0u64; 3];
        for t in &stream.tags {
            if let Some(n) = singles.get_mut(t.channel as usize) {
                *n += 1;
            }
        }
        Ok(Self::new(counts, singles, duration, stream.header.resolution_fs, range_ticks))
    }

    pub fn resolution(&self) -> f64 {
        self.resolution_fs as f64 * 1e-15
    }

    pub fn axis(&self) -> Axis {
        Axis {
            bin_ticks: 1,
            range_ticks: self.range_ticks,
            resolution_fs: self.resolution_fs,
        }
    }

    pub fn rates(&self) -> [f64; 3] {
        self.singles.map(|n| n as f64 / self.duration)
    }

    /// Full window width in ticks for half-width `tau_coin`.
    pub fn window_ticks(&self, tau_coin: f64) -> Result<u64> {
        if !(tau_coin > 0.0) {
            return Err(invalid("coin_halfwidth", "must be > 0"));
        }
        let n = ((2.0 * tau_coin / self.resolution()).round() as u64).max(1);
        if n > self.range_ticks {
            return Err(invalid("coin_halfwidth", "window wider than the histogram half-range"));
        }
        Ok(n)
    }

    /// Continuous window half-width actually realized on the tick grid.
    pub fn effective_halfwidth(&self, tau_coin: f64) -> Result<f64> {
        Ok(0.5 * self.window_ticks(tau_coin)? as f64 * self.resolution())
    }

    fn pair_count(&self, partner: usize, bins: (usize, usize)) -> u64 {
        self.cum_pairs[partner][bins.1] - self.cum_pairs[partner][bins.0]
    }

    fn surface_count(&self, r: (usize, usize), c: (usize, usize)) -> u64 {
        let n1 = self.counts.spec.nbins() + 1;
        let at = |i: usize, j: usize| self.cum_surface[i * n1 + j];
        at(r.1, c.1) + at(r.0, c.0) - at(r.0, c.1) - at(r.1, c.0)
    }

    fn delays(&self, width: u64, stride: u64) -> impl Iterator<Item = i64> {
        let reach = (self.range_ticks - width) as i64;
        let stride = stride.max(1) as i64;
        let start = -(reach / stride) * stride;
        (0..)
            .map(move |k| start + k * stride)
            .take_while(move |&d| d <= reach)
    }

    /// Windowed signal-idler coherence `ḡ_si(τ)`, both signal arms combined.
    pub fn g2si_curve(&self, tau_coin: f64, stride: u64) -> Result<Curve> {
        let width = self.window_ticks(tau_coin)?;
        let [ni, n1, n2] = self.singles.map(|n| n as f64);
        let norm = ni * (n1 + n2) * width as f64 * self.resolution() / self.duration;
        if !(norm > 0.0) {
            return Err(Error::NoHeralds);
        }
        let mut points = Vec::new();
        for d in self.delays(width, stride) {
            let Some(bins) = window_bins(self.range_ticks, d, width) else { continue };
            let n = (self.pair_count(0, bins) + self.pair_count(1, bins)) as f64;
            points.push(CurvePoint {
                x: d as f64 * self.resolution(),
                value: n / norm,
                sigma: Some(n.sqrt() / norm),
            });
        }
        Ok(Curve { points })
    }

    /// `ḡ_c(τ)` with one signal window at zero delay and the other at `τ`,
    /// symmetrized over which arm sits at zero.
    pub fn g2c_at(&self, width: u64, d: i64) -> Result<CurvePoint> {
        let w0 = window_bins(self.range_ticks, 0, width).ok_or(Error::NoHeralds)?;
        let wd = window_bins(self.range_ticks, d, width)
            .ok_or_else(|| invalid("delay", "window leaves the histogram range"))?;
        let heralds0 = self.pair_count(0, w0) + self.pair_count(1, w0);
        if heralds0 == 0 {
            return Err(Error::NoHeralds);
        }
        let triples = (self.surface_count(w0, wd) + self.surface_count(wd, w0)) as f64;
        let denom = (self.pair_count(0, w0) * self.pair_count(1, wd) + self.pair_count(1, w0) * self.pair_count(0, wd)) as f64;
        let ni = self.counts.anchors as f64;
        let x = d as f64 * self.resolution();
        if denom == 0.0 {
            return Ok(CurvePoint {
                x,
                value: f64::NAN,
                sigma: None,
            });
        }
        let value = ni * triples / denom;
        let heralds_d = (self.pair_count(0, wd) + self.pair_count(1, wd)) as f64;
        let rel = (1.0 / triples.max(1.0) + 1.0 / ni + 1.0 / heralds0 as f64 + 1.0 / heralds_d).sqrt();
        Ok(CurvePoint {
            x,
            value,
            sigma: Some(rel * value.max(ni / denom)),
        })
    }

    pub fn g2c_curve(&self, tau_coin: f64, stride: u64) -> Result<Curve> {
        let width = self.window_ticks(tau_coin)?;
        let points = self
            .delays(width, stride)
            .map(|d| self.g2c_at(width, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Curve { points })
    }

    /// `ḡ_c(0)` and its standard error.
    pub fn g2c_zero(&self, tau_coin: f64) -> Result<(f64, f64)> {
        let p = self.g2c_at(self.window_ticks(tau_coin)?, 0)?;
        Ok((p.value, p.sigma.unwrap_or(f64::NAN)))
    }

    /// Triple counts in the origin window over the mean of the two walls
    /// (one arm at zero delay, the other at `±far`).
    pub fn peak_to_wall(&self, tau_coin: f64, far: f64) -> Result<f64> {
        let width = self.window_ticks(tau_coin)?;
        let far = (far / self.resolution()).round() as i64;
        let w0 = window_bins(self.range_ticks, 0, width).ok_or(Error::NoHeralds)?;
        let mut wall = 0.0;
        for d in [-far, far] {
            let wd = window_bins(self.range_ticks, d, width)
                .ok_or_else(|| invalid("far", "wall delay outside the histogram range"))?;
            wall += 0.25 * (self.surface_count(w0, wd) + self.surface_count(wd, w0)) as f64;
        }
        if wall == 0.0 {
            return Err(Error::NoHeralds);
        }
        Ok(self.surface_count(w0, w0) as f64 / wall)
    }

    /// Triples with both signal arms inside the `[-range, range)` surface.
    pub fn triple_total(&self) -> u64 {
        self.counts.surface.iter().sum()
    }
}

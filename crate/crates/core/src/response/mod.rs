//! Time-averaged, measurable coherence quantities.
//!
//! The exact rates of [`crate::model`] are smeared by uniform detector jitter
//! and averaged over rectangular coincidence windows. Every convolution is
//! reduced to closed-form kernels (see [`kernel`]); only the three-photon
//! interference term needs a small two-dimensional quadrature over the
//! sub-picosecond support of `C(τ1)C(τ2)`.
//!
//! Two evaluation modes exist. [`EvalMode::Exact`] integrates the true
//! rectangular and triangular correlation shapes. [`EvalMode::Delta`] lumps
//! each sub-picosecond feature into a Dirac delta of equal area, which is
//! accurate whenever `1/B ≪ τ_d, τ_coin` and much cheaper for sweeps.

pub mod kernel;

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{invalid, Error, Result};
use crate::model::{self, SpdcParams};
use crate::par;
use crate::quad;

use kernel::{joint_window_density, JitterDifference, UniformJitter, Window};

/// Per-channel detector imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Jitter half-width `τ_d` (s).
    pub jitter_halfwidth: f64,
    /// Quantum efficiency in `(0, 1]`.
    pub efficiency: f64,
    /// Dead time after each accepted click (s).
    pub dead_time: f64,
    /// Time-tag quantization step (s).
    pub tag_resolution: f64,
}

impl DetectorModel {
    pub fn new(jitter_halfwidth: f64, efficiency: f64, dead_time: f64, tag_resolution: f64) -> Result<Self> {
        let d = Self {
            jitter_halfwidth,
            efficiency,
            dead_time,
            tag_resolution,
        };
        d.validate()?;
        Ok(d)
    }

    /// Counting modules and tagger of the reference apparatus: 350 ps
    /// resolution, efficiency 0.4, 45 ns dead time, 156.25 ps tags.
    pub fn reference() -> Self {
        Self {
            jitter_halfwidth: 350e-12,
            efficiency: 0.4,
            dead_time: 45e-9,
            tag_resolution: 156.25e-12,
        }
    }

    /// A detector with no jitter, no loss and no dead time.
    pub fn ideal(tag_resolution: f64) -> Self {
        Self {
            jitter_halfwidth: 0.0,
            efficiency: 1.0,
            dead_time: 0.0,
            tag_resolution,
        }
    }

    pub fn with_jitter(mut self, tau_d: f64) -> Self {
        self.jitter_halfwidth = tau_d;
        self
    }

    pub fn with_dead_time(mut self, dead_time: f64) -> Self {
        self.dead_time = dead_time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_halfwidth.is_finite() && self.jitter_halfwidth >= 0.0) {
            return Err(invalid("jitter_halfwidth", "must be finite and >= 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("efficiency", "must lie in (0, 1]"));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(invalid("dead_time", "must be finite and >= 0"));
        }
        if !(self.tag_resolution.is_finite() && self.tag_resolution > 0.0) {
            return Err(invalid("tag_resolution", "must be positive"));
        }
        Ok(())
    }
}

/// Coincidence window of full width `2τ_coin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidenceConfig {
    pub coin_halfwidth: f64,
}

impl CoincidenceConfig {
    /// Half-widths the reference tagger could be configured for.
    pub const APPARATUS_RANGE: (f64, f64) = (0.25e-9, 10e-9);

    pub fn new(coin_halfwidth: f64) -> Result<Self> {
        if !(coin_halfwidth.is_finite() && coin_halfwidth > 0.0) {
            return Err(invalid("coin_halfwidth", "must be positive"));
        }
        let c = Self { coin_halfwidth };
        if !c.in_apparatus_range() {
            log::warn!(
                "coincidence half-width {coin_halfwidth:e} s is outside the usual 0.25-10 ns range"
            );
        }
        Ok(c)
    }

    pub fn from_full_width(width: f64) -> Result<Self> {
        Self::new(0.5 * width)
    }

    pub fn in_apparatus_range(&self) -> bool {
        let (lo, hi) = Self::APPARATUS_RANGE;
        self.coin_halfwidth >= lo && self.coin_halfwidth <= hi
    }

    pub fn full_width(&self) -> f64 {
        2.0 * self.coin_halfwidth
    }

    pub fn window(&self, center: f64) -> Window {
        Window::centered(center, self.coin_halfwidth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Delta,
    Exact,
}

/// Time-averaged observables for one source, detector and window setting.
#[derive(Debug, Clone, Copy)]
pub struct Response {
    pub source: SpdcParams,
    pub detector: DetectorModel,
    pub coincidence: CoincidenceConfig,
    pub mode: EvalMode,
}

impl Response {
    pub fn new(source: SpdcParams, detector: DetectorModel, coincidence: CoincidenceConfig) -> Self {
        Self {
            source,
            detector,
            coincidence,
            mode: EvalMode::Delta,
        }
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    fn jitter(&self) -> UniformJitter {
        UniformJitter {
            half_width: self.detector.jitter_halfwidth,
        }
    }

    fn diff_kernel(&self) -> JitterDifference {
        JitterDifference::from_jitter(self.detector.jitter_halfwidth)
    }

    fn half_support(&self) -> f64 {
        0.5 / self.source.bandwidth()
    }

    /// Jitter-smeared signal-idler coincidence rate density.
    pub fn pbar_si(&self, tau: f64) -> f64 {
        let r = self.source.pair_rate();
        let h = self.diff_kernel();
        if self.mode == EvalMode::Delta && !h.is_delta() {
            return r * r + r * h.density(tau);
        }
        let b = self.half_support();
        let rb = r * self.source.bandwidth();
        r * r + rb * (h.cdf(tau + b) - h.cdf(tau - b))
    }

    /// `∫|C(s)|^2 D_w(s) ds`: excess pair rate captured by window `w`.
    fn excess_in_window(&self, w: &Window) -> f64 {
        let r = self.source.pair_rate();
        let h = self.diff_kernel();
        match self.mode {
            EvalMode::Delta => r * h.window_density(w, 0.0),
            EvalMode::Exact => {
                let b = self.half_support();
                r * self.source.bandwidth() * h.window_density_integral(w, -b, b)
            }
        }
    }

    /// Window-averaged coincidence rate for an arbitrary window.
    pub fn n_si_window(&self, w: &Window) -> f64 {
        let r = self.source.pair_rate();
        r * r + self.excess_in_window(w)
    }

    /// Window-averaged coincidence rate centered on delay `tau`.
    pub fn n_si(&self, tau: f64) -> f64 {
        self.n_si_window(&self.coincidence.window(tau))
    }

    pub fn g2bar_si(&self, tau: f64) -> f64 {
        let r = self.source.pair_rate();
        self.n_si(tau) / (r * r)
    }

    /// `∫ R(s)^2 K(s) ds` with `K` the two-window signal-signal kernel.
    fn auto_term(&self, w1: &Window, w2: &Window) -> f64 {
        let r = self.source.pair_rate();
        let bw = self.source.bandwidth();
        let h = self.diff_kernel();
        match self.mode {
            EvalMode::Delta => r * r * (2.0 / (3.0 * bw)) * h.two_window_density(w1, w2, 0.0),
            EvalMode::Exact => {
                let mut cuts = h.two_window_breakpoints(w1, w2);
                cuts.push(0.0);
                quad::integrate_pieces(
                    |s| {
                        let a = model::auto_corr(&self.source, s);
                        a * a * h.two_window_density(w1, w2, s)
                    },
                    &cuts,
                    -1.0 / bw,
                    1.0 / bw,
                    4,
                )
            }
        }
    }

    /// Contribution of `2 C(τ1) C(τ2) R(τ1 - τ2)` after smoothing.
    fn interference_term(&self, w1: &Window, w2: &Window) -> f64 {
        let r = self.source.pair_rate();
        let bw = self.source.bandwidth();
        let jitter = self.jitter();
        if self.mode == EvalMode::Delta {
            return (4.0 / 3.0) * (r * r / bw) * joint_window_density(jitter, w1, w2, 0.0, 0.0);
        }
        let b = self.half_support();
        let amp = 2.0 * r * bw * r;
        if jitter.half_width == 0.0 {
            // closed form of ∫∫ (1 - B|x - y|) over the clipped rectangle
            let (p1, q1) = (w1.lo.max(-b), w1.hi.min(b));
            let (p2, q2) = (w2.lo.max(-b), w2.hi.min(b));
            if q1 <= p1 || q2 <= p2 {
                return 0.0;
            }
            let phi = |d: f64| d.abs().powi(3) / 6.0;
            let abs_int = -(phi(q1 - q2) - phi(q1 - p2) - phi(p1 - q2) + phi(p1 - p2));
            let area = (q1 - p1) * (q2 - p2);
            return amp * (area - bw * abs_int) / (w1.width() * w2.width());
        }
        quad::integrate(
            |t1| {
                let inner = |t2: f64| {
                    (1.0 - bw * (t1 - t2).abs()) * joint_window_density(jitter, w1, w2, t1, t2)
                };
                quad::integrate(inner, -b, t1, 8) + quad::integrate(inner, t1, b, 8)
            },
            -b,
            b,
            8,
        ) * amp
    }

    /// Triple-coincidence rate density with the first signal window `w1` and
    /// the second `w2`, both relative to the idler click.
    pub fn n2_windows(&self, w1: &Window, w2: &Window) -> f64 {
        let r = self.source.pair_rate();
        r * r * r
            + r * self.excess_in_window(w1)
            + r * self.excess_in_window(w2)
            + r * self.auto_term(w1, w2)
            + self.interference_term(w1, w2)
    }

    /// Triple rate density for `t1 ∈ [-τ_coin, τ_coin)`, `t2 ∈ [τ-τ_coin, τ+τ_coin)`.
    pub fn n2_si(&self, tau: f64) -> f64 {
        self.n2_windows(&self.coincidence.window(0.0), &self.coincidence.window(tau))
    }

    /// Time-averaged conditional coherence `N2(τ) R(0) / (N(0) N(τ))`.
    pub fn g2bar_c(&self, tau: f64) -> f64 {
        let r = self.source.pair_rate();
        self.n2_si(tau) * r / (self.n_si(0.0) * self.n_si(tau))
    }

    /// Ratio of the triple surface at the origin to the wall at `t_s1 = t_i`,
    /// with the second signal window moved to `far`.
    pub fn peak_to_wall(&self, far: f64) -> f64 {
        let w0 = self.coincidence.window(0.0);
        self.n2_windows(&w0, &w0) / self.n2_windows(&w0, &self.coincidence.window(far))
    }

    pub fn g2bar_si_curve(&self, taus: &[f64]) -> Curve {
        Curve::from_pairs(taus.iter().map(|&t| (t, self.g2bar_si(t))))
    }

    pub fn g2bar_c_curve(&self, taus: &[f64]) -> Curve {
        let vals = par::map_collect(taus, |&t| self.g2bar_c(t));
        Curve::from_pairs(taus.iter().copied().zip(vals))
    }
}

/// Uniform jitter density `u(t)` of one detector.
pub fn jitter_kernel(d: &DetectorModel, t: f64) -> f64 {
    UniformJitter {
        half_width: d.jitter_halfwidth,
    }
    .density(t)
}

pub fn pbar_si(p: &SpdcParams, d: &DetectorModel, tau: f64) -> f64 {
    Response::new(*p, *d, CoincidenceConfig { coin_halfwidth: 1e-9 })
        .with_mode(EvalMode::Exact)
        .pbar_si(tau)
}

pub fn n_si(p: &SpdcParams, d: &DetectorModel, c: &CoincidenceConfig, tau: f64) -> f64 {
    Response::new(*p, *d, *c).n_si(tau)
}

pub fn g2bar_si(p: &SpdcParams, d: &DetectorModel, c: &CoincidenceConfig, tau: f64) -> f64 {
    Response::new(*p, *d, *c).g2bar_si(tau)
}

pub fn n2_si(p: &SpdcParams, d: &DetectorModel, c: &CoincidenceConfig, tau: f64) -> f64 {
    Response::new(*p, *d, *c).n2_si(tau)
}

pub fn g2bar_c(p: &SpdcParams, d: &DetectorModel, c: &CoincidenceConfig, tau: f64) -> f64 {
    Response::new(*p, *d, *c).g2bar_c(tau)
}

/// Grid swept by [`g2bar_c_zero_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    /// Pump powers (mW) at fixed calibration, bandwidth and window.
    Pump {
        rate_per_mw: f64,
        bandwidth: f64,
        powers_mw: Vec<f64>,
        coincidence: CoincidenceConfig,
    },
    /// Window half-widths (s) at a fixed source.
    Window { source: SpdcParams, halfwidths: Vec<f64> },
}

/// `ḡ_c(0)` along a pump-power or window grid. Grid points are evaluated
/// independently (in parallel when enabled); results do not depend on order.
pub fn g2bar_c_zero_sweep(grid: &SweepGrid, detector: &DetectorModel, mode: EvalMode) -> Result<Curve> {
    let values: Vec<Result<(f64, f64)>> = match grid {
        SweepGrid::Pump {
            rate_per_mw,
            bandwidth,
            powers_mw,
            coincidence,
        } => {
            if powers_mw.is_empty() {
                return Err(Error::EmptyGrid);
            }
            par::map_collect(powers_mw, |&pw| {
                let src = SpdcParams::from_pump(*rate_per_mw, pw, *bandwidth)?;
                let g = Response::new(src, *detector, *coincidence).with_mode(mode).g2bar_c(0.0);
                Ok((pw, g))
            })
        }
        SweepGrid::Window { source, halfwidths } => {
            if halfwidths.is_empty() {
                return Err(Error::EmptyGrid);
            }
            par::map_collect(halfwidths, |&hw| {
                let c = CoincidenceConfig::new(hw)?;
                let g = Response::new(*source, *detector, c).with_mode(mode).g2bar_c(0.0);
                Ok((hw, g))
            })
        }
    };
    let pairs = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Curve::from_pairs(pairs))
}

#[cfg(test)]
mod tests;

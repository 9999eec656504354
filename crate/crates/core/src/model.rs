//! Exact coherence functions of a cw down-conversion source in the low-gain
//! regime, at infinite time resolution.
//!
//! `R(τ)` is the triangular auto-correlation of either beam and `C(τ)` the
//! rectangular signal-idler cross-correlation. Both are carried as real,
//! nonnegative baseband envelopes; optical carrier frequencies are stored as
//! metadata only and never enter the numerics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest accepted `pair_rate / bandwidth`. The closed forms drop terms of
/// order `(R/B)^2`, which stay below 1e-4 relative under this cutoff.
pub const LOW_GAIN_LIMIT: f64 = 1e-2;

/// Optical carrier angular frequencies (rad/s). Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carriers {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
}

/// Source physics of the down-converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcParams {
    /// Pair generation rate `R_SPDC` (pairs/s).
    pair_rate: f64,
    /// Down-conversion bandwidth `B_SPDC` (Hz).
    bandwidth: f64,
    /// Pump calibration (pairs/(s·mW)), when the rate came from a pump power.
    rate_per_mw: Option<f64>,
    pump_power_mw: Option<f64>,
    carriers: Option<Carriers>,
}

impl SpdcParams {
    pub fn new(pair_rate: f64, bandwidth: f64) -> Result<Self> {
        let p = Self {
            pair_rate,
            bandwidth,
            rate_per_mw: None,
            pump_power_mw: None,
            carriers: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the parameters from a pump calibration: `pair_rate = rate_per_mw * pump_power`.
    pub fn from_pump(rate_per_mw: f64, pump_power_mw: f64, bandwidth: f64) -> Result<Self> {
        if !(rate_per_mw.is_finite() && rate_per_mw > 0.0) {
            return Err(invalid("rate_per_mw", "must be positive"));
        }
        if !(pump_power_mw.is_finite() && pump_power_mw > 0.0) {
            return Err(invalid("pump_power", "must be positive"));
        }
        let p = Self {
            pair_rate: rate_per_mw * pump_power_mw,
            bandwidth,
            rate_per_mw: Some(rate_per_mw),
            pump_power_mw: Some(pump_power_mw),
            carriers: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_carriers(mut self, carriers: Carriers) -> Self {
        self.carriers = Some(carriers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate.is_finite() && self.pair_rate > 0.0) {
            return Err(invalid("pair_rate", format!("must be positive, got {}", self.pair_rate)));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid("bandwidth", format!("must be positive, got {}", self.bandwidth)));
        }
        let ratio = self.pair_rate / self.bandwidth;
        if ratio >= LOW_GAIN_LIMIT {
            return Err(Error::NotLowGain {
                pair_rate: self.pair_rate,
                bandwidth: self.bandwidth,
                ratio,
            });
        }
        Ok(())
    }

    pub fn pair_rate(&self) -> f64 {
        self.pair_rate
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn rate_per_mw(&self) -> Option<f64> {
        self.rate_per_mw
    }

    pub fn pump_power_mw(&self) -> Option<f64> {
        self.pump_power_mw
    }

    pub fn carriers(&self) -> Option<Carriers> {
        self.carriers
    }

    /// Correlation time `Δt = 1/B_SPDC`.
    pub fn correlation_time(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// `|C(0)|`, the cross-correlation amplitude inside its support.
    pub fn cross_amplitude(&self) -> f64 {
        (self.pair_rate * self.bandwidth).sqrt()
    }
}

/// Triangular auto-correlation `R(τ)`.
pub fn auto_corr(p: &SpdcParams, tau: f64) -> f64 {
    let x = tau.abs() * p.bandwidth;
    if x <= 1.0 {
        p.pair_rate * (1.0 - x)
    } else {
        0.0
    }
}

/// Baseband cross-correlation envelope `C(τ)`, real and nonnegative.
pub fn cross_corr(p: &SpdcParams, tau: f64) -> f64 {
    if tau.abs() * 2.0 * p.bandwidth < 1.0 {
        p.cross_amplitude()
    } else {
        0.0
    }
}

/// `|C(τ)|^2`: `R·B` on `|τ| < 1/(2B)`, zero elsewhere. Its area is `R_SPDC`.
pub fn cross_corr_sq(p: &SpdcParams, tau: f64) -> f64 {
    if tau.abs() * 2.0 * p.bandwidth < 1.0 {
        p.pair_rate * p.bandwidth
    } else {
        0.0
    }
}

/// Signal-idler coherence `g_si(τ) = 1 + |C(τ)|^2 / R(0)^2`.
pub fn g2_si(p: &SpdcParams, tau: f64) -> f64 {
    1.0 + cross_corr_sq(p, tau) / (p.pair_rate * p.pair_rate)
}

/// Signal-idler coincidence rate `P_si(τ) = R(0)^2 + |C(τ)|^2`.
pub fn pair_rate_fn(p: &SpdcParams, tau: f64) -> f64 {
    p.pair_rate * p.pair_rate + cross_corr_sq(p, tau)
}

/// Triple rate for signal photons at `t1`, `t2` and an idler photon at `ti`.
pub fn triple_rate_fn(p: &SpdcParams, t1: f64, t2: f64, ti: f64) -> f64 {
    let r0 = p.pair_rate;
    let tau12 = t1 - t2;
    let tau1 = t1 - ti;
    let tau2 = t2 - ti;
    let r12 = auto_corr(p, tau12);
    r0 * (r0 * r0 + r12 * r12 + cross_corr_sq(p, tau1) + cross_corr_sq(p, tau2))
        + 2.0 * cross_corr(p, tau1) * cross_corr(p, tau2) * r12
}

/// Conditional coherence of the signal at `t1`, `t2` given an idler click at `ti`.
pub fn g2_cond(p: &SpdcParams, t1: f64, t2: f64, ti: f64) -> f64 {
    let r0 = p.pair_rate;
    let tau12 = t1 - t2;
    let tau1 = t1 - ti;
    let tau2 = t2 - ti;
    let g1 = g2_si(p, tau1);
    let g2 = g2_si(p, tau2);
    let r12 = auto_corr(p, tau12) / r0;
    let interference = 2.0 * cross_corr(p, tau1) * cross_corr(p, tau2) * auto_corr(p, tau12);
    1.0 / g1 + 1.0 / g2 + (r12 * r12 - 1.0) / (g1 * g2) + interference / (r0 * r0 * r0 * g1 * g2)
}

/// Conditional coherence at the trigger time, `(2/g)(2 - 1/g)` with `g = g_si(0)`.
pub fn g2_cond_at_zero(p: &SpdcParams) -> f64 {
    g2_cond_at_zero_from_gsi(g2_si(p, 0.0))
}

/// Trigger-time conditional coherence as a function of `g_si(0)` alone.
pub fn g2_cond_at_zero_from_gsi(g: f64) -> f64 {
    (2.0 / g) * (2.0 - 1.0 / g)
}

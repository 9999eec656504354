//! Closed-form smoothing kernels built from the uniform detector jitter.
//!
//! Two detectors with independent uniform jitter on `[-τ_d, τ_d]` see their
//! time difference smeared by the triangle `h = u ⊗ u` of half-width `2τ_d`.
//! All window averages reduce to evaluations of `h`, its cumulative
//! distribution and its second antiderivative, which are piecewise
//! polynomials known in closed form. `τ_d = 0` degenerates to a Dirac delta.

use crate::quad;

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    /// Coincidence window of half-width `half` centered on `center`.
    pub fn centered(center: f64, half: f64) -> Self {
        Self {
            lo: center - half,
            hi: center + half,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }
}

/// Uniform single-detector jitter density `u(t) = 1/(2τ_d)` on `|t| ≤ τ_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformJitter {
    pub half_width: f64,
}

impl UniformJitter {
    pub fn density(&self, t: f64) -> f64 {
        if self.half_width == 0.0 {
            return if t == 0.0 { f64::INFINITY } else { 0.0 };
        }
        if t.abs() <= self.half_width {
            0.5 / self.half_width
        } else {
            0.0
        }
    }

    /// Probability that a click from a photon at `x` lands in `w`.
    pub fn capture(&self, w: &Window, x: f64) -> f64 {
        let d = self.half_width;
        if d == 0.0 {
            return if w.contains(x) { 1.0 } else { 0.0 };
        }
        let overlap = (w.hi.min(x + d) - w.lo.max(x - d)).max(0.0);
        overlap / (2.0 * d)
    }
}

/// Density of the difference of two independent uniform jitters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterDifference {
    /// Support half-width `2τ_d`.
    pub half_width: f64,
}

impl JitterDifference {
    pub fn from_jitter(tau_d: f64) -> Self {
        Self {
            half_width: 2.0 * tau_d,
        }
    }

    pub fn is_delta(&self) -> bool {
        self.half_width == 0.0
    }

    pub fn density(&self, x: f64) -> f64 {
        let w = self.half_width;
        if w == 0.0 {
            return if x == 0.0 { f64::INFINITY } else { 0.0 };
        }
        let a = x.abs();
        if a < w {
            (w - a) / (w * w)
        } else {
            0.0
        }
    }

    /// Cumulative distribution. For the delta kernel the step is taken as
    /// right-continuous from above, so `cdf(b) - cdf(a)` counts an event at
    /// zero in the half-open window `[a, b)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let w = self.half_width;
        if w == 0.0 {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        if x <= -w {
            0.0
        } else if x <= 0.0 {
            let y = x + w;
            y * y / (2.0 * w * w)
        } else if x < w {
            let y = w - x;
            1.0 - y * y / (2.0 * w * w)
        } else {
            1.0
        }
    }

    /// `∫_{-∞}^{x} cdf`.
    pub fn ramp(&self, x: f64) -> f64 {
        let w = self.half_width;
        if w == 0.0 {
            return x.max(0.0);
        }
        if x <= -w {
            0.0
        } else if x <= 0.0 {
            let y = x + w;
            y * y * y / (6.0 * w * w)
        } else if x < w {
            let y = w - x;
            x + y * y * y / (6.0 * w * w)
        } else {
            x
        }
    }

    /// Kinks of the shifted kernel `f(x - shift)`.
    pub fn breakpoints(&self, shift: f64, out: &mut Vec<f64>) {
        out.push(shift);
        if self.half_width > 0.0 {
            out.push(shift - self.half_width);
            out.push(shift + self.half_width);
        }
    }

    /// Probability mass of the smeared offset `s` that falls in window `w`
    /// when the true offset is `s0`: `∫_w h(t - s0) dt`.
    pub fn window_mass(&self, w: &Window, s0: f64) -> f64 {
        self.cdf(w.hi - s0) - self.cdf(w.lo - s0)
    }

    /// Window-averaged density of the measured offset at true offset `s`:
    /// `D_w(s) = (1/|w|) ∫_w h(s - t) dt`.
    pub fn window_density(&self, w: &Window, s: f64) -> f64 {
        if self.is_delta() {
            return if w.contains(s) { 1.0 / w.width() } else { 0.0 };
        }
        (self.cdf(s - w.lo) - self.cdf(s - w.hi)) / w.width()
    }

    /// `∫_{a}^{b} D_w(s) ds` in closed form.
    pub fn window_density_integral(&self, w: &Window, a: f64, b: f64) -> f64 {
        if self.is_delta() {
            return (b.min(w.hi) - a.max(w.lo)).max(0.0) / w.width();
        }
        (self.ramp(b - w.lo) - self.ramp(a - w.lo) - self.ramp(b - w.hi) + self.ramp(a - w.hi))
            / w.width()
    }

    /// Density at `s` of `t1 - t2 + Δ` for `t1 ∈ w1`, `t2 ∈ w2` uniform and
    /// `Δ ~ h`, i.e. the window-averaged kernel for a signal-signal offset.
    pub fn two_window_density(&self, w1: &Window, w2: &Window, s: f64) -> f64 {
        if self.is_delta() {
            // overlap of w1 with w2 shifted by s
            let overlap = (w1.hi.min(w2.hi + s) - w1.lo.max(w2.lo + s)).max(0.0);
            return overlap / (w1.width() * w2.width());
        }
        (self.ramp(s - w1.lo + w2.hi) - self.ramp(s - w1.hi + w2.hi) - self.ramp(s - w1.lo + w2.lo)
            + self.ramp(s - w1.hi + w2.lo))
            / (w1.width() * w2.width())
    }

    pub fn two_window_breakpoints(&self, w1: &Window, w2: &Window) -> Vec<f64> {
        let mut out = Vec::with_capacity(12);
        for shift in [w1.lo - w2.hi, w1.hi - w2.hi, w1.lo - w2.lo, w1.hi - w2.lo] {
            self.breakpoints(shift, &mut out);
        }
        out
    }
}

/// Joint window-averaged density `G(τ1, τ2)` of the two signal-idler offsets
/// in a triple coincidence, for signal windows `w1`, `w2` and a common idler
/// jitter. All three detectors share `jitter`.
pub fn joint_window_density(jitter: UniformJitter, w1: &Window, w2: &Window, tau1: f64, tau2: f64) -> f64 {
    let d = jitter.half_width;
    let norm = w1.width() * w2.width();
    if d == 0.0 {
        return if w1.contains(tau1) && w2.contains(tau2) {
            1.0 / norm
        } else {
            0.0
        };
    }
    // integrate u(c) A1(τ1 + c) A2(τ2 + c) over the idler jitter c
    let mut cuts = Vec::with_capacity(8);
    for (w, tau) in [(w1, tau1), (w2, tau2)] {
        for edge in [w.lo, w.hi] {
            cuts.push(edge - tau - d);
            cuts.push(edge - tau + d);
        }
    }
    let integral = quad::integrate_pieces(
        |c| jitter.capture(w1, tau1 + c) * jitter.capture(w2, tau2 + c),
        &cuts,
        -d,
        d,
        4,
    );
    integral / (2.0 * d) / norm
}

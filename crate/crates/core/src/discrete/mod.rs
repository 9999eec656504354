//! Discrete-mode description of the down-converter.
//!
//! A window of length `T` and a band `[-W, W]` give `M = 2WT + 1` spectral
//! modes `a_n` (spacing `δf = 1/T`) and as many temporal modes `b_n` (spacing
//! `δt = 1/(2W)`), related by the unitary DFT on `M` points. The Gaussian
//! state of the source is fully described by
//!
//! ```text
//! R_n = Σ_m (1 + |ν_m|²)/M · e^{+2πi nm/M}   (= ⟨b†_k b_{k-n}⟩ + δ_{n0})
//! C_n = Σ_m ν_m μ_m / M  · e^{-2πi nm/M}     (= ⟨b_{s,n} b_{i,0}⟩)
//! ```
//!
//! from which the idler-conditioned coherence `g_cd(k, l | 0)` follows in
//! closed form. [`wick`] and [`fock`] hold the two independent references
//! used to check those closed forms.

pub mod fock;
pub mod wick;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{invalid, Error, Result};
use crate::model::{self, SpdcParams};
use crate::par;

/// Smallest accepted `T·W`.
pub const MIN_TW: f64 = 50.0;
/// `T·W` below which a warning is logged.
pub const WARN_TW: f64 = 500.0;

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGrid {
    /// Time window `T` (s).
    pub t: f64,
    /// Half-bandwidth `W` (Hz).
    pub w: f64,
    /// Mode count `2WT + 1`.
    pub m: usize,
}

impl DiscreteGrid {
    pub fn new(t: f64, w: f64) -> Result<Self> {
        if !(t > 0.0 && w > 0.0 && t.is_finite() && w.is_finite()) {
            return Err(invalid("grid", "T and W must be positive"));
        }
        let modes = 2.0 * w * t + 1.0;
        let m = modes.round();
        if (modes - m).abs() > 1e-6 * m {
            return Err(invalid("grid", format!("2WT + 1 = {modes} is not an integer")));
        }
        let m = m as usize;
        if !is_prime(m) || m < 3 {
            return Err(Error::NotPrime(m));
        }
        if t * w < MIN_TW {
            return Err(invalid("grid", format!("T·W = {} is below {MIN_TW}", t * w)));
        }
        if t * w < WARN_TW {
            log::warn!("T·W = {} is small; lattice sums are coarse", t * w);
        }
        Ok(Self { t, w, m })
    }

    /// Valid grid with bandwidth `w` whose window is closest to `t`: `M` is
    /// the nearest prime to `2WT + 1` and `T` is adjusted to match.
    pub fn nearest(t: f64, w: f64) -> Result<Self> {
        let target = (2.0 * w * t + 1.0).round().max(3.0) as usize;
        let mut off = 0;
        let m = loop {
            if is_prime(target + off) {
                break target + off;
            }
            if off <= target - 3 && is_prime(target - off) {
                break target - off;
            }
            off += 1;
        };
        Self::new((m - 1) as f64 / (2.0 * w), w)
    }

    pub fn delta_f(&self) -> f64 {
        1.0 / self.t
    }

    pub fn delta_t(&self) -> f64 {
        0.5 / self.w
    }

    /// Largest mode index `WT`.
    pub fn half(&self) -> i64 {
        (self.m as i64 - 1) / 2
    }
}

/// Bogoliubov coefficients per spectral mode `n = -(M-1)/2 ..= (M-1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpectrum {
    pub mu: Vec<Complex64>,
    pub nu: Vec<Complex64>,
}

impl DiscreteSpectrum {
    /// Completes arbitrary `ν_n` with real `μ_n = sqrt(1 + |ν_n|²)`.
    pub fn from_nu(nu: Vec<Complex64>) -> Result<Self> {
        let m = nu.len();
        if m < 3 || m % 2 == 0 {
            return Err(invalid("modes", "mode count must be odd and at least 3"));
        }
        if !is_prime(m) {
            return Err(Error::NotPrime(m));
        }
        let mu = nu
            .iter()
            .map(|v| Complex64::new((1.0 + v.norm_sqr()).sqrt(), 0.0))
            .collect();
        Ok(Self { mu, nu })
    }

    pub fn modes(&self) -> usize {
        self.nu.len()
    }

    /// Largest `| |μ|² - |ν|² - 1 |` over modes.
    pub fn bogoliubov_defect(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.nu)
            .map(|(m, n)| (m.norm_sqr() - n.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Samples the low-gain spectrum `ν(f) = sqrt(R/B) sinc(πf/B)` on the lattice.
pub fn build_spectrum(p: &SpdcParams, g: &DiscreteGrid) -> Result<DiscreteSpectrum> {
    if g.w < p.bandwidth() {
        return Err(invalid("grid", "W must be at least the down-conversion bandwidth"));
    }
    let amp = (p.pair_rate() / p.bandwidth()).sqrt();
    let half = g.half();
    let nu = (-half..=half)
        .map(|n| Complex64::new(amp * sinc(PI * n as f64 * g.delta_f() / p.bandwidth()), 0.0))
        .collect();
    DiscreteSpectrum::from_nu(nu)
}

/// Lattice correlations, evaluated on demand by direct `O(M)` sums.
#[derive(Debug, Clone)]
pub struct TemporalCorrelations {
    m: usize,
    occupation: Vec<f64>,
    anomalous: Vec<Complex64>,
    /// `R_0`, real and at least one.
    pub r0: f64,
}

impl TemporalCorrelations {
    pub fn modes(&self) -> usize {
        self.m
    }

    fn phase_sum<T: Copy>(&self, weights: &[T], n: i64, sign: f64) -> Complex64
    where
        Complex64: std::ops::Mul<T, Output = Complex64>,
    {
        let m = self.m as i64;
        let half = (m - 1) / 2;
        let mut s = Complex64::new(0.0, 0.0);
        for (idx, k) in (-half..=half).enumerate() {
            let phase = sign * 2.0 * PI * (n * k).rem_euclid(m) as f64 / m as f64;
            s += Complex64::from_polar(1.0, phase) * weights[idx];
        }
        s / m as f64
    }

    /// `R_n`.
    pub fn r(&self, n: i64) -> Complex64 {
        let delta = if n.rem_euclid(self.m as i64) == 0 { 1.0 } else { 0.0 };
        self.phase_sum(&self.occupation, n, 1.0) + delta
    }

    /// `C_n`.
    pub fn c(&self, n: i64) -> Complex64 {
        self.phase_sum(&self.anomalous, n, -1.0)
    }

    /// `(R_n, C_n)` for `n` in `range`.
    pub fn table(&self, range: std::ops::RangeInclusive<i64>) -> Vec<(i64, Complex64, Complex64)> {
        let ns: Vec<i64> = range.collect();
        par::map_collect(&ns, |&n| (n, self.r(n), self.c(n)))
    }
}

pub fn temporal_correlations(s: &DiscreteSpectrum) -> TemporalCorrelations {
    let occupation: Vec<f64> = s.nu.iter().map(|v| v.norm_sqr()).collect();
    let anomalous: Vec<Complex64> = s.nu.iter().zip(&s.mu).map(|(n, m)| n * m).collect();
    let r0 = 1.0 + occupation.iter().sum::<f64>() / s.modes() as f64;
    TemporalCorrelations {
        m: s.modes(),
        occupation,
        anomalous,
        r0,
    }
}

/// Probability that the idler mode at lattice index 0 holds one or more photons.
pub fn detection_probability(tc: &TemporalCorrelations) -> f64 {
    1.0 - 1.0 / tc.r0
}

/// Idler-conditioned signal coherence `g_cd(k, l | 0)`.
///
/// Off the diagonal every term, including the interference term
/// `2R_0(R_0 - 1) Re{C_k C_l* R_{k-l}}`, shares the denominator
/// `(Q² + |C_k|²)(Q² + |C_l|²)` with `Q² = R_0(R_0 - 1)²`. On the diagonal,
/// `g_cd(k, k | 0) = 2 - 2R_0|C_k|⁴/(Q² + |C_k|²)²`.
pub fn g2_cd(tc: &TemporalCorrelations, k: i64, l: i64) -> Result<f64> {
    if (k - l).unsigned_abs() as usize >= tc.m {
        return Err(invalid("k, l", format!("|k - l| must be below M = {}", tc.m)));
    }
    let r0 = tc.r0;
    let n = r0 - 1.0;
    let q2 = r0 * n * n;
    let ck = tc.c(k);
    if k == l {
        let c4 = ck.norm_sqr() * ck.norm_sqr();
        let d = q2 + ck.norm_sqr();
        return Ok(2.0 - 2.0 * r0 * c4 / (d * d));
    }
    let cl = tc.c(l);
    let rkl = tc.r(k - l);
    let (ak, al) = (ck.norm_sqr(), cl.norm_sqr());
    let num = q2 * (q2 + r0 * rkl.norm_sqr() + ak + al) + 2.0 * r0 * n * (ck * cl.conj() * rkl).re
        - 2.0 * n * ak * al;
    Ok(num / ((q2 + ak) * (q2 + al)))
}

/// Exact second-order moments of the lattice modes `b_{j,k}`, for use with
/// [`wick::wick_moment`]. Labels are lattice indices.
#[derive(Debug, Clone, Copy)]
pub struct LatticeMoments<'a>(pub &'a DiscreteSpectrum);

impl wick::GaussianMoments for LatticeMoments<'_> {
    type Label = i64;

    fn pair(&self, a: &wick::Op<i64>, b: &wick::Op<i64>) -> Complex64 {
        use wick::Field;
        let s = self.0;
        let m = s.modes() as i64;
        let half = (m - 1) / 2;
        let sum = |f: &dyn Fn(usize, i64) -> Complex64| -> Complex64 {
            (-half..=half).enumerate().map(|(i, n)| f(i, n)).sum::<Complex64>() / m as f64
        };
        let phase = |x: i64| Complex64::from_polar(1.0, 2.0 * PI * x.rem_euclid(m) as f64 / m as f64);
        match (a.dagger, b.dagger) {
            (true, false) if a.field == b.field => {
                // idler mode -n carries the occupation of signal mode n
                let sign = if a.field == Field::Signal { 1 } else { -1 };
                sum(&|i, n| phase(sign * (a.at - b.at) * n) * s.nu[i].norm_sqr())
            }
            (false, false) | (true, true) if a.field != b.field => {
                let (sig, idl) = if a.field == Field::Signal { (a, b) } else { (b, a) };
                let c = sum(&|i, n| phase(-(sig.at - idl.at) * n) * (s.nu[i] * s.mu[i]));
                if a.dagger {
                    c.conj()
                } else {
                    c
                }
            }
            _ => Complex64::new(0.0, 0.0),
        }
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub w: f64,
    pub t: f64,
    pub m: usize,
    pub k: i64,
    pub l: i64,
    pub discrete: f64,
    pub continuous: f64,
    pub rel_error: f64,
    /// Error did not shrink relative to the previous row.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn monotone(&self) -> bool {
        !self.rows.iter().any(|r| r.flagged)
    }

    pub fn error_curve(&self) -> Curve {
        Curve::from_pairs(self.rows.iter().map(|r| (r.w, r.rel_error)))
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("w,t,m,k,l,discrete,continuous,rel_error,flagged\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:e},{:e},{},{},{},{:e},{:e},{:e},{}",
                r.w, r.t, r.m, r.k, r.l, r.discrete, r.continuous, r.rel_error, r.flagged
            );
        }
        s
    }
}

/// Compares `g_cd` with the continuous `g_c(t1, t2 | 0)` as `W` grows at a
/// fixed window `T`. Lattice indices are rescaled so that `kδt ≈ t1` and
/// `lδt ≈ t2` at every `W`. Rows whose error fails to shrink are flagged.
pub fn convergence_study(p: &SpdcParams, t1: f64, t2: f64, window: f64, ws: &[f64]) -> Result<ConvergenceTable> {
    if ws.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let continuous = model::g2_cond(p, t1, t2, 0.0);
    let rows = par::map_collect(ws, |&w| -> Result<ConvergenceRow> {
        let grid = DiscreteGrid::nearest(window, w)?;
        let tc = temporal_correlations(&build_spectrum(p, &grid)?);
        let k = (t1 / grid.delta_t()).round() as i64;
        let l = (t2 / grid.delta_t()).round() as i64;
        let discrete = g2_cd(&tc, k, l)?;
        Ok(ConvergenceRow {
            w,
            t: grid.t,
            m: grid.m,
            k,
            l,
            discrete,
            continuous,
            rel_error: ((discrete - continuous) / continuous).abs(),
            flagged: false,
        })
    });
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    for i in 1..rows.len() {
        if rows[i].rel_error >= rows[i - 1].rel_error {
            rows[i].flagged = true;
            log::warn!("convergence error did not decrease at W = {:e}", rows[i].w);
        }
    }
    Ok(ConvergenceTable { rows })
}

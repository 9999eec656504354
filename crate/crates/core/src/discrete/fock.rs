//! Dense truncated-Fock reference for tiny lattices.
//!
//! The source state is built from its definition as a product of two-mode
//! squeezed states `Σ_k ν^k/|μ|^(k+1) |k⟩_{s,n}|k⟩_{i,-n}`, rewritten in the
//! temporal modes `b` through the unitary lattice DFT:
//! `|ψ⟩ ∝ exp(Σ_{kj} K_kj b†_{s,k} b†_{i,j}) |0⟩` with
//! `K_kj = (1/M) Σ_n λ_n e^{-2πi n (k - j)/M}`, `λ_n = ν_n/|μ_n|`.
//! The idler click projects `b_{i,0}` onto one or more photons, and the
//! conditional moments are read straight off the state vector. Nothing here
//! relies on Gaussian factoring, which is what makes it an independent check.

use num_complex::Complex64;

use super::DiscreteSpectrum;
use crate::error::{invalid, Result};

/// Largest supported number of signal (and idler) lattice modes.
pub const MAX_MODES: usize = 3;
/// Largest supported photon cutoff per mode.
pub const MAX_CUTOFF: usize = 6;

#[derive(Debug, Clone)]
pub struct FockState {
    modes: usize,
    cutoff: usize,
    amps: Vec<Complex64>,
}

impl FockState {
    fn dim(modes: usize, cutoff: usize) -> usize {
        (cutoff + 1).pow(2 * modes as u32)
    }

    fn stride(&self, slot: usize) -> usize {
        (self.cutoff + 1).pow(slot as u32)
    }

    fn occupation(&self, index: usize, slot: usize) -> usize {
        (index / self.stride(slot)) % (self.cutoff + 1)
    }

    /// Slot of lattice mode `k ∈ [-(M-1)/2, (M-1)/2]`; signal first, then idler.
    fn slot(&self, idler: bool, k: i64) -> usize {
        let half = (self.modes as i64 - 1) / 2;
        let pos = (k + half).rem_euclid(self.modes as i64) as usize;
        pos + if idler { self.modes } else { 0 }
    }

    fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.amps.len()]
    }

    fn create(&self, v: &[Complex64], slot: usize, out: &mut [Complex64], weight: Complex64) {
        let stride = self.stride(slot);
        for (i, &a) in v.iter().enumerate() {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let n = self.occupation(i, slot);
            if n < self.cutoff {
                out[i + stride] += weight * a * ((n + 1) as f64).sqrt();
            }
        }
    }

    fn annihilate(&self, v: &[Complex64], slot: usize) -> Vec<Complex64> {
        let stride = self.stride(slot);
        let mut out = self.zeros();
        for (i, &a) in v.iter().enumerate() {
            let n = self.occupation(i, slot);
            if n > 0 {
                out[i - stride] += a * (n as f64).sqrt();
            }
        }
        out
    }

    /// Builds the normalized source state for a lattice spectrum.
    pub fn source(spectrum: &DiscreteSpectrum, cutoff: usize) -> Result<Self> {
        let m = spectrum.modes();
        if m > MAX_MODES {
            return Err(invalid("modes", format!("Fock reference supports at most {MAX_MODES} modes")));
        }
        if cutoff == 0 || cutoff > MAX_CUTOFF {
            return Err(invalid("cutoff", format!("must lie in 1..={MAX_CUTOFF}")));
        }
        let half = (m as i64 - 1) / 2;
        let lambda: Vec<Complex64> = spectrum
            .nu
            .iter()
            .zip(&spectrum.mu)
            .map(|(nu, mu)| nu / mu.norm())
            .collect();
        let mut state = Self {
            modes: m,
            cutoff,
            amps: Vec::new(),
        };
        state.amps = vec![Complex64::new(0.0, 0.0); Self::dim(m, cutoff)];
        let mut kernel = Vec::new();
        for k in -half..=half {
            for j in -half..=half {
                let mut s = Complex64::new(0.0, 0.0);
                for (idx, n) in (-half..=half).enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * ((n * (k - j)).rem_euclid(m as i64)) as f64 / m as f64;
                    s += lambda[idx] * Complex64::from_polar(1.0, phase);
                }
                kernel.push((state.slot(false, k), state.slot(true, j), s / m as f64));
            }
        }
        // exp(G)|0⟩ by its Taylor series
        let mut term = state.zeros();
        term[0] = Complex64::new(1.0, 0.0);
        let mut total = term.clone();
        for order in 1..=(2 * m * cutoff) {
            let mut next = state.zeros();
            for &(ss, si, w) in &kernel {
                let mut tmp = state.zeros();
                state.create(&term, si, &mut tmp, Complex64::new(1.0, 0.0));
                state.create(&tmp, ss, &mut next, w / order as f64);
            }
            let size: f64 = next.iter().map(|a| a.norm_sqr()).sum();
            for (t, n) in total.iter_mut().zip(&next) {
                *t += n;
            }
            term = next;
            if size < 1e-30 {
                break;
            }
        }
        let norm = total.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut total {
            *a /= norm;
        }
        state.amps = total;
        Ok(state)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Removes the vacuum component of the idler mode at lattice index 0
    /// (the unnormalized post-click state) and returns its probability.
    pub fn herald(&self) -> (Self, f64) {
        let slot = self.slot(true, 0);
        let mut out = self.clone();
        for (i, a) in out.amps.iter_mut().enumerate() {
            if self.occupation(i, slot) == 0 {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        let p = out.norm_sqr();
        (out, p)
    }

    /// `⟨b†_{k1}…b†_{kn} b_{ln}…b_{l1}⟩`-type normally ordered moment: creators
    /// on the left, annihilators on the right, each `(idler, k)`.
    pub fn normal_moment(&self, creators: &[(bool, i64)], annihilators: &[(bool, i64)]) -> Complex64 {
        let mut right = self.amps.clone();
        for &(idler, k) in annihilators.iter().rev() {
            right = self.annihilate(&right, self.slot(idler, k));
        }
        let mut left = self.amps.clone();
        for &(idler, k) in creators {
            left = self.annihilate(&left, self.slot(idler, k));
        }
        left.iter().zip(&right).map(|(l, r)| l.conj() * r).sum::<Complex64>() / self.norm_sqr()
    }

    /// Conditional `g_cd(k, l | 0)` after a click on idler mode 0.
    pub fn conditional_g2(&self, k: i64, l: i64) -> f64 {
        let (post, _) = self.herald();
        let pair = post.normal_moment(&[(false, k), (false, l)], &[(false, l), (false, k)]).re;
        let nk = post.normal_moment(&[(false, k)], &[(false, k)]).re;
        let nl = post.normal_moment(&[(false, l)], &[(false, l)]).re;
        pair / (nk * nl)
    }
}

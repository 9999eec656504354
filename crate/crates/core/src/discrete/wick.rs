//! Gaussian moment factoring for normally ordered field products.
//!
//! For a zero-mean Gaussian state, a normally ordered moment is the sum over
//! all complete pairings of the list of the products of pair moments. The
//! expander enumerates pairings directly, which makes it a slow but
//! assumption-free oracle for the closed-form rates.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, SpdcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Signal,
    Idler,
}

/// One field operator `E(at)` or `E†(at)`; `at` is a time or a lattice index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Op<L> {
    pub field: Field,
    pub at: L,
    pub dagger: bool,
}

impl<L> Op<L> {
    pub fn ann(field: Field, at: L) -> Self {
        Self { field, at, dagger: false }
    }

    pub fn cre(field: Field, at: L) -> Self {
        Self { field, at, dagger: true }
    }
}

/// Second-order moments of a zero-mean Gaussian state.
pub trait GaussianMoments {
    type Label;

    /// `⟨a b⟩` where `a` stands left of `b` in a normally ordered product.
    fn pair(&self, a: &Op<Self::Label>, b: &Op<Self::Label>) -> Complex64;
}

/// Moments of the continuous fields: `⟨E_j†(t)E_j(t')⟩ = R(t - t')`,
/// `⟨E_s(t)E_i(t')⟩ = C(t - t')`, everything else zero.
#[derive(Debug, Clone, Copy)]
pub struct ContinuousMoments(pub SpdcParams);

impl GaussianMoments for ContinuousMoments {
    type Label = f64;

    fn pair(&self, a: &Op<f64>, b: &Op<f64>) -> Complex64 {
        let p = &self.0;
        let value = match (a.dagger, b.dagger) {
            (true, false) if a.field == b.field => model::auto_corr(p, a.at - b.at),
            (true, true) | (false, false) if a.field != b.field => {
                let (s, i) = if a.field == Field::Signal { (a, b) } else { (b, a) };
                model::cross_corr(p, s.at - i.at)
            }
            _ => 0.0,
        };
        Complex64::new(value, 0.0)
    }
}

/// Expands `⟨ops⟩` by Wick pairing. The list must be normally ordered
/// (every `†` left of every annihilator) with as many `†` as annihilators.
pub fn wick_moment<M: GaussianMoments>(moments: &M, ops: &[Op<M::Label>]) -> Result<Complex64> {
    if ops.len() % 2 == 1 {
        return Err(Error::OddOperatorList(ops.len()));
    }
    let first_ann = ops.iter().position(|o| !o.dagger).unwrap_or(ops.len());
    if ops[first_ann..].iter().any(|o| o.dagger) || 2 * first_ann != ops.len() {
        return Err(Error::NotNormalOrdered);
    }
    let idx: Vec<usize> = (0..ops.len()).collect();
    Ok(pairings(moments, ops, &idx))
}

fn pairings<M: GaussianMoments>(moments: &M, ops: &[Op<M::Label>], idx: &[usize]) -> Complex64 {
    if idx.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let head = idx[0];
    let mut total = Complex64::new(0.0, 0.0);
    for k in 1..idx.len() {
        let w = moments.pair(&ops[head], &ops[idx[k]]);
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&j| j != idx[k]).collect();
        total += w * pairings(moments, ops, &rest);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use Field::{Idler, Signal};

    fn p() -> SpdcParams {
        SpdcParams::new(1.5e7, 3e12).unwrap()
    }

    #[test]
    fn single_pairing() {
        let m = ContinuousMoments(p());
        let v = wick_moment(&m, &[Op::cre(Signal, 0.0), Op::ann(Signal, 0.0)]).unwrap();
        assert_eq!(v.re, 1.5e7);
    }

    #[test]
    fn rejects_bad_lists() {
        let m = ContinuousMoments(p());
        assert!(matches!(
            wick_moment(&m, &[Op::cre(Signal, 0.0)]),
            Err(Error::OddOperatorList(1))
        ));
        assert!(matches!(
            wick_moment(&m, &[Op::ann(Signal, 0.0), Op::cre(Signal, 0.0)]),
            Err(Error::NotNormalOrdered)
        ));
        assert!(matches!(
            wick_moment(&m, &[Op::ann(Signal, 0.0), Op::ann(Idler, 0.0)]),
            Err(Error::NotNormalOrdered)
        ));
    }

    #[test]
    fn pair_and_triple_rates_match_closed_forms() {
        let p = p();
        let m = ContinuousMoments(p);
        let span = 1.0 / p.bandwidth();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let [t1, t2, ti] = [(); 3].map(|_| rng.random_range(-span..span));
            let pair = wick_moment(
                &m,
                &[
                    Op::cre(Signal, t1),
                    Op::cre(Idler, ti),
                    Op::ann(Idler, ti),
                    Op::ann(Signal, t1),
                ],
            )
            .unwrap();
            assert_relative_eq!(pair.re, model::pair_rate_fn(&p, t1 - ti), max_relative = 1e-12);
            let triple = wick_moment(
                &m,
                &[
                    Op::cre(Signal, t1),
                    Op::cre(Signal, t2),
                    Op::cre(Idler, ti),
                    Op::ann(Idler, ti),
                    Op::ann(Signal, t2),
                    Op::ann(Signal, t1),
                ],
            )
            .unwrap();
            assert_relative_eq!(triple.re, model::triple_rate_fn(&p, t1, t2, ti), max_relative = 1e-10);
            assert_eq!(triple.im, 0.0);
        }
    }
}

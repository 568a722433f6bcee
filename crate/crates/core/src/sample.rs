//! Seeded random generation of scalars, series and tensors for the
//! verification suites.
//!
//! All randomness flows through [`Sampler`], a thin wrapper over a
//! counter-based RNG seeded explicitly, so every suite is reproducible from
//! its `--seed`.  Generated denominators are restricted to integers and
//! products of root differences: those are guaranteed invertible in the
//! coefficient field and keep gcd normalization cheap.

use crate::scalar::Scalar;
use crate::sigma::{BasisIndex, PhiSeries, SigmaConfig, TPoly};
use crate::twovar::TwoVarSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub struct Sampler {
    rng: ChaCha12Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        Sampler {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn pick(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// Random polynomial in the parameters: up to `terms` monomials of total
    /// degree at most `deg`, integer coefficients in `[-4, 4]`.
    pub fn param_poly(&mut self, nvars: usize, deg: u32, terms: usize) -> Scalar {
        let mut acc = Scalar::zero(nvars);
        for _ in 0..terms {
            let c = self.int(-4, 4);
            if c == 0 {
                continue;
            }
            let mut term = Scalar::from_int(nvars, c);
            let mut budget = deg;
            while budget > 0 && nvars > 0 && self.chance(0.5) {
                term = term.mul(&Scalar::param(nvars, self.pick(nvars)));
                budget -= 1;
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// Random scalar: a small parameter polynomial, sometimes divided by a
    /// nonzero integer or by a product of root differences.
    pub fn scalar(&mut self, nvars: usize) -> Scalar {
        let num = self.param_poly(nvars, 2, 3);
        let mut den = Scalar::from_int(nvars, [1, 1, 2, 3][self.pick(4)]);
        if nvars >= 2 && self.chance(0.25) {
            let i = self.pick(nvars);
            let mut j = self.pick(nvars);
            if j == i {
                j = (j + 1) % nvars;
            }
            den = den.mul(&Scalar::param(nvars, i).sub(&Scalar::param(nvars, j)));
        }
        num.div(&den).expect("denominator is invertible")
    }

    /// Random nonzero scalar.
    pub fn nonzero_scalar(&mut self, nvars: usize) -> Scalar {
        loop {
            let s = self.scalar(nvars);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Random dense polynomial in `t` of degree at most `deg`.
    pub fn tpoly(&mut self, nvars: usize, deg: usize) -> TPoly {
        let coeffs = (0..=deg).map(|_| self.scalar(nvars)).collect();
        TPoly::from_coeffs(nvars, coeffs)
    }

    /// Random series with up to `terms` basis terms at levels in `[lo, hi)`.
    pub fn phi_series(&mut self, cfg: &SigmaConfig, lo: i64, hi: i64, terms: usize) -> PhiSeries {
        let n = cfg.n() as u32;
        let mut list = Vec::new();
        for _ in 0..terms {
            let m = self.int(lo, hi - 1);
            let i = self.pick(n as usize) as u32;
            list.push((BasisIndex::new(m, i), self.scalar(cfg.nvars())));
        }
        PhiSeries::from_terms(cfg, list, cfg.truncation())
    }

    /// Random poly tensor with slot levels in `[-pole, pole]`.
    pub fn poly_tensor(&mut self, cfg: &SigmaConfig, pole: i64, pairs: usize) -> TwoVarSeries {
        let list: Vec<(PhiSeries, PhiSeries)> = (0..pairs)
            .map(|_| {
                (
                    self.phi_series(cfg, -pole, pole + 1, 2),
                    self.phi_series(cfg, -pole, pole + 1, 2),
                )
            })
            .collect();
        TwoVarSeries::poly_from_pairs(cfg, &list)
    }
}

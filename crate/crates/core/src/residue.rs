//! Residues of one-forms along the configuration divisor.
//!
//! The residue of `g dt` is the coefficient of `t^-1` in the expansion of
//! `g` in descending powers of `t` (the expansion at infinity).  It is
//! computed exactly from the monomial representation `g = p(t) phi^-k`: with
//! `phi = t^n s(1/t)`, `s(0) = 1`, the expansion is
//! `p(t) t^{-nk} s(x)^{-k}|_{x=1/t}`, and only finitely many coefficients of
//! the power-series inverse are needed.  Truncation tails are regular, so the
//! residue never depends on them: the value is exact for every series,
//! whatever its window.
//!
//! The dual pairing `<f, g> = residue(f g dt)` makes the plus and minus bases
//! anti-diagonally dual: `<b+_{a,i}, b-_{b,j}> = 1` exactly when
//! `a + b = -1` and `i + j = n - 1`, and `0` otherwise.

use crate::scalar::{Scalar, ScalarError, Substitution};
use crate::sigma::{BasisIndex, OneForm, PhiSeries, SigmaConfig, SigmaError, TPoly, Window};

/// Truncated power-series inverse: coefficients of `1/s mod x^{len}` where
/// `s` is given by its coefficient list with `s[0]` invertible.
fn series_inverse(s: &[Scalar], len: usize) -> Result<Vec<Scalar>, ScalarError> {
    let nvars = s[0].nvars();
    let lead_inv = s[0].inv()?;
    let mut u = vec![Scalar::zero(nvars); len];
    u[0] = lead_inv.clone();
    for j in 1..len {
        let mut acc = Scalar::zero(nvars);
        for i in 1..=j {
            let si = if i < s.len() { &s[i] } else { continue };
            acc = acc.add(&si.mul(&u[j - i]));
        }
        u[j] = acc.neg().mul(&lead_inv);
    }
    Ok(u)
}

/// Truncated product of coefficient lists.
fn series_mul(a: &[Scalar], b: &[Scalar], len: usize) -> Vec<Scalar> {
    let nvars = a
        .first()
        .or(b.first())
        .map(|c| c.nvars())
        .unwrap_or(0);
    let mut out = vec![Scalar::zero(nvars); len];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() || i >= len {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            if bj.is_zero() {
                continue;
            }
            out[i + j] = out[i + j].add(&ai.mul(bj));
        }
    }
    out
}

/// Residue of a one-form along the configuration divisor (equivalently,
/// minus the residue at infinity).
pub fn residue(w: &OneForm) -> Scalar {
    let cfg = w.config().clone();
    let nvars = cfg.nvars();
    // only the polar part can contribute: basis elements at level >= 0 are
    // polynomials in t, with no residue at infinity
    let polar = PhiSeries::from_terms(
        &cfg,
        w.density
            .terms()
            .filter(|(idx, _)| idx.m < 0)
            .map(|(idx, c)| (*idx, c.clone())),
        cfg.truncation(),
    );
    let (p, e) = polar.to_monomials();
    if e >= 0 || p.is_zero() {
        return Scalar::zero(nvars);
    }
    let k = (-e) as usize;
    let n = cfg.n();
    // phi = t^n s(1/t): s[j] = coefficient of t^{n-j} in phi
    let phi = cfg.phi();
    let s: Vec<Scalar> = (0..=n).map(|j| phi.coeff(n - j)).collect();
    let deg_p = p.degree().unwrap_or(0) as i64;
    let max_index = deg_p - (n as i64) * (k as i64) + 1;
    if max_index < 0 {
        return Scalar::zero(nvars);
    }
    let len = max_index as usize + 1;
    // s^k truncated, then inverted
    let mut sk = vec![Scalar::one(nvars)];
    for _ in 0..k {
        sk = series_mul(&sk, &s, len);
    }
    let inv = series_inverse(&sk, len).expect("leading coefficient of s is 1");
    let mut acc = Scalar::zero(nvars);
    for (d, pd) in p.coeffs().iter().enumerate() {
        if pd.is_zero() {
            continue;
        }
        let j = d as i64 - (n as i64) * (k as i64) + 1;
        if (0..len as i64).contains(&j) {
            acc = acc.add(&pd.mul(&inv[j as usize]));
        }
    }
    acc
}

/// Dual pairing `<f, g> = residue(f g dt)`.
pub fn pairing(f: &PhiSeries, g: &PhiSeries) -> Scalar {
    residue(&OneForm::new(f.mul(g)))
}

/// Gram matrix of the pairing between window slices of the plus and minus
/// bases: entry `[r][c]` pairs the `r`-th plus index with the `c`-th minus
/// index of `window.indices(n)`.
pub fn pairing_gram(cfg: &SigmaConfig, window: Window) -> (Vec<BasisIndex>, Vec<Vec<Scalar>>) {
    let idxs = window.indices(cfg.n());
    let plus: Vec<PhiSeries> = idxs
        .iter()
        .map(|&ix| PhiSeries::basis(cfg, ix))
        .collect();
    let minus: Vec<PhiSeries> = idxs
        .iter()
        .map(|&ix| PhiSeries::basis_minus(cfg, ix))
        .collect();
    let gram = plus
        .iter()
        .map(|f| minus.iter().map(|g| pairing(f, g)).collect())
        .collect();
    (idxs, gram)
}

/// Expected Gram entry: `1` iff levels sum to `-1` and steps sum to `n-1`.
pub fn expected_gram_entry(cfg: &SigmaConfig, p: BasisIndex, m: BasisIndex) -> Scalar {
    if p.m + m.m == -1 && p.i as i64 + m.i as i64 == cfg.n() as i64 - 1 {
        Scalar::one(cfg.nvars())
    } else {
        Scalar::zero(cfg.nvars())
    }
}

/// Taylor coefficients of `p` around `c` up to order `len-1`
/// (coefficients of `y^j` where `t = c + y`).
fn taylor_shift(p: &TPoly, c: &Scalar, len: usize) -> Vec<Scalar> {
    let nvars = p.nvars();
    let mut out = vec![Scalar::zero(nvars); len];
    // synthetic: repeatedly divide by (t - c)
    let mut r = p.clone();
    for slot in out.iter_mut() {
        if r.is_zero() {
            break;
        }
        let (q, rem) = r.div_linear(c);
        *slot = rem;
        r = q;
    }
    out
}

/// Per-point residues after substituting numeric (or at least pairwise
/// distinct) values for the parameters: returns one scalar per section, in
/// section order, summing to `residue(w)` after the same substitution.
pub fn residue_split(w: &OneForm, s: &Substitution) -> Result<Vec<Scalar>, SigmaError> {
    let density = w.density.substitute(s)?;
    let cfg = density.config().clone();
    if !cfg.roots_pairwise_distinct() {
        return Err(SigmaError::SectionsCollide);
    }
    let nvars = cfg.nvars();
    let (p, e) = density.to_monomials();
    let n = cfg.n();
    let mut out = vec![Scalar::zero(nvars); n];
    if e >= 0 || p.is_zero() {
        return Ok(out);
    }
    let k = (-e) as usize;
    for (i, ai) in cfg.roots().iter().enumerate() {
        // local residue at a_i: coefficient of y^{k-1} in the Taylor
        // expansion of p(t) prod_{j != i} (t - a_j)^{-k} around t = a_i
        let len = k;
        let mut series = taylor_shift(&p, ai, len + k);
        series.truncate(len);
        for (j, aj) in cfg.roots().iter().enumerate() {
            if j == i {
                continue;
            }
            // (y + (a_i - a_j))^{-k} = d^{-k} (1 + y/d)^{-k},  d = a_i - a_j
            let d = ai.sub(aj);
            let d_inv = d.inv().map_err(|_| SigmaError::SectionsCollide)?;
            let mut factor = vec![Scalar::zero(nvars); len];
            // binomial series: sum_j C(-k, j) d^{-k-j} y^j
            let mut coef = d_inv.pow(k as i64).expect("nonzero");
            for (jj, slot) in factor.iter_mut().enumerate() {
                *slot = coef.clone();
                // next: multiply by (-k - jj)/(jj + 1) * d^{-1}
                let num = Scalar::from_int(nvars, -(k as i64) - jj as i64);
                let den = Scalar::from_int(nvars, jj as i64 + 1);
                coef = coef
                    .mul(&num)
                    .div(&den)
                    .expect("nonzero")
                    .mul(&d_inv);
            }
            series = series_mul(&series, &factor, len);
        }
        out[i] = series[len - 1].clone();
    }
    Ok(out)
}

//! The truncated adic ring at a configuration of sections and its localization.
//!
//! A [`SigmaConfig`] fixes `n` sections `a_1, .., a_n` (scalars, usually the
//! parameters themselves), the separating polynomial
//! `phi(t) = (t - a_1) ... (t - a_n)`, and a truncation order `M`.
//!
//! Elements are [`PhiSeries`]: finite coefficient maps over the level basis
//!
//! ```text
//! plus basis:   b+_{m,i} = phi^m (t - a_1) ... (t - a_i)          0 <= i < n
//! minus basis:  b-_{m,i} = phi^m (t - a_{n-i+1}) ... (t - a_n)    0 <= i < n
//! ```
//!
//! with `b+_{m,n} = b+_{m+1,0}` closing the chain.  A series stores exact
//! coefficients for all levels `m < valid_to` and nothing beyond: `valid_to`
//! is the per-element guaranteed window, at most the config truncation `M`.
//! Multiplying by an element of pole order `k` shrinks the partner's window
//! by `k`; every operation propagates windows so that a stored coefficient is
//! always exact.  Negative levels encode poles along `phi`; the filtration
//! step "pole order at most k" is `min_level >= -k`.
//!
//! Conversions to and from the monomial representation `p(t) * phi^e` use
//! triangular division along the chain `(t-a_1), (t-a_2), ..` (cycled), which
//! is exact and filtration-preserving in both directions.

use crate::scalar::{parse_scalar, Scalar, ScalarError, Substitution};
use serde::{Deserialize, Serialize};
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigmaError {
    #[error("config mismatch between operands")]
    ConfigMismatch,
    #[error("guaranteed window too small: need level {needed}, have {have}")]
    WindowTooSmall { needed: i64, have: i64 },
    #[error("sections are not pairwise distinct after substitution")]
    SectionsCollide,
    #[error("truncation orders incompatible: need {needed}, have {have}")]
    TruncationIncompatible { needed: i64, have: i64 },
    #[error("scalar error: {0}")]
    Scalar(#[from] ScalarError),
    #[error("orientation mismatch: {0}")]
    OrientationMismatch(String),
    #[error("not local at the tested window: {0}")]
    NotLocalAtWindow(String),
    #[error("{0}")]
    Other(String),
}

/// Which of the two distinguished bases an index refers to.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum BasisSign {
    Plus,
    Minus,
}

/// Basis element `b±_{m,i}`: level `m` (integer, negative = pole) and step
/// `i` in `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct BasisIndex {
    pub m: i64,
    pub i: u32,
}

impl BasisIndex {
    pub fn new(m: i64, i: u32) -> Self {
        BasisIndex { m, i }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.m, self.i)
    }
}

#[derive(Debug, PartialEq)]
struct ConfigInner {
    params: Vec<String>,
    roots: Vec<Scalar>,
    truncation: i64,
}

/// Shared, cheaply clonable configuration: parameter names, section roots
/// (scalars in the parameters; numeric after substitution), truncation `M`.
#[derive(Clone, Debug)]
pub struct SigmaConfig(Arc<ConfigInner>);

impl PartialEq for SigmaConfig {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl SigmaConfig {
    /// Standard configuration: parameters `a1..an` used directly as the
    /// section roots.
    pub fn standard(n: usize, truncation: i64) -> SigmaConfig {
        assert!(n >= 1 && truncation >= 1);
        let params: Vec<String> = (1..=n).map(|i| format!("a{}", i)).collect();
        let roots = (0..n).map(|i| Scalar::param(n, i)).collect();
        SigmaConfig(Arc::new(ConfigInner {
            params,
            roots,
            truncation,
        }))
    }

    /// Configuration with explicit parameter names and roots.
    pub fn with_roots(params: Vec<String>, roots: Vec<Scalar>, truncation: i64) -> SigmaConfig {
        assert!(!roots.is_empty() && truncation >= 1);
        for r in &roots {
            assert_eq!(r.nvars(), params.len());
        }
        SigmaConfig(Arc::new(ConfigInner {
            params,
            roots,
            truncation,
        }))
    }

    pub fn n(&self) -> usize {
        self.0.roots.len()
    }

    pub fn nvars(&self) -> usize {
        self.0.params.len()
    }

    pub fn params(&self) -> &[String] {
        &self.0.params
    }

    pub fn roots(&self) -> &[Scalar] {
        &self.0.roots
    }

    pub fn truncation(&self) -> i64 {
        self.0.truncation
    }

    /// Same sections, different truncation.
    pub fn with_truncation(&self, truncation: i64) -> SigmaConfig {
        SigmaConfig(Arc::new(ConfigInner {
            params: self.0.params.clone(),
            roots: self.0.roots.clone(),
            truncation,
        }))
    }

    /// `phi(t) = (t - a_1) .. (t - a_n)` as a dense polynomial.
    pub fn phi(&self) -> TPoly {
        let mut p = TPoly::one(self.nvars());
        for r in self.roots() {
            p = p.mul(&TPoly::linear_root(r));
        }
        p
    }

    /// Plus chain polynomial `(t - a_1) .. (t - a_i)`, `0 <= i <= n`.
    pub fn chi_plus(&self, i: u32) -> TPoly {
        let mut p = TPoly::one(self.nvars());
        for r in self.roots().iter().take(i as usize) {
            p = p.mul(&TPoly::linear_root(r));
        }
        p
    }

    /// Minus chain polynomial `(t - a_{n-i+1}) .. (t - a_n)`, `0 <= i <= n`.
    pub fn chi_minus(&self, i: u32) -> TPoly {
        let n = self.n();
        let mut p = TPoly::one(self.nvars());
        for r in self.roots().iter().skip(n - i as usize) {
            p = p.mul(&TPoly::linear_root(r));
        }
        p
    }

    /// Monomial representation `(p, e)` of a basis element: `b±_{m,i} =
    /// p(t) * phi^e`.
    pub fn basis_monomials(&self, sign: BasisSign, idx: BasisIndex) -> (TPoly, i64) {
        let chi = match sign {
            BasisSign::Plus => self.chi_plus(idx.i),
            BasisSign::Minus => self.chi_minus(idx.i),
        };
        (chi, idx.m)
    }

    /// True if all roots are pairwise distinct (symbolically, as scalars).
    pub fn roots_pairwise_distinct(&self) -> bool {
        let r = self.roots();
        for i in 0..r.len() {
            for j in (i + 1)..r.len() {
                if r[i] == r[j] {
                    return false;
                }
            }
        }
        true
    }

    /// Substitute parameters in the roots (numeric specialization or section
    /// renaming), keeping parameter names and truncation.
    pub fn substitute(&self, s: &Substitution) -> Result<SigmaConfig, SigmaError> {
        let roots = self
            .roots()
            .iter()
            .map(|r| r.substitute(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SigmaConfig(Arc::new(ConfigInner {
            params: self.0.params.clone(),
            roots,
            truncation: self.truncation(),
        })))
    }
}

/// A half-open level window `[lo, hi)`; the "window basis" is every
/// `b+_{m,i}` with `lo <= m < hi`, `0 <= i < n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Window {
        assert!(lo <= hi);
        Window { lo, hi }
    }

    /// Symmetric window of radius `w`: levels `-w .. w-1`.
    pub fn symmetric(w: i64) -> Window {
        Window { lo: -w, hi: w }
    }

    pub fn indices(&self, n: usize) -> Vec<BasisIndex> {
        let mut out = Vec::new();
        for m in self.lo..self.hi {
            for i in 0..n as u32 {
                out.push(BasisIndex::new(m, i));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Dense polynomials in t over Scalar
// ---------------------------------------------------------------------------

/// Dense polynomial in the coordinate `t` with scalar coefficients
/// (`coeffs[d]` is the coefficient of `t^d`; no trailing zeros).
#[derive(Clone, PartialEq, Debug)]
pub struct TPoly {
    nvars: usize,
    coeffs: Vec<Scalar>,
}

impl TPoly {
    pub fn zero(nvars: usize) -> TPoly {
        TPoly {
            nvars,
            coeffs: Vec::new(),
        }
    }

    pub fn one(nvars: usize) -> TPoly {
        TPoly {
            nvars,
            coeffs: vec![Scalar::one(nvars)],
        }
    }

    pub fn from_coeffs(nvars: usize, coeffs: Vec<Scalar>) -> TPoly {
        let mut p = TPoly { nvars, coeffs };
        p.trim();
        p
    }

    /// The monomial `t`.
    pub fn t(nvars: usize) -> TPoly {
        TPoly {
            nvars,
            coeffs: vec![Scalar::zero(nvars), Scalar::one(nvars)],
        }
    }

    /// `t - r`.
    pub fn linear_root(r: &Scalar) -> TPoly {
        TPoly {
            nvars: r.nvars(),
            coeffs: vec![r.neg(), Scalar::one(r.nvars())],
        }
    }

    fn trim(&mut self) {
        while self.coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            self.coeffs.pop();
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, d: usize) -> Scalar {
        self.coeffs
            .get(d)
            .cloned()
            .unwrap_or_else(|| Scalar::zero(self.nvars))
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn add(&self, other: &TPoly) -> TPoly {
        let mut coeffs = Vec::with_capacity(self.coeffs.len().max(other.coeffs.len()));
        for d in 0..self.coeffs.len().max(other.coeffs.len()) {
            coeffs.push(self.coeff(d).add(&other.coeff(d)));
        }
        TPoly::from_coeffs(self.nvars, coeffs)
    }

    pub fn sub(&self, other: &TPoly) -> TPoly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TPoly {
        TPoly {
            nvars: self.nvars,
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
        }
    }

    pub fn scalar_mul(&self, s: &Scalar) -> TPoly {
        if s.is_zero() {
            return TPoly::zero(self.nvars);
        }
        TPoly {
            nvars: self.nvars,
            coeffs: self.coeffs.iter().map(|c| c.mul(s)).collect(),
        }
    }

    pub fn mul(&self, other: &TPoly) -> TPoly {
        if self.is_zero() || other.is_zero() {
            return TPoly::zero(self.nvars);
        }
        let mut coeffs =
            vec![Scalar::zero(self.nvars); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                coeffs[i + j] = coeffs[i + j].add(&a.mul(b));
            }
        }
        TPoly::from_coeffs(self.nvars, coeffs)
    }

    pub fn pow(&self, e: u32) -> TPoly {
        let mut acc = TPoly::one(self.nvars);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn derivative(&self) -> TPoly {
        if self.coeffs.len() <= 1 {
            return TPoly::zero(self.nvars);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, c)| c.mul(&Scalar::from_int(self.nvars, d as i64)))
            .collect();
        TPoly::from_coeffs(self.nvars, coeffs)
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let mut acc = Scalar::zero(self.nvars);
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(x).add(c);
        }
        acc
    }

    /// Synthetic division by `(t - r)`: returns `(quotient, remainder)` with
    /// `self = q * (t - r) + rem` and `rem = self(r)`.
    pub fn div_linear(&self, r: &Scalar) -> (TPoly, Scalar) {
        if self.is_zero() {
            return (TPoly::zero(self.nvars), Scalar::zero(self.nvars));
        }
        let d = self.coeffs.len() - 1;
        let mut q = vec![Scalar::zero(self.nvars); d];
        let mut carry = self.coeffs[d].clone();
        for j in (0..d).rev() {
            q[j] = carry.clone();
            carry = self.coeffs[j].add(&carry.mul(r));
        }
        (TPoly::from_coeffs(self.nvars, q), carry)
    }

    pub fn substitute(&self, s: &Substitution) -> Result<TPoly, ScalarError> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.substitute(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TPoly::from_coeffs(self.nvars, coeffs))
    }
}

// ---------------------------------------------------------------------------
// PhiSeries
// ---------------------------------------------------------------------------

/// Element of the truncated localized ring in the plus basis, with its
/// guaranteed window.  Invariants: no zero coefficients; every stored level
/// is `< valid_to`; `valid_to <= config truncation`.
#[derive(Clone, Debug)]
pub struct PhiSeries {
    cfg: SigmaConfig,
    terms: BTreeMap<BasisIndex, Scalar>,
    valid_to: i64,
}

impl PartialEq for PhiSeries {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.valid_to == other.valid_to && self.terms == other.terms
    }
}

impl PhiSeries {
    pub fn zero(cfg: &SigmaConfig) -> PhiSeries {
        PhiSeries {
            cfg: cfg.clone(),
            terms: BTreeMap::new(),
            valid_to: cfg.truncation(),
        }
    }

    pub fn one(cfg: &SigmaConfig) -> PhiSeries {
        Self::basis(cfg, BasisIndex::new(0, 0))
    }

    /// The plus-basis element `b+_{m,i}` as an exact series.
    pub fn basis(cfg: &SigmaConfig, idx: BasisIndex) -> PhiSeries {
        assert!((idx.i as usize) < cfg.n());
        let mut terms = BTreeMap::new();
        if idx.m < cfg.truncation() {
            terms.insert(idx, Scalar::one(cfg.nvars()));
        }
        PhiSeries {
            cfg: cfg.clone(),
            terms,
            valid_to: cfg.truncation(),
        }
    }

    /// The minus-basis element `b-_{m,i}`, expanded into the plus basis.
    pub fn basis_minus(cfg: &SigmaConfig, idx: BasisIndex) -> PhiSeries {
        assert!((idx.i as usize) < cfg.n());
        let (p, e) = cfg.basis_monomials(BasisSign::Minus, idx);
        Self::from_monomials(cfg, &p, e)
    }

    /// Build from explicit terms; zero coefficients and terms at or beyond
    /// `valid_to` are dropped.
    pub fn from_terms(
        cfg: &SigmaConfig,
        terms: impl IntoIterator<Item = (BasisIndex, Scalar)>,
        valid_to: i64,
    ) -> PhiSeries {
        let valid_to = valid_to.min(cfg.truncation());
        let mut map = BTreeMap::new();
        for (idx, c) in terms {
            assert!((idx.i as usize) < cfg.n());
            if c.is_zero() || idx.m >= valid_to {
                continue;
            }
            let e = map.entry(idx).or_insert_with(|| Scalar::zero(cfg.nvars()));
            *e = e.add(&c);
        }
        map.retain(|_, c: &mut Scalar| !c.is_zero());
        PhiSeries {
            cfg: cfg.clone(),
            terms: map,
            valid_to,
        }
    }

    /// Expand `p(t) * phi^e` in the plus basis (triangular division along the
    /// cycled chain of linear factors), truncated at the config window.
    pub fn from_monomials(cfg: &SigmaConfig, p: &TPoly, e: i64) -> PhiSeries {
        let n = cfg.n();
        let mut terms = BTreeMap::new();
        let mut r = p.clone();
        let mut k: usize = 0;
        while !r.is_zero() {
            let root = &cfg.roots()[k % n];
            let (q, rem) = r.div_linear(root);
            if !rem.is_zero() {
                let m = (k / n) as i64 + e;
                if m < cfg.truncation() {
                    terms.insert(BasisIndex::new(m, (k % n) as u32), rem);
                }
            }
            r = q;
            k += 1;
        }
        PhiSeries {
            cfg: cfg.clone(),
            terms,
            valid_to: cfg.truncation(),
        }
    }

    pub fn from_tpoly(cfg: &SigmaConfig, p: &TPoly) -> PhiSeries {
        Self::from_monomials(cfg, p, 0)
    }

    /// The coordinate `t` as a series.
    pub fn coordinate(cfg: &SigmaConfig) -> PhiSeries {
        Self::from_tpoly(cfg, &TPoly::t(cfg.nvars()))
    }

    /// Monomial representation `(p, e)` with `self = p(t) * phi^e` on the
    /// guaranteed window (`e = min(0, lowest stored level)`).
    pub fn to_monomials(&self) -> (TPoly, i64) {
        let e = self.min_level().min(0);
        let mut acc = TPoly::zero(self.cfg.nvars());
        // phi powers cache
        let phi = self.cfg.phi();
        let mut pow_cache: Vec<TPoly> = vec![TPoly::one(self.cfg.nvars())];
        for (idx, c) in &self.terms {
            let rel = (idx.m - e) as usize;
            while pow_cache.len() <= rel {
                let last = pow_cache.last().unwrap().clone();
                pow_cache.push(last.mul(&phi));
            }
            let contrib = pow_cache[rel]
                .mul(&self.cfg.chi_plus(idx.i))
                .scalar_mul(c);
            acc = acc.add(&contrib);
        }
        (acc, e)
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisIndex, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, idx: BasisIndex) -> Scalar {
        self.terms
            .get(&idx)
            .cloned()
            .unwrap_or_else(|| Scalar::zero(self.cfg.nvars()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn valid_to(&self) -> i64 {
        self.valid_to
    }

    /// Lowest stored level; for an empty series, the window edge (the first
    /// unknown level), which is the right value for window arithmetic.
    pub fn min_level(&self) -> i64 {
        self.terms
            .keys()
            .next()
            .map(|idx| idx.m)
            .unwrap_or(self.valid_to)
    }

    /// Highest stored level, or `None` when no terms are stored.
    pub fn max_level(&self) -> Option<i64> {
        self.terms.keys().next_back().map(|idx| idx.m)
    }

    /// Pole order along phi: `max(0, -min stored level)`.
    pub fn pole_order(&self) -> i64 {
        (-self.min_level()).max(0)
    }

    /// True if the series lies in the filtration step "pole order <= k".
    pub fn in_filtration(&self, k: i64) -> bool {
        self.pole_order() <= k
    }

    /// Restrict the guaranteed window (drops stored terms beyond it).
    pub fn truncate_window(&self, valid_to: i64) -> PhiSeries {
        let valid_to = valid_to.min(self.valid_to);
        let mut terms = self.terms.clone();
        terms.retain(|idx, _| idx.m < valid_to);
        PhiSeries {
            cfg: self.cfg.clone(),
            terms,
            valid_to,
        }
    }

    fn require_same_config(&self, other: &PhiSeries) {
        assert!(
            self.cfg == other.cfg,
            "operands built over different configurations"
        );
    }

    pub fn add(&self, other: &PhiSeries) -> PhiSeries {
        self.require_same_config(other);
        let valid_to = self.valid_to.min(other.valid_to);
        PhiSeries::from_terms(
            &self.cfg,
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|(i, c)| (*i, c.clone())),
            valid_to,
        )
    }

    pub fn sub(&self, other: &PhiSeries) -> PhiSeries {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> PhiSeries {
        PhiSeries {
            cfg: self.cfg.clone(),
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (*i, c.neg()))
                .collect(),
            valid_to: self.valid_to,
        }
    }

    pub fn scalar_mul(&self, s: &Scalar) -> PhiSeries {
        if s.is_zero() {
            return PhiSeries {
                cfg: self.cfg.clone(),
                terms: BTreeMap::new(),
                valid_to: self.valid_to,
            };
        }
        PhiSeries {
            cfg: self.cfg.clone(),
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (*i, c.mul(s)))
                .collect(),
            valid_to: self.valid_to,
        }
    }

    /// Multiply by `phi^j` (exact level shift).
    pub fn mul_phi_power(&self, j: i64) -> PhiSeries {
        let valid_to = (self.valid_to + j).min(self.cfg.truncation());
        PhiSeries::from_terms(
            &self.cfg,
            self.terms
                .iter()
                .map(|(i, c)| (BasisIndex::new(i.m + j, i.i), c.clone())),
            valid_to,
        )
    }

    /// Exact product; the result window is `min(M, w_f + min_g, w_g + min_f)`.
    ///
    /// Runs directly on basis terms: one factor is decomposed into basis
    /// elements, and multiplying by `b_{m,i}` is a level shift followed by
    /// `i` applications of the chain recurrence
    /// `b_{M,I} (t - a_{j+1}) = b at the next chain position
    ///  + (a_{I+1} - a_{j+1}) b_{M,I}`
    /// (the next position past `I = n - 1` carries into `b_{M+1,0}`).
    pub fn mul(&self, other: &PhiSeries) -> PhiSeries {
        self.require_same_config(other);
        let valid_to = (self.valid_to + other.min_level())
            .min(other.valid_to + self.min_level())
            .min(self.cfg.truncation());
        if self.is_zero() || other.is_zero() {
            return PhiSeries {
                cfg: self.cfg.clone(),
                terms: BTreeMap::new(),
                valid_to,
            };
        }
        let (base, dec) = if self.num_terms() >= other.num_terms() {
            (self, other)
        } else {
            (other, self)
        };
        let n = self.cfg.n();
        let nv = self.cfg.nvars();
        let roots = self.cfg.roots();
        // pairwise root differences used by the chain recurrence
        let mut diff = vec![vec![Scalar::zero(nv); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    diff[i][j] = roots[i].sub(&roots[j]);
                }
            }
        }
        let mut acc: BTreeMap<BasisIndex, Scalar> = BTreeMap::new();
        for (idx, c) in &dec.terms {
            // base * c * phi^idx.m (chain steps only raise levels, so terms
            // past the window can be dropped as soon as they appear)
            let mut cur: BTreeMap<BasisIndex, Scalar> = base
                .terms
                .iter()
                .filter(|(k, _)| k.m + idx.m < valid_to)
                .map(|(k, kc)| (BasisIndex::new(k.m + idx.m, k.i), kc.mul(c)))
                .collect();
            for j in 0..idx.i as usize {
                let mut next: BTreeMap<BasisIndex, Scalar> = BTreeMap::new();
                for (k, kc) in cur {
                    let ii = k.i as usize;
                    let step = if ii + 1 == n {
                        BasisIndex::new(k.m + 1, 0)
                    } else {
                        BasisIndex::new(k.m, k.i + 1)
                    };
                    if step.m < valid_to {
                        match next.entry(step) {
                            Entry::Vacant(e) => {
                                e.insert(kc.clone());
                            }
                            Entry::Occupied(mut e) => {
                                let s = e.get().add(&kc);
                                *e.get_mut() = s;
                            }
                        }
                    }
                    if ii != j && !diff[ii][j].is_zero() {
                        let scaled = kc.mul(&diff[ii][j]);
                        match next.entry(k) {
                            Entry::Vacant(e) => {
                                e.insert(scaled);
                            }
                            Entry::Occupied(mut e) => {
                                let s = e.get().add(&scaled);
                                *e.get_mut() = s;
                            }
                        }
                    }
                }
                cur = next;
            }
            for (k, kc) in cur {
                match acc.entry(k) {
                    Entry::Vacant(e) => {
                        e.insert(kc);
                    }
                    Entry::Occupied(mut e) => {
                        let s = e.get().add(&kc);
                        *e.get_mut() = s;
                    }
                }
            }
        }
        Self::from_terms(&self.cfg, acc, valid_to)
    }

    /// Derivative in `t`; shrinks the window by one level.
    pub fn d_dt(&self) -> PhiSeries {
        let (p, e) = self.to_monomials();
        let phi = self.cfg.phi();
        // d/dt [p phi^e] = (p' phi + e p phi') phi^{e-1}
        let num = p
            .derivative()
            .mul(&phi)
            .add(&p.mul(&phi.derivative()).scalar_mul(&Scalar::from_int(
                self.cfg.nvars(),
                e,
            )));
        let d = Self::from_monomials(&self.cfg, &num, e - 1);
        d.truncate_window(self.valid_to - 1)
    }

    /// Iterated derivative.
    pub fn d_dt_k(&self, k: u32) -> PhiSeries {
        let mut acc = self.clone();
        for _ in 0..k {
            acc = acc.d_dt();
        }
        acc
    }

    /// Coefficients in the minus basis on the guaranteed window (triangular
    /// division along the reversed chain).
    pub fn to_minus_terms(&self) -> BTreeMap<BasisIndex, Scalar> {
        let n = self.cfg.n();
        let (p, e) = self.to_monomials();
        let mut out = BTreeMap::new();
        let mut r = p;
        let mut k: usize = 0;
        while !r.is_zero() {
            let root = &self.cfg.roots()[n - 1 - (k % n)];
            let (q, rem) = r.div_linear(root);
            if !rem.is_zero() {
                let m = (k / n) as i64 + e;
                if m < self.valid_to {
                    out.insert(BasisIndex::new(m, (k % n) as u32), rem);
                }
            }
            r = q;
            k += 1;
        }
        out
    }

    /// Rebuild from minus-basis coefficients.
    pub fn from_minus_terms(
        cfg: &SigmaConfig,
        terms: impl IntoIterator<Item = (BasisIndex, Scalar)>,
        valid_to: i64,
    ) -> PhiSeries {
        let mut acc = PhiSeries::zero(cfg).truncate_window(valid_to);
        for (idx, c) in terms {
            acc = acc.add(&PhiSeries::basis_minus(cfg, idx).scalar_mul(&c));
        }
        acc.truncate_window(valid_to)
    }

    /// Apply a differential operator (right composition of multiplications
    /// and derivatives is handled by [`DOperator`]).
    pub fn apply_dop(&self, d: &DOperator) -> PhiSeries {
        let mut acc: Option<PhiSeries> = None;
        let mut df = self.clone();
        for (k, g) in d.coeffs.iter().enumerate() {
            if k > 0 {
                df = df.d_dt();
            }
            if g.is_zero() {
                continue;
            }
            let term = g.mul(&df);
            acc = Some(match acc {
                Some(a) => a.add(&term),
                None => term,
            });
        }
        acc.unwrap_or_else(|| PhiSeries::zero(&self.cfg))
    }

    /// Substitute parameters everywhere (coefficients and configuration).
    pub fn substitute(&self, s: &Substitution) -> Result<PhiSeries, SigmaError> {
        let cfg = self.cfg.substitute(s)?;
        let mut terms = BTreeMap::new();
        for (idx, c) in &self.terms {
            let v = c.substitute(s)?;
            if !v.is_zero() {
                terms.insert(*idx, v);
            }
        }
        Ok(PhiSeries {
            cfg,
            terms,
            valid_to: self.valid_to,
        })
    }

    /// Serialize to the line-oriented interchange representation.
    pub fn to_repr(&self) -> PhiSeriesRepr {
        PhiSeriesRepr {
            config: ConfigRepr::from_config(&self.cfg),
            valid_to: self.valid_to,
            terms: self
                .terms
                .iter()
                .map(|(idx, c)| (idx.m, idx.i, c.to_expr(self.cfg.params())))
                .collect(),
        }
    }

    pub fn from_repr(repr: &PhiSeriesRepr) -> Result<PhiSeries, SigmaError> {
        let cfg = repr.config.to_config()?;
        let terms = repr
            .terms
            .iter()
            .map(|(m, i, s)| {
                parse_scalar(s, cfg.params()).map(|c| (BasisIndex::new(*m, *i), c))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PhiSeries::from_terms(&cfg, terms, repr.valid_to))
    }
}

impl fmt::Display for PhiSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        } else {
            let mut first = true;
            for (idx, c) in &self.terms {
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                write!(f, "[{}]*b{}", c, idx)?;
            }
        }
        write!(f, " (window {})", self.valid_to)
    }
}

// ---------------------------------------------------------------------------
// One-forms and differential operators
// ---------------------------------------------------------------------------

/// A one-form `g dt`; the right action of a derivative is
/// `g dt . d_t = -(dg/dt) dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub density: PhiSeries,
}

impl OneForm {
    pub fn new(density: PhiSeries) -> OneForm {
        OneForm { density }
    }

    pub fn dt(cfg: &SigmaConfig) -> OneForm {
        OneForm {
            density: PhiSeries::one(cfg),
        }
    }

    pub fn config(&self) -> &SigmaConfig {
        self.density.config()
    }

    /// Right action by a function: `(g dt) . h = (g h) dt`.
    pub fn act_fn(&self, h: &PhiSeries) -> OneForm {
        OneForm {
            density: self.density.mul(h),
        }
    }

    /// Right action by `d_t`.
    pub fn act_dt(&self) -> OneForm {
        OneForm {
            density: self.density.d_dt().neg(),
        }
    }

    /// Right action by a full operator `sum_k g_k d_t^k`:
    /// `w . (g d^k) = (-d/dt)^k (g w)`.
    pub fn apply_dop(&self, d: &DOperator) -> OneForm {
        let cfg = self.config().clone();
        let mut acc = PhiSeries::zero(&cfg);
        for (k, g) in d.coeffs.iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            let mut w = self.density.mul(g);
            for _ in 0..k {
                w = w.d_dt().neg();
            }
            acc = acc.add(&w);
        }
        OneForm { density: acc }
    }
}

/// Differential operator `sum_k g_k d_t^k` with coefficients in the
/// localized ring; `coeffs[k]` is `g_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DOperator {
    pub coeffs: Vec<PhiSeries>,
}

impl DOperator {
    pub fn new(coeffs: Vec<PhiSeries>) -> DOperator {
        DOperator { coeffs }
    }

    pub fn multiplication(g: PhiSeries) -> DOperator {
        DOperator { coeffs: vec![g] }
    }

    pub fn d_dt(cfg: &SigmaConfig) -> DOperator {
        DOperator {
            coeffs: vec![PhiSeries::zero(cfg), PhiSeries::one(cfg)],
        }
    }

    /// Highest derivative order with a nonzero coefficient.
    pub fn order(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Interchange representations (serde)
// ---------------------------------------------------------------------------

/// Serializable configuration header.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigRepr {
    pub params: Vec<String>,
    pub roots: Vec<String>,
    pub truncation: i64,
}

impl ConfigRepr {
    pub fn from_config(cfg: &SigmaConfig) -> ConfigRepr {
        ConfigRepr {
            params: cfg.params().to_vec(),
            roots: cfg
                .roots()
                .iter()
                .map(|r| r.to_expr(cfg.params()))
                .collect(),
            truncation: cfg.truncation(),
        }
    }

    pub fn to_config(&self) -> Result<SigmaConfig, SigmaError> {
        let roots = self
            .roots
            .iter()
            .map(|r| parse_scalar(r, &self.params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SigmaConfig::with_roots(
            self.params.clone(),
            roots,
            self.truncation,
        ))
    }
}

/// Serializable series: config header plus `(m, i, expression)` triples in
/// basis order.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PhiSeriesRepr {
    pub config: ConfigRepr,
    pub valid_to: i64,
    pub terms: Vec<(i64, u32, String)>,
}

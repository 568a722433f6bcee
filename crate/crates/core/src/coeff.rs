//! Coefficient algebras: the value target of field evaluation.
//!
//! A coefficient algebra is an associative unital algebra over the scalar
//! field together with a decreasing chain of left ideals `L_1 ⊇ L_2 ⊇ ..`
//! ("zero at level k" = membership in `L_k`).  Products are continuous for
//! the ideal chain: left multiplication preserves every `L_k`, and right
//! multiplication by `x` preserves `L_k` as soon as `k` is at least the
//! creation depth of `x` (see [`CoeffAlgebra::creation_depth`]).
//!
//! Two instances are provided:
//!
//! * [`MatrixAlgebra`] — square matrices over the scalars with the discrete
//!   chain (`L_k = 0` for `k >= 1`), a minimal smoke-test target;
//! * [`Heisenberg`] — the multipoint Heisenberg algebra on generators
//!   `beta_{m,i}` indexed by the plus basis, with relations determined by
//!   the residue pairing and a working truncation that kills every word
//!   containing an annihilation generator at level `>= K`.

use crate::residue::pairing;
use crate::scalar::Scalar;
use crate::sigma::{BasisIndex, PhiSeries, SigmaConfig};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

/// An associative unital algebra with a left-ideal truncation chain.
///
/// `Elem` values are immutable and in canonical form, so `==` decides
/// equality.  `truncate(k, x)` projects away the level-`k` ideal;
/// `is_zero_at_level(k, x)` tests membership in it.  Levels `k <= 0` carry
/// no information: the ideal is the whole algebra there.
pub trait CoeffAlgebra: Clone + Send + Sync {
    type Elem: Clone + PartialEq + fmt::Debug + Send + Sync;

    /// Number of parameters of the scalar field the instance works over.
    fn nvars(&self) -> usize;
    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, x: &Self::Elem, y: &Self::Elem) -> Self::Elem;
    fn mul(&self, x: &Self::Elem, y: &Self::Elem) -> Self::Elem;
    fn scalar_mul(&self, s: &Scalar, x: &Self::Elem) -> Self::Elem;

    fn neg(&self, x: &Self::Elem) -> Self::Elem {
        self.scalar_mul(&Scalar::from_int(self.nvars(), -1), x)
    }

    fn sub(&self, x: &Self::Elem, y: &Self::Elem) -> Self::Elem {
        self.add(x, &self.neg(y))
    }

    /// Project modulo the level-`k` ideal (the identity map for `k` beyond
    /// the working truncation; zero for `k <= 0`).
    fn truncate(&self, k: i64, x: &Self::Elem) -> Self::Elem;

    /// Membership in the level-`k` ideal (always true for `k <= 0`).
    fn is_zero_at_level(&self, k: i64, x: &Self::Elem) -> bool;

    fn is_zero(&self, x: &Self::Elem) -> bool;

    /// Depth of the deepest creation generator in `x` (0 when none).  For
    /// any `e >= creation_depth(x)`, right multiplication by `x` maps the
    /// level-`e` ideal into itself; left multiplication always does.
    fn creation_depth(&self, x: &Self::Elem) -> i64;

    /// The working truncation level `K`: the level-`K` ideal is identically
    /// zero in the instance, so membership in it is exactness.
    fn truncation_level(&self) -> i64;

    /// The distinguished generator map `f ↦ β(f)` when the instance carries
    /// one (`None` otherwise).
    fn generator_map(&self, f: &PhiSeries) -> Option<Self::Elem> {
        let _ = f;
        None
    }

    /// The commutator `x y - y x`.
    fn bracket(&self, x: &Self::Elem, y: &Self::Elem) -> Self::Elem {
        self.sub(&self.mul(x, y), &self.mul(y, x))
    }
}

// ---------------------------------------------------------------------------
// Matrix algebra (discrete truncation chain)
// ---------------------------------------------------------------------------

/// Square matrices over the scalars; the level-`k` ideal is zero for every
/// `k >= 1`, so truncation carries no information loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixAlgebra {
    dim: usize,
    nvars: usize,
}

/// A dense matrix of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixElem {
    entries: Vec<Vec<Scalar>>,
}

impl MatrixAlgebra {
    pub fn new(dim: usize, nvars: usize) -> MatrixAlgebra {
        assert!(dim >= 1, "matrix algebra needs a positive dimension");
        MatrixAlgebra { dim, nvars }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The matrix unit `E_{r,c}` (1-based in math texts; 0-based here).
    pub fn unit_entry(&self, r: usize, c: usize) -> MatrixElem {
        assert!(r < self.dim && c < self.dim, "matrix unit out of range");
        let mut m = self.zero();
        m.entries[r][c] = Scalar::one(self.nvars);
        m
    }

    pub fn from_entries(&self, entries: Vec<Vec<Scalar>>) -> MatrixElem {
        assert_eq!(entries.len(), self.dim, "matrix row count mismatch");
        for row in &entries {
            assert_eq!(row.len(), self.dim, "matrix column count mismatch");
        }
        MatrixElem { entries }
    }
}

impl MatrixElem {
    pub fn entry(&self, r: usize, c: usize) -> &Scalar {
        &self.entries[r][c]
    }
}

impl CoeffAlgebra for MatrixAlgebra {
    type Elem = MatrixElem;

    fn nvars(&self) -> usize {
        self.nvars
    }

    fn zero(&self) -> MatrixElem {
        MatrixElem {
            entries: vec![vec![Scalar::zero(self.nvars); self.dim]; self.dim],
        }
    }

    fn one(&self) -> MatrixElem {
        let mut m = self.zero();
        for i in 0..self.dim {
            m.entries[i][i] = Scalar::one(self.nvars);
        }
        m
    }

    fn add(&self, x: &MatrixElem, y: &MatrixElem) -> MatrixElem {
        let entries = x
            .entries
            .iter()
            .zip(&y.entries)
            .map(|(xr, yr)| xr.iter().zip(yr).map(|(a, b)| a.add(b)).collect())
            .collect();
        MatrixElem { entries }
    }

    fn mul(&self, x: &MatrixElem, y: &MatrixElem) -> MatrixElem {
        let mut out = self.zero();
        for r in 0..self.dim {
            for k in 0..self.dim {
                if x.entries[r][k].is_zero() {
                    continue;
                }
                for c in 0..self.dim {
                    if y.entries[k][c].is_zero() {
                        continue;
                    }
                    let term = x.entries[r][k].mul(&y.entries[k][c]);
                    out.entries[r][c] = out.entries[r][c].add(&term);
                }
            }
        }
        out
    }

    fn scalar_mul(&self, s: &Scalar, x: &MatrixElem) -> MatrixElem {
        let entries = x
            .entries
            .iter()
            .map(|row| row.iter().map(|e| e.mul(s)).collect())
            .collect();
        MatrixElem { entries }
    }

    fn truncate(&self, k: i64, x: &MatrixElem) -> MatrixElem {
        if k >= 1 {
            x.clone()
        } else {
            self.zero()
        }
    }

    fn is_zero_at_level(&self, k: i64, x: &MatrixElem) -> bool {
        if k >= 1 {
            self.is_zero(x)
        } else {
            true
        }
    }

    fn is_zero(&self, x: &MatrixElem) -> bool {
        x.entries.iter().all(|row| row.iter().all(|e| e.is_zero()))
    }

    fn creation_depth(&self, _x: &MatrixElem) -> i64 {
        0
    }

    fn truncation_level(&self) -> i64 {
        1
    }
}

// ---------------------------------------------------------------------------
// Multipoint Heisenberg algebra
// ---------------------------------------------------------------------------

/// A normal-ordered word: creation indices (`m < 0`) in ascending order,
/// then annihilation indices (`m >= 0`) in ascending order.  Generators of
/// the same kind commute exactly (their residue pairing vanishes), so this
/// order is canonical.
type Word = Vec<BasisIndex>;

/// Element of the Heisenberg instance: a finite scalar combination of
/// normal-ordered words; the empty word is the central scalar part.
#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergElem {
    terms: BTreeMap<Word, Scalar>,
}

impl HeisenbergElem {
    /// Words and coefficients in canonical (sorted) order.
    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Coefficient of the empty word.
    pub fn central_part(&self, nvars: usize) -> Scalar {
        self.terms
            .get(&Vec::new())
            .cloned()
            .unwrap_or_else(|| Scalar::zero(nvars))
    }
}

impl fmt::Display for HeisenbergElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (w, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({})", c)?;
            for idx in w {
                write!(f, " b{}", idx)?;
            }
        }
        Ok(())
    }
}

/// The multipoint Heisenberg algebra over a section configuration, truncated
/// at annihilation level `K`: generators `beta_{m,i}` for `m < K`, with
/// `beta_a beta_c = beta_c beta_a - <b_c, b_a>` whenever an annihilator `a`
/// moves right past a creation `c` (`<,>` the residue pairing), and every
/// word containing an annihilator at level `>= K` identified with zero.
#[derive(Clone, Debug)]
pub struct Heisenberg {
    cfg: SigmaConfig,
    level: i64,
    pair_cache: Arc<Mutex<BTreeMap<(BasisIndex, BasisIndex), Scalar>>>,
}

impl PartialEq for Heisenberg {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.level == other.level
    }
}

impl Heisenberg {
    pub fn new(cfg: &SigmaConfig, level: i64) -> Heisenberg {
        assert!(level >= 1, "truncation level must be positive");
        assert!(
            level <= cfg.truncation(),
            "truncation level beyond the configuration window"
        );
        Heisenberg {
            cfg: cfg.clone(),
            level,
            pair_cache: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn level(&self) -> i64 {
        self.level
    }

    /// The generator map: `beta(f) = sum_idx f_idx beta_idx`, linear in `f`,
    /// with annihilators at level `>= K` already in the truncation ideal.
    pub fn beta(&self, f: &PhiSeries) -> HeisenbergElem {
        let mut terms = BTreeMap::new();
        for (idx, c) in f.terms() {
            if idx.m >= self.level {
                continue;
            }
            terms.insert(vec![*idx], c.clone());
        }
        HeisenbergElem { terms }
    }

    /// A bare generator.
    pub fn generator(&self, idx: BasisIndex) -> HeisenbergElem {
        self.beta(&PhiSeries::basis(&self.cfg, idx))
    }

    /// Central element `s * 1`.
    pub fn central(&self, s: &Scalar) -> HeisenbergElem {
        if s.is_zero() {
            return self.zero();
        }
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), s.clone());
        HeisenbergElem { terms }
    }

    /// Residue pairing of the plus-basis elements at `a` and `c`, cached.
    fn pair_value(&self, a: BasisIndex, c: BasisIndex) -> Scalar {
        let key = if a <= c { (a, c) } else { (c, a) };
        if let Some(v) = self.pair_cache.lock().unwrap().get(&key) {
            return v.clone();
        }
        let v = pairing(
            &PhiSeries::basis(&self.cfg, key.0),
            &PhiSeries::basis(&self.cfg, key.1),
        );
        self.pair_cache.lock().unwrap().insert(key, v.clone());
        v
    }

    /// Right-multiply by a single generator, keeping normal order.
    fn mul_generator(&self, x: &HeisenbergElem, g: BasisIndex) -> HeisenbergElem {
        let mut out: BTreeMap<Word, Scalar> = BTreeMap::new();
        let mut push = |w: Word, c: Scalar| {
            if c.is_zero() {
                return;
            }
            let e = out
                .entry(w)
                .or_insert_with(|| Scalar::zero(c.nvars()));
            *e = e.add(&c);
        };
        for (w, c) in &x.terms {
            if g.m >= 0 {
                if g.m >= self.level {
                    continue; // truncation ideal
                }
                // an annihilator appends into the annihilation block
                let mut nw = w.clone();
                let pos = nw.partition_point(|k| k.m < 0 || *k <= g);
                nw.insert(pos, g);
                push(nw, c.clone());
            } else {
                // a creation moves left past the whole annihilation block:
                // one surviving word plus one pairing term per annihilator
                let split = w.partition_point(|k| k.m < 0);
                let mut nw = w.clone();
                let pos = w[..split].partition_point(|k| *k <= g);
                nw.insert(pos, g);
                push(nw, c.clone());
                for (j, a) in w[split..].iter().enumerate() {
                    let p = self.pair_value(*a, g);
                    if p.is_zero() {
                        continue;
                    }
                    let mut rest = w.clone();
                    rest.remove(split + j);
                    push(rest, c.mul(&p).neg());
                }
            }
        }
        let mut terms = out;
        terms.retain(|_, c| !c.is_zero());
        HeisenbergElem { terms }
    }
}

impl CoeffAlgebra for Heisenberg {
    type Elem = HeisenbergElem;

    fn nvars(&self) -> usize {
        self.cfg.nvars()
    }

    fn zero(&self) -> HeisenbergElem {
        HeisenbergElem {
            terms: BTreeMap::new(),
        }
    }

    fn one(&self) -> HeisenbergElem {
        self.central(&Scalar::one(self.cfg.nvars()))
    }

    fn add(&self, x: &HeisenbergElem, y: &HeisenbergElem) -> HeisenbergElem {
        let mut terms = x.terms.clone();
        for (w, c) in &y.terms {
            let e = terms
                .entry(w.clone())
                .or_insert_with(|| Scalar::zero(self.cfg.nvars()));
            *e = e.add(c);
        }
        terms.retain(|_, c| !c.is_zero());
        HeisenbergElem { terms }
    }

    fn mul(&self, x: &HeisenbergElem, y: &HeisenbergElem) -> HeisenbergElem {
        let mut acc = self.zero();
        for (w, c) in &y.terms {
            let mut cur = x.clone();
            for g in w {
                cur = self.mul_generator(&cur, *g);
            }
            acc = self.add(&acc, &self.scalar_mul(c, &cur));
        }
        acc
    }

    fn scalar_mul(&self, s: &Scalar, x: &HeisenbergElem) -> HeisenbergElem {
        if s.is_zero() {
            return self.zero();
        }
        HeisenbergElem {
            terms: x
                .terms
                .iter()
                .map(|(w, c)| (w.clone(), c.mul(s)))
                .collect(),
        }
    }

    fn truncate(&self, k: i64, x: &HeisenbergElem) -> HeisenbergElem {
        if k <= 0 {
            return self.zero();
        }
        let terms = x
            .terms
            .iter()
            .filter(|(w, _)| w.iter().all(|idx| idx.m < k))
            .map(|(w, c)| (w.clone(), c.clone()))
            .collect();
        HeisenbergElem { terms }
    }

    fn is_zero_at_level(&self, k: i64, x: &HeisenbergElem) -> bool {
        if k <= 0 {
            return true;
        }
        x.terms.keys().all(|w| w.iter().any(|idx| idx.m >= k))
    }

    fn is_zero(&self, x: &HeisenbergElem) -> bool {
        x.terms.is_empty()
    }

    fn creation_depth(&self, x: &HeisenbergElem) -> i64 {
        x.terms
            .keys()
            .flat_map(|w| w.iter().filter(|idx| idx.m < 0).map(|idx| -idx.m))
            .max()
            .unwrap_or(0)
    }

    fn truncation_level(&self) -> i64 {
        self.level
    }

    fn generator_map(&self, f: &PhiSeries) -> Option<HeisenbergElem> {
        Some(self.beta(f))
    }
}

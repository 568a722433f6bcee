//! Two- and three-variable series with one-sided expansions of diagonal
//! poles.
//!
//! A [`TwoVarSeries`] is a finite sum of decomposable terms `f(u) (x) g(v)`
//! stored *anchored*: a map from a basis index in the anchor slot to the
//! coefficient series in the other slot.
//!
//! * `Poly` and `Left` series anchor on `u`; `Right` series anchor on `v`.
//! * `Right` series are truncations of expansions descending in `u`: stored
//!   values are exact for `u`-levels `>= -depth`; dropped (tail) terms have
//!   `u`-level `< -depth` and anchor (`v`) level `>= tail_anchor`, or anchor
//!   level `>= anchor_window`.
//! * `Left` series mirror this with the roles of `u` and `v` swapped.
//! * `Poly` series have no tail in the co-slot (`depth`/`tail_anchor` are
//!   the `NO_TAIL` sentinel); `anchor_window` still bounds the anchor levels
//!   that are guaranteed complete.
//!
//! The window metadata is what lets downstream consumers certify results:
//! contractions are exact whenever `depth >= 1` (tail terms have residue
//! zero), and field products can check `tail_anchor` against a field's
//! annihilation level before trusting a truncated pairing sum.
//!
//! The generating series of the diagonal kernel expand, per level `m >= 0`,
//!
//! ```text
//! exp_r(1) =  sum_{m,i} b-_{-m-1, n-1-i}(u) (x) b+_{m,i}(v)      (right)
//! exp_l(1) = -sum_{m,i} b-_{m,i}(u)     (x) b+_{-m-1, n-1-i}(v)  (left)
//! ```
//!
//! and `exp_r(k)` is the `k`-th product of `exp_r(1)` with itself (depth
//! padding is added automatically so the requested depth survives the
//! products).

use crate::residue::residue;
use crate::scalar::Scalar;
use crate::sigma::{BasisIndex, OneForm, PhiSeries, SigmaConfig, SigmaError, TPoly};
use std::collections::BTreeMap;

/// Sentinel for "no tail in this direction".
pub const NO_TAIL: i64 = i64::MAX / 4;

fn sat_add(a: i64, b: i64) -> i64 {
    if a >= NO_TAIL || b >= NO_TAIL {
        NO_TAIL
    } else {
        a + b
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Orientation {
    /// Finite sum of decomposable regular-or-polar terms; no expansion tail.
    Poly,
    /// Expansion descending in `u` (first slot), ascending in `v`.
    Right,
    /// Expansion descending in `v` (second slot), ascending in `u`.
    Left,
}

impl Orientation {
    /// Which slot the anchored map is keyed by: `false` = `u`, `true` = `v`.
    fn anchor_is_v(self) -> bool {
        matches!(self, Orientation::Right)
    }
}

/// Two-variable series; see the module docs for the representation and
/// window semantics.
#[derive(Clone, Debug)]
pub struct TwoVarSeries {
    cfg: SigmaConfig,
    orientation: Orientation,
    terms: BTreeMap<BasisIndex, PhiSeries>,
    depth: i64,
    tail_anchor: i64,
    anchor_window: i64,
}

impl PartialEq for TwoVarSeries {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.orientation == other.orientation
            && self.terms == other.terms
            && self.depth == other.depth
            && self.tail_anchor == other.tail_anchor
            && self.anchor_window == other.anchor_window
    }
}

impl TwoVarSeries {
    fn new_raw(
        cfg: SigmaConfig,
        orientation: Orientation,
        terms: BTreeMap<BasisIndex, PhiSeries>,
        depth: i64,
        tail_anchor: i64,
        anchor_window: i64,
    ) -> TwoVarSeries {
        let mut s = TwoVarSeries {
            cfg,
            orientation,
            terms,
            depth,
            tail_anchor,
            anchor_window,
        };
        // keep empty values only when they carry a restricted window (the
        // slot is then "zero as far as known, unknown beyond valid_to")
        let full = s.cfg.truncation();
        s.terms
            .retain(|idx, v| idx.m < s.anchor_window && (!v.is_zero() || v.valid_to() < full));
        s
    }

    pub fn zero_poly(cfg: &SigmaConfig) -> TwoVarSeries {
        TwoVarSeries {
            cfg: cfg.clone(),
            orientation: Orientation::Poly,
            terms: BTreeMap::new(),
            depth: NO_TAIL,
            tail_anchor: NO_TAIL,
            anchor_window: cfg.truncation(),
        }
    }

    /// Build a `Poly` series from decomposable pairs `f (x) g`.
    pub fn poly_from_pairs(cfg: &SigmaConfig, pairs: &[(PhiSeries, PhiSeries)]) -> TwoVarSeries {
        let mut terms: BTreeMap<BasisIndex, PhiSeries> = BTreeMap::new();
        let mut aw = cfg.truncation();
        for (f, g) in pairs {
            assert!(*f.config() == *cfg && *g.config() == *cfg);
            aw = aw.min(f.valid_to());
            for (idx, c) in f.terms() {
                let contrib = g.scalar_mul(c);
                merge_term(&mut terms, *idx, contrib);
            }
        }
        TwoVarSeries::new_raw(
            cfg.clone(),
            Orientation::Poly,
            terms,
            NO_TAIL,
            NO_TAIL,
            aw,
        )
    }

    /// `f (x) g` as a `Poly` series.
    pub fn tensor(f: &PhiSeries, g: &PhiSeries) -> TwoVarSeries {
        Self::poly_from_pairs(f.config(), &[(f.clone(), g.clone())])
    }

    /// The diagonal kernel `u - v` (`t (x) 1 - 1 (x) t`).
    pub fn delta(cfg: &SigmaConfig) -> TwoVarSeries {
        let t = PhiSeries::coordinate(cfg);
        let one = PhiSeries::one(cfg);
        Self::poly_from_pairs(cfg, &[(t, one.clone()), (one, PhiSeries::coordinate(cfg).neg())])
    }

    /// `1 (x) 1`.
    pub fn one(cfg: &SigmaConfig) -> TwoVarSeries {
        let one = PhiSeries::one(cfg);
        Self::tensor(&one, &one)
    }

    /// Right expansion of `(u - v)^-1` to the given depth: stored terms have
    /// `u`-levels `-1 .. -depth`.
    pub fn exp_r1(cfg: &SigmaConfig, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        let n = cfg.n() as u32;
        if depth > cfg.truncation() {
            return Err(SigmaError::WindowTooSmall {
                needed: depth,
                have: cfg.truncation(),
            });
        }
        let mut terms = BTreeMap::new();
        for m in 0..depth {
            for i in 0..n {
                let key = BasisIndex::new(m, i);
                let val = PhiSeries::basis_minus(cfg, BasisIndex::new(-m - 1, n - 1 - i));
                merge_term(&mut terms, key, val);
            }
        }
        Ok(TwoVarSeries::new_raw(
            cfg.clone(),
            Orientation::Right,
            terms,
            depth,
            depth,
            cfg.truncation(),
        ))
    }

    /// Left expansion of `(u - v)^-1` to the given depth: stored terms have
    /// `v`-levels `-1 .. -depth`.
    pub fn exp_l1(cfg: &SigmaConfig, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        let n = cfg.n() as u32;
        if depth > cfg.truncation() {
            return Err(SigmaError::WindowTooSmall {
                needed: depth,
                have: cfg.truncation(),
            });
        }
        let mut terms: BTreeMap<BasisIndex, PhiSeries> = BTreeMap::new();
        for m in 0..depth {
            for i in 0..n {
                // u factor b-_{m,i} expanded in the plus basis; v factor
                // -b+_{-m-1, n-1-i}
                let u_part = PhiSeries::basis_minus(cfg, BasisIndex::new(m, i));
                let v_part = PhiSeries::basis(cfg, BasisIndex::new(-m - 1, n - 1 - i)).neg();
                for (idx, c) in u_part.terms() {
                    merge_term(&mut terms, *idx, v_part.scalar_mul(c));
                }
            }
        }
        Ok(TwoVarSeries::new_raw(
            cfg.clone(),
            Orientation::Left,
            terms,
            depth,
            depth,
            cfg.truncation(),
        ))
    }

    /// `exp_r(k)`: the `k`-th power of `exp_r1`, generated with enough
    /// internal padding that the result is exact to `depth`.
    pub fn exp_r(cfg: &SigmaConfig, k: u32, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        assert!(k >= 1);
        let mut acc = Self::exp_r1(cfg, depth)?;
        let base = Self::exp_r1(cfg, depth)?;
        for _ in 1..k {
            acc = Self::mul_two(&acc, &base)?;
        }
        Ok(acc.truncate_depth(depth))
    }

    /// `exp_l(k)`: the `k`-th power of `exp_l1`.
    pub fn exp_l(cfg: &SigmaConfig, k: u32, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        assert!(k >= 1);
        let mut acc = Self::exp_l1(cfg, depth)?;
        let base = Self::exp_l1(cfg, depth)?;
        for _ in 1..k {
            acc = Self::mul_two(&acc, &base)?;
        }
        Ok(acc.truncate_depth(depth))
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn depth(&self) -> i64 {
        self.depth
    }

    pub fn tail_anchor(&self) -> i64 {
        self.tail_anchor
    }

    pub fn anchor_window(&self) -> i64 {
        self.anchor_window
    }

    /// True when every stored coefficient vanishes.  Entries that are empty
    /// but carry a restricted validity window still count as zero content.
    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|v| v.is_zero())
    }

    /// Anchored terms: `(anchor basis index, co-slot series)`.
    pub fn anchored_terms(&self) -> impl Iterator<Item = (&BasisIndex, &PhiSeries)> {
        self.terms.iter()
    }

    /// Lowest anchor level (or `anchor_window` when empty).
    fn min_anchor(&self) -> i64 {
        self.terms
            .keys()
            .next()
            .map(|i| i.m)
            .unwrap_or(self.anchor_window)
    }

    /// Highest stored co-slot level over all values, measured conservatively
    /// for product bounds: an index with a chain part (`i > 0`) can carry
    /// into the next phi power when multiplied, so it counts as `m + 1`.
    fn max_co(&self) -> Option<i64> {
        self.terms
            .values()
            .flat_map(|v| v.terms().map(|(i, _)| i.m + i64::from(i.i > 0)))
            .max()
    }

    /// Lowest stored co-slot level over all values (0 when empty).
    fn min_co(&self) -> i64 {
        self.terms
            .values()
            .map(|v| v.min_level())
            .min()
            .unwrap_or(0)
    }

    fn require_same_config(&self, other: &TwoVarSeries) {
        assert!(self.cfg == other.cfg, "config mismatch");
    }

    /// Reinterpret a `Poly` series with the given anchored slot (transpose if
    /// needed) and orientation tag.  Poly data has no tail, so this is exact.
    pub fn promote(&self, target: Orientation) -> TwoVarSeries {
        self.as_orientation(target)
    }

    fn as_orientation(&self, target: Orientation) -> TwoVarSeries {
        assert_eq!(self.orientation, Orientation::Poly);
        if target.anchor_is_v() == self.orientation.anchor_is_v() {
            let mut s = self.clone();
            s.orientation = target;
            return s;
        }
        // transpose: currently anchored on u; produce anchored on v.  The
        // old anchor window bounds where the key enumeration was complete, so
        // it caps the windows of the transposed values.
        let mut terms: BTreeMap<BasisIndex, PhiSeries> = BTreeMap::new();
        let mut aw = self.cfg.truncation();
        for (u_idx, v_series) in &self.terms {
            aw = aw.min(v_series.valid_to());
            let u_series =
                PhiSeries::basis(&self.cfg, *u_idx).truncate_window(self.anchor_window);
            for (v_idx, c) in v_series.terms() {
                merge_term(&mut terms, *v_idx, u_series.scalar_mul(c));
            }
        }
        TwoVarSeries::new_raw(self.cfg.clone(), target, terms, NO_TAIL, NO_TAIL, aw)
    }

    /// Swap the two slots of a `Poly` series.
    pub fn swap_slots(&self) -> TwoVarSeries {
        assert_eq!(self.orientation, Orientation::Poly);
        let mut out = self.as_orientation(Orientation::Right);
        out.orientation = Orientation::Poly;
        out
    }

    /// Drop stored information beyond co-slot depth `d` (keeps the guarantee
    /// honest by folding dropped terms into the tail bookkeeping).  Stored
    /// content below `-d` is cleared at every anchor, including anchors that
    /// carried exact content deeper than the old certified depth; the depth
    /// certificate never grows.
    pub fn truncate_depth(&self, d: i64) -> TwoVarSeries {
        let d = d.min(self.depth);
        if self.terms.values().all(|v| v.min_level() >= -d) {
            let mut out = self.clone();
            out.depth = d;
            return out;
        }
        let mut terms = BTreeMap::new();
        let mut tail_anchor = self.tail_anchor;
        for (idx, v) in &self.terms {
            let kept = drop_below(v, -d);
            if kept.num_terms() != v.num_terms() {
                tail_anchor = tail_anchor.min(idx.m);
            }
            if !kept.is_zero() || kept.valid_to() < self.cfg.truncation() {
                terms.insert(*idx, kept);
            }
        }
        TwoVarSeries::new_raw(
            self.cfg.clone(),
            self.orientation,
            terms,
            d,
            tail_anchor,
            self.anchor_window,
        )
    }

    pub fn scalar_mul(&self, s: &Scalar) -> TwoVarSeries {
        let mut out = self.clone();
        if s.is_zero() {
            out.terms.clear();
            return out;
        }
        for v in out.terms.values_mut() {
            *v = v.scalar_mul(s);
        }
        out
    }

    pub fn neg(&self) -> TwoVarSeries {
        self.scalar_mul(&Scalar::from_int(self.cfg.nvars(), -1))
    }

    pub fn add(&self, other: &TwoVarSeries) -> Result<TwoVarSeries, SigmaError> {
        self.require_same_config(other);
        let (a, b) = match (self.orientation, other.orientation) {
            (x, y) if x == y => (self.clone(), other.clone()),
            (Orientation::Poly, o) => (self.as_orientation(o), other.clone()),
            (o, Orientation::Poly) => (self.clone(), other.as_orientation(o)),
            _ => {
                return Err(SigmaError::OrientationMismatch(
                    "cannot add left- and right-oriented series".into(),
                ))
            }
        };
        let mut terms = a.terms.clone();
        for (idx, v) in &b.terms {
            merge_term(&mut terms, *idx, v.clone());
        }
        Ok(TwoVarSeries::new_raw(
            self.cfg.clone(),
            a.orientation,
            terms,
            a.depth.min(b.depth),
            a.tail_anchor.min(b.tail_anchor),
            a.anchor_window.min(b.anchor_window),
        ))
    }

    pub fn sub(&self, other: &TwoVarSeries) -> Result<TwoVarSeries, SigmaError> {
        self.add(&other.neg())
    }

    /// Exact product; orientations combine as `Poly * X = X`, `X * X = X`,
    /// and `Left * Right` is rejected.  Window metadata shrinks according to
    /// how the factors' tails could pollute the result.
    pub fn mul_two(x: &TwoVarSeries, y: &TwoVarSeries) -> Result<TwoVarSeries, SigmaError> {
        x.require_same_config(y);
        use Orientation::*;
        let target = match (x.orientation, y.orientation) {
            (Poly, Poly) => Poly,
            (Poly, Right) | (Right, Poly) | (Right, Right) => Right,
            (Poly, Left) | (Left, Poly) | (Left, Left) => Left,
            _ => {
                return Err(SigmaError::OrientationMismatch(
                    "cannot multiply left- and right-oriented series".into(),
                ))
            }
        };
        let a = if x.orientation == Poly && target != Poly {
            x.as_orientation(target)
        } else {
            x.clone()
        };
        let b = if y.orientation == Poly && target != Poly {
            y.as_orientation(target)
        } else {
            y.clone()
        };

        // depth: a's tail (co-levels < -a.depth) times b's stored part can
        // reach up to -a.depth - 1 + max_co(b), and symmetrically; tail*tail
        // sits deeper still.
        let depth = {
            let d1 = if a.depth >= NO_TAIL {
                NO_TAIL
            } else {
                sat_add(a.depth, -b.max_co().unwrap_or(0))
            };
            let d2 = if b.depth >= NO_TAIL {
                NO_TAIL
            } else {
                sat_add(b.depth, -a.max_co().unwrap_or(0))
            };
            d1.min(d2)
        };
        // tail anchors: a's missing content anchors at >= a.tail_anchor, so
        // its products with b land at anchors >= a.tail_anchor + min_anchor(b)
        // (and symmetrically); tail*tail products at >= the anchor sum.
        let tail_anchor = {
            let t1 = if a.tail_anchor >= NO_TAIL {
                NO_TAIL
            } else {
                sat_add(a.tail_anchor, b.min_anchor())
            };
            let t2 = if b.tail_anchor >= NO_TAIL {
                NO_TAIL
            } else {
                sat_add(b.tail_anchor, a.min_anchor())
            };
            let t3 = if a.tail_anchor >= NO_TAIL || b.tail_anchor >= NO_TAIL {
                NO_TAIL
            } else {
                sat_add(a.tail_anchor, b.tail_anchor)
            };
            t1.min(t2).min(t3)
        };
        let anchor_window = sat_add(a.anchor_window, b.min_anchor())
            .min(sat_add(b.anchor_window, a.min_anchor()))
            .min(x.cfg.truncation());

        let mut terms: BTreeMap<BasisIndex, PhiSeries> = BTreeMap::new();
        for (ka, va) in &a.terms {
            let basis_a = PhiSeries::basis(&x.cfg, *ka);
            for (kb, vb) in &b.terms {
                let key_prod = basis_a.mul(&PhiSeries::basis(&x.cfg, *kb));
                let val = va.mul(vb);
                if val.is_zero() && val.valid_to() >= x.cfg.truncation() {
                    continue;
                }
                for (kc, c) in key_prod.terms() {
                    let contrib = val.scalar_mul(c);
                    // Inside the certified tail region the stored value would
                    // only be partial; clear it there so that stored content
                    // stays exact everywhere.  Anchors below `tail_anchor`
                    // receive no tail pollution and keep their full depth.
                    let contrib = if depth < NO_TAIL && kc.m >= tail_anchor {
                        drop_below(&contrib, -depth)
                    } else {
                        contrib
                    };
                    merge_term(&mut terms, *kc, contrib);
                }
            }
        }
        Ok(TwoVarSeries::new_raw(
            x.cfg.clone(),
            target,
            terms,
            depth,
            tail_anchor,
            anchor_window,
        ))
    }

    /// Diagonal restriction `f (x) g -> f g` of a `Poly` series.
    pub fn diag_restrict(&self) -> Result<PhiSeries, SigmaError> {
        if self.orientation != Orientation::Poly {
            return Err(SigmaError::OrientationMismatch(
                "diagonal restriction needs a poly series".into(),
            ));
        }
        let mut acc = PhiSeries::zero(&self.cfg);
        for (idx, v) in &self.terms {
            acc = acc.add(&PhiSeries::basis(&self.cfg, *idx).mul(v));
        }
        if self.anchor_window < self.cfg.truncation() {
            acc = acc.truncate_window(sat_add(self.anchor_window, self.min_co()));
        }
        Ok(acc)
    }

    /// Right contraction `T_r`: pair the `u` slot against `dt` and keep the
    /// `v` slot: `sum res(f_k dt) g_k`.  Exact whenever `depth >= 1`.
    pub fn contract_r(&self) -> Result<PhiSeries, SigmaError> {
        if self.orientation != Orientation::Right {
            return Err(SigmaError::OrientationMismatch(
                "right contraction needs a right-oriented series".into(),
            ));
        }
        if self.depth < 1 {
            return Err(SigmaError::WindowTooSmall {
                needed: 1,
                have: self.depth,
            });
        }
        let mut acc = PhiSeries::zero(&self.cfg);
        // values whose window stops below level 0 have unknown polar tails,
        // so their residue (hence this anchor's coefficient) is unknown
        let mut window = self.anchor_window;
        for (v_idx, u_series) in &self.terms {
            if u_series.valid_to() < 0 {
                window = window.min(v_idx.m);
                continue;
            }
            let r = residue(&OneForm::new(u_series.clone()));
            if !r.is_zero() {
                acc = acc.add(&PhiSeries::basis(&self.cfg, *v_idx).scalar_mul(&r));
            }
        }
        Ok(acc.truncate_window(window))
    }

    /// Left contraction `T_l`: like `T_r`, the residue is taken in the `u`
    /// slot and the `v` slot is kept; the difference is the orientation of
    /// the input.  A left series anchors on `u`, so here the residues run
    /// over anchor keys.  Tail terms have `u`-level `>= tail_anchor`, so
    /// exactness needs `tail_anchor >= 0` (regular tails have no residue);
    /// the same applies to keys beyond `anchor_window`.
    pub fn contract_l(&self) -> Result<PhiSeries, SigmaError> {
        if self.orientation != Orientation::Left {
            return Err(SigmaError::OrientationMismatch(
                "left contraction needs a left-oriented series".into(),
            ));
        }
        if self.tail_anchor < 0 {
            return Err(SigmaError::WindowTooSmall {
                needed: 0,
                have: self.tail_anchor,
            });
        }
        if self.anchor_window < 0 {
            return Err(SigmaError::WindowTooSmall {
                needed: 0,
                have: self.anchor_window,
            });
        }
        let mut acc = PhiSeries::zero(&self.cfg);
        for (u_idx, v_series) in &self.terms {
            let r = residue(&OneForm::new(PhiSeries::basis(&self.cfg, *u_idx)));
            if !r.is_zero() {
                acc = acc.add(&v_series.scalar_mul(&r));
            }
        }
        Ok(acc)
    }

    /// All stored terms at co-slot depth at least `d` (used to assert that a
    /// truncation identity holds up to pure tail).
    pub fn is_pure_tail_beyond(&self, d: i64) -> bool {
        self.terms
            .values()
            .all(|v| v.max_level().map(|m| m <= -d).unwrap_or(true))
    }

    /// Decompose into monomial data: bivariate polynomial numerator plus phi
    /// pole orders `(A, B)` in the two slots (`Poly` orientation only).
    fn to_bivar(&self) -> Result<(Bivar, i64, i64), SigmaError> {
        if self.orientation != Orientation::Poly {
            return Err(SigmaError::OrientationMismatch(
                "monomial decomposition needs a poly series".into(),
            ));
        }
        let mut pole_u: i64 = 0;
        let mut pole_v: i64 = 0;
        let mut parts: Vec<(TPoly, i64, TPoly, i64)> = Vec::new();
        for (idx, val) in &self.terms {
            let (pu, eu) = PhiSeries::basis(&self.cfg, *idx).to_monomials();
            let (pv, ev) = val.to_monomials();
            pole_u = pole_u.max(-eu);
            pole_v = pole_v.max(-ev);
            parts.push((pu, eu, pv, ev));
        }
        let phi = self.cfg.phi();
        let mut acc = Bivar::zero(self.cfg.nvars());
        for (pu, eu, pv, ev) in parts {
            let fu = pu.mul(&phi.pow((eu + pole_u) as u32));
            let fv = pv.mul(&phi.pow((ev + pole_v) as u32));
            acc = acc.add(&Bivar::from_product(&fu, &fv));
        }
        Ok((acc, pole_u, pole_v))
    }

    /// Rebuild a `Poly` series from bivariate monomial data, with a window cap.
    fn from_bivar(
        cfg: &SigmaConfig,
        b: &Bivar,
        pole_u: i64,
        pole_v: i64,
        anchor_window: i64,
    ) -> TwoVarSeries {
        let mut terms: BTreeMap<BasisIndex, PhiSeries> = BTreeMap::new();
        for (du, pv) in b.rows() {
            if pv.is_zero() {
                continue;
            }
            let mut cs = vec![Scalar::zero(cfg.nvars()); du + 1];
            cs[du] = Scalar::one(cfg.nvars());
            let u_poly = TPoly::from_coeffs(cfg.nvars(), cs);
            let u_series = PhiSeries::from_monomials(cfg, &u_poly, -pole_u);
            let v_series = PhiSeries::from_monomials(cfg, pv, -pole_v);
            for (idx, c) in u_series.terms() {
                merge_term(&mut terms, *idx, v_series.scalar_mul(c));
            }
        }
        TwoVarSeries::new_raw(
            cfg.clone(),
            Orientation::Poly,
            terms,
            NO_TAIL,
            NO_TAIL,
            anchor_window,
        )
    }

    /// Normalize a localized element `(numerator, k)` representing
    /// `numerator * delta^-k`: divide out every common power of `delta`.
    /// Returns the reduced `(numerator', k')`.
    pub fn localize_diagonal(
        num: &TwoVarSeries,
        k: u32,
    ) -> Result<(TwoVarSeries, u32), SigmaError> {
        let mut k = k;
        let mut cur = num.clone();
        while k > 0 {
            let (b, pu, pv) = cur.to_bivar()?;
            match b.div_delta() {
                Some(q) => {
                    cur = TwoVarSeries::from_bivar(&cur.cfg, &q, pu, pv, cur.anchor_window);
                    k -= 1;
                }
                None => break,
            }
        }
        Ok((cur, k))
    }

    /// Multiply a `Poly` series by `delta^j`.
    pub fn mul_delta_pow(&self, j: u32) -> Result<TwoVarSeries, SigmaError> {
        let mut acc = self.clone();
        let d = Self::delta(&self.cfg);
        for _ in 0..j {
            acc = Self::mul_two(&acc, &d)?;
        }
        Ok(acc)
    }
}

/// An element `numerator * delta^-k` of the diagonal localization, kept in
/// normalized form (no common power of `delta` between numerator and pole).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedDiag {
    num: TwoVarSeries,
    k: u32,
}

impl LocalizedDiag {
    pub fn new(num: TwoVarSeries, k: u32) -> Result<LocalizedDiag, SigmaError> {
        let (num, k) = TwoVarSeries::localize_diagonal(&num, k)?;
        Ok(LocalizedDiag { num, k })
    }

    pub fn numerator(&self) -> &TwoVarSeries {
        &self.num
    }

    pub fn pole(&self) -> u32 {
        self.k
    }

    pub fn add(&self, other: &LocalizedDiag) -> Result<LocalizedDiag, SigmaError> {
        let k = self.k.max(other.k);
        let a = self.num.mul_delta_pow(k - self.k)?;
        let b = other.num.mul_delta_pow(k - other.k)?;
        LocalizedDiag::new(a.add(&b)?, k)
    }

    pub fn mul(&self, other: &LocalizedDiag) -> Result<LocalizedDiag, SigmaError> {
        LocalizedDiag::new(
            TwoVarSeries::mul_two(&self.num, &other.num)?,
            self.k + other.k,
        )
    }

    /// Right expansion to the given depth (`numerator * exp_r(k)`, or just a
    /// promoted numerator when the pole vanishes).
    pub fn expand_right(&self, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        if self.k == 0 {
            return Ok(self.num.promote(Orientation::Right));
        }
        let e = TwoVarSeries::exp_r(self.num.config(), self.k, depth)?;
        TwoVarSeries::mul_two(&self.num, &e)
    }

    /// Left expansion to the given depth.
    pub fn expand_left(&self, depth: i64) -> Result<TwoVarSeries, SigmaError> {
        if self.k == 0 {
            return Ok(self.num.promote(Orientation::Left));
        }
        let e = TwoVarSeries::exp_l(self.num.config(), self.k, depth)?;
        TwoVarSeries::mul_two(&self.num, &e)
    }
}

/// The two contractions and the diagonal restriction of the Cauchy identity
/// `T_r(f * exp_r(1)) - T_l(f * exp_l(1)) = diag(f)`, computed at expansion
/// depth `m_pair`.  The identity holds exactly on the returned windows.
pub struct CauchySides {
    pub lhs_r: PhiSeries,
    pub lhs_l: PhiSeries,
    pub rhs: PhiSeries,
}

pub fn cauchy_check(f: &TwoVarSeries, m_pair: i64) -> Result<CauchySides, SigmaError> {
    if f.orientation() != Orientation::Poly {
        return Err(SigmaError::OrientationMismatch(
            "cauchy check needs a poly tensor".into(),
        ));
    }
    let cfg = f.config().clone();
    let er = TwoVarSeries::exp_r1(&cfg, m_pair)?;
    let el = TwoVarSeries::exp_l1(&cfg, m_pair)?;
    let lhs_r = TwoVarSeries::mul_two(f, &er)?.contract_r()?;
    let lhs_l = TwoVarSeries::mul_two(f, &el)?.contract_l()?;
    let rhs = f.diag_restrict()?;
    Ok(CauchySides { lhs_r, lhs_l, rhs })
}

/// Add `contrib` into the slot for `idx`, merging windows via series
/// addition.
fn merge_term(terms: &mut BTreeMap<BasisIndex, PhiSeries>, idx: BasisIndex, contrib: PhiSeries) {
    if contrib.is_zero() && contrib.valid_to() >= contrib.config().truncation() {
        return;
    }
    match terms.get_mut(&idx) {
        Some(v) => {
            *v = v.add(&contrib);
        }
        None => {
            terms.insert(idx, contrib);
        }
    }
}

/// Remove stored levels below `level` from a series (they move conceptually
/// into a tail tracked by the caller).
fn drop_below(v: &PhiSeries, level: i64) -> PhiSeries {
    PhiSeries::from_terms(
        v.config(),
        v.terms()
            .filter(|(idx, _)| idx.m >= level)
            .map(|(idx, c)| (*idx, c.clone())),
        v.valid_to(),
    )
}

// ---------------------------------------------------------------------------
// Dense bivariate polynomials (for exact division by the diagonal kernel)
// ---------------------------------------------------------------------------

/// Dense bivariate polynomial: `rows[d]` is the coefficient of `u^d` as a
/// polynomial in `v`.
#[derive(Clone, Debug, PartialEq)]
struct Bivar {
    nvars: usize,
    rows: Vec<TPoly>,
}

impl Bivar {
    fn zero(nvars: usize) -> Bivar {
        Bivar {
            nvars,
            rows: Vec::new(),
        }
    }

    fn from_product(fu: &TPoly, fv: &TPoly) -> Bivar {
        let nvars = fu.nvars();
        let rows = fu
            .coeffs()
            .iter()
            .map(|c| fv.scalar_mul(c))
            .collect();
        let mut b = Bivar { nvars, rows };
        b.trim();
        b
    }

    fn trim(&mut self) {
        while self.rows.last().map(|r| r.is_zero()).unwrap_or(false) {
            self.rows.pop();
        }
    }

    fn add(&self, other: &Bivar) -> Bivar {
        let mut rows = Vec::with_capacity(self.rows.len().max(other.rows.len()));
        for d in 0..self.rows.len().max(other.rows.len()) {
            let a = self
                .rows
                .get(d)
                .cloned()
                .unwrap_or_else(|| TPoly::zero(self.nvars));
            let b = other
                .rows
                .get(d)
                .cloned()
                .unwrap_or_else(|| TPoly::zero(self.nvars));
            rows.push(a.add(&b));
        }
        let mut out = Bivar {
            nvars: self.nvars,
            rows,
        };
        out.trim();
        out
    }

    fn rows(&self) -> impl Iterator<Item = (usize, &TPoly)> {
        self.rows.iter().enumerate()
    }

    /// Exact division by `(u - v)`, or `None` if the diagonal restriction is
    /// nonzero.  Standard synthetic division in `u` with "root" `v`.
    fn div_delta(&self) -> Option<Bivar> {
        if self.rows.is_empty() {
            return Some(self.clone());
        }
        let d = self.rows.len() - 1;
        let mut q = vec![TPoly::zero(self.nvars); d];
        let mut carry = self.rows[d].clone();
        let shift = TPoly::t(self.nvars);
        for j in (0..d).rev() {
            q[j] = carry.clone();
            carry = self.rows[j].add(&carry.mul(&shift));
        }
        if carry.is_zero() {
            let mut out = Bivar {
                nvars: self.nvars,
                rows: q,
            };
            out.trim();
            Some(out)
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Three-variable numerators with diagonal poles
// ---------------------------------------------------------------------------

/// Finite sum of decomposable triples `f (x) g (x) h` (no canonical merge;
/// used as numerators for three-slot evaluations).
#[derive(Clone, Debug)]
pub struct ThreeVarPoly {
    cfg: SigmaConfig,
    pub terms: Vec<(PhiSeries, PhiSeries, PhiSeries)>,
}

impl ThreeVarPoly {
    pub fn new(cfg: &SigmaConfig, terms: Vec<(PhiSeries, PhiSeries, PhiSeries)>) -> ThreeVarPoly {
        ThreeVarPoly {
            cfg: cfg.clone(),
            terms,
        }
    }

    pub fn tensor(f: &PhiSeries, g: &PhiSeries, h: &PhiSeries) -> ThreeVarPoly {
        ThreeVarPoly {
            cfg: f.config().clone(),
            terms: vec![(f.clone(), g.clone(), h.clone())],
        }
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn add(&self, other: &ThreeVarPoly) -> ThreeVarPoly {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        ThreeVarPoly {
            cfg: self.cfg.clone(),
            terms,
        }
    }

    pub fn scalar_mul(&self, s: &Scalar) -> ThreeVarPoly {
        ThreeVarPoly {
            cfg: self.cfg.clone(),
            terms: self
                .terms
                .iter()
                .map(|(a, b, c)| (a.scalar_mul(s), b.clone(), c.clone()))
                .collect(),
        }
    }

    /// Multiply one slot (0, 1, or 2) by a series.
    pub fn mul_slot(&self, slot: usize, f: &PhiSeries) -> ThreeVarPoly {
        ThreeVarPoly {
            cfg: self.cfg.clone(),
            terms: self
                .terms
                .iter()
                .map(|(a, b, c)| match slot {
                    0 => (a.mul(f), b.clone(), c.clone()),
                    1 => (a.clone(), b.mul(f), c.clone()),
                    2 => (a.clone(), b.clone(), c.mul(f)),
                    _ => panic!("slot out of range"),
                })
                .collect(),
        }
    }

    /// Derivative of one slot.
    pub fn d_slot(&self, slot: usize) -> ThreeVarPoly {
        ThreeVarPoly {
            cfg: self.cfg.clone(),
            terms: self
                .terms
                .iter()
                .map(|(a, b, c)| match slot {
                    0 => (a.d_dt(), b.clone(), c.clone()),
                    1 => (a.clone(), b.d_dt(), c.clone()),
                    2 => (a.clone(), b.clone(), c.d_dt()),
                    _ => panic!("slot out of range"),
                })
                .collect(),
        }
    }

    /// Multiply by `t_a - t_b` for slots `a != b`.
    pub fn mul_delta(&self, a: usize, b: usize) -> ThreeVarPoly {
        let t = PhiSeries::coordinate(&self.cfg);
        self.mul_slot(a, &t).add(&self.mul_slot(b, &t).scalar_mul(
            &Scalar::from_int(self.cfg.nvars(), -1),
        ))
    }

    /// Canonical anchored form: expand the first two slots in the basis and
    /// merge; the value is the third-slot series.  Two numerators are equal
    /// as three-variable functions iff these maps agree.
    pub fn canonical_terms(&self) -> BTreeMap<(BasisIndex, BasisIndex), PhiSeries> {
        let mut out: BTreeMap<(BasisIndex, BasisIndex), PhiSeries> = BTreeMap::new();
        for (a, b, c) in &self.terms {
            for (ia, ca) in a.terms() {
                for (ib, cb) in b.terms() {
                    let contrib = c.scalar_mul(&ca.mul(cb));
                    if contrib.is_zero() && contrib.valid_to() >= self.cfg.truncation() {
                        continue;
                    }
                    match out.get_mut(&(*ia, *ib)) {
                        Some(v) => *v = v.add(&contrib),
                        None => {
                            out.insert((*ia, *ib), contrib);
                        }
                    }
                }
            }
        }
        out.retain(|_, v| !v.is_zero() || v.valid_to() < self.cfg.truncation());
        out
    }

    /// Restrict slots 1 and 2 (`v`-pair) to the diagonal: returns a two-slot
    /// `Poly` series in `(slot0, merged)`.
    pub fn restrict_23(&self) -> TwoVarSeries {
        let pairs: Vec<(PhiSeries, PhiSeries)> = self
            .terms
            .iter()
            .map(|(a, b, c)| (a.clone(), b.mul(c)))
            .collect();
        TwoVarSeries::poly_from_pairs(&self.cfg, &pairs)
    }
}

/// `numerator * delta_12^-k12 * delta_13^-k13 * delta_23^-k23`.
#[derive(Clone, Debug)]
pub struct ThreeVarPole {
    pub num: ThreeVarPoly,
    pub k12: u32,
    pub k13: u32,
    pub k23: u32,
}

impl ThreeVarPole {
    pub fn regular(num: ThreeVarPoly) -> ThreeVarPole {
        ThreeVarPole {
            num,
            k12: 0,
            k13: 0,
            k23: 0,
        }
    }

    /// Partial derivative with respect to the coordinate of `slot` (0-based),
    /// returned over the common denominator with each exponent raised by one.
    /// With `d_a delta_ab = +1` for `a < b` and `d_b delta_ab = -1`:
    /// raising all three exponents and writing `N' = d(N) d12 d13 d23 +
    /// (sign k) N d(delta) ...` keeps a single pole profile.
    pub fn d_slot(&self, slot: usize) -> ThreeVarPole {
        let cfg = self.num.config().clone();
        // numerator derivative term: d(N) * d12 d13 d23
        let mut acc = self
            .num
            .d_slot(slot)
            .mul_delta(0, 1)
            .mul_delta(0, 2)
            .mul_delta(1, 2);
        // pole terms: for each pair (a,b) with exponent k, the derivative of
        // delta_ab^-k contributes sign * k * delta_ab^-(k+1), where sign is
        // +1 if slot == a, -1 if slot == b, 0 otherwise.
        let pairs = [(0usize, 1usize, self.k12), (0, 2, self.k13), (1, 2, self.k23)];
        for (a, b, k) in pairs {
            if k == 0 {
                continue;
            }
            let sign = if slot == a {
                1i64
            } else if slot == b {
                -1
            } else {
                0
            };
            if sign == 0 {
                continue;
            }
            // contribution: -sign * k * N * (other two deltas) ... with the
            // common-denominator bookkeeping: d/dx [delta^-k] = -k delta^-k-1
            // * d(delta)/dx = (-k * sign) delta^-k-1.  Over the common
            // denominator (all exponents +1) this term's numerator is
            // (-k * sign) * N * delta_cd * delta_ef (the two other kernels).
            let mut term = self.num.clone();
            for (c, d, _) in pairs {
                if (c, d) != (a, b) {
                    term = term.mul_delta(c, d);
                }
            }
            acc = acc.add(&term.scalar_mul(&Scalar::from_int(cfg.nvars(), -(k as i64) * sign)));
        }
        ThreeVarPole {
            num: acc,
            k12: self.k12 + 1,
            k13: self.k13 + 1,
            k23: self.k23 + 1,
        }
    }

    /// Push slots 2 and 3 to their diagonal: requires `k23 = 0`; the result
    /// is a localized two-slot element `(numerator, k12 + k13)`.
    pub fn restrict_23(&self) -> Result<(TwoVarSeries, u32), SigmaError> {
        if self.k23 != 0 {
            return Err(SigmaError::Other(
                "cannot restrict slots 2,3 with a pole between them".into(),
            ));
        }
        Ok((self.num.restrict_23(), self.k12 + self.k13))
    }
}

//! `U`-valued fields and multifields: certified evaluation trees, the
//! ordered products and the diagonal bracket, locality certification, the
//! diagonal local model, structural axiom checkers and generation of basic
//! layers.
//!
//! # Certified evaluation
//!
//! A field is a linear functional on sections with values in a coefficient
//! algebra; a 2-field eats two-slot tensors, possibly with poles along the
//! diagonal.  Every evaluation happens at a finite truncation, so computed
//! values come as [`Certified`] pairs `(value, level)`: the discarded part
//! is guaranteed to lie in the level-`level` left ideal of the algebra
//! ([`EXACT_LEVEL`] when nothing was discarded).  The error calculus rests
//! on the ideal-chain contract of [`CoeffAlgebra`]:
//!
//! * left multiplication preserves every ideal level;
//! * right multiplication by `x` preserves levels `>= creation_depth(x)`;
//! * the level-`K` ideal of an instance is zero for `K = truncation_level()`,
//!   so certified membership at level `K` is exactness.
//!
//! Working in the truncated coefficient algebra means the instance itself is
//! the model: deep basis inputs evaluate to exactly zero there, which is what
//! lets finite windows certify infinite-tail contractions.
//!
//! Evaluation trees are immutable and shared (`Arc`); each node memoizes its
//! basis evaluations behind a mutex, so the checkers can fan out over basis
//! inputs from several threads.

use crate::coeff::{CoeffAlgebra, Heisenberg};
use crate::residue::residue;
use crate::scalar::{parse_scalar, Scalar};
use crate::sigma::{
    BasisIndex, OneForm, PhiSeries, PhiSeriesRepr, SigmaConfig, SigmaError, Window,
};
use crate::twovar::{LocalizedDiag, Orientation, ThreeVarPole, ThreeVarPoly, TwoVarSeries, NO_TAIL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Certification level meaning "no part of the value was discarded".
pub const EXACT_LEVEL: i64 = i64::MAX / 4;

/// Creation-depth bound standing for "no finite bound is known".
const CB_UNBOUNDED: i64 = i64::MAX / 4;

/// Levels and cuts at or beyond this threshold are treated as infinite.
const BIG: i64 = i64::MAX / 8;

/// Saturating level shift that preserves the infinite sentinels.
fn lvl_add(a: i64, b: i64) -> i64 {
    if a >= BIG && b <= -BIG || b >= BIG && a <= -BIG {
        0
    } else if a >= BIG || b >= BIG {
        NO_TAIL
    } else {
        a.saturating_add(b).clamp(-NO_TAIL, NO_TAIL)
    }
}

/// Error level of `eps * x` given the error level `e` of `eps` and a bound
/// `cd` on the creation depth of `x`: right multiplication preserves the
/// ideal only from depth `cd` on, so shallower certificates are lost.
fn gate(e: i64, cd: i64) -> i64 {
    if e >= EXACT_LEVEL {
        EXACT_LEVEL
    } else if cd <= 0 || e >= cd {
        e
    } else {
        0
    }
}

fn binom(n: u32, r: u32) -> i64 {
    let mut acc = 1i64;
    for k in 0..r.min(n - r) {
        acc = acc * (n - k) as i64 / (k + 1) as i64;
    }
    acc
}

fn factorial(n: u32) -> i64 {
    (1..=n as i64).product::<i64>().max(1)
}

// ---------------------------------------------------------------------------
// Certified values
// ---------------------------------------------------------------------------

/// A computed algebra element together with the ideal level certifying its
/// distance from the exact value: `true - value` lies in the level-`level`
/// left ideal.  Levels `<= 0` certify nothing.
#[derive(Clone, Debug)]
pub struct Certified<E> {
    pub value: E,
    pub level: i64,
}

impl<E> Certified<E> {
    pub fn exact(value: E) -> Certified<E> {
        Certified {
            value,
            level: EXACT_LEVEL,
        }
    }

    pub fn with_level(value: E, level: i64) -> Certified<E> {
        Certified { value, level }
    }

    pub fn is_exact(&self) -> bool {
        self.level >= EXACT_LEVEL
    }

    /// Weaken the certificate to at most `level`.
    pub fn cap(mut self, level: i64) -> Certified<E> {
        self.level = self.level.min(level);
        self
    }
}

fn cert_add<A: CoeffAlgebra>(
    alg: &A,
    a: &Certified<A::Elem>,
    b: &Certified<A::Elem>,
) -> Certified<A::Elem> {
    Certified {
        value: alg.add(&a.value, &b.value),
        level: a.level.min(b.level),
    }
}

fn cert_scale<A: CoeffAlgebra>(
    alg: &A,
    s: &Scalar,
    a: &Certified<A::Elem>,
) -> Certified<A::Elem> {
    Certified {
        value: alg.scalar_mul(s, &a.value),
        level: a.level,
    }
}

fn cert_neg<A: CoeffAlgebra>(alg: &A, a: &Certified<A::Elem>) -> Certified<A::Elem> {
    Certified {
        value: alg.neg(&a.value),
        level: a.level,
    }
}

/// Product certificate.  Writing the true factors as `value + eps`, the error
/// of the product is `a.value * eps_b` (left multiplication: stays at
/// `b.level`), plus `eps_a * b_true = eps_a * b.value + eps_a * eps_b`: the
/// first summand is right multiplication by the computed `b.value` and is
/// gated by its creation depth, the second is absorbed at `b.level` because
/// left ideals absorb arbitrary left factors.
fn cert_mul<A: CoeffAlgebra>(
    alg: &A,
    a: &Certified<A::Elem>,
    b: &Certified<A::Elem>,
) -> Certified<A::Elem> {
    if a.is_exact() && alg.is_zero(&a.value) || b.is_exact() && alg.is_zero(&b.value) {
        return Certified::exact(alg.zero());
    }
    let value = alg.mul(&a.value, &b.value);
    let level = b
        .level
        .min(gate(a.level, alg.creation_depth(&b.value)));
    Certified { value, level }
}

/// Exactness of a certified value in the truncated model: the computed part
/// lies in the level-`k` ideal and the discarded part is certified to.
pub fn certified_zero<A: CoeffAlgebra>(alg: &A, k: i64, c: &Certified<A::Elem>) -> bool {
    c.level >= k && alg.is_zero_at_level(k, &c.value)
}

// ---------------------------------------------------------------------------
// Fields (one slot)
// ---------------------------------------------------------------------------

enum FieldNode<A: CoeffAlgebra> {
    /// The distinguished generator field `f -> beta(f)` of the instance.
    Beta,
    /// `f -> residue(f * omega) * elem`; with `elem = 1` this is the unit
    /// field of the density `omega`.
    Constant { elem: A::Elem, omega: OneForm },
    /// Right action of a section: `(X . g)(f) = X(g f)`.
    MulFn { base: Field<A>, g: PhiSeries },
    /// Right action of the derivation: `(X . d)(f) = X(f')`.
    Dt { base: Field<A> },
    /// Scalar-linear combination.
    Lin { terms: Vec<(Scalar, Field<A>)> },
    /// First-slot restriction of a 2-field: `R(Z)(f) = Z(1 (x) f)`.
    RMap { z: TwoField<A> },
    /// Top jet probe of a 2-field along the diagonal:
    /// `(1/j!) sum_r (-1)^r C(j,r) Z(t^{j-r} (x) t^r f)`.  For a 2-field
    /// supported on the diagonal to order `<= j` this extracts the order-`j`
    /// component of the local model.
    JetProbe { z: TwoField<A>, j: u32 },
}

/// A certified-evaluation field over the coefficient algebra `A`.
pub struct Field<A: CoeffAlgebra> {
    cfg: SigmaConfig,
    alg: A,
    node: Arc<FieldNode<A>>,
    memo: Arc<Mutex<BTreeMap<BasisIndex, Certified<A::Elem>>>>,
}

impl<A: CoeffAlgebra> Clone for Field<A> {
    fn clone(&self) -> Self {
        Field {
            cfg: self.cfg.clone(),
            alg: self.alg.clone(),
            node: self.node.clone(),
            memo: self.memo.clone(),
        }
    }
}

impl<A: CoeffAlgebra> fmt::Debug for Field<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.describe())
    }
}

impl<A: CoeffAlgebra> Field<A> {
    fn from_node(cfg: &SigmaConfig, alg: &A, node: FieldNode<A>) -> Field<A> {
        Field {
            cfg: cfg.clone(),
            alg: alg.clone(),
            node: Arc::new(node),
            memo: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn algebra(&self) -> &A {
        &self.alg
    }

    /// The generator field of the instance; the algebra must carry one.
    pub fn beta(cfg: &SigmaConfig, alg: &A) -> Field<A> {
        assert!(
            alg.generator_map(&PhiSeries::zero(cfg)).is_some(),
            "coefficient algebra carries no generator map"
        );
        Self::from_node(cfg, alg, FieldNode::Beta)
    }

    /// `f -> residue(f * omega) * elem` for a regular density.
    pub fn constant(cfg: &SigmaConfig, alg: &A, elem: A::Elem, omega: OneForm) -> Field<A> {
        assert!(*omega.density.config() == *cfg, "config mismatch");
        Self::from_node(cfg, alg, FieldNode::Constant { elem, omega })
    }

    /// The unit field of the density `omega`: `f -> residue(f * omega) * 1`.
    pub fn unit(cfg: &SigmaConfig, alg: &A, omega: OneForm) -> Field<A> {
        Self::constant(cfg, alg, alg.one(), omega)
    }

    /// The unit field of the canonical density `dt`.
    pub fn unit_dt(cfg: &SigmaConfig, alg: &A) -> Field<A> {
        Self::unit(cfg, alg, OneForm::dt(cfg))
    }

    pub fn zero(cfg: &SigmaConfig, alg: &A) -> Field<A> {
        Self::from_node(cfg, alg, FieldNode::Lin { terms: Vec::new() })
    }

    /// Structural test for the zero built by [`Field::zero`].
    pub fn is_structural_zero(&self) -> bool {
        matches!(&*self.node, FieldNode::Lin { terms } if terms.is_empty())
    }

    /// Right action of the section `g`.
    pub fn act_fn(&self, g: &PhiSeries) -> Field<A> {
        assert!(*g.config() == self.cfg, "config mismatch");
        Self::from_node(
            &self.cfg,
            &self.alg,
            FieldNode::MulFn {
                base: self.clone(),
                g: g.clone(),
            },
        )
    }

    /// Right action of the derivation.
    pub fn act_dt(&self) -> Field<A> {
        Self::from_node(&self.cfg, &self.alg, FieldNode::Dt { base: self.clone() })
    }

    pub fn lin(cfg: &SigmaConfig, alg: &A, terms: Vec<(Scalar, Field<A>)>) -> Field<A> {
        Self::from_node(cfg, alg, FieldNode::Lin { terms })
    }

    pub fn scalar_mul(&self, s: &Scalar) -> Field<A> {
        Self::lin(&self.cfg, &self.alg, vec![(s.clone(), self.clone())])
    }

    pub fn add(&self, other: &Field<A>) -> Field<A> {
        let one = Scalar::one(self.cfg.nvars());
        Self::lin(
            &self.cfg,
            &self.alg,
            vec![(one.clone(), self.clone()), (one, other.clone())],
        )
    }

    pub fn sub(&self, other: &Field<A>) -> Field<A> {
        let nv = self.cfg.nvars();
        Self::lin(
            &self.cfg,
            &self.alg,
            vec![
                (Scalar::one(nv), self.clone()),
                (Scalar::from_int(nv, -1), other.clone()),
            ],
        )
    }

    pub fn neg(&self) -> Field<A> {
        self.scalar_mul(&Scalar::from_int(self.cfg.nvars(), -1))
    }

    /// First-slot restriction of a 2-field.
    pub fn r_map(z: &TwoField<A>) -> Field<A> {
        Self::from_node(&z.cfg, &z.alg, FieldNode::RMap { z: z.clone() })
    }

    /// `R` of the bracket with a pure diagonal pole of order `k`.
    pub fn r_mu(x: &Field<A>, y: &Field<A>, k: u32) -> Result<Field<A>, SigmaError> {
        let pole = LocalizedDiag::new(TwoVarSeries::one(&x.cfg), k)?;
        Ok(Self::r_map(&TwoField::mu(x, y, &pole)?))
    }

    fn jet_probe(z: &TwoField<A>, j: u32) -> Field<A> {
        Self::from_node(&z.cfg, &z.alg, FieldNode::JetProbe { z: z.clone(), j })
    }

    pub fn describe(&self) -> String {
        match &*self.node {
            FieldNode::Beta => "beta".into(),
            FieldNode::Constant { .. } => "const".into(),
            FieldNode::MulFn { base, .. } => format!("({}).g", base.describe()),
            FieldNode::Dt { base } => format!("({}).d", base.describe()),
            FieldNode::Lin { terms } => format!("lin[{}]", terms.len()),
            FieldNode::RMap { z } => format!("R({})", z.describe()),
            FieldNode::JetProbe { z, j } => format!("jet{}({})", j, z.describe()),
        }
    }

    /// Certified evaluation on an arbitrary stored section.
    pub fn eval(&self, f: &PhiSeries) -> Result<Certified<A::Elem>, SigmaError> {
        let mut acc = Certified::exact(self.alg.zero());
        for (idx, c) in f.terms() {
            let v = self.eval_basis(*idx)?;
            acc = cert_add(&self.alg, &acc, &cert_scale(&self.alg, c, &v));
        }
        Ok(acc.cap(self.ann_level(f.valid_to())))
    }

    /// Memoized certified evaluation on a basis element.
    pub fn eval_basis(&self, idx: BasisIndex) -> Result<Certified<A::Elem>, SigmaError> {
        if let Some(v) = self.memo.lock().unwrap().get(&idx) {
            return Ok(v.clone());
        }
        let v = self.eval_basis_raw(idx)?;
        self.memo.lock().unwrap().insert(idx, v.clone());
        Ok(v)
    }

    fn eval_basis_raw(&self, idx: BasisIndex) -> Result<Certified<A::Elem>, SigmaError> {
        let b = PhiSeries::basis(&self.cfg, idx);
        match &*self.node {
            FieldNode::Beta => {
                let elem = self
                    .alg
                    .generator_map(&b)
                    .expect("generator map vanished");
                Ok(Certified::exact(elem))
            }
            FieldNode::Constant { elem, omega } => {
                let form = omega.act_fn(&b);
                let r = residue(&form);
                let level = if form.density.valid_to() >= 0 {
                    EXACT_LEVEL
                } else {
                    0
                };
                Ok(Certified::with_level(
                    self.alg.scalar_mul(&r, elem),
                    level,
                ))
            }
            FieldNode::MulFn { base, g } => base.eval(&g.mul(&b)),
            FieldNode::Dt { base } => base.eval(&b.d_dt()),
            FieldNode::Lin { terms } => {
                let mut acc = Certified::exact(self.alg.zero());
                for (s, f) in terms {
                    let v = f.eval_basis(idx)?;
                    acc = cert_add(&self.alg, &acc, &cert_scale(&self.alg, s, &v));
                }
                Ok(acc)
            }
            FieldNode::RMap { z } => {
                let t = TwoVarSeries::tensor(&PhiSeries::one(&self.cfg), &b);
                z.eval_pair(&t)
            }
            FieldNode::JetProbe { z, j } => {
                let j = *j;
                let t = PhiSeries::coordinate(&self.cfg);
                let mut tp = vec![PhiSeries::one(&self.cfg)];
                for _ in 0..j {
                    tp.push(tp.last().unwrap().mul(&t));
                }
                let nv = self.cfg.nvars();
                let mut acc = Certified::exact(self.alg.zero());
                for r in 0..=j {
                    let test =
                        TwoVarSeries::tensor(&tp[(j - r) as usize], &tp[r as usize].mul(&b));
                    let v = z.eval_pair(&test)?;
                    let sign = if r % 2 == 0 { 1 } else { -1 };
                    let c = Scalar::from_int(nv, sign * binom(j, r));
                    acc = cert_add(&self.alg, &acc, &cert_scale(&self.alg, &c, &v));
                }
                let inv = Scalar::from_ratio(nv, 1, factorial(j));
                Ok(cert_scale(&self.alg, &inv, &acc))
            }
        }
    }

    /// Certified annihilation bound: on any input supported at levels
    /// `>= k` the model value lies in the level-`ann_level(k)` left ideal
    /// (`EXACT_LEVEL` when it vanishes identically in the instance).
    pub fn ann_level(&self, k: i64) -> i64 {
        if k >= BIG {
            return EXACT_LEVEL;
        }
        let k = k.max(-BIG);
        match &*self.node {
            FieldNode::Beta => {
                if k >= self.alg.truncation_level() {
                    EXACT_LEVEL
                } else {
                    k
                }
            }
            FieldNode::Constant { omega, .. } => {
                // the residue of `density * input` vanishes identically once
                // the product stays at regular levels
                if lvl_add(k, omega.density.min_level()) >= 0 {
                    EXACT_LEVEL
                } else {
                    0
                }
            }
            FieldNode::MulFn { base, g } => base.ann_level(lvl_add(k, g.min_level())),
            FieldNode::Dt { base } => base.ann_level(lvl_add(k, -1)),
            FieldNode::Lin { terms } => terms
                .iter()
                .map(|(_, f)| f.ann_level(k))
                .min()
                .unwrap_or(EXACT_LEVEL),
            FieldNode::RMap { z } => z.ann_pair(0, k),
            FieldNode::JetProbe { z, .. } => z.ann_pair(0, k),
        }
    }

    /// Certified bound on the creation depth of values taken on inputs
    /// supported at levels `>= min_level` (`CB_UNBOUNDED` when no finite
    /// bound is known).
    pub fn creation_bound(&self, min_level: i64) -> i64 {
        if min_level <= -BIG {
            return CB_UNBOUNDED;
        }
        match &*self.node {
            FieldNode::Beta => (-min_level).max(0),
            FieldNode::Constant { elem, .. } => self.alg.creation_depth(elem),
            FieldNode::MulFn { base, g } => base.creation_bound(lvl_add(min_level, g.min_level())),
            FieldNode::Dt { base } => base.creation_bound(lvl_add(min_level, -1)),
            FieldNode::Lin { terms } => terms
                .iter()
                .map(|(_, f)| f.creation_bound(min_level))
                .max()
                .unwrap_or(0),
            FieldNode::RMap { z } => z.creation_bound2(0, min_level),
            FieldNode::JetProbe { z, .. } => z.creation_bound2(0, min_level),
        }
    }
}

// ---------------------------------------------------------------------------
// 2-fields
// ---------------------------------------------------------------------------

enum TwoFieldNode<A: CoeffAlgebra> {
    /// Right-ordered product: deep first slot multiplied from the left.
    MR { x: Field<A>, y: Field<A> },
    /// Left-ordered product: deep first slot multiplied from the right.
    ML { x: Field<A>, y: Field<A> },
    /// The bracket `m_r - m_l` of `x (x) y` premultiplied by a localized
    /// diagonal pole.  `exp` caches the right/left expansions of the pole at
    /// the working depth.
    Mu {
        x: Field<A>,
        y: Field<A>,
        pole: LocalizedDiag,
        exp: OnceLock<(TwoVarSeries, TwoVarSeries)>,
    },
    /// Diagonal pushforward of a field: `(f (x) g) -> x(f g)`.
    DiagPush { x: Field<A> },
    /// Diagonal local model `sum_j X_j d^j`:
    /// `(f (x) g) -> sum_j X_j(g * f^{(j)})`.
    Jet { components: Vec<Field<A>> },
    Lin { terms: Vec<(Scalar, TwoField<A>)> },
}

/// A certified-evaluation 2-field; polar arguments are accepted by bracket
/// nodes and linear combinations of them.
pub struct TwoField<A: CoeffAlgebra> {
    cfg: SigmaConfig,
    alg: A,
    node: Arc<TwoFieldNode<A>>,
    raw_exp: Arc<Mutex<BTreeMap<(u32, bool), Arc<TwoVarSeries>>>>,
    memo_pair: Arc<Mutex<BTreeMap<(BasisIndex, BasisIndex, u32), Certified<A::Elem>>>>,
    ann_memo: Arc<Mutex<BTreeMap<(i64, i64, u32), i64>>>,
}

impl<A: CoeffAlgebra> Clone for TwoField<A> {
    fn clone(&self) -> Self {
        TwoField {
            cfg: self.cfg.clone(),
            alg: self.alg.clone(),
            node: self.node.clone(),
            raw_exp: self.raw_exp.clone(),
            memo_pair: self.memo_pair.clone(),
            ann_memo: self.ann_memo.clone(),
        }
    }
}

impl<A: CoeffAlgebra> fmt::Debug for TwoField<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TwoField({})", self.describe())
    }
}

impl<A: CoeffAlgebra> TwoField<A> {
    fn from_node(cfg: &SigmaConfig, alg: &A, node: TwoFieldNode<A>) -> TwoField<A> {
        TwoField {
            cfg: cfg.clone(),
            alg: alg.clone(),
            node: Arc::new(node),
            raw_exp: Arc::new(Mutex::new(BTreeMap::new())),
            memo_pair: Arc::new(Mutex::new(BTreeMap::new())),
            ann_memo: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn config(&self) -> &SigmaConfig {
        &self.cfg
    }

    pub fn m_r(x: &Field<A>, y: &Field<A>) -> TwoField<A> {
        assert!(x.cfg == y.cfg, "config mismatch");
        Self::from_node(
            &x.cfg,
            &x.alg,
            TwoFieldNode::MR {
                x: x.clone(),
                y: y.clone(),
            },
        )
    }

    pub fn m_l(x: &Field<A>, y: &Field<A>) -> TwoField<A> {
        assert!(x.cfg == y.cfg, "config mismatch");
        Self::from_node(
            &x.cfg,
            &x.alg,
            TwoFieldNode::ML {
                x: x.clone(),
                y: y.clone(),
            },
        )
    }

    /// The bracket of `x (x) y` premultiplied by the localized pole.
    pub fn mu(x: &Field<A>, y: &Field<A>, pole: &LocalizedDiag) -> Result<TwoField<A>, SigmaError> {
        assert!(x.cfg == y.cfg, "config mismatch");
        Ok(Self::from_node(
            &x.cfg,
            &x.alg,
            TwoFieldNode::Mu {
                x: x.clone(),
                y: y.clone(),
                pole: pole.clone(),
                exp: OnceLock::new(),
            },
        ))
    }

    /// The bracket with the trivial pole.
    pub fn mu_simple(x: &Field<A>, y: &Field<A>) -> Result<TwoField<A>, SigmaError> {
        let pole = LocalizedDiag::new(TwoVarSeries::one(&x.cfg), 0)?;
        Self::mu(x, y, &pole)
    }

    pub fn diag_push(x: &Field<A>) -> TwoField<A> {
        Self::from_node(&x.cfg, &x.alg, TwoFieldNode::DiagPush { x: x.clone() })
    }

    pub fn jet(cfg: &SigmaConfig, alg: &A, components: Vec<Field<A>>) -> TwoField<A> {
        Self::from_node(cfg, alg, TwoFieldNode::Jet { components })
    }

    pub fn lin(cfg: &SigmaConfig, alg: &A, terms: Vec<(Scalar, TwoField<A>)>) -> TwoField<A> {
        Self::from_node(cfg, alg, TwoFieldNode::Lin { terms })
    }

    pub fn sub(&self, other: &TwoField<A>) -> TwoField<A> {
        let nv = self.cfg.nvars();
        Self::lin(
            &self.cfg,
            &self.alg,
            vec![
                (Scalar::one(nv), self.clone()),
                (Scalar::from_int(nv, -1), other.clone()),
            ],
        )
    }

    pub fn describe(&self) -> String {
        match &*self.node {
            TwoFieldNode::MR { x, y } => format!("m_r({},{})", x.describe(), y.describe()),
            TwoFieldNode::ML { x, y } => format!("m_l({},{})", x.describe(), y.describe()),
            TwoFieldNode::Mu { x, y, pole, .. } => format!(
                "mu({},{};k={})",
                x.describe(),
                y.describe(),
                pole.pole()
            ),
            TwoFieldNode::DiagPush { x } => format!("diag({})", x.describe()),
            TwoFieldNode::Jet { components } => format!("jet[{}]", components.len()),
            TwoFieldNode::Lin { terms } => format!("lin[{}]", terms.len()),
        }
    }

    /// Whether evaluation requires regular (pole-free) arguments somewhere in
    /// the tree; such trees are evaluated through summed numerators so that
    /// removable diagonal factors can cancel before dispatch.
    fn is_diag_supported(&self) -> bool {
        match &*self.node {
            TwoFieldNode::DiagPush { .. } | TwoFieldNode::Jet { .. } => true,
            TwoFieldNode::Lin { terms } => terms.iter().any(|(_, z)| z.is_diag_supported()),
            _ => false,
        }
    }

    fn raw_expansion(&self, k: u32, right: bool) -> Result<Arc<TwoVarSeries>, SigmaError> {
        if let Some(e) = self.raw_exp.lock().unwrap().get(&(k, right)) {
            return Ok(e.clone());
        }
        let depth = self.cfg.truncation();
        let e = if right {
            TwoVarSeries::exp_r(&self.cfg, k, depth)?
        } else {
            TwoVarSeries::exp_l(&self.cfg, k, depth)?
        };
        let e = Arc::new(e);
        self.raw_exp.lock().unwrap().insert((k, right), e.clone());
        Ok(e)
    }

    fn pole_expansions<'a>(
        &self,
        pole: &LocalizedDiag,
        slot: &'a OnceLock<(TwoVarSeries, TwoVarSeries)>,
    ) -> Result<&'a (TwoVarSeries, TwoVarSeries), SigmaError> {
        if let Some(v) = slot.get() {
            return Ok(v);
        }
        let depth = self.cfg.truncation();
        let er = pole.expand_right(depth)?;
        let el = pole.expand_left(depth)?;
        let _ = slot.set((er, el));
        Ok(slot.get().unwrap())
    }

    /// Certified evaluation on a regular two-slot tensor.
    pub fn eval_pair(&self, test: &TwoVarSeries) -> Result<Certified<A::Elem>, SigmaError> {
        if test.orientation() != Orientation::Poly {
            return Err(SigmaError::OrientationMismatch(
                "2-field evaluation needs a regular tensor".into(),
            ));
        }
        self.eval_localized(&LocalizedDiag::new(test.clone(), 0)?)
    }

    /// Certified evaluation on a localized argument (regular numerator over
    /// a diagonal pole).
    pub fn eval_localized(&self, arg: &LocalizedDiag) -> Result<Certified<A::Elem>, SigmaError> {
        match &*self.node {
            TwoFieldNode::Mu { x, y, pole, exp } => {
                let (sr, sl) = if arg.pole() == 0 {
                    let base = self.pole_expansions(pole, exp)?;
                    (
                        TwoVarSeries::mul_two(arg.numerator(), &base.0)?,
                        TwoVarSeries::mul_two(arg.numerator(), &base.1)?,
                    )
                } else {
                    let combined = pole.mul(arg)?;
                    if combined.pole() == 0 {
                        (
                            combined.numerator().promote(Orientation::Right),
                            combined.numerator().promote(Orientation::Left),
                        )
                    } else {
                        let er = self.raw_expansion(combined.pole(), true)?;
                        let el = self.raw_expansion(combined.pole(), false)?;
                        (
                            TwoVarSeries::mul_two(combined.numerator(), &er)?,
                            TwoVarSeries::mul_two(combined.numerator(), &el)?,
                        )
                    }
                };
                let r = contract_right(&self.alg, x, y, &sr)?;
                let l = contract_left(&self.alg, x, y, &sl)?;
                Ok(cert_add(&self.alg, &r, &cert_neg(&self.alg, &l)))
            }
            TwoFieldNode::Lin { terms } => {
                let mut acc = Certified::exact(self.alg.zero());
                for (s, z) in terms {
                    let v = z.eval_localized(arg)?;
                    acc = cert_add(&self.alg, &acc, &cert_scale(&self.alg, s, &v));
                }
                Ok(acc)
            }
            _ => {
                if arg.pole() != 0 {
                    return Err(SigmaError::NotLocalAtWindow(format!(
                        "polar argument (order {}) fed to the regular 2-field {}",
                        arg.pole(),
                        self.describe()
                    )));
                }
                self.eval_regular(arg.numerator())
            }
        }
    }

    /// Evaluation of the pole-free node kinds on a `Poly` tensor.
    fn eval_regular(&self, t: &TwoVarSeries) -> Result<Certified<A::Elem>, SigmaError> {
        let cut = t.tail_anchor().min(t.anchor_window());
        let vfloor = t
            .anchored_terms()
            .map(|(_, vs)| vs.min_level())
            .min()
            .unwrap_or(0);
        match &*self.node {
            TwoFieldNode::MR { x, y } => {
                let mut acc = Certified::exact(self.alg.zero());
                for (uidx, vs) in t.anchored_terms() {
                    let a = x.eval_basis(*uidx)?;
                    let b = y.eval(vs)?;
                    acc = cert_add(&self.alg, &acc, &cert_mul(&self.alg, &a, &b));
                }
                // missing anchors leave a deep *left* factor, which only the
                // model kill or the right factor's creation bound can absorb
                let tail = if cut >= BIG {
                    EXACT_LEVEL
                } else {
                    gate(x.ann_level(cut), y.creation_bound(vfloor))
                };
                Ok(acc.cap(tail))
            }
            TwoFieldNode::ML { x, y } => {
                let mut acc = Certified::exact(self.alg.zero());
                for (uidx, vs) in t.anchored_terms() {
                    let a = x.eval_basis(*uidx)?;
                    let b = y.eval(vs)?;
                    acc = cert_add(&self.alg, &acc, &cert_mul(&self.alg, &b, &a));
                }
                let tail = if cut >= BIG { EXACT_LEVEL } else { x.ann_level(cut) };
                Ok(acc.cap(tail))
            }
            TwoFieldNode::DiagPush { x } => {
                let restricted = t.diag_restrict()?;
                let v = x.eval(&restricted)?;
                let tail = if cut >= BIG {
                    EXACT_LEVEL
                } else {
                    x.ann_level(lvl_add(cut, vfloor))
                };
                Ok(v.cap(tail))
            }
            TwoFieldNode::Jet { components } => {
                let mut acc = Certified::exact(self.alg.zero());
                for (uidx, vs) in t.anchored_terms() {
                    let bu = PhiSeries::basis(&self.cfg, *uidx);
                    for (j, comp) in components.iter().enumerate() {
                        let arg = vs.mul(&bu.d_dt_k(j as u32));
                        let v = comp.eval(&arg)?;
                        acc = cert_add(&self.alg, &acc, &v);
                    }
                }
                let tail = if cut >= BIG {
                    EXACT_LEVEL
                } else {
                    components
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c.ann_level(lvl_add(lvl_add(cut, -(j as i64)), vfloor)))
                        .min()
                        .unwrap_or(EXACT_LEVEL)
                };
                Ok(acc.cap(tail))
            }
            TwoFieldNode::Mu { .. } | TwoFieldNode::Lin { .. } => unreachable!(),
        }
    }

    /// Memoized evaluation on `basis (x) basis` over a diagonal pole of
    /// order `k`.
    pub fn eval_basis_pair(
        &self,
        i2: BasisIndex,
        i3: BasisIndex,
        k: u32,
    ) -> Result<Certified<A::Elem>, SigmaError> {
        let key = (i2, i3, k);
        if let Some(v) = self.memo_pair.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let t = TwoVarSeries::tensor(
            &PhiSeries::basis(&self.cfg, i2),
            &PhiSeries::basis(&self.cfg, i3),
        );
        let v = self.eval_localized(&LocalizedDiag::new(t, k)?)?;
        self.memo_pair.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }

    /// Bilinear evaluation of `(f (x) g) delta^{-k}` through the memoized
    /// basis-pair table, with window-tail certificates for both slots.
    fn eval_tensor_localized(
        &self,
        f: &PhiSeries,
        g: &PhiSeries,
        k: u32,
    ) -> Result<Certified<A::Elem>, SigmaError> {
        let mut acc = Certified::exact(self.alg.zero());
        for (i2, c2) in f.terms() {
            for (i3, c3) in g.terms() {
                let v = self.eval_basis_pair(*i2, *i3, k)?;
                acc = cert_add(&self.alg, &acc, &cert_scale(&self.alg, &c2.mul(c3), &v));
            }
        }
        let tf = self.ann_pair_k(f.valid_to(), g.min_level(), k);
        let tg = self.ann_pair_k(f.min_level(), g.valid_to(), k);
        Ok(acc.cap(tf.min(tg)))
    }

    /// Certified annihilation bound for regular arguments supported at slot
    /// levels `>= (k1, k2)`.
    pub fn ann_pair(&self, k1: i64, k2: i64) -> i64 {
        if k1 >= BIG || k2 >= BIG {
            return EXACT_LEVEL;
        }
        let (k1, k2) = (k1.max(-BIG), k2.max(-BIG));
        match &*self.node {
            TwoFieldNode::MR { x, y } => y
                .ann_level(k2)
                .max(gate(x.ann_level(k1), y.creation_bound(k2))),
            TwoFieldNode::ML { x, y } => x
                .ann_level(k1)
                .max(gate(y.ann_level(k2), x.creation_bound(k1))),
            TwoFieldNode::Mu { x, y, pole, exp } => self.mu_ann_pair(x, y, pole, exp, k1, k2),
            TwoFieldNode::DiagPush { x } => x.ann_level(lvl_add(k1, k2)),
            TwoFieldNode::Jet { components } => components
                .iter()
                .enumerate()
                .map(|(j, c)| c.ann_level(lvl_add(lvl_add(k1, -(j as i64)), k2)))
                .min()
                .unwrap_or(EXACT_LEVEL),
            TwoFieldNode::Lin { terms } => terms
                .iter()
                .map(|(_, z)| z.ann_pair(k1, k2))
                .min()
                .unwrap_or(EXACT_LEVEL),
        }
    }

    fn mu_ann_pair(
        &self,
        x: &Field<A>,
        y: &Field<A>,
        pole: &LocalizedDiag,
        exp: &OnceLock<(TwoVarSeries, TwoVarSeries)>,
        k1: i64,
        k2: i64,
    ) -> i64 {
        let Ok((er, el)) = self.pole_expansions(pole, exp) else {
            return 0;
        };
        let mut level = EXACT_LEVEL;
        // right side: per stored anchor the value is x(u f) * y(b_a g)
        let cut_r = er.tail_anchor().min(er.anchor_window());
        for (vidx, us) in er.anchored_terms() {
            let via_y = y.ann_level(lvl_add(vidx.m, k2));
            let via_x = gate(
                x.ann_level(lvl_add(us.min_level(), k1)),
                y.creation_bound(lvl_add(vidx.m, k2)),
            );
            level = level.min(via_y.max(via_x));
        }
        if cut_r < BIG {
            level = level.min(y.ann_level(lvl_add(cut_r, k2)));
        }
        // left side: per stored anchor the value is y(v g) * x(b_a f)
        let cut_l = el.tail_anchor().min(el.anchor_window());
        for (uidx, vs) in el.anchored_terms() {
            let via_x = x.ann_level(lvl_add(uidx.m, k1));
            let via_y = gate(
                y.ann_level(lvl_add(vs.min_level(), k2)),
                x.creation_bound(lvl_add(uidx.m, k1)),
            );
            level = level.min(via_x.max(via_y));
        }
        if cut_l < BIG {
            level = level.min(x.ann_level(lvl_add(cut_l, k1)));
        }
        level
    }

    /// Annihilation bound for arguments `(f (x) g) delta^{-k}` with slot
    /// supports `>= (k1, k2)`.  The pole is resolved into pieces whose slot
    /// supports trade off along `u + v >= -k`; both expansion directions are
    /// tried and the better certificate wins.
    pub fn ann_pair_k(&self, k1: i64, k2: i64, k: u32) -> i64 {
        if k == 0 {
            return self.ann_pair(k1, k2);
        }
        if k1 >= BIG || k2 >= BIG {
            return EXACT_LEVEL;
        }
        let key = (k1, k2, k);
        if let Some(v) = self.ann_memo.lock().unwrap().get(&key) {
            return *v;
        }
        let kk = k as i64;
        let cap = 2 * self.cfg.truncation() + self.alg.truncation_level() + kk + 8;
        let mut right = EXACT_LEVEL;
        let mut left = EXACT_LEVEL;
        for j in 0..=cap {
            right = right.min(self.ann_pair(lvl_add(k1, -kk - j), lvl_add(k2, j)));
            left = left.min(self.ann_pair(lvl_add(k1, j), lvl_add(k2, -kk - j)));
        }
        // pieces beyond the sweep, bounded only through the raised slot
        right = right.min(self.ann_pair(-BIG, lvl_add(k2, cap)));
        left = left.min(self.ann_pair(lvl_add(k1, cap), -BIG));
        let out = right.max(left);
        self.ann_memo.lock().unwrap().insert(key, out);
        out
    }

    /// Certified creation-depth bound of values on regular arguments with
    /// slot supports `>= (k1, k2)`.
    pub fn creation_bound2(&self, k1: i64, k2: i64) -> i64 {
        match &*self.node {
            TwoFieldNode::MR { x, y } | TwoFieldNode::ML { x, y } => {
                x.creation_bound(k1).max(y.creation_bound(k2))
            }
            TwoFieldNode::Mu { x, y, pole, exp } => {
                let Ok((er, el)) = self.pole_expansions(pole, exp) else {
                    return CB_UNBOUNDED;
                };
                if er.tail_anchor().min(er.anchor_window()) < BIG
                    || el.tail_anchor().min(el.anchor_window()) < BIG
                {
                    return CB_UNBOUNDED;
                }
                let mut cb = 0;
                for (vidx, us) in er.anchored_terms() {
                    cb = cb
                        .max(x.creation_bound(lvl_add(us.min_level(), k1)))
                        .max(y.creation_bound(lvl_add(vidx.m, k2)));
                }
                for (uidx, vs) in el.anchored_terms() {
                    cb = cb
                        .max(y.creation_bound(lvl_add(vs.min_level(), k2)))
                        .max(x.creation_bound(lvl_add(uidx.m, k1)));
                }
                cb
            }
            TwoFieldNode::DiagPush { x } => x.creation_bound(lvl_add(k1, k2)),
            TwoFieldNode::Jet { components } => components
                .iter()
                .enumerate()
                .map(|(j, c)| c.creation_bound(lvl_add(lvl_add(k1, -(j as i64)), k2)))
                .max()
                .unwrap_or(0),
            TwoFieldNode::Lin { terms } => terms
                .iter()
                .map(|(_, z)| z.creation_bound2(k1, k2))
                .max()
                .unwrap_or(0),
        }
    }
}

/// Contraction of a right-expanded argument against an ordered product:
/// deep first-slot values multiply from the left.
fn contract_right<A: CoeffAlgebra>(
    alg: &A,
    x: &Field<A>,
    y: &Field<A>,
    s: &TwoVarSeries,
) -> Result<Certified<A::Elem>, SigmaError> {
    let mut acc = Certified::exact(alg.zero());
    for (vidx, us) in s.anchored_terms() {
        let a = x.eval(us)?;
        let b = y.eval_basis(*vidx)?;
        acc = cert_add(alg, &acc, &cert_mul(alg, &a, &b));
    }
    let cut = s.tail_anchor().min(s.anchor_window());
    let tail = if cut >= BIG {
        EXACT_LEVEL
    } else {
        // the missing band has second-slot anchors >= cut; its contribution
        // right-multiplies by y-values there and is absorbed at that level
        y.ann_level(cut)
    };
    Ok(acc.cap(tail))
}

/// Contraction of a left-expanded argument: deep second-slot values multiply
/// from the right.
fn contract_left<A: CoeffAlgebra>(
    alg: &A,
    x: &Field<A>,
    y: &Field<A>,
    s: &TwoVarSeries,
) -> Result<Certified<A::Elem>, SigmaError> {
    let mut acc = Certified::exact(alg.zero());
    for (uidx, vs) in s.anchored_terms() {
        let a = y.eval(vs)?;
        let b = x.eval_basis(*uidx)?;
        acc = cert_add(alg, &acc, &cert_mul(alg, &a, &b));
    }
    let cut = s.tail_anchor().min(s.anchor_window());
    let tail = if cut >= BIG {
        EXACT_LEVEL
    } else {
        x.ann_level(cut)
    };
    Ok(acc.cap(tail))
}

// ---------------------------------------------------------------------------
// Separated three-slot evaluation (first slot against the pair (2,3))
// ---------------------------------------------------------------------------

/// Expansion of a three-slot polar argument with the `(1,2)` and `(1,3)`
/// poles resolved; the `(2,3)` pole stays with the inner 2-field.  Missing
/// content is certified to have `slot2 >= cut2` or `slot3 >= cut3` (right
/// mode) resp. `slot1 >= cut1` (left mode).
struct SepExpansion {
    triples: Vec<(PhiSeries, PhiSeries, PhiSeries)>,
    cut1: i64,
    cut2: i64,
    cut3: i64,
    floor2: i64,
    floor3: i64,
}

/// Evaluator for `(X (x) W)` against three-slot arguments, resolving the
/// poles that separate slot 1 from slots 2 and 3.  Expansions of the two
/// separating poles are precomputed at construction so that sweeps over many
/// test triples stay cheap.
pub struct Mu12Evaluator<A: CoeffAlgebra> {
    alg: A,
    cfg: SigmaConfig,
    outer: Field<A>,
    inner: TwoField<A>,
    pole: ThreeVarPole,
    e12: Option<(TwoVarSeries, TwoVarSeries)>,
    e13: Option<(TwoVarSeries, TwoVarSeries)>,
    grouped: bool,
}

impl<A: CoeffAlgebra> Mu12Evaluator<A> {
    pub fn new(
        outer: &Field<A>,
        inner: &TwoField<A>,
        pole: &ThreeVarPole,
    ) -> Result<Mu12Evaluator<A>, SigmaError> {
        let cfg = outer.cfg.clone();
        let depth = cfg.truncation();
        let mk = |k: u32| -> Result<Option<(TwoVarSeries, TwoVarSeries)>, SigmaError> {
            if k == 0 {
                Ok(None)
            } else {
                Ok(Some((
                    TwoVarSeries::exp_r(&cfg, k, depth)?,
                    TwoVarSeries::exp_l(&cfg, k, depth)?,
                )))
            }
        };
        let e12 = mk(pole.k12)?;
        let e13 = mk(pole.k13)?;
        let grouped = inner.is_diag_supported();
        if grouped && pole.k23 > 0 {
            // dividing a window-truncated numerator by the diagonal kernel
            // can silently widen its claimed window, so this combination is
            // rejected rather than certified incorrectly
            return Err(SigmaError::Other(
                "inner poles on model-supported 2-fields are not supported".into(),
            ));
        }
        Ok(Mu12Evaluator {
            alg: outer.alg.clone(),
            cfg,
            outer: outer.clone(),
            inner: inner.clone(),
            pole: pole.clone(),
            e12,
            e13,
            grouped,
        })
    }

    fn expand(
        &self,
        t1: &PhiSeries,
        t2: &PhiSeries,
        t3: &PhiSeries,
        right: bool,
    ) -> SepExpansion {
        let cfg = &self.cfg;
        let num = self
            .pole
            .num
            .mul_slot(0, t1)
            .mul_slot(1, t2)
            .mul_slot(2, t3);
        let mut triples = num.terms.clone();
        let (mut cut1, mut cut2, mut cut3) = (NO_TAIL, NO_TAIL, NO_TAIL);
        let mut cut1_partial = NO_TAIL;
        // resolve the (1,2) pole: anchors ascend in slot 2 (right mode) or
        // slot 1 (left mode), polar values land in the opposite slot
        if let Some((er, el)) = &self.e12 {
            let e = if right { er } else { el };
            let ecut = e.tail_anchor().min(e.anchor_window());
            let smin = triples
                .iter()
                .map(|(s1, s2, _)| if right { s2.min_level() } else { s1.min_level() })
                .min()
                .unwrap_or(NO_TAIL);
            let mut out = Vec::with_capacity(triples.len() * 8);
            for (s1, s2, s3) in &triples {
                for (aidx, val) in e.anchored_terms() {
                    let ab = PhiSeries::basis(cfg, *aidx);
                    if right {
                        out.push((s1.mul(val), s2.mul(&ab), s3.clone()));
                    } else {
                        out.push((s1.mul(&ab), s2.mul(val), s3.clone()));
                    }
                }
            }
            if ecut < BIG {
                if right {
                    cut2 = lvl_add(ecut, smin);
                } else {
                    cut1_partial = lvl_add(ecut, smin);
                }
            }
            triples = out;
        }
        // resolve the (1,3) pole
        let mut minanch13 = 0;
        if let Some((er, el)) = &self.e13 {
            let e = if right { er } else { el };
            let ecut = e.tail_anchor().min(e.anchor_window());
            minanch13 = e.anchored_terms().map(|(a, _)| a.m).min().unwrap_or(0);
            let smin = triples
                .iter()
                .map(|(s1, _, s3)| if right { s3.min_level() } else { s1.min_level() })
                .min()
                .unwrap_or(NO_TAIL);
            let mut out = Vec::with_capacity(triples.len() * 8);
            for (s1, s2, s3) in &triples {
                for (aidx, val) in e.anchored_terms() {
                    let ab = PhiSeries::basis(cfg, *aidx);
                    if right {
                        out.push((s1.mul(val), s2.clone(), s3.mul(&ab)));
                    } else {
                        out.push((s1.mul(&ab), s2.clone(), s3.mul(val)));
                    }
                }
            }
            if ecut < BIG {
                if right {
                    cut3 = lvl_add(ecut, smin);
                } else {
                    cut1 = cut1.min(lvl_add(ecut, smin));
                }
            }
            triples = out;
        }
        if !right && cut1_partial < BIG {
            // the band missed by the (1,2) resolution is further multiplied
            // in slot 1 by the (1,3) anchors
            let shift = if self.e13.is_some() { minanch13 } else { 0 };
            cut1 = cut1.min(lvl_add(cut1_partial, shift));
        }
        let floor2 = triples
            .iter()
            .map(|(_, s2, _)| s2.min_level())
            .min()
            .unwrap_or(NO_TAIL);
        let floor3 = triples
            .iter()
            .map(|(_, _, s3)| s3.min_level())
            .min()
            .unwrap_or(NO_TAIL);
        SepExpansion {
            triples,
            cut1,
            cut2,
            cut3,
            floor2,
            floor3,
        }
    }

    /// Certified evaluation on the decomposable test `t1 (x) t2 (x) t3`.
    pub fn eval(
        &self,
        t1: &PhiSeries,
        t2: &PhiSeries,
        t3: &PhiSeries,
    ) -> Result<Certified<A::Elem>, SigmaError> {
        let r = self.eval_side(t1, t2, t3, true)?;
        let l = self.eval_side(t1, t2, t3, false)?;
        Ok(cert_add(&self.alg, &r, &cert_neg(&self.alg, &l)))
    }

    fn eval_side(
        &self,
        t1: &PhiSeries,
        t2: &PhiSeries,
        t3: &PhiSeries,
        right: bool,
    ) -> Result<Certified<A::Elem>, SigmaError> {
        let alg = &self.alg;
        let sep = self.expand(t1, t2, t3, right);
        let k23 = self.pole.k23;
        let mut level = EXACT_LEVEL;
        let mut acc = Certified::exact(alg.zero());
        if self.grouped {
            // sum the (2,3)-parts per first-slot basis element so removable
            // diagonal factors can cancel before the inner dispatch
            let mut groups: BTreeMap<BasisIndex, Vec<(PhiSeries, PhiSeries)>> = BTreeMap::new();
            for (s1, s2, s3) in &sep.triples {
                for (i1, c1) in s1.terms() {
                    groups
                        .entry(*i1)
                        .or_default()
                        .push((s2.scalar_mul(c1), s3.clone()));
                }
                // first-slot window tail of this term
                let wl = self.outer.ann_level(s1.valid_to());
                if right {
                    let cb = self
                        .inner
                        .creation_bound2(s2.min_level(), s3.min_level());
                    level = level.min(gate(wl, cb));
                } else {
                    level = level.min(wl);
                }
            }
            for (i1, pairs) in &groups {
                let tv = TwoVarSeries::poly_from_pairs(&self.cfg, pairs);
                let w = self.inner.eval_localized(&LocalizedDiag::new(tv, k23)?)?;
                let a = self.outer.eval_basis(*i1)?;
                let term = if right {
                    cert_mul(alg, &a, &w)
                } else {
                    cert_mul(alg, &w, &a)
                };
                acc = cert_add(alg, &acc, &term);
            }
        } else {
            for (s1, s2, s3) in &sep.triples {
                let a = self.outer.eval(s1)?;
                let w = self.inner.eval_tensor_localized(s2, s3, k23)?;
                let term = if right {
                    cert_mul(alg, &a, &w)
                } else {
                    cert_mul(alg, &w, &a)
                };
                acc = cert_add(alg, &acc, &term);
            }
        }
        if right {
            if sep.cut2 < BIG {
                level = level.min(self.inner.ann_pair_k(sep.cut2, sep.floor3, k23));
            }
            if sep.cut3 < BIG {
                level = level.min(self.inner.ann_pair_k(sep.floor2, sep.cut3, k23));
            }
        } else if sep.cut1 < BIG {
            level = level.min(self.outer.ann_level(sep.cut1));
        }
        Ok(acc.cap(level))
    }
}

// ---------------------------------------------------------------------------
// Locality
// ---------------------------------------------------------------------------

/// Outcome of a window-relative locality scan.
#[derive(Clone, Debug, Serialize)]
pub struct LocalityReport {
    pub window: (i64, i64),
    pub max_k: u32,
    /// Smallest diagonal-kernel power killing the bracket on the window,
    /// when one exists below `max_k`.
    pub order: Option<u32>,
    /// Smallest certification level among the decisive evaluations.
    pub min_level: i64,
}

/// Smallest `k <= max_k` such that `delta^k` kills the bracket of `x` and
/// `y` on all window basis pairs, certified in the truncated model.
pub fn locality_order<A: CoeffAlgebra>(
    x: &Field<A>,
    y: &Field<A>,
    max_k: u32,
    window: &Window,
) -> Result<LocalityReport, SigmaError> {
    let alg = x.alg.clone();
    let tk = alg.truncation_level();
    let w = TwoField::mu_simple(x, y)?;
    let idxs = window.indices(x.cfg.n());
    let mut min_level = EXACT_LEVEL;
    for k in 0..=max_k {
        let mut all = true;
        let mut lvl = EXACT_LEVEL;
        for p in &idxs {
            for q in &idxs {
                let t = TwoVarSeries::tensor(
                    &PhiSeries::basis(&x.cfg, *p),
                    &PhiSeries::basis(&x.cfg, *q),
                )
                .mul_delta_pow(k)?;
                let v = w.eval_pair(&t)?;
                lvl = lvl.min(v.level);
                if !certified_zero(&alg, tk, &v) {
                    all = false;
                    break;
                }
            }
            if !all {
                break;
            }
        }
        if all {
            min_level = min_level.min(lvl);
            return Ok(LocalityReport {
                window: window_bounds(window),
                max_k,
                order: Some(k),
                min_level,
            });
        }
    }
    Ok(LocalityReport {
        window: window_bounds(window),
        max_k,
        order: None,
        min_level,
    })
}

fn window_bounds(w: &Window) -> (i64, i64) {
    (w.lo, w.hi)
}

/// Pole-order certificate for a bracket with a pre-installed pole: checks
/// that `delta^{h + npole + 1}` kills `mu(x (x) y delta^{-npole})` on the
/// window.
#[derive(Clone, Debug, Serialize)]
pub struct DeltaKillReport {
    pub window: (i64, i64),
    pub kill_power: u32,
    pub cases: usize,
    pub failures: usize,
    pub min_level: i64,
    pub pass: bool,
}

pub fn delta_kill_check<A: CoeffAlgebra>(
    x: &Field<A>,
    y: &Field<A>,
    npole: u32,
    kill_power: u32,
    window: &Window,
) -> Result<DeltaKillReport, SigmaError> {
    let alg = x.alg.clone();
    let tk = alg.truncation_level();
    let pole = LocalizedDiag::new(TwoVarSeries::one(&x.cfg), npole)?;
    let w = TwoField::mu(x, y, &pole)?;
    let idxs = window.indices(x.cfg.n());
    let mut cases = 0;
    let mut failures = 0;
    let mut min_level = EXACT_LEVEL;
    for p in &idxs {
        for q in &idxs {
            let t = TwoVarSeries::tensor(
                &PhiSeries::basis(&x.cfg, *p),
                &PhiSeries::basis(&x.cfg, *q),
            )
            .mul_delta_pow(kill_power)?;
            let v = w.eval_pair(&t)?;
            cases += 1;
            min_level = min_level.min(v.level);
            if !certified_zero(&alg, tk, &v) {
                failures += 1;
            }
        }
    }
    Ok(DeltaKillReport {
        window: window_bounds(window),
        kill_power,
        cases,
        failures,
        min_level,
        pass: failures == 0,
    })
}

// ---------------------------------------------------------------------------
// Diagonal local model
// ---------------------------------------------------------------------------

/// Generators of the two-variable operator algebra in the coordinates
/// adapted to the diagonal: `v` is the diagonal coordinate, `y` the
/// transversal kernel, `d'_v` the diagonal derivation and `d_y` the
/// transversal one; `u` and `d_v` are the derived combinations `v + y` and
/// `d'_v - d_y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagGen {
    MulV,
    MulY,
    DvPrime,
    Dy,
    MulU,
    Dv,
}

/// Finite local model at the diagonal: components `X_j` standing for
/// `sum_j X_j d^j`.
pub struct KashiwaraModule<A: CoeffAlgebra> {
    pub components: Vec<Field<A>>,
    cfg: SigmaConfig,
    alg: A,
}

impl<A: CoeffAlgebra> Clone for KashiwaraModule<A> {
    fn clone(&self) -> Self {
        KashiwaraModule {
            components: self.components.clone(),
            cfg: self.cfg.clone(),
            alg: self.alg.clone(),
        }
    }
}

impl<A: CoeffAlgebra> KashiwaraModule<A> {
    pub fn new(cfg: &SigmaConfig, alg: &A, components: Vec<Field<A>>) -> KashiwaraModule<A> {
        KashiwaraModule {
            components,
            cfg: cfg.clone(),
            alg: alg.clone(),
        }
    }

    /// Pushforward of a field placed in transversal order `0`, padded with
    /// zero components up to order `h`.
    pub fn push(x: &Field<A>, h: u32) -> KashiwaraModule<A> {
        let mut components = vec![x.clone()];
        for _ in 0..h {
            components.push(Field::zero(&x.cfg, &x.alg));
        }
        KashiwaraModule::new(&x.cfg, &x.alg, components)
    }

    /// Right action of a generator in the normalization of the displayed
    /// module rules: `(X d^n) . v = (X t) d^n`, `(X d^n) . y = -n X d^{n-1}`,
    /// `(X d^n) . d'_v = (X d_t) d^n`, `(X d^n) . d_y = X d^{n+1}`, with the
    /// derived combinations `u = v + y` and `d_v = d'_v - d_y`.
    pub fn act(&self, g: DiagGen) -> KashiwaraModule<A> {
        let t = PhiSeries::coordinate(&self.cfg);
        let n = self.components.len();
        let nv = self.cfg.nvars();
        let comps = &self.components;
        let out = match g {
            DiagGen::MulV => comps.iter().map(|x| x.act_fn(&t)).collect(),
            DiagGen::MulY => {
                let mut out = vec![Field::zero(&self.cfg, &self.alg); n.saturating_sub(1)];
                for (j, x) in comps.iter().enumerate().skip(1) {
                    out[j - 1] = x.scalar_mul(&Scalar::from_int(nv, -(j as i64)));
                }
                out
            }
            DiagGen::DvPrime => comps.iter().map(|x| x.act_dt()).collect(),
            DiagGen::Dy => {
                let mut out = vec![Field::zero(&self.cfg, &self.alg)];
                out.extend(comps.iter().cloned());
                out
            }
            DiagGen::MulU => {
                let mut out: Vec<Field<A>> = comps.iter().map(|x| x.act_fn(&t)).collect();
                for (j, x) in comps.iter().enumerate().skip(1) {
                    out[j - 1] =
                        out[j - 1].add(&x.scalar_mul(&Scalar::from_int(nv, -(j as i64))));
                }
                out
            }
            DiagGen::Dv => {
                let mut out: Vec<Field<A>> = comps.iter().map(|x| x.act_dt()).collect();
                out.push(Field::zero(&self.cfg, &self.alg));
                for (j, x) in comps.iter().enumerate() {
                    out[j + 1] = out[j + 1].sub(x);
                }
                out
            }
        };
        KashiwaraModule::new(&self.cfg, &self.alg, out)
    }

    /// The 2-field the model embeds to: `(f (x) g) -> sum_j X_j(g f^{(j)})`.
    pub fn as_two_field(&self) -> TwoField<A> {
        TwoField::jet(&self.cfg, &self.alg, self.components.clone())
    }
}

/// Extraction of local-model components from a 2-field supported on the
/// diagonal to order `<= h` (checked on the window): top components are
/// probed by finite differences and stripped off recursively.
pub fn identify_local<A: CoeffAlgebra>(
    z: &TwoField<A>,
    h: u32,
    window: &Window,
) -> Result<KashiwaraModule<A>, SigmaError> {
    let cfg = z.cfg.clone();
    let alg = z.alg.clone();
    let components = jet_components(z, h);
    let module = KashiwaraModule::new(&cfg, &alg, components);
    // window verification of the reconstruction
    let tk = alg.truncation_level();
    let idxs = window.indices(cfg.n());
    let model = module.as_two_field();
    for p in &idxs {
        for q in &idxs {
            let t = TwoVarSeries::tensor(&PhiSeries::basis(&cfg, *p), &PhiSeries::basis(&cfg, *q));
            let lhs = z.eval_pair(&t)?;
            let rhs = model.eval_pair(&t)?;
            let diff = cert_add(&alg, &lhs, &cert_neg(&alg, &rhs));
            if !certified_zero(&alg, tk, &diff) {
                return Err(SigmaError::NotLocalAtWindow(format!(
                    "reconstruction defect at ({:?}, {:?})",
                    p, q
                )));
            }
        }
    }
    Ok(module)
}

fn jet_components<A: CoeffAlgebra>(z: &TwoField<A>, h: u32) -> Vec<Field<A>> {
    if h == 0 {
        return vec![Field::r_map(z)];
    }
    let top = Field::jet_probe(z, h);
    // strip the top component off and recurse on the remainder
    let mut jet_comps = vec![Field::zero(&z.cfg, &z.alg); h as usize];
    jet_comps.push(top.clone());
    let stripped = z.sub(&TwoField::jet(&z.cfg, &z.alg, jet_comps));
    let mut components = jet_components(&stripped, h - 1);
    components.push(top);
    components
}

// ---------------------------------------------------------------------------
// Structural checkers
// ---------------------------------------------------------------------------

/// Tally of certified-zero comparisons.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckStats {
    pub cases: usize,
    pub failures: usize,
    pub min_level: i64,
}

impl CheckStats {
    fn new() -> CheckStats {
        CheckStats {
            cases: 0,
            failures: 0,
            min_level: EXACT_LEVEL,
        }
    }

    fn record<A: CoeffAlgebra>(&mut self, alg: &A, k: i64, diff: &Certified<A::Elem>) {
        self.cases += 1;
        self.min_level = self.min_level.min(diff.level);
        if !certified_zero(alg, k, diff) {
            self.failures += 1;
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// Certified agreement of two fields on every window basis element.
pub fn fields_agree_on<A: CoeffAlgebra>(
    a: &Field<A>,
    b: &Field<A>,
    window: &Window,
) -> Result<CheckStats, SigmaError> {
    let alg = a.alg.clone();
    let tk = alg.truncation_level();
    let mut stats = CheckStats::new();
    for idx in window.indices(a.cfg.n()) {
        let va = a.eval_basis(idx)?;
        let vb = b.eval_basis(idx)?;
        let diff = cert_add(&alg, &va, &cert_neg(&alg, &vb));
        stats.record(&alg, tk, &diff);
    }
    Ok(stats)
}

/// Unit-field axiom: the bracket against a unit field vanishes on regular
/// tensors, and with a simple pole it collapses to the evaluation formula
/// `X(f g h l1 l2)`.
#[derive(Clone, Debug, Serialize)]
pub struct UnitAxiomReport {
    pub vanishing: CheckStats,
    pub formula: CheckStats,
    pub pass: bool,
}

pub fn unit_axiom_check<A: CoeffAlgebra>(
    x: &Field<A>,
    window: &Window,
    samples: &[(PhiSeries, PhiSeries, PhiSeries)],
) -> Result<UnitAxiomReport, SigmaError> {
    let cfg = x.cfg.clone();
    let alg = x.alg.clone();
    let tk = alg.truncation_level();
    let idxs = window.indices(cfg.n());
    let mut vanishing = CheckStats::new();
    // the bracket against the canonical unit on regular tensors
    let w0 = TwoField::mu_simple(&Field::unit_dt(&cfg, &alg), x)?;
    for p in &idxs {
        for q in &idxs {
            let t = TwoVarSeries::tensor(&PhiSeries::basis(&cfg, *p), &PhiSeries::basis(&cfg, *q));
            let v = w0.eval_pair(&t)?;
            vanishing.record(&alg, tk, &v);
        }
    }
    // simple-pole collapse on sampled sections
    let mut formula = CheckStats::new();
    for (f, g, h) in samples {
        let omega = OneForm::dt(&cfg).act_fn(f);
        let unit = Field::unit(&cfg, &alg, omega);
        let pole = LocalizedDiag::new(TwoVarSeries::tensor(g, h), 1)?;
        let w = TwoField::mu(&unit, x, &pole)?;
        let fgh = f.mul(g).mul(h);
        for p in &idxs {
            for q in &idxs {
                let bp = PhiSeries::basis(&cfg, *p);
                let bq = PhiSeries::basis(&cfg, *q);
                let lhs = w.eval_pair(&TwoVarSeries::tensor(&bp, &bq))?;
                let rhs = x.eval(&fgh.mul(&bp).mul(&bq))?;
                let diff = cert_add(&alg, &lhs, &cert_neg(&alg, &rhs));
                formula.record(&alg, tk, &diff);
            }
        }
    }
    let pass = vanishing.pass() && formula.pass();
    Ok(UnitAxiomReport {
        vanishing,
        formula,
        pass,
    })
}

/// Derivative compatibility of the restricted bracket.  The resolved
/// identity moves the derivation inside and lowers the pole:
/// `R mu(x (x) y d^{-m}) . d  =  R mu(x (x) (y.d) d^{-m}) - m R mu(x (x) y d^{-m-1})`.
/// The variant with an extra outer derivation on the first right-hand term
/// is tracked separately.
#[derive(Clone, Debug, Serialize)]
pub struct RmuDReport {
    pub max_m: u32,
    pub resolved: CheckStats,
    pub displayed: CheckStats,
    pub resolved_holds: bool,
    pub displayed_holds: bool,
}

pub fn rmu_d_check<A: CoeffAlgebra>(
    x: &Field<A>,
    y: &Field<A>,
    max_m: u32,
    window: &Window,
) -> Result<RmuDReport, SigmaError> {
    let nv = x.cfg.nvars();
    let one = Scalar::one(nv);
    let mut resolved = CheckStats::new();
    let mut displayed = CheckStats::new();
    for m in 0..=max_m {
        let lhs = Field::r_mu(x, y, m)?.act_dt();
        let t1 = Field::r_mu(x, &y.act_dt(), m)?;
        let t2 = Field::r_mu(x, y, m + 1)?;
        let mscale = Scalar::from_int(nv, -(m as i64));
        let res = Field::lin(
            &x.cfg,
            &x.alg,
            vec![(one.clone(), t1.clone()), (mscale.clone(), t2.clone())],
        );
        let disp = Field::lin(
            &x.cfg,
            &x.alg,
            vec![(one.clone(), t1.act_dt()), (mscale, t2)],
        );
        let sr = fields_agree_on(&lhs, &res, window)?;
        let sd = fields_agree_on(&lhs, &disp, window)?;
        resolved.cases += sr.cases;
        resolved.failures += sr.failures;
        resolved.min_level = resolved.min_level.min(sr.min_level);
        displayed.cases += sd.cases;
        displayed.failures += sd.failures;
        displayed.min_level = displayed.min_level.min(sd.min_level);
    }
    Ok(RmuDReport {
        max_m,
        resolved_holds: resolved.pass(),
        displayed_holds: displayed.pass(),
        resolved,
        displayed,
    })
}

/// Cyclic bracket identity at the identity assignment: the three separated
/// evaluations, with the pole profiles and parities induced by the cyclic
/// slot rotation, sum into the truncation ideal.
#[derive(Clone, Debug, Serialize)]
pub struct JacobiReport {
    pub window: (i64, i64),
    pub poles: (u32, u32, u32),
    pub stats: CheckStats,
    pub pass: bool,
}

pub fn jacobi_check<A: CoeffAlgebra>(
    x1: &Field<A>,
    x2: &Field<A>,
    x3: &Field<A>,
    k12: u32,
    k13: u32,
    k23: u32,
    window: &Window,
) -> Result<JacobiReport, SigmaError> {
    let cfg = x1.cfg.clone();
    let alg = x1.alg.clone();
    let tk = alg.truncation_level();
    let nv = cfg.nvars();
    let one3 = ThreeVarPoly::tensor(
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
    );
    let mk_pole = |a: u32, b: u32, c: u32| ThreeVarPole {
        num: one3.clone(),
        k12: a,
        k13: b,
        k23: c,
    };
    // term 1: x1 against mu(x2 (x) x3); cyclic rotations permute both the
    // pole profile and the test slots, with the parity of the moved kernels
    let ev1 = Mu12Evaluator::new(x1, &TwoField::mu_simple(x2, x3)?, &mk_pole(k12, k13, k23))?;
    let ev2 = Mu12Evaluator::new(x3, &TwoField::mu_simple(x1, x2)?, &mk_pole(k13, k23, k12))?;
    let ev3 = Mu12Evaluator::new(x2, &TwoField::mu_simple(x3, x1)?, &mk_pole(k23, k12, k13))?;
    let s2 = Scalar::from_int(nv, if (k13 + k23) % 2 == 0 { 1 } else { -1 });
    let s3 = Scalar::from_int(nv, if (k12 + k13) % 2 == 0 { 1 } else { -1 });
    let idxs = window.indices(cfg.n());
    let mut triples = Vec::new();
    for p in &idxs {
        for q in &idxs {
            for r in &idxs {
                triples.push((*p, *q, *r));
            }
        }
    }
    let results: Result<Vec<(i64, bool)>, SigmaError> = triples
        .par_iter()
        .map(|(p, q, r)| {
            let bp = PhiSeries::basis(&cfg, *p);
            let bq = PhiSeries::basis(&cfg, *q);
            let br = PhiSeries::basis(&cfg, *r);
            let v1 = ev1.eval(&bp, &bq, &br)?;
            let v2 = ev2.eval(&br, &bp, &bq)?;
            let v3 = ev3.eval(&bq, &br, &bp)?;
            let sum = cert_add(
                &alg,
                &v1,
                &cert_add(
                    &alg,
                    &cert_scale(&alg, &s2, &v2),
                    &cert_scale(&alg, &s3, &v3),
                ),
            );
            Ok((sum.level, certified_zero(&alg, tk, &sum)))
        })
        .collect();
    let results = results?;
    let mut stats = CheckStats::new();
    for (level, ok) in results {
        stats.cases += 1;
        stats.min_level = stats.min_level.min(level);
        if !ok {
            stats.failures += 1;
        }
    }
    Ok(JacobiReport {
        window: window_bounds(window),
        poles: (k12, k13, k23),
        pass: stats.pass(),
        stats,
    })
}

/// Compatibility of the separated bracket with the diagonal pushforward of
/// the second pair: collapsing slots 2 and 3 reproduces the two-slot bracket
/// with the collapsed pole, at transversal orders `h <= 1`.
#[derive(Clone, Debug, Serialize)]
pub struct Mu12Report {
    pub h: u32,
    pub poles: (u32, u32),
    pub stats: CheckStats,
    pub pass: bool,
}

pub fn mu12_compat_check<A: CoeffAlgebra>(
    x: &Field<A>,
    y: &Field<A>,
    h: u32,
    k12: u32,
    k13: u32,
    window: &Window,
) -> Result<Mu12Report, SigmaError> {
    assert!(h <= 1, "transversal orders above 1 are not supported");
    let cfg = x.cfg.clone();
    let alg = x.alg.clone();
    let tk = alg.truncation_level();
    let nv = cfg.nvars();
    let one3 = ThreeVarPoly::tensor(
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
    );
    let pole3 = ThreeVarPole {
        num: one3,
        k12,
        k13,
        k23: 0,
    };
    let inner0 = TwoField::diag_push(y);
    let ev0 = Mu12Evaluator::new(x, &inner0, &pole3)?;
    let (cnum, ck) = pole3.restrict_23()?;
    let two = TwoField::mu(x, y, &LocalizedDiag::new(cnum, ck)?)?;
    let idxs = window.indices(cfg.n());
    let mut stats = CheckStats::new();
    if h == 0 {
        for p in &idxs {
            for q in &idxs {
                for r in &idxs {
                    let bp = PhiSeries::basis(&cfg, *p);
                    let bq = PhiSeries::basis(&cfg, *q);
                    let br = PhiSeries::basis(&cfg, *r);
                    let lhs = ev0.eval(&bp, &bq, &br)?;
                    let rhs = two.eval_pair(&TwoVarSeries::tensor(&bp, &bq.mul(&br)))?;
                    let diff = cert_add(&alg, &lhs, &cert_neg(&alg, &rhs));
                    stats.record(&alg, tk, &diff);
                }
            }
        }
    } else {
        // transversal degree 1: the inner field is the pushforward acted by
        // the slot-2 derivation, and the collapse acquires the derivative of
        // the (1,2) pole:
        //   ev1 on (g1, g2, g3)  =  two on g1 (x) g2' g3
        //                         + k12 * [pole raised by one] on g1 (x) g2 g3
        let inner1 = TwoField::jet(&cfg, &alg, vec![Field::zero(&cfg, &alg), y.clone()]);
        let ev1 = Mu12Evaluator::new(x, &inner1, &pole3)?;
        let two_plus = TwoField::mu(
            x,
            y,
            &LocalizedDiag::new(TwoVarSeries::one(&cfg), ck + 1)?,
        )?;
        let c12 = Scalar::from_int(nv, k12 as i64);
        for p in &idxs {
            for q in &idxs {
                for r in &idxs {
                    let bp = PhiSeries::basis(&cfg, *p);
                    let bq = PhiSeries::basis(&cfg, *q);
                    let br = PhiSeries::basis(&cfg, *r);
                    let lhs = ev1.eval(&bp, &bq, &br)?;
                    let r1 = two.eval_pair(&TwoVarSeries::tensor(&bp, &bq.d_dt().mul(&br)))?;
                    let r2 = two_plus.eval_pair(&TwoVarSeries::tensor(&bp, &bq.mul(&br)))?;
                    let rhs = cert_add(&alg, &r1, &cert_scale(&alg, &c12, &r2));
                    let diff = cert_add(&alg, &lhs, &cert_neg(&alg, &rhs));
                    stats.record(&alg, tk, &diff);
                }
            }
        }
    }
    Ok(Mu12Report {
        h,
        poles: (k12, k13),
        pass: stats.pass(),
        stats,
    })
}

// ---------------------------------------------------------------------------
// Generation of basic layers
// ---------------------------------------------------------------------------

/// Span of evaluation vectors over the scalar field, keyed by test position
/// and normal-ordered word; rows are kept fully reduced so membership is a
/// single elimination pass.
struct SpanBasis {
    rows: Vec<BTreeMap<(usize, Vec<BasisIndex>), Scalar>>,
}

type SpanVec = BTreeMap<(usize, Vec<BasisIndex>), Scalar>;

impl SpanBasis {
    fn new() -> SpanBasis {
        SpanBasis { rows: Vec::new() }
    }

    fn reduce(&self, mut v: SpanVec) -> SpanVec {
        for row in &self.rows {
            let pivot = row.keys().next().expect("empty row").clone();
            if let Some(c) = v.get(&pivot).cloned() {
                if c.is_zero() {
                    v.remove(&pivot);
                    continue;
                }
                for (key, rc) in row {
                    let delta = c.mul(rc);
                    let entry = v.remove(key);
                    let next = match entry {
                        Some(old) => old.sub(&delta),
                        None => delta.neg(),
                    };
                    if !next.is_zero() {
                        v.insert(key.clone(), next);
                    }
                }
            }
        }
        v
    }

    /// Insert the vector if independent; returns whether it was new.
    fn insert(&mut self, v: SpanVec) -> bool {
        let v = self.reduce(v);
        let Some(pivot) = v.keys().next().cloned() else {
            return false;
        };
        let lead = v.get(&pivot).unwrap().clone();
        let inv = lead.inv().expect("nonzero leading coefficient");
        let norm: SpanVec = v
            .iter()
            .map(|(k, c)| (k.clone(), c.mul(&inv)))
            .collect();
        // keep earlier rows reduced against the new pivot
        for row in &mut self.rows {
            if let Some(c) = row.get(&pivot).cloned() {
                for (key, rc) in &norm {
                    let delta = c.mul(rc);
                    let entry = row.remove(key);
                    let next = match entry {
                        Some(old) => old.sub(&delta),
                        None => delta.neg(),
                    };
                    if !next.is_zero() {
                        row.insert(key.clone(), next);
                    }
                }
            }
        }
        self.rows.push(norm);
        self.rows
            .sort_by(|a, b| a.keys().next().cmp(&b.keys().next()));
        true
    }

    fn contains(&self, v: SpanVec) -> bool {
        self.reduce(v).is_empty()
    }
}

fn span_vector(
    alg: &Heisenberg,
    f: &Field<Heisenberg>,
    tests: &[BasisIndex],
) -> Result<(SpanVec, i64), SigmaError> {
    let tk = alg.truncation_level();
    let mut v = SpanVec::new();
    let mut min_level = EXACT_LEVEL;
    for (pos, idx) in tests.iter().enumerate() {
        let val = f.eval_basis(*idx)?;
        min_level = min_level.min(val.level);
        let elem = alg.truncate(tk, &val.value);
        for (w, c) in elem.terms() {
            if !c.is_zero() {
                v.insert((pos, w.clone()), c.clone());
            }
        }
    }
    Ok((v, min_level))
}

/// Parameters of the generation sweep.
#[derive(Clone, Debug)]
pub struct GenerationConfig {
    /// Number of layer steps to build beyond the seed layer.
    pub steps: usize,
    /// Evaluation window whose basis vectors realize span membership.
    pub window: Window,
    /// Section multipliers used for the order-`<= 1` operator step.
    pub mult_basis: Vec<BasisIndex>,
    /// Closure probes: brackets of layer-`n` fields with pole order `m` are
    /// tested for membership in layer `n + 2m`, for `n <= closure_max_n` and
    /// `1 <= m <= closure_max_m`.
    pub closure_max_n: usize,
    pub closure_max_m: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerationReport {
    pub layer_sizes: Vec<usize>,
    pub closure_probes: usize,
    pub closure_failures: usize,
    pub min_level: i64,
    pub pass: bool,
}

/// Build the basic layers generated by `gens` and the unit: each step closes
/// under the order-`<= 1` operators (section multipliers and the derivation)
/// and the simple-pole bracket, keeping a spanning set of window-evaluation
/// vectors.  Closure probes certify that deeper-pole brackets fall into the
/// expected later layer.
pub fn generate_basic(
    cfg: &SigmaConfig,
    alg: &Heisenberg,
    gens: &[Field<Heisenberg>],
    gcfg: &GenerationConfig,
) -> Result<(Vec<Vec<Field<Heisenberg>>>, GenerationReport), SigmaError> {
    let tests = gcfg.window.indices(cfg.n());
    let mut span = SpanBasis::new();
    let mut fields: Vec<(Field<Heisenberg>, usize)> = Vec::new();
    let mut min_level = EXACT_LEVEL;
    let mut push = |span: &mut SpanBasis,
                    fields: &mut Vec<(Field<Heisenberg>, usize)>,
                    min_level: &mut i64,
                    f: Field<Heisenberg>,
                    layer: usize|
     -> Result<bool, SigmaError> {
        let (v, lvl) = span_vector(alg, &f, &tests)?;
        *min_level = (*min_level).min(lvl);
        if span.insert(v) {
            fields.push((f, layer));
            Ok(true)
        } else {
            Ok(false)
        }
    };
    for g in gens {
        push(&mut span, &mut fields, &mut min_level, g.clone(), 0)?;
    }
    push(
        &mut span,
        &mut fields,
        &mut min_level,
        Field::unit_dt(cfg, alg),
        0,
    )?;
    let mut layer_sizes = vec![fields.len()];
    let mut span_snapshots = vec![SpanBasis {
        rows: span.rows.clone(),
    }];
    for step in 0..gcfg.steps {
        let snapshot: Vec<(Field<Heisenberg>, usize)> = fields.clone();
        for (f, _) in &snapshot {
            push(
                &mut span,
                &mut fields,
                &mut min_level,
                f.act_dt(),
                step + 1,
            )?;
            for m in &gcfg.mult_basis {
                push(
                    &mut span,
                    &mut fields,
                    &mut min_level,
                    f.act_fn(&PhiSeries::basis(cfg, *m)),
                    step + 1,
                )?;
            }
        }
        for (f1, l1) in &snapshot {
            for (f2, l2) in &snapshot {
                // brackets of two earlier-layer fields were already absorbed
                if *l1 < step && *l2 < step && step > 0 {
                    continue;
                }
                push(
                    &mut span,
                    &mut fields,
                    &mut min_level,
                    Field::r_mu(f1, f2, 1)?,
                    step + 1,
                )?;
            }
        }
        layer_sizes.push(fields.len());
        span_snapshots.push(SpanBasis {
            rows: span.rows.clone(),
        });
    }
    // closure probes
    let mut closure_probes = 0;
    let mut closure_failures = 0;
    for n in 0..=gcfg.closure_max_n {
        for m in 1..=gcfg.closure_max_m {
            let target = n + 2 * m as usize;
            if target >= span_snapshots.len() {
                continue;
            }
            let layer_fields: Vec<&Field<Heisenberg>> = fields
                .iter()
                .filter(|(_, l)| *l <= n)
                .map(|(f, _)| f)
                .collect();
            for f1 in &layer_fields {
                for f2 in &layer_fields {
                    let probe = Field::r_mu(f1, f2, m)?;
                    let (v, lvl) = span_vector(alg, &probe, &tests)?;
                    min_level = min_level.min(lvl);
                    closure_probes += 1;
                    if !span_snapshots[target].contains(v) {
                        closure_failures += 1;
                    }
                }
            }
        }
    }
    let layers: Vec<Vec<Field<Heisenberg>>> = (0..layer_sizes.len())
        .map(|l| {
            fields
                .iter()
                .filter(|(_, fl)| *fl <= l)
                .map(|(f, _)| f.clone())
                .collect()
        })
        .collect();
    let report = GenerationReport {
        layer_sizes,
        closure_probes,
        closure_failures,
        min_level,
        pass: closure_failures == 0,
    };
    Ok((layers, report))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Serializable description of a field tree.  Constant nodes other than
/// units, jet probes and non-bracket 2-field restrictions have no stable
/// description and are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FieldRepr {
    Beta,
    Unit {
        density: PhiSeriesRepr,
    },
    MulFn {
        base: Box<FieldRepr>,
        g: PhiSeriesRepr,
    },
    Dt {
        base: Box<FieldRepr>,
    },
    Lin {
        terms: Vec<(String, FieldRepr)>,
    },
    RMu {
        x: Box<FieldRepr>,
        y: Box<FieldRepr>,
        num: Vec<(BasisIndex, PhiSeriesRepr)>,
        pole: u32,
    },
}

impl<A: CoeffAlgebra> Field<A> {
    pub fn to_repr(&self) -> Result<FieldRepr, SigmaError> {
        let names = self.cfg.params();
        match &*self.node {
            FieldNode::Beta => Ok(FieldRepr::Beta),
            FieldNode::Constant { elem, omega } => {
                if *elem == self.alg.one() {
                    Ok(FieldRepr::Unit {
                        density: omega.density.to_repr(),
                    })
                } else {
                    Err(SigmaError::Other(
                        "constant field with non-unit value is not serializable".into(),
                    ))
                }
            }
            FieldNode::MulFn { base, g } => Ok(FieldRepr::MulFn {
                base: Box::new(base.to_repr()?),
                g: g.to_repr(),
            }),
            FieldNode::Dt { base } => Ok(FieldRepr::Dt {
                base: Box::new(base.to_repr()?),
            }),
            FieldNode::Lin { terms } => {
                let mut out = Vec::new();
                for (s, f) in terms {
                    out.push((s.to_expr(names), f.to_repr()?));
                }
                Ok(FieldRepr::Lin { terms: out })
            }
            FieldNode::RMap { z } => match &*z.node {
                TwoFieldNode::Mu { x, y, pole, .. } => {
                    let num = pole
                        .numerator()
                        .anchored_terms()
                        .map(|(idx, vs)| (*idx, vs.to_repr()))
                        .collect();
                    Ok(FieldRepr::RMu {
                        x: Box::new(x.to_repr()?),
                        y: Box::new(y.to_repr()?),
                        num,
                        pole: pole.pole(),
                    })
                }
                _ => Err(SigmaError::Other(
                    "only bracket restrictions are serializable".into(),
                )),
            },
            FieldNode::JetProbe { .. } => Err(SigmaError::Other(
                "jet probes are not serializable".into(),
            )),
        }
    }

    pub fn from_repr(cfg: &SigmaConfig, alg: &A, repr: &FieldRepr) -> Result<Field<A>, SigmaError> {
        match repr {
            FieldRepr::Beta => Ok(Field::beta(cfg, alg)),
            FieldRepr::Unit { density } => Ok(Field::unit(
                cfg,
                alg,
                OneForm::new(PhiSeries::from_repr(density)?),
            )),
            FieldRepr::MulFn { base, g } => {
                Ok(Field::from_repr(cfg, alg, base)?.act_fn(&PhiSeries::from_repr(g)?))
            }
            FieldRepr::Dt { base } => Ok(Field::from_repr(cfg, alg, base)?.act_dt()),
            FieldRepr::Lin { terms } => {
                let mut out = Vec::new();
                for (expr, f) in terms {
                    let s = parse_scalar(expr, cfg.params())
                        .map_err(SigmaError::Scalar)?;
                    out.push((s, Field::from_repr(cfg, alg, f)?));
                }
                Ok(Field::lin(cfg, alg, out))
            }
            FieldRepr::RMu { x, y, num, pole } => {
                let x = Field::from_repr(cfg, alg, x)?;
                let y = Field::from_repr(cfg, alg, y)?;
                let pairs: Vec<(PhiSeries, PhiSeries)> = num
                    .iter()
                    .map(|(idx, vs)| {
                        Ok((PhiSeries::basis(cfg, *idx), PhiSeries::from_repr(vs)?))
                    })
                    .collect::<Result<_, SigmaError>>()?;
                let numerator = TwoVarSeries::poly_from_pairs(cfg, &pairs);
                let diag = LocalizedDiag::new(numerator, *pole)?;
                Ok(Field::r_map(&TwoField::mu(&x, &y, &diag)?))
            }
        }
    }
}

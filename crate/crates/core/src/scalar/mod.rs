//! The exact base field: rational functions in the configuration parameters
//! with integer coefficients, kept in canonical form.
//!
//! Canonical form invariants for [`Scalar`]:
//! * `den` is nonzero;
//! * `gcd(num, den)` is `1` (including integer content);
//! * the graded-lex leading coefficient of `den` is positive;
//! * zero is represented as `0 / 1`.
//!
//! Equality of canonical forms therefore decides equality in the field.
//! Arithmetic never divides by an unverified denominator: division by a zero
//! scalar is a caller error and panics, while *substitution* reports a
//! vanishing denominator as a recoverable [`ScalarError`].

mod mpoly;
mod parse;

pub use mpoly::{MPoly, Mono};
pub use parse::parse_scalar;

use num_bigint::BigInt;
use num_traits::{One, Signed};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScalarError {
    #[error("division by zero scalar")]
    DivisionByZero,
    #[error("substitution makes a denominator vanish")]
    DenominatorVanishes,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

/// Element of the fraction field `Q(x_0, .., x_{nvars-1})` in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Scalar {
    num: MPoly,
    den: MPoly,
}

impl Scalar {
    fn normalized(num: MPoly, den: MPoly) -> Scalar {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return Scalar {
                den: MPoly::one(num.nvars()),
                num,
            };
        }
        let g = MPoly::gcd(&num, &den);
        let mut num = num.exact_div(&g).expect("gcd divides numerator");
        let mut den = den.exact_div(&g).expect("gcd divides denominator");
        if den
            .leading()
            .map(|(_, c)| c.is_negative())
            .unwrap_or(false)
        {
            num = num.neg();
            den = den.neg();
        }
        Scalar { num, den }
    }

    pub fn zero(nvars: usize) -> Scalar {
        Scalar {
            num: MPoly::zero(nvars),
            den: MPoly::one(nvars),
        }
    }

    pub fn one(nvars: usize) -> Scalar {
        Scalar {
            num: MPoly::one(nvars),
            den: MPoly::one(nvars),
        }
    }

    pub fn from_int(nvars: usize, v: i64) -> Scalar {
        Scalar {
            num: MPoly::constant(nvars, BigInt::from(v)),
            den: MPoly::one(nvars),
        }
    }

    pub fn from_bigint(nvars: usize, v: BigInt) -> Scalar {
        Scalar {
            num: MPoly::constant(nvars, v),
            den: MPoly::one(nvars),
        }
    }

    pub fn from_ratio(nvars: usize, num: i64, den: i64) -> Scalar {
        assert!(den != 0);
        Self::normalized(
            MPoly::constant(nvars, BigInt::from(num)),
            MPoly::constant(nvars, BigInt::from(den)),
        )
    }

    /// The parameter `x_v` as a scalar.
    pub fn param(nvars: usize, v: usize) -> Scalar {
        Scalar {
            num: MPoly::var(nvars, v),
            den: MPoly::one(nvars),
        }
    }

    pub fn from_poly(num: MPoly) -> Scalar {
        let n = num.nvars();
        Scalar {
            num,
            den: MPoly::one(n),
        }
    }

    pub fn from_fraction(num: MPoly, den: MPoly) -> Scalar {
        Self::normalized(num, den)
    }

    pub fn nvars(&self) -> usize {
        self.num.nvars()
    }

    pub fn numerator(&self) -> &MPoly {
        &self.num
    }

    pub fn denominator(&self) -> &MPoly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// Shared implementation of `add`/`sub`, Henrici style: cancel the
    /// common denominator part `g = gcd(d1, d2)` before forming any product,
    /// then reduce the combined numerator against `g` only.  Because the
    /// inputs are in lowest terms, the result is provably in lowest terms as
    /// well, so no further gcd is needed — this keeps long summation chains
    /// (Horner evaluation, series convolution) from ballooning.
    fn add_signed(&self, other: &Scalar, negate: bool) -> Scalar {
        let flip = |p: MPoly| if negate { p.neg() } else { p };
        if self.is_zero() {
            return Scalar {
                num: flip(other.num.clone()),
                den: other.den.clone(),
            };
        }
        if other.is_zero() {
            return self.clone();
        }
        let g = MPoly::gcd(&self.den, &other.den);
        let d1g = self.den.exact_div(&g).expect("gcd divides");
        let d2g = other.den.exact_div(&g).expect("gcd divides");
        let t = self.num.mul(&d2g).add(&flip(other.num.mul(&d1g)));
        if t.is_zero() {
            return Self::zero(self.nvars());
        }
        let g2 = MPoly::gcd(&t, &g);
        let num = t.exact_div(&g2).expect("gcd divides");
        let den = d1g
            .mul(&d2g)
            .mul(&g.exact_div(&g2).expect("gcd divides"));
        Scalar { num, den }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        self.add_signed(other, false)
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        self.add_signed(other, true)
    }

    pub fn neg(&self) -> Scalar {
        Scalar {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.nvars());
        }
        // Cross-reduce first; with both inputs in lowest terms the remaining
        // product is in lowest terms, so no final gcd is needed.
        let g1 = MPoly::gcd(&self.num, &other.den);
        let g2 = MPoly::gcd(&other.num, &self.den);
        let n1 = self.num.exact_div(&g1).expect("gcd divides");
        let d2 = other.den.exact_div(&g1).expect("gcd divides");
        let n2 = other.num.exact_div(&g2).expect("gcd divides");
        let d1 = self.den.exact_div(&g2).expect("gcd divides");
        Scalar {
            num: n1.mul(&n2),
            den: d1.mul(&d2),
        }
    }

    pub fn mul_int(&self, k: i64) -> Scalar {
        self.mul(&Scalar::from_int(self.nvars(), k))
    }

    pub fn inv(&self) -> Result<Scalar, ScalarError> {
        if self.is_zero() {
            return Err(ScalarError::DivisionByZero);
        }
        // already in lowest terms; only the denominator sign needs fixing
        let mut num = self.den.clone();
        let mut den = self.num.clone();
        if den
            .leading()
            .map(|(_, c)| c.is_negative())
            .unwrap_or(false)
        {
            num = num.neg();
            den = den.neg();
        }
        Ok(Scalar { num, den })
    }

    pub fn div(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn pow(&self, e: i64) -> Result<Scalar, ScalarError> {
        if e < 0 {
            return self.inv()?.pow(-e);
        }
        let mut acc = Scalar::one(self.nvars());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        Ok(acc)
    }

    /// Substitute parameters by scalar values (a field homomorphism wherever
    /// every denominator survives).
    pub fn substitute(&self, s: &Substitution) -> Result<Scalar, ScalarError> {
        let num = s.eval_poly(&self.num);
        let den = s.eval_poly(&self.den);
        if den.is_zero() {
            return Err(ScalarError::DenominatorVanishes);
        }
        num.div(&den)
    }

    /// Rational value if the scalar is parameter-free.
    pub fn as_rational(&self) -> Option<(BigInt, BigInt)> {
        Some((self.num.as_constant()?, self.den.as_constant()?))
    }

    /// Fully parenthesized expression over integers and the given parameter
    /// names; [`parse_scalar`] reads it back losslessly.
    pub fn to_expr(&self, names: &[String]) -> String {
        assert_eq!(names.len(), self.nvars());
        let n = poly_expr(&self.num, names);
        if self.den.is_constant() && self.den.as_constant().map(|c| c.is_one()).unwrap_or(false) {
            n
        } else {
            format!("({} / {})", n, poly_expr(&self.den, names))
        }
    }
}

fn poly_expr(p: &MPoly, names: &[String]) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut parts = Vec::new();
    for (m, c) in p.terms() {
        let mut factors = Vec::new();
        if !c.is_one() || m.is_constant() {
            factors.push(format!("{}", c));
        }
        for (i, &e) in m.0.iter().enumerate() {
            match e {
                0 => {}
                1 => factors.push(names[i].clone()),
                _ => factors.push(format!("({} ^ {})", names[i], e)),
            }
        }
        let term = if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            format!("({})", factors.join(" * "))
        };
        parts.push(term);
    }
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        format!("({})", parts.join(" + "))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars()).map(|i| format!("x{}", i)).collect();
        write!(f, "{}", self.to_expr(&names))
    }
}

/// Assignment of scalar values to a subset of the parameters; unassigned
/// parameters stay symbolic.  Values may themselves involve parameters, which
/// covers both numeric specialization and parameter renaming.
#[derive(Clone, Debug, PartialEq)]
pub struct Substitution {
    nvars: usize,
    map: BTreeMap<usize, Scalar>,
}

impl Substitution {
    pub fn identity(nvars: usize) -> Substitution {
        Substitution {
            nvars,
            map: BTreeMap::new(),
        }
    }

    /// Build from `(parameter index, value)` pairs.
    pub fn new(nvars: usize, assignments: impl IntoIterator<Item = (usize, Scalar)>) -> Substitution {
        let mut map = BTreeMap::new();
        for (i, v) in assignments {
            assert!(i < nvars, "parameter index out of range");
            assert_eq!(v.nvars(), nvars, "substitution value has wrong arity");
            map.insert(i, v);
        }
        Substitution { nvars, map }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize) -> Option<&Scalar> {
        self.map.get(&i)
    }

    pub fn set(&mut self, i: usize, value: Scalar) {
        assert!(i < self.nvars, "parameter index out of range");
        assert_eq!(value.nvars(), self.nvars, "substitution value has wrong arity");
        self.map.insert(i, value);
    }

    pub fn assignments(&self) -> impl Iterator<Item = (usize, &Scalar)> {
        self.map.iter().map(|(i, v)| (*i, v))
    }

    fn eval_poly(&self, p: &MPoly) -> Scalar {
        let vals: Vec<Scalar> = (0..self.nvars)
            .map(|i| {
                self.map
                    .get(&i)
                    .cloned()
                    .unwrap_or_else(|| Scalar::param(self.nvars, i))
            })
            .collect();
        p.eval_with(
            &vals,
            &|c| Scalar::from_bigint(self.nvars, c.clone()),
            &|a, b| a.add(b),
            &|a, b| a.mul(b),
            Scalar::one(self.nvars),
        )
    }

    /// Apply to a scalar (delegates to [`Scalar::substitute`]).
    pub fn apply(&self, s: &Scalar) -> Result<Scalar, ScalarError> {
        s.substitute(self)
    }
}

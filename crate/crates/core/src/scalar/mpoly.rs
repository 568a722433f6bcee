//! Sparse multivariate polynomials over arbitrary-precision integers.
//!
//! Representation: `BTreeMap` from exponent vectors to nonzero `BigInt`
//! coefficients, ordered graded-lexicographically (total degree first, then
//! lexicographic with variable 0 most significant).  Invariants:
//! * every stored coefficient is nonzero;
//! * every exponent vector has length `nvars`.
//!
//! The polynomial ring is only used for parameter coefficients, so variable
//! counts are tiny (at most a handful) while degrees and coefficient sizes
//! can still grow in long computations.  The gcd therefore layers fast exact
//! paths (trial division, an evaluation-based coprimality certificate, and a
//! division-verified evaluation/reconstruction heuristic) over a primitive
//! polynomial-remainder-sequence fallback, which is exact for all inputs.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector with graded-lexicographic ordering.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Mono(pub Vec<u32>);

impl Mono {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn mul(&self, other: &Mono) -> Mono {
        Mono(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Componentwise difference if `other` divides `self`.
    fn div(&self, other: &Mono) -> Option<Mono> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return None;
            }
            out.push(a - b);
        }
        Some(Mono(out))
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial over `BigInt`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MPoly {
    nvars: usize,
    terms: BTreeMap<Mono, BigInt>,
}

impl MPoly {
    pub fn zero(nvars: usize) -> Self {
        MPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: BigInt) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Mono(vec![0; nvars]), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigInt::one())
    }

    /// The monomial `x_v` (a single variable to the first power).
    pub fn var(nvars: usize, v: usize) -> Self {
        assert!(v < nvars, "variable index out of range");
        let mut e = vec![0u32; nvars];
        e[v] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(Mono(e), BigInt::one());
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() <= 1 && self.terms.keys().all(|m| m.is_constant())
    }

    /// Constant value if the polynomial is constant.
    pub fn as_constant(&self) -> Option<BigInt> {
        if self.terms.is_empty() {
            return Some(BigInt::zero());
        }
        if self.terms.len() == 1 {
            let (m, c) = self.terms.iter().next().unwrap();
            if m.is_constant() {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &BigInt)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.total_degree())
            .max()
            .unwrap_or(0)
    }

    /// Degree in one variable.
    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|m| m.0[v]).max().unwrap_or(0)
    }

    /// Graded-lex leading term (max monomial), if nonzero.
    pub fn leading(&self) -> Option<(&Mono, &BigInt)> {
        self.terms.iter().next_back()
    }

    fn insert_add(&mut self, m: Mono, c: BigInt) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &MPoly) -> MPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert_add(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &MPoly) -> MPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert_add(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> MPoly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -std::mem::take(c);
        }
        out
    }

    pub fn mul(&self, other: &MPoly) -> MPoly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert_add(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn mul_bigint(&self, c: &BigInt) -> MPoly {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn pow(&self, e: u32) -> MPoly {
        let mut acc = Self::one(self.nvars);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact division; `None` if `self` is not a polynomial multiple of `d`.
    pub fn exact_div(&self, d: &MPoly) -> Option<MPoly> {
        assert_eq!(self.nvars, d.nvars);
        assert!(!d.is_zero(), "division by zero polynomial");
        let (dm, dc) = d.leading().unwrap();
        let mut rem = self.clone();
        let mut quo = Self::zero(self.nvars);
        while let Some((rm, rc)) = rem.leading() {
            let qm = rm.div(dm)?;
            let (q, r) = rc.div_rem(dc);
            if !r.is_zero() {
                return None;
            }
            // rem -= (q * qm) * d
            for (m, c) in &d.terms {
                rem.insert_add(qm.mul(m), -(&q * c));
            }
            quo.insert_add(qm, q);
        }
        Some(quo)
    }

    /// Gcd of all integer coefficients (non-negative; 0 for the zero poly).
    pub fn int_content(&self) -> BigInt {
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            g = g.gcd(c);
            if g.is_one() {
                break;
            }
        }
        g
    }

    /// Divide out the integer content and make the leading coefficient
    /// positive.  Returns the normalized polynomial.
    pub fn int_primitive(&self) -> MPoly {
        if self.is_zero() {
            return self.clone();
        }
        let mut g = self.int_content();
        if self.leading().unwrap().1.is_negative() {
            g = -g;
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = &*c / &g;
        }
        out
    }

    /// View as a dense polynomial in variable `v` with `MPoly` coefficients
    /// (in the remaining variables, still represented with full `nvars`).
    fn coeffs_in(&self, v: usize) -> Vec<MPoly> {
        let d = self.degree_in(v) as usize;
        let mut out = vec![Self::zero(self.nvars); d + 1];
        for (m, c) in &self.terms {
            let e = m.0[v] as usize;
            let mut m2 = m.clone();
            m2.0[v] = 0;
            out[e].insert_add(m2, c.clone());
        }
        out
    }

    fn from_coeffs_in(nvars: usize, v: usize, coeffs: &[MPoly]) -> MPoly {
        let mut out = Self::zero(nvars);
        for (e, p) in coeffs.iter().enumerate() {
            for (m, c) in &p.terms {
                let mut m2 = m.clone();
                m2.0[v] += e as u32;
                out.insert_add(m2, c.clone());
            }
        }
        out
    }

    /// Content with respect to variable `v`: gcd of the coefficient
    /// polynomials.
    fn content_in(&self, v: usize) -> MPoly {
        let mut g = Self::zero(self.nvars);
        for c in self.coeffs_in(v) {
            if !c.is_zero() {
                g = Self::gcd(&g, &c);
                if g.is_constant() && !g.is_zero() {
                    // gcd of contents can still shrink to 1 via int content
                    if g.as_constant().map(|x| x.is_one()).unwrap_or(false) {
                        break;
                    }
                }
            }
        }
        g
    }

    /// Pseudo-remainder of `self` by `d` with respect to variable `v`:
    /// `lc(d)^(deg a - deg d + 1) * a = q*d + r` with `deg_v r < deg_v d`.
    fn pseudo_rem(&self, d: &MPoly, v: usize) -> MPoly {
        let da = self.degree_in(v);
        let db = d.degree_in(v);
        assert!(db <= da && !d.is_zero());
        let mut a = self.coeffs_in(v);
        let b = d.coeffs_in(v);
        let lc_b = b.last().unwrap().clone();
        let mut k = da as i64 - db as i64 + 1;
        while a.len() >= b.len() && !a.iter().all(|c| c.is_zero()) {
            // strip trailing zeros
            while a.last().map(|c| c.is_zero()).unwrap_or(false) {
                a.pop();
            }
            if a.len() < b.len() {
                break;
            }
            let shift = a.len() - b.len();
            let lc_a = a.last().unwrap().clone();
            // a = lc_b * a - lc_a * x^shift * b
            for c in a.iter_mut() {
                *c = c.mul(&lc_b);
            }
            for (i, bc) in b.iter().enumerate() {
                let t = lc_a.mul(bc);
                a[i + shift] = a[i + shift].sub(&t);
            }
            k -= 1;
            // top coefficient cancels
            a.pop();
        }
        let mut r = Self::from_coeffs_in(self.nvars, v, &a);
        // multiply by remaining powers of lc_b so the full pseudo-remainder
        // identity holds (keeps divisibility theory intact; harmless since we
        // take primitive parts right after)
        while k > 0 {
            r = r.mul(&lc_b);
            k -= 1;
        }
        r
    }

    /// Largest absolute value among the integer coefficients.
    fn max_norm(&self) -> BigInt {
        self.terms
            .values()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Substitute the integer `x` for variable `v`; the result no longer
    /// involves `v`.
    fn eval_var(&self, v: usize, x: &BigInt) -> MPoly {
        let mut pows: Vec<BigInt> = vec![BigInt::one()];
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[v] as usize;
            while pows.len() <= e {
                pows.push(pows.last().unwrap() * x);
            }
            let mut m2 = m.clone();
            m2.0[v] = 0;
            out.insert_add(m2, c * &pows[e]);
        }
        out
    }

    /// Dense coefficient list (low to high) of the univariate polynomial in
    /// variable `keep` obtained by substituting `vals[i]` for every other
    /// variable.
    fn univariate_image(&self, keep: usize, vals: &[BigInt]) -> Vec<BigInt> {
        self.coeffs_in(keep)
            .iter()
            .map(|c| {
                c.eval_with(
                    vals,
                    &|n| n.clone(),
                    &|a, b| a + b,
                    &|a, b| a * b,
                    BigInt::one(),
                )
            })
            .collect()
    }

    /// Polynomial gcd over the integers, normalized to a positive leading
    /// coefficient; integer contents are included (`gcd(0, p) = |p|`).
    ///
    /// Strategy, fastest first: constant base cases; mutual trial division
    /// (dominant when reducing fractions whose denominators share factor
    /// chains); a rigorous coprimality certificate from univariate images;
    /// an evaluation/reconstruction heuristic verified by exact division;
    /// and a primitive remainder sequence as the unconditional fallback.
    pub fn gcd(p: &MPoly, q: &MPoly) -> MPoly {
        assert_eq!(p.nvars, q.nvars);
        if p.is_zero() {
            return q.int_primitive().mul_bigint(&q.int_content());
        }
        if q.is_zero() {
            return p.int_primitive().mul_bigint(&p.int_content());
        }
        if p.is_constant() || q.is_constant() {
            let g = p.int_content().gcd(&q.int_content());
            return Self::constant(p.nvars, g);
        }
        let gi = p.int_content().gcd(&q.int_content());
        Self::gcd_primitive(&p.int_primitive(), &q.int_primitive()).mul_bigint(&gi)
    }

    /// Gcd of two nonzero integer-primitive polynomials.  The result is
    /// primitive with positive leading coefficient (Gauss's lemma).
    fn gcd_primitive(p: &MPoly, q: &MPoly) -> MPoly {
        if p.is_constant() || q.is_constant() {
            return Self::one(p.nvars);
        }
        if q.exact_div(p).is_some() {
            return p.clone();
        }
        if p.exact_div(q).is_some() {
            return q.clone();
        }
        if Self::proven_coprime(p, q) {
            return Self::one(p.nvars);
        }
        if let Some(g) = Self::gcd_heuristic(p, q) {
            if !g.is_constant() {
                let pr = p.exact_div(&g).expect("verified divisor").int_primitive();
                let qr = q.exact_div(&g).expect("verified divisor").int_primitive();
                // `g` is a verified common divisor; recursing on the quotients
                // certifies maximality.
                return g.mul(&Self::gcd_primitive(&pr, &qr));
            }
        }
        Self::gcd_prs(p, q)
    }

    /// Try to prove that `gcd(p, q)` is constant.  For each variable present
    /// in both inputs, the gcd's degree in that variable is bounded by the
    /// degree of the gcd of univariate images under any integer substitution
    /// of the remaining variables that keeps the leading coefficient of `p`
    /// nonzero (the gcd's leading coefficient divides it, so its degree
    /// survives the substitution).  `false` means "not proven", never
    /// "nontrivial".
    fn proven_coprime(p: &MPoly, q: &MPoly) -> bool {
        fn next_small(state: &mut u64) -> BigInt {
            *state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let r = ((*state >> 33) % 197) as i64 - 98;
            BigInt::from(if r == 0 { 17 } else { r })
        }
        let nv = p.nvars;
        let mut state = 0x9e3779b97f4a7c15u64;
        'vars: for v in 0..nv {
            if p.degree_in(v) == 0 || q.degree_in(v) == 0 {
                continue; // the gcd cannot involve this variable
            }
            let lc = p.coeffs_in(v).pop().expect("nonzero polynomial");
            for _attempt in 0..4 {
                let vals: Vec<BigInt> = (0..nv).map(|_| next_small(&mut state)).collect();
                let lc_val = lc.eval_with(
                    &vals,
                    &|n| n.clone(),
                    &|a, b| a + b,
                    &|a, b| a * b,
                    BigInt::one(),
                );
                if lc_val.is_zero() {
                    continue;
                }
                let a = p.univariate_image(v, &vals);
                let b = q.univariate_image(v, &vals);
                if uni_gcd_degree(a, b) == 0 {
                    continue 'vars;
                }
            }
            return false;
        }
        true
    }

    /// Evaluation/reconstruction gcd attempt: substitute a large integer for
    /// the top variable, recurse on the images, and lift the image gcd back
    /// through balanced base-`xi` digits.  Any returned polynomial has been
    /// verified to divide both inputs exactly; `None` means the heuristic
    /// gave up and the caller should fall back to the remainder sequence.
    fn gcd_heuristic(p: &MPoly, q: &MPoly) -> Option<MPoly> {
        let nv = p.nvars;
        let v = match (0..nv)
            .rev()
            .find(|&i| p.degree_in(i) > 0 || q.degree_in(i) > 0)
        {
            None => {
                let g = p.int_content().gcd(&q.int_content());
                return Some(Self::constant(nv, g));
            }
            Some(v) => v,
        };
        let mut xi = BigInt::from(2) * p.max_norm().min(q.max_norm()) + BigInt::from(29);
        for _ in 0..6 {
            let gp = p.eval_var(v, &xi);
            let gq = q.eval_var(v, &xi);
            if !gp.is_zero() && !gq.is_zero() {
                if let Some(image) = Self::gcd_heuristic(&gp, &gq) {
                    let g = Self::lift_digits(&image, v, &xi).int_primitive();
                    if !g.is_zero() && p.exact_div(&g).is_some() && q.exact_div(&g).is_some() {
                        return Some(g);
                    }
                }
            }
            xi = (&xi * BigInt::from(73794)) / BigInt::from(27011);
        }
        None
    }

    /// Read the balanced base-`xi` digit expansion of `image` (which does not
    /// involve variable `v`) off as a polynomial in `v`.
    fn lift_digits(image: &MPoly, v: usize, xi: &BigInt) -> MPoly {
        let mut out = Self::zero(image.nvars);
        let mut cur = image.clone();
        let mut e: u32 = 0;
        while !cur.is_zero() {
            if e > 4096 {
                // unreachable for xi >= 2; guard against a runaway loop
                return Self::zero(image.nvars);
            }
            let mut next = Self::zero(image.nvars);
            for (m, c) in &cur.terms {
                let mut r = c.mod_floor(xi);
                if (&r + &r) > *xi {
                    r -= xi;
                }
                if !r.is_zero() {
                    let mut m2 = m.clone();
                    m2.0[v] = e;
                    out.insert_add(m2, r.clone());
                }
                let rest = (c - &r) / xi;
                if !rest.is_zero() {
                    next.insert_add(m.clone(), rest);
                }
            }
            cur = next;
            e += 1;
        }
        out
    }

    /// Primitive polynomial remainder sequence: exact for all inputs, used
    /// when the fast paths are inconclusive.  Inputs are nonzero,
    /// non-constant and integer-primitive.
    fn gcd_prs(p: &MPoly, q: &MPoly) -> MPoly {
        // main variable: highest index occurring in either
        let mut v = None;
        for i in (0..p.nvars).rev() {
            if p.degree_in(i) > 0 || q.degree_in(i) > 0 {
                v = Some(i);
                break;
            }
        }
        let v = v.expect("non-constant polynomial must involve a variable");
        if p.degree_in(v) == 0 || q.degree_in(v) == 0 {
            // one of them does not involve the main variable: gcd divides the
            // content of the other
            let (with_v, without_v) = if p.degree_in(v) == 0 { (q, p) } else { (p, q) };
            let cont = with_v.content_in(v);
            return Self::gcd(&cont, without_v).int_primitive();
        }
        let cont_p = p.content_in(v);
        let cont_q = q.content_in(v);
        let cont_g = Self::gcd(&cont_p, &cont_q);
        let pp_p = p.exact_div(&cont_p).expect("content divides");
        let pp_q = q.exact_div(&cont_q).expect("content divides");
        let (mut a, mut b) = if pp_p.degree_in(v) >= pp_q.degree_in(v) {
            (pp_p, pp_q)
        } else {
            (pp_q, pp_p)
        };
        loop {
            let r = a.pseudo_rem(&b, v);
            if r.is_zero() {
                break;
            }
            let r = {
                let c = r.content_in(v);
                r.exact_div(&c).expect("content divides").int_primitive()
            };
            a = b;
            b = r;
            if b.degree_in(v) == 0 {
                break;
            }
        }
        let g = if b.degree_in(v) == 0 {
            // coprime in v; gcd is the content gcd only
            Self::one(p.nvars)
        } else {
            let c = b.content_in(v);
            b.exact_div(&c).expect("content divides").int_primitive()
        };
        cont_g.mul(&g).int_primitive()
    }

    /// Evaluate by substituting `vals[i]` for variable `i`, with coefficients
    /// mapped into any commutative ring through the supplied operations.
    pub fn eval_with<T: Clone>(
        &self,
        vals: &[T],
        from_int: &dyn Fn(&BigInt) -> T,
        add: &dyn Fn(&T, &T) -> T,
        mul: &dyn Fn(&T, &T) -> T,
        one: T,
    ) -> T {
        assert_eq!(vals.len(), self.nvars);
        // memoized powers per variable
        let mut pows: Vec<Vec<T>> = vals.iter().map(|v| vec![one.clone(), v.clone()]).collect();
        let mut acc = from_int(&BigInt::zero());
        for (m, c) in &self.terms {
            let mut term = from_int(c);
            for (i, &e) in m.0.iter().enumerate() {
                let e = e as usize;
                while pows[i].len() <= e {
                    let last = pows[i].last().unwrap().clone();
                    pows[i].push(mul(&last, &vals[i]));
                }
                if e > 0 {
                    term = mul(&term, &pows[i][e]);
                }
            }
            acc = add(&acc, &term);
        }
        acc
    }
}

/// Degree of the gcd of two dense univariate integer polynomials given as
/// low-to-high coefficient lists, via a primitive Euclidean remainder
/// sequence.  An empty list is the zero polynomial.
fn uni_gcd_degree(mut a: Vec<BigInt>, mut b: Vec<BigInt>) -> usize {
    fn trim(v: &mut Vec<BigInt>) {
        while v.last().map(|c| c.is_zero()).unwrap_or(false) {
            v.pop();
        }
    }
    fn primitive(v: &mut [BigInt]) {
        let mut g = BigInt::zero();
        for c in v.iter() {
            g = g.gcd(c);
            if g.is_one() {
                return;
            }
        }
        if g.is_zero() || g.is_one() {
            return;
        }
        for c in v.iter_mut() {
            *c = &*c / &g;
        }
    }
    trim(&mut a);
    trim(&mut b);
    loop {
        if a.len() < b.len() {
            std::mem::swap(&mut a, &mut b);
        }
        if b.is_empty() {
            return a.len().saturating_sub(1);
        }
        if b.len() == 1 {
            return 0;
        }
        primitive(&mut a);
        primitive(&mut b);
        // pseudo-remainder of a by b
        while a.len() >= b.len() {
            let shift = a.len() - b.len();
            let la = a.last().expect("nonempty").clone();
            let lb = b.last().expect("nonempty").clone();
            for c in a.iter_mut() {
                *c = &*c * &lb;
            }
            for (i, bc) in b.iter().enumerate() {
                a[i + shift] -= &la * bc;
            }
            a.pop();
            trim(&mut a);
        }
        // the remainder becomes the new smaller entry
        std::mem::swap(&mut a, &mut b);
    }
}

impl fmt::Display for MPoly {
    /// Debug-style display with generic variable names `x0, x1, ...`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", c)?;
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    write!(f, "*x{}^{}", i, e)?;
                }
            }
        }
        Ok(())
    }
}

//! Two-variable expansions: the diagonal kernel, exp series, contractions,
//! the Cauchy identity, and diagonal localization.

use chiral_core::sample::Sampler;
use chiral_core::scalar::Scalar;
use chiral_core::sigma::{BasisIndex, PhiSeries, SigmaConfig};
use chiral_core::twovar::{
    cauchy_check, LocalizedDiag, Orientation, ThreeVarPole, ThreeVarPoly, TwoVarSeries,
};

fn idx(m: i64, i: u32) -> BasisIndex {
    BasisIndex::new(m, i)
}

/// n = 1 with the single root at 0 (so the basis is plain powers of t).
fn numeric_n1(truncation: i64) -> SigmaConfig {
    SigmaConfig::with_roots(vec![], vec![Scalar::from_int(0, 0)], truncation)
}

#[test]
fn delta_and_diag_restrict() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 8);
        let d = TwoVarSeries::delta(&cfg);
        assert!(d.diag_restrict().unwrap().is_zero());
    }
}

#[test]
fn diag_restrict_of_product() {
    // (t (x) 1) * (1 (x) t) -> t^2
    let cfg = numeric_n1(8);
    let t = PhiSeries::coordinate(&cfg);
    let one = PhiSeries::one(&cfg);
    let a = TwoVarSeries::tensor(&t, &one);
    let b = TwoVarSeries::tensor(&one, &t);
    let p = TwoVarSeries::mul_two(&a, &b).unwrap();
    assert_eq!(p.diag_restrict().unwrap(), t.mul(&t));
}

#[test]
fn mul_by_unit_is_identity() {
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(7);
    let x = s.poly_tensor(&cfg, 2, 3);
    let one = TwoVarSeries::one(&cfg);
    // content equality (window metadata may shrink conservatively)
    assert!(TwoVarSeries::mul_two(&x, &one)
        .unwrap()
        .sub(&x)
        .unwrap()
        .is_zero());
    assert!(TwoVarSeries::mul_two(&one, &x)
        .unwrap()
        .sub(&x)
        .unwrap()
        .is_zero());
}

#[test]
fn disjoint_slot_product() {
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(8);
    let f = s.phi_series(&cfg, -2, 3, 3);
    let g = s.phi_series(&cfg, -2, 3, 3);
    let one = PhiSeries::one(&cfg);
    let lhs = TwoVarSeries::mul_two(
        &TwoVarSeries::tensor(&f, &one),
        &TwoVarSeries::tensor(&one, &g),
    )
    .unwrap();
    assert!(lhs.sub(&TwoVarSeries::tensor(&f, &g)).unwrap().is_zero());
}

#[test]
fn delta_squared_matches_monomials() {
    // delta^2 = t^2 (x) 1 - 2 t (x) t + 1 (x) t^2
    let cfg = SigmaConfig::standard(2, 8);
    let d = TwoVarSeries::delta(&cfg);
    let d2 = TwoVarSeries::mul_two(&d, &d).unwrap();
    let t = PhiSeries::coordinate(&cfg);
    let one = PhiSeries::one(&cfg);
    let expect = TwoVarSeries::poly_from_pairs(
        &cfg,
        &[
            (t.mul(&t), one.clone()),
            (t.scalar_mul(&Scalar::from_int(2, -2)), t.clone()),
            (one, t.mul(&t)),
        ],
    );
    assert_eq!(d2, expect);
}

#[test]
fn exp_r1_terms_numeric() {
    // n=1, root 0: exp_r1 = sum_m u^{-m-1} (x) v^m
    let cfg = numeric_n1(8);
    let e = TwoVarSeries::exp_r1(&cfg, 5).unwrap();
    let terms: Vec<_> = e.anchored_terms().collect();
    assert_eq!(terms.len(), 5);
    for (key, val) in terms {
        assert_eq!(key.i, 0);
        let m = key.m;
        assert!(m >= 0 && m < 5);
        assert_eq!(val.num_terms(), 1);
        assert_eq!(val.coeff(idx(-m - 1, 0)), Scalar::one(0));
    }
}

#[test]
fn exp_r1_first_terms_symbolic() {
    // n=2 leading terms: 1/(u-a1) + (v-a1)/((u-a1)(u-a2)) + ...
    // term (0,0): u-part = phi^-1 (t-a2) = b_{-1,1} + (a1-a2) b_{-1,0}
    // term (0,1): u-part = phi^-1     = b_{-1,0}
    let cfg = SigmaConfig::standard(2, 8);
    let a1 = Scalar::param(2, 0);
    let a2 = Scalar::param(2, 1);
    let e = TwoVarSeries::exp_r1(&cfg, 4).unwrap();
    let u00 = e
        .anchored_terms()
        .find(|(k, _)| **k == idx(0, 0))
        .unwrap()
        .1;
    assert_eq!(u00.coeff(idx(-1, 1)), Scalar::one(2));
    assert_eq!(u00.coeff(idx(-1, 0)), a1.sub(&a2));
    assert_eq!(u00.num_terms(), 2);
    let u01 = e
        .anchored_terms()
        .find(|(k, _)| **k == idx(0, 1))
        .unwrap()
        .1;
    assert_eq!(u01.coeff(idx(-1, 0)), Scalar::one(2));
    assert_eq!(u01.num_terms(), 1);
}

#[test]
fn expansion_inverse_right_and_left() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let d = TwoVarSeries::delta(&cfg);
        let one = TwoVarSeries::one(&cfg);
        for depth in [4_i64, 6] {
            let er = TwoVarSeries::exp_r1(&cfg, depth).unwrap();
            let p = TwoVarSeries::mul_two(&d, &er).unwrap().sub(&one).unwrap();
            assert!(p.is_zero(), "right inverse failed n={}", n);
            assert!(p.depth() >= depth - 1);

            let el = TwoVarSeries::exp_l1(&cfg, depth).unwrap();
            let q = TwoVarSeries::mul_two(&d, &el).unwrap().sub(&one).unwrap();
            assert!(q.is_zero(), "left inverse failed n={}", n);
            assert!(q.depth() >= depth - 1);
        }
    }
}

#[test]
fn h_identity() {
    // phi(u) - phi(v) = (u - v) * h with h = sum_i chi+_i(u) chi-_{n-1-i}(v)
    for n in 1..=4 {
        let cfg = SigmaConfig::standard(n, 8);
        let pairs: Vec<(PhiSeries, PhiSeries)> = (0..n as u32)
            .map(|i| {
                (
                    PhiSeries::from_tpoly(&cfg, &cfg.chi_plus(i)),
                    PhiSeries::from_tpoly(&cfg, &cfg.chi_minus(n as u32 - 1 - i)),
                )
            })
            .collect();
        let h = TwoVarSeries::poly_from_pairs(&cfg, &pairs);
        let lhs = TwoVarSeries::mul_two(&TwoVarSeries::delta(&cfg), &h).unwrap();
        let phi = PhiSeries::from_tpoly(&cfg, &cfg.phi());
        let one = PhiSeries::one(&cfg);
        let rhs = TwoVarSeries::tensor(&phi, &one)
            .sub(&TwoVarSeries::tensor(&one, &phi))
            .unwrap();
        assert_eq!(lhs, rhs, "h identity failed n={}", n);
    }
}

#[test]
fn contraction_oracles() {
    // T_r(b+_{-1,n-1} (x) g) = g ; T_r(1 (x) g) = 0
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(21);
    let g = s.phi_series(&cfg, -2, 3, 3);
    let x = TwoVarSeries::tensor(&PhiSeries::basis(&cfg, idx(-1, 1)), &g)
        .promote(Orientation::Right);
    assert_eq!(x.contract_r().unwrap(), g);
    let y = TwoVarSeries::tensor(&PhiSeries::one(&cfg), &g).promote(Orientation::Right);
    assert!(y.contract_r().unwrap().is_zero());
}

#[test]
fn contraction_of_expansions_numeric() {
    // n=1, root 0: T_r((u^-1 (x) 1) exp_r1) = 0 and
    //              T_l((u^-1 (x) 1) exp_l1) = -v^-1
    let cfg = numeric_n1(8);
    let um1 = PhiSeries::basis(&cfg, idx(-1, 0));
    let f = TwoVarSeries::tensor(&um1, &PhiSeries::one(&cfg));
    let er = TwoVarSeries::exp_r1(&cfg, 6).unwrap();
    let tr = TwoVarSeries::mul_two(&f, &er)
        .unwrap()
        .contract_r()
        .unwrap();
    assert!(tr.is_zero());
    let el = TwoVarSeries::exp_l1(&cfg, 6).unwrap();
    let tl = TwoVarSeries::mul_two(&f, &el)
        .unwrap()
        .contract_l()
        .unwrap();
    assert!(tl.valid_to() >= 6, "window collapsed: {}", tl.valid_to());
    assert!(tl.sub(&um1.neg()).is_zero());
}

#[test]
fn cauchy_unit_example() {
    // f = 1 (x) 1: T_r - T_l = 1 = diag(f)
    for n in 1..=2 {
        let cfg = SigmaConfig::standard(n, 8);
        let f = TwoVarSeries::one(&cfg);
        let sides = cauchy_check(&f, 6).unwrap();
        assert_eq!(sides.rhs, PhiSeries::one(&cfg));
        assert!(sides.lhs_l.is_zero());
        assert_eq!(sides.lhs_r, PhiSeries::one(&cfg));
    }
}

#[test]
fn cauchy_polar_example() {
    // f = u^-1 (x) 1 on n=1, root 0: lhs_r = 0, lhs_l = -v^-1, rhs = v^-1
    let cfg = numeric_n1(8);
    let f = TwoVarSeries::tensor(&PhiSeries::basis(&cfg, idx(-1, 0)), &PhiSeries::one(&cfg));
    let sides = cauchy_check(&f, 6).unwrap();
    assert!(sides.lhs_r.is_zero());
    let want = PhiSeries::basis(&cfg, idx(-1, 0));
    assert!(
        sides.lhs_l.valid_to() >= 6,
        "window collapsed: {}",
        sides.lhs_l.valid_to()
    );
    assert!(sides.lhs_l.sub(&want.neg()).is_zero());
    assert!(
        sides.rhs.valid_to() >= 6,
        "window collapsed: {}",
        sides.rhs.valid_to()
    );
    assert!(sides.rhs.sub(&want).is_zero());
}

#[test]
fn cauchy_random_suite() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let mut s = Sampler::new(500 + n as u64);
        for _ in 0..10 {
            let f = s.poly_tensor(&cfg, 2, 3);
            let sides = cauchy_check(&f, 6).unwrap();
            let resid = sides.lhs_r.sub(&sides.lhs_l).sub(&sides.rhs);
            assert!(resid.is_zero(), "cauchy failed n={}", n);
        }
    }
}

#[test]
fn localize_diagonal_normalization() {
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(33);
    let x = s.poly_tensor(&cfg, 2, 3);
    // (x * delta) * delta^-1 -> x
    let xd = x.mul_delta_pow(1).unwrap();
    let (num, k) = TwoVarSeries::localize_diagonal(&xd, 1).unwrap();
    assert_eq!(k, 0);
    assert!(num.sub(&x).unwrap().is_zero());
    // no cancellation when the numerator misses the diagonal ideal
    let one = TwoVarSeries::one(&cfg);
    let (num, k) = TwoVarSeries::localize_diagonal(&one, 2).unwrap();
    assert_eq!(k, 2);
    assert_eq!(num, one);
}

#[test]
fn localized_expansion_matches_exp() {
    // 1 * delta^-1 right-expanded equals exp_r1
    let cfg = SigmaConfig::standard(2, 8);
    let l = LocalizedDiag::new(TwoVarSeries::one(&cfg), 1).unwrap();
    let e = l.expand_right(5).unwrap();
    let direct = TwoVarSeries::exp_r1(&cfg, 5).unwrap();
    assert_eq!(e.depth(), direct.depth());
    assert!(e.sub(&direct).unwrap().is_zero());
}

#[test]
fn exp_powers_compose() {
    // exp_r(2) * delta = exp_r(1) up to the common guaranteed depth
    let cfg = SigmaConfig::standard(2, 10);
    let e2 = TwoVarSeries::exp_r(&cfg, 2, 6).unwrap();
    let d = TwoVarSeries::delta(&cfg);
    let lhs = TwoVarSeries::mul_two(&d, &e2).unwrap();
    let e1 = TwoVarSeries::exp_r1(&cfg, 6).unwrap();
    let common = lhs.depth().min(e1.depth());
    assert!(common >= 4, "depth collapsed: {}", common);
    let diff = lhs
        .truncate_depth(common)
        .sub(&e1.truncate_depth(common))
        .unwrap();
    assert!(diff.is_zero(), "exp_r(2) * delta != exp_r(1) within depth");
}

#[test]
fn swap_slots_involution() {
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(41);
    let x = s.poly_tensor(&cfg, 2, 3);
    assert_eq!(x.swap_slots().swap_slots(), x);
    // check against explicit tensor swap
    let f = s.phi_series(&cfg, -1, 2, 2);
    let g = s.phi_series(&cfg, -1, 2, 2);
    assert_eq!(
        TwoVarSeries::tensor(&f, &g).swap_slots(),
        TwoVarSeries::tensor(&g, &f)
    );
}

#[test]
fn three_var_derivative_oracle() {
    // d/du1 of delta12^-1 = -delta12^-2, written over the common denominator
    let cfg = SigmaConfig::standard(2, 8);
    let one3 = ThreeVarPoly::tensor(
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
        &PhiSeries::one(&cfg),
    );
    let x = ThreeVarPole {
        num: one3.clone(),
        k12: 1,
        k13: 0,
        k23: 0,
    };
    let d = x.d_slot(0);
    assert_eq!((d.k12, d.k13, d.k23), (2, 1, 1));
    // numerator must equal -delta13 * delta23
    let expect = one3.mul_delta(0, 2).mul_delta(1, 2).scalar_mul(&Scalar::from_int(2, -1));
    assert_eq!(d.num.canonical_terms(), expect.canonical_terms());
}

#[test]
fn three_var_mixed_partials_commute() {
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(61);
    let num = ThreeVarPoly::tensor(
        &s.phi_series(&cfg, -1, 2, 2),
        &s.phi_series(&cfg, -1, 2, 2),
        &s.phi_series(&cfg, -1, 2, 2),
    );
    let x = ThreeVarPole {
        num,
        k12: 1,
        k13: 0,
        k23: 2,
    };
    let ab = x.d_slot(0).d_slot(1);
    let ba = x.d_slot(1).d_slot(0);
    assert_eq!((ab.k12, ab.k13, ab.k23), (ba.k12, ba.k13, ba.k23));
    assert_eq!(ab.num.canonical_terms(), ba.num.canonical_terms());
}

#[test]
fn three_var_restrict_merges_poles() {
    let cfg = SigmaConfig::standard(2, 8);
    let num = ThreeVarPoly::tensor(
        &PhiSeries::coordinate(&cfg),
        &PhiSeries::one(&cfg),
        &PhiSeries::coordinate(&cfg),
    );
    let x = ThreeVarPole {
        num: num.clone(),
        k12: 1,
        k13: 2,
        k23: 0,
    };
    let (two, k) = x.restrict_23().unwrap();
    assert_eq!(k, 3);
    let t = PhiSeries::coordinate(&cfg);
    assert_eq!(two, TwoVarSeries::tensor(&t, &t));
    let bad = ThreeVarPole {
        num,
        k12: 0,
        k13: 0,
        k23: 1,
    };
    assert!(bad.restrict_23().is_err());
}

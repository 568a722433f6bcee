//! The truncated local function ring: bases, monomial conversion,
//! multiplication windows, derivations, substitution.

use chiral_core::sample::Sampler;
use chiral_core::scalar::{Scalar, Substitution};
use chiral_core::sigma::{
    BasisIndex, BasisSign, DOperator, PhiSeries, SigmaConfig, TPoly,
};

fn idx(m: i64, i: u32) -> BasisIndex {
    BasisIndex::new(m, i)
}

#[test]
fn basis_monomials_oracles() {
    let cfg = SigmaConfig::standard(2, 8);
    let nv = cfg.nvars();
    // b+_{0,1} = t - a1
    let (p, e) = cfg.basis_monomials(BasisSign::Plus, idx(0, 1));
    assert_eq!(e, 0);
    assert_eq!(p, TPoly::linear_root(&Scalar::param(nv, 0)));
    // b-_{0,1} = t - a2
    let (p, e) = cfg.basis_monomials(BasisSign::Minus, idx(0, 1));
    assert_eq!(e, 0);
    assert_eq!(p, TPoly::linear_root(&Scalar::param(nv, 1)));
    // b+_{1,0} = phi
    let (p, e) = cfg.basis_monomials(BasisSign::Plus, idx(1, 0));
    assert_eq!(e, 1);
    assert_eq!(p, TPoly::one(nv));
}

#[test]
fn coordinate_expansion_oracles() {
    // n=1: t^2 = phi^2 + 2 a1 phi + a1^2
    let cfg = SigmaConfig::standard(1, 8);
    let a1 = Scalar::param(1, 0);
    let t2 = PhiSeries::coordinate(&cfg).mul(&PhiSeries::coordinate(&cfg));
    assert_eq!(t2.coeff(idx(2, 0)), Scalar::one(1));
    assert_eq!(t2.coeff(idx(1, 0)), a1.mul_int(2));
    assert_eq!(t2.coeff(idx(0, 0)), a1.mul(&a1));
    assert_eq!(t2.num_terms(), 3);

    // n=2: t = a1 * b_{0,0} + b_{0,1}
    let cfg = SigmaConfig::standard(2, 8);
    let a1 = Scalar::param(2, 0);
    let t = PhiSeries::coordinate(&cfg);
    assert_eq!(t.coeff(idx(0, 0)), a1);
    assert_eq!(t.coeff(idx(0, 1)), Scalar::one(2));
    assert_eq!(t.num_terms(), 2);
}

#[test]
fn basis_chain_rollover() {
    // b+_{m,0} * phi = b+_{m+1,0}
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 8);
        for m in -3..3 {
            let lhs = PhiSeries::basis(&cfg, idx(m, 0)).mul_phi_power(1);
            let rhs = PhiSeries::basis(&cfg, idx(m + 1, 0));
            assert_eq!(lhs, rhs);
        }
    }
}

#[test]
fn monomial_round_trip_random() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let mut s = Sampler::new(5 + n as u64);
        for _ in 0..10 {
            let f = s.phi_series(&cfg, -3, 4, 4);
            let (p, e) = f.to_monomials();
            let back = PhiSeries::from_monomials(&cfg, &p, e);
            assert_eq!(back, f);
        }
    }
}

#[test]
fn minus_basis_expansion_oracle() {
    // n=2: b-_{0,1} = t - a2 = b+_{0,1} + (a1 - a2) b+_{0,0}
    let cfg = SigmaConfig::standard(2, 8);
    let a1 = Scalar::param(2, 0);
    let a2 = Scalar::param(2, 1);
    let f = PhiSeries::basis_minus(&cfg, idx(0, 1));
    assert_eq!(f.coeff(idx(0, 1)), Scalar::one(2));
    assert_eq!(f.coeff(idx(0, 0)), a1.sub(&a2));
    assert_eq!(f.num_terms(), 2);
}

#[test]
fn minus_basis_round_trip() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let mut s = Sampler::new(40 + n as u64);
        for _ in 0..8 {
            let f = s.phi_series(&cfg, -3, 4, 4);
            let back = PhiSeries::from_minus_terms(&cfg, f.to_minus_terms(), f.valid_to());
            assert_eq!(back, f);
        }
    }
}

#[test]
fn filtration_levels() {
    let cfg = SigmaConfig::standard(2, 8);
    let f = PhiSeries::basis(&cfg, idx(-2, 1));
    assert_eq!(f.min_level(), -2);
    assert_eq!(f.pole_order(), 2);
    assert!(f.in_filtration(2));
    assert!(!f.in_filtration(1));
    assert!(PhiSeries::one(&cfg).in_filtration(0));
}

#[test]
fn mul_matches_monomials_random() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 12);
        let mut s = Sampler::new(77 + n as u64);
        for _ in 0..8 {
            let f = s.phi_series(&cfg, -2, 3, 3);
            let g = s.phi_series(&cfg, -2, 3, 3);
            let prod = f.mul(&g);
            let (pf, ef) = f.to_monomials();
            let (pg, eg) = g.to_monomials();
            let expect = PhiSeries::from_monomials(&cfg, &pf.mul(&pg), ef + eg);
            // windows may differ; compare on the common window
            let w = prod.valid_to().min(expect.valid_to());
            assert_eq!(prod.truncate_window(w), expect.truncate_window(w));
        }
    }
}

#[test]
fn mul_window_rule() {
    let cfg = SigmaConfig::standard(2, 10);
    let f = PhiSeries::basis(&cfg, idx(-2, 0)).truncate_window(5);
    let g = PhiSeries::basis(&cfg, idx(1, 1)).add(&PhiSeries::basis(&cfg, idx(3, 0)));
    // min level of g is 1, of f is -2; window of g is 10 (capped by M)
    let prod = f.mul(&g);
    // valid_to = min(M, w_f + min_g, w_g + min_f) = min(10, 5+1, 10-2) = 6
    assert_eq!(prod.valid_to(), 6);
}

#[test]
fn truncation_drops_out_of_window_terms() {
    let cfg = SigmaConfig::standard(1, 10);
    let f = PhiSeries::basis(&cfg, idx(2, 0)).add(&PhiSeries::basis(&cfg, idx(7, 0)));
    let t = f.truncate_window(5);
    assert_eq!(t.valid_to(), 5);
    assert_eq!(t.num_terms(), 1);
    assert_eq!(t.coeff(idx(2, 0)), Scalar::one(1));
}

#[test]
fn derivative_oracle_and_leibniz() {
    // n=2: d/dt phi = 2t - a1 - a2 = 2 b_{0,1} + (a1 - a2) b_{0,0}
    let cfg = SigmaConfig::standard(2, 10);
    let a1 = Scalar::param(2, 0);
    let a2 = Scalar::param(2, 1);
    let dphi = PhiSeries::basis(&cfg, idx(1, 0)).d_dt();
    assert_eq!(dphi.coeff(idx(0, 1)), Scalar::from_int(2, 2));
    assert_eq!(dphi.coeff(idx(0, 0)), a1.sub(&a2));
    assert_eq!(dphi.num_terms(), 2);

    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 12);
        let mut s = Sampler::new(3 + n as u64);
        for _ in 0..6 {
            let f = s.phi_series(&cfg, -2, 3, 3);
            let g = s.phi_series(&cfg, -2, 3, 3);
            let lhs = f.mul(&g).d_dt();
            let rhs = f.d_dt().mul(&g).add(&f.mul(&g.d_dt()));
            let w = lhs.valid_to().min(rhs.valid_to());
            assert_eq!(lhs.truncate_window(w), rhs.truncate_window(w));
        }
    }
}

#[test]
fn derivative_window_shrinks_by_one() {
    let cfg = SigmaConfig::standard(2, 10);
    let f = PhiSeries::basis(&cfg, idx(0, 1)).truncate_window(6);
    assert_eq!(f.d_dt().valid_to(), 5);
}

#[test]
fn differential_operator_application() {
    let cfg = SigmaConfig::standard(2, 10);
    let mut s = Sampler::new(9);
    let f = s.phi_series(&cfg, -2, 3, 3);
    let g = s.phi_series(&cfg, 0, 3, 2);
    let h = s.phi_series(&cfg, 0, 3, 2);
    // (g d/dt + h) f = g f' + h f
    let d = DOperator::new(vec![h.clone(), g.clone()]);
    let lhs = f.apply_dop(&d);
    let rhs = g.mul(&f.d_dt()).add(&h.mul(&f));
    let w = lhs.valid_to().min(rhs.valid_to());
    assert_eq!(lhs.truncate_window(w), rhs.truncate_window(w));
}

#[test]
fn numeric_specialization() {
    let cfg = SigmaConfig::standard(2, 10);
    let sub = Substitution::new(
        2,
        [
            (0, Scalar::from_int(2, 0)),
            (1, Scalar::from_int(2, 1)),
        ],
    );
    let scfg = cfg.substitute(&sub).unwrap();
    assert!(scfg.roots_pairwise_distinct());
    let mut s = Sampler::new(31);
    // substitution commutes with multiplication
    let f = s.phi_series(&cfg, -2, 3, 3);
    let g = s.phi_series(&cfg, -2, 3, 3);
    let lhs = f.mul(&g).substitute(&sub).unwrap();
    let rhs = f
        .substitute(&sub)
        .unwrap()
        .mul(&g.substitute(&sub).unwrap());
    let w = lhs.valid_to().min(rhs.valid_to());
    assert_eq!(lhs.truncate_window(w), rhs.truncate_window(w));
}

#[test]
fn serialization_round_trip() {
    let cfg = SigmaConfig::standard(2, 10);
    let mut s = Sampler::new(55);
    let f = s.phi_series(&cfg, -3, 4, 5);
    let repr = f.to_repr();
    let text = serde_json::to_string(&repr).unwrap();
    let back: chiral_core::sigma::PhiSeriesRepr = serde_json::from_str(&text).unwrap();
    assert_eq!(PhiSeries::from_repr(&back).unwrap(), f);
}

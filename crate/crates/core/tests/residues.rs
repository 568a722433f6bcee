//! Residues, the pairing, dual bases, and section-wise residue splitting.

use chiral_core::residue::{
    expected_gram_entry, pairing, pairing_gram, residue, residue_split,
};
use chiral_core::sample::Sampler;
use chiral_core::scalar::{Scalar, Substitution};
use chiral_core::sigma::{BasisIndex, OneForm, PhiSeries, SigmaConfig, Window};

fn idx(m: i64, i: u32) -> BasisIndex {
    BasisIndex::new(m, i)
}

#[test]
fn residue_of_regular_forms_vanishes() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 8);
        assert!(residue(&OneForm::dt(&cfg)).is_zero());
        let mut s = Sampler::new(n as u64);
        let f = s.phi_series(&cfg, 0, 4, 4);
        assert!(residue(&OneForm::new(f)).is_zero());
    }
}

#[test]
fn residue_basis_oracle() {
    // residue(b+_{m,i} dt) = 1 iff (m,i) = (-1, n-1), else 0
    for n in 1..=4 {
        let cfg = SigmaConfig::standard(n, 8);
        for m in -3..3 {
            for i in 0..n as u32 {
                let r = residue(&OneForm::new(PhiSeries::basis(&cfg, idx(m, i))));
                let expect = if m == -1 && i == n as u32 - 1 {
                    Scalar::one(cfg.nvars())
                } else {
                    Scalar::zero(cfg.nvars())
                };
                assert_eq!(r, expect, "n={} m={} i={}", n, m, i);
            }
        }
    }
}

#[test]
fn gram_matrix_antidiagonal() {
    for n in 1..=2 {
        let cfg = SigmaConfig::standard(n, 8);
        let window = Window::new(-3, 2);
        let (indices, gram) = pairing_gram(&cfg, window);
        for (r, a) in indices.iter().enumerate() {
            for (c, b) in indices.iter().enumerate() {
                assert_eq!(
                    gram[r][c],
                    expected_gram_entry(&cfg, *a, *b),
                    "n={} a={} b={}",
                    n,
                    a,
                    b
                );
            }
        }
    }
}

#[test]
fn pairing_symmetry_against_monomials() {
    // pairing(f, g) computed on the plus/minus pair equals the raw residue
    // of the product
    let cfg = SigmaConfig::standard(2, 8);
    let mut s = Sampler::new(17);
    for _ in 0..6 {
        let f = s.phi_series(&cfg, -2, 3, 3);
        let g = s.phi_series(&cfg, -2, 3, 3);
        assert_eq!(pairing(&f, &g), residue(&OneForm::new(f.mul(&g))));
    }
}

#[test]
fn exact_forms_have_no_residue() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let mut s = Sampler::new(100 + n as u64);
        for _ in 0..8 {
            let f = s.phi_series(&cfg, -4, 4, 4);
            assert!(residue(&OneForm::new(f.d_dt())).is_zero());
        }
    }
}

#[test]
fn residue_independent_of_truncation() {
    let coarse = SigmaConfig::standard(2, 6);
    let fine = SigmaConfig::standard(2, 12);
    let mut s = Sampler::new(13);
    for _ in 0..6 {
        let f6 = s.phi_series(&coarse, -3, 3, 4);
        let (p, e) = f6.to_monomials();
        let f12 = PhiSeries::from_monomials(&fine, &p, e);
        assert_eq!(
            residue(&OneForm::new(f6)),
            residue(&OneForm::new(f12))
        );
    }
}

#[test]
fn residue_split_two_sections() {
    // roots 0 and 1: w = dt / (t(t-1)) has local residues -1 and +1
    let cfg = SigmaConfig::standard(2, 8);
    let sub = Substitution::new(
        2,
        [(0, Scalar::from_int(2, 0)), (1, Scalar::from_int(2, 1))],
    );
    let w = OneForm::new(PhiSeries::basis(&cfg, idx(-1, 0)));
    let locals = residue_split(&w, &sub).unwrap();
    assert_eq!(locals.len(), 2);
    assert_eq!(locals[0], Scalar::from_int(2, -1));
    assert_eq!(locals[1], Scalar::from_int(2, 1));
}

#[test]
fn residue_split_sums_to_global() {
    for n in 2..=3 {
        let cfg = SigmaConfig::standard(n, 10);
        let sub = Substitution::new(
            n,
            (0..n).map(|i| (i, Scalar::from_int(n, i as i64))),
        );
        let mut s = Sampler::new(200 + n as u64);
        for _ in 0..6 {
            let f = s.phi_series(&cfg, -3, 3, 4);
            let w = OneForm::new(f.clone());
            let locals = residue_split(&w, &sub).unwrap();
            let mut total = Scalar::zero(n);
            for l in &locals {
                total = total.add(l);
            }
            let global = residue(&OneForm::new(f.substitute(&sub).unwrap()));
            assert_eq!(total, global);
        }
    }
}

#[test]
fn residue_split_rejects_colliding_sections() {
    let cfg = SigmaConfig::standard(2, 8);
    let sub = Substitution::new(
        2,
        [(0, Scalar::from_int(2, 1)), (1, Scalar::from_int(2, 1))],
    );
    let w = OneForm::new(PhiSeries::basis(&cfg, idx(-1, 0)));
    assert!(residue_split(&w, &sub).is_err());
}

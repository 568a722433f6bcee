//! Exact arithmetic in the coefficient field.

use chiral_core::sample::Sampler;
use chiral_core::scalar::{parse_scalar, Scalar, Substitution};

const NV: usize = 3;

fn a(i: usize) -> Scalar {
    Scalar::param(NV, i)
}

#[test]
fn gcd_cancellation() {
    // (a1^2 - a2^2) / (a1 - a2) = a1 + a2
    let num = a(0).mul(&a(0)).sub(&a(1).mul(&a(1)));
    let den = a(0).sub(&a(1));
    let q = num.div(&den).unwrap();
    assert_eq!(q, a(0).add(&a(1)));
}

#[test]
fn integer_content_reduced() {
    let half = Scalar::from_ratio(NV, 2, 4);
    assert_eq!(half, Scalar::from_ratio(NV, 1, 2));
    let six_thirds = Scalar::from_ratio(NV, 6, 3);
    assert_eq!(six_thirds, Scalar::from_int(NV, 2));
}

#[test]
fn denominator_sign_normalized() {
    // 1/(a2 - a1) + 1/(a1 - a2) = 0
    let x = Scalar::one(NV).div(&a(1).sub(&a(0))).unwrap();
    let y = Scalar::one(NV).div(&a(0).sub(&a(1))).unwrap();
    assert!(x.add(&y).is_zero());
}

#[test]
fn field_axioms_random() {
    let mut s = Sampler::new(11);
    for _ in 0..40 {
        let x = s.scalar(NV);
        let y = s.scalar(NV);
        let z = s.scalar(NV);
        assert_eq!(x.add(&y), y.add(&x));
        assert_eq!(x.mul(&y), y.mul(&x));
        assert_eq!(x.add(&y).add(&z), x.add(&y.add(&z)));
        assert_eq!(x.mul(&y).mul(&z), x.mul(&y.mul(&z)));
        assert_eq!(x.mul(&y.add(&z)), x.mul(&y).add(&x.mul(&z)));
        assert!(x.sub(&x).is_zero());
        if !x.is_zero() {
            assert_eq!(x.mul(&x.inv().unwrap()), Scalar::one(NV));
        }
    }
}

#[test]
fn powers_including_negative() {
    let x = a(0).add(&Scalar::from_int(NV, 1));
    assert_eq!(x.pow(3).unwrap(), x.mul(&x).mul(&x));
    assert_eq!(x.pow(0).unwrap(), Scalar::one(NV));
    assert_eq!(
        x.pow(-2).unwrap().mul(&x.pow(2).unwrap()),
        Scalar::one(NV)
    );
    assert!(Scalar::zero(NV).pow(-1).is_err());
}

#[test]
fn division_by_zero_rejected() {
    assert!(Scalar::one(NV).div(&Scalar::zero(NV)).is_err());
    assert!(Scalar::zero(NV).inv().is_err());
}

#[test]
fn parse_round_trip_random() {
    let names: Vec<String> = (1..=NV).map(|i| format!("a{}", i)).collect();
    let mut s = Sampler::new(23);
    for _ in 0..25 {
        let x = s.scalar(NV);
        let text = x.to_expr(&names);
        let back = parse_scalar(&text, &names).unwrap();
        assert_eq!(back, x, "round trip failed for {}", text);
    }
}

#[test]
fn parse_oracles() {
    let names: Vec<String> = vec!["a1".into(), "a2".into(), "a3".into()];
    let x = parse_scalar("(a1 - a2)^2 / (2*a3 + 1)", &names).unwrap();
    let expect = a(0)
        .sub(&a(1))
        .pow(2)
        .unwrap()
        .div(&a(2).mul(&Scalar::from_int(NV, 2)).add(&Scalar::one(NV)))
        .unwrap();
    assert_eq!(x, expect);
    assert!(parse_scalar("a1 +", &names).is_err());
    assert!(parse_scalar("b7", &names).is_err());
}

#[test]
fn substitution_evaluates() {
    let mut map = Substitution::identity(NV);
    map.set(0, Scalar::from_int(NV, 3));
    map.set(1, Scalar::from_int(NV, 1));
    // (a1^2 - a2^2)/(a1 - a2) -> a1 + a2 -> 4
    let x = a(0)
        .mul(&a(0))
        .sub(&a(1).mul(&a(1)))
        .div(&a(0).sub(&a(1)))
        .unwrap();
    assert_eq!(x.substitute(&map).unwrap(), Scalar::from_int(NV, 4));
}

#[test]
fn substitution_detects_vanishing_denominator() {
    let mut map = Substitution::identity(NV);
    map.set(0, Scalar::from_int(NV, 2));
    map.set(1, Scalar::from_int(NV, 2));
    let x = Scalar::one(NV).div(&a(0).sub(&a(1))).unwrap();
    assert!(x.substitute(&map).is_err());
}

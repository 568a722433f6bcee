use chiral_core::coeff::{CoeffAlgebra, Heisenberg, MatrixAlgebra};
use chiral_core::pairing;
use chiral_core::sample::Sampler;
use chiral_core::sigma::{BasisIndex, PhiSeries, SigmaConfig};
use chiral_core::Scalar;

fn idx(m: i64, i: u32) -> BasisIndex {
    BasisIndex::new(m, i)
}

#[test]
fn matrix_units_bracket() {
    let alg = MatrixAlgebra::new(2, 0);
    let e12 = alg.unit_entry(0, 1);
    let e21 = alg.unit_entry(1, 0);
    let got = alg.bracket(&e12, &e21);
    let want = alg.sub(&alg.unit_entry(0, 0), &alg.unit_entry(1, 1));
    assert_eq!(got, want);
}

#[test]
fn matrix_assoc_and_unit() {
    let alg = MatrixAlgebra::new(3, 2);
    let mut s = Sampler::new(7);
    let mut rand = |s: &mut Sampler| {
        let entries = (0..3)
            .map(|_| (0..3).map(|_| s.scalar(2)).collect())
            .collect();
        alg.from_entries(entries)
    };
    for _ in 0..5 {
        let x = rand(&mut s);
        let y = rand(&mut s);
        let z = rand(&mut s);
        assert_eq!(alg.mul(&alg.mul(&x, &y), &z), alg.mul(&x, &alg.mul(&y, &z)));
        assert_eq!(alg.mul(&x, &alg.one()), x);
        assert_eq!(alg.mul(&alg.one(), &x), x);
    }
}

#[test]
fn matrix_truncation_chain() {
    let alg = MatrixAlgebra::new(2, 0);
    let x = alg.unit_entry(0, 1);
    assert_eq!(alg.truncate(1, &x), x);
    assert!(alg.is_zero(&alg.truncate(0, &x)));
    assert!(alg.is_zero_at_level(0, &x));
    assert!(!alg.is_zero_at_level(1, &x));
    assert!(alg.is_zero_at_level(5, &alg.zero()));
    assert_eq!(alg.creation_depth(&x), 0);
}

#[test]
fn beta_is_linear() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    let mut s = Sampler::new(11);
    for _ in 0..5 {
        let f = s.phi_series(&cfg, -3, 3, 4);
        let g = s.phi_series(&cfg, -3, 3, 4);
        assert_eq!(
            alg.beta(&f.add(&g)),
            alg.add(&alg.beta(&f), &alg.beta(&g))
        );
    }
    assert!(alg.is_zero(&alg.beta(&PhiSeries::zero(&cfg))));
}

#[test]
fn beta_truncates_deep_annihilators() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    assert!(alg.is_zero(&alg.generator(idx(4, 0))));
    assert!(!alg.is_zero(&alg.generator(idx(3, 0))));
}

#[test]
fn bracket_matches_pairing() {
    for n in 1..=3 {
        let cfg = SigmaConfig::standard(n, 8);
        let alg = Heisenberg::new(&cfg, 4);
        let cre = PhiSeries::basis(&cfg, idx(-1, n as u32 - 1));
        let ann = PhiSeries::basis(&cfg, idx(0, 0));
        let got = alg.bracket(&alg.beta(&cre), &alg.beta(&ann));
        let p = pairing(&cre, &ann);
        assert_eq!(p, Scalar::one(cfg.nvars()), "dual pairing should be 1");
        assert_eq!(got, alg.central(&p));
    }
}

#[test]
fn same_kind_generators_commute() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    let pairs = [
        (idx(-2, 0), idx(-1, 1)),
        (idx(-1, 0), idx(-3, 1)),
        (idx(0, 0), idx(2, 1)),
        (idx(1, 1), idx(3, 0)),
    ];
    for (a, b) in pairs {
        let x = alg.generator(a);
        let y = alg.generator(b);
        assert!(alg.is_zero(&alg.bracket(&x, &y)), "{a} vs {b}");
    }
}

#[test]
fn brackets_are_central_and_antisymmetric() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    let mut s = Sampler::new(23);
    for _ in 0..6 {
        let f = s.phi_series(&cfg, -3, 3, 3);
        let g = s.phi_series(&cfg, -3, 3, 3);
        let x = alg.beta(&f);
        let y = alg.beta(&g);
        let br = alg.bracket(&x, &y);
        // central: only the empty word survives
        assert!(br.terms().all(|(w, _)| w.is_empty()));
        let rev = alg.bracket(&y, &x);
        assert!(alg.is_zero(&alg.add(&br, &rev)));
    }
}

#[test]
fn normal_ordering_is_associative() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    let mut s = Sampler::new(31);
    for _ in 0..8 {
        let mut word = |s: &mut Sampler| {
            let len = s.pick(3) + 1;
            let mut acc = alg.one();
            for _ in 0..len {
                let m = s.int(-3, 3);
                let i = s.pick(cfg.n()) as u32;
                acc = alg.mul(&acc, &alg.generator(idx(m, i)));
            }
            acc
        };
        let x = word(&mut s);
        let y = word(&mut s);
        let z = word(&mut s);
        assert_eq!(alg.mul(&alg.mul(&x, &y), &z), alg.mul(&x, &alg.mul(&y, &z)));
    }
}

#[test]
fn truncation_is_a_left_module_projection() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    let mut s = Sampler::new(41);
    for _ in 0..6 {
        let mut elem = |s: &mut Sampler| {
            let f = s.phi_series(&cfg, -2, 3, 3);
            let g = s.phi_series(&cfg, -2, 3, 3);
            alg.mul(&alg.beta(&f), &alg.beta(&g))
        };
        let x = elem(&mut s);
        let y = elem(&mut s);
        let xy = alg.mul(&x, &y);
        for k in 1..=3 {
            assert_eq!(
                alg.truncate(k, &xy),
                alg.truncate(k, &alg.mul(&x, &alg.truncate(k, &y)))
            );
        }
    }
}

#[test]
fn right_multiplication_escape_bound() {
    let cfg = SigmaConfig::standard(2, 8);
    let alg = Heisenberg::new(&cfg, 4);
    // x has creation depth 2
    let x = alg.generator(idx(-2, 1));
    assert_eq!(alg.creation_depth(&x), 2);
    // level-1 error times x escapes the level-1 ideal (1 < creation depth)
    let err1 = alg.generator(idx(1, 0));
    assert!(alg.is_zero_at_level(1, &err1));
    assert!(!alg.is_zero_at_level(1, &alg.mul(&err1, &x)));
    // level-2 error stays put (2 >= creation depth)
    let err2 = alg.generator(idx(2, 0));
    assert!(alg.is_zero_at_level(2, &err2));
    assert!(alg.is_zero_at_level(2, &alg.mul(&err2, &x)));
    // left multiplication never escapes
    assert!(alg.is_zero_at_level(1, &alg.mul(&x, &err1)));
}

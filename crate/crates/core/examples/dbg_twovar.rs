// scratch profiling for mul_two ingredient costs
use chiral_core::sample::Sampler;
use chiral_core::sigma::{PhiSeries, SigmaConfig};
use chiral_core::twovar::{Orientation, TwoVarSeries};
use std::time::Instant;

fn main() {
    let n = 3;
    let cfg = SigmaConfig::standard(n, 10);
    let mut s = Sampler::new(503);
    let f = s.poly_tensor(&cfg, 2, 3);
    let er = TwoVarSeries::exp_r1(&cfg, 6).unwrap();
    let a = f.promote(Orientation::Right);

    let pairs: Vec<_> = a
        .anchored_terms()
        .flat_map(|(ka, va)| er.anchored_terms().map(move |(kb, vb)| (*ka, va, *kb, vb)))
        .collect();
    eprintln!("pairs: {}", pairs.len());

    let t = Instant::now();
    let mut keyn = 0usize;
    for (ka, _, kb, _) in &pairs {
        let k = PhiSeries::basis(&cfg, *ka).mul(&PhiSeries::basis(&cfg, *kb));
        keyn += k.num_terms();
    }
    eprintln!("basis products: {:?} (terms {})", t.elapsed(), keyn);

    let t = Instant::now();
    let mut valn = 0usize;
    for (_, va, _, vb) in &pairs {
        let v = va.mul(vb);
        valn += v.num_terms();
    }
    eprintln!("value products: {:?} (terms {})", t.elapsed(), valn);
}

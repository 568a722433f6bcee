//! Scratch profiler for narrowing down slow spots in series arithmetic.

use chiral_core::residue::residue;
use chiral_core::sample::Sampler;
use chiral_core::sigma::{OneForm, SigmaConfig};
use std::time::Instant;

fn main() {
    for n in [2usize, 3] {
        eprintln!("--- n = {n} ---");
        let t0 = Instant::now();
        let cfg = SigmaConfig::standard(n, 10);
        eprintln!("cfg built: {:?}", t0.elapsed());

        let mut s = Sampler::new(100 + n as u64);
        let t0 = Instant::now();
        eprintln!("sampling phi_series(-4,4,4)...");
        let f = s.phi_series(&cfg, -4, 4, 4);
        eprintln!("sampled: {:?}", t0.elapsed());

        let t0 = Instant::now();
        let (p, e) = f.to_monomials();
        eprintln!(
            "to_monomials: {:?} (len {}, shift {})",
            t0.elapsed(),
            p.degree().map(|d| d + 1).unwrap_or(0),
            e
        );

        let t0 = Instant::now();
        let df = f.d_dt();
        eprintln!("d_dt: {:?}", t0.elapsed());

        let t0 = Instant::now();
        let r = residue(&OneForm::new(df.clone()));
        eprintln!("residue(d f): {:?} zero={}", t0.elapsed(), r.is_zero());

        let g = s.phi_series(&cfg, -2, 3, 3);
        let t0 = Instant::now();
        let (p1, e1) = f.to_monomials();
        let (p2, e2) = g.to_monomials();
        eprintln!("  mul/to_monomials: {:?}", t0.elapsed());
        let t0 = Instant::now();
        let prod = p1.mul(&p2);
        eprintln!(
            "  mul/tpoly_mul: {:?} (deg {:?})",
            t0.elapsed(),
            prod.degree()
        );
        // replicate the synthetic-division chain with per-step timing
        let mut r = prod.clone();
        let mut k = 0usize;
        while !r.is_zero() {
            let root = &cfg.roots()[k % n];
            let t0 = Instant::now();
            let (q, rem) = r.div_linear(root);
            let worst = q
                .coeffs()
                .iter()
                .chain(std::iter::once(&rem))
                .map(|c| c.numerator().num_terms() + c.denominator().num_terms())
                .max()
                .unwrap_or(0);
            eprintln!(
                "    step {k}: {:?} (deg {:?}, worst coeff size {})",
                t0.elapsed(),
                q.degree(),
                worst
            );
            r = q;
            k += 1;
        }
        let t0 = Instant::now();
        let back = chiral_core::sigma::PhiSeries::from_monomials(&cfg, &prod, e1 + e2);
        eprintln!(
            "  mul/from_monomials: {:?} (terms {})",
            t0.elapsed(),
            back.terms().count()
        );
    }
}

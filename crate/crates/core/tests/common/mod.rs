#![allow(dead_code)]

use locc_core::cone::ConeFamily;
use locc_core::{CMatrix, HermitianOperator};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_psd(d: usize, rank: usize, rng: &mut impl Rng) -> HermitianOperator {
    let g = CMatrix::from_fn(d, rank, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    HermitianOperator::new(&g * g.adjoint(), 1e-10).unwrap()
}

/// Random PSD generators in dimension 2 or 3, at most 8 of them. Some are
/// positive combinations of earlier ones and some are rescaled copies, so
/// both outcomes of the extremality test occur.
pub fn random_generators(seed: u64) -> (usize, Vec<HermitianOperator>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=3);
    let count = rng.random_range(3..=8);
    let mut gens: Vec<HermitianOperator> = Vec::with_capacity(count);
    while gens.len() < count {
        let roll: f64 = rng.random();
        if gens.len() >= 2 && roll < 0.3 {
            let mut acc = gens[0].scale(0.0);
            for g in &gens {
                if rng.random_bool(0.5) {
                    acc = acc.add(&g.scale(rng.random_range(0.1..1.0)));
                }
            }
            if acc.norm() > 0.0 {
                gens.push(acc);
            }
        } else if !gens.is_empty() && roll < 0.4 {
            let i = rng.random_range(0..gens.len());
            gens.push(gens[i].scale(rng.random_range(0.2..3.0)));
        } else {
            let rank = rng.random_range(1..=d);
            gens.push(random_psd(d, rank, &mut rng));
        }
    }
    (d, gens)
}

pub fn random_family(seed: u64, tol: f64) -> ConeFamily {
    let (_, gens) = random_generators(seed);
    ConeFamily::new(0, gens, tol, 1e-9).unwrap()
}

//! Seeded generator of canonical trees for property tests.
//!
//! Trees are first drawn in label space: every measurement is described by
//! the two new labels of the measuring party, `X` and `L − X`, where `L` is
//! that party's current label. The Kraus operators are then recovered from
//! the accumulated products (`K = √(A^{-†} X A^{-1})`). Working with labels
//! lets one continuation be replayed on two branches, which is how repeated
//! outcomes are produced.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::operator::{are_proportional, psd_sqrt, CMatrix};
use crate::{Error, HermitianOperator, Result};

use super::{LoccTree, NodeSpec};

#[derive(Clone, Debug)]
pub struct RandomTreeConfig {
    pub dims: Vec<usize>,
    pub max_depth: usize,
    pub seed: u64,
    /// Probability that a node below the root measures.
    pub branch_prob: f64,
    /// Probability that a measurement is one of the repeat-producing gadgets.
    pub repeat_prob: f64,
}

impl RandomTreeConfig {
    pub fn new(dims: Vec<usize>, max_depth: usize, seed: u64) -> Self {
        Self {
            dims,
            max_depth,
            seed,
            branch_prob: 0.7,
            repeat_prob: 0.25,
        }
    }
}

/// Random canonical tree with `dims.len()` parties, deterministic per seed.
pub fn random_canonical_tree(dims: &[usize], max_depth: usize, seed: u64) -> Result<LoccTree> {
    RandomTreeConfig::new(dims.to_vec(), max_depth, seed).generate()
}

#[derive(Clone, Debug)]
enum Plan {
    Leaf,
    Measure {
        party: usize,
        labels: [CMatrix; 2],
        children: Box<[Plan; 2]>,
    },
}

const MAX_RESAMPLES: usize = 100;

impl RandomTreeConfig {
    pub fn generate(&self) -> Result<LoccTree> {
        if self.dims.len() < 2 {
            return Err(Error::InvalidParameter("need at least two parties".into()));
        }
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidParameter(
                "party dimensions must be at least 2".into(),
            ));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidParameter(
                "max_depth must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let labels: Vec<CMatrix> = self.dims.iter().map(|&d| CMatrix::identity(d, d)).collect();
        let plan = self.plan(&labels, 0, &mut rng)?;
        let products = labels;
        let root = realize(&plan, None, &products)?;
        LoccTree::new(self.dims.clone(), root)
    }

    fn plan(&self, labels: &[CMatrix], depth: usize, rng: &mut ChaCha8Rng) -> Result<Plan> {
        if depth >= self.max_depth || (depth > 0 && !rng.random_bool(self.branch_prob)) {
            return Ok(Plan::Leaf);
        }
        let party = rng.random_range(0..self.dims.len());
        let l = &labels[party];
        let with = |x: CMatrix| {
            let mut next = labels.to_vec();
            next[party] = x;
            next
        };
        if depth + 2 <= self.max_depth && rng.random_bool(self.repeat_prob) && rng.random_bool(0.5)
        {
            let r = nested_split(l, rng)?;
            let rest = l - &r - &r;
            let shared = self.plan(&with(r.clone()), depth + 2, rng)?;
            let rest_plan = self.plan(&with(rest.clone()), depth + 2, rng)?;
            let inner = Plan::Measure {
                party,
                labels: [r.clone(), rest],
                children: Box::new([shared.clone(), rest_plan]),
            };
            return Ok(Plan::Measure {
                party,
                labels: [r.clone(), l - &r],
                children: Box::new([shared, inner]),
            });
        }
        if depth + 2 <= self.max_depth && rng.random_bool(self.repeat_prob) {
            let (r, s) = repeat_split(l, rng)?;
            let rest = l - &r - &r - &s;
            let shared = self.plan(&with(r.clone()), depth + 2, rng)?;
            let s_plan = self.plan(&with(s.clone()), depth + 2, rng)?;
            let rest_plan = self.plan(&with(rest.clone()), depth + 2, rng)?;
            let left = Plan::Measure {
                party,
                labels: [r.clone(), s.clone()],
                children: Box::new([shared.clone(), s_plan]),
            };
            let right = Plan::Measure {
                party,
                labels: [r.clone(), rest],
                children: Box::new([shared, rest_plan]),
            };
            return Ok(Plan::Measure {
                party,
                labels: [&r + &s, l - &r - &s],
                children: Box::new([left, right]),
            });
        }
        let x = plain_split(l, rng)?;
        let y = l - &x;
        let a = self.plan(&with(x.clone()), depth + 1, rng)?;
        let b = self.plan(&with(y.clone()), depth + 1, rng)?;
        Ok(Plan::Measure {
            party,
            labels: [x, y],
            children: Box::new([a, b]),
        })
    }
}

fn realize(plan: &Plan, kraus: Option<CMatrix>, products: &[CMatrix]) -> Result<NodeSpec> {
    match plan {
        Plan::Leaf => Ok(NodeSpec {
            party: None,
            kraus,
            children: Vec::new(),
        }),
        Plan::Measure {
            party,
            labels,
            children,
        } => {
            let a = &products[*party];
            let a_inv = a
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Structure("accumulated Kraus product is singular".into()))?;
            let mut specs = Vec::with_capacity(2);
            for (x, child) in labels.iter().zip(children.iter()) {
                let effect = a_inv.adjoint() * x * &a_inv;
                let k = psd_sqrt(&effect);
                let mut next = products.to_vec();
                next[*party] = &k * a;
                specs.push(realize(child, Some(k), &next)?);
            }
            Ok(NodeSpec {
                party: Some(*party),
                kraus,
                children: specs,
            })
        }
    }
}

/// Haar-distributed unitary from the QR decomposition of a complex Ginibre matrix.
pub(crate) fn random_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..d {
        let phase = r[(j, j)] / r[(j, j)].norm();
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `U diag(λ) U†` with eigenvalues drawn from `[lo, hi]`.
fn random_effect(d: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> CMatrix {
    let u = random_unitary(d, rng);
    let mut diag = CMatrix::zeros(d, d);
    for i in 0..d {
        diag[(i, i)] = Complex64::new(rng.random_range(lo..hi), 0.0);
    }
    &u * diag * u.adjoint()
}

fn sandwich(l_sqrt: &CMatrix, q: &CMatrix) -> CMatrix {
    let m = l_sqrt * q * l_sqrt;
    (&m + m.adjoint()).scale(0.5)
}

fn non_proportional(a: &CMatrix, b: &CMatrix) -> bool {
    !are_proportional(
        &HermitianOperator::symmetrized(a.clone()),
        &HermitianOperator::symmetrized(b.clone()),
        1e-6,
    )
}

fn plain_split(l: &CMatrix, rng: &mut impl Rng) -> Result<CMatrix> {
    let d = l.nrows();
    let root = psd_sqrt(l);
    for _ in 0..MAX_RESAMPLES {
        let x = sandwich(&root, &random_effect(d, 0.15, 0.85, rng));
        if non_proportional(&x, &(l - &x)) {
            return Ok(x);
        }
    }
    Err(Error::RetryBudget(MAX_RESAMPLES))
}

/// Labels `R`, `S` for the gadget `L → {R+S, L−R−S}`, then `{R, S}` and
/// `{R, L−2R−S}`; `R` appears on both branches.
fn repeat_split(l: &CMatrix, rng: &mut impl Rng) -> Result<(CMatrix, CMatrix)> {
    let d = l.nrows();
    let root = psd_sqrt(l);
    for _ in 0..MAX_RESAMPLES {
        let r = sandwich(&root, &random_effect(d, 0.1, 0.3, rng));
        let s = sandwich(&root, &random_effect(d, 0.1, 0.3, rng));
        let first = &r + &s;
        let rest = l - &r - &r - &s;
        if non_proportional(&first, &(l - &first))
            && non_proportional(&r, &s)
            && non_proportional(&r, &rest)
        {
            return Ok((r, s));
        }
    }
    Err(Error::RetryBudget(MAX_RESAMPLES))
}

/// Label `R` for the gadget `L → {R, L−R}`, then `{R, L−2R}` under `L−R`;
/// the repeat sits inside the sibling of the first `R`.
fn nested_split(l: &CMatrix, rng: &mut impl Rng) -> Result<CMatrix> {
    let d = l.nrows();
    let root = psd_sqrt(l);
    for _ in 0..MAX_RESAMPLES {
        let r = sandwich(&root, &random_effect(d, 0.1, 0.4, rng));
        let rest = l - &r - &r;
        if non_proportional(&r, &(l - &r)) && non_proportional(&r, &rest) {
            return Ok(r);
        }
    }
    Err(Error::RetryBudget(MAX_RESAMPLES))
}

/// Normalized Haar-random pure state.
pub(crate) fn random_state(d: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d)
        .map(|_| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{full_binary_check, is_canonical, validate_tree};
    use crate::Tolerances;

    #[test]
    fn seed_determinism() {
        let a = random_canonical_tree(&[2, 3], 5, 17).unwrap();
        let b = random_canonical_tree(&[2, 3], 5, 17).unwrap();
        assert_eq!(a.root_spec(), b.root_spec());
        let c = random_canonical_tree(&[2, 3], 5, 18).unwrap();
        assert_ne!(a.root_spec(), c.root_spec());
    }

    #[test]
    fn generated_trees_are_valid_and_canonical() {
        let tol = Tolerances::default();
        for seed in 0..30 {
            let t = random_canonical_tree(&[2, 3, 2], 6, seed).unwrap();
            assert!(validate_tree(&t, &tol).is_empty(), "seed {seed}");
            assert!(is_canonical(&t, &tol), "seed {seed}");
            assert!(full_binary_check(&t).unwrap().ok);
        }
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(3, &mut rng);
        assert!((u.adjoint() * &u - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(random_canonical_tree(&[2], 3, 0).is_err());
        assert!(random_canonical_tree(&[2, 1], 3, 0).is_err());
        assert!(random_canonical_tree(&[2, 2], 0, 0).is_err());
    }
}

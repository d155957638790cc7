//! Extremality of generators in finitely generated cones of positive operators.
//!
//! Operators are mapped to real coordinates in an orthonormal basis of the
//! Hermitian matrices, where conic membership becomes a nonnegative
//! least-squares problem. For a finitely generated cone every extreme ray is
//! (proportional to) one of the generators, so a generator is extreme exactly
//! when it is not a nonnegative combination of the remaining rays.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::operator::{proportionality, HermitianOperator};
use crate::sep::SeparableOperation;
use crate::{Error, Result};

pub mod oracle;

/// Real coordinates of a Hermitian operator: the diagonal, then
/// `√2·Re H_ij, √2·Im H_ij` for each `i < j` in row-major order.
/// Preserves inner products: `⟨v_A, v_B⟩ = Tr[AB]`.
pub fn vectorize(h: &HermitianOperator) -> DVector<f64> {
    let d = h.dim();
    let m = h.matrix();
    let s2 = std::f64::consts::SQRT_2;
    let mut v = Vec::with_capacity(d * d);
    v.extend((0..d).map(|i| m[(i, i)].re));
    for i in 0..d {
        for j in i + 1..d {
            v.push(s2 * m[(i, j)].re);
            v.push(s2 * m[(i, j)].im);
        }
    }
    DVector::from_vec(v)
}

fn column_matrix(generators: &[&HermitianOperator]) -> DMatrix<f64> {
    let rows = generators[0].dim().pow(2);
    let mut a = DMatrix::zeros(rows, generators.len());
    for (j, g) in generators.iter().enumerate() {
        a.set_column(j, &vectorize(g));
    }
    a
}

/// Solution of `min ‖Ax − b‖` subject to `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: f64,
}

/// Lawson–Hanson active-set NNLS.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm().max(1.0) * b.norm().max(1.0);
    let grad_tol = 1e-13 * scale;
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= grad_tol {
            break;
        }
        passive[j] = true;

        for _ in 0..max_outer {
            let z = passive_lstsq(a, b, &passive);
            let infeasible: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(f64::INFINITY, f64::min);
            x += (&z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 * scale {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    let residual = (a * &x - b).norm();
    NnlsSolution { x, residual }
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut z = DVector::zeros(passive.len());
    if idx.is_empty() {
        return z;
    }
    let sub = a.select_columns(&idx);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let sol = svd.solve(b, eps).expect("u and v were computed");
    for (k, &i) in idx.iter().enumerate() {
        z[i] = sol[k];
    }
    z
}

/// Conic membership result: coefficients and relative residual.
#[derive(Clone, Debug)]
pub struct Membership {
    pub coefficients: Vec<f64>,
    pub relative_residual: f64,
}

/// Nonnegative coefficients `c` with `‖Σ c_j G_j − target‖_F ≤ tol·‖target‖_F`,
/// or `None`. Also returns the best relative residual found.
pub fn cone_membership_detailed(
    target: &HermitianOperator,
    generators: &[&HermitianOperator],
    tol: f64,
) -> Result<(Option<Vec<f64>>, f64)> {
    if let Some(g) = generators.iter().find(|g| g.dim() != target.dim()) {
        return Err(Error::Dimension(format!(
            "generator is {}x{}, target is {}x{}",
            g.dim(),
            g.dim(),
            target.dim(),
            target.dim()
        )));
    }
    let tn = target.norm();
    if tn == 0.0 {
        return Ok((Some(vec![0.0; generators.len()]), 0.0));
    }
    if generators.is_empty() {
        return Ok((None, 1.0));
    }
    let a = column_matrix(generators);
    let b = vectorize(target);
    let sol = nnls(&a, &b);
    let rel = sol.residual / tn;
    let coefficients = sol.x.iter().copied().collect();
    Ok(((rel <= tol).then_some(coefficients), rel))
}

pub fn cone_membership(
    target: &HermitianOperator,
    generators: &[&HermitianOperator],
    tol: f64,
) -> Result<Option<Vec<f64>>> {
    Ok(cone_membership_detailed(target, generators, tol)?.0)
}

/// Party `α`'s local operators together with their partition into rays.
#[derive(Clone, Debug)]
pub struct ConeFamily {
    party: usize,
    generators: Vec<HermitianOperator>,
    ray_classes: Vec<Vec<usize>>,
}

impl ConeFamily {
    /// Groups generators into proportionality classes; the first member of
    /// each class is its representative.
    pub fn new(
        party: usize,
        generators: Vec<HermitianOperator>,
        tol: f64,
        tol_psd: f64,
    ) -> Result<Self> {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (j, g) in generators.iter().enumerate() {
            if g.norm() == 0.0 {
                return Err(Error::ZeroOperator);
            }
            if !g.is_psd(tol_psd) {
                return Err(Error::NotPositive {
                    min_eigenvalue: g.min_eigenvalue(),
                });
            }
            let mut placed = false;
            for class in classes.iter_mut() {
                if proportionality(g, &generators[class[0]], tol)?.is_some() {
                    class.push(j);
                    placed = true;
                    break;
                }
            }
            if !placed {
                classes.push(vec![j]);
            }
        }
        Ok(Self {
            party,
            generators,
            ray_classes: classes,
        })
    }

    pub fn party(&self) -> usize {
        self.party
    }

    pub fn generators(&self) -> &[HermitianOperator] {
        &self.generators
    }

    pub fn ray_classes(&self) -> &[Vec<usize>] {
        &self.ray_classes
    }

    pub fn class_count(&self) -> usize {
        self.ray_classes.len()
    }

    pub fn representative(&self, class_id: usize) -> &HermitianOperator {
        &self.generators[self.ray_classes[class_id][0]]
    }

    /// Class containing an operator proportional to `op`, if any.
    pub fn class_of(&self, op: &HermitianOperator, tol: f64) -> Option<usize> {
        (0..self.class_count()).find(|&c| {
            matches!(
                proportionality(op, self.representative(c), tol),
                Ok(Some(_))
            )
        })
    }

    fn others(&self, class_id: usize) -> (Vec<usize>, Vec<&HermitianOperator>) {
        (0..self.class_count())
            .filter(|&c| c != class_id)
            .map(|c| (c, self.representative(c)))
            .unzip()
    }
}

/// Whether the representative of `class_id` is outside the cone spanned by
/// every other class.
pub fn is_extreme_ray(class_id: usize, family: &ConeFamily, tol: f64) -> Result<bool> {
    if class_id >= family.class_count() {
        return Err(Error::InvalidParameter(format!("no ray class {class_id}")));
    }
    let (_, others) = family.others(class_id);
    Ok(cone_membership(family.representative(class_id), &others, tol)?.is_none())
}

/// A nonnegative combination of other classes reproducing a non-extreme one.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Witness {
    /// `(class id, coefficient)` pairs with nonzero coefficients.
    pub terms: Vec<(usize, f64)>,
    pub relative_residual: f64,
}

/// Per-party extreme-ray count `e_α` with supporting evidence.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtremalityReport {
    pub party: usize,
    pub e: usize,
    pub extreme: Vec<usize>,
    /// Generator (outcome) indices in each ray class.
    pub classes: Vec<Vec<usize>>,
    pub witnesses: BTreeMap<usize, Witness>,
    /// Best relative membership residual per class.
    pub residuals: Vec<f64>,
    /// Classes whose residual lies within two decades of the threshold.
    pub marginal: Vec<usize>,
}

pub fn count_extreme_rays(family: &ConeFamily, tol: f64) -> Result<ExtremalityReport> {
    if family.class_count() == 0 {
        return Err(Error::InvalidParameter("empty cone family".into()));
    }
    let mut extreme = Vec::new();
    let mut witnesses = BTreeMap::new();
    let mut residuals = Vec::with_capacity(family.class_count());
    let mut marginal = Vec::new();
    for c in 0..family.class_count() {
        let (ids, others) = family.others(c);
        let (coeffs, rel) = cone_membership_detailed(family.representative(c), &others, tol)?;
        residuals.push(rel);
        if rel > tol / 100.0 && rel < tol * 100.0 {
            marginal.push(c);
        }
        match coeffs {
            None => extreme.push(c),
            Some(coeffs) => {
                let terms = ids
                    .into_iter()
                    .zip(coeffs)
                    .filter(|&(_, v)| v > 0.0)
                    .collect();
                witnesses.insert(
                    c,
                    Witness {
                        terms,
                        relative_residual: rel,
                    },
                );
            }
        }
    }
    Ok(ExtremalityReport {
        party: family.party(),
        e: extreme.len(),
        extreme,
        classes: family.ray_classes().to_vec(),
        witnesses,
        residuals,
        marginal,
    })
}

/// One cone family per party of a separable operation.
pub fn party_families(sep: &SeparableOperation, tol: f64, tol_psd: f64) -> Result<Vec<ConeFamily>> {
    (0..sep.party_count())
        .map(|a| ConeFamily::new(a, sep.party_locals(a), tol, tol_psd))
        .collect()
}

/// Extreme-ray representatives of every party, used to recognise extreme
/// node labels in protocol trees.
#[derive(Clone, Debug)]
pub struct ExtremeRays {
    per_party: Vec<Vec<HermitianOperator>>,
    tol: f64,
}

impl ExtremeRays {
    /// Parties whose locals are all proportional to the identity contribute no
    /// rays.
    pub fn from_sep(sep: &SeparableOperation, tol: f64, tol_psd: f64) -> Result<Self> {
        let families = party_families(sep, tol, tol_psd)?;
        let mut per_party = Vec::with_capacity(families.len());
        for f in &families {
            let active = f
                .generators()
                .iter()
                .any(|g| !g.is_proportional_to_identity(tol));
            if !active {
                per_party.push(Vec::new());
                continue;
            }
            let report = count_extreme_rays(f, tol)?;
            per_party.push(
                report
                    .extreme
                    .iter()
                    .map(|&c| f.representative(c).clone())
                    .collect(),
            );
        }
        Ok(Self { per_party, tol })
    }

    pub fn party(&self, party: usize) -> &[HermitianOperator] {
        &self.per_party[party]
    }

    pub fn total(&self) -> usize {
        self.per_party.iter().map(Vec::len).sum()
    }

    /// Index of the extreme ray of `party` that `label` lies on.
    pub fn matching(&self, party: usize, label: &HermitianOperator) -> Option<usize> {
        if label.norm() == 0.0 {
            return None;
        }
        self.per_party[party]
            .iter()
            .position(|r| matches!(proportionality(label, r, self.tol), Ok(Some(_))))
    }
}

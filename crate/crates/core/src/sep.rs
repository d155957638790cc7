//! Product operators and separable operations.

use crate::operator::{dagger_times, tensor_all, CMatrix, HermitianOperator};
use crate::{Error, Result, Tolerances};

/// One outcome `w · K̂^(1) ⊗ … ⊗ K̂^(P)` with unit-trace positive locals.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductOperator {
    locals: Vec<HermitianOperator>,
    weight: f64,
}

impl ProductOperator {
    pub fn new(locals: Vec<HermitianOperator>, weight: f64, tol: &Tolerances) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::Dimension("product operator with no parties".into()));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::NonPositiveWeight(weight));
        }
        for local in &locals {
            let t = local.trace();
            if (t - 1.0).abs() > tol.trace.max(f64::EPSILON * 8.0) * local.dim() as f64 {
                return Err(Error::NotUnitTrace { trace: t });
            }
            if !local.is_psd(tol.psd) {
                return Err(Error::NotPositive {
                    min_eigenvalue: local.min_eigenvalue(),
                });
            }
        }
        Ok(Self { locals, weight })
    }

    /// Builds an outcome from unnormalized positive locals: each local is
    /// trace-normalized and the traces are folded into the weight.
    pub fn from_unnormalized(locals: Vec<HermitianOperator>, tol: &Tolerances) -> Result<Self> {
        let mut weight = 1.0;
        let mut normed = Vec::with_capacity(locals.len());
        for local in locals {
            weight *= local.trace();
            normed.push(local.normalized()?);
        }
        Self::new(normed, weight, tol)
    }

    pub fn locals(&self) -> &[HermitianOperator] {
        &self.locals
    }

    pub fn local(&self, party: usize) -> &HermitianOperator {
        &self.locals[party]
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn party_count(&self) -> usize {
        self.locals.len()
    }

    /// `K̂ = ⊗_α K̂^(α)` without the weight.
    pub fn product(&self) -> HermitianOperator {
        tensor_all(&self.locals).expect("nonempty by construction")
    }

    /// Same ray as `other`. Both sides have unit-trace locals, so
    /// proportional products coincide local by local.
    pub fn same_ray(&self, other: &Self, tol: f64) -> bool {
        self.locals.len() == other.locals.len()
            && self
                .locals
                .iter()
                .zip(&other.locals)
                .all(|(a, b)| (a.matrix() - b.matrix()).norm() <= tol * a.norm().max(b.norm()))
    }
}

/// `N` distinct product outcomes over parties of dimensions `d_1 … d_P`.
///
/// Construction checks shapes and distinctness. Closure is a separate check
/// ([`SeparableOperation::closure_residual`]) so that incomplete families can
/// still be represented and measured.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableOperation {
    dims: Vec<usize>,
    outcomes: Vec<ProductOperator>,
}

impl SeparableOperation {
    pub fn new(dims: Vec<usize>, outcomes: Vec<ProductOperator>, tol: &Tolerances) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "invalid party dimensions {dims:?}"
            )));
        }
        for (j, o) in outcomes.iter().enumerate() {
            if o.party_count() != dims.len() {
                return Err(Error::Dimension(format!(
                    "outcome {j} has {} parties, expected {}",
                    o.party_count(),
                    dims.len()
                )));
            }
            for (a, (local, &d)) in o.locals().iter().zip(&dims).enumerate() {
                if local.dim() != d {
                    return Err(Error::Dimension(format!(
                        "outcome {j}, party {a}: local is {}x{}, expected {d}",
                        local.dim(),
                        local.dim()
                    )));
                }
            }
        }
        for i in 0..outcomes.len() {
            for j in i + 1..outcomes.len() {
                if outcomes[i].same_ray(&outcomes[j], tol.cone) {
                    return Err(Error::DuplicateOutcome {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(Self { dims, outcomes })
    }

    /// Merges outcomes lying on the same ray by summing their weights, then
    /// constructs the operation. Order follows first appearance.
    pub fn from_merged(
        dims: Vec<usize>,
        outcomes: Vec<ProductOperator>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let merged = merge_outcomes(outcomes, tol.cone);
        Self::new(dims, merged, tol)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn party_count(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// `N`.
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[ProductOperator] {
        &self.outcomes
    }

    /// Party `α`'s local operators `{K̂_j^(α)}_j` in outcome order.
    pub fn party_locals(&self, party: usize) -> Vec<HermitianOperator> {
        self.outcomes
            .iter()
            .map(|o| o.local(party).clone())
            .collect()
    }

    /// `‖Σ_j w_j ⊗_α K̂_j^(α) − I_D‖_F`.
    pub fn closure_residual(&self) -> f64 {
        let d = self.total_dim();
        let mut acc = CMatrix::zeros(d, d);
        for o in &self.outcomes {
            acc += o.product().matrix().map(|z| z * o.weight());
        }
        (acc - CMatrix::identity(d, d)).norm()
    }

    pub fn check_closure(&self, tol: &Tolerances) -> Result<()> {
        let residual = self.closure_residual();
        if residual > tol.closure {
            return Err(Error::Closure {
                residual,
                tolerance: tol.closure,
            });
        }
        Ok(())
    }

    /// Index of the outcome on the same ray as `candidate`.
    pub fn find_outcome(&self, candidate: &ProductOperator, tol: f64) -> Option<usize> {
        self.outcomes
            .iter()
            .position(|o| o.same_ray(candidate, tol))
    }
}

pub(crate) fn merge_outcomes(outcomes: Vec<ProductOperator>, tol: f64) -> Vec<ProductOperator> {
    let mut merged: Vec<ProductOperator> = Vec::new();
    for o in outcomes {
        match merged.iter_mut().find(|m| m.same_ray(&o, tol)) {
            Some(m) => m.weight += o.weight,
            None => merged.push(o),
        }
    }
    merged
}

/// Builds a separable operation from product Kraus operators.
///
/// `kraus[j][α]` is party `α`'s factor of the `j`th Kraus operator.
/// Outcomes on the same ray are merged with summed weights.
pub fn sep_from_kraus(
    kraus: &[Vec<CMatrix>],
    dims: &[usize],
    tol: &Tolerances,
) -> Result<SeparableOperation> {
    let mut outcomes = Vec::with_capacity(kraus.len());
    for (j, factors) in kraus.iter().enumerate() {
        if factors.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "Kraus operator {j} has {} factors for {} parties",
                factors.len(),
                dims.len()
            )));
        }
        let mut locals = Vec::with_capacity(dims.len());
        for (a, (k, &d)) in factors.iter().zip(dims).enumerate() {
            if k.ncols() != d {
                return Err(Error::Dimension(format!(
                    "Kraus {j}, party {a}: {} columns, expected {d}",
                    k.ncols()
                )));
            }
            locals.push(HermitianOperator::symmetrized(dagger_times(k)));
        }
        outcomes.push(ProductOperator::from_unnormalized(locals, tol)?);
    }
    let sep = SeparableOperation::from_merged(dims.to_vec(), outcomes, tol)?;
    sep.check_closure(tol)?;
    Ok(sep)
}

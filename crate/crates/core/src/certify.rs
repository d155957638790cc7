//! Extreme-ray bound verdicts for separable operations.
//!
//! For an operation implementable by finite-round LOCC, the number of extreme
//! rays summed over the active parties is at most `2(N − 1)`. A verdict that
//! exceeds the bound certifies that no such protocol exists; a verdict within
//! it proves nothing about implementability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cone::{count_extreme_rays, ConeFamily, ExtremalityReport};
use crate::sep::SeparableOperation;
use crate::{Error, Result, Tolerances};

pub const REFINED_NOTE: &str = "stated without proof in this paper";
pub const NOT_SUFFICIENT_NOTE: &str = "necessary condition; not sufficient";
pub const UNIQUENESS_NOTE: &str =
    "the verdict concerns this product representation; a different representation of the same operation may count differently";

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub refined_bipartite: bool,
    pub tol: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedCheck {
    /// `⌊3N/2⌋`.
    pub bound: usize,
    pub satisfied: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub n: usize,
    pub party_count: usize,
    pub active_parties: Vec<usize>,
    pub e: BTreeMap<usize, usize>,
    pub sum_e: usize,
    /// `2(N − 1)`.
    pub bound: usize,
    pub theorem1_satisfied: bool,
    /// Also includes the refined check when it was applied.
    pub satisfied: bool,
    pub margin: i64,
    /// `sum_e / bound`; absent when the bound is zero.
    pub violation_ratio: Option<f64>,
    pub refined_bipartite_applied: bool,
    pub refined: Option<RefinedCheck>,
    pub closure_residual: f64,
    pub notes: Vec<String>,
    pub reports: Vec<ExtremalityReport>,
}

impl Verdict {
    pub fn is_saturated(&self) -> bool {
        self.margin == 0
    }
}

/// Parties with at least one local operator not proportional to the identity.
pub fn active_parties(sep: &SeparableOperation, tol: &Tolerances) -> Vec<usize> {
    (0..sep.party_count())
        .filter(|&a| {
            sep.outcomes()
                .iter()
                .any(|o| !o.local(a).is_proportional_to_identity(tol.cone))
        })
        .collect()
}

pub fn certify(sep: &SeparableOperation, opts: &CertifyOptions) -> Result<Verdict> {
    let tol = &opts.tol;
    sep.check_closure(tol)?;
    let active = active_parties(sep, tol);
    let mut e = BTreeMap::new();
    let mut reports = Vec::with_capacity(active.len());
    for &a in &active {
        let family = ConeFamily::new(a, sep.party_locals(a), tol.cone, tol.psd)?;
        let report = count_extreme_rays(&family, tol.cone)?;
        e.insert(a, report.e);
        reports.push(report);
    }
    let n = sep.len();
    let sum_e: usize = e.values().sum();
    let bound = 2 * n.saturating_sub(1);
    let ok = sum_e <= bound;
    let mut notes = vec![if ok {
        NOT_SUFFICIENT_NOTE.to_string()
    } else {
        "not implementable by finite-round LOCC".to_string()
    }];
    notes.push(UNIQUENESS_NOTE.to_string());
    let verdict = Verdict {
        n,
        party_count: sep.party_count(),
        active_parties: active,
        e,
        sum_e,
        bound,
        theorem1_satisfied: ok,
        satisfied: ok,
        margin: sum_e as i64 - bound as i64,
        violation_ratio: (bound > 0).then(|| sum_e as f64 / bound as f64),
        refined_bipartite_applied: false,
        refined: None,
        closure_residual: sep.closure_residual(),
        notes,
        reports,
    };
    if opts.refined_bipartite {
        refined_bipartite_check(verdict)
    } else {
        Ok(verdict)
    }
}

/// Adds the bipartite test `Σe ≤ ⌊3N/2⌋`, defined only for two parties and
/// `N > 4`.
pub fn refined_bipartite_check(mut verdict: Verdict) -> Result<Verdict> {
    if verdict.party_count != 2 {
        return Err(Error::InvalidParameter(format!(
            "refined bound needs two parties, got {}",
            verdict.party_count
        )));
    }
    if verdict.n <= 4 {
        return Err(Error::InvalidParameter(format!(
            "refined bound needs N > 4, got {}",
            verdict.n
        )));
    }
    let bound = 3 * verdict.n / 2;
    let satisfied = verdict.sum_e <= bound;
    verdict.refined = Some(RefinedCheck {
        bound,
        satisfied,
        note: REFINED_NOTE.to_string(),
    });
    verdict.refined_bipartite_applied = true;
    verdict.satisfied = verdict.theorem1_satisfied && satisfied;
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{appendix_a_sep, appendix_d_tree, domino_fixture};
    use crate::tree::extract_sep;

    fn opts() -> CertifyOptions {
        CertifyOptions::default()
    }

    #[test]
    fn prime_phase_family_violates() {
        let v = certify(&appendix_a_sep(&[2, 2]).unwrap(), &opts()).unwrap();
        assert_eq!((v.n, v.sum_e, v.bound), (5, 10, 8));
        assert_eq!(v.e.values().copied().collect::<Vec<_>>(), vec![5, 5]);
        assert!(!v.satisfied);
        assert_eq!(v.margin, 2);
        assert_eq!(v.violation_ratio, Some(1.25));
    }

    #[test]
    fn domino_satisfies_with_slack() {
        let v = certify(&domino_fixture(), &opts()).unwrap();
        assert_eq!(v.e.values().copied().collect::<Vec<_>>(), vec![7, 7]);
        assert!(v.satisfied);
        assert_eq!(v.margin, -2);
        assert!(v.notes.iter().any(|n| n == NOT_SUFFICIENT_NOTE));
    }

    #[test]
    fn once_per_party_tree_saturates() {
        let tol = Tolerances::default();
        let sep = extract_sep(&appendix_d_tree(3, &[2, 2, 2], 0).unwrap(), &tol).unwrap();
        let v = certify(&sep, &opts()).unwrap();
        assert_eq!(v.sum_e, 14);
        assert!(v.is_saturated());
    }

    #[test]
    fn refined_check() {
        let o = CertifyOptions {
            refined_bipartite: true,
            ..opts()
        };
        let v = certify(&domino_fixture(), &o).unwrap();
        assert!(v.theorem1_satisfied);
        let r = v.refined.as_ref().unwrap();
        assert_eq!(r.bound, 13);
        assert!(!r.satisfied && !v.satisfied);
        assert_eq!(r.note, REFINED_NOTE);

        let v = certify(&appendix_a_sep(&[2, 2]).unwrap(), &o).unwrap();
        assert_eq!(v.refined.unwrap().bound, 7);

        assert!(certify(&appendix_a_sep(&[2, 2, 2]).unwrap(), &o).is_err());
        let tol = Tolerances::default();
        let small = extract_sep(&appendix_d_tree(2, &[2, 2], 0).unwrap(), &tol).unwrap();
        assert!(certify(&small, &o).is_err());
    }

    #[test]
    fn identity_party_is_inactive() {
        use crate::sep::ProductOperator;
        use crate::HermitianOperator;
        let tol = Tolerances::default();
        let half = HermitianOperator::from_real_diagonal(&[0.5, 0.5]);
        let outcomes = [[1.0, 0.0], [0.0, 1.0]]
            .iter()
            .map(|d| {
                ProductOperator::new(
                    vec![HermitianOperator::from_real_diagonal(d), half.clone()],
                    2.0,
                    &tol,
                )
                .unwrap()
            })
            .collect();
        let sep = SeparableOperation::new(vec![2, 2], outcomes, &tol).unwrap();
        assert_eq!(active_parties(&sep, &tol), vec![0]);
        let v = certify(&sep, &opts()).unwrap();
        assert_eq!((v.sum_e, v.bound), (2, 2));
        assert_eq!(active_parties(&domino_fixture(), &tol), vec![0, 1]);
    }

    #[test]
    fn refuses_open_operation() {
        let sep = domino_fixture();
        let tol = Tolerances::default();
        let partial =
            SeparableOperation::new(vec![3, 3], sep.outcomes()[1..].to_vec(), &tol).unwrap();
        assert!(matches!(
            certify(&partial, &opts()),
            Err(Error::Closure { .. })
        ));
    }
}

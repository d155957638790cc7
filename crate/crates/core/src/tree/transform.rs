//! Rewrites that bring a protocol tree to canonical form without changing
//! the separable operation it implements.

use crate::operator::{
    are_proportional, dagger_times, hermitian_eigen, proportionality, psd_sqrt, spectral_map,
    CMatrix,
};
use crate::sep::ProductOperator;
use crate::{Error, Result, Tolerances};

use super::{accumulate, Accumulation, LoccTree, NodeId, NodeSpec};

/// Removes every one-outcome round by folding its Kraus operator into the
/// same party's next measurement on each branch below it.
///
/// If the party never measures again on a branch, the isometry is dropped
/// there: `U†U = I` leaves that party's labels unchanged.
pub fn absorb_isometries(tree: &LoccTree) -> Result<LoccTree> {
    LoccTree::new(tree.dims().to_vec(), absorb(tree.root_spec()))
}

fn absorb(mut spec: NodeSpec) -> NodeSpec {
    while spec.children.len() == 1 {
        let beta = spec.party.expect("measuring node");
        let child = spec.children.pop().expect("one child");
        let unitary = child.kraus.expect("non-root has Kraus");
        spec.party = child.party;
        spec.children = child.children;
        compose_first(&mut spec.children, spec.party, beta, &unitary);
    }
    spec.children = std::mem::take(&mut spec.children)
        .into_iter()
        .map(absorb)
        .collect();
    spec
}

/// Right-multiplies `unitary` into the first `beta` edge on every path below.
fn compose_first(
    children: &mut [NodeSpec],
    parent_party: Option<usize>,
    beta: usize,
    unitary: &CMatrix,
) {
    for child in children.iter_mut() {
        if parent_party == Some(beta) {
            let k = child.kraus.as_mut().expect("non-root has Kraus");
            *k = &*k * unitary;
        } else {
            let p = child.party;
            compose_first(&mut child.children, p, beta, unitary);
        }
    }
}

const KERNEL_TOL: f64 = 1e-10;
const AMBIGUOUS_LO: f64 = 1e-12;
const AMBIGUOUS_HI: f64 = 1e-8;

/// Replaces every measurement with more than two outcomes by nested
/// two-outcome measurements of the same party.
///
/// A contiguous group `G` of outcomes is realised by a node whose
/// accumulated (relative) Kraus is `T_G = √E_G`, `E_G = Σ_{i∈G} M_i†M_i`;
/// singleton groups use `T_{i} = M_i`. The node splits `G` into `G₁ G₂` with
/// Kraus `T_{Gk} T_G⁺`. When `E_G` is singular, an isometry from `ker E_G`
/// into the orthogonal complement of the last child's range is added to that
/// child so the pair stays complete. By default each split peels off the
/// first outcome; a later split point is used if the first one would give
/// proportional outcomes. Outcome order is preserved.
pub fn binarize(tree: &LoccTree, tol: &Tolerances) -> Result<LoccTree> {
    let root = binarize_node(tree, tree.root(), tol)?;
    LoccTree::new(tree.dims().to_vec(), root)
}

fn binarize_node(tree: &LoccTree, id: NodeId, tol: &Tolerances) -> Result<NodeSpec> {
    let mut children = Vec::with_capacity(tree.children(id).len());
    for &c in tree.children(id) {
        children.push(binarize_node(tree, c, tol)?);
    }
    let mut spec = NodeSpec {
        party: tree.party(id),
        kraus: tree.kraus(id).cloned(),
        children,
    };
    if spec.children.len() <= 2 {
        return Ok(spec);
    }
    let beta = spec.party.expect("measuring node");
    let d = tree.dims()[beta];
    let kraus: Vec<CMatrix> = spec
        .children
        .iter()
        .map(|c| c.kraus.clone().expect("non-root has Kraus"))
        .collect();
    let effects: Vec<CMatrix> = kraus.iter().map(dagger_times).collect();
    let mut slots: Vec<Option<NodeSpec>> = std::mem::take(&mut spec.children)
        .into_iter()
        .map(Some)
        .collect();
    let ctx = SplitContext {
        beta,
        node: id,
        kraus: &kraus,
        effects: &effects,
        tol: tol.cone,
    };
    let identity = CMatrix::identity(d, d);
    spec.children = ctx.split(0, kraus.len(), &identity, &mut slots)?;
    Ok(spec)
}

struct SplitContext<'a> {
    beta: usize,
    node: NodeId,
    kraus: &'a [CMatrix],
    effects: &'a [CMatrix],
    tol: f64,
}

impl SplitContext<'_> {
    fn group_effect(&self, lo: usize, hi: usize) -> CMatrix {
        self.effects[lo + 1..hi]
            .iter()
            .fold(self.effects[lo].clone(), |acc, e| acc + e)
    }

    fn group_target(&self, lo: usize, hi: usize) -> CMatrix {
        if hi - lo == 1 {
            self.kraus[lo].clone()
        } else {
            psd_sqrt(&self.group_effect(lo, hi))
        }
    }

    fn split_point(&self, lo: usize, hi: usize) -> usize {
        let non_proportional = |j: usize| {
            let left = crate::HermitianOperator::symmetrized(self.group_effect(lo, j));
            let right = crate::HermitianOperator::symmetrized(self.group_effect(j, hi));
            left.norm() > 0.0 && right.norm() > 0.0 && !are_proportional(&left, &right, self.tol)
        };
        (lo + 1..hi)
            .find(|&j| non_proportional(j))
            .unwrap_or(lo + 1)
    }

    /// Children of the node realising group `[lo, hi)`, whose effect is `e_group`.
    fn split(
        &self,
        lo: usize,
        hi: usize,
        e_group: &CMatrix,
        slots: &mut [Option<NodeSpec>],
    ) -> Result<Vec<NodeSpec>> {
        let (vals, vecs) = hermitian_eigen(e_group);
        let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(&v) = vals
            .iter()
            .find(|&&v| v > AMBIGUOUS_LO * top && v < AMBIGUOUS_HI * top)
        {
            return Err(Error::SingularResidual {
                node: self.node,
                eigenvalue: v,
            });
        }
        let cut = KERNEL_TOL * top;
        let pinv_sqrt = spectral_map(e_group, |v| if v > cut { 1.0 / v.sqrt() } else { 0.0 });
        let kernel: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= cut).collect();

        let j = self.split_point(lo, hi);
        let ranges = [(lo, j), (j, hi)];
        let mut out = Vec::with_capacity(2);
        for (k, &(a, b)) in ranges.iter().enumerate() {
            let target = self.group_target(a, b);
            let mut kraus = &target * &pinv_sqrt;
            if k == 1 && !kernel.is_empty() {
                kraus += kernel_isometry(&target, &vecs, &kernel, cut)?;
            }
            let node = if b - a == 1 {
                let mut leaf = slots[a].take().expect("each outcome used once");
                leaf.kraus = Some(kraus);
                leaf
            } else {
                let e_sub = self.group_effect(a, b);
                NodeSpec {
                    party: Some(self.beta),
                    kraus: Some(kraus),
                    children: self.split(a, b, &e_sub, slots)?,
                }
            };
            out.push(node);
        }
        Ok(out)
    }
}

/// `Σ_i v_i k_i†` mapping the kernel vectors `k_i` onto vectors `v_i`
/// orthogonal to the range of `target`.
fn kernel_isometry(
    target: &CMatrix,
    vecs: &CMatrix,
    kernel: &[usize],
    cut: f64,
) -> Result<CMatrix> {
    let d = target.nrows();
    let (rvals, rvecs) = hermitian_eigen(&(target * target.adjoint()));
    let rtop = rvals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(cut);
    let free: Vec<usize> = (0..d).filter(|&i| rvals[i] <= KERNEL_TOL * rtop).collect();
    if free.len() < kernel.len() {
        return Err(Error::Structure(format!(
            "range complement of dimension {} cannot host a kernel of dimension {}",
            free.len(),
            kernel.len()
        )));
    }
    let mut x = CMatrix::zeros(d, d);
    for (&ki, &vi) in kernel.iter().zip(&free) {
        x += rvecs.column(vi) * vecs.column(ki).adjoint();
    }
    Ok(x)
}

/// Result of merging proportional sibling outcomes.
#[derive(Clone, Debug)]
pub enum MergeOutcome {
    Merged(LoccTree),
    /// Proportional siblings whose continuations differ; merging them needs a
    /// general construction this crate does not provide.
    Unsupported {
        node: NodeId,
        reason: String,
    },
}

/// Merges sibling outcomes with proportional labels when their subtrees
/// agree up to that scalar: same shape and parties, and leaves pairing up
/// into outcomes on the same ray with weights in the same ratio. The merged
/// outcome keeps the first sibling's subtree with Kraus scaled by
/// `√(Σ λ_i)`, so weights add.
pub fn merge_proportional_outcomes(tree: &LoccTree, tol: &Tolerances) -> Result<MergeOutcome> {
    let acc = accumulate(tree);
    match merge_node(tree, &acc, tree.root(), tol) {
        Ok(spec) => Ok(MergeOutcome::Merged(LoccTree::new(
            tree.dims().to_vec(),
            spec,
        )?)),
        Err(Unsupported { node, reason }) => Ok(MergeOutcome::Unsupported { node, reason }),
    }
}

struct Unsupported {
    node: NodeId,
    reason: String,
}

fn merge_node(
    tree: &LoccTree,
    acc: &Accumulation,
    id: NodeId,
    tol: &Tolerances,
) -> Result<NodeSpec, Unsupported> {
    let mut spec = NodeSpec {
        party: tree.party(id),
        kraus: tree.kraus(id).cloned(),
        children: Vec::new(),
    };
    let Some(beta) = tree.party(id) else {
        return Ok(spec);
    };
    let children = tree.children(id);
    let mut used = vec![false; children.len()];
    for i in 0..children.len() {
        if used[i] {
            continue;
        }
        let first = children[i];
        let base = acc.label(first, beta);
        let mut total = 1.0;
        for k in i + 1..children.len() {
            if used[k] {
                continue;
            }
            let other = children[k];
            let label = acc.label(other, beta);
            if base.norm() == 0.0 || label.norm() == 0.0 {
                continue;
            }
            let Ok(Some(lambda)) = proportionality(label, base, tol.cone) else {
                continue;
            };
            let unsupported = |reason: &str| Unsupported {
                node: id,
                reason: format!("outcomes {first} and {other}: {reason}"),
            };
            let ka = crate::HermitianOperator::symmetrized(dagger_times(
                tree.kraus(first).expect("Kraus"),
            ));
            let kb = crate::HermitianOperator::symmetrized(dagger_times(
                tree.kraus(other).expect("Kraus"),
            ));
            match proportionality(&kb, &ka, tol.cone) {
                Ok(Some(mu)) if (mu - lambda).abs() <= tol.cone * lambda.max(1.0) => {}
                _ => return Err(unsupported("Kraus effects are not proportional")),
            }
            if !subtrees_match(tree, acc, first, other, lambda, tol) {
                return Err(unsupported("continuations differ"));
            }
            used[k] = true;
            total += lambda;
        }
        let mut merged = merge_node(tree, acc, first, tol)?;
        if total != 1.0 {
            let k = merged.kraus.as_mut().expect("Kraus");
            *k = k.map(|z| z * total.sqrt());
        }
        spec.children.push(merged);
    }
    Ok(spec)
}

fn subtrees_match(
    tree: &LoccTree,
    acc: &Accumulation,
    a: NodeId,
    b: NodeId,
    lambda: f64,
    tol: &Tolerances,
) -> bool {
    if tree.party(a) != tree.party(b) || tree.children(a).len() != tree.children(b).len() {
        return false;
    }
    if tree.is_leaf(a) {
        let (Ok(oa), Ok(ob)) = (
            ProductOperator::from_unnormalized(acc.labels(a).to_vec(), tol),
            ProductOperator::from_unnormalized(acc.labels(b).to_vec(), tol),
        ) else {
            return false;
        };
        return oa.same_ray(&ob, tol.cone)
            && (ob.weight() - lambda * oa.weight()).abs()
                <= tol.cone * ob.weight().max(lambda * oa.weight());
    }
    tree.children(a)
        .iter()
        .zip(tree.children(b))
        .all(|(&ca, &cb)| subtrees_match(tree, acc, ca, cb, lambda, tol))
}

/// Absorbs isometries, merges proportional outcomes and binarizes. Returns
/// the unsupported report if merging is not possible.
pub fn canonicalize(tree: &LoccTree, tol: &Tolerances) -> Result<MergeOutcome> {
    let absorbed = absorb_isometries(tree)?;
    match merge_proportional_outcomes(&absorbed, tol)? {
        MergeOutcome::Merged(t) => {
            let t = absorb_isometries(&t)?;
            Ok(MergeOutcome::Merged(binarize(&t, tol)?))
        }
        unsupported => Ok(unsupported),
    }
}

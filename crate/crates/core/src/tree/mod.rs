//! Finite LOCC protocol trees.
//!
//! Each non-leaf node records the party that measures there; each non-root
//! node carries the Kraus operator of the outcome leading to it. A node is an
//! *α-node* when the measurement producing it was made by party `α`, and its
//! accumulated label for party `α` is `A†A` where `A` is the ordered product of
//! `α`'s Kraus operators along the path from the root.

use serde::Serialize;

use crate::cone::ExtremeRays;
use crate::operator::{dagger_times, CMatrix, HermitianOperator};
use crate::sep::{ProductOperator, SeparableOperation};
use crate::{Error, Result, Tolerances};

pub(crate) mod random;
mod transform;

pub use random::{random_canonical_tree, RandomTreeConfig};
pub use transform::{
    absorb_isometries, binarize, canonicalize, merge_proportional_outcomes, MergeOutcome,
};

pub type NodeId = usize;

/// Upper bound on tree size.
pub const MAX_NODES: usize = 1 << 20;

/// Owned, nested description of a (sub)tree. This is the form trees are
/// built from and serialized to.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub party: Option<usize>,
    pub kraus: Option<CMatrix>,
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn leaf(kraus: CMatrix) -> Self {
        Self {
            party: None,
            kraus: Some(kraus),
            children: Vec::new(),
        }
    }

    pub fn measure(party: usize, kraus: Option<CMatrix>, children: Vec<NodeSpec>) -> Self {
        Self {
            party: Some(party),
            kraus,
            children,
        }
    }

    fn count(&self) -> usize {
        1 + self.children.iter().map(NodeSpec::count).sum::<usize>()
    }
}

#[derive(Clone, Debug)]
struct Node {
    party: Option<usize>,
    kraus: Option<CMatrix>,
    children: Vec<NodeId>,
    parent: Option<NodeId>,
    depth: usize,
}

/// An immutable protocol tree. Node ids are preorder indices (left child
/// first), so the root is always `0` and ids increase left to right among
/// nodes that are not ancestor and descendant.
#[derive(Clone, Debug)]
pub struct LoccTree {
    dims: Vec<usize>,
    nodes: Vec<Node>,
}

impl LoccTree {
    /// Builds a tree, checking its shape: party indices, Kraus presence and
    /// Kraus dimensions. Numerical properties are checked by [`validate_tree`].
    pub fn new(dims: Vec<usize>, root: NodeSpec) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "invalid party dimensions {dims:?}"
            )));
        }
        if root.kraus.is_some() {
            return Err(Error::InvalidTree(
                "root must not carry a Kraus operator".into(),
            ));
        }
        let total = root.count();
        if total > MAX_NODES {
            return Err(Error::InvalidTree(format!(
                "{total} nodes exceeds the limit of {MAX_NODES}"
            )));
        }
        let mut tree = Self {
            dims,
            nodes: Vec::with_capacity(total),
        };
        tree.push(root, None, 0)?;
        Ok(tree)
    }

    fn push(&mut self, spec: NodeSpec, parent: Option<NodeId>, depth: usize) -> Result<NodeId> {
        let id = self.nodes.len();
        match (spec.party, spec.children.is_empty()) {
            (Some(p), false) if p >= self.dims.len() => {
                return Err(Error::InvalidTree(format!(
                    "node {id}: party {p} out of range for {} parties",
                    self.dims.len()
                )))
            }
            (Some(_), true) => {
                return Err(Error::InvalidTree(format!(
                    "node {id}: measuring party but no outcomes"
                )))
            }
            (None, false) => {
                return Err(Error::InvalidTree(format!(
                    "node {id}: outcomes but no measuring party"
                )))
            }
            _ => {}
        }
        if let Some(parent) = parent {
            let beta = self.nodes[parent].party.expect("parents measure");
            let d = self.dims[beta];
            match &spec.kraus {
                None => {
                    return Err(Error::InvalidTree(format!(
                        "node {id}: missing Kraus operator"
                    )))
                }
                Some(k) if k.nrows() != d || k.ncols() != d => {
                    return Err(Error::Dimension(format!(
                        "node {id}: Kraus is {}x{}, party {beta} has dimension {d}",
                        k.nrows(),
                        k.ncols()
                    )))
                }
                _ => {}
            }
        }
        self.nodes.push(Node {
            party: spec.party,
            kraus: spec.kraus,
            children: Vec::new(),
            parent,
            depth,
        });
        for child in spec.children {
            let cid = self.push(child, Some(id), depth + 1)?;
            self.nodes[id].children.push(cid);
        }
        Ok(id)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn party_count(&self) -> usize {
        self.dims.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> std::ops::Range<NodeId> {
        0..self.nodes.len()
    }

    /// Measuring party at `id`, `None` for leaves.
    pub fn party(&self, id: NodeId) -> Option<usize> {
        self.nodes[id].party
    }

    /// Party whose measurement produced `id` (`None` for the root).
    pub fn edge_party(&self, id: NodeId) -> Option<usize> {
        self.nodes[id].parent.and_then(|p| self.nodes[p].party)
    }

    pub fn kraus(&self, id: NodeId) -> Option<&CMatrix> {
        self.nodes[id].kraus.as_ref()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id].depth
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.node_ids().filter(|&i| self.is_leaf(i)).collect()
    }

    /// True when `a` is a proper ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = self.nodes[b].parent;
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.nodes[p].parent;
        }
        false
    }

    /// Proper descendants of `id` in preorder.
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.nodes[id].children.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Nested description of the subtree rooted at `id`.
    pub fn to_spec(&self, id: NodeId) -> NodeSpec {
        let n = &self.nodes[id];
        NodeSpec {
            party: n.party,
            kraus: n.kraus.clone(),
            children: n.children.iter().map(|&c| self.to_spec(c)).collect(),
        }
    }

    pub fn root_spec(&self) -> NodeSpec {
        self.to_spec(self.root())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

/// Per-node, per-party accumulated Kraus products and positive labels.
#[derive(Clone, Debug)]
pub struct Accumulation {
    products: Vec<Vec<CMatrix>>,
    labels: Vec<Vec<HermitianOperator>>,
    edge_party: Vec<Option<usize>>,
}

impl Accumulation {
    /// `𝒦^(α)` at `node`.
    pub fn label(&self, node: NodeId, party: usize) -> &HermitianOperator {
        &self.labels[node][party]
    }

    pub fn labels(&self, node: NodeId) -> &[HermitianOperator] {
        &self.labels[node]
    }

    /// Ordered product of `party`'s Kraus operators from the root to `node`.
    pub fn product(&self, node: NodeId, party: usize) -> &CMatrix {
        &self.products[node][party]
    }

    /// The label a node carries as an outcome: `𝒦^(α)` for its edge party `α`.
    pub fn own_label(&self, node: NodeId) -> Option<(usize, &HermitianOperator)> {
        self.edge_party[node].map(|a| (a, &self.labels[node][a]))
    }
}

/// Computes every node's labels top-down; root labels are the identities.
pub fn accumulate(tree: &LoccTree) -> Accumulation {
    let n = tree.len();
    let mut products: Vec<Vec<CMatrix>> = Vec::with_capacity(n);
    let mut labels: Vec<Vec<HermitianOperator>> = Vec::with_capacity(n);
    for id in tree.node_ids() {
        let prods = match tree.parent(id) {
            None => tree
                .dims()
                .iter()
                .map(|&d| CMatrix::identity(d, d))
                .collect(),
            Some(p) => {
                // preorder: parents precede children
                let beta = tree.party(p).expect("parents measure");
                let mut prods = products[p].clone();
                prods[beta] = tree.kraus(id).expect("non-root has Kraus") * &prods[beta];
                prods
            }
        };
        labels.push(
            prods
                .iter()
                .map(|a| HermitianOperator::symmetrized(dagger_times(a)))
                .collect(),
        );
        products.push(prods);
    }
    Accumulation {
        products,
        labels,
        edge_party: tree.node_ids().map(|i| tree.edge_party(i)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// `Σ K†K ≠ I` over the outcomes of a measurement.
    Incomplete { node: NodeId, residual: f64 },
    /// Children's labels for the measuring party do not sum to the parent's.
    ChildSumMismatch { node: NodeId, residual: f64 },
    NonPositiveLabel {
        node: NodeId,
        party: usize,
        min_eigenvalue: f64,
    },
}

/// Checks completeness at every measurement, positivity of all labels and
/// the child-sum identity. An empty list means the tree is valid.
pub fn validate_tree(tree: &LoccTree, tol: &Tolerances) -> Vec<Diagnostic> {
    let acc = accumulate(tree);
    let mut out = Vec::new();
    for id in tree.node_ids() {
        for (a, label) in acc.labels(id).iter().enumerate() {
            if !label.is_psd(tol.psd) {
                out.push(Diagnostic::NonPositiveLabel {
                    node: id,
                    party: a,
                    min_eigenvalue: label.min_eigenvalue(),
                });
            }
        }
        let Some(beta) = tree.party(id) else { continue };
        let d = tree.dims()[beta];
        let mut sum = CMatrix::zeros(d, d);
        for &c in tree.children(id) {
            sum += dagger_times(tree.kraus(c).expect("non-root has Kraus"));
        }
        let residual = (sum - CMatrix::identity(d, d)).norm();
        if residual > tol.closure {
            out.push(Diagnostic::Incomplete { node: id, residual });
        }
        let parent_label = acc.label(id, beta);
        let mut child_sum = CMatrix::zeros(d, d);
        for &c in tree.children(id) {
            child_sum += acc.label(c, beta).matrix();
        }
        let residual = (child_sum - parent_label.matrix()).norm();
        if residual > tol.closure * parent_label.norm().max(1.0) {
            out.push(Diagnostic::ChildSumMismatch { node: id, residual });
        }
    }
    out
}

/// Separable operation implemented by a tree, with the outcome index of
/// every leaf (in left-to-right leaf order).
#[derive(Clone, Debug)]
pub struct Extraction {
    pub sep: SeparableOperation,
    pub leaf_outcomes: Vec<(NodeId, usize)>,
}

/// Reads each leaf's product outcome off its accumulated labels and merges
/// outcomes on the same ray.
///
/// A party's label at a leaf equals the label of its closest ancestor-or-self
/// node for that party, or the identity if the party never measured there,
/// since labels only change along that party's own edges.
pub fn extract_sep_detailed(tree: &LoccTree, tol: &Tolerances) -> Result<Extraction> {
    let diagnostics = validate_tree(tree, tol);
    if let Some(d) = diagnostics.first() {
        return Err(Error::InvalidTree(format!("{d:?}")));
    }
    let acc = accumulate(tree);
    let leaves = tree.leaves();
    let mut raw = Vec::with_capacity(leaves.len());
    for &leaf in &leaves {
        let o = ProductOperator::from_unnormalized(acc.labels(leaf).to_vec(), tol)
            .map_err(|e| Error::InvalidTree(format!("leaf {leaf}: {e}")))?;
        raw.push(o);
    }
    let sep = SeparableOperation::from_merged(tree.dims().to_vec(), raw.clone(), tol)?;
    let leaf_outcomes = leaves
        .iter()
        .zip(&raw)
        .map(|(&leaf, o)| {
            (
                leaf,
                sep.find_outcome(o, tol.cone)
                    .expect("merged from these outcomes"),
            )
        })
        .collect();
    Ok(Extraction { sep, leaf_outcomes })
}

pub fn extract_sep(tree: &LoccTree, tol: &Tolerances) -> Result<SeparableOperation> {
    Ok(extract_sep_detailed(tree, tol)?.sep)
}

/// Every measurement has exactly two outcomes whose labels for the measuring
/// party are not proportional.
pub fn is_canonical(tree: &LoccTree, tol: &Tolerances) -> bool {
    let acc = accumulate(tree);
    tree.node_ids().all(|id| match tree.party(id) {
        None => true,
        Some(beta) => {
            let ch = tree.children(id);
            if ch.len() != 2 {
                return false;
            }
            let (a, b) = (acc.label(ch[0], beta), acc.label(ch[1], beta));
            if a.norm() == 0.0 || b.norm() == 0.0 {
                return false;
            }
            matches!(crate::operator::proportionality(a, b, tol.cone), Ok(None))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FullBinaryCounts {
    pub leaves: usize,
    pub non_leaves: usize,
    pub ok: bool,
}

/// Leaf and non-leaf counts of a tree whose out-degrees are all 0 or 2.
pub fn full_binary_check(tree: &LoccTree) -> Result<FullBinaryCounts> {
    let mut leaves = 0;
    let mut non_leaves = 0;
    for id in tree.node_ids() {
        match tree.children(id).len() {
            0 => leaves += 1,
            2 => non_leaves += 1,
            degree => return Err(Error::NotFullBinary { node: id, degree }),
        }
    }
    Ok(FullBinaryCounts {
        leaves,
        non_leaves,
        ok: leaves == non_leaves + 1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Violation {
    pub node: NodeId,
    pub party: usize,
    /// Index into the party's extreme rays.
    pub ray: usize,
}

/// α-nodes that have an α-node descendant yet lie on an extreme ray of
/// party α's cone. A correct canonical tree yields no violations.
pub fn lemma1_scan_with(tree: &LoccTree, rays: &ExtremeRays) -> Vec<Lemma1Violation> {
    let acc = accumulate(tree);
    let mut out = Vec::new();
    for id in tree.node_ids() {
        let Some((alpha, label)) = acc.own_label(id) else {
            continue;
        };
        let has_alpha_descendant = tree
            .descendants(id)
            .into_iter()
            .any(|d| tree.edge_party(d) == Some(alpha));
        if !has_alpha_descendant {
            continue;
        }
        if let Some(ray) = rays.matching(alpha, label) {
            out.push(Lemma1Violation {
                node: id,
                party: alpha,
                ray,
            });
        }
    }
    out
}

pub fn lemma1_scan(
    tree: &LoccTree,
    sep: &SeparableOperation,
    tol: &Tolerances,
) -> Result<Vec<Lemma1Violation>> {
    let rays = ExtremeRays::from_sep(sep, tol.cone, tol.psd)?;
    Ok(lemma1_scan_with(tree, &rays))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn diag(v: &[f64]) -> CMatrix {
        HermitianOperator::from_real_diagonal(v).into_matrix()
    }

    fn one_round() -> LoccTree {
        LoccTree::new(
            vec![2, 2],
            NodeSpec::measure(
                0,
                None,
                vec![
                    NodeSpec::leaf(diag(&[1.0, 0.0])),
                    NodeSpec::leaf(diag(&[0.0, 1.0])),
                ],
            ),
        )
        .unwrap()
    }

    #[test]
    fn root_labels_are_identities() {
        let t = one_round();
        let acc = accumulate(&t);
        assert_eq!(acc.label(0, 0), &HermitianOperator::identity(2));
        assert_eq!(acc.label(0, 1), &HermitianOperator::identity(2));
        assert_eq!(
            acc.label(1, 0),
            &HermitianOperator::from_real_diagonal(&[1.0, 0.0])
        );
        assert_eq!(acc.label(1, 1), &HermitianOperator::identity(2));
        assert_eq!(acc.own_label(1).unwrap().0, 0);
        assert!(acc.own_label(0).is_none());
    }

    #[test]
    fn successive_kraus_accumulate_in_order() {
        use num_complex::Complex64;
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.6, 0.0),
                Complex64::new(0.0, 0.2),
                Complex64::new(0.1, 0.0),
                Complex64::new(0.5, 0.0),
            ],
        );
        let b = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.3, 0.1),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.2, 0.0),
                Complex64::new(0.7, -0.1),
            ],
        );
        // Shape only; completeness is irrelevant for the label formula.
        let t = LoccTree::new(
            vec![2],
            NodeSpec::measure(
                0,
                None,
                vec![NodeSpec::measure(
                    0,
                    Some(a.clone()),
                    vec![NodeSpec::leaf(b.clone())],
                )],
            ),
        )
        .unwrap();
        let acc = accumulate(&t);
        let expected = a.adjoint() * b.adjoint() * &b * &a;
        assert!((acc.label(2, 0).matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_tree(&one_round(), &Tolerances::default()).is_empty());

        let single = LoccTree::new(
            vec![2],
            NodeSpec {
                party: None,
                kraus: None,
                children: vec![],
            },
        )
        .unwrap();
        assert!(validate_tree(&single, &Tolerances::default()).is_empty());

        let bad = LoccTree::new(
            vec![2],
            NodeSpec::measure(
                0,
                None,
                vec![
                    NodeSpec::leaf(diag(&[1.0, 0.0])),
                    NodeSpec::leaf(diag(&[1.0, 0.0])),
                ],
            ),
        )
        .unwrap();
        let d = validate_tree(&bad, &Tolerances::default());
        assert!(matches!(d[0], Diagnostic::Incomplete { node: 0, .. }));
        assert!(extract_sep(&bad, &Tolerances::default()).is_err());
    }

    #[test]
    fn shape_errors() {
        let k = diag(&[1.0, 1.0]);
        assert!(LoccTree::new(vec![2], NodeSpec::leaf(k.clone())).is_err());
        assert!(LoccTree::new(
            vec![2],
            NodeSpec::measure(3, None, vec![NodeSpec::leaf(k.clone())])
        )
        .is_err());
        assert!(
            LoccTree::new(vec![3], NodeSpec::measure(0, None, vec![NodeSpec::leaf(k)])).is_err()
        );
        assert!(LoccTree::new(
            vec![2],
            NodeSpec {
                party: Some(0),
                kraus: None,
                children: vec![]
            }
        )
        .is_err());
    }

    #[test]
    fn extraction_of_one_round() {
        let tol = Tolerances::default();
        let sep = extract_sep(&one_round(), &tol).unwrap();
        assert_eq!(sep.len(), 2);
        for o in sep.outcomes() {
            assert_eq!(o.local(1), &HermitianOperator::identity(2).scale(0.5));
        }
        assert!(sep.closure_residual() < 1e-15);
    }

    #[test]
    fn full_binary_counts() {
        let single = LoccTree::new(
            vec![2],
            NodeSpec {
                party: None,
                kraus: None,
                children: vec![],
            },
        )
        .unwrap();
        assert_eq!(
            full_binary_check(&single).unwrap(),
            FullBinaryCounts {
                leaves: 1,
                non_leaves: 0,
                ok: true
            }
        );
        assert_eq!(
            full_binary_check(&one_round()).unwrap(),
            FullBinaryCounts {
                leaves: 2,
                non_leaves: 1,
                ok: true
            }
        );
        let unary = LoccTree::new(
            vec![2],
            NodeSpec::measure(0, None, vec![NodeSpec::leaf(diag(&[1.0, 1.0]))]),
        )
        .unwrap();
        assert!(matches!(
            full_binary_check(&unary),
            Err(Error::NotFullBinary { node: 0, degree: 1 })
        ));
    }

    #[test]
    fn canonical_checks() {
        let tol = Tolerances::default();
        assert!(is_canonical(&one_round(), &tol));
        let s = 0.5_f64.sqrt();
        let prop = LoccTree::new(
            vec![2],
            NodeSpec::measure(
                0,
                None,
                vec![NodeSpec::leaf(diag(&[s, s])), NodeSpec::leaf(diag(&[s, s]))],
            ),
        )
        .unwrap();
        assert!(!is_canonical(&prop, &tol));
        let three = LoccTree::new(
            vec![3],
            NodeSpec::measure(
                0,
                None,
                vec![
                    NodeSpec::leaf(diag(&[1.0, 0.0, 0.0])),
                    NodeSpec::leaf(diag(&[0.0, 1.0, 0.0])),
                    NodeSpec::leaf(diag(&[0.0, 0.0, 1.0])),
                ],
            ),
        )
        .unwrap();
        assert!(!is_canonical(&three, &tol));
    }

    #[test]
    fn parent_label_is_sum_of_children() {
        // Party 0 measures {diag(1,.5), diag(0,.5)} then refines the first
        // outcome into diag(1,0) and diag(0,.5): the parent is a sum of
        // non-proportional children and must not be reported extreme.
        let tol = Tolerances::default();
        let s = 0.5_f64.sqrt();
        let t = LoccTree::new(
            vec![2],
            NodeSpec::measure(
                0,
                None,
                vec![
                    NodeSpec::measure(
                        0,
                        Some(diag(&[1.0, s])),
                        vec![
                            NodeSpec::leaf(diag(&[1.0, 0.0])),
                            NodeSpec::leaf(diag(&[0.0, 1.0])),
                        ],
                    ),
                    NodeSpec::leaf(diag(&[0.0, s])),
                ],
            ),
        )
        .unwrap();
        assert!(validate_tree(&t, &tol).is_empty());
        let sep = extract_sep(&t, &tol).unwrap();
        let rays = ExtremeRays::from_sep(&sep, tol.cone, tol.psd).unwrap();
        let acc = accumulate(&t);
        assert!(rays.matching(0, acc.label(1, 0)).is_none());
        assert!(lemma1_scan_with(&t, &rays).is_empty());
    }
}

//! Keeper-based pruning of canonical protocol trees.
//!
//! Every distinct outcome keeps its right-most leaf (the *keeper*). The
//! left-most non-keeper leaf is grown into a maximal keeperless subtree `T`,
//! which is then removed together with one extra node so that the tree stays
//! full binary:
//!
//! - type 1: the parent `n_p` of `T` goes, and `T`'s sibling `n_c` takes
//!   `n_p`'s place;
//! - type 2: used when every outcome in `T` keeps its keeper below `n_p`; the
//!   sibling `n_c` goes and its children become children of `n_p`.
//!
//! Pruning ends with exactly the `N` keepers as leaves. The procedure checks
//! its own invariants after every removal and reports a
//! [`Error::Structure`] if one fails.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::cone::ExtremeRays;
use crate::sep::{ProductOperator, SeparableOperation};
use crate::tree::{accumulate, Accumulation, LoccTree, NodeId};
use crate::{Error, Result, Tolerances};

/// Outcome index of every leaf and the keeper leaf of every outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeeperMarking {
    /// `(leaf, outcome)` in left-to-right order.
    pub leaf_outcomes: Vec<(NodeId, usize)>,
    /// `keepers[j]` is the right-most leaf realising outcome `j`.
    pub keepers: Vec<NodeId>,
}

impl KeeperMarking {
    pub fn outcome_of(&self, leaf: NodeId) -> Option<usize> {
        self.leaf_outcomes
            .iter()
            .find(|(l, _)| *l == leaf)
            .map(|&(_, j)| j)
    }

    pub fn is_keeper(&self, leaf: NodeId) -> bool {
        self.keepers.contains(&leaf)
    }
}

/// Matches every leaf to an outcome of `sep` and marks the right-most leaf of
/// each outcome as its keeper.
pub fn select_keepers(
    tree: &LoccTree,
    sep: &SeparableOperation,
    tol: &Tolerances,
) -> Result<KeeperMarking> {
    let acc = accumulate(tree);
    let mut leaf_outcomes = Vec::new();
    let mut keepers: Vec<Option<NodeId>> = vec![None; sep.len()];
    // preorder ids: leaves come out left to right
    for leaf in tree.leaves() {
        let o = ProductOperator::from_unnormalized(acc.labels(leaf).to_vec(), tol)
            .map_err(|_| Error::UnmatchedLeaf { leaf })?;
        let j = sep
            .find_outcome(&o, tol.cone)
            .ok_or(Error::UnmatchedLeaf { leaf })?;
        leaf_outcomes.push((leaf, j));
        keepers[j] = Some(leaf);
    }
    let keepers = keepers
        .into_iter()
        .enumerate()
        .map(|(j, k)| k.ok_or_else(|| Error::Structure(format!("outcome {j} has no leaf"))))
        .collect::<Result<_>>()?;
    Ok(KeeperMarking {
        leaf_outcomes,
        keepers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RemovalKind {
    #[serde(rename = "type1")]
    Type1,
    #[serde(rename = "type2")]
    Type2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemovalRecord {
    pub kind: RemovalKind,
    pub subtree_root: NodeId,
    /// `n_p` for type 1, `n_c` for type 2.
    pub extra_node: NodeId,
    pub leaves_remaining: usize,
    /// Surviving `(node, children)` pairs after the removal, when tracing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Vec<(NodeId, Vec<NodeId>)>>,
}

#[derive(Clone, Copy, Debug)]
pub struct PruneOptions {
    /// Keep a full snapshot of the tree in every removal record.
    pub trace: bool,
    /// Compare every surviving ancestor/descendant pair with the original
    /// tree after each removal (quadratic in the tree size).
    pub verify_ancestry: bool,
}

impl Default for PruneOptions {
    fn default() -> Self {
        Self {
            trace: false,
            verify_ancestry: true,
        }
    }
}

/// A tree being pruned. Node ids are those of the original tree.
pub struct PruneState<'a> {
    tree: &'a LoccTree,
    acc: Accumulation,
    rays: ExtremeRays,
    marking: KeeperMarking,
    keeper: Vec<bool>,
    outcome: Vec<Option<usize>>,
    children: Vec<Vec<NodeId>>,
    parent: Vec<Option<NodeId>>,
    alive: Vec<bool>,
}

impl<'a> PruneState<'a> {
    pub fn new(tree: &'a LoccTree, sep: &SeparableOperation, tol: &Tolerances) -> Result<Self> {
        let marking = select_keepers(tree, sep, tol)?;
        let n = tree.len();
        let mut keeper = vec![false; n];
        for &k in &marking.keepers {
            keeper[k] = true;
        }
        let mut outcome = vec![None; n];
        for &(leaf, j) in &marking.leaf_outcomes {
            outcome[leaf] = Some(j);
        }
        Ok(Self {
            tree,
            acc: accumulate(tree),
            rays: ExtremeRays::from_sep(sep, tol.cone, tol.psd)?,
            marking,
            keeper,
            outcome,
            children: tree.node_ids().map(|i| tree.children(i).to_vec()).collect(),
            parent: tree.node_ids().map(|i| tree.parent(i)).collect(),
            alive: vec![true; n],
        })
    }

    pub fn marking(&self) -> &KeeperMarking {
        &self.marking
    }

    pub fn rays(&self) -> &ExtremeRays {
        &self.rays
    }

    pub fn root(&self) -> NodeId {
        self.tree.root()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id]
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id]
    }

    /// Surviving nodes in preorder.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.subtree(self.root())
    }

    /// Surviving leaves, left to right.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes()
            .into_iter()
            .filter(|&n| self.children[n].is_empty())
            .collect()
    }

    fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children[n].iter().rev());
        }
        out
    }

    fn has_keeper(&self, id: NodeId) -> bool {
        self.subtree(id).into_iter().any(|n| self.keeper[n])
    }

    fn is_descendant(&self, node: NodeId, ancestor: NodeId) -> bool {
        let mut cur = self.parent[node];
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let p = self.parent[id]?;
        self.children[p].iter().copied().find(|&c| c != id)
    }

    pub fn leftmost_non_keeper(&self) -> Option<NodeId> {
        self.leaves().into_iter().find(|&l| !self.keeper[l])
    }

    /// Grows `leaf` upward while the sibling subtree holds no keeper.
    pub fn grow_maximal_keeperless(&self, leaf: NodeId) -> Result<NodeId> {
        if self.keeper[leaf] {
            return Err(Error::InvalidParameter(format!("leaf {leaf} is a keeper")));
        }
        let mut t = leaf;
        loop {
            let Some(sib) = self.sibling(t) else {
                return Err(Error::Structure(
                    "keeperless subtree reached the root".into(),
                ));
            };
            if self.has_keeper(sib) {
                return Ok(t);
            }
            t = self.parent[t].expect("has a sibling, so has a parent");
        }
    }

    pub fn classify_removal(&self, t: NodeId) -> Result<RemovalKind> {
        if self.has_keeper(t) {
            return Err(Error::InvalidParameter(format!(
                "subtree {t} contains a keeper"
            )));
        }
        let n_p = self.parent[t]
            .ok_or_else(|| Error::InvalidParameter("cannot remove the root".into()))?;
        let outcomes: BTreeSet<usize> = self
            .subtree(t)
            .into_iter()
            .filter_map(|n| self.outcome[n])
            .collect();
        let all_below = outcomes
            .iter()
            .all(|&j| self.is_descendant(self.marking.keepers[j], n_p));
        Ok(if all_below {
            RemovalKind::Type2
        } else {
            RemovalKind::Type1
        })
    }

    pub fn apply_removal(
        &mut self,
        t: NodeId,
        kind: RemovalKind,
        trace: bool,
    ) -> Result<RemovalRecord> {
        let n_p = self.parent[t].ok_or_else(|| Error::Structure("removal at the root".into()))?;
        let n_c = self
            .sibling(t)
            .ok_or_else(|| Error::Structure(format!("node {t} has no sibling")))?;
        for n in self.subtree(t) {
            self.alive[n] = false;
        }
        let extra = match kind {
            RemovalKind::Type1 => {
                let g = self.parent[n_p].ok_or_else(|| {
                    Error::Structure("type-1 removal would delete the root".into())
                })?;
                let slot = self.children[g]
                    .iter()
                    .position(|&c| c == n_p)
                    .expect("child of its parent");
                self.children[g][slot] = n_c;
                self.parent[n_c] = Some(g);
                self.alive[n_p] = false;
                self.children[n_p].clear();
                n_p
            }
            RemovalKind::Type2 => {
                if self.children[n_c].is_empty() {
                    return Err(Error::Structure(format!(
                        "type-2 extra node {n_c} is a leaf"
                    )));
                }
                if let Some((alpha, label)) = self.acc.own_label(n_c) {
                    if self.rays.matching(alpha, label).is_some() {
                        return Err(Error::Structure(format!(
                            "type-2 extra node {n_c} is an extreme ray"
                        )));
                    }
                }
                let grandchildren = std::mem::take(&mut self.children[n_c]);
                for &g in &grandchildren {
                    self.parent[g] = Some(n_p);
                }
                self.children[n_p] = grandchildren;
                self.alive[n_c] = false;
                n_c
            }
        };
        self.parent[t] = None;
        self.parent[extra] = None;
        let leaves_remaining = self.leaves().len();
        let snapshot = trace.then(|| {
            self.nodes()
                .into_iter()
                .map(|n| (n, self.children[n].clone()))
                .collect()
        });
        Ok(RemovalRecord {
            kind,
            subtree_root: t,
            extra_node: extra,
            leaves_remaining,
            snapshot,
        })
    }

    /// Full-binary shape, `leaves = non-leaves + 1`, all keepers present and,
    /// optionally, unchanged ancestor relations among survivors.
    pub fn check_invariants(&self, verify_ancestry: bool) -> Result<()> {
        let nodes = self.nodes();
        let mut leaves = 0;
        for &n in &nodes {
            match self.children[n].len() {
                0 => leaves += 1,
                2 => {}
                d => return Err(Error::Structure(format!("node {n} has {d} children"))),
            }
        }
        if leaves != nodes.len() - leaves + 1 {
            return Err(Error::Structure(format!(
                "{leaves} leaves for {} non-leaves",
                nodes.len() - leaves
            )));
        }
        if let Some(&k) = self.marking.keepers.iter().find(|&&k| !self.alive[k]) {
            return Err(Error::Structure(format!("keeper {k} was removed")));
        }
        if verify_ancestry {
            for &a in &nodes {
                for &b in &nodes {
                    if a != b && self.is_descendant(b, a) != self.tree.is_ancestor(a, b) {
                        return Err(Error::Structure(format!("ancestry of {a} and {b} changed")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Rays of every party that appear as some surviving non-root node's own label.
    pub fn surviving_rays(&self) -> BTreeSet<(usize, usize)> {
        self.nodes()
            .into_iter()
            .filter(|&n| n != self.root())
            .filter_map(|n| {
                let (alpha, label) = self.acc.own_label(n)?;
                self.rays.matching(alpha, label).map(|r| (alpha, r))
            })
            .collect()
    }
}

/// Fully pruned tree and the removals that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct PruneOutcome {
    pub root: NodeId,
    pub nodes: Vec<NodeId>,
    pub leaves: Vec<NodeId>,
    pub records: Vec<RemovalRecord>,
    /// `(party, ray index)` pairs found among surviving node labels.
    pub surviving_rays: BTreeSet<(usize, usize)>,
    pub total_rays: usize,
}

impl PruneOutcome {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Removes all non-keeper leaves, checking invariants after every step and
/// the final postconditions: `N` keeper leaves, `2N−1` nodes, the original
/// root, and every extreme ray still present.
pub fn prune(
    tree: &LoccTree,
    sep: &SeparableOperation,
    tol: &Tolerances,
    opts: PruneOptions,
) -> Result<PruneOutcome> {
    let mut state = PruneState::new(tree, sep, tol)?;
    state.check_invariants(opts.verify_ancestry)?;
    let budget = tree.leaves().len() - sep.len();
    let mut records = Vec::new();
    while let Some(leaf) = state.leftmost_non_keeper() {
        if records.len() >= budget {
            return Err(Error::Structure(
                "pruning exceeded its removal budget".into(),
            ));
        }
        let t = state.grow_maximal_keeperless(leaf)?;
        let kind = state.classify_removal(t)?;
        records.push(state.apply_removal(t, kind, opts.trace)?);
        state.check_invariants(opts.verify_ancestry)?;
    }
    let nodes = state.nodes();
    let leaves = state.leaves();
    let n = sep.len();
    if leaves.len() != n || nodes.len() != 2 * n - 1 {
        return Err(Error::Structure(format!(
            "pruned tree has {} leaves and {} nodes for N = {n}",
            leaves.len(),
            nodes.len()
        )));
    }
    if !state.is_alive(tree.root()) || state.parent(tree.root()).is_some() {
        return Err(Error::Structure("original root did not survive".into()));
    }
    let surviving_rays = state.surviving_rays();
    let total_rays = state.rays().total();
    if surviving_rays.len() != total_rays {
        return Err(Error::Structure(format!(
            "{} of {total_rays} extreme rays survive",
            surviving_rays.len()
        )));
    }
    Ok(PruneOutcome {
        root: tree.root(),
        nodes,
        leaves,
        records,
        surviving_rays,
        total_rays,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PrunedBound {
    /// Distinct extreme rays found among non-root node labels.
    pub extreme_nodes: usize,
    pub bound: usize,
    pub ok: bool,
}

/// Counts the extreme rays represented in a pruned tree against `2(N−1)`.
pub fn bound_from_pruned(outcome: &PruneOutcome, sep: &SeparableOperation) -> PrunedBound {
    let bound = 2 * sep.len().saturating_sub(1);
    let extreme_nodes = outcome.surviving_rays.len();
    PrunedBound {
        extreme_nodes,
        bound,
        ok: extreme_nodes <= bound,
    }
}

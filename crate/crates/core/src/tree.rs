//! Finite event trees: the filtration on which every process lives.
//!
//! Nodes are stored in time order (parents before children), so a reverse
//! scan over [`EventTree::indices`] is a valid backward induction order.
//! Branch probabilities are the stored primitive; unconditional node
//! probabilities are derived once at build time.

use std::collections::HashMap;

use thiserror::Error;

use crate::scalar::Scalar;

/// Default guard for [`enumerate_stopping_times`].
pub const DEFAULT_STOPPING_TIME_CAP: usize = 100_000;

/// Float-mode tolerance for the branch probability normalization check.
const FLOAT_PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("tree has no nodes")]
    EmptyTree,
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("no root node at time 0")]
    MissingRoot,
    #[error("more than one root: {0:?}")]
    MultipleRoots(String),
    #[error("node {0:?} references a missing parent or has no parent")]
    OrphanNode(String),
    #[error("node {0:?} has a time inconsistent with its parent or the horizon")]
    TimeMismatch(String),
    #[error("node {0:?} is a leaf before the horizon")]
    LeafBeforeHorizon(String),
    #[error("branch probabilities below node {0:?} do not sum to 1")]
    ProbabilityNotNormalized(String),
    #[error("node {0:?} has a non-positive branch probability")]
    NonPositiveProbability(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{count} stopping times exceed the cap of {cap}")]
    EnumerationCapExceeded { count: String, cap: usize },
}

/// Raw node description, as found in market files.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord<S> {
    pub id: String,
    pub time: usize,
    pub parent: Option<String>,
    /// Conditional probability of reaching this node from its parent.
    pub prob: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<S> {
    pub id: String,
    pub time: usize,
    pub parent: Option<usize>,
    pub prob: S,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTree<S> {
    horizon: usize,
    nodes: Vec<Node<S>>,
    ids: HashMap<String, usize>,
    uncond: Vec<S>,
}

impl<S: Scalar> EventTree<S> {
    /// Validates raw records and builds the tree.
    pub fn build(horizon: usize, records: Vec<NodeRecord<S>>) -> Result<Self, TreeError> {
        if horizon == 0 {
            return Err(TreeError::InvalidHorizon);
        }
        if records.is_empty() {
            return Err(TreeError::EmptyTree);
        }

        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by_key(|&i| records[i].time);

        let mut ids = HashMap::with_capacity(records.len());
        for (pos, &i) in order.iter().enumerate() {
            if ids.insert(records[i].id.clone(), pos).is_some() {
                return Err(TreeError::DuplicateNode(records[i].id.clone()));
            }
        }

        let mut nodes: Vec<Node<S>> = Vec::with_capacity(records.len());
        let mut root_seen = false;
        for &i in &order {
            let rec = &records[i];
            if rec.time > horizon {
                return Err(TreeError::TimeMismatch(rec.id.clone()));
            }
            let parent = match &rec.parent {
                None => {
                    if rec.time != 0 {
                        return Err(TreeError::OrphanNode(rec.id.clone()));
                    }
                    if root_seen {
                        return Err(TreeError::MultipleRoots(rec.id.clone()));
                    }
                    root_seen = true;
                    None
                }
                Some(pid) => {
                    let p = *ids
                        .get(pid)
                        .ok_or_else(|| TreeError::OrphanNode(rec.id.clone()))?;
                    if records[order[p]].time + 1 != rec.time {
                        return Err(TreeError::TimeMismatch(rec.id.clone()));
                    }
                    Some(p)
                }
            };
            if !rec.prob.is_pos_tol(0.0) {
                return Err(TreeError::NonPositiveProbability(rec.id.clone()));
            }
            if rec.prob > S::one() {
                return Err(TreeError::ProbabilityNotNormalized(rec.id.clone()));
            }
            nodes.push(Node {
                id: rec.id.clone(),
                time: rec.time,
                parent,
                prob: rec.prob.clone(),
                children: Vec::new(),
            });
        }
        if !root_seen {
            return Err(TreeError::MissingRoot);
        }
        // Sorting by time puts the unique time-0 node first.
        debug_assert!(nodes[0].parent.is_none());
        if nodes[0].prob != S::one() {
            return Err(TreeError::ProbabilityNotNormalized(nodes[0].id.clone()));
        }

        for i in 1..nodes.len() {
            let p = nodes[i].parent.expect("non-root nodes have parents");
            nodes[p].children.push(i);
        }

        for node in &nodes {
            if node.children.is_empty() {
                if node.time != horizon {
                    return Err(TreeError::LeafBeforeHorizon(node.id.clone()));
                }
                continue;
            }
            let total = node
                .children
                .iter()
                .fold(S::zero(), |acc, &c| acc + nodes[c].prob.clone());
            if !total.approx_eq(&S::one(), FLOAT_PROB_TOL) {
                return Err(TreeError::ProbabilityNotNormalized(node.id.clone()));
            }
        }

        let mut uncond: Vec<S> = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let p = match node.parent {
                None => S::one(),
                Some(par) => uncond[par].mul_ref(&node.prob),
            };
            uncond.push(p);
        }

        Ok(EventTree {
            horizon,
            nodes,
            ids,
            uncond,
        })
    }

    /// Single scenario: `horizon + 1` nodes with unit branch probabilities.
    pub fn deterministic(horizon: usize) -> Self {
        let records = (0..=horizon)
            .map(|t| NodeRecord {
                id: format!("n{t}"),
                time: t,
                parent: (t > 0).then(|| format!("n{}", t - 1)),
                prob: S::one(),
            })
            .collect();
        Self::build(horizon, records).expect("deterministic tree is valid")
    }

    /// Complete tree where every internal node has `branching` equally
    /// likely children.
    pub fn uniform(horizon: usize, branching: usize) -> Self {
        let probs = vec![S::ratio(1, branching as i64); branching];
        Self::from_branch_probs(horizon, |_, _| probs.clone())
    }

    /// Builds a complete tree, asking `probs(node_index, time)` for the
    /// branch probabilities of each internal node.
    pub fn from_branch_probs<F>(horizon: usize, mut probs: F) -> Self
    where
        F: FnMut(usize, usize) -> Vec<S>,
    {
        let mut records = vec![NodeRecord {
            id: "n0".to_string(),
            time: 0,
            parent: None,
            prob: S::one(),
        }];
        let mut frontier = vec![0usize];
        for t in 0..horizon {
            let mut next = Vec::new();
            for &parent in &frontier {
                for p in probs(parent, t) {
                    let idx = records.len();
                    records.push(NodeRecord {
                        id: format!("n{idx}"),
                        time: t + 1,
                        parent: Some(format!("n{parent}")),
                        prob: p,
                    });
                    next.push(idx);
                }
            }
            frontier = next;
        }
        Self::build(horizon, records).expect("generated tree is valid")
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, idx: usize) -> &Node<S> {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.nodes.len()
    }

    pub fn index_of(&self, id: &str) -> Result<usize, TreeError> {
        self.ids
            .get(id)
            .copied()
            .ok_or_else(|| TreeError::UnknownNode(id.to_string()))
    }

    pub fn time(&self, idx: usize) -> usize {
        self.nodes[idx].time
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.nodes[idx].parent
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.nodes[idx].children
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.nodes[idx].children.is_empty()
    }

    /// Conditional probability of `idx` given its parent.
    pub fn branch_prob(&self, idx: usize) -> &S {
        &self.nodes[idx].prob
    }

    /// Unconditional probability of reaching `idx`.
    pub fn probability(&self, idx: usize) -> &S {
        &self.uncond[idx]
    }

    /// Unconditional probability of the node with the given id.
    pub fn node_probability(&self, id: &str) -> Result<&S, TreeError> {
        Ok(self.probability(self.index_of(id)?))
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices().filter(|&i| self.is_leaf(i))
    }

    pub fn nodes_at(&self, time: usize) -> impl Iterator<Item = usize> + '_ {
        self.indices().filter(move |&i| self.nodes[i].time == time)
    }

    /// Node indices from the root down to `idx`, inclusive.
    pub fn path(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `idx` and all of its descendants, in storage order.
    pub fn subtree(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![idx];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.nodes[out[i]].children);
            i += 1;
        }
        out.sort_unstable();
        out
    }

    /// Probability of `desc` conditional on `anc`; zero if `desc` is not
    /// in the subtree of `anc`.
    pub fn conditional_probability(&self, anc: usize, desc: usize) -> S {
        let mut p = S::one();
        let mut cur = desc;
        while cur != anc {
            match self.nodes[cur].parent {
                Some(par) => {
                    p = p.mul_ref(&self.nodes[cur].prob);
                    cur = par;
                }
                None => return S::zero(),
            }
        }
        p
    }

    /// Backward recursion `acc(n) = own(n) + Σ_c p(c)·acc(c)` for vector
    /// valued processes, i.e. `E[Σ_{s≥t} own_s | F_t]`.
    pub fn aggregate_forward_sum(&self, own: &[Vec<S>]) -> Vec<Vec<S>> {
        let mut acc: Vec<Vec<S>> = own.to_vec();
        for n in self.indices().rev() {
            for &c in self.children(n) {
                let p = &self.nodes[c].prob;
                let child = acc[c].clone();
                for (a, v) in acc[n].iter_mut().zip(&child) {
                    *a = a.add_ref(&p.mul_ref(v));
                }
            }
        }
        acc
    }

    /// Scalar version of [`EventTree::aggregate_forward_sum`].
    pub fn aggregate_forward_sum_scalar(&self, own: &[S]) -> Vec<S> {
        let mut acc = own.to_vec();
        for n in self.indices().rev() {
            for &c in self.children(n) {
                let add = self.nodes[c].prob.mul_ref(&acc[c]);
                acc[n] = acc[n].add_ref(&add);
            }
        }
        acc
    }

    /// Expectation `Σ_n P(n)·f(n)` over all nodes.
    pub fn node_sum<F: Fn(usize) -> S>(&self, f: F) -> S {
        self.indices()
            .fold(S::zero(), |acc, n| acc + self.uncond[n].mul_ref(&f(n)))
    }
}

/// A stopping time, given by the set of nodes where the path stops.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoppingTime {
    stops: Vec<bool>,
}

impl StoppingTime {
    /// Validates a per-node stop flag assignment.
    pub fn from_flags<S: Scalar>(tree: &EventTree<S>, flags: Vec<bool>) -> Option<Self> {
        is_stopping_time(tree, &flags).then_some(StoppingTime { stops: flags })
    }

    pub fn flags(&self) -> &[bool] {
        &self.stops
    }

    pub fn is_stop(&self, node: usize) -> bool {
        self.stops[node]
    }

    pub fn stop_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.stops
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
    }

    /// The constant stopping time `τ ≡ t`.
    pub fn constant<S: Scalar>(tree: &EventTree<S>, t: usize) -> Self {
        StoppingTime {
            stops: tree.indices().map(|n| tree.time(n) == t).collect(),
        }
    }
}

/// Every root-to-leaf path must carry exactly one stop flag.
pub fn is_stopping_time<S: Scalar>(tree: &EventTree<S>, flags: &[bool]) -> bool {
    if flags.len() != tree.len() {
        return false;
    }
    tree.leaves()
        .all(|leaf| tree.path(leaf).iter().filter(|&&n| flags[n]).count() == 1)
}

/// Number of stopping times, `N(n) = 1 + Π_c N(c)` with `N = 1` at leaves.
/// Saturates at `u128::MAX`.
pub fn count_stopping_times<S: Scalar>(tree: &EventTree<S>) -> u128 {
    let mut count = vec![1u128; tree.len()];
    for n in tree.indices().rev() {
        if tree.is_leaf(n) {
            continue;
        }
        let prod = tree
            .children(n)
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(count[c]));
        count[n] = prod.saturating_add(1);
    }
    count[tree.root()]
}

/// All stopping times: stop at a node, or recurse into every child.
pub fn enumerate_stopping_times<S: Scalar>(
    tree: &EventTree<S>,
    cap: usize,
) -> Result<Vec<StoppingTime>, TreeError> {
    let count = count_stopping_times(tree);
    if count > cap as u128 {
        return Err(TreeError::EnumerationCapExceeded {
            count: if count == u128::MAX {
                "more than 2^128".to_string()
            } else {
                count.to_string()
            },
            cap,
        });
    }
    let sets = stop_sets(tree, tree.root());
    Ok(sets
        .into_iter()
        .map(|set| {
            let mut stops = vec![false; tree.len()];
            for n in set {
                stops[n] = true;
            }
            StoppingTime { stops }
        })
        .collect())
}

fn stop_sets<S: Scalar>(tree: &EventTree<S>, node: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![node]];
    if tree.is_leaf(node) {
        return out;
    }
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for &c in tree.children(node) {
        let child_sets = stop_sets(tree, c);
        let mut next = Vec::with_capacity(combos.len() * child_sets.len());
        for prefix in &combos {
            for s in &child_sets {
                let mut v = prefix.clone();
                v.extend_from_slice(s);
                next.push(v);
            }
        }
        combos = next;
    }
    out.extend(combos);
    out
}

//! Node-measures and randomized stopping times for two-asset markets.
//!
//! Asset 1 is the numeraire (`S¹ ≡ 1`); asset 2 trades at ask `S²(1+λ)` and
//! bid `S²(1−μ)`, with `λ`, `μ` allowed to vary from node to node. A dual
//! process `Z` maps to a node-measure `(χ, q)` by `q ∝ Z¹` and
//! `χ = Z²/(S² Z¹)`, and a node-measure maps to a randomized stopping time
//! `X` under a measure `Q` given by its density process `H`.

use thiserror::Error;

use crate::cones::{ConeProcess, MarketSpec};
use crate::dual::{is_consistent_dual, DualProcess};
use crate::primal::Claim;
use crate::scalar::Scalar;
use crate::tree::{EventTree, StoppingTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConversionError {
    #[error("node-measures need exactly two assets")]
    NotTwoAsset,
    #[error("cones were not generated from prices and costs")]
    NotMarketCone,
    #[error("first component of Z vanishes identically")]
    ZeroFirstComponent,
    #[error("process is not a consistent dual process")]
    OutsideDualCone,
    #[error("not a node-measure: {0}")]
    NotInQ(String),
    #[error("not an approximate martingale measure: {0}")]
    NotApproximateMartingaleMeasure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid bid/ask market: {0}")]
    InvalidMarket(String),
}

/// Per-node `S²`, `λ`, `μ` of a two-asset bid/ask market with `S¹ ≡ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAssetMarket<S> {
    pub s2: Vec<S>,
    pub lambda: Vec<S>,
    pub mu: Vec<S>,
}

impl<S: Scalar> TwoAssetMarket<S> {
    pub fn new(tree: &EventTree<S>, s2: Vec<S>, lambda: Vec<S>, mu: Vec<S>) -> Result<Self, ConversionError> {
        if s2.len() != tree.len() || lambda.len() != tree.len() || mu.len() != tree.len() {
            return Err(ConversionError::DimensionMismatch(
                "market vectors must cover every node".into(),
            ));
        }
        let market = TwoAssetMarket { s2, lambda, mu };
        // Reuse the cone validation for the parameter ranges.
        market.specs().map_err(|e| ConversionError::InvalidMarket(e.to_string()))?;
        Ok(market)
    }

    /// Reads `(S², λ, μ)` back from market cones, normalizing `S¹ ≡ 1`.
    pub fn from_cones(cones: &ConeProcess<S>) -> Result<Self, ConversionError> {
        if cones.dim() != 2 {
            return Err(ConversionError::NotTwoAsset);
        }
        let mut market = TwoAssetMarket {
            s2: Vec::new(),
            lambda: Vec::new(),
            mu: Vec::new(),
        };
        for cone in cones.cones() {
            let (s2, l, m) = cone
                .market()
                .and_then(MarketSpec::to_bid_ask)
                .ok_or(ConversionError::NotMarketCone)?;
            market.s2.push(s2);
            market.lambda.push(l);
            market.mu.push(m);
        }
        Ok(market)
    }

    fn specs(&self) -> Result<Vec<MarketSpec<S>>, crate::cones::ConeError> {
        (0..self.s2.len())
            .map(|n| MarketSpec::bid_ask(self.s2[n].clone(), self.lambda[n].clone(), self.mu[n].clone()))
            .collect()
    }

    pub fn cones(&self, tree: &EventTree<S>) -> ConeProcess<S> {
        let specs = self.specs().expect("validated on construction");
        ConeProcess::from_markets(tree, |n| Ok(specs[n].clone())).expect("one cone per node")
    }

    /// `[1−μ, 1+λ]` at `node`.
    pub fn band(&self, node: usize) -> (S, S) {
        (
            S::one() - self.mu[node].clone(),
            S::one() + self.lambda[node].clone(),
        )
    }
}

/// `(χ, q)`; `χ` is 0 wherever `q` is 0 (the `0/0 = 0` convention), and
/// such nodes are excluded from the `χ` band check.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMeasure<S> {
    pub chi: Vec<S>,
    pub q: Vec<S>,
}

impl<S: Scalar> NodeMeasure<S> {
    pub fn support(&self) -> Vec<bool> {
        self.q.iter().map(|v| !v.is_zero_tol(0.0)).collect()
    }
}

/// `X` with the density process `H` of `Q` and the factor `χ`.
///
/// Where `H` vanishes the measure `Q` puts no mass. There `X` is set so
/// that `Σ_t X_t = 1` still holds pathwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedStop<S> {
    pub x: Vec<S>,
    pub h: Vec<S>,
    pub chi: Vec<S>,
}

impl<S: Scalar> RandomizedStop<S> {
    /// `X = 1{τ = t}` under `Q = P`.
    pub fn from_stopping_time(tree: &EventTree<S>, tau: &StoppingTime, chi: Vec<S>) -> Self {
        RandomizedStop {
            x: tree
                .indices()
                .map(|n| if tau.is_stop(n) { S::one() } else { S::zero() })
                .collect(),
            h: vec![S::one(); tree.len()],
            chi,
        }
    }

    /// `X⁺_t = Σ_{s≥t} X_s`, computed as `1 − Σ_{s<t} X_s`.
    pub fn x_plus(&self, tree: &EventTree<S>) -> Vec<S> {
        let mut before = vec![S::zero(); tree.len()];
        for n in tree.indices() {
            if let Some(p) = tree.parent(n) {
                before[n] = before[p].add_ref(&self.x[p]);
            }
        }
        before.into_iter().map(|b| S::one() - b).collect()
    }
}

fn check_shapes<S: Scalar>(tree: &EventTree<S>, market: &TwoAssetMarket<S>, lens: &[usize]) -> Result<(), ConversionError> {
    if market.s2.len() != tree.len() || lens.iter().any(|&l| l != tree.len()) {
        return Err(ConversionError::DimensionMismatch(
            "every process must cover every node".into(),
        ));
    }
    Ok(())
}

fn validate_node_measure<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    nm: &NodeMeasure<S>,
    tol: f64,
) -> Result<(), String> {
    let total = tree.node_sum(|n| nm.q[n].clone());
    if !total.approx_eq(&S::one(), tol) {
        return Err(format!("E[Σ q] = {total}, expected 1"));
    }
    for n in tree.indices() {
        if nm.q[n].is_neg_tol(tol) {
            return Err(format!("q is negative at node {n}"));
        }
        let (lo, hi) = market.band(n);
        if !nm.q[n].is_zero_tol(tol) && !(lo.le_tol(&nm.chi[n], tol) && nm.chi[n].le_tol(&hi, tol)) {
            return Err(format!("χ = {} outside [{lo}, {hi}] at node {n}", nm.chi[n]));
        }
    }
    let mass = tree.aggregate_forward_sum_scalar(&nm.q);
    let weighted: Vec<S> = tree
        .indices()
        .map(|n| nm.q[n].mul_ref(&nm.chi[n]).mul_ref(&market.s2[n]))
        .collect();
    let weighted = tree.aggregate_forward_sum_scalar(&weighted);
    for n in tree.indices() {
        let (lo, hi) = market.band(n);
        let s = &market.s2[n];
        let lower = s.mul_ref(&lo).mul_ref(&mass[n]);
        let upper = s.mul_ref(&hi).mul_ref(&mass[n]);
        if !(lower.le_tol(&weighted[n], tol) && weighted[n].le_tol(&upper, tol)) {
            return Err(format!("conditional band violated at node {n}"));
        }
    }
    Ok(())
}

/// Membership in `Q(K,P)`.
pub fn check_node_measure<S: Scalar>(tree: &EventTree<S>, market: &TwoAssetMarket<S>, nm: &NodeMeasure<S>, tol: f64) -> bool {
    check_shapes(tree, market, &[nm.chi.len(), nm.q.len()]).is_ok()
        && validate_node_measure(tree, market, nm, tol).is_ok()
}

/// `χ^Z = Ẑ²/Ẑ¹` and `q^Z = Ẑ¹/E[Σ Ẑ¹]` with `Ẑ¹ = Z¹`, `Ẑ² = Z²/S²`.
pub fn z_to_node_measure<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    z: &DualProcess<S>,
    tol: f64,
) -> Result<NodeMeasure<S>, ConversionError> {
    if z.values().first().map_or(0, Vec::len) != 2 {
        return Err(ConversionError::NotTwoAsset);
    }
    check_shapes(tree, market, &[z.values().len()])?;
    if !is_consistent_dual(tree, &market.cones(tree), z.values(), tol) {
        return Err(ConversionError::OutsideDualCone);
    }
    let total = tree.node_sum(|n| z.z(n)[0].clone());
    if total.is_zero_tol(tol) {
        return Err(ConversionError::ZeroFirstComponent);
    }
    let q = tree.indices().map(|n| z.z(n)[0].div_ref(&total)).collect();
    let chi = tree
        .indices()
        .map(|n| {
            let zn = z.z(n);
            if zn[0].is_zero_tol(0.0) {
                S::zero()
            } else {
                zn[1].div_ref(&market.s2[n]).div_ref(&zn[0])
            }
        })
        .collect();
    Ok(NodeMeasure { chi, q })
}

/// `Z¹ = q`, `Z² = χ q S²`.
pub fn node_measure_to_z<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    nm: &NodeMeasure<S>,
    tol: f64,
) -> Result<DualProcess<S>, ConversionError> {
    check_shapes(tree, market, &[nm.chi.len(), nm.q.len()])?;
    validate_node_measure(tree, market, nm, tol).map_err(ConversionError::NotInQ)?;
    let z = tree
        .indices()
        .map(|n| {
            vec![
                nm.q[n].clone(),
                nm.chi[n].mul_ref(&nm.q[n]).mul_ref(&market.s2[n]),
            ]
        })
        .collect();
    DualProcess::new(tree, z).map_err(|e| ConversionError::DimensionMismatch(e.to_string()))
}

/// `E[Σ_t q_t (ϑ¹_t + χ_t ϑ²_t S²_t)]`.
pub fn node_measure_value<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    nm: &NodeMeasure<S>,
    claim: &Claim<S>,
) -> S {
    tree.node_sum(|n| nm.q[n].mul_ref(&exercise_value(market, &nm.chi[n], claim.value(n), n)))
}

fn exercise_value<S: Scalar>(market: &TwoAssetMarket<S>, chi: &S, theta: &[S], n: usize) -> S {
    theta[0].add_ref(&chi.mul_ref(&theta[1]).mul_ref(&market.s2[n]))
}

/// Inductive construction of `(H, X)` from `(χ, q)`.
///
/// `N(n) = E[Σ_{s≥t} q_s | F_t]`, and for a child `c` of `n`,
/// `D(c) = N(n) − q(n)`. Then `H(root) = 1`, `H(c) = H(n) N(c)/D(c)` when
/// `D(c) ≠ 0` (else `H(n)`), and `X = q/H`.
pub fn node_measure_to_randomized<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    nm: &NodeMeasure<S>,
    tol: f64,
) -> Result<RandomizedStop<S>, ConversionError> {
    check_shapes(tree, market, &[nm.chi.len(), nm.q.len()])?;
    validate_node_measure(tree, market, nm, tol).map_err(ConversionError::NotInQ)?;
    let big_n = tree.aggregate_forward_sum_scalar(&nm.q);
    let len = tree.len();
    let mut h = vec![S::zero(); len];
    let mut x = vec![S::zero(); len];
    // Σ of X over the strict ancestors.
    let mut before = vec![S::zero(); len];
    let root = tree.root();
    h[root] = S::one();
    x[root] = nm.q[root].clone();
    for n in tree.indices() {
        if n == root {
            continue;
        }
        let p = tree.parent(n).expect("non-root node has a parent");
        before[n] = before[p].add_ref(&x[p]);
        if h[p].is_zero_tol(0.0) {
            // Below a Q-null node: X already summed to one.
            continue;
        }
        let d = big_n[p].sub_ref(&nm.q[p]);
        h[n] = if d.is_zero_tol(tol) {
            h[p].clone()
        } else {
            h[p].mul_ref(&big_n[n]).div_ref(&d)
        };
        x[n] = if h[n].is_zero_tol(0.0) {
            // First Q-null node on the path: q vanishes on its subtree.
            S::one() - before[n].clone()
        } else {
            nm.q[n].div_ref(&h[n])
        };
    }
    Ok(RandomizedStop {
        x,
        h,
        chi: nm.chi.clone(),
    })
}

fn validate_randomized<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    rs: &RandomizedStop<S>,
    tol: f64,
) -> Result<(), String> {
    let root = tree.root();
    if !rs.h[root].approx_eq(&S::one(), tol) {
        return Err("H(root) must be 1".into());
    }
    for n in tree.indices() {
        if rs.x[n].is_neg_tol(tol) {
            return Err(format!("X is negative at node {n}"));
        }
        if rs.h[n].is_neg_tol(tol) {
            return Err(format!("H is negative at node {n}"));
        }
        if tree.is_leaf(n) {
            continue;
        }
        let expect = tree
            .children(n)
            .iter()
            .fold(S::zero(), |acc, &c| acc + tree.branch_prob(c).mul_ref(&rs.h[c]));
        if !expect.approx_eq(&rs.h[n], tol) {
            return Err(format!("H is not a martingale at node {n}"));
        }
    }
    let x_plus = rs.x_plus(tree);
    for leaf in tree.leaves() {
        let total = x_plus[leaf].sub_ref(&rs.x[leaf]);
        if !total.is_zero_tol(tol) {
            return Err(format!("Σ X = {} on the path to node {leaf}", S::one() - total));
        }
    }
    let weighted: Vec<S> = tree
        .indices()
        .map(|n| {
            rs.h[n]
                .mul_ref(&rs.x[n])
                .mul_ref(&rs.chi[n])
                .mul_ref(&market.s2[n])
        })
        .collect();
    let weighted = tree.aggregate_forward_sum_scalar(&weighted);
    for n in tree.indices() {
        if rs.h[n].is_zero_tol(tol) {
            continue;
        }
        let (lo, hi) = market.band(n);
        if !rs.x[n].is_zero_tol(tol) && !(lo.le_tol(&rs.chi[n], tol) && rs.chi[n].le_tol(&hi, tol)) {
            return Err(format!("χ = {} outside [{lo}, {hi}] at node {n}", rs.chi[n]));
        }
        let expect = weighted[n].div_ref(&rs.h[n]);
        let s = &market.s2[n];
        let lower = s.mul_ref(&lo).mul_ref(&x_plus[n]);
        let upper = s.mul_ref(&hi).mul_ref(&x_plus[n]);
        if !(lower.le_tol(&expect, tol) && expect.le_tol(&upper, tol)) {
            return Err(format!("approximate martingale band violated at node {n}"));
        }
    }
    Ok(())
}

/// `Σ X = 1` pathwise, `H` a martingale density, `χ` in its band where
/// used, and the conditional band on `E^Q[Σ_{s≥t} X_s χ_s S²_s | F_t]`.
pub fn check_randomized<S: Scalar>(tree: &EventTree<S>, market: &TwoAssetMarket<S>, rs: &RandomizedStop<S>, tol: f64) -> bool {
    check_shapes(tree, market, &[rs.x.len(), rs.h.len(), rs.chi.len()]).is_ok()
        && validate_randomized(tree, market, rs, tol).is_ok()
}

/// `q = X H / E[Σ X H]`.
pub fn randomized_to_node_measure<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    rs: &RandomizedStop<S>,
    tol: f64,
) -> Result<NodeMeasure<S>, ConversionError> {
    check_shapes(tree, market, &[rs.x.len(), rs.h.len(), rs.chi.len()])?;
    validate_randomized(tree, market, rs, tol).map_err(ConversionError::NotApproximateMartingaleMeasure)?;
    let k = tree.node_sum(|n| rs.x[n].mul_ref(&rs.h[n]));
    let q: Vec<S> = tree
        .indices()
        .map(|n| rs.x[n].mul_ref(&rs.h[n]).div_ref(&k))
        .collect();
    let chi = tree
        .indices()
        .map(|n| {
            if q[n].is_zero_tol(0.0) {
                S::zero()
            } else {
                rs.chi[n].clone()
            }
        })
        .collect();
    Ok(NodeMeasure { chi, q })
}

/// `E^Q[Σ_t X_t (ϑ¹_t + χ_t ϑ²_t S²_t)]` with `dQ/dP = H` at the leaves.
pub fn randomized_value<S: Scalar>(
    tree: &EventTree<S>,
    market: &TwoAssetMarket<S>,
    rs: &RandomizedStop<S>,
    claim: &Claim<S>,
) -> S {
    tree.node_sum(|n| {
        rs.h[n]
            .mul_ref(&rs.x[n])
            .mul_ref(&exercise_value(market, &rs.chi[n], claim.value(n), n))
    })
}

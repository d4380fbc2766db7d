//! Super-hedging prices of American claims.
//!
//! A strategy is a transfer process `ξ` with `ξ(n) ∈ −K(n)`, written as
//! `ξ(n) = −Σ_g c_{n,g} g` over the generators of `K(n)`. Starting from
//! `x`, the portfolio at node `n` is `V(n) = x + Σ_{m ∈ path(n)} ξ(m)`, and
//! the claim is super-hedged when `V(n) − ϑ(n) ∈ K(n)` at every node.

use thiserror::Error;

use crate::cones::{ConeError, ConeProcess};
use crate::lp::{solve_lp, Bounds, LpError, LpOptions, LpOutcome, LpProblem, Relation, Sense};
use crate::scalar::{add_vec, sub_vec, unit_vector, Scalar};
use crate::tree::{EventTree, TreeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("claim cannot be super-hedged from any endowment along the chosen direction")]
    InfeasibleClaim,
    #[error("the market admits arbitrage; the price is unbounded")]
    Arbitrage,
    #[error("primal value {primal} and dual value {dual} disagree")]
    DualityMismatch { primal: String, dual: String },
    #[error("operation needs cones generated from prices and costs")]
    NotMarketCone,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

/// An American claim: one vector of physical asset amounts per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim<S> {
    values: Vec<Vec<S>>,
}

impl<S: Scalar> Claim<S> {
    pub fn new(tree: &EventTree<S>, values: Vec<Vec<S>>) -> Result<Self, PricingError> {
        if values.len() != tree.len() {
            return Err(PricingError::DimensionMismatch(format!(
                "claim has {} nodes, tree has {}",
                values.len(),
                tree.len()
            )));
        }
        let d = values.first().map_or(0, Vec::len);
        if values.iter().any(|v| v.len() != d) {
            return Err(PricingError::DimensionMismatch(
                "claim vectors have differing lengths".into(),
            ));
        }
        if values.iter().flatten().any(|v| !v.is_finite_value()) {
            return Err(PricingError::DimensionMismatch("claim entries must be finite".into()));
        }
        Ok(Claim { values })
    }

    pub fn zero(tree: &EventTree<S>, dim: usize) -> Self {
        Claim {
            values: vec![vec![S::zero(); dim]; tree.len()],
        }
    }

    pub fn from_fn<F: FnMut(usize) -> Vec<S>>(tree: &EventTree<S>, f: F) -> Result<Self, PricingError> {
        Self::new(tree, tree.indices().map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn value(&self, node: usize) -> &[S] {
        &self.values[node]
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.values
    }

    pub fn scaled(&self, k: &S) -> Self {
        Claim {
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| x.mul_ref(k)).collect())
                .collect(),
        }
    }

    /// Adds `c` units of asset 1 at every node.
    pub fn translated(&self, c: &S) -> Self {
        let mut values = self.values.clone();
        for v in &mut values {
            v[0] = v[0].add_ref(c);
        }
        Claim { values }
    }
}

/// A super-hedging strategy with its generator decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan<S> {
    pub initial: Vec<S>,
    /// Per node, weights on the generators of `K(n)`; `ξ(n) = −Σ c_g g`.
    pub coefficients: Vec<Vec<S>>,
    pub transfers: Vec<Vec<S>>,
    pub portfolios: Vec<Vec<S>>,
}

impl<S: Scalar> TransferPlan<S> {
    fn from_coefficients(tree: &EventTree<S>, cones: &ConeProcess<S>, initial: Vec<S>, coefficients: Vec<Vec<S>>) -> Self {
        let d = cones.dim();
        let transfers: Vec<Vec<S>> = tree
            .indices()
            .map(|n| {
                let mut xi = vec![S::zero(); d];
                for (c, g) in coefficients[n].iter().zip(cones.cone(n).generators()) {
                    if c.is_zero() {
                        continue;
                    }
                    for (x, gi) in xi.iter_mut().zip(g) {
                        x.sub_mul_assign(c, gi);
                    }
                }
                xi
            })
            .collect();
        let mut portfolios: Vec<Vec<S>> = Vec::with_capacity(tree.len());
        for n in tree.indices() {
            let before = match tree.parent(n) {
                Some(p) => portfolios[p].clone(),
                None => initial.clone(),
            };
            portfolios.push(add_vec(&before, &transfers[n]));
        }
        TransferPlan {
            initial,
            coefficients,
            transfers,
            portfolios,
        }
    }

    /// Re-checks the plan through cone membership LPs, independently of the
    /// pricing LP: `−ξ(n) ∈ K(n)` and `V(n) − ϑ(n) ∈ K(n)` at every node,
    /// with `V` recomputed from the transfers.
    pub fn verify(
        &self,
        tree: &EventTree<S>,
        cones: &ConeProcess<S>,
        claim: &Claim<S>,
        opts: &LpOptions,
    ) -> Result<bool, PricingError> {
        let mut v = vec![self.initial.clone(); tree.len()];
        for n in tree.indices() {
            let cone = cones.cone(n);
            let base = match tree.parent(n) {
                Some(p) => v[p].clone(),
                None => self.initial.clone(),
            };
            v[n] = add_vec(&base, &self.transfers[n]);
            let neg: Vec<S> = self.transfers[n].iter().map(|x| -x.clone()).collect();
            if !cone.contains(&neg, opts)? {
                return Ok(false);
            }
            if !cone.contains(&sub_vec(&v[n], claim.value(n)), opts)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeResult<S> {
    pub value: S,
    pub plan: TransferPlan<S>,
}

/// Exchange amounts recovered from a plan on market cones.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchanges<S> {
    /// `eta[n][i][j]`: units of asset `j` bought with asset `i` at node `n`.
    pub eta: Vec<Vec<Vec<S>>>,
    /// Units of each asset thrown away at node `n`.
    pub disposal: Vec<Vec<S>>,
}

enum Start<'a, S> {
    Along(&'a [S]),
    Fixed(&'a [S]),
}

fn check_inputs<S: Scalar>(tree: &EventTree<S>, cones: &ConeProcess<S>, claim: &Claim<S>) -> Result<(), PricingError> {
    if cones.cones().len() != tree.len() || claim.values().len() != tree.len() {
        return Err(PricingError::DimensionMismatch(
            "tree, cones and claim must cover the same nodes".into(),
        ));
    }
    if claim.dim() != cones.dim() {
        return Err(PricingError::DimensionMismatch(format!(
            "claim has {} assets, cones have {}",
            claim.dim(),
            cones.dim()
        )));
    }
    Ok(())
}

/// Builds the hedging LP. Returns the problem, the column of `α` (if any)
/// and the first transfer column of each node.
fn hedge_lp<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    start: Start<'_, S>,
    leaves_only: bool,
) -> (LpProblem<S>, Option<usize>, Vec<usize>) {
    let d = cones.dim();
    let mut lp = LpProblem::new(Sense::Minimize);
    let alpha = match start {
        Start::Along(_) => Some(lp.add_var(S::one(), Bounds::free())),
        Start::Fixed(_) => None,
    };
    let c0: Vec<usize> = tree
        .indices()
        .map(|n| lp.add_nonneg_vars(cones.cone(n).generators().len()))
        .collect();
    for n in tree.indices() {
        if leaves_only && !tree.is_leaf(n) {
            continue;
        }
        let gens = cones.cone(n).generators();
        let w0 = lp.add_nonneg_vars(gens.len());
        let path = tree.path(n);
        for i in 0..d {
            let mut row: Vec<(usize, S)> = Vec::new();
            let mut rhs = claim.value(n)[i].clone();
            match start {
                Start::Along(dir) => {
                    if !dir[i].is_zero() {
                        row.push((alpha.unwrap_or_default(), dir[i].clone()));
                    }
                }
                Start::Fixed(x) => rhs = rhs.sub_ref(&x[i]),
            }
            for &m in &path {
                for (k, g) in cones.cone(m).generators().iter().enumerate() {
                    if !g[i].is_zero() {
                        row.push((c0[m] + k, -g[i].clone()));
                    }
                }
            }
            for (k, g) in gens.iter().enumerate() {
                if !g[i].is_zero() {
                    row.push((w0 + k, -g[i].clone()));
                }
            }
            lp.add_constraint(row, Relation::Eq, rhs);
        }
    }
    (lp, alpha, c0)
}

fn plan_from_solution<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    x: &[S],
    initial: Vec<S>,
    c0: &[usize],
) -> TransferPlan<S> {
    let coefficients = tree
        .indices()
        .map(|n| x[c0[n]..c0[n] + cones.cone(n).generators().len()].to_vec())
        .collect();
    TransferPlan::from_coefficients(tree, cones, initial, coefficients)
}

fn price_along<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    direction: &[S],
    leaves_only: bool,
    opts: &LpOptions,
) -> Result<HedgeResult<S>, PricingError> {
    check_inputs(tree, cones, claim)?;
    if direction.len() != cones.dim() {
        return Err(PricingError::DimensionMismatch(format!(
            "direction has {} entries, cones have {}",
            direction.len(),
            cones.dim()
        )));
    }
    let (lp, alpha, c0) = hedge_lp(tree, cones, claim, Start::Along(direction), leaves_only);
    match solve_lp(&lp, opts)? {
        LpOutcome::Optimal(o) => {
            let a = alpha.unwrap_or_default();
            let value = o.x[a].clone();
            let initial = direction.iter().map(|v| v.mul_ref(&value)).collect();
            let plan = plan_from_solution(tree, cones, &o.x, initial, &c0);
            Ok(HedgeResult { value, plan })
        }
        LpOutcome::Infeasible(_) => Err(PricingError::InfeasibleClaim),
        LpOutcome::Unbounded(_) => Err(PricingError::Arbitrage),
    }
}

/// `h(ϑ;K) = inf{x¹ : (x¹, 0, …, 0) ∈ Γ(ϑ;K)}` with an optimal plan.
pub fn superhedge_price<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    opts: &LpOptions,
) -> Result<HedgeResult<S>, PricingError> {
    price_along(tree, cones, claim, &unit_vector(cones.dim(), 0), false, opts)
}

/// Smallest multiple of `direction` from which the claim can be hedged.
pub fn superhedge_price_along<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    direction: &[S],
    opts: &LpOptions,
) -> Result<HedgeResult<S>, PricingError> {
    price_along(tree, cones, claim, direction, false, opts)
}

/// Whether the endowment `x` super-hedges the claim, with a witness plan.
pub fn gamma_contains<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    x: &[S],
    opts: &LpOptions,
) -> Result<Option<TransferPlan<S>>, PricingError> {
    check_inputs(tree, cones, claim)?;
    if x.len() != cones.dim() {
        return Err(PricingError::DimensionMismatch(format!(
            "endowment has {} entries, cones have {}",
            x.len(),
            cones.dim()
        )));
    }
    let (lp, _, c0) = hedge_lp(tree, cones, claim, Start::Fixed(x), false);
    Ok(solve_lp(&lp, opts)?
        .optimal()
        .map(|o| plan_from_solution(tree, cones, &o.x, x.to_vec(), &c0)))
}

/// Price of the European payoff given by the claim's values at the leaves;
/// values at earlier nodes are ignored.
pub fn european_price<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    payoff: &Claim<S>,
    opts: &LpOptions,
) -> Result<HedgeResult<S>, PricingError> {
    price_along(tree, cones, payoff, &unit_vector(cones.dim(), 0), true, opts)
}

/// Splits each transfer into single exchanges `η^{ij}` and disposals, so
/// that `ξ^i = Σ_j (η^{ji} − η^{ij} π^{ij}) − disposal^i`.
pub fn extract_exchanges<S: Scalar>(plan: &TransferPlan<S>, cones: &ConeProcess<S>) -> Result<Exchanges<S>, PricingError> {
    if !cones.is_market() {
        return Err(PricingError::NotMarketCone);
    }
    let d = cones.dim();
    let mut eta = Vec::with_capacity(plan.coefficients.len());
    let mut disposal = Vec::with_capacity(plan.coefficients.len());
    for (n, coeffs) in plan.coefficients.iter().enumerate() {
        let cone = cones.cone(n);
        let mut e = vec![vec![S::zero(); d]; d];
        let mut waste = vec![S::zero(); d];
        for (k, c) in coeffs.iter().enumerate() {
            match cone.exchange_pair(k) {
                Some((i, j)) => e[i][j] = e[i][j].add_ref(c),
                None => waste[k] = waste[k].add_ref(c),
            }
        }
        eta.push(e);
        disposal.push(waste);
    }
    Ok(Exchanges { eta, disposal })
}

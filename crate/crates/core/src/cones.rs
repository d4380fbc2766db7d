//! Solvency cones, their positive polars and the related scalar maps.
//!
//! Cones are kept in generator form: `K = cone{g_1, …, g_n}`. Polars are
//! kept in inequality form: `y ∈ K*` iff `y ≥ 0` and `g·y ≥ 0` for every
//! generator. For a currency market with prices `S` and cost matrix `λ` the
//! generators are the unit vectors plus the exchange vectors
//! `π^{ij} e_i − e_j` with `π^{ij} = (S^j/S^i)(1+λ^{ij})`.

use thiserror::Error;

use crate::linalg;
use crate::lp::{solve_lp, Bounds, LpError, LpOptions, LpOutcome, LpProblem, Relation, Sense};
use crate::scalar::{dot, unit_vector, Scalar};
use crate::tree::EventTree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("price of asset {0} is not strictly positive")]
    NonPositivePrice(usize),
    #[error("cost λ[{0}][{1}] is negative")]
    NegativeCost(usize, usize),
    #[error("diagonal cost λ[{0}][{0}] must be zero")]
    NonzeroDiagonalCost(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a cone needs at least two assets")]
    TooFewAssets,
    #[error("generator {0} is the zero vector")]
    ZeroGenerator(usize),
    #[error("cone does not contain the unit vector e_{0}")]
    MissingUnitVector(usize),
    #[error("exchange cycle through asset {asset} has rate product below one")]
    CycleArbitrage { asset: usize },
    #[error("bid/ask parameter out of range: {0}")]
    InvalidBidAsk(String),
    #[error("constitution value is unbounded below; cone generators are malformed")]
    UnboundedBelow,
    #[error("vector cannot be dominated along the requested direction")]
    NotDominated,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Prices and proportional costs at one node of a currency market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec<S> {
    pub prices: Vec<S>,
    /// `costs[i][j]` is paid in units of asset `i` for a transfer `i → j`.
    pub costs: Vec<Vec<S>>,
}

impl<S: Scalar> MarketSpec<S> {
    pub fn new(prices: Vec<S>, costs: Vec<Vec<S>>) -> Result<Self, ConeError> {
        let d = prices.len();
        if d < 2 {
            return Err(ConeError::TooFewAssets);
        }
        if costs.len() != d {
            return Err(ConeError::DimensionMismatch {
                expected: d,
                found: costs.len(),
            });
        }
        for (i, p) in prices.iter().enumerate() {
            if !p.is_pos_tol(0.0) {
                return Err(ConeError::NonPositivePrice(i));
            }
        }
        for (i, row) in costs.iter().enumerate() {
            if row.len() != d {
                return Err(ConeError::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            for (j, c) in row.iter().enumerate() {
                if i == j && !c.is_zero() {
                    return Err(ConeError::NonzeroDiagonalCost(i));
                }
                if c.is_neg_tol(0.0) {
                    return Err(ConeError::NegativeCost(i, j));
                }
            }
        }
        Ok(MarketSpec { prices, costs })
    }

    /// Two assets with `S¹ ≡ 1`, ask `S²(1+λ)` and bid `S²(1−μ)`.
    pub fn bid_ask(s2: S, lambda: S, mu: S) -> Result<Self, ConeError> {
        if lambda.is_neg_tol(0.0) {
            return Err(ConeError::InvalidBidAsk(format!("lambda = {lambda}")));
        }
        if mu.is_neg_tol(0.0) || !(mu < S::one()) {
            return Err(ConeError::InvalidBidAsk(format!("mu = {mu}")));
        }
        // Selling one unit of asset 2 yields S²(1−μ) of asset 1, i.e.
        // 1 + λ²¹ = 1/(1−μ).
        let back = mu.div_ref(&(S::one() - mu.clone()));
        MarketSpec::new(
            vec![S::one(), s2],
            vec![vec![S::zero(), lambda], vec![back, S::zero()]],
        )
    }

    pub fn dim(&self) -> usize {
        self.prices.len()
    }

    /// Exchange rate `π^{ij} = (S^j/S^i)(1+λ^{ij})`: units of asset `i`
    /// paid per unit of asset `j` received.
    pub fn rate(&self, i: usize, j: usize) -> S {
        self.prices[j]
            .div_ref(&self.prices[i])
            .mul_ref(&(S::one() + self.costs[i][j].clone()))
    }

    /// Recovers `(S², λ, μ)` for a two-asset market, normalizing `S¹ ≡ 1`.
    pub fn to_bid_ask(&self) -> Option<(S, S, S)> {
        if self.dim() != 2 {
            return None;
        }
        let s2 = self.prices[1].div_ref(&self.prices[0]);
        let lambda = self.costs[0][1].clone();
        let back = &self.costs[1][0];
        let mu = back.div_ref(&(S::one() + back.clone()));
        Some((s2, lambda, mu))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvencyCone<S> {
    dim: usize,
    generators: Vec<Vec<S>>,
    market: Option<MarketSpec<S>>,
}

impl<S: Scalar> SolvencyCone<S> {
    pub fn from_market(spec: MarketSpec<S>) -> Self {
        let d = spec.dim();
        let mut generators: Vec<Vec<S>> = (0..d).map(|i| unit_vector(d, i)).collect();
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let mut g = vec![S::zero(); d];
                g[i] = spec.rate(i, j);
                g[j] = -S::one();
                generators.push(g);
            }
        }
        SolvencyCone {
            dim: d,
            generators,
            market: Some(spec),
        }
    }

    /// Builds a cone from raw generators; it must contain every `e_i`.
    pub fn from_generators(generators: Vec<Vec<S>>, opts: &LpOptions) -> Result<Self, ConeError> {
        let dim = generators.first().map_or(0, Vec::len);
        if dim < 2 {
            return Err(ConeError::TooFewAssets);
        }
        for (k, g) in generators.iter().enumerate() {
            if g.len() != dim {
                return Err(ConeError::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
            if g.iter().all(|v| v.is_zero_tol(opts.tol)) {
                return Err(ConeError::ZeroGenerator(k));
            }
        }
        let cone = SolvencyCone {
            dim,
            generators,
            market: None,
        };
        for i in 0..dim {
            if !cone.contains(&unit_vector(dim, i), opts)? {
                return Err(ConeError::MissingUnitVector(i));
            }
        }
        Ok(cone)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<S>] {
        &self.generators
    }

    pub fn market(&self) -> Option<&MarketSpec<S>> {
        self.market.as_ref()
    }

    /// For market cones, the `(i, j)` exchange behind generator `k`.
    pub fn exchange_pair(&self, k: usize) -> Option<(usize, usize)> {
        self.market.as_ref()?;
        let d = self.dim;
        if k < d || k >= d * d {
            return None;
        }
        let off = k - d;
        let i = off / (d - 1);
        let r = off % (d - 1);
        let j = if r < i { r } else { r + 1 };
        Some((i, j))
    }

    pub fn polar(&self) -> PolarCone<S> {
        PolarCone {
            dim: self.dim,
            rows: self.generators.clone(),
        }
    }

    /// Non-negative generator weights `c` with `x = Σ c_k g_k`, if any.
    pub fn decompose(&self, x: &[S], opts: &LpOptions) -> Result<Option<Vec<S>>, ConeError> {
        self.check_dim(x)?;
        let mut lp = LpProblem::new(Sense::Minimize);
        let w0 = lp.add_nonneg_vars(self.generators.len());
        for (i, xi) in x.iter().enumerate() {
            let row = self
                .generators
                .iter()
                .enumerate()
                .filter(|(_, g)| !g[i].is_zero())
                .map(|(k, g)| (w0 + k, g[i].clone()))
                .collect();
            lp.add_constraint(row, Relation::Eq, xi.clone());
        }
        Ok(solve_lp(&lp, opts)?.optimal().map(|o| o.x))
    }

    pub fn contains(&self, x: &[S], opts: &LpOptions) -> Result<bool, ConeError> {
        Ok(self.decompose(x, opts)?.is_some())
    }

    /// Basis of the lineality space `K ∩ (−K)`.
    ///
    /// `K⁰` is a face of `K`, so it is generated by exactly those generators
    /// `g` with `−g ∈ K`.
    pub fn lineality_basis(&self, opts: &LpOptions) -> Result<Vec<Vec<S>>, ConeError> {
        let mut two_sided = Vec::new();
        for g in &self.generators {
            let neg: Vec<S> = g.iter().map(|v| -v.clone()).collect();
            if self.contains(&neg, opts)? {
                two_sided.push(g.clone());
            }
        }
        Ok(linalg::independent_subset(&two_sided, opts.tol))
    }

    /// `c(x) = min{c : c·e_1 − x ∈ K}`.
    pub fn constitution_value(&self, x: &[S], opts: &LpOptions) -> Result<S, ConeError> {
        self.constitution_value_along(x, &unit_vector(self.dim, 0), opts)
    }

    /// `min{c : c·direction − x ∈ K}`.
    pub fn constitution_value_along(
        &self,
        x: &[S],
        direction: &[S],
        opts: &LpOptions,
    ) -> Result<S, ConeError> {
        self.check_dim(x)?;
        self.check_dim(direction)?;
        let mut lp = LpProblem::new(Sense::Minimize);
        let c = lp.add_var(S::one(), Bounds::free());
        let w0 = lp.add_nonneg_vars(self.generators.len());
        for i in 0..self.dim {
            let mut row: Vec<(usize, S)> = Vec::new();
            if !direction[i].is_zero() {
                row.push((c, direction[i].clone()));
            }
            for (k, g) in self.generators.iter().enumerate() {
                if !g[i].is_zero() {
                    row.push((w0 + k, -g[i].clone()));
                }
            }
            lp.add_constraint(row, Relation::Eq, x[i].clone());
        }
        match solve_lp(&lp, opts)? {
            LpOutcome::Optimal(o) => Ok(o.value),
            LpOutcome::Unbounded(_) => Err(ConeError::UnboundedBelow),
            LpOutcome::Infeasible(_) => Err(ConeError::NotDominated),
        }
    }

    fn check_dim(&self, x: &[S]) -> Result<(), ConeError> {
        if x.len() != self.dim {
            return Err(ConeError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// `K*` in inequality form.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCone<S> {
    dim: usize,
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> PolarCone<S> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows `g` of the inequalities `g·y ≥ 0` (besides `y ≥ 0`).
    pub fn inequalities(&self) -> &[Vec<S>] {
        &self.rows
    }

    /// Inequalities not already implied by `y ≥ 0`.
    pub fn binding_inequalities(&self) -> impl Iterator<Item = &Vec<S>> {
        self.rows.iter().filter(|g| g.iter().any(|v| v.is_neg_tol(0.0)))
    }

    pub fn contains(&self, y: &[S], tol: f64) -> bool {
        y.len() == self.dim
            && y.iter().all(|v| !v.is_neg_tol(tol))
            && self.rows.iter().all(|g| !dot(g, y).is_neg_tol(tol))
    }
}

pub fn cone_from_market<S: Scalar>(prices: Vec<S>, costs: Vec<Vec<S>>) -> Result<SolvencyCone<S>, ConeError> {
    Ok(SolvencyCone::from_market(MarketSpec::new(prices, costs)?))
}

pub fn polar_constraints<S: Scalar>(cone: &SolvencyCone<S>) -> PolarCone<S> {
    cone.polar()
}

pub fn cone_contains<S: Scalar>(cone: &SolvencyCone<S>, x: &[S], opts: &LpOptions) -> Result<bool, ConeError> {
    cone.contains(x, opts)
}

pub fn lineality_basis<S: Scalar>(cone: &SolvencyCone<S>, opts: &LpOptions) -> Result<Vec<Vec<S>>, ConeError> {
    cone.lineality_basis(opts)
}

pub fn constitution_value<S: Scalar>(cone: &SolvencyCone<S>, x: &[S], opts: &LpOptions) -> Result<S, ConeError> {
    cone.constitution_value(x, opts)
}

/// Cheapest multi-hop exchange rates (multiplicative Floyd–Warshall).
///
/// `rates[i][j]` is the number of units of `i` paid per unit of `j`; the
/// diagonal must be 1. Fails when a cycle multiplies to less than one.
pub fn tighten_rates<S: Scalar>(rates: &[Vec<S>]) -> Result<Vec<Vec<S>>, ConeError> {
    let d = rates.len();
    let mut best = rates.to_vec();
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                if i == k || j == k {
                    continue;
                }
                let via = best[i][k].mul_ref(&best[k][j]);
                if via < best[i][j] {
                    best[i][j] = via;
                }
            }
        }
    }
    for (i, row) in best.iter().enumerate() {
        if row[i] < S::one() {
            return Err(ConeError::CycleArbitrage { asset: i });
        }
        for (j, r) in row.iter().enumerate() {
            if i != j && r.mul_ref(&best[j][i]) < S::one() {
                return Err(ConeError::CycleArbitrage { asset: i });
            }
        }
    }
    Ok(best)
}

/// Replaces each cost by the cheapest indirect route, so that
/// `(1+λ̃^{ik})(1+λ̃^{kj}) ≥ 1+λ̃^{ij}` holds for all `i, j, k`.
pub fn tighten_costs<S: Scalar>(costs: &[Vec<S>], prices: &[S]) -> Result<Vec<Vec<S>>, ConeError> {
    let spec = MarketSpec::new(prices.to_vec(), costs.to_vec())?;
    let d = spec.dim();
    let rates: Vec<Vec<S>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { S::one() } else { spec.rate(i, j) })
                .collect()
        })
        .collect();
    let best = tighten_rates(&rates)?;
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        S::zero()
                    } else {
                        best[i][j].mul_ref(&prices[i]).div_ref(&prices[j]) - S::one()
                    }
                })
                .collect()
        })
        .collect())
}

/// The cone-valued process `(K_t)`: one solvency cone per tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProcess<S> {
    dim: usize,
    cones: Vec<SolvencyCone<S>>,
}

impl<S: Scalar> ConeProcess<S> {
    pub fn new(tree: &EventTree<S>, cones: Vec<SolvencyCone<S>>) -> Result<Self, ConeError> {
        if cones.len() != tree.len() {
            return Err(ConeError::DimensionMismatch {
                expected: tree.len(),
                found: cones.len(),
            });
        }
        let dim = cones[0].dim();
        if let Some(c) = cones.iter().find(|c| c.dim() != dim) {
            return Err(ConeError::DimensionMismatch {
                expected: dim,
                found: c.dim(),
            });
        }
        Ok(ConeProcess { dim, cones })
    }

    /// Market cones for every node, from a per-node market specification.
    pub fn from_markets<F>(tree: &EventTree<S>, mut spec: F) -> Result<Self, ConeError>
    where
        F: FnMut(usize) -> Result<MarketSpec<S>, ConeError>,
    {
        let cones = tree
            .indices()
            .map(|n| spec(n).map(SolvencyCone::from_market))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(tree, cones)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cone(&self, node: usize) -> &SolvencyCone<S> {
        &self.cones[node]
    }

    pub fn cones(&self) -> &[SolvencyCone<S>] {
        &self.cones
    }

    pub fn is_market(&self) -> bool {
        self.cones.iter().all(|c| c.market().is_some())
    }
}

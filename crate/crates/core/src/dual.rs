//! Dual side: consistent dual processes, stopping-time prices and the
//! checks used by the counterexamples.
//!
//! LPs work with `Y(n) = P(n)·Z(n)`, which turns the conditional
//! expectation `Z̄(n) = E[Σ_{s≥t} Z_s | F_t]` into the plain subtree sum
//! `Σ_{m ∈ subtree(n)} Y(m) / P(n)`.
//!
//! Normalizing by `Z̄(root)¹ = 1` loses nothing: `e_1` lies in the interior
//! of every solvency cone, so `y¹ > 0` for each nonzero `y ∈ K*`, and the
//! zero process contributes the value 0 that the LP can always reach.

use rayon::prelude::*;

use crate::cones::ConeProcess;
use crate::linalg::orthogonal_complement;
use crate::lp::{solve_lp, Bounds, LpOptions, LpOutcome, LpProblem, Relation, Sense};
use crate::primal::{superhedge_price, Claim, HedgeResult, PricingError};
use crate::scalar::{dot, sub_vec, unit_vector, Scalar};
use crate::tree::{enumerate_stopping_times, EventTree, StoppingTime, TreeError};

/// A process `Z ≥ 0` with its aggregate `Z̄(n) = Z(n) + Σ_c p(c)·Z̄(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProcess<S> {
    z: Vec<Vec<S>>,
    aggregate: Vec<Vec<S>>,
}

impl<S: Scalar> DualProcess<S> {
    pub fn new(tree: &EventTree<S>, z: Vec<Vec<S>>) -> Result<Self, PricingError> {
        if z.len() != tree.len() {
            return Err(PricingError::DimensionMismatch(format!(
                "dual process has {} nodes, tree has {}",
                z.len(),
                tree.len()
            )));
        }
        let d = z.first().map_or(0, Vec::len);
        if z.iter().any(|v| v.len() != d) {
            return Err(PricingError::DimensionMismatch(
                "dual process vectors have differing lengths".into(),
            ));
        }
        let aggregate = tree.aggregate_forward_sum(&z);
        Ok(DualProcess { z, aggregate })
    }

    pub fn z(&self, node: usize) -> &[S] {
        &self.z[node]
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.z
    }

    pub fn aggregate(&self, node: usize) -> &[S] {
        &self.aggregate[node]
    }

    pub fn aggregates(&self) -> &[Vec<S>] {
        &self.aggregate
    }

    /// `E[Σ_t ϑ_t·Z_t]`.
    pub fn pairing(&self, tree: &EventTree<S>, claim: &Claim<S>) -> S {
        tree.node_sum(|n| dot(claim.value(n), &self.z[n]))
    }
}

/// A martingale `Z` with `Z(n) ∈ K*(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleCps<S> {
    z: Vec<Vec<S>>,
}

impl<S: Scalar> MartingaleCps<S> {
    pub fn z(&self, node: usize) -> &[S] {
        &self.z[node]
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.z
    }

    pub fn is_martingale(&self, tree: &EventTree<S>) -> bool {
        tree.indices().filter(|&n| !tree.is_leaf(n)).all(|n| {
            let mut expect = vec![S::zero(); self.z[n].len()];
            for &c in tree.children(n) {
                for (e, v) in expect.iter_mut().zip(&self.z[c]) {
                    *e = e.add_ref(&tree.branch_prob(c).mul_ref(v));
                }
            }
            expect == self.z[n]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult<S> {
    pub value: S,
    pub process: DualProcess<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaCertificate<S> {
    pub epsilon: S,
    /// A strictly positive consistent dual process when `epsilon > 0`.
    pub process: Option<DualProcess<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaResult<S> {
    pub value: S,
    pub stopping_time: StoppingTime,
    pub process: MartingaleCps<S>,
    pub stopping_times: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport<S> {
    pub h_primal: S,
    pub h_dual: S,
    /// `None` when there are too many stopping times to enumerate.
    pub h_theta: Option<S>,
    /// `h_primal − h_theta`.
    pub gap: Option<S>,
    pub primal: HedgeResult<S>,
    pub dual: DualResult<S>,
    pub theta: Option<ThetaResult<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleConditions<S> {
    pub c0: S,
    /// `x − c_0(x)𝟏₁ ∉ K_0`.
    pub cond_ii: bool,
    /// Sufficient test for the first condition: `K⁰_0 = {0}`,
    /// `x ≠ c_0(x)𝟏₁` and `c_1(x) > c_0(x)` at some node of time 1.
    pub cond_i_sufficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullStrategyReport<S> {
    pub holds: bool,
    /// A null strategy `ξ` (per-node transfers) leaving `K⁰` at `node`.
    pub violation: Option<NullViolation<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullViolation<S> {
    pub node: usize,
    pub transfers: Vec<Vec<S>>,
}

fn check_claim<S: Scalar>(tree: &EventTree<S>, cones: &ConeProcess<S>, claim: &Claim<S>) -> Result<(), PricingError> {
    if cones.cones().len() != tree.len() || claim.values().len() != tree.len() || claim.dim() != cones.dim() {
        return Err(PricingError::DimensionMismatch(
            "tree, cones and claim must agree in nodes and assets".into(),
        ));
    }
    Ok(())
}

/// Adds `g·(Σ_k Y(nodes_k)) ≥ 0` for each polar row not implied by `Y ≥ 0`.
fn add_polar_rows<S: Scalar>(lp: &mut LpProblem<S>, cones: &ConeProcess<S>, at: usize, y0: &[usize], nodes: &[usize]) {
    for g in cones.cone(at).polar().binding_inequalities() {
        let mut row = Vec::new();
        for &m in nodes {
            for (i, gi) in g.iter().enumerate() {
                if !gi.is_zero() {
                    row.push((y0[m] + i, gi.clone()));
                }
            }
        }
        lp.add_constraint(row, Relation::Ge, S::zero());
    }
}

fn y_to_z<S: Scalar>(tree: &EventTree<S>, x: &[S], y0: &[usize], d: usize) -> Vec<Vec<S>> {
    tree.indices()
        .map(|n| {
            let p = tree.probability(n);
            (0..d).map(|i| x[y0[n] + i].div_ref(p)).collect()
        })
        .collect()
}

/// `sup{E[Σ ϑ_t·Z_t] : Z ∈ D(K,P), Z̄_0¹ = 1}`, equal to the super-hedging
/// price by LP duality.
pub fn dual_price<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    opts: &LpOptions,
) -> Result<DualResult<S>, PricingError> {
    check_claim(tree, cones, claim)?;
    let d = cones.dim();
    let mut lp = LpProblem::new(Sense::Maximize);
    let y0: Vec<usize> = tree
        .indices()
        .map(|n| {
            let first = lp.num_vars();
            for i in 0..d {
                lp.add_var(claim.value(n)[i].clone(), Bounds::non_negative());
            }
            first
        })
        .collect();
    for n in tree.indices() {
        add_polar_rows(&mut lp, cones, n, &y0, &[n]);
        if !tree.is_leaf(n) {
            add_polar_rows(&mut lp, cones, n, &y0, &tree.subtree(n));
        }
    }
    let norm = tree.indices().map(|n| (y0[n], S::one())).collect();
    lp.add_constraint(norm, Relation::Eq, S::one());
    match solve_lp(&lp, opts)? {
        LpOutcome::Optimal(o) => Ok(DualResult {
            value: o.value,
            process: DualProcess::new(tree, y_to_z(tree, &o.x, &y0, d))?,
        }),
        LpOutcome::Unbounded(_) => Err(PricingError::InfeasibleClaim),
        LpOutcome::Infeasible(_) => Err(PricingError::Arbitrage),
    }
}

/// `Z ≥ 0`, `Z(n) ∈ K*(n)` and `Z̄(n) ∈ K*(n)` at every node.
pub fn is_consistent_dual<S: Scalar>(tree: &EventTree<S>, cones: &ConeProcess<S>, z: &[Vec<S>], tol: f64) -> bool {
    let Ok(process) = DualProcess::new(tree, z.to_vec()) else {
        return false;
    };
    if process.values().first().map_or(0, Vec::len) != cones.dim() {
        return false;
    }
    tree.indices().all(|n| {
        let polar = cones.cone(n).polar();
        polar.contains(process.z(n), tol) && polar.contains(process.aggregate(n), tol)
    })
}

/// Largest `ε` such that some `Z ∈ D(K,P)` with `Σ_n Z¹(n) = 1` has all
/// components at least `ε`.
pub fn strictly_positive_cps<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    opts: &LpOptions,
) -> Result<NaCertificate<S>, PricingError> {
    if cones.cones().len() != tree.len() {
        return Err(PricingError::DimensionMismatch("cones must cover every node".into()));
    }
    let d = cones.dim();
    let mut lp = LpProblem::new(Sense::Maximize);
    let eps = lp.add_var(S::one(), Bounds::non_negative());
    let y0: Vec<usize> = tree.indices().map(|_| lp.add_nonneg_vars(d)).collect();
    for n in tree.indices() {
        let p = tree.probability(n);
        for i in 0..d {
            lp.add_constraint(vec![(y0[n] + i, S::one()), (eps, -p.clone())], Relation::Ge, S::zero());
        }
        add_polar_rows(&mut lp, cones, n, &y0, &[n]);
        if !tree.is_leaf(n) {
            add_polar_rows(&mut lp, cones, n, &y0, &tree.subtree(n));
        }
    }
    let norm = tree
        .indices()
        .map(|n| (y0[n], S::one().div_ref(tree.probability(n))))
        .collect();
    lp.add_constraint(norm, Relation::Eq, S::one());
    // Y ≡ 0 is excluded by the normalization, but Y supported at the root
    // is always feasible, so the LP is feasible and bounded.
    let o = solve_lp(&lp, opts)?
        .optimal()
        .ok_or_else(|| PricingError::DimensionMismatch("malformed cones".into()))?;
    let epsilon = o.x[eps].clone();
    let process = if epsilon.is_pos_tol(opts.tol) {
        Some(DualProcess::new(tree, y_to_z(tree, &o.x, &y0, d))?)
    } else {
        None
    };
    Ok(NaCertificate { epsilon, process })
}

/// Martingale consistent price systems exist iff this LP is feasible; the
/// objective values the claim at the stop nodes of `tau`.
fn theta_lp<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    tau: &StoppingTime,
    opts: &LpOptions,
) -> Result<Option<(S, Vec<Vec<S>>)>, PricingError> {
    let d = cones.dim();
    let mut lp = LpProblem::new(Sense::Maximize);
    let y0: Vec<usize> = tree
        .indices()
        .map(|n| {
            let first = lp.num_vars();
            for i in 0..d {
                let cost = if tau.is_stop(n) {
                    claim.value(n)[i].clone()
                } else {
                    S::zero()
                };
                lp.add_var(cost, Bounds::non_negative());
            }
            first
        })
        .collect();
    for n in tree.indices() {
        add_polar_rows(&mut lp, cones, n, &y0, &[n]);
        if tree.is_leaf(n) {
            continue;
        }
        for i in 0..d {
            let mut row = vec![(y0[n] + i, S::one())];
            row.extend(tree.children(n).iter().map(|&c| (y0[c] + i, -S::one())));
            lp.add_constraint(row, Relation::Eq, S::zero());
        }
    }
    lp.add_constraint(vec![(y0[tree.root()], S::one())], Relation::Eq, S::one());
    match solve_lp(&lp, opts)? {
        LpOutcome::Optimal(o) => Ok(Some((o.value, y_to_z(tree, &o.x, &y0, d)))),
        LpOutcome::Infeasible(_) => Ok(None),
        LpOutcome::Unbounded(_) => Err(PricingError::InfeasibleClaim),
    }
}

/// `sup_τ sup_{Z ∈ Z(K), Z_0¹ = 1} E[ϑ_τ·Z_τ]`, the smallest `x¹` with
/// `(x¹, 0, …, 0) ∈ Θ(ϑ;K)`.
pub fn theta_price<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    cap: usize,
    opts: &LpOptions,
) -> Result<ThetaResult<S>, PricingError> {
    check_claim(tree, cones, claim)?;
    let taus = enumerate_stopping_times(tree, cap)?;
    let count = taus.len();
    let results: Vec<_> = taus
        .into_par_iter()
        .map(|tau| theta_lp(tree, cones, claim, &tau, opts).map(|r| (tau, r)))
        .collect::<Result<_, _>>()?;
    let mut best: Option<ThetaResult<S>> = None;
    for (tau, r) in results {
        // Feasibility does not depend on τ: one infeasible LP means none.
        let Some((value, z)) = r else {
            return Err(PricingError::Arbitrage);
        };
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(ThetaResult {
                value,
                stopping_time: tau,
                process: MartingaleCps { z },
                stopping_times: count,
            });
        }
    }
    best.ok_or(PricingError::Tree(TreeError::EmptyTree))
}

/// Primal, dual and stopping-time prices side by side.
pub fn duality_gap_report<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    claim: &Claim<S>,
    cap: usize,
    opts: &LpOptions,
) -> Result<GapReport<S>, PricingError> {
    let primal = superhedge_price(tree, cones, claim, opts)?;
    let dual = dual_price(tree, cones, claim, opts)?;
    if !primal.value.approx_eq(&dual.value, opts.tol.max(opts.feasibility_tol) * 1e2) {
        return Err(PricingError::DualityMismatch {
            primal: primal.value.to_string(),
            dual: dual.value.to_string(),
        });
    }
    let theta = match theta_price(tree, cones, claim, cap, opts) {
        Ok(t) => Some(t),
        Err(PricingError::Tree(e @ TreeError::EnumerationCapExceeded { .. })) => {
            log::warn!("skipping stopping-time price: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    let h_theta = theta.as_ref().map(|t| t.value.clone());
    let gap = h_theta.as_ref().map(|t| primal.value.sub_ref(t));
    Ok(GapReport {
        h_primal: primal.value.clone(),
        h_dual: dual.value.clone(),
        h_theta,
        gap,
        primal,
        dual,
        theta,
    })
}

/// `ϑ_0 = c_0(x)𝟏₁` and `ϑ_t = x` for `t ≥ 1`.
pub fn build_counterexample_claim<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    x: &[S],
    opts: &LpOptions,
) -> Result<Claim<S>, PricingError> {
    let root = tree.root();
    let c0 = cones.cone(root).constitution_value(x, opts)?;
    Claim::from_fn(tree, |n| {
        if n == root {
            unit_vector::<S>(x.len(), 0).iter().map(|v| v.mul_ref(&c0)).collect()
        } else {
            x.to_vec()
        }
    })
}

pub fn check_counterexample_conditions<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    x: &[S],
    opts: &LpOptions,
) -> Result<CounterexampleConditions<S>, PricingError> {
    let root = tree.root();
    let k0 = cones.cone(root);
    let c0 = k0.constitution_value(x, opts)?;
    let base: Vec<S> = unit_vector::<S>(x.len(), 0).iter().map(|v| v.mul_ref(&c0)).collect();
    let residual = sub_vec(x, &base);
    let cond_ii = !k0.contains(&residual, opts)?;
    let off_ray = residual.iter().any(|v| !v.is_zero_tol(opts.tol));
    let mut later_dearer = false;
    for &c in tree.children(root) {
        if cones.cone(c).constitution_value(x, opts)?.sub_ref(&c0).is_pos_tol(opts.tol) {
            later_dearer = true;
            break;
        }
    }
    let cond_i_sufficient = off_ray && later_dearer && k0.lineality_basis(opts)?.is_empty();
    Ok(CounterexampleConditions {
        c0,
        cond_ii,
        cond_i_sufficient,
    })
}

/// Checks that every strategy whose transfers sum to zero along each path
/// stays in the lineality spaces: `Σ_t ξ_t = 0 ⟹ ξ_t ∈ K⁰_t`.
///
/// For each node and each direction `w` orthogonal to `K⁰(n)`, maximizes
/// `±w·ξ(n)` over null strategies normalized by `Σ c ≤ 1`. The feasible set
/// is a cone cut by that normalization, so a violation gives a positive
/// optimum.
pub fn check_null_strategy_property<S: Scalar>(
    tree: &EventTree<S>,
    cones: &ConeProcess<S>,
    opts: &LpOptions,
) -> Result<NullStrategyReport<S>, PricingError> {
    let d = cones.dim();
    let mut base = LpProblem::new(Sense::Maximize);
    let c0: Vec<usize> = tree
        .indices()
        .map(|n| base.add_nonneg_vars(cones.cone(n).generators().len()))
        .collect();
    for leaf in tree.leaves() {
        let path = tree.path(leaf);
        for i in 0..d {
            let mut row = Vec::new();
            for &m in &path {
                for (k, g) in cones.cone(m).generators().iter().enumerate() {
                    if !g[i].is_zero() {
                        row.push((c0[m] + k, g[i].clone()));
                    }
                }
            }
            base.add_constraint(row, Relation::Eq, S::zero());
        }
    }
    let all = (0..base.num_vars()).map(|j| (j, S::one())).collect();
    base.add_constraint(all, Relation::Le, S::one());

    for n in tree.indices() {
        let cone = cones.cone(n);
        let lineality = cone.lineality_basis(opts)?;
        for w in orthogonal_complement(&lineality, d, opts.tol) {
            for sign in [S::one(), -S::one()] {
                let mut lp = base.clone();
                // s·w·ξ(n) with ξ(n) = −Σ c g.
                for (k, g) in cone.generators().iter().enumerate() {
                    lp.objective[c0[n] + k] = -sign.mul_ref(&dot(&w, g));
                }
                let o = solve_lp(&lp, opts)?
                    .optimal()
                    .ok_or_else(|| PricingError::DimensionMismatch("malformed cones".into()))?;
                if o.value.is_pos_tol(opts.tol) {
                    let transfers = tree
                        .indices()
                        .map(|m| {
                            let mut xi = vec![S::zero(); d];
                            for (k, g) in cones.cone(m).generators().iter().enumerate() {
                                for (x, gi) in xi.iter_mut().zip(g) {
                                    x.sub_mul_assign(&o.x[c0[m] + k], gi);
                                }
                            }
                            xi
                        })
                        .collect();
                    return Ok(NullStrategyReport {
                        holds: false,
                        violation: Some(NullViolation { node: n, transfers }),
                    });
                }
            }
        }
    }
    Ok(NullStrategyReport {
        holds: true,
        violation: None,
    })
}

//! Helpers shared by the integration tests: seeded random instances,
//! fixture loading and oracles that do not go through the library's LPs.

#![allow(dead_code)]

use std::path::PathBuf;

use amerhedge::io::{ClaimEntry, ClaimFile, MarketFile, NodeEntry, Num};
use amerhedge::{Claim, EventTree, LoadOptions, Market, Rational, Scalar, TwoAssetMarket};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Q = Rational;

pub fn q(n: i64, d: i64) -> Q {
    Q::ratio(n, d)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load<S: Scalar>(market: &str, claim: Option<&str>) -> (Market<S>, Option<Claim<S>>) {
    let m: Market<S> = amerhedge::load_market(fixture(market), &LoadOptions::default()).unwrap();
    let c = claim.map(|c| amerhedge::load_claim(fixture(c), &m).unwrap());
    (m, c)
}

/// Shape of a random instance.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub assets: usize,
    pub horizon: usize,
    pub max_branching: usize,
    /// Costs are drawn as `k/100` with `k ≤ max_cost_pct`.
    pub max_cost_pct: i64,
    pub min_cost_pct: i64,
}

impl Shape {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Shape {
            assets: rng.gen_range(2..=3),
            horizon: rng.gen_range(1..=3),
            max_branching: rng.gen_range(1..=3),
            max_cost_pct: 30,
            min_cost_pct: 0,
        }
    }
}

fn weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<Q> {
    let w: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| q(x, total)).collect()
}

fn text(v: &Q) -> Num {
    Num(v.to_text())
}

/// A random arbitrage-free market: every non-numeraire price is a
/// martingale under a random measure equivalent to P, and costs are
/// non-negative.
pub fn random_market_file(rng: &mut ChaCha8Rng, shape: Shape) -> MarketFile {
    let d = shape.assets;
    let root_prices: Vec<Q> = (0..d)
        .map(|j| if j == 0 { q(1, 1) } else { q(rng.gen_range(2..=12), 4) })
        .collect();
    let mut nodes: Vec<(NodeEntry, Vec<Q>)> = Vec::new();
    let costs = |rng: &mut ChaCha8Rng| -> Vec<Vec<Num>> {
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        if i == j {
                            Num("0".into())
                        } else {
                            text(&q(rng.gen_range(shape.min_cost_pct..=shape.max_cost_pct), 100))
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let root = NodeEntry {
        id: "n0".into(),
        time: 0,
        parent: None,
        prob: Num("1".into()),
        prices: Some(root_prices.iter().map(text).collect()),
        costs: Some(costs(rng)),
        generators: None,
    };
    nodes.push((root, root_prices));
    let mut frontier = vec![0usize];
    for t in 0..shape.horizon {
        let mut next = Vec::new();
        for &parent in &frontier {
            let k = rng.gen_range(1..=shape.max_branching);
            let p = weights(rng, k);
            let qm = weights(rng, k);
            let factors: Vec<Vec<Q>> = (0..d)
                .map(|j| {
                    if j == 0 {
                        return vec![q(1, 1); k];
                    }
                    let raw: Vec<Q> = (0..k).map(|_| q(rng.gen_range(7..=14), 10)).collect();
                    let mean = raw.iter().zip(&qm).fold(q(0, 1), |a, (f, w)| a + f * w);
                    raw.into_iter().map(|f| f / &mean).collect()
                })
                .collect();
            let parent_prices = nodes[parent].1.clone();
            let parent_id = nodes[parent].0.id.clone();
            for c in 0..k {
                let prices: Vec<Q> = (0..d).map(|j| &parent_prices[j] * &factors[j][c]).collect();
                let idx = nodes.len();
                let entry = NodeEntry {
                    id: format!("n{idx}"),
                    time: t + 1,
                    parent: Some(parent_id.clone()),
                    prob: text(&p[c]),
                    prices: Some(prices.iter().map(text).collect()),
                    costs: Some(costs(rng)),
                    generators: None,
                };
                nodes.push((entry, prices));
                next.push(idx);
            }
        }
        frontier = next;
    }
    MarketFile {
        version: 1,
        assets: d,
        horizon: shape.horizon,
        mode: None,
        nodes: nodes.into_iter().map(|(e, _)| e).collect(),
    }
}

pub fn random_claim_file(rng: &mut ChaCha8Rng, market: &MarketFile) -> ClaimFile {
    ClaimFile {
        version: 1,
        claim: market
            .nodes
            .iter()
            .map(|n| ClaimEntry {
                id: n.id.clone(),
                value: (0..market.assets)
                    .map(|_| text(&q(rng.gen_range(-3..=6), 2)))
                    .collect(),
            })
            .collect(),
    }
}

/// A random market and claim, built in scalar mode `S`.
pub struct Instance<S> {
    pub market: Market<S>,
    pub claim: Claim<S>,
}

pub fn build_instance<S: Scalar>(mf: &MarketFile, cf: &ClaimFile) -> Instance<S> {
    let market: Market<S> = mf.build(&LoadOptions::default()).unwrap();
    let claim = cf.build(&market.tree, market.cones.dim()).unwrap();
    Instance { market, claim }
}

/// Complete binomial market `(1, S)` with `S` moving by `u` or `d`.
pub fn binomial_market_file(horizon: usize, s0: Q, u: Q, d: Q, p_up: Q) -> MarketFile {
    let mut nodes = vec![NodeEntry {
        id: "r".into(),
        time: 0,
        parent: None,
        prob: Num("1".into()),
        prices: Some(vec![Num("1".into()), text(&s0)]),
        costs: Some(vec![vec![Num("0".into()); 2]; 2]),
        generators: None,
    }];
    let mut frontier = vec![("r".to_string(), s0)];
    for t in 0..horizon {
        let mut next = Vec::new();
        for (id, s) in &frontier {
            for (tag, f, p) in [("u", &u, p_up.clone()), ("d", &d, q(1, 1) - &p_up)] {
                let child = format!("{id}{tag}");
                let price = s * f;
                nodes.push(NodeEntry {
                    id: child.clone(),
                    time: t + 1,
                    parent: Some(id.clone()),
                    prob: text(&p),
                    prices: Some(vec![Num("1".into()), text(&price)]),
                    costs: Some(vec![vec![Num("0".into()); 2]; 2]),
                    generators: None,
                });
                next.push((child, price));
            }
        }
        frontier = next;
    }
    MarketFile {
        version: 1,
        assets: 2,
        horizon,
        mode: None,
        nodes,
    }
}

/// American put `((K − S)⁺, 0)` on the binomial tree, keyed by node id.
pub fn put_claim_file(mf: &MarketFile, strike: &Q) -> ClaimFile {
    ClaimFile {
        version: 1,
        claim: mf
            .nodes
            .iter()
            .map(|n| {
                let s: Q = n.prices.as_ref().unwrap()[1].parse().unwrap();
                let payoff = if &s < strike { strike - s } else { q(0, 1) };
                ClaimEntry {
                    id: n.id.clone(),
                    value: vec![text(&payoff), Num("0".into())],
                }
            })
            .collect(),
    }
}

/// Snell envelope of the American put under the risk-neutral probability
/// `(1 − d)/(u − d)`, by backward induction over the number of up moves.
pub fn snell_put(horizon: usize, s0: &Q, u: &Q, d: &Q, strike: &Q) -> Q {
    let one = q(1, 1);
    let p = (&one - d) / (u - d);
    let price = |t: usize, ups: usize| -> Q {
        let mut s = s0.clone();
        for _ in 0..ups {
            s *= u;
        }
        for _ in 0..(t - ups) {
            s *= d;
        }
        s
    };
    let payoff = |s: Q| if &s < strike { strike - s } else { q(0, 1) };
    let mut values: Vec<Q> = (0..=horizon).map(|k| payoff(price(horizon, k))).collect();
    for t in (0..horizon).rev() {
        values = (0..=t)
            .map(|k| {
                let cont = &p * &values[k + 1] + (&one - &p) * &values[k];
                let ex = payoff(price(t, k));
                if ex > cont {
                    ex
                } else {
                    cont
                }
            })
            .collect();
    }
    values.swap_remove(0)
}

/// Smallest endowment for the two-date counterexample, found by a direct
/// search over the fraction `β` of asset 2 bought at time 0.
///
/// Hedging `ϑ_0 = (1+λ_0, 0)` needs `α ≥ 1+λ_0 + (λ_0+μ_0)β`; buying the rest
/// at time 1 needs `α ≥ (1+λ_1) − (λ_1−λ_0)β`.
pub fn beta_search(l0: &Q, m0: &Q, l1: &Q) -> (Q, Q) {
    let one = q(1, 1);
    let cost = |beta: &Q| {
        let a = &one + l0 + (l0 + m0) * beta;
        let b = (&one + l1) - (l1 - l0) * beta;
        if a > b {
            a
        } else {
            b
        }
    };
    // Both pieces are linear, so the minimum over [0, 1] sits at an end
    // point or at the crossing.
    let mut candidates = vec![q(0, 1), q(1, 1)];
    let denom = m0 + l1;
    if denom != q(0, 1) {
        let cross = (l1 - l0) / denom;
        if cross >= q(0, 1) && cross <= q(1, 1) {
            candidates.push(cross);
        }
    }
    candidates
        .into_iter()
        .map(|b| (cost(&b), b))
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .unwrap()
}

/// A random process `Z` with `Z` and `Z̄` in the bid/ask polar cones,
/// built backwards without any LP. Some nodes get `Z = 0`.
pub fn random_feasible_z(rng: &mut ChaCha8Rng, tree: &EventTree<Q>, market: &TwoAssetMarket<Q>) -> Vec<Vec<Q>> {
    let mut z = vec![vec![q(0, 1); 2]; tree.len()];
    let mut agg = vec![vec![q(0, 1); 2]; tree.len()];
    for n in tree.indices().rev() {
        let mut a = [q(0, 1), q(0, 1)];
        for &c in tree.children(n) {
            let p = tree.branch_prob(c);
            a[0] += p * &agg[c][0];
            a[1] += p * &agg[c][1];
        }
        let (lo, hi) = market.band(n);
        let s = &market.s2[n];
        let rho = &lo + (&hi - &lo) * q(rng.gen_range(1..=9), 10);
        let mut t = q(0, 1);
        let need_hi = (&a[1] - s * &hi * &a[0]) / (s * (&hi - &rho));
        let need_lo = (s * &lo * &a[0] - &a[1]) / (s * (&rho - &lo));
        for need in [need_hi, need_lo] {
            if need > t {
                t = need;
            }
        }
        if rng.gen_bool(0.8) || n == tree.root() {
            t += q(rng.gen_range(1..=8), 4);
        }
        z[n] = vec![t.clone(), &t * s * &rho];
        agg[n] = vec![&a[0] + &z[n][0], &a[1] + &z[n][1]];
    }
    z
}

/// A random two-asset market with strictly positive bid/ask spreads.
pub fn random_two_asset(rng: &mut ChaCha8Rng) -> (EventTree<Q>, TwoAssetMarket<Q>) {
    let shape = Shape {
        assets: 2,
        horizon: rng.gen_range(1..=3),
        max_branching: rng.gen_range(1..=3),
        max_cost_pct: 30,
        min_cost_pct: 1,
    };
    let mf = random_market_file(rng, shape);
    let market: Market<Q> = mf.build(&LoadOptions::default()).unwrap();
    let two = TwoAssetMarket::from_cones(&market.cones).unwrap();
    (market.tree, two)
}

//! Market generators shared by the benchmarks.

use amerhedge::{Claim, ConeProcess, EventTree, MarketSpec, Scalar};

/// Binomial bid/ask market `(1, S)` with `S` moving by `6/5` or `9/10`,
/// proportional costs `costs` on both sides, and an American put struck at
/// the initial price.
pub fn binomial_put<S: Scalar>(horizon: usize, costs: S) -> (EventTree<S>, ConeProcess<S>, Claim<S>) {
    let tree = EventTree::<S>::uniform(horizon, 2);
    let (up, down) = (S::ratio(6, 5), S::ratio(9, 10));
    let strike = S::from_i64(100);
    let mut s2 = vec![strike.clone(); tree.len()];
    for n in tree.indices() {
        for (k, &c) in tree.children(n).iter().enumerate() {
            s2[c] = s2[n].mul_ref(if k == 0 { &up } else { &down });
        }
    }
    let cones = ConeProcess::from_markets(&tree, |n| MarketSpec::bid_ask(s2[n].clone(), costs.clone(), costs.clone()))
        .expect("valid bid/ask market");
    let claim = Claim::from_fn(&tree, |n| {
        let payoff = strike.sub_ref(&s2[n]);
        let payoff = if payoff > S::from_i64(0) { payoff } else { S::from_i64(0) };
        vec![payoff, S::from_i64(0)]
    })
    .expect("claim matches tree");
    (tree, cones, claim)
}

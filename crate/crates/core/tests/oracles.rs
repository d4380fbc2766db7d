//! Library results against values computed without the library's LPs.

mod common;

use std::collections::HashSet;

use amerhedge::cones::MarketSpec;
use amerhedge::{
    count_stopping_times, dual_price, enumerate_stopping_times, european_price, superhedge_price, theta_price, Claim,
    ConeProcess, EventTree, LpOptions,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> LpOptions {
    LpOptions::default()
}

fn two_date_market(l0: &Q, m0: &Q, l1: &Q, m1: &Q) -> (EventTree<Q>, ConeProcess<Q>) {
    let tree = EventTree::deterministic(1);
    let cones = ConeProcess::from_markets(&tree, |n| {
        let (l, m) = if n == 0 { (l0, m0) } else { (l1, m1) };
        MarketSpec::bid_ask(q(1, 1), l.clone(), m.clone())
    })
    .unwrap();
    (tree, cones)
}

#[test]
fn two_date_prices_match_beta_search() {
    let l0s = [q(1, 20), q(1, 10), q(1, 5)];
    let m0s = [q(1, 20), q(1, 10), q(1, 4)];
    let bumps = [q(-1, 20), q(1, 10), q(2, 5), q(1, 1)];
    for l0 in &l0s {
        for m0 in &m0s {
            for bump in &bumps {
                let l1 = l0 + bump;
                let (tree, cones) = two_date_market(l0, m0, &l1, &q(1, 10));
                let claim = Claim::new(&tree, vec![vec![q(1, 1) + l0, q(0, 1)], vec![q(0, 1), q(1, 1)]]).unwrap();
                let (h, _) = beta_search(l0, m0, &l1);
                let primal = superhedge_price(&tree, &cones, &claim, &opts()).unwrap().value;
                let dual = dual_price(&tree, &cones, &claim, &opts()).unwrap().value;
                assert_eq!(primal, h, "λ0 = {l0}, μ0 = {m0}, λ1 = {l1}");
                assert_eq!(dual, h);
            }
        }
    }
}

#[test]
fn counterexample_beta_search_values() {
    let (h, beta) = beta_search(&q(1, 10), &q(1, 10), &q(1, 2));
    assert_eq!(h, q(37, 30));
    assert_eq!(beta, q(2, 3));
}

#[test]
fn american_put_matches_snell_envelope() {
    let cases = [
        (q(5, 4), q(4, 5), q(100, 1), q(100, 1)),
        (q(6, 5), q(9, 10), q(50, 1), q(52, 1)),
        (q(3, 2), q(1, 2), q(10, 1), q(12, 1)),
    ];
    for (u, d, s0, k) in cases {
        for horizon in 1..=3 {
            let mf = binomial_market_file(horizon, s0.clone(), u.clone(), d.clone(), q(1, 2));
            let cf = put_claim_file(&mf, &k);
            let inst: Instance<Q> = build_instance(&mf, &cf);
            let h = superhedge_price(&inst.market.tree, &inst.market.cones, &inst.claim, &opts())
                .unwrap()
                .value;
            assert_eq!(h, snell_put(horizon, &s0, &u, &d, &k), "u = {u}, d = {d}, T = {horizon}");
        }
    }
}

fn binomial_coefficient(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

#[test]
fn european_put_matches_binomial_formula() {
    let (u, d, s0, k) = (q(5, 4), q(4, 5), q(100, 1), q(105, 1));
    let p = (q(1, 1) - &d) / (&u - &d);
    for horizon in 1..=3 {
        let mf = binomial_market_file(horizon, s0.clone(), u.clone(), d.clone(), q(1, 3));
        let cf = put_claim_file(&mf, &k);
        let inst: Instance<Q> = build_instance(&mf, &cf);
        let mut expected = q(0, 1);
        for ups in 0..=horizon {
            let mut s = s0.clone();
            for _ in 0..ups {
                s *= &u;
            }
            for _ in 0..horizon - ups {
                s *= &d;
            }
            if s < k {
                let mut weight = q(binomial_coefficient(horizon, ups), 1);
                for _ in 0..ups {
                    weight *= &p;
                }
                for _ in 0..horizon - ups {
                    weight *= q(1, 1) - &p;
                }
                expected += weight * (&k - s);
            }
        }
        let value = european_price(&inst.market.tree, &inst.market.cones, &inst.claim, &opts())
            .unwrap()
            .value;
        assert_eq!(value, expected, "T = {horizon}");
    }
}

/// Every root-to-leaf path meets exactly one flagged node.
fn brute_force_stopping_times(tree: &EventTree<Q>) -> HashSet<Vec<bool>> {
    let n = tree.len();
    let leaves: Vec<usize> = (0..n).filter(|&i| tree.node(i).children.is_empty()).collect();
    let mut out = HashSet::new();
    for mask in 0u32..(1 << n) {
        let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let ok = leaves.iter().all(|&leaf| {
            let mut hits = 0;
            let mut cur = Some(leaf);
            while let Some(c) = cur {
                hits += usize::from(flags[c]);
                cur = tree.node(c).parent;
            }
            hits == 1
        });
        if ok {
            out.insert(flags);
        }
    }
    out
}

#[test]
fn stopping_times_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 40 {
        let horizon = rng.gen_range(1..=3);
        let tree = EventTree::<Q>::from_branch_probs(horizon, |_, _| {
            let k = rng.gen_range(1..=2);
            vec![q(1, k); k as usize]
        });
        if tree.len() > 7 {
            continue;
        }
        let expected = brute_force_stopping_times(&tree);
        let got: HashSet<Vec<bool>> = enumerate_stopping_times(&tree, 10_000)
            .unwrap()
            .into_iter()
            .map(|t| t.flags().to_vec())
            .collect();
        assert_eq!(got, expected);
        assert_eq!(count_stopping_times(&tree), expected.len() as u128);
        checked += 1;
    }
}

#[test]
fn stopping_time_cap_is_enforced() {
    let tree = EventTree::<Q>::uniform(3, 3);
    assert!(count_stopping_times(&tree) > 100);
    assert!(enumerate_stopping_times(&tree, 100).is_err());
}

#[test]
fn frictionless_binomial_has_no_gap() {
    let (u, d, s0, k) = (q(5, 4), q(4, 5), q(100, 1), q(100, 1));
    let mf = binomial_market_file(2, s0, u, d, q(1, 2));
    let cf = put_claim_file(&mf, &k);
    let inst: Instance<Q> = build_instance(&mf, &cf);
    let (tree, cones, claim) = (&inst.market.tree, &inst.market.cones, &inst.claim);
    let h = superhedge_price(tree, cones, claim, &opts()).unwrap().value;
    let theta = theta_price(tree, cones, claim, 1000, &opts()).unwrap();
    assert_eq!(h, q(100, 9));
    assert_eq!(theta.value, h);
    assert!(theta.process.is_martingale(tree));
}

#[test]
fn dual_process_value_is_its_pairing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let shape = Shape::random(&mut rng);
        let mf = random_market_file(&mut rng, shape);
        let cf = random_claim_file(&mut rng, &mf);
        let inst: Instance<Q> = build_instance(&mf, &cf);
        let (tree, claim) = (&inst.market.tree, &inst.claim);
        let res = dual_price(tree, &inst.market.cones, claim, &opts()).unwrap();
        assert_eq!(res.process.pairing(tree, claim), res.value);
        assert_eq!(res.process.aggregate(tree.root())[0], q(1, 1));
    }
}

//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report is printed even when everything passes.

#[path = "common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use amerhedge::cones::MarketSpec;
use amerhedge::io::{ClaimFile, MarketFile};
use amerhedge::{
    check_node_measure, check_null_strategy_property, check_randomized, count_stopping_times, dual_price, duality_gap_report,
    extract_exchanges, is_consistent_dual, node_measure_to_randomized, node_measure_to_z, node_measure_value,
    randomized_to_node_measure, randomized_value, strictly_positive_cps, superhedge_price, tighten_costs, theta_price,
    z_to_node_measure, Claim, ConeProcess, DualProcess, EventTree, LoadOptions, LpOptions, Market, Scalar,
    TwoAssetMarket,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn opts() -> LpOptions {
    LpOptions::default()
}

fn counterexample_gap() -> Check {
    let start = Instant::now();
    let (m, c) = load::<Q>("counterexample_ex1.json", Some("ce_claim.json"));
    let claim = c.unwrap();
    let report = duality_gap_report(&m.tree, &m.cones, &claim, 1000, &opts()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let (oracle_h, oracle_beta) = beta_search(&q(1, 10), &q(1, 10), &q(1, 2));
    ensure(report.h_primal == oracle_h, || format!("h = {}, β-search gives {oracle_h}", report.h_primal))?;
    ensure(report.h_primal == q(37, 30), || format!("h = {}", report.h_primal))?;
    ensure(report.h_dual == report.h_primal, || format!("dual value {}", report.h_dual))?;
    let theta = report.h_theta.clone().ok_or("Θ-price missing")?;
    ensure(theta == q(11, 10), || format!("Θ-price = {theta}"))?;
    let gap = report.gap.clone().ok_or("gap missing")?;
    ensure(gap == q(2, 15) && gap > q(0, 1), || format!("gap = {gap}"))?;
    let ex = extract_exchanges(&report.primal.plan, &m.cones).map_err(|e| e.to_string())?;
    let root = m.tree.root();
    ensure(ex.eta[root][0][1] == oracle_beta, || {
        format!("η¹²_0 = {}, expected {oracle_beta}", ex.eta[root][0][1])
    })?;
    within(elapsed, Duration::from_secs(1), "gap report")?;
    Ok(format!("h = {}, Θ = {theta}, gap = {gap}, {elapsed:?}", report.h_primal))
}

const RANDOM_INSTANCES: u64 = 200;

/// The random instances shared by the strong duality and Θ-price checks.
fn random_instance(seed: u64) -> (MarketFile, ClaimFile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::random(&mut rng);
    let mf = random_market_file(&mut rng, shape);
    let cf = random_claim_file(&mut rng, &mf);
    (mf, cf)
}

fn random_primal_dual() -> Check {
    const N: u64 = RANDOM_INSTANCES;
    let start = Instant::now();
    let worst = (0..N)
        .into_par_iter()
        .map(|seed| -> Result<f64, String> {
            let (mf, cf) = random_instance(seed);
            let exact: Instance<Q> = build_instance(&mf, &cf);
            let (tree, cones, claim) = (&exact.market.tree, &exact.market.cones, &exact.claim);
            let primal = superhedge_price(tree, cones, claim, &opts()).map_err(|e| format!("seed {seed}: {e}"))?;
            let dual = dual_price(tree, cones, claim, &opts()).map_err(|e| format!("seed {seed}: {e}"))?;
            if primal.value != dual.value {
                return Err(format!("seed {seed}: primal {} ≠ dual {}", primal.value, dual.value));
            }
            if !primal.plan.verify(tree, cones, claim, &opts()).map_err(|e| e.to_string())? {
                return Err(format!("seed {seed}: hedge plan fails verification"));
            }
            if !is_consistent_dual(tree, cones, dual.process.values(), 0.0) {
                return Err(format!("seed {seed}: dual process outside D(K,P)"));
            }
            let float: Instance<f64> = build_instance(&mf, &cf);
            let fp = superhedge_price(&float.market.tree, &float.market.cones, &float.claim, &opts())
                .map_err(|e| format!("seed {seed} (float): {e}"))?;
            let fd = dual_price(&float.market.tree, &float.market.cones, &float.claim, &opts())
                .map_err(|e| format!("seed {seed} (float): {e}"))?;
            let h = primal.value.to_f64();
            let scale = h.abs().max(1.0);
            let err = ((fp.value - h).abs()).max((fd.value - h).abs()) / scale;
            if err > 1e-7 {
                return Err(format!("seed {seed}: float {} / {} vs exact {h}", fp.value, fd.value));
            }
            Ok(err)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60), "200 instances")?;
    Ok(format!("{N} instances, exact equality, worst float error {worst:.1e}, {elapsed:?}"))
}

fn binomial_put() -> Check {
    let (s0, u, d, k) = (q(100, 1), q(5, 4), q(4, 5), q(100, 1));
    let mut lines = Vec::new();
    for horizon in 1..=4 {
        let mf = binomial_market_file(horizon, s0.clone(), u.clone(), d.clone(), q(1, 3));
        let cf = put_claim_file(&mf, &k);
        let snell = snell_put(horizon, &s0, &u, &d, &k);
        let exact: Instance<Q> = build_instance(&mf, &cf);
        let (tree, cones, claim) = (&exact.market.tree, &exact.market.cones, &exact.claim);
        let h = superhedge_price(tree, cones, claim, &opts()).map_err(|e| e.to_string())?.value;
        ensure(h == snell, || format!("T = {horizon}: h = {h}, Snell = {snell}"))?;
        let float: Instance<f64> = build_instance(&mf, &cf);
        let hf = superhedge_price(&float.market.tree, &float.market.cones, &float.claim, &opts())
            .map_err(|e| e.to_string())?
            .value;
        ensure((hf - snell.to_f64()).abs() <= 1e-9 * snell.to_f64().max(1.0), || {
            format!("T = {horizon}: float h = {hf}, Snell = {snell}")
        })?;
        let theta = theta_price(tree, cones, claim, 1000, &opts()).map_err(|e| e.to_string())?;
        ensure(theta.value == h, || format!("T = {horizon}: Θ = {} ≠ h = {h}", theta.value))?;
        lines.push(format!("T={horizon}: {h}"));
    }
    Ok(format!("h = Snell = Θ ({})", lines.join(", ")))
}

fn chain(tree: &EventTree<Q>, market: &TwoAssetMarket<Q>, z: &DualProcess<Q>, claim: &Claim<Q>) -> Result<(), String> {
    let nm = z_to_node_measure(tree, market, z, 0.0).map_err(|e| e.to_string())?;
    ensure(check_node_measure(tree, market, &nm, 0.0), || "node measure outside Q".into())?;
    let mass = tree.node_sum(|n| z.z(n)[0].clone());
    let target = z.pairing(tree, claim) / &mass;
    let v_nm = node_measure_value(tree, market, &nm, claim);
    ensure(v_nm == target, || format!("node measure value {v_nm} ≠ {target}"))?;
    let rs = node_measure_to_randomized(tree, market, &nm, 0.0).map_err(|e| e.to_string())?;
    ensure(check_randomized(tree, market, &rs, 0.0), || "randomized time fails its checks".into())?;
    let v_rs = randomized_value(tree, market, &rs, claim);
    ensure(v_rs == target, || format!("randomized value {v_rs} ≠ {target}"))?;
    let back = randomized_to_node_measure(tree, market, &rs, 0.0).map_err(|e| e.to_string())?;
    // χ is only meaningful where q > 0.
    for n in tree.indices() {
        ensure(back.q[n] == nm.q[n], || format!("q differs at node {n}"))?;
        if nm.q[n] != q(0, 1) {
            ensure(back.chi[n] == nm.chi[n], || format!("χ differs at node {n}"))?;
        }
    }
    let z2 = node_measure_to_z(tree, market, &nm, 0.0).map_err(|e| e.to_string())?;
    for n in tree.indices() {
        let scaled: Vec<Q> = z2.z(n).iter().map(|v| v * &mass).collect();
        ensure(scaled == z.z(n), || format!("Z not recovered at node {n}"))?;
    }
    Ok(())
}

fn value_preservation() -> Check {
    let (m, c) = load::<Q>("counterexample_ex1.json", Some("ce_claim.json"));
    let claim = c.unwrap();
    let market = TwoAssetMarket::from_cones(&m.cones).map_err(|e| e.to_string())?;
    let z = dual_price(&m.tree, &m.cones, &claim, &opts()).map_err(|e| e.to_string())?.process;
    let nm = z_to_node_measure(&m.tree, &market, &z, 0.0).map_err(|e| e.to_string())?;
    ensure(nm.q == vec![q(2, 3), q(1, 3)] && nm.chi == vec![q(9, 10), q(3, 2)], || {
        format!("counterexample node measure q = {:?}, χ = {:?}", nm.q, nm.chi)
    })?;
    let rs = node_measure_to_randomized(&m.tree, &market, &nm, 0.0).map_err(|e| e.to_string())?;
    ensure(rs.x == vec![q(2, 3), q(1, 3)] && rs.h == vec![q(1, 1); 2], || {
        format!("counterexample randomized time X = {:?}, H = {:?}", rs.x, rs.h)
    })?;
    let v = randomized_value(&m.tree, &market, &rs, &claim);
    ensure(v == q(37, 30), || format!("counterexample chain value {v}"))?;
    chain(&m.tree, &market, &z, &claim).map_err(|e| format!("counterexample: {e}"))?;

    const N: u64 = 100;
    let mut zero_nodes = 0;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let (tree, market) = random_two_asset(&mut rng);
        let zs = random_feasible_z(&mut rng, &tree, &market);
        zero_nodes += zs.iter().filter(|v| v[0] == q(0, 1)).count();
        ensure(is_consistent_dual(&tree, &market.cones(&tree), &zs, 0.0), || {
            format!("seed {seed}: generated Z is not consistent")
        })?;
        let claim = Claim::from_fn(&tree, |_| vec![q(rng.gen_range(-4..=8), 4), q(rng.gen_range(-4..=8), 4)])
            .map_err(|e| e.to_string())?;
        let z = DualProcess::new(&tree, zs).map_err(|e| e.to_string())?;
        chain(&tree, &market, &z, &claim).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!("counterexample + {N} random Z ({zero_nodes} nodes with Z = 0), exact"))
}

fn theta_bound() -> Check {
    let start = Instant::now();
    let checked = (0..RANDOM_INSTANCES)
        .into_par_iter()
        .map(|seed| -> Result<usize, String> {
            let (mf, cf) = random_instance(seed);
            let inst: Instance<Q> = build_instance(&mf, &cf);
            let (tree, cones, claim) = (&inst.market.tree, &inst.market.cones, &inst.claim);
            if count_stopping_times(tree) > 1000 {
                return Ok(0);
            }
            let h = superhedge_price(tree, cones, claim, &opts()).map_err(|e| e.to_string())?.value;
            let theta = theta_price(tree, cones, claim, 1000, &opts()).map_err(|e| format!("seed {seed}: {e}"))?;
            if theta.value > h {
                return Err(format!("seed {seed}: Θ = {} > h = {h}", theta.value));
            }
            Ok(1)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    ensure(checked >= 100, || format!("only {checked} instances within the stopping-time cap"))?;

    const M: u64 = 100;
    for seed in 0..M {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + seed);
        let horizon = rng.gen_range(1..=4);
        let tree = EventTree::<Q>::deterministic(horizon);
        let d = rng.gen_range(2..=3);
        let prices: Vec<Q> = (0..d).map(|j| if j == 0 { q(1, 1) } else { q(rng.gen_range(2..=12), 4) }).collect();
        let costs: Vec<Vec<Q>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { q(0, 1) } else { q(rng.gen_range(0..=30), 100) }).collect())
            .collect();
        let spec = MarketSpec::new(prices, costs).map_err(|e| e.to_string())?;
        let cones = ConeProcess::from_markets(&tree, |_| Ok(spec.clone())).map_err(|e| e.to_string())?;
        let claim = Claim::from_fn(&tree, |_| (0..d).map(|_| q(rng.gen_range(-4..=8), 4)).collect())
            .map_err(|e| e.to_string())?;
        let h = superhedge_price(&tree, &cones, &claim, &opts()).map_err(|e| e.to_string())?.value;
        let theta = theta_price(&tree, &cones, &claim, 1000, &opts()).map_err(|e| e.to_string())?;
        ensure(theta.value == h, || format!("seed {seed}: Θ = {} ≠ h = {h} on a single path", theta.value))?;
    }
    Ok(format!(
        "Θ ≤ h on {checked} random trees; Θ = h on {M} single-path constant-cone claims, {:?}",
        start.elapsed()
    ))
}

fn na_certificates() -> Check {
    let mut out = Vec::new();
    for (name, arbitrage) in [("deterministic_doubling.json", true), ("deterministic_doubling_wide.json", false)] {
        let start = Instant::now();
        let (m, _) = load::<Q>(name, None);
        let cert = strictly_positive_cps(&m.tree, &m.cones, &opts()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        within(elapsed, Duration::from_secs(1), name)?;
        if arbitrage {
            ensure(cert.epsilon == q(0, 1), || format!("{name}: ε* = {}", cert.epsilon))?;
        } else {
            ensure(cert.epsilon > q(0, 1), || format!("{name}: ε* = {}", cert.epsilon))?;
            let z = cert.process.as_ref().ok_or("no certificate process")?;
            ensure(is_consistent_dual(&m.tree, &m.cones, z.values(), 0.0), || {
                format!("{name}: certificate outside D(K,P)")
            })?;
            ensure(z.values().iter().flatten().all(|v| v >= &cert.epsilon), || {
                format!("{name}: certificate component below ε*")
            })?;
            ensure(m.tree.node_sum(|n| z.z(n)[0].clone()) == q(1, 1), || {
                format!("{name}: certificate not normalized")
            })?;
        }
        out.push(format!("{name}: ε* = {}", cert.epsilon));
    }
    Ok(out.join("; "))
}

/// A three-asset market where at least one node's rates violate the
/// triangle inequality.
fn triangle_violating(rng: &mut ChaCha8Rng) -> MarketFile {
    loop {
        let shape = Shape {
            assets: 3,
            horizon: rng.gen_range(1..=2),
            max_branching: 2,
            max_cost_pct: 90,
            min_cost_pct: 0,
        };
        let mf = random_market_file(rng, shape);
        let market: Market<Q> = mf.build(&LoadOptions::default()).unwrap();
        let violates = market.cones.cones().iter().any(|cone| {
            let spec = cone.market().unwrap();
            (0..3).any(|i| {
                (0..3).any(|j| (0..3).any(|k| i != j && k != i && k != j && spec.rate(i, j) > spec.rate(i, k) * spec.rate(k, j)))
            })
        });
        if violates {
            return mf;
        }
    }
}

fn tightening() -> Check {
    const N: u64 = 50;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed);
        let mf = triangle_violating(&mut rng);
        let cf = random_claim_file(&mut rng, &mf);
        let raw: Market<Q> = mf.build(&LoadOptions::default()).unwrap();
        let tight: Market<Q> = mf
            .build(&LoadOptions {
                tighten: true,
                ..LoadOptions::default()
            })
            .map_err(|e| e.to_string())?;
        for n in raw.tree.indices() {
            let spec = tight.cones.cone(n).market().unwrap();
            let again = tighten_costs(&spec.costs, &spec.prices).map_err(|e| e.to_string())?;
            ensure(again == spec.costs, || format!("seed {seed}: tightening not idempotent at node {n}"))?;
            let orig = raw.cones.cone(n).market().unwrap();
            ensure(spec.costs.iter().flatten().zip(orig.costs.iter().flatten()).all(|(a, b)| a <= b), || {
                format!("seed {seed}: tightened cost above original at node {n}")
            })?;
        }
        let claim = cf.build(&raw.tree, 3).map_err(|e| e.to_string())?;
        let h_raw = superhedge_price(&raw.tree, &raw.cones, &claim, &opts()).map_err(|e| e.to_string())?.value;
        let h_tight = superhedge_price(&tight.tree, &tight.cones, &claim, &opts()).map_err(|e| e.to_string())?.value;
        ensure(h_raw == h_tight, || format!("seed {seed}: price {h_raw} before, {h_tight} after tightening"))?;
    }
    Ok(format!("{N} triangle-violating instances: idempotent, price unchanged"))
}

fn null_strategies() -> Check {
    let mut held = 0;
    for name in [
        "counterexample_ex1.json",
        "binomial_frictionless.json",
        "deterministic_doubling_wide.json",
        "partial_frictions_ex2.json",
    ] {
        let (m, _) = load::<Q>(name, None);
        let report = check_null_strategy_property(&m.tree, &m.cones, &opts()).map_err(|e| e.to_string())?;
        ensure(report.holds, || format!("{name}: property reported false"))?;
        held += 1;
    }
    let (m, _) = load::<Q>("null_strategy_violation.json", None);
    let report = check_null_strategy_property(&m.tree, &m.cones, &opts()).map_err(|e| e.to_string())?;
    ensure(!report.holds, || "violation fixture reported true".into())?;
    let v = report.violation.ok_or("violation fixture without witness")?;
    let leaf_sum: Vec<Q> = (0..2).map(|i| v.transfers.iter().map(|x| x[i].clone()).sum()).collect();
    ensure(leaf_sum.iter().all(|x| *x == q(0, 1)), || "witness is not a null strategy".into())?;
    Ok(format!("holds on {held} arbitrage-free fixtures, fails on the violation fixture (node {})", v.node))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("1 counterexample duality gap", counterexample_gap),
        ("2 primal = dual on random instances", random_primal_dual),
        ("3 frictionless binomial put", binomial_put),
        ("4 Z / node measure / randomized time", value_preservation),
        ("5 Θ-price bound and single-path equality", theta_bound),
        ("6 no-arbitrage certificates", na_certificates),
        ("7 cost tightening", tightening),
        ("8 null-strategy property", null_strategies),
    ];
    // Positional arguments select criteria by number; libtest flags are ignored.
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.split(' ').next() == Some(o.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

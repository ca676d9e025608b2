use aqp_core::budget::{allocate_confidence, ErrorSpec};
use aqp_core::config::Config;
use aqp_core::engine::{BlockTable, Store, Value};
use aqp_core::planner::*;
use aqp_core::sql::{decompose, parse};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single-table pilot with `n` sampled blocks whose totals are drawn around `mean`.
fn pilot_single(n: u64, theta_p: f64, mean: f64, spread: f64, seed: u64) -> PilotData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|b| PilotRow { group: vec![], blocks: [b as u32, 0, 0], leaves: vec![mean + spread * (rng.random::<f64>() - 0.5)] })
        .collect();
    PilotData { theta_p, n_p: n, dims: vec![], rows }
}

fn sum_constraints(pilot: &PilotData, e: f64, p: f64, cfg: &Config) -> Vec<PlanConstraint> {
    let d = decompose(&parse("SELECT SUM(x) FROM t ERROR WITHIN 5% PROBABILITY 95%").unwrap()).unwrap();
    build_constraints(pilot, &d, ErrorSpec::new(e, p).unwrap(), cfg).unwrap()
}

#[test]
fn bisection_matches_closed_form_for_one_table() {
    let cfg = Config::default();
    for (seed, e) in [(1, 0.05), (2, 0.1), (3, 0.03)] {
        let c = sum_constraints(&pilot_single(2000, 0.01, 100.0, 150.0, seed), e, 0.95, &cfg);
        assert_eq!(c.len(), 1);
        let c = &c[0];
        // One table: U_V(θ) = (1−θ)/θ·U_y, and U_V(1/2) = U_y.
        let u_y = c.u_v(&[0.5]).unwrap();
        let l = c.l_mu.unwrap();
        let closed = c.z * c.z * u_y / (e * e * l * l + c.z * c.z * u_y);
        let got = solve_min_rate(std::slice::from_ref(c), 1, 1, 0, &cfg).unwrap()[0];
        assert!(closed > cfg.rate_floor && closed < cfg.rate_cap, "{closed}");
        assert!((got - closed).abs() <= 1e-6, "{got} vs {closed}");
        assert!(c.slack(&[got]).abs() <= 10.0 * cfg.tolerance * c.budget.e_ij * l / got);
    }
}

#[test]
fn huge_population_gives_floor_and_tiny_error_is_infeasible() {
    let cfg = Config::default();
    // 100 pilot blocks at θp = 1e-8 stand for ~1e10 blocks: the floor suffices.
    let flat = sum_constraints(&pilot_single(100, 1e-8, 50.0, 0.0, 0), 0.5, 0.95, &cfg);
    assert_eq!(solve_min_rate(&flat, 1, 1, 0, &cfg).unwrap(), vec![cfg.rate_floor]);

    let noisy = sum_constraints(&pilot_single(100, 0.01, 50.0, 90.0, 0), 1e-4, 0.95, &cfg);
    assert_eq!(solve_min_rate(&noisy, 1, 1, 0, &cfg), None);
    assert!(enumerate_candidates(&noisy, 1, &cfg).is_empty());
}

#[test]
fn nonpositive_lower_bound_blocks_every_plan() {
    let cfg = Config::default();
    // Mean near zero relative to spread: L_μ ≤ 0, so no plan is certified.
    let c = sum_constraints(&pilot_single(100, 0.01, 0.5, 100.0, 4), 0.05, 0.95, &cfg);
    assert_eq!(c[0].l_mu, None);
    assert!(!c[0].holds(&[1.0 - 1e-9]));
}

#[test]
fn constraints_per_leaf_and_group() {
    let cfg = Config::default();
    let mut rows = Vec::new();
    for b in 0..60u32 {
        for g in 0..3i64 {
            rows.push(PilotRow { group: vec![Value::Int(g)], blocks: [b, 0, 0], leaves: vec![10.0 + g as f64, 3.0] });
        }
    }
    let pilot = PilotData { theta_p: 0.05, n_p: 60, dims: vec![], rows };
    let q = parse("SELECT g, SUM(x), COUNT(*) FROM t GROUP BY g ERROR WITHIN 10% PROBABILITY 90%").unwrap();
    let d = decompose(&q).unwrap();
    let c = build_constraints(&pilot, &d, ErrorSpec::new(0.1, 0.9).unwrap(), &cfg).unwrap();
    assert_eq!(c.len(), 6);
    let p_ij = allocate_confidence(0.9, 2, 3).unwrap();
    assert!(c.iter().all(|c| (c.budget.p_ij - p_ij).abs() < 1e-15 && c.support == 60));
    assert!((c[0].estimate - 600.0 / 0.05).abs() < 1e-9);
}

#[test]
fn candidates_cover_subsets_and_targets() {
    // A generous cap so that plans sampling the second table are reachable.
    let cfg = Config { rate_cap: 0.5, ..Config::default() };
    // Table 0 (pilot) joins a 1000-block table 1, each table-1 block seen in
    // 20 pilot blocks, so per-block bounds on table 1 are informative.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<PilotRow> = (0..20_000u32)
        .map(|b| PilotRow { group: vec![], blocks: [b, b % 1000, 0], leaves: vec![100.0 + 20.0 * rng.random::<f64>()] })
        .collect();
    let pilot = PilotData { theta_p: 0.2, n_p: 20_000, dims: vec![1000], rows };
    let c = sum_constraints(&pilot, 0.2, 0.9, &cfg);
    let cands = enumerate_candidates(&c, 2, &cfg);
    // 3 subsets, 4 (subset, target) pairs; the {0,1} pairs may coincide.
    assert!((3..=4).contains(&cands.len()), "{cands:?}");
    assert!(cands.iter().all(|r| feasible_all(&c, r)));
    assert!(cands.iter().any(|r| r[1] == 1.0) && cands.iter().any(|r| r[0] == 1.0));
    assert!(cands.iter().any(|r| r[0] < 1.0 && r[1] < 1.0));
}

fn feasible_all(c: &[PlanConstraint], r: &[f64]) -> bool {
    c.iter().all(|c| c.holds(r))
}

#[test]
fn cost_and_choice() {
    let tables = vec![("big".to_string(), 100_000_000u64), ("dim".to_string(), 1_000_000)];
    let plan = SamplingPlan::Rates(vec![("big".into(), 0.01)]);
    assert!((estimate_cost(&plan, &tables) - 2_000_000.0).abs() < 1e-6);
    assert_eq!(estimate_cost(&SamplingPlan::Exact, &tables), 101_000_000.0);

    assert_eq!(choose_plan(&[5.0, 3.0, 4.0], 10.0), Some(1));
    assert_eq!(choose_plan(&[5.0, 3.0, 3.0], 10.0), Some(1));
    assert_eq!(choose_plan(&[10.0, 12.0], 10.0), None);
    assert_eq!(choose_plan(&[], 10.0), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Feasibility is monotone in θ, so whatever bisection returns is feasible
    // and everything a tolerance below it is not.
    #[test]
    fn solved_rate_is_minimal(seed in 0u64..1000, mean in 10.0f64..1000.0, rel in 0.1f64..3.0, e in 0.01f64..0.2) {
        let cfg = Config::default();
        let c = sum_constraints(&pilot_single(120, 0.01, mean, mean * rel, seed), e, 0.95, &cfg);
        if let Some(r) = solve_min_rate(&c, 1, 1, 0, &cfg) {
            prop_assert!(feasible_all(&c, &r));
            if r[0] > cfg.rate_floor {
                prop_assert!(!feasible_all(&c, &[r[0] - 2.0 * cfg.tolerance]));
            }
            for t in [r[0] * 1.5, cfg.rate_cap, 0.5, 1.0 - 1e-9] {
                if t >= r[0] { prop_assert!(feasible_all(&c, &[t])); }
            }
        }
    }
}

fn store_with_fact(rows: usize, block: u64) -> Store {
    let store = Store::in_memory();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<i64> = (0..rows).map(|_| rng.random_range(1..=100)).collect();
    let g: Vec<i64> = (0..rows).map(|i| (i % 3) as i64).collect();
    store.put(BlockTable::from_ints("fact", &[("x", x), ("g", g)], block).unwrap(), false).unwrap();
    store
}

fn small_cfg() -> Config {
    Config { large_table_threshold: 10_000, theta_p: 0.02, ..Config::default() }
}

#[test]
fn pipeline_samples_and_is_deterministic() {
    let store = store_with_fact(1_000_000, 10);
    let cfg = small_cfg();
    let sql = "SELECT SUM(x) AS s, COUNT(*) AS n, AVG(x) AS a FROM fact ERROR WITHIN 10% PROBABILITY 95%";
    let a = run_query(sql, &store, &cfg, 7).unwrap();
    let b = run_query(sql, &store, &cfg, 7).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.result.columns, vec!["s", "n", "a"]);
    let r = &a.report;
    assert_eq!(r.fallback, None, "{r:?}");
    let SamplingPlan::Rates(rates) = &r.chosen else { panic!() };
    assert!(rates[0].1 < cfg.rate_cap);
    assert!(a.result.scanned_bytes < store.table_stats("fact").unwrap().bytes / 5);
    let exact = run_exact(sql, &store).unwrap();
    for i in 0..3 {
        let (est, truth) = (a.result.rows[0][i].as_f64().unwrap(), exact.rows[0][i].as_f64().unwrap());
        assert!((est - truth).abs() <= 0.1 * truth, "col {i}: {est} vs {truth}");
    }
}

#[test]
fn pipeline_fallbacks() {
    let store = store_with_fact(400_000, 100);
    let cfg = small_cfg();
    let exact = |sql: &str| run_query(sql, &store, &cfg, 1).unwrap().report;

    let r = exact("SELECT SUM(x) FROM fact");
    assert_eq!((r.chosen.clone(), r.guarantee, r.fallback.clone()), (SamplingPlan::Exact, None, None));

    let r = exact("SELECT MAX(x) FROM fact ERROR WITHIN 5% PROBABILITY 95%");
    assert!(r.fallback.unwrap().starts_with("unsupported"));

    let r = exact("SELECT SUM(x) FROM fact ERROR WITHIN 0.001% PROBABILITY 99%");
    assert!(r.fallback.unwrap().starts_with("plan rejected"));

    let tiny = Config { theta_p: 0.0001, ..small_cfg() };
    let r = run_query("SELECT SUM(x) FROM fact ERROR WITHIN 5% PROBABILITY 95%", &store, &tiny, 1).unwrap().report;
    assert!(r.fallback.unwrap().starts_with("pilot sampled"));

    let big = Config { large_table_threshold: 10_000_000, ..small_cfg() };
    let r = run_query("SELECT SUM(x) FROM fact ERROR WITHIN 5% PROBABILITY 95%", &store, &big, 1).unwrap().report;
    assert_eq!(r.fallback.as_deref(), Some("no large tables"));
}

#[test]
fn grouped_pipeline_uses_coverage_rate() {
    let store = store_with_fact(400_000, 100);
    let cfg = Config { theta_p: 0.001, ..small_cfg() };
    let out = run_query("SELECT g, SUM(x) FROM fact GROUP BY g ERROR WITHIN 10% PROBABILITY 90%", &store, &cfg, 3).unwrap();
    let pilot = out.report.pilot.as_ref().unwrap();
    assert!(pilot.theta_p > cfg.theta_p);
    assert_eq!(pilot.groups, 3);
    assert_eq!(out.report.constraints.len(), 3);
    assert_eq!(out.result.rows.len(), 3);
}

mod common;

use std::time::Instant;

use eqforward::fixtures::skewed_market;
use eqforward::{
    build_welfare_lp, check_kkt, price_sweep_oracle, shape_weighted_mean_spot, solve_equilibrium,
    solve_equilibrium_with, AgentSpec, ContractSpec, EquilibriumStatus, Formulation, MarketConfig,
    ProfileSet, RiskParams, SolveOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{one_period, pair};

#[test]
fn two_scenario_market_clears_inside_the_step_interval() {
    // With spots {0, 100} and α = 0.5 a unit generator supplies 1 between
    // 50λg and 50λg + 100(1−λg); the unit load demands 1 between 50λd and
    // 50λd + 100(1−λd).
    let (lg, ld) = (0.2, 0.4);
    let cfg = pair(vec![0.0, 100.0], lg, ld, 0.5);
    let r = solve_equilibrium(&cfg).unwrap();
    let lo = (50.0 * lg).max(50.0 * ld);
    let hi = (50.0 * lg + 100.0 * (1.0 - lg)).min(50.0 * ld + 100.0 * (1.0 - ld));
    assert!((r.quantity - 1.0).abs() <= 1e-9);
    assert!(
        r.price >= lo - 1e-9 && r.price <= hi + 1e-9,
        "{} not in [{lo}, {hi}]",
        r.price
    );
    assert_eq!(r.status, EquilibriumStatus::Degenerate);
    assert!(
        (r.bracket[0] - lo).abs() <= 1e-6 && (r.bracket[1] - hi).abs() <= 1e-6,
        "{:?}",
        r.bracket
    );
}

#[test]
fn both_risk_neutral_collapse_to_mean() {
    let cfg = pair(vec![10.0, 30.0, 80.0], 1.0, 1.0, 0.9);
    let r = solve_equilibrium(&cfg).unwrap();
    assert_eq!(r.status, EquilibriumStatus::Degenerate);
    assert!((r.price - 40.0).abs() <= 1e-9);
    assert!((r.bracket[1] - r.bracket[0]).abs() <= 1e-6);
    assert!(r.quantity.abs() <= 1e-9);
    let rep = check_kkt(&cfg, &r);
    assert_eq!(rep.max_primal_residual, 0.0);
    assert!(rep.max_complementarity_residual <= 1e-12);
}

#[test]
fn welfare_is_the_sum_of_surpluses() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..15 {
        let cfg = common::random_market(&mut rng);
        let r = solve_equilibrium(&cfg).unwrap();
        let total: f64 = r.agents.iter().map(|a| a.surplus).sum();
        assert!(
            (total - r.welfare).abs() <= 1e-7 * r.welfare.abs().max(1.0),
            "{total} vs {}",
            r.welfare
        );
    }
}

#[test]
fn supply_equals_demand() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..15 {
        let cfg = common::random_market(&mut rng);
        let r = solve_equilibrium(&cfg).unwrap();
        let sold: f64 = r.agents.iter().map(|a| a.q_sell).sum();
        let bought: f64 = r.agents.iter().map(|a| a.q_buy).sum();
        assert!((sold - bought).abs() <= 1e-7 * sold.max(1.0));
        assert!((r.quantity - sold).abs() <= 1e-9 * sold.max(1.0));
    }
}

fn transformed(cfg: &MarketConfig, f: impl Fn(f64) -> f64) -> MarketConfig {
    cfg.with_scenarios(cfg.scenarios().map_spot(f)).unwrap()
}

/// Same market with every profile replaced by a scenario-independent volume.
fn flattened(cfg: &MarketConfig) -> MarketConfig {
    let s = cfg.scenarios();
    let agents = cfg
        .agents()
        .iter()
        .map(|a| {
            let mut a = a.clone();
            if let Some(p) = &a.profile {
                let level = p.quantity(0, 0);
                a.profile = Some(ProfileSet::constant(&a.id, s, level).unwrap());
            }
            a
        })
        .collect();
    cfg.with_agents(agents).unwrap()
}

#[test]
fn price_is_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..10 {
        let cfg = common::random_market(&mut rng);
        let base = solve_equilibrium(&cfg).unwrap();
        let width = base.bracket[1] - base.bracket[0];
        let tol = 1e-6 * base.price.abs().max(1.0);
        let t = rng.gen_range(0.2..5.0);
        let scaled = solve_equilibrium(&transformed(&cfg, |x| x * t)).unwrap();
        assert!(
            (scaled.price - t * base.price).abs() <= t * (tol + width),
            "{} vs {t}·{}",
            scaled.price,
            base.price
        );
    }
}

#[test]
fn price_is_translation_equivariant_for_fixed_volumes() {
    // a spot shift moves every revenue by the same amount only when volumes
    // do not vary across scenarios
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..10 {
        let cfg = flattened(&common::random_market(&mut rng));
        let base = solve_equilibrium(&cfg).unwrap();
        let width = base.bracket[1] - base.bracket[0];
        let tol = 1e-6 * base.price.abs().max(1.0);
        let c = rng.gen_range(1.0..50.0);
        let shifted = solve_equilibrium(&transformed(&cfg, |x| x + c)).unwrap();
        assert!(
            (shifted.price - (base.price + c)).abs() <= tol + width,
            "{} vs {} + {c}",
            shifted.price,
            base.price
        );
    }
}

#[test]
fn full_and_reduced_formulations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..8 {
        let cfg = common::random_market(&mut rng);
        let a = solve_equilibrium_with(
            &cfg,
            &SolveOptions {
                formulation: Formulation::Full,
            },
        )
        .unwrap();
        let b = solve_equilibrium_with(
            &cfg,
            &SolveOptions {
                formulation: Formulation::Reduced,
            },
        )
        .unwrap();
        let width = (a.bracket[1] - a.bracket[0]).max(b.bracket[1] - b.bracket[0]);
        assert!((a.price - b.price).abs() <= 1e-6 * a.price.abs().max(1.0) + width);
        assert!((a.welfare - b.welfare).abs() <= 1e-7 * a.welfare.abs().max(1.0));
    }
}

#[test]
fn kkt_detects_a_shifted_price() {
    let cfg = skewed_market(60, 1.0, 0.5, 0.5, 0.9).unwrap();
    let mut r = solve_equilibrium(&cfg).unwrap();
    assert_eq!(r.status, EquilibriumStatus::Optimal);
    assert!(check_kkt(&cfg, &r).passes(1e-6));
    r.price += 1.0;
    let rep = check_kkt(&cfg, &r);
    let qs = rep.conditions["quantity_stationarity"];
    assert!((qs - 1.0).abs() <= 1e-6, "{qs}");
    assert!(!rep.passes(1e-6));
}

#[test]
fn welfare_lp_structure() {
    let s = one_period(vec![10.0, 20.0, 40.0, 80.0]);
    let risk = RiskParams::new(0.5, 0.9).unwrap();
    let agents = vec![
        AgentSpec::generator("g1", risk, ProfileSet::constant("g1", &s, 1.0).unwrap()),
        AgentSpec::generator("g2", risk, ProfileSet::constant("g2", &s, 2.0).unwrap()),
        AgentSpec::load("d", risk, ProfileSet::constant("d", &s, 3.0).unwrap()),
        AgentSpec::trader("t", risk, 5.0),
    ];
    let cfg = MarketConfig::new(agents, s, ContractSpec::flat(vec![0]).unwrap()).unwrap();
    let lp = build_welfare_lp(&cfg);
    let k = 4;
    // per agent: threshold, K revenues, K tail variables; traders hold both sides
    assert_eq!(lp.num_vars(), 4 * (1 + 2 * k) + 5);
    assert_eq!(lp.eq_rows.len(), 4 * k + 1);
    assert_eq!(lp.le_rows.len(), 4 * 2 * k);
    let bal = &lp.eq_rows[lp.eq_row_index("balance").unwrap()];
    assert_eq!(bal.coeffs.len(), 5);
    for name in ["g1.q_sell", "g2.q_sell", "d.q_buy", "t.q_sell", "t.q_buy"] {
        assert!(lp.var_index(name).is_some(), "{name}");
    }
    assert!(lp.var_index("g1.q_buy").is_none() && lp.var_index("d.q_sell").is_none());
}

#[test]
fn sweep_on_a_collapsed_interval_returns_it() {
    let cfg = pair(vec![10.0, 30.0, 80.0], 1.0, 1.0, 0.5);
    let mean = shape_weighted_mean_spot(cfg.scenarios(), cfg.contract()).unwrap();
    let r = price_sweep_oracle(&cfg, mean, mean, 1e-6).unwrap();
    assert_eq!(r.price, mean);
}

#[test]
fn sweep_agrees_on_the_fixture() {
    let cfg = skewed_market(120, 1.1, 0.5, 0.5, 0.9).unwrap();
    let r = solve_equilibrium(&cfg).unwrap();
    let o = price_sweep_oracle(&cfg, 0.0, 500.0, 1e-6).unwrap();
    assert!(
        (r.price - o.price).abs() <= 1e-4 * r.price,
        "{} vs {}",
        r.price,
        o.price
    );
    assert!((r.quantity - o.quantity).abs() <= 1e-3 * r.quantity.max(1.0));
}

#[test]
fn no_trade_when_sides_never_meet() {
    // every seller asks more than any buyer bids
    let s = one_period(vec![10.0, 50.0, 90.0]);
    let g = AgentSpec::generator(
        "g",
        RiskParams::new(0.0, 0.5).unwrap(),
        ProfileSet::constant("g", &s, 0.0).unwrap(),
    );
    let d = AgentSpec::load(
        "d",
        RiskParams::new(0.0, 0.5).unwrap(),
        ProfileSet::constant("d", &s, 0.0).unwrap(),
    );
    let cfg = MarketConfig::new(vec![g, d], s, ContractSpec::flat(vec![0]).unwrap()).unwrap();
    let r = solve_equilibrium(&cfg).unwrap();
    assert_eq!(r.status, EquilibriumStatus::NoTrade);
    assert!(r.quantity.abs() <= 1e-9);
    assert!(r.bracket[0] <= r.price && r.price <= r.bracket[1]);
}

#[test]
fn smoke_k1200_reduced_under_30s() {
    let cfg = skewed_market(1200, 1.0, 0.5, 0.5, 0.9).unwrap();
    let t = Instant::now();
    let r = solve_equilibrium(&cfg).unwrap();
    let dt = t.elapsed();
    assert!(r.price.is_finite());
    assert!(dt.as_secs_f64() < 30.0, "{dt:?}");
}

#![allow(dead_code)]

use eqforward::{AgentSpec, ContractSpec, MarketConfig, ProfileSet, RiskParams, ScenarioSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ALPHAS: [f64; 3] = [0.5, 0.9, 0.95];

pub fn labels(m: usize) -> Vec<String> {
    (1..=m).map(|p| p.to_string()).collect()
}

pub fn one_period(spots: Vec<f64>) -> ScenarioSet {
    ScenarioSet::from_periods(labels(1), vec![spots], false).unwrap()
}

/// Generator and load with constant unit profiles on a one-period sample.
pub fn pair(spots: Vec<f64>, lg: f64, ld: f64, alpha: f64) -> MarketConfig {
    let s = one_period(spots);
    let g = AgentSpec::generator(
        "g",
        RiskParams::new(lg, alpha).unwrap(),
        ProfileSet::constant("g", &s, 1.0).unwrap(),
    );
    let d = AgentSpec::load(
        "d",
        RiskParams::new(ld, alpha).unwrap(),
        ProfileSet::constant("d", &s, 1.0).unwrap(),
    );
    MarketConfig::new(vec![g, d], s, ContractSpec::flat(vec![0]).unwrap()).unwrap()
}

fn random_profile(rng: &mut ChaCha8Rng, id: &str, s: &ScenarioSet, level: f64) -> ProfileSet {
    let (m, k) = (s.num_periods(), s.num_scenarios());
    let q = (0..m * k)
        .map(|_| level * rng.gen_range(0.3..1.7))
        .collect();
    ProfileSet::new(id, m, k, q).unwrap()
}

/// Random market: K in [2, 200], M in 1..=3, 1–4 agents with both sides
/// represented, λ in [0, 0.9], α drawn from `ALPHAS`. Traders carry caps.
pub fn random_market(rng: &mut ChaCha8Rng) -> MarketConfig {
    let k = rng.gen_range(2..=200);
    let m = rng.gen_range(1..=3);
    let rows = (0..m)
        .map(|_| {
            (0..k)
                .map(|_| (rng.gen_range(1.0f64..4.0) * rng.gen_range(0.5..1.5)).exp() * 5.0)
                .collect()
        })
        .collect();
    let s = ScenarioSet::from_periods(labels(m), rows, false).unwrap();
    let n_delivery = rng.gen_range(1..=m);
    let start = rng.gen_range(0..=m - n_delivery);
    let periods: Vec<usize> = (start..start + n_delivery).collect();
    let shape = (0..n_delivery).map(|_| rng.gen_range(0.2..2.0)).collect();
    let c = ContractSpec::new(periods, shape).unwrap();

    let n_agents = rng.gen_range(1..=4);
    let mut agents = Vec::new();
    for i in 0..n_agents {
        let risk = RiskParams::new(rng.gen_range(0.0..0.9), ALPHAS[rng.gen_range(0..3)]).unwrap();
        let id = format!("a{i}");
        let kind = if n_agents == 1 {
            2
        } else if i == 0 {
            0
        } else if i == 1 {
            1
        } else {
            rng.gen_range(0..3)
        };
        let level = rng.gen_range(1.0..20.0);
        agents.push(match kind {
            0 => AgentSpec::generator(&id, risk, random_profile(rng, &id, &s, level)),
            1 => AgentSpec::load(&id, risk, random_profile(rng, &id, &s, level)),
            _ => AgentSpec::trader(&id, risk, level),
        });
    }
    MarketConfig::new(agents, s, c).unwrap()
}

/// Sweep interval that brackets every crossing: below the smallest
/// per-unit contract value nobody sells, above the largest nobody buys.
pub fn sweep_range(cfg: &MarketConfig) -> (f64, f64) {
    let s = cfg.scenarios();
    let c = cfg.contract();
    let v = c.total_shape();
    let unit: Vec<f64> = (0..s.num_scenarios())
        .map(|k| c.weighted_spot(s, k) / v)
        .collect();
    let lo = unit.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = unit.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    (lo, hi)
}

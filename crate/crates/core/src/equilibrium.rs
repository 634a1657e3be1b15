//! Market clearing through the welfare LP. The contract price is read from
//! the dual of the balance row, cross-checked against a bisection on
//! aggregate best responses, and validated through agent-level optimality
//! conditions.

use std::collections::{BTreeMap, BTreeSet};

use eqforward_lp::{solve, LpProblem, LpSolution, LpStatus, VarId};
use rayon::prelude::*;
use serde::Serialize;

use crate::agents::{
    add_agent_block, agent_lp, best_response, AgentBlock, AgentKind, AgentLpSolution, AgentSpec,
    Exposure, Formulation, ResponseStatus, FACE_TOL,
};
use crate::error::{Error, Result};
use crate::risk::risk_adjusted;
use crate::scenario::{ContractSpec, ScenarioSet};

pub const BALANCE_ROW: &str = "balance";

#[derive(Clone, Debug)]
pub struct MarketConfig {
    agents: Vec<AgentSpec>,
    scenarios: ScenarioSet,
    contract: ContractSpec,
}

impl MarketConfig {
    pub fn new(
        agents: Vec<AgentSpec>,
        scenarios: ScenarioSet,
        contract: ContractSpec,
    ) -> Result<Self> {
        contract
            .validate_against(&scenarios)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for a in &agents {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::Config(format!("duplicate agent id '{}'", a.id)));
            }
            a.validate(&scenarios)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if !agents.iter().any(|a| a.kind.can_sell()) || !agents.iter().any(|a| a.kind.can_buy()) {
            return Err(Error::Config(
                "the market needs at least one agent able to sell and one able to buy".into(),
            ));
        }
        Ok(Self {
            agents,
            scenarios,
            contract,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn contract(&self) -> &ContractSpec {
        &self.contract
    }

    /// Same market over a subset of trajectories, equally weighted.
    pub fn restrict(&self, members: &[usize]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self {
            agents: self.agents.iter().map(|a| a.subset(members)).collect(),
            scenarios: self.scenarios.subset(members),
            contract: self.contract.clone(),
        })
    }

    /// Same market with a different contract (other delivery periods).
    pub fn with_contract(&self, contract: ContractSpec) -> Result<Self> {
        Self::new(self.agents.clone(), self.scenarios.clone(), contract)
    }

    pub fn with_agents(&self, agents: Vec<AgentSpec>) -> Result<Self> {
        Self::new(agents, self.scenarios.clone(), self.contract.clone())
    }

    pub fn with_scenarios(&self, scenarios: ScenarioSet) -> Result<Self> {
        Self::new(self.agents.clone(), scenarios, self.contract.clone())
    }
}

struct WelfareLp {
    lp: LpProblem,
    blocks: Vec<AgentBlock>,
    balance: usize,
}

fn welfare_lp(cfg: &MarketConfig, formulation: Formulation) -> WelfareLp {
    let mut lp = LpProblem::new();
    let blocks: Vec<AgentBlock> = cfg
        .agents
        .iter()
        .map(|a| add_agent_block(&mut lp, a, &cfg.scenarios, &cfg.contract, formulation))
        .collect();
    let v = cfg.contract.total_shape();
    let mut terms = Vec::new();
    for b in &blocks {
        if let Some(q) = b.q_sell {
            terms.push((q, v));
        }
        if let Some(q) = b.q_buy {
            terms.push((q, -v));
        }
    }
    let balance = match lp.add_eq(BALANCE_ROW, &terms, 0.0) {
        eqforward_lp::RowId::Eq(i) => i,
        eqforward_lp::RowId::Le(_) => unreachable!("balance is an equality"),
    };
    WelfareLp {
        lp,
        blocks,
        balance,
    }
}

/// The welfare LP with explicit revenue variables: every agent block plus
/// the balance row `Σ V·q_sell − Σ V·q_buy = 0` (V the total contract
/// shape). No contract-price terms appear in the objective.
pub fn build_welfare_lp(cfg: &MarketConfig) -> LpProblem {
    welfare_lp(cfg, Formulation::Full).lp
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumStatus {
    Optimal,
    /// The supporting price is an interval, or the cleared quantity is not
    /// unique.
    Degenerate,
    /// Nothing clears; any price in the bracket supports `q = 0`.
    NoTrade,
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentOutcome {
    pub id: String,
    pub kind: AgentKind,
    pub q_sell: f64,
    pub q_buy: f64,
    /// Risk-adjusted spot revenue plus the contract payment at the
    /// equilibrium price.
    pub surplus: f64,
    #[serde(skip)]
    pub detail: AgentLpSolution,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumResult {
    pub price: f64,
    pub quantity: f64,
    pub bracket: [f64; 2],
    pub status: EquilibriumStatus,
    pub welfare: f64,
    pub balance_dual: f64,
    pub agents: Vec<AgentOutcome>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    pub formulation: Formulation,
}

/// Relative bracket width above which the price is flagged as degenerate.
pub const DEGENERATE_WIDTH: f64 = 1e-4;
/// Balance perturbation, relative to `max(1, q⁰)`, for bracket probes.
pub const BRACKET_EPS: f64 = 1e-4;

pub fn solve_equilibrium(cfg: &MarketConfig) -> Result<EquilibriumResult> {
    solve_equilibrium_with(cfg, &SolveOptions::default())
}

fn lp_outcome(status: LpStatus, what: &str) -> Result<()> {
    match status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Unbounded => Err(Error::Unbounded(what.into())),
        LpStatus::Infeasible => Err(Error::Infeasible(what.into())),
        LpStatus::IterationLimit => Err(Error::IterationLimit(what.into())),
    }
}

/// Copy of `lp` restricted to its optimal face and carrying a new objective.
fn face_problem(lp: &LpProblem, optimum: f64, objective: Vec<f64>) -> LpProblem {
    let mut face = lp.clone();
    let terms: Vec<_> = (0..face.num_vars())
        .map(|j| (VarId(j), face.objective[j]))
        .collect();
    face.add_ge(
        "optimal_face",
        &terms,
        optimum - face.objective_offset - FACE_TOL * optimum.abs().max(1.0),
    );
    face.objective = objective;
    face.objective_offset = 0.0;
    face
}

pub fn solve_equilibrium_with(
    cfg: &MarketConfig,
    opts: &SolveOptions,
) -> Result<EquilibriumResult> {
    let w = welfare_lp(cfg, opts.formulation);
    let sol = solve(&w.lp)?;
    lp_outcome(sol.status, "welfare problem")?;
    let welfare = sol.objective;
    let delta = sol.eq_duals[w.balance];
    let dual_price = -delta;

    // Is the net position of every agent unique? Probe with a generic
    // linear functional of the positions over the optimal face.
    let n = w.lp.num_vars();
    let mut probe = vec![0.0; n];
    for (i, b) in w.blocks.iter().enumerate() {
        let weight = 1.0 + i as f64;
        if let Some(q) = b.q_sell {
            probe[q.0] += weight;
        }
        if let Some(q) = b.q_buy {
            probe[q.0] -= weight;
        }
    }
    let at_opt: f64 = probe.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
    let scale = sol.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let spread = |sign: f64| -> Result<bool> {
        let face = face_problem(&w.lp, welfare, probe.iter().map(|c| sign * c).collect());
        let s = solve(&face)?;
        Ok(match s.status {
            LpStatus::Optimal => s.objective - sign * at_opt > 1e-7 * scale,
            LpStatus::Unbounded => true,
            _ => false,
        })
    };
    let (up, down) = rayon::join(|| spread(1.0), || spread(-1.0));
    let unique = !(up? || down?);

    let mut x = sol.x.clone();
    if !unique {
        // canonical point: smallest gross traded volume on the optimal face
        let mut gross = vec![0.0; n];
        for b in &w.blocks {
            for q in [b.q_sell, b.q_buy].into_iter().flatten() {
                gross[q.0] = -1.0;
            }
        }
        let s = solve(&face_problem(&w.lp, welfare, gross))?;
        if s.status == LpStatus::Optimal {
            x = s.x;
        }
    }
    let canonical = LpSolution { x, ..sol.clone() };

    let v = cfg.contract.total_shape();
    let mut agents: Vec<AgentOutcome> = cfg
        .agents
        .iter()
        .zip(&w.blocks)
        .map(|(a, b)| {
            let mut d = b.read(&canonical, a);
            if d.q_sell > 0.0 && d.q_buy > 0.0 {
                // wash trades of a trader cancel out
                let net = d.q_sell - d.q_buy;
                d.q_sell = net.max(0.0);
                d.q_buy = (-net).max(0.0);
            }
            AgentOutcome {
                id: a.id.clone(),
                kind: a.kind,
                q_sell: d.q_sell,
                q_buy: d.q_buy,
                surplus: 0.0,
                detail: d,
            }
        })
        .collect();
    let quantity: f64 = agents.iter().map(|o| o.q_sell).sum();

    // shadow-price bracket from one-sided perturbations of the balance row
    let eps = BRACKET_EPS * quantity.max(1.0);
    let probe_rhs = |rhs: f64| -> Result<Option<f64>> {
        let mut lp = w.lp.clone();
        lp.eq_rows[w.balance].rhs = rhs * v;
        let s = solve(&lp)?;
        Ok(match s.status {
            LpStatus::Optimal => Some(s.objective),
            LpStatus::Infeasible => None,
            LpStatus::Unbounded => Some(f64::INFINITY),
            LpStatus::IterationLimit => return Err(Error::IterationLimit("bracket probe".into())),
        })
    };
    let (plus, minus) = rayon::join(|| probe_rhs(eps), || probe_rhs(-eps));
    let p_right = plus?.map_or(f64::INFINITY, |wp| -(wp - welfare) / (eps * v));
    let p_left = minus?.map_or(f64::NEG_INFINITY, |wm| -(welfare - wm) / (eps * v));
    let p_left = p_left.min(dual_price);
    let p_right = p_right.max(dual_price);

    let width_tol = DEGENERATE_WIDTH * dual_price.abs().max(1.0);
    let (status, price) = if !unique {
        (EquilibriumStatus::Degenerate, dual_price)
    } else if quantity <= 1e-9 * scale {
        let mid = if p_left.is_finite() && p_right.is_finite() {
            0.5 * (p_left + p_right)
        } else {
            dual_price
        };
        (EquilibriumStatus::NoTrade, mid)
    } else if p_right - p_left > width_tol {
        (EquilibriumStatus::Degenerate, dual_price)
    } else {
        (EquilibriumStatus::Optimal, dual_price)
    };

    for o in agents.iter_mut() {
        o.surplus = o.detail.surplus + (o.q_sell - o.q_buy) * price * v;
        o.detail.surplus = o.surplus;
    }

    Ok(EquilibriumResult {
        price,
        quantity,
        bracket: [p_left, p_right],
        status,
        welfare,
        balance_dual: delta,
        agents,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub price: f64,
    pub quantity: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
struct Aggregate {
    supply: f64,
    demand: f64,
}

impl Aggregate {
    fn excess(&self) -> f64 {
        let e = self.supply - self.demand;
        if e.is_nan() {
            0.0
        } else {
            e
        }
    }
}

fn aggregate(cfg: &MarketConfig, p: f64) -> Result<Aggregate> {
    let responses: Vec<_> = cfg
        .agents
        .par_iter()
        .map(|a| best_response(a, &cfg.scenarios, &cfg.contract, p).map(|r| (a.kind, r)))
        .collect::<Result<_>>()?;
    let mut agg = Aggregate {
        supply: 0.0,
        demand: 0.0,
    };
    for (kind, r) in responses {
        let unbounded = r.status == ResponseStatus::Unbounded;
        match kind {
            AgentKind::Generator => agg.supply += r.quantity,
            AgentKind::Load => agg.demand += r.quantity,
            AgentKind::Trader if r.quantity >= 0.0 => agg.supply += r.quantity,
            AgentKind::Trader => agg.demand -= r.quantity,
        }
        debug_assert!(!unbounded || r.quantity.is_infinite());
    }
    Ok(agg)
}

/// Bisection on excess supply (minimum-quantity best responses), entirely
/// independent of the welfare LP.
pub fn price_sweep_oracle(
    cfg: &MarketConfig,
    p_lo: f64,
    p_hi: f64,
    tol: f64,
) -> Result<SweepResult> {
    if !(p_lo <= p_hi) || !(tol > 0.0) {
        return Err(Error::Value(format!(
            "invalid sweep bracket [{p_lo}, {p_hi}] with tol {tol}"
        )));
    }
    let sign_tol = 1e-9;
    let mut lo = aggregate(cfg, p_lo)?;
    let mut hi = aggregate(cfg, p_hi)?;
    if lo.excess() > sign_tol * lo.demand.abs().max(1.0)
        || hi.excess() < -sign_tol * hi.supply.abs().max(1.0)
    {
        return Err(Error::NoBracket { lo: p_lo, hi: p_hi });
    }
    let (mut a, mut b) = (p_lo, p_hi);
    let mut iterations = 0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let m = aggregate(cfg, mid)?;
        if m.excess() >= 0.0 {
            b = mid;
            hi = m;
        } else {
            a = mid;
            lo = m;
        }
        iterations += 1;
    }
    // lower end of the overlap of both optimal faces
    let quantity = lo.supply.max(hi.demand);
    Ok(SweepResult {
        price: 0.5 * (a + b),
        quantity,
        iterations,
    })
}

/// Residuals of the agent-level optimality systems evaluated at the
/// equilibrium point with multipliers taken from the welfare LP.
#[derive(Clone, Debug, Default, Serialize)]
pub struct KktReport {
    pub max_primal_residual: f64,
    pub max_dual_residual: f64,
    pub max_complementarity_residual: f64,
    pub duality_gap: f64,
    /// Largest relative gap between an agent's surplus in the result and
    /// a fresh solve of its own problem at the same price.
    pub agent_reopt_gap: f64,
    /// Worst residual per condition, over all agents.
    pub conditions: BTreeMap<String, f64>,
    /// Worst residual per agent.
    pub per_agent: BTreeMap<String, f64>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.max_primal_residual,
            self.max_dual_residual,
            self.max_complementarity_residual,
            self.duality_gap,
            self.agent_reopt_gap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    fn record(&mut self, agent: &str, name: &str, value: f64) {
        let v = if value.is_nan() {
            f64::INFINITY
        } else {
            value.max(0.0)
        };
        let slot = self.conditions.entry(name.to_string()).or_insert(0.0);
        *slot = slot.max(v);
        let slot = self.per_agent.entry(agent.to_string()).or_insert(0.0);
        *slot = slot.max(v);
    }
}

const PRIMAL_CONDITIONS: [&str; 4] = [
    "revenue_definition",
    "quantity_sign",
    "tail_cap",
    "tail_threshold",
];
const DUAL_CONDITIONS: [&str; 6] = [
    "revenue_stationarity",
    "threshold_stationarity",
    "tail_stationarity",
    "quantity_stationarity",
    "quantity_dual_sign",
    "threshold_dual_sign",
];

/// Evaluates every agent's optimality system at the reported point. The
/// price used is the reported one, except for no-trade outcomes where the
/// multipliers belong to the balance dual itself.
pub fn check_kkt(cfg: &MarketConfig, res: &EquilibriumResult) -> KktReport {
    let p = match res.status {
        EquilibriumStatus::NoTrade => -res.balance_dual,
        _ => res.price,
    };
    let s = &cfg.scenarios;
    let c = &cfg.contract;
    let v = c.total_shape();
    let k = s.num_scenarios();
    let mut rep = KktReport::default();

    for (agent, out) in cfg.agents.iter().zip(&res.agents) {
        let d = &out.detail;
        let id = agent.id.as_str();
        let e = Exposure::new(agent, s, c);
        let lambda = agent.risk.lambda;
        let w = (1.0 - lambda) / (k as f64 * (1.0 - agent.risk.alpha));
        let rev_scale = e
            .base
            .iter()
            .chain(&d.revenues)
            .chain(std::iter::once(&d.a))
            .fold(1.0f64, |m, x| m.max(x.abs()));
        let cap = agent.q_max.unwrap_or(f64::INFINITY);
        let q_scale = 1.0f64.max(out.q_sell).max(out.q_buy);

        // primal feasibility
        let expected = e.revenues(out.q_sell, out.q_buy);
        let rev_def = expected
            .iter()
            .zip(&d.revenues)
            .map(|(x, r)| (x - r).abs())
            .fold(0.0, f64::max);
        rep.record(id, "revenue_definition", rev_def / rev_scale);
        let mut sign = (-out.q_sell).max(0.0).max((-out.q_buy).max(0.0));
        sign = sign
            .max((out.q_sell - cap).max(0.0))
            .max((out.q_buy - cap).max(0.0));
        if !agent.kind.can_sell() {
            sign = sign.max(out.q_sell.abs());
        }
        if !agent.kind.can_buy() {
            sign = sign.max(out.q_buy.abs());
        }
        rep.record(id, "quantity_sign", sign / q_scale);
        rep.record(
            id,
            "tail_cap",
            d.y.iter().fold(0.0f64, |m, &y| m.max(y)) / rev_scale,
        );
        let thr = (0..k)
            .map(|j| d.y[j] - d.revenues[j] + d.a)
            .fold(0.0, f64::max);
        rep.record(id, "tail_threshold", thr / rev_scale);

        // stationarity
        let rs = (0..k)
            .map(|j| (d.theta[j] - lambda / k as f64 - d.eta[j]).abs())
            .fold(0.0, f64::max);
        rep.record(id, "revenue_stationarity", rs * k as f64);
        rep.record(
            id,
            "threshold_stationarity",
            ((1.0 - lambda) - d.eta.iter().sum::<f64>()).abs(),
        );
        let ts = (0..k)
            .map(|j| (w - d.gamma[j] - d.eta[j]).abs())
            .fold(0.0, f64::max);
        rep.record(id, "tail_stationarity", ts * k as f64);
        let exposure_value: f64 = d.theta.iter().zip(&e.hedge).map(|(t, h)| t * h).sum();
        let grad_sell = p * v - exposure_value;
        let mut qs = 0.0f64;
        let mut qsign = 0.0f64;
        let mut compl = 0.0f64;
        let q_cols = [
            (agent.kind.can_sell(), grad_sell, d.beta_sell, out.q_sell),
            (agent.kind.can_buy(), -grad_sell, d.beta_buy, out.q_buy),
        ];
        for (present, grad, beta, q) in q_cols {
            if !present {
                continue;
            }
            qs = qs.max((grad - beta).abs() / v);
            let at_zero = q <= 1e-9 * q_scale;
            let at_cap = cap.is_finite() && q >= cap - 1e-9 * q_scale;
            let viol = if at_zero && at_cap {
                0.0
            } else if at_zero {
                beta.max(0.0)
            } else if at_cap {
                (-beta).max(0.0)
            } else {
                beta.abs()
            };
            qsign = qsign.max(viol / v);
            let slack = if beta > 0.0 { (cap - q).abs() } else { q };
            if beta.abs() > 0.0 && slack.is_finite() {
                compl = compl.max(beta.abs() * slack / rev_scale);
            }
        }
        rep.record(id, "quantity_stationarity", qs);
        rep.record(id, "quantity_dual_sign", qsign);
        let neg = d.eta.iter().chain(&d.gamma).fold(0.0f64, |m, &x| m.max(-x));
        rep.record(id, "threshold_dual_sign", neg * k as f64);

        // complementary slackness
        for j in 0..k {
            compl = compl.max(d.gamma[j].abs() * d.y[j].abs() * k as f64 / rev_scale);
            let slack = (d.y[j] - d.revenues[j] + d.a).abs();
            compl = compl.max(d.eta[j].abs() * slack * k as f64 / rev_scale);
        }
        rep.record(id, "complementarity", compl);

        // primal objective against dual objective of the agent problem
        let primal = lambda * d.revenues.iter().sum::<f64>() / k as f64
            + (1.0 - lambda) * d.a
            + w * d.y.iter().sum::<f64>()
            + (out.q_sell - out.q_buy) * p * v;
        let mut dual: f64 = d.theta.iter().zip(&e.base).map(|(t, b)| t * b).sum();
        if cap.is_finite() {
            dual += cap * (d.beta_sell.max(0.0) + d.beta_buy.max(0.0));
        }
        rep.record(
            id,
            "primal_dual_equality",
            (primal - dual).abs() / primal.abs().max(1.0),
        );

        // re-optimizing the agent alone at the same price must not improve
        let reopt = match agent_lp(agent, s, c, p, Formulation::Reduced)
            .and_then(|(lp, _)| Ok(solve(&lp)?))
        {
            Ok(sol) if sol.status == LpStatus::Optimal => {
                let at_point = risk_adjusted(&expected, agent.risk).unwrap_or(f64::NAN)
                    + (out.q_sell - out.q_buy) * p * v;
                (sol.objective - at_point).abs() / sol.objective.abs().max(1.0)
            }
            _ => f64::INFINITY,
        };
        rep.record(id, "agent_reoptimization", reopt);
    }

    let worst = |names: &[&str]| {
        names
            .iter()
            .filter_map(|n| rep.conditions.get(*n))
            .fold(0.0f64, |m, &x| m.max(x))
    };
    rep.max_primal_residual = worst(&PRIMAL_CONDITIONS);
    rep.max_dual_residual = worst(&DUAL_CONDITIONS);
    rep.max_complementarity_residual = worst(&["complementarity"]);
    rep.duality_gap = worst(&["primal_dual_equality"]);
    rep.agent_reopt_gap = worst(&["agent_reoptimization"]);
    rep
}

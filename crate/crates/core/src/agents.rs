//! Price-taking agents: spot exposure, per-agent surplus LPs, best
//! responses and aggregate supply/demand curves.
//!
//! For every agent the spot-settlement revenue in scenario `k` is affine in
//! the contract position:
//!
//! ```text
//! R_k = base_k + (q_buy − q_sell) · hedge_k
//! ```
//!
//! with `hedge_k = Σ_{m∈delivery} v_m π_{m,k}` and `base_k` the uncontracted
//! spot revenue (`Σ_m g π` for a generator, `−Σ_m d π` for a load, zero for
//! a trader).

use eqforward_lp::{solve, LpProblem, LpSolution, LpStatus, VarId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{risk_adjusted, RiskParams};
use crate::scenario::{ContractSpec, ProfileSet, ScenarioSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Generator,
    Load,
    Trader,
}

impl AgentKind {
    pub fn can_sell(self) -> bool {
        matches!(self, AgentKind::Generator | AgentKind::Trader)
    }

    pub fn can_buy(self) -> bool {
        matches!(self, AgentKind::Load | AgentKind::Trader)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    pub risk: RiskParams,
    pub profile: Option<ProfileSet>,
    pub q_max: Option<f64>,
}

impl AgentSpec {
    pub fn generator(id: impl Into<String>, risk: RiskParams, profile: ProfileSet) -> Self {
        Self::with_profile(id, AgentKind::Generator, risk, profile)
    }

    pub fn load(id: impl Into<String>, risk: RiskParams, profile: ProfileSet) -> Self {
        Self::with_profile(id, AgentKind::Load, risk, profile)
    }

    pub fn trader(id: impl Into<String>, risk: RiskParams, q_max: f64) -> Self {
        Self {
            id: id.into(),
            kind: AgentKind::Trader,
            risk,
            profile: None,
            q_max: Some(q_max),
        }
    }

    fn with_profile(
        id: impl Into<String>,
        kind: AgentKind,
        risk: RiskParams,
        profile: ProfileSet,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            risk,
            profile: Some(profile),
            q_max: None,
        }
    }

    pub fn with_cap(mut self, q_max: f64) -> Self {
        self.q_max = Some(q_max);
        self
    }

    pub fn validate(&self, s: &ScenarioSet) -> Result<()> {
        let mismatch = |msg: &str| Error::KindMismatch {
            agent: self.id.clone(),
            msg: msg.into(),
        };
        match (self.kind, &self.profile) {
            (AgentKind::Trader, Some(_)) => {
                return Err(mismatch("a trader has no physical profile"))
            }
            (AgentKind::Generator | AgentKind::Load, None) => {
                return Err(mismatch("generators and loads need a physical profile"))
            }
            (_, Some(p)) if !p.matches(s) => {
                return Err(Error::Dimension(format!(
                    "profile of agent {} does not match the scenario set",
                    self.id
                )))
            }
            _ => {}
        }
        if let Some(q) = self.q_max {
            if !(q > 0.0) || q.is_nan() {
                return Err(Error::Value(format!(
                    "q_max of agent {} must be positive, got {q}",
                    self.id
                )));
            }
        }
        RiskParams::new(self.risk.lambda, self.risk.alpha)?;
        Ok(())
    }

    /// Restriction to a subset of scenarios.
    pub fn subset(&self, members: &[usize]) -> Self {
        Self {
            profile: self.profile.as_ref().map(|p| p.subset(members)),
            ..self.clone()
        }
    }

    fn cap(&self) -> f64 {
        self.q_max.unwrap_or(f64::INFINITY)
    }

    fn check_position(&self, q_sell: f64, q_buy: f64) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::KindMismatch {
                agent: self.id.clone(),
                msg,
            })
        };
        if q_sell < 0.0 || q_buy < 0.0 {
            return bad(format!("negative contract quantity ({q_sell}, {q_buy})"));
        }
        if q_sell > 0.0 && !self.kind.can_sell() {
            return bad(format!("a {:?} cannot sell contracts", self.kind));
        }
        if q_buy > 0.0 && !self.kind.can_buy() {
            return bad(format!("a {:?} cannot buy contracts", self.kind));
        }
        Ok(())
    }
}

/// Per-scenario affine exposure `R_k = base_k + (q_buy − q_sell)·hedge_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exposure {
    pub base: Vec<f64>,
    pub hedge: Vec<f64>,
}

impl Exposure {
    pub fn new(agent: &AgentSpec, s: &ScenarioSet, c: &ContractSpec) -> Self {
        let k = s.num_scenarios();
        let hedge: Vec<f64> = (0..k).map(|j| c.weighted_spot(s, j)).collect();
        let sign = match agent.kind {
            AgentKind::Generator => 1.0,
            AgentKind::Load => -1.0,
            AgentKind::Trader => 0.0,
        };
        let base = match &agent.profile {
            Some(p) if sign != 0.0 => (0..k)
                .map(|j| {
                    sign * (0..s.num_periods())
                        .map(|m| p.quantity(m, j) * s.spot(m, j))
                        .sum::<f64>()
                })
                .collect(),
            _ => vec![0.0; k],
        };
        Self { base, hedge }
    }

    pub fn revenues(&self, q_sell: f64, q_buy: f64) -> Vec<f64> {
        let net = q_buy - q_sell;
        self.base
            .iter()
            .zip(&self.hedge)
            .map(|(b, h)| b + net * h)
            .collect()
    }
}

/// Spot-settlement revenue of one scenario; the contract payment is not
/// included.
pub fn scenario_revenue(
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    q_sell: f64,
    q_buy: f64,
    k: usize,
) -> Result<f64> {
    agent.check_position(q_sell, q_buy)?;
    if k >= s.num_scenarios() {
        return Err(Error::Dimension(format!("scenario {} out of range", k + 1)));
    }
    let mut total = 0.0;
    for m in 0..s.num_periods() {
        let pi = s.spot(m, k);
        let v = c
            .delivery_periods()
            .iter()
            .position(|&d| d == m)
            .map_or(0.0, |i| c.shape()[i]);
        let own = agent.profile.as_ref().map_or(0.0, |p| p.quantity(m, k));
        total += match agent.kind {
            AgentKind::Generator => (own - q_sell * v) * pi,
            AgentKind::Load => (q_buy * v - own) * pi,
            AgentKind::Trader => (q_buy - q_sell) * v * pi,
        };
    }
    Ok(total)
}

/// Risk-adjusted spot revenue plus the deterministic contract payment.
pub fn surplus(
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    q_sell: f64,
    q_buy: f64,
    p: f64,
) -> Result<f64> {
    agent.check_position(q_sell, q_buy)?;
    let e = Exposure::new(agent, s, c);
    Ok(risk_adjusted(&e.revenues(q_sell, q_buy), agent.risk)?
        + (q_sell - q_buy) * p * c.total_shape())
}

/// How revenue definitions enter an LP block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Explicit revenue variables and equality rows; `y ≤ 0` as rows.
    Full,
    /// Revenues substituted into the objective and tail rows; `y ≤ 0` as
    /// a bound. About a third of the rows of `Full`.
    #[default]
    Reduced,
}

/// Column and row handles of one agent's block inside an LP.
#[derive(Clone, Debug)]
pub(crate) struct AgentBlock {
    pub q_sell: Option<VarId>,
    pub q_buy: Option<VarId>,
    pub a: VarId,
    pub revenue: Vec<VarId>,
    pub y: Vec<VarId>,
    pub revenue_rows: Vec<usize>,
    pub tail_cap_rows: Vec<usize>,
    pub tail_rows: Vec<usize>,
    pub exposure: Exposure,
    pub formulation: Formulation,
}

/// Adds the spot-surplus block of `agent` (no contract payment) to `lp`.
pub(crate) fn add_agent_block(
    lp: &mut LpProblem,
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    formulation: Formulation,
) -> AgentBlock {
    let k = s.num_scenarios();
    let exposure = Exposure::new(agent, s, c);
    let lambda = agent.risk.lambda;
    let mean_w = lambda / k as f64;
    let tail_w = (1.0 - lambda) * agent.risk.tail_weight(k);
    let hedge_sum: f64 = exposure.hedge.iter().sum();
    let id = &agent.id;
    let cap = agent.cap();
    let reduced = formulation == Formulation::Reduced;

    let q_cost = if reduced { mean_w * hedge_sum } else { 0.0 };
    let q_sell = agent
        .kind
        .can_sell()
        .then(|| lp.add_var(format!("{id}.q_sell"), 0.0, cap, -q_cost));
    let q_buy = agent
        .kind
        .can_buy()
        .then(|| lp.add_var(format!("{id}.q_buy"), 0.0, cap, q_cost));
    let a = lp.add_var(
        format!("{id}.a"),
        f64::NEG_INFINITY,
        f64::INFINITY,
        1.0 - lambda,
    );

    let mut block = AgentBlock {
        q_sell,
        q_buy,
        a,
        revenue: Vec::new(),
        y: Vec::new(),
        revenue_rows: Vec::new(),
        tail_cap_rows: Vec::new(),
        tail_rows: Vec::new(),
        exposure,
        formulation,
    };
    // terms of (q_sell − q_buy)·hedge_k
    let position = |h: f64| {
        let mut t = Vec::with_capacity(2);
        if let Some(v) = q_sell {
            t.push((v, h));
        }
        if let Some(v) = q_buy {
            t.push((v, -h));
        }
        t
    };

    if reduced {
        lp.objective_offset += mean_w * block.exposure.base.iter().sum::<f64>();
        for j in 0..k {
            let y = lp.add_var(format!("{id}.y[{j}]"), f64::NEG_INFINITY, 0.0, tail_w);
            let mut terms = vec![(y, 1.0), (a, 1.0)];
            terms.extend(position(block.exposure.hedge[j]));
            let row = lp.add_le(format!("{id}.tail[{j}]"), &terms, block.exposure.base[j]);
            block.y.push(y);
            block.tail_rows.push(row_index(row));
        }
    } else {
        for j in 0..k {
            let r = lp.add_var(
                format!("{id}.R[{j}]"),
                f64::NEG_INFINITY,
                f64::INFINITY,
                mean_w,
            );
            let mut terms = vec![(r, 1.0)];
            terms.extend(position(block.exposure.hedge[j]));
            let row = lp.add_eq(format!("{id}.revenue[{j}]"), &terms, block.exposure.base[j]);
            block.revenue.push(r);
            block.revenue_rows.push(row_index(row));
        }
        for j in 0..k {
            let y = lp.add_var(
                format!("{id}.y[{j}]"),
                f64::NEG_INFINITY,
                f64::INFINITY,
                tail_w,
            );
            let row = lp.add_le(format!("{id}.tail_cap[{j}]"), &[(y, 1.0)], 0.0);
            block.y.push(y);
            block.tail_cap_rows.push(row_index(row));
        }
        for j in 0..k {
            let terms = [(block.y[j], 1.0), (block.revenue[j], -1.0), (a, 1.0)];
            let row = lp.add_le(format!("{id}.tail[{j}]"), &terms, 0.0);
            block.tail_rows.push(row_index(row));
        }
    }
    block
}

fn row_index(r: eqforward_lp::RowId) -> usize {
    match r {
        eqforward_lp::RowId::Eq(i) | eqforward_lp::RowId::Le(i) => i,
    }
}

/// Primal values and multipliers of one agent block read off a solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentLpSolution {
    pub q_sell: f64,
    pub q_buy: f64,
    pub a: f64,
    pub revenues: Vec<f64>,
    pub y: Vec<f64>,
    /// Multipliers of the revenue definitions.
    pub theta: Vec<f64>,
    /// Multipliers of `y_k ≤ 0`.
    pub gamma: Vec<f64>,
    /// Multipliers of `y_k ≤ R_k − a`.
    pub eta: Vec<f64>,
    /// Reduced costs of the quantity columns.
    pub beta_sell: f64,
    pub beta_buy: f64,
    pub surplus: f64,
}

impl AgentBlock {
    pub(crate) fn read(&self, sol: &LpSolution, agent: &AgentSpec) -> AgentLpSolution {
        let val = |v: Option<VarId>| v.map_or(0.0, |v| sol.x[v.0]);
        let rc = |v: Option<VarId>| v.map_or(0.0, |v| sol.reduced_costs[v.0]);
        let (q_sell, q_buy) = (val(self.q_sell).max(0.0), val(self.q_buy).max(0.0));
        let k = self.tail_rows.len();
        let mean_w = agent.risk.lambda / k as f64;
        let eta: Vec<f64> = self.tail_rows.iter().map(|&i| sol.ineq_duals[i]).collect();
        let (revenues, theta, gamma) = match self.formulation {
            Formulation::Full => (
                self.revenue.iter().map(|v| sol.x[v.0]).collect(),
                self.revenue_rows.iter().map(|&i| sol.eq_duals[i]).collect(),
                self.tail_cap_rows
                    .iter()
                    .map(|&i| sol.ineq_duals[i])
                    .collect(),
            ),
            Formulation::Reduced => (
                self.exposure.revenues(q_sell, q_buy),
                eta.iter().map(|e| mean_w + e).collect(),
                self.y.iter().map(|v| sol.reduced_costs[v.0]).collect(),
            ),
        };
        AgentLpSolution {
            q_sell,
            q_buy,
            a: sol.x[self.a.0],
            y: self.y.iter().map(|v| sol.x[v.0]).collect(),
            surplus: risk_adjusted(&revenues, agent.risk).unwrap_or(f64::NAN),
            revenues,
            theta,
            gamma,
            eta,
            beta_sell: rc(self.q_sell),
            beta_buy: rc(self.q_buy),
        }
    }
}

/// The agent's surplus LP at contract price `p`, with its block handles.
pub(crate) fn agent_lp(
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    p: f64,
    formulation: Formulation,
) -> Result<(LpProblem, AgentBlock)> {
    agent.validate(s)?;
    c.validate_against(s)?;
    let mut lp = LpProblem::new();
    let block = add_agent_block(&mut lp, agent, s, c, formulation);
    let pay = p * c.total_shape();
    if let Some(v) = block.q_sell {
        lp.objective[v.0] += pay;
    }
    if let Some(v) = block.q_buy {
        lp.objective[v.0] -= pay;
    }
    Ok((lp, block))
}

/// Builds the agent's surplus LP at contract price `p` with explicit
/// revenue variables: `{id}.q_sell`/`{id}.q_buy`, `{id}.a`, `{id}.R[k]`,
/// `{id}.y[k]`; rows `{id}.revenue[k]`, `{id}.tail_cap[k]`, `{id}.tail[k]`.
pub fn build_agent_lp(
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    p: f64,
) -> Result<LpProblem> {
    agent_lp(agent, s, c, p, Formulation::Full).map(|(lp, _)| lp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Optimal,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BestResponse {
    /// `q_sell` for generators, `q_buy` for loads, `q_sell − q_buy` for
    /// traders. Infinite (signed) when unbounded.
    pub quantity: f64,
    pub q_sell: f64,
    pub q_buy: f64,
    pub status: ResponseStatus,
    /// Optimal surplus; infinite when unbounded.
    pub surplus: f64,
}

/// Relative slack used to describe "the optimal face" in tie-break solves.
pub const FACE_TOL: f64 = 1e-11;

/// Best response at price `p`. On a flat optimum the smallest optimal
/// position is reported.
pub fn best_response(
    agent: &AgentSpec,
    s: &ScenarioSet,
    c: &ContractSpec,
    p: f64,
) -> Result<BestResponse> {
    let (lp, block) = agent_lp(agent, s, c, p, Formulation::Reduced)?;
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => {
            let ray = sol.ray.as_deref().unwrap_or(&[]);
            let dir = |v: Option<VarId>| v.and_then(|v| ray.get(v.0).copied()).unwrap_or(0.0);
            let net = dir(block.q_sell) - dir(block.q_buy);
            let (q_sell, q_buy) = if net >= 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                (0.0, f64::INFINITY)
            };
            let quantity = match agent.kind {
                AgentKind::Load => f64::INFINITY,
                _ if net >= 0.0 => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            };
            return Ok(BestResponse {
                quantity,
                q_sell,
                q_buy,
                status: ResponseStatus::Unbounded,
                surplus: f64::INFINITY,
            });
        }
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "surplus problem of agent {}",
                agent.id
            )))
        }
        LpStatus::IterationLimit => {
            return Err(Error::IterationLimit(format!(
                "surplus problem of agent {}",
                agent.id
            )))
        }
    }
    let best = sol.objective;

    // minimize q_sell + q_buy over the optimal face
    let mut face = lp.clone();
    let terms: Vec<_> = (0..face.num_vars())
        .map(|j| (VarId(j), face.objective[j]))
        .collect();
    face.add_ge(
        "optimal_face",
        &terms,
        best - face.objective_offset - FACE_TOL * best.abs().max(1.0),
    );
    face.objective = vec![0.0; face.num_vars()];
    face.objective_offset = 0.0;
    for v in [block.q_sell, block.q_buy].into_iter().flatten() {
        face.objective[v.0] = -1.0;
    }
    let tie = solve(&face)?;
    let x = if tie.status == LpStatus::Optimal {
        &tie.x
    } else {
        &sol.x
    };
    let val = |x: &[f64], v: Option<VarId>| v.map_or(0.0, |v| x[v.0].max(0.0));
    let (mut q_sell, mut q_buy) = (val(x, block.q_sell), val(x, block.q_buy));
    // a shift within solver noise is not a different face
    let (s0, b0) = (val(&sol.x, block.q_sell), val(&sol.x, block.q_buy));
    if (q_sell - s0).abs() + (q_buy - b0).abs() <= 1e-7 * s0.max(b0).max(1.0) {
        (q_sell, q_buy) = (s0, b0);
    }
    let quantity = match agent.kind {
        AgentKind::Generator => q_sell,
        AgentKind::Load => q_buy,
        AgentKind::Trader => q_sell - q_buy,
    };
    Ok(BestResponse {
        quantity,
        q_sell,
        q_buy,
        status: ResponseStatus::Optimal,
        surplus: best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub price: f64,
    pub supply: f64,
    pub demand: f64,
    pub supply_status: ResponseStatus,
    pub demand_status: ResponseStatus,
}

/// Aggregate supply and demand over a strictly increasing price grid.
/// Traders contribute to supply when net selling and to demand when net
/// buying. Any unbounded contribution makes the total infinite and is
/// flagged in the status column.
pub fn supply_demand_curves(
    agents: &[AgentSpec],
    s: &ScenarioSet,
    c: &ContractSpec,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return Err(Error::Value("price grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Value(
            "price grid must be strictly increasing".into(),
        ));
    }
    grid.par_iter()
        .map(|&p| {
            let mut pt = CurvePoint {
                price: p,
                supply: 0.0,
                demand: 0.0,
                supply_status: ResponseStatus::Optimal,
                demand_status: ResponseStatus::Optimal,
            };
            for a in agents {
                let r = best_response(a, s, c, p)?;
                let unbounded = r.status == ResponseStatus::Unbounded;
                let (sell, buy) = match a.kind {
                    AgentKind::Generator => (r.quantity, 0.0),
                    AgentKind::Load => (0.0, r.quantity),
                    AgentKind::Trader => (r.quantity.max(0.0), (-r.quantity).max(0.0)),
                };
                pt.supply += sell;
                pt.demand += buy;
                if unbounded && sell > 0.0 {
                    pt.supply_status = ResponseStatus::Unbounded;
                }
                if unbounded && buy > 0.0 {
                    pt.demand_status = ResponseStatus::Unbounded;
                }
            }
            Ok(pt)
        })
        .collect()
}

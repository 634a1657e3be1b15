//! Forward electricity contract prices as competitive equilibria.
//!
//! Generators, loads and traders each maximize a blend of expected revenue
//! and CVaR over equally likely spot-price scenarios. The equilibrium
//! contract price is the negated dual of the contract-balance row in the
//! joint welfare LP; [`equilibrium::price_sweep_oracle`] recovers the same
//! price by bisection on aggregate best responses. Scenario trees built by
//! equal-count clustering turn single prices into price distributions for
//! later trading dates.

pub mod agents;
pub mod equilibrium;
pub mod error;
pub mod fixtures;
pub mod risk;
pub mod scenario;
pub mod tree;

pub use agents::{
    best_response, build_agent_lp, scenario_revenue, supply_demand_curves, surplus, AgentKind,
    AgentLpSolution, AgentSpec, BestResponse, CurvePoint, Formulation, ResponseStatus,
};
pub use equilibrium::{
    build_welfare_lp, check_kkt, price_sweep_oracle, solve_equilibrium, solve_equilibrium_with,
    EquilibriumResult, EquilibriumStatus, KktReport, MarketConfig, SolveOptions, SweepResult,
};
pub use error::{Error, Result};
pub use risk::{cvar_rockafellar, cvar_sorted, risk_adjusted, RiskParams};
pub use scenario::{
    load_profile, load_scenarios, shape_weighted_mean_spot, ContractSpec, LoadOptions, ProfileSet,
    ScenarioFormat, ScenarioSet,
};
pub use tree::{
    build_tree, contract_value_distribution, forward_price_lattice, price_distribution,
    ClusterStat, ForwardPriceLattice, ScenarioTree, Side, StageSpec, TreeTopologySpec,
};

//! Scenario trees by nested equal-count clustering, per-node forward
//! prices, and mark-to-market distributions of existing contracts.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_equilibrium, EquilibriumStatus, MarketConfig};
use crate::error::{Error, Result};
use crate::scenario::{ContractSpec, ScenarioSet};

/// Per-trajectory statistic used to order members before splitting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterStat {
    /// Mean spot over the stage's periods.
    #[default]
    MeanSpot,
    /// Sum of spot over the stage's periods.
    SumSpot,
    /// Caller-supplied values, one row per stage with one entry per
    /// trajectory.
    Custom(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Zero-based periods the statistic is computed over.
    pub periods: Vec<usize>,
    pub branching: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeTopologySpec {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub cluster_stat: ClusterStat,
}

impl TreeTopologySpec {
    /// Flat-statistic topology: stage `t` clusters on period `periods[t]`.
    pub fn uniform(periods: &[usize], branching: &[usize]) -> Self {
        Self {
            stages: periods
                .iter()
                .zip(branching)
                .map(|(&p, &b)| StageSpec {
                    periods: vec![p],
                    branching: b,
                })
                .collect(),
            cluster_stat: ClusterStat::MeanSpot,
        }
    }

    fn validate(&self, s: &ScenarioSet) -> Result<()> {
        for (t, st) in self.stages.iter().enumerate() {
            if st.branching == 0 {
                return Err(Error::Topology(format!("stage {} has branching 0", t + 1)));
            }
            if st.periods.is_empty() && !matches!(self.cluster_stat, ClusterStat::Custom(_)) {
                return Err(Error::Topology(format!("stage {} has no periods", t + 1)));
            }
            if let Some(&p) = st.periods.iter().find(|&&p| p >= s.num_periods()) {
                return Err(Error::Topology(format!(
                    "stage {} refers to period {} outside 1..={}",
                    t + 1,
                    p + 1,
                    s.num_periods()
                )));
            }
        }
        if let ClusterStat::Custom(rows) = &self.cluster_stat {
            if rows.len() != self.stages.len() || rows.iter().any(|r| r.len() != s.num_scenarios())
            {
                return Err(Error::Dimension(
                    "custom statistic needs one row per stage with one value per trajectory".into(),
                ));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Value(
                    "custom statistic has non-finite entries".into(),
                ));
            }
        }
        Ok(())
    }

    fn statistic(&self, s: &ScenarioSet, stage: usize) -> Vec<f64> {
        let periods = &self.stages[stage].periods;
        let sum = |k: usize| periods.iter().map(|&m| s.spot(m, k)).sum::<f64>();
        (0..s.num_scenarios())
            .map(|k| match &self.cluster_stat {
                ClusterStat::MeanSpot => sum(k) / periods.len() as f64,
                ClusterStat::SumSpot => sum(k),
                ClusterStat::Custom(rows) => rows[stage][k],
            })
            .collect()
    }

    /// Latest period used by any stage, if any.
    pub fn last_period(&self) -> Option<usize> {
        self.stages
            .iter()
            .flat_map(|s| s.periods.iter().copied())
            .max()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub stage: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Trajectory indices, ascending.
    pub members: Vec<usize>,
    pub prob_from_parent: f64,
    pub path_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
    pub num_scenarios: usize,
    pub num_stages: usize,
}

impl ScenarioTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn stage_nodes(&self, stage: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.stage == stage)
    }

    /// Node holding trajectory `k` at `stage`.
    pub fn locate(&self, k: usize, stage: usize) -> Option<&TreeNode> {
        self.stage_nodes(stage)
            .find(|n| n.members.binary_search(&k).is_ok())
    }
}

/// Equal-count split: members ordered by statistic (ties by trajectory
/// index) are cut into `nb` consecutive groups whose sizes differ by at
/// most one, the larger groups taking the lower statistics.
fn split(members: &[usize], stat: &[f64], nb: usize) -> Vec<Vec<usize>> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| stat[a].total_cmp(&stat[b]).then(a.cmp(&b)));
    let n = order.len();
    let (base, extra) = (n / nb, n % nb);
    let mut out = Vec::with_capacity(nb);
    let mut start = 0;
    for i in 0..nb {
        let len = base + usize::from(i < extra);
        let mut group = order[start..start + len].to_vec();
        group.sort_unstable();
        out.push(group);
        start += len;
    }
    out
}

pub fn build_tree(s: &ScenarioSet, spec: &TreeTopologySpec) -> Result<ScenarioTree> {
    spec.validate(s)?;
    let k = s.num_scenarios();
    let mut nodes = vec![TreeNode {
        id: 0,
        stage: 0,
        parent: None,
        children: Vec::new(),
        members: (0..k).collect(),
        prob_from_parent: 1.0,
        path_prob: 1.0,
    }];
    let mut frontier = vec![0usize];
    for (t, st) in spec.stages.iter().enumerate() {
        let stat = spec.statistic(s, t);
        let mut next = Vec::new();
        for &pid in &frontier {
            let parent_members = nodes[pid].members.clone();
            if parent_members.len() < st.branching {
                return Err(Error::Topology(format!(
                    "node {pid} at stage {t} has {} trajectories, fewer than branching {}",
                    parent_members.len(),
                    st.branching
                )));
            }
            for group in split(&parent_members, &stat, st.branching) {
                let id = nodes.len();
                nodes.push(TreeNode {
                    id,
                    stage: t + 1,
                    parent: Some(pid),
                    children: Vec::new(),
                    prob_from_parent: group.len() as f64 / parent_members.len() as f64,
                    path_prob: group.len() as f64 / k as f64,
                    members: group,
                });
                nodes[pid].children.push(id);
                next.push(id);
            }
        }
        frontier = next;
    }
    Ok(ScenarioTree {
        nodes,
        num_scenarios: k,
        num_stages: spec.stages.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Optimal,
    Degenerate,
    NoTrade,
    /// Supplied directly rather than solved.
    Given,
    Failed(String),
}

impl From<EquilibriumStatus> for NodeStatus {
    fn from(s: EquilibriumStatus) -> Self {
        match s {
            EquilibriumStatus::Optimal => NodeStatus::Optimal,
            EquilibriumStatus::Degenerate => NodeStatus::Degenerate,
            EquilibriumStatus::NoTrade => NodeStatus::NoTrade,
        }
    }
}

impl NodeStatus {
    pub fn label(&self) -> String {
        match self {
            NodeStatus::Optimal => "optimal".into(),
            NodeStatus::Degenerate => "degenerate".into(),
            NodeStatus::NoTrade => "notrade".into(),
            NodeStatus::Given => "given".into(),
            NodeStatus::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodePrice {
    /// NaN when the node solve failed.
    pub price: f64,
    pub quantity: f64,
    pub status: NodeStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPriceLattice {
    pub tree: ScenarioTree,
    pub target: ContractSpec,
    /// Indexed by node id.
    pub nodes: Vec<NodePrice>,
}

impl ForwardPriceLattice {
    /// Lattice with externally supplied node prices.
    pub fn from_prices(tree: ScenarioTree, target: ContractSpec, prices: &[f64]) -> Result<Self> {
        if prices.len() != tree.nodes.len() {
            return Err(Error::Dimension(format!(
                "{} prices for {} tree nodes",
                prices.len(),
                tree.nodes.len()
            )));
        }
        let nodes = prices
            .iter()
            .map(|&price| NodePrice {
                price,
                quantity: f64::NAN,
                status: NodeStatus::Given,
            })
            .collect();
        Ok(Self {
            tree,
            target,
            nodes,
        })
    }
}

/// Size of the worker pool for node solves: `EQFORWARD_THREADS` when set
/// to a positive integer, otherwise rayon's default.
pub fn thread_count() -> Option<usize> {
    std::env::var("EQFORWARD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Solves the market restricted to every node's trajectories for the
/// target contract. Node failures are recorded per node.
pub fn forward_price_lattice(
    tree: &ScenarioTree,
    cfg: &MarketConfig,
    target: &ContractSpec,
) -> Result<ForwardPriceLattice> {
    if tree.num_scenarios != cfg.scenarios().num_scenarios() {
        return Err(Error::Dimension(format!(
            "tree covers {} trajectories, market has {}",
            tree.num_scenarios,
            cfg.scenarios().num_scenarios()
        )));
    }
    let market = cfg.with_contract(target.clone())?;
    let solve_node = |node: &TreeNode| -> NodePrice {
        let outcome = market
            .restrict(&node.members)
            .and_then(|m| solve_equilibrium(&m));
        match outcome {
            Ok(r) => NodePrice {
                price: r.price,
                quantity: r.quantity,
                status: r.status.into(),
            },
            Err(e) => NodePrice {
                price: f64::NAN,
                quantity: f64::NAN,
                status: NodeStatus::Failed(e.to_string()),
            },
        }
    };
    let run = || {
        use rayon::prelude::*;
        tree.nodes.par_iter().map(solve_node).collect::<Vec<_>>()
    };
    let nodes = match thread_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(ForwardPriceLattice {
        tree: tree.clone(),
        target: target.clone(),
        nodes,
    })
}

/// Checks that the target contract delivers no earlier than the last
/// period used for clustering.
pub fn check_target(spec: &TreeTopologySpec, target: &ContractSpec) -> Result<()> {
    match (spec.last_period(), target.delivery_periods().first()) {
        (Some(last), Some(&first)) if first < last => Err(Error::Topology(format!(
            "target delivery starts at period {} before the last clustering period {}",
            first + 1,
            last + 1
        ))),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionPoint {
    pub node: usize,
    pub price: f64,
    pub probability: f64,
}

pub fn price_distribution(
    lattice: &ForwardPriceLattice,
    stage: usize,
) -> Result<Vec<DistributionPoint>> {
    if stage > lattice.tree.num_stages {
        return Err(Error::Value(format!(
            "stage {stage} does not exist (tree has {} stages)",
            lattice.tree.num_stages
        )));
    }
    Ok(lattice
        .tree
        .stage_nodes(stage)
        .map(|n| DistributionPoint {
            node: n.id,
            price: lattice.nodes[n.id].price,
            probability: n.path_prob,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Sell,
    Buy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValuePoint {
    pub node: usize,
    pub price: f64,
    /// Per-unit value of the existing contract, $/MWh.
    pub value: f64,
    pub probability: f64,
}

pub fn contract_value_distribution(
    lattice: &ForwardPriceLattice,
    established_price: f64,
    side: Side,
    stage: usize,
) -> Result<Vec<ValuePoint>> {
    Ok(price_distribution(lattice, stage)?
        .into_iter()
        .map(|d| ValuePoint {
            node: d.node,
            price: d.price,
            value: match side {
                Side::Sell => established_price - d.price,
                Side::Buy => d.price - established_price,
            },
            probability: d.probability,
        })
        .collect())
}

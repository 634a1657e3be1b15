//! JSON run configuration and its translation into library types.
//!
//! Periods are 1-based in the file and 0-based in the library. Relative
//! paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use eqforward::{
    load_profile, load_scenarios, AgentKind, AgentSpec, ClusterStat, ContractSpec, Formulation,
    LoadOptions, MarketConfig, ProfileSet, RiskParams, ScenarioFormat, ScenarioSet, StageSpec,
    TreeTopologySpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_ALPHA: f64 = 0.95;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: PathBuf,
    #[serde(default)]
    pub allow_negative_spot: bool,
    /// Confidence level for agents without their own `alpha`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub agents: Vec<AgentEntry>,
    pub contract: ContractEntry,
    #[serde(default)]
    pub tree: Option<TreeEntry>,
    /// Contract priced at tree nodes; defaults to `contract`.
    #[serde(default)]
    pub target: Option<ContractEntry>,
    #[serde(default)]
    pub oracle: Option<OracleEntry>,
    #[serde(default)]
    pub grid: Option<GridEntry>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub formulation: Formulation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub kind: AgentKind,
    pub lambda: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// CSV with `scenario,period,quantity` rows.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    /// Same volume in every period and scenario, instead of a profile file.
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub q_max: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractEntry {
    pub periods: Vec<usize>,
    #[serde(default)]
    pub shape: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeEntry {
    pub stages: Vec<StageEntry>,
    #[serde(default)]
    pub cluster_stat: ClusterStat,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub periods: Vec<usize>,
    pub branching: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleEntry {
    pub p_lo: f64,
    pub p_hi: f64,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
}

fn default_oracle_tol() -> f64 {
    1e-6
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// Risk parameters actually applied to one agent, for the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct AppliedRisk {
    pub id: String,
    pub lambda: f64,
    pub alpha: f64,
}

pub struct Loaded {
    pub raw: RunConfig,
    pub base_dir: PathBuf,
    /// Raw bytes of the config file, hashed into the manifest.
    pub bytes: Vec<u8>,
    /// Every referenced input file with its bytes.
    pub inputs: Vec<(PathBuf, Vec<u8>)>,
    pub market: MarketConfig,
    pub risk: Vec<AppliedRisk>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn contract(entry: &ContractEntry, field: &str) -> Result<ContractSpec, CliError> {
    if let Some(&p) = entry.periods.iter().find(|&&p| p == 0) {
        return Err(config_err(format!(
            "{field}.periods: periods are 1-based, got {p}"
        )));
    }
    let periods = entry.periods.iter().map(|p| p - 1).collect();
    let c = match &entry.shape {
        Some(shape) => ContractSpec::new(periods, shape.clone()),
        None => ContractSpec::flat(periods),
    };
    c.map_err(|e| config_err(format!("{field}: {e}")))
}

fn check_unit(value: f64, field: &str, closed: bool) -> Result<(), CliError> {
    let ok = if closed {
        (0.0..=1.0).contains(&value)
    } else {
        (0.0..1.0).contains(&value)
    };
    if ok {
        Ok(())
    } else {
        let range = if closed { "[0, 1]" } else { "[0, 1)" };
        Err(config_err(format!(
            "{field}: must lie in {range}, got {value}"
        )))
    }
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes =
            std::fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let raw: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let mut inputs = Vec::new();
        let mut read_input = |p: &Path, field: &str| -> Result<PathBuf, CliError> {
            let full = resolve(p);
            let data = std::fs::read(&full)
                .map_err(|e| config_err(format!("{field}: {}: {e}", full.display())))?;
            inputs.push((full.clone(), data));
            Ok(full)
        };

        let default_alpha = raw.alpha.unwrap_or(DEFAULT_ALPHA);
        check_unit(default_alpha, "alpha", false)?;
        let scen_path = read_input(&raw.scenarios, "scenarios")?;
        let opts = LoadOptions {
            allow_negative: raw.allow_negative_spot,
        };
        let scenarios = load_scenarios(&scen_path, ScenarioFormat::from_path(&scen_path), opts)
            .map_err(|e| config_err(format!("scenarios: {e}")))?;

        let mut seen = HashSet::new();
        let mut agents = Vec::new();
        let mut risk = Vec::new();
        for (i, a) in raw.agents.iter().enumerate() {
            let field = format!("agents[{i}]");
            if !seen.insert(a.id.as_str()) {
                return Err(config_err(format!(
                    "{field}.id: duplicate agent id {:?}",
                    a.id
                )));
            }
            check_unit(a.lambda, &format!("{field}.lambda"), true)?;
            let alpha = a.alpha.unwrap_or(default_alpha);
            check_unit(alpha, &format!("{field}.alpha"), false)?;
            let params = RiskParams::new(a.lambda, alpha)
                .map_err(|e| config_err(format!("{field}: {e}")))?;
            let profile = match (a.kind, &a.profile, a.constant) {
                (AgentKind::Trader, None, None) => None,
                (AgentKind::Trader, _, _) => {
                    return Err(config_err(format!(
                        "{field}: traders carry no volume profile"
                    )));
                }
                (_, Some(_), Some(_)) => {
                    return Err(config_err(format!(
                        "{field}: give either profile or constant, not both"
                    )));
                }
                (_, Some(p), None) => {
                    let full = read_input(p, &format!("{field}.profile"))?;
                    Some(
                        load_profile(&full, &a.id, &scenarios)
                            .map_err(|e| config_err(format!("{field}.profile: {e}")))?,
                    )
                }
                (_, None, Some(v)) => Some(
                    ProfileSet::constant(&a.id, &scenarios, v)
                        .map_err(|e| config_err(format!("{field}.constant: {e}")))?,
                ),
                (_, None, None) => {
                    return Err(config_err(format!(
                        "{field}: generators and loads need profile or constant"
                    )));
                }
            };
            let mut spec = match (a.kind, profile) {
                (AgentKind::Generator, Some(p)) => AgentSpec::generator(&a.id, params, p),
                (AgentKind::Load, Some(p)) => AgentSpec::load(&a.id, params, p),
                (AgentKind::Trader, _) => {
                    let cap = a.q_max.ok_or_else(|| {
                        config_err(format!("{field}.q_max: traders need a position cap"))
                    })?;
                    AgentSpec::trader(&a.id, params, cap)
                }
                _ => unreachable!("profile presence checked above"),
            };
            if let (Some(cap), false) = (a.q_max, a.kind == AgentKind::Trader) {
                spec = spec.with_cap(cap);
            }
            spec.validate(&scenarios)
                .map_err(|e| config_err(format!("{field}: {e}")))?;
            risk.push(AppliedRisk {
                id: a.id.clone(),
                lambda: a.lambda,
                alpha,
            });
            agents.push(spec);
        }
        let c = contract(&raw.contract, "contract")?;
        let market =
            MarketConfig::new(agents, scenarios, c).map_err(|e| config_err(e.to_string()))?;
        if let Some(t) = &raw.target {
            contract(t, "target")?
                .validate_against(market.scenarios())
                .map_err(|e| config_err(format!("target: {e}")))?;
        }
        Ok(Self {
            raw,
            base_dir,
            bytes,
            inputs,
            market,
            risk,
        })
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.raw.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) if p.is_absolute() => p.clone(),
            (None, Some(p)) => self.base_dir.join(p),
            (None, None) => PathBuf::from("out"),
        }
    }

    pub fn topology(&self) -> Result<TreeTopologySpec, CliError> {
        let t = self
            .raw
            .tree
            .as_ref()
            .ok_or_else(|| config_err("tree: this command needs a tree specification"))?;
        let mut stages = Vec::new();
        for (i, st) in t.stages.iter().enumerate() {
            if st.periods.contains(&0) {
                return Err(config_err(format!(
                    "tree.stages[{i}].periods: periods are 1-based"
                )));
            }
            stages.push(StageSpec {
                periods: st.periods.iter().map(|p| p - 1).collect(),
                branching: st.branching,
            });
        }
        Ok(TreeTopologySpec {
            stages,
            cluster_stat: t.cluster_stat.clone(),
        })
    }

    pub fn target(&self) -> Result<ContractSpec, CliError> {
        match &self.raw.target {
            Some(t) => contract(t, "target"),
            None => Ok(self.market.contract().clone()),
        }
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        self.market.scenarios()
    }
}

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eqforward::agents::FACE_TOL;
use eqforward::equilibrium::{BRACKET_EPS, DEGENERATE_WIDTH};
use eqforward::tree::{check_target, NodePrice, NodeStatus};
use eqforward::{
    build_tree, check_kkt, contract_value_distribution, forward_price_lattice, price_distribution,
    price_sweep_oracle, solve_equilibrium_with, supply_demand_curves, ContractSpec,
    ForwardPriceLattice, ResponseStatus, ScenarioTree, Side, SolveOptions,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use config::Loaded;
use output::{num, Writer};

const KKT_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Model(eqforward::Error),
    CheckFailed(String),
}

impl From<eqforward::Error> for CliError {
    fn from(e: eqforward::Error) -> Self {
        CliError::Model(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use eqforward::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::CheckFailed(_) => 5,
            CliError::Model(e) => match e {
                E::Unbounded(_) | E::Infeasible(_) => 3,
                E::Solver(_) | E::IterationLimit(_) | E::NoBracket { .. } => 4,
                E::Io(_) => 1,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "eqforward",
    version,
    about = "Forward contract prices from risk-averse market equilibria"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Sell,
    Buy,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium price, quantity and allocations.
    Price(Common),
    /// Aggregate supply and demand over a price grid.
    Curves {
        #[command(flatten)]
        common: Common,
        /// Price grid as lo:hi:steps.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Forward prices at every node of the scenario tree.
    Tree(Common),
    /// Value distribution of an existing contract at a tree stage.
    Value {
        #[command(flatten)]
        common: Common,
        /// Price at which the contract was struck.
        #[arg(long, allow_negative_numbers = true)]
        established: f64,
        #[arg(long, value_enum, default_value = "sell")]
        side: SideArg,
        /// Tree stage; defaults to the last one.
        #[arg(long)]
        stage: Option<usize>,
        /// Lattice written by `tree`, used instead of re-solving.
        #[arg(long)]
        lattice: Option<PathBuf>,
    },
    /// KKT residuals of the equilibrium; exits 5 if any exceeds 1e-6.
    Check(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eqforward: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Price(c) => cmd_price(&c),
        Command::Curves { common, grid } => cmd_curves(&common, grid.as_deref()),
        Command::Tree(c) => cmd_tree(&c),
        Command::Value {
            common,
            established,
            side,
            stage,
            lattice,
        } => {
            let side = match side {
                SideArg::Sell => Side::Sell,
                SideArg::Buy => Side::Buy,
            };
            cmd_value(&common, established, side, stage, lattice.as_deref())
        }
        Command::Check(c) => cmd_check(&c),
    }
}

fn open(c: &Common) -> Result<(Loaded, Writer), CliError> {
    let cfg = Loaded::read(&c.config)?;
    let w = Writer::new(&cfg.output_dir(c.out.as_deref()))?;
    Ok((cfg, w))
}

fn solve_options(cfg: &Loaded) -> SolveOptions {
    SolveOptions {
        formulation: cfg.raw.formulation,
    }
}

fn equilibrium_tolerances() -> serde_json::Value {
    json!({
        "degenerate_width": DEGENERATE_WIDTH,
        "bracket_eps": BRACKET_EPS,
        "face_tol": FACE_TOL,
    })
}

fn cmd_price(c: &Common) -> Result<(), CliError> {
    let (cfg, mut w) = open(c)?;
    let res = solve_equilibrium_with(&cfg.market, &solve_options(&cfg))?;
    w.json("result.json", &res)?;
    w.manifest("price", &cfg, equilibrium_tolerances())?;
    println!(
        "price {} quantity {} status {}",
        num(res.price),
        num(res.quantity),
        output::to_json(&res.status)?.as_str().unwrap_or_default()
    );
    Ok(())
}

fn parse_grid(text: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::Config(format!("--grid: expected lo:hi:steps, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, steps] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi, steps))
}

fn cmd_curves(c: &Common, grid: Option<&str>) -> Result<(), CliError> {
    let (cfg, mut w) = open(c)?;
    let (lo, hi, steps) = match (grid, cfg.raw.grid) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(g)) => (g.lo, g.hi, g.steps),
        (None, None) => {
            return Err(CliError::Config(
                "grid: pass --grid lo:hi:steps or set grid in the config".into(),
            ))
        }
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 2 {
        return Err(CliError::Config(format!(
            "grid: need finite lo < hi and at least 2 steps, got {lo}:{hi}:{steps}"
        )));
    }
    let prices: Vec<f64> = (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect();
    let m = &cfg.market;
    let pts = supply_demand_curves(m.agents(), m.scenarios(), m.contract(), &prices)?;
    let status = |s: ResponseStatus| match s {
        ResponseStatus::Optimal => "optimal",
        ResponseStatus::Unbounded => "unbounded",
    };
    let rows = pts
        .iter()
        .map(|p| {
            vec![
                num(p.price),
                num(p.supply),
                num(p.demand),
                status(p.supply_status).into(),
                status(p.demand_status).into(),
            ]
        })
        .collect();
    w.csv(
        "curves.csv",
        &[
            "price",
            "supply",
            "demand",
            "supply_status",
            "demand_status",
        ],
        rows,
    )?;
    w.manifest("curves", &cfg, json!({"face_tol": FACE_TOL}))?;
    Ok(())
}

/// On-disk lattice: 1-based periods and trajectory indices.
#[derive(Serialize, Deserialize)]
struct LatticeFile {
    target: ContractFile,
    num_scenarios: usize,
    num_stages: usize,
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
struct ContractFile {
    periods: Vec<usize>,
    shape: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    id: usize,
    stage: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    members: Vec<usize>,
    prob_from_parent: f64,
    path_prob: f64,
    price: Option<f64>,
    quantity: Option<f64>,
    status: String,
}

impl LatticeFile {
    fn from_lattice(lat: &ForwardPriceLattice) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            target: ContractFile {
                periods: lat
                    .target
                    .delivery_periods()
                    .iter()
                    .map(|p| p + 1)
                    .collect(),
                shape: lat.target.shape().to_vec(),
            },
            num_scenarios: lat.tree.num_scenarios,
            num_stages: lat.tree.num_stages,
            nodes: lat
                .tree
                .nodes
                .iter()
                .zip(&lat.nodes)
                .map(|(n, p)| NodeFile {
                    id: n.id,
                    stage: n.stage,
                    parent: n.parent,
                    children: n.children.clone(),
                    members: n.members.iter().map(|k| k + 1).collect(),
                    prob_from_parent: n.prob_from_parent,
                    path_prob: n.path_prob,
                    price: finite(p.price),
                    quantity: finite(p.quantity),
                    status: p.status.label(),
                })
                .collect(),
        }
    }

    fn into_lattice(self) -> Result<ForwardPriceLattice, CliError> {
        let bad = |m: String| CliError::Config(format!("lattice: {m}"));
        if self.target.periods.contains(&0) {
            return Err(bad("periods are 1-based".into()));
        }
        let target = ContractSpec::new(
            self.target.periods.iter().map(|p| p - 1).collect(),
            self.target.shape,
        )
        .map_err(|e| bad(e.to_string()))?;
        let mut tree_nodes = Vec::new();
        let mut prices = Vec::new();
        for (i, n) in self.nodes.into_iter().enumerate() {
            if n.id != i || n.members.contains(&0) {
                return Err(bad(format!(
                    "node {i} is out of order or uses 0-based members"
                )));
            }
            prices.push(NodePrice {
                price: n.price.unwrap_or(f64::NAN),
                quantity: n.quantity.unwrap_or(f64::NAN),
                status: NodeStatus::Given,
            });
            tree_nodes.push(eqforward::tree::TreeNode {
                id: n.id,
                stage: n.stage,
                parent: n.parent,
                children: n.children,
                members: n.members.iter().map(|k| k - 1).collect(),
                prob_from_parent: n.prob_from_parent,
                path_prob: n.path_prob,
            });
        }
        let tree = ScenarioTree {
            nodes: tree_nodes,
            num_scenarios: self.num_scenarios,
            num_stages: self.num_stages,
        };
        Ok(ForwardPriceLattice {
            tree,
            target,
            nodes: prices,
        })
    }
}

fn solve_lattice(cfg: &Loaded) -> Result<ForwardPriceLattice, CliError> {
    let spec = cfg.topology()?;
    let target = cfg.target()?;
    check_target(&spec, &target).map_err(|e| CliError::Config(e.to_string()))?;
    let tree =
        build_tree(cfg.scenarios(), &spec).map_err(|e| CliError::Config(format!("tree: {e}")))?;
    let lat = forward_price_lattice(&tree, &cfg.market, &target)?;
    for (n, p) in lat.tree.nodes.iter().zip(&lat.nodes) {
        if let NodeStatus::Failed(msg) = &p.status {
            eprintln!("eqforward: node {} (stage {}) failed: {msg}", n.id, n.stage);
        }
    }
    Ok(lat)
}

fn cmd_tree(c: &Common) -> Result<(), CliError> {
    let (cfg, mut w) = open(c)?;
    let lat = solve_lattice(&cfg)?;
    w.json("lattice.json", &LatticeFile::from_lattice(&lat))?;
    let mut rows = Vec::new();
    for stage in 0..=lat.tree.num_stages {
        for d in price_distribution(&lat, stage)? {
            rows.push(vec![
                stage.to_string(),
                d.node.to_string(),
                num(d.price),
                num(d.probability),
                lat.nodes[d.node].status.label(),
            ]);
        }
    }
    w.csv(
        "distribution.csv",
        &["stage", "node", "price", "probability", "status"],
        rows,
    )?;
    w.manifest("tree", &cfg, equilibrium_tolerances())?;
    Ok(())
}

fn read_lattice(path: &Path) -> Result<ForwardPriceLattice, CliError> {
    let text = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("lattice: {}: {e}", path.display())))?;
    let file: LatticeFile = serde_json::from_slice(&text)
        .map_err(|e| CliError::Config(format!("lattice: {}: {e}", path.display())))?;
    file.into_lattice()
}

fn cmd_value(
    c: &Common,
    established: f64,
    side: Side,
    stage: Option<usize>,
    lattice: Option<&Path>,
) -> Result<(), CliError> {
    let (cfg, mut w) = open(c)?;
    if !established.is_finite() {
        return Err(CliError::Config(format!(
            "--established: must be finite, got {established}"
        )));
    }
    let lat = match lattice {
        Some(p) => read_lattice(p)?,
        None => solve_lattice(&cfg)?,
    };
    let stage = stage.unwrap_or(lat.tree.num_stages);
    let dist = contract_value_distribution(&lat, established, side, stage)
        .map_err(|e| CliError::Config(format!("--stage: {e}")))?;
    let rows = dist
        .iter()
        .map(|v| {
            vec![
                v.node.to_string(),
                num(v.price),
                num(v.value),
                num(v.probability),
            ]
        })
        .collect();
    w.csv(
        "value.csv",
        &["node", "price", "value", "probability"],
        rows,
    )?;
    w.manifest("value", &cfg, equilibrium_tolerances())?;
    Ok(())
}

fn cmd_check(c: &Common) -> Result<(), CliError> {
    let (cfg, mut w) = open(c)?;
    let res = solve_equilibrium_with(&cfg.market, &solve_options(&cfg))?;
    let rep = check_kkt(&cfg.market, &res);
    let oracle = match cfg.raw.oracle {
        Some(o) => {
            let sweep = price_sweep_oracle(&cfg.market, o.p_lo, o.p_hi, o.tol)?;
            let gap = (sweep.price - res.price).abs();
            Some(json!({
                "settings": o,
                "price": sweep.price,
                "quantity": sweep.quantity,
                "iterations": sweep.iterations,
                "gap": gap,
            }))
        }
        None => None,
    };
    let passed = rep.passes(KKT_TOL);
    w.json(
        "kkt.json",
        &json!({
            "price": res.price,
            "status": res.status,
            "tolerance": KKT_TOL,
            "passed": passed,
            "report": rep,
            "oracle": oracle,
        }),
    )?;
    let mut tol = equilibrium_tolerances();
    tol["kkt"] = json!(KKT_TOL);
    if let Some(o) = cfg.raw.oracle {
        tol["oracle"] = json!(o.tol);
    }
    w.manifest("check", &cfg, tol)?;
    println!("max residual {}", num(rep.max_residual()));
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "max KKT residual {} exceeds {KKT_TOL}",
            num(rep.max_residual())
        )))
    }
}

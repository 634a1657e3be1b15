//! Discrete uncertainty model: equally likely spot-price trajectories,
//! per-agent physical profiles, and contract delivery shapes.
//!
//! Matrices are stored period-major: entry `(m, k)` lives at `m * K + k`.
//! Periods and scenarios are dense and zero-based internally; files use
//! one-based indices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the uniform-probability check on ingestion.
const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    num_scenarios: usize,
    num_periods: usize,
    spot: Vec<f64>,
    period_labels: Vec<String>,
}

impl ScenarioSet {
    /// Builds a set from one spot row per period (each row has K entries).
    pub fn from_periods(
        period_labels: Vec<String>,
        rows: Vec<Vec<f64>>,
        allow_negative: bool,
    ) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Dimension("at least one period is required".into()));
        }
        let k = rows[0].len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(
                "every period must have the same number of scenarios".into(),
            ));
        }
        Self::from_matrix(m, k, rows.concat(), period_labels, allow_negative)
    }

    pub fn from_matrix(
        num_periods: usize,
        num_scenarios: usize,
        spot: Vec<f64>,
        period_labels: Vec<String>,
        allow_negative: bool,
    ) -> Result<Self> {
        if num_periods == 0 || num_scenarios == 0 {
            return Err(Error::Dimension(format!(
                "need K >= 1 and M >= 1, got K={num_scenarios}, M={num_periods}"
            )));
        }
        if spot.len() != num_periods * num_scenarios {
            return Err(Error::Dimension(format!(
                "spot matrix has {} entries, expected {}",
                spot.len(),
                num_periods * num_scenarios
            )));
        }
        if period_labels.len() != num_periods {
            return Err(Error::Dimension(format!(
                "{} period labels for {num_periods} periods",
                period_labels.len()
            )));
        }
        for (idx, &v) in spot.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Value(format!(
                    "non-finite spot price at scenario {}, period {}",
                    idx % num_scenarios + 1,
                    idx / num_scenarios + 1
                )));
            }
            if v < 0.0 && !allow_negative {
                return Err(Error::Value(format!(
                    "negative spot price {v} at scenario {}, period {} (negative prices are not enabled)",
                    idx % num_scenarios + 1,
                    idx / num_scenarios + 1
                )));
            }
        }
        Ok(Self {
            num_scenarios,
            num_periods,
            spot,
            period_labels,
        })
    }

    pub fn num_scenarios(&self) -> usize {
        self.num_scenarios
    }

    pub fn num_periods(&self) -> usize {
        self.num_periods
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn probability(&self) -> f64 {
        1.0 / self.num_scenarios as f64
    }

    pub fn spot(&self, period: usize, scenario: usize) -> f64 {
        self.spot[period * self.num_scenarios + scenario]
    }

    /// Spot prices of every scenario in one period.
    pub fn period_spot(&self, period: usize) -> &[f64] {
        let k = self.num_scenarios;
        &self.spot[period * k..(period + 1) * k]
    }

    /// Restriction to a subset of trajectories, in the given order.
    pub fn subset(&self, members: &[usize]) -> Self {
        let mut spot = Vec::with_capacity(members.len() * self.num_periods);
        for m in 0..self.num_periods {
            let row = self.period_spot(m);
            spot.extend(members.iter().map(|&k| row[k]));
        }
        Self {
            num_scenarios: members.len(),
            num_periods: self.num_periods,
            spot,
            period_labels: self.period_labels.clone(),
        }
    }

    /// Applies `f` to every spot price. Used for translation/scaling checks.
    pub fn map_spot(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spot: self.spot.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn max_spot(&self) -> f64 {
        self.spot.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Physical energy profile (generation or load) of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSet {
    agent_id: String,
    num_periods: usize,
    num_scenarios: usize,
    quantity: Vec<f64>,
}

impl ProfileSet {
    pub fn new(
        agent_id: impl Into<String>,
        num_periods: usize,
        num_scenarios: usize,
        quantity: Vec<f64>,
    ) -> Result<Self> {
        let agent_id = agent_id.into();
        if quantity.len() != num_periods * num_scenarios {
            return Err(Error::Dimension(format!(
                "profile {agent_id} has {} entries, expected {}",
                quantity.len(),
                num_periods * num_scenarios
            )));
        }
        if let Some(v) = quantity.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Value(format!(
                "profile {agent_id} has invalid quantity {v}"
            )));
        }
        Ok(Self {
            agent_id,
            num_periods,
            num_scenarios,
            quantity,
        })
    }

    pub fn constant(agent_id: impl Into<String>, s: &ScenarioSet, value: f64) -> Result<Self> {
        let n = s.num_periods() * s.num_scenarios();
        Self::new(agent_id, s.num_periods(), s.num_scenarios(), vec![value; n])
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn quantity(&self, period: usize, scenario: usize) -> f64 {
        self.quantity[period * self.num_scenarios + scenario]
    }

    pub fn matches(&self, s: &ScenarioSet) -> bool {
        self.num_periods == s.num_periods() && self.num_scenarios == s.num_scenarios()
    }

    pub fn subset(&self, members: &[usize]) -> Self {
        let mut quantity = Vec::with_capacity(members.len() * self.num_periods);
        for m in 0..self.num_periods {
            let row = &self.quantity[m * self.num_scenarios..(m + 1) * self.num_scenarios];
            quantity.extend(members.iter().map(|&k| row[k]));
        }
        Self {
            agent_id: self.agent_id.clone(),
            num_periods: self.num_periods,
            num_scenarios: members.len(),
            quantity,
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.agent_id.clone(),
            self.num_periods,
            self.num_scenarios,
            self.quantity.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Contract delivery periods (zero-based, strictly increasing) and the
/// nonnegative shape applied to the reference quantity in each of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    delivery_periods: Vec<usize>,
    shape: Vec<f64>,
}

impl ContractSpec {
    pub fn new(delivery_periods: Vec<usize>, shape: Vec<f64>) -> Result<Self> {
        if delivery_periods.is_empty() {
            return Err(Error::Value(
                "contract needs at least one delivery period".into(),
            ));
        }
        if delivery_periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Value(
                "delivery periods must be strictly increasing".into(),
            ));
        }
        if shape.len() != delivery_periods.len() {
            return Err(Error::Dimension(format!(
                "shape has {} entries for {} delivery periods",
                shape.len(),
                delivery_periods.len()
            )));
        }
        if shape.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Value(
                "shape entries must be finite and nonnegative".into(),
            ));
        }
        if !shape.iter().any(|&v| v > 0.0) {
            return Err(Error::Value(
                "shape needs at least one strictly positive entry".into(),
            ));
        }
        Ok(Self {
            delivery_periods,
            shape,
        })
    }

    /// Flat unit shape over the given periods.
    pub fn flat(delivery_periods: Vec<usize>) -> Result<Self> {
        let n = delivery_periods.len();
        Self::new(delivery_periods, vec![1.0; n])
    }

    pub fn delivery_periods(&self) -> &[usize] {
        &self.delivery_periods
    }

    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    pub fn total_shape(&self) -> f64 {
        self.shape.iter().sum()
    }

    pub fn validate_against(&self, s: &ScenarioSet) -> Result<()> {
        match self.delivery_periods.last() {
            Some(&last) if last < s.num_periods() => Ok(()),
            _ => Err(Error::Value(format!(
                "delivery period {} outside 1..={}",
                self.delivery_periods.last().map_or(0, |p| p + 1),
                s.num_periods()
            ))),
        }
    }

    /// Shape-weighted spot of one scenario, `Σ_m v_m π_{m,k}`.
    pub fn weighted_spot(&self, s: &ScenarioSet, scenario: usize) -> f64 {
        self.delivery_periods
            .iter()
            .zip(&self.shape)
            .map(|(&m, &v)| v * s.spot(m, scenario))
            .sum()
    }
}

/// `Σ_k Σ_m v_m π_{m,k} / (K Σ_m v_m)`: the flat price a risk-neutral agent
/// accepts for the contract.
pub fn shape_weighted_mean_spot(s: &ScenarioSet, c: &ContractSpec) -> Result<f64> {
    c.validate_against(s)?;
    let k = s.num_scenarios();
    let total: f64 = (0..k).map(|j| c.weighted_spot(s, j)).sum();
    Ok(total / (k as f64 * c.total_shape()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioFormat {
    Csv,
    Json,
}

impl ScenarioFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ScenarioFormat::Json,
            _ => ScenarioFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub allow_negative: bool,
}

pub fn load_scenarios(
    path: &Path,
    format: ScenarioFormat,
    opts: LoadOptions,
) -> Result<ScenarioSet> {
    let text = fs::read_to_string(path)?;
    match format {
        ScenarioFormat::Csv => parse_scenarios_csv(&text, opts),
        ScenarioFormat::Json => parse_scenarios_json(&text, opts),
    }
}

/// Comment lines of the form `# periods: a,b,c` declare period labels in
/// period order.
fn header_labels(text: &str) -> Option<Vec<String>> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty())
        .filter_map(|l| {
            let body = l.trim_start().trim_start_matches('#').trim();
            body.strip_prefix("periods:")
                .or_else(|| body.strip_prefix("periods="))
        })
        .map(|rest| rest.split(',').map(|s| s.trim().to_string()).collect())
        .next()
}

struct Grid {
    labels: Vec<String>,
    num_scenarios: usize,
    cells: BTreeMap<(usize, usize), f64>,
}

/// Reads `scenario,period,<value>` rows into a dense grid keyed by dense
/// (period, scenario) indices.
fn read_grid(text: &str, value_col: &str) -> Result<Grid> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::parse(Some(1), format!("missing column '{name}'")))
    };
    let (ci, pi, vi) = (col("scenario")?, col("period")?, col(value_col)?);

    let mut raw: Vec<(usize, i64, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::parse(e.position().map(|p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize);
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::parse(line, "short row"));
        let scenario: usize = field(ci)?.parse().map_err(|_| {
            Error::parse(
                line,
                format!("bad scenario index '{}'", rec.get(ci).unwrap_or("")),
            )
        })?;
        let period: i64 = field(pi)?.parse().map_err(|_| {
            Error::parse(line, format!("bad period '{}'", rec.get(pi).unwrap_or("")))
        })?;
        let value: f64 = field(vi)?.parse().map_err(|_| {
            Error::parse(
                line,
                format!("bad {value_col} value '{}'", rec.get(vi).unwrap_or("")),
            )
        })?;
        if scenario == 0 {
            return Err(Error::parse(line, "scenario indices are 1-based"));
        }
        raw.push((scenario, period, value));
    }
    if raw.is_empty() {
        return Err(Error::Dimension("no data rows".into()));
    }
    let periods: BTreeSet<i64> = raw.iter().map(|r| r.1).collect();
    let num_scenarios = raw.iter().map(|r| r.0).max().unwrap_or(0);
    let period_index: BTreeMap<i64, usize> =
        periods.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut cells = BTreeMap::new();
    for &(k, p, v) in &raw {
        if cells.insert((period_index[&p], k - 1), v).is_some() {
            return Err(Error::Dimension(format!(
                "duplicate cell for scenario {k}, period {p}"
            )));
        }
    }
    for (&p, &m) in &period_index {
        for k in 0..num_scenarios {
            if !cells.contains_key(&(m, k)) {
                return Err(Error::Dimension(format!(
                    "missing cell for scenario {}, period {p}",
                    k + 1
                )));
            }
        }
    }
    let labels = match header_labels(text) {
        Some(l) if l.len() == periods.len() => l,
        Some(l) => {
            return Err(Error::Dimension(format!(
                "header declares {} period labels but data has {} periods",
                l.len(),
                periods.len()
            )))
        }
        None => periods.iter().map(|p| p.to_string()).collect(),
    };
    Ok(Grid {
        labels,
        num_scenarios,
        cells,
    })
}

pub fn parse_scenarios_csv(text: &str, opts: LoadOptions) -> Result<ScenarioSet> {
    let grid = read_grid(text, "spot")?;
    check_uniform(text, grid.num_scenarios)?;
    let m = grid.labels.len();
    let spot: Vec<f64> = grid.cells.values().copied().collect();
    ScenarioSet::from_matrix(
        m,
        grid.num_scenarios,
        spot,
        grid.labels,
        opts.allow_negative,
    )
}

/// Trajectories must be equally likely; an explicit probability column is
/// accepted only when every entry equals 1/K.
fn check_uniform(text: &str, k: usize) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .clone();
    let Some(pc) = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("probability"))
    else {
        return Ok(());
    };
    let expected = 1.0 / k as f64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(None, e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize);
        let p: f64 = rec
            .get(pc)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(line, "bad probability"))?;
        if (p - expected).abs() > PROB_TOL {
            return Err(Error::Value(format!(
                "scenario probabilities must be uniform (1/{k}), found {p}"
            )));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonScenarios {
    periods: Vec<serde_json::Value>,
    scenarios: Vec<Vec<f64>>,
}

/// JSON layout: `periods` holds M labels; `scenarios` holds one array per
/// trajectory with its M spot prices in period order.
pub fn parse_scenarios_json(text: &str, opts: LoadOptions) -> Result<ScenarioSet> {
    let doc: JsonScenarios =
        serde_json::from_str(text).map_err(|e| Error::parse(Some(e.line()), e.to_string()))?;
    let m = doc.periods.len();
    let k = doc.scenarios.len();
    if let Some((i, row)) = doc.scenarios.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Dimension(format!(
            "scenario {} has {} spot values for {m} periods",
            i + 1,
            row.len()
        )));
    }
    let labels = doc
        .periods
        .iter()
        .map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .collect();
    let mut spot = Vec::with_capacity(m * k);
    for p in 0..m {
        spot.extend(doc.scenarios.iter().map(|row| row[p]));
    }
    ScenarioSet::from_matrix(m, k, spot, labels, opts.allow_negative)
}

fn default_labels(m: usize) -> Vec<String> {
    (1..=m).map(|p| p.to_string()).collect()
}

/// Writes `scenario,period,spot` rows. Values use the shortest exact
/// decimal representation, so reading the file back is bit-exact.
pub fn write_scenarios_csv<W: Write>(s: &ScenarioSet, mut w: W) -> Result<()> {
    if s.period_labels != default_labels(s.num_periods) {
        writeln!(w, "# periods: {}", s.period_labels.join(","))?;
    }
    writeln!(w, "scenario,period,spot")?;
    for k in 0..s.num_scenarios {
        for m in 0..s.num_periods {
            writeln!(w, "{},{},{}", k + 1, m + 1, s.spot(m, k))?;
        }
    }
    Ok(())
}

pub fn write_scenarios_json<W: Write>(s: &ScenarioSet, w: W) -> Result<()> {
    let doc = serde_json::json!({
        "periods": s.period_labels,
        "scenarios": (0..s.num_scenarios)
            .map(|k| (0..s.num_periods).map(|m| s.spot(m, k)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    serde_json::to_writer(w, &doc).map_err(|e| Error::Io(e.into()))
}

/// Loads `scenario,period,quantity` rows for one agent and checks them
/// against the owning scenario set.
pub fn load_profile(path: &Path, agent_id: &str, s: &ScenarioSet) -> Result<ProfileSet> {
    let text = fs::read_to_string(path)?;
    parse_profile_csv(&text, agent_id, s)
}

pub fn parse_profile_csv(text: &str, agent_id: &str, s: &ScenarioSet) -> Result<ProfileSet> {
    let grid = read_grid(text, "quantity")?;
    if grid.labels.len() != s.num_periods() || grid.num_scenarios != s.num_scenarios() {
        return Err(Error::Dimension(format!(
            "profile for {agent_id} is {}x{} (periods x scenarios), scenario set is {}x{}",
            grid.labels.len(),
            grid.num_scenarios,
            s.num_periods(),
            s.num_scenarios()
        )));
    }
    ProfileSet::new(
        agent_id,
        s.num_periods(),
        s.num_scenarios(),
        grid.cells.values().copied().collect(),
    )
}

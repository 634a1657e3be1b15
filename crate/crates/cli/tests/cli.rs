use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eqforward"))
}

struct Case {
    dir: TempDir,
}

impl Case {
    /// Writes a scenario CSV (one row per scenario and period) and the
    /// given config into a fresh directory.
    fn new(spots: &[Vec<f64>], config: Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("scenario,period,spot\n");
        for (k, row) in spots.iter().enumerate() {
            for (m, v) in row.iter().enumerate() {
                text.push_str(&format!("{},{},{v}\n", k + 1, m + 1));
            }
        }
        std::fs::write(dir.path().join("scenarios.csv"), text).unwrap();
        std::fs::write(
            dir.path().join("config.json"),
            serde_json::to_vec_pretty(&config).unwrap(),
        )
        .unwrap();
        Case { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        bin()
            .arg(cmd)
            .arg("--config")
            .arg(self.path("config.json"))
            .arg("--out")
            .arg(self.path("out"))
            .args(extra)
            .output()
            .unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.path("out").join(name)).unwrap()).unwrap()
    }

    fn csv(&self, name: &str) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(self.path("out").join(name)).unwrap();
        r.records()
            .map(|r| r.unwrap().iter().map(String::from).collect())
            .collect()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn two_agent(lg: f64, ld: f64) -> Value {
    json!({
        "scenarios": "scenarios.csv",
        "alpha": 0.5,
        "agents": [
            {"id": "gen", "kind": "generator", "lambda": lg, "constant": 1.0},
            {"id": "load", "kind": "load", "lambda": ld, "constant": 1.0}
        ],
        "contract": {"periods": [1]}
    })
}

fn skewed_spots() -> Vec<Vec<f64>> {
    [12.0, 18.0, 25.0, 31.0, 40.0, 52.0, 70.0, 95.0, 140.0, 230.0]
        .iter()
        .map(|&v| vec![v])
        .collect()
}

#[test]
fn price_writes_result_and_manifest() {
    let case = Case::new(&skewed_spots(), two_agent(0.5, 0.5));
    let o = case.run("price", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = case.json("result.json");
    let bracket = r["bracket"].as_array().unwrap();
    let p = r["price"].as_f64().unwrap();
    assert!(bracket[0].as_f64().unwrap() <= p && p <= bracket[1].as_f64().unwrap());
    assert!(r["status"].is_string());
    let m = case.json("manifest.json");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["version"], json!(env!("CARGO_PKG_VERSION")));
    assert_eq!(m["agents"][0]["alpha"], json!(0.5));
    assert!(m["tolerances"]["degenerate_width"].is_number());
}

#[test]
fn risk_neutral_price_is_mean_spot() {
    let spots = skewed_spots();
    let mean = spots.iter().map(|r| r[0]).sum::<f64>() / spots.len() as f64;
    let case = Case::new(&spots, two_agent(1.0, 0.3));
    let o = case.run("price", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = case.json("result.json")["price"].as_f64().unwrap();
    assert!((p - mean).abs() <= 1e-6 * mean, "{p} vs {mean}");
}

#[test]
fn invalid_lambda_exits_2_naming_the_field() {
    let case = Case::new(&skewed_spots(), two_agent(1.5, 0.5));
    let o = case.run("price", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("agents[0].lambda"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let mut cfg = two_agent(0.5, 0.5);
    cfg["agents"][1]["id"] = json!("gen");
    let case = Case::new(&skewed_spots(), cfg);
    assert_eq!(code(&case.run("price", &[])), 2);

    let mut cfg = two_agent(0.5, 0.5);
    cfg["scenarios"] = json!("missing.csv");
    let case = Case::new(&skewed_spots(), cfg);
    assert_eq!(code(&case.run("price", &[])), 2);

    let mut cfg = two_agent(0.5, 0.5);
    cfg["contract"]["periods"] = json!([2]);
    let case = Case::new(&skewed_spots(), cfg);
    assert_eq!(code(&case.run("price", &[])), 2);

    let case = Case::new(&skewed_spots(), two_agent(0.5, 0.5));
    assert_eq!(code(&case.run("curves", &["--grid", "10:5"])), 2);
}

#[test]
fn curves_are_monotone() {
    let case = Case::new(&skewed_spots(), two_agent(0.3, 0.3));
    let o = case.run("curves", &["--grid", "0:250:26"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = case.csv("curves.csv");
    assert_eq!(rows.len(), 26);
    let col = |i: usize| {
        rows.iter()
            .map(|r| r[i].parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    let (supply, demand) = (col(1), col(2));
    assert!(supply.windows(2).all(|w| w[0] <= w[1] + 1e-9));
    assert!(demand.windows(2).all(|w| w[0] + 1e-9 >= w[1]));
}

#[test]
fn tree_without_spec_exits_2() {
    let case = Case::new(&skewed_spots(), two_agent(0.5, 0.5));
    let o = case.run("tree", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("tree"));
}

/// Four trajectories split by period 1 then period 2, so each leaf holds
/// one trajectory. Risk-neutral agents price a leaf at its own period-3
/// spot: 86, 78, 74 and 30.
fn valuation_case() -> Case {
    let spots = vec![
        vec![1.0, 1.0, 86.0],
        vec![2.0, 2.0, 78.0],
        vec![3.0, 1.0, 74.0],
        vec![4.0, 2.0, 30.0],
    ];
    let mut cfg = two_agent(1.0, 1.0);
    cfg["contract"] = json!({"periods": [3]});
    cfg["tree"] =
        json!({"stages": [{"periods": [1], "branching": 2}, {"periods": [2], "branching": 2}]});
    Case::new(&spots, cfg)
}

fn check_values(rows: &[Vec<String>]) {
    let values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(values, [-18.0, -10.0, -6.0, 38.0]);
    assert!(rows.iter().all(|r| r[3] == "0.25"));
}

#[test]
fn value_distribution_of_an_established_sale() {
    let case = valuation_case();
    let o = case.run(
        "value",
        &["--established", "68", "--side", "sell", "--stage", "2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    check_values(&case.csv("value.csv"));

    let buy = case.run("value", &["--established", "68", "--side", "buy"]);
    assert_eq!(code(&buy), 0);
    let values: Vec<f64> = case
        .csv("value.csv")
        .iter()
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(values, [18.0, 10.0, 6.0, -38.0]);
}

#[test]
fn tree_lattice_feeds_value() {
    let case = valuation_case();
    let o = case.run("tree", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lat = case.json("lattice.json");
    assert_eq!(lat["nodes"].as_array().unwrap().len(), 7);
    assert_eq!(lat["nodes"][0]["members"], json!([1, 2, 3, 4]));
    let dist = case.csv("distribution.csv");
    assert_eq!(dist.len(), 7);
    assert_eq!(dist[0][2], "67");

    let saved = case.path("lattice.json");
    std::fs::copy(case.path("out").join("lattice.json"), &saved).unwrap();
    let o = case.run(
        "value",
        &["--established", "68", "--lattice", saved.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    check_values(&case.csv("value.csv"));
}

#[test]
fn target_before_clustering_periods_is_rejected() {
    let case = valuation_case();
    let mut cfg: Value =
        serde_json::from_slice(&std::fs::read(case.path("config.json")).unwrap()).unwrap();
    cfg["target"] = json!({"periods": [1]});
    std::fs::write(case.path("config.json"), serde_json::to_vec(&cfg).unwrap()).unwrap();
    assert_eq!(code(&case.run("tree", &[])), 2);
}

#[test]
fn check_passes_on_a_regular_market() {
    let mut cfg = two_agent(0.4, 0.6);
    cfg["oracle"] = json!({"p_lo": 0.0, "p_hi": 300.0, "tol": 1e-6});
    let case = Case::new(&skewed_spots(), cfg);
    let o = case.run("check", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let k = case.json("kkt.json");
    assert_eq!(k["passed"], json!(true));
    assert!(k["report"]["conditions"]["quantity_stationarity"].is_number());
    assert!(k["oracle"]["price"].is_number());
    assert_eq!(case.json("manifest.json")["tolerances"]["kkt"], json!(1e-6));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn identical_runs_give_identical_files() {
    let case = Case::new(&skewed_spots(), two_agent(0.2, 0.7));
    for out in ["a", "b"] {
        let o = bin()
            .args(["price", "--config"])
            .arg(case.path("config.json"))
            .arg("--out")
            .arg(case.path(out))
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
    }
    for f in ["result.json", "manifest.json"] {
        assert_eq!(
            read(&case.path("a").join(f)),
            read(&case.path("b").join(f)),
            "{f}"
        );
    }
}

#[test]
fn output_dir_from_config_is_relative_to_it() {
    let mut cfg = two_agent(0.5, 0.5);
    cfg["output_dir"] = json!("results");
    let case = Case::new(&skewed_spots(), cfg);
    let o = bin()
        .args(["price", "--config"])
        .arg(case.path("config.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(case.path("results").join("result.json").exists());
}

#[test]
fn profile_files_and_traders() {
    let spots = skewed_spots();
    let case = Case::new(
        &spots,
        json!({
            "scenarios": "scenarios.csv",
            "agents": [
                {"id": "gen", "kind": "generator", "lambda": 0.5, "profile": "gen.csv"},
                {"id": "load", "kind": "load", "lambda": 0.5, "alpha": 0.8, "constant": 1.0},
                {"id": "spec", "kind": "trader", "lambda": 0.9, "q_max": 0.5}
            ],
            "contract": {"periods": [1], "shape": [2.0]}
        }),
    );
    let mut prof = String::from("scenario,period,quantity\n");
    for k in 1..=spots.len() {
        prof.push_str(&format!("{k},1,{}\n", 2.0 - 0.1 * k as f64));
    }
    std::fs::write(case.path("gen.csv"), prof).unwrap();
    let o = case.run("price", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = case.json("manifest.json");
    // the config default applies to agents without their own alpha
    assert_eq!(m["agents"][0]["alpha"], json!(0.95));
    assert_eq!(m["agents"][1]["alpha"], json!(0.8));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);

    let mut cfg: Value = serde_json::from_slice(&read(&case.path("config.json"))).unwrap();
    cfg["agents"][2].as_object_mut().unwrap().remove("q_max");
    std::fs::write(case.path("config.json"), serde_json::to_vec(&cfg).unwrap()).unwrap();
    assert_eq!(code(&case.run("price", &[])), 2);
}

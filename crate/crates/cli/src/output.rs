//! Report writers. Every number is rounded to 12 significant digits and
//! printed in its shortest round-tripping form.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Loaded;
use crate::CliError;

pub fn round12(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

/// CSV cell text; non-finite values spell out as `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    match x {
        x if x.is_nan() => "nan".into(),
        f64::INFINITY => "inf".into(),
        f64::NEG_INFINITY => "-inf".into(),
        x => format!("{}", round12(x)),
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            n.as_f64().map_or(Value::Number(n), |x| json!(round12(x)))
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect())
        }
        v => v,
    }
}

/// JSON with rounded numbers; non-finite values become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<Value, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(round_value(v))
}

pub struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(&to_json(value)?)
            .map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: Vec<Vec<String>>,
    ) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(&r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.put(name, &bytes)
    }

    /// Records what produced the outputs: hashes of the config and every
    /// input file, the tool version, tolerances, and the risk parameters
    /// applied to each agent.
    pub fn manifest(
        mut self,
        command: &str,
        cfg: &Loaded,
        tolerances: Value,
    ) -> Result<PathBuf, CliError> {
        let inputs: Vec<Value> = cfg
            .inputs
            .iter()
            .map(|(p, bytes)| json!({"path": p.display().to_string(), "sha256": sha256(bytes)}))
            .collect();
        let outputs = std::mem::take(&mut self.written);
        let manifest = json!({
            "tool": "eqforward",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_sha256": sha256(&cfg.bytes),
            "inputs": inputs,
            "formulation": cfg.raw.formulation,
            "tolerances": tolerances,
            "agents": cfg.risk,
            "outputs": outputs,
        });
        self.json("manifest.json", &manifest)
    }
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

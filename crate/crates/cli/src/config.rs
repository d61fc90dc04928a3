//! Typed access to an experiment file. Every error names the offending key.

use hwflow::measures::{CharacteristicMeasure, FlowParams};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
#[error("config error at `{key}`: {msg}")]
pub struct ConfigError {
    pub key: String,
    pub msg: String,
}

pub fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), msg: msg.into() }
}

pub const KINDS: [&str; 8] = ["flow", "npoint", "density", "relevant", "invariant", "oracle", "web", "net"];
const TOP: [&str; 8] = ["kind", "name", "seed", "drift", "nu", "flows", "run", "gates"];

#[derive(Debug, Clone)]
pub struct Config {
    pub table: Table,
    pub kind: String,
    pub name: String,
    pub seed: u64,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_default();
            bad(&key, e.message().to_string())
        })?;
        for k in table.keys() {
            if !TOP.contains(&k.as_str()) {
                return Err(bad(k, "unknown key"));
            }
        }
        let kind = table.get("kind").ok_or_else(|| bad("kind", "missing"))?;
        let kind = kind.as_str().ok_or_else(|| bad("kind", "expected a string"))?.to_string();
        if !KINDS.contains(&kind.as_str()) {
            return Err(bad("kind", format!("`{kind}` is not one of {}", KINDS.join(", "))));
        }
        let name = match table.get("name") {
            Some(v) => v.as_str().ok_or_else(|| bad("name", "expected a string"))?.to_string(),
            None => kind.clone(),
        };
        let seed = match table.get("seed") {
            Some(v) => {
                let s = v.as_integer().ok_or_else(|| bad("seed", "expected an integer"))?;
                u64::try_from(s).map_err(|_| bad("seed", "must be nonnegative"))?
            }
            None => 0,
        };
        let cfg = Self { table, kind, name, seed };
        cfg.section("run")?;
        cfg.section("gates")?;
        Ok(cfg)
    }

    fn section(&self, name: &str) -> Result<Table, ConfigError> {
        match self.table.get(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t.clone()),
            Some(_) => Err(bad(name, "expected a table")),
        }
    }

    pub fn run(&self) -> Section {
        Section { prefix: "run".into(), table: self.section("run").unwrap_or_default() }
    }

    pub fn gates(&self) -> Section {
        Section { prefix: "gates".into(), table: self.section("gates").unwrap_or_default() }
    }

    /// Flows from `[[flows]]` (each with `drift`, `nu`, optional `label`),
    /// or the single top-level `drift` and `[nu]`.
    pub fn flows(&self) -> Result<Vec<(String, FlowParams)>, ConfigError> {
        if let Some(v) = self.table.get("flows") {
            let arr = v.as_array().ok_or_else(|| bad("flows", "expected an array of tables"))?;
            return arr
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let key = format!("flows[{i}]");
                    let t = f.as_table().ok_or_else(|| bad(&key, "expected a table"))?;
                    let s = Section { prefix: key.clone(), table: t.clone() };
                    s.allow(&["drift", "nu", "label", "expect"])?;
                    let label = s.string("label", Some(&format!("flow{i}")))?;
                    Ok((label, flow_from(t, &key)?))
                })
                .collect();
        }
        Ok(vec![("flow".into(), flow_from(&self.table, "")?)])
    }

    /// The `expect` table of each `[[flows]]` entry, empty when absent.
    pub fn expectations(&self) -> Result<Vec<Section>, ConfigError> {
        let Some(Value::Array(arr)) = self.table.get("flows") else { return Ok(vec![]) };
        arr.iter()
            .enumerate()
            .map(|(i, f)| {
                let prefix = format!("flows[{i}].expect");
                match f.get("expect") {
                    None => Ok(Section { prefix, table: Table::new() }),
                    Some(Value::Table(t)) => Ok(Section { prefix, table: t.clone() }),
                    Some(_) => Err(bad(&prefix, "expected a table")),
                }
            })
            .collect()
    }

    /// Environment laws from `[[mu]]`-style arrays under `run.measures`.
    pub fn measures(&self) -> Result<Vec<CharacteristicMeasure>, ConfigError> {
        let run = self.run();
        let Some(v) = run.table.get("measures") else {
            return Err(bad("run.measures", "missing"));
        };
        let arr = v.as_array().ok_or_else(|| bad("run.measures", "expected an array of tables"))?;
        arr.iter()
            .enumerate()
            .map(|(i, m)| {
                let key = format!("run.measures[{i}]");
                let t = m.as_table().ok_or_else(|| bad(&key, "expected a table"))?;
                measure_from(t, &key)
            })
            .collect()
    }
}

fn measure_from(t: &Table, prefix: &str) -> Result<CharacteristicMeasure, ConfigError> {
    CharacteristicMeasure::from_toml(t, prefix).map_err(|e| match e {
        hwflow::Error::Parse { key, msg } => bad(&key, msg),
        other => bad(prefix, other.to_string()),
    })
}

fn flow_from(t: &Table, prefix: &str) -> Result<FlowParams, ConfigError> {
    let key = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
    let drift = match t.get("drift") {
        None => 0.0,
        Some(v) => number(v).ok_or_else(|| bad(&key("drift"), "expected a number"))?,
    };
    let nu = match t.get("nu") {
        None => CharacteristicMeasure::zero(),
        Some(Value::Table(n)) => measure_from(n, &key("nu"))?,
        Some(_) => return Err(bad(&key("nu"), "expected a table")),
    };
    FlowParams::new(drift, nu).map_err(|e| bad(&key("nu"), e.to_string()))
}

fn number(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

/// One table of the config with its dotted prefix for error messages.
#[derive(Debug, Clone)]
pub struct Section {
    pub prefix: String,
    pub table: Table,
}

impl Section {
    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.prefix)
    }

    pub fn allow(&self, keys: &[&str]) -> Result<(), ConfigError> {
        for k in self.table.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(bad(&self.key(k), "unknown key"));
            }
        }
        Ok(())
    }

    pub fn f64(&self, k: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        match self.table.get(k) {
            None => default.ok_or_else(|| bad(&self.key(k), "missing")),
            Some(v) => number(v).ok_or_else(|| bad(&self.key(k), "expected a number")),
        }
    }

    pub fn opt_f64(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        self.table.get(k).map(|v| number(v).ok_or_else(|| bad(&self.key(k), "expected a number"))).transpose()
    }

    pub fn i64(&self, k: &str, default: Option<i64>) -> Result<i64, ConfigError> {
        match self.table.get(k) {
            None => default.ok_or_else(|| bad(&self.key(k), "missing")),
            Some(v) => v.as_integer().ok_or_else(|| bad(&self.key(k), "expected an integer")),
        }
    }

    pub fn usize(&self, k: &str, default: Option<usize>) -> Result<usize, ConfigError> {
        let v = self.i64(k, default.map(|d| d as i64))?;
        usize::try_from(v).map_err(|_| bad(&self.key(k), "must be nonnegative"))
    }

    pub fn string(&self, k: &str, default: Option<&str>) -> Result<String, ConfigError> {
        match self.table.get(k) {
            None => default.map(str::to_string).ok_or_else(|| bad(&self.key(k), "missing")),
            Some(v) => v.as_str().map(str::to_string).ok_or_else(|| bad(&self.key(k), "expected a string")),
        }
    }

    pub fn f64s(&self, k: &str, default: Option<&[f64]>) -> Result<Vec<f64>, ConfigError> {
        match self.table.get(k) {
            None => default.map(<[f64]>::to_vec).ok_or_else(|| bad(&self.key(k), "missing")),
            Some(v) => {
                let arr = v.as_array().ok_or_else(|| bad(&self.key(k), "expected an array"))?;
                arr.iter()
                    .enumerate()
                    .map(|(i, x)| number(x).ok_or_else(|| bad(&format!("{}[{i}]", self.key(k)), "expected a number")))
                    .collect()
            }
        }
    }

    /// Array of integer arrays, e.g. starting configurations.
    pub fn i64_rows(&self, k: &str, default: Option<Vec<Vec<i64>>>) -> Result<Vec<Vec<i64>>, ConfigError> {
        let Some(v) = self.table.get(k) else {
            return default.ok_or_else(|| bad(&self.key(k), "missing"));
        };
        let arr = v.as_array().ok_or_else(|| bad(&self.key(k), "expected an array of arrays"))?;
        arr.iter()
            .enumerate()
            .map(|(i, row)| {
                let here = format!("{}[{i}]", self.key(k));
                let row = row.as_array().ok_or_else(|| bad(&here, "expected an array"))?;
                row.iter().map(|x| x.as_integer().ok_or_else(|| bad(&here, "expected integers"))).collect()
            })
            .collect()
    }

    /// Knots `[[x, y], ...]` of a piecewise-linear test function.
    pub fn knots(&self, k: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        let Some(v) = self.table.get(k) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| bad(&self.key(k), "expected an array of [x, y] pairs"))?;
        arr.iter()
            .enumerate()
            .map(|(i, row)| {
                let here = format!("{}[{i}]", self.key(k));
                let row = row.as_array().filter(|r| r.len() == 2).ok_or_else(|| bad(&here, "expected [x, y]"))?;
                Ok((number(&row[0]).ok_or_else(|| bad(&here, "expected numbers"))?, number(&row[1]).ok_or_else(|| bad(&here, "expected numbers"))?))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

//! Report rows, gate evaluation and the two output files.

use hwflow::estimators::familywise_z;
use hwflow::io::fmt_real;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::io::Write;

/// How a row is judged.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// `|z|` against the familywise limit of all rows sharing the family name.
    Z(&'static str),
    /// `|mean/target - 1| <= tol`.
    Rel(f64),
    /// `|mean - target| <= tol`.
    Abs(f64),
    Info,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub experiment: String,
    pub params: Map<String, Value>,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub target: Option<f64>,
    pub gate: Gate,
}

impl Row {
    pub fn new(experiment: &str, params: Value, mean: f64) -> Self {
        let params = match params {
            Value::Object(m) => m,
            other => Map::from_iter([("value".to_string(), other)]),
        };
        Self { experiment: experiment.into(), params, mean, stderr: 0.0, n: 1, target: None, gate: Gate::Info }
    }

    pub fn mc(mut self, stderr: f64, n: usize) -> Self {
        self.stderr = stderr;
        self.n = n as u64;
        self
    }

    pub fn target(mut self, t: f64, gate: Gate) -> Self {
        self.target = Some(t);
        self.gate = gate;
        self
    }

    pub fn info_target(mut self, t: f64) -> Self {
        self.target = Some(t);
        self
    }

    pub fn z(&self) -> Option<f64> {
        let t = self.target?;
        let gap = self.mean - t;
        if self.stderr > 0.0 {
            Some(gap / self.stderr)
        } else if gap == 0.0 {
            Some(0.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GateSettings {
    pub sigma: f64,
    pub familywise: bool,
}

/// Rows with their verdicts.
pub struct Judged {
    pub rows: Vec<(Row, Option<bool>, String)>,
}

impl Judged {
    pub fn new(rows: Vec<Row>, g: GateSettings) -> Self {
        let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &rows {
            if let Gate::Z(f) = r.gate {
                *sizes.entry(f).or_default() += 1;
            }
        }
        let limit = |f: &str| if g.familywise { familywise_z(g.sigma, sizes[f]) } else { g.sigma };
        let rows = rows
            .into_iter()
            .map(|r| {
                let (pass, label) = match (&r.gate, r.target) {
                    (Gate::Info, _) | (_, None) => (None, String::new()),
                    (Gate::Z(f), Some(_)) => {
                        let lim = limit(f);
                        (Some(r.z().is_some_and(|z| z.abs() <= lim)), format!("|z|<={lim:.4}"))
                    }
                    (Gate::Rel(tol), Some(t)) => (Some((r.mean / t - 1.0).abs() <= *tol), format!("rel<={tol}")),
                    (Gate::Abs(tol), Some(t)) => (Some((r.mean - t).abs() <= *tol), format!("abs<={tol:e}")),
                };
                (r, pass, label)
            })
            .collect();
        Self { rows }
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|(_, p, _)| *p == Some(false))
            .map(|(r, _, _)| format!("{} {}", r.experiment, Value::Object(r.params.clone())))
            .collect()
    }

    pub fn gated(&self) -> usize {
        self.rows.iter().filter(|(_, p, _)| p.is_some()).count()
    }

    /// `experiment,parameter_json,mean,stderr,n,target,z,gate,pass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "experiment,parameter_json,mean,stderr,n,target,z,gate,pass")?;
        for (r, pass, label) in &self.rows {
            let params = Value::Object(r.params.clone()).to_string().replace('"', "\"\"");
            let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
            let pass = match pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            writeln!(
                out,
                "{},\"{params}\",{},{},{},{},{},{label},{pass}",
                r.experiment,
                fmt_real(r.mean),
                fmt_real(r.stderr),
                r.n,
                opt(r.target),
                opt(r.z()),
            )?;
        }
        Ok(())
    }
}

pub struct ManifestInfo<'a> {
    pub config: &'a toml::Table,
    pub name: &'a str,
    pub kind: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub gates: GateSettings,
    pub enforce: bool,
    pub files: &'a [String],
}

pub fn manifest_json(m: &ManifestInfo<'_>, judged: &Judged) -> Value {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "name": m.name,
        "kind": m.kind,
        "seed": m.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp,
        "threads": m.threads,
        "config": m.config,
        "files": m.files,
        "gates": {
            "sigma": m.gates.sigma,
            "familywise": m.gates.familywise,
            "enforced": m.enforce,
            "checked": judged.gated(),
            "failed": judged.failures(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        let g = GateSettings { sigma: 3.0, familywise: false };
        let rows = vec![
            Row::new("a", json!({"k": 1}), 1.0).mc(0.1, 10).target(1.2, Gate::Z("x")),
            Row::new("b", json!({}), 1.0).target(1.5, Gate::Rel(0.1)),
            Row::new("c", json!({}), 1.0).target(1.0, Gate::Abs(0.0)),
            Row::new("d", json!({}), 7.0),
        ];
        let j = Judged::new(rows, g);
        let p: Vec<_> = j.rows.iter().map(|r| r.1).collect();
        assert_eq!(p, [Some(true), Some(false), Some(true), None]);
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("a,\"{\"\"k\"\":1}\","));
    }

    #[test]
    fn familywise_limit_grows_with_family() {
        let g = GateSettings { sigma: 3.0, familywise: true };
        let row = |m| Row::new("a", json!({}), m).mc(1.0, 10).target(0.0, Gate::Z("x"));
        let one = Judged::new(vec![row(3.1)], g);
        assert_eq!(one.rows[0].1, Some(false));
        let many = Judged::new((0..10).map(|i| row(if i == 0 { 3.1 } else { 0.0 })).collect(), g);
        assert_eq!(many.rows[0].1, Some(true));
    }
}

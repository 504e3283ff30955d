use std::fs;
use std::io::Write;

use pcvf::Result;
use serde_json::{json, Value};

use crate::{Format, RunConfig};

/// Gate outcome plus command-specific details.
pub struct Report {
    pub command: String,
    pub tolerance: f64,
    pub residual: f64,
    pub pass: bool,
    pub details: Value,
    /// Tabular rows for CSV output; flattened details are used otherwise.
    pub rows: Option<Vec<Value>>,
}

impl Report {
    pub fn new(command: &str, tolerance: f64, residual: f64, details: Value) -> Self {
        Report { command: command.into(), tolerance, residual, pass: residual <= tolerance, details, rows: None }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "tolerance": self.tolerance,
            "residual": self.residual,
            "pass": self.pass,
            "details": self.details,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| pcvf::Error::Io(std::io::Error::other(e));
        match &self.rows {
            Some(rows) if !rows.is_empty() => {
                let keys: Vec<String> = rows[0].as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
                w.write_record(&keys).map_err(err)?;
                for r in rows {
                    w.write_record(keys.iter().map(|k| scalar(&r[k]))).map_err(err)?;
                }
            }
            _ => {
                w.write_record(["key", "value"]).map_err(err)?;
                let mut flat = Vec::new();
                flatten("", &self.to_json(), &mut flat);
                for (k, v) in flat {
                    w.write_record([k, v]).map_err(err)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| pcvf::Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.json` or `report.csv` into the output directory and
    /// echoes it to stdout.
    pub fn emit(&self, cfg: &RunConfig) -> Result<()> {
        fs::create_dir_all(&cfg.out)?;
        let (name, text) = match cfg.format {
            Format::Json => ("report.json", serde_json::to_string_pretty(&self.to_json()).expect("report serializes") + "\n"),
            Format::Csv => ("report.csv", self.to_csv()?),
        };
        fs::write(cfg.out.join(name), &text)?;
        std::io::stdout().write_all(text.as_bytes())?;
        Ok(())
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&join(k), x, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| flatten(&join(&i.to_string()), x, out)),
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

//! Report bundles: a JSON summary whose claims point at CSV cells, the CSV
//! tables themselves, optional SVG plots and JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// A summary value and the CSV cell it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub value: Value,
    pub table: String,
    pub row: usize,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: Value,
    pub versions: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportBundle {
    pub command: String,
    pub claims: BTreeMap<String, Claim>,
    /// True when some solve hit its iteration cap.
    pub inconclusive: bool,
    pub provenance: Option<Provenance>,
    #[serde(skip)]
    pub tables: BTreeMap<String, String>,
    #[serde(skip)]
    pub plots: BTreeMap<String, String>,
    #[serde(skip)]
    pub artifacts: BTreeMap<String, Value>,
}

/// Writes rows with RFC-4180 quoting.
pub fn csv_table<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv of utf-8 fields")
}

fn cell(text: &str, row: usize, column: &str) -> Result<String, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| format!("no column {column}"))?;
    let rec = r
        .records()
        .nth(row)
        .ok_or_else(|| format!("no row {row}"))?
        .map_err(|e| e.to_string())?;
    Ok(rec.get(col).unwrap_or_default().to_string())
}

fn cell_value(s: &str) -> Value {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => match s {
            "true" => json!(true),
            "false" => json!(false),
            _ => json!(s),
        },
    }
}

fn matches(claim: &Value, cell: &str) -> bool {
    match claim {
        Value::Number(n) => cell.parse::<f64>().ok() == n.as_f64(),
        Value::Bool(b) => cell == b.to_string(),
        Value::String(s) => cell == s,
        _ => false,
    }
}

impl ReportBundle {
    pub fn new(command: &str) -> Self {
        ReportBundle {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn table(&mut self, name: &str, csv: String) {
        self.tables.insert(name.to_string(), csv);
    }

    /// Copies a CSV cell into the summary under `key`.
    pub fn claim(&mut self, key: &str, table: &str, row: usize, column: &str) -> Result<(), CliError> {
        let text = self
            .tables
            .get(table)
            .ok_or_else(|| CliError::Internal(format!("claim {key}: no table {table}")))?;
        let c = cell(text, row, column).map_err(|e| CliError::Internal(format!("claim {key}: {e}")))?;
        self.claims.insert(
            key.to_string(),
            Claim {
                value: cell_value(&c),
                table: table.to_string(),
                row,
                column: column.to_string(),
            },
        );
        Ok(())
    }

    /// Every claim must match its CSV cell.
    pub fn validate(&self) -> Result<(), String> {
        for (key, c) in &self.claims {
            let text = self
                .tables
                .get(&c.table)
                .ok_or_else(|| format!("{key}: table {} missing", c.table))?;
            let got = cell(text, c.row, &c.column).map_err(|e| format!("{key}: {e}"))?;
            if !matches(&c.value, &got) {
                return Err(format!("{key}: summary has {}, {} row {} has {got}", c.value, c.table, c.row));
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Value {
        serde_json::to_value(self).expect("bundle serializes")
    }

    pub fn write(&self, dir: &Path, formats: &[Format]) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let put = |name: &str, body: &str| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CliError::io(&path, e))
        };
        if formats.contains(&Format::Csv) {
            for (name, body) in &self.tables {
                put(&format!("{name}.csv"), body)?;
            }
        }
        if formats.contains(&Format::Svg) {
            for (name, body) in &self.plots {
                put(&format!("{name}.svg"), body)?;
            }
        }
        if formats.contains(&Format::Json) {
            let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("json serializes") + "\n";
            put("summary.json", &pretty(&self.summary_json()))?;
            for (name, v) in &self.artifacts {
                put(&format!("{name}.json"), &pretty(v))?;
            }
        }
        Ok(())
    }

    /// Reads `summary.json` and the CSV tables back from a written bundle.
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("summary.json");
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let mut b: ReportBundle =
            serde_json::from_str(&text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        let names: Vec<String> = b.claims.values().map(|c| c.table.clone()).collect();
        for name in names {
            let path = dir.join(format!("{name}.csv"));
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            b.tables.insert(name, text);
        }
        Ok(b)
    }
}

/// Validates a bundle on disk.
pub fn validate_dir(dir: &Path) -> Result<(), String> {
    ReportBundle::read(dir).map_err(|e| e.to_string())?.validate()
}

//! Plain-text outputs: CSV tables with one `# name[unit],…` header line, and
//! TOML run manifests.
//!
//! Floats are written in shortest round-trip form, so a table read back is
//! bit-identical to what was written and identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::params::DerivedConstants;
use crate::verify::Verdict;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// `(name, unit)` per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Table { columns: columns.iter().map(|(n, u)| (n.to_string(), u.to_string())).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Config(format!("no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn header(&self) -> String {
        let cols: Vec<String> = self.columns.iter().map(|(n, u)| format!("{n}[{u}]")).collect();
        format!("# {}", cols.join(","))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        writeln!(out, "{}", self.header())?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in &self.rows {
                w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
            }
            w.flush()?;
        }
        String::from_utf8(out).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let head = first.strip_prefix('#').ok_or_else(|| Error::Config("missing `#` header line".into()))?;
        let mut columns = vec![];
        for c in head.trim().split(',') {
            let (name, unit) = match c.split_once('[') {
                Some((n, u)) => (n.trim(), u.trim_end_matches(']')),
                None => (c.trim(), ""),
            };
            columns.push((name.to_string(), unit.to_string()));
        }
        let mut rd = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_reader(text.as_bytes());
        let mut rows = vec![];
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != columns.len() {
                return Err(Error::Config(format!("row has {} fields, header has {}", rec.len(), columns.len())));
            }
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Record of one CLI run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub pass: bool,
    pub wall_seconds: f64,
    /// Paths relative to the manifest directory.
    pub outputs: Vec<String>,
    /// Scalar results keyed by name.
    pub values: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub config: Config,
    pub derived: Option<DerivedConstants>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Config) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            pass: true,
            wall_seconds: 0.0,
            outputs: vec![],
            values: BTreeMap::new(),
            verdicts: vec![],
            config: config.clone(),
            derived: None,
        }
    }

    pub fn add_verdict(&mut self, v: Verdict) {
        self.pass &= v.pass;
        self.verdicts.push(v);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

//! Deterministic file emission.
//!
//! Result files depend only on the resolved configuration. Wall-clock times
//! go to `timings.json`, which is the one file allowed to differ between
//! reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dynrisk_core::experiments::{Cell, Table};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{OutputFormat, RawConfig, RunConfig};
use crate::error::{CliError, CliResult};

/// Version string baked in at build time.
pub const VERSION: &str = env!("DYNRISK_VERSION");

pub struct OutputWriter {
    dir: PathBuf,
    format: OutputFormat,
    written: Vec<PathBuf>,
}

impl OutputWriter {
    pub fn create(dir: &Path, format: OutputFormat) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn table(&mut self, table: &Table) -> CliResult<()> {
        match self.format {
            OutputFormat::Csv => self.write(&format!("{}.csv", table.name), table.to_csv()),
            OutputFormat::Json => {
                let text = to_json(&table_records(table))?;
                self.write(&format!("{}.json", table.name), text)
            }
        }
    }

    /// `summary.json`: version, configuration keys, the typed configuration
    /// they resolve to, and headline scalars.
    pub fn summary(
        &mut self,
        command: &str,
        raw: &RawConfig,
        resolved: &RunConfig,
        scalars: &BTreeMap<String, f64>,
    ) -> CliResult<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            version: &'a str,
            command: &'a str,
            config: &'a BTreeMap<&'static str, String>,
            resolved: &'a RunConfig,
            results: &'a BTreeMap<String, f64>,
        }
        let text = to_json(&Summary {
            version: VERSION,
            command,
            config: raw.entries(),
            resolved,
            results: scalars,
        })?;
        self.write("summary.json", text)
    }

    /// Per-stage wall-clock seconds.
    pub fn timings(&mut self, stages: &[(String, f64)]) -> CliResult<()> {
        let map: Map<String, Value> = stages
            .iter()
            .map(|(k, v)| (k.clone(), Value::from(*v)))
            .collect();
        self.write("timings.json", to_json(&map)?)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, file: &str, text: String) -> CliResult<()> {
        let path = self.dir.join(file);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("json encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Rows as objects keyed by column name. Non-finite numbers become null.
fn table_records(table: &Table) -> Vec<Map<String, Value>> {
    table
        .rows
        .iter()
        .map(|row| {
            table
                .header
                .iter()
                .zip(row)
                .map(|(h, c)| {
                    let v = match c {
                        Cell::Num(x) => Value::from(*x),
                        Cell::Int(i) => Value::from(*i),
                        Cell::Text(t) => Value::from(t.as_str()),
                    };
                    (h.clone(), v)
                })
                .collect()
        })
        .collect()
}

//! Buffered run artifacts: JSONL streams, CSV tables and the manifest. Files
//! are only written once the whole run has succeeded.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Default)]
pub struct Artifacts {
    streams: BTreeMap<String, Vec<String>>,
    tables: BTreeMap<String, Table>,
    preconditions: Vec<String>,
    summary: BTreeMap<String, Value>,
}

impl Artifacts {
    pub fn record<T: Serialize>(&mut self, stream: &str, rec: &T) {
        let line = serde_json::to_string(rec).expect("records serialize");
        self.streams.entry(stream.to_string()).or_default().push(line);
    }

    pub fn table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_string(), table);
    }

    /// A physical precondition that was checked before computing.
    pub fn precondition(&mut self, what: impl Into<String>) {
        self.preconditions.push(what.into());
    }

    pub fn summary<T: Serialize>(&mut self, key: &str, value: T) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).expect("summary serializes"));
    }

    pub fn write(
        &self,
        cfg: &RunConfig,
        resolved: &BTreeMap<String, Value>,
        workers: Option<usize>,
        wall_time: f64,
    ) -> CliResult<Vec<String>> {
        let dir = &cfg.output_path;
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (name, lines) in &self.streams {
            let file = format!("{name}.jsonl");
            let mut f = fs::File::create(dir.join(&file))?;
            for l in lines {
                writeln!(f, "{l}")?;
            }
            files.push(file);
        }
        for (name, t) in &self.tables {
            let file = format!("{name}.csv");
            write_csv(&dir.join(&file), t)?;
            files.push(file);
        }
        let mut params = cfg.params.clone();
        for (k, v) in resolved {
            params.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let manifest = json!({
            "schema_version": SCHEMA_VERSION,
            "command": cfg.command,
            "seed": cfg.seed,
            "parameters": params,
            "config_text": RunConfig { params: params.clone(), ..cfg.clone() }.to_text(),
            "code_version": env!("CARGO_PKG_VERSION"),
            "workers": workers,
            "wall_time_s": wall_time,
            "preconditions": self.preconditions,
            "summary": self.summary,
            "artifacts": files,
        });
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
        files.push("manifest.json".into());
        Ok(files)
    }
}

fn write_csv(path: &Path, t: &Table) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

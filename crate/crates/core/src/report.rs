//! Experiment reports: named metric traces plus summary scalars, written as
//! one JSON document and one CSV per trace.
//!
//! Reports hold no wall-clock data, so re-running with the same seed and
//! config reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::io::fmt_f64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
}

impl Trace {
    /// Appends a point. Steps must strictly increase.
    pub fn push(&mut self, step: usize, value: f64) {
        if let Some(&last) = self.steps.last() {
            assert!(step > last, "trace steps must increase ({step} after {last})");
        }
        self.steps.push(step);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn first(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn min(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::InvalidArgument(format!("unknown format '{other}' (csv, json, both)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    /// The fully resolved configuration that produced the report.
    pub config: serde_json::Value,
    pub traces: BTreeMap<String, Trace>,
    pub summary: BTreeMap<String, f64>,
    pub diverged: bool,
}

impl ExperimentReport {
    pub fn new(name: &str, mode: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            name: name.to_string(),
            mode: mode.to_string(),
            seed,
            config: serde_json::to_value(config).expect("configs serialize to JSON"),
            traces: BTreeMap::new(),
            summary: BTreeMap::new(),
            diverged: false,
        }
    }

    pub fn push(&mut self, metric: &str, step: usize, value: f64) {
        self.traces.entry(metric.to_string()).or_default().push(step, value);
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn trace(&self, metric: &str) -> Option<&Trace> {
        self.traces.get(metric)
    }

    /// Summary value, panicking with the key name if absent.
    pub fn get(&self, key: &str) -> f64 {
        *self
            .summary
            .get(key)
            .unwrap_or_else(|| panic!("report {} has no summary value '{key}'", self.name))
    }

    /// `<name>-<mode>-seed<seed>`.
    pub fn file_stem(&self) -> String {
        format!("{}-{}-seed{}", self.name, self.mode, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_trace_csv<W: Write>(&self, metric: &str, mut w: W) -> Result<()> {
        let trace = self
            .traces
            .get(metric)
            .ok_or_else(|| Error::InvalidArgument(format!("no trace named '{metric}'")))?;
        writeln!(w, "step,{metric}")?;
        for (s, v) in trace.steps.iter().zip(&trace.values) {
            writeln!(w, "{s},{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    /// Writes `<stem>.json` and/or `<stem>-<metric>.csv` into `dir`.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = self.file_stem();
        let mut written = Vec::new();
        if matches!(format, OutputFormat::Json | OutputFormat::Both) {
            let path = dir.join(format!("{stem}.json"));
            let mut f = BufWriter::new(File::create(&path)?);
            f.write_all(self.to_json()?.as_bytes())?;
            f.write_all(b"\n")?;
            f.flush()?;
            written.push(path);
        }
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            for metric in self.traces.keys() {
                let path = dir.join(format!("{stem}-{metric}.csv"));
                let mut f = BufWriter::new(File::create(&path)?);
                self.write_trace_csv(metric, &mut f)?;
                f.flush()?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// One line: name, mode, seed and every summary value.
    pub fn summary_line(&self) -> String {
        let mut line = format!("{} [{}] seed={}", self.name, self.mode, self.seed);
        for (k, v) in &self.summary {
            line.push_str(&format!(" {k}={}", short(*v)));
        }
        if self.diverged {
            line.push_str(" DIVERGED");
        }
        line
    }
}

fn short(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else if v.abs() >= 1e-3 && v.abs() < 1e6 {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

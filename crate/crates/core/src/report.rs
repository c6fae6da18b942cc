//! Result rows and their CSV / JSONL encodings.
//!
//! Columns are fixed: `experiment, params, mean, stderr, bound, slack,
//! verdict, seed, config_hash`. `params` is a compact JSON object with the
//! row-specific parameters. Empty cells mean "not applicable".

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::Verdict;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub params: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub slack: Option<f64>,
    pub verdict: Verdict,
    pub seed: u64,
    pub config_hash: String,
}

impl Row {
    /// A row with only the experiment name and parameters set. The seed
    /// and hash are filled in by [`stamp`].
    pub fn new(experiment: impl Into<String>, params: Value) -> Row {
        Row {
            experiment: experiment.into(),
            params: params.to_string(),
            mean: None,
            stderr: None,
            bound: None,
            slack: None,
            verdict: Verdict::Pass,
            seed: 0,
            config_hash: String::new(),
        }
    }

    pub fn estimate(mut self, mean: f64, stderr: f64) -> Row {
        self.mean = Some(mean);
        self.stderr = Some(stderr);
        self
    }

    /// Sets the bound, the slack `bound - |mean|` and the verdict.
    pub fn bounded(mut self, bound: f64, passed: bool) -> Row {
        self.bound = Some(bound);
        self.slack = self.mean.map(|m| bound - m.abs());
        self.verdict = Verdict::from_bool(passed);
        self
    }

    pub fn verdict(mut self, passed: bool) -> Row {
        self.verdict = Verdict::from_bool(passed);
        self
    }

    /// A row recording a failed computation.
    pub fn error(experiment: impl Into<String>, params: Value, err: &Error) -> Row {
        let mut params = params;
        if let Value::Object(map) = &mut params {
            map.insert("error".into(), Value::String(err.to_string()));
        }
        let mut row = Row::new(experiment, params);
        row.verdict = Verdict::Error;
        row
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Sets the seed and config hash of every row.
pub fn stamp(rows: &mut [Row], seed: u64, config_hash: &str) {
    for row in rows {
        row.seed = seed;
        row.config_hash = config_hash.to_string();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::ConfigInvalid(format!("unknown format {other:?}"))),
        }
    }
}

pub fn write_rows<W: Write>(rows: &[Row], format: Format, out: W) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                w.write_record([
                    "experiment", "params", "mean", "stderr", "bound", "slack", "verdict", "seed", "config_hash",
                ])?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        Format::Jsonl => {
            let mut out = out;
            for row in rows {
                serde_json::to_writer(&mut out, row)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

pub fn rows_to_string(rows: &[Row], format: Format) -> String {
    let mut buf = Vec::new();
    write_rows(rows, format, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("rows are utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn csv_layout() {
        let mut rows = vec![
            Row::new("p", json!({"n": 2})).estimate(0.5, 0.01).bounded(1.0, true),
            Row::new("q", json!({})),
        ];
        stamp(&mut rows, 7, "abc");
        let text = rows_to_string(&rows, Format::Csv);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "experiment,params,mean,stderr,bound,slack,verdict,seed,config_hash");
        assert_eq!(lines.next().unwrap(), "p,\"{\"\"n\"\":2}\",0.5,0.01,1.0,0.5,pass,7,abc");
        assert_eq!(lines.next().unwrap(), "q,{},,,,,pass,7,abc");
    }

    #[test]
    fn jsonl_mirrors_columns() {
        let row = Row::error("x", json!({"n": 30}), &Error::SizeExceeded { n: 30, limit: 24 });
        let text = rows_to_string(&[row.clone()], Format::Jsonl);
        let back: Row = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(back, row);
        assert!(back.params.contains("exceeds limit"));
        assert!(!back.passed());
    }
}

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::control::LocomotionMode;

/// Time-indexed record of a run. Numeric columns come first, then `mode`,
/// then any extra columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    /// Free-form lines written as `# ` comments above the column row.
    pub header: Vec<String>,
    pub columns: Vec<String>,
    pub extra_columns: Vec<String>,
    pub rows: Vec<LogRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub values: Vec<f64>,
    pub mode: LocomotionMode,
    pub extra: Vec<f64>,
}

impl TrajectoryLog {
    pub fn new(columns: Vec<String>, extra_columns: Vec<String>) -> Self {
        Self { header: Vec::new(), columns, extra_columns, rows: Vec::new() }
    }

    pub fn push(&mut self, values: Vec<f64>, mode: LocomotionMode, extra: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        debug_assert_eq!(extra.len(), self.extra_columns.len());
        self.rows.push(LogRow { values, mode, extra });
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(i) = self.columns.iter().position(|c| c == name) {
            return Some(self.rows.iter().map(|r| r.values[i]).collect());
        }
        let i = self.extra_columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.extra[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        let mut names: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        names.push("mode");
        names.extend(self.extra_columns.iter().map(String::as_str));
        writeln!(out, "{}", names.join(","))?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            for v in &r.values {
                push_num(&mut line, *v);
            }
            line.push_str(r.mode.name());
            for v in &r.extra {
                line.push(',');
                push_num(&mut line, *v);
                line.pop();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    /// Header comment lines of a CSV produced by [`TrajectoryLog::write_csv`].
    pub fn read_header<R: BufRead>(input: R) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        for line in input.lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(rest) => out.push(rest.strip_prefix(' ').unwrap_or(rest).to_string()),
                None => break,
            }
        }
        Ok(out)
    }
}

fn push_num(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    write!(line, "{v},").expect("writing to a string");
}

/// Scalar results of a run plus any flags raised along the way.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub controller: String,
    pub metrics: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn set(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Two-column text table.
    pub fn table(&self) -> String {
        let width = self.metrics.keys().map(|k| k.len()).max().unwrap_or(0);
        let mut s = format!("scenario: {} ({})\n", self.scenario, self.controller);
        for (k, v) in &self.metrics {
            s.push_str(&format!("  {k:<width$}  {v:.6}\n"));
        }
        for f in &self.flags {
            s.push_str(&format!("  flag: {f}\n"));
        }
        s
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

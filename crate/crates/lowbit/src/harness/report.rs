use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;

/// One measurement at one step of one series (scheme, block size, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub series: String,
    pub metric: String,
    pub value: f64,
}

/// Output of every experiment. Only ordered maps are used so the JSON form is
/// a pure function of the contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub rows: Vec<Row>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

impl ExperimentReport {
    pub fn new(name: &str, seed: u64, config: serde_json::Value) -> Self {
        ExperimentReport {
            name: name.into(),
            seed,
            config,
            rows: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, step: usize, series: &str, metric: &str, value: f64) {
        self.rows.push(Row {
            step,
            series: series.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    /// Values of one `(series, metric)` pair in step order.
    pub fn series(&self, series: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.series == series && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-format CSV, one row per step, series and metric. Final metrics are
    /// appended with an empty step column.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "series", "metric", "value"]).expect("in-memory write");
        for r in &self.rows {
            w.serialize((r.step, &r.series, &r.metric, r.value)).expect("in-memory write");
        }
        for (k, v) in &self.metrics {
            w.serialize(("", "final", k, v)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn file_name(&self, format: OutputFormat) -> String {
        format!("{}-{}.{}", self.name, self.seed, format.extension())
    }

    /// Writes `{name}-{seed}.{ext}` into `dir` atomically and returns its path.
    pub fn write_to(&self, dir: &Path, format: OutputFormat) -> std::io::Result<PathBuf> {
        let path = dir.join(self.file_name(format));
        write_atomic(&path, self.render(format).as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExperimentReport {
        let mut r = ExperimentReport::new("demo", 7, serde_json::json!({"beta": 0.9}));
        r.push(0, "a", "mean", 0.5);
        r.push(1, "a", "mean", 0.25);
        r.push(0, "b", "mean", 1.0);
        r.metrics.insert("final_mean".into(), 0.25);
        r
    }

    #[test]
    fn csv_layout() {
        let csv = report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,series,metric,value");
        assert_eq!(lines[1], "0,a,mean,0.5");
        assert_eq!(lines.last().unwrap(), &",final,final_mean,0.25");
    }

    #[test]
    fn json_round_trip_and_series() {
        let r = report();
        let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.series("a", "mean"), vec![0.5, 0.25]);
    }

    #[test]
    fn file_naming() {
        let dir = tempfile::tempdir().unwrap();
        let p = report().write_to(dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(p.file_name().unwrap(), "demo-7.csv");
    }
}

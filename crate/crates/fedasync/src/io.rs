//! Metrics, dataset and model files.
//!
//! Metrics CSV layout: `# key=value` lines carrying the resolved config,
//! then the column header, then one row per evaluation point. Missing values
//! are empty cells. A run that failed ends with a `# failed=<reason>` line.
//! The JSON-lines variant has a `{"config": [[key, value], ...]}` first line, one object
//! per row, and an optional `{"failed": "..."}` last line.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fedasync_core::data::{Dataset, Sample, TaskKind};
use fedasync_core::metrics::MetricsRecord;
use fedasync_core::ParamVector;
use serde_json::{Map, Number, Value};

use crate::config::Format;

pub const COLUMNS: [&str; 8] = [
    "epoch",
    "gradients",
    "loss",
    "grad_norm_sq",
    "accuracy",
    "alpha_t",
    "staleness",
    "sim_time",
];

/// One metrics row with every column as an optional float, so per-run files
/// and averaged summaries share a reader.
pub type Row = [Option<f64>; 8];

pub fn record_row(r: &MetricsRecord) -> Row {
    [
        Some(r.epoch as f64),
        Some(r.gradients as f64),
        Some(r.loss),
        Some(r.grad_norm_sq),
        r.accuracy,
        r.alpha_t,
        r.staleness.map(|s| s as f64),
        r.sim_time,
    ]
}

/// Contents of one metrics or summary file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsFile {
    pub config: Vec<(String, String)>,
    pub rows: Vec<Row>,
    pub failed: Option<String>,
}

impl MetricsFile {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        let i = COLUMNS.iter().position(|c| *c == name).expect("known column");
        self.rows.iter().map(|r| r[i]).collect()
    }
}

/// Shortest round-trip text; whole numbers print without a fraction.
pub fn fmt_f64(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x}")
    } else {
        format!("{x:?}")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

pub fn render(file: &MetricsFile, format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            for (k, v) in &file.config {
                let _ = writeln!(out, "# {k}={}", one_line(v));
            }
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for row in &file.rows {
                let cells: Vec<String> = row.iter().map(|&c| cell(c)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            if let Some(reason) = &file.failed {
                let _ = writeln!(out, "# failed={}", one_line(reason));
            }
        }
        Format::Jsonl => {
            let config: Vec<Value> = file
                .config
                .iter()
                .map(|(k, v)| Value::Array(vec![Value::String(k.clone()), Value::String(v.clone())]))
                .collect();
            let mut head = Map::new();
            head.insert("config".into(), Value::Array(config));
            out.push_str(&Value::Object(head).to_string());
            out.push('\n');
            for row in &file.rows {
                let obj: Map<String, Value> = COLUMNS
                    .iter()
                    .zip(row)
                    .map(|(c, v)| {
                        let v = v.and_then(Number::from_f64).map(Value::Number).unwrap_or(Value::Null);
                        (c.to_string(), v)
                    })
                    .collect();
                out.push_str(&Value::Object(obj).to_string());
                out.push('\n');
            }
            if let Some(reason) = &file.failed {
                let mut tail = Map::new();
                tail.insert("failed".into(), Value::String(reason.clone()));
                out.push_str(&Value::Object(tail).to_string());
                out.push('\n');
            }
        }
    }
    out
}

/// Writes a new file; refuses to overwrite.
pub fn write_new(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_metrics(path: &Path, file: &MetricsFile, format: Format) -> Result<()> {
    write_new(path, &render(file, format))
}

fn parse_cell(s: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .with_context(|| format!("line {line}: bad number {s:?}"))
}

/// Parses either metrics format, detected from the first character.
pub fn parse_metrics(text: &str) -> Result<MetricsFile> {
    if text.trim_start().starts_with('{') {
        parse_jsonl(text)
    } else {
        parse_csv(text)
    }
}

fn parse_csv(text: &str) -> Result<MetricsFile> {
    let mut file = MetricsFile::default();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim()
                .split_once('=')
                .with_context(|| format!("line {n}: bad header comment {line:?}"))?;
            if k == "failed" {
                file.failed = Some(v.to_string());
            } else {
                file.config.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line.trim() != COLUMNS.join(",") {
                bail!("line {n}: unexpected column header {line:?}");
            }
            header_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != COLUMNS.len() {
            bail!("line {n}: expected {} cells, got {}", COLUMNS.len(), cells.len());
        }
        let mut row: Row = [None; 8];
        for (slot, c) in row.iter_mut().zip(cells) {
            *slot = parse_cell(c, n)?;
        }
        file.rows.push(row);
    }
    if !header_seen {
        bail!("no column header found");
    }
    Ok(file)
}

fn parse_jsonl(text: &str) -> Result<MetricsFile> {
    let mut file = MetricsFile::default();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).with_context(|| format!("line {n}: bad json"))?;
        let obj = v.as_object().with_context(|| format!("line {n}: expected an object"))?;
        if let Some(cfg) = obj.get("config") {
            let bad = || format!("line {n}: config must be a list of [key, value] strings");
            for pair in cfg.as_array().with_context(bad)? {
                match pair.as_array().map(Vec::as_slice) {
                    Some([Value::String(k), Value::String(v)]) => file.config.push((k.clone(), v.clone())),
                    _ => bail!(bad()),
                }
            }
        } else if let Some(reason) = obj.get("failed") {
            file.failed = Some(reason.as_str().unwrap_or_default().to_string());
        } else {
            let mut row: Row = [None; 8];
            for (slot, c) in row.iter_mut().zip(COLUMNS) {
                *slot = match obj.get(c) {
                    None | Some(Value::Null) => None,
                    Some(x) => Some(x.as_f64().with_context(|| format!("line {n}: {c} is not a number"))?),
                };
            }
            file.rows.push(row);
        }
    }
    Ok(file)
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_metrics(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Row-wise mean over runs, truncated to the shortest run. Cells missing in
/// any run stay missing.
pub fn average_rows(runs: &[Vec<Row>]) -> Vec<Row> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let mut row: Row = [None; 8];
            for (c, slot) in row.iter_mut().enumerate() {
                let vals: Option<Vec<f64>> = runs.iter().map(|r| r[i][c]).collect();
                *slot = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
            }
            row
        })
        .collect()
}

/// Gradients at the first row whose loss is at or below `fraction` of the
/// first row's loss.
pub fn rows_to_target(rows: &[Row], fraction: f64) -> Option<f64> {
    let initial = rows.first()?[2]?;
    rows.iter()
        .find(|r| r[2].is_some_and(|l| l <= fraction * initial))
        .and_then(|r| r[1])
}

/// Model file: one coordinate per line, shortest round-trip formatting.
pub fn render_model(x: &ParamVector) -> String {
    let mut out = String::new();
    for v in x {
        let _ = writeln!(out, "{}", fmt_f64(*v));
    }
    out
}

pub fn parse_model(text: &str) -> Result<ParamVector> {
    let values = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| l.trim().parse::<f64>().with_context(|| format!("line {}: bad value", n + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamVector::new(values)?)
}

pub fn read_model(path: &Path) -> Result<ParamVector> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Dataset table: `# key=value` header, then `target,f1,...,fd` per sample.
pub fn render_dataset(ds: &Dataset, config: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in config {
        let _ = writeln!(out, "# {k}={}", one_line(v));
    }
    match ds.task() {
        TaskKind::Regression => out.push_str("# task=regression\n"),
        TaskKind::Classification { classes } => {
            let _ = writeln!(out, "# task=classification:{classes}");
        }
    }
    for s in ds.samples() {
        out.push_str(&fmt_f64(s.target));
        for f in &s.features {
            out.push(',');
            out.push_str(&fmt_f64(*f));
        }
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut task = TaskKind::Regression;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let n = n + 1;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(t) = meta.trim().strip_prefix("task=") {
                task = match t.split_once(':') {
                    Some(("classification", c)) => TaskKind::Classification {
                        classes: c.parse().with_context(|| format!("line {n}: bad class count"))?,
                    },
                    None if t == "regression" => TaskKind::Regression,
                    _ => bail!("line {n}: unknown task {t:?}"),
                };
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().with_context(|| format!("line {n}: bad number {c:?}")))
            .collect::<Result<Vec<_>>>()?;
        let (target, features) = values.split_first().with_context(|| format!("line {n}: empty row"))?;
        samples.push(Sample::new(features.to_vec(), *target));
    }
    let dim = samples.first().map(|s| s.features.len()).unwrap_or(0);
    Ok(Dataset::new(samples, dim, task)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedasync_core::data::{gen_classification, gen_regression};

    fn sample_file() -> MetricsFile {
        MetricsFile {
            config: vec![("algorithm".into(), "sgd".into()), ("alpha".into(), "0.6".into())],
            rows: vec![
                [Some(0.0), Some(0.0), Some(2.5), Some(1.0), None, None, None, None],
                [Some(10.0), Some(95.0), Some(0.1), Some(1e-8), Some(0.75), Some(0.6), Some(3.0), Some(12.125)],
            ],
            failed: None,
        }
    }

    #[test]
    fn csv_layout() {
        let text = render(&sample_file(), Format::Csv);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# algorithm=sgd");
        assert_eq!(lines[2], "epoch,gradients,loss,grad_norm_sq,accuracy,alpha_t,staleness,sim_time");
        assert_eq!(lines[3], "0,0,2.5,1,,,,");
        assert_eq!(lines[4], "10,95,0.1,1e-8,0.75,0.6,3,12.125");
    }

    #[test]
    fn both_formats_round_trip() {
        let mut file = sample_file();
        for failed in [None, Some("diverged at step 3".to_string())] {
            file.failed = failed;
            for format in [Format::Csv, Format::Jsonl] {
                let back = parse_metrics(&render(&file, format)).unwrap();
                assert_eq!(back, file, "{format:?}");
            }
        }
    }

    #[test]
    fn malformed_metrics_are_errors() {
        assert!(parse_metrics("epoch,loss\n1,2\n").is_err());
        assert!(parse_metrics(&format!("{}\n1,2\n", COLUMNS.join(","))).is_err());
        assert!(parse_metrics("").is_err());
        assert!(parse_metrics("{\"epoch\": \"x\"}\n").is_err());
    }

    #[test]
    fn averaging_and_target() {
        let a = vec![[Some(0.0), Some(0.0), Some(4.0), None, None, None, None, None]; 3];
        let mut b = a.clone();
        b[1][2] = Some(0.2);
        b[1][1] = Some(20.0);
        b.pop();
        let avg = average_rows(&[a.clone(), b.clone()]);
        assert_eq!(avg.len(), 2);
        assert_eq!(avg[1][2], Some(2.1));
        assert_eq!(avg[1][1], Some(10.0));
        assert_eq!(rows_to_target(&b, 0.1), Some(20.0));
        assert_eq!(rows_to_target(&a, 0.1), None);
    }

    #[test]
    fn model_round_trip_is_exact() {
        let x = ParamVector::new(vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567]).unwrap();
        assert_eq!(parse_model(&render_model(&x)).unwrap(), x);
        assert!(parse_model("1\nnope\n").is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for ds in [gen_regression(30, 3, 0.1, 1).unwrap(), gen_classification(30, 3, 4, 2.0, 1).unwrap()] {
            let path = dir.path().join(format!("{:?}.csv", ds.task()).replace([' ', '{', '}', ':'], ""));
            write_new(&path, &render_dataset(&ds, &[("seed".into(), "1".into())])).unwrap();
            let back = read_dataset(&path).unwrap();
            assert_eq!(back.samples(), ds.samples());
            assert_eq!(back.task(), ds.task());
        }
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_new(&p, "a").unwrap();
        assert!(write_new(&p, "b").is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "a");
    }
}

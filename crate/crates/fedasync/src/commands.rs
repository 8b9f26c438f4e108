//! Subcommand implementations, kept separate from argument parsing so tests
//! can drive them directly.

use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use fedasync_core::baselines::{run_fedavg, run_serial_sgd};
use fedasync_core::experiment::{Environment, ExperimentConfig, StalenessMode};
use fedasync_core::metrics::RunOutput;
use fedasync_core::simulator::{run_fedasync_latency, run_fedasync_sampled};

use crate::config::{Algorithm, RunSpec, PROBLEM_KEYS};
use crate::io::{self, MetricsFile, Row};
use crate::net::{self, NetOptions};

/// One run of `algorithm` on `cfg`. The network variant starts a loopback
/// server and one worker thread per device.
pub fn run_once(algorithm: Algorithm, cfg: &ExperimentConfig, opts: &NetOptions) -> Result<RunOutput> {
    let out = match algorithm {
        Algorithm::FedAsyncSampled => run_fedasync_sampled(cfg)?,
        Algorithm::FedAsyncLatency => {
            if !matches!(cfg.mode, StalenessMode::Latency { .. }) {
                bail!("fedasync-latency needs latency profiles");
            }
            run_fedasync_latency(cfg)?
        }
        Algorithm::FedAvg => run_fedavg(cfg)?,
        Algorithm::Sgd => run_serial_sgd(cfg)?,
        Algorithm::FedAsyncNet => {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?.to_string();
            let workers: Vec<_> = (0..cfg.devices)
                .map(|id| {
                    let (addr, cfg, opts) = (addr.clone(), cfg.clone(), opts.clone());
                    thread::spawn(move || net::worker_loop(&addr, id, &cfg, &opts))
                })
                .collect();
            let served = net::serve(listener, cfg, opts);
            for (id, w) in workers.into_iter().enumerate() {
                let r = w.join().map_err(|_| anyhow!("worker {id} panicked"))?;
                if served.is_ok() {
                    r.with_context(|| format!("worker {id}"))?;
                }
            }
            served?
        }
    };
    Ok(out)
}

pub fn net_options(spec: &RunSpec) -> NetOptions {
    NetOptions {
        max_frame: spec.max_frame,
        ..NetOptions::default()
    }
}

/// Metrics file contents for one run.
pub fn metrics_file(config: Vec<(String, String)>, out: &RunOutput) -> MetricsFile {
    MetricsFile {
        config,
        rows: out.records.iter().map(io::record_row).collect(),
        failed: out.failure.as_ref().map(|e| e.to_string()),
    }
}

/// The resolved config echoed into file headers. The output location is
/// left out so identical specs give identical files wherever they land.
pub fn header_pairs(spec: &RunSpec) -> Vec<(String, String)> {
    spec.to_pairs().into_iter().filter(|(k, _)| k != "out").collect()
}

fn with_seed(pairs: &[(String, String)], seed: u64) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(k, v)| {
            let v = if k == "seed" { seed.to_string() } else { v.clone() };
            (k.clone(), v)
        })
        .collect()
}

/// Final metrics of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSummary {
    pub seed: u64,
    pub path: PathBuf,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub gradients_to_target: Option<f64>,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub reps: Vec<RepSummary>,
    pub summary_path: PathBuf,
    pub summary: Row,
    pub summary_gradients_to_target: Option<f64>,
    pub threshold: f64,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.reps.iter().any(|r| r.failed.is_some())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{}: {} repetitions, target = {} x initial loss",
            self.algorithm.name(),
            self.reps.len(),
            self.threshold
        );
        for r in &self.reps {
            let _ = write!(
                s,
                "  seed {:>4}  loss {}  accuracy {}  gradients-to-target {}",
                r.seed,
                opt(r.final_loss),
                opt(r.final_accuracy),
                opt(r.gradients_to_target)
            );
            if let Some(f) = &r.failed {
                let _ = write!(s, "  FAILED: {f}");
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "  mean       loss {}  accuracy {}  gradients-to-target {}",
            opt(self.summary[2]),
            opt(self.summary[4]),
            opt(self.summary_gradients_to_target)
        );
        let _ = writeln!(s, "  summary written to {}", self.summary_path.display());
        s
    }
}

/// Creates `dir`, refusing to reuse an existing one.
fn create_fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        bail!("output {} already exists; refusing to overwrite", dir.display());
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::create_dir(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `R` seeded repetitions, one metrics and model file each, plus the
/// row-wise mean in `summary.<ext>`.
pub fn cmd_run(spec: &RunSpec) -> Result<RunReport> {
    let algorithm = spec.require_algorithm()?;
    let dir = spec
        .out
        .clone()
        .ok_or_else(|| anyhow!("missing output directory (set out=DIR or --out DIR)"))?;
    create_fresh_dir(&dir)?;
    let ext = spec.format.extension();
    let pairs = header_pairs(spec);
    let opts = net_options(spec);

    let mut reps = Vec::new();
    let mut all_rows = Vec::new();
    for rep in 0..spec.repeats {
        let mut cfg = spec.experiment.clone();
        cfg.seed = spec.experiment.seed + rep as u64;
        let out = run_once(algorithm, &cfg, &opts)?;
        let file = metrics_file(with_seed(&pairs, cfg.seed), &out);
        let path = dir.join(format!("rep-{rep:03}.{ext}"));
        io::write_metrics(&path, &file, spec.format)?;
        io::write_new(&dir.join(format!("rep-{rep:03}.model")), &io::render_model(&out.final_model))?;
        let last = file.rows.last().copied().unwrap_or([None; 8]);
        reps.push(RepSummary {
            seed: cfg.seed,
            path,
            final_loss: last[2],
            final_accuracy: last[4],
            gradients_to_target: io::rows_to_target(&file.rows, spec.threshold),
            failed: file.failed.clone(),
        });
        all_rows.push(file.rows);
    }

    let failures: Vec<String> = reps
        .iter()
        .filter_map(|r| r.failed.as_ref().map(|f| format!("seed {}: {f}", r.seed)))
        .collect();
    let summary = MetricsFile {
        config: pairs,
        rows: io::average_rows(&all_rows),
        failed: (!failures.is_empty()).then(|| failures.join("; ")),
    };
    let summary_path = dir.join(format!("summary.{ext}"));
    io::write_metrics(&summary_path, &summary, spec.format)?;
    Ok(RunReport {
        algorithm,
        reps,
        summary_path,
        summary: summary.rows.last().copied().unwrap_or([None; 8]),
        summary_gradients_to_target: io::rows_to_target(&summary.rows, spec.threshold),
        threshold: spec.threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareEntry {
    pub label: String,
    pub gradients_to_target: Option<f64>,
    pub final_gradients: Option<f64>,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub threshold: f64,
    pub entries: Vec<CompareEntry>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl Comparison {
    /// Differences are relative to the first entry.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_else(|| "-".into());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "run,gradients_to_target,final_gradients,final_loss,final_accuracy,d_gradients_to_target,d_final_loss,d_final_accuracy"
        );
        let base = &self.entries[0];
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.label,
                opt(e.gradients_to_target),
                opt(e.final_gradients),
                opt(e.final_loss),
                opt(e.final_accuracy),
                opt(diff(e.gradients_to_target, base.gradients_to_target)),
                opt(diff(e.final_loss, base.final_loss)),
                opt(diff(e.final_accuracy, base.final_accuracy)),
            );
        }
        s
    }
}

fn label_for(path: &Path, file: &MetricsFile, used: &[String]) -> String {
    let alg = file.config_value("algorithm").unwrap_or("run");
    let stem = path
        .parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut label = format!("{alg}:{stem}").replace(',', "_");
    let base = label.clone();
    let mut n = 2;
    while used.contains(&label) {
        label = format!("{base}#{n}");
        n += 1;
    }
    label
}

/// Aligns metrics files on the gradients axis. Refuses files that describe
/// different problems. With `merged`, writes a long-format CSV of every row.
pub fn cmd_compare(paths: &[PathBuf], threshold: f64, merged: Option<&Path>) -> Result<Comparison> {
    if paths.len() < 2 {
        bail!("compare needs at least two files");
    }
    let files = paths.iter().map(|p| io::read_metrics(p)).collect::<Result<Vec<_>>>()?;
    let mut problems = Vec::new();
    for key in PROBLEM_KEYS {
        let first = files[0].config_value(key);
        for (p, f) in paths.iter().zip(&files).skip(1) {
            let v = f.config_value(key);
            if v != first {
                problems.push(format!(
                    "{key}: {} has {:?} but {} has {:?}",
                    paths[0].display(),
                    first.unwrap_or("<unset>"),
                    p.display(),
                    v.unwrap_or("<unset>")
                ));
            }
        }
    }
    if !problems.is_empty() {
        bail!("runs describe different problems:\n  {}", problems.join("\n  "));
    }

    let mut entries: Vec<CompareEntry> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut merged_csv = String::from("run,gradients,loss,grad_norm_sq,accuracy\n");
    for (p, f) in paths.iter().zip(&files) {
        if f.rows.is_empty() {
            bail!("{} has no rows", p.display());
        }
        let label = label_for(p, f, &labels);
        let last = f.rows.last().expect("non-empty");
        for r in &f.rows {
            let cells: Vec<String> = [r[1], r[2], r[3], r[4]]
                .iter()
                .map(|c| c.map(io::fmt_f64).unwrap_or_default())
                .collect();
            let _ = writeln!(merged_csv, "{label},{}", cells.join(","));
        }
        entries.push(CompareEntry {
            label: label.clone(),
            gradients_to_target: io::rows_to_target(&f.rows, threshold),
            final_gradients: last[1],
            final_loss: last[2],
            final_accuracy: last[4],
        });
        labels.push(label);
    }
    if let Some(path) = merged {
        io::write_new(path, &merged_csv)?;
    }
    Ok(Comparison { threshold, entries })
}

/// Writes the train split, test split and each device shard of the
/// configured problem as dataset tables.
pub fn cmd_gen_data(spec: &RunSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    let env = Environment::build(&spec.experiment)?;
    create_fresh_dir(dir)?;
    let pairs = header_pairs(spec);
    let task = env.train.task();
    let mut written = Vec::new();
    let mut write = |name: String, ds: &fedasync_core::data::Dataset| -> Result<()> {
        let p = dir.join(name);
        io::write_new(&p, &io::render_dataset(ds, &pairs))?;
        written.push(p);
        Ok(())
    };
    write("train.csv".into(), &env.train)?;
    if !env.test.is_empty() {
        write("test.csv".into(), &env.test)?;
    }
    for shard in &env.shards {
        let ds = fedasync_core::data::Dataset::new(shard.samples().to_vec(), env.train.dim(), task)?;
        write(format!("shard-{:03}.csv", shard.device), &ds)?;
    }
    Ok(written)
}

/// Server side of a network run: metrics and final model go to `dir`.
pub fn cmd_serve(spec: &RunSpec, listener: TcpListener, dir: &Path) -> Result<RunOutput> {
    if let Some(a) = spec.algorithm.filter(|&a| a != Algorithm::FedAsyncNet) {
        bail!("serve runs fedasync-net, but the config says algorithm={}", a.name());
    }
    create_fresh_dir(dir)?;
    let out = net::serve(listener, &spec.experiment, &net_options(spec))?;
    let mut spec = spec.clone();
    spec.algorithm = Some(Algorithm::FedAsyncNet);
    spec.repeats = 1;
    let ext = spec.format.extension();
    let file = metrics_file(header_pairs(&spec), &out);
    io::write_metrics(&dir.join(format!("metrics.{ext}")), &file, spec.format)?;
    io::write_new(&dir.join("model.txt"), &io::render_model(&out.final_model))?;
    Ok(out)
}

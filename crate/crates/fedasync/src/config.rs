//! Flat `key=value` run configuration.
//!
//! A config file holds one `key=value` pair per line; blank lines and lines
//! starting with `#` are ignored. `--set key=value` flags are applied after
//! the file, so they win. Every problem found is reported at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedasync_core::data::BatchSize;
use fedasync_core::experiment::{
    DelayDist, DeviceOrder, ExperimentConfig, LatencyProfile, ObjectiveSpec, PartitionSpec, StalenessMode,
};
use fedasync_core::server::StalenessStrategy;
use fedasync_core::transport::DEFAULT_MAX_FRAME;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FedAsyncSampled,
    FedAsyncLatency,
    FedAsyncNet,
    FedAvg,
    Sgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FedAsyncSampled,
        Algorithm::FedAsyncLatency,
        Algorithm::FedAsyncNet,
        Algorithm::FedAvg,
        Algorithm::Sgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAsyncSampled => "fedasync-sampled",
            Algorithm::FedAsyncLatency => "fedasync-latency",
            Algorithm::FedAsyncNet => "fedasync-net",
            Algorithm::FedAvg => "fedavg",
            Algorithm::Sgd => "sgd",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected one of {}", names(&Algorithm::ALL)))
    }
}

fn names(algs: &[Algorithm]) -> String {
    algs.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Everything `run` needs: the algorithm, the experiment, and output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub algorithm: Option<Algorithm>,
    pub experiment: ExperimentConfig,
    pub repeats: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Fraction of the initial loss used for gradients-to-target.
    pub threshold: f64,
    pub max_frame: usize,
}

/// All validation problems of one config.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

/// Every accepted key, in the order [`RunSpec::to_pairs`] writes them.
pub const KEYS: &[&str] = &[
    "algorithm",
    "devices",
    "seed",
    "epochs",
    "alpha",
    "strategy",
    "poly_a",
    "hinge_a",
    "hinge_b",
    "max_staleness",
    "gamma",
    "rho",
    "h_min",
    "h_max",
    "batch",
    "fedavg_k",
    "fedavg_h",
    "objective",
    "l2",
    "hidden",
    "samples",
    "dim",
    "noise_std",
    "classes",
    "separation",
    "test_fraction",
    "partition",
    "classes_per_device",
    "device_order",
    "compute_delay",
    "network_delay",
    "latency_scales",
    "eval_every",
    "repeats",
    "out",
    "format",
    "threshold",
    "max_frame",
];

/// Keys that describe the problem being solved rather than the method.
pub const PROBLEM_KEYS: &[&str] = &[
    "objective",
    "l2",
    "hidden",
    "samples",
    "dim",
    "noise_std",
    "classes",
    "separation",
    "test_fraction",
    "devices",
    "partition",
    "classes_per_device",
];

/// Splits config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    let mut problems = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_assignment(line) {
            Ok(kv) => pairs.push(kv),
            Err(e) => problems.push(format!("line {}: {e}", n + 1)),
        }
    }
    if problems.is_empty() {
        Ok(pairs)
    } else {
        Err(ConfigError { problems })
    }
}

/// Parses one `key=value` assignment.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Reads a config file (if any) and applies overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunSpec, ConfigError> {
    let mut pairs = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                problems: vec![format!("cannot read {}: {e}", p.display())],
            })?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    let mut problems = Vec::new();
    for o in overrides {
        match parse_assignment(o) {
            Ok(kv) => pairs.push(kv),
            Err(e) => problems.push(format!("--set: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    RunSpec::from_pairs(&pairs)
}

fn fmt_dist(d: &DelayDist) -> String {
    match *d {
        DelayDist::Constant(v) => format!("const:{v}"),
        DelayDist::Uniform { lo, hi } => format!("uniform:{lo}:{hi}"),
        DelayDist::Exponential { mean } => format!("exp:{mean}"),
    }
}

fn parse_dist(s: &str) -> Result<DelayDist, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("bad number {p:?} in delay {s:?}"));
    match parts.as_slice() {
        ["const", v] => Ok(DelayDist::Constant(num(v)?)),
        ["uniform", lo, hi] => Ok(DelayDist::Uniform { lo: num(lo)?, hi: num(hi)? }),
        ["exp", m] => Ok(DelayDist::Exponential { mean: num(m)? }),
        _ => Err(format!("delay must be const:V, uniform:LO:HI or exp:MEAN, got {s:?}")),
    }
}

struct Reader {
    values: BTreeMap<String, String>,
    problems: Vec<String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T {
        match self.values.get(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    self.problems.push(format!("{key}: cannot parse {v:?}"));
                    default
                }
            },
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> T {
        let Some(v) = self.values.get(key) else {
            return default;
        };
        match options.iter().find(|(name, _)| name == v) {
            Some(&(_, x)) => x,
            None => {
                let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
                self.problems
                    .push(format!("{key}: expected one of {}, got {v:?}", names.join(", ")));
                default
            }
        }
    }

    fn forbid_unless(&mut self, cond: bool, keys: &[&str], why: &str) {
        if cond {
            return;
        }
        for k in keys {
            if self.has(k) {
                self.problems.push(format!("{k} is only meaningful {why}"));
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum StrategyName {
    Constant,
    Polynomial,
    Hinge,
}

#[derive(Clone, Copy, PartialEq)]
enum ObjectiveName {
    Quadratic,
    Logistic,
    Mlp,
}

impl RunSpec {
    /// Builds and validates a spec. Later pairs override earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<RunSpec, ConfigError> {
        let mut r = Reader {
            values: BTreeMap::new(),
            problems: Vec::new(),
        };
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                r.problems.push(format!("unknown key {k:?}"));
                continue;
            }
            r.values.insert(k.clone(), v.clone());
        }
        let mut cfg = ExperimentConfig::default();

        let algorithm = match r.raw("algorithm").map(str::parse::<Algorithm>) {
            None => None,
            Some(Ok(a)) => Some(a),
            Some(Err(e)) => {
                r.problems.push(format!("algorithm: {e}"));
                None
            }
        };

        cfg.devices = r.get("devices", cfg.devices);
        cfg.seed = r.get("seed", cfg.seed);
        cfg.server.total_epochs = r.get("epochs", cfg.server.total_epochs);
        cfg.server.alpha = r.get("alpha", cfg.server.alpha);
        cfg.server.max_staleness = r.get("max_staleness", cfg.server.max_staleness);

        let strategy = r.choice(
            "strategy",
            StrategyName::Constant,
            &[
                ("constant", StrategyName::Constant),
                ("polynomial", StrategyName::Polynomial),
                ("hinge", StrategyName::Hinge),
            ],
        );
        r.forbid_unless(strategy == StrategyName::Polynomial, &["poly_a"], "with strategy=polynomial");
        r.forbid_unless(strategy == StrategyName::Hinge, &["hinge_a", "hinge_b"], "with strategy=hinge");
        cfg.server.strategy = match strategy {
            StrategyName::Constant => StalenessStrategy::Constant,
            StrategyName::Polynomial => StalenessStrategy::Polynomial { a: r.get("poly_a", 0.5) },
            StrategyName::Hinge => StalenessStrategy::Hinge {
                a: r.get("hinge_a", 10.0),
                b: r.get("hinge_b", 4),
            },
        };

        cfg.worker.gamma = r.get("gamma", cfg.worker.gamma);
        cfg.worker.rho = r.get("rho", cfg.worker.rho);
        cfg.worker.h_min = r.get("h_min", cfg.worker.h_min);
        cfg.worker.h_max = r.get("h_max", cfg.worker.h_max);
        let midpoint = (cfg.worker.h_min + cfg.worker.h_max) / 2;
        cfg.fedavg.k = r.get("fedavg_k", cfg.fedavg.k);
        cfg.fedavg.local_iters = r.get("fedavg_h", midpoint.max(1));

        let objective = r.choice(
            "objective",
            ObjectiveName::Quadratic,
            &[
                ("quadratic", ObjectiveName::Quadratic),
                ("logistic", ObjectiveName::Logistic),
                ("mlp", ObjectiveName::Mlp),
            ],
        );
        r.forbid_unless(objective == ObjectiveName::Logistic, &["l2"], "with objective=logistic");
        r.forbid_unless(objective == ObjectiveName::Mlp, &["hidden"], "with objective=mlp");
        let classification = objective != ObjectiveName::Quadratic;
        r.forbid_unless(classification, &["classes", "separation"], "for classification objectives");
        r.forbid_unless(!classification, &["noise_std"], "with objective=quadratic");
        cfg.objective = match objective {
            ObjectiveName::Quadratic => ObjectiveSpec::Quadratic,
            ObjectiveName::Logistic => ObjectiveSpec::Logistic { l2: r.get("l2", 0.0) },
            ObjectiveName::Mlp => ObjectiveSpec::Mlp { hidden: r.get("hidden", 16) },
        };

        let default_batch = if classification { 50 } else { 20 };
        cfg.worker.batch = match r.raw("batch") {
            Some("full") => BatchSize::Full,
            _ => BatchSize::Sampled(r.get("batch", default_batch)),
        };

        cfg.data.samples = r.get("samples", cfg.data.samples);
        cfg.data.dim = r.get("dim", cfg.data.dim);
        cfg.data.noise_std = r.get("noise_std", cfg.data.noise_std);
        cfg.data.classes = r.get("classes", cfg.data.classes);
        cfg.data.separation = r.get("separation", cfg.data.separation);
        cfg.test_fraction = r.get("test_fraction", cfg.test_fraction);

        let skew = r.choice("partition", true, &[("iid", false), ("label-skew", true)]);
        r.forbid_unless(skew, &["classes_per_device"], "with partition=label-skew");
        cfg.partition = if skew {
            PartitionSpec::LabelSkew {
                per_device: r.get("classes_per_device", 2),
            }
        } else {
            PartitionSpec::Iid
        };

        let order = r.choice(
            "device_order",
            DeviceOrder::Uniform,
            &[("uniform", DeviceOrder::Uniform), ("round-robin", DeviceOrder::RoundRobin)],
        );
        let latency = algorithm == Some(Algorithm::FedAsyncLatency);
        r.forbid_unless(
            latency,
            &["compute_delay", "network_delay", "latency_scales"],
            "with algorithm=fedasync-latency",
        );
        cfg.mode = if latency {
            let mut dist = |key: &str, default: DelayDist| match r.raw(key).map(parse_dist) {
                None => default,
                Some(Ok(d)) => d,
                Some(Err(e)) => {
                    r.problems.push(format!("{key}: {e}"));
                    default
                }
            };
            let compute = dist("compute_delay", DelayDist::Exponential { mean: 1.0 });
            let network = dist("network_delay", DelayDist::Constant(0.0));
            let scales: Vec<f64> = match r.raw("latency_scales") {
                None => vec![1.0],
                Some(s) => match s.split(',').map(|x| x.trim().parse::<f64>()).collect() {
                    Ok(v) => v,
                    Err(_) => {
                        r.problems.push(format!("latency_scales: cannot parse {s:?}"));
                        vec![1.0]
                    }
                },
            };
            let scales = match scales.len() {
                1 => vec![scales[0]; cfg.devices],
                n if n == cfg.devices => scales,
                n => {
                    r.problems.push(format!(
                        "latency_scales: need 1 or {} values, got {n}",
                        cfg.devices
                    ));
                    vec![1.0; cfg.devices]
                }
            };
            StalenessMode::Latency {
                profiles: scales
                    .into_iter()
                    .map(|scale| LatencyProfile { compute, network, scale })
                    .collect(),
            }
        } else {
            StalenessMode::Sampled { order }
        };

        cfg.eval_every = r.get("eval_every", cfg.eval_every);
        let repeats = r.get("repeats", 10usize);
        let out = r.raw("out").map(PathBuf::from);
        let format = r.choice("format", Format::Csv, &[("csv", Format::Csv), ("jsonl", Format::Jsonl)]);
        let threshold = r.get("threshold", 0.1f64);
        let max_frame = r.get("max_frame", DEFAULT_MAX_FRAME);

        let mut problems = r.problems;
        problems.extend(cfg.problems());
        if algorithm == Some(Algorithm::FedAvg) {
            problems.extend(cfg.fedavg.problems(cfg.devices));
        }
        if cfg.eval_every == 0 {
            problems.push("eval_every must be >= 1".into());
        }
        if repeats == 0 {
            problems.push("repeats must be >= 1".into());
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            problems.push(format!("threshold must lie in (0, 1), got {threshold}"));
        }
        if max_frame < 16 {
            problems.push(format!("max_frame must be >= 16 bytes, got {max_frame}"));
        }
        if !problems.is_empty() {
            return Err(ConfigError { problems });
        }
        Ok(RunSpec {
            algorithm,
            experiment: cfg,
            repeats,
            out,
            format,
            threshold,
            max_frame,
        })
    }

    /// The algorithm, or an error naming the missing key.
    pub fn require_algorithm(&self) -> Result<Algorithm, ConfigError> {
        self.algorithm.ok_or_else(|| ConfigError {
            problems: vec![format!(
                "missing required key \"algorithm\" (one of {})",
                names(&Algorithm::ALL)
            )],
        })
    }

    /// Fully resolved config, fed back through [`RunSpec::from_pairs`] gives
    /// the same spec.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let c = &self.experiment;
        let mut out: Vec<(&str, String)> = Vec::new();
        if let Some(a) = self.algorithm {
            out.push(("algorithm", a.name().into()));
        }
        out.push(("devices", c.devices.to_string()));
        out.push(("seed", c.seed.to_string()));
        out.push(("epochs", c.server.total_epochs.to_string()));
        out.push(("alpha", c.server.alpha.to_string()));
        match c.server.strategy {
            StalenessStrategy::Constant => out.push(("strategy", "constant".into())),
            StalenessStrategy::Polynomial { a } => {
                out.push(("strategy", "polynomial".into()));
                out.push(("poly_a", a.to_string()));
            }
            StalenessStrategy::Hinge { a, b } => {
                out.push(("strategy", "hinge".into()));
                out.push(("hinge_a", a.to_string()));
                out.push(("hinge_b", b.to_string()));
            }
        }
        out.push(("max_staleness", c.server.max_staleness.to_string()));
        out.push(("gamma", c.worker.gamma.to_string()));
        out.push(("rho", c.worker.rho.to_string()));
        out.push(("h_min", c.worker.h_min.to_string()));
        out.push(("h_max", c.worker.h_max.to_string()));
        out.push((
            "batch",
            match c.worker.batch {
                BatchSize::Full => "full".into(),
                BatchSize::Sampled(m) => m.to_string(),
            },
        ));
        out.push(("fedavg_k", c.fedavg.k.to_string()));
        out.push(("fedavg_h", c.fedavg.local_iters.to_string()));
        match c.objective {
            ObjectiveSpec::Quadratic => {
                out.push(("objective", "quadratic".into()));
            }
            ObjectiveSpec::Logistic { l2 } => {
                out.push(("objective", "logistic".into()));
                out.push(("l2", l2.to_string()));
            }
            ObjectiveSpec::Mlp { hidden } => {
                out.push(("objective", "mlp".into()));
                out.push(("hidden", hidden.to_string()));
            }
        }
        out.push(("samples", c.data.samples.to_string()));
        out.push(("dim", c.data.dim.to_string()));
        if c.objective.is_classification() {
            out.push(("classes", c.data.classes.to_string()));
            out.push(("separation", c.data.separation.to_string()));
        } else {
            out.push(("noise_std", c.data.noise_std.to_string()));
        }
        out.push(("test_fraction", c.test_fraction.to_string()));
        match c.partition {
            PartitionSpec::Iid => out.push(("partition", "iid".into())),
            PartitionSpec::LabelSkew { per_device } => {
                out.push(("partition", "label-skew".into()));
                out.push(("classes_per_device", per_device.to_string()));
            }
        }
        match &c.mode {
            StalenessMode::Sampled { order } => out.push((
                "device_order",
                match order {
                    DeviceOrder::Uniform => "uniform".into(),
                    DeviceOrder::RoundRobin => "round-robin".into(),
                },
            )),
            StalenessMode::Latency { profiles } => {
                // Profiles built here share distributions and differ only in scale.
                if let Some(p) = profiles.first() {
                    out.push(("compute_delay", fmt_dist(&p.compute)));
                    out.push(("network_delay", fmt_dist(&p.network)));
                }
                let scales: Vec<String> = profiles.iter().map(|p| p.scale.to_string()).collect();
                out.push(("latency_scales", scales.join(",")));
            }
        }
        out.push(("eval_every", c.eval_every.to_string()));
        out.push(("repeats", self.repeats.to_string()));
        if let Some(p) = &self.out {
            out.push(("out", p.display().to_string()));
        }
        out.push(("format", self.format.extension().into()));
        out.push(("threshold", self.threshold.to_string()));
        out.push(("max_frame", self.max_frame.to_string()));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

//! Flat `section.key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown or repeated keys are
//! rejected with an error naming the key. Relative dataset paths resolve
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SkewPlan;
use crate::error::{Error, Result};
use crate::reference::{FedAvgOptions, Weighting};

const KNOWN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.source",
    "problem.n",
    "problem.d",
    "problem.rho",
    "problem.mu",
    "problem.noise",
    "problem.target",
    "problem.normalize",
    "problem.intercept",
    "partition.kind",
    "partition.zeros",
    "partition.ones",
    "partition.mixed",
    "stepsize.mode",
    "stepsize.gradient",
    "stepsize.newton",
    "stepsize.a_i",
    "stepsize.b_i",
    "clients.newton",
    "run.iters",
    "run.tol",
    "run.seed",
    "run.metric_cadence",
    "output.dir",
    "output.timing",
    "fedavg.eta",
    "fedavg.local_steps",
    "fedavg.weighting",
    "mm.beta",
    "verify.samples",
    "methods",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Linreg,
    Logreg,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Synthetic,
    Csv(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    /// Client assignment produced by the synthetic generator.
    Generated,
    /// Sort by target, contiguous blocks with uniformly drawn sizes.
    Sorted,
    /// Label-restricted clients with uniformly drawn shares.
    LabelSkew,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepsizeModeSpec {
    Auto,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Newton clients taken from `clients.newton`.
    FedHybrid,
    FedHG,
    FedHN,
    /// First `k` clients are Newton-type.
    FedHFirst(usize),
    FedAvg,
    MmNewton,
    MmGradient,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::FedHybrid => "fedhybrid".into(),
            Method::FedHG => "fedh-g".into(),
            Method::FedHN => "fedh-n".into(),
            Method::FedHFirst(k) => format!("fedh-{k}"),
            Method::FedAvg => "fedavg".into(),
            Method::MmNewton => "mm-newton".into(),
            Method::MmGradient => "mm-gradient".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "fedhybrid" => Method::FedHybrid,
            "fedh-g" => Method::FedHG,
            "fedh-n" => Method::FedHN,
            "fedavg" => Method::FedAvg,
            "mm-newton" => Method::MmNewton,
            "mm-gradient" => Method::MmGradient,
            other => match other.strip_prefix("fedh-").and_then(|k| k.parse().ok()) {
                Some(k) => Method::FedHFirst(k),
                None => return Err(format!("unknown method '{other}'")),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub kind: ProblemKind,
    pub source: Source,
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub mu: f64,
    pub noise: f64,
    pub target: Option<String>,
    pub normalize: bool,
    pub intercept: bool,
    pub partition: PartitionKind,
    /// Explicit `(zeros, ones, mixed)` label plan.
    pub skew_counts: Option<(usize, usize, usize)>,
    pub stepsize_mode: StepsizeModeSpec,
    pub gradient_steps: Option<(f64, f64)>,
    pub newton_steps: Option<(f64, f64)>,
    pub a_i: Option<Vec<f64>>,
    pub b_i: Option<Vec<f64>>,
    /// 0-based Newton-type client indices.
    pub newton_clients: Vec<usize>,
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub metric_cadence: usize,
    pub out_dir: PathBuf,
    pub timing: bool,
    pub fedavg: FedAvgOptions,
    pub mm_beta: Option<f64>,
    pub verify_samples: usize,
    pub methods: Vec<Method>,
    /// Every key as written, for the run manifest.
    pub raw: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got '{value}'"))),
    }
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(key, value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::config(key, "expected two values 'a, b'")),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::config(key, "must be at least 1"))
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {} is not 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(key, "unknown key"));
            }
            if raw.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(key, "repeated key"));
            }
        }
        Self::from_map(raw, base_dir)
    }

    fn from_map(raw: BTreeMap<String, String>, base_dir: &Path) -> Result<Self> {
        let get = |k: &str| raw.get(k).map(String::as_str);
        let kind = match get("problem.kind") {
            Some("linreg") => ProblemKind::Linreg,
            Some("logreg") => ProblemKind::Logreg,
            Some(other) => {
                return Err(Error::config(
                    "problem.kind",
                    format!("expected linreg or logreg, got '{other}'"),
                ))
            }
            None => return Err(Error::config("problem.kind", "required")),
        };
        let source = match get("problem.source") {
            None | Some("synthetic") => Source::Synthetic,
            Some(s) => match s.strip_prefix("csv:") {
                Some(p) => {
                    let p = Path::new(p.trim());
                    let path = if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        base_dir.join(p)
                    };
                    if !path.is_file() {
                        return Err(Error::config(
                            "problem.source",
                            format!("dataset {} not found", path.display()),
                        ));
                    }
                    Source::Csv(path)
                }
                None => {
                    return Err(Error::config(
                        "problem.source",
                        format!("expected synthetic or csv:<path>, got '{s}'"),
                    ))
                }
            },
        };
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };
        let count = |k: &str, default: usize| -> Result<usize> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };
        let flag = |k: &str, default: bool| -> Result<bool> { get(k).map_or(Ok(default), |v| parse_bool(k, v)) };

        let n = at_least_one("problem.n", count("problem.n", 20)?)?;
        let d = at_least_one("problem.d", count("problem.d", 30)?)?;
        let rho = num("problem.rho", 0.1)?;
        if !(rho >= 0.0) {
            return Err(Error::config("problem.rho", "must be non-negative"));
        }
        let mu = positive("problem.mu", num("problem.mu", 9.0)?)?;
        let noise = num("problem.noise", crate::data::DEFAULT_NOISE_SIGMA)?;
        let target = get("problem.target").map(str::to_string);
        if matches!(source, Source::Csv(_)) && target.is_none() {
            return Err(Error::config("problem.target", "required for csv sources"));
        }

        let partition = match (get("partition.kind"), &source, kind) {
            (None, Source::Synthetic, _) | (Some("generated"), Source::Synthetic, _) => PartitionKind::Generated,
            (None, Source::Csv(_), ProblemKind::Linreg) | (Some("sorted"), Source::Csv(_), ProblemKind::Linreg) => {
                PartitionKind::Sorted
            }
            (None, Source::Csv(_), ProblemKind::Logreg) | (Some("label_skew"), Source::Csv(_), ProblemKind::Logreg) => {
                PartitionKind::LabelSkew
            }
            (Some(other), _, _) => {
                return Err(Error::config(
                    "partition.kind",
                    format!("'{other}' does not apply to this problem kind and source"),
                ))
            }
        };
        let skew_keys = ["partition.zeros", "partition.ones", "partition.mixed"];
        let skew_counts = if skew_keys.iter().any(|k| raw.contains_key(*k)) {
            let z = count("partition.zeros", 0)?;
            let o = count("partition.ones", 0)?;
            let m = count("partition.mixed", 0)?;
            if z + o + m != n {
                return Err(Error::config(
                    "partition.mixed",
                    format!("label plan covers {} clients, expected {n}", z + o + m),
                ));
            }
            Some((z, o, m))
        } else {
            None
        };

        let stepsize_mode = match get("stepsize.mode") {
            None | Some("auto") => StepsizeModeSpec::Auto,
            Some("manual") => StepsizeModeSpec::Manual,
            Some(other) => {
                return Err(Error::config(
                    "stepsize.mode",
                    format!("expected auto or manual, got '{other}'"),
                ))
            }
        };
        let pair = |k: &str| -> Result<Option<(f64, f64)>> {
            get(k)
                .map(|v| {
                    let (a, b) = parse_pair(k, v)?;
                    Ok((positive(k, a)?, positive(k, b)?))
                })
                .transpose()
        };
        let gradient_steps = pair("stepsize.gradient")?;
        let newton_steps = pair("stepsize.newton")?;
        let list = |k: &str| -> Result<Option<Vec<f64>>> {
            get(k)
                .map(|v| {
                    let xs: Vec<f64> = parse_list(k, v)?;
                    if xs.len() != n {
                        return Err(Error::config(k, format!("expected {n} values, got {}", xs.len())));
                    }
                    xs.iter().try_for_each(|x| positive(k, *x).map(|_| ()))?;
                    Ok(xs)
                })
                .transpose()
        };
        let a_i = list("stepsize.a_i")?;
        let b_i = list("stepsize.b_i")?;
        if stepsize_mode == StepsizeModeSpec::Manual {
            let covered = (a_i.is_some() && b_i.is_some()) || (gradient_steps.is_some() || newton_steps.is_some());
            if !covered {
                return Err(Error::config(
                    "stepsize.mode",
                    "manual mode needs stepsize.gradient/newton or a_i/b_i",
                ));
            }
        }

        let mut newton_clients = Vec::new();
        if let Some(v) = get("clients.newton") {
            for idx in parse_list::<usize>("clients.newton", v)? {
                if idx == 0 || idx > n {
                    return Err(Error::config(
                        "clients.newton",
                        format!("client index {idx} outside 1..={n}"),
                    ));
                }
                newton_clients.push(idx - 1);
            }
            newton_clients.sort_unstable();
            newton_clients.dedup();
        }

        let iters = at_least_one("run.iters", count("run.iters", 500)?)?;
        let tol = num("run.tol", 0.0)?;
        let seed = get("run.seed").map_or(Ok(1), |v| parse_value("run.seed", v))?;
        let metric_cadence = at_least_one("run.metric_cadence", count("run.metric_cadence", 1)?)?;
        let out_dir = PathBuf::from(get("output.dir").unwrap_or("out"));
        let timing = flag("output.timing", false)?;

        let weighting = match get("fedavg.weighting") {
            None | Some("samples") => Weighting::Samples,
            Some("uniform") => Weighting::Uniform,
            Some(other) => {
                return Err(Error::config(
                    "fedavg.weighting",
                    format!("expected samples or uniform, got '{other}'"),
                ))
            }
        };
        let fedavg = FedAvgOptions {
            eta: positive("fedavg.eta", num("fedavg.eta", 0.01)?)?,
            local_steps: at_least_one("fedavg.local_steps", count("fedavg.local_steps", 1)?)?,
            weighting,
        };
        let mm_beta = get("mm.beta")
            .map(|v| parse_value("mm.beta", v).and_then(|b| positive("mm.beta", b)))
            .transpose()?;
        let verify_samples = at_least_one("verify.samples", count("verify.samples", 5)?)?;

        let methods = match get("methods") {
            None => vec![Method::FedHybrid],
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Method>().map_err(|e| Error::config("methods", e)))
                .collect::<Result<Vec<_>>>()?,
        };
        if methods.is_empty() {
            return Err(Error::config("methods", "no methods listed"));
        }
        for m in &methods {
            if let Method::FedHFirst(k) = m {
                if *k > n {
                    return Err(Error::config("methods", format!("{m} needs at least {k} clients")));
                }
            }
        }

        Ok(Self {
            kind,
            source,
            n,
            d,
            rho,
            mu,
            noise,
            target,
            normalize: flag("problem.normalize", true)?,
            intercept: flag("problem.intercept", true)?,
            partition,
            skew_counts,
            stepsize_mode,
            gradient_steps,
            newton_steps,
            a_i,
            b_i,
            newton_clients,
            iters,
            tol,
            seed,
            metric_cadence,
            out_dir,
            timing,
            fedavg,
            mm_beta,
            verify_samples,
            methods,
            raw,
        })
    }

    pub fn skew_plan(&self) -> SkewPlan {
        match self.skew_counts {
            Some((z, o, m)) => SkewPlan::from_counts(z, o, m),
            None => SkewPlan::default_for(self.n),
        }
    }
}

//! Synthetic dataset generators, CSV ingestion and non-IID partitioning.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64(seed)`.
//! Independent draws use separate ChaCha streams of the same seed: stream 0 is
//! the shared stream (dataset sizes, ground truth), stream `i + 1` belongs to
//! client `i`. Generated data is therefore identical across runs, platforms and
//! thread counts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Mean and standard deviation of the log of the per-client sample count.
pub const SIZE_LOG_MEAN: f64 = 4.0;
pub const SIZE_LOG_STD: f64 = 2.0;
/// Offset added to every sampled per-client size.
pub const SIZE_OFFSET: usize = 50;
/// Noise level of the synthetic regression responses.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;

const SKEW_RETRIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// `N × d`, one sample per row.
    pub features: Matrix,
    pub targets: Vector,
    pub task: Task,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Vector, task: Task) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if targets.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: targets.len(),
            });
        }
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            features,
            targets,
            task,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Features and targets of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> (Matrix, Vector) {
        let x = Matrix::from_fn(rows.len(), self.dim(), |r, c| self.features[(rows[r], c)]);
        let y = Vector::from_fn(rows.len(), |r, _| self.targets[rows[r]]);
        (x, y)
    }
}

/// Row indices owned by each client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    clients: Vec<Vec<usize>>,
}

impl Partition {
    /// Checks that `clients` is a disjoint, exhaustive cover of `0..rows`.
    pub fn new(clients: Vec<Vec<usize>>, rows: usize) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::InvalidArgument("partition needs at least one client".into()));
        }
        let mut seen = vec![false; rows];
        let mut count = 0;
        for &r in clients.iter().flatten() {
            if r >= rows || seen[r] {
                return Err(Error::InvalidArgument(format!(
                    "row {r} is out of range or assigned twice"
                )));
            }
            seen[r] = true;
            count += 1;
        }
        if count != rows {
            return Err(Error::SizeMismatch {
                expected: rows,
                got: count,
            });
        }
        Ok(Self { clients })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }
}

/// Per-client label composition for label-skewed classification data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelRegime {
    OnlyZero,
    OnlyOne,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewPlan {
    pub regimes: Vec<LabelRegime>,
}

impl SkewPlan {
    /// `zeros` only-0 clients, then `ones` only-1 clients, then `mixed` mixed clients.
    pub fn from_counts(zeros: usize, ones: usize, mixed: usize) -> Self {
        let mut regimes = vec![LabelRegime::OnlyZero; zeros];
        regimes.extend(std::iter::repeat_n(LabelRegime::OnlyOne, ones));
        regimes.extend(std::iter::repeat_n(LabelRegime::Mixed, mixed));
        Self { regimes }
    }

    /// One mixed client; the rest split 11:8 between only-0 and only-1
    /// (11/8/1 for `n = 20`, 4/3/1 for `n = 8`).
    pub fn default_for(n: usize) -> Self {
        if n <= 1 {
            return Self::from_counts(0, 0, n);
        }
        let rest = n - 1;
        let zeros = ((rest as f64) * 11.0 / 19.0).round() as usize;
        Self::from_counts(zeros, rest - zeros, 1)
    }

    pub fn all_mixed(n: usize) -> Self {
        Self::from_counts(0, 0, n)
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn count(&self, regime: LabelRegime) -> usize {
        self.regimes.iter().filter(|&&r| r == regime).count()
    }
}

fn client_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_sizes(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dist = LogNormal::new(SIZE_LOG_MEAN, SIZE_LOG_STD).expect("valid lognormal parameters");
    (0..n)
        .map(|_| {
            let s: f64 = dist.sample(rng);
            s.floor() as usize + SIZE_OFFSET
        })
        .collect()
}

/// Uniform draw on `(0, 1]`.
fn unit_open_closed(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Clone, Debug)]
pub struct LinregConfig {
    pub n: usize,
    pub d: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl LinregConfig {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed,
        }
    }
}

/// Heterogeneous least-squares data: per client `A_i = η_i Â_i` with
/// `η_i ~ N(0, 1)` and `Â_i` uniform on `(0, 1]`, `b_i = A_i ω₀ + v_i`.
pub fn gen_linreg(cfg: &LinregConfig) -> Result<(Dataset, Partition, Vector)> {
    if cfg.n == 0 || cfg.d == 0 {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    let mut shared = client_rng(cfg.seed, 0);
    let sizes = sample_sizes(cfg.n, &mut shared);
    let truth = Vector::from_fn(cfg.d, |_, _| shared.sample(StandardNormal));

    let total: usize = sizes.iter().sum();
    let mut features = Matrix::zeros(total, cfg.d);
    let mut targets = Vector::zeros(total);
    let mut clients = Vec::with_capacity(cfg.n);
    let mut row = 0;
    for (i, &size) in sizes.iter().enumerate() {
        let mut rng = client_rng(cfg.seed, i as u64 + 1);
        let scale: f64 = rng.sample(StandardNormal);
        let start = row;
        for _ in 0..size {
            for c in 0..cfg.d {
                features[(row, c)] = scale * unit_open_closed(&mut rng);
            }
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_sigma;
            targets[row] = features.row(row).transpose().dot(&truth) + noise;
            row += 1;
        }
        clients.push((start..row).collect());
    }
    let ds = Dataset::new(features, targets, Task::Regression)?;
    let partition = Partition::new(clients, total)?;
    Ok((ds, partition, truth))
}

/// Setup-(1) style synthetic regression data with the default noise level.
pub fn gen_linreg_synthetic(n: usize, d: usize, seed: u64) -> Result<(Dataset, Partition, Vector)> {
    gen_linreg(&LinregConfig::new(n, d, seed))
}

/// Label-skewed logistic data: standard normal features, labels drawn from a
/// random logistic model, rows routed to clients to satisfy `plan`.
///
/// A mixed client receives `⌊N_i/2⌋` label-0 rows and the rest label-1 rows.
pub fn gen_logreg_synthetic(n: usize, d: usize, plan: &SkewPlan, seed: u64) -> Result<(Dataset, Partition)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    if plan.len() != n {
        return Err(Error::InvalidArgument(format!(
            "skew plan has {} clients, expected {n}",
            plan.len()
        )));
    }
    let mut shared = client_rng(seed, 0);
    let sizes = sample_sizes(n, &mut shared);

    let mut need = [0usize; 2];
    let demand: Vec<[usize; 2]> = plan
        .regimes
        .iter()
        .zip(&sizes)
        .map(|(regime, &size)| match regime {
            LabelRegime::OnlyZero => [size, 0],
            LabelRegime::OnlyOne => [0, size],
            LabelRegime::Mixed => [size / 2, size - size / 2],
        })
        .collect();
    for dm in &demand {
        need[0] += dm[0];
        need[1] += dm[1];
    }
    let budget = 20 * (need[0] + need[1]) + 1000;

    for attempt in 0..SKEW_RETRIES {
        let mut rng = client_rng(seed, 1_000_000 + attempt as u64);
        let truth = Vector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let mut pools: [Vec<Vector>; 2] = [Vec::new(), Vec::new()];
        let mut draws = 0;
        while (pools[0].len() < need[0] || pools[1].len() < need[1]) && draws < budget {
            draws += 1;
            let x = Vector::from_fn(d, |_, _| rng.sample(StandardNormal));
            let p = 1.0 / (1.0 + (-x.dot(&truth)).exp());
            let label = usize::from(rng.random::<f64>() < p);
            if pools[label].len() < need[label] {
                pools[label].push(x);
            }
        }
        if pools[0].len() < need[0] || pools[1].len() < need[1] {
            continue;
        }

        let total: usize = sizes.iter().sum();
        let mut features = Matrix::zeros(total, d);
        let mut targets = Vector::zeros(total);
        let mut cursor = [0usize; 2];
        let mut clients = Vec::with_capacity(n);
        let mut row = 0;
        for dm in &demand {
            let start = row;
            for label in 0..2 {
                for _ in 0..dm[label] {
                    features.set_row(row, &pools[label][cursor[label]].transpose());
                    targets[row] = label as f64;
                    cursor[label] += 1;
                    row += 1;
                }
            }
            clients.push((start..row).collect());
        }
        let ds = Dataset::new(features, targets, Task::Classification)?;
        let partition = Partition::new(clients, total)?;
        return Ok((ds, partition));
    }
    Err(Error::InfeasibleSkew(format!(
        "could not draw {} label-0 and {} label-1 rows in {SKEW_RETRIES} attempts",
        need[0], need[1]
    )))
}

/// Largest-remainder apportionment of `total` items by `weights`.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // ties broken by index so the result is deterministic
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// `n` dataset sizes from uniform random weights, summing to `total`, each at least 1.
pub fn uniform_sizes(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || total < n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {total} rows over {n} clients"
        )));
    }
    let mut rng = client_rng(seed, 0);
    let weights: Vec<f64> = (0..n).map(|_| unit_open_closed(&mut rng)).collect();
    let mut sizes = apportion(total, &weights);
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor = (0..n)
            .max_by_key(|&i| (sizes[i], std::cmp::Reverse(i)))
            .expect("n >= 1");
        sizes[donor] -= 1;
        sizes[empty] += 1;
    }
    Ok(sizes)
}

/// Sorts rows by target (ascending, stable) and hands out contiguous blocks of the given sizes.
pub fn partition_sorted_blocks(ds: &Dataset, sizes: &[usize]) -> Result<Partition> {
    let got: usize = sizes.iter().sum();
    if got != ds.len() {
        return Err(Error::SizeMismatch {
            expected: ds.len(),
            got,
        });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| ds.targets[a].total_cmp(&ds.targets[b]));
    let mut clients = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        clients.push(order[start..start + s].to_vec());
        start += s;
    }
    Partition::new(clients, ds.len())
}

/// Routes a fixed binary-labelled dataset to clients according to `plan`,
/// splitting each label pool evenly across the clients that accept it.
pub fn partition_label_skew(ds: &Dataset, plan: &SkewPlan) -> Result<Partition> {
    partition_label_skew_weighted(ds, plan, &vec![1.0; plan.len()])
}

/// Like [`partition_label_skew`], but each client's share of a label pool is
/// proportional to its weight (a mixed client uses its full weight in both pools).
pub fn partition_label_skew_weighted(ds: &Dataset, plan: &SkewPlan, weights: &[f64]) -> Result<Partition> {
    if plan.is_empty() {
        return Err(Error::InvalidArgument("empty skew plan".into()));
    }
    if weights.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            found: weights.len(),
        });
    }
    let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (r, &y) in ds.targets.iter().enumerate() {
        match y {
            0.0 => pools[0].push(r),
            1.0 => pools[1].push(r),
            other => {
                return Err(Error::InvalidArgument(format!("row {r} has non-binary label {other}")));
            }
        }
    }
    let accepts = |regime: LabelRegime, label: usize| {
        matches!(
            (regime, label),
            (LabelRegime::Mixed, _) | (LabelRegime::OnlyZero, 0) | (LabelRegime::OnlyOne, 1)
        )
    };

    let mut clients = vec![Vec::new(); plan.len()];
    for (label, pool) in pools.iter().enumerate() {
        let receivers: Vec<usize> = (0..plan.len()).filter(|&i| accepts(plan.regimes[i], label)).collect();
        if receivers.is_empty() {
            if pool.is_empty() {
                continue;
            }
            return Err(Error::InfeasibleSkew(format!(
                "{} rows with label {label} but no client accepts them",
                pool.len()
            )));
        }
        if pool.len() < receivers.len() {
            return Err(Error::InfeasibleSkew(format!(
                "{} clients need label {label} but only {} such rows exist",
                receivers.len(),
                pool.len()
            )));
        }
        let w: Vec<f64> = receivers.iter().map(|&i| weights[i]).collect();
        let mut counts = apportion(pool.len() - receivers.len(), &w);
        counts.iter_mut().for_each(|c| *c += 1);
        let mut start = 0;
        for (&i, &c) in receivers.iter().zip(&counts) {
            clients[i].extend_from_slice(&pool[start..start + c]);
            start += c;
        }
    }
    for rows in &mut clients {
        rows.sort_unstable();
    }
    Partition::new(clients, ds.len())
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub target: String,
    pub task: Task,
    pub normalize: bool,
    pub intercept: bool,
}

impl CsvOptions {
    pub fn regression(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            task: Task::Regression,
            normalize: false,
            intercept: false,
        }
    }

    pub fn classification(target: impl Into<String>) -> Self {
        Self {
            task: Task::Classification,
            ..Self::regression(target)
        }
    }

    pub fn normalize(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn intercept(mut self, on: bool) -> Self {
        self.intercept = on;
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, opts)
}

/// Parses CSV text with a header row. See [`load_csv`].
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let target_col = header
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::Parse {
            row: 1,
            column: opts.target.clone(),
            message: "target column not found in header".into(),
        })?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(idx + 2, |p| p.line() as usize),
            column: String::new(),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 2, |p| p.line() as usize);
        if let Some((c, _)) = record.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(Error::Parse {
                row: line,
                column: header[c].clone(),
                message: "missing value".into(),
            });
        }
        cells.push(record.iter().map(str::to_owned).collect());
        lines.push(line);
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let column_numeric = |c: usize| cells.iter().all(|row| row[c].parse::<f64>().is_ok());
    let first_bad = |c: usize| -> Error {
        let r = cells.iter().position(|row| row[c].parse::<f64>().is_err()).unwrap_or(0);
        Error::Parse {
            row: lines[r],
            column: header[c].clone(),
            message: format!("`{}` is not a number", cells[r][c]),
        }
    };

    let targets: Vec<f64> = match opts.task {
        Task::Regression => {
            if !column_numeric(target_col) {
                return Err(first_bad(target_col));
            }
            cells.iter().map(|row| row[target_col].parse().unwrap()).collect()
        }
        Task::Classification => {
            let levels: BTreeSet<&str> = cells.iter().map(|row| row[target_col].as_str()).collect();
            let numeric_binary = levels
                .iter()
                .all(|l| matches!(l.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0));
            if numeric_binary {
                cells.iter().map(|row| row[target_col].parse().unwrap()).collect()
            } else if levels.len() <= 2 {
                let positive = levels.iter().nth(1).copied();
                cells
                    .iter()
                    .map(|row| f64::from(u8::from(Some(row[target_col].as_str()) == positive)))
                    .collect()
            } else {
                return Err(Error::Parse {
                    row: lines[0],
                    column: header[target_col].clone(),
                    message: format!("classification target has {} levels, expected 2", levels.len()),
                });
            }
        }
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for c in (0..header.len()).filter(|&c| c != target_col) {
        if column_numeric(c) {
            columns.push(cells.iter().map(|row| row[c].parse().unwrap()).collect());
            names.push(header[c].clone());
        } else if opts.task == Task::Classification {
            let levels: BTreeMap<&str, usize> = cells
                .iter()
                .map(|row| row[c].as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(k, l)| (l, k))
                .collect();
            for (level, &k) in &levels {
                columns.push(
                    cells
                        .iter()
                        .map(|row| f64::from(u8::from(levels[row[c].as_str()] == k)))
                        .collect(),
                );
                names.push(format!("{}={}", header[c], level));
            }
        } else {
            return Err(first_bad(c));
        }
    }

    if opts.normalize {
        for col in &mut columns {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.iter_mut().for_each(|v| *v = (*v - mean) / std);
        }
    }
    if opts.intercept {
        columns.push(vec![1.0; cells.len()]);
        names.push("intercept".into());
    }

    let rows = cells.len();
    let features = Matrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
    let mut ds = Dataset::new(features, Vector::from_vec(targets), opts.task)?;
    ds.feature_names = names;
    Ok(ds)
}

/// Generators for the stand-in CSV files shipped under `data/`.
pub mod standin {
    use std::fmt::Write;

    use super::*;

    pub const HOUSING_ROWS: usize = 506;
    pub const HOUSING_FEATURES: usize = 13;

    /// A regression table of 506 rows and 13 numeric features plus the target `medv`.
    pub fn housing_csv(seed: u64) -> String {
        let mut rng = client_rng(seed, 0);
        let coef: Vec<f64> = (0..HOUSING_FEATURES)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
            .collect();
        let scales: Vec<f64> = (0..HOUSING_FEATURES).map(|j| 1.0 + (j as f64) * 2.5).collect();
        let mut out = String::new();
        let names: Vec<String> = (1..=HOUSING_FEATURES).map(|j| format!("f{j:02}")).collect();
        writeln!(out, "{},medv", names.join(",")).unwrap();
        for _ in 0..HOUSING_ROWS {
            let latent: f64 = rng.sample(StandardNormal);
            let mut row = Vec::with_capacity(HOUSING_FEATURES);
            let mut y = 22.0;
            for j in 0..HOUSING_FEATURES {
                let z: f64 = 0.6 * latent + 0.8 * rng.sample::<f64, _>(StandardNormal);
                y += coef[j] * z;
                row.push(format!("{:.4}", scales[j] * (z + 2.0)));
            }
            y += rng.sample::<f64, _>(StandardNormal) * 2.0;
            writeln!(out, "{},{:.2}", row.join(","), y.max(5.0)).unwrap();
        }
        out
    }

    /// A categorical classification table with target `class` in {e, p}.
    pub fn mushroom_csv(rows: usize, seed: u64) -> String {
        const ATTRS: [(&str, &[&str]); 8] = [
            ("cap_shape", &["b", "c", "f", "k", "s", "x"]),
            ("cap_color", &["b", "e", "g", "n", "w", "y"]),
            ("bruises", &["f", "t"]),
            ("odor", &["a", "c", "f", "l", "n", "p"]),
            ("gill_size", &["b", "n"]),
            ("stalk_shape", &["e", "t"]),
            ("ring_type", &["e", "f", "l", "n", "p"]),
            ("habitat", &["d", "g", "l", "m", "p", "u", "w"]),
        ];
        let mut rng = client_rng(seed, 0);
        let effects: Vec<Vec<f64>> = ATTRS
            .iter()
            .map(|(_, levels)| {
                levels
                    .iter()
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5)
                    .collect()
            })
            .collect();
        let mut out = String::new();
        let names: Vec<&str> = ATTRS.iter().map(|(n, _)| *n).collect();
        writeln!(out, "class,{}", names.join(",")).unwrap();
        for _ in 0..rows {
            let mut score = 0.0;
            let mut row = Vec::with_capacity(ATTRS.len());
            for (a, (_, levels)) in ATTRS.iter().enumerate() {
                let k = rng.random_range(0..levels.len());
                score += effects[a][k];
                row.push(levels[k]);
            }
            let p = 1.0 / (1.0 + (-score).exp());
            let class = if rng.random::<f64>() < p { "p" } else { "e" };
            writeln!(out, "{class},{}", row.join(",")).unwrap();
        }
        out
    }
}

//! Config-driven runs: build the problem, execute each method, write one CSV
//! trace per method plus a JSON manifest, and run the verification suite.

use std::fmt;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::config::{Config, Method, PartitionKind, ProblemKind, Source, StepsizeModeSpec};
use crate::data::{
    gen_linreg, gen_logreg_synthetic, load_csv, partition_label_skew_weighted, partition_sorted_blocks, uniform_sizes,
    CsvOptions, LinregConfig,
};
use crate::error::{Error, Result};
use crate::hybrid::{rate_rho, run_with, safe_stepsizes, Init, RateConstants, RunOptions, Snapshot, StepsizePlan};
use crate::metrics::{IterateRecord, MetricsEngine};
use crate::model::ProblemInstance;
use crate::numerics::{Matrix, Vector};
use crate::reference::{fedavg_run, mm_run, DualRule};
use crate::simnet::{Executor, UpdateKind};
use crate::theory::{
    curvature_check, descent_monitors, dual_grad_formula, dual_hessian_formula, dual_newton_relation, stack, unstack,
    CurvatureReport, MonitorReport,
};

pub const CSV_HEADER: [&str; 10] = [
    "iter",
    "delta_lambda",
    "delta_x",
    "delta_combined",
    "consensus_err",
    "primal_grad_norm",
    "fun_gap",
    "elapsed_ms",
    "uplink_bytes",
    "downlink_bytes",
];

pub const MANIFEST_FILE: &str = "manifest.json";

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub iters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(k) = self.iters {
            cfg.iters = k.max(1);
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "seed": self.seed,
            "out": self.out.as_ref().map(|p| p.display().to_string()),
            "iters": self.iters,
        })
    }
}

/// Builds the dataset, partition and problem described by `cfg`.
pub fn build_problem(cfg: &Config) -> Result<ProblemInstance> {
    match (&cfg.source, cfg.kind) {
        (Source::Synthetic, ProblemKind::Linreg) => {
            let gen = LinregConfig {
                noise_sigma: cfg.noise,
                ..LinregConfig::new(cfg.n, cfg.d, cfg.seed)
            };
            let (ds, part, _) = gen_linreg(&gen)?;
            ProblemInstance::ridge_regression(&ds, &part, cfg.rho, cfg.mu)
        }
        (Source::Synthetic, ProblemKind::Logreg) => {
            let (ds, part) = gen_logreg_synthetic(cfg.n, cfg.d, &cfg.skew_plan(), cfg.seed)?;
            ProblemInstance::logistic_regression(&ds, &part, cfg.rho, cfg.mu)
        }
        (Source::Csv(path), kind) => {
            let target = cfg.target.clone().unwrap_or_default();
            let opts = match kind {
                ProblemKind::Linreg => CsvOptions::regression(target),
                ProblemKind::Logreg => CsvOptions::classification(target),
            }
            .normalize(cfg.normalize)
            .intercept(cfg.intercept);
            let ds = load_csv(path, &opts)?;
            let sizes = uniform_sizes(ds.len(), cfg.n, cfg.seed)?;
            match cfg.partition {
                PartitionKind::LabelSkew => {
                    let weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
                    let part = partition_label_skew_weighted(&ds, &cfg.skew_plan(), &weights)?;
                    ProblemInstance::logistic_regression(&ds, &part, cfg.rho, cfg.mu)
                }
                _ => {
                    let part = partition_sorted_blocks(&ds, &sizes)?;
                    ProblemInstance::ridge_regression(&ds, &part, cfg.rho, cfg.mu)
                }
            }
        }
    }
}

/// Client kinds for a FedHybrid-family method; `None` for the baselines.
pub fn kinds_for(cfg: &Config, method: Method) -> Option<Vec<UpdateKind>> {
    let newton = |flags: &dyn Fn(usize) -> bool| -> Vec<UpdateKind> {
        (0..cfg.n)
            .map(|i| {
                if flags(i) {
                    UpdateKind::Newton
                } else {
                    UpdateKind::Gradient
                }
            })
            .collect()
    };
    match method {
        Method::FedHybrid => Some(newton(&|i| cfg.newton_clients.contains(&i))),
        Method::FedHG => Some(newton(&|_| false)),
        Method::FedHN => Some(newton(&|_| true)),
        Method::FedHFirst(k) => Some(newton(&|i| i < k)),
        Method::FedAvg | Method::MmNewton | Method::MmGradient => None,
    }
}

/// Stepsizes for the given kinds: the safe rule in auto mode, otherwise the
/// per-client lists or the per-kind pairs from the config.
pub fn plan_for(cfg: &Config, problem: &ProblemInstance, kinds: Vec<UpdateKind>) -> Result<StepsizePlan> {
    match cfg.stepsize_mode {
        StepsizeModeSpec::Auto => safe_stepsizes(&problem.curvatures()?, problem.mu(), &kinds),
        StepsizeModeSpec::Manual => {
            let pick = |k: UpdateKind| match k {
                UpdateKind::Gradient => cfg.gradient_steps.or(cfg.newton_steps),
                UpdateKind::Newton => cfg.newton_steps.or(cfg.gradient_steps),
            };
            let mut a = Vec::with_capacity(kinds.len());
            let mut b = Vec::with_capacity(kinds.len());
            for (i, k) in kinds.iter().enumerate() {
                let pair = pick(*k);
                a.push(match &cfg.a_i {
                    Some(v) => v[i],
                    None => {
                        pair.ok_or_else(|| Error::config("stepsize.a_i", "no stepsize for this client"))?
                            .0
                    }
                });
                b.push(match &cfg.b_i {
                    Some(v) => v[i],
                    None => {
                        pair.ok_or_else(|| Error::config("stepsize.b_i", "no stepsize for this client"))?
                            .1
                    }
                });
            }
            StepsizePlan::manual(kinds, a, b)
        }
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Writes the trace rows in the fixed column order.
pub fn write_csv(path: &Path, records: &[IterateRecord]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            fmt_opt(r.delta_lambda),
            fmt_opt(r.delta_x),
            fmt_opt(r.delta),
            fmt_real(r.consensus_err),
            fmt_real(r.primal_grad_norm),
            fmt_real(r.fun_gap),
            fmt_opt(r.elapsed_ms),
            r.uplink_bytes.to_string(),
            r.downlink_bytes.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn record_json(r: &IterateRecord) -> Value {
    json!({
        "iter": r.k,
        "delta_lambda": r.delta_lambda,
        "delta_x": r.delta_x,
        "delta_combined": r.delta,
        "consensus_err": r.consensus_err,
        "primal_grad_norm": r.primal_grad_norm,
        "fun_gap": r.fun_gap,
        "uplink_bytes": r.uplink_bytes,
        "downlink_bytes": r.downlink_bytes,
    })
}

fn rates_json(r: &RateConstants) -> Value {
    json!({
        "m": r.m, "l": r.l, "m_g": r.m_g, "l_g": r.l_g, "l_L": r.l_l,
        "alpha_lo": r.alpha_lo, "beta_lo": r.beta_lo, "beta": r.beta, "kappa": r.kappa,
        "rho": r.rho, "rho_statement": r.rho_statement,
    })
}

/// Trace of one method: the initial record plus one row per logged iteration.
#[derive(Clone, Debug)]
pub struct MethodTrace {
    pub method: Method,
    pub initial: IterateRecord,
    pub rows: Vec<IterateRecord>,
    /// Method-specific manifest fields (stepsizes, constants).
    pub details: Value,
}

struct Logger<'a> {
    cfg: &'a Config,
    start: Instant,
    initial: Option<IterateRecord>,
    rows: Vec<IterateRecord>,
}

impl<'a> Logger<'a> {
    fn new(cfg: &'a Config) -> Self {
        Self {
            cfg,
            start: Instant::now(),
            initial: None,
            rows: Vec::new(),
        }
    }

    /// Stores the record and reports whether the stopping tolerance is met.
    fn push(&mut self, mut rec: IterateRecord) -> ControlFlow<()> {
        if self.cfg.timing {
            rec.elapsed_ms = Some(self.start.elapsed().as_secs_f64() * 1e3);
        }
        let done = self.cfg.tol > 0.0 && rec.consensus_err + rec.primal_grad_norm <= self.cfg.tol;
        if self.initial.is_none() {
            self.initial = Some(rec);
        } else {
            self.rows.push(rec);
        }
        if done {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    fn finish(self, method: Method, details: Value) -> MethodTrace {
        MethodTrace {
            method,
            initial: self.initial.unwrap_or_default(),
            rows: self.rows,
            details,
        }
    }
}

fn fedhybrid_trace(
    cfg: &Config,
    engine: &MetricsEngine<'_>,
    method: Method,
    kinds: Vec<UpdateKind>,
    exec: &Executor,
) -> Result<MethodTrace> {
    let problem = engine.problem();
    let plan = plan_for(cfg, problem, kinds)?;
    let rates = rate_rho(&plan, &problem.curvatures()?, problem.mu())?;
    let opts = RunOptions::new(cfg.iters)
        .cadence(cfg.metric_cadence)
        .executor(exec.clone());
    let mut log = Logger::new(cfg);
    run_with(problem, &plan, &Init::zeros(problem.n(), problem.dim()), &opts, |s| {
        if s.k > 0 && s.k % cfg.metric_cadence != 0 {
            return Ok(ControlFlow::Continue(()));
        }
        let mut rec = engine.record(s.k, &s.primal(), &s.lambda)?;
        rec.uplink_bytes = s.uplink_bytes;
        rec.downlink_bytes = s.downlink_bytes;
        Ok(log.push(rec))
    })?;
    let newton: Vec<usize> = plan
        .kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == UpdateKind::Newton)
        .map(|(i, _)| i + 1)
        .collect();
    let details = json!({
        "newton_clients": newton,
        "stepsize_mode": format!("{:?}", plan.mode).to_lowercase(),
        "a": plan.a,
        "b": plan.b,
        "rates": rates_json(&rates),
    });
    Ok(log.finish(method, details))
}

fn fedavg_trace(cfg: &Config, engine: &MetricsEngine<'_>, exec: &Executor) -> Result<MethodTrace> {
    let problem = engine.problem();
    let mut log = Logger::new(cfg);
    fedavg_run(
        problem,
        &cfg.fedavg,
        &Vector::zeros(problem.dim()),
        cfg.iters,
        exec,
        |s| {
            if s.k > 0 && s.k % cfg.metric_cadence != 0 {
                return Ok(ControlFlow::Continue(()));
            }
            let mut rec = engine.primal_only_record(s.k, &s.omega);
            rec.uplink_bytes = s.uplink_bytes;
            rec.downlink_bytes = s.downlink_bytes;
            Ok(log.push(rec))
        },
    )?;
    let details = json!({
        "eta": cfg.fedavg.eta,
        "local_steps": cfg.fedavg.local_steps,
        "weighting": format!("{:?}", cfg.fedavg.weighting).to_lowercase(),
    });
    Ok(log.finish(Method::FedAvg, details))
}

fn mm_trace(cfg: &Config, engine: &MetricsEngine<'_>, method: Method) -> Result<MethodTrace> {
    let problem = engine.problem();
    let rule = match method {
        Method::MmNewton => DualRule::Newton(cfg.mm_beta.unwrap_or(1.0)),
        _ => DualRule::GradientAscent(cfg.mm_beta.unwrap_or(problem.mu())),
    };
    let mut log = Logger::new(cfg);
    mm_run(
        problem,
        rule,
        &vec![Vector::zeros(problem.dim()); problem.n()],
        cfg.iters,
        |s| {
            if s.k > 0 && s.k % cfg.metric_cadence != 0 {
                return Ok(ControlFlow::Continue(()));
            }
            Ok(log.push(engine.record(s.k, &s.primal, &s.lambda)?))
        },
    )?;
    let beta = match rule {
        DualRule::Newton(b) | DualRule::GradientAscent(b) => b,
    };
    Ok(log.finish(method, json!({ "beta": beta })))
}

/// Runs one method against a prepared metrics engine.
pub fn run_method(cfg: &Config, engine: &MetricsEngine<'_>, method: Method, exec: &Executor) -> Result<MethodTrace> {
    match kinds_for(cfg, method) {
        Some(kinds) => fedhybrid_trace(cfg, engine, method, kinds, exec),
        None if method == Method::FedAvg => fedavg_trace(cfg, engine, exec),
        None => mm_trace(cfg, engine, method),
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub traces: Vec<MethodTrace>,
    pub manifest: PathBuf,
}

impl RunSummary {
    pub fn csv_path(&self, method: Method) -> PathBuf {
        self.out_dir.join(format!("{}.csv", method.name()))
    }
}

/// Executes every configured method and writes `<method>.csv` files and the manifest.
pub fn run_experiment(cfg: &Config, overrides: &Overrides, exec: &Executor) -> Result<RunSummary> {
    let problem = build_problem(cfg)?;
    let engine = MetricsEngine::new(&problem)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut traces = Vec::with_capacity(cfg.methods.len());
    let mut entries = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let trace = run_method(cfg, &engine, method, exec)?;
        let file = format!("{}.csv", method.name());
        write_csv(&cfg.out_dir.join(&file), &trace.rows)?;
        entries.push(json!({
            "method": method.name(),
            "csv": file,
            "rows": trace.rows.len(),
            "initial": record_json(&trace.initial),
            "final": trace.rows.last().map(record_json),
            "details": trace.details,
        }));
        traces.push(trace);
    }
    let curvature = problem.global_curvature()?;
    let cert = engine.certificate();
    let manifest = json!({
        "config": cfg.raw,
        "overrides": overrides.to_json(),
        "seed": cfg.seed,
        "iters": cfg.iters,
        "metric_cadence": cfg.metric_cadence,
        "problem": {
            "n": problem.n(),
            "d": problem.dim(),
            "mu": problem.mu(),
            "m": curvature.m,
            "l": curvature.l,
            "sample_counts": problem.objectives().iter().map(|o| o.sample_count()).collect::<Vec<_>>(),
            "f_star": cert.f_star,
            "kkt_residual": cert.residual,
        },
        "methods": entries,
    });
    let path = cfg.out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(RunSummary {
        out_dir: cfg.out_dir.clone(),
        traces,
        manifest: path,
    })
}

/// Directional finite-difference agreement of the dual derivative formulas.
#[derive(Clone, Debug)]
pub struct DualDerivativeCheck {
    pub grad_err: f64,
    pub grad_tol: f64,
    pub hess_err: f64,
    pub hess_tol: f64,
}

impl DualDerivativeCheck {
    pub fn passed(&self) -> bool {
        self.grad_err <= self.grad_tol && self.hess_err <= self.hess_tol
    }
}

/// Compares `∇g·v` and `∇²g v` with central differences along a random unit direction.
pub fn dual_derivative_check(
    problem: &ProblemInstance,
    engine: &MetricsEngine<'_>,
    seed: u64,
) -> Result<DualDerivativeCheck> {
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = stack(&engine.certificate().lambda);
    let lam = &base + Vector::from_fn(base.len(), |_, _| StandardNormal.sample(&mut rng));
    let mut dir = Vector::from_fn(base.len(), |_, _| StandardNormal.sample(&mut rng));
    dir /= dir.norm();
    let h = 1e-4;
    let value = |l: &Vector| -> Result<f64> { Ok(engine.solver().dual_value(&unstack(l, d), None)?.0) };
    let grad = stack(&dual_grad_formula(&unstack(&lam, d), problem)?);
    let fd = (value(&(&lam + &dir * h))? - value(&(&lam - &dir * h))?) / (2.0 * h);
    let exact = grad.dot(&dir);

    let hess: Matrix = dual_hessian_formula(&unstack(&lam, d), problem)?;
    let hv = &hess * &dir;
    let gp = stack(&dual_grad_formula(&unstack(&(&lam + &dir * h), d), problem)?);
    let gm = stack(&dual_grad_formula(&unstack(&(&lam - &dir * h), d), problem)?);
    let fd_hv = (gp - gm) / (2.0 * h);
    Ok(DualDerivativeCheck {
        grad_err: (exact - fd).abs(),
        grad_tol: 1e-6 * (1.0 + exact.abs()),
        hess_err: (&hv - fd_hv).amax(),
        hess_tol: 1e-5 * (1.0 + hv.amax()),
    })
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub curvature: CurvatureReport,
    pub derivatives: DualDerivativeCheck,
    /// Largest mismatch in the exact dual-Newton relation at the final iterate, and its tolerance.
    pub newton_relation: (f64, f64),
    pub monitors: MonitorReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.curvature.passed()
            && self.derivatives.passed()
            && self.newton_relation.0 <= self.newton_relation.1
            && self.monitors.passed()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.curvature)?;
        let dc = &self.derivatives;
        writeln!(
            f,
            "dual derivatives {} grad_err={:.3e} (tol {:.3e}) hess_err={:.3e} (tol {:.3e})",
            verdict(dc.passed()),
            dc.grad_err,
            dc.grad_tol,
            dc.hess_err,
            dc.hess_tol
        )?;
        let (err, tol) = self.newton_relation;
        writeln!(
            f,
            "dual newton relation {} err={err:.3e} (tol {tol:.3e})",
            verdict(err <= tol)
        )?;
        write!(f, "{}", self.monitors)?;
        write!(f, "verify {}", verdict(self.passed()))
    }
}

/// Curvature bounds, dual derivative formulas, the dual-Newton relation and
/// the descent monitors on a fresh `fedhybrid` run.
pub fn verify(cfg: &Config, exec: &Executor) -> Result<VerifyReport> {
    let problem = build_problem(cfg)?;
    let engine = MetricsEngine::new(&problem)?;
    let curvature = curvature_check(&problem, cfg.verify_samples, cfg.seed)?;
    let derivatives = dual_derivative_check(&problem, &engine, cfg.seed.wrapping_add(1))?;

    let kinds = kinds_for(cfg, Method::FedHybrid).expect("fedhybrid has client kinds");
    let plan = plan_for(cfg, &problem, kinds)?;
    let rates = rate_rho(&plan, &problem.curvatures()?, problem.mu())?;
    let mut snaps: Vec<Snapshot> = Vec::with_capacity(cfg.iters + 1);
    let opts = RunOptions::new(cfg.iters).executor(exec.clone());
    run_with(&problem, &plan, &Init::zeros(problem.n(), problem.dim()), &opts, |s| {
        snaps.push(s.clone());
        Ok(ControlFlow::Continue(()))
    })?;
    let last = snaps.last().expect("run emits the initial snapshot").primal();
    let rel = dual_newton_relation(&last, &problem)?;
    let newton_relation = (rel.max_abs_diff(), 1e-8 * (1.0 + rel.rhs.amax()));
    let monitors = descent_monitors(&snaps, &plan, &rates, &engine)?;
    Ok(VerifyReport {
        curvature,
        derivatives,
        newton_relation,
        monitors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Config {
        Config::parse(text, Path::new(".")).unwrap()
    }

    #[test]
    fn manual_plan_per_kind_and_lists() {
        let c = cfg(
            "problem.kind = linreg\nproblem.n = 3\nproblem.d = 2\nstepsize.mode = manual\n\
                     stepsize.gradient = 0.1, 0.2\nstepsize.newton = 1, 0.3\nclients.newton = 2\n",
        );
        let p = build_problem(&c).unwrap();
        let plan = plan_for(&c, &p, kinds_for(&c, Method::FedHybrid).unwrap()).unwrap();
        assert_eq!(plan.a, vec![0.1, 1.0, 0.1]);
        assert_eq!(plan.b, vec![0.2, 0.3, 0.2]);

        let c = cfg(
            "problem.kind = linreg\nproblem.n = 2\nproblem.d = 2\nstepsize.mode = manual\n\
                     stepsize.a_i = 0.1, 0.2\nstepsize.b_i = 0.3, 0.4\n",
        );
        let p = build_problem(&c).unwrap();
        let plan = plan_for(&c, &p, kinds_for(&c, Method::FedHN).unwrap()).unwrap();
        assert_eq!(plan.a, vec![0.1, 0.2]);
        assert_eq!(plan.b, vec![0.3, 0.4]);
    }

    #[test]
    fn csv_formatting() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn run_writes_rows_at_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg("problem.kind = linreg\nproblem.n = 3\nproblem.d = 2\nrun.iters = 10\n\
                         run.metric_cadence = 3\nmethods = fedh-g, fedavg, mm-newton\n");
        c.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&c, &Overrides::default(), &Executor::Sequential).unwrap();
        for t in &s.traces {
            assert_eq!(t.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![3, 6, 9]);
        }
        let text = std::fs::read_to_string(s.csv_path(Method::FedAvg)).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("3,,,,"), "{row}");
        assert!(s.manifest.is_file());
    }

    #[test]
    fn early_stop_on_tolerance() {
        let mut c = cfg(
            "problem.kind = linreg\nproblem.n = 2\nproblem.d = 2\nrun.iters = 100000\n\
                         run.tol = 1e-3\nmethods = mm-newton\n",
        );
        let dir = tempfile::tempdir().unwrap();
        c.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&c, &Overrides::default(), &Executor::Sequential).unwrap();
        assert!(s.traces[0].rows.len() < 10);
    }

    #[test]
    fn verify_small_problem() {
        let c = cfg("problem.kind = linreg\nproblem.n = 3\nproblem.d = 2\nrun.iters = 50\nclients.newton = 1\n");
        let rep = verify(&c, &Executor::Sequential).unwrap();
        assert!(rep.passed(), "{rep}");
        assert!(rep.to_string().ends_with("verify pass"));
    }
}

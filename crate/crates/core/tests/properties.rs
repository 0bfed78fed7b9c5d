use std::ops::ControlFlow;
use std::path::Path;

use fedhybrid::config::Config;
use fedhybrid::data::{gen_linreg, gen_logreg_synthetic, partition_label_skew_weighted, LinregConfig, SkewPlan};
use fedhybrid::experiment::{run_experiment, Overrides};
use fedhybrid::hybrid::{kinds_first_newton, run_with, safe_stepsizes, Init, RunOptions, StepsizePlan};
use fedhybrid::metrics::{dual_value, kkt_optimum};
use fedhybrid::model::ProblemInstance;
use fedhybrid::numerics::eig_extremes;
use fedhybrid::simnet::Executor;
use fedhybrid::Vector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_linreg(n: usize, d: usize, seed: u64, mu: f64) -> ProblemInstance {
    let (ds, part, _) = gen_linreg(&LinregConfig::new(n, d, seed)).unwrap();
    ProblemInstance::ridge_regression(&ds, &part, 0.1, mu).unwrap()
}

fn random_vec(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-scale..scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn label_skew_partition_is_disjoint_and_exhaustive(
        zeros in 0usize..4, ones in 0usize..4, mixed in 1usize..3, seed in any::<u64>(),
    ) {
        let plan = SkewPlan::from_counts(zeros, ones, mixed);
        let n = plan.len();
        let (ds, _) = gen_logreg_synthetic(n, 3, &SkewPlan::all_mixed(n), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let part = partition_label_skew_weighted(&ds, &plan, &weights).unwrap();
        let mut rows: Vec<usize> = part.clients().iter().flatten().copied().collect();
        rows.sort_unstable();
        prop_assert_eq!(rows, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn server_identity_after_every_round(
        n in 1usize..5, d in 1usize..4, newton in 0usize..5, seed in any::<u64>(), mu in 0.5f64..10.0,
    ) {
        let p = small_linreg(n, d, seed, mu);
        let plan = safe_stepsizes(&p.curvatures().unwrap(), mu, &kinds_first_newton(n, newton.min(n))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let init = Init {
            x: (0..n).map(|_| random_vec(d, 2.0, &mut rng)).collect(),
            lambda: (0..n).map(|_| random_vec(d, 2.0, &mut rng)).collect(),
        };
        let mut worst = 0.0f64;
        run_with(&p, &plan, &init, &RunOptions::new(20), |s| {
            if s.k > 0 {
                let mut r = &s.x0 * (mu * n as f64);
                let mut scale = r.amax();
                for (x, l) in s.x.iter().zip(&s.lambda) {
                    r += l - x * mu;
                    scale = scale.max(l.amax()).max(mu * x.amax());
                }
                worst = worst.max(r.amax() / (1.0 + scale));
            }
            Ok(ControlFlow::Continue(()))
        }).unwrap();
        prop_assert!(worst <= 1e-12, "relative residual {worst:e}");
    }

    #[test]
    fn logistic_hessian_within_curvature_constants(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let (ds, part) = gen_logreg_synthetic(3, 4, &SkewPlan::all_mixed(3), seed).unwrap();
        let p = ProblemInstance::logistic_regression(&ds, &part, 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (obj, c) in p.objectives().iter().zip(p.curvatures().unwrap()) {
            for _ in 0..10 {
                let (lo, hi) = eig_extremes(&obj.hessian(&random_vec(4, scale, &mut rng))).unwrap();
                prop_assert!(lo >= c.m - 1e-9 && hi <= c.l + 1e-9, "[{lo}, {hi}] vs [{}, {}]", c.m, c.l);
            }
        }
    }

    #[test]
    fn weak_duality_at_random_multipliers(n in 1usize..5, d in 1usize..4, seed in any::<u64>()) {
        let p = small_linreg(n, d, seed, 3.0);
        let f_star = kkt_optimum(&p).unwrap().f_star;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let lambda: Vec<Vector> = (0..n).map(|_| random_vec(d, 5.0, &mut rng)).collect();
            prop_assert!(dual_value(&lambda, &p).unwrap() <= f_star + 1e-9);
        }
    }

    #[test]
    fn generated_data_is_reproducible(n in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
        let a = gen_linreg(&LinregConfig::new(n, d, seed)).unwrap();
        let b = gen_linreg(&LinregConfig::new(n, d, seed)).unwrap();
        prop_assert_eq!(a.0.features, b.0.features);
        prop_assert_eq!(a.0.targets, b.0.targets);
        prop_assert_eq!(a.1.clients(), b.1.clients());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn csv_rows_equal_iters_over_cadence(iters in 1usize..40, cadence in 1usize..9) {
        let text = format!(
            "problem.kind = linreg\nproblem.n = 3\nproblem.d = 2\nrun.iters = {iters}\nrun.metric_cadence = {cadence}\n\
             methods = fedhybrid, fedavg, mm-gradient\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::parse(&text, Path::new(".")).unwrap();
        cfg.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&cfg, &Overrides::default(), &Executor::Sequential).unwrap();
        for m in &cfg.methods {
            let body = std::fs::read_to_string(s.csv_path(*m)).unwrap();
            prop_assert_eq!(body.lines().count() - 1, iters / cadence);
        }
    }

    #[test]
    fn manual_plan_runs_are_thread_count_invariant(seed in any::<u64>(), threads in 2usize..5) {
        let p = small_linreg(6, 3, seed, 2.0);
        let plan = StepsizePlan::per_kind(kinds_first_newton(6, 3), (0.01, 0.01), (0.5, 0.01)).unwrap();
        let run = |exec: Executor| {
            run_with(&p, &plan, &Init::zeros(6, 3), &RunOptions::new(15).executor(exec), |_| {
                Ok(ControlFlow::Continue(()))
            })
            .unwrap()
        };
        let a = run(Executor::Sequential);
        let b = run(Executor::with_threads(threads).unwrap());
        prop_assert_eq!(a.x0, b.x0);
        prop_assert_eq!(a.lambda, b.lambda);
    }
}

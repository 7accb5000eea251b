//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing the test harness capture) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use afsgm::bias_probe::{conditional_bias, ProbeConfig, ProbeMode};
use afsgm::harness::{compare, ProbeRunConfig, RunConfig};
use afsgm::oracle::{minibatch, sample, SampleToken, StochasticOracle, TokenRange};
use afsgm::problems::{
    make_synthetic_classification, LogisticProblem, MlpProblem, Model, QuadraticProblem, TwoLayerRelu,
};
use afsgm::solvers::{Afsgm, PracticalConfig, StepReport, TheoreticalConfig};
use afsgm::vecspace::{DenseVector, NormTag, ProxSetup};

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {id:>2} {} {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn within(started: Instant, limit: Duration) -> (bool, String) {
    let t = started.elapsed();
    (t < limit, format!("{:.2}s of {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

/// 50-dimensional quadratic with spectrum in `[0.01 L, L]`, minimizer on the unit sphere, start at 0.
fn ci_quadratic(lip: f64, noise: f64, seed: u64) -> QuadraticProblem {
    QuadraticProblem::random_strongly_convex(50, 0.01 * lip, lip, noise, seed).unwrap()
}

fn gap(q: &QuadraticProblem, x: &DenseVector) -> f64 {
    q.value(x) - q.f_star().unwrap()
}

/// Worst violations of `|Lα² − α − A_prev| ≤ 1e-10·max(1, A)` and `A_N ≥ N²/(4 L_max)`,
/// each as a ratio that must stay at most 1.
fn step_invariants(reports: &[StepReport]) -> (f64, f64) {
    let mut root = 0.0f64;
    let mut growth = 0.0f64;
    let mut l_max = 0.0f64;
    for (i, r) in reports.iter().enumerate() {
        let resid = (r.l_accepted * r.alpha * r.alpha - r.alpha - r.a_prev).abs();
        root = root.max(resid / (1e-10 * r.a_new.max(1.0)));
        l_max = l_max.max(r.l_accepted);
        let n = (i + 1) as f64;
        growth = growth.max((n * n / (4.0 * l_max)) / r.a_new);
    }
    (root, growth)
}

fn assert_invariants(reports: &[StepReport]) {
    let (root, growth) = step_invariants(reports);
    assert!(root <= 1.0 && growth <= 1.0, "step invariants violated: root {root}, growth {growth}");
}

fn run_steps(solver: &mut Afsgm, oracle: &dyn StochasticOracle, n: u64) -> Vec<StepReport> {
    (0..n).map(|_| solver.step_report(oracle).unwrap()).collect()
}

fn practical(x0: DenseVector, cfg: PracticalConfig, seed: u64) -> Afsgm {
    let dim = x0.dim();
    Afsgm::practical(x0, cfg, ProxSetup::euclidean(dim), seed).unwrap()
}

#[test]
fn a01_noiseless_quadratic_converges_at_the_accelerated_rate() {
    let started = Instant::now();
    let q = ci_quadratic(1.0, 0.0, 1);
    let (lip, r) = (q.lambda_max(), q.x_star().unwrap().norm_l2());
    let mut solver = practical(DenseVector::zeros(50), PracticalConfig::default(), 7);
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for _ in 0..200 {
        reports.push(solver.step_report(&q).unwrap());
        errors.push(gap(&q, &solver.state().x));
    }
    assert_invariants(&reports);
    let mut worst = 0.0f64;
    for n in 10..=200usize {
        worst = worst.max(errors[n - 1] / (8.0 * lip * r * r / (n * n) as f64));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (10..=100usize).map(|n| ((n as f64).ln(), errors[n - 1].ln())).unzip();
    let slope = ols_slope(&xs, &ys);
    let (fast, time) = within(started, Duration::from_secs(5));
    let pass = worst <= 1.0 && slope <= -1.8 && fast;
    report(1, "noiseless rate", pass, &format!("max err/(8LR²/N²) = {worst:.3}, slope = {slope:.3}, {time}"));
    assert!(pass);
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn a02_final_error_scales_with_epsilon() {
    let started = Instant::now();
    let epsilons = [0.04, 0.02, 0.01, 0.005];
    let mut medians = Vec::new();
    for &eps in &epsilons {
        let errs: Vec<f64> = (0..20u64)
            .map(|seed| {
                let q = ci_quadratic(1.0, 0.3, 1);
                let (lip, r) = (q.lambda_max(), q.x_star().unwrap().norm_l2());
                let horizon = (12.0 * lip * r * r / eps).sqrt().ceil() as u64;
                let cfg = PracticalConfig { epsilon: eps, ..Default::default() };
                let mut solver = practical(DenseVector::zeros(50), cfg, 1000 + seed);
                let reports = run_steps(&mut solver, &q, horizon);
                assert_invariants(&reports);
                gap(&q, &solver.state().x)
            })
            .collect();
        medians.push(median(errs));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let last = *medians.last().unwrap();
    let (fast, time) = within(started, Duration::from_secs(120));
    let pass = monotone && last <= 10.0 * 0.005 && fast;
    report(
        2,
        "error vs epsilon",
        pass,
        &format!(
            "medians [{}] for eps {epsilons:?}, final bound {:.3}, {time}",
            medians.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", "),
            10.0 * 0.005
        ),
    );
    assert!(pass);
}

struct TrialCheck {
    label: String,
    l: f64,
    max_trials: u32,
    max_ratio: f64,
    first_trials: u32,
    /// Every step satisfies `trials = log2(L_accepted / L_prev) + 2`.
    doubling_exact: bool,
}

fn trial_checks() -> Vec<TrialCheck> {
    let mut out = Vec::new();
    for &lip in &[1.0, 10.0, 100.0] {
        let random = ci_quadratic(lip, 0.0, 3);
        let isotropic = QuadraticProblem::isotropic(50, lip, &DenseVector::filled(50, 1.0 / 50f64.sqrt()), 0.0).unwrap();
        for (name, q) in [("random", &random), ("isotropic", &isotropic)] {
            let mut runs: Vec<(&str, Vec<StepReport>)> = Vec::new();
            let mut p = practical(DenseVector::zeros(50), PracticalConfig::default(), 11);
            runs.push(("practical", run_steps(&mut p, q, 100)));
            let tc = TheoreticalConfig {
                sigma_sq: 0.0,
                l_declared: lip,
                l0: 1.0,
                r_q: 1.0,
                norm: NormTag::L2,
                ..Default::default()
            };
            let mut t = Afsgm::theoretical(DenseVector::zeros(50), tc, ProxSetup::euclidean(50), 11).unwrap();
            runs.push(("theoretical", run_steps(&mut t, q, 100)));
            for (variant, reports) in runs {
                assert_invariants(&reports);
                out.push(TrialCheck {
                    label: format!("{name}/{variant}/L={lip}"),
                    l: lip,
                    max_trials: reports.iter().map(|r| r.trials).max().unwrap(),
                    max_ratio: reports.iter().map(|r| r.l_accepted / lip).fold(0.0, f64::max),
                    first_trials: reports[0].trials,
                    doubling_exact: reports
                        .iter()
                        .all(|r| (r.l_accepted / r.l_prev).log2() + 2.0 == r.trials as f64),
                });
            }
        }
    }
    out
}

#[test]
fn a03_line_search_trial_counts() {
    let l0 = 1.0;
    let checks = trial_checks();
    let mut failures = Vec::new();
    for c in &checks {
        let bound = (c.l / l0).log2() + 2.0;
        if c.max_ratio > 2.0 || c.max_trials as f64 > bound {
            failures.push(format!("{} trials {} (bound {bound:.2}) L_acc/L {:.2}", c.label, c.max_trials, c.max_ratio));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} runs within bounds", checks.len())
    } else {
        format!("{} of {} runs over: {}", failures.len(), checks.len(), failures.join("; "))
    };
    report(3, "line-search trials", failures.is_empty(), &detail);
    // Diagnostics: the first step needs ceil(log2(L/L0)) + 2 trials, and every
    // step spends exactly log2(L_accepted/L_prev) + 2.
    let first_ok = checks.iter().all(|c| c.first_trials as f64 <= (c.l / l0).log2().ceil() + 2.0);
    let doubling = checks.iter().all(|c| c.doubling_exact);
    let _ = std::io::stderr().write_all(
        format!(
            "acceptance  3 note: first step within ceil(log2(L/L0)) + 2: {first_ok}; trials = log2(L_acc/L_prev) + 2 on every step: {doubling}\n"
        )
        .as_bytes(),
    );
    assert!(failures.is_empty(), "{detail}");
}

#[test]
fn a04_root_identity_and_weight_growth() {
    let mut all: Vec<(String, Vec<StepReport>)> = Vec::new();
    for &lip in &[1.0, 10.0, 100.0] {
        for &noise in &[0.0, 0.3] {
            let q = ci_quadratic(lip, noise, 5);
            let mut p = practical(DenseVector::zeros(50), PracticalConfig { epsilon: 0.01, ..Default::default() }, 3);
            all.push((format!("practical L={lip} noise={noise}"), run_steps(&mut p, &q, 60)));
            let tc = TheoreticalConfig {
                epsilon: 0.05,
                l_declared: lip,
                sigma_sq: 3.0 * noise * noise,
                r_q: 1.0,
                ..Default::default()
            };
            let mut t = Afsgm::theoretical(DenseVector::zeros(50), tc, ProxSetup::euclidean(50), 3).unwrap();
            let n = (12.0 * lip / 0.05f64).sqrt().ceil().min(60.0) as u64;
            all.push((format!("theoretical L={lip} noise={noise}"), run_steps(&mut t, &q, n)));
        }
    }
    let ds = make_synthetic_classification(300, 20, 5, 4);
    let lp = LogisticProblem::logistic(ds.train, ds.classes).unwrap();
    let mut p = practical(DenseVector::zeros(lp.dim()), PracticalConfig::default(), 9);
    all.push(("practical logistic".into(), run_steps(&mut p, &lp, 40)));

    let mut worst_root = 0.0f64;
    let mut worst_growth = 0.0f64;
    for (_, reports) in &all {
        let (r, g) = step_invariants(reports);
        worst_root = worst_root.max(r);
        worst_growth = worst_growth.max(g);
    }
    let pass = worst_root <= 1.0 && worst_growth <= 1.0;
    report(
        4,
        "root identity and A growth",
        pass,
        &format!(
            "{} runs, worst residual/tol = {worst_root:.3e}, worst (N²/4L_max)/A_N = {worst_growth:.3}; every other AFSGM run in this suite asserts the same",
            all.len()
        ),
    );
    assert!(pass);
}

/// Per-coordinate z-scores of the mean of `n` single samples against the exact gradient.
fn unbiasedness_z(oracle: &dyn StochasticOracle, y: &DenseVector, n: u64, stream: u64) -> f64 {
    let d = oracle.dim();
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for i in 0..n {
        let (_, g) = sample(oracle, y, SampleToken::new(stream, i)).unwrap();
        for j in 0..d {
            sum[j] += g[j];
            sq[j] += g[j] * g[j];
        }
    }
    let exact = oracle.exact_gradient(y).unwrap();
    let nf = n as f64;
    let mut worst = 0.0f64;
    for j in 0..d {
        let mean = sum[j] / nf;
        let var = (sq[j] / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        let se = (var / nf).sqrt();
        let diff = (mean - exact[j]).abs();
        let z = if se > 0.0 {
            diff / se
        } else if diff <= 1e-12 * (1.0 + exact[j].abs()) {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    // The parallel mini-batch path must agree with the single-sample mean.
    let mb = minibatch(oracle, y, TokenRange::new(stream, 0, n)).unwrap();
    for j in 0..d {
        assert!((mb.grad_mean[j] - sum[j] / nf).abs() <= 1e-9 * (1.0 + mb.grad_mean[j].abs()));
    }
    worst
}

#[test]
fn a05_stochastic_oracles_are_unbiased() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = ci_quadratic(1.0, 0.3, 2);
    let yq = DenseVector::from((0..50).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
    let ds = make_synthetic_classification(1000, 50, 10, 6);
    let lp = LogisticProblem::logistic(ds.train.clone(), ds.classes).unwrap();
    let yl = DenseVector::from((0..lp.dim()).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
    let mp = MlpProblem::mlp(ds.train, 32, ds.classes).unwrap();
    let ym = mp.model().init(3);
    let zs = [
        ("quadratic", unbiasedness_z(&q, &yq, 10_000, 1)),
        ("logistic", unbiasedness_z(&lp, &yl, 10_000, 2)),
        ("mlp", unbiasedness_z(&mp, &ym, 10_000, 3)),
    ];
    let (fast, time) = within(started, Duration::from_secs(10));
    let pass = zs.iter().all(|(_, z)| *z <= 5.0) && fast;
    let detail: Vec<String> = zs.iter().map(|(n, z)| format!("{n} max|z| = {z:.2}")).collect();
    report(5, "oracle unbiasedness", pass, &format!("{}, {time}", detail.join(", ")));
    assert!(pass);
}

/// Worst relative error between the backprop directional derivative and a
/// central difference, over `slices` random (parameters, example, direction) triples.
fn directional_check<M: Model>(model: &M, data: &afsgm::problems::Split, slices: usize, seed: u64, relu_layer: Option<(usize, usize)>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let p = model.param_count();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < slices {
        let w: Vec<f64> = (0..p).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let v: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let i = rng.random_range(0..data.rows);
        let x = data.row(i);
        let label = data.labels[i] as usize;
        if let Some((input, hidden)) = relu_layer {
            // Skip slices whose step would cross a ReLU kink.
            let crosses = w.chunks_exact(input + 1).zip(v.chunks_exact(input + 1)).take(hidden).any(|(wr, vr)| {
                let pre: f64 = wr[..input].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + wr[input];
                let slope: f64 = vr[..input].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + vr[input];
                pre.abs() <= 2.0 * h * slope.abs()
            });
            if crosses {
                continue;
            }
        }
        let mut g = vec![0.0; p];
        model.loss(&w, x, label, Some(&mut g));
        let analytic: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        let shift = |s: f64| -> Vec<f64> { w.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let fd = (model.loss(&shift(h), x, label, None) - model.loss(&shift(-h), x, label, None)) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
        worst = worst.max(rel);
        done += 1;
    }
    worst
}

#[test]
fn a06_backprop_matches_finite_differences() {
    let started = Instant::now();
    let ds = make_synthetic_classification(200, 20, 10, 8);
    let lp = LogisticProblem::logistic(ds.train.clone(), ds.classes).unwrap();
    let mlp = TwoLayerRelu { input: 20, hidden: 16, classes: 10 };
    let lr = directional_check(lp.model(), &ds.train, 100, 1, None);
    let mr = directional_check(&mlp, &ds.train, 100, 2, Some((mlp.input, mlp.hidden)));
    let (fast, time) = within(started, Duration::from_secs(10));
    let pass = lr <= 1e-5 && mr <= 1e-5 && fast;
    report(6, "gradient correctness", pass, &format!("logistic max rel err {lr:.2e}, mlp {mr:.2e}, {time}"));
    assert!(pass);
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Pairwise coordinate descent on the simplex: each move re-splits the mass of
/// two coordinates by golden-section search on the objective.
fn simplex_brute_force(obj: &dyn Fn(&[f64]) -> f64, dim: usize) -> Vec<f64> {
    let mut x = vec![1.0 / dim as f64; dim];
    for _sweep in 0..400 {
        let before = x.clone();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let s = x[i] + x[j];
                let t = golden_section(
                    |t| {
                        let mut z = x.clone();
                        z[i] = t;
                        z[j] = s - t;
                        obj(&z)
                    },
                    0.0,
                    s,
                    1e-12,
                );
                x[i] = t;
                x[j] = s - t;
            }
        }
        if x.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-13) {
            break;
        }
    }
    x
}

#[test]
fn a07_mirror_steps_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_e = 0.0f64;
    let mut worst_s = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(2..=6);
        let alpha = rng.random_range(0.05..3.0);
        let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();

        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let setup = ProxSetup::euclidean(dim);
        let closed = setup.mirror_step(&DenseVector::from(u.clone()), &DenseVector::from(g.clone()), alpha).unwrap();
        for k in 0..dim {
            let span = alpha * g[k].abs() + 1.0;
            let xk = golden_section(|t| 0.5 * (t - u[k]).powi(2) + alpha * g[k] * t, u[k] - span, u[k] + span, 1e-8);
            worst_e = worst_e.max((xk - closed[k]).abs());
        }

        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let us: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let setup = ProxSetup::entropy_simplex(dim);
        let closed = setup.mirror_step(&DenseVector::from(us.clone()), &DenseVector::from(g.clone()), alpha).unwrap();
        let obj = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&us)
                .zip(&g)
                .map(|((&xi, &ui), &gi)| alpha * gi * xi + if xi > 0.0 { xi * (xi / ui).ln() } else { 0.0 })
                .sum()
        };
        let brute = simplex_brute_force(&obj, dim);
        for k in 0..dim {
            worst_s = worst_s.max((brute[k] - closed[k]).abs());
        }
    }
    let pass = worst_e <= 1e-6 && worst_s <= 1e-6;
    report(7, "mirror step vs brute force", pass, &format!("euclidean max err {worst_e:.2e}, simplex {worst_s:.2e} on 100 instances"));
    assert!(pass);
}

#[test]
fn a08_line_search_acceptance_biases_gradients() {
    let started = Instant::now();
    let cfg = ProbeRunConfig::default();
    let tuned = afsgm::harness::probe(&cfg).unwrap();
    let control = afsgm::harness::probe(&ProbeRunConfig { slack: f64::INFINITY, ..cfg.clone() }).unwrap();

    // One dimension, L_trial = 1, zero slack: the test accepts exactly the batch
    // gradients in [0, p], so accepted gradients are N(p, s²) truncated to [0, p].
    let (p, noise, m) = (1.0, 1.0, 4u64);
    let s = noise / (m as f64).sqrt();
    let q = QuadraticProblem::isotropic(1, 1.0, &DenseVector::zeros(1), noise).unwrap();
    let one_d = conditional_bias(
        &ProbeConfig {
            trials: 40_000,
            point: DenseVector::from(vec![p]),
            m,
            l_trial: 1.0,
            slack: 0.0,
            mode: ProbeMode::TheoreticalRule,
            seed: 12,
            bootstrap: 1000,
        },
        &q,
    )
    .unwrap();
    let n = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = (-p / s, 0.0);
    let z_mass = n.cdf(b) - n.cdf(a);
    let analytic_mean = p + s * (n.pdf(a) - n.pdf(b)) / z_mass;
    let z_1d = (one_d.conditional_mean[0] - analytic_mean).abs() / one_d.std_error[0];
    let rate_z = (one_d.accept_rate - z_mass).abs() / (z_mass * (1.0 - z_mass) / one_d.trials as f64).sqrt();

    let (fast, time) = within(started, Duration::from_secs(60));
    let tuned_ok = (0.2..=0.8).contains(&tuned.accept_rate) && tuned.bias_norm > 5.0 * tuned.norm_std_error;
    let pass = tuned_ok && control.max_z() <= 5.0 && z_1d <= 5.0 && fast;
    report(
        8,
        "conditional bias",
        pass,
        &format!(
            "accept {:.3}, |bias| {:.4} vs 5se {:.4}; control max z {:.2}; 1-D mean {:.4} vs analytic {analytic_mean:.4} (z {z_1d:.2}, accept-rate z {rate_z:.2}); {time}",
            tuned.accept_rate,
            tuned.bias_norm,
            5.0 * tuned.norm_std_error,
            control.max_z(),
            one_d.conditional_mean[0],
        ),
    );
    assert!(pass);
}

#[test]
fn a09_first_practical_batch_size() {
    let cfg = RunConfig::parse("problem = quadratic\nsolver = afsgm-practical\niterations = 1\nquadratic.noise_sigma = 0.3").unwrap();
    let out = afsgm::harness::execute(&cfg).unwrap();
    let q = ci_quadratic(1.0, 0.3, 1);
    let mut solver = practical(DenseVector::zeros(50), PracticalConfig::default(), 1);
    let r = solver.step_report(&q).unwrap();
    let m_csv = out.rows[0].m_k;
    let pass = r.m == 150 && r.l_prev == 1.0 && r.a_prev == 0.0 && m_csv == 150;
    report(9, "first batch size", pass, &format!("m_1 = {} (solver), {m_csv} (harness)", r.m));
    assert!(pass);
}

fn smoke_config(solver: &str, seed: u64) -> RunConfig {
    RunConfig::parse(&format!(
        "name = {solver}-{seed}\nproblem = logistic\nsolver = {solver}\niterations = 1000000\nmax_samples = 60000\n\
         seed = {seed}\nproblem.seed = {seed}\ndata.n_train = 1000\ndata.n_test = 1000\ndata.dim = 50\ndata.classes = 10\n"
    ))
    .unwrap()
}

#[test]
fn a10_benchmark_smoke_comparison() {
    let started = Instant::now();
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let cfgs: Vec<RunConfig> =
            ["afsgm-practical", "adam", "adagrad"].iter().map(|s| smoke_config(s, seed)).collect();
        let out = compare(&cfgs).unwrap();
        assert!(out.runs.iter().all(|r| r.failure.is_none()));
        let loss = |name: &str| out.summary.iter().find(|l| l.solver == name).unwrap().loss_at_budget;
        let best = loss("adam").min(loss("adagrad"));
        let ratio = loss("afsgm-practical") / best;
        ratios.push(ratio);
        if ratio <= 1.05 {
            wins += 1;
        }
        if seed == 0 {
            let dir = tempfile::tempdir().unwrap();
            let written = afsgm::harness::write_compare(&cfgs, dir.path()).unwrap();
            assert_eq!(written.summary, out.summary);
            for f in ["summary.csv", "combined.csv", "metrics_afsgm-practical-0.csv", "metrics_adam-0.csv"] {
                assert!(dir.path().join(f).is_file(), "{f} missing");
            }
        }
    }
    let (fast, time) = within(started, Duration::from_secs(180));
    let pass = wins >= 15 && fast;
    report(
        10,
        "benchmark smoke comparison",
        pass,
        &format!("afsgm within 5% of best baseline in {wins}/20 seeds, median loss ratio {:.3}, {time}", median(ratios)),
    );
    assert!(pass);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_afsgm")).args(args).output().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn a11_cli_outputs_are_reproducible() {
    let work = tempfile::tempdir().unwrap();
    let cfg_dir = work.path().join("cfg");
    std::fs::create_dir_all(&cfg_dir).unwrap();
    let write = |name: &str, body: &str| {
        let p = cfg_dir.join(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    };
    let quad = write("quad.cfg", "name = quad\nproblem = quadratic\niterations = 40\nquadratic.noise_sigma = 0.3\n");
    let logi = write(
        "logi.cfg",
        "name = logi\nproblem = logistic\nsolver = adam\niterations = 30\ndata.n_train = 200\ndata.n_test = 100\ndata.dim = 10\ndata.classes = 3\n",
    );
    let mlp = write(
        "mlp.cfg",
        "name = mlp\nproblem = mlp\nsolver = afsgm-practical\niterations = 15\ndata.n_train = 200\ndata.n_test = 100\ndata.dim = 10\ndata.classes = 3\nmlp.hidden = 8\n",
    );
    let probe = write("probe.cfg", "probe.trials = 3000\nprobe.bootstrap = 200\n");
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("run", vec!["run", "--config", &quad, "--seed", "4"]),
        ("compare", vec!["compare", "--config", &quad, "--config", &logi, "--config", &mlp, "--stride", "2"]),
        ("probe", vec!["probe", "--config", &probe, "--seed", "9"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &commands {
        let mut snapshots = Vec::new();
        for rep in 0..2 {
            let out = work.path().join(format!("{name}-{rep}"));
            let mut full = args.clone();
            let out_s = out.to_string_lossy().into_owned();
            full.extend(["--out", &out_s]);
            let o = cli(&full);
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
            snapshots.push((dir_bytes(&out), o.stdout));
        }
        assert!(!snapshots[0].0.is_empty());
        if snapshots[0] != snapshots[1] {
            mismatched.push(*name);
        }
    }
    let pass = mismatched.is_empty();
    report(
        11,
        "reproducibility",
        pass,
        &if pass { "run, compare and probe outputs byte-identical across reruns".to_string() } else { format!("differs: {mismatched:?}") },
    );
    assert!(pass);
}

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{DataSource, ProblemKind, RunConfig, SolverKind};
use super::metrics::{interpolate_at, metrics_csv, summary_csv, MetricsRow, SummaryLine, METRICS_HEADER};
use super::HarnessError;
use crate::oracle::StochasticOracle;
use crate::problems::{
    load_mnist, make_synthetic_classification, Dataset, LogisticProblem, MlpProblem, QuadraticProblem, Split,
};
use crate::solvers::{AdaGrad, Adam, Afsgm, Optimizer, Sgd, TheoreticalConfig};
use crate::vecspace::{DenseVector, NormTag, ProxSetup};

/// A constructed problem together with what the harness needs to score iterates.
pub enum BuiltProblem {
    Quadratic(QuadraticProblem),
    Logistic { problem: LogisticProblem, test: Split },
    Mlp { problem: MlpProblem, test: Split, init: DenseVector },
}

impl BuiltProblem {
    pub fn oracle(&self) -> &dyn StochasticOracle {
        match self {
            BuiltProblem::Quadratic(q) => q,
            BuiltProblem::Logistic { problem, .. } => problem,
            BuiltProblem::Mlp { problem, .. } => problem,
        }
    }

    pub fn x0(&self) -> DenseVector {
        match self {
            BuiltProblem::Mlp { init, .. } => init.clone(),
            other => DenseVector::zeros(other.oracle().dim()),
        }
    }

    /// Full-batch training loss. For quadratics this is the gap `f(x) − f*`.
    pub fn train_loss(&self, x: &[f64]) -> f64 {
        match self {
            BuiltProblem::Quadratic(q) => q.value(x) - q.f_star().unwrap_or(0.0),
            BuiltProblem::Logistic { problem, .. } => problem.mean_loss(x, problem.train()),
            BuiltProblem::Mlp { problem, .. } => problem.mean_loss(x, problem.train()),
        }
    }

    pub fn test_accuracy(&self, x: &[f64]) -> Option<f64> {
        match self {
            BuiltProblem::Quadratic(_) => None,
            BuiltProblem::Logistic { problem, test } => Some(problem.accuracy(x, test)),
            BuiltProblem::Mlp { problem, test, .. } => Some(problem.accuracy(x, test)),
        }
    }

    /// Distance from the start to the minimizer when it is known, 1 otherwise.
    fn default_radius(&self) -> f64 {
        match self {
            BuiltProblem::Quadratic(q) => q.x_star().map(|xs| xs.distance_l2(&self.x0())).unwrap_or(1.0),
            _ => 1.0,
        }
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    let d = &cfg.data;
    let synthetic = || {
        let n = d.n_train.max(d.n_test);
        let full = make_synthetic_classification(n, d.dim, d.classes, cfg.problem_seed);
        Dataset { train: full.train.take(d.n_train), test: full.test.take(d.n_test), classes: d.classes }
    };
    match d.source {
        DataSource::Synthetic => Ok(synthetic()),
        DataSource::Mnist => {
            let dir = d
                .mnist_dir
                .as_deref()
                .ok_or_else(|| HarnessError::Usage("data.source = mnist needs data.mnist_dir".into()))?;
            match load_mnist(dir, d.n_train, d.n_test) {
                Ok(ds) => Ok(ds),
                Err(e) if d.fallback_synthetic => {
                    warn!("{e}; falling back to synthetic data");
                    Ok(synthetic())
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<BuiltProblem, HarnessError> {
    match cfg.problem {
        ProblemKind::Quadratic => {
            let q = &cfg.quadratic;
            Ok(BuiltProblem::Quadratic(QuadraticProblem::random_strongly_convex(
                q.dim,
                q.mu,
                q.lip,
                q.noise_sigma,
                cfg.problem_seed,
            )?))
        }
        ProblemKind::Logistic => {
            let ds = load_dataset(cfg)?;
            let problem = LogisticProblem::logistic(ds.train, ds.classes)?;
            Ok(BuiltProblem::Logistic { problem, test: ds.test })
        }
        ProblemKind::Mlp => {
            let ds = load_dataset(cfg)?;
            let problem = MlpProblem::mlp(ds.train, cfg.hidden, ds.classes)?;
            let init = problem.model().init(cfg.problem_seed);
            Ok(BuiltProblem::Mlp { problem, test: ds.test, init })
        }
    }
}

pub fn build_solver(cfg: &RunConfig, problem: &BuiltProblem) -> Result<Box<dyn Optimizer>, HarnessError> {
    let x0 = problem.x0();
    let setup = ProxSetup::euclidean(x0.dim());
    let s = &cfg.solver_cfg;
    let solver: Box<dyn Optimizer> = match cfg.solver {
        SolverKind::AfsgmPractical => Box::new(Afsgm::practical(x0, s.practical, setup, cfg.seed)?),
        SolverKind::AfsgmTheoretical => {
            let meta = problem.oracle().meta();
            let l_declared = s.l_declared.unwrap_or(meta.lip);
            let tc = TheoreticalConfig {
                epsilon: s.practical.epsilon,
                beta: s.beta,
                l_declared,
                l0: s.practical.l0.min(l_declared),
                sigma_sq: s.sigma_sq.unwrap_or(meta.sigma_sq),
                r_q: s.r_q.unwrap_or_else(|| problem.default_radius()),
                delta: s.delta,
                norm: NormTag::L2,
                max_inner: s.practical.max_inner,
                max_batch: s.practical.max_batch,
            };
            Box::new(Afsgm::theoretical(x0, tc, setup, cfg.seed)?)
        }
        SolverKind::Adam => Box::new(Adam::new(x0, s.baseline, cfg.seed)?),
        SolverKind::AdaGrad => Box::new(AdaGrad::new(x0, s.baseline, cfg.seed)?),
        SolverKind::Sgd => Box::new(Sgd::new(x0, s.baseline, cfg.seed)?),
    };
    Ok(solver)
}

/// Result of one run. `failure` is set when a step errored after the run started;
/// `rows` then holds everything logged before it.
#[derive(Debug)]
pub struct RunOutput {
    pub name: String,
    pub solver: SolverKind,
    pub problem: ProblemKind,
    pub rows: Vec<MetricsRow>,
    pub final_point: DenseVector,
    pub failure: Option<HarnessError>,
}

/// Runs one configuration in memory. Startup problems are returned as `Err`.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let problem = build_problem(cfg)?;
    let mut solver = build_solver(cfg, &problem)?;
    let stride = cfg.effective_stride();
    let start = Instant::now();
    let wall = || if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
    let oracle = problem.oracle();

    let mut rows = Vec::new();
    let mut failure = None;
    while !solver.exhausted() && solver.iteration() < cfg.iterations {
        if cfg.max_samples > 0 && solver.cum_samples() >= cfg.max_samples {
            break;
        }
        let step = match solver.step(oracle) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(HarnessError::from(e));
                break;
            }
        };
        let k = solver.iteration();
        let x = solver.point();
        let last = k >= cfg.iterations
            || solver.exhausted()
            || (cfg.max_samples > 0 && solver.cum_samples() >= cfg.max_samples);
        let test_accuracy = if k % stride == 0 || last { problem.test_accuracy(x) } else { None };
        rows.push(MetricsRow {
            k,
            cum_samples: solver.cum_samples(),
            train_loss: problem.train_loss(x),
            test_accuracy,
            l_cur: step.l_cur,
            m_k: step.m,
            inner_trials: step.trials,
            wall_ms: wall(),
        });
    }
    info!("run {} finished after {} iterations", cfg.name, solver.iteration());
    Ok(RunOutput {
        name: cfg.name.clone(),
        solver: cfg.solver,
        problem: cfg.problem,
        rows,
        final_point: solver.point().clone(),
        failure,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn fail(out: &mut RunOutput) -> Result<(), HarnessError> {
    match out.failure.take() {
        None => Ok(()),
        Some(e) => Err(HarnessError::RunFailed { name: out.name.clone(), rows: out.rows.len(), source: Box::new(e) }),
    }
}

/// Runs `cfg` and writes `metrics_<name>.csv` into `out_dir`, also when the run fails midway.
pub fn write_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput, HarnessError> {
    let mut out = execute(cfg)?;
    ensure_dir(out_dir)?;
    write_file(&out_dir.join(format!("metrics_{}.csv", out.name)), &metrics_csv(&out.rows))?;
    fail(&mut out)?;
    Ok(out)
}

/// Renames repeated run names to `name-2`, `name-3`, ... so output files stay distinct.
pub fn unique_names(cfgs: &mut [RunConfig]) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for cfg in cfgs.iter_mut() {
        let n = seen.entry(cfg.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            cfg.name = format!("{}-{}", cfg.name, n);
        }
    }
}

/// Final values plus values at the smallest final `cum_samples` across runs.
pub fn summarize(runs: &[RunOutput]) -> Vec<SummaryLine> {
    let budget = runs.iter().filter_map(|r| r.rows.last().map(|l| l.cum_samples)).min().unwrap_or(0);
    runs.iter()
        .filter_map(|r| {
            let last = r.rows.last()?;
            let final_acc = r.rows.iter().rev().find_map(|row| row.test_accuracy);
            Some(SummaryLine {
                run: r.name.clone(),
                solver: r.solver.as_str().into(),
                problem: r.problem.as_str().into(),
                iterations: last.k,
                cum_samples: last.cum_samples,
                final_train_loss: last.train_loss,
                final_test_accuracy: final_acc,
                budget_samples: budget,
                loss_at_budget: interpolate_at(&r.rows, budget, |row| Some(row.train_loss))?,
                accuracy_at_budget: interpolate_at(&r.rows, budget, |row| row.test_accuracy),
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct CompareOutput {
    pub runs: Vec<RunOutput>,
    pub summary: Vec<SummaryLine>,
}

/// Runs every configuration in parallel. Names are made unique first.
pub fn compare(cfgs: &[RunConfig]) -> Result<CompareOutput, HarnessError> {
    if cfgs.is_empty() {
        return Err(HarnessError::Usage("compare needs at least one --config".into()));
    }
    let mut cfgs = cfgs.to_vec();
    unique_names(&mut cfgs);
    let runs = cfgs.par_iter().map(execute).collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&runs);
    Ok(CompareOutput { runs, summary })
}

fn combined_csv(runs: &[RunOutput]) -> String {
    let mut s = format!("run,{METRICS_HEADER}\n");
    for r in runs {
        for row in &r.rows {
            s.push_str(&r.name);
            s.push(',');
            s.push_str(&row.to_csv());
            s.push('\n');
        }
    }
    s
}

/// Writes per-run metrics, `combined.csv` and `summary.csv`. Outputs of
/// successful runs are kept when another run fails.
pub fn write_compare(cfgs: &[RunConfig], out_dir: &Path) -> Result<CompareOutput, HarnessError> {
    let mut out = compare(cfgs)?;
    ensure_dir(out_dir)?;
    for r in &out.runs {
        write_file(&out_dir.join(format!("metrics_{}.csv", r.name)), &metrics_csv(&r.rows))?;
    }
    write_file(&out_dir.join("combined.csv"), &combined_csv(&out.runs))?;
    write_file(&out_dir.join("summary.csv"), &summary_csv(&out.summary))?;
    for r in out.runs.iter_mut() {
        fail(r)?;
    }
    Ok(out)
}

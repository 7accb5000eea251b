//! Browser demo: optimizer paths on a 2-D quadratic, the line-search
//! acceptance bias as a function of the trial constant, and one entropic
//! mirror step on the 3-simplex.
//!
//! The `*_impl` functions are plain Rust so they can be tested natively; the
//! exported wrappers only convert errors.

use afsgm::bias_probe::{conditional_bias, ProbeConfig, ProbeError, ProbeMode};
use afsgm::problems::QuadraticProblem;
use afsgm::solvers::{AdaGrad, Adam, Afsgm, BaselineConfig, Optimizer, PracticalConfig};
use afsgm::vecspace::{DenseVector, ProxSetup};
use wasm_bindgen::prelude::*;

pub const SOLVERS: [&str; 3] = ["afsgm", "adam", "adagrad"];

const MAX_STEPS: u32 = 2000;
const MAX_TRIALS: u32 = 200_000;
const MAX_CURVE_POINTS: u32 = 64;

/// Ellipse with eigenvalues `lip` and `mu`, rotated by `angle`, minimized at `(1, 1)`.
pub fn demo_quadratic(lip: f64, mu: f64, angle: f64, noise: f64) -> Result<QuadraticProblem, String> {
    if !(mu > 0.0 && lip >= mu && lip.is_finite()) {
        return Err(format!("need 0 < mu <= lip, got mu = {mu}, lip = {lip}"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(format!("noise must be finite and nonnegative, got {noise}"));
    }
    let (s, c) = angle.sin_cos();
    let m = vec![
        lip * c * c + mu * s * s,
        (lip - mu) * c * s,
        (lip - mu) * c * s,
        lip * s * s + mu * c * c,
    ];
    let b = DenseVector::from_vec_unchecked(vec![m[0] + m[1], m[2] + m[3]]);
    QuadraticProblem::new(2, m, b, noise).map_err(|e| e.to_string())
}

/// Rows of `(x, y, f − f*)` for each solver in [`SOLVERS`] order, `steps + 1` rows each,
/// starting from `(-1.5, 2)`.
pub fn trajectories_impl(
    lip: f64,
    mu: f64,
    angle: f64,
    noise: f64,
    steps: u32,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(format!("steps must lie in 1..={MAX_STEPS}"));
    }
    let q = demo_quadratic(lip, mu, angle, noise)?;
    let f_star = q.f_star().ok_or("singular quadratic")?;
    let x0 = DenseVector::from_vec_unchecked(vec![-1.5, 2.0]);
    let base = BaselineConfig { lr, batch: 16, ..Default::default() };
    let practical = PracticalConfig { epsilon: 1e-4, ..Default::default() };
    let err = |e: afsgm::solvers::SolverError| e.to_string();
    let mut solvers: Vec<Box<dyn Optimizer>> = vec![
        Box::new(Afsgm::practical(x0.clone(), practical, ProxSetup::euclidean(2), seed).map_err(err)?),
        Box::new(Adam::new(x0.clone(), base, seed).map_err(err)?),
        Box::new(AdaGrad::new(x0, base, seed).map_err(err)?),
    ];
    let mut out = Vec::with_capacity(SOLVERS.len() * (steps as usize + 1) * 3);
    for s in solvers.iter_mut() {
        let mut push = |p: &DenseVector| out.extend([p[0], p[1], q.value(p) - f_star]);
        push(s.point());
        // A diverged line search freezes the path so the plot stays readable.
        let mut live = true;
        for _ in 0..steps {
            live = live && s.step(&q).is_ok();
            push(s.point());
        }
    }
    Ok(out)
}

/// Rows of `(L_trial, accept_rate, bias_norm, bias_norm_se)` on a log grid over `[l_min, l_max]`,
/// probing `½‖x‖²` in two dimensions at `(1, 1)`. Points where nothing is accepted report NaN bias.
#[allow(clippy::too_many_arguments)]
pub fn bias_curve_impl(
    noise: f64,
    m: u32,
    l_min: f64,
    l_max: f64,
    points: u32,
    trials: u32,
    practical: bool,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if !(l_min > 0.0 && l_max >= l_min && l_max.is_finite()) {
        return Err(format!("need 0 < l_min <= l_max, got {l_min}, {l_max}"));
    }
    if points == 0 || points > MAX_CURVE_POINTS {
        return Err(format!("points must lie in 1..={MAX_CURVE_POINTS}"));
    }
    if trials == 0 || trials > MAX_TRIALS {
        return Err(format!("trials must lie in 1..={MAX_TRIALS}"));
    }
    let problem = QuadraticProblem::isotropic(2, 1.0, &DenseVector::zeros(2), noise).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(points as usize * 4);
    for i in 0..points {
        let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
        let l_trial = l_min * (l_max / l_min).powf(t);
        let cfg = ProbeConfig {
            trials: trials as u64,
            point: DenseVector::filled(2, 1.0),
            m: m as u64,
            l_trial,
            slack: 0.0,
            mode: if practical { ProbeMode::PracticalRule } else { ProbeMode::TheoreticalRule },
            seed: seed.wrapping_add(i as u64),
            bootstrap: 50,
        };
        match conditional_bias(&cfg, &problem) {
            Ok(r) => out.extend([l_trial, r.accept_rate, r.bias_norm, r.norm_std_error]),
            Err(ProbeError::Degenerate(_)) => out.extend([l_trial, 0.0, f64::NAN, f64::NAN]),
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(out)
}

/// Entropic mirror step `u⁺ ∝ u·exp(−αg)` on the probability simplex.
pub fn simplex_step_impl(u: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>, String> {
    let setup = ProxSetup::entropy_simplex(u.len());
    let u = DenseVector::try_from_vec(u.to_vec()).map_err(|e| e.to_string())?;
    let g = DenseVector::try_from_vec(g.to_vec()).map_err(|e| e.to_string())?;
    setup.mirror_step(&u, &g, alpha).map(DenseVector::into_vec).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn trajectories(
    lip: f64,
    mu: f64,
    angle: f64,
    noise: f64,
    steps: u32,
    lr: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    trajectories_impl(lip, mu, angle, noise, steps, lr, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bias_curve(
    noise: f64,
    m: u32,
    l_min: f64,
    l_max: f64,
    points: u32,
    trials: u32,
    practical: bool,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    bias_curve_impl(noise, m, l_min, l_max, points, trials, practical, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simplex_step(u: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>, JsError> {
    simplex_step_impl(u, g, alpha).map_err(|e| JsError::new(&e))
}

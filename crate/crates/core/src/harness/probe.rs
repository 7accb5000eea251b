use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::ProbeRunConfig;
use super::HarnessError;
use crate::bias_probe::{conditional_bias, BiasReport, ProbeConfig};
use crate::problems::QuadraticProblem;
use crate::vecspace::DenseVector;

pub const PROBE_CSV_HEADER: &str = "coord,exact_gradient,conditional_mean,bias,std_error,ci_low,ci_high";

/// The probed oracle: `½‖x‖²` with Gaussian gradient and value noise.
pub fn probe_problem(cfg: &ProbeRunConfig) -> Result<QuadraticProblem, HarnessError> {
    Ok(QuadraticProblem::isotropic(cfg.dim, 1.0, &DenseVector::zeros(cfg.dim), cfg.noise_sigma)?)
}

pub fn probe(cfg: &ProbeRunConfig) -> Result<BiasReport, HarnessError> {
    let problem = probe_problem(cfg)?;
    let pc = ProbeConfig {
        trials: cfg.trials,
        point: DenseVector::try_from_vec(cfg.point_vector())
            .map_err(|e| HarnessError::Usage(format!("probe.point: {e}")))?,
        m: cfg.m,
        l_trial: cfg.l_trial,
        slack: cfg.slack,
        mode: cfg.mode,
        seed: cfg.seed,
        bootstrap: cfg.bootstrap,
    };
    Ok(conditional_bias(&pc, &problem)?)
}

pub fn probe_report_text(cfg: &ProbeRunConfig, r: &BiasReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "conditional bias probe");
    let _ = writeln!(s, "mode            {}", cfg.mode);
    let _ = writeln!(s, "dim             {}", cfg.dim);
    let _ = writeln!(s, "noise_sigma     {}", cfg.noise_sigma);
    let _ = writeln!(s, "batch m         {}", cfg.m);
    let _ = writeln!(s, "L_trial         {}", cfg.l_trial);
    let _ = writeln!(s, "slack           {}", cfg.slack);
    let _ = writeln!(s, "seed            {}", cfg.seed);
    let _ = writeln!(s, "trials          {}", r.trials);
    let _ = writeln!(s, "accepted        {}", r.accepted);
    let _ = writeln!(s, "accept_rate     {}", r.accept_rate);
    let _ = writeln!(s, "bias_norm       {}", r.bias_norm);
    let _ = writeln!(s, "bias_norm_se    {}", r.norm_std_error);
    let _ = writeln!(s, "max |bias|/se   {}", r.max_z());
    let _ = writeln!(s, "bootstrap       {} resamples, 95% percentile intervals", cfg.bootstrap);
    for i in 0..r.bias_vector.dim() {
        let _ = writeln!(
            s,
            "  bias[{i}] = {} (se {}, ci [{}, {}])",
            r.bias_vector[i], r.std_error[i], r.bias_ci_low[i], r.bias_ci_high[i]
        );
    }
    s
}

pub fn probe_csv(r: &BiasReport) -> String {
    let mut s = format!("{PROBE_CSV_HEADER}\n");
    for i in 0..r.bias_vector.dim() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{}",
            r.exact_gradient[i],
            r.conditional_mean[i],
            r.bias_vector[i],
            r.std_error[i],
            r.bias_ci_low[i],
            r.bias_ci_high[i]
        );
    }
    s
}

/// Runs the probe and writes `probe_report.txt` and `probe_report.csv`.
pub fn write_probe(cfg: &ProbeRunConfig, out_dir: &Path) -> Result<BiasReport, HarnessError> {
    let report = probe(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    for (name, body) in [("probe_report.txt", probe_report_text(cfg, &report)), ("probe_report.csv", probe_csv(&report))] {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_probe_has_zero_bias() {
        let cfg = ProbeRunConfig { noise_sigma: 0.0, trials: 200, bootstrap: 50, ..Default::default() };
        let r = probe(&cfg).unwrap();
        assert_eq!(r.bias_norm, 0.0);
        assert!(probe_report_text(&cfg, &r).contains("bias_norm       0\n"));
    }

    #[test]
    fn default_probe_accepts_a_fraction() {
        let cfg = ProbeRunConfig { trials: 4000, bootstrap: 200, ..Default::default() };
        let r = probe(&cfg).unwrap();
        assert!((0.2..=0.8).contains(&r.accept_rate), "{}", r.accept_rate);
        let csv = probe_csv(&r);
        assert_eq!(csv.lines().count(), cfg.dim + 1);
        assert!(csv.starts_with(PROBE_CSV_HEADER));
    }
}

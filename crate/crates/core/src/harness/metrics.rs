use std::fmt::Write as _;

/// Column order of every metrics CSV. Bump [`METRICS_SCHEMA_VERSION`] when it changes.
pub const METRICS_HEADER: &str = "k,cum_samples,train_loss,test_accuracy,L_cur,m_k,inner_trials,wall_ms";
pub const METRICS_SCHEMA_VERSION: u32 = 1;

pub const SUMMARY_HEADER: &str = "run,solver,problem,iterations,cum_samples,final_train_loss,final_test_accuracy,budget_samples,loss_at_budget,accuracy_at_budget";

/// One logged outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub k: u64,
    pub cum_samples: u64,
    pub train_loss: f64,
    /// `None` for problems without a test split.
    pub test_accuracy: Option<f64>,
    pub l_cur: f64,
    pub m_k: u64,
    pub inner_trials: u32,
    pub wall_ms: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k,
            self.cum_samples,
            self.train_loss,
            opt(self.test_accuracy),
            self.l_cur,
            self.m_k,
            self.inner_trials,
            self.wall_ms
        )
    }

    pub fn parse_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return None;
        }
        Some(Self {
            k: f[0].parse().ok()?,
            cum_samples: f[1].parse().ok()?,
            train_loss: f[2].parse().ok()?,
            test_accuracy: if f[3].is_empty() { None } else { Some(f[3].parse().ok()?) },
            l_cur: f[4].parse().ok()?,
            m_k: f[5].parse().ok()?,
            inner_trials: f[6].parse().ok()?,
            wall_ms: f[7].parse().ok()?,
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Parses a metrics CSV, skipping the header.
pub fn parse_metrics_csv(text: &str) -> Option<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next()? != METRICS_HEADER {
        return None;
    }
    lines.map(MetricsRow::parse_csv).collect()
}

/// Piecewise-linear value of `(cum_samples, value)` at `budget`. Rows must be
/// sorted by `cum_samples`; budgets beyond the last row clamp to it.
pub fn interpolate_at(rows: &[MetricsRow], budget: u64, value: impl Fn(&MetricsRow) -> Option<f64>) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| value(r).map(|v| (r.cum_samples as f64, v))).collect();
    let b = budget as f64;
    let first = pts.first()?;
    if b <= first.0 {
        return Some(first.1);
    }
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if b <= x1 {
            if x1 == x0 {
                return Some(y1);
            }
            return Some(y0 + (b - x0) / (x1 - x0) * (y1 - y0));
        }
    }
    pts.last().map(|p| p.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub run: String,
    pub solver: String,
    pub problem: String,
    pub iterations: u64,
    pub cum_samples: u64,
    pub final_train_loss: f64,
    pub final_test_accuracy: Option<f64>,
    pub budget_samples: u64,
    pub loss_at_budget: f64,
    pub accuracy_at_budget: Option<f64>,
}

impl SummaryLine {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.run,
            self.solver,
            self.problem,
            self.iterations,
            self.cum_samples,
            self.final_train_loss,
            opt(self.final_test_accuracy),
            self.budget_samples,
            self.loss_at_budget,
            opt(self.accuracy_at_budget)
        )
    }
}

pub fn summary_csv(lines: &[SummaryLine]) -> String {
    let mut s = String::new();
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for l in lines {
        s.push_str(&l.to_csv());
        s.push('\n');
    }
    s
}

/// Fixed-width table for the terminal.
pub fn summary_table(lines: &[SummaryLine]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:<18} {:>8} {:>12} {:>14} {:>10} {:>14} {:>10}",
        "run", "solver", "iters", "samples", "final_loss", "final_acc", "loss@budget", "acc@budget"
    );
    let acc = |v: Option<f64>| v.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
    for l in lines {
        let _ = writeln!(
            s,
            "{:<24} {:<18} {:>8} {:>12} {:>14.6e} {:>10} {:>14.6e} {:>10}",
            l.run,
            l.solver,
            l.iterations,
            l.cum_samples,
            l.final_train_loss,
            acc(l.final_test_accuracy),
            l.loss_at_budget,
            acc(l.accuracy_at_budget)
        );
    }
    if let Some(l) = lines.first() {
        let _ = writeln!(s, "budget: {} component gradients", l.budget_samples);
    }
    s
}

use serde::{Deserialize, Serialize};

use super::run::RunResult;
use crate::metrics::{DomainValues, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Overall,
    TObserved,
    TMissing,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Overall, Domain::TObserved, Domain::TMissing];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Overall => "overall",
            Domain::TObserved => "t_observed",
            Domain::TMissing => "t_missing",
        }
    }

    pub fn pick(self, v: &DomainValues) -> Option<f64> {
        match self {
            Domain::Overall => v.overall,
            Domain::TObserved => v.t_observed,
            Domain::TMissing => v.t_missing,
        }
    }
}

/// Sample mean and standard deviation with the `n − 1` denominator; the
/// deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: Metric,
    pub domain: Domain,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean ± std per method, metric and domain. Methods keep their order of
/// first appearance; cells with no finite values are omitted.
pub fn aggregate(results: &[RunResult]) -> Vec<AggregateRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in results {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut rows = Vec::new();
    for method in methods {
        let mine: Vec<&RunResult> = results.iter().filter(|r| r.method == method).collect();
        for metric in Metric::ALL {
            for domain in Domain::ALL {
                let values: Vec<f64> = mine
                    .iter()
                    .filter_map(|r| r.report.metrics.get(&metric).and_then(|v| domain.pick(v)))
                    .filter(|v| v.is_finite())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&values);
                rows.push(AggregateRow {
                    method: method.to_string(),
                    metric,
                    domain,
                    mean,
                    std,
                    n: values.len(),
                });
            }
        }
    }
    rows
}

/// Table with one line per method and metric, columns per domain.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut keys: Vec<(&str, Metric)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method.as_str(), r.metric)) {
            keys.push((&r.method, r.metric));
        }
    }
    let mut s = format!(
        "{:<12} {:<20} {:>22} {:>22} {:>22}\n",
        "method", "metric", "overall", "t_observed", "t_missing"
    );
    for (method, metric) in keys {
        s.push_str(&format!("{method:<12} {:<20}", metric.name()));
        for domain in Domain::ALL {
            let cell = rows
                .iter()
                .find(|r| r.method == method && r.metric == metric && r.domain == domain)
                .map(|r| {
                    let flag = if r.n == 1 { " (n=1)" } else { "" };
                    format!("{:.3} ± {:.3}{flag}", r.mean, r.std)
                })
                .unwrap_or_else(|| "-".to_string());
            s.push_str(&format!(" {cell:>22}"));
        }
        s.push('\n');
    }
    s
}

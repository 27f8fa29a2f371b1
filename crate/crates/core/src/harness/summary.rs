use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CoreError, Result};
use crate::rate::Scheme;

use super::TrialResult;

/// Statistics of one (kind, axis value) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub kind: Scheme,
    pub axis_value: Option<f64>,
    pub rows: usize,
    pub feasible_rows: usize,
    /// Mean sum rate over feasible rows; `None` when no row is feasible.
    pub mean: Option<f64>,
    /// Half-width of the 95% Student-t interval around `mean`.
    pub ci_half_width: Option<f64>,
    pub infeasible_fraction: f64,
}

impl CellSummary {
    pub fn is_infeasible(&self) -> bool {
        self.mean.is_none()
    }
}

/// Two-sided 95% t quantile with `n - 1` degrees of freedom.
pub fn t_quantile_95(n: usize) -> f64 {
    StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t_quantile_95(n) * (var / n as f64).sqrt())
}

/// Per-cell mean and 95% CI of the sum rate, in first-appearance order.
pub fn summarize(rows: &[TrialResult]) -> Result<Vec<CellSummary>> {
    if rows.is_empty() {
        return Err(CoreError::config("table", "no rows to summarize"));
    }
    let mut cells: Vec<(Scheme, Option<f64>, Vec<&TrialResult>)> = Vec::new();
    for r in rows {
        let key = r.axis_value.map(f64::to_bits);
        match cells
            .iter_mut()
            .find(|(k, v, _)| *k == r.kind && v.map(f64::to_bits) == key)
        {
            Some(cell) => cell.2.push(r),
            None => cells.push((r.kind, r.axis_value, vec![r])),
        }
    }
    Ok(cells
        .into_iter()
        .map(|(kind, axis_value, members)| {
            let ok: Vec<f64> = members
                .iter()
                .filter(|r| r.feasible && !r.failed())
                .map(|r| r.sum_rate)
                .collect();
            let (mean, ci) = if ok.is_empty() {
                (None, None)
            } else {
                let (m, h) = mean_ci(&ok);
                (Some(m), Some(h))
            };
            CellSummary {
                kind,
                axis_value,
                rows: members.len(),
                feasible_rows: ok.len(),
                mean,
                ci_half_width: ci,
                infeasible_fraction: 1.0 - ok.len() as f64 / members.len() as f64,
            }
        })
        .collect())
}

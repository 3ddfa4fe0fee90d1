//! Closed-form performance, cost and objective formulas.

use crate::error::{Error, Result};

use super::catalog::BudgetPolicy;

/// Execution time in milliseconds of a task needing `et_ms` on one vCPU when
/// run by a container holding `concpu` vCPUs.
pub fn execution_time(et_ms: f64, concpu: u32) -> Result<f64> {
    if !(et_ms > 0.0) || concpu == 0 {
        return Err(Error::Domain(format!(
            "execution_time needs et > 0 and concpu >= 1, got ({et_ms}, {concpu})"
        )));
    }
    Ok(et_ms / f64::from(concpu))
}

/// Rental fee in USD of a VM priced `price` USD/hour and held over
/// `[st_first, ft_last]` seconds.
pub fn vm_cost(price: f64, st_first: f64, ft_last: f64) -> Result<f64> {
    if !(ft_last >= st_first) {
        return Err(Error::Domain(format!("negative rental span [{st_first}, {ft_last}]")));
    }
    Ok(price * (ft_last - st_first) / 3600.0)
}

/// Rental window of one VM, for cost aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RentalSpan {
    pub price: f64,
    pub start: f64,
    pub end: f64,
}

/// Sum of per-VM fees. Spans are clipped to `[0, horizon_end]` seconds.
pub fn total_cost(spans: impl IntoIterator<Item = RentalSpan>, horizon_end: f64) -> f64 {
    spans
        .into_iter()
        .filter_map(|s| {
            let start = s.start.max(0.0);
            let end = s.end.min(horizon_end);
            (end > start).then(|| s.price * (end - start) / 3600.0)
        })
        .sum()
}

/// Mean response time in milliseconds, or `None` when no request completed.
pub fn average_response_time(responses_ms: &[f64]) -> Option<f64> {
    if responses_ms.is_empty() {
        return None;
    }
    Some(responses_ms.iter().sum::<f64>() / responses_ms.len() as f64)
}

/// `-art - rho * max(0, cost - budget)`.
pub fn objective(art_ms: f64, cost_usd: f64, policy: &BudgetPolicy) -> f64 {
    -art_ms - policy.rho * (cost_usd - policy.budget_usd).max(0.0)
}

/// Percentage by which `cost` exceeds `budget`; zero when within budget.
pub fn violation_degree(cost_usd: f64, budget_usd: f64) -> f64 {
    (cost_usd - budget_usd).max(0.0) / budget_usd * 100.0
}

//! Localization and retrieval metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub const DEFAULT_RADII: [f64; 3] = [5.0, 10.0, 20.0];
pub const DEFAULT_TOP_N: [usize; 3] = [1, 5, 10];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("query {0:?} has no matching truth record")]
    KeyMismatch(String),
}

/// What the pipeline produced for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub id: String,
    /// Selected horizontal position, `None` when localization failed.
    pub position: Option<(f64, f64)>,
    /// 1-based rank of the first retrieved tile with a PDE hit.
    pub hit_rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryTruth {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// How unlocalized queries enter the error statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum FailurePolicy {
    /// Counted as misses for Acc@R, left out of ME and SD.
    #[default]
    Exclude,
    /// Assigned this error in meters everywhere.
    Penalize(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub queries: usize,
    pub localized: usize,
    /// `(R, percent with error strictly below R)`.
    pub acc_at_r: Vec<(f64, f64)>,
    /// `(N, percent with a PDE hit among the top N)`.
    pub recall_at_n: Vec<(usize, f64)>,
    pub mean_error: f64,
    /// Population standard deviation.
    pub std_error: f64,
    /// Per-query error in input order; `None` for excluded failures.
    pub errors: Vec<Option<f64>>,
}

fn percent(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

/// Mean and population standard deviation; zeros for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn evaluate(
    outcomes: &[QueryOutcome],
    truths: &[QueryTruth],
    radii: &[f64],
    top_n: &[usize],
    policy: FailurePolicy,
) -> Result<Metrics, MetricsError> {
    let by_id: BTreeMap<&str, &QueryTruth> = truths.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut errors = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let t = by_id
            .get(o.id.as_str())
            .ok_or_else(|| MetricsError::KeyMismatch(o.id.clone()))?;
        errors.push(match (o.position, policy) {
            (Some((x, y)), _) => Some((x - t.x).hypot(y - t.y)),
            (None, FailurePolicy::Penalize(e)) => Some(e),
            (None, FailurePolicy::Exclude) => None,
        });
    }
    if truths.len() != outcomes.len() {
        let seen: BTreeMap<&str, ()> = outcomes.iter().map(|o| (o.id.as_str(), ())).collect();
        if let Some(t) = truths.iter().find(|t| !seen.contains_key(t.id.as_str())) {
            return Err(MetricsError::KeyMismatch(t.id.clone()));
        }
    }
    let n = outcomes.len();
    let acc_at_r = radii
        .iter()
        .map(|&r| {
            (
                r,
                percent(errors.iter().flatten().filter(|&&e| e < r).count(), n),
            )
        })
        .collect();
    let recall_at_n = top_n
        .iter()
        .map(|&k| {
            (
                k,
                percent(
                    outcomes
                        .iter()
                        .filter(|o| o.hit_rank.is_some_and(|h| h <= k))
                        .count(),
                    n,
                ),
            )
        })
        .collect();
    let counted: Vec<f64> = errors.iter().flatten().copied().collect();
    let (mean_error, std_error) = mean_std(&counted);
    Ok(Metrics {
        queries: n,
        localized: outcomes.iter().filter(|o| o.position.is_some()).count(),
        acc_at_r,
        recall_at_n,
        mean_error,
        std_error,
        errors,
    })
}

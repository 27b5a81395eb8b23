use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, Metric, ScoredSet};
use crate::num::Real;
use crate::rng;

/// Redraws allowed for a resample that loses a class before it is skipped.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_estimates: usize,
    pub skipped_resamples: usize,
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Seed × resample bootstrap of `metric` over model runs scored on the same
/// records. Each (run, resample, attempt) triple draws from its own derived
/// stream, so the estimate does not depend on `workers`.
pub fn bootstrap<T: Real>(
    metric: Metric,
    runs: &[ScoredSet<T>],
    n_resamples: usize,
    master_seed: u64,
    workers: usize,
) -> Result<MetricEstimate, EvalError> {
    let n = runs.first().map_or(0, ScoredSet::len);
    bootstrap_with(metric, runs, n_resamples, workers, |run, resample, attempt| {
        let mut r = rng::rng_from(master_seed, &[run as u64, resample as u64, attempt as u64]);
        (0..n).map(|_| r.random_range(0..n)).collect()
    })
}

/// [`bootstrap`] with a caller-supplied resampler returning positions into
/// the first run's record order.
pub fn bootstrap_with<T, F>(
    metric: Metric,
    runs: &[ScoredSet<T>],
    n_resamples: usize,
    workers: usize,
    draw: F,
) -> Result<MetricEstimate, EvalError>
where
    T: Real,
    F: Fn(usize, usize, usize) -> Vec<usize> + Sync,
{
    let reference = runs.first().ok_or(EvalError::AllDegenerate)?;
    if n_resamples == 0 || reference.is_empty() {
        return Err(EvalError::AllDegenerate);
    }
    // position of each reference id within every run
    let maps: Vec<Vec<usize>> = runs
        .iter()
        .map(|run| {
            if run.len() != reference.len() {
                return Err(EvalError::RunMismatch);
            }
            let pos: HashMap<&str, usize> = run.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            reference
                .ids
                .iter()
                .map(|id| pos.get(id.as_str()).copied().ok_or(EvalError::RunMismatch))
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let task = |t: usize| -> Option<f64> {
        let (run, resample) = (t / n_resamples, t % n_resamples);
        for attempt in 0..=MAX_REDRAWS {
            let idx: Vec<usize> = draw(run, resample, attempt).into_iter().map(|i| maps[run][i]).collect();
            let sample = runs[run].subset(&idx);
            let pos = sample.n_pos();
            if pos == 0 || pos == sample.len() {
                continue;
            }
            return metric.compute(&sample).ok().map(|v| v.f64());
        }
        None
    };
    let total = runs.len() * n_resamples;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let values: Vec<Option<f64>> = pool.install(|| (0..total).into_par_iter().map(task).collect());

    let skipped = values.iter().filter(|v| v.is_none()).count();
    let mut collected: Vec<f64> = values.into_iter().flatten().collect();
    if collected.is_empty() {
        return Err(EvalError::AllDegenerate);
    }
    let mean = collected.iter().sum::<f64>() / collected.len() as f64;
    collected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(MetricEstimate {
        metric: metric.name().to_string(),
        mean,
        ci_low: percentile(&collected, 0.025),
        ci_high: percentile(&collected, 0.975),
        n_estimates: collected.len(),
        skipped_resamples: skipped,
    })
}

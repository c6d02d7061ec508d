use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Summary of inference times, in seconds. `std_dev` is the population
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std_dev: f64,
}

pub fn latency_stats(samples: &[f64]) -> Result<LatencyStats, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let n = samples.len() as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (samples.iter().sum::<f64>() / n).clamp(min, max);
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(LatencyStats {
        count: samples.len(),
        mean,
        min,
        max,
        std_dev: var.sqrt(),
    })
}

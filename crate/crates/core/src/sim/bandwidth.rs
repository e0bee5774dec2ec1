use super::SimError;

/// Utilization beyond which queueing inflation stops growing.
pub const UTILIZATION_CAP: f64 = 0.95;

/// Loaded latency of a node at utilization `u`: `base / (1 - u)`, with `u`
/// clamped to `[0, 0.95]`.
pub fn access_latency(base_latency_ns: f64, utilization: f64) -> f64 {
    let u = if utilization.is_nan() {
        0.0
    } else {
        utilization.clamp(0.0, UTILIZATION_CAP)
    };
    base_latency_ns / (1.0 - u)
}

/// Fraction of aggregate bandwidth usable when traffic is split across
/// nodes by `shares`. Nodes with a zero share carry no traffic and are left
/// out of the bottleneck search.
pub fn steady_state_utilization(shares: &[f64], bandwidths: &[f64]) -> Result<f64, SimError> {
    if shares.len() != bandwidths.len() || shares.is_empty() {
        return Err(SimError::DegenerateShare(format!(
            "{} shares for {} nodes",
            shares.len(),
            bandwidths.len()
        )));
    }
    if bandwidths.iter().any(|&b| !(b > 0.0)) {
        return Err(SimError::DegenerateShare("bandwidths must be > 0".into()));
    }
    if shares.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
        return Err(SimError::DegenerateShare("shares must be in [0, 1]".into()));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SimError::DegenerateShare(format!("shares sum to {sum}")));
    }
    let total: f64 = bandwidths.iter().sum();
    let bottleneck = shares
        .iter()
        .zip(bandwidths)
        .filter(|(&s, _)| s > 0.0)
        .map(|(&s, &b)| b / s)
        .fold(f64::INFINITY, f64::min);
    Ok((bottleneck / total).min(1.0))
}

//! Small sampling statistics used by the diagnostics.

/// Two-sided critical value of the standard normal at the 1% level.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Standardized sign statistic `(k − n/2)/(√n/2)` for `k` positives out of `n`
/// nonzero values; zeros are discarded.
pub fn sign_statistic(values: &[f64]) -> Option<f64> {
    let pos = values.iter().filter(|&&v| v > 0.0).count() as f64;
    let n = values.iter().filter(|&&v| v != 0.0).count() as f64;
    (n > 0.0).then(|| (pos - n / 2.0) / (n.sqrt() / 2.0))
}

/// `true` when the two-sided sign test does not reject symmetry about zero at 1%.
pub fn sign_symmetric(values: &[f64]) -> bool {
    sign_statistic(values).is_some_and(|z| z.abs() <= Z_99)
}

/// Empirical `p`-quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// `p`-quantile of the pooled sample with a batch-means standard error: the
/// sample is split into `batches` contiguous groups and the spread of the
/// per-group quantiles is scaled by `1/√batches`.
pub fn quantile_with_stderr(values: &[f64], p: f64, batches: usize) -> Option<(f64, f64)> {
    if batches < 2 || values.len() < 2 * batches {
        return None;
    }
    let q = quantile(values, p)?;
    let size = values.len() / batches;
    let per: Vec<f64> = values.chunks_exact(size).take(batches).filter_map(|c| quantile(c, p)).collect();
    let k = per.len() as f64;
    let mean = per.iter().sum::<f64>() / k;
    let var = per.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Some((q, (var / k).sqrt()))
}

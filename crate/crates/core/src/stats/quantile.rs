use super::StatsError;

/// Linear-interpolation quantile of an ascending slice: with h = (n-1)p the
/// result is x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
///
/// Panics on an empty slice.
pub fn linear_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn quantile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::BadLevel(p));
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(linear_quantile_sorted(&sorted, p))
}

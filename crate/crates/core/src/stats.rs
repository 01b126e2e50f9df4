//! Small descriptive-statistics helpers shared by the summary layers.

/// Arithmetic mean; NaN for an empty slice. Accumulated relative to the
/// first value, so constant input returns that value exactly.
pub fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        None => f64::NAN,
        Some(&x0) => x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64,
    }
}

/// Sample standard deviation with the `n - 1` denominator.
/// `None` when fewer than two values are given.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Quantile of already-sorted data by linear interpolation between order
/// statistics: position `h = (n - 1) p`, value `x[⌊h⌋] + (h - ⌊h⌋)(x[⌊h⌋+1] - x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of unsorted data (copies and sorts).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Effective sample size of a single chain using Geyer's initial positive
/// sequence, with the monotone correction. Returns `None` for chains with
/// fewer than four draws or zero variance.
///
/// The estimate is capped at `n log10(n)` for antithetic chains.
pub fn effective_sample_size(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 4 {
        return None;
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if !(c0.is_finite() && c0 > 0.0) {
        return None;
    }

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let nf = n as f64;
    let ess = nf / tau.max(1e-12);
    Some(ess.min(nf * nf.log10()))
}

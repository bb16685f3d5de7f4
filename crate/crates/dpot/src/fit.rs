//! Small least-squares helpers used by the finite-data classifiers.

/// Slope of the least-squares line through (x, y).
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Decay exponent s of a sequence a_t ≈ t^{-s}, from log a_t against log t
/// over the last half of the samples.
pub fn tail_decay_exponent(t: &[f64], log_a: &[f64]) -> f64 {
    let n = t.len();
    let start = n / 2;
    let start = start.min(n.saturating_sub(2));
    let lx: Vec<f64> = t[start..].iter().map(|v| v.ln()).collect();
    -ls_slope(&lx, &log_a[start..])
}

/// log(Σ exp(v)) computed stably.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Verdict on a sequence of measurements taken at increasing truncations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Bounded,
    Growing,
    Indeterminate,
}

/// Last-step growth below which a trend counts as bounded.
pub const BOUNDED_LAST_STEP: f64 = 0.10;
/// Successive ratios at or above this value count as growth.
pub const GROWING_RATIO: f64 = 1.05;

/// Successive ratios v[i+1]/v[i].
pub fn growth_ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Bounded: the last two values differ by < 10% and the last ratio is no
/// farther from 1 than the first. Growing: every ratio ≥ 1.05.
pub fn classify_trend(v: &[f64]) -> Trend {
    let r = growth_ratios(v);
    if r.is_empty() || r.iter().any(|x| !x.is_finite()) {
        return Trend::Indeterminate;
    }
    if r.iter().all(|&x| x >= GROWING_RATIO) {
        return Trend::Growing;
    }
    let last = *r.last().unwrap();
    let settling = (last - 1.0).abs() <= (r[0] - 1.0).abs() + 1e-12;
    if (last - 1.0).abs() < BOUNDED_LAST_STEP && settling {
        Trend::Bounded
    } else {
        Trend::Indeterminate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_decay_is_recovered() {
        let t: Vec<f64> = (1..=40).map(|k| k as f64).collect();
        let la: Vec<f64> = t.iter().map(|x| -1.7 * x.ln() + 0.3).collect();
        assert!((tail_decay_exponent(&t, &la) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn trends() {
        assert_eq!(classify_trend(&[1.0, 1.2, 1.3, 1.32]), Trend::Bounded);
        assert_eq!(classify_trend(&[1.0, 1.1, 1.2, 1.3]), Trend::Growing);
        assert_eq!(classify_trend(&[1.0, 1.01, 1.2]), Trend::Indeterminate);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 1.5];
        let direct: f64 = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
    }
}

// Log-domain helpers shared by the allocation processes and the samplers.

use rand::Rng;

/// Converts log weights to normalized probabilities in place, using
/// max-subtraction. Infinite log weights saturate to a point mass (or a
/// uniform mass over the tied infinities) instead of producing NaN.
pub fn normalize_log_weights(log_weights: &mut [f64]) {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // No candidate has positive mass; callers treat this as zero
        // probability everywhere (the log-pmf is -inf upstream).
        for w in log_weights.iter_mut() {
            *w = 0.0;
        }
        return;
    }
    if max == f64::INFINITY {
        let ties = log_weights.iter().filter(|w| w.is_infinite() && **w > 0.0).count();
        let p = 1.0 / ties as f64;
        for w in log_weights.iter_mut() {
            *w = if w.is_infinite() && *w > 0.0 { p } else { 0.0 };
        }
        return;
    }
    let mut sum = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        sum += *w;
    }
    for w in log_weights.iter_mut() {
        *w /= sum;
    }
}

/// log(sum_i exp(x_i)) with max-subtraction.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Draws an index from normalized probabilities.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_matches_direct_computation() {
        let mut lw = [0.0_f64.ln(), 1.0_f64.ln(), 3.0_f64.ln()];
        normalize_log_weights(&mut lw);
        assert_relative_eq!(lw[0], 0.0);
        assert_relative_eq!(lw[1], 0.25, epsilon = 1e-15);
        assert_relative_eq!(lw[2], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn saturation_avoids_nan() {
        let mut lw = [f64::INFINITY, 3.0, f64::NEG_INFINITY];
        normalize_log_weights(&mut lw);
        assert_eq!(lw, [1.0, 0.0, 0.0]);

        let mut huge = [1e300, 5.0];
        normalize_log_weights(&mut huge);
        assert_eq!(huge, [1.0, 0.0]);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_relative_eq!(
            log_sum_exp(&[1000.0, 1000.0]),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}

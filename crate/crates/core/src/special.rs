//! Special functions needed by the samplers and the hyperparameter updates.

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic series in 1/x^2
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma function for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = 1.0
        + 0.5 * inv
        + inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + inv * series
}

/// Solves `digamma(x) = y` for `x > 0` by Newton iteration.
///
/// Returns `None` if the iteration does not reach `tol` within `max_iter`
/// steps.
pub fn inverse_digamma(y: f64, tol: f64, max_iter: usize) -> Option<f64> {
    if !y.is_finite() {
        return None;
    }
    const NEG_DIGAMMA_ONE: f64 = 0.577_215_664_901_532_9;
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y + NEG_DIGAMMA_ONE)
    };
    for _ in 0..max_iter {
        let step = (digamma(x) - y) / trigamma(x);
        let mut next = x - step;
        if next <= 0.0 {
            next = x * 0.5;
        }
        let done = (next - x).abs() <= tol * x.max(1.0);
        x = next;
        if done {
            return Some(x);
        }
    }
    None
}

/// `ln Φ(z)` for the standard normal CDF, accurate far into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -20.0 {
        (0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)).ln()
    } else {
        // Mills ratio expansion
        let z2 = z * z;
        let inv = 1.0 / z2;
        let corr =
            1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv + 105.0 * inv * inv * inv * inv;
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + corr.ln()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Log density of `N(x | mean, 1/precision)`.
pub fn ln_normal_pdf_precision(x: f64, mean: f64, precision: f64) -> f64 {
    let d = x - mean;
    0.5 * precision.ln() - LN_SQRT_2PI - 0.5 * precision * d * d
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

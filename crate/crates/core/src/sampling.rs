//! Exact draws from the Gibbs conditionals of the sparse coding model.
//!
//! With noise precision `τ` and Laplace scale `b`, the conditional of one
//! coefficient is proportional to
//! `exp(-(τ/2)(A x² - 2 B x) - |x| / b)`, where `A` is the squared norm of
//! its basis and `B` the basis projected onto the partial residual. Each
//! half-line is a Gaussian with variance `1/(τA)` and mean `B/A ∓ 1/(τAb)`,
//! so the conditional is a two-piece truncated-Gaussian mixture.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::special::ln_normal_cdf;

/// Shape and rate of the precision conditional `Gamma(α_N, β_N)`.
pub fn tau_posterior(alpha0: f64, beta0: f64, n: usize, rss: f64) -> (f64, f64) {
    (alpha0 + 0.5 * n as f64, beta0 + 0.5 * rss)
}

/// Draw from `Gamma(shape, rate)` (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g =
        Gamma::new(shape, 1.0 / rate).map_err(|_| Error::Numeric("invalid gamma parameters"))?;
    let draw = g.sample(rng);
    // guards against underflow for tiny shapes
    Ok(draw.max(f64::MIN_POSITIVE))
}

/// Draws the noise precision given the current coefficients.
pub fn sample_tau<R: Rng + ?Sized>(
    y: &[f64],
    x: &[f64],
    dict: &Dictionary,
    alpha0: f64,
    beta0: f64,
    rng: &mut R,
) -> Result<f64> {
    check_inputs(y, x, dict)?;
    let fit = dict.mul_vec(x);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    let (shape, rate) = tau_posterior(alpha0, beta0, y.len(), rss);
    sample_gamma(shape, rate, rng)
}

fn check_inputs(y: &[f64], x: &[f64], dict: &Dictionary) -> Result<()> {
    if y.len() != dict.rows() {
        return Err(Error::shape(dict.rows(), y.len()));
    }
    if x.len() != dict.cols() {
        return Err(Error::shape(dict.cols(), x.len()));
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input"));
    }
    Ok(())
}

/// Standard normal draw conditioned on `z >= lower`.
pub fn standard_normal_above<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower < 0.45 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= lower {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate
    let lambda = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / lambda;
        let u: f64 = rng.random();
        let d = z - lambda;
        if u <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

/// Draw from `N(mean, sd²)` restricted to `[0, ∞)`.
pub fn truncated_normal_nonneg<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let z = standard_normal_above(-mean / sd, rng);
    (mean + sd * z).max(0.0)
}

/// Draw from the Laplace prior `(1/2b) exp(-|x|/b)`, or its nonnegative half.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, nonneg: bool, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    let mag = e * scale;
    if nonneg || rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Parameters of one coefficient conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientConditional {
    /// `A = Σ_i H_ij²`.
    pub a: f64,
    /// `B = Σ_i H_ij (y_i - Σ_{j'≠j} H_ij' x_j')`.
    pub b_proj: f64,
    pub tau: f64,
    pub scale: f64,
    pub nonneg: bool,
}

impl CoefficientConditional {
    /// Unnormalized log density; `-inf` outside the support.
    pub fn ln_density(&self, x: f64) -> f64 {
        if self.nonneg && x < 0.0 {
            return f64::NEG_INFINITY;
        }
        -0.5 * self.tau * (self.a * x * x - 2.0 * self.b_proj * x) - x.abs() / self.scale
    }

    /// Probability mass of the nonnegative piece.
    pub fn positive_weight(&self) -> f64 {
        if self.nonneg {
            return 1.0;
        }
        if self.a == 0.0 {
            return 0.5;
        }
        let prec = self.tau * self.a;
        let sd = 1.0 / prec.sqrt();
        let centre = self.b_proj / self.a;
        let shift = 1.0 / (prec * self.scale);
        let mu_pos = centre - shift;
        let mu_neg = centre + shift;
        let w_pos = 0.5 * prec * mu_pos * mu_pos + ln_normal_cdf(mu_pos / sd);
        let w_neg = 0.5 * prec * mu_neg * mu_neg + ln_normal_cdf(-mu_neg / sd);
        1.0 / (1.0 + (w_neg - w_pos).exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.a == 0.0 {
            return sample_laplace(self.scale, self.nonneg, rng);
        }
        let prec = self.tau * self.a;
        let sd = 1.0 / prec.sqrt();
        let centre = self.b_proj / self.a;
        let shift = 1.0 / (prec * self.scale);
        let p_pos = self.positive_weight();
        let positive = self.nonneg || rng.random::<f64>() < p_pos;
        if positive {
            truncated_normal_nonneg(centre - shift, sd, rng)
        } else {
            -truncated_normal_nonneg(-(centre + shift), sd, rng)
        }
    }
}

/// Draws coefficient `j` given every other coefficient.
#[allow(clippy::too_many_arguments)]
pub fn sample_xj<R: Rng + ?Sized>(
    j: usize,
    y: &[f64],
    x: &[f64],
    dict: &Dictionary,
    tau: f64,
    scale: f64,
    rng: &mut R,
    nonneg: bool,
) -> Result<f64> {
    check_inputs(y, x, dict)?;
    if !(tau > 0.0) || !(scale > 0.0) {
        return Err(Error::param("tau/b", "must be positive"));
    }
    let fit = dict.mul_vec(x);
    let (idx, vals) = dict.column(j);
    let mut a = 0.0;
    let mut b_proj = 0.0;
    for (&i, &h) in idx.iter().zip(vals) {
        a += h * h;
        b_proj += h * (y[i] - fit[i] + h * x[j]);
    }
    let cond = CoefficientConditional {
        a,
        b_proj,
        tau,
        scale,
        nonneg,
    };
    Ok(cond.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_residual_keeps_prior_rate() {
        let (shape, rate) = tau_posterior(1.0, 2.5, 4, 0.0);
        assert_eq!(shape, 3.0);
        assert_eq!(rate, 2.5);
    }

    #[test]
    fn tail_truncation_stays_above_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &lower in &[-3.0, 0.0, 0.44, 0.46, 5.0, 40.0] {
            for _ in 0..200 {
                assert!(standard_normal_above(lower, &mut rng) >= lower);
            }
        }
    }

    #[test]
    fn nonneg_draws_are_nonneg() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = CoefficientConditional {
            a: 1.0,
            b_proj: -50.0,
            tau: 10.0,
            scale: 0.1,
            nonneg: true,
        };
        for _ in 0..1000 {
            assert!(c.sample(&mut rng) >= 0.0);
        }
    }

    #[test]
    fn positive_weight_is_symmetric_at_zero_projection() {
        let c = CoefficientConditional {
            a: 2.0,
            b_proj: 0.0,
            tau: 3.0,
            scale: 0.7,
            nonneg: false,
        };
        assert!((c.positive_weight() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nan_inputs_are_rejected() {
        let d = Dictionary::from_dense_columns(2, &[alloc::vec![1.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_tau(&[f64::NAN, 0.0], &[0.0], &d, 1.0, 1.0, &mut rng).is_err());
    }
}

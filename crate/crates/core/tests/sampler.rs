use hydrosep_core::sampling::{sample_tau, tau_posterior, CoefficientConditional};
use hydrosep_core::Dictionary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 50_000;
const GRID: usize = 200_000;

/// CDF of the conditional tabulated by trapezoid rule on `[lo, hi]`.
fn grid_cdf(cond: &CoefficientConditional, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let step = (hi - lo) / GRID as f64;
    let xs: Vec<f64> = (0..=GRID).map(|k| lo + k as f64 * step).collect();
    let ln: Vec<f64> = xs.iter().map(|&x| cond.ln_density(x)).collect();
    let top = ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = ln.iter().map(|l| (l - top).exp()).collect();
    let mut cdf = vec![0.0; xs.len()];
    for k in 1..xs.len() {
        cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * step;
    }
    let total = cdf[GRID];
    cdf.iter_mut().for_each(|c| *c /= total);
    (xs, cdf)
}

fn ks_against_grid(mut draws: Vec<f64>, xs: &[f64], cdf: &[f64]) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let lo = xs[0];
    let step = xs[1] - xs[0];
    let mut worst: f64 = 0.0;
    for (k, &d) in draws.iter().enumerate() {
        let pos = ((d - lo) / step).clamp(0.0, (xs.len() - 1) as f64);
        let i = (pos.floor() as usize).min(xs.len() - 2);
        let frac = pos - i as f64;
        let f = cdf[i] + frac * (cdf[i + 1] - cdf[i]);
        worst = worst
            .max((f - k as f64 / n).abs())
            .max((f - (k + 1) as f64 / n).abs());
    }
    worst
}

fn support(cond: &CoefficientConditional) -> (f64, f64) {
    let (lo, hi) = if cond.a == 0.0 {
        (-40.0 * cond.scale, 40.0 * cond.scale)
    } else {
        let sd = 1.0 / (cond.tau * cond.a).sqrt();
        let c = cond.b_proj / cond.a;
        let shift = 1.0 / (cond.tau * cond.a * cond.scale);
        (
            c.min(0.0) - shift - 12.0 * sd,
            c.max(0.0) + shift + 12.0 * sd,
        )
    };
    if cond.nonneg {
        (0.0, hi)
    } else {
        (lo, hi)
    }
}

#[test]
fn coefficient_draws_match_the_conditional_density() {
    let configs = [
        (1.0, 0.5, 4.0, 0.5, false),
        (2.0, -1.0, 1.0, 0.3, false),
        (0.5, 3.0, 10.0, 1.0, true),
        (1.0, -2.0, 5.0, 0.2, true),
        (0.8, 0.1, 0.5, 2.0, false),
        (0.0, 0.0, 1.0, 0.7, false),
        (0.0, 0.0, 3.0, 0.4, true),
    ];
    for (k, &(a, b_proj, tau, scale, nonneg)) in configs.iter().enumerate() {
        let cond = CoefficientConditional {
            a,
            b_proj,
            tau,
            scale,
            nonneg,
        };
        let (lo, hi) = support(&cond);
        let (xs, cdf) = grid_cdf(&cond, lo, hi);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let draws: Vec<f64> = (0..DRAWS).map(|_| cond.sample(&mut rng)).collect();
        if nonneg {
            assert!(draws.iter().all(|x| *x >= 0.0));
        }
        let ks = ks_against_grid(draws, &xs, &cdf);
        assert!(ks < 0.02, "config {k}: KS distance {ks}");
    }
}

#[test]
fn precision_draws_match_gamma_moments() {
    let dict =
        Dictionary::from_dense_columns(3, &[vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]).unwrap();
    let y = [1.5, 0.2, -0.4];
    let x = [1.0, 0.5];
    let (alpha0, beta0) = (2.0, 0.5);
    let fit = dict.mul_vec(&x);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    let (shape, rate) = tau_posterior(alpha0, beta0, y.len(), rss);
    assert_eq!(shape, alpha0 + 1.5);
    assert!((rate - (beta0 + 0.5 * rss)).abs() < 1e-15);

    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_tau(&y, &x, &dict, alpha0, beta0, &mut rng).unwrap())
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64;
    let mu = shape / rate;
    let sigma2 = shape / (rate * rate);
    let se_mean = (sigma2 / n as f64).sqrt();
    let se_var = sigma2 * ((2.0 + 6.0 / shape) / n as f64).sqrt();
    assert!((mean - mu).abs() < 4.0 * se_mean, "mean {mean} vs {mu}");
    assert!(
        (var - sigma2).abs() < 4.0 * se_var,
        "variance {var} vs {sigma2}"
    );
}

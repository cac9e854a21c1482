//! Per-device Bayesian sparse coding with a Laplace prior, trained by
//! Monte-Carlo EM.
//!
//! Generative model for one day `y` (length `N`):
//! `y = H x + u`, `u ~ N(0, τ⁻¹ I)`, `x_j ~ Laplace(0, b)`,
//! `τ ~ Gamma(α₀, β₀)` with rate `β₀`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{ConsumptionMatrix, Device};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::gibbs::{
    chain_rng, collect_chain, column_norms_sq, iteration_seed, run_chain, ChainModel, EStepStats,
    GibbsConfig, GibbsSample, HUpdateMode, LiteralRule,
};
use crate::special::{digamma, inverse_digamma, trigamma};

pub const DEFAULT_B: f64 = 0.5;
pub const DEFAULT_ALPHA0: f64 = 1.0;
pub const DEFAULT_BETA0: f64 = 1.0;
/// Lower clamp of the Laplace scale.
pub const B_MIN: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 25;
const HYPER_ALTERNATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub device: Device,
    pub dictionary: Dictionary,
    pub b: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl DeviceModel {
    /// Untrained model with default priors.
    pub fn initial(device: Device, dictionary: Dictionary) -> Self {
        DeviceModel {
            device,
            dictionary,
            b: DEFAULT_B,
            alpha0: DEFAULT_ALPHA0,
            beta0: DEFAULT_BETA0,
        }
    }

    pub fn intervals(&self) -> usize {
        self.dictionary.rows()
    }
}

/// Laplace scale at which the prior's expected total volume, `b Σ_j ‖h_j‖₁`,
/// equals the mean daily volume of `y`. Falls back to [`DEFAULT_B`] when
/// either side is zero.
pub fn data_scaled_b(y: &ConsumptionMatrix, dict: &Dictionary) -> f64 {
    let l1: f64 = (0..dict.cols())
        .map(|j| dict.column(j).1.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    let days = y.days().max(1) as f64;
    let volume = y.values.sum() / days;
    if l1 > 0.0 && volume > 0.0 {
        clamp_b(volume / l1)
    } else {
        DEFAULT_B
    }
}

/// Retained Gibbs samples for a single day.
pub fn gibbs_chain(
    y: &[f64],
    dict: &Dictionary,
    b: f64,
    alpha0: f64,
    beta0: f64,
    cfg: &GibbsConfig,
) -> Result<Vec<GibbsSample>> {
    let norms = column_norms_sq(dict);
    let scales = vec![b; dict.cols()];
    let model = ChainModel {
        dict,
        norms_sq: &norms,
        scales: &scales,
        alpha0,
        beta0,
    };
    collect_chain(y, &model, cfg, &mut chain_rng(cfg.seed, 0))
}

/// Monte-Carlo estimate of `Q`: the mean of `ln P(y, x, τ | θ)` over samples.
pub fn evaluate_q(
    samples: &[GibbsSample],
    y: &[f64],
    dict: &Dictionary,
    b: f64,
    alpha0: f64,
    beta0: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    let norms = column_norms_sq(dict);
    let scales = vec![b; dict.cols()];
    let model = ChainModel {
        dict,
        norms_sq: &norms,
        scales: &scales,
        alpha0,
        beta0,
    };
    let mut total = 0.0;
    for s in samples {
        let fit = dict.mul_vec(&s.x);
        let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
        total += model.ln_joint(rss, y.len(), &s.x, s.tau);
    }
    Ok(total / samples.len() as f64)
}

fn stats_from_samples(
    samples: &[GibbsSample],
    y: &[f64],
    dict: &Dictionary,
    mode: HUpdateMode,
    rule: LiteralRule,
) -> EStepStats {
    let norms = column_norms_sq(dict);
    let scales = vec![1.0; dict.cols()];
    let model = ChainModel {
        dict,
        norms_sq: &norms,
        scales: &scales,
        alpha0: 1.0,
        beta0: 1.0,
    };
    let mut stats = EStepStats::new(dict, mode, rule);
    let mut resid = vec![0.0; y.len()];
    for s in samples {
        dict.mul_vec_into(&s.x, &mut resid);
        for (r, yi) in resid.iter_mut().zip(y) {
            *r = yi - *r;
        }
        stats.add(y, &model, &s.x, s.tau, &resid);
    }
    stats.end_day(y);
    stats
}

/// M-step dictionary update from explicit samples of one day.
pub fn mstep_update_h(
    samples: &[GibbsSample],
    y: &[f64],
    dict: &Dictionary,
    mode: HUpdateMode,
    nonneg: bool,
) -> Result<Dictionary> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    let stats = stats_from_samples(samples, y, dict, mode, LiteralRule::Device);
    let mut out = dict.clone();
    stats.update_dictionary(&mut out, nonneg);
    Ok(out)
}

/// Laplace scale update: mean absolute coefficient, clamped at [`B_MIN`].
pub fn mstep_update_b(samples: &[GibbsSample]) -> Result<f64> {
    let m = samples
        .first()
        .ok_or(Error::EmptyInput("no samples"))?
        .x
        .len();
    if m == 0 {
        return Err(Error::EmptyInput("no coefficients"));
    }
    let total: f64 = samples
        .iter()
        .flat_map(|s| s.x.iter())
        .map(|v| v.abs())
        .sum();
    Ok(clamp_b(total / (samples.len() as f64 * m as f64)))
}

fn clamp_b(b: f64) -> f64 {
    if b.is_finite() {
        b.max(B_MIN)
    } else {
        B_MIN
    }
}

/// Result of the Gamma hyperparameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperUpdate {
    pub alpha0: f64,
    pub beta0: f64,
    /// False when a Newton solve failed and the previous values were kept.
    pub converged: bool,
}

/// Solves `ln α - ψ(α) = s` for `s > 0`.
fn solve_gamma_shape(s: f64) -> Option<f64> {
    let mut alpha = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..NEWTON_MAX_ITER * 4 {
        let f = alpha.ln() - digamma(alpha) - s;
        let df = 1.0 / alpha - trigamma(alpha);
        let mut next = alpha - f / df;
        if !(next > 0.0) || !next.is_finite() {
            next = alpha * 0.5;
        }
        let done = (next - alpha).abs() <= NEWTON_TOL * alpha;
        alpha = next;
        if done {
            return Some(alpha);
        }
    }
    None
}

/// Gamma hyperparameter update from pooled precision moments.
///
/// Stationarity of the precision prior term gives
/// `ψ(α₀) = ln β₀ + mean ln τ` and `β₀ = α₀ / mean τ`. The pair is solved by
/// alternating a `β₀` update with an inverse-digamma Newton solve for `α₀`,
/// warm-started at the joint solution of the profile equation
/// `ln α₀ - ψ(α₀) = ln mean τ - mean ln τ`. When every `τ` is equal that
/// equation has no finite root and only the alternations run.
pub fn update_hyperparams_from_moments(
    mean_tau: f64,
    mean_ln_tau: f64,
    alpha0: f64,
    beta0: f64,
) -> HyperUpdate {
    let keep = HyperUpdate {
        alpha0,
        beta0,
        converged: false,
    };
    if !(mean_tau > 0.0) || !mean_ln_tau.is_finite() {
        return keep;
    }
    let gap = mean_tau.ln() - mean_ln_tau;
    let mut alpha = alpha0;
    if gap > 1e-10 {
        match solve_gamma_shape(gap) {
            Some(a) => alpha = a,
            None => return keep,
        }
    }
    let mut beta = beta0;
    for _ in 0..HYPER_ALTERNATIONS {
        beta = alpha / mean_tau;
        match inverse_digamma(beta.ln() + mean_ln_tau, NEWTON_TOL, NEWTON_MAX_ITER) {
            Some(a) => alpha = a,
            None => return keep,
        }
    }
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return keep;
    }
    HyperUpdate {
        alpha0: alpha,
        beta0: beta,
        converged: true,
    }
}

pub fn update_hyperparams(samples: &[GibbsSample], alpha0: f64, beta0: f64) -> Result<HyperUpdate> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    let n = samples.len() as f64;
    let mean_tau = samples.iter().map(|s| s.tau).sum::<f64>() / n;
    let mean_ln_tau = samples.iter().map(|s| s.tau.ln()).sum::<f64>() / n;
    Ok(update_hyperparams_from_moments(
        mean_tau,
        mean_ln_tau,
        alpha0,
        beta0,
    ))
}

/// Diagnostics of one EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    /// Monte-Carlo `Q` under the parameters the samples were drawn with.
    pub q: f64,
    /// Mean over nonzero days of `‖y - H E[x]‖₂ / ‖y‖₂` in the E-step.
    pub reconstruction_error: f64,
    pub b: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub hyper_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub iterations: Vec<EmIteration>,
    /// Whether the relative change of `Q` fell below the tolerance.
    pub converged: bool,
}

/// Posterior-mean reconstruction error of one day.
pub(crate) struct DayAccumulator {
    sum_x: Vec<f64>,
    count: usize,
}

impl DayAccumulator {
    pub(crate) fn new(m: usize) -> Self {
        DayAccumulator {
            sum_x: vec![0.0; m],
            count: 0,
        }
    }

    pub(crate) fn add(&mut self, x: &[f64]) {
        self.count += 1;
        for (s, v) in self.sum_x.iter_mut().zip(x) {
            *s += v;
        }
    }

    pub(crate) fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum_x.iter().map(|s| s / n).collect()
    }
}

pub(crate) fn relative_error(y: &[f64], fit: &[f64]) -> Option<f64> {
    let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let err: f64 = y
        .iter()
        .zip(fit)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Some(err / norm)
}

/// One E-step over all day columns: a chain per day, statistics pooled.
pub(crate) fn e_step(
    days: &[&[f64]],
    model: &ChainModel<'_>,
    cfg: &GibbsConfig,
    iteration: usize,
    rule: LiteralRule,
) -> Result<(EStepStats, f64)> {
    let seed = iteration_seed(cfg.seed, iteration);
    let mut stats = EStepStats::new(model.dict, cfg.h_update, rule);
    let mut err_sum = 0.0;
    let mut err_days = 0usize;
    for (p, y) in days.iter().enumerate() {
        let mut acc = DayAccumulator::new(model.dict.cols());
        let mut rng = chain_rng(seed, p);
        run_chain(y, model, cfg, &mut rng, |x, tau, resid| {
            stats.add(y, model, x, tau, resid);
            acc.add(x);
        })?;
        stats.end_day(y);
        let fit = model.dict.mul_vec(&acc.mean());
        if let Some(e) = relative_error(y, &fit) {
            err_sum += e;
            err_days += 1;
        }
    }
    let err = if err_days == 0 {
        0.0
    } else {
        err_sum / err_days as f64
    };
    Ok((stats, err))
}

pub(crate) fn q_converged(prev: f64, q: f64, tol: f64) -> bool {
    let denom = prev.abs().max(f64::MIN_POSITIVE);
    ((q - prev) / denom).abs() < tol
}

/// Monte-Carlo EM for one device starting from `h_init`.
///
/// Each iteration runs an independent chain per day, then updates the
/// dictionary, the Laplace scale and the precision hyperparameters from the
/// pooled retained samples.
pub fn train_device(
    y: &ConsumptionMatrix,
    h_init: Dictionary,
    cfg: &GibbsConfig,
) -> Result<(DeviceModel, TrainTrace)> {
    train_device_from(y, DeviceModel::initial(y.device, h_init), cfg)
}

/// As [`train_device`], starting from an existing model's parameters.
pub fn train_device_from(
    y: &ConsumptionMatrix,
    mut model: DeviceModel,
    cfg: &GibbsConfig,
) -> Result<(DeviceModel, TrainTrace)> {
    cfg.validate()?;
    if cfg.em_iters == 0 {
        return Err(Error::param("em_iters", "must be at least 1"));
    }
    if y.days() == 0 || y.values.as_slice().iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyInput("consumption matrix has no usage"));
    }
    if model.dictionary.rows() != y.intervals() {
        return Err(Error::shape(y.intervals(), model.dictionary.rows()));
    }
    if model.dictionary.cols() == 0
        || model.dictionary.zero_columns().len() == model.dictionary.cols()
    {
        return Err(Error::EmptyInput("dictionary has no nonzero basis"));
    }
    let days: Vec<&[f64]> = y.values.columns().collect();
    let mut trace = TrainTrace::default();
    let mut prev_q: Option<f64> = None;
    for iter in 0..cfg.em_iters {
        let norms = column_norms_sq(&model.dictionary);
        let scales = vec![model.b; model.dictionary.cols()];
        let chain_model = ChainModel {
            dict: &model.dictionary,
            norms_sq: &norms,
            scales: &scales,
            alpha0: model.alpha0,
            beta0: model.beta0,
        };
        let (stats, err) = e_step(&days, &chain_model, cfg, iter, LiteralRule::Device)?;
        let q = stats.mean_q();
        if !q.is_finite() {
            return Err(Error::Numeric("Q is not finite"));
        }
        stats.update_dictionary(&mut model.dictionary, cfg.nonneg);
        model.b = clamp_b(stats.mean_abs_coefficient(model.dictionary.cols()));
        let hyper = update_hyperparams_from_moments(
            stats.mean_tau(),
            stats.mean_ln_tau(),
            model.alpha0,
            model.beta0,
        );
        model.alpha0 = hyper.alpha0;
        model.beta0 = hyper.beta0;
        trace.iterations.push(EmIteration {
            q,
            reconstruction_error: err,
            b: model.b,
            alpha0: model.alpha0,
            beta0: model.beta0,
            hyper_converged: hyper.converged,
        });
        if let Some(p) = prev_q {
            if q_converged(p, q, cfg.em_tol) {
                trace.converged = true;
                break;
            }
        }
        prev_q = Some(q);
    }
    Ok((model, trace))
}

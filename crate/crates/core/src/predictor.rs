//! Posterior-mean disaggregation of aggregate days and its predictive density.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{AggregateMatrix, Device, Matrix};
use crate::discriminative::{gibbs_chain_aggregate_day, mean_coefficients, AggregateModel};
use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, GibbsSample};
use crate::special::{ln_normal_pdf_precision, log_sum_exp};

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggregationResult {
    pub devices: Vec<Device>,
    /// One `N × P` estimate per device, in model block order.
    pub estimates: Vec<Matrix>,
    /// Log predictive density of each day at its estimate.
    pub log_predictive_density: Vec<f64>,
    pub samples_used: usize,
}

impl DisaggregationResult {
    /// Estimate for `device`, if the model has it.
    pub fn estimate(&self, device: Device) -> Option<&Matrix> {
        self.devices
            .iter()
            .position(|d| *d == device)
            .map(|k| &self.estimates[k])
    }
}

/// Per-device reconstructions `H̄⁽ᵈ⁾ x̄⁽ᵈ⁾` of one coefficient vector.
fn block_reconstructions(agg: &AggregateModel, x: &[f64]) -> Vec<Vec<f64>> {
    let n = agg.intervals();
    (0..agg.num_devices())
        .map(|d| {
            let mut out = vec![0.0; n];
            for j in agg.block_range(d) {
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let (idx, vals) = agg.dictionary.column(j);
                for (&i, &h) in idx.iter().zip(vals) {
                    out[i] += h * xj;
                }
            }
            out
        })
        .collect()
}

/// Log of the Monte-Carlo predictive density of one day.
///
/// `estimates[d]` is the day's estimate for block `d`. For each device the
/// density is the sample average of `Π_i N(ŷ_i | (H̄⁽ᵈ⁾ x̄⁽ᵈ,ᵗ⁾)_i, τ̄⁽ᵗ⁾)`;
/// the devices multiply.
pub fn log_predictive_density(
    estimates: &[Vec<f64>],
    samples: &[GibbsSample],
    agg: &AggregateModel,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples"));
    }
    if estimates.len() != agg.num_devices() {
        return Err(Error::shape(agg.num_devices(), estimates.len()));
    }
    if let Some(e) = estimates.iter().find(|e| e.len() != agg.intervals()) {
        return Err(Error::shape(agg.intervals(), e.len()));
    }
    let recon: Vec<Vec<Vec<f64>>> = samples
        .iter()
        .map(|s| block_reconstructions(agg, &s.x))
        .collect();
    let taus: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    Ok(density_from_reconstructions(estimates, &recon, &taus))
}

fn density_from_reconstructions(
    estimates: &[Vec<f64>],
    recon: &[Vec<Vec<f64>>],
    taus: &[f64],
) -> f64 {
    let ln_s = (recon.len() as f64).ln();
    let mut terms = vec![0.0; recon.len()];
    let mut total = 0.0;
    for (d, est) in estimates.iter().enumerate() {
        for ((term, r), &tau) in terms.iter_mut().zip(recon).zip(taus) {
            *term = est
                .iter()
                .zip(&r[d])
                .map(|(y, mu)| ln_normal_pdf_precision(*y, *mu, tau))
                .sum();
        }
        total += log_sum_exp(&terms) - ln_s;
    }
    total
}

/// Disaggregates every day of `y_bar` with one chain per day.
///
/// Day `p` uses the chain seeded with `cfg.seed ⊕ p`.
pub fn disaggregate(
    y_bar: &AggregateMatrix,
    agg: &AggregateModel,
    cfg: &GibbsConfig,
) -> Result<DisaggregationResult> {
    cfg.validate()?;
    if agg.dictionary.cols() == 0 {
        return Err(Error::EmptyInput("aggregate model has no bases"));
    }
    if y_bar.intervals() != agg.intervals() {
        return Err(Error::shape(agg.intervals(), y_bar.intervals()));
    }
    let n = agg.intervals();
    let days = y_bar.days();
    let mut estimates = vec![Matrix::zeros(n, days); agg.num_devices()];
    let mut scores = Vec::with_capacity(days);
    for (p, y) in y_bar.values.columns().enumerate() {
        let samples = gibbs_chain_aggregate_day(y, agg, cfg, cfg.seed, p)?;
        let mean_x = mean_coefficients(&samples, agg.dictionary.cols());
        let day_est = block_reconstructions(agg, &mean_x);
        for (m, e) in estimates.iter_mut().zip(&day_est) {
            m.column_mut(p).copy_from_slice(e);
        }
        let recon: Vec<Vec<Vec<f64>>> = samples
            .iter()
            .map(|s| block_reconstructions(agg, &s.x))
            .collect();
        let taus: Vec<f64> = samples.iter().map(|s| s.tau).collect();
        scores.push(density_from_reconstructions(&day_est, &recon, &taus));
    }
    Ok(DisaggregationResult {
        devices: agg.devices.clone(),
        estimates,
        log_predictive_density: scores,
        samples_used: cfg.retained(),
    })
}

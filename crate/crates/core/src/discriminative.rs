//! Compound dictionary over all devices, retrained on aggregate data with the
//! per-device Laplace scales held fixed.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::data::{AggregateMatrix, Device};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::gibbs::{
    chain_rng, collect_chain, column_norms_sq, ChainModel, GibbsConfig, GibbsSample, LiteralRule,
};
use crate::inference::{
    e_step, q_converged, update_hyperparams_from_moments, DeviceModel, EmIteration, TrainTrace,
    DEFAULT_ALPHA0, DEFAULT_BETA0,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateModel {
    /// `[H⁽¹⁾, …, H⁽ᴰ⁾]`.
    pub dictionary: Dictionary,
    pub devices: Vec<Device>,
    /// Column count of each device block, in device order.
    pub block_widths: Vec<usize>,
    /// Frozen Laplace scale of each block.
    pub b_per_device: Vec<f64>,
    pub alpha0_bar: f64,
    pub beta0_bar: f64,
}

impl AggregateModel {
    /// Assembles a model from parts, checking the block layout.
    pub fn from_parts(
        dictionary: Dictionary,
        devices: Vec<Device>,
        block_widths: Vec<usize>,
        b_per_device: Vec<f64>,
        alpha0_bar: f64,
        beta0_bar: f64,
    ) -> Result<Self> {
        if devices.is_empty() {
            return Err(Error::EmptyInput("no devices"));
        }
        if block_widths.len() != devices.len() || b_per_device.len() != devices.len() {
            return Err(Error::shape(
                devices.len(),
                block_widths.len().min(b_per_device.len()),
            ));
        }
        let total: usize = block_widths.iter().sum();
        if total != dictionary.cols() {
            return Err(Error::shape(dictionary.cols(), total));
        }
        if b_per_device.iter().any(|b| !(*b > 0.0)) || !(alpha0_bar > 0.0 && beta0_bar > 0.0) {
            return Err(Error::param(
                "prior",
                "b, alpha0 and beta0 must be positive",
            ));
        }
        Ok(AggregateModel {
            dictionary,
            devices,
            block_widths,
            b_per_device,
            alpha0_bar,
            beta0_bar,
        })
    }

    pub fn intervals(&self) -> usize {
        self.dictionary.rows()
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    /// Column range of block `d`.
    pub fn block_range(&self, d: usize) -> Range<usize> {
        let start: usize = self.block_widths[..d].iter().sum();
        start..start + self.block_widths[d]
    }

    /// Block index owning column `j`.
    pub fn block_of(&self, j: usize) -> usize {
        let mut end = 0;
        for (d, w) in self.block_widths.iter().enumerate() {
            end += w;
            if j < end {
                return d;
            }
        }
        panic!("column {j} out of range");
    }

    /// Laplace scale of every column.
    pub fn column_scales(&self) -> Vec<f64> {
        self.block_widths
            .iter()
            .zip(&self.b_per_device)
            .flat_map(|(&w, &b)| core::iter::repeat_n(b, w))
            .collect()
    }

    /// Block `d` as a standalone dictionary.
    pub fn device_dictionary(&self, d: usize) -> Dictionary {
        self.dictionary.slice_columns(self.block_range(d))
    }
}

/// Concatenates the device dictionaries in the given order.
pub fn build_aggregate(models: &[DeviceModel]) -> Result<AggregateModel> {
    let first = models
        .first()
        .ok_or(Error::EmptyInput("no device models"))?;
    for m in models {
        if m.dictionary.rows() != first.dictionary.rows() {
            return Err(Error::shape(first.dictionary.rows(), m.dictionary.rows()));
        }
    }
    let parts: Vec<&Dictionary> = models.iter().map(|m| &m.dictionary).collect();
    AggregateModel::from_parts(
        Dictionary::concat(&parts)?,
        models.iter().map(|m| m.device).collect(),
        models.iter().map(|m| m.dictionary.cols()).collect(),
        models.iter().map(|m| m.b).collect(),
        DEFAULT_ALPHA0,
        DEFAULT_BETA0,
    )
}

/// Retained samples of the aggregate chain for one day.
pub fn gibbs_chain_aggregate(
    y_bar: &[f64],
    agg: &AggregateModel,
    cfg: &GibbsConfig,
) -> Result<Vec<GibbsSample>> {
    gibbs_chain_aggregate_day(y_bar, agg, cfg, cfg.seed, 0)
}

pub(crate) fn gibbs_chain_aggregate_day(
    y_bar: &[f64],
    agg: &AggregateModel,
    cfg: &GibbsConfig,
    seed: u64,
    day: usize,
) -> Result<Vec<GibbsSample>> {
    let norms = column_norms_sq(&agg.dictionary);
    let scales = agg.column_scales();
    let model = ChainModel {
        dict: &agg.dictionary,
        norms_sq: &norms,
        scales: &scales,
        alpha0: agg.alpha0_bar,
        beta0: agg.beta0_bar,
    };
    collect_chain(y_bar, &model, cfg, &mut chain_rng(seed, day))
}

/// Monte-Carlo EM on aggregate days, updating only `H̄`, `ᾱ₀` and `β̄₀`.
///
/// With `em_iters = 0` the model is returned unchanged.
pub fn train_discriminative(
    y_bar: &AggregateMatrix,
    agg: &AggregateModel,
    cfg: &GibbsConfig,
) -> Result<(AggregateModel, TrainTrace)> {
    let mut model = agg.clone();
    let mut trace = TrainTrace::default();
    if cfg.em_iters == 0 {
        return Ok((model, trace));
    }
    cfg.validate()?;
    if y_bar.intervals() != model.intervals() {
        return Err(Error::shape(model.intervals(), y_bar.intervals()));
    }
    if y_bar.days() == 0 {
        return Err(Error::EmptyInput("aggregate matrix has no days"));
    }
    let days: Vec<&[f64]> = y_bar.values.columns().collect();
    let scales = model.column_scales();
    let mut prev_q: Option<f64> = None;
    for iter in 0..cfg.em_iters {
        let norms = column_norms_sq(&model.dictionary);
        let chain_model = ChainModel {
            dict: &model.dictionary,
            norms_sq: &norms,
            scales: &scales,
            alpha0: model.alpha0_bar,
            beta0: model.beta0_bar,
        };
        let (stats, err) = e_step(&days, &chain_model, cfg, iter, LiteralRule::Aggregate)?;
        let q = stats.mean_q();
        if !q.is_finite() {
            return Err(Error::Numeric("Q is not finite"));
        }
        stats.update_dictionary(&mut model.dictionary, cfg.nonneg);
        let hyper = update_hyperparams_from_moments(
            stats.mean_tau(),
            stats.mean_ln_tau(),
            model.alpha0_bar,
            model.beta0_bar,
        );
        model.alpha0_bar = hyper.alpha0;
        model.beta0_bar = hyper.beta0;
        trace.iterations.push(EmIteration {
            q,
            reconstruction_error: err,
            b: f64::NAN,
            alpha0: model.alpha0_bar,
            beta0: model.beta0_bar,
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

/// Mean over retained samples of each block's coefficients.
pub(crate) fn mean_coefficients(samples: &[GibbsSample], m: usize) -> Vec<f64> {
    let mut mean = vec![0.0; m];
    for s in samples {
        for (a, v) in mean.iter_mut().zip(&s.x) {
            *a += v;
        }
    }
    let n = samples.len().max(1) as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(device: Device, cols: &[Vec<f64>], b: f64) -> DeviceModel {
        let mut m = DeviceModel::initial(device, Dictionary::from_dense_columns(4, cols).unwrap());
        m.b = b;
        m
    }

    #[test]
    fn two_blocks_layout() {
        let a = model(
            Device::Toilet,
            &[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
            0.3,
        );
        let b = model(
            Device::Shower,
            &[vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            0.9,
        );
        let agg = build_aggregate(&[a, b]).unwrap();
        assert_eq!(agg.dictionary.cols(), 4);
        let blocks: Vec<usize> = (0..4).map(|j| agg.block_of(j)).collect();
        assert_eq!(blocks, vec![0, 0, 1, 1]);
        // third column (1-based) belongs to the second device
        assert_eq!(agg.devices[agg.block_of(2)], Device::Shower);
        assert_eq!(agg.column_scales(), vec![0.3, 0.3, 0.9, 0.9]);
        assert_eq!((agg.alpha0_bar, agg.beta0_bar), (1.0, 1.0));
    }

    #[test]
    fn mismatched_rows_rejected() {
        let a = model(Device::Toilet, &[vec![1.0, 0.0, 0.0, 0.0]], 0.3);
        let mut b = a.clone();
        b.dictionary = Dictionary::from_dense_columns(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(build_aggregate(&[a, b]).is_err());
    }
}

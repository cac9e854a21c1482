//! End-to-end training and evaluation on in-memory matrices.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AggregateMatrix, ConsumptionMatrix, Device, Matrix};
use crate::dictionary::Dictionary;
use crate::discriminative::{build_aggregate, train_discriminative, AggregateModel};
use crate::error::{Error, Result};
use crate::gibbs::{splitmix64, GibbsConfig};
use crate::inference::{data_scaled_b, train_device_from, DeviceModel, TrainTrace};
use crate::metrics::EvalReport;
use crate::predictor::{disaggregate, DisaggregationResult};
use crate::shapes::{discover, ShapeOptions};

/// Atoms per device for random initialization.
pub const DEFAULT_RANDOM_ATOMS: usize = 32;

/// How each device dictionary is seeded before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Shape patterns and smoothed bases discovered in the training data.
    ShapeFeatures,
    /// Dense random nonnegative unit-norm atoms.
    Random { atoms: usize },
    /// Random nonnegative atoms with the atom count and support lengths the
    /// shape-feature dictionary would have, at uniformly random offsets.
    RandomMatched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub gibbs: GibbsConfig,
    pub shapes: ShapeOptions,
    pub init: InitStrategy,
    /// Start each device's Laplace scale at [`data_scaled_b`] instead of the
    /// fixed default.
    pub scale_b: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gibbs: GibbsConfig::default(),
            shapes: ShapeOptions::default(),
            init: InitStrategy::ShapeFeatures,
            scale_b: false,
        }
    }
}

/// Seed of the `k`-th independent stage derived from a run seed.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(k)))
}

/// Dense nonnegative atoms with unit norm.
pub fn random_dictionary(rows: usize, atoms: usize, seed: u64) -> Result<Dictionary> {
    if rows == 0 || atoms == 0 {
        return Err(Error::param("atoms", "dictionary must have rows and atoms"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..atoms)
        .map(|_| {
            (0..rows)
                .map(|_| rng.random::<f64>() + f64::EPSILON)
                .collect()
        })
        .collect();
    let mut d = Dictionary::from_dense_columns(rows, &cols)?;
    d.normalize_columns();
    Ok(d)
}

/// Contiguous random nonnegative atoms with the given support lengths.
pub fn random_sparse_dictionary(rows: usize, lengths: &[usize], seed: u64) -> Result<Dictionary> {
    if rows == 0 || lengths.is_empty() || lengths.iter().any(|&l| l == 0 || l > rows) {
        return Err(Error::param(
            "atoms",
            "support lengths must lie in 1..=rows",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dictionary::empty(rows);
    for &len in lengths {
        let start = rng.random_range(0..=rows - len);
        let vals: Vec<f64> = (0..len)
            .map(|_| rng.random::<f64>() + f64::EPSILON)
            .collect();
        d.push_column((start..start + len).zip(vals));
    }
    d.normalize_columns();
    Ok(d)
}

pub fn initial_dictionary(
    y: &ConsumptionMatrix,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Dictionary> {
    match cfg.init {
        InitStrategy::ShapeFeatures => Ok(discover(y, &cfg.shapes)?.dictionary),
        InitStrategy::Random { atoms } => random_dictionary(y.intervals(), atoms, seed),
        InitStrategy::RandomMatched => {
            let sf = discover(y, &cfg.shapes)?.dictionary;
            let lengths: Vec<usize> = (0..sf.cols()).map(|j| sf.column(j).0.len()).collect();
            random_sparse_dictionary(y.intervals(), &lengths, seed)
        }
    }
}

/// Initializes and trains one model per device matrix.
///
/// Device `k` (in input order) uses seeds derived from `cfg.gibbs.seed` and `k`.
pub fn train_devices(
    matrices: &[ConsumptionMatrix],
    cfg: &PipelineConfig,
) -> Result<Vec<(DeviceModel, TrainTrace)>> {
    if matrices.is_empty() {
        return Err(Error::EmptyInput("no device matrices"));
    }
    matrices
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let seed = derive_seed(cfg.gibbs.seed, k as u64);
            let h = initial_dictionary(y, cfg, seed)?;
            let gibbs = GibbsConfig {
                seed,
                ..cfg.gibbs.clone()
            };
            let mut model = DeviceModel::initial(y.device, h);
            if cfg.scale_b {
                model.b = data_scaled_b(y, &model.dictionary);
            }
            train_device_from(y, model, &gibbs)
        })
        .collect()
}

/// Compound model trained on `y_bar` from per-device models.
pub fn train_compound(
    models: &[DeviceModel],
    y_bar: &AggregateMatrix,
    cfg: &GibbsConfig,
) -> Result<(AggregateModel, TrainTrace)> {
    let agg = build_aggregate(models)?;
    let gibbs = GibbsConfig {
        seed: derive_seed(cfg.seed, models.len() as u64),
        ..cfg.clone()
    };
    train_discriminative(y_bar, &agg, &gibbs)
}

/// Disaggregation config derived from a training config.
pub fn disagg_config(cfg: &GibbsConfig) -> GibbsConfig {
    GibbsConfig {
        seed: derive_seed(cfg.seed, u64::MAX),
        ..cfg.clone()
    }
}

/// Random partition of `days` into `k` groups whose sizes differ by at most one.
///
/// The day indices are shuffled with `seed` and cut into contiguous runs.
pub fn fold_assignment(days: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::param("folds", "must be at least 2"));
    }
    if days < k {
        return Err(Error::param(
            "folds",
            alloc::format!("{k} folds need at least {k} days, got {days}"),
        ));
    }
    let mut order: Vec<usize> = (0..days).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = days / k;
    let extra = days % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    Ok(out)
}

/// Days not in `test`, ascending.
pub fn complement(days: usize, test: &[usize]) -> Vec<usize> {
    (0..days).filter(|d| !test.contains(d)).collect()
}

/// Everything produced for one train/test split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub models: Vec<DeviceModel>,
    pub compound: AggregateModel,
    pub result: DisaggregationResult,
    pub report: EvalReport,
}

/// Trains on `train` days and evaluates on `test` days.
pub fn run_split(
    matrices: &[ConsumptionMatrix],
    y_bar: &AggregateMatrix,
    train: &[usize],
    test: &[usize],
    cfg: &PipelineConfig,
) -> Result<SplitOutcome> {
    let train_m: Vec<ConsumptionMatrix> = matrices.iter().map(|m| m.select_days(train)).collect();
    let models: Vec<DeviceModel> = train_devices(&train_m, cfg)?
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    let (compound, _) = train_compound(&models, &y_bar.select_days(train), &cfg.gibbs)?;
    let test_bar = y_bar.select_days(test);
    let result = disaggregate(&test_bar, &compound, &disagg_config(&cfg.gibbs))?;
    let truth: Vec<Matrix> = matrices
        .iter()
        .map(|m| m.values.select_columns(test))
        .collect();
    let devices: Vec<Device> = matrices.iter().map(|m| m.device).collect();
    let report = EvalReport::evaluate(&devices, &truth, &result.estimates, &test_bar.values)?;
    Ok(SplitOutcome {
        models,
        compound,
        result,
        report,
    })
}

/// k-fold cross-validation; one report per fold.
pub fn cross_validate(
    matrices: &[ConsumptionMatrix],
    y_bar: &AggregateMatrix,
    folds: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<EvalReport>> {
    let days = y_bar.days();
    let groups = fold_assignment(days, folds, cfg.gibbs.seed)?;
    groups
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let train = complement(days, test);
            let fold_cfg = PipelineConfig {
                gibbs: GibbsConfig {
                    seed: derive_seed(cfg.gibbs.seed, 1_000 + f as u64),
                    ..cfg.gibbs.clone()
                },
                ..cfg.clone()
            };
            Ok(run_split(matrices, y_bar, &train, test, &fold_cfg)?.report)
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_days() {
        let f = fold_assignment(23, 10, 5).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert_eq!(f, fold_assignment(23, 10, 5).unwrap());
        assert!(fold_assignment(5, 1, 0).is_err());
    }

    #[test]
    fn random_atoms_are_unit_nonneg() {
        let d = random_dictionary(8, 4, 1).unwrap();
        assert_eq!(d.nnz(), 32);
        assert!(d.max_norm_deviation() < 1e-12);
        assert!((0..4).all(|j| d.column(j).1.iter().all(|v| *v > 0.0)));
    }
}

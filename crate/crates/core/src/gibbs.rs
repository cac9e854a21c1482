//! Gibbs chain over `(τ, x)` shared by the per-device and aggregate models.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::sampling::{sample_gamma, tau_posterior, CoefficientConditional};
use crate::special::ln_gamma;

pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_BURN_IN: usize = 100;
pub const DEFAULT_EM_ITERS: usize = 15;
pub const DEFAULT_EM_TOL: f64 = 1e-3;
/// Activations below this (summed squared) leave a basis untouched in the M-step.
pub const MIN_ACTIVATION: f64 = 1e-12;

/// Dictionary update rule used in the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HUpdateMode {
    /// Stationary point of the Monte-Carlo objective with sums taken over samples.
    #[default]
    Aggregated,
    /// Per-sample ratio averaged over samples.
    PerSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    /// Total number of sweeps `T`.
    pub samples: usize,
    /// Discarded leading sweeps `s`.
    pub burn_in: usize,
    pub seed: u64,
    pub nonneg: bool,
    pub em_iters: usize,
    pub em_tol: f64,
    pub h_update: HUpdateMode,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            samples: DEFAULT_SAMPLES,
            burn_in: DEFAULT_BURN_IN,
            seed: 0,
            nonneg: true,
            em_iters: DEFAULT_EM_ITERS,
            em_tol: DEFAULT_EM_TOL,
            h_update: HUpdateMode::Aggregated,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.samples {
            return Err(Error::param(
                "burn_in",
                "must be smaller than the number of samples",
            ));
        }
        if !(self.em_tol >= 0.0) {
            return Err(Error::param("em_tol", "must be non-negative"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.samples - self.burn_in
    }
}

/// One retained draw of the latent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSample {
    pub x: Vec<f64>,
    pub tau: f64,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `iteration`-th EM pass.
pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    if iteration == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(iteration as u64))
    }
}

/// RNG of the chain for `day`: seeded with `seed ⊕ day`.
pub fn chain_rng(seed: u64, day: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ day as u64)
}

/// Squared column norms `A_j`.
pub fn column_norms_sq(dict: &Dictionary) -> Vec<f64> {
    (0..dict.cols()).map(|j| dict.column_norm_sq(j)).collect()
}

/// Model parameters held fixed during one chain.
pub struct ChainModel<'a> {
    pub dict: &'a Dictionary,
    pub norms_sq: &'a [f64],
    /// Laplace scale of each coefficient.
    pub scales: &'a [f64],
    pub alpha0: f64,
    pub beta0: f64,
}

impl ChainModel<'_> {
    fn check(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dict.rows() {
            return Err(Error::shape(self.dict.rows(), y.len()));
        }
        if self.scales.len() != self.dict.cols() || self.norms_sq.len() != self.dict.cols() {
            return Err(Error::shape(self.dict.cols(), self.scales.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite observation"));
        }
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) || self.scales.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::param(
                "prior",
                "b, alpha0 and beta0 must be positive",
            ));
        }
        Ok(())
    }

    /// `ln P(y, x, τ | θ)` split as likelihood, coefficient prior and precision prior.
    pub fn ln_joint(&self, rss: f64, n: usize, x: &[f64], tau: f64) -> f64 {
        let f1 = n as f64 * 0.5 * (tau / (2.0 * core::f64::consts::PI)).ln() - 0.5 * tau * rss;
        let f2: f64 = x
            .iter()
            .zip(self.scales)
            .map(|(xj, b)| (1.0 / (2.0 * b)).ln() - xj.abs() / b)
            .sum();
        let f3 = self.alpha0 * self.beta0.ln() - ln_gamma(self.alpha0)
            + (self.alpha0 - 1.0) * tau.ln()
            - self.beta0 * tau;
        f1 + f2 + f3
    }
}

fn residual_into(y: &[f64], dict: &Dictionary, x: &[f64], resid: &mut [f64]) {
    dict.mul_vec_into(x, resid);
    for (r, yi) in resid.iter_mut().zip(y) {
        *r = yi - *r;
    }
}

/// Runs `cfg.samples` sweeps from `x = 0`.
///
/// Each sweep draws `τ` and then every coefficient in ascending order.
/// `visit(x, τ, residual)` sees every retained sweep.
pub fn run_chain(
    y: &[f64],
    model: &ChainModel<'_>,
    cfg: &GibbsConfig,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(&[f64], f64, &[f64]),
) -> Result<()> {
    cfg.validate()?;
    model.check(y)?;
    let dict = model.dict;
    let m = dict.cols();
    let n = y.len();
    let mut x = vec![0.0; m];
    let mut resid = y.to_vec();
    let rows = dict.row_indices();
    let vals = dict.values();
    for t in 1..=cfg.samples {
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let (shape, rate) = tau_posterior(model.alpha0, model.beta0, n, rss);
        let tau = sample_gamma(shape, rate, rng)?;
        for j in 0..m {
            let range = dict.column_range(j);
            let a = model.norms_sq[j];
            let old = x[j];
            let mut proj = a * old;
            for k in range.clone() {
                proj += vals[k] * resid[rows[k]];
            }
            let cond = CoefficientConditional {
                a,
                b_proj: proj,
                tau,
                scale: model.scales[j],
                nonneg: cfg.nonneg,
            };
            let new = cond.sample(rng);
            if new != old {
                let delta = new - old;
                for k in range {
                    resid[rows[k]] -= vals[k] * delta;
                }
                x[j] = new;
            }
        }
        residual_into(y, dict, &x, &mut resid);
        if t > cfg.burn_in {
            visit(&x, tau, &resid);
        }
    }
    Ok(())
}

/// Retained samples of one chain.
pub fn collect_chain(
    y: &[f64],
    model: &ChainModel<'_>,
    cfg: &GibbsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GibbsSample>> {
    let mut out = Vec::with_capacity(cfg.retained());
    run_chain(y, model, cfg, rng, |x, tau, _| {
        out.push(GibbsSample { x: x.to_vec(), tau })
    })?;
    Ok(out)
}

/// Which data term enters the per-sample dictionary rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiteralRule {
    /// `(y_i - Σ_{j'≠j} H_ij' x_j') / x_j²`.
    Device,
    /// `(2ȳ_i - Σ_{j'≠j} H̄_ij' x̄_j') / (2 x̄_j)`.
    Aggregate,
}

const LS_MAX_SWEEPS: usize = 200;
const LS_TOL: f64 = 1e-10;

/// Per-row normal equations of the dictionary least-squares problem.
///
/// Row `i` of `H` only touches the stored entries of that row, so the
/// problem splits into one small system per row over the columns stored
/// there. The linear term `Σ_t x_j y_i` is exact. The Gram diagonal
/// `Σ_t x_j²` is exact; off-diagonal terms use the per-day posterior means,
/// `Σ_p S_p m_j m_k`, dropping the within-day covariance of distinct
/// coefficients.
#[derive(Debug, Clone)]
struct RowSystems {
    /// Stored entry indices of each row.
    row_entries: Vec<Vec<usize>>,
    /// Column of each stored entry.
    entry_col: Vec<usize>,
    /// Dense `|J_i| × |J_i|` off-diagonal Gram of each row, row-major.
    gram: Vec<Vec<f64>>,
    /// `Σ_t x_j y_i` per stored entry.
    linear: Vec<f64>,
    day_sum: Vec<f64>,
    day_count: usize,
}

impl RowSystems {
    fn new(dict: &Dictionary) -> Self {
        let mut row_entries = vec![Vec::new(); dict.rows()];
        let mut entry_col = vec![0; dict.nnz()];
        let rows = dict.row_indices();
        for j in 0..dict.cols() {
            for k in dict.column_range(j) {
                row_entries[rows[k]].push(k);
                entry_col[k] = j;
            }
        }
        let gram = row_entries
            .iter()
            .map(|e| vec![0.0; e.len() * e.len()])
            .collect();
        RowSystems {
            row_entries,
            entry_col,
            gram,
            linear: vec![0.0; dict.nnz()],
            day_sum: vec![0.0; dict.cols()],
            day_count: 0,
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.day_count += 1;
        for (s, v) in self.day_sum.iter_mut().zip(x) {
            *s += v;
        }
    }

    fn end_day(&mut self, y: &[f64]) {
        if self.day_count == 0 {
            return;
        }
        let count = self.day_count as f64;
        let mean: Vec<f64> = self.day_sum.iter().map(|s| s / count).collect();
        for (i, entries) in self.row_entries.iter().enumerate() {
            let g = &mut self.gram[i];
            let len = entries.len();
            for (a, &ka) in entries.iter().enumerate() {
                let ma = mean[self.entry_col[ka]];
                self.linear[ka] += count * ma * y[i];
                if ma == 0.0 {
                    continue;
                }
                let w = count * ma;
                for (b, &kb) in entries.iter().enumerate().skip(a + 1) {
                    let v = w * mean[self.entry_col[kb]];
                    g[a * len + b] += v;
                    g[b * len + a] += v;
                }
            }
        }
        self.day_sum.iter_mut().for_each(|s| *s = 0.0);
        self.day_count = 0;
    }

    /// Coordinate descent on every row, warm-started at the current values.
    fn solve(&self, values: &mut [f64], sum_x2: &[f64], nonneg: bool) {
        for (i, entries) in self.row_entries.iter().enumerate() {
            let len = entries.len();
            let g = &self.gram[i];
            let mut h: Vec<f64> = entries.iter().map(|&k| values[k]).collect();
            let diag: Vec<f64> = entries.iter().map(|&k| sum_x2[self.entry_col[k]]).collect();
            // off-diagonal products G h, kept current as h changes
            let mut gh = vec![0.0; len];
            for a in 0..len {
                gh[a] = (0..len).map(|b| g[a * len + b] * h[b]).sum();
            }
            for _ in 0..LS_MAX_SWEEPS {
                let mut change: f64 = 0.0;
                let mut scale: f64 = 0.0;
                for a in 0..len {
                    if diag[a] < MIN_ACTIVATION {
                        continue;
                    }
                    let mut v = (self.linear[entries[a]] - gh[a]) / diag[a];
                    if nonneg {
                        v = v.max(0.0);
                    }
                    let delta = v - h[a];
                    if delta != 0.0 {
                        for b in 0..len {
                            gh[b] += g[b * len + a] * delta;
                        }
                        h[a] = v;
                    }
                    change = change.max(delta.abs());
                    scale = scale.max(v.abs());
                }
                if change <= LS_TOL * scale.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            for (&k, v) in entries.iter().zip(h) {
                values[k] = v;
            }
        }
    }
}

/// Sufficient statistics of the retained samples, pooled over days.
///
/// Call [`EStepStats::add`] for every retained sample of a day, then
/// [`EStepStats::end_day`] once with that day's observation.
#[derive(Debug, Clone)]
pub struct EStepStats {
    pub samples: usize,
    /// `Σ_t x_j²` per basis.
    pub sum_x2: Vec<f64>,
    /// `Σ_t Σ_j |x_j|`.
    pub sum_abs: f64,
    pub sum_tau: f64,
    pub sum_ln_tau: f64,
    pub sum_q: f64,
    /// Sum of per-sample literal ratios per stored entry.
    literal: Vec<f64>,
    /// Samples contributing to each basis' literal ratio.
    literal_count: Vec<usize>,
    rows: Option<RowSystems>,
    mode: HUpdateMode,
    rule: LiteralRule,
}

impl EStepStats {
    pub fn new(dict: &Dictionary, mode: HUpdateMode, rule: LiteralRule) -> Self {
        let literal_mode = mode == HUpdateMode::PerSample;
        EStepStats {
            samples: 0,
            sum_x2: vec![0.0; dict.cols()],
            sum_abs: 0.0,
            sum_tau: 0.0,
            sum_ln_tau: 0.0,
            sum_q: 0.0,
            literal: if literal_mode {
                vec![0.0; dict.nnz()]
            } else {
                Vec::new()
            },
            literal_count: if literal_mode {
                vec![0; dict.cols()]
            } else {
                Vec::new()
            },
            rows: (!literal_mode).then(|| RowSystems::new(dict)),
            mode,
            rule,
        }
    }

    pub fn add(&mut self, y: &[f64], model: &ChainModel<'_>, x: &[f64], tau: f64, resid: &[f64]) {
        let dict = model.dict;
        self.samples += 1;
        self.sum_tau += tau;
        self.sum_ln_tau += tau.ln();
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        self.sum_q += model.ln_joint(rss, y.len(), x, tau);
        for (j, &xj) in x.iter().enumerate() {
            self.sum_x2[j] += xj * xj;
            self.sum_abs += xj.abs();
        }
        match self.rows.as_mut() {
            Some(rows) => rows.add(x),
            None => self.add_literal(y, dict, x, resid),
        }
    }

    fn add_literal(&mut self, y: &[f64], dict: &Dictionary, x: &[f64], resid: &[f64]) {
        let rows = dict.row_indices();
        let vals = dict.values();
        for (j, &xj) in x.iter().enumerate() {
            let x2 = xj * xj;
            if x2 < MIN_ACTIVATION {
                continue;
            }
            self.literal_count[j] += 1;
            for k in dict.column_range(j) {
                let i = rows[k];
                let others = resid[i] + vals[k] * xj;
                self.literal[k] += match self.rule {
                    LiteralRule::Device => others / x2,
                    LiteralRule::Aggregate => (y[i] + others) / (2.0 * xj),
                };
            }
        }
    }

    /// Closes the current day.
    pub fn end_day(&mut self, y: &[f64]) {
        if let Some(rows) = self.rows.as_mut() {
            rows.end_day(y);
        }
    }

    pub fn mean_q(&self) -> f64 {
        self.sum_q / self.samples as f64
    }

    pub fn mean_tau(&self) -> f64 {
        self.sum_tau / self.samples as f64
    }

    pub fn mean_ln_tau(&self) -> f64 {
        self.sum_ln_tau / self.samples as f64
    }

    /// Mean absolute coefficient per sample and basis.
    pub fn mean_abs_coefficient(&self, m: usize) -> f64 {
        self.sum_abs / (self.samples as f64 * m as f64)
    }

    /// Applies the dictionary rule in place and renormalizes columns.
    ///
    /// Bases whose summed squared activation is below [`MIN_ACTIVATION`] are
    /// left unchanged. With `nonneg`, entries are constrained to be
    /// nonnegative and entries that reach zero leave the column's pattern.
    pub fn update_dictionary(&self, dict: &mut Dictionary, nonneg: bool) {
        match self.mode {
            HUpdateMode::Aggregated => {
                let rows = self
                    .rows
                    .as_ref()
                    .expect("aggregated mode keeps row systems");
                rows.solve(dict.values_mut(), &self.sum_x2, nonneg);
            }
            HUpdateMode::PerSample => {
                let ranges: Vec<_> = (0..dict.cols()).map(|j| dict.column_range(j)).collect();
                let values = dict.values_mut();
                for (j, range) in ranges.into_iter().enumerate() {
                    let c = self.literal_count[j];
                    if c == 0 || self.sum_x2[j] < MIN_ACTIVATION {
                        continue;
                    }
                    for k in range {
                        let mut v = self.literal[k] / c as f64;
                        if nonneg {
                            v = v.max(0.0);
                        }
                        values[k] = v;
                    }
                }
            }
        }
        if nonneg {
            dict.prune_zeros();
        }
        dict.normalize_columns();
    }
}

//! Synthetic household generator: a pool of event templates per device,
//! Poisson daily counts and a kernel-smoothed distribution of start intervals.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::data::{
    aggregate, daily_counts, events_to_matrix, AggregateMatrix, ConsumptionMatrix, Device,
    EventRecord,
};
use crate::error::{Error, Result};
use crate::gibbs::splitmix64;
use crate::special::normal_cdf;

/// Daily event rates used when no data is available to fit them.
pub const DEFAULT_LAMBDA: [(Device, f64); 5] = [
    (Device::Faucet, 42.0856),
    (Device::Dishwasher, 1.0784),
    (Device::Toilet, 12.9203),
    (Device::Shower, 2.3668),
    (Device::ClothesWasher, 2.1761),
];
/// Smallest Poisson rate used at generation time.
pub const MIN_LAMBDA: f64 = 1e-6;
const MIN_BANDWIDTH: f64 = 0.5;

/// Event templates per device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventDictionary {
    pub pools: BTreeMap<Device, Vec<Vec<f64>>>,
}

impl EventDictionary {
    pub fn pool(&self, device: Device) -> Result<&[Vec<f64>]> {
        match self.pools.get(&device) {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(Error::EmptyPool(device)),
        }
    }

    pub fn pool_size(&self, device: Device) -> usize {
        self.pools.get(&device).map_or(0, Vec::len)
    }

    /// Built-in templates in gallons per 15-minute interval.
    pub fn builtin() -> Self {
        let t: [(Device, &[&[f64]]); 5] = [
            (
                Device::Faucet,
                &[
                    &[0.35],
                    &[0.8],
                    &[1.4],
                    &[0.55],
                    &[2.1],
                    &[0.9, 0.4],
                    &[1.6, 0.7],
                    &[0.25],
                ],
            ),
            (
                Device::Dishwasher,
                &[
                    &[1.3, 1.1, 1.4, 0.9],
                    &[1.8, 1.6, 1.2],
                    &[1.0, 1.2, 1.1, 1.3],
                    &[2.2, 1.9, 1.5, 0.8],
                ],
            ),
            (
                Device::Toilet,
                &[
                    &[1.6],
                    &[3.2],
                    &[2.4],
                    &[1.3, 0.8],
                    &[2.8, 0.6],
                    &[3.6],
                    &[1.9, 1.9],
                ],
            ),
            (
                Device::Shower,
                &[
                    &[17.28, 9.61, 1.69],
                    &[12.5, 8.0],
                    &[20.1, 4.3],
                    &[9.8, 11.2, 3.0],
                    &[15.0],
                    &[6.5, 14.2],
                ],
            ),
            (
                Device::ClothesWasher,
                &[
                    &[10.5, 8.2, 12.1],
                    &[7.9, 11.3, 9.6, 5.2],
                    &[14.0, 9.0],
                    &[6.3, 6.8, 10.9, 8.7],
                    &[12.4, 4.6, 9.9],
                ],
            ),
        ];
        let pools = t
            .iter()
            .map(|(d, ts)| (*d, ts.iter().map(|v| v.to_vec()).collect()))
            .collect();
        EventDictionary { pools }
    }
}

/// Groups the volume profiles of `events` by device.
pub fn build_event_dictionary(events: &[EventRecord]) -> EventDictionary {
    let mut pools: BTreeMap<Device, Vec<Vec<f64>>> = BTreeMap::new();
    for e in events {
        pools.entry(e.device).or_default().push(e.volumes.clone());
    }
    EventDictionary { pools }
}

/// Poisson maximum-likelihood rate: the sample mean.
pub fn fit_daily_poisson(counts: &[u64]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("no daily counts"));
    }
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    if mean == 0.0 {
        return Err(Error::param("counts", "every day has zero events"));
    }
    Ok(mean)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, floored at half an interval.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let (_, sd) = mean_sd(xs);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * (xs.len() as f64).powf(-0.2)).max(MIN_BANDWIDTH)
}

fn cumulate(density: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = density.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("start density has no mass"));
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = density
        .iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(cdf)
}

/// Discrete CDF over `n` intervals from a Gaussian kernel density estimate.
///
/// Each interval `i` gets the kernel mass of `[i, i + 1)`, with the kernels
/// reflected at both ends of the day so no mass leaks out.
pub fn fit_start_cdf(starts: &[usize], n: usize) -> Result<Vec<f64>> {
    if starts.is_empty() {
        return Err(Error::EmptyInput("no start intervals"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    if let Some(s) = starts.iter().find(|s| **s >= n) {
        return Err(Error::param(
            "starts",
            alloc::format!("start {s} outside [0, {n})"),
        ));
    }
    // interval i covers [i, i + 1); centre the samples in their interval
    let xs: Vec<f64> = starts.iter().map(|&s| s as f64 + 0.5).collect();
    let h = silverman_bandwidth(&xs);
    let top = n as f64;
    let mut density = vec![0.0; n];
    let mass =
        |c: f64, i: usize| normal_cdf((i as f64 + 1.0 - c) / h) - normal_cdf((i as f64 - c) / h);
    for &x in &xs {
        for (i, d) in density.iter_mut().enumerate() {
            *d += mass(x, i) + mass(-x, i) + mass(2.0 * top - x, i);
        }
    }
    cumulate(&density)
}

/// Daily rate and start-interval CDF of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceFrequency {
    pub device: Device,
    pub lambda: f64,
    pub start_cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyModel {
    pub devices: Vec<DeviceFrequency>,
}

/// Daily usage peaks as `(hour, sd in hours, weight)`.
fn builtin_peaks(device: Device) -> &'static [(f64, f64, f64)] {
    match device {
        Device::Faucet => &[(7.0, 1.5, 0.35), (12.5, 2.5, 0.25), (19.0, 1.75, 0.4)],
        Device::Dishwasher => &[(9.0, 2.0, 0.3), (20.5, 1.25, 0.7)],
        Device::Toilet => &[(6.75, 1.25, 0.35), (13.0, 3.5, 0.3), (22.0, 1.25, 0.35)],
        Device::Shower => &[(6.5, 1.0, 0.65), (21.0, 1.5, 0.35)],
        Device::ClothesWasher => &[(10.5, 2.5, 0.6), (17.5, 2.5, 0.4)],
    }
}

/// Start-interval CDF of the built-in daily profile.
pub fn builtin_start_cdf(device: Device, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    let per_hour = n as f64 / 24.0;
    let floor = 0.02 / n as f64;
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 + 0.5;
            floor
                + builtin_peaks(device)
                    .iter()
                    .map(|&(hour, sd, w)| {
                        let z = (t - hour * per_hour) / (sd * per_hour);
                        w * libm::exp(-0.5 * z * z) / (sd * per_hour)
                    })
                    .sum::<f64>()
        })
        .collect();
    cumulate(&density)
}

impl FrequencyModel {
    /// Published daily rates with the built-in start profiles.
    pub fn defaults(n: usize) -> Result<Self> {
        let devices = DEFAULT_LAMBDA
            .iter()
            .map(|&(device, lambda)| {
                Ok(DeviceFrequency {
                    device,
                    lambda,
                    start_cdf: builtin_start_cdf(device, n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrequencyModel { devices })
    }

    /// Fits rates and start CDFs of `devices` from `days` days of events.
    pub fn fit(events: &[EventRecord], devices: &[Device], days: usize, n: usize) -> Result<Self> {
        let devices = devices
            .iter()
            .map(|&device| {
                let starts: Vec<usize> = events
                    .iter()
                    .filter(|e| e.device == device)
                    .map(|e| e.start_interval)
                    .collect();
                Ok(DeviceFrequency {
                    device,
                    lambda: fit_daily_poisson(&daily_counts(events, device, days))?,
                    start_cdf: fit_start_cdf(&starts, n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrequencyModel { devices })
    }

    pub fn get(&self, device: Device) -> Option<&DeviceFrequency> {
        self.devices.iter().find(|f| f.device == device)
    }

    pub fn intervals(&self) -> usize {
        self.devices.first().map_or(0, |f| f.start_cdf.len())
    }
}

/// Inverse-transform draw from a discrete CDF.
pub fn sample_start<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance_discrete(samples: &[usize], cdf: &[f64]) -> f64 {
    let mut counts = vec![0usize; cdf.len()];
    for &s in samples {
        if s < counts.len() {
            counts[s] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    let mut acc = 0usize;
    let mut worst: f64 = 0.0;
    for (c, f) in counts.iter().zip(cdf) {
        acc += c;
        worst = worst.max((acc as f64 / n - f).abs());
    }
    worst
}

/// Output of [`generate_days`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Events after clipping at the end of the day.
    pub events: Vec<EventRecord>,
    /// Per-device matrices in the frequency model's device order.
    pub matrices: Vec<ConsumptionMatrix>,
    pub aggregate: AggregateMatrix,
    /// Volume of the drawn templates before clipping.
    pub template_volume: f64,
    /// Volume dropped because an event ran past the end of its day.
    pub clipped_volume: f64,
}

/// Generates `days` days. Day `p` draws from its own stream derived from
/// `seed`, so any prefix of days is independent of the total length.
pub fn generate_days(
    days: usize,
    freq: &FrequencyModel,
    dict: &EventDictionary,
    seed: u64,
) -> Result<SyntheticData> {
    if days == 0 {
        return Err(Error::param("days", "must be at least 1"));
    }
    if freq.devices.is_empty() {
        return Err(Error::EmptyInput("frequency model has no devices"));
    }
    let n = freq.intervals();
    if n == 0 {
        return Err(Error::EmptyInput("start CDF is empty"));
    }
    let mut samplers = Vec::with_capacity(freq.devices.len());
    for f in &freq.devices {
        if f.start_cdf.len() != n {
            return Err(Error::shape(n, f.start_cdf.len()));
        }
        let lambda = if f.lambda.is_finite() {
            f.lambda.max(MIN_LAMBDA)
        } else {
            MIN_LAMBDA
        };
        let poisson =
            Poisson::new(lambda).map_err(|_| Error::param("lambda", "invalid Poisson rate"))?;
        samplers.push((f, poisson, dict.pool(f.device)?));
    }
    let base = splitmix64(seed);
    let mut events = Vec::new();
    let mut template_volume = 0.0;
    let mut clipped_volume = 0.0;
    for day in 0..days {
        let mut rng = ChaCha8Rng::seed_from_u64(base ^ day as u64);
        for (f, poisson, pool) in &samplers {
            let k = poisson.sample(&mut rng) as usize;
            for _ in 0..k {
                let start = sample_start(&f.start_cdf, &mut rng);
                let template = &pool[rng.random_range(0..pool.len())];
                let mut ev = EventRecord::new(f.device, day, start, template.clone())?;
                template_volume += ev.total_volume();
                if let Some(c) = ev.clip_to_day(n) {
                    clipped_volume += c;
                }
                events.push(ev);
            }
        }
    }
    let matrices = freq
        .devices
        .iter()
        .map(|f| events_to_matrix(&events, f.device, days, n))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&matrices)?;
    Ok(SyntheticData {
        events,
        matrices,
        aggregate,
        template_volume,
        clipped_volume,
    })
}

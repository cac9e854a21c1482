//! Event records, per-device interval matrices and aggregation.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Intervals per day at one reading every 15 minutes.
pub const DEFAULT_INTERVALS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Device {
    Faucet,
    Dishwasher,
    Toilet,
    Shower,
    ClothesWasher,
}

impl Device {
    pub const ALL: [Device; 5] = [
        Device::Faucet,
        Device::Dishwasher,
        Device::Toilet,
        Device::Shower,
        Device::ClothesWasher,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Device::Faucet => "faucet",
            Device::Dishwasher => "dishwasher",
            Device::Toilet => "toilet",
            Device::Shower => "shower",
            Device::ClothesWasher => "clothes_washer",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "faucet" => Ok(Device::Faucet),
            "dishwasher" => Ok(Device::Dishwasher),
            "toilet" => Ok(Device::Toilet),
            "shower" => Ok(Device::Shower),
            "clothes_washer" | "clotheswasher" | "washer" => Ok(Device::ClothesWasher),
            _ => Err(Error::UnknownDevice(s.to_string())),
        }
    }
}

/// One labeled water-use event: per-interval volumes starting at `start_interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub device: Device,
    pub day: usize,
    pub start_interval: usize,
    pub volumes: Vec<f64>,
}

impl EventRecord {
    pub fn new(
        device: Device,
        day: usize,
        start_interval: usize,
        volumes: Vec<f64>,
    ) -> Result<Self> {
        let rec = EventRecord {
            device,
            day,
            start_interval,
            volumes,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.volumes.is_empty() {
            return Err(Error::InvalidEvent("no volumes".into()));
        }
        if let Some(v) = self.volumes.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidEvent(alloc::format!(
                "volume {v} is negative or not finite"
            )));
        }
        if !self.volumes.iter().any(|v| *v > 0.0) {
            return Err(Error::InvalidEvent("all volumes are zero".into()));
        }
        Ok(())
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Truncates volumes that run past the last interval of the day.
    ///
    /// Returns the clipped mass, or `None` when nothing was clipped.
    pub fn clip_to_day(&mut self, intervals: usize) -> Option<f64> {
        let room = intervals.saturating_sub(self.start_interval);
        if self.volumes.len() <= room {
            return None;
        }
        let clipped: f64 = self.volumes[room..].iter().sum();
        self.volumes.truncate(room);
        Some(clipped)
    }
}

pub type EventTable = Vec<EventRecord>;

/// Dense column-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::shape(rows, c.len()));
            }
            data.extend_from_slice(c);
        }
        Ok(Matrix {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.rows.max(1)).take(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// New matrix holding the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(cols.len() * self.rows);
        for &c in cols {
            data.extend_from_slice(self.column(c));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    fn same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(
                alloc::format!("{}x{}", self.rows, self.cols),
                alloc::format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

/// `N × P` consumption of one device: rows are intervals, columns are days.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionMatrix {
    pub device: Device,
    pub values: Matrix,
}

impl ConsumptionMatrix {
    pub fn new(device: Device, values: Matrix) -> Result<Self> {
        if values.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "values",
                "consumption must be finite and non-negative",
            ));
        }
        Ok(ConsumptionMatrix { device, values })
    }

    pub fn intervals(&self) -> usize {
        self.values.rows()
    }

    pub fn days(&self) -> usize {
        self.values.cols()
    }

    pub fn select_days(&self, days: &[usize]) -> ConsumptionMatrix {
        ConsumptionMatrix {
            device: self.device,
            values: self.values.select_columns(days),
        }
    }
}

/// Whole-home consumption `Ȳ = Σ_d Y^(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMatrix {
    pub values: Matrix,
}

impl AggregateMatrix {
    pub fn intervals(&self) -> usize {
        self.values.rows()
    }

    pub fn days(&self) -> usize {
        self.values.cols()
    }

    pub fn select_days(&self, days: &[usize]) -> AggregateMatrix {
        AggregateMatrix {
            values: self.values.select_columns(days),
        }
    }
}

/// Places every event of `device` into an `intervals × days` matrix.
///
/// Overlapping events add. Volumes past the end of the day are dropped, so
/// callers that care about mass should clip at ingestion.
pub fn events_to_matrix(
    events: &[EventRecord],
    device: Device,
    days: usize,
    intervals: usize,
) -> Result<ConsumptionMatrix> {
    let mut m = Matrix::zeros(intervals, days);
    for ev in events.iter().filter(|e| e.device == device) {
        if ev.day >= days {
            return Err(Error::param(
                "days",
                alloc::format!("event on day {} but only {} days requested", ev.day, days),
            ));
        }
        if ev.start_interval >= intervals {
            return Err(Error::InvalidEvent(alloc::format!(
                "start interval {} outside [0, {intervals})",
                ev.start_interval
            )));
        }
        let col = m.column_mut(ev.day);
        for (slot, v) in col[ev.start_interval..].iter_mut().zip(&ev.volumes) {
            *slot += *v;
        }
    }
    Ok(ConsumptionMatrix { device, values: m })
}

/// Elementwise sum of device matrices.
pub fn aggregate(matrices: &[ConsumptionMatrix]) -> Result<AggregateMatrix> {
    let first = matrices
        .first()
        .ok_or(Error::EmptyInput("no device matrices"))?;
    let mut total = first.values.clone();
    for m in &matrices[1..] {
        total.same_shape(&m.values)?;
        for (t, v) in total.data.iter_mut().zip(&m.values.data) {
            *t += *v;
        }
    }
    Ok(AggregateMatrix { values: total })
}

/// Per-day event counts for one device over `days` days.
pub fn daily_counts(events: &[EventRecord], device: Device, days: usize) -> Vec<u64> {
    let mut counts = vec![0u64; days];
    for ev in events.iter().filter(|e| e.device == device && e.day < days) {
        counts[ev.day] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toilet(day: usize, start: usize, volumes: &[f64]) -> EventRecord {
        EventRecord::new(Device::Toilet, day, start, volumes.to_vec()).unwrap()
    }

    #[test]
    fn single_event_placement() {
        let m = events_to_matrix(&[toilet(0, 30, &[0.8, 2.5])], Device::Toilet, 1, 96).unwrap();
        for i in 0..96 {
            let expect = match i {
                30 => 0.8,
                31 => 2.5,
                _ => 0.0,
            };
            assert_eq!(m.values.get(i, 0), expect);
        }
    }

    #[test]
    fn overlapping_events_add() {
        let evs = [toilet(0, 40, &[1.0]), toilet(0, 39, &[0.5, 2.0])];
        let m = events_to_matrix(&evs, Device::Toilet, 1, 96).unwrap();
        assert_eq!(m.values.get(40, 0), 3.0);
    }

    #[test]
    fn no_events_gives_zeros() {
        let m = events_to_matrix(&[], Device::Shower, 3, 96).unwrap();
        assert_eq!(m.values.rows(), 96);
        assert_eq!(m.values.cols(), 3);
        assert_eq!(m.values.sum(), 0.0);
    }

    #[test]
    fn other_devices_are_ignored() {
        let m = events_to_matrix(&[toilet(0, 3, &[1.0])], Device::Shower, 1, 96).unwrap();
        assert_eq!(m.values.sum(), 0.0);
    }

    #[test]
    fn event_past_requested_days_is_rejected() {
        assert!(events_to_matrix(&[toilet(4, 3, &[1.0])], Device::Toilet, 2, 96).is_err());
    }

    #[test]
    fn record_validation() {
        assert!(EventRecord::new(Device::Toilet, 0, 0, vec![1.0, -0.5]).is_err());
        assert!(EventRecord::new(Device::Toilet, 0, 0, vec![]).is_err());
        assert!(EventRecord::new(Device::Toilet, 0, 0, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn clipping_reports_mass() {
        let mut e = toilet(0, 94, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.clip_to_day(96), Some(7.0));
        assert_eq!(e.volumes, vec![1.0, 2.0]);
        assert_eq!(e.clip_to_day(96), None);
    }

    #[test]
    fn aggregate_identity_and_mismatch() {
        let a = ConsumptionMatrix::new(
            Device::Toilet,
            Matrix::from_column_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            aggregate(core::slice::from_ref(&a)).unwrap().values,
            a.values
        );
        let b = ConsumptionMatrix::new(Device::Shower, Matrix::zeros(3, 2)).unwrap();
        assert!(matches!(
            aggregate(&[a, b]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn device_labels_roundtrip() {
        for d in Device::ALL {
            assert_eq!(d.label().parse::<Device>().unwrap(), d);
        }
        assert!("kettle".parse::<Device>().is_err());
    }
}

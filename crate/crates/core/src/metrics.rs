//! Whole-home and device-level disaggregation metrics.
//!
//! Matrices are `N × P` with days as columns; `truth[d]` and `est[d]` refer
//! to the same device.

use alloc::vec::Vec;

use crate::data::{Device, Matrix};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

fn check_pairs(truth: &[Matrix], est: &[Matrix]) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("no devices"));
    }
    if truth.len() != est.len() {
        return Err(Error::shape(truth.len(), est.len()));
    }
    for (t, e) in truth.iter().zip(est) {
        check_shape(t, e)?;
    }
    Ok(())
}

fn check_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape(
            alloc::format!("{}x{}", a.rows(), a.cols()),
            alloc::format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    Ok(())
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `Σ_{d,p} min(‖y⁽ᵈ⁾_p‖₁, ‖ŷ⁽ᵈ⁾_p‖₁) / Σ ȳ`.
pub fn accuracy(truth: &[Matrix], est: &[Matrix], y_bar: &Matrix) -> Result<f64> {
    check_pairs(truth, est)?;
    check_shape(&truth[0], y_bar)?;
    let denom = y_bar.sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator("accuracy"));
    }
    let mut num = 0.0;
    for (t, e) in truth.iter().zip(est) {
        for (tc, ec) in t.columns().zip(e.columns()) {
            num += l1(tc).min(l1(ec));
        }
    }
    Ok(num / denom)
}

/// Normalized disaggregation error with the number of skipped pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nde {
    pub value: f64,
    /// `(device, day)` pairs with zero true consumption, left out of the sum.
    pub skipped: usize,
}

/// `sqrt(Σ_{d,p} ‖y − ŷ‖₂² / ‖y‖₂²)` over pairs with nonzero truth.
pub fn nde(truth: &[Matrix], est: &[Matrix]) -> Result<Nde> {
    check_pairs(truth, est)?;
    let mut sum = 0.0;
    let mut skipped = 0;
    for (t, e) in truth.iter().zip(est) {
        for (tc, ec) in t.columns().zip(e.columns()) {
            let norm: f64 = tc.iter().map(|v| v * v).sum();
            if norm == 0.0 {
                skipped += 1;
                continue;
            }
            let err: f64 = tc.iter().zip(ec).map(|(a, b)| (a - b) * (a - b)).sum();
            sum += err / norm;
        }
    }
    Ok(Nde {
        value: sum.sqrt(),
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Ratios among precision, recall and F that were `0/0` and set to 0.
    pub zero_cases: usize,
}

fn ratio(num: f64, den: f64, zero_cases: &mut usize) -> f64 {
    if den == 0.0 {
        *zero_cases += 1;
        0.0
    } else {
        num / den
    }
}

/// Overlap precision, recall and their harmonic mean for one device.
pub fn precision_recall_f(truth: &Matrix, est: &Matrix) -> Result<DeviceScore> {
    check_shape(truth, est)?;
    let mut overlap = 0.0;
    for (y, yh) in truth.as_slice().iter().zip(est.as_slice()) {
        overlap += y.min(*yh);
    }
    let mut zero_cases = 0;
    let precision = ratio(overlap, est.sum(), &mut zero_cases);
    let recall = ratio(overlap, truth.sum(), &mut zero_cases);
    let f_measure = ratio(
        2.0 * precision * recall,
        precision + recall,
        &mut zero_cases,
    );
    Ok(DeviceScore {
        precision,
        recall,
        f_measure,
        zero_cases,
    })
}

/// Mean F-measure over devices.
pub fn avg_f(scores: &[DeviceScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no device scores"));
    }
    Ok(scores.iter().map(|s| s.f_measure).sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub nde: f64,
    pub nde_skipped: usize,
    pub per_device: Vec<(Device, DeviceScore)>,
    pub avg_f: f64,
}

impl EvalReport {
    pub fn evaluate(
        devices: &[Device],
        truth: &[Matrix],
        est: &[Matrix],
        y_bar: &Matrix,
    ) -> Result<Self> {
        if devices.len() != truth.len() {
            return Err(Error::shape(devices.len(), truth.len()));
        }
        let accuracy = accuracy(truth, est, y_bar)?;
        let n = nde(truth, est)?;
        let per_device = devices
            .iter()
            .zip(truth.iter().zip(est))
            .map(|(d, (t, e))| Ok((*d, precision_recall_f(t, e)?)))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<DeviceScore> = per_device.iter().map(|(_, s)| *s).collect();
        Ok(EvalReport {
            accuracy,
            nde: n.value,
            nde_skipped: n.skipped,
            avg_f: avg_f(&scores)?,
            per_device,
        })
    }
}

/// `Σ_d ½‖Y⁽ᵈ⁾ − H⁽ᵈ⁾X⁽ᵈ⁾‖_F² + λ Σ X⁽ᵈ⁾`.
pub fn regularized_disagg_error(
    y: &[Matrix],
    h: &[Dictionary],
    x: &[Matrix],
    lambda: f64,
) -> Result<f64> {
    if y.len() != h.len() || y.len() != x.len() {
        return Err(Error::shape(y.len(), h.len().min(x.len())));
    }
    let mut total = 0.0;
    for ((yd, hd), xd) in y.iter().zip(h).zip(x) {
        if hd.rows() != yd.rows() || hd.cols() != xd.rows() || xd.cols() != yd.cols() {
            return Err(Error::shape(
                alloc::format!("{}x{}", hd.rows(), hd.cols()),
                alloc::format!("{}x{}", yd.rows(), xd.rows()),
            ));
        }
        for (yc, xc) in yd.columns().zip(xd.columns()) {
            let fit = hd.mul_vec(xc);
            total += 0.5
                * yc.iter()
                    .zip(&fit)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
        total += lambda * xd.sum();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(cols: &[Vec<f64>]) -> Matrix {
        Matrix::from_columns(cols[0].len(), cols).unwrap()
    }

    #[test]
    fn perfect_and_empty_estimates() {
        let t = vec![
            m(&[vec![1.0, 0.0], vec![2.0, 2.0]]),
            m(&[vec![0.0, 3.0], vec![0.0, 0.0]]),
        ];
        let y = m(&[vec![1.0, 3.0], vec![2.0, 2.0]]);
        assert_eq!(accuracy(&t, &t, &y).unwrap(), 1.0);
        assert_eq!(
            nde(&t, &t).unwrap(),
            Nde {
                value: 0.0,
                skipped: 1
            }
        );
        let zero = vec![Matrix::zeros(2, 2), Matrix::zeros(2, 2)];
        assert_eq!(accuracy(&t, &zero, &y).unwrap(), 0.0);
        assert!((nde(&t, &zero).unwrap().value - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn doubled_estimate_halves_precision() {
        let t = m(&[vec![1.0, 2.0]]);
        let e = m(&[vec![2.0, 4.0]]);
        let s = precision_recall_f(&t, &e).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f_measure - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_are_counted() {
        let z = Matrix::zeros(2, 1);
        let s = precision_recall_f(&z, &z).unwrap();
        assert_eq!(s.f_measure, 0.0);
        assert_eq!(s.zero_cases, 3);
        assert!(accuracy(core::slice::from_ref(&z), core::slice::from_ref(&z), &z).is_err());
    }

    #[test]
    fn regularized_error_penalty() {
        let y = m(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let h = Dictionary::from_dense_columns(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = m(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(
            regularized_disagg_error(
                core::slice::from_ref(&y),
                core::slice::from_ref(&h),
                core::slice::from_ref(&x),
                0.0
            )
            .unwrap(),
            0.0
        );
        assert_eq!(
            regularized_disagg_error(&[y], &[h], &[x], 1.0).unwrap(),
            4.0
        );
    }
}

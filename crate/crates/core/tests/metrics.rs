use hydrosep_core::metrics::{accuracy, avg_f, nde, precision_recall_f};
use hydrosep_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    n: usize,
    days: usize,
    truth: Vec<Vec<Vec<f64>>>,
    est: Vec<Vec<Vec<f64>>>,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let devices = rng.random_range(1..5);
        let n = rng.random_range(1..10);
        let days = rng.random_range(1..5);
        let cell = |rng: &mut ChaCha8Rng| -> f64 {
            if rng.random::<f64>() < 0.4 {
                0.0
            } else {
                rng.random::<f64>() * 5.0
            }
        };
        let block = |rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<f64>>> {
            (0..devices)
                .map(|_| {
                    (0..days)
                        .map(|_| (0..n).map(|_| cell(rng)).collect())
                        .collect()
                })
                .collect()
        };
        let truth = block(rng);
        let est = block(rng);
        Instance {
            n,
            days,
            truth,
            est,
        }
    }

    fn matrices(&self, which: &[Vec<Vec<f64>>]) -> Vec<Matrix> {
        which
            .iter()
            .map(|d| Matrix::from_columns(self.n, d).unwrap())
            .collect()
    }

    fn aggregate(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.days];
        for dev in &self.truth {
            for p in 0..self.days {
                for i in 0..self.n {
                    out[p][i] += dev[p][i];
                }
            }
        }
        out
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn metrics_equal_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 100 {
        let inst = Instance::random(&mut rng);
        let agg = inst.aggregate();
        let total: f64 = agg.iter().flatten().sum();
        let truth = inst.matrices(&inst.truth);
        let est = inst.matrices(&inst.est);
        let y_bar = Matrix::from_columns(inst.n, &agg).unwrap();

        if total > 0.0 {
            let mut num = 0.0;
            for d in 0..inst.truth.len() {
                for p in 0..inst.days {
                    let t: f64 = inst.truth[d][p].iter().sum();
                    let e: f64 = inst.est[d][p].iter().sum();
                    num += t.min(e);
                }
            }
            assert!(close(accuracy(&truth, &est, &y_bar).unwrap(), num / total));
        } else {
            assert!(accuracy(&truth, &est, &y_bar).is_err());
        }

        let mut sum = 0.0;
        let mut skipped = 0;
        for d in 0..inst.truth.len() {
            for p in 0..inst.days {
                let mut err = 0.0;
                let mut norm = 0.0;
                for i in 0..inst.n {
                    err += (inst.truth[d][p][i] - inst.est[d][p][i]).powi(2);
                    norm += inst.truth[d][p][i].powi(2);
                }
                if norm == 0.0 {
                    skipped += 1;
                } else {
                    sum += err / norm;
                }
            }
        }
        let got = nde(&truth, &est).unwrap();
        assert!(close(got.value, sum.sqrt()));
        assert_eq!(got.skipped, skipped);

        let mut scores = Vec::new();
        for d in 0..inst.truth.len() {
            let (mut overlap, mut t_sum, mut e_sum) = (0.0, 0.0, 0.0);
            for p in 0..inst.days {
                for i in 0..inst.n {
                    let (t, e) = (inst.truth[d][p][i], inst.est[d][p][i]);
                    overlap += t.min(e);
                    t_sum += t;
                    e_sum += e;
                }
            }
            let pr = if e_sum > 0.0 { overlap / e_sum } else { 0.0 };
            let rc = if t_sum > 0.0 { overlap / t_sum } else { 0.0 };
            let f = if pr + rc > 0.0 {
                2.0 * pr * rc / (pr + rc)
            } else {
                0.0
            };
            let s = precision_recall_f(&truth[d], &est[d]).unwrap();
            assert!(close(s.precision, pr));
            assert!(close(s.recall, rc));
            assert!(close(s.f_measure, f));
            scores.push((s, f));
        }
        let mean_f = scores.iter().map(|(_, f)| f).sum::<f64>() / scores.len() as f64;
        let only: Vec<_> = scores.iter().map(|(s, _)| *s).collect();
        assert!(close(avg_f(&only).unwrap(), mean_f));
        checked += 1;
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = vec![Matrix::zeros(3, 2)];
    let b = vec![Matrix::zeros(3, 3)];
    assert!(nde(&a, &b).is_err());
    assert!(precision_recall_f(&a[0], &b[0]).is_err());
    assert!(nde(&a, &[]).is_err());
}

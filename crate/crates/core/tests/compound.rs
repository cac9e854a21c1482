use hydrosep_core::discriminative::{build_aggregate, gibbs_chain_aggregate, train_discriminative};
use hydrosep_core::inference::gibbs_chain;
use hydrosep_core::metrics::nde;
use hydrosep_core::predictor::{disaggregate, log_predictive_density};
use hydrosep_core::special::log_sum_exp;
use hydrosep_core::{
    AggregateMatrix, AggregateModel, Device, DeviceModel, Dictionary, GibbsConfig, GibbsSample,
    Matrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 16;

fn bump(centre: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; N];
    for (k, slot) in v.iter_mut().enumerate().skip(centre).take(width) {
        *slot = 1.0 + (k - centre) as f64;
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

fn device(d: Device, cols: &[Vec<f64>], b: f64) -> DeviceModel {
    let mut m = DeviceModel::initial(d, Dictionary::from_dense_columns(N, cols).unwrap());
    m.b = b;
    m
}

fn quick(seed: u64) -> GibbsConfig {
    GibbsConfig {
        samples: 120,
        burn_in: 30,
        em_iters: 10,
        seed,
        ..GibbsConfig::default()
    }
}

fn planted_pair() -> [DeviceModel; 2] {
    [
        device(Device::Toilet, &[bump(2, 2), bump(9, 2)], 0.4),
        device(Device::Shower, &[bump(4, 4), bump(11, 3)], 1.3),
    ]
}

fn planted_days(rng: &mut ChaCha8Rng, days: usize) -> (Vec<Vec<Vec<f64>>>, AggregateMatrix) {
    let models = planted_pair();
    let mut per_device = vec![Vec::new(); 2];
    let mut total = Vec::new();
    for _ in 0..days {
        let mut sum = vec![0.0; N];
        for (k, m) in models.iter().enumerate() {
            let x: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 4.0 * m.b).collect();
            let y = m.dictionary.mul_vec(&x);
            for (s, v) in sum.iter_mut().zip(&y) {
                *s += v;
            }
            per_device[k].push(y);
        }
        total.push(sum);
    }
    (
        per_device,
        AggregateMatrix {
            values: Matrix::from_columns(N, &total).unwrap(),
        },
    )
}

#[test]
fn training_keeps_priors_and_blocks() {
    let agg = build_aggregate(&planted_pair()).unwrap();
    let (_, y_bar) = planted_days(&mut ChaCha8Rng::seed_from_u64(1), 8);
    let (trained, trace) = train_discriminative(
        &y_bar,
        &agg,
        &GibbsConfig {
            em_tol: 0.0,
            ..quick(2)
        },
    )
    .unwrap();
    assert_eq!(trace.iterations.len(), 10);
    assert_eq!(
        trained
            .b_per_device
            .iter()
            .map(|b| b.to_bits())
            .collect::<Vec<_>>(),
        agg.b_per_device
            .iter()
            .map(|b| b.to_bits())
            .collect::<Vec<_>>()
    );
    assert_eq!(trained.block_widths, agg.block_widths);
    assert_eq!(trained.dictionary.cols(), agg.dictionary.cols());
    assert!(trained.dictionary.max_norm_deviation() < 1e-9);
    assert!(trained.alpha0_bar > 0.0 && trained.beta0_bar > 0.0);
}

#[test]
fn zero_iterations_return_the_input() {
    let agg = build_aggregate(&planted_pair()).unwrap();
    let (_, y_bar) = planted_days(&mut ChaCha8Rng::seed_from_u64(1), 3);
    let (same, trace) = train_discriminative(
        &y_bar,
        &agg,
        &GibbsConfig {
            em_iters: 0,
            ..quick(1)
        },
    )
    .unwrap();
    assert_eq!(same, agg);
    assert!(trace.iterations.is_empty());
}

#[test]
fn single_device_chain_matches_the_device_chain() {
    let m = device(Device::Faucet, &[bump(1, 3), bump(6, 2), bump(12, 3)], 0.7);
    let agg = build_aggregate(std::slice::from_ref(&m)).unwrap();
    assert_eq!(agg.dictionary, m.dictionary);
    let y: Vec<f64> = m.dictionary.mul_vec(&[1.0, 0.5, 2.0]);
    let cfg = quick(77);
    let a = gibbs_chain_aggregate(&y, &agg, &cfg).unwrap();
    let b = gibbs_chain(&y, &m.dictionary, m.b, agg.alpha0_bar, agg.beta0_bar, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn discriminative_training_does_not_hurt_held_out_error() {
    let mut improved = 0;
    for run in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + run);
        // start from slightly wrong dictionaries
        let mut models = planted_pair();
        for m in &mut models {
            let cols: Vec<Vec<f64>> = (0..m.dictionary.cols())
                .map(|j| {
                    m.dictionary
                        .column_dense(j)
                        .iter()
                        .map(|v| v + 0.1 * rng.random::<f64>())
                        .collect()
                })
                .collect();
            m.dictionary = Dictionary::from_dense_columns(N, &cols).unwrap();
            m.dictionary.normalize_columns();
        }
        let agg = build_aggregate(&models).unwrap();
        let (_, train) = planted_days(&mut rng, 12);
        let (truth, test) = planted_days(&mut rng, 6);
        let truth: Vec<Matrix> = truth
            .iter()
            .map(|d| Matrix::from_columns(N, d).unwrap())
            .collect();
        let cfg = quick(run);
        let (trained, _) = train_discriminative(&train, &agg, &cfg).unwrap();
        let before = disaggregate(&test, &agg, &cfg).unwrap();
        let after = disaggregate(&test, &trained, &cfg).unwrap();
        let e0 = nde(&truth, &before.estimates).unwrap().value;
        let e1 = nde(&truth, &after.estimates).unwrap().value;
        if e1 <= e0 {
            improved += 1;
        }
    }
    assert!(improved >= 8, "improved in {improved}/10 runs");
}

fn planted_single() -> (AggregateModel, AggregateMatrix) {
    let m = device(Device::Shower, &[bump(3, 3), bump(10, 4)], 1.0);
    let agg = build_aggregate(std::slice::from_ref(&m)).unwrap();
    let days: Vec<Vec<f64>> = [[2.0, 3.0], [4.0, 1.0], [3.0, 3.0]]
        .iter()
        .map(|x| m.dictionary.mul_vec(x))
        .collect();
    (
        agg,
        AggregateMatrix {
            values: Matrix::from_columns(N, &days).unwrap(),
        },
    )
}

#[test]
fn single_device_reconstructs_its_aggregate() {
    let (agg, y_bar) = planted_single();
    let cfg = GibbsConfig {
        samples: 400,
        burn_in: 100,
        ..quick(5)
    };
    let (trained, _) = train_discriminative(&y_bar, &agg, &cfg).unwrap();
    let out = disaggregate(&y_bar, &trained, &cfg).unwrap();
    for p in 0..y_bar.days() {
        let y = y_bar.values.column(p);
        let e = out.estimates[0].column(p);
        let err = y
            .iter()
            .zip(e)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 0.1, "day {p}: {}", err / norm);
    }
}

#[test]
fn estimates_sum_to_the_mean_reconstruction() {
    let agg = build_aggregate(&planted_pair()).unwrap();
    let (_, y_bar) = planted_days(&mut ChaCha8Rng::seed_from_u64(9), 1);
    let cfg = quick(3);
    let out = disaggregate(&y_bar, &agg, &cfg).unwrap();
    let samples = gibbs_chain_aggregate(y_bar.values.column(0), &agg, &cfg).unwrap();
    let m = agg.dictionary.cols();
    let mean: Vec<f64> = (0..m)
        .map(|j| samples.iter().map(|s| s.x[j]).sum::<f64>() / samples.len() as f64)
        .collect();
    let full = agg.dictionary.mul_vec(&mean);
    for (i, f) in full.iter().enumerate() {
        let sum: f64 = out.estimates.iter().map(|e| e.get(i, 0)).sum();
        assert!((sum - f).abs() < 1e-12);
    }
    assert!(out
        .estimates
        .iter()
        .all(|e| e.as_slice().iter().all(|v| *v >= 0.0)));
    assert_eq!(out.samples_used, cfg.samples - cfg.burn_in);
    assert_eq!(out, disaggregate(&y_bar, &agg, &cfg).unwrap());
}

#[test]
fn empty_day_leaks_at_most_three_prior_scales() {
    let agg = build_aggregate(&planted_pair()).unwrap();
    let y_bar = AggregateMatrix {
        values: Matrix::zeros(N, 2),
    };
    let out = disaggregate(&y_bar, &agg, &quick(4)).unwrap();
    let eps = 3.0 * agg.b_per_device.iter().copied().fold(0.0, f64::max);
    assert!(out
        .estimates
        .iter()
        .all(|e| e.as_slice().iter().all(|v| *v <= eps)));
}

#[test]
fn predictive_density_matches_straight_line_evaluation() {
    let m = device(
        Device::Toilet,
        &[vec![1.0, 0.0].into_iter().chain(vec![0.0; N - 2]).collect()],
        0.5,
    );
    let two = device(
        Device::Shower,
        &[vec![0.0, 1.0].into_iter().chain(vec![0.0; N - 2]).collect()],
        0.5,
    );
    let agg = build_aggregate(&[m, two]).unwrap();
    let samples = vec![
        GibbsSample {
            x: vec![1.0, 2.0],
            tau: 3.0,
        },
        GibbsSample {
            x: vec![1.5, 0.5],
            tau: 0.7,
        },
        GibbsSample {
            x: vec![0.2, 1.1],
            tau: 1.9,
        },
    ];
    let mut est = vec![vec![0.0; N]; 2];
    est[0][0] = 1.2;
    est[1][1] = 1.4;
    let got = log_predictive_density(&est, &samples, &agg).unwrap();
    let mut expect = 0.0;
    for d in 0..2 {
        let terms: Vec<f64> = samples
            .iter()
            .map(|s| {
                (0..N)
                    .map(|i| {
                        let mu = if i == d { s.x[d] } else { 0.0 };
                        let z = est[d][i] - mu;
                        0.5 * (s.tau / (2.0 * std::f64::consts::PI)).ln() - 0.5 * s.tau * z * z
                    })
                    .sum()
            })
            .collect();
        expect += log_sum_exp(&terms) - (samples.len() as f64).ln();
    }
    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
}

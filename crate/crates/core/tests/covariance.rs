mod common;

use common::*;
use softtarget_core::analysis::{colabel_covariance, covariance_trajectory};
use softtarget_core::experiment::{Architecture, DatasetSource, Experiment, ExperimentConfig};
use softtarget_core::nn::Network;
use softtarget_core::{Matrix, Rng};

/// Sample covariance written out term by term.
fn brute_cov(p: &Matrix, a: usize, b: usize) -> f64 {
    let n = p.rows();
    let mean = |c: usize| (0..n).map(|i| p.get(i, c)).sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    (0..n)
        .map(|i| (p.get(i, a) - ma) * (p.get(i, b) - mb))
        .sum::<f64>()
        / (n - 1) as f64
}

fn brute_scaled(p: &Matrix) -> Vec<Vec<f64>> {
    let k = p.cols();
    let mut off = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a != b {
                off.push(brute_cov(p, a, b));
            }
        }
    }
    let lo = off.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = off.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if a == b {
                        0.0
                    } else {
                        (brute_cov(p, a, b) - lo) / (hi - lo)
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn matches_brute_force_on_twenty_samples() {
    let mut rng = Rng::new(2024);
    for k in [3, 4, 10] {
        let p = random_distributions(&mut rng, 20, k);
        let c = colabel_covariance(&p).unwrap();
        let scaled = brute_scaled(&p);
        for (a, row) in scaled.iter().enumerate() {
            assert_eq!(c.get(a, a), 0.0);
            assert_eq!(c.raw().get(a, a), 0.0);
            for (b, &want) in row.iter().enumerate() {
                if a != b {
                    assert!((c.raw().get(a, b) - brute_cov(&p, a, b)).abs() < 1e-12);
                }
                assert!((c.get(a, b) - want).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&c.get(a, b)));
            }
        }
    }
}

#[test]
fn near_identical_columns_outrank_independent_one() {
    let mut rng = Rng::new(3);
    let mut rows = Vec::new();
    for _ in 0..20 {
        let shared = rng.uniform();
        let a = shared + 0.01 * rng.uniform();
        let b = shared + 0.01 * rng.uniform();
        let c = rng.uniform();
        let s = a + b + c;
        rows.push([a / s, b / s, c / s]);
    }
    let p = Matrix::from_rows(&rows).unwrap();
    let c = colabel_covariance(&p).unwrap();
    assert!(c.get(0, 1) > c.get(0, 2));
    assert!((c.get(0, 1) - brute_scaled(&p)[0][1]).abs() < 1e-12);
}

#[test]
fn trajectory_of_one_checkpoint_is_direct_covariance() {
    let mut rng = Rng::new(8);
    let net = random_classifier(&mut rng, 2, 6);
    let x = random_matrix(&mut rng, 30, net.input_dim().unwrap());
    let traj = covariance_trajectory(std::slice::from_ref(&net), &x).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(
        traj[0],
        colabel_covariance(&net.predict(&x).unwrap()).unwrap()
    );

    let twice = covariance_trajectory(&[net.clone(), net], &x).unwrap();
    assert_eq!(twice[0], twice[1]);
}

fn overlap_config() -> ExperimentConfig {
    ExperimentConfig {
        name: None,
        dataset: DatasetSource::Synth {
            classes: 5,
            per_class: 60,
            test_per_class: 20,
            dim: 8,
            spread: 1.0,
            overlap_pairs: vec![(1, 3)],
            seed: 4,
        },
        architecture: Architecture {
            hidden_layers: 1,
            units: 16,
        },
        dropout: 0.0,
        softtarget: None,
        optimizer: Default::default(),
        batch_size: 32,
        epochs: 15,
        seed: 6,
        output_dir: None,
        checkpoint_epochs: vec![],
        dump_soft_targets: false,
    }
}

#[test]
fn trained_model_peaks_at_planted_pair() {
    let cfg = overlap_config();
    let (train, test) = cfg.dataset.load().unwrap();
    let specs = cfg
        .architecture
        .layers(train.features(), train.classes(), 0.0);
    let untrained = Network::init(&specs, &mut Rng::new(1)).unwrap();
    let trained = Experiment::new(cfg, &train, &test)
        .unwrap()
        .run()
        .unwrap()
        .network;
    let traj = covariance_trajectory(&[untrained, trained], &train.x).unwrap();
    assert_eq!(traj[1].argmax_pair(), Some((1, 3)));
    assert_eq!(traj[1].get(1, 3), 1.0);
}

//! Library results against independent reference computations.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_probe::data::{gen_synthetic, load_checkpoint, save_checkpoint, SyntheticSpec, TaskKind};
use spectral_probe::filters::{apply_filter, band_weights, FilterBand};
use spectral_probe::probe::{evaluate, LinearProbe, ProbeMode, ProbeModel};
use spectral_probe::spectral::{dct2, dct2_matrix, idct2_matrix};
use spectral_probe::analysis::extract_profile;
use spectral_probe::training::{build_model, train, ModeSpec, TrainConfig};

fn naive_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * x.iter().enumerate().map(|(i, v)| v * (PI / n * (i as f64 + 0.5) * k as f64).cos()).sum::<f64>()
        })
        .collect()
}

#[test]
fn dct_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 3, 7, 8, 64, 511, 512] {
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = dct2(&x).unwrap();
            let slow = naive_dct(&x);
            let scale = slow.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-9 * scale, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn low_band_recovers_constant_under_highest_frequency() {
    let n = 512;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| {
        (j as f64 + 1.0) + (PI / n as f64 * (i as f64 + 0.5) * (n - 1) as f64).cos()
    });
    let filtered = apply_filter(dct2_matrix(x.view()).unwrap().view(), &band_weights(FilterBand::LOW, n)).unwrap();
    let back = idct2_matrix(filtered.view()).unwrap();
    for ((_, j), v) in back.indexed_iter() {
        assert!((v - (j as f64 + 1.0)).abs() < 1e-9);
    }
}

/// Solves the normal equations of one-hot least squares on low-passed
/// embeddings of noiseless data; the fit must classify every position.
#[test]
fn noiseless_sequence_task_is_linearly_separable() {
    let spec = SyntheticSpec {
        seq_len: 64,
        embed_dim: 5,
        classes: 2,
        count: 40,
        signal_band: FilterBand::LOW,
        noise_band: FilterBand::new(30, 63).unwrap(),
        snr: f64::INFINITY,
        kind: TaskKind::Sequence,
        task: String::new(),
        language: String::new(),
    };
    let ds = gen_synthetic(&spec, 8).unwrap();
    let d = spec.embed_dim + 1;
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![vec![0.0; 2]; d];
    let mut rows = Vec::new();
    for seq in &ds.sequences {
        let low = apply_filter(dct2_matrix(seq.values_f64().view()).unwrap().view(), &band_weights(FilterBand::LOW, 64)).unwrap();
        let filtered = idct2_matrix(low.view()).unwrap();
        for (i, r) in filtered.outer_iter().enumerate() {
            let mut feat = r.to_vec();
            feat.push(1.0);
            let y = seq.labels[i] as usize;
            for a in 0..d {
                for b in 0..d {
                    xtx[a][b] += feat[a] * feat[b];
                }
                xty[a][y] += feat[a];
            }
            rows.push((feat, y));
        }
    }
    // Gaussian elimination with a tiny ridge for the rank-deficient directions.
    for (a, row) in xtx.iter_mut().enumerate() {
        row[a] += 1e-9;
    }
    let mut aug: Vec<Vec<f64>> = (0..d).map(|a| [xtx[a].clone(), xty[a].clone()].concat()).collect();
    for col in 0..d {
        let pivot = (col..d).max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs())).unwrap();
        aug.swap(col, pivot);
        for r in 0..d {
            if r != col {
                let f = aug[r][col] / aug[col][col];
                let pivot_row = aug[col].clone();
                for (v, p) in aug[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    let beta: Vec<[f64; 2]> = (0..d).map(|a| [aug[a][d] / aug[a][a], aug[a][d + 1] / aug[a][a]]).collect();
    let correct = rows
        .iter()
        .filter(|(feat, y)| {
            let score = |c: usize| feat.iter().zip(&beta).map(|(f, b)| f * b[c]).sum::<f64>();
            (score(1) > score(0)) == (*y == 1)
        })
        .count();
    assert_eq!(correct, rows.len());
}

fn separable_dataset() -> (spectral_probe::data::Dataset, spectral_probe::data::Dataset) {
    let spec = SyntheticSpec {
        seq_len: 32,
        embed_dim: 4,
        classes: 2,
        count: 80,
        signal_band: FilterBand::new(0, 0).unwrap(),
        noise_band: FilterBand::new(20, 31).unwrap(),
        snr: 4.0,
        kind: TaskKind::Sequence,
        task: "toy".into(),
        language: "xx".into(),
    };
    gen_synthetic(&spec, 3).unwrap().split(60).unwrap()
}

#[test]
fn training_fits_a_separable_task_and_is_reproducible() {
    let (tr, va) = separable_dataset();
    let cfg = TrainConfig {
        learning_rate: 5e-2,
        batch_size: 8,
        max_epochs: 15,
        ..Default::default()
    };
    let fit = |seed| {
        let model = build_model(ModeSpec::Auto, 4, 2, 32, Default::default(), seed).unwrap();
        train(model, &tr, &va, &TrainConfig { seed, ..cfg.clone() }).unwrap()
    };
    let (model, report) = fit(5);
    assert!(evaluate(&model, &va).unwrap().accuracy >= 0.99);
    let (again, report2) = fit(5);
    assert_eq!(model, again);
    assert_eq!(report.to_json_lines(), report2.to_json_lines());

    let rates = report.learning_rates();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]));
    assert!(report.best_epoch >= 1 && report.best_epoch <= report.epochs.len());
}

#[test]
fn checkpoint_preserves_forward_pass_and_profile() {
    let (tr, va) = separable_dataset();
    let model = build_model(ModeSpec::Auto, 4, 2, 32, Default::default(), 2).unwrap();
    let cfg = TrainConfig { max_epochs: 2, ..Default::default() };
    let (model, report) = train(model, &tr, &va, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &cfg, Some(&report), &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let x = va.sequences[0].values_f64();
    assert_eq!(model.forward(x.view()).unwrap(), loaded.model.forward(x.view()).unwrap());
    assert_eq!(extract_profile(&model).unwrap(), extract_profile(&loaded.model).unwrap());
    assert_eq!(loaded.config, cfg);
}

#[test]
fn plateau_halves_the_rate_and_early_stop_restores_best() {
    // Features carry no label information, so validation loss stalls quickly.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let make = |rng: &mut ChaCha8Rng, count| {
        let sequences = (0..count)
            .map(|i| {
                let values = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0f32..1.0));
                let labels = vec![(i % 2) as u16; 6];
                spectral_probe::data::EmbeddingSequence::new(i as u64, values, labels)
            })
            .collect();
        spectral_probe::data::Dataset {
            sequences,
            classes: 2,
            embed_dim: 3,
            kind: TaskKind::Sequence,
            meta: Default::default(),
        }
    };
    let (tr, va) = (make(&mut rng, 40), make(&mut rng, 20));
    let model = ProbeModel::new(
        ProbeMode::Orig,
        LinearProbe::new(Array2::from_elem((3, 2), 0.3), Array1::zeros(2)).unwrap(),
    );
    let cfg = TrainConfig { learning_rate: 0.2, batch_size: 4, ..Default::default() };
    let (best, report) = train(model, &tr, &va, &cfg).unwrap();
    assert!(report.stopped_early);
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.val_loss).collect();
    let best_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, best_loss);
    // Training ended two epochs after the best one.
    assert_eq!(report.epochs.len(), report.best_epoch + 2);
    assert!(report.learning_rates().last().unwrap() < &cfg.learning_rate);
    let m = evaluate(&best, &va).unwrap();
    assert!((m.accuracy - report.best_val_accuracy).abs() < 1e-12);
}

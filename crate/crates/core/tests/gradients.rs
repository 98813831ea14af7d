//! Analytic gradients against central finite differences.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_probe::filters::{adapt_filter, adapt_filter_backward, SpectralFilter};
use spectral_probe::probe::{LinearProbe, ProbeMode, ProbeModel};

const H: f64 = 1e-5;

struct Instance {
    emb: Array2<f64>,
    labels: Vec<usize>,
    ignore: Vec<bool>,
    weight: Array2<f64>,
    bias: Array1<f64>,
    gamma: Vec<f64>,
}

fn instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
    let (e, c) = (rng.random_range(1..5), rng.random_range(2..5));
    let mut ignore: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
    ignore[0] = false;
    Instance {
        emb: Array2::from_shape_simple_fn((n, e), || rng.random_range(-2.0..2.0)),
        labels: (0..n).map(|_| rng.random_range(0..c)).collect(),
        ignore,
        weight: Array2::from_shape_simple_fn((e, c), || rng.random_range(-1.0..1.0)),
        bias: Array1::from_shape_simple_fn(c, || rng.random_range(-0.5..0.5)),
        gamma: (0..m).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

fn loss(inst: &Instance, weight: &Array2<f64>, bias: &Array1<f64>, gamma: &[f64]) -> f64 {
    let model = ProbeModel::new(
        ProbeMode::Auto(SpectralFilter::from_raw(gamma.to_vec()).unwrap()),
        LinearProbe::new(weight.clone(), bias.clone()).unwrap(),
    );
    model.loss_and_grads(inst.emb.view(), &inst.labels, Some(&inst.ignore)).unwrap().loss
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn check(inst: &Instance) -> f64 {
    let model = ProbeModel::new(
        ProbeMode::Auto(SpectralFilter::from_raw(inst.gamma.clone()).unwrap()),
        LinearProbe::new(inst.weight.clone(), inst.bias.clone()).unwrap(),
    );
    let grads = model
        .loss_and_grads(inst.emb.view(), &inst.labels, Some(&inst.ignore))
        .unwrap()
        .grads;
    let mut worst: f64 = 0.0;
    for k in 0..inst.gamma.len() {
        let (mut p, mut q) = (inst.gamma.clone(), inst.gamma.clone());
        p[k] += H;
        q[k] -= H;
        let fd = (loss(inst, &inst.weight, &inst.bias, &p) - loss(inst, &inst.weight, &inst.bias, &q)) / (2.0 * H);
        worst = worst.max(rel_err(grads.gamma.as_ref().unwrap()[k], fd));
    }
    for idx in 0..inst.weight.len() {
        let (mut p, mut q) = (inst.weight.clone(), inst.weight.clone());
        let (i, j) = (idx / inst.weight.ncols(), idx % inst.weight.ncols());
        p[[i, j]] += H;
        q[[i, j]] -= H;
        let fd = (loss(inst, &p, &inst.bias, &inst.gamma) - loss(inst, &q, &inst.bias, &inst.gamma)) / (2.0 * H);
        worst = worst.max(rel_err(grads.weight[[i, j]], fd));
    }
    for j in 0..inst.bias.len() {
        let (mut p, mut q) = (inst.bias.clone(), inst.bias.clone());
        p[j] += H;
        q[j] -= H;
        let fd = (loss(inst, &inst.weight, &p, &inst.gamma) - loss(inst, &inst.weight, &q, &inst.gamma)) / (2.0 * H);
        worst = worst.max(rel_err(grads.bias[j], fd));
    }
    worst
}

#[test]
fn full_pipeline_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, m) in [(5, 12), (7, 7), (16, 16), (13, 6), (1, 4), (4, 1), (3, 3)] {
        let inst = instance(&mut rng, n, m);
        let worst = check(&inst);
        assert!(worst < 1e-4, "n={n} m={m}: relative error {worst}");
    }
}

#[test]
fn filter_adjoint_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, m) in [(3, 10), (10, 10), (10, 3), (7, 4), (1, 5), (5, 1)] {
        let gamma: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let up: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = SpectralFilter::from_raw(gamma.clone()).unwrap();
        let analytic = adapt_filter_backward(&f, n, &up).unwrap();
        let objective = |g: &[f64]| -> f64 {
            let w = adapt_filter(&SpectralFilter::from_raw(g.to_vec()).unwrap(), n);
            w.as_slice().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        for k in 0..m {
            let (mut p, mut q) = (gamma.clone(), gamma.clone());
            p[k] += H;
            q[k] -= H;
            let fd = (objective(&p) - objective(&q)) / (2.0 * H);
            assert!(rel_err(analytic[k], fd) < 1e-6, "n={n} m={m} k={k}: {} vs {fd}", analytic[k]);
        }
    }
}

use jacobi_core::dmr::JacobiDmrModel;
use jacobi_core::gp::{median_heuristic, rbf_kernel, GpParams, JacobiGpModel};
use jacobi_core::linalg::{sym_eig, Matrix};
use jacobi_core::synth::rng_from_seed;
use rand::Rng;

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Inner disc (class 0) against an outer annulus (class 1), with a constant
/// first column so the linear model gets an intercept.
fn rings(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let r = if c == 0 {
            rng.random_range(0.0..1.0)
        } else {
            rng.random_range(1.5..2.5)
        };
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        rows.push([1.0, r * t.cos(), r * t.sin()]);
        labels.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[test]
fn kernel_matrix_is_positive_semidefinite() {
    let mut rng = rng_from_seed(3);
    let pts: Vec<[f64; 4]> = (0..40)
        .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
        .collect();
    let x = Matrix::from_rows(&pts).unwrap();
    let ell = median_heuristic(&x);
    let mut k = Matrix::zeros(40, 40);
    for i in 0..40 {
        for j in 0..40 {
            k[(i, j)] = rbf_kernel(x.row(i), x.row(j), ell, 1.7);
        }
    }
    let eig = sym_eig(&k).unwrap();
    assert!(
        eig.values.last().copied().unwrap() > -1e-10,
        "min eigenvalue {:?}",
        eig.values.last()
    );
    assert!((k[(5, 5)] - 1.7).abs() < 1e-15);
}

#[test]
fn gp_separates_rings_that_defeat_the_linear_model() {
    let (x, y) = rings(300, 1);
    let (tx, ty) = rings(300, 2);
    let gp = JacobiGpModel::fit(&x, &y, names(2), None, GpParams::default()).unwrap();
    let dmr = JacobiDmrModel::fit(&x, &y, names(2), None).unwrap();
    let gp_acc = accuracy(&gp.predict_batch(&tx).unwrap(), &ty);
    let dmr_acc = accuracy(&dmr.predict_batch(&tx).unwrap(), &ty);
    assert!(gp_acc >= 0.95, "GP accuracy {gp_acc}");
    assert!(dmr_acc <= 0.65, "linear accuracy {dmr_acc}");
}

#[test]
fn gp_fits_training_points_where_linear_cannot() {
    let (x, y) = rings(60, 7);
    let params = GpParams {
        noise_var: Some(1e-10),
        ..GpParams::default()
    };
    let gp = JacobiGpModel::fit(&x, &y, names(2), None, params).unwrap();
    assert_eq!(gp.predict_batch(&x).unwrap(), y);
}

#[test]
fn gp_payload_grows_with_training_size() {
    let (small, ys) = rings(50, 1);
    let (large, yl) = rings(200, 1);
    let a = JacobiGpModel::fit(&small, &ys, names(2), None, GpParams::default()).unwrap();
    let b = JacobiGpModel::fit(&large, &yl, names(2), None, GpParams::default()).unwrap();
    assert!(b.stored_values() > 3 * a.stored_values());
    let dmr = JacobiDmrModel::fit(&large, &yl, names(2), None).unwrap();
    assert_eq!(dmr.coefficients().as_slice().len(), 3 * 2);
}

#[test]
fn gp_is_deterministic() {
    let (x, y) = rings(80, 4);
    let a = JacobiGpModel::fit(&x, &y, names(2), None, GpParams::default()).unwrap();
    let b = JacobiGpModel::fit(&x, &y, names(2), None, GpParams::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gp_prediction_cost_is_linear_in_training_size() {
    let (query, _) = rings(2000, 9);
    let best_time = |n: usize| {
        let (x, y) = rings(n, 10);
        let gp = JacobiGpModel::fit(&x, &y, names(2), None, GpParams::default()).unwrap();
        (0..7)
            .map(|_| {
                let start = std::time::Instant::now();
                std::hint::black_box(gp.predict_batch(&query).unwrap());
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = best_time(1000) / best_time(500);
    assert!((1.5..=3.0).contains(&ratio), "time ratio {ratio}");
}

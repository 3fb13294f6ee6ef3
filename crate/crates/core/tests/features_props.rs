use jacobi_core::dmr::JacobiDmrModel;
use jacobi_core::features::{PcaProjection, Standardizer};
use jacobi_core::linalg::Matrix;
use jacobi_core::ridge::RidgeModel;
use jacobi_core::synth::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn isotropic_data_spreads_variance_evenly() {
    let x = gaussian(5000, 3, 11);
    let pca = PcaProjection::fit(&x, 1).unwrap();
    assert!((pca.explained_variance_ratio() - 1.0 / 3.0).abs() < 0.05);
}

#[test]
fn full_rank_subspace_explains_everything() {
    // 5-d data living in a 2-d subspace
    let basis =
        Matrix::from_rows(&[[1.0, 0.0, 2.0, -1.0, 0.5], [0.0, 1.0, -1.0, 3.0, 0.0]]).unwrap();
    let x = gaussian(200, 2, 5).matmul(&basis).unwrap();
    let pca = PcaProjection::fit(&x, 2).unwrap();
    assert!((pca.explained_variance_ratio() - 1.0).abs() < 1e-10);
    let rebuilt = pca.reconstruct(&pca.apply(&x).unwrap()).unwrap();
    assert!(rebuilt.sub(&x).unwrap().max_abs() < 1e-9);
}

#[test]
fn full_dimension_round_trip() {
    let x = gaussian(50, 6, 8);
    let pca = PcaProjection::fit(&x, 6).unwrap();
    let rebuilt = pca.reconstruct(&pca.apply(&x).unwrap()).unwrap();
    assert!(rebuilt.sub(&x).unwrap().max_abs() < 1e-10);
}

#[test]
fn projected_columns_carry_the_explained_variance() {
    let x = gaussian(300, 5, 2).matmul(&gaussian(5, 5, 3)).unwrap();
    let pca = PcaProjection::fit(&x, 3).unwrap();
    let z = pca.apply(&x).unwrap();
    for j in 0..3 {
        let v = sample_variance(&z.column(j));
        assert!((v - pca.explained_variance()[j]).abs() <= 1e-9 * v.max(1.0));
    }
}

#[test]
fn reduced_features_shrink_the_model() {
    let x = gaussian(400, 20, 9);
    let labels: Vec<usize> = (0..400).map(|i| i % 3).collect();
    let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let pca = PcaProjection::fit(&x, 5).unwrap();
    let full = JacobiDmrModel::fit(&x, &labels, names.clone(), None).unwrap();
    let reduced =
        JacobiDmrModel::fit(&pca.apply(&x).unwrap(), &labels, names.clone(), None).unwrap();
    assert_eq!(full.coefficients().shape(), (20, 3));
    assert_eq!(reduced.coefficients().shape(), (5, 3));

    // ridge keeps its own feature scaling; the DMR model is just coefficients
    let ridge = RidgeModel::fit(&x, &labels, names, 1.0).unwrap();
    assert_eq!(ridge.standardizer().dims(), 20);
}

#[test]
fn standardizer_gives_unit_sample_variance() {
    let x = gaussian(100, 4, 1).scale(7.0);
    let s = Standardizer::fit(&x).unwrap();
    let z = s.apply(&x).unwrap();
    for j in 0..4 {
        assert!((sample_variance(&z.column(j)) - 1.0).abs() < 1e-12);
        assert!(z.column(j).iter().sum::<f64>().abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn explained_ratio_is_monotone_in_d(seed in any::<u64>(), p in 2usize..8) {
        let x = gaussian(40, p, seed);
        let mut last = 0.0;
        for d in 1..=p {
            let r = PcaProjection::fit(&x, d).unwrap().explained_variance_ratio();
            prop_assert!(r >= last - 1e-12);
            prop_assert!(r <= 1.0 + 1e-12);
            last = r;
        }
        prop_assert!((last - 1.0).abs() < 1e-10);
    }
}

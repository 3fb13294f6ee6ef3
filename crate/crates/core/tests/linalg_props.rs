use jacobi_core::linalg::{gram, project_onto_design, sym_eig, Matrix, SpdFactorization};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

/// Tall design plus a target block with the same row count.
fn design_and_targets() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..6, 2usize..8, 1usize..4)
        .prop_flat_map(|(p, extra, k)| (matrix(p + extra, p), matrix(p + extra, k)))
}

fn symmetric(n: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, n).prop_map(|m| m.add(&m.transpose()).unwrap().scale(0.5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_residual_is_orthogonal_to_design((x, t) in design_and_targets()) {
        let g = gram(&x).unwrap();
        // well-conditioned cases only; near-singular designs hit the jitter path
        prop_assume!(sym_eig(&g).unwrap().values.last().copied().unwrap() > 1e-3);
        let beta = project_onto_design(&x, &t).unwrap();
        let resid = t.sub(&x.matmul(&beta).unwrap()).unwrap();
        let xr = x.t_matmul(&resid).unwrap();
        let scale = x.frobenius_norm() * t.frobenius_norm() + 1.0;
        prop_assert!(xr.max_abs() <= 1e-9 * scale, "X'r = {}", xr.max_abs());
    }

    #[test]
    fn spd_solve_round_trip(b in (1usize..8).prop_flat_map(|n| (matrix(n + 2, n), matrix(n, 2)))) {
        let (m, rhs) = b;
        let a = gram(&m).unwrap().add(&Matrix::identity(m.cols())).unwrap();
        let fact = SpdFactorization::new(&a).unwrap();
        prop_assert_eq!(fact.jitter_applied(), 0.0);
        let sol = fact.solve(&rhs).unwrap();
        let resid = a.matmul(&sol).unwrap().sub(&rhs).unwrap();
        prop_assert!(resid.max_abs() <= 1e-8 * (a.max_abs() * sol.max_abs() + rhs.max_abs()));
        // L·Lᵀ reproduces A
        let l = fact.factor();
        let llt = l.matmul(&l.transpose()).unwrap();
        prop_assert!(llt.sub(&a).unwrap().max_abs() <= 1e-10 * a.max_abs());
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality(s in (1usize..9).prop_flat_map(symmetric)) {
        let eig = sym_eig(&s).unwrap();
        let n = s.rows();
        let v = &eig.vectors;
        let vtv = v.t_matmul(v).unwrap();
        prop_assert!(vtv.sub(&Matrix::identity(n)).unwrap().max_abs() <= 1e-10);
        let mut vl = v.clone();
        for j in 0..n {
            let col: Vec<f64> = v.column(j).iter().map(|c| c * eig.values[j]).collect();
            vl.set_column(j, &col);
        }
        let rebuilt = vl.matmul(&v.transpose()).unwrap();
        prop_assert!(rebuilt.sub(&s).unwrap().max_abs() <= 1e-7 * s.max_abs().max(1.0));
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn gram_matches_explicit_product(x in (1usize..6, 1usize..10).prop_flat_map(|(r, c)| matrix(r, c))) {
        let g = gram(&x).unwrap();
        let direct = x.transpose().matmul(&x).unwrap();
        prop_assert!(g.sub(&direct).unwrap().max_abs() <= 1e-12 * direct.max_abs().max(1.0));
        prop_assert_eq!(g.clone(), g.transpose());
    }
}

#[test]
fn rank_deficient_gram_gets_jitter() {
    let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let fact = SpdFactorization::new(&a).unwrap();
    assert!(fact.jitter_applied() > 0.0);
    let x = fact.solve_vec(&[1.0, 1.0]).unwrap();
    assert!(x.iter().all(|v| v.is_finite()));
}

#[test]
fn zero_gram_is_singular() {
    assert!(SpdFactorization::new(&Matrix::zeros(3, 3)).is_err());
}

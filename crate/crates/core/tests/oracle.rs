mod common;

use common::{max_abs, max_diff, random_vec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use quasisol::oracle::{
    check_boundary_property, check_nonexpansive, distance_curve, invert_distance, MAX_DENSE_COLUMNS,
};
use quasisol::{DenseInstance, DenseMatrix, DenseOperator, Error};

fn random_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
    // diagonal shift keeps the random operators safely injective
    let mut data = random_vec(m * n, 1.0, seed);
    for j in 0..n.min(m) {
        data[j * n + j] += 2.0;
    }
    DenseMatrix::new(m, n, data).unwrap()
}

fn operator(m: usize, n: usize, seed: u64) -> DenseOperator {
    DenseOperator::new(random_matrix(m, n, seed)).unwrap()
}

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

#[test]
fn least_squares_matches_dense_qr() {
    let op = operator(6, 4, 1);
    let y = random_vec(6, 2.0, 2);
    let a = to_na(op.matrix());
    let want = a.clone().svd(true, true).solve(&DMatrix::from_column_slice(6, 1, &y), 1e-14).unwrap();
    assert!(max_diff(&op.least_squares(&y), want.as_slice()) < 1e-12);
    let s = a.singular_values();
    assert!((op.sigma_min() - s.min()).abs() < 1e-10);
    assert!((op.step() - 1.0 / (s.max() * s.max())).abs() < 1e-12);
}

#[test]
fn trivial_solutions() {
    let op = operator(5, 3, 3);
    let y = random_vec(5, 1.0, 4);
    let ls = op.least_squares(&y);
    let u = op.pg_solve(&y, 2.0 * max_abs(&ls), 1e-12, 1_000_000).unwrap();
    assert!(max_diff(&u, &ls) < 1e-9);
    assert_eq!(op.pg_solve(&[0.0; 5], 1.0, 1e-12, 10).unwrap(), vec![0.0; 3]);

    let id = DenseOperator::new(DenseMatrix::identity(3)).unwrap();
    let y = [2.0, -3.0, 1.5];
    assert_eq!(id.pg_solve(&y, 1.0, 1e-12, 1000).unwrap(), vec![1.0, -1.0, 1.0]);
}

#[test]
fn rejects_rank_deficient_and_oversized() {
    let a = DenseMatrix::new(3, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
    assert!(DenseOperator::new(a).is_err());
    assert!(DenseOperator::new(DenseMatrix::identity(MAX_DENSE_COLUMNS + 1)).is_err());
    assert!(DenseOperator::new(random_matrix(2, 3, 0)).is_err());
}

#[test]
fn distance_curve_on_random_instance() {
    let op = operator(4, 3, 7);
    let y = random_vec(4, 3.0, 8);
    let radius = max_abs(&op.least_squares(&y));
    let grid: Vec<f64> = (0..50).map(|i| 1.5 * radius * i as f64 / 49.0).collect();
    let curve = distance_curve(&op, &y, &grid).unwrap();
    let floor = op.residual_min(&y);
    let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((curve.d_values[0] - norm_y).abs() < 1e-10);
    for (i, w) in curve.d_values.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-12);
        if w[0] > floor + 1e-8 {
            assert!(w[1] < w[0] - 1e-10, "not strictly decreasing at rho = {}", grid[i]);
        }
    }
    for (r, d) in grid.iter().zip(&curve.d_values) {
        if *r >= radius {
            assert!((d - floor).abs() < 1e-8);
        }
    }
    let mut out = Vec::new();
    curve.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("rho,d"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn boundary_property() {
    let inst = DenseInstance::new(DenseMatrix::identity(2), vec![2.0, 3.0], 1.0).unwrap();
    assert!(check_boundary_property(&inst).unwrap());
    for seed in 0..10 {
        let op = operator(5, 4, 100 + seed);
        let y = random_vec(5, 2.0, 200 + seed);
        let rho = 0.5 * max_abs(&op.least_squares(&y));
        let inst = DenseInstance::new(op.matrix().clone(), y.clone(), rho).unwrap();
        assert!(check_boundary_property(&inst).unwrap());
        // attainable data: the precondition fails loudly
        let square = operator(4, 4, 300 + seed);
        let y4 = random_vec(4, 1.0, 400 + seed);
        let big = 2.0 * max_abs(&square.least_squares(&y4));
        let inst = DenseInstance::new(square.matrix().clone(), y4, big).unwrap();
        assert!(matches!(check_boundary_property(&inst), Err(Error::Precondition(_))));
    }
}

#[test]
fn nonexpansive_over_random_pairs() {
    let mut pairs = 0;
    for inst in 0..10u64 {
        let op = operator(5, 4, 500 + inst);
        for k in 0..10u64 {
            let seed = 1000 * inst + k;
            let y1 = random_vec(5, 2.0, seed);
            let y2 = random_vec(5, 2.0, seed + 500);
            let rho = 0.1 + max_abs(&random_vec(1, 1.5, seed + 900));
            assert!(check_nonexpansive(&op, rho, &y1, &y2).unwrap());
            pairs += 1;
        }
        let y = random_vec(5, 1.0, inst);
        let mut y2 = y.clone();
        y2[0] += 1e-3;
        assert!(check_nonexpansive(&op, 0.3, &y, &y).unwrap());
        assert!(check_nonexpansive(&op, 0.3, &y, &y2).unwrap());
    }
    assert_eq!(pairs, 100);
}

#[test]
fn invert_distance_on_identity_and_random() {
    let id = DenseOperator::new(DenseMatrix::identity(2)).unwrap();
    let rho = invert_distance(&id, &[2.0, 0.0], 1.0).unwrap();
    assert!((rho - 1.0).abs() < 1e-5);

    let op = operator(5, 3, 77);
    let y = random_vec(5, 2.0, 78);
    let lo = op.residual_min(&y);
    let hi = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    for k in 1..=10 {
        let sigma = lo + (hi - lo) * k as f64 / 11.0;
        let rho = invert_distance(&op, &y, sigma).unwrap();
        assert!((op.distance(&y, rho).unwrap() - sigma).abs() <= 1e-5);
    }
    assert!(invert_distance(&op, &y, hi).is_err());
    assert!(invert_distance(&op, &y, 0.5 * lo).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pg_result_is_fixed_point(seed in 0u64..10_000, frac in 0.05f64..1.2) {
        let op = operator(6, 4, seed);
        let y = random_vec(6, 2.0, seed + 1);
        let rho = frac * max_abs(&op.least_squares(&y));
        let tol = 1e-11;
        let u = op.pg_solve(&y, rho, tol, 1_000_000).unwrap();
        let a = op.matrix();
        let r: Vec<f64> = a.mul_vec(&u).iter().zip(&y).map(|(p, q)| p - q).collect();
        let g = a.tr_mul_vec(&r);
        let gamma = op.step();
        let fixed: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| (ui - gamma * gi).clamp(-rho, rho)).collect();
        prop_assert!(max_diff(&fixed, &u) <= tol * 1.01);
        prop_assert!(max_abs(&u) <= rho);
    }

    #[test]
    fn distance_is_monotone(seed in 0u64..10_000, r1 in 0.0f64..3.0, r2 in 0.0f64..3.0) {
        let op = operator(5, 3, seed);
        let y = random_vec(5, 2.0, seed + 3);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(op.distance(&y, hi).unwrap() <= op.distance(&y, lo).unwrap() + 1e-9);
    }
}

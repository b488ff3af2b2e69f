#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quasisol::{ForwardModel, GridFunction, MassKind, Mesh, SparseSymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dense(a: &SparseSymMatrix) -> DMatrix<f64> {
    let n = a.dim();
    DMatrix::from_fn(n, n, |i, j| a.get(i, j))
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn model(cells: usize, mass: MassKind) -> (Mesh, ForwardModel) {
    let mesh = Mesh::square_cells(cells).unwrap();
    let fm = ForwardModel::from_mesh(&mesh, 1.0, mass).unwrap();
    (mesh, fm)
}

pub fn random_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_grid(n: usize, scale: f64, seed: u64) -> GridFunction {
    GridFunction::new(random_vec(n, scale, seed))
}

/// Unconstrained control `u = M^{-1} (K + cM) y` for data `y`, from dense matrices.
pub fn unconstrained(fm: &ForwardModel, y: &[f64]) -> DVector<f64> {
    let s = dense(fm.system());
    let m = dense(fm.mass());
    m.lu().solve(&(s * vector(y))).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Newton is only locally convergent: reach `rho` by a decreasing sequence of
/// warm-started solves from the unconstrained radius, as the continuation does.
pub fn continuation_solve(
    fm: &ForwardModel,
    yd: &GridFunction,
    rho: f64,
) -> (quasisol::SsnState, quasisol::NewtonReport) {
    use quasisol::quasisolve::ssn_solve;
    use quasisol::{SsnParams, SsnState};
    let n = fm.dim();
    let params = SsnParams::default();
    let hi = 1.01 * max_abs(unconstrained(fm, yd.values()).as_slice());
    let mut r = hi.max(rho);
    let mut state = SsnState::zeros(n, r);
    loop {
        let (st, rep) = ssn_solve(yd, r, &state, &params, fm).unwrap();
        if r == rho {
            return (st, rep);
        }
        assert!(rep.converged, "continuation broke down at rho = {r}");
        state = st;
        r = (0.9 * r).max(rho);
    }
}

/// Unconstrained control for a diagonal (lumped) mass matrix, without dense algebra.
pub fn unconstrained_lumped(fm: &ForwardModel, y: &[f64]) -> Vec<f64> {
    let m = fm.mass().diagonal();
    fm.system().mul_vec(y).iter().zip(&m).map(|(s, d)| s / d).collect()
}

//! Damped semismooth Newton solver for the discrete quasi-solution problem
//!
//! ```text
//! (K + cM) y = M u
//! (K + cM) p = M (y - y_delta)
//!          u = proj_[-rho, rho](u - p)
//! ```
//!
//! The Newton derivative of the componentwise projection at `v` is the
//! identity on indices with `|v_i| <= rho` and zero elsewhere. Linearizing the
//! third equation with it gives `δp_i = -b3_i` on the inactive set and
//! `δu_i = -b3_i` on the active sets, i.e. after a full step `p` vanishes on
//! the inactive set and `u` sits on the bound on the active sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{BandedLu, ForwardModel, GridFunction, ProfileCholesky, SparseSymMatrix};
use crate::real::{norm2, Real};

/// Componentwise clamp of `v` to `[-rho, rho]`.
pub fn project_box<T: Real>(v: &[T], rho: T) -> Result<Vec<T>> {
    check_rho(rho)?;
    Ok(v.iter().map(|&x| clamp(x, rho)).collect())
}

#[inline]
fn clamp<T: Real>(x: T, rho: T) -> T {
    x.max(-rho).min(rho)
}

fn check_rho<T: Real>(rho: T) -> Result<()> {
    if rho >= T::zero() && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be finite and nonnegative, got {rho}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Upper,
    Lower,
    Inactive,
}

/// Partition of the vertex indices by the sign pattern of `u - p` against `±rho`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSets {
    pub a_plus: Vec<usize>,
    pub a_minus: Vec<usize>,
    pub inactive: Vec<usize>,
    labels: Vec<Label>,
}

impl ActiveSets {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.labels[i] != Label::Inactive
    }

    pub fn num_active(&self) -> usize {
        self.a_plus.len() + self.a_minus.len()
    }

    fn same_active(&self, other: &ActiveSets) -> bool {
        self.a_plus == other.a_plus && self.a_minus == other.a_minus
    }
}

/// `|u_i - p_i| = rho` counts as inactive.
pub fn compute_active_sets<T: Real>(u: &[T], p: &[T], rho: T) -> ActiveSets {
    assert_eq!(u.len(), p.len());
    let mut sets = ActiveSets {
        a_plus: Vec::new(),
        a_minus: Vec::new(),
        inactive: Vec::new(),
        labels: Vec::with_capacity(u.len()),
    };
    for (i, (&ui, &pi)) in u.iter().zip(p).enumerate() {
        let v = ui - pi;
        let label = if v > rho {
            sets.a_plus.push(i);
            Label::Upper
        } else if v < -rho {
            sets.a_minus.push(i);
            Label::Lower
        } else {
            sets.inactive.push(i);
            Label::Inactive
        };
        sets.labels.push(label);
    }
    sets
}

/// Iterate `(y, p, u)` of the Newton method at a fixed radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SsnState<T> {
    pub y: GridFunction<T>,
    pub p: GridFunction<T>,
    pub u: GridFunction<T>,
    pub rho: T,
}

impl<T: Real> SsnState<T> {
    pub fn zeros(n: usize, rho: T) -> Self {
        Self {
            y: GridFunction::zeros(n),
            p: GridFunction::zeros(n),
            u: GridFunction::zeros(n),
            rho,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        for v in [&self.y, &self.p, &self.u] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        check_rho(self.rho)
    }

    fn stepped(&self, step: &NewtonStep<T>, alpha: T) -> Self {
        let add = |x: &GridFunction<T>, d: &[T]| {
            GridFunction::new(x.values().iter().zip(d).map(|(&a, &b)| a + alpha * b).collect())
        };
        Self { y: add(&self.y, &step.dy), p: add(&self.p, &step.dp), u: add(&self.u, &step.du), rho: self.rho }
    }
}

/// Norm used for the residual `b` in the termination and line-search tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    /// Euclidean norm of the stacked 3N vector.
    #[default]
    Euclidean,
    /// PDE rows measured in the dual norm `sum r_i^2 / m_i`, projection row in
    /// `sum m_i r_i^2`, with `m` the lumped mass.
    MassWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsnParams<T> {
    /// Backtracking factor in (0, 1).
    pub q: T,
    pub i_max: usize,
    pub k_max: usize,
    pub tol: T,
    #[serde(default)]
    pub norm: ResidualNorm,
}

impl<T: Real> Default for SsnParams<T> {
    fn default() -> Self {
        Self { q: T::lit(0.7), i_max: 10, k_max: 30, tol: T::lit(1e-9), norm: ResidualNorm::Euclidean }
    }
}

impl<T: Real> SsnParams<T> {
    fn validate(&self) -> Result<()> {
        if !(self.q > T::zero() && self.q < T::one()) {
            return Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if self.i_max == 0 || self.k_max == 0 {
            return Err(Error::InvalidArgument("i_max and k_max must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ActiveSetsStable,
    ResidualBelowTol,
    MaxIterations,
    LineSearchFailure,
    LinearSolveFailure,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::ActiveSetsStable | Termination::ResidualBelowTol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: T,
    pub termination_reason: Termination,
    /// Residual norm at the start of every outer iteration.
    #[serde(skip)]
    pub residual_history: Vec<T>,
}

impl<T: Real> NewtonReport<T> {
    fn new(reason: Termination, iterations: usize, history: Vec<T>) -> Self {
        Self {
            converged: reason.is_converged(),
            iterations,
            final_residual: history.last().copied().unwrap_or_else(T::zero),
            termination_reason: reason,
            residual_history: history,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Stacked residual `b = [ (K+cM)y - Mu ; (K+cM)p - M(y - y_delta) ; u - proj(u - p) ]`.
pub fn newton_residual<T: Real>(
    state: &SsnState<T>,
    model: &ForwardModel<T>,
    y_delta: &GridFunction<T>,
) -> Vec<T> {
    let n = model.dim();
    let s = model.system();
    let m = model.mass();
    let (y, p, u) = (state.y.values(), state.p.values(), state.u.values());
    let sy = s.mul_vec(y);
    let mu = m.mul_vec(u);
    let sp = s.mul_vec(p);
    let r: Vec<T> = y.iter().zip(y_delta.values()).map(|(&a, &b)| a - b).collect();
    let mr = m.mul_vec(&r);
    let mut b = Vec::with_capacity(3 * n);
    b.extend(sy.iter().zip(&mu).map(|(&a, &c)| a - c));
    b.extend(sp.iter().zip(&mr).map(|(&a, &c)| a - c));
    b.extend(u.iter().zip(p).map(|(&ui, &pi)| ui - clamp(ui - pi, state.rho)));
    b
}

fn residual_norm<T: Real>(b: &[T], weights: Option<&[T]>) -> T {
    let Some(m) = weights else {
        return norm2(b);
    };
    let n = m.len();
    let mut s = T::zero();
    for i in 0..n {
        s = s + b[i] * b[i] / m[i] + b[n + i] * b[n + i] / m[i] + m[i] * b[2 * n + i] * b[2 * n + i];
    }
    s.sqrt()
}

/// Newton direction `(δy, δp, δu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep<T> {
    pub dy: Vec<T>,
    pub dp: Vec<T>,
    pub du: Vec<T>,
}

/// Solves `B_k (δy, δp, δu) = -b^k` for the active sets `sets`.
///
/// The system is linear in the updated state, so it is solved for
/// `(y + δy, p + δp, u + δu)` directly: the new `u` is fixed to `±rho` on the
/// active sets, the new `p` vanishes on the inactive set, and the two PDE rows
/// hold exactly. With a diagonal mass matrix this reduces to an SPD system on
/// the active set; otherwise a banded LU on the `2N` free unknowns is used.
pub fn newton_step<T: Real>(
    state: &SsnState<T>,
    sets: &ActiveSets,
    model: &ForwardModel<T>,
    y_delta: &GridFunction<T>,
) -> Result<NewtonStep<T>> {
    let n = model.dim();
    state.check(n)?;
    if y_delta.len() != n || sets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y_delta.len().min(sets.len()) });
    }
    let mut u_fixed = vec![T::zero(); n];
    for &i in &sets.a_plus {
        u_fixed[i] = state.rho;
    }
    for &i in &sets.a_minus {
        u_fixed[i] = -state.rho;
    }
    let (y, p, u) = if model.mass().is_diagonal() {
        step_target_diagonal(sets, &u_fixed, model, y_delta.values())?
    } else {
        step_target_general(sets, &u_fixed, model, y_delta.values())?
    };
    let diff = |new: Vec<T>, old: &GridFunction<T>| -> Vec<T> {
        new.iter().zip(old.values()).map(|(&a, &b)| a - b).collect()
    };
    Ok(NewtonStep { dy: diff(y, &state.y), dp: diff(p, &state.p), du: diff(u, &state.u) })
}

type Target<T> = (Vec<T>, Vec<T>, Vec<T>);

// Diagonal M: with p_I = 0 the adjoint row gives y = y_delta + M^{-1} S_{:,A} p_A,
// and the state row restricted to A gives (S_{A,:} M^{-1} S_{:,A}) p_A = M_A u_A - (S y_delta)_A.
fn step_target_diagonal<T: Real>(
    sets: &ActiveSets,
    u_fixed: &[T],
    model: &ForwardModel<T>,
    y_delta: &[T],
) -> Result<Target<T>> {
    let n = model.dim();
    let s = model.system();
    let m = model.mass().diagonal();
    let mut pos = vec![usize::MAX; n];
    let active: Vec<usize> = (0..n).filter(|&i| sets.is_active(i)).collect();
    for (k, &a) in active.iter().enumerate() {
        pos[a] = k;
    }

    let mut p = vec![T::zero(); n];
    if !active.is_empty() {
        let mut trip = Vec::new();
        for k in 0..n {
            let (cols, vals) = s.row(k);
            let inv_m = T::one() / m[k];
            for (&a, &sa) in cols.iter().zip(vals) {
                if pos[a] == usize::MAX {
                    continue;
                }
                let scaled = sa * inv_m;
                for (&b, &sb) in cols.iter().zip(vals) {
                    if pos[b] != usize::MAX {
                        trip.push((pos[a], pos[b], scaled * sb));
                    }
                }
            }
        }
        let schur = SparseSymMatrix::from_triplets(active.len(), &trip)?;
        let s_yd = s.mul_vec(y_delta);
        let rhs: Vec<T> = active.iter().map(|&a| m[a] * u_fixed[a] - s_yd[a]).collect();
        let chol = ProfileCholesky::factor(&schur)?;
        let mut pa = chol.solve(&rhs);
        // one refinement sweep; the Schur complement squares the conditioning of S
        let r: Vec<T> = rhs.iter().zip(schur.mul_vec(&pa)).map(|(&b, a)| b - a).collect();
        for (x, d) in pa.iter_mut().zip(chol.solve(&r)) {
            *x = *x + d;
        }
        for (&a, &v) in active.iter().zip(&pa) {
            p[a] = v;
        }
    }
    let sp = s.mul_vec(&p);
    let y: Vec<T> = (0..n).map(|i| y_delta[i] + sp[i] / m[i]).collect();
    let sy = s.mul_vec(&y);
    let u: Vec<T> = (0..n).map(|i| if sets.is_active(i) { u_fixed[i] } else { sy[i] / m[i] }).collect();
    Ok((y, p, u))
}

// General M: unknowns interleaved per vertex as (y_i, w_i) with w_i = u_i on the
// inactive set and p_i on the active sets, which keeps the system banded.
fn step_target_general<T: Real>(
    sets: &ActiveSets,
    u_fixed: &[T],
    model: &ForwardModel<T>,
    y_delta: &[T],
) -> Result<Target<T>> {
    let n = model.dim();
    let s = model.system();
    let mm = model.mass();
    let mut trip = Vec::with_capacity(4 * s.nnz());
    let mut rhs = vec![T::zero(); 2 * n];
    let m_yd = mm.mul_vec(y_delta);
    for i in 0..n {
        let (scols, svals) = s.row(i);
        let (mcols, mvals) = mm.row(i);
        // state row: S y - M_{:,I} u_I = M_{:,A} u_A
        for (&j, &v) in scols.iter().zip(svals) {
            trip.push((2 * i, 2 * j, v));
        }
        let mut fixed = T::zero();
        for (&j, &v) in mcols.iter().zip(mvals) {
            if sets.is_active(j) {
                fixed = fixed + v * u_fixed[j];
            } else {
                trip.push((2 * i, 2 * j + 1, -v));
            }
        }
        rhs[2 * i] = fixed;
        // adjoint row: S_{:,A} p_A - M y = -M y_delta
        for (&j, &v) in scols.iter().zip(svals) {
            if sets.is_active(j) {
                trip.push((2 * i + 1, 2 * j + 1, v));
            }
        }
        for (&j, &v) in mcols.iter().zip(mvals) {
            trip.push((2 * i + 1, 2 * j, -v));
        }
        rhs[2 * i + 1] = -m_yd[i];
    }
    let x = BandedLu::factor_triplets(2 * n, &trip)?.solve(&rhs);
    let mut y = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut u = u_fixed.to_vec();
    for i in 0..n {
        y[i] = x[2 * i];
        if sets.is_active(i) {
            p[i] = x[2 * i + 1];
        } else {
            u[i] = x[2 * i + 1];
        }
    }
    Ok((y, p, u))
}

/// Damped semismooth Newton iteration at fixed radius `rho`.
///
/// Terminates successfully once `||b^k|| < tol`; the reason is reported as
/// [`Termination::ActiveSetsStable`] when the active sets also repeat those of
/// the previous iteration. A Newton direction is accepted with the first step
/// length `q^(i-1)`, `i = 1..=i_max`, that decreases the residual norm.
///
/// Only invalid arguments produce `Err`; numerical failures are reported
/// through [`NewtonReport`] together with the last accepted iterate.
pub fn ssn_solve<T: Real>(
    y_delta: &GridFunction<T>,
    rho: T,
    start: &SsnState<T>,
    params: &SsnParams<T>,
    model: &ForwardModel<T>,
) -> Result<(SsnState<T>, NewtonReport<T>)> {
    params.validate()?;
    check_rho(rho)?;
    let n = model.dim();
    if y_delta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y_delta.len() });
    }
    let mut state = SsnState { rho, ..start.clone() };
    state.check(n)?;

    let weights = match params.norm {
        ResidualNorm::Euclidean => None,
        ResidualNorm::MassWeighted => Some(model.mass().row_sums()),
    };
    let norm_of = |s: &SsnState<T>| residual_norm(&newton_residual(s, model, y_delta), weights.as_deref());

    if rho == T::zero() {
        // M_0 = {0}: the solution is explicit
        let r = GridFunction::new(y_delta.values().iter().map(|&v| -v).collect());
        let p = match model.adjoint(&r) {
            Ok(p) => p,
            Err(_) => return Ok((state, NewtonReport::new(Termination::LinearSolveFailure, 1, vec![]))),
        };
        state = SsnState { y: GridFunction::zeros(n), p, u: GridFunction::zeros(n), rho };
        let nb = norm_of(&state);
        let reason = if nb < params.tol { Termination::ResidualBelowTol } else { Termination::MaxIterations };
        return Ok((state, NewtonReport::new(reason, 1, vec![nb])));
    }

    let mut history = Vec::new();
    let mut previous: Option<ActiveSets> = None;
    for k in 1..=params.k_max {
        let sets = compute_active_sets(state.u.values(), state.p.values(), rho);
        let nb = norm_of(&state);
        history.push(nb);
        log::debug!(
            "ssn k={k} rho={rho:e} |b|={nb:e} |A+|={} |A-|={}",
            sets.a_plus.len(),
            sets.a_minus.len()
        );
        if nb < params.tol {
            let reason = match &previous {
                Some(prev) if prev.same_active(&sets) => Termination::ActiveSetsStable,
                _ => Termination::ResidualBelowTol,
            };
            return Ok((state, NewtonReport::new(reason, k, history)));
        }
        let step = match newton_step(&state, &sets, model, y_delta) {
            Ok(step) => step,
            Err(e) => {
                log::debug!("ssn linear solve failed: {e}");
                return Ok((state, NewtonReport::new(Termination::LinearSolveFailure, k, history)));
            }
        };
        let mut alpha = T::one();
        let mut accepted = None;
        for i in 1..=params.i_max {
            let trial = state.stepped(&step, alpha);
            let nt = norm_of(&trial);
            if nt < nb {
                log::trace!("ssn k={k} accepted step {alpha:e} after {i} trials, |b|={nt:e}");
                accepted = Some(trial);
                break;
            }
            alpha = alpha * params.q;
        }
        match accepted {
            Some(trial) => state = trial,
            None => return Ok((state, NewtonReport::new(Termination::LineSearchFailure, k, history))),
        }
        previous = Some(sets);
    }
    let nb = norm_of(&state);
    history.push(nb);
    Ok((state, NewtonReport::new(Termination::MaxIterations, params.k_max, history)))
}

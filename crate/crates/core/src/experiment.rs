//! End-to-end reconstruction study: piecewise constant source with inclusions,
//! seeded noisy observations, radius choice and error metrics per noise level.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{ForwardModel, GridFunction, MassKind, Mesh, Rect, SparseSymMatrix};
use crate::io::write_grid_csv;
use crate::paramchoice::{choose_rho, ChoiceParams};
use crate::quasisolve::SsnParams;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion<T> {
    pub rect: Rect<T>,
    pub value: T,
}

/// Piecewise constant source: a background value overwritten by rectangles,
/// later inclusions taking precedence on overlaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct Phantom<T> {
    pub inclusions: Vec<Inclusion<T>>,
    #[serde(default)]
    pub background: T,
}

impl<T: Real> Phantom<T> {
    /// Four squares of heights +4, -4, +2, -2 on a zero background in `[-1, 1]^2`.
    pub fn standard() -> Self {
        let (a, b) = (T::lit(0.3), T::lit(0.7));
        let inc = |ax: T, bx: T, ay: T, by: T, v: f64| Inclusion { rect: Rect::new(ax, bx, ay, by), value: T::lit(v) };
        Self {
            inclusions: vec![
                inc(-b, -a, -b, -a, 4.0),
                inc(a, b, -b, -a, -4.0),
                inc(-b, -a, a, b, 2.0),
                inc(a, b, a, b, -2.0),
            ],
            background: T::zero(),
        }
    }

    /// `||u†||_inf` over the inclusion values and the background.
    pub fn rho_dagger(&self) -> T {
        self.inclusions.iter().fold(self.background.abs(), |m, inc| m.max(inc.value.abs()))
    }
}

pub fn build_phantom<T: Real>(mesh: &Mesh<T>, spec: &Phantom<T>) -> Result<GridFunction<T>> {
    for inc in &spec.inclusions {
        if !mesh.rect().contains_rect(&inc.rect) {
            return Err(Error::InvalidArgument(format!("inclusion {:?} leaves the domain", inc.rect)));
        }
    }
    Ok(GridFunction::interpolate(mesh, |x, y| {
        spec.inclusions
            .iter()
            .rev()
            .find(|inc| inc.rect.contains(x, y))
            .map_or(spec.background, |inc| inc.value)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    /// Relative noise in percent of `||y†||_inf`.
    pub s: T,
    pub seed: u64,
}

/// `y_delta = y† + (s/100) ||y†||_inf η / ||η||_M` with `η` i.i.d. standard
/// normal drawn from ChaCha20 seeded by `spec.seed`. Returns the data and the
/// measured noise level `||y_delta - y†||_M`.
pub fn make_noisy_data<T: Real>(
    y_true: &GridFunction<T>,
    spec: &NoiseSpec<T>,
    mass: &SparseSymMatrix<T>,
) -> Result<(GridFunction<T>, T)> {
    if !(spec.s >= T::zero()) {
        return Err(Error::InvalidArgument(format!("noise percentage must be nonnegative, got {}", spec.s)));
    }
    if y_true.len() != mass.dim() {
        return Err(Error::DimensionMismatch { expected: mass.dim(), got: y_true.len() });
    }
    if spec.s == T::zero() {
        return Ok((y_true.clone(), T::zero()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let (eta, eta_norm) = loop {
        let eta: Vec<T> = (0..y_true.len()).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect();
        let norm = mass.quad_form(&eta).sqrt();
        if norm > T::zero() {
            break (eta, norm);
        }
    };
    let scale = spec.s / T::lit(100.0) * y_true.max_abs() / eta_norm;
    let y_delta = GridFunction::new(y_true.values().iter().zip(&eta).map(|(&y, &e)| y + scale * e).collect());
    let delta = y_delta.sub(y_true).mass_norm(mass);
    Ok((y_delta, delta))
}

/// Discrete subgradient of the supremum norm at `u_true`: `±1/m_C` on the set
/// `C` where `|u_true|` attains its maximum, zero elsewhere, with `m_C` the
/// lumped mass of `C`. Exact equality selects `C`.
pub fn bregman_subgradient<T: Real>(u_true: &GridFunction<T>, mass: &SparseSymMatrix<T>) -> Result<Vec<T>> {
    bregman_subgradient_tol(u_true, mass, T::zero())
}

/// As [`bregman_subgradient`], with `C = { i : |u_i| >= max|u| - eps }`.
pub fn bregman_subgradient_tol<T: Real>(
    u_true: &GridFunction<T>,
    mass: &SparseSymMatrix<T>,
    eps: T,
) -> Result<Vec<T>> {
    let rho = u_true.max_abs();
    let weights = mass.row_sums();
    let on_set = |v: T| rho > T::zero() && v.abs() >= rho - eps;
    let m_c: T = u_true.values().iter().zip(&weights).filter(|(&v, _)| on_set(v)).map(|(_, &w)| w).sum();
    if !(m_c > T::zero()) {
        return Err(Error::InvalidArgument("subgradient support is empty".into()));
    }
    Ok(u_true.values().iter().map(|&v| if on_set(v) { v.signum() / m_c } else { T::zero() }).collect())
}

/// Duality pairing `<ξ, v> = sum_i ξ_i (M 1)_i v_i`, i.e. `ξ^T M v` for the lumped mass.
pub fn bregman_pairing<T: Real>(xi: &[T], mass: &SparseSymMatrix<T>, v: &[T]) -> T {
    xi.iter().zip(mass.row_sums()).zip(v).map(|((&x, w), &vi)| x * w * vi).sum()
}

/// Metrics of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord<T> {
    pub s: T,
    pub delta: T,
    pub discrepancy: T,
    pub rho: T,
    pub err_inf: T,
    pub err_l2: T,
    /// `<ξ, u_rho - u†>`
    pub bregman_pair: T,
    /// `||u_rho||_inf - ||u†||_inf - <ξ, u_rho - u†>`
    pub bregman_distance: T,
    pub success: bool,
}

pub const RESULTS_HEADER: &str = "s,delta,discrepancy,rho,err_inf,err_l2,bregman_pair,success";

pub fn write_results_csv<T: Real, W: Write>(records: &[ErrorRecord<T>], mut w: W) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.s, r.delta, r.discrepancy, r.rho, r.err_inf, r.err_l2, r.bregman_pair, r.success
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real"))]
pub struct ExperimentConfig<T> {
    /// Cells per axis, or vertices per axis when `n_is_vertices` is set.
    pub n: usize,
    pub n_is_vertices: bool,
    pub c: T,
    pub tau: T,
    pub rho0: T,
    /// Noise percentages.
    pub noise: Vec<T>,
    pub seed: u64,
    pub phantom: Phantom<T>,
    pub mass: MassKind,
    pub ssn: SsnParams<T>,
    pub max_phase_iterations: usize,
}

impl<T: Real> Default for ExperimentConfig<T> {
    fn default() -> Self {
        Self {
            n: 64,
            n_is_vertices: false,
            c: T::one(),
            tau: T::lit(1.1),
            rho0: T::lit(10.0),
            noise: [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5].iter().map(|&s| T::lit(s)).collect(),
            seed: 0,
            phantom: Phantom::standard(),
            mass: MassKind::Lumped,
            ssn: SsnParams::default(),
            max_phase_iterations: 100,
        }
    }
}

impl<T: Real> ExperimentConfig<T> {
    pub fn mesh(&self) -> Result<Mesh<T>> {
        let v = if self.n_is_vertices { self.n } else { self.n + 1 };
        Mesh::new(v, v, Rect::symmetric_unit())
    }
}

/// Runs one reconstruction per noise level. When `out` is given, writes
/// `results.csv`, `u_true.csv`, and per record `recon_<i>.csv`,
/// `trace_<i>.csv` and `choice_<i>.json`.
pub fn run_experiment<T: Real>(config: &ExperimentConfig<T>, out: Option<&Path>) -> Result<Vec<ErrorRecord<T>>> {
    let mesh = config.mesh()?;
    let model = ForwardModel::from_mesh(&mesh, config.c, config.mass)?;
    let u_true = build_phantom(&mesh, &config.phantom)?;
    let y_true = model.forward(&u_true)?;
    let xi = bregman_subgradient(&u_true, model.mass())?;
    let rho_dagger = u_true.max_abs();

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_grid_csv(&mesh, &u_true, BufWriter::new(File::create(dir.join("u_true.csv"))?))?;
    }

    let mut records = Vec::with_capacity(config.noise.len());
    for (idx, &s) in config.noise.iter().enumerate() {
        let noise = NoiseSpec { s, seed: config.seed ^ idx as u64 };
        let (y_delta, delta) = make_noisy_data(&y_true, &noise, model.mass())?;
        let params = ChoiceParams {
            tau: config.tau,
            rho0: config.rho0,
            ssn: config.ssn,
            max_phase_iterations: config.max_phase_iterations,
            ..ChoiceParams::new(delta)
        };
        let (state, report) = choose_rho(&y_delta, &params, &model)?;
        let err = state.u.sub(&u_true);
        let pair = bregman_pairing(&xi, model.mass(), err.values());
        let record = ErrorRecord {
            s,
            delta,
            discrepancy: report.discrepancy_final,
            rho: report.rho_final,
            err_inf: err.max_abs(),
            err_l2: err.mass_norm(model.mass()),
            bregman_pair: pair,
            bregman_distance: state.u.max_abs() - rho_dagger - pair,
            success: report.success,
        };
        log::info!(
            "s={s:e}: delta={delta:e} rho={:e} d={:e} success={}",
            record.rho,
            record.discrepancy,
            record.success
        );
        if let Some(dir) = out {
            write_grid_csv(&mesh, &state.u, BufWriter::new(File::create(dir.join(format!("recon_{idx}.csv")))?))?;
            report.write_trace_csv(BufWriter::new(File::create(dir.join(format!("trace_{idx}.csv")))?))?;
            fs::write(dir.join(format!("choice_{idx}.json")), report.to_json())?;
        }
        records.push(record);
    }
    if let Some(dir) = out {
        let mut w = BufWriter::new(File::create(dir.join("results.csv"))?);
        write_results_csv(&records, &mut w)?;
        w.flush()?;
    }
    Ok(records)
}

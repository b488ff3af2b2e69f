//! Radius selection by the discrepancy principle `delta <= d(rho) <= tau * delta`
//! via a three-phase continuation: grow `rho` until the Newton method converges
//! below the noise level, halve it until that fails, then bisect.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{ForwardModel, GridFunction};
use crate::quasisolve::{ssn_solve, NewtonReport, SsnParams, SsnState};
use crate::real::Real;

/// Discrete distance `||y - y_delta||_M` at radius `rho`, computed by a Newton
/// solve started from `warm_start`.
pub fn discrepancy<T: Real>(
    y_delta: &GridFunction<T>,
    rho: T,
    warm_start: &SsnState<T>,
    model: &ForwardModel<T>,
    params: &SsnParams<T>,
) -> Result<(T, SsnState<T>, NewtonReport<T>)> {
    let (state, report) = ssn_solve(y_delta, rho, warm_start, params, model)?;
    let value = state.y.sub(y_delta).mass_norm(model.mass());
    Ok((value, state, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceParams<T> {
    pub tau: T,
    /// Initial radius, also the phase I increment.
    pub rho0: T,
    /// Noise level.
    pub delta: T,
    pub ssn: SsnParams<T>,
    pub max_phase_iterations: usize,
    /// Double the phase I increment after each unsuccessful radius.
    #[serde(default)]
    pub adaptive_growth: bool,
    /// Accepted discrepancy when `delta == 0`, where the principle degenerates to `d = 0`.
    pub zero_noise_floor: T,
}

impl<T: Real> ChoiceParams<T> {
    pub fn new(delta: T) -> Self {
        Self {
            tau: T::lit(1.1),
            rho0: T::lit(10.0),
            delta,
            ssn: SsnParams::default(),
            max_phase_iterations: 100,
            adaptive_growth: false,
            zero_noise_floor: T::lit(1e-10),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > T::one()) {
            return Err(Error::InvalidArgument(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.rho0 > T::zero()) {
            return Err(Error::InvalidArgument(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.delta >= T::zero()) {
            return Err(Error::InvalidArgument(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if self.max_phase_iterations == 0 {
            return Err(Error::InvalidArgument("phase budget must be positive".into()));
        }
        Ok(())
    }

    fn satisfies(&self, d: T) -> bool {
        if self.delta == T::zero() {
            d <= self.zero_noise_floor
        } else {
            self.delta <= d && d <= self.tau * self.delta
        }
    }

    fn below(&self, d: T) -> bool {
        d < self.delta
    }

    fn above(&self, d: T) -> bool {
        if self.delta == T::zero() {
            d > self.zero_noise_floor
        } else {
            d > self.tau * self.delta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Increase,
    Decrease,
    Bisect,
}

impl Phase {
    fn label(self) -> &'static str {
        match self {
            Phase::Increase => "I",
            Phase::Decrease => "II",
            Phase::Bisect => "III",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<T> {
    pub phase: Phase,
    pub k: usize,
    pub rho: T,
    pub discrepancy: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceReport<T> {
    pub rho_final: T,
    pub discrepancy_final: T,
    pub phase_trace: Vec<TraceEntry<T>>,
    pub success: bool,
}

impl<T: Real> ChoiceReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with columns `phase,k,rho,discrepancy,converged`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["phase", "k", "rho", "discrepancy", "converged"])?;
        for e in &self.phase_trace {
            wr.write_record([
                e.phase.label().to_string(),
                e.k.to_string(),
                format!("{:e}", e.rho),
                format!("{:e}", e.discrepancy),
                e.converged.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct Run<'a, T: Real> {
    y_delta: &'a GridFunction<T>,
    model: &'a ForwardModel<T>,
    params: &'a ChoiceParams<T>,
    trace: Vec<TraceEntry<T>>,
}

struct Eval<T> {
    rho: T,
    d: T,
    state: SsnState<T>,
    converged: bool,
}

impl<T: Real> Run<'_, T> {
    fn eval(&mut self, phase: Phase, k: usize, rho: T, start: &SsnState<T>) -> Result<Eval<T>> {
        let (d, state, report) = discrepancy(self.y_delta, rho, start, self.model, &self.params.ssn)?;
        log::info!(
            "phase {} k={k} rho={rho:e} d={d:e} converged={} ({:?}, {} its)",
            phase.label(),
            report.converged,
            report.termination_reason,
            report.iterations
        );
        self.trace.push(TraceEntry { phase, k, rho, discrepancy: d, converged: report.converged });
        Ok(Eval { rho, d, state, converged: report.converged })
    }

    fn finish(self, e: Eval<T>, success: bool) -> (SsnState<T>, ChoiceReport<T>) {
        let report = ChoiceReport { rho_final: e.rho, discrepancy_final: e.d, phase_trace: self.trace, success };
        (e.state, report)
    }
}

/// Chooses `rho` by the discrepancy principle.
///
/// Phase I starts at `rho0` from the zero state and adds `rho0` until the Newton
/// method converges with `d < delta`. Phase II halves `rho` until the solve fails
/// or `d > delta`. Phase III bisects from the last convergent phase II radius
/// with initial step half that radius. Every phase stops early once the
/// principle holds for a converged solve. Phases I and II warm-start from the
/// last convergent iterate, phase III from the convergent iterate with the
/// smallest radius whose discrepancy is below `delta`.
pub fn choose_rho<T: Real>(
    y_delta: &GridFunction<T>,
    params: &ChoiceParams<T>,
    model: &ForwardModel<T>,
) -> Result<(SsnState<T>, ChoiceReport<T>)> {
    params.validate()?;
    let n = model.dim();
    if y_delta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y_delta.len() });
    }
    let budget = params.max_phase_iterations;
    let mut run = Run { y_delta, model, params, trace: Vec::new() };
    let half = T::lit(0.5);

    // Phase I
    let mut start = SsnState::zeros(n, params.rho0);
    let mut rho = params.rho0;
    let mut increment = params.rho0;
    let mut phase_one = None;
    for k in 0..budget {
        let e = run.eval(Phase::Increase, k, rho, &start)?;
        if e.converged && params.satisfies(e.d) {
            return Ok(run.finish(e, true));
        }
        if e.converged {
            if params.below(e.d) {
                phase_one = Some(e);
                break;
            }
            start = e.state;
        }
        if params.adaptive_growth && k > 0 {
            increment = increment + increment;
        }
        rho = rho + increment;
    }
    let Some(mut last_good) = phase_one else {
        let e = fallback(&run, rho);
        return Ok(run.finish(e, false));
    };

    // Phase II
    let mut rho = last_good.rho * half;
    let mut exhausted = true;
    for k in 0..budget {
        let e = run.eval(Phase::Decrease, k, rho, &last_good.state)?;
        if e.converged && params.satisfies(e.d) {
            return Ok(run.finish(e, true));
        }
        if !e.converged || !params.below(e.d) {
            exhausted = false;
            break;
        }
        last_good = e;
        rho = rho * half;
    }
    if exhausted {
        return Ok(run.finish(last_good, false));
    }

    // Phase III. Warm starts come from the convergent state with the smallest
    // radius known to lie above the target (d < delta); starting below the
    // target radius empties the predicted active set since |p| is of the order
    // of the discrepancy.
    let mut step = last_good.rho * half;
    let mut rho = last_good.rho - step;
    let mut upper = last_good;
    let mut best: Option<Eval<T>> = None;
    for k in 0..budget {
        let e = run.eval(Phase::Bisect, k, rho, &upper.state)?;
        if e.converged && params.satisfies(e.d) {
            return Ok(run.finish(e, true));
        }
        if !e.converged || params.above(e.d) {
            step = step * half;
            rho = rho + step;
        } else if e.rho == T::zero() {
            // d(0) = ||y_delta||_M is already below delta: the principle cannot hold
            return Ok(run.finish(e, false));
        } else {
            rho = (rho - step).max(T::zero());
        }
        if e.converged {
            if params.below(e.d) && e.rho < upper.rho {
                upper = e;
            } else {
                best = Some(e);
            }
        }
    }
    Ok(run.finish(best.unwrap_or(upper), false))
}

fn fallback<T: Real>(run: &Run<'_, T>, rho: T) -> Eval<T> {
    let n = run.model.dim();
    let d = run.trace.last().map_or(T::nan(), |t| t.discrepancy);
    Eval { rho, d, state: SsnState::zeros(n, rho), converged: false }
}

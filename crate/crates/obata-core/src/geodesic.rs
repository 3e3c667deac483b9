//! Geodesic integration in charts and in the flat ambient of a quadric,
//! with conservation monitoring, domain-escape localization, and the
//! closed-form affine-parameter bounds of exponentially warped models.
//!
//! The integrator is an adaptive Dormand-Prince 5(4) pair. Escapes through
//! the chart boundary are localized by step halving: when a full step fails
//! to evaluate, the step is halved until it succeeds or shrinks below the
//! escape resolution, so the reported parameter is accurate to 1e-8.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::linalg;
use crate::manifold::{classify_with_metric, Chart, GeomError, Signature, VectorType};
use crate::tensor::{christoffel, ScalarField};

/// Step size below which a failing step is declared a boundary escape.
const ESCAPE_RESOLUTION: f64 = 1e-8;
/// Relative floor under which the adaptive step signals finite-parameter
/// blow-up rather than a resolvable boundary.
const UNDERFLOW_COEFF: f64 = 1e-13;
const MAX_STEPS: usize = 5_000_000;
const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GeodesicState {
    pub s: f64,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl GeodesicState {
    pub fn new(s: f64, position: Vec<f64>, velocity: Vec<f64>) -> GeodesicState {
        GeodesicState {
            s,
            position: DVector::from_vec(position),
            velocity: DVector::from_vec(velocity),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Termination {
    /// Ran to the requested parameter length.
    BudgetReached { s: f64 },
    /// Left the chart domain; `last_inside` is the final interior state and
    /// `s` localizes the boundary crossing to the escape resolution.
    DomainEscape { s: f64, last_inside: Box<GeodesicState> },
    /// Adaptive step collapsed: the solution blows up at finite parameter.
    StepUnderflow { s: f64 },
}

impl Termination {
    pub fn s(&self) -> f64 {
        match self {
            Termination::BudgetReached { s }
            | Termination::DomainEscape { s, .. }
            | Termination::StepUnderflow { s } => *s,
        }
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Termination::BudgetReached { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Termination::BudgetReached { .. } => "budget_reached",
            Termination::DomainEscape { .. } => "domain_escape",
            Termination::StepUnderflow { .. } => "step_underflow",
        }
    }
}

/// Which integration states are kept in the trajectory.
#[derive(Clone, Copy, Debug)]
pub enum Sampling {
    /// Land exactly on multiples of the spacing and record those.
    Grid(f64),
    /// Record every accepted step.
    Accepted,
    /// Record only the initial and final states.
    Endpoints,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<GeodesicState>,
    /// Velocity squared norm at each sample.
    pub norms: Vec<f64>,
    pub termination: Termination,
    /// Largest deviation of the velocity norm from its initial value over
    /// all accepted states (not just recorded samples).
    pub norm_drift: f64,
    /// Filled by [`attach_first_integral`].
    pub first_integrals: Option<Vec<f64>>,
    pub integral_drift: Option<f64>,
    /// For ambient quadric integration: largest deviation of the level
    /// constraint over accepted states.
    pub constraint_drift: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub tol: f64,
    pub sampling: Sampling,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: DEFAULT_TOL,
            sampling: Sampling::Grid(0.01),
        }
    }
}

fn validate_options(opts: &IntegrateOptions) -> Result<(), GeomError> {
    if !(1e-12..=1e-4).contains(&opts.tol) {
        return Err(GeomError::Invalid(format!(
            "integration tolerance {} outside [1e-12, 1e-4]",
            opts.tol
        )));
    }
    if let Sampling::Grid(ds) = opts.sampling {
        if !(ds > 0.0) || !ds.is_finite() {
            return Err(GeomError::Invalid("sample spacing must be positive".into()));
        }
    }
    Ok(())
}

/// Derivative of the packed state (position, velocity):
/// `x' = v`, `v'^k = -G^k_ij v^i v^j`.
pub fn geodesic_rhs(
    chart: &Chart,
    position: &[f64],
    velocity: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), GeomError> {
    let gamma = christoffel(chart, position)?;
    let n = chart.dim();
    let mut acc = DVector::zeros(n);
    for k in 0..n {
        acc[k] = -(&gamma[k] * velocity).dot(velocity);
    }
    Ok((velocity.clone(), acc))
}

// Dormand-Prince 5(4) coefficients.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Fifth-order minus fourth-order weights, for the error estimate.
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepOutcome {
    y_new: DVector<f64>,
    /// Derivative at `y_new` (first-same-as-last stage).
    k_last: DVector<f64>,
    err_norm: f64,
}

fn dp54_step<F>(
    f: &F,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
    tol: f64,
) -> Result<StepOutcome, GeomError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, GeomError>,
{
    let k2 = f(&(y + h * A2[0] * k1))?;
    let k3 = f(&(y + h * (A3[0] * k1 + A3[1] * &k2)))?;
    let k4 = f(&(y + h * (A4[0] * k1 + A4[1] * &k2 + A4[2] * &k3)))?;
    let k5 = f(&(y + h * (A5[0] * k1 + A5[1] * &k2 + A5[2] * &k3 + A5[3] * &k4)))?;
    let k6 = f(&(y
        + h * (A6[0] * k1 + A6[1] * &k2 + A6[2] * &k3 + A6[3] * &k4 + A6[4] * &k5)))?;
    let y_new =
        y + h * (B5[0] * k1 + B5[2] * &k3 + B5[3] * &k4 + B5[4] * &k5 + B5[5] * &k6);
    let k_last = f(&y_new)?;
    let err = h
        * (ERR[0] * k1
            + ERR[2] * &k3
            + ERR[3] * &k4
            + ERR[4] * &k5
            + ERR[5] * &k6
            + ERR[6] * &k_last);
    let mut acc = 0.0;
    for i in 0..y.len() {
        let scale = tol + tol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / scale;
        acc += r * r;
    }
    let err_norm = (acc / y.len() as f64).sqrt();
    Ok(StepOutcome { y_new, k_last, err_norm })
}

enum RawTermination {
    Budget,
    Escape,
    Underflow,
}

struct RawTrajectory {
    /// Recorded (s, packed state) pairs per the sampling policy.
    states: Vec<(f64, DVector<f64>)>,
    termination: RawTermination,
    final_s: f64,
    final_state: DVector<f64>,
}

/// Adaptive driver. `monitor` sees every accepted state in order.
fn integrate_raw<F, M>(
    f: &F,
    y0: DVector<f64>,
    s0: f64,
    length: f64,
    tol: f64,
    sampling: Sampling,
    monitor: &mut M,
) -> Result<RawTrajectory, GeomError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, GeomError>,
    M: FnMut(f64, &DVector<f64>),
{
    if !(length > 0.0) {
        return Err(GeomError::Invalid("integration length must be positive".into()));
    }
    let s_end = s0 + length;
    let mut s = s0;
    let mut y = y0;
    let mut k1 = f(&y)?;
    monitor(s, &y);

    let grid = match sampling {
        Sampling::Grid(ds) => Some(ds),
        _ => None,
    };
    let on_grid = |s: f64| -> bool {
        match grid {
            Some(ds) => {
                let q = (s - s0) / ds;
                (q - q.round()).abs() < 1e-9
            }
            None => false,
        }
    };

    let mut states = vec![(s, y.clone())];
    let mut h = (1e-3_f64).min(length);
    if let Some(ds) = grid {
        h = h.min(ds);
    }
    let mut steps = 0usize;

    let termination = loop {
        if s_end - s <= 1e-14 * (1.0 + s_end.abs()) {
            break RawTermination::Budget;
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(GeomError::Numerical(
                "adaptive integration exceeded its step budget".into(),
            ));
        }
        if h < UNDERFLOW_COEFF * (1.0 + s.abs()) {
            break RawTermination::Underflow;
        }
        let mut h_eff = h.min(s_end - s);
        if let Some(ds) = grid {
            // Cap the step so accepted states land exactly on the grid.
            let next = s0 + ds * (((s - s0) / ds + 1e-9).floor() + 1.0);
            h_eff = h_eff.min(next - s);
        }
        match dp54_step(f, &y, &k1, h_eff, tol) {
            Err(GeomError::OutsideDomain { .. }) | Err(GeomError::Eval(_)) => {
                // Boundary ahead: halve until the step fits or is negligible.
                if h_eff <= ESCAPE_RESOLUTION {
                    break RawTermination::Escape;
                }
                h = h_eff * 0.5;
            }
            Err(other) => return Err(other),
            Ok(out) => {
                let fac = (0.9 * out.err_norm.powf(-0.2)).clamp(0.2, 5.0);
                if out.err_norm <= 1.0 {
                    s += h_eff;
                    y = out.y_new;
                    k1 = out.k_last;
                    monitor(s, &y);
                    let record = match sampling {
                        Sampling::Grid(_) => on_grid(s),
                        Sampling::Accepted => true,
                        Sampling::Endpoints => false,
                    };
                    if record {
                        states.push((s, y.clone()));
                    }
                    h = h_eff * fac;
                } else {
                    h = h_eff * fac.min(0.9);
                }
            }
        }
    };

    if states.last().map(|(ls, _)| (*ls - s).abs() > 1e-15) != Some(false) {
        states.push((s, y.clone()));
    }
    Ok(RawTrajectory {
        states,
        termination,
        final_s: s,
        final_state: y,
    })
}

fn split_state(n: usize, s: f64, y: &DVector<f64>) -> GeodesicState {
    GeodesicState {
        s,
        position: DVector::from_iterator(n, (0..n).map(|i| y[i])),
        velocity: DVector::from_iterator(n, (0..n).map(|i| y[n + i])),
    }
}

/// Integrate the geodesic starting at `state0` for parameter length `s_len`.
pub fn integrate(
    chart: &Chart,
    state0: &GeodesicState,
    s_len: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, GeomError> {
    validate_options(opts)?;
    let n = chart.dim();
    if state0.position.len() != n || state0.velocity.len() != n {
        return Err(GeomError::Invalid("state dimension does not match chart".into()));
    }
    let mut y0 = DVector::zeros(2 * n);
    for i in 0..n {
        y0[i] = state0.position[i];
        y0[n + i] = state0.velocity[i];
    }
    let f = |y: &DVector<f64>| -> Result<DVector<f64>, GeomError> {
        let pos = y.as_slice()[..n].to_vec();
        let vel = DVector::from_iterator(n, (0..n).map(|i| y[n + i]));
        let (dx, dv) = geodesic_rhs(chart, &pos, &vel)?;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            out[i] = dx[i];
            out[n + i] = dv[i];
        }
        Ok(out)
    };

    let norm_at = |y: &DVector<f64>| -> Option<f64> {
        let pos = &y.as_slice()[..n];
        let g = chart.metric_at(pos).ok()?;
        let v = DVector::from_iterator(n, (0..n).map(|i| y[n + i]));
        Some(linalg::bilinear(&g, &v, &v))
    };
    let norm0 = norm_at(&y0)
        .ok_or_else(|| GeomError::Invalid("initial state is outside the chart".into()))?;
    let mut drift = 0.0f64;
    let mut monitor = |_s: f64, y: &DVector<f64>| {
        if let Some(nv) = norm_at(y) {
            drift = drift.max((nv - norm0).abs());
        }
    };

    let raw = integrate_raw(&f, y0, state0.s, s_len, opts.tol, opts.sampling, &mut monitor)?;
    let samples: Vec<GeodesicState> = raw
        .states
        .iter()
        .map(|(s, y)| split_state(n, *s, y))
        .collect();
    let norms: Vec<f64> = samples
        .iter()
        .map(|st| {
            chart
                .metric_at(st.position.as_slice())
                .map(|g| linalg::bilinear(&g, &st.velocity, &st.velocity))
                .unwrap_or(f64::NAN)
        })
        .collect();
    let termination = match raw.termination {
        RawTermination::Budget => Termination::BudgetReached { s: raw.final_s },
        RawTermination::Escape => Termination::DomainEscape {
            s: raw.final_s,
            last_inside: Box::new(split_state(n, raw.final_s, &raw.final_state)),
        },
        RawTermination::Underflow => Termination::StepUnderflow { s: raw.final_s },
    };
    Ok(Trajectory {
        samples,
        norms,
        termination,
        norm_drift: drift,
        first_integrals: None,
        integral_drift: None,
        constraint_drift: None,
    })
}

fn eps_dot(eps: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    eps.iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(e, (x, y))| e * x * y)
        .sum()
}

/// Integrate a quadric geodesic in the flat ambient, where the exact
/// equation is the normal projection `p'' = -(<p', p'> / level) p`. No
/// chart limitation; the level constraint is monitored.
pub fn integrate_ambient(
    ambient: Signature,
    level: f64,
    state0: &GeodesicState,
    s_len: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, GeomError> {
    validate_options(opts)?;
    let n = ambient.dim();
    if state0.position.len() != n || state0.velocity.len() != n {
        return Err(GeomError::Invalid("state dimension does not match ambient".into()));
    }
    if level == 0.0 {
        return Err(GeomError::Invalid("quadric level must be nonzero".into()));
    }
    let eps = ambient.eps();
    let pp = eps_dot(&eps, &state0.position, &state0.position);
    let pv = eps_dot(&eps, &state0.position, &state0.velocity);
    if (pp - level).abs() > 1e-10 * (1.0 + level.abs()) {
        return Err(GeomError::Invalid(format!(
            "initial position violates the level constraint by {:.3e}",
            (pp - level).abs()
        )));
    }
    if pv.abs() > 1e-10 {
        return Err(GeomError::Invalid(format!(
            "initial velocity is not tangent (constraint derivative {:.3e})",
            pv.abs()
        )));
    }

    let mut y0 = DVector::zeros(2 * n);
    for i in 0..n {
        y0[i] = state0.position[i];
        y0[n + i] = state0.velocity[i];
    }
    let eps_f = eps.clone();
    let f = move |y: &DVector<f64>| -> Result<DVector<f64>, GeomError> {
        let mut vv = 0.0;
        for i in 0..n {
            vv += eps_f[i] * y[n + i] * y[n + i];
        }
        let coeff = -vv / level;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            out[i] = y[n + i];
            out[n + i] = coeff * y[i];
        }
        Ok(out)
    };

    let norm0 = eps_dot(&eps, &state0.velocity, &state0.velocity);
    let mut drift = 0.0f64;
    let mut cdrift = 0.0f64;
    let eps_m = eps.clone();
    let mut monitor = |_s: f64, y: &DVector<f64>| {
        let mut vv = 0.0;
        let mut qq = 0.0;
        for i in 0..n {
            vv += eps_m[i] * y[n + i] * y[n + i];
            qq += eps_m[i] * y[i] * y[i];
        }
        drift = drift.max((vv - norm0).abs());
        cdrift = cdrift.max((qq - level).abs());
    };

    let raw = integrate_raw(&f, y0, state0.s, s_len, opts.tol, opts.sampling, &mut monitor)?;
    let samples: Vec<GeodesicState> = raw
        .states
        .iter()
        .map(|(s, y)| split_state(n, *s, y))
        .collect();
    let norms: Vec<f64> = samples
        .iter()
        .map(|st| eps_dot(&eps, &st.velocity, &st.velocity))
        .collect();
    let termination = match raw.termination {
        RawTermination::Budget => Termination::BudgetReached { s: raw.final_s },
        RawTermination::Escape => Termination::DomainEscape {
            s: raw.final_s,
            last_inside: Box::new(split_state(n, raw.final_s, &raw.final_state)),
        },
        RawTermination::Underflow => Termination::StepUnderflow { s: raw.final_s },
    };
    Ok(Trajectory {
        samples,
        norms,
        termination,
        norm_drift: drift,
        first_integrals: None,
        integral_drift: None,
        constraint_drift: Some(cdrift),
    })
}

/// Evaluate the conserved field combination along the trajectory, filling
/// the per-sample values and returning the drift from the initial value.
pub fn attach_first_integral(
    traj: &mut Trajectory,
    chart: &Chart,
    field: &ScalarField,
) -> Result<f64, GeomError> {
    let mut values = Vec::with_capacity(traj.samples.len());
    for st in &traj.samples {
        values.push(field.first_integral(chart, st.position.as_slice())?);
    }
    let drift = values
        .iter()
        .map(|v| (v - values[0]).abs())
        .fold(0.0f64, f64::max);
    traj.first_integrals = Some(values);
    traj.integral_drift = Some(drift);
    Ok(drift)
}

/// Causal class of a geodesic, as the sign constant `C` of its velocity:
/// `+1` spacelike, `-1` timelike, `0` lightlike.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalClass {
    Spacelike,
    Timelike,
    Lightlike,
}

impl CausalClass {
    pub fn c(self) -> f64 {
        match self {
            CausalClass::Spacelike => 1.0,
            CausalClass::Timelike => -1.0,
            CausalClass::Lightlike => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CausalClass::Spacelike => "spacelike",
            CausalClass::Timelike => "timelike",
            CausalClass::Lightlike => "lightlike",
        }
    }
}

impl From<VectorType> for CausalClass {
    fn from(t: VectorType) -> CausalClass {
        match t {
            VectorType::Spacelike => CausalClass::Spacelike,
            VectorType::Timelike => CausalClass::Timelike,
            VectorType::Null => CausalClass::Lightlike,
        }
    }
}

/// Norm of the base-directed part of a warped-model geodesic velocity at
/// warping value `alpha`, from the conservation relation
/// `|X|^2 = alpha0^2 (|X0|^2 - C) / alpha^2 + C`.
pub fn norm_evolution(alpha0: f64, x0_sq: f64, c: f64, alpha: f64) -> f64 {
    alpha0 * alpha0 * (x0_sq - c) / (alpha * alpha) + c
}

/// Tanh-sinh quadrature on (a, b); handles integrable inverse-square-root
/// endpoint singularities, sampling double-exponentially close to the ends.
/// The integrand receives its distance from each endpoint, so it can stay
/// cancellation-free instead of reconstructing `b - x` near a singularity.
fn tanh_sinh<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, GeomError>
where
    F: Fn(f64, f64) -> Result<f64, GeomError>,
{
    let hw = 0.5 * (b - a);
    if !(hw > 0.0) {
        return Err(GeomError::Invalid("empty quadrature interval".into()));
    }
    let width = 2.0 * hw;
    let eval_node = |u: f64| -> Option<(f64, f64, f64)> {
        let z = std::f64::consts::FRAC_PI_2 * u.sinh();
        // Distance from the near endpoint, cancellation-free:
        // 1 - tanh|z| = 2 / (e^{2|z|} + 1).
        let d = width / ((2.0 * z.abs()).exp() + 1.0);
        let w = std::f64::consts::FRAC_PI_2 * u.cosh() / z.cosh().powi(2) * hw;
        if d == 0.0 || w == 0.0 || !w.is_finite() {
            return None;
        }
        if z >= 0.0 {
            Some((width - d, d, w))
        } else {
            Some((d, width - d, w))
        }
    };

    let mut prev = f64::NAN;
    for level in 1..=12u32 {
        let h = 0.5f64.powi(level as i32 - 1);
        let mut sum = 0.0;
        let mut j = 0i64;
        loop {
            let u = h * j as f64;
            let mut dead_both = true;
            for sign in [1.0, -1.0] {
                if j == 0 && sign < 0.0 {
                    continue;
                }
                if let Some((from_a, from_b, w)) = eval_node(sign * u) {
                    sum += w * f(from_a, from_b)?;
                    dead_both = false;
                }
            }
            if dead_both || u > 7.0 {
                break;
            }
            j += 1;
        }
        let integral = h * sum;
        if level > 2 && (integral - prev).abs() <= tol * integral.abs().max(1e-30) {
            return Ok(integral);
        }
        prev = integral;
    }
    Ok(prev)
}

/// Affine parameter needed to travel from base coordinate `t0` down to `t`
/// on the metric `-dt^2 + e^{2 sqrt(kappa) t} g_F`, for a geodesic of class
/// constant `c` with initial base speed `tdot0`:
/// `s = integral of alpha dtau / sqrt(alpha(t0)^2 (tdot0^2 + c) - c alpha(tau)^2)`.
///
/// `t` may be `-inf`; the exponentially vanishing tail is truncated below
/// machine precision.
pub fn affine_time(kappa: f64, t0: f64, tdot0: f64, c: f64, t: f64) -> Result<f64, GeomError> {
    if !(kappa > 0.0) {
        return Err(GeomError::Invalid("affine-time bound requires kappa > 0".into()));
    }
    if !(t < t0) {
        return Err(GeomError::Invalid("target coordinate must lie below the start".into()));
    }
    let rk = kappa.sqrt();
    if c == 0.0 && tdot0 == 0.0 {
        return Err(GeomError::Invalid(
            "lightlike bound needs nonzero base speed".into(),
        ));
    }
    let t_low = t.max(t0.min(0.0) - 45.0 / rk);
    // In terms of the drop d = t0 - tau, the integrand is
    // e^{-sqrt(k) d} / sqrt(tdot0^2 + c (1 - e^{-2 sqrt(k) d})), which stays
    // accurate arbitrarily close to the singular endpoint d = 0.
    let reduced = |d: f64| tdot0 * tdot0 - c * (-2.0 * rk * d).exp_m1();
    if reduced(t0 - t_low) <= 0.0 {
        return Err(GeomError::Numerical(
            "turning point inside the integration range".into(),
        ));
    }
    tanh_sinh(
        |_from_a, from_b| {
            let r = reduced(from_b);
            if r <= 0.0 {
                return Err(GeomError::Numerical(
                    "turning point inside the integration range".into(),
                ));
            }
            Ok((-rk * from_b).exp() / r.sqrt())
        },
        t_low,
        t0,
        1e-10,
    )
}

/// Closed-form distance to the boundary of the `alpha = e^{sqrt(kappa) t}`
/// model for a geodesic launched at the warping value 1 (`t0 = 0`).
/// Lightlike takes the base speed `v > 0`, timelike requires `|tdot0| > 1`,
/// spacelike accepts any `tdot0`.
pub fn boundary_distances(kappa: f64, w: f64, class: CausalClass) -> Result<f64, GeomError> {
    if !(kappa > 0.0) {
        return Err(GeomError::Invalid("boundary distance requires kappa > 0".into()));
    }
    let rk = kappa.sqrt();
    match class {
        CausalClass::Lightlike => {
            if !(w > 0.0) {
                return Err(GeomError::Invalid(
                    "lightlike boundary distance needs v > 0".into(),
                ));
            }
            Ok(1.0 / (rk * w))
        }
        CausalClass::Timelike => {
            let a = w.abs();
            if a <= 1.0 {
                return Err(GeomError::Invalid(
                    "timelike geodesic with |tdot0| <= 1 never reaches the boundary".into(),
                ));
            }
            Ok(((a + 1.0) / (a - 1.0)).ln() * 0.5 / rk)
        }
        CausalClass::Spacelike => Ok((1.0 / (w * w + 1.0).sqrt()).asin() / rk),
    }
}

#[derive(Clone, Debug)]
pub struct EscapeRecord {
    pub index: usize,
    /// +1 for the forward run, -1 for the reversed-velocity run.
    pub direction: i8,
    pub class: CausalClass,
    pub s_star: f64,
    pub underflow: bool,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct ProbeSummary {
    pub total: usize,
    /// Geodesics that exhausted the budget in both directions.
    pub complete: usize,
    pub complete_fraction: f64,
    pub escapes: Vec<EscapeRecord>,
}

/// Runs every initial condition forward and backward up to `s_budget` and
/// reports which ones leave the manifold at finite parameter.
pub fn completeness_probe(
    chart: &Chart,
    ics: &[GeodesicState],
    s_budget: f64,
    tol: f64,
) -> Result<ProbeSummary, GeomError> {
    let opts = IntegrateOptions {
        tol,
        sampling: Sampling::Endpoints,
    };
    let runs: Vec<(usize, i8, Termination, CausalClass)> = ics
        .par_iter()
        .enumerate()
        .flat_map(|(i, ic)| [(i, 1i8, ic), (i, -1i8, ic)])
        .map(|(i, dir, ic)| -> Result<_, GeomError> {
            let g = chart.metric_at(ic.position.as_slice())?;
            let class: CausalClass =
                classify_with_metric(&g, &ic.velocity, crate::tensor::DEFAULT_CENSUS_TOL).into();
            let state = GeodesicState {
                s: 0.0,
                position: ic.position.clone(),
                velocity: f64::from(dir) * &ic.velocity,
            };
            let traj = integrate(chart, &state, s_budget, &opts)?;
            Ok((i, dir, traj.termination, class))
        })
        .collect::<Result<_, _>>()?;

    let mut incomplete = vec![false; ics.len()];
    let mut escapes = Vec::new();
    for (i, dir, term, class) in runs {
        match term {
            Termination::BudgetReached { .. } => {}
            Termination::DomainEscape { s, .. } => {
                incomplete[i] = true;
                escapes.push(EscapeRecord {
                    index: i,
                    direction: dir,
                    class,
                    s_star: s,
                    underflow: false,
                    position: ics[i].position.clone(),
                    velocity: f64::from(dir) * &ics[i].velocity,
                });
            }
            Termination::StepUnderflow { s } => {
                incomplete[i] = true;
                escapes.push(EscapeRecord {
                    index: i,
                    direction: dir,
                    class,
                    s_star: s,
                    underflow: true,
                    position: ics[i].position.clone(),
                    velocity: f64::from(dir) * &ics[i].velocity,
                });
            }
        }
    }
    let complete = incomplete.iter().filter(|b| !**b).count();
    Ok(ProbeSummary {
        total: ics.len(),
        complete,
        complete_fraction: complete as f64 / ics.len().max(1) as f64,
        escapes,
    })
}

/// Seeded initial conditions with uniform velocity components, for probing
/// models without a preferred causal split.
pub fn random_initial_conditions(
    chart: &Chart,
    count: usize,
    seed: u64,
) -> Result<Vec<GeodesicState>, GeomError> {
    let pts = chart.sample_points(count, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let n = chart.dim();
    Ok(pts
        .into_iter()
        .map(|p| {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            GeodesicState::new(0.0, p, v)
        })
        .collect())
}

/// Seeded initial conditions on a Lorentzian chart cycling through the
/// three causal classes, built from a metric eigenframe at each point.
pub fn class_targeted_conditions(
    chart: &Chart,
    count: usize,
    seed: u64,
) -> Result<Vec<GeodesicState>, GeomError> {
    if chart.signature().neg != 1 {
        return Err(GeomError::Invalid(
            "class-targeted conditions need a Lorentzian chart".into(),
        ));
    }
    let n = chart.dim();
    let pts = chart.sample_points(count, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517cc1b727220a95);
    let mut out = Vec::with_capacity(count);
    for (idx, p) in pts.into_iter().enumerate() {
        let g = chart.metric_at(&p)?;
        let eig = g.clone().symmetric_eigen();
        let mut neg_axis = None;
        let mut pos_axes = Vec::new();
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < 0.0 {
                neg_axis = Some(i);
            } else {
                pos_axes.push(i);
            }
        }
        let Some(ni) = neg_axis else {
            return Err(GeomError::Numerical(
                "no negative metric direction found at a sample".into(),
            ));
        };
        let lam_n = eig.eigenvalues[ni];
        let e_minus = eig.eigenvectors.column(ni) / (-lam_n).sqrt();
        // Random unit spacelike combination of the positive eigenvectors.
        let mut u = DVector::zeros(n);
        let mut uu = 0.0;
        for &i in &pos_axes {
            let cff: f64 = rng.random_range(-1.0..1.0);
            u += cff * eig.eigenvectors.column(i);
            uu += cff * cff * eig.eigenvalues[i];
        }
        if uu < 1e-12 {
            u = eig.eigenvectors.column(pos_axes[0]).into_owned();
            uu = eig.eigenvalues[pos_axes[0]];
        }
        u /= uu.sqrt();
        let rho: f64 = rng.random_range(0.6..1.6);
        let t_sign = if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { -1.0 };
        let (a, b) = match idx % 3 {
            0 => ((rho * rho + 1.0).sqrt(), rho), // timelike, norm -1
            1 => (rho, rho),                      // lightlike
            _ => (rho, (rho * rho + 1.0).sqrt()), // spacelike, norm +1
        };
        let v = t_sign * a * &e_minus + b * &u;
        out.push(GeodesicState {
            s: 0.0,
            position: DVector::from_vec(p),
            velocity: v,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::manifold::{restrict_linear, unbounded_box, MetricModel};

    fn exp_warp_model() -> MetricModel {
        MetricModel::Warped {
            base_sign: -1,
            alpha: Expression::parse("exp(t)", 1).unwrap(),
            t_interval: (-16.0, 16.0),
            fiber: Box::new(MetricModel::Flat {
                signature: Signature::new(0, 2),
                bounds: unbounded_box(2),
            }),
        }
    }

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let chart = MetricModel::Flat {
            signature: Signature::new(0, 2),
            bounds: vec![(-10.0, 10.0); 2],
        }
        .chart()
        .unwrap();
        let state = GeodesicState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.0]);
        let traj = integrate(&chart, &state, 5.0, &IntegrateOptions::default()).unwrap();
        assert!(traj.termination.is_budget());
        let last = traj.samples.last().unwrap();
        assert!((last.position[0] - 5.0).abs() < 1e-10);
        assert!(last.position[1].abs() < 1e-12);
        assert!(traj.norm_drift < 1e-10);
        assert_eq!(traj.samples.len(), 501);
        for w in traj.samples.windows(2) {
            assert!(w[1].s > w[0].s);
        }
    }

    #[test]
    fn ambient_great_circle_returns_home() {
        let amb = Signature::new(0, 3);
        let state =
            GeodesicState::new(0.0, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
        let traj = integrate_ambient(
            amb,
            1.0,
            &state,
            2.0 * std::f64::consts::PI,
            &IntegrateOptions::default(),
        )
        .unwrap();
        let mut worst = 0.0f64;
        for st in &traj.samples {
            let expect = [st.s.cos(), st.s.sin(), 0.0];
            for i in 0..3 {
                worst = worst.max((st.position[i] - expect[i]).abs());
            }
        }
        assert!(worst < 1e-7, "closed-form deviation {worst}");
        let last = traj.samples.last().unwrap();
        assert!((last.position[0] - 1.0).abs() < 1e-6);
        assert!(last.position[1].abs() < 1e-6);
        assert!(traj.constraint_drift.unwrap() < 1e-8);
    }

    #[test]
    fn ambient_hyperbolic_and_null_orbits() {
        let amb = Signature::new(1, 2);
        // Timelike unit velocity: cosh/sinh orbit.
        let state = GeodesicState::new(0.0, vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]);
        let traj =
            integrate_ambient(amb, 1.0, &state, 2.0, &IntegrateOptions::default()).unwrap();
        let last = traj.samples.last().unwrap();
        let s = last.s;
        assert!((last.position[0] - s.sinh()).abs() < 1e-6);
        assert!((last.position[1] - s.cosh()).abs() < 1e-6);
        assert!(last.position[2].abs() < 1e-9);

        // Null velocity: straight line staying on the quadric.
        let state = GeodesicState::new(0.0, vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]);
        let traj =
            integrate_ambient(amb, 1.0, &state, 3.0, &IntegrateOptions::default()).unwrap();
        let last = traj.samples.last().unwrap();
        assert!((last.position[0] - 3.0).abs() < 1e-8);
        assert!((last.position[1] - 3.0).abs() < 1e-8);
        assert!(traj.constraint_drift.unwrap() < 1e-9);
    }

    #[test]
    fn chart_and_ambient_integration_agree_on_de_sitter() {
        let model = crate::manifold::tests::de_sitter();
        let chart = model.chart().unwrap();
        let x = [0.3, 0.2];
        let v = DVector::from_vec(vec![0.4, 0.5]);
        let state = GeodesicState::new(0.0, x.to_vec(), v.as_slice().to_vec());
        let traj = integrate(&chart, &state, 0.6, &IntegrateOptions::default()).unwrap();

        let p_amb = chart.quadric_embed(&x).unwrap();
        let v_amb = chart.quadric_push(&x, &v).unwrap();
        let qd = chart.quadric().unwrap();
        let state_amb = GeodesicState {
            s: 0.0,
            position: p_amb,
            velocity: v_amb,
        };
        let traj_amb = integrate_ambient(
            qd.ambient,
            qd.level,
            &state_amb,
            0.6,
            &IntegrateOptions::default(),
        )
        .unwrap();

        assert_eq!(traj.samples.len(), traj_amb.samples.len());
        let mut worst = 0.0f64;
        for (a, b) in traj.samples.iter().zip(&traj_amb.samples) {
            assert!((a.s - b.s).abs() < 1e-12);
            let emb = chart.quadric_embed(a.position.as_slice()).unwrap();
            worst = worst.max((emb - &b.position).amax());
        }
        assert!(worst < 1e-6, "chart vs ambient deviation {worst}");
    }

    #[test]
    fn timelike_plunge_escapes_at_log_two() {
        let chart = exp_warp_model().chart().unwrap();
        // |v|^2 = -tdot^2 + alpha^2 |V|^2 = -25/9 + 16/9 = -1 at t = 0.
        let state = GeodesicState::new(
            0.0,
            vec![0.0, 0.0, 0.0],
            vec![-5.0 / 3.0, 4.0 / 3.0, 0.0],
        );
        let opts = IntegrateOptions {
            tol: 1e-10,
            sampling: Sampling::Endpoints,
        };
        let traj = integrate(&chart, &state, 5.0, &opts).unwrap();
        match &traj.termination {
            Termination::DomainEscape { s, last_inside } => {
                assert!(
                    (s - std::f64::consts::LN_2).abs() < 1e-4,
                    "escape at {s}, expected ln 2"
                );
                assert!(last_inside.position[0] < -15.9, "t = {}", last_inside.position[0]);
            }
            other => panic!("expected domain escape, got {other:?}"),
        }
    }

    #[test]
    fn norm_evolution_closed_form() {
        assert!((norm_evolution(1.0, 1.0, 0.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((norm_evolution(1.3, 0.7, -1.0, 1.3) - 0.7).abs() < 1e-15);
        for alpha in [0.5, 1.0, 2.0, 7.0] {
            assert!((norm_evolution(1.0, 1.0, 1.0, alpha) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_time_matches_boundary_distances() {
        // Lightlike, v = tdot0 = 2 at t0 = 0.
        let s = affine_time(1.0, 0.0, 2.0, 0.0, f64::NEG_INFINITY).unwrap();
        assert!((s - 0.5).abs() < 1e-9, "lightlike {s}");
        assert!(
            (boundary_distances(1.0, 2.0, CausalClass::Lightlike).unwrap() - 0.5).abs() < 1e-15
        );

        // Timelike with |tdot0| = 5/3.
        let s = affine_time(1.0, 0.0, 5.0 / 3.0, -1.0, f64::NEG_INFINITY).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-9, "timelike {s}");
        let d = boundary_distances(1.0, -5.0 / 3.0, CausalClass::Timelike).unwrap();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-15);

        // Spacelike turning point launched flat: quarter period.
        let s = affine_time(1.0, 0.0, 0.0, 1.0, f64::NEG_INFINITY).unwrap();
        assert!((s - std::f64::consts::FRAC_PI_2).abs() < 1e-9, "spacelike {s}");
        let d = boundary_distances(1.0, 0.0, CausalClass::Spacelike).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-15);

        // Timelike without a turning-point-free path: rejected.
        assert!(boundary_distances(1.0, 0.8, CausalClass::Timelike).is_err());
        assert!(affine_time(1.0, 0.0, 0.8, -1.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn boundary_distance_scaling_laws() {
        for lam in [0.5, 2.0, 10.0] {
            let d1 = boundary_distances(1.0, 2.0, CausalClass::Lightlike).unwrap();
            let d2 = boundary_distances(1.0, 2.0 * lam, CausalClass::Lightlike).unwrap();
            assert!((d2 - d1 / lam).abs() < 1e-10);
            // Timelike and spacelike bounds depend only on tdot0, which is
            // unchanged under affine velocity rescaling.
            let t1 = boundary_distances(1.0, 1.7, CausalClass::Timelike).unwrap();
            assert!((t1 - boundary_distances(1.0, 1.7, CausalClass::Timelike).unwrap()).abs()
                < 1e-15);
        }
    }

    #[test]
    fn reparametrized_geodesics_land_at_the_same_point() {
        let model = MetricModel::Warped {
            base_sign: 1,
            alpha: Expression::parse("2+sin(t)", 1).unwrap(),
            t_interval: (-50.0, 50.0),
            fiber: Box::new(MetricModel::Flat {
                signature: Signature::new(0, 2),
                bounds: unbounded_box(2),
            }),
        };
        let chart = model.chart().unwrap();
        let opts = IntegrateOptions {
            tol: 1e-10,
            sampling: Sampling::Endpoints,
        };
        let base = GeodesicState::new(0.0, vec![0.2, 0.1, -0.3], vec![0.7, 0.4, 0.2]);
        let end = integrate(&chart, &base, 2.0, &opts).unwrap();
        for lam in [0.5, 2.0] {
            let scaled = GeodesicState {
                s: 0.0,
                position: base.position.clone(),
                velocity: lam * &base.velocity,
            };
            let end_s = integrate(&chart, &scaled, 2.0 / lam, &opts).unwrap();
            let d = (&end.samples.last().unwrap().position
                - &end_s.samples.last().unwrap().position)
                .amax();
            assert!(d < 1e-7, "reparametrization mismatch {d} at lambda {lam}");
        }
    }

    #[test]
    fn bounded_warping_keeps_geodesics_complete() {
        let model = MetricModel::Warped {
            base_sign: 1,
            alpha: Expression::parse("2+sin(t)", 1).unwrap(),
            t_interval: (-1e6, 1e6),
            fiber: Box::new(MetricModel::Flat {
                signature: Signature::new(0, 2),
                bounds: unbounded_box(2),
            }),
        };
        let chart = model.chart().unwrap();
        let ics = random_initial_conditions(&chart, 6, 5).unwrap();
        let summary = completeness_probe(&chart, &ics, 10.0, 1e-10).unwrap();
        assert_eq!(summary.complete, 6);
        assert!(summary.escapes.is_empty());
        assert!((summary.complete_fraction - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_warp_spacelike_probes_escape_both_ways() {
        let chart = exp_warp_model().chart().unwrap();
        let ics: Vec<GeodesicState> = class_targeted_conditions(&chart, 9, 11)
            .unwrap()
            .into_iter()
            .skip(2)
            .step_by(3)
            .collect();
        assert!(!ics.is_empty());
        let summary = completeness_probe(&chart, &ics, 20.0, 1e-10).unwrap();
        assert_eq!(summary.complete, 0);
        for (i, _) in ics.iter().enumerate() {
            for dir in [1i8, -1] {
                assert!(
                    summary
                        .escapes
                        .iter()
                        .any(|e| e.index == i && e.direction == dir),
                    "missing escape for ic {i} direction {dir}"
                );
            }
        }
        for e in &summary.escapes {
            assert_eq!(e.class, CausalClass::Spacelike);
        }
    }

    #[test]
    fn first_integral_rides_along_geodesics() {
        let model = crate::manifold::tests::de_sitter();
        let chart = model.chart().unwrap();
        let omega = restrict_linear(&model, &[0.0, 1.0, 0.0]).unwrap();
        let field = ScalarField::new(omega, 1.0);
        let state = GeodesicState::new(0.0, vec![0.1, 0.3], vec![0.5, -0.2]);
        let mut traj = integrate(&chart, &state, 1.5, &IntegrateOptions::default()).unwrap();
        let drift = attach_first_integral(&mut traj, &chart, &field).unwrap();
        assert!(drift < 1e-7, "integral drift {drift}");
        let values = traj.first_integrals.as_ref().unwrap();
        assert_eq!(values.len(), traj.samples.len());
        assert!((values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn class_targeted_conditions_hit_all_classes() {
        let chart = exp_warp_model().chart().unwrap();
        let ics = class_targeted_conditions(&chart, 9, 3).unwrap();
        let mut seen = [false; 3];
        for ic in &ics {
            let g = chart.metric_at(ic.position.as_slice()).unwrap();
            let nv = linalg::bilinear(&g, &ic.velocity, &ic.velocity);
            if nv < -0.5 {
                assert!((nv + 1.0).abs() < 1e-10);
                seen[0] = true;
            } else if nv > 0.5 {
                assert!((nv - 1.0).abs() < 1e-10);
                seen[2] = true;
            } else {
                assert!(nv.abs() < 1e-10);
                seen[1] = true;
            }
        }
        assert!(seen.iter().all(|s| *s), "classes seen: {seen:?}");
    }
}

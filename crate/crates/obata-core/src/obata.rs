//! Classification of the field equation by the signs of its two constants,
//! closed-form one-dimensional profiles, builders for verified model
//! instances, and numerical checks of the level-set foliation identities.

use crate::expr::{Expression, Jet2, UnaryOp};
use crate::geodesic::{integrate, integrate_ambient, GeodesicState, IntegrateOptions, Sampling};
use crate::linalg;
use crate::manifold::{
    restrict_linear, Bounds, Branch, Chart, GeomError, MetricModel, QuadricChart, Signature,
};
use crate::tensor::{
    christoffel_core, metric_from_jets, obata_verify, sectional, warped_fiber_sectional,
    ObataReport, ScalarField, VerifyOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Residual ceiling every constructed instance must satisfy.
pub const INSTANCE_RESIDUAL_TOL: f64 = 1e-8;
/// Allowed spread of the first integral around its expected constant.
pub const INSTANCE_SPREAD_TOL: f64 = 1e-7;
/// Allowed deviation of a supplied fiber's sectional curvature from the
/// constant the construction requires.
pub const FIBER_CURVATURE_TOL: f64 = 1e-4;

const INSTANCE_SEED: u64 = 40;
const INSTANCE_SAMPLES: usize = 100;

fn invalid<T>(msg: impl Into<String>) -> Result<T, GeomError> {
    Err(GeomError::Invalid(msg.into()))
}

// ---------------------------------------------------------------------------
// Case classification
// ---------------------------------------------------------------------------

/// Sign of a constant after thresholding at a tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(v: f64, tol: f64) -> Sign {
        if v > tol {
            Sign::Positive
        } else if v < -tol {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Negative => "-",
            Sign::Zero => "0",
            Sign::Positive => "+",
        }
    }
}

/// Causal type of the gradient, as pinned down by the signs of the two
/// constants alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaType {
    Spacelike,
    Timelike,
    Null,
    TimelikeOrNull,
    SpacelikeOrNull,
    /// The type varies from point to point within one solution.
    Depends,
}

impl OmegaType {
    pub fn name(self) -> &'static str {
        match self {
            OmegaType::Spacelike => "spacelike",
            OmegaType::Timelike => "timelike",
            OmegaType::Null => "null",
            OmegaType::TimelikeOrNull => "timelike or null",
            OmegaType::SpacelikeOrNull => "spacelike or null",
            OmegaType::Depends => "depends",
        }
    }

    /// Exchange the roles of time and space.
    pub fn swapped(self) -> OmegaType {
        match self {
            OmegaType::Spacelike => OmegaType::Timelike,
            OmegaType::Timelike => OmegaType::Spacelike,
            OmegaType::TimelikeOrNull => OmegaType::SpacelikeOrNull,
            OmegaType::SpacelikeOrNull => OmegaType::TimelikeOrNull,
            other => other,
        }
    }
}

/// Global structure the sign pair forces on the manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    ConstantCurvature,
    WarpedSplit,
    AsymptoticallyFlatSplit,
    DirectProduct,
    NullKilling,
}

impl Structure {
    pub fn tag(self) -> &'static str {
        match self {
            Structure::ConstantCurvature => "constant-curvature",
            Structure::WarpedSplit => "warped-split",
            Structure::AsymptoticallyFlatSplit => "asymptotically-flat-split",
            Structure::DirectProduct => "direct-product",
            Structure::NullKilling => "null-killing",
        }
    }
}

/// Range the field can take on a geodesically complete manifold whose metric
/// is positive definite, or the statement that no such metric exists for the
/// sign pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RiemannianRange {
    Impossible,
    /// Closed interval `[-bound, bound]`.
    Bounded { bound: f64 },
    /// `|w| >= threshold`, one of the two rays.
    Outside { threshold: f64 },
    /// One sign of `w` only, exponential profile approaching zero.
    HalfLine,
    AllReals,
}

impl RiemannianRange {
    pub fn describe(&self) -> String {
        match self {
            RiemannianRange::Impossible => "impossible-riemannian".into(),
            RiemannianRange::Bounded { bound } => format!("[-{bound:.6}, {bound:.6}]"),
            RiemannianRange::Outside { threshold } => format!("|w| >= {threshold:.6}"),
            RiemannianRange::HalfLine => "one sign of w, reaching 0 only in the limit".into(),
            RiemannianRange::AllReals => "all reals".into(),
        }
    }
}

/// Everything the signs of the two constants determine.
#[derive(Clone, Debug)]
pub struct CaseLabel {
    pub kappa_sign: Sign,
    pub h_sign: Sign,
    pub omega_type: OmegaType,
    pub structure: Structure,
    pub riemannian: RiemannianRange,
}

/// Classify a `(kappa, h)` pair. Signs are thresholded at `tol`.
pub fn classify_case(kappa: f64, h: f64, tol: f64) -> CaseLabel {
    use OmegaType::*;
    use Sign::*;
    let ks = Sign::of(kappa, tol);
    let hs = Sign::of(h, tol);
    let (omega_type, structure, riemannian) = match (ks, hs) {
        (Positive, Positive) => (
            Depends,
            Structure::ConstantCurvature,
            RiemannianRange::Bounded { bound: (h / kappa).sqrt() },
        ),
        (Positive, Negative) => (Timelike, Structure::WarpedSplit, RiemannianRange::Impossible),
        (Positive, Zero) => (
            TimelikeOrNull,
            Structure::AsymptoticallyFlatSplit,
            RiemannianRange::Impossible,
        ),
        (Negative, Positive) => (Spacelike, Structure::WarpedSplit, RiemannianRange::AllReals),
        (Negative, Negative) => (
            Depends,
            Structure::ConstantCurvature,
            RiemannianRange::Outside { threshold: (h / kappa).sqrt() },
        ),
        (Negative, Zero) => (
            SpacelikeOrNull,
            Structure::AsymptoticallyFlatSplit,
            RiemannianRange::HalfLine,
        ),
        (Zero, Positive) => (Spacelike, Structure::DirectProduct, RiemannianRange::AllReals),
        (Zero, Negative) => (Timelike, Structure::DirectProduct, RiemannianRange::Impossible),
        (Zero, Zero) => (Null, Structure::NullKilling, RiemannianRange::Impossible),
    };
    CaseLabel { kappa_sign: ks, h_sign: hs, omega_type, structure, riemannian }
}

// ---------------------------------------------------------------------------
// Closed-form profiles
// ---------------------------------------------------------------------------

/// The five closed forms solving `f'' = -kappa f` with `(f')^2 + kappa f^2 = h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolutionBranch {
    /// `sqrt(h/k) cos(sqrt(k) t)` for `k > 0, h > 0`.
    Cosine,
    /// `sqrt(h/|k|) sinh(sqrt(|k|) t)` for `k < 0, h > 0`.
    HyperbolicSine,
    /// `sqrt(|h|/|k|) cosh(sqrt(|k|) t)` for `k < 0, h < 0`.
    HyperbolicCosine,
    /// `|k|^(-1/2) e^(sqrt(|k|) t)` for `k < 0, h = 0`.
    Exponential,
    /// `sqrt(h) t` for `k = 0, h > 0`.
    Linear,
}

impl SolutionBranch {
    pub fn of(kappa: f64, h: f64) -> Result<SolutionBranch, GeomError> {
        if kappa > 0.0 && h > 0.0 {
            Ok(SolutionBranch::Cosine)
        } else if kappa < 0.0 && h > 0.0 {
            Ok(SolutionBranch::HyperbolicSine)
        } else if kappa < 0.0 && h < 0.0 {
            Ok(SolutionBranch::HyperbolicCosine)
        } else if kappa < 0.0 && h == 0.0 {
            Ok(SolutionBranch::Exponential)
        } else if kappa == 0.0 && h > 0.0 {
            Ok(SolutionBranch::Linear)
        } else {
            invalid(format!(
                "no closed-form profile for kappa = {kappa}, h = {h}"
            ))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolutionBranch::Cosine => "cosine",
            SolutionBranch::HyperbolicSine => "hyperbolic-sine",
            SolutionBranch::HyperbolicCosine => "hyperbolic-cosine",
            SolutionBranch::Exponential => "exponential",
            SolutionBranch::Linear => "linear",
        }
    }
}

/// Evaluate the closed-form profile for the pair at `t`.
pub fn closed_form_f(kappa: f64, h: f64, t: f64) -> Result<f64, GeomError> {
    let rate = kappa.abs().sqrt();
    Ok(match SolutionBranch::of(kappa, h)? {
        SolutionBranch::Cosine => (h / kappa).sqrt() * (rate * t).cos(),
        SolutionBranch::HyperbolicSine => (h / -kappa).sqrt() * (rate * t).sinh(),
        SolutionBranch::HyperbolicCosine => (h / kappa).sqrt() * (rate * t).cosh(),
        SolutionBranch::Exponential => (rate * t).exp() / rate,
        SolutionBranch::Linear => h.sqrt() * t,
    })
}

/// A closed-form profile together with the warping function it induces on
/// the corresponding split model. `alpha` is the positive representative of
/// `|f'|`, so `alpha^2 = h - kappa f^2` on the stated interval.
#[derive(Clone, Debug)]
pub struct SolutionFamily {
    pub branch: SolutionBranch,
    pub kappa: f64,
    pub h: f64,
    /// The profile as a function of the single variable `x0 = t`.
    pub f: Expression,
    /// `|f'|`, positive on `t_interval`.
    pub alpha: Expression,
    /// Interval on which `alpha` stays positive (trimmed at the ends).
    pub t_interval: (f64, f64),
}

/// `c * op(rate * t)` as a one-variable expression.
fn wave(c: f64, op: UnaryOp, rate: f64) -> Expression {
    Expression::scaled(
        c,
        Expression::apply(op, Expression::scaled(rate, Expression::var(1, 0))),
    )
}

/// Build the closed-form family for the pair.
pub fn solution_family(kappa: f64, h: f64) -> Result<SolutionFamily, GeomError> {
    let branch = SolutionBranch::of(kappa, h)?;
    let rate = kappa.abs().sqrt();
    let (f, alpha, t_interval) = match branch {
        SolutionBranch::Cosine => (
            wave((h / kappa).sqrt(), UnaryOp::Cos, rate),
            wave(h.sqrt(), UnaryOp::Sin, rate),
            (0.05 / rate, (PI - 0.05) / rate),
        ),
        SolutionBranch::HyperbolicSine => (
            wave((h / -kappa).sqrt(), UnaryOp::Sinh, rate),
            wave(h.sqrt(), UnaryOp::Cosh, rate),
            (-4.0 / rate, 4.0 / rate),
        ),
        SolutionBranch::HyperbolicCosine => (
            wave((h / kappa).sqrt(), UnaryOp::Cosh, rate),
            wave((-h).sqrt(), UnaryOp::Sinh, rate),
            (0.05 / rate, 4.0 / rate),
        ),
        SolutionBranch::Exponential => (
            wave(1.0 / rate, UnaryOp::Exp, rate),
            wave(1.0, UnaryOp::Exp, rate),
            (-4.0 / rate, 4.0 / rate),
        ),
        SolutionBranch::Linear => (
            Expression::scaled(h.sqrt(), Expression::var(1, 0)),
            Expression::constant(1, h.sqrt()),
            (-4.0, 4.0),
        ),
    };
    Ok(SolutionFamily { branch, kappa, h, f, alpha, t_interval })
}

/// Largest normalized violations of the two defining identities on an evenly
/// spaced grid over the family's interval: returns
/// `(max |f'' + k f| / (1+|f|), max |(f')^2 + k f^2 - h| / (1+|h|))`.
pub fn family_identity_errors(
    family: &SolutionFamily,
    points: usize,
) -> Result<(f64, f64), GeomError> {
    let (a, b) = family.t_interval;
    let mut ode = 0.0_f64;
    let mut energy = 0.0_f64;
    for i in 0..points {
        let t = a + (b - a) * i as f64 / (points - 1).max(1) as f64;
        let jet = family.f.eval_jet2(&[t])?;
        let (f, fp, fpp) = (jet.v, jet.g[0], jet.h[(0, 0)]);
        ode = ode.max((fpp + family.kappa * f).abs() / (1.0 + f.abs()));
        energy = energy
            .max((fp * fp + family.kappa * f * f - family.h).abs() / (1.0 + family.h.abs()));
    }
    Ok((ode, energy))
}

/// Observed range of the profile on its grid, for range-consistency checks.
pub fn family_range(family: &SolutionFamily, points: usize) -> Result<(f64, f64), GeomError> {
    let (a, b) = family.t_interval;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..points {
        let t = a + (b - a) * i as f64 / (points - 1).max(1) as f64;
        let v = family.f.eval_value(&[t])?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// Verified instances
// ---------------------------------------------------------------------------

/// The model shapes the classification realizes, named by their warping
/// profile or product structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstanceKind {
    /// `dt^2 + h sin^2(sqrt(k) t) g_F`, field `sqrt(h/k) cos(sqrt(k) t)`;
    /// needs `k > 0, h > 0` and a fiber of constant curvature `h`.
    SineWarp,
    /// `-dt^2 + h sinh^2(sqrt(k) t) g_F`, field `sqrt(h/k) cosh(sqrt(k) t)`;
    /// needs `k > 0, h > 0` and a fiber of constant curvature `-h`.
    SinhWarp,
    /// `-dt^2 + |h| cosh^2(sqrt(k) t) g_F`, field `sqrt(|h|/k) sinh(sqrt(k) t)`;
    /// needs `k > 0, h < 0`.
    CoshWarp,
    /// `-dt^2 + e^(2 sqrt(k) t) g_F`, field `+k^(-1/2) e^(sqrt(k) t)`;
    /// needs `k > 0, h = 0`. One of the two mirrored halves.
    ExpHalfPlus,
    /// Same model with field `-k^(-1/2) e^(sqrt(k) t)`.
    ExpHalfMinus,
    /// `dt^2 + h g_F`, field `sqrt(h) t`; needs `k = 0, h > 0`.
    SpaceProduct,
    /// `-dt^2 + |h| g_F`, field `sqrt(|h|) t`; needs `k = 0, h < 0`.
    TimeProduct,
    /// Four-dimensional metric with a null Killing gradient; `k = 0, h = 0`.
    NullKilling,
    /// Quadric model with one restricted ambient coordinate as the field.
    CoordinateSlice,
}

impl InstanceKind {
    pub fn tag(self) -> &'static str {
        match self {
            InstanceKind::SineWarp => "sine-warp",
            InstanceKind::SinhWarp => "sinh-warp",
            InstanceKind::CoshWarp => "cosh-warp",
            InstanceKind::ExpHalfPlus => "exp-half-plus",
            InstanceKind::ExpHalfMinus => "exp-half-minus",
            InstanceKind::SpaceProduct => "space-product",
            InstanceKind::TimeProduct => "time-product",
            InstanceKind::NullKilling => "null-killing",
            InstanceKind::CoordinateSlice => "coordinate-slice",
        }
    }

    pub fn from_tag(tag: &str) -> Option<InstanceKind> {
        Some(match tag {
            "sine-warp" => InstanceKind::SineWarp,
            "sinh-warp" => InstanceKind::SinhWarp,
            "cosh-warp" => InstanceKind::CoshWarp,
            "exp-half-plus" => InstanceKind::ExpHalfPlus,
            "exp-half-minus" => InstanceKind::ExpHalfMinus,
            "space-product" => InstanceKind::SpaceProduct,
            "time-product" => InstanceKind::TimeProduct,
            "null-killing" => InstanceKind::NullKilling,
            "coordinate-slice" => InstanceKind::CoordinateSlice,
            _ => return None,
        })
    }
}

/// A model plus a field that provably satisfies the equation on it, verified
/// by sampling at construction time.
#[derive(Clone, Debug)]
pub struct InstanceBundle {
    pub kind: InstanceKind,
    pub model: MetricModel,
    pub omega: Expression,
    pub kappa: f64,
    pub expected_h: f64,
    /// The construction-time verification evidence.
    pub report: ObataReport,
}

fn sym_box(n: usize, r: f64) -> Bounds {
    vec![(-r, r); n]
}

/// Promote a one-variable profile of `t` to an `n`-coordinate field of `x0`.
fn lift(e: &Expression, n: usize) -> Expression {
    e.shift_vars(0, n)
}

fn finish_bundle(
    kind: InstanceKind,
    model: MetricModel,
    omega: Expression,
    kappa: f64,
    expected_h: f64,
) -> Result<InstanceBundle, GeomError> {
    let chart = model.chart()?;
    let field = ScalarField::new(omega.clone(), kappa);
    let opts = VerifyOptions { samples: INSTANCE_SAMPLES, seed: INSTANCE_SEED, ..Default::default() };
    let report = obata_verify(&chart, &field, &opts)?;
    if report.max_residual > INSTANCE_RESIDUAL_TOL {
        return Err(GeomError::Numerical(format!(
            "instance self-check failed: residual {:.3e} at {:?}",
            report.max_residual, report.worst_point
        )));
    }
    let mean_gap = (report.first_integral_mean - expected_h).abs();
    if report.first_integral_spread > INSTANCE_SPREAD_TOL || mean_gap > INSTANCE_SPREAD_TOL {
        return Err(GeomError::Numerical(format!(
            "instance self-check failed: first integral {:.12} (spread {:.3e}) vs expected {}",
            report.first_integral_mean, report.first_integral_spread, expected_h
        )));
    }
    Ok(InstanceBundle { kind, model, omega, kappa, expected_h, report })
}

/// Sampled sectional-curvature check of a fiber against a required constant.
fn check_fiber_curvature(fiber: &MetricModel, want: f64) -> Result<(), GeomError> {
    let n = fiber.dim();
    if n < 2 {
        return Ok(());
    }
    let chart = fiber.chart()?;
    let pts = chart.sample_points(24, 91)?;
    let mut checked = 0usize;
    let mut worst = 0.0_f64;
    for p in &pts {
        for a in 0..n {
            for b in a + 1..n {
                let mut u = DVector::zeros(n);
                let mut v = DVector::zeros(n);
                u[a] = 1.0;
                v[b] = 1.0;
                match sectional(&chart, p, &u, &v) {
                    Ok(k) => {
                        checked += 1;
                        worst = worst.max((k - want).abs());
                    }
                    Err(GeomError::Numerical(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if checked < 5 {
        return invalid("too few nondegenerate fiber planes for the curvature check");
    }
    if worst > FIBER_CURVATURE_TOL {
        return invalid(format!(
            "fiber sectional curvature deviates by {worst:.3e} from the required constant {want}"
        ));
    }
    Ok(())
}

/// Default constant-curvature fiber: a quadric of level `1/curv` whose
/// induced signature is `(1,1)` for positive `curv` and `(0,2)` for negative.
fn curved_fiber(curv: f64) -> MetricModel {
    let solved_axis = if curv > 0.0 { 2 } else { 0 };
    MetricModel::Quadric {
        ambient: Signature::new(1, 2),
        level: 1.0 / curv,
        chart: QuadricChart { solved_axis, branch: Branch::Plus },
        bounds: sym_box(2, 2.0),
    }
}

/// Build a verified instance of one of the model shapes. `fiber` defaults to
/// a constant-curvature quadric where the shape requires one and to a flat
/// model otherwise; a supplied fiber is validated against the shape's
/// curvature requirement.
pub fn build_instance(
    kind: InstanceKind,
    kappa: f64,
    h: f64,
    fiber: Option<MetricModel>,
) -> Result<InstanceBundle, GeomError> {
    let rate = kappa.abs().sqrt();
    match kind {
        InstanceKind::SineWarp => {
            if kappa <= 0.0 || h <= 0.0 {
                return invalid("sine-warp needs kappa > 0 and h > 0");
            }
            let fiber = fiber.unwrap_or_else(|| curved_fiber(h));
            check_fiber_curvature(&fiber, h)?;
            let n = fiber.dim() + 1;
            let omega = lift(&wave((h / kappa).sqrt(), UnaryOp::Cos, rate), n);
            let model = MetricModel::Warped {
                base_sign: 1,
                alpha: wave(h.sqrt(), UnaryOp::Sin, rate),
                t_interval: (0.1 / rate, (PI - 0.1) / rate),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, kappa, h)
        }
        InstanceKind::SinhWarp => {
            if kappa <= 0.0 || h <= 0.0 {
                return invalid("sinh-warp needs kappa > 0 and h > 0");
            }
            let fiber = fiber.unwrap_or_else(|| curved_fiber(-h));
            check_fiber_curvature(&fiber, -h)?;
            let n = fiber.dim() + 1;
            let omega = lift(&wave((h / kappa).sqrt(), UnaryOp::Cosh, rate), n);
            let model = MetricModel::Warped {
                base_sign: -1,
                alpha: wave(h.sqrt(), UnaryOp::Sinh, rate),
                t_interval: (0.1 / rate, 3.0 / rate),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, kappa, h)
        }
        InstanceKind::CoshWarp => {
            if kappa <= 0.0 || h >= 0.0 {
                return invalid("cosh-warp needs kappa > 0 and h < 0");
            }
            let fiber = fiber
                .unwrap_or_else(|| MetricModel::Flat { signature: Signature::new(0, 2), bounds: sym_box(2, 10.0) });
            let n = fiber.dim() + 1;
            let omega = lift(&wave((-h / kappa).sqrt(), UnaryOp::Sinh, rate), n);
            let model = MetricModel::Warped {
                base_sign: -1,
                alpha: wave((-h).sqrt(), UnaryOp::Cosh, rate),
                t_interval: (-2.0 / rate, 2.0 / rate),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, kappa, h)
        }
        InstanceKind::ExpHalfPlus | InstanceKind::ExpHalfMinus => {
            if kappa <= 0.0 || h != 0.0 {
                return invalid("the exponential halves need kappa > 0 and h = 0");
            }
            let fiber = fiber
                .unwrap_or_else(|| MetricModel::Flat { signature: Signature::new(0, 2), bounds: sym_box(2, 10.0) });
            let n = fiber.dim() + 1;
            let sign = if kind == InstanceKind::ExpHalfPlus { 1.0 } else { -1.0 };
            let omega = lift(&wave(sign / rate, UnaryOp::Exp, rate), n);
            let model = MetricModel::Warped {
                base_sign: -1,
                alpha: wave(1.0, UnaryOp::Exp, rate),
                t_interval: (-16.0 / rate, 4.0 / rate),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, kappa, 0.0)
        }
        InstanceKind::SpaceProduct => {
            if kappa != 0.0 || h <= 0.0 {
                return invalid("space-product needs kappa = 0 and h > 0");
            }
            let fiber = fiber
                .unwrap_or_else(|| MetricModel::Flat { signature: Signature::new(1, 1), bounds: sym_box(2, 10.0) });
            let n = fiber.dim() + 1;
            let omega = Expression::scaled(h.sqrt(), Expression::var(n, 0));
            let model = MetricModel::Warped {
                base_sign: 1,
                alpha: Expression::constant(1, h.sqrt()),
                t_interval: (-4.0, 4.0),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, 0.0, h)
        }
        InstanceKind::TimeProduct => {
            if kappa != 0.0 || h >= 0.0 {
                return invalid("time-product needs kappa = 0 and h < 0");
            }
            let fiber = fiber
                .unwrap_or_else(|| MetricModel::Flat { signature: Signature::new(0, 2), bounds: sym_box(2, 10.0) });
            let n = fiber.dim() + 1;
            let omega = Expression::scaled((-h).sqrt(), Expression::var(n, 0));
            let model = MetricModel::Warped {
                base_sign: -1,
                alpha: Expression::constant(1, (-h).sqrt()),
                t_interval: (-4.0, 4.0),
                fiber: Box::new(fiber),
            };
            finish_bundle(kind, model, omega, 0.0, h)
        }
        InstanceKind::NullKilling => {
            if kappa != 0.0 || h != 0.0 {
                return invalid("the null-Killing shape needs kappa = 0 and h = 0");
            }
            if fiber.is_some() {
                return invalid("the null-Killing shape has a fixed metric and takes no fiber");
            }
            let zero = || Expression::constant(4, 0.0);
            let mut entries: Vec<Expression> = (0..16).map(|_| zero()).collect();
            entries[0] = Expression::apply(UnaryOp::Sin, Expression::var(4, 0));
            entries[1] = Expression::constant(4, 0.5);
            entries[4] = Expression::constant(4, 0.5);
            entries[10] = Expression::constant(4, 1.0);
            entries[15] = Expression::constant(4, 1.0);
            let model = MetricModel::Custom {
                signature: Signature::new(1, 3),
                entries,
                bounds: sym_box(4, 2.0),
            };
            let omega = Expression::var(4, 0);
            finish_bundle(kind, model, omega, 0.0, 0.0)
        }
        InstanceKind::CoordinateSlice => invalid(
            "coordinate-slice instances are built from a quadric by build_coordinate_slice",
        ),
    }
}

/// Build the quadric `<x, x> = level` and the field obtained by restricting
/// the ambient coordinate `axis` to it. The constants are forced:
/// `kappa = 1/level` and `h` equals the ambient square of the axis direction.
pub fn build_coordinate_slice(
    ambient: Signature,
    level: f64,
    axis: usize,
) -> Result<InstanceBundle, GeomError> {
    let nn = ambient.dim();
    if nn < 3 {
        return invalid("the ambient space must have dimension at least 3");
    }
    if axis >= nn {
        return invalid(format!("axis {axis} out of range for ambient dimension {nn}"));
    }
    if level == 0.0 {
        return invalid("level must be nonzero");
    }
    let eps = ambient.eps();
    // The chart is centered on the axis pole, so the solved coordinate's
    // ambient square must have the sign of the level.
    let solved_axis = (0..nn)
        .rev()
        .find(|&k| k != axis && eps[k] * level > 0.0)
        .ok_or_else(|| GeomError::Invalid("no coordinate axis can be solved at this level".into()))?;
    let model = MetricModel::Quadric {
        ambient,
        level,
        chart: QuadricChart { solved_axis, branch: Branch::Plus },
        bounds: sym_box(nn - 1, 2.0),
    };
    let mut coeffs = vec![0.0; nn];
    coeffs[axis] = 1.0;
    let omega = restrict_linear(&model, &coeffs)?;
    finish_bundle(InstanceKind::CoordinateSlice, model, omega, 1.0 / level, eps[axis])
}

// ---------------------------------------------------------------------------
// Killing fields and totally geodesic levels
// ---------------------------------------------------------------------------

/// Max-abs of the Lie derivative of the metric along the field with
/// components `field[k]`, over seeded samples:
/// `(L_Z g)_ij = Z^k d_k g_ij + g_kj d_i Z^k + g_ik d_j Z^k`.
pub fn killing_check(
    chart: &Chart,
    field: &[Expression],
    samples: usize,
    seed: u64,
) -> Result<f64, GeomError> {
    let n = chart.dim();
    if field.len() != n {
        return invalid(format!("the field needs {n} components, got {}", field.len()));
    }
    let pts = chart.sample_points(samples, seed)?;
    let mut worst = 0.0_f64;
    for p in &pts {
        let jets = chart.metric_jets_at(p)?;
        let zj: Vec<Jet2> = field
            .iter()
            .map(|c| c.eval_jet2(p))
            .collect::<Result<_, _>>()?;
        for i in 0..n {
            for j in i..n {
                let mut lie = 0.0;
                for k in 0..n {
                    lie += zj[k].v * jets[i * n + j].g[k]
                        + jets[k * n + j].v * zj[k].g[i]
                        + jets[i * n + k].v * zj[k].g[j];
                }
                worst = worst.max(lie.abs());
            }
        }
    }
    Ok(worst)
}

/// Newton-project a point onto the zero level of the field, stepping along
/// the gradient where it pairs with the differential and along the steepest
/// coordinate otherwise (the gradient may be null). Returns None when the
/// iteration leaves the chart or stalls.
fn newton_to_zero(chart: &Chart, field: &ScalarField, start: &[f64]) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    for _ in 0..40 {
        let w = field.value(&x).ok()?;
        if w.abs() <= 1e-12 {
            return Some(x);
        }
        let low = field.gradient_lower(&x).ok()?;
        let up = field.gradient(chart, &x).ok()?;
        let nsq = low.dot(&up);
        if nsq.abs() > 1e-10 * (1.0 + low.amax()).powi(2) {
            for i in 0..x.len() {
                x[i] -= w / nsq * up[i];
            }
        } else {
            let j = (0..x.len()).max_by(|&a, &b| low[a].abs().total_cmp(&low[b].abs()))?;
            if low[j].abs() < 1e-14 {
                return None;
            }
            x[j] -= w / low[j];
        }
        if !chart.contains(&x) {
            return None;
        }
    }
    None
}

/// Max of `|w|` along geodesics launched tangent to the zero level of the
/// field, integrated to `s_len`. For quadric charts, supplying the ambient
/// coefficients of the field switches to ambient integration, which tracks
/// geodesics past the chart edge.
pub fn totally_geodesic_check(
    chart: &Chart,
    field: &ScalarField,
    ambient_field: Option<&[f64]>,
    samples: usize,
    s_len: f64,
    seed: u64,
) -> Result<f64, GeomError> {
    let n = chart.dim();
    let starts = chart.sample_points(samples.max(4) * 3, seed)?;
    let mut zeros: Vec<Vec<f64>> = Vec::new();
    for p in &starts {
        if zeros.len() >= samples {
            break;
        }
        if let Some(z) = newton_to_zero(chart, field, p) {
            zeros.push(z);
        }
    }
    if zeros.is_empty() {
        return invalid("no points of the zero level found inside the domain");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a31);
    let opts = IntegrateOptions { sampling: Sampling::Grid(0.05), ..Default::default() };
    let mut worst = 0.0_f64;
    for z in &zeros {
        let low = field.gradient_lower(z)?;
        // Tangent direction: remove the level-crossing component, measured
        // against the gradient when possible and against the steepest
        // coordinate otherwise.
        let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
        let up = field.gradient(chart, z)?;
        let nsq = low.dot(&up);
        if nsq.abs() > 1e-10 * (1.0 + low.amax()).powi(2) {
            let c = low.dot(&v) / nsq;
            v -= c * &up;
        } else {
            let j = (0..n).max_by(|&a, &b| low[a].abs().total_cmp(&low[b].abs())).unwrap();
            if low[j].abs() < 1e-14 {
                continue;
            }
            let c = low.dot(&v) / low[j];
            v[j] -= c;
        }
        if v.amax() < 1e-6 {
            continue;
        }
        v /= v.norm();
        let dev = if let (Some(q), Some(coeffs)) = (chart.quadric(), ambient_field) {
            if coeffs.len() != q.ambient.dim() {
                return invalid("ambient field coefficient count does not match");
            }
            let x0 = chart.quadric_embed(z)?;
            let v0 = chart.quadric_push(z, &v)?;
            let state = GeodesicState { s: 0.0, position: x0, velocity: v0 };
            let traj = integrate_ambient(q.ambient, q.level, &state, s_len, &opts)?;
            traj.samples
                .iter()
                .map(|st| coeffs.iter().zip(st.position.iter()).map(|(c, x)| c * x).sum::<f64>())
                .fold(0.0_f64, |acc, w| acc.max(w.abs()))
        } else {
            let state = GeodesicState { s: 0.0, position: DVector::from_vec(z.clone()), velocity: v };
            let traj = integrate(chart, &state, s_len, &opts)?;
            if !traj.termination.is_budget() {
                return invalid(format!(
                    "a tangent geodesic left the domain at s = {:.4}; widen the bounds \
                     or supply the ambient field",
                    traj.termination.s()
                ));
            }
            let mut m = 0.0_f64;
            for st in &traj.samples {
                let p: Vec<f64> = st.position.iter().copied().collect();
                m = m.max(field.value(&p)?.abs());
            }
            m
        };
        worst = worst.max(dev);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Decay of fiber curvature on the exponential split
// ---------------------------------------------------------------------------

/// One probe row along the ray into the warped end.
#[derive(Clone, Copy, Debug)]
pub struct LimitSample {
    pub s: f64,
    pub t: f64,
    /// Gap between the fiber-plane curvature of the total space and kappa.
    pub total_gap: f64,
}

/// Result of [`asymptotic_flatness_probe`].
#[derive(Clone, Debug)]
pub struct DecayReport {
    /// `(sigma, max |K|)` over fiber coordinate planes, at arc distance
    /// sigma along a spacelike fiber geodesic.
    pub fiber_rows: Vec<(f64, f64)>,
    /// Least-squares slope of `ln |K|` against `ln sigma` over the rows with
    /// `sigma >= 5`; None when the fiber is flat to tolerance or too few
    /// rows remain.
    pub envelope_exponent: Option<f64>,
    /// All sampled fiber curvatures were at most 1e-9 in magnitude.
    pub trivially_flat: bool,
    /// Total-space curvature gap along the ray that dives into the end.
    pub limit_rows: Vec<LimitSample>,
}

/// Conformally flat two-dimensional fiber with a localized curvature bump:
/// `(1 + 1/2 e^(-x0^2)) (dx0^2 + dx1^2)` on a wide box.
pub fn bump_fiber() -> MetricModel {
    let lam = || {
        Expression::constant(2, 1.0)
            + Expression::scaled(
                0.5,
                Expression::apply(
                    UnaryOp::Exp,
                    Expression::var(2, 0).pow_const(2.0).neg(),
                ),
            )
    };
    let zero = || Expression::constant(2, 0.0);
    MetricModel::Custom {
        signature: Signature::new(0, 2),
        entries: vec![lam(), zero(), zero(), lam()],
        bounds: sym_box(2, 1000.0),
    }
}

/// Largest-magnitude coordinate-plane curvature of the fiber at a point,
/// with its signed value; degenerate planes are skipped.
fn fiber_plane_curvature(chart: &Chart, p: &[f64]) -> Result<Option<(f64, f64)>, GeomError> {
    let n = chart.dim();
    let mut best: Option<(f64, f64)> = None;
    for a in 0..n {
        for b in a + 1..n {
            let mut u = DVector::zeros(n);
            let mut v = DVector::zeros(n);
            u[a] = 1.0;
            v[b] = 1.0;
            match sectional(chart, p, &u, &v) {
                Ok(k) => {
                    if best.map_or(true, |(m, _)| k.abs() > m) {
                        best = Some((k.abs(), k));
                    }
                }
                Err(GeomError::Numerical(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(best)
}

/// Quantify how fast the fiber's curvature decays along a spacelike fiber
/// geodesic, and how fast the total space's fiber-plane curvature approaches
/// kappa along the ray that dives into the warped end. The model must be a
/// warped product with a fiber of dimension at least 2; the fiber's bounds
/// must be wide enough for both rays.
pub fn asymptotic_flatness_probe(
    model: &MetricModel,
    kappa: f64,
    sigma_grid: &[f64],
) -> Result<DecayReport, GeomError> {
    let MetricModel::Warped { base_sign, alpha, t_interval, fiber } = model else {
        return invalid("the decay probe needs a warped model");
    };
    let fchart = fiber.chart()?;
    let fdim = fchart.dim();
    if fdim < 2 {
        return invalid("the decay probe needs a fiber of dimension at least 2");
    }
    let region = fchart.sampling_region();
    let start: Vec<f64> = region.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let gf = fchart.metric_at(&start)?;
    let dir = (0..fdim)
        .find(|&j| gf[(j, j)] > 1e-12)
        .ok_or_else(|| GeomError::Invalid("no spacelike fiber coordinate direction".into()))?;

    let mut grid: Vec<f64> = sigma_grid.iter().copied().filter(|s| *s > 0.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        return invalid("the sigma grid must contain positive distances");
    }

    // Unit-speed spacelike geodesic of the fiber itself.
    let opts = IntegrateOptions { sampling: Sampling::Endpoints, ..Default::default() };
    let mut v = DVector::zeros(fdim);
    v[dir] = 1.0 / gf[(dir, dir)].sqrt();
    let mut state = GeodesicState { s: 0.0, position: DVector::from_vec(start.clone()), velocity: v };
    let mut fiber_rows = Vec::with_capacity(grid.len());
    let mut prev = 0.0;
    for &sigma in &grid {
        let traj = integrate(&fchart, &state, sigma - prev, &opts)?;
        if !traj.termination.is_budget() {
            return invalid(format!(
                "decay probe left the fiber domain at sigma = {:.3}",
                prev + traj.termination.s()
            ));
        }
        state = traj.samples.last().unwrap().clone();
        prev = sigma;
        let p: Vec<f64> = state.position.iter().copied().collect();
        let k = fiber_plane_curvature(&fchart, &p)?.map_or(0.0, |(m, _)| m);
        fiber_rows.push((sigma, k));
    }
    let trivially_flat = fiber_rows.iter().all(|&(_, k)| k <= 1e-9);
    let usable: Vec<(f64, f64)> = fiber_rows
        .iter()
        .filter(|&&(s, k)| s >= 5.0 && k > 0.0)
        .map(|&(s, k)| (s.ln(), k.ln()))
        .collect();
    let envelope_exponent = if trivially_flat || usable.len() < 2 {
        None
    } else {
        let m = usable.len() as f64;
        let xbar = usable.iter().map(|r| r.0).sum::<f64>() / m;
        let ybar = usable.iter().map(|r| r.1).sum::<f64>() / m;
        let sxy: f64 = usable.iter().map(|r| (r.0 - xbar) * (r.1 - ybar)).sum();
        let sxx: f64 = usable.iter().map(|r| (r.0 - xbar).powi(2)).sum();
        Some(sxy / sxx)
    };

    // Spacelike geodesic of the total space, launched horizontally; it turns
    // and dives toward the end where the warping collapses.
    let chart = model.chart()?;
    let t0 = if t_interval.0 < 0.0 && t_interval.1 > 0.0 {
        0.0
    } else {
        0.5 * (t_interval.0 + t_interval.1)
    };
    let alpha0 = alpha.eval_value(&[t0])?;
    let mut pos = vec![t0];
    pos.extend_from_slice(&start);
    let mut vel = vec![0.0; fdim + 1];
    vel[1 + dir] = 1.0 / (alpha0 * gf[(dir, dir)].sqrt());
    let mut st = GeodesicState::new(0.0, pos, vel);
    let t_stop = (t_interval.0 + 0.25).max(-6.5);
    let mut limit_rows = Vec::new();
    let mut last_t = f64::INFINITY;
    let rate = kappa.abs().sqrt().max(1e-3);
    for _ in 0..200_000 {
        let t = st.position[0];
        if t <= t_stop {
            break;
        }
        if t <= last_t - 0.25 {
            let fp: Vec<f64> = st.position.iter().skip(1).copied().collect();
            let kf = fiber_plane_curvature(&fchart, &fp)?;
            let mut gap = 0.0_f64;
            if let Some((_, signed)) = kf {
                let total = warped_fiber_sectional(*base_sign, alpha, t, signed)?;
                gap = (total - kappa).abs();
            }
            limit_rows.push(LimitSample { s: st.s, t, total_gap: gap });
            last_t = t;
        }
        let ds = (0.2 * (rate * t).exp() / rate).clamp(1e-9, 0.05);
        let traj = integrate(&chart, &st, ds, &opts)?;
        let reached_budget = traj.termination.is_budget();
        st = traj.samples.last().unwrap().clone();
        if !reached_budget {
            // The ray hit the fiber's edge before the warping collapsed;
            // report the rows gathered so far.
            break;
        }
    }
    Ok(DecayReport { fiber_rows, envelope_exponent, trivially_flat, limit_rows })
}

// ---------------------------------------------------------------------------
// Foliation identities
// ---------------------------------------------------------------------------

/// Gradient vector fields and first derivatives of a pair of fields at a
/// point, from exact jets: `d_k W^i = d_k g^{ij} d_j w + g^{ij} d_k d_j w`
/// with `d_k g^{-1} = -g^{-1} (d_k g) g^{-1}`.
struct PointFrame {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    dginv: Vec<DMatrix<f64>>,
}

impl PointFrame {
    fn at(chart: &Chart, x: &[f64]) -> Result<PointFrame, GeomError> {
        let n = chart.dim();
        let jets = chart.metric_jets_at(x)?;
        let g = metric_from_jets(n, &jets);
        let ginv = crate::manifold::invert_metric(&g, x)?;
        let mut dginv = Vec::with_capacity(n);
        for k in 0..n {
            let mut dg = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    dg[(i, j)] = jets[i * n + j].g[k];
                }
            }
            dginv.push(-(&ginv) * dg * &ginv);
        }
        Ok(PointFrame { g, ginv, dginv })
    }

    /// Raised gradient and its coordinate derivatives.
    fn gradient_and_jacobian(&self, jet: &Jet2) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.g.nrows();
        let up = &self.ginv * &jet.g;
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let col = &self.dginv[k] * &jet.g + &self.ginv * jet.h.column(k);
            jac.set_column(k, &col);
        }
        (up, jac)
    }
}

/// Max-abs of `[W1, W2] + kappa (w2 W1 - w1 W2)` over seeded samples. The
/// bracket is computed from exact derivative jets of the gradient fields.
pub fn bracket_check(
    chart: &Chart,
    f1: &ScalarField,
    f2: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<f64, GeomError> {
    if (f1.kappa - f2.kappa).abs() > 1e-12 {
        return invalid("the two fields must share one constant");
    }
    let kappa = f1.kappa;
    let pts = chart.sample_points(samples, seed)?;
    let mut worst = 0.0_f64;
    for p in &pts {
        let frame = PointFrame::at(chart, p)?;
        let j1 = f1.omega.eval_jet2(p)?;
        let j2 = f2.omega.eval_jet2(p)?;
        let (u1, m1) = frame.gradient_and_jacobian(&j1);
        let (u2, m2) = frame.gradient_and_jacobian(&j2);
        let bracket = &m2 * &u1 - &m1 * &u2;
        let resid = bracket + kappa * (j2.v * &u1 - j1.v * &u2);
        worst = worst.max(resid.amax());
    }
    Ok(worst)
}

/// Mean and spread of `<W1, W2> + kappa w1 w2` over seeded samples; the
/// combination is constant when both fields solve the equation.
pub fn pair_constant_check(
    chart: &Chart,
    f1: &ScalarField,
    f2: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), GeomError> {
    if (f1.kappa - f2.kappa).abs() > 1e-12 {
        return invalid("the two fields must share one constant");
    }
    let kappa = f1.kappa;
    let pts = chart.sample_points(samples, seed)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for p in &pts {
        let ginv = chart.inverse_metric_at(p)?;
        let l1 = f1.gradient_lower(p)?;
        let l2 = f2.gradient_lower(p)?;
        let w1 = f1.value(p)?;
        let w2 = f2.value(p)?;
        let c = linalg::bilinear(&ginv, &l1, &l2) + kappa * w1 * w2;
        lo = lo.min(c);
        hi = hi.max(c);
        sum += c;
    }
    Ok((sum / pts.len() as f64, hi - lo))
}

/// Result of [`span_curvature_check`].
#[derive(Clone, Copy, Debug)]
pub struct SpanReport {
    /// Largest `|K - kappa|` over the usable samples.
    pub max_gap: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Sectional curvature over the plane spanned by the two gradients, compared
/// against the fields' shared constant; degenerate spans are skipped.
pub fn span_curvature_check(
    chart: &Chart,
    f1: &ScalarField,
    f2: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<SpanReport, GeomError> {
    if (f1.kappa - f2.kappa).abs() > 1e-12 {
        return invalid("the two fields must share one constant");
    }
    let kappa = f1.kappa;
    let pts = chart.sample_points(samples, seed)?;
    let mut report = SpanReport { max_gap: 0.0, used: 0, skipped: 0 };
    for p in &pts {
        let u = f1.gradient(chart, p)?;
        let v = f2.gradient(chart, p)?;
        match sectional(chart, p, &u, &v) {
            Ok(k) => {
                report.used += 1;
                report.max_gap = report.max_gap.max((k - kappa).abs());
            }
            Err(GeomError::Numerical(_)) => report.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if report.used == 0 {
        return invalid("every sampled span was degenerate");
    }
    Ok(report)
}

/// The restricted ambient coordinates of a quadric, with rank statistics of
/// their gradients.
#[derive(Clone, Debug)]
pub struct MaximalSystem {
    pub fields: Vec<ScalarField>,
    pub kappa: f64,
    pub samples: usize,
    /// Fraction of samples where all gradients together span the tangent
    /// space (their count exceeds the dimension by one, so this is the
    /// highest rank they can reach).
    pub full_rank_fraction: f64,
    /// Fraction of full-rank samples for each subset that omits one field.
    pub subset_rank_fractions: Vec<f64>,
}

/// Restrict all ambient coordinates of a quadric model and measure how often
/// their gradients reach full rank at seeded samples.
pub fn maximal_system(
    model: &MetricModel,
    samples: usize,
    seed: u64,
) -> Result<MaximalSystem, GeomError> {
    let MetricModel::Quadric { ambient, level, .. } = model else {
        return invalid("a maximal system needs a quadric model");
    };
    let nn = ambient.dim();
    let n = nn - 1;
    let kappa = 1.0 / level;
    let mut fields = Vec::with_capacity(nn);
    for a in 0..nn {
        let mut coeffs = vec![0.0; nn];
        coeffs[a] = 1.0;
        fields.push(ScalarField::new(restrict_linear(model, &coeffs)?, kappa));
    }
    let chart = model.chart()?;
    let pts = chart.sample_points(samples, seed)?;
    let mut full = 0usize;
    let mut subset_full = vec![0usize; nn];
    for p in &pts {
        let mut rows = DMatrix::zeros(nn, n);
        for (a, f) in fields.iter().enumerate() {
            let low = f.gradient_lower(p)?;
            for j in 0..n {
                rows[(a, j)] = low[j];
            }
        }
        if linalg::rank(&rows, 1e-8) == n {
            full += 1;
        }
        for omit in 0..nn {
            let sub = rows.clone().remove_row(omit);
            if linalg::rank(&sub, 1e-8) == n {
                subset_full[omit] += 1;
            }
        }
    }
    let m = pts.len() as f64;
    Ok(MaximalSystem {
        fields,
        kappa,
        samples: pts.len(),
        full_rank_fraction: full as f64 / m,
        subset_rank_fractions: subset_full.iter().map(|&c| c as f64 / m).collect(),
    })
}

/// Result of [`umbilic_check`].
#[derive(Clone, Copy, Debug)]
pub struct UmbilicReport {
    pub max_deviation: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Newton-project onto the joint level set `w_i = levels_i`.
fn newton_to_joint_level(
    chart: &Chart,
    fields: &[ScalarField],
    levels: &[f64],
    start: &[f64],
) -> Option<Vec<f64>> {
    let k = fields.len();
    let mut x = start.to_vec();
    for _ in 0..40 {
        let mut resid = DVector::zeros(k);
        let mut worst = 0.0_f64;
        for (i, f) in fields.iter().enumerate() {
            resid[i] = f.value(&x).ok()? - levels[i];
            worst = worst.max(resid[i].abs());
        }
        if worst <= 1e-12 {
            return Some(x);
        }
        // Least-norm Newton step through the normal equations of the
        // level-map Jacobian.
        let mut jac = DMatrix::zeros(k, x.len());
        for (i, f) in fields.iter().enumerate() {
            let low = f.gradient_lower(&x).ok()?;
            for j in 0..x.len() {
                jac[(i, j)] = low[j];
            }
        }
        let jjt = &jac * jac.transpose();
        let rhs = jjt.lu().solve(&resid)?;
        let step = jac.transpose() * rhs;
        for j in 0..x.len() {
            x[j] -= step[j];
        }
        if !chart.contains(&x) {
            return None;
        }
    }
    None
}

/// Tangent frame of the joint level set at `x`, orthonormalized against the
/// metric. The pivot order is fixed by the caller so the construction stays
/// smooth in `x` and can be differenced. Returns None when the tangent
/// metric degenerates.
fn level_tangent_frame(
    chart: &Chart,
    fields: &[ScalarField],
    basis: &[DVector<f64>],
    pivots: Option<&[usize]>,
    x: &[f64],
) -> Result<Option<(Vec<DVector<f64>>, Vec<usize>)>, GeomError> {
    let n = chart.dim();
    let k = fields.len();
    let jets = chart.metric_jets_lenient(x)?;
    let g = metric_from_jets(n, &jets);
    let ginv = crate::manifold::invert_metric(&g, x)?;
    let mut lows = Vec::with_capacity(k);
    let mut ups = Vec::with_capacity(k);
    for f in fields {
        let low = f.omega.eval_jet2(x)?.g;
        ups.push(&ginv * &low);
        lows.push(low);
    }
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = lows[i].dot(&ups[j]);
        }
    }
    let Some(gram_inv) = gram.clone().try_inverse() else {
        return Ok(None);
    };
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = v.clone();
        for i in 0..k {
            for j in 0..k {
                out -= gram_inv[(i, j)] * lows[i].dot(v) * &ups[j];
            }
        }
        out
    };
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n - k);
    let mut chosen = Vec::with_capacity(n - k);
    let candidates: Vec<usize> = match pivots {
        Some(p) => p.to_vec(),
        None => (0..n).collect(),
    };
    for &c in &candidates {
        if frame.len() == n - k && pivots.is_none() {
            break;
        }
        let mut u = project(&basis[c]);
        for e in &frame {
            let ee = linalg::bilinear(&g, e, e);
            let ue = linalg::bilinear(&g, &u, e);
            u -= ue / ee * e;
        }
        let uu = linalg::bilinear(&g, &u, &u);
        if uu.abs() < 1e-10 {
            if pivots.is_some() {
                // The fixed pivot degenerated at a displaced point.
                return Ok(None);
            }
            continue;
        }
        u /= uu.abs().sqrt();
        frame.push(u);
        chosen.push(c);
    }
    if frame.len() < n - k {
        return Ok(None);
    }
    Ok(Some((frame, chosen)))
}

/// Compare the measured second fundamental form of the joint level set
/// `w_i = levels_i` against the closed form it must equal,
/// `kappa <X,Y> G^{ij} w_i W_j` with `G` the Gram matrix of the gradients.
/// Samples are projected onto the level set; those with a nearly null
/// gradient or a degenerate tangent frame are skipped and counted.
/// `frame_seed` mixes the frame's seed basis to confirm the result does not
/// depend on the frame choice.
pub fn umbilic_check(
    chart: &Chart,
    fields: &[ScalarField],
    levels: &[f64],
    samples: usize,
    seed: u64,
    frame_seed: Option<u64>,
) -> Result<UmbilicReport, GeomError> {
    let n = chart.dim();
    let k = fields.len();
    if k == 0 || k != levels.len() {
        return invalid("need as many levels as fields, and at least one");
    }
    if k >= n {
        return invalid("the joint level set has no tangent directions");
    }
    let kappa = fields[0].kappa;
    if fields.iter().any(|f| (f.kappa - kappa).abs() > 1e-12) {
        return invalid("all fields must share one constant");
    }
    // Seed basis for the tangent frame: coordinate directions, optionally
    // mixed by a seeded perturbation to exercise frame independence.
    let mut basis: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    if let Some(fs) = frame_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(fs);
        for e in &mut basis {
            for i in 0..n {
                e[i] += 0.3 * rng.random_range(-1.0..1.0_f64);
            }
        }
    }

    let starts = chart.sample_points(samples.max(4) * 3, seed)?;
    let mut report = UmbilicReport { max_deviation: 0.0, used: 0, skipped: 0 };
    for start in &starts {
        if report.used >= samples {
            break;
        }
        let Some(p) = newton_to_joint_level(chart, fields, levels, start) else {
            continue;
        };
        let jets = chart.metric_jets_at(&p)?;
        let g = metric_from_jets(n, &jets);
        let ginv = crate::manifold::invert_metric(&g, &p)?;
        let gamma = christoffel_core(n, &jets, &ginv);
        let mut lows = Vec::with_capacity(k);
        let mut ups = Vec::with_capacity(k);
        let mut vals = Vec::with_capacity(k);
        for f in fields {
            let jet = f.omega.eval_jet2(&p)?;
            ups.push(&ginv * &jet.g);
            lows.push(jet.g);
            vals.push(jet.v);
        }
        let mut gram = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = lows[i].dot(&ups[j]);
            }
        }
        let scale: f64 = (0..k).map(|i| lows[i].amax().powi(2)).fold(0.0, f64::max);
        if (0..k).any(|i| gram[(i, i)].abs() < 1e-8 * (1.0 + scale)) {
            report.skipped += 1;
            continue;
        }
        let Some(gram_inv) = gram.clone().try_inverse() else {
            report.skipped += 1;
            continue;
        };
        let Some((frame, pivots)) = level_tangent_frame(chart, fields, &basis, None, &p)? else {
            report.skipped += 1;
            continue;
        };
        // Coordinate derivatives of the frame by central differences, with
        // the pivot order frozen so the field of frames is smooth.
        let mut dframe: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n);
        let mut ok = true;
        for c in 0..n {
            let step = 1e-5 * (1.0 + p[c].abs());
            let mut xp = p.clone();
            let mut xm = p.clone();
            xp[c] += step;
            xm[c] -= step;
            let fp = level_tangent_frame(chart, fields, &basis, Some(&pivots), &xp)?;
            let fm = level_tangent_frame(chart, fields, &basis, Some(&pivots), &xm)?;
            let (Some((fp, _)), Some((fm, _))) = (fp, fm) else {
                ok = false;
                break;
            };
            dframe.push(
                fp.iter()
                    .zip(fm.iter())
                    .map(|(a, b)| (a - b) / (2.0 * step))
                    .collect(),
            );
        }
        if !ok {
            report.skipped += 1;
            continue;
        }
        // Predicted normal direction: kappa * sum_ij G^{ij} w_i W_j.
        let mut normal = DVector::zeros(n);
        for i in 0..k {
            for j in 0..k {
                normal += gram_inv[(i, j)] * vals[i] * &ups[j];
            }
        }
        normal *= kappa;
        for (a, ea) in frame.iter().enumerate() {
            for eb in frame.iter().skip(a) {
                // nabla_{E_a} E_b at p.
                let mut cov = DVector::zeros(n);
                for c in 0..n {
                    cov += ea[c] * &dframe[c][frame.iter().position(|f| std::ptr::eq(f, eb)).unwrap()];
                }
                for i in 0..n {
                    let mut s = 0.0;
                    for c in 0..n {
                        for d in 0..n {
                            s += gamma[i][(c, d)] * ea[c] * eb[d];
                        }
                    }
                    cov[i] += s;
                }
                // Normal projection of the measured derivative.
                let mut measured = DVector::zeros(n);
                for i in 0..k {
                    for j in 0..k {
                        measured += gram_inv[(i, j)] * lows[i].dot(&cov) * &ups[j];
                    }
                }
                let predicted = linalg::bilinear(&g, ea, eb) * &normal;
                report.max_deviation = report.max_deviation.max((measured - predicted).amax());
            }
        }
        report.used += 1;
    }
    if report.used == 0 {
        return invalid("no usable points found on the joint level set");
    }
    Ok(report)
}

/// Result of [`affine_family_search`].
#[derive(Clone, Copy, Debug)]
pub struct AffineSearch {
    pub a: f64,
    pub b: f64,
    /// Mean residual of the best candidate.
    pub residual: f64,
    /// Largest rank of `{W, W_candidate}` over the samples (1 means the
    /// candidate's gradient never leaves the span of the known one).
    pub max_span_rank: usize,
}

/// Search the two-parameter family `a w + b` for the best second solution by
/// residual minimization, then measure whether its gradient stays in the
/// span of the known field's gradient.
pub fn affine_family_search(
    chart: &Chart,
    field: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<AffineSearch, GeomError> {
    let pts = chart.sample_points(samples, seed)?;
    let n = chart.dim();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for ia in 0..15 {
        let a = 0.25 + 0.125 * ia as f64;
        for ib in 0..41 {
            let b = -1.0 + 0.05 * ib as f64;
            let candidate = ScalarField::new(
                Expression::scaled(a, field.omega.clone())
                    + Expression::constant(n, b),
                field.kappa,
            );
            let mut sum = 0.0;
            for p in &pts {
                sum += candidate.residual_at(chart, p)?;
            }
            let mean = sum / pts.len() as f64;
            if mean < best.0 {
                best = (mean, a, b);
            }
        }
    }
    let (residual, a, b) = best;
    let candidate = ScalarField::new(
        Expression::scaled(a, field.omega.clone()) + Expression::constant(n, b),
        field.kappa,
    );
    let mut max_rank = 0usize;
    for p in &pts {
        let l1 = field.gradient_lower(p)?;
        let l2 = candidate.gradient_lower(p)?;
        let mut rows = DMatrix::zeros(2, n);
        for j in 0..n {
            rows[(0, j)] = l1[j];
            rows[(1, j)] = l2[j];
        }
        max_rank = max_rank.max(linalg::rank(&rows, 1e-6));
    }
    Ok(AffineSearch { a, b, residual, max_span_rank: max_rank })
}

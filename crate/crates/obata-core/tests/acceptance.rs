//! Acceptance gate for the toolkit: eleven numbered criteria covering
//! equation residuals, the sign-pair table, closed-form profiles, constant
//! curvature, instance self-verification, escape times, completeness,
//! invariant zero levels, foliation identities, curvature decay, and
//! independent oracle cross-checks. Each test prints one summary line
//! `criterion NN: PASS|FAIL (...)` (visible with `--nocapture`) and fails
//! the build when its tolerances are not met.

use nalgebra::DVector;
use obata_core::expr::{BinaryOp, Expression, UnaryOp};
use obata_core::geodesic::{
    affine_time, integrate, integrate_ambient, random_initial_conditions, GeodesicState,
    IntegrateOptions, Sampling, Termination,
};
use obata_core::manifold::{
    restrict_linear, unbounded_box, Branch, MetricModel, QuadricChart, Signature,
};
use obata_core::obata::{
    asymptotic_flatness_probe, bracket_check, build_instance, bump_fiber, classify_case,
    family_identity_errors, family_range, killing_check, maximal_system, pair_constant_check,
    solution_family, totally_geodesic_check, umbilic_check, InstanceKind, RiemannianRange,
    SolutionBranch,
};
use obata_core::tensor::{
    obata_verify, sectional, warped_fiber_sectional, warped_mixed_sectional, ScalarField,
    VerifyOptions,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Print the one-line verdict for a criterion and enforce it.
fn gate(number: u32, pass: bool, detail: &str) {
    use std::io::Write;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {number:02}: {verdict} ({detail})\n");
    // The harness captures the print macros; the raw handle keeps the
    // verdict lines visible on a plain `cargo test` run.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {number:02} failed: {detail}");
}

/// Unit hyperboloid -t^2 + x^2 + y^2 = 1, chart solving for y > 0.
fn hyperboloid() -> MetricModel {
    MetricModel::Quadric {
        ambient: Signature::new(1, 2),
        level: 1.0,
        chart: QuadricChart { solved_axis: 2, branch: Branch::Plus },
        bounds: vec![(-2.0, 2.0), (-2.0, 2.0)],
    }
}

/// Unit sphere x^2 + y^2 + z^2 = 1, chart solving for z > 0.
fn sphere() -> MetricModel {
    MetricModel::Quadric {
        ambient: Signature::new(0, 3),
        level: 1.0,
        chart: QuadricChart { solved_axis: 2, branch: Branch::Plus },
        bounds: vec![(-0.9, 0.9), (-0.9, 0.9)],
    }
}

/// Warped model -dt^2 + e^{2t} (dx^2 + dy^2) on t in (-16, 4).
fn exponential_warp() -> MetricModel {
    MetricModel::Warped {
        base_sign: -1,
        alpha: Expression::parse("exp(t)", 1).unwrap(),
        t_interval: (-16.0, 4.0),
        fiber: Box::new(MetricModel::Flat {
            signature: Signature::new(0, 2),
            bounds: unbounded_box(2),
        }),
    }
}

#[test]
fn criterion_01_residuals_and_first_integrals_on_the_hyperboloid() {
    let model = hyperboloid();
    let chart = model.chart().unwrap();
    let cases: [(&str, [f64; 3], f64); 3] = [
        ("x", [0.0, 1.0, 0.0], 1.0),
        ("t", [1.0, 0.0, 0.0], -1.0),
        ("t-y", [1.0, 0.0, -1.0], 0.0),
    ];
    let opts = VerifyOptions { samples: 200, ..Default::default() };
    let mut worst_residual = 0.0_f64;
    let mut worst_spread = 0.0_f64;
    let mut worst_mean_gap = 0.0_f64;
    for (_, coeffs, h) in &cases {
        let field = ScalarField::new(restrict_linear(&model, coeffs).unwrap(), 1.0);
        let report = obata_verify(&chart, &field, &opts).unwrap();
        assert_eq!(report.samples, 200);
        worst_residual = worst_residual.max(report.max_residual);
        worst_spread = worst_spread.max(report.first_integral_spread);
        worst_mean_gap = worst_mean_gap.max((report.first_integral_mean - h).abs());
    }
    gate(
        1,
        worst_residual <= 1e-8 && worst_spread <= 1e-7 && worst_mean_gap <= 1e-7,
        &format!(
            "max residual {worst_residual:.2e} <= 1e-8, h spread {worst_spread:.2e} <= 1e-7, \
             h mean gap {worst_mean_gap:.2e} <= 1e-7 for the three fields"
        ),
    );
}

#[test]
fn criterion_02_sign_table_and_type_census() {
    // The nine rows: field type, forced structure, and admissible range on
    // a geodesically complete positive-definite carrier.
    let rows: [(f64, f64, &str, &str); 9] = [
        (1.0, 1.0, "depends", "constant-curvature"),
        (1.0, -1.0, "timelike", "warped-split"),
        (1.0, 0.0, "timelike or null", "asymptotically-flat-split"),
        (-1.0, 1.0, "spacelike", "warped-split"),
        (-1.0, -1.0, "depends", "constant-curvature"),
        (-1.0, 0.0, "spacelike or null", "asymptotically-flat-split"),
        (0.0, 1.0, "spacelike", "direct-product"),
        (0.0, -1.0, "timelike", "direct-product"),
        (0.0, 0.0, "null", "null-killing"),
    ];
    let mut table_ok = true;
    for &(k, h, ty, tag) in &rows {
        let label = classify_case(k, h, 0.0);
        let range_ok = match (k > 0.0, k < 0.0, h > 0.0, h < 0.0) {
            (true, _, true, _) => matches!(label.riemannian, RiemannianRange::Bounded { .. }),
            (true, _, _, _) => matches!(label.riemannian, RiemannianRange::Impossible),
            (_, true, true, _) => matches!(label.riemannian, RiemannianRange::AllReals),
            (_, true, _, true) => matches!(label.riemannian, RiemannianRange::Outside { .. }),
            (_, true, _, _) => matches!(label.riemannian, RiemannianRange::HalfLine),
            (_, _, true, _) => matches!(label.riemannian, RiemannianRange::AllReals),
            _ => matches!(label.riemannian, RiemannianRange::Impossible),
        };
        if label.omega_type.name() != ty || label.structure.tag() != tag || !range_ok {
            table_ok = false;
        }
    }

    // Census consistency on the three fields of criterion 1.
    let model = hyperboloid();
    let chart = model.chart().unwrap();
    let opts = VerifyOptions { samples: 200, ..Default::default() };
    let census_of = |coeffs: &[f64]| {
        let field = ScalarField::new(restrict_linear(&model, coeffs).unwrap(), 1.0);
        obata_verify(&chart, &field, &opts).unwrap().census
    };
    let cx = census_of(&[0.0, 1.0, 0.0]);
    let ct = census_of(&[1.0, 0.0, 0.0]);
    let cn = census_of(&[1.0, 0.0, -1.0]);
    let census_ok = cx.timelike > 0
        && cx.null > 0
        && cx.spacelike > 0
        && ct.null == 0
        && ct.spacelike == 0
        && ct.timelike > 0
        && cn.spacelike == 0
        && cn.timelike > 0;
    gate(
        2,
        table_ok && census_ok,
        &format!(
            "9 table rows verbatim: {table_ok}; census x {}/{}/{}, t {}/{}/{}, \
             t-y {}/{}/{} (timelike/null/spacelike)",
            cx.timelike, cx.null, cx.spacelike, ct.timelike, ct.null, ct.spacelike,
            cn.timelike, cn.null, cn.spacelike
        ),
    );
}

#[test]
fn criterion_03_closed_form_profiles() {
    let pairs: [(f64, f64, SolutionBranch); 5] = [
        (1.0, 1.0, SolutionBranch::Cosine),
        (-1.0, 1.0, SolutionBranch::HyperbolicSine),
        (-1.0, -1.0, SolutionBranch::HyperbolicCosine),
        (-1.0, 0.0, SolutionBranch::Exponential),
        (0.0, 1.0, SolutionBranch::Linear),
    ];
    let mut worst_ode = 0.0_f64;
    let mut worst_energy = 0.0_f64;
    let mut ranges_ok = true;
    for &(k, h, branch) in &pairs {
        let family = solution_family(k, h).unwrap();
        assert_eq!(family.branch, branch);
        let (ode, energy) = family_identity_errors(&family, 101).unwrap();
        worst_ode = worst_ode.max(ode);
        worst_energy = worst_energy.max(energy);
        let (lo, hi) = family_range(&family, 101).unwrap();
        let ok = match branch {
            // Oscillates inside the closed band |f| <= sqrt(h/k).
            SolutionBranch::Cosine => {
                let bound = (h / k).sqrt();
                lo >= -bound - 1e-12 && hi <= bound + 1e-12 && hi >= 0.99 * bound
            }
            // Odd and unbounded: covers both signs.
            SolutionBranch::HyperbolicSine => lo < -1.0 && hi > 1.0,
            // Stays outside the gap: f >= sqrt(h/k) > 0 on this branch.
            SolutionBranch::HyperbolicCosine => lo >= (h / k).sqrt() - 1e-12,
            // One sign only, approaching zero in the limit.
            SolutionBranch::Exponential => lo > 0.0,
            // Linear: both signs, unbounded.
            SolutionBranch::Linear => lo < -1.0 && hi > 1.0,
        };
        if !ok {
            ranges_ok = false;
        }
    }
    gate(
        3,
        worst_ode <= 1e-9 && worst_energy <= 1e-9 && ranges_ok,
        &format!(
            "profile residual {worst_ode:.2e} <= 1e-9, energy residual {worst_energy:.2e} \
             <= 1e-9 on 101-point grids, ranges consistent: {ranges_ok}"
        ),
    );
}

#[test]
fn criterion_04_constant_sectional_curvature_of_the_quadrics() {
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    for (name, model, coeffs) in [
        ("hyperboloid", hyperboloid(), [0.0, 1.0, 0.0]),
        ("sphere", sphere(), [0.0, 0.0, 1.0]),
    ] {
        let chart = model.chart().unwrap();
        let field = ScalarField::new(restrict_linear(&model, &coeffs).unwrap(), 1.0);
        let pts = chart.sample_points(150, 47).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = chart.dim();
        let mut used = 0usize;
        let mut gradient_planes = 0usize;
        for p in &pts {
            if used >= 50 && gradient_planes >= 12 {
                break;
            }
            // Alternate free planes with planes containing the gradient.
            let take_gradient = used % 2 == 1;
            let u = if take_gradient {
                field.gradient(&chart, p).unwrap()
            } else {
                DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64))
            };
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
            match sectional(&chart, p, &u, &v) {
                Ok(k) => {
                    worst = worst.max((k - 1.0).abs());
                    used += 1;
                    if take_gradient {
                        gradient_planes += 1;
                    }
                }
                Err(_) => continue, // degenerate plane; resample
            }
        }
        assert!(
            used >= 50 && gradient_planes >= 12,
            "{name}: only {used} planes ({gradient_planes} through the gradient)"
        );
        detail.push_str(&format!("{name}: {used} planes; "));
    }
    gate(
        4,
        worst <= 1e-5,
        &format!("{detail}max |K - 1| = {worst:.2e} <= 1e-5 including gradient planes"),
    );
}

#[test]
fn criterion_05_builders_self_verify() {
    let cases: [(InstanceKind, f64, f64); 8] = [
        (InstanceKind::SineWarp, 1.0, 1.0),
        (InstanceKind::SinhWarp, 1.0, 1.0),
        (InstanceKind::CoshWarp, 1.0, -1.0),
        (InstanceKind::ExpHalfPlus, 1.0, 0.0),
        (InstanceKind::ExpHalfMinus, 1.0, 0.0),
        (InstanceKind::SpaceProduct, 0.0, 1.0),
        (InstanceKind::TimeProduct, 0.0, -1.0),
        (InstanceKind::NullKilling, 0.0, 0.0),
    ];
    let mut worst_residual = 0.0_f64;
    let mut worst_spread = 0.0_f64;
    for &(kind, k, h) in &cases {
        let bundle = build_instance(kind, k, h, None).unwrap();
        worst_residual = worst_residual.max(bundle.report.max_residual);
        worst_spread = worst_spread.max(bundle.report.first_integral_spread);
        assert!(
            (bundle.report.first_integral_mean - h).abs() <= 1e-7,
            "{}: h drifted",
            kind.tag()
        );
    }
    // The gradient of the null construction's field is a constant null
    // vector; its flow must preserve the metric.
    let bundle = build_instance(InstanceKind::NullKilling, 0.0, 0.0, None).unwrap();
    let chart = bundle.model.chart().unwrap();
    let killing_field: Vec<Expression> = ["0", "2", "0", "0"]
        .iter()
        .map(|s| Expression::parse(s, 4).unwrap())
        .collect();
    let lie = killing_check(&chart, &killing_field, 150, 5).unwrap();
    gate(
        5,
        worst_residual <= 1e-8 && worst_spread <= 1e-7 && lie <= 1e-9,
        &format!(
            "8 builders: residual {worst_residual:.2e} <= 1e-8, spread {worst_spread:.2e} \
             <= 1e-7; Killing deviation {lie:.2e} <= 1e-9"
        ),
    );
}

#[test]
fn criterion_06_escape_parameters_on_the_exponential_warp() {
    let model = exponential_warp();
    let chart = model.chart().unwrap();
    let opts = IntegrateOptions { sampling: Sampling::Endpoints, ..Default::default() };
    // (initial velocity, class constant c, ideal escape parameter)
    let runs: [([f64; 3], f64, f64); 4] = [
        ([-5.0 / 3.0, 4.0 / 3.0, 0.0], -1.0, std::f64::consts::LN_2),
        ([0.0, 1.0, 0.0], 1.0, std::f64::consts::FRAC_PI_2),
        ([0.0, -1.0, 0.0], 1.0, std::f64::consts::FRAC_PI_2),
        ([-2.0, 2.0, 0.0], 0.0, 0.5),
    ];
    let mut worst_ideal_gap = 0.0_f64;
    let mut worst_quadrature_gap = 0.0_f64;
    for &(v0, c, ideal) in &runs {
        let state = GeodesicState::new(0.0, vec![0.0; 3], v0.to_vec());
        let traj = integrate(&chart, &state, 5.0, &opts).unwrap();
        let Termination::DomainEscape { s, .. } = traj.termination else {
            panic!("expected a domain escape, got {:?}", traj.termination.kind());
        };
        worst_ideal_gap = worst_ideal_gap.max((s - ideal).abs());
        // The same quantity from quadrature of the reduced base equation,
        // integrated down to the actual wall at t = -16.
        let quad = affine_time(1.0, 0.0, v0[0], c, -16.0).unwrap();
        assert!((quad - ideal).abs() <= 1e-6, "quadrature strayed from the closed form");
        worst_quadrature_gap = worst_quadrature_gap.max((s - quad).abs());
    }
    gate(
        6,
        worst_ideal_gap <= 1e-4 && worst_quadrature_gap <= 1e-6,
        &format!(
            "ln 2 / pi/2 both directions / 0.5 matched to {worst_ideal_gap:.2e} <= 1e-4; \
             measured vs quadrature {worst_quadrature_gap:.2e} <= 1e-6"
        ),
    );
}

#[test]
fn criterion_07_bounded_warping_keeps_geodesics_complete() {
    let model = MetricModel::Warped {
        base_sign: 1,
        alpha: Expression::parse("2 + sin(t)", 1).unwrap(),
        t_interval: (-700.0, 700.0),
        fiber: Box::new(MetricModel::Flat {
            signature: Signature::new(0, 2),
            bounds: unbounded_box(2),
        }),
    };
    let chart = model.chart().unwrap();
    let ics = random_initial_conditions(&chart, 50, 21).unwrap();
    assert_eq!(ics.len(), 50);
    let opts = IntegrateOptions { sampling: Sampling::Endpoints, ..Default::default() };
    let results: Vec<(bool, f64)> = ics
        .par_iter()
        .map(|ic| {
            let traj = integrate(&chart, ic, 50.0, &opts).unwrap();
            (traj.termination.is_budget(), traj.norm_drift)
        })
        .collect();
    let escapes = results.iter().filter(|(budget, _)| !budget).count();
    let worst_drift = results.iter().fold(0.0_f64, |acc, &(_, d)| acc.max(d));
    gate(
        7,
        escapes == 0 && worst_drift <= 1e-7,
        &format!(
            "50 geodesics to s = 50: {escapes} escapes, max norm drift {worst_drift:.2e} <= 1e-7"
        ),
    );
}

#[test]
fn criterion_08_zero_levels_are_totally_geodesic() {
    // Warped instance whose field vanishes on the t = 0 slice.
    let bundle = build_instance(InstanceKind::CoshWarp, 1.0, -1.0, None).unwrap();
    let chart = bundle.model.chart().unwrap();
    let field = ScalarField::new(bundle.omega.clone(), bundle.kappa);
    let warped_dev = totally_geodesic_check(&chart, &field, None, 20, 5.0, 13).unwrap();

    // Hyperboloid with the restricted coordinate, integrated in the ambient
    // space so the run is not cut short by the chart box.
    let model = hyperboloid();
    let qchart = model.chart().unwrap();
    let qfield = ScalarField::new(restrict_linear(&model, &[0.0, 1.0, 0.0]).unwrap(), 1.0);
    let quadric_dev =
        totally_geodesic_check(&qchart, &qfield, Some(&[0.0, 1.0, 0.0]), 20, 5.0, 13).unwrap();

    let worst = warped_dev.max(quadric_dev);
    gate(
        8,
        worst <= 1e-7,
        &format!(
            "tangent starts stay on the zero level to s = 5: warped {warped_dev:.2e}, \
             quadric {quadric_dev:.2e}, both <= 1e-7"
        ),
    );
}

#[test]
fn criterion_09_foliation_identities_on_the_hyperboloid() {
    let model = hyperboloid();
    let chart = model.chart().unwrap();
    let system = maximal_system(&model, 200, 3).unwrap();
    assert_eq!(system.fields.len(), 3);
    let fields = &system.fields;

    let mut worst_bracket = 0.0_f64;
    let mut worst_spread = 0.0_f64;
    for i in 0..3 {
        for j in i..3 {
            if i != j {
                let r = bracket_check(&chart, &fields[i], &fields[j], 200, 3).unwrap();
                worst_bracket = worst_bracket.max(r);
            }
            let (_, spread) = pair_constant_check(&chart, &fields[i], &fields[j], 200, 3).unwrap();
            worst_spread = worst_spread.max(spread);
        }
    }

    // Nonzero levels of single fields are umbilical; exercise two fields,
    // three levels, and a perturbed tangent frame.
    let wx = &fields[1];
    let wt = &fields[0];
    let mut worst_umbilic = 0.0_f64;
    for (field, level, frame) in [
        (wx, 0.4, None),
        (wx, -0.6, None),
        (wx, 0.4, Some(7)),
        (wt, 0.3, None),
    ] {
        let r = umbilic_check(&chart, &[field.clone()], &[level], 40, 9, frame).unwrap();
        assert!(r.used > 0, "no usable points at level {level}");
        worst_umbilic = worst_umbilic.max(r.max_deviation);
    }

    gate(
        9,
        worst_bracket <= 1e-7
            && worst_spread <= 1e-9
            && system.full_rank_fraction >= 0.99
            && worst_umbilic <= 1e-6,
        &format!(
            "brackets {worst_bracket:.2e} <= 1e-7, pair-constant spreads {worst_spread:.2e} \
             <= 1e-9, gradient rank full at {:.1}% >= 99%, umbilic deviation \
             {worst_umbilic:.2e} <= 1e-6",
            100.0 * system.full_rank_fraction
        ),
    );
}

#[test]
fn criterion_10_curvature_decay_on_the_asymptotically_flat_end() {
    let bundle =
        build_instance(InstanceKind::ExpHalfPlus, 1.0, 0.0, Some(bump_fiber())).unwrap();
    let grid: Vec<f64> = (1..=28).map(|i| 0.5 * i as f64).collect();
    let report = asymptotic_flatness_probe(&bundle.model, 1.0, &grid).unwrap();
    assert!(!report.trivially_flat, "the bump fiber must show curvature");
    let slope = report.envelope_exponent.expect("an envelope fit past sigma = 5");
    let last = report.limit_rows.last().expect("the diving ray produced rows");
    gate(
        10,
        slope < -1.0 && last.t <= -6.0 && last.total_gap <= 1e-3,
        &format!(
            "fiber envelope exponent {slope:.2} < -1 beyond sigma = 5; total curvature \
             within {:.2e} <= 1e-3 of 1 at t = {:.2}",
            last.total_gap, last.t
        ),
    );
}

// --- criterion 11: independent oracles ------------------------------------

/// Random smooth expression, built from a combinator set that keeps all
/// derivatives moderate on (-1, 1)^dim: affine leaves, sums, differences,
/// products, trig, tanh, damped exponentials, sqrt(1 + e^2), and division
/// by 2 + sin(e).
fn random_expression(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> Expression {
    if depth == 0 {
        return if rng.random_range(0..4) == 0 {
            Expression::constant(dim, rng.random_range(-1.5..1.5))
        } else {
            Expression::scaled(
                rng.random_range(-1.5..1.5),
                Expression::var(dim, rng.random_range(0..dim)),
            )
        };
    }
    let a = random_expression(rng, dim, depth - 1);
    let b = random_expression(rng, dim, depth - 1);
    match rng.random_range(0..8) {
        0 => Expression::binary(BinaryOp::Add, a, b),
        1 => Expression::binary(BinaryOp::Sub, a, b),
        2 => Expression::binary(BinaryOp::Mul, a, b),
        3 => Expression::apply(UnaryOp::Sin, a),
        4 => Expression::apply(UnaryOp::Cos, a),
        5 => Expression::apply(UnaryOp::Tanh, a),
        6 => Expression::apply(UnaryOp::Exp, Expression::scaled(0.4, Expression::apply(UnaryOp::Sin, a))),
        _ => Expression::binary(
            BinaryOp::Div,
            a,
            Expression::binary(
                BinaryOp::Add,
                Expression::constant(dim, 2.0),
                Expression::apply(UnaryOp::Sin, b),
            ),
        ),
    }
}

/// Fourth-order central differences of an expression at `x` with step `h`:
/// returns (gradient, hessian).
fn finite_differences(
    e: &Expression,
    x: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let at = |shift: &[(usize, f64)]| -> f64 {
        let mut p = x.to_vec();
        for &(i, d) in shift {
            p[i] += d;
        }
        e.eval_value(&p).unwrap()
    };
    // Five-point first derivative and the matching second-derivative stencil.
    let d1 = |i: usize| {
        (-at(&[(i, 2.0 * h)]) + 8.0 * at(&[(i, h)]) - 8.0 * at(&[(i, -h)]) + at(&[(i, -2.0 * h)]))
            / (12.0 * h)
    };
    let d2 = |i: usize| {
        (-at(&[(i, 2.0 * h)]) + 16.0 * at(&[(i, h)]) - 30.0 * at(&[]) + 16.0 * at(&[(i, -h)])
            - at(&[(i, -2.0 * h)]))
            / (12.0 * h * h)
    };
    // Mixed second derivative: the 4th-order first-derivative stencil in
    // each direction, composed.
    let w = [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)];
    let dmix = |i: usize, j: usize| {
        let mut acc = 0.0;
        for &(da, wa) in &w {
            for &(db, wb) in &w {
                acc += wa * wb * at(&[(i, da * h), (j, db * h)]);
            }
        }
        acc / (144.0 * h * h)
    };
    let grad: Vec<f64> = (0..n).map(d1).collect();
    let hess: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { d2(i) } else { dmix(i, j) }).collect())
        .collect();
    (grad, hess)
}

fn jets_versus_finite_differences() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(1105);
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    while checked < 100 {
        let dim = rng.random_range(1..=3);
        let depth = rng.random_range(1..=3);
        let e = random_expression(&mut rng, dim, depth);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jet = e.eval_jet2(&x).unwrap();
        // Everything is measured against the jet's own magnitude floor 1.
        let scale = 1.0 + jet.v.abs() + jet.g.amax() + jet.h.amax();
        if scale > 50.0 {
            continue; // steep outlier: finite differences stop being an oracle
        }
        let (grad, hess) = finite_differences(&e, &x, 2e-3);
        let mut gap = (e.eval_value(&x).unwrap() - jet.v).abs();
        for i in 0..dim {
            gap = gap.max((grad[i] - jet.g[i]).abs());
            for j in 0..dim {
                gap = gap.max((hess[i][j] - jet.h[(i, j)]).abs());
            }
        }
        worst = worst.max(gap / scale);
        checked += 1;
    }
    (checked, worst)
}

fn chart_versus_ambient_geodesics() -> f64 {
    let model = hyperboloid();
    let chart = model.chart().unwrap();
    let q = chart.quadric().unwrap();
    let starts: [([f64; 2], [f64; 2]); 5] = [
        ([0.3, -0.4], [0.3, 0.2]),
        ([-0.2, 0.1], [-0.3, 0.4]),
        ([0.0, 0.5], [0.4, -0.1]),
        ([0.6, 0.0], [-0.2, -0.3]),
        ([-0.5, -0.3], [0.1, 0.45]),
    ];
    let opts = IntegrateOptions { sampling: Sampling::Endpoints, ..Default::default() };
    let mut worst = 0.0_f64;
    for (z, v) in &starts {
        let state = GeodesicState::new(0.0, z.to_vec(), v.to_vec());
        let traj = integrate(&chart, &state, 1.0, &opts).unwrap();
        assert!(traj.termination.is_budget(), "chart run left the box");
        let end = traj.samples.last().unwrap();

        let x0 = chart.quadric_embed(z).unwrap();
        let v0 = chart.quadric_push(z, &DVector::from_vec(v.to_vec())).unwrap();
        let astate = GeodesicState { s: 0.0, position: x0, velocity: v0 };
        let atraj = integrate_ambient(q.ambient, q.level, &astate, 1.0, &opts).unwrap();
        let aend = atraj.samples.last().unwrap();

        let zpos: Vec<f64> = end.position.iter().copied().collect();
        let pos_gap = (chart.quadric_embed(&zpos).unwrap() - &aend.position).amax();
        let vel_gap =
            (chart.quadric_push(&zpos, &end.velocity).unwrap() - &aend.velocity).amax();
        worst = worst.max(pos_gap).max(vel_gap);
    }
    worst
}

fn warped_formulas_versus_general_sectional() -> f64 {
    let mut worst = 0.0_f64;
    // Flat-fiber and curved-fiber instances plus the exponential warp.
    let models: Vec<(MetricModel, f64)> = vec![
        (build_instance(InstanceKind::CoshWarp, 1.0, -1.0, None).unwrap().model, 0.0),
        (exponential_warp(), 0.0),
        (build_instance(InstanceKind::SineWarp, 1.0, 1.0, None).unwrap().model, 1.0),
    ];
    for (model, fiber_k) in &models {
        let MetricModel::Warped { base_sign, alpha, .. } = model else { unreachable!() };
        let chart = model.chart().unwrap();
        let n = chart.dim();
        let pts = chart.sample_points(40, 31).unwrap();
        for p in &pts {
            let t = p[0];
            let mut e0 = DVector::zeros(n);
            e0[0] = 1.0;
            for a in 1..n {
                let mut ea = DVector::zeros(n);
                ea[a] = 1.0;
                // Mixed plane spanned by the base direction and one fiber
                // direction.
                if let Ok(k) = sectional(&chart, p, &e0, &ea) {
                    let expected = warped_mixed_sectional(*base_sign, alpha, t).unwrap();
                    worst = worst.max((k - expected).abs());
                }
                // Fiber-tangent planes.
                for b in a + 1..n {
                    let mut eb = DVector::zeros(n);
                    eb[b] = 1.0;
                    if let Ok(k) = sectional(&chart, p, &ea, &eb) {
                        let expected =
                            warped_fiber_sectional(*base_sign, alpha, t, *fiber_k).unwrap();
                        worst = worst.max((k - expected).abs());
                    }
                }
            }
        }
    }
    worst
}

#[test]
fn criterion_11_independent_oracles_agree() {
    let (checked, fd_gap) = jets_versus_finite_differences();
    let geod_gap = chart_versus_ambient_geodesics();
    let warp_gap = warped_formulas_versus_general_sectional();
    gate(
        11,
        checked == 100 && fd_gap <= 1e-6 && geod_gap <= 1e-6 && warp_gap <= 1e-5,
        &format!(
            "jets vs finite differences {fd_gap:.2e} <= 1e-6 on {checked} expressions; \
             chart vs ambient geodesics {geod_gap:.2e} <= 1e-6; warped vs general \
             curvature {warp_gap:.2e} <= 1e-5"
        ),
    );
}

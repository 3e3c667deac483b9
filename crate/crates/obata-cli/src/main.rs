//! Command-line surface over the geometry toolkit: verification runs,
//! geodesic traces, sign-pair classification, completeness probes, instance
//! construction, and foliation checks, all with deterministic JSON/CSV
//! output and a fixed exit-code contract (0 pass, 1 check failed, 2
//! malformed input, 3 numerical failure).

use clap::{Args, Parser, Subcommand};
use obata_core::expr::Expression;
use obata_core::geodesic::{
    attach_first_integral, completeness_probe, integrate, integrate_ambient,
    random_initial_conditions, GeodesicState, IntegrateOptions, Sampling, Termination, Trajectory,
};
use obata_core::manifold::{GeomError, Signature};
use obata_core::modelfile::{canonical_json, load_model, model_to_value, LoadedModel};
use obata_core::obata::{
    bracket_check, build_coordinate_slice, build_instance, classify_case, pair_constant_check,
    span_curvature_check, InstanceKind, RiemannianRange,
};
use obata_core::tensor::{obata_verify, ScalarField, VerifyOptions};
use obata_core::linalg;
use serde_json::{json, Map, Value};
use std::fs;
use std::io::Write as _;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "obata", version, about = "Numerical toolkit for metrics carrying a scalar field with Hess(w) = -kappa w g")]
struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify that a field satisfies the equation on a model, by sampling.
    Verify(VerifyArgs),
    /// Trace one geodesic and write the trajectory as CSV.
    Geodesic(GeodesicArgs),
    /// Classify a (kappa, h) sign pair.
    Classify(ClassifyArgs),
    /// Probe geodesic completeness with a batch of seeded geodesics.
    Probe(ProbeArgs),
    /// Build a verified model instance and write it as a model file.
    Instance(InstanceArgs),
    /// Check the foliation identities for a family of fields.
    Foliation(FoliationArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to the JSON model file.
    #[arg(long)]
    model: String,
    /// Field expression; overrides the one in the file.
    #[arg(long)]
    omega: Option<String>,
    /// Field constant; overrides the one in the file.
    #[arg(long, allow_negative_numbers = true)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Residual ceiling for a passing verdict.
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,
    /// First-integral spread ceiling for a passing verdict.
    #[arg(long, default_value_t = 1e-6)]
    spread_tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long)]
    model: String,
    /// Initial position, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    /// Initial velocity, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    v0: String,
    /// Parameter budget.
    #[arg(long)]
    smax: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Sample spacing of the CSV rows.
    #[arg(long, default_value_t = 0.01)]
    grid: f64,
    /// Treat x0/v0 as flat ambient coordinates of a quadric model and
    /// integrate there (no chart limitation).
    #[arg(long)]
    ambient: bool,
    /// Field expression for a first-integral column (chart mode only).
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    kappa: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, allow_negative_numbers = true)]
    kappa: f64,
    #[arg(long, allow_negative_numbers = true)]
    h: f64,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    model: String,
    /// Number of seeded initial conditions (each runs both directions).
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Parameter budget per direction.
    #[arg(long, default_value_t = 50.0)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct InstanceArgs {
    /// Which construction to build: sine-warp, sinh-warp, cosh-warp,
    /// exp-half-plus, exp-half-minus, space-product, time-product,
    /// null-killing, or coordinate-slice.
    #[arg(long)]
    case: String,
    #[arg(long, allow_negative_numbers = true)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    h: f64,
    /// Model file providing the fiber (warped constructions only).
    #[arg(long)]
    fiber: Option<String>,
    /// coordinate-slice only: ambient signature as "neg,pos".
    #[arg(long)]
    ambient_signature: Option<String>,
    /// coordinate-slice only: which ambient coordinate to restrict.
    #[arg(long)]
    axis: Option<usize>,
    /// Write the model file here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct FoliationArgs {
    #[arg(long)]
    model: String,
    /// Field expressions; repeat the flag once per field.
    #[arg(long = "omegas", required = true)]
    omegas: Vec<String>,
    #[arg(long, allow_negative_numbers = true)]
    kappa: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ceiling for brackets, pair-constant spreads, and span-curvature gaps.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<String>,
}

/// A failed run, mapped to the exit-code contract.
enum Failure {
    /// Exit 1: the computation ran but the checked property does not hold.
    CheckFailed(String),
    /// Exit 2: the input itself is unusable.
    Malformed(String),
    /// Exit 3: the computation broke down; the point is carried into the
    /// report when one is known.
    Numerical { message: String, point: Option<Vec<f64>> },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::CheckFailed(_) => 1,
            Failure::Malformed(_) => 2,
            Failure::Numerical { .. } => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::CheckFailed(m) | Failure::Malformed(m) => m,
            Failure::Numerical { message, .. } => message,
        }
    }
}

/// Errors while reading inputs: everything is the caller's data.
fn malformed(e: GeomError) -> Failure {
    Failure::Malformed(e.to_string())
}

/// Errors after inputs were accepted: classify by cause.
fn numerical(e: GeomError) -> Failure {
    match e {
        GeomError::Invalid(m) => Failure::Malformed(m),
        GeomError::OutsideDomain { ref point, .. } | GeomError::SingularMetric { ref point } => {
            Failure::Numerical { message: e.to_string(), point: Some(point.clone()) }
        }
        other => Failure::Numerical { message: other.to_string(), point: None },
    }
}

fn write_output(out: &Option<String>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Malformed(format!("cannot write {path}: {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Single-line JSON with the same float convention as the canonical form.
/// The pretty printer ends every line at a separator, so joining the
/// trimmed lines yields valid compact JSON.
fn compact_json(v: &Value) -> String {
    canonical_json(v)
        .lines()
        .map(str::trim_start)
        .collect::<Vec<_>>()
        .join("")
}

fn load(path: &str) -> Result<LoadedModel, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Malformed(format!("cannot read {path}: {e}")))?;
    load_model(&text).map_err(malformed)
}

fn parse_csv_vec(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Malformed(format!("{what}: bad number '{s}': {e}")))
        })
        .collect()
}

fn fnum(x: f64) -> Value {
    json!(x)
}

fn report_header(command: &str, seed: Option<u64>) -> Map<String, Value> {
    let mut map = Map::new();
    map.insert("schema".into(), json!(1));
    map.insert("version".into(), json!(VERSION));
    map.insert("command".into(), json!(command));
    if let Some(s) = seed {
        map.insert("seed".into(), json!(s));
    }
    map
}

/// Resolve the field from flags or the model file; both pieces must come
/// from somewhere.
fn resolve_field(
    loaded: &LoadedModel,
    omega_flag: &Option<String>,
    kappa_flag: Option<f64>,
) -> Result<ScalarField, Failure> {
    let omega = match omega_flag {
        Some(text) => Expression::parse(text, loaded.model.dim())
            .map_err(|e| Failure::Malformed(format!("omega: {e}")))?,
        None => loaded
            .omega
            .clone()
            .ok_or_else(|| Failure::Malformed("no omega in the file; pass --omega".into()))?,
    };
    let kappa = kappa_flag
        .or(loaded.kappa)
        .ok_or_else(|| Failure::Malformed("no kappa in the file; pass --kappa".into()))?;
    if !kappa.is_finite() {
        return Err(Failure::Malformed("kappa must be finite".into()));
    }
    Ok(ScalarField::new(omega, kappa))
}

fn run_verify(args: &VerifyArgs) -> Result<u8, Failure> {
    let loaded = load(&args.model)?;
    let field = resolve_field(&loaded, &args.omega, args.kappa)?;
    let chart = loaded.model.chart().map_err(malformed)?;
    let opts = VerifyOptions {
        samples: args.samples,
        seed: args.seed,
        ..Default::default()
    };
    let mut map = report_header("verify", Some(args.seed));
    map.insert("samples_requested".into(), json!(args.samples));
    map.insert("kappa".into(), fnum(field.kappa));
    map.insert(
        "tolerances".into(),
        json!({"residual": args.residual_tol, "spread": args.spread_tol}),
    );
    let report = match obata_verify(&chart, &field, &opts) {
        Ok(r) => r,
        Err(e) => {
            let failure = numerical(e);
            if let Failure::Numerical { message, point } = &failure {
                map.insert("error".into(), json!(message));
                if let Some(p) = point {
                    map.insert(
                        "failing_point".into(),
                        Value::Array(p.iter().map(|&x| fnum(x)).collect()),
                    );
                }
                write_output(&args.out, &canonical_json(&Value::Object(map)))?;
            }
            return Err(failure);
        }
    };
    let pass = report.max_residual <= args.residual_tol
        && report.first_integral_spread <= args.spread_tol;
    map.insert("samples".into(), json!(report.samples));
    map.insert("max_residual".into(), fnum(report.max_residual));
    map.insert(
        "worst_point".into(),
        Value::Array(report.worst_point.iter().map(|&x| fnum(x)).collect()),
    );
    map.insert("first_integral_mean".into(), fnum(report.first_integral_mean));
    map.insert("first_integral_spread".into(), fnum(report.first_integral_spread));
    map.insert("omega_min".into(), fnum(report.omega_min));
    map.insert("omega_max".into(), fnum(report.omega_max));
    map.insert(
        "census".into(),
        json!({
            "timelike": report.census.timelike,
            "null": report.census.null,
            "spacelike": report.census.spacelike,
        }),
    );
    map.insert("pass".into(), json!(pass));
    write_output(&args.out, &canonical_json(&Value::Object(map)))?;
    Ok(if pass { 0 } else { 1 })
}

fn trajectory_csv(traj: &Trajectory, n: usize) -> String {
    let with_integral = traj.first_integrals.is_some();
    let mut head: Vec<String> = vec!["s".into()];
    head.extend((0..n).map(|i| format!("x{i}")));
    head.extend((0..n).map(|i| format!("v{i}")));
    head.push("norm".into());
    if with_integral {
        head.push("first_integral".into());
    }
    let mut out = head.join(",");
    out.push('\n');
    for (i, st) in traj.samples.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(2 * n + 3);
        row.push(format!("{:.16e}", st.s));
        row.extend(st.position.iter().map(|x| format!("{x:.16e}")));
        row.extend(st.velocity.iter().map(|v| format!("{v:.16e}")));
        row.push(format!("{:.16e}", traj.norms[i]));
        if let Some(fi) = &traj.first_integrals {
            row.push(format!("{:.16e}", fi[i]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn run_geodesic(args: &GeodesicArgs) -> Result<u8, Failure> {
    let loaded = load(&args.model)?;
    let x0 = parse_csv_vec(&args.x0, "--x0")?;
    let v0 = parse_csv_vec(&args.v0, "--v0")?;
    if !(args.smax > 0.0) {
        return Err(Failure::Malformed("--smax must be positive".into()));
    }
    if !(args.grid > 0.0) {
        return Err(Failure::Malformed("--grid must be positive".into()));
    }
    let opts = IntegrateOptions { tol: args.tol, sampling: Sampling::Grid(args.grid) };
    let state0 = GeodesicState::new(0.0, x0, v0);
    let chart = loaded.model.chart().map_err(malformed)?;
    let mut traj = if args.ambient {
        let Some(q) = chart.quadric() else {
            return Err(Failure::Malformed(
                "--ambient needs a quadric model".into(),
            ));
        };
        if state0.position.len() != q.ambient.dim() {
            return Err(Failure::Malformed(format!(
                "--ambient expects {} coordinates",
                q.ambient.dim()
            )));
        }
        integrate_ambient(q.ambient, q.level, &state0, args.smax, &opts).map_err(numerical)?
    } else {
        if state0.position.len() != chart.dim() {
            return Err(Failure::Malformed(format!(
                "the chart has {} coordinates",
                chart.dim()
            )));
        }
        integrate(&chart, &state0, args.smax, &opts).map_err(numerical)?
    };
    // A first-integral column needs both omega and kappa. An explicit flag
    // must resolve or the run fails; a file-only omega without any kappa is
    // quietly traced without the column.
    let want_integral = !args.ambient
        && (args.omega.is_some()
            || (loaded.omega.is_some() && (args.kappa.is_some() || loaded.kappa.is_some())));
    if want_integral {
        let field = resolve_field(&loaded, &args.omega, args.kappa)?;
        attach_first_integral(&mut traj, &chart, &field).map_err(numerical)?;
    }
    let dim = state0.position.len();
    write_output(&args.out, &trajectory_csv(&traj, dim))?;

    let mut footer = Map::new();
    footer.insert("termination".into(), json!(traj.termination.kind()));
    footer.insert("s_star".into(), fnum(traj.termination.s()));
    footer.insert("norm_drift".into(), fnum(traj.norm_drift));
    if let Termination::DomainEscape { last_inside, .. } = &traj.termination {
        footer.insert(
            "last_inside".into(),
            Value::Array(last_inside.position.iter().map(|&x| fnum(x)).collect()),
        );
    }
    if let Some(d) = traj.integral_drift {
        footer.insert("integral_drift".into(), fnum(d));
    }
    if let Some(d) = traj.constraint_drift {
        footer.insert("constraint_drift".into(), fnum(d));
    }
    eprintln!("{}", compact_json(&Value::Object(footer)));
    Ok(0)
}

fn run_classify(args: &ClassifyArgs) -> Result<u8, Failure> {
    let label = classify_case(args.kappa, args.h, 0.0);
    let mut map = report_header("classify", None);
    map.insert("kappa".into(), fnum(args.kappa));
    map.insert("h".into(), fnum(args.h));
    map.insert("kappa_sign".into(), json!(label.kappa_sign.symbol()));
    map.insert("h_sign".into(), json!(label.h_sign.symbol()));
    map.insert("omega_type".into(), json!(label.omega_type.name()));
    map.insert("structure".into(), json!(label.structure.tag()));
    map.insert("riemannian_range".into(), json!(label.riemannian.describe()));
    if let RiemannianRange::Bounded { bound } = label.riemannian {
        map.insert("riemannian_bound".into(), fnum(bound));
    }
    if let RiemannianRange::Outside { threshold } = label.riemannian {
        map.insert("riemannian_threshold".into(), fnum(threshold));
    }
    print!("{}", canonical_json(&Value::Object(map)));
    Ok(0)
}

fn run_probe(args: &ProbeArgs) -> Result<u8, Failure> {
    let loaded = load(&args.model)?;
    let chart = loaded.model.chart().map_err(malformed)?;
    if !(args.budget > 0.0) {
        return Err(Failure::Malformed("--budget must be positive".into()));
    }
    let ics = random_initial_conditions(&chart, args.samples, args.seed).map_err(numerical)?;
    let summary =
        completeness_probe(&chart, &ics, args.budget, args.tol).map_err(numerical)?;
    let mut map = report_header("probe", Some(args.seed));
    map.insert("samples".into(), json!(summary.total));
    map.insert("budget".into(), fnum(args.budget));
    map.insert("tol".into(), fnum(args.tol));
    map.insert("complete".into(), json!(summary.complete));
    map.insert("complete_fraction".into(), fnum(summary.complete_fraction));
    let escapes: Vec<Value> = summary
        .escapes
        .iter()
        .map(|e| {
            json!({
                "index": e.index,
                "direction": e.direction,
                "class": format!("{:?}", e.class).to_lowercase(),
                "s_star": e.s_star,
                "underflow": e.underflow,
                "position": e.position.iter().copied().collect::<Vec<f64>>(),
                "velocity": e.velocity.iter().copied().collect::<Vec<f64>>(),
            })
        })
        .collect();
    map.insert("escapes".into(), Value::Array(escapes));
    write_output(&args.out, &canonical_json(&Value::Object(map)))?;
    Ok(0)
}

fn parse_signature_flag(text: &str) -> Result<Signature, Failure> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Failure::Malformed(
            "--ambient-signature must be 'neg,pos'".into(),
        ));
    }
    let neg = parts[0]
        .parse::<usize>()
        .map_err(|e| Failure::Malformed(format!("--ambient-signature: {e}")))?;
    let pos = parts[1]
        .parse::<usize>()
        .map_err(|e| Failure::Malformed(format!("--ambient-signature: {e}")))?;
    Ok(Signature::new(neg, pos))
}

fn run_instance(args: &InstanceArgs) -> Result<u8, Failure> {
    let Some(kind) = InstanceKind::from_tag(&args.case) else {
        return Err(Failure::Malformed(format!(
            "unknown case '{}'; expected one of sine-warp, sinh-warp, cosh-warp, \
             exp-half-plus, exp-half-minus, space-product, time-product, null-killing, \
             coordinate-slice",
            args.case
        )));
    };
    let bundle = if kind == InstanceKind::CoordinateSlice {
        let sig_text = args.ambient_signature.as_deref().ok_or_else(|| {
            Failure::Malformed("coordinate-slice needs --ambient-signature".into())
        })?;
        let ambient = parse_signature_flag(sig_text)?;
        let axis = args
            .axis
            .ok_or_else(|| Failure::Malformed("coordinate-slice needs --axis".into()))?;
        if args.kappa == 0.0 {
            return Err(Failure::Malformed(
                "coordinate-slice needs nonzero --kappa (the level is 1/kappa)".into(),
            ));
        }
        build_coordinate_slice(ambient, 1.0 / args.kappa, axis).map_err(instance_failure)?
    } else {
        let fiber = match &args.fiber {
            Some(path) => {
                let loaded = load(path)?;
                if loaded.omega.is_some() || loaded.kappa.is_some() {
                    return Err(Failure::Malformed(
                        "the fiber file must not carry omega or kappa".into(),
                    ));
                }
                Some(loaded.model)
            }
            None => None,
        };
        build_instance(kind, args.kappa, args.h, fiber).map_err(instance_failure)?
    };
    let value = model_to_value(&bundle.model, Some(&bundle.omega), Some(bundle.kappa))
        .map_err(numerical)?;
    write_output(&args.out, &canonical_json(&value))?;
    eprintln!(
        "{}",
        compact_json(&json!({
            "case": kind.tag(),
            "kappa": bundle.kappa,
            "expected_h": bundle.expected_h,
            "max_residual": bundle.report.max_residual,
            "first_integral_mean": bundle.report.first_integral_mean,
        }))
    );
    Ok(0)
}

/// Instance construction distinguishes unusable requests (exit 2: bad case,
/// bad constants, curvature-mismatched fiber) from a construction that was
/// attempted and failed its own verification (exit 1).
fn instance_failure(e: GeomError) -> Failure {
    match e {
        GeomError::Invalid(m) => Failure::Malformed(m),
        GeomError::Numerical(m) => Failure::CheckFailed(m),
        other => numerical(other),
    }
}

fn run_foliation(args: &FoliationArgs) -> Result<u8, Failure> {
    let loaded = load(&args.model)?;
    let chart = loaded.model.chart().map_err(malformed)?;
    let n = chart.dim();
    if !args.kappa.is_finite() {
        return Err(Failure::Malformed("--kappa must be finite".into()));
    }
    let mut fields = Vec::with_capacity(args.omegas.len());
    for text in &args.omegas {
        let omega = Expression::parse(text, n)
            .map_err(|e| Failure::Malformed(format!("omega '{text}': {e}")))?;
        fields.push(ScalarField::new(omega, args.kappa));
    }
    let m = fields.len();
    let mut worst_gate = 0.0_f64;

    let mut brackets = Vec::new();
    let mut spans = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let resid = bracket_check(&chart, &fields[i], &fields[j], args.samples, args.seed)
                .map_err(numerical)?;
            worst_gate = worst_gate.max(resid);
            brackets.push(json!({"i": i, "j": j, "residual": resid}));
            match span_curvature_check(&chart, &fields[i], &fields[j], args.samples, args.seed) {
                Ok(r) => {
                    worst_gate = worst_gate.max(r.max_gap);
                    spans.push(json!({
                        "i": i, "j": j,
                        "max_gap": r.max_gap,
                        "used": r.used,
                        "skipped": r.skipped,
                    }));
                }
                Err(GeomError::Invalid(_)) => {
                    // Every sampled span was degenerate; report and move on.
                    spans.push(json!({"i": i, "j": j, "max_gap": Value::Null, "used": 0}));
                }
                Err(e) => return Err(numerical(e)),
            }
        }
    }

    let mut c_matrix = vec![vec![0.0; m]; m];
    let mut c_spreads = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let (mean, spread) =
                pair_constant_check(&chart, &fields[i], &fields[j], args.samples, args.seed)
                    .map_err(numerical)?;
            c_matrix[i][j] = mean;
            c_matrix[j][i] = mean;
            c_spreads[i][j] = spread;
            c_spreads[j][i] = spread;
            worst_gate = worst_gate.max(spread);
        }
    }

    // Rank of the gradient family across the samples.
    let pts = chart.sample_points(args.samples, args.seed).map_err(numerical)?;
    let target = m.min(n);
    let mut full = 0usize;
    for p in &pts {
        let mut rows = nalgebra::DMatrix::zeros(m, n);
        for (a, f) in fields.iter().enumerate() {
            let low = f.gradient_lower(p).map_err(numerical)?;
            for c in 0..n {
                rows[(a, c)] = low[c];
            }
        }
        if linalg::rank(&rows, 1e-8) == target {
            full += 1;
        }
    }
    let full_fraction = full as f64 / pts.len() as f64;

    let pass = worst_gate <= args.tol;
    let mut map = report_header("foliation", Some(args.seed));
    map.insert("kappa".into(), fnum(args.kappa));
    map.insert("samples".into(), json!(pts.len()));
    map.insert("tol".into(), fnum(args.tol));
    map.insert(
        "omegas".into(),
        Value::Array(args.omegas.iter().map(|s| json!(s)).collect()),
    );
    map.insert("brackets".into(), Value::Array(brackets));
    map.insert(
        "c_matrix".into(),
        json!(c_matrix),
    );
    map.insert("c_spreads".into(), json!(c_spreads));
    map.insert("span_curvatures".into(), Value::Array(spans));
    map.insert(
        "rank".into(),
        json!({
            "target": target,
            "full_fraction": full_fraction,
            "samples": pts.len(),
        }),
    );
    map.insert("worst_gate".into(), fnum(worst_gate));
    map.insert("pass".into(), json!(pass));
    write_output(&args.out, &canonical_json(&Value::Object(map)))?;
    Ok(if pass { 0 } else { 1 })
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Verify(a) => run_verify(a),
        Command::Geodesic(a) => run_geodesic(a),
        Command::Classify(a) => run_classify(a),
        Command::Probe(a) => run_probe(a),
        Command::Instance(a) => run_instance(a),
        Command::Foliation(a) => run_foliation(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let mut err = std::io::stderr();
            let _ = writeln!(err, "error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

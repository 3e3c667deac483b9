//! JSON model files: a versioned, fail-closed schema describing a metric
//! model, optionally bundled with a scalar field and its constant, plus a
//! canonical serializer whose output is byte-stable.
//!
//! The top level requires `"schema": 1` and rejects unknown fields. Bounds
//! are `[lo, hi]` pairs per coordinate; omitting them leaves the chart
//! unbounded (quadric charts still enforce their radicand floor).

use crate::expr::Expression;
use crate::manifold::{
    unbounded_box, Bounds, Branch, GeomError, MetricModel, QuadricChart, Signature,
};
use serde::Deserialize;
use serde_json::{json, Map, Value};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u64 = 1;

/// Seed for the load-time inertia sampling that cross-checks signatures.
const VALIDATE_SEED: u64 = 7;

fn invalid<T>(msg: impl Into<String>) -> Result<T, GeomError> {
    Err(GeomError::Invalid(msg.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    solved_axis: usize,
    branch: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    schema: Option<u64>,
    #[serde(rename = "type")]
    kind: Option<String>,
    dimension: Option<usize>,
    signature: Option<[usize; 2]>,
    bounds: Option<Vec<[f64; 2]>>,
    // quadric fields
    ambient_signature: Option<[usize; 2]>,
    level: Option<f64>,
    chart: Option<RawChart>,
    // warped fields
    base_sign: Option<i8>,
    alpha: Option<String>,
    t_interval: Option<[f64; 2]>,
    fiber: Option<Box<RawModel>>,
    // custom fields
    entries: Option<Vec<Vec<String>>>,
    // optional bundled field
    omega: Option<String>,
    kappa: Option<f64>,
}

/// A model file after loading and validation.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub model: MetricModel,
    pub omega: Option<Expression>,
    pub kappa: Option<f64>,
}

fn ensure_absent<T>(opt: &Option<T>, field: &str, kind: &str) -> Result<(), GeomError> {
    if opt.is_some() {
        return invalid(format!("field '{field}' does not apply to a {kind} model"));
    }
    Ok(())
}

fn parse_signature(pair: [usize; 2]) -> Signature {
    Signature::new(pair[0], pair[1])
}

fn parse_bounds(raw: &Option<Vec<[f64; 2]>>, n: usize) -> Result<Bounds, GeomError> {
    match raw {
        None => Ok(unbounded_box(n)),
        Some(pairs) => {
            if pairs.len() != n {
                return invalid(format!(
                    "bounds list {} axes but the chart has {n}",
                    pairs.len()
                ));
            }
            for &[lo, hi] in pairs {
                if !(lo < hi) {
                    return invalid(format!("bounds pair [{lo}, {hi}] is not an interval"));
                }
            }
            Ok(pairs.iter().map(|&[lo, hi]| (lo, hi)).collect())
        }
    }
}

fn build_model(raw: &RawModel, top: bool) -> Result<MetricModel, GeomError> {
    if top {
        match raw.schema {
            Some(SCHEMA_VERSION) => {}
            Some(other) => return invalid(format!("unsupported schema version {other}")),
            None => return invalid("missing required field 'schema'"),
        }
    } else {
        ensure_absent(&raw.schema, "schema", "nested fiber")?;
        ensure_absent(&raw.omega, "omega", "nested fiber")?;
        ensure_absent(&raw.kappa, "kappa", "nested fiber")?;
    }
    let kind = raw
        .kind
        .as_deref()
        .ok_or_else(|| GeomError::Invalid("missing required field 'type'".into()))?;
    let model = match kind {
        "flat" => {
            ensure_absent(&raw.ambient_signature, "ambient_signature", "flat")?;
            ensure_absent(&raw.level, "level", "flat")?;
            ensure_absent(&raw.chart, "chart", "flat")?;
            ensure_absent(&raw.base_sign, "base_sign", "flat")?;
            ensure_absent(&raw.alpha, "alpha", "flat")?;
            ensure_absent(&raw.t_interval, "t_interval", "flat")?;
            ensure_absent(&raw.fiber, "fiber", "flat")?;
            ensure_absent(&raw.entries, "entries", "flat")?;
            let signature = raw
                .signature
                .map(parse_signature)
                .ok_or_else(|| GeomError::Invalid("a flat model needs 'signature'".into()))?;
            let bounds = parse_bounds(&raw.bounds, signature.dim())?;
            MetricModel::Flat { signature, bounds }
        }
        "quadric" => {
            ensure_absent(&raw.base_sign, "base_sign", "quadric")?;
            ensure_absent(&raw.alpha, "alpha", "quadric")?;
            ensure_absent(&raw.t_interval, "t_interval", "quadric")?;
            ensure_absent(&raw.fiber, "fiber", "quadric")?;
            ensure_absent(&raw.entries, "entries", "quadric")?;
            let ambient = raw
                .ambient_signature
                .map(parse_signature)
                .ok_or_else(|| {
                    GeomError::Invalid("a quadric model needs 'ambient_signature'".into())
                })?;
            let level = raw
                .level
                .ok_or_else(|| GeomError::Invalid("a quadric model needs 'level'".into()))?;
            if level == 0.0 || !level.is_finite() {
                return invalid("quadric level must be finite and nonzero");
            }
            let chart_raw = raw
                .chart
                .as_ref()
                .ok_or_else(|| GeomError::Invalid("a quadric model needs 'chart'".into()))?;
            let branch = match chart_raw.branch.as_str() {
                "+" => Branch::Plus,
                "-" => Branch::Minus,
                other => return invalid(format!("branch must be '+' or '-', got '{other}'")),
            };
            if chart_raw.solved_axis >= ambient.dim() {
                return invalid(format!(
                    "solved_axis {} out of range for ambient dimension {}",
                    chart_raw.solved_axis,
                    ambient.dim()
                ));
            }
            let bounds = parse_bounds(&raw.bounds, ambient.dim() - 1)?;
            MetricModel::Quadric {
                ambient,
                level,
                chart: QuadricChart { solved_axis: chart_raw.solved_axis, branch },
                bounds,
            }
        }
        "warped" => {
            ensure_absent(&raw.ambient_signature, "ambient_signature", "warped")?;
            ensure_absent(&raw.level, "level", "warped")?;
            ensure_absent(&raw.chart, "chart", "warped")?;
            ensure_absent(&raw.entries, "entries", "warped")?;
            ensure_absent(&raw.bounds, "bounds", "warped")?;
            let base_sign = raw
                .base_sign
                .ok_or_else(|| GeomError::Invalid("a warped model needs 'base_sign'".into()))?;
            if base_sign != 1 && base_sign != -1 {
                return invalid(format!("base_sign must be 1 or -1, got {base_sign}"));
            }
            let alpha_text = raw
                .alpha
                .as_deref()
                .ok_or_else(|| GeomError::Invalid("a warped model needs 'alpha'".into()))?;
            let alpha = Expression::parse(alpha_text, 1)
                .map_err(|e| GeomError::Invalid(format!("alpha: {e}")))?;
            let [a, b] = raw
                .t_interval
                .ok_or_else(|| GeomError::Invalid("a warped model needs 't_interval'".into()))?;
            if !(a < b) {
                return invalid(format!("t_interval [{a}, {b}] is not an interval"));
            }
            let fiber_raw = raw
                .fiber
                .as_ref()
                .ok_or_else(|| GeomError::Invalid("a warped model needs 'fiber'".into()))?;
            let fiber = build_model(fiber_raw, false)?;
            MetricModel::Warped { base_sign, alpha, t_interval: (a, b), fiber: Box::new(fiber) }
        }
        "custom" => {
            ensure_absent(&raw.ambient_signature, "ambient_signature", "custom")?;
            ensure_absent(&raw.level, "level", "custom")?;
            ensure_absent(&raw.chart, "chart", "custom")?;
            ensure_absent(&raw.base_sign, "base_sign", "custom")?;
            ensure_absent(&raw.alpha, "alpha", "custom")?;
            ensure_absent(&raw.t_interval, "t_interval", "custom")?;
            ensure_absent(&raw.fiber, "fiber", "custom")?;
            let signature = raw
                .signature
                .map(parse_signature)
                .ok_or_else(|| GeomError::Invalid("a custom model needs 'signature'".into()))?;
            let n = signature.dim();
            let rows = raw
                .entries
                .as_ref()
                .ok_or_else(|| GeomError::Invalid("a custom model needs 'entries'".into()))?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return invalid(format!("entries must form an {n} x {n} matrix"));
            }
            let mut entries = Vec::with_capacity(n * n);
            for row in rows {
                for text in row {
                    entries.push(
                        Expression::parse(text, n)
                            .map_err(|e| GeomError::Invalid(format!("entries: {e}")))?,
                    );
                }
            }
            let bounds = parse_bounds(&raw.bounds, n)?;
            MetricModel::Custom { signature, entries, bounds }
        }
        other => return invalid(format!("unknown model type '{other}'")),
    };
    if let Some(dim) = raw.dimension {
        if dim != model.dim() {
            return invalid(format!(
                "declared dimension {dim} does not match the model's {}",
                model.dim()
            ));
        }
    }
    if !matches!(kind, "flat" | "custom") {
        if let Some(pair) = raw.signature {
            let declared = parse_signature(pair);
            let induced = model.signature()?;
            if declared != induced {
                return invalid(format!(
                    "declared signature ({}, {}) does not match the induced ({}, {})",
                    declared.neg, declared.pos, induced.neg, induced.pos
                ));
            }
        }
    }
    Ok(model)
}

/// Parse and validate a model file. The chart is constructed and sampled so
/// inconsistent signatures or empty domains fail at load time.
pub fn load_model(text: &str) -> Result<LoadedModel, GeomError> {
    let raw: RawModel = serde_json::from_str(text)
        .map_err(|e| GeomError::Invalid(format!("model file does not match the schema: {e}")))?;
    let model = build_model(&raw, true)?;
    let chart = model.chart()?;
    chart.validate_samples(VALIDATE_SEED)?;
    let omega = match &raw.omega {
        Some(text) => Some(
            Expression::parse(text, model.dim())
                .map_err(|e| GeomError::Invalid(format!("omega: {e}")))?,
        ),
        None => None,
    };
    let kappa = raw.kappa;
    if kappa.is_some_and(|k| !k.is_finite()) {
        return invalid("kappa must be finite");
    }
    Ok(LoadedModel { model, omega, kappa })
}

fn bounds_to_value(bounds: &Bounds) -> Option<Value> {
    if bounds.iter().all(|&(lo, hi)| lo.is_infinite() && hi.is_infinite()) {
        return None;
    }
    Some(Value::Array(
        bounds.iter().map(|&(lo, hi)| json!([lo, hi])).collect(),
    ))
}

fn model_body(model: &MetricModel, top: bool) -> Result<Map<String, Value>, GeomError> {
    let mut map = Map::new();
    if top {
        map.insert("schema".into(), json!(SCHEMA_VERSION));
        map.insert("dimension".into(), json!(model.dim()));
    }
    match model {
        MetricModel::Flat { signature, bounds } => {
            map.insert("type".into(), json!("flat"));
            map.insert("signature".into(), json!([signature.neg, signature.pos]));
            if let Some(b) = bounds_to_value(bounds) {
                map.insert("bounds".into(), b);
            }
        }
        MetricModel::Quadric { ambient, level, chart, bounds } => {
            map.insert("type".into(), json!("quadric"));
            map.insert("ambient_signature".into(), json!([ambient.neg, ambient.pos]));
            map.insert("level".into(), json!(level));
            map.insert(
                "chart".into(),
                json!({
                    "solved_axis": chart.solved_axis,
                    "branch": if chart.branch == Branch::Plus { "+" } else { "-" },
                }),
            );
            if let Some(b) = bounds_to_value(bounds) {
                map.insert("bounds".into(), b);
            }
        }
        MetricModel::Warped { base_sign, alpha, t_interval, fiber } => {
            map.insert("type".into(), json!("warped"));
            map.insert("base_sign".into(), json!(base_sign));
            map.insert("alpha".into(), json!(alpha.print()));
            map.insert("t_interval".into(), json!([t_interval.0, t_interval.1]));
            map.insert("fiber".into(), Value::Object(model_body(fiber, false)?));
        }
        MetricModel::Custom { signature, entries, bounds } => {
            let n = signature.dim();
            map.insert("type".into(), json!("custom"));
            map.insert("signature".into(), json!([signature.neg, signature.pos]));
            let rows: Vec<Value> = (0..n)
                .map(|i| {
                    Value::Array(
                        (0..n)
                            .map(|j| Value::String(entries[i * n + j].print()))
                            .collect(),
                    )
                })
                .collect();
            map.insert("entries".into(), Value::Array(rows));
            if let Some(b) = bounds_to_value(bounds) {
                map.insert("bounds".into(), b);
            }
        }
    }
    Ok(map)
}

/// Serialize a model (and optional bundled field) as a schema-1 JSON value.
pub fn model_to_value(
    model: &MetricModel,
    omega: Option<&Expression>,
    kappa: Option<f64>,
) -> Result<Value, GeomError> {
    let mut map = model_body(model, true)?;
    if let Some(w) = omega {
        map.insert("omega".into(), Value::String(w.print()));
    }
    if let Some(k) = kappa {
        map.insert("kappa".into(), json!(k));
    }
    Ok(Value::Object(map))
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    const STEP: usize = 2;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                // 17 significant digits: enough to round-trip any f64, and
                // a fixed width so reports are byte-stable.
                out.push_str(&format!("{:.16e}", n.as_f64().unwrap()));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                write_value(out, item, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&" ".repeat(indent + STEP));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, indent + STEP);
            }
            out.push('\n');
            out.push_str(&" ".repeat(indent));
            out.push('}');
        }
    }
}

/// Canonical text form: sorted keys (the map type is ordered), two-space
/// indent, floats at 17 significant digits, one trailing newline. Identical
/// values produce identical bytes.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

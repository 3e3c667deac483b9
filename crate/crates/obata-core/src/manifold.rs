//! Metric models and their charts.
//!
//! A `MetricModel` describes geometry (flat space, a quadric hypersurface in
//! a flat pseudo-Euclidean ambient, a warped product over a one-dimensional
//! base, or an explicit coordinate metric). Compiling a model yields a
//! `Chart`: one coordinate patch with every metric entry synthesized as an
//! `Expression`, so the whole curvature stack runs on exact second-order
//! jets regardless of which model produced the metric.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::expr::{EvalError, Expression, Jet2, UnaryOp};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    /// Number of timelike (negative) directions, listed first.
    pub neg: usize,
    /// Number of spacelike (positive) directions.
    pub pos: usize,
}

impl Signature {
    pub fn new(neg: usize, pos: usize) -> Signature {
        Signature { neg, pos }
    }

    pub fn dim(&self) -> usize {
        self.neg + self.pos
    }

    /// Canonical diagonal: `neg` entries of -1 followed by `pos` of +1.
    pub fn eps(&self) -> Vec<f64> {
        let mut e = vec![-1.0; self.neg];
        e.extend(std::iter::repeat(1.0).take(self.pos));
        e
    }

    pub fn is_riemannian(&self) -> bool {
        self.neg == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Graph chart for a quadric: the `solved_axis` ambient coordinate is
/// expressed as `branch * sqrt(radicand)` over the remaining ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadricChart {
    pub solved_axis: usize,
    pub branch: Branch,
}

pub type Bounds = Vec<(f64, f64)>;

#[derive(Clone, Debug)]
pub enum MetricModel {
    Flat {
        signature: Signature,
        bounds: Bounds,
    },
    /// Level set `<x, x> = level` in a flat ambient of the given signature,
    /// carrying the pullback metric.
    Quadric {
        ambient: Signature,
        level: f64,
        chart: QuadricChart,
        bounds: Bounds,
    },
    /// `base_sign * dt^2 + alpha(t)^2 * g_fiber` over the interval.
    Warped {
        base_sign: i8,
        alpha: Expression,
        t_interval: (f64, f64),
        fiber: Box<MetricModel>,
    },
    /// Explicit symmetric matrix of entry expressions (row-major n*n).
    Custom {
        signature: Signature,
        entries: Vec<Expression>,
        bounds: Bounds,
    },
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum GeomError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("point {point:?} is outside the chart domain ({why})")]
    OutsideDomain { point: Vec<f64>, why: String },
    #[error("metric is numerically singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GeomError> {
    Err(GeomError::Invalid(msg.into()))
}

impl MetricModel {
    pub fn dim(&self) -> usize {
        match self {
            MetricModel::Flat { signature, .. } => signature.dim(),
            MetricModel::Quadric { ambient, .. } => ambient.dim() - 1,
            MetricModel::Warped { fiber, .. } => 1 + fiber.dim(),
            MetricModel::Custom { signature, .. } => signature.dim(),
        }
    }

    /// Signature of the induced metric.
    pub fn signature(&self) -> Result<Signature, GeomError> {
        Ok(match self {
            MetricModel::Flat { signature, .. } | MetricModel::Custom { signature, .. } => {
                *signature
            }
            MetricModel::Quadric { ambient, level, .. } => {
                // The normal direction has <x,x> = level, so a positive
                // level removes a spacelike direction and a negative one a
                // timelike direction.
                if *level > 0.0 {
                    if ambient.pos == 0 {
                        return invalid("positive-level quadric needs a spacelike ambient axis");
                    }
                    Signature::new(ambient.neg, ambient.pos - 1)
                } else {
                    if ambient.neg == 0 {
                        return invalid("negative-level quadric needs a timelike ambient axis");
                    }
                    Signature::new(ambient.neg - 1, ambient.pos)
                }
            }
            MetricModel::Warped { base_sign, fiber, .. } => {
                let f = fiber.signature()?;
                if *base_sign < 0 {
                    Signature::new(f.neg + 1, f.pos)
                } else {
                    Signature::new(f.neg, f.pos + 1)
                }
            }
        })
    }

    /// Compile the model into its chart. Validates structure but not the
    /// sampled numeric invariants (see `Chart::validate_samples`).
    pub fn chart(&self) -> Result<Chart, GeomError> {
        match self {
            MetricModel::Flat { signature, bounds } => {
                let n = signature.dim();
                if n == 0 {
                    return invalid("zero-dimensional model");
                }
                check_bounds(bounds, n)?;
                let eps = signature.eps();
                let mut entries = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let v = if i == j { eps[i] } else { 0.0 };
                        entries.push(Expression::constant(n, v));
                    }
                }
                Ok(Chart {
                    dim: n,
                    signature: *signature,
                    entries,
                    bounds: bounds.clone(),
                    constraints: vec![],
                    quadric: None,
                })
            }
            MetricModel::Quadric { ambient, level, chart, bounds } => {
                compile_quadric(*ambient, *level, *chart, bounds)
            }
            MetricModel::Warped { base_sign, alpha, t_interval, fiber } => {
                compile_warped(*base_sign, alpha, *t_interval, fiber)
            }
            MetricModel::Custom { signature, entries, bounds } => {
                let n = signature.dim();
                if n == 0 {
                    return invalid("zero-dimensional model");
                }
                if entries.len() != n * n {
                    return invalid(format!(
                        "custom metric needs {} entries, got {}",
                        n * n,
                        entries.len()
                    ));
                }
                for e in entries {
                    if e.dim() != n {
                        return invalid("custom metric entry has wrong dimension");
                    }
                }
                check_bounds(bounds, n)?;
                Ok(Chart {
                    dim: n,
                    signature: *signature,
                    entries: entries.clone(),
                    bounds: bounds.clone(),
                    constraints: vec![],
                    quadric: None,
                })
            }
        }
    }
}

fn check_bounds(bounds: &Bounds, n: usize) -> Result<(), GeomError> {
    if bounds.len() != n {
        return invalid(format!("domain box needs {n} intervals, got {}", bounds.len()));
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return invalid(format!("empty or invalid domain interval ({lo}, {hi})"));
        }
    }
    Ok(())
}

pub fn unbounded_box(n: usize) -> Bounds {
    vec![(f64::NEG_INFINITY, f64::INFINITY); n]
}

/// Data a quadric chart keeps for embedding into its ambient space.
#[derive(Clone, Debug)]
pub struct QuadricData {
    pub ambient: Signature,
    pub level: f64,
    pub chart: QuadricChart,
    /// Radicand expression in chart coordinates; the solved coordinate is
    /// `branch * sqrt(radicand)`.
    pub radicand: Expression,
}

impl QuadricData {
    /// Ambient axis carried by chart coordinate `i`.
    pub fn axis_of(&self, i: usize) -> usize {
        if i < self.chart.solved_axis {
            i
        } else {
            i + 1
        }
    }
}

/// One coordinate patch of a model: metric entries as expressions over an
/// open box domain, plus inequality constraints (quadric radicands).
#[derive(Clone, Debug)]
pub struct Chart {
    dim: usize,
    signature: Signature,
    /// Row-major n*n; only the upper triangle is read, the mirror is
    /// enforced structurally.
    entries: Vec<Expression>,
    bounds: Bounds,
    /// Each expression must stay strictly greater than its floor.
    constraints: Vec<(Expression, f64)>,
    quadric: Option<QuadricData>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn quadric(&self) -> Option<&QuadricData> {
        self.quadric.as_ref()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expression {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[i * self.dim + j]
    }

    /// Domain membership: inside the open box and every constraint holds.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(x[i] > lo && x[i] < hi) {
                return false;
            }
        }
        for (c, floor) in &self.constraints {
            match c.eval_value(x) {
                Ok(v) if v > *floor => {}
                _ => return false,
            }
        }
        true
    }

    fn require_inside(&self, x: &[f64]) -> Result<(), GeomError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeomError::OutsideDomain {
                point: x.to_vec(),
                why: "box or constraint violated".into(),
            })
        }
    }

    /// Metric matrix at `x`; exactly symmetric by construction.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        self.require_inside(x)?;
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.entries[i * n + j].eval_value(x)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Second-order jets of every metric entry at `x` (row-major, mirrored).
    pub fn metric_jets_at(&self, x: &[f64]) -> Result<Vec<Jet2>, GeomError> {
        self.require_inside(x)?;
        self.metric_jets_lenient(x)
    }

    /// Jets without the domain membership check. Finite-difference stencils
    /// centered on an interior point may poke one step past the open box;
    /// the entry expressions are still evaluable there (or report their own
    /// domain error).
    pub(crate) fn metric_jets_lenient(&self, x: &[f64]) -> Result<Vec<Jet2>, GeomError> {
        let n = self.dim;
        let mut jets: Vec<Option<Jet2>> = vec![None; n * n];
        for i in 0..n {
            for j in i..n {
                let jet = self.entries[i * n + j].eval_jet2(x)?;
                if i != j {
                    jets[j * n + i] = Some(jet.clone());
                }
                jets[i * n + j] = Some(jet);
            }
        }
        Ok(jets.into_iter().map(|j| j.unwrap()).collect())
    }

    pub fn inverse_metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        let g = self.metric_at(x)?;
        invert_metric(&g, x)
    }

    /// Causal type of a tangent vector at `x`, thresholded at `tol` times
    /// the positive proxy `sum |g_ij||v_i||v_j|`.
    pub fn classify_tangent(
        &self,
        x: &[f64],
        v: &DVector<f64>,
        tol: f64,
    ) -> Result<VectorType, GeomError> {
        let g = self.metric_at(x)?;
        Ok(classify_with_metric(&g, v, tol))
    }

    /// Embed a chart point into the quadric's ambient space. Only the sign
    /// of the radicand is enforced here, so the embedding extends up to the
    /// chart's true edge.
    pub fn quadric_embed(&self, x: &[f64]) -> Result<DVector<f64>, GeomError> {
        let q = self
            .quadric
            .as_ref()
            .ok_or_else(|| GeomError::Invalid("not a quadric chart".into()))?;
        if x.len() != self.dim {
            return invalid("point dimension mismatch");
        }
        let u = q.radicand.eval_value(x)?;
        if u < 0.0 {
            return Err(GeomError::OutsideDomain {
                point: x.to_vec(),
                why: format!("radicand {u} is negative"),
            });
        }
        let mut amb = DVector::zeros(self.dim + 1);
        for i in 0..self.dim {
            amb[q.axis_of(i)] = x[i];
        }
        amb[q.chart.solved_axis] = q.chart.branch.sign() * u.sqrt();
        Ok(amb)
    }

    /// Inverse of `quadric_embed` for ambient points on this chart's branch.
    pub fn quadric_project(&self, amb: &DVector<f64>) -> Result<Vec<f64>, GeomError> {
        let q = self
            .quadric
            .as_ref()
            .ok_or_else(|| GeomError::Invalid("not a quadric chart".into()))?;
        if amb.len() != self.dim + 1 {
            return invalid("ambient point dimension mismatch");
        }
        let solved = amb[q.chart.solved_axis];
        if solved * q.chart.branch.sign() < 0.0 {
            return Err(GeomError::OutsideDomain {
                point: amb.iter().copied().collect(),
                why: "wrong branch".into(),
            });
        }
        Ok((0..self.dim).map(|i| amb[q.axis_of(i)]).collect())
    }

    /// Differential of the embedding: maps chart tangents to ambient ones.
    pub fn quadric_push(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>, GeomError> {
        let q = self
            .quadric
            .as_ref()
            .ok_or_else(|| GeomError::Invalid("not a quadric chart".into()))?;
        let jet = q.radicand.eval_jet2(x)?;
        if jet.v <= 0.0 {
            return Err(GeomError::OutsideDomain {
                point: x.to_vec(),
                why: format!("radicand {} is not positive", jet.v),
            });
        }
        let s = q.chart.branch.sign();
        let root = jet.v.sqrt();
        let mut out = DVector::zeros(self.dim + 1);
        let mut dsolved = 0.0;
        for i in 0..self.dim {
            out[q.axis_of(i)] = v[i];
            dsolved += s * jet.g[i] / (2.0 * root) * v[i];
        }
        out[q.chart.solved_axis] = dsolved;
        Ok(out)
    }

    /// Region used by samplers and validators: the declared box clipped to
    /// [-2, 2] on axes whose declared extent is unbounded or wider.
    pub fn sampling_region(&self) -> Bounds {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (lo.max(-2.0), hi.min(2.0)))
            .collect()
    }

    /// Deterministic point sampler: a small inclusive lattice (which lands
    /// on integer strata where degenerate loci tend to sit) plus seeded
    /// uniform fill, all filtered by the domain predicate.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, GeomError> {
        let region = self.sampling_region();
        for &(lo, hi) in &region {
            if !(lo < hi) {
                return invalid("sampling region is empty on some axis");
            }
        }
        let n = self.dim;
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(count);

        let budget = count / 2;
        let k = [5usize, 3]
            .into_iter()
            .find(|k| k.checked_pow(n as u32).is_some_and(|total| total <= budget.max(9)));
        if let Some(k) = k {
            let mut idx = vec![0usize; n];
            loop {
                let p: Vec<f64> = (0..n)
                    .map(|i| {
                        let (lo, hi) = region[i];
                        lo + (hi - lo) * idx[i] as f64 / (k - 1) as f64
                    })
                    .collect();
                if self.contains(&p) && pts.len() < count {
                    pts.push(p);
                }
                let mut carry = 0;
                loop {
                    idx[carry] += 1;
                    if idx[carry] < k {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                    if carry == n {
                        break;
                    }
                }
                if carry == n {
                    break;
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut attempts = 0usize;
        let max_attempts = 1000 * count.max(1);
        while pts.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(GeomError::Numerical(
                    "sampler could not find enough domain points".into(),
                ));
            }
            let p: Vec<f64> = region
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect();
            if self.contains(&p) {
                pts.push(p);
            }
        }
        Ok(pts)
    }

    /// Sampled structural checks: symmetry of declared entries and inertia
    /// matching the declared signature.
    pub fn validate_samples(&self, seed: u64) -> Result<(), GeomError> {
        let pts = self.sample_points(24, seed)?;
        let n = self.dim;
        for p in &pts {
            // Raw (unmirrored) entries must agree across the diagonal.
            let mut scale = 0.0f64;
            let mut worst = 0.0f64;
            let mut raw = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    raw[i * n + j] = self.entries[i * n + j].eval_value(p)?;
                    scale = scale.max(raw[i * n + j].abs());
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    worst = worst.max((raw[i * n + j] - raw[j * n + i]).abs());
                }
            }
            if worst > 1e-12 * scale.max(1.0) {
                return invalid(format!(
                    "metric entries are asymmetric at {p:?} (deviation {worst:.3e})"
                ));
            }
            let g = self.metric_at(p)?;
            let (neg, zero, pos) = linalg::inertia(&g, 1e-10);
            if zero != 0 || neg != self.signature.neg || pos != self.signature.pos {
                return invalid(format!(
                    "metric inertia ({neg},{zero},{pos}) at {p:?} does not match declared signature ({},{})",
                    self.signature.neg, self.signature.pos
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorType {
    Spacelike,
    Timelike,
    Null,
}

impl VectorType {
    pub fn name(self) -> &'static str {
        match self {
            VectorType::Spacelike => "spacelike",
            VectorType::Timelike => "timelike",
            VectorType::Null => "null",
        }
    }
}

pub fn classify_with_metric(g: &DMatrix<f64>, v: &DVector<f64>, tol: f64) -> VectorType {
    let q = linalg::bilinear(g, v, v);
    let s = linalg::abs_bilinear(g, v, v);
    if q < -tol * s {
        VectorType::Timelike
    } else if q > tol * s {
        VectorType::Spacelike
    } else {
        VectorType::Null
    }
}

pub fn invert_metric(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
    g.clone()
        .try_inverse()
        .ok_or_else(|| GeomError::SingularMetric { point: x.to_vec() })
}

fn compile_quadric(
    ambient: Signature,
    level: f64,
    chart: QuadricChart,
    bounds: &Bounds,
) -> Result<Chart, GeomError> {
    let nn = ambient.dim();
    if nn < 2 {
        return invalid("quadric ambient must have dimension at least 2");
    }
    if level == 0.0 || !level.is_finite() {
        return invalid("quadric level must be finite and nonzero");
    }
    if chart.solved_axis >= nn {
        return invalid(format!("solved axis {} out of range", chart.solved_axis));
    }
    let n = nn - 1;
    check_bounds(bounds, n)?;
    let model = MetricModel::Quadric { ambient, level, chart, bounds: bounds.clone() };
    let signature = model.signature()?;

    let amb_eps = ambient.eps();
    let k = chart.solved_axis;
    let eps_k = amb_eps[k];
    let axis_of = |i: usize| if i < k { i } else { i + 1 };

    // Q(x) = sum_i eps_i x_i^2 over the chart coordinates.
    let mut q_expr: Option<Expression> = None;
    for i in 0..n {
        let term = Expression::scaled(amb_eps[axis_of(i)], Expression::var(n, i).pow_const(2.0));
        q_expr = Some(match q_expr {
            None => term,
            Some(acc) => acc + term,
        });
    }
    let q_expr = q_expr.unwrap();
    // radicand = eps_k * (level - Q); the solved coordinate is
    // branch * sqrt(radicand).
    let radicand = Expression::scaled(eps_k, Expression::constant(n, level) - q_expr);

    // Pullback metric: g_ij = eps_i delta_ij + eps_i eps_j eps_k x_i x_j / radicand.
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let ei = amb_eps[axis_of(i)];
            let ej = amb_eps[axis_of(j)];
            let coeff = ei * ej * eps_k;
            let cross = Expression::scaled(coeff, Expression::var(n, i) * Expression::var(n, j))
                / radicand.clone();
            let e = if i == j {
                Expression::constant(n, ei) + cross
            } else {
                cross
            };
            entries.push(e);
        }
    }

    let floor = 0.01 * level.abs();
    Ok(Chart {
        dim: n,
        signature,
        entries,
        bounds: bounds.clone(),
        constraints: vec![(radicand.clone(), floor)],
        quadric: Some(QuadricData { ambient, level, chart, radicand }),
    })
}

fn compile_warped(
    base_sign: i8,
    alpha: &Expression,
    t_interval: (f64, f64),
    fiber: &MetricModel,
) -> Result<Chart, GeomError> {
    if base_sign != 1 && base_sign != -1 {
        return invalid("warped base sign must be +1 or -1");
    }
    if alpha.dim() != 1 {
        return invalid("warping function must be an expression in t alone");
    }
    if !(t_interval.0 < t_interval.1) {
        return invalid("empty t interval");
    }
    let fchart = fiber.chart()?;
    let m = fchart.dim;
    let n = m + 1;

    // alpha must stay positive; probe a grid over the (clipped) interval.
    let lo = t_interval.0.max(-50.0);
    let hi = t_interval.1.min(50.0);
    for i in 0..=64 {
        let t = lo + (hi - lo) * i as f64 / 64.0;
        if t <= t_interval.0 || t >= t_interval.1 {
            continue;
        }
        let v = alpha.eval_value(&[t])?;
        if !(v > 0.0) {
            return invalid(format!("warping function is not positive at t={t} (value {v})"));
        }
    }

    let alpha_n = alpha.shift_vars(0, n);
    let alpha_sq = alpha_n.clone() * alpha_n.clone();

    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = if i == 0 && j == 0 {
                Expression::constant(n, base_sign as f64)
            } else if i == 0 || j == 0 {
                Expression::constant(n, 0.0)
            } else {
                let fe = fchart.entries[(i - 1) * m + (j - 1)].shift_vars(1, n);
                alpha_sq.clone() * fe
            };
            entries.push(e);
        }
    }

    let mut bounds = vec![t_interval];
    bounds.extend(fchart.bounds.iter().copied());
    let constraints = fchart
        .constraints
        .iter()
        .map(|(c, floor)| (c.shift_vars(1, n), *floor))
        .collect();

    let fsig = fchart.signature;
    let signature = if base_sign < 0 {
        Signature::new(fsig.neg + 1, fsig.pos)
    } else {
        Signature::new(fsig.neg, fsig.pos + 1)
    };

    Ok(Chart { dim: n, signature, entries, bounds, constraints, quadric: None })
}

/// Restriction of the ambient linear function `sum coeffs_a x_a` to a
/// quadric chart, as an expression in chart coordinates.
pub fn restrict_linear(model: &MetricModel, coeffs: &[f64]) -> Result<Expression, GeomError> {
    let MetricModel::Quadric { ambient, level, chart, bounds } = model else {
        return invalid("restrict_linear needs a quadric model");
    };
    let nn = ambient.dim();
    if coeffs.len() != nn {
        return invalid(format!("need {nn} ambient coefficients, got {}", coeffs.len()));
    }
    let compiled = compile_quadric(*ambient, *level, *chart, bounds)?;
    let q = compiled.quadric.as_ref().unwrap();
    let n = nn - 1;
    let mut acc: Option<Expression> = None;
    for i in 0..n {
        let c = coeffs[q.axis_of(i)];
        if c != 0.0 {
            let term = Expression::scaled(c, Expression::var(n, i));
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
    }
    let ck = coeffs[chart.solved_axis];
    if ck != 0.0 {
        let solved = Expression::scaled(
            ck * chart.branch.sign(),
            Expression::apply(UnaryOp::Sqrt, q.radicand.clone()),
        );
        acc = Some(match acc {
            None => solved,
            Some(a) => a + solved,
        });
    }
    Ok(acc.unwrap_or_else(|| Expression::constant(n, 0.0)))
}

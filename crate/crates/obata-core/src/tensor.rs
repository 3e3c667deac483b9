//! Covariant calculus on a [`Chart`]: Christoffel symbols, curvature, and
//! the diagnostics for scalar fields satisfying `Hess(w) = -kappa * w * g`.
//!
//! Christoffel symbols and the curvature tensor come straight from exact
//! second-order jets of the metric entries: the symbols need one metric
//! derivative, the curvature a second, so no finite differencing enters and
//! both hold to roundoff even where the metric is poorly conditioned.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::expr::{Expression, Jet2};
use crate::linalg;
use crate::manifold::{classify_with_metric, invert_metric, Chart, GeomError, VectorType};

/// Relative threshold below which a plane's Gram determinant counts as
/// degenerate and no sectional curvature is reported.
pub const DEGENERATE_PLANE_TOL: f64 = 1e-8;

/// Causal-census threshold on `<grad w, grad w>`. Tight on purpose: exact
/// zeros of the gradient norm should register as null without absorbing
/// nearby timelike or spacelike samples.
pub const DEFAULT_CENSUS_TOL: f64 = 1e-9;

pub(crate) fn metric_from_jets(n: usize, jets: &[Jet2]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| jets[i * n + j].v)
}

/// `gamma[k][(i, j)]` is the symbol with upper index `k`.
pub(crate) fn christoffel_core(
    n: usize,
    jets: &[Jet2],
    ginv: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let mut out = vec![DMatrix::zeros(n, n); n];
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    let bracket =
                        jets[j * n + l].g[i] + jets[i * n + l].g[j] - jets[i * n + j].g[l];
                    acc += 0.5 * ginv[(k, l)] * bracket;
                }
                out[k][(i, j)] = acc;
                out[k][(j, i)] = acc;
            }
        }
    }
    out
}

/// Christoffel symbols of the chart metric at `x`, exact to roundoff.
pub fn christoffel(chart: &Chart, x: &[f64]) -> Result<Vec<DMatrix<f64>>, GeomError> {
    let jets = chart.metric_jets_at(x)?;
    let n = chart.dim();
    let g = metric_from_jets(n, &jets);
    let ginv = invert_metric(&g, x)?;
    Ok(christoffel_core(n, &jets, &ginv))
}

/// Curvature tensor components `R^l_{ijk}` at a single point.
#[derive(Clone, Debug)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Component with upper index `l` and lower indices `i, j, k`.
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[((l * self.n + i) * self.n + j) * self.n + k]
    }
}

/// Curvature tensor at `x`, using
/// `R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik`.
/// The symbol derivatives expand into first and second metric derivatives,
/// `d_i G^l_jk = d_i g^{lm} [jk,m] + g^{lm} d_i [jk,m]` with
/// `d_i g^{-1} = -g^{-1} (d_i g) g^{-1}`, all read exactly off the jets.
pub fn riemann(chart: &Chart, x: &[f64]) -> Result<Riemann, GeomError> {
    let n = chart.dim();
    let jets = chart.metric_jets_at(x)?;
    let g = metric_from_jets(n, &jets);
    let ginv = invert_metric(&g, x)?;
    let gamma = christoffel_core(n, &jets, &ginv);
    let dginv: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let dg = DMatrix::from_fn(n, n, |a, b| jets[a * n + b].g[i]);
            -(&ginv) * dg * &ginv
        })
        .collect();
    let bracket = |j: usize, k: usize, m: usize| {
        0.5 * (jets[k * n + m].g[j] + jets[j * n + m].g[k] - jets[j * n + k].g[m])
    };
    let dbracket = |i: usize, j: usize, k: usize, m: usize| {
        0.5 * (jets[k * n + m].h[(i, j)] + jets[j * n + m].h[(i, k)]
            - jets[j * n + k].h[(i, m)])
    };
    let mut dgamma = vec![vec![DMatrix::zeros(n, n); n]; n];
    for i in 0..n {
        for l in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += dginv[i][(l, m)] * bracket(j, k, m)
                            + ginv[(l, m)] * dbracket(i, j, k, m);
                    }
                    dgamma[i][l][(j, k)] = acc;
                    dgamma[i][l][(k, j)] = acc;
                }
            }
        }
    }
    let mut data = vec![0.0; n * n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut val = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                    for m in 0..n {
                        val += gamma[l][(i, m)] * gamma[m][(j, k)]
                            - gamma[l][(j, m)] * gamma[m][(i, k)];
                    }
                    data[((l * n + i) * n + j) * n + k] = val;
                }
            }
        }
    }
    Ok(Riemann { n, data })
}

/// Sectional curvature of the plane spanned by `u`, `v` from precomputed
/// point data. Errors if the plane's induced form is degenerate.
pub fn sectional_from(
    g: &DMatrix<f64>,
    r: &Riemann,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64, GeomError> {
    let n = r.dim();
    let uu = linalg::bilinear(g, u, u);
    let vv = linalg::bilinear(g, v, v);
    let uv = linalg::bilinear(g, u, v);
    let denom = uu * vv - uv * uv;
    let scale = linalg::abs_bilinear(g, u, u) * linalg::abs_bilinear(g, v, v)
        + linalg::abs_bilinear(g, u, v).powi(2);
    if denom.abs() <= DEGENERATE_PLANE_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(GeomError::Numerical(
            "sectional curvature of a degenerate plane".into(),
        ));
    }
    // numerator = g(R(u, v) v, u)
    let mut num = 0.0;
    for l in 0..n {
        let mut rl = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    rl += r.get(l, i, j, k) * u[i] * v[j] * v[k];
                }
            }
        }
        for m in 0..n {
            num += g[(l, m)] * rl * u[m];
        }
    }
    Ok(num / denom)
}

/// Sectional curvature of the plane spanned by `u`, `v` at `x`.
pub fn sectional(
    chart: &Chart,
    x: &[f64],
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64, GeomError> {
    let g = chart.metric_at(x)?;
    let r = riemann(chart, x)?;
    sectional_from(&g, &r, u, v)
}

/// Curvature of a plane spanned by the base direction `d/dt` and any fiber
/// direction of the warped metric `base_sign dt^2 + alpha(t)^2 g_F`:
/// `K = -base_sign * alpha'' / alpha`.
pub fn warped_mixed_sectional(
    base_sign: i8,
    alpha: &Expression,
    t: f64,
) -> Result<f64, GeomError> {
    let jet = alpha.eval_jet2(&[t])?;
    if jet.v <= 0.0 {
        return Err(GeomError::Numerical(format!(
            "warping function is not positive at t = {t}"
        )));
    }
    Ok(-f64::from(base_sign) * jet.h[(0, 0)] / jet.v)
}

/// Curvature of a fiber-tangent plane of the warped metric, given the
/// fiber's own sectional curvature `fiber_k` of that plane:
/// `K = (fiber_k - base_sign * alpha'^2) / alpha^2`.
pub fn warped_fiber_sectional(
    base_sign: i8,
    alpha: &Expression,
    t: f64,
    fiber_k: f64,
) -> Result<f64, GeomError> {
    let jet = alpha.eval_jet2(&[t])?;
    if jet.v <= 0.0 {
        return Err(GeomError::Numerical(format!(
            "warping function is not positive at t = {t}"
        )));
    }
    Ok((fiber_k - f64::from(base_sign) * jet.g[0].powi(2)) / jet.v.powi(2))
}

/// A scalar function on a chart, paired with the constant of its defining
/// equation `Hess(w)_ij = -kappa * w * g_ij`.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub omega: Expression,
    pub kappa: f64,
}

impl ScalarField {
    pub fn new(omega: Expression, kappa: f64) -> ScalarField {
        ScalarField { omega, kappa }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, GeomError> {
        Ok(self.omega.eval_value(x)?)
    }

    /// Covariant gradient components `d_i w`.
    pub fn gradient_lower(&self, x: &[f64]) -> Result<DVector<f64>, GeomError> {
        Ok(self.omega.eval_jet2(x)?.g)
    }

    /// Gradient vector field `g^{ij} d_j w`.
    pub fn gradient(&self, chart: &Chart, x: &[f64]) -> Result<DVector<f64>, GeomError> {
        let ginv = chart.inverse_metric_at(x)?;
        Ok(&ginv * self.omega.eval_jet2(x)?.g)
    }

    /// Covariant Hessian `d_i d_j w - G^k_ij d_k w`.
    pub fn hessian(&self, chart: &Chart, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        let jet = self.omega.eval_jet2(x)?;
        let gamma = christoffel(chart, x)?;
        let mut h = jet.h.clone();
        for k in 0..chart.dim() {
            h -= &gamma[k] * jet.g[k];
        }
        Ok(h)
    }

    /// Largest entry of `Hess(w) + kappa * w * g` at `x`.
    pub fn residual_at(&self, chart: &Chart, x: &[f64]) -> Result<f64, GeomError> {
        let g = chart.metric_at(x)?;
        let hess = self.hessian(chart, x)?;
        let w = self.value(x)?;
        let dev = hess + g * (self.kappa * w);
        Ok(dev.amax())
    }

    /// Squared metric norm of the gradient, `g^{ij} d_i w d_j w`.
    pub fn grad_norm_sq(&self, chart: &Chart, x: &[f64]) -> Result<f64, GeomError> {
        let ginv = chart.inverse_metric_at(x)?;
        let dw = self.omega.eval_jet2(x)?.g;
        Ok(linalg::bilinear(&ginv, &dw, &dw))
    }

    /// The conserved combination `|grad w|^2 + kappa * w^2`.
    pub fn first_integral(&self, chart: &Chart, x: &[f64]) -> Result<f64, GeomError> {
        let w = self.value(x)?;
        Ok(self.grad_norm_sq(chart, x)? + self.kappa * w * w)
    }
}

/// Counts of the causal type of the gradient over a sample set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Census {
    pub timelike: usize,
    pub null: usize,
    pub spacelike: usize,
}

impl Census {
    fn record(&mut self, ty: VectorType) {
        match ty {
            VectorType::Timelike => self.timelike += 1,
            VectorType::Null => self.null += 1,
            VectorType::Spacelike => self.spacelike += 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub census_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 200,
            seed: 17,
            census_tol: DEFAULT_CENSUS_TOL,
        }
    }
}

/// Sampled evidence that a field satisfies its defining equation.
#[derive(Clone, Debug)]
pub struct ObataReport {
    pub samples: usize,
    /// Largest deviation `|Hess(w) + kappa w g|` seen anywhere.
    pub max_residual: f64,
    /// Point where the deviation peaked.
    pub worst_point: Vec<f64>,
    /// Mean of `|grad w|^2 + kappa w^2` over the samples.
    pub first_integral_mean: f64,
    /// Max minus min of the same quantity; near zero when the field is
    /// genuine, since the combination is conserved.
    pub first_integral_spread: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub census: Census,
}

/// Samples the chart and checks the field equation pointwise: residual,
/// constancy of the first integral, range of the field, and the causal
/// census of its gradient.
pub fn obata_verify(
    chart: &Chart,
    field: &ScalarField,
    opts: &VerifyOptions,
) -> Result<ObataReport, GeomError> {
    let pts = chart.sample_points(opts.samples, opts.seed)?;
    let n = chart.dim();
    let per: Vec<(f64, f64, f64, VectorType)> = pts
        .par_iter()
        .map(|p| -> Result<_, GeomError> {
            let jets = chart.metric_jets_at(p)?;
            let g = metric_from_jets(n, &jets);
            let ginv = invert_metric(&g, p)?;
            let gamma = christoffel_core(n, &jets, &ginv);
            let jet = field.omega.eval_jet2(p)?;
            let mut hess = jet.h.clone();
            for k in 0..n {
                hess -= &gamma[k] * jet.g[k];
            }
            let residual = (hess + &g * (field.kappa * jet.v)).amax();
            let grad = &ginv * &jet.g;
            let fi = jet.g.dot(&grad) + field.kappa * jet.v * jet.v;
            let ty = classify_with_metric(&g, &grad, opts.census_tol);
            Ok((jet.v, residual, fi, ty))
        })
        .collect::<Result<_, _>>()?;

    let mut report = ObataReport {
        samples: pts.len(),
        max_residual: 0.0,
        worst_point: pts[0].clone(),
        first_integral_mean: 0.0,
        first_integral_spread: 0.0,
        omega_min: f64::INFINITY,
        omega_max: f64::NEG_INFINITY,
        census: Census::default(),
    };
    let mut fi_min = f64::INFINITY;
    let mut fi_max = f64::NEG_INFINITY;
    for (p, &(w, residual, fi, ty)) in pts.iter().zip(&per) {
        if residual > report.max_residual {
            report.max_residual = residual;
            report.worst_point = p.clone();
        }
        report.first_integral_mean += fi;
        fi_min = fi_min.min(fi);
        fi_max = fi_max.max(fi);
        report.omega_min = report.omega_min.min(w);
        report.omega_max = report.omega_max.max(w);
        report.census.record(ty);
    }
    report.first_integral_mean /= pts.len() as f64;
    report.first_integral_spread = fi_max - fi_min;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{restrict_linear, Bounds, MetricModel, Signature};

    fn polar_sphere() -> Chart {
        let entries = ["1", "0", "0", "sin(x0)^2"]
            .iter()
            .map(|s| Expression::parse(s, 2).unwrap())
            .collect();
        MetricModel::Custom {
            signature: Signature::new(0, 2),
            entries,
            bounds: vec![(0.1, std::f64::consts::PI - 0.1), (-3.0, 3.0)],
        }
        .chart()
        .unwrap()
    }

    fn lorentz_exp_warp(fiber_dim: usize) -> MetricModel {
        let bounds: Bounds = vec![(-5.0, 5.0); fiber_dim];
        MetricModel::Warped {
            base_sign: -1,
            alpha: Expression::parse("exp(t)", 1).unwrap(),
            t_interval: (-3.0, 3.0),
            fiber: Box::new(MetricModel::Flat {
                signature: Signature::new(0, fiber_dim),
                bounds,
            }),
        }
    }

    #[test]
    fn polar_sphere_christoffel_matches_closed_form() {
        let chart = polar_sphere();
        let x = [std::f64::consts::FRAC_PI_4, 0.3];
        let gamma = christoffel(&chart, &x).unwrap();
        // G^0_11 = -sin cos, G^1_01 = cot
        assert!((gamma[0][(1, 1)] + 0.5).abs() < 1e-12);
        assert!((gamma[1][(0, 1)] - 1.0).abs() < 1e-12);
        assert!((gamma[1][(1, 0)] - 1.0).abs() < 1e-12);
        assert!(gamma[0][(0, 0)].abs() < 1e-12);
        assert!(gamma[0][(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn warped_christoffel_time_components() {
        let chart = lorentz_exp_warp(1).chart().unwrap();
        let gamma = christoffel(&chart, &[0.0, 0.4]).unwrap();
        // g = -dt^2 + e^{2t} dx^2: G^t_xx = e^{2t}, G^x_tx = 1.
        assert!((gamma[0][(1, 1)] - 1.0).abs() < 1e-12);
        assert!((gamma[1][(0, 1)] - 1.0).abs() < 1e-12);
        assert!(gamma[0][(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn sphere_curvature_is_one() {
        let chart = polar_sphere();
        let x = [std::f64::consts::FRAC_PI_4, 0.3];
        let r = riemann(&chart, &x).unwrap();
        // R^0_011 = sin^2 x0, antisymmetric in the first two lower slots.
        assert!((r.get(0, 0, 1, 1) - 0.5).abs() < 1e-6);
        assert!((r.get(0, 1, 0, 1) + 0.5).abs() < 1e-6);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.3, 0.9]);
        let k = sectional(&chart, &x, &u, &v).unwrap();
        assert!((k - 1.0).abs() < 1e-6, "K = {k}");

        // Same surface through the graph chart of the quadric model.
        let quadric = crate::manifold::tests::unit_sphere().chart().unwrap();
        let y = [0.3, -0.2];
        let k2 = sectional(
            &quadric,
            &y,
            &DVector::from_vec(vec![1.0, 0.2]),
            &DVector::from_vec(vec![-0.4, 1.0]),
        )
        .unwrap();
        assert!((k2 - 1.0).abs() < 1e-6, "K = {k2}");
    }

    #[test]
    fn de_sitter_curvature_is_one() {
        let chart = crate::manifold::tests::de_sitter().chart().unwrap();
        for (x, u, v) in [
            ([0.3, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]),
            ([-0.7, 0.2], vec![1.0, 0.4], vec![0.2, -1.0]),
            ([1.5, 0.9], vec![0.3, 1.0], vec![1.0, 0.0]),
        ] {
            let k = sectional(
                &chart,
                &x,
                &DVector::from_vec(u),
                &DVector::from_vec(v),
            )
            .unwrap();
            assert!((k - 1.0).abs() < 1e-6, "K = {k} at {x:?}");
        }
    }

    #[test]
    fn degenerate_planes_are_rejected_and_flat_planes_are_flat() {
        let chart = MetricModel::Flat {
            signature: Signature::new(1, 1),
            bounds: vec![(-2.0, 2.0); 2],
        }
        .chart()
        .unwrap();
        let x = [0.1, 0.2];
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let err = sectional(&chart, &x, &u, &(2.0 * &u));
        assert!(matches!(err, Err(GeomError::Numerical(_))));
        // A plane spanned by two distinct null directions is fine, and flat.
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let k = sectional(&chart, &x, &u, &v).unwrap();
        assert!(k.abs() < 1e-9);
    }

    #[test]
    fn warped_helpers_agree_with_general_curvature() {
        let model = lorentz_exp_warp(2);
        let chart = model.chart().unwrap();
        let x = [0.4, 0.3, -0.2];
        let (base_sign, alpha) = match &model {
            MetricModel::Warped { base_sign, alpha, .. } => (*base_sign, alpha.clone()),
            _ => unreachable!(),
        };
        let mixed = warped_mixed_sectional(base_sign, &alpha, x[0]).unwrap();
        let fiber = warped_fiber_sectional(base_sign, &alpha, x[0], 0.0).unwrap();
        assert!((mixed - 1.0).abs() < 1e-12);
        assert!((fiber - 1.0).abs() < 1e-12);

        let dt = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let dx = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let dy = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let k_mixed = sectional(&chart, &x, &dt, &dx).unwrap();
        let k_fiber = sectional(&chart, &x, &dx, &dy).unwrap();
        assert!((k_mixed - mixed).abs() < 1e-5, "mixed {k_mixed} vs {mixed}");
        assert!((k_fiber - fiber).abs() < 1e-5, "fiber {k_fiber} vs {fiber}");
    }

    #[test]
    fn de_sitter_height_field_passes_verification() {
        let model = crate::manifold::tests::de_sitter();
        let chart = model.chart().unwrap();
        let omega = restrict_linear(&model, &[0.0, 1.0, 0.0]).unwrap();
        let field = ScalarField::new(omega, 1.0);
        let report = obata_verify(&chart, &field, &VerifyOptions::default()).unwrap();
        assert_eq!(report.samples, 200);
        assert!(report.max_residual < 1e-10, "residual {}", report.max_residual);
        assert!((report.first_integral_mean - 1.0).abs() < 1e-9);
        assert!(report.first_integral_spread < 1e-9);
        assert!(report.census.timelike > 0, "census {:?}", report.census);
        assert!(report.census.null > 0, "census {:?}", report.census);
        assert!(report.census.spacelike > 0, "census {:?}", report.census);
        assert!(report.omega_min < -1.0 && report.omega_max > 1.0);
    }

    #[test]
    fn de_sitter_time_field_has_timelike_gradient() {
        let model = crate::manifold::tests::de_sitter();
        let chart = model.chart().unwrap();
        let omega = restrict_linear(&model, &[1.0, 0.0, 0.0]).unwrap();
        let field = ScalarField::new(omega, 1.0);
        let report = obata_verify(&chart, &field, &VerifyOptions::default()).unwrap();
        assert!(report.max_residual < 1e-10);
        assert!((report.first_integral_mean + 1.0).abs() < 1e-9);
        assert_eq!(report.census.null, 0);
        assert_eq!(report.census.spacelike, 0);
        assert!(report.census.timelike == report.samples);
    }

    #[test]
    fn first_integral_matches_gradient_identity() {
        // For a linear ambient field on the quadric <x,x> = c the squared
        // gradient norm is <a,a> - w^2 / c pointwise.
        let model = crate::manifold::tests::de_sitter();
        let chart = model.chart().unwrap();
        let omega = restrict_linear(&model, &[1.0, 0.0, -1.0]).unwrap();
        let field = ScalarField::new(omega, 1.0);
        for x in chart.sample_points(40, 3).unwrap() {
            let w = field.value(&x).unwrap();
            let nsq = field.grad_norm_sq(&chart, &x).unwrap();
            assert!((nsq - (0.0 - w * w)).abs() < 1e-9);
            let fi = field.first_integral(&chart, &x).unwrap();
            assert!(fi.abs() < 1e-9);
        }
    }
}

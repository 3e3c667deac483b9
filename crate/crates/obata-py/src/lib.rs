//! Python bindings: the narrow surface a notebook session needs.
//!
//! Load a model file, check a scalar field against its defining equation,
//! trace geodesics, classify constant pairs, and evaluate expression jets.
//! Reports come back as plain dicts so downstream code can apply its own
//! gates without unwrapping handle types.

use std::fs;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use obata_core::expr::Expression;
use obata_core::geodesic::{
    attach_first_integral, integrate, GeodesicState, IntegrateOptions, Sampling, Termination,
};
use obata_core::manifold::{Chart, GeomError, MetricModel};
use obata_core::modelfile::{load_model, LoadedModel};
use obata_core::obata::{classify_case, closed_form_f, SolutionBranch};
use obata_core::tensor::{obata_verify, sectional, ScalarField, VerifyOptions};

fn geom(e: GeomError) -> PyErr {
    match &e {
        GeomError::Invalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A loaded metric model together with its evaluation chart.
#[pyclass(module = "obata", frozen)]
pub struct Model {
    loaded: LoadedModel,
    chart: Chart,
}

impl Model {
    fn check_len(&self, v: &[f64], what: &str) -> PyResult<()> {
        if v.len() != self.chart.dim() {
            return Err(PyValueError::new_err(format!(
                "{what} has {} components but the chart has {} coordinates",
                v.len(),
                self.chart.dim()
            )));
        }
        Ok(())
    }

    /// Resolve the field to check: explicit arguments win, the model file
    /// fills the gaps, and anything still missing is an error.
    fn field(&self, omega: Option<&str>, kappa: Option<f64>) -> PyResult<ScalarField> {
        let expr = match omega {
            Some(text) => Expression::parse(text, self.chart.dim())
                .map_err(|e| PyValueError::new_err(format!("omega: {e}")))?,
            None => self.loaded.omega.clone().ok_or_else(|| {
                PyValueError::new_err("the model declares no field; pass omega=")
            })?,
        };
        let k = kappa.or(self.loaded.kappa).ok_or_else(|| {
            PyValueError::new_err("the model declares no constant; pass kappa=")
        })?;
        if !k.is_finite() {
            return Err(PyValueError::new_err("kappa must be finite"));
        }
        Ok(ScalarField::new(expr, k))
    }
}

#[pymethods]
impl Model {
    /// Load a model from a JSON file on disk.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        let text =
            fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Model::from_json(&text)
    }

    /// Load a model from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Model> {
        let loaded = load_model(text).map_err(geom)?;
        let chart = loaded.model.chart().map_err(geom)?;
        Ok(Model { loaded, chart })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// `(negative, positive)` counts of the induced metric.
    #[getter]
    fn signature(&self) -> (usize, usize) {
        let s = self.chart.signature();
        (s.neg, s.pos)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match &self.loaded.model {
            MetricModel::Flat { .. } => "flat",
            MetricModel::Quadric { .. } => "quadric",
            MetricModel::Warped { .. } => "warped",
            MetricModel::Custom { .. } => "custom",
        }
    }

    /// Canonical text of the field declared by the file, if any.
    #[getter]
    fn omega(&self) -> Option<String> {
        self.loaded.omega.as_ref().map(|e| e.print())
    }

    #[getter]
    fn kappa(&self) -> Option<f64> {
        self.loaded.kappa
    }

    /// Whether the point lies inside the chart domain.
    fn contains(&self, x: Vec<f64>) -> PyResult<bool> {
        self.check_len(&x, "x")?;
        Ok(self.chart.contains(&x))
    }

    /// Metric matrix at a point, row by row.
    fn metric(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_len(&x, "x")?;
        let g = self.chart.metric_at(&x).map_err(geom)?;
        let n = self.chart.dim();
        Ok((0..n).map(|i| (0..n).map(|j| g[(i, j)]).collect()).collect())
    }

    /// Sectional curvature of the plane spanned by `u` and `v` at `x`.
    fn sectional(&self, x: Vec<f64>, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.check_len(&x, "x")?;
        self.check_len(&u, "u")?;
        self.check_len(&v, "v")?;
        sectional(&self.chart, &x, &DVector::from_vec(u), &DVector::from_vec(v)).map_err(geom)
    }

    /// Causal type of a tangent vector: "timelike", "null" or "spacelike".
    #[pyo3(signature = (x, v, tol = 1e-9))]
    fn classify_tangent(&self, x: Vec<f64>, v: Vec<f64>, tol: f64) -> PyResult<&'static str> {
        self.check_len(&x, "x")?;
        self.check_len(&v, "v")?;
        let ty = self
            .chart
            .classify_tangent(&x, &DVector::from_vec(v), tol)
            .map_err(geom)?;
        Ok(ty.name())
    }

    /// Sample the chart and check `Hess(w) = -kappa w g` pointwise.
    ///
    /// Returns the max residual, the constancy of `|grad w|^2 + kappa w^2`,
    /// the field range, and the causal census of the gradient.
    #[pyo3(signature = (omega = None, kappa = None, samples = 200, seed = 17))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        omega: Option<&str>,
        kappa: Option<f64>,
        samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let field = self.field(omega, kappa)?;
        let opts = VerifyOptions { samples, seed, ..Default::default() };
        let report = obata_verify(&self.chart, &field, &opts).map_err(geom)?;
        let d = PyDict::new(py);
        d.set_item("samples", report.samples)?;
        d.set_item("max_residual", report.max_residual)?;
        d.set_item("worst_point", report.worst_point)?;
        d.set_item("first_integral_mean", report.first_integral_mean)?;
        d.set_item("first_integral_spread", report.first_integral_spread)?;
        d.set_item("omega_range", (report.omega_min, report.omega_max))?;
        let census = PyDict::new(py);
        census.set_item("timelike", report.census.timelike)?;
        census.set_item("null", report.census.null)?;
        census.set_item("spacelike", report.census.spacelike)?;
        d.set_item("census", census)?;
        Ok(d)
    }

    /// Integrate the geodesic from `(x0, v0)` for parameter length `s_max`.
    ///
    /// The trajectory comes back column-wise (`s`, `x`, `v`, `norm`) with the
    /// termination kind, the velocity-norm drift, and, when a field is
    /// available, the first integral along the curve and its drift. A domain
    /// escape also reports the last interior state.
    #[pyo3(signature = (
        x0, v0, s_max,
        tol = 1e-9, ds = 0.01, endpoints_only = false, omega = None, kappa = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn geodesic<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        v0: Vec<f64>,
        s_max: f64,
        tol: f64,
        ds: f64,
        endpoints_only: bool,
        omega: Option<&str>,
        kappa: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let state0 = GeodesicState::new(0.0, x0, v0);
        let sampling = if endpoints_only { Sampling::Endpoints } else { Sampling::Grid(ds) };
        let opts = IntegrateOptions { tol, sampling };
        let mut traj = integrate(&self.chart, &state0, s_max, &opts).map_err(geom)?;
        // An explicit omega must resolve; a file-declared field is attached
        // only when some kappa is known, and is otherwise skipped quietly.
        let want = omega.is_some()
            || (self.loaded.omega.is_some() && (kappa.is_some() || self.loaded.kappa.is_some()));
        if want {
            let field = self.field(omega, kappa)?;
            attach_first_integral(&mut traj, &self.chart, &field).map_err(geom)?;
        }
        let d = PyDict::new(py);
        d.set_item("termination", traj.termination.kind())?;
        d.set_item("s_end", traj.termination.s())?;
        d.set_item("norm_drift", traj.norm_drift)?;
        d.set_item("integral_drift", traj.integral_drift)?;
        d.set_item("s", traj.samples.iter().map(|st| st.s).collect::<Vec<_>>())?;
        d.set_item(
            "x",
            traj.samples.iter().map(|st| st.position.as_slice().to_vec()).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "v",
            traj.samples.iter().map(|st| st.velocity.as_slice().to_vec()).collect::<Vec<_>>(),
        )?;
        d.set_item("norm", traj.norms.clone())?;
        d.set_item("first_integral", traj.first_integrals.clone())?;
        if let Termination::DomainEscape { last_inside, .. } = &traj.termination {
            let li = PyDict::new(py);
            li.set_item("s", last_inside.s)?;
            li.set_item("x", last_inside.position.as_slice().to_vec())?;
            li.set_item("v", last_inside.velocity.as_slice().to_vec())?;
            d.set_item("last_inside", li)?;
        }
        Ok(d)
    }
}

/// Everything the signs of the pair `(kappa, h)` determine: the causal type
/// of the gradient, the forced global structure, and the range the field can
/// take on a complete positive-definite manifold.
#[pyfunction]
#[pyo3(signature = (kappa, h, tol = 1e-9))]
fn classify<'py>(py: Python<'py>, kappa: f64, h: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let label = classify_case(kappa, h, tol);
    let d = PyDict::new(py);
    d.set_item("kappa_sign", label.kappa_sign.symbol())?;
    d.set_item("h_sign", label.h_sign.symbol())?;
    d.set_item("omega_type", label.omega_type.name())?;
    d.set_item("structure", label.structure.tag())?;
    d.set_item("riemannian_range", label.riemannian.describe())?;
    Ok(d)
}

/// Name of the closed-form profile solving `f'' = -kappa f` with
/// `(f')^2 + kappa f^2 = h` for the pair, if one exists.
#[pyfunction]
fn solution_branch(kappa: f64, h: f64) -> PyResult<String> {
    Ok(SolutionBranch::of(kappa, h).map_err(geom)?.name().to_string())
}

/// Evaluate the closed-form profile for the pair at `t`.
#[pyfunction]
fn closed_form(kappa: f64, h: f64, t: f64) -> PyResult<f64> {
    closed_form_f(kappa, h, t).map_err(geom)
}

/// Evaluate an expression in variables `x0..x{n-1}` at a point.
#[pyfunction]
fn evaluate(expr: &str, x: Vec<f64>) -> PyResult<f64> {
    let e = Expression::parse(expr, x.len())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    e.eval_value(&x).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Evaluate an expression to `(value, gradient, hessian)` at a point.
#[pyfunction]
fn jet(expr: &str, x: Vec<f64>) -> PyResult<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let e = Expression::parse(expr, x.len())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let j = e.eval_jet2(&x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let n = x.len();
    let grad = j.g.as_slice().to_vec();
    let hess = (0..n).map(|i| (0..n).map(|k| j.h[(i, k)]).collect()).collect();
    Ok((j.v, grad, hess))
}

#[pymodule]
fn _obata(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(solution_branch, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(jet, m)?)?;
    Ok(())
}

//! Weighted nonlinear least squares and the model-specific fits built on it.
//!
//! The engine wraps the `levenberg-marquardt` crate. Jacobians are central
//! finite differences with per-parameter steps; box bounds are enforced by
//! projecting every trial point onto the box. Uncertainties come from the
//! inverse curvature (JᵀWJ)⁻¹ scaled by the reduced χ².

mod beat;
mod curves;
mod lines;

use std::cell::{Cell, RefCell};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Estimate;

pub use beat::{fit_beat, BeatFitSetup, SPLITTING_GRID_GHZ};
pub use curves::{fit_gamma_from_visibility, fit_rabi, fit_saturation, fit_vibronic_prefactor, RabiCurves, VibronicRow};
pub use lines::{fit_lorentzian_lines, lorentzian, LineEstimate, LorentzianFit};

/// One data point with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Observation {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Self { x, y, sigma }
    }
}

/// Free parameter: starting value, box bounds and a typical magnitude used
/// to size finite-difference steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &str, init: f64, scale: f64) -> Self {
        Self {
            name: name.to_string(),
            init,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            scale,
        }
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    fn step(&self, v: f64) -> f64 {
        // cube root of machine epsilon balances truncation and rounding
        6.055e-6 * v.abs().max(self.scale.abs()).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// 1σ uncertainties; infinite for directions the data do not constrain.
    pub uncertainties: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Σ((y − f)/σ)².
    pub chi_square: f64,
    pub dof: usize,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub termination: String,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<Estimate> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(Estimate::new(self.params[i], self.uncertainties[i]))
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map(|e| e.value).unwrap_or(f64::NAN)
    }
}

/// Vectorized forward model: (parameters, abscissae) → predictions.
pub trait ForwardModel: Fn(&[f64], &[f64]) -> Result<Vec<f64>> {}
impl<T: Fn(&[f64], &[f64]) -> Result<Vec<f64>>> ForwardModel for T {}

fn validate_data(data: &[Observation], n_params: usize) -> Result<()> {
    if n_params == 0 {
        return Err(Error::param("params", "at least one free parameter is required"));
    }
    if data.len() < n_params {
        return Err(Error::param(
            "data",
            format!("{} points for {} free parameters", data.len(), n_params),
        ));
    }
    if let Some(o) = data.iter().find(|o| !(o.sigma > 0.0) || !o.y.is_finite() || !o.x.is_finite()) {
        return Err(Error::param("data", format!("invalid point {o:?}; sigma must be > 0")));
    }
    Ok(())
}

fn predict<M: ForwardModel>(model: &M, p: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    let f = model(p, xs)?;
    if f.len() != xs.len() {
        return Err(Error::NoSolution(format!(
            "model returned {} values for {} points",
            f.len(),
            xs.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoSolution("model returned a non-finite value".into()));
    }
    Ok(f)
}

/// Central-difference Jacobian of the model predictions; one-sided next to
/// a bound.
fn model_jacobian<M: ForwardModel>(model: &M, p: &[f64], xs: &[f64], specs: &[ParamSpec]) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(xs.len(), p.len());
    let mut q = p.to_vec();
    for (j, spec) in specs.iter().enumerate() {
        let h = spec.step(p[j]);
        let (lo, hi) = (p[j] - h, p[j] + h);
        let (a, b) = match (lo >= spec.lower, hi <= spec.upper) {
            (true, true) => (lo, hi),
            (false, true) => (p[j], hi),
            (true, false) => (lo, p[j]),
            (false, false) => continue,
        };
        q[j] = a;
        let fa = predict(model, &q, xs)?;
        q[j] = b;
        let fb = predict(model, &q, xs)?;
        q[j] = p[j];
        for i in 0..xs.len() {
            jac[(i, j)] = (fb[i] - fa[i]) / (b - a);
        }
    }
    Ok(jac)
}

struct Problem<'a, M> {
    model: &'a M,
    xs: Vec<f64>,
    ys: Vec<f64>,
    inv_sigma: Vec<f64>,
    specs: &'a [ParamSpec],
    p: DVector<f64>,
    error: RefCell<Option<Error>>,
    evaluations: Cell<usize>,
}

impl<M: ForwardModel> Problem<'_, M> {
    fn record(&self, e: Error) {
        let mut slot = self.error.borrow_mut();
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    fn weighted_residuals(&self, p: &[f64]) -> Result<Vec<f64>> {
        let f = predict(self.model, p, &self.xs)?;
        Ok(f.iter()
            .zip(&self.ys)
            .zip(&self.inv_sigma)
            .map(|((fi, yi), w)| (yi - fi) * w)
            .collect())
    }
}

impl<M: ForwardModel> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        // projection onto the feasible box
        self.p = DVector::from_iterator(x.len(), x.iter().zip(self.specs).map(|(v, s)| s.clamp(*v)));
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.evaluations.set(self.evaluations.get() + 1);
        match self.weighted_residuals(self.p.as_slice()) {
            Ok(r) => Some(DVector::from_vec(r)),
            Err(e) => {
                self.record(e);
                None
            }
        }
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        match model_jacobian(self.model, self.p.as_slice(), &self.xs, self.specs) {
            Ok(mut j) => {
                for (i, w) in self.inv_sigma.iter().enumerate() {
                    j.row_mut(i).scale_mut(-w);
                }
                Some(j)
            }
            Err(e) => {
                self.record(e);
                None
            }
        }
    }
}

/// Covariance from the weighted curvature. Parameters with a vanishing
/// Jacobian column get infinite variance; otherwise a pseudo-inverse is used
/// when the curvature is singular.
fn covariance(jw: &DMatrix<f64>, scale: f64, warnings: &mut Vec<String>, names: &[String]) -> DMatrix<f64> {
    let n = jw.ncols();
    let live: Vec<usize> = (0..n).filter(|&j| jw.column(j).norm() > 0.0).collect();
    let mut cov = DMatrix::from_element(n, n, 0.0);
    for j in 0..n {
        if !live.contains(&j) {
            cov[(j, j)] = f64::INFINITY;
            warnings.push(format!("parameter `{}` is not constrained by the data", names[j]));
        }
    }
    if live.is_empty() {
        return cov;
    }
    let sub = DMatrix::from_fn(jw.nrows(), live.len(), |i, k| jw[(i, live[k])]);
    let curv = sub.transpose() * &sub;
    let inv = match curv.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            warnings.push("curvature matrix is singular; covariance from pseudo-inverse".into());
            let tol = 1e-12 * curv.abs().max();
            curv.pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::from_element(live.len(), live.len(), f64::INFINITY))
        }
    };
    for (a, &ja) in live.iter().enumerate() {
        for (b, &jb) in live.iter().enumerate() {
            cov[(ja, jb)] = inv[(a, b)] * scale;
        }
    }
    cov
}

/// Minimizes Σ((yᵢ − f(p; xᵢ))/σᵢ)² over the box given by `specs`.
///
/// Returns [`Error::NotConverged`] with the best point when the evaluation
/// budget runs out.
pub fn fit_least_squares<M: ForwardModel>(model: &M, data: &[Observation], specs: &[ParamSpec]) -> Result<FitResult> {
    validate_data(data, specs.len())?;
    for s in specs {
        if !(s.lower <= s.upper) || !s.init.is_finite() {
            return Err(Error::param("params", format!("bad specification for `{}`", s.name)));
        }
    }
    let init: Vec<f64> = specs.iter().map(|s| s.clamp(s.init)).collect();
    let problem = Problem {
        model,
        xs: data.iter().map(|o| o.x).collect(),
        ys: data.iter().map(|o| o.y).collect(),
        inv_sigma: data.iter().map(|o| 1.0 / o.sigma).collect(),
        specs,
        p: DVector::from_vec(init),
        error: RefCell::new(None),
        evaluations: Cell::new(0),
    };
    let lm = LevenbergMarquardt::new()
        .with_ftol(1e-14)
        .with_xtol(1e-12)
        .with_patience(300);
    let (problem, report) = lm.minimize(problem);
    if let Some(e) = problem.error.borrow_mut().take() {
        return Err(e);
    }
    let mut warnings = Vec::new();
    let converged = match &report.termination {
        t if t.was_successful() => true,
        TerminationReason::NoImprovementPossible(what) => {
            warnings.push(format!("stopped at machine precision ({what})"));
            true
        }
        TerminationReason::LostPatience => false,
        other => return Err(Error::NoSolution(format!("optimizer stopped: {other:?}"))),
    };

    let p = problem.p.as_slice().to_vec();
    let r = problem.weighted_residuals(&p)?;
    let chi_square: f64 = r.iter().map(|v| v * v).sum();
    let dof = data.len() - specs.len();
    let scale = if dof == 0 {
        warnings.push("no degrees of freedom; covariance left unscaled".into());
        1.0
    } else {
        chi_square / dof as f64
    };
    let mut jw = model_jacobian(model, &p, &problem.xs, specs)?;
    for (i, w) in problem.inv_sigma.iter().enumerate() {
        jw.row_mut(i).scale_mut(*w);
    }
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let cov = covariance(&jw, scale, &mut warnings, &names);
    let result = FitResult {
        uncertainties: (0..specs.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        covariance: (0..specs.len()).map(|i| cov.row(i).iter().cloned().collect()).collect(),
        names,
        params: p,
        chi_square,
        dof,
        reduced_chi_square: if dof == 0 { f64::NAN } else { chi_square / dof as f64 },
        converged,
        evaluations: problem.evaluations.get(),
        termination: format!("{:?}", report.termination),
        warnings,
    };
    if !converged {
        return Err(Error::NotConverged {
            evaluations: result.evaluations,
            objective: chi_square,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// χ²(p) for the given data.
pub fn objective<M: ForwardModel>(model: &M, data: &[Observation], p: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = data.iter().map(|o| o.x).collect();
    let f = predict(model, p, &xs)?;
    Ok(f.iter().zip(data).map(|(fi, o)| ((o.y - fi) / o.sigma).powi(2)).sum())
}

/// Gradient of χ² as used by the optimizer, −2·Jᵀ W (y − f).
pub fn objective_gradient<M: ForwardModel>(model: &M, data: &[Observation], specs: &[ParamSpec], p: &[f64]) -> Result<Vec<f64>> {
    let xs: Vec<f64> = data.iter().map(|o| o.x).collect();
    let f = predict(model, p, &xs)?;
    let j = model_jacobian(model, p, &xs, specs)?;
    Ok((0..p.len())
        .map(|k| {
            -2.0 * data
                .iter()
                .enumerate()
                .map(|(i, o)| j[(i, k)] * (o.y - f[i]) / (o.sigma * o.sigma))
                .sum::<f64>()
        })
        .collect())
}

/// Largest discrepancy between [`objective_gradient`] and a Richardson
/// extrapolated central difference of χ², relative to the gradient norm.
pub fn check_gradient<M: ForwardModel>(model: &M, data: &[Observation], specs: &[ParamSpec], p: &[f64]) -> Result<f64> {
    let g = objective_gradient(model, data, specs, p)?;
    let mut q = p.to_vec();
    let mut diff: f64 = 0.0;
    for k in 0..p.len() {
        let h = 1e-3 * p[k].abs().max(specs[k].scale.abs());
        let mut d = |h: f64| -> Result<f64> {
            q[k] = p[k] + h;
            let a = objective(model, data, &q)?;
            q[k] = p[k] - h;
            let b = objective(model, data, &q)?;
            q[k] = p[k];
            Ok((a - b) / (2.0 * h))
        };
        let (d1, d2) = (d(h)?, d(h / 2.0)?);
        let fd = (4.0 * d2 - d1) / 3.0;
        diff = diff.max((g[k] - fd).abs());
    }
    let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

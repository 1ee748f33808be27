//! Python bindings: a `Lab` class wrapping one model's standing wave,
//! operator and corrector workspace, with the headline evaluations exposed
//! as plain floats/lists/JSON strings (no numpy dependency).
//!
//! Build with `cargo build --release -p sharplim-py`; the smoke test in
//! `python/smoke_test.py` loads the produced cdylib directly.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sharplim::corrector::CorrectorWorkspace;
use sharplim::functional::{
    convergence_study, evaluate_s_asymptotic, ConvergenceMode, CorrectorChoice, TimeQuad,
};
use sharplim::geometry::{s_ac, FlowField, RadiusLaw, Trajectory};
use sharplim::model::{validate_model, ModelFile};
use sharplim::profile::XiGrid;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One model's laboratory: standing wave, coefficients, corrector and the
/// rate-functional evaluators.
#[pyclass]
struct Lab {
    ws: CorrectorWorkspace,
}

#[pymethods]
impl Lab {
    /// Builds the workspace from a model JSON document (same schema as the
    /// CLI model files) on a grid of half-width `l` with `n` nodes.
    #[new]
    #[pyo3(signature = (model_json, l = 40.0, n = 8193))]
    fn new(model_json: &str, l: f64, n: usize) -> PyResult<Self> {
        let file: ModelFile = serde_json::from_str(model_json).map_err(err)?;
        let model = file.build().map_err(err)?;
        let grid = XiGrid::new(l, n).map_err(err)?;
        let ws = CorrectorWorkspace::build(&model, &grid).map_err(err)?;
        Ok(Lab { ws })
    }

    /// Assumption report (A1)-(A4) as a JSON string.
    #[pyo3(signature = (tol = 1e-10))]
    fn validate_json(&self, tol: f64) -> PyResult<String> {
        let report = validate_model(&self.ws.model, tol).map_err(err)?;
        serde_json::to_string(&report).map_err(err)
    }

    /// {theta1, theta2, nu, mu, theta} of the model.
    fn coefficients(&self) -> HashMap<String, f64> {
        let c = &self.ws.coeffs;
        HashMap::from([
            ("theta1".to_string(), c.theta1),
            ("theta2".to_string(), c.theta2),
            ("nu".to_string(), c.nu),
            ("mu".to_string(), c.mu),
            ("theta".to_string(), c.theta),
        ])
    }

    /// Wells (ρ₋, ρ*, ρ₊) and the maximal decay rate γ_max.
    fn wells(&self) -> (f64, f64, f64, f64) {
        let m = &self.ws.model;
        (m.rho_minus, m.rho_star, m.rho_plus, m.gamma_max_v)
    }

    /// Sampled standing wave: (xi, u, du).
    fn profile_curve(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = &self.ws.profile;
        (p.grid.points.clone(), p.u.clone(), p.du.clone())
    }

    /// ū at an arbitrary ξ (cubic interpolation + exponential tails).
    fn eval_u(&self, xi: f64) -> f64 {
        self.ws.profile.eval_u(xi)
    }

    /// ∫F_{Q̄_min}(−L_ū)⁻¹F_{Q̄_min} dξ at interface data (a, b).
    fn corrector_cost(&self, a: f64, b: f64) -> PyResult<f64> {
        Ok(self.ws.cost_qmin(a, b).map_err(err)?.full)
    }

    /// The closed-form minimum (a − θb)²/(2μ).
    fn corrector_cost_closed(&self, a: f64, b: f64) -> f64 {
        self.ws.cost_closed_form(a, b)
    }

    /// Lagrange multiplier λ(a, b).
    fn lambda_coeff(&self, a: f64, b: f64) -> f64 {
        self.ws.lambda(a, b)
    }

    /// S_ac of a static circle of radius r0 over [0, horizon].
    fn s_ac_static_circle(&self, r0: f64, horizon: f64) -> PyResult<f64> {
        let flow = FlowField::circle([0.5, 0.5], RadiusLaw::Static { r0 }, horizon).map_err(err)?;
        Ok(s_ac(&flow, &self.ws.coeffs))
    }

    /// S_ac of the mean-curvature-flow circle r(t) = √(r0² − 2θt).
    fn s_ac_mcf_circle(&self, r0: f64, horizon: f64) -> PyResult<f64> {
        let flow = FlowField::circle(
            [0.5, 0.5],
            RadiusLaw::Mcf {
                r0,
                theta: self.ws.coeffs.theta,
            },
            horizon,
        )
        .map_err(err)?;
        Ok(s_ac(&flow, &self.ws.coeffs))
    }

    /// Asymptotic S of a translating front pair with the optimal corrector
    /// (equals S_ac = T·2c²/(4μ)).
    fn s_asymptotic_front_pair(&self, speed: f64, horizon: f64) -> PyResult<f64> {
        let flow = FlowField::front_pair(
            Trajectory::linear(0.25, speed),
            Trajectory::linear(0.75, speed),
            horizon,
        )
        .map_err(err)?;
        let quad = TimeQuad::gauss(horizon, 16);
        evaluate_s_asymptotic(&self.ws, &flow, CorrectorChoice::QMin, &quad).map_err(err)
    }

    /// Direct 1-d ε-ladder study for a translating front pair; returns the
    /// full rate report as a JSON string.
    fn rate_direct_1d(&self, speed: f64, horizon: f64, eps_ladder: Vec<f64>) -> PyResult<String> {
        let flow = FlowField::front_pair(
            Trajectory::linear(0.25, speed),
            Trajectory::linear(0.75, speed),
            horizon,
        )
        .map_err(err)?;
        let report = convergence_study(
            &self.ws,
            &flow,
            CorrectorChoice::QMin,
            None,
            &eps_ladder,
            ConvergenceMode::Direct1d,
        )
        .map_err(err)?;
        serde_json::to_string(&report).map_err(err)
    }
}

/// Reference model JSON (P = ρ, quartic double well, σ = ½) for quick
/// experiments from Python.
#[pyfunction]
fn reference_model_json() -> String {
    r#"{
  "P": {"kind": "polynomial-coefficients", "coefficients": [0.0, 1.0]},
  "B": {"kind": "polynomial-coefficients", "coefficients": [0.59375, -0.6875, 1.5, -1.0]},
  "D": {"kind": "polynomial-coefficients", "coefficients": [0.40625, 0.6875, -1.5, 1.0]},
  "sigma": {"kind": "polynomial-coefficients", "coefficients": [0.5]}
}"#
    .to_string()
}

#[pymodule]
fn sharplim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Lab>()?;
    m.add_function(wrap_pyfunction!(reference_model_json, m)?)?;
    Ok(())
}

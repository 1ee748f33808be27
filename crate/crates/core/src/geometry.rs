//! Prescribed geometric flows Γ_t on the torus (d = 1, 2), the regularized
//! signed distance with analytic derivatives, the limiting energy
//!
//! ```text
//! S_ac(Γ) = ∫_0^T ∫_{Γ_t} (∂_t d − θ Δd)² / (4μ) dH^{d−1} dt   (at d = 0),
//! ```
//!
//! and the layered-integral (co-area) convergence checks
//! (1/ε)∫ A(x, d/ε) dx → ∫_{Γ_t}∫_ℝ A dξ dH^{d−1}.
//!
//! The signed distance is exact inside the tube |dist| ≤ κ, blended to a
//! constant ±3κ/2 across [κ, 2κ] by an odd C³ saturation, and constant
//! beyond. κ is sized at construction so the tube never reaches a cut locus
//! (circle: κ = r_min/2 with r ∈ [0.08, 0.22]; front pair: 2κ stays clear of
//! the equidistant midpoints), which also keeps the saturation plateau flat
//! through the distance kinks — the regularized d is C² on the whole torus.
//!
//! Convention fixed here (and verified by finite differences): for the
//! circle with Ω_t the disk, d = |x−c| − r(t), so Δd = 1/(r+d) > 0 and
//! ∂_t d = −ṙ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Coefficients;
use crate::quad::{GaussLegendre, KahanSum};

/// Polynomial trajectory t ↦ Σ c_k t^k on the unit circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub coefficients: Vec<f64>,
}

impl Trajectory {
    pub fn constant(p: f64) -> Self {
        Self {
            coefficients: vec![p],
        }
    }

    pub fn linear(p0: f64, speed: f64) -> Self {
        Self {
            coefficients: vec![p0, speed],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn d1(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coefficients.iter().enumerate().skip(1).rev() {
            acc = acc * t + k as f64 * c;
        }
        acc
    }

    pub fn d2(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coefficients.iter().enumerate().skip(2).rev() {
            acc = acc * t + (k * (k - 1)) as f64 * c;
        }
        acc
    }
}

/// Radius law of a circular interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadiusLaw {
    /// r(t) = r0.
    Static { r0: f64 },
    /// The mean-curvature-flow trajectory r(t) = √(r0² − 2θt).
    Mcf { r0: f64, theta: f64 },
    /// r(t) = Σ c_k t^k.
    Polynomial { coefficients: Vec<f64> },
}

impl RadiusLaw {
    pub fn r(&self, t: f64) -> f64 {
        match self {
            RadiusLaw::Static { r0 } => *r0,
            RadiusLaw::Mcf { r0, theta } => (r0 * r0 - 2.0 * theta * t).sqrt(),
            RadiusLaw::Polynomial { coefficients } => Trajectory {
                coefficients: coefficients.clone(),
            }
            .eval(t),
        }
    }

    pub fn dr(&self, t: f64) -> f64 {
        match self {
            RadiusLaw::Static { .. } => 0.0,
            RadiusLaw::Mcf { theta, .. } => -theta / self.r(t),
            RadiusLaw::Polynomial { coefficients } => Trajectory {
                coefficients: coefficients.clone(),
            }
            .d1(t),
        }
    }

    pub fn ddr(&self, t: f64) -> f64 {
        match self {
            RadiusLaw::Static { .. } => 0.0,
            RadiusLaw::Mcf { theta, .. } => {
                let r = self.r(t);
                -theta * theta / (r * r * r)
            }
            RadiusLaw::Polynomial { coefficients } => Trajectory {
                coefficients: coefficients.clone(),
            }
            .d2(t),
        }
    }
}

/// A prescribed flow with its time horizon and tube half-width κ.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FlowField {
    /// Two interfaces p₁(t) < p₂(t) on T¹ with Ω_t the arc (p₁, p₂).
    #[serde(rename = "front-pair-1d")]
    FrontPair1d {
        p1: Trajectory,
        p2: Trajectory,
        #[serde(rename = "T")]
        horizon: f64,
        #[serde(default)]
        kappa_tube: f64,
    },
    /// Circle of radius r(t) around `center` on T², Ω_t the disk.
    #[serde(rename = "circle-2d")]
    Circle2d {
        center: [f64; 2],
        radius: RadiusLaw,
        #[serde(rename = "T")]
        horizon: f64,
        #[serde(default)]
        kappa_tube: f64,
    },
}

/// All derivatives of the regularized signed distance at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistData {
    pub d: f64,
    pub grad: [f64; 2],
    pub lap: f64,
    pub dt: f64,
    pub dtt: f64,
    pub dt_lap: f64,
}

fn wrap(v: f64) -> f64 {
    v - v.round()
}

impl FlowField {
    /// Validated front pair; κ is sized from the minimal gap so the blend
    /// plateau flattens d before the equidistant kinks.
    pub fn front_pair(p1: Trajectory, p2: Trajectory, horizon: f64) -> Result<Self> {
        let mut gap_min = f64::INFINITY;
        for i in 0..=1000 {
            let t = horizon * i as f64 / 1000.0;
            let g1 = (p2.eval(t) - p1.eval(t)).rem_euclid(1.0);
            let g2 = 1.0 - g1;
            gap_min = gap_min.min(g1.min(g2));
        }
        if gap_min.is_nan() || gap_min <= 0.02 {
            return Err(Error::CutLocus(format!(
                "front gap shrinks to {gap_min:.4}; interfaces too close"
            )));
        }
        let kappa_tube = 0.22 * gap_min;
        Ok(FlowField::FrontPair1d {
            p1,
            p2,
            horizon,
            kappa_tube,
        })
    }

    /// Validated circle flow; requires r(t) ∈ [0.08, 0.22] over the horizon
    /// and sets κ = r_min/2.
    pub fn circle(center: [f64; 2], radius: RadiusLaw, horizon: f64) -> Result<Self> {
        let mut r_min = f64::INFINITY;
        let mut r_max = 0.0_f64;
        for i in 0..=1000 {
            let t = horizon * i as f64 / 1000.0;
            let r = radius.r(t);
            if !r.is_finite() {
                return Err(Error::CutLocus(format!("radius not finite at t = {t}")));
            }
            r_min = r_min.min(r);
            r_max = r_max.max(r);
        }
        if r_min < 0.08 || r_max > 0.22 {
            return Err(Error::CutLocus(format!(
                "radius range [{r_min:.4}, {r_max:.4}] leaves the admissible band [0.08, 0.22]"
            )));
        }
        Ok(FlowField::Circle2d {
            center,
            radius,
            horizon,
            kappa_tube: 0.5 * r_min,
        })
    }

    /// Re-runs the constructor checks on a deserialized flow (the JSON form
    /// does not carry a trusted κ).
    pub fn validated(self) -> Result<Self> {
        match self {
            FlowField::FrontPair1d {
                p1, p2, horizon, ..
            } => Self::front_pair(p1, p2, horizon),
            FlowField::Circle2d {
                center,
                radius,
                horizon,
                ..
            } => Self::circle(center, radius, horizon),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            FlowField::FrontPair1d { horizon, .. } => *horizon,
            FlowField::Circle2d { horizon, .. } => *horizon,
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            FlowField::FrontPair1d { kappa_tube, .. } => *kappa_tube,
            FlowField::Circle2d { kappa_tube, .. } => *kappa_tube,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FlowField::FrontPair1d { .. } => 1,
            FlowField::Circle2d { .. } => 2,
        }
    }

    /// Interface data (∂_t d, Δd) = (a, b) on Γ_t itself, per interface
    /// component, together with the H^{d−1} mass of each component.
    pub fn interface_data(&self, t: f64) -> Vec<(f64, f64, f64)> {
        match self {
            FlowField::FrontPair1d { p1, p2, .. } => {
                vec![(p1.d1(t), 0.0, 1.0), (-p2.d1(t), 0.0, 1.0)]
            }
            FlowField::Circle2d { radius, .. } => {
                let r = radius.r(t);
                vec![(-radius.dr(t), 1.0 / r, 2.0 * std::f64::consts::PI * r)]
            }
        }
    }
}

/// Odd C³ saturation: identity on [0, κ], constant 3κ/2 beyond 2κ, blended
/// by the quintic smoothstep in between. Returns (s, s', s'', s''') at |g|.
fn saturation(kappa: f64, g: f64) -> (f64, f64, f64, f64) {
    debug_assert!(g >= 0.0);
    if g <= kappa {
        (g, 1.0, 0.0, 0.0)
    } else if g >= 2.0 * kappa {
        (1.5 * kappa, 0.0, 0.0, 0.0)
    } else {
        let tau = (g - kappa) / kappa;
        let m = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
        let dm = 30.0 * tau * tau * (1.0 - 2.0 * tau + tau * tau);
        let ddm = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau * tau);
        // G(τ) = ∫_0^τ (1 − m) = τ − 2.5τ⁴ + 3τ⁵ − τ⁶
        let big_g = tau - 2.5 * tau.powi(4) + 3.0 * tau.powi(5) - tau.powi(6);
        (
            kappa + kappa * big_g,
            1.0 - m,
            -dm / kappa,
            -ddm / (kappa * kappa),
        )
    }
}

/// Raw (pre-saturation) distance data of the nearest interface sheet.
struct RawDist {
    raw: f64,
    grad: [f64; 2],
    lap: f64,
    dt: f64,
    dtt: f64,
    dt_lap: f64,
}

/// The regularized signed distance field of a flow; evaluators are pure.
#[derive(Debug, Clone)]
pub struct SignedDistanceField {
    pub flow: FlowField,
}

impl SignedDistanceField {
    pub fn new(flow: FlowField) -> Self {
        Self { flow }
    }

    fn raw(&self, t: f64, x: &[f64]) -> RawDist {
        match &self.flow {
            FlowField::FrontPair1d { p1, p2, .. } => {
                let d1 = wrap(x[0] - p1.eval(t));
                let d2 = wrap(x[0] - p2.eval(t));
                if d1.abs() <= d2.abs() {
                    RawDist {
                        raw: -d1,
                        grad: [-1.0, 0.0],
                        lap: 0.0,
                        dt: p1.d1(t),
                        dtt: p1.d2(t),
                        dt_lap: 0.0,
                    }
                } else {
                    RawDist {
                        raw: d2,
                        grad: [1.0, 0.0],
                        lap: 0.0,
                        dt: -p2.d1(t),
                        dtt: -p2.d2(t),
                        dt_lap: 0.0,
                    }
                }
            }
            FlowField::Circle2d { center, radius, .. } => {
                let dx = [wrap(x[0] - center[0]), wrap(x[1] - center[1])];
                let rho = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
                let r = radius.r(t);
                if rho < 1e-300 {
                    // exact center: raw = −r ≤ −2κ, deep in the plateau
                    return RawDist {
                        raw: -r,
                        grad: [0.0, 0.0],
                        lap: 0.0,
                        dt: -radius.dr(t),
                        dtt: -radius.ddr(t),
                        dt_lap: 0.0,
                    };
                }
                RawDist {
                    raw: rho - r,
                    grad: [dx[0] / rho, dx[1] / rho],
                    lap: 1.0 / rho,
                    dt: -radius.dr(t),
                    dtt: -radius.ddr(t),
                    dt_lap: 0.0,
                }
            }
        }
    }

    /// d, ∇d, Δd, ∂_t d (and the second time derivatives the ansatz needs).
    pub fn eval(&self, t: f64, x: &[f64]) -> DistData {
        let kappa = self.flow.kappa();
        let rd = self.raw(t, x);
        let g = rd.raw.abs();
        if g >= 2.0 * kappa {
            return DistData {
                d: 1.5 * kappa * rd.raw.signum(),
                ..Default::default()
            };
        }
        let sign = if rd.raw >= 0.0 { 1.0 } else { -1.0 };
        let (s, s1, s2, s3) = saturation(kappa, g);
        // odd extension S(raw) = sign·s(|raw|):
        // S' = s', S'' = sign·s'', S''' = s'''
        let sp = s1;
        let spp = sign * s2;
        let sppp = s3;
        DistData {
            d: sign * s,
            grad: [sp * rd.grad[0], sp * rd.grad[1]],
            // |∇raw| = 1 inside the saturation reach
            lap: spp + sp * rd.lap,
            dt: sp * rd.dt,
            dtt: spp * rd.dt * rd.dt + sp * rd.dtt,
            dt_lap: sppp * rd.dt + spp * rd.dt * rd.lap + sp * rd.dt_lap,
        }
    }

    /// Spatial gradients of (∂_t d, Δd) for in-tube points (used by the
    /// gradient-decomposition identity); None outside the exact-distance
    /// tube.
    pub fn data_gradients_in_tube(&self, t: f64, x: &[f64]) -> Option<([f64; 2], [f64; 2])> {
        let kappa = self.flow.kappa();
        let rd = self.raw(t, x);
        if rd.raw.abs() > kappa {
            return None;
        }
        match &self.flow {
            FlowField::FrontPair1d { .. } => Some(([0.0, 0.0], [0.0, 0.0])),
            FlowField::Circle2d { center, .. } => {
                let dx = [wrap(x[0] - center[0]), wrap(x[1] - center[1])];
                let rho = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
                // ∂_t d = −ṙ is x-independent; Δd = 1/ρ̂
                let c = -1.0 / (rho * rho * rho);
                Some(([0.0, 0.0], [c * dx[0], c * dx[1]]))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// the limiting energy
// ---------------------------------------------------------------------------

/// S_ac(Γ) = ∫_0^T Σ_components |Γ| (a − θb)²/(4μ) dt evaluated on Γ_t,
/// by composite Gauss quadrature in time.
pub fn s_ac(flow: &FlowField, coeffs: &Coefficients) -> f64 {
    s_ac_with(flow, coeffs, 8, 16)
}

/// Same with an explicit panel count / rule order (used by the quadrature
/// convergence check).
pub fn s_ac_with(flow: &FlowField, coeffs: &Coefficients, panels: usize, order: usize) -> f64 {
    let gl = GaussLegendre::new(order);
    gl.integrate_composite(0.0, flow.horizon(), panels, |t| {
        flow.interface_data(t)
            .iter()
            .map(|&(a, b, mass)| {
                let v = a - coeffs.theta * b;
                mass * v * v / (4.0 * coeffs.mu)
            })
            .sum()
    })
}

// ---------------------------------------------------------------------------
// co-area checks
// ---------------------------------------------------------------------------

/// ε-ladder of the layered integral (1/ε)∫ A(x, d/ε) dx against the
/// surface-integral target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoareaReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
    pub rel_err: Vec<f64>,
    pub order: f64,
}

/// Runs the ladder at time `t` on an n (or n×n) periodic lattice.
/// `A(x, ξ)` must decay exponentially in ξ.
pub fn coarea_check<F>(
    flow: &FlowField,
    t: f64,
    a_fn: F,
    eps_ladder: &[f64],
    n_grid: usize,
) -> Result<CoareaReport>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    if eps_ladder.is_empty() {
        return Err(Error::InvalidInput("empty eps ladder".into()));
    }
    let sdf = SignedDistanceField::new(flow.clone());

    // decay guard on a few interface probes
    let probes: Vec<[f64; 2]> = match flow {
        FlowField::FrontPair1d { p1, p2, .. } => {
            vec![
                [p1.eval(t).rem_euclid(1.0), 0.0],
                [p2.eval(t).rem_euclid(1.0), 0.0],
            ]
        }
        FlowField::Circle2d { center, radius, .. } => {
            let r = radius.r(t);
            (0..4)
                .map(|k| {
                    let phi = std::f64::consts::PI * 0.5 * k as f64;
                    [center[0] + r * phi.cos(), center[1] + r * phi.sin()]
                })
                .collect()
        }
    };
    let mut near = 0.0_f64;
    let mut far = 0.0_f64;
    for p in &probes {
        for xi in [-0.5, 0.0, 0.5] {
            near = near.max(a_fn(&p[..flow.dim()], xi).abs());
        }
        for xi in [-40.0, 40.0] {
            far = far.max(a_fn(&p[..flow.dim()], xi).abs());
        }
    }
    if far > 1e-4 * (1.0 + near) {
        return Err(Error::Decay(format!(
            "integrand does not decay: |A| = {far:.3e} at |ξ| = 40"
        )));
    }

    // ξ-quadrature over graded panels, split at 0 for |ξ|-type kinks
    let gl = GaussLegendre::new(16);
    let knots = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 48.0];
    let xi_integral = |x: &[f64]| -> f64 {
        let mut acc = 0.0;
        for w in knots.windows(2) {
            acc += gl.integrate(w[0], w[1], |xi| a_fn(x, xi));
            acc += gl.integrate(-w[1], -w[0], |xi| a_fn(x, xi));
        }
        acc
    };

    // surface-integral target
    let target = match flow {
        FlowField::FrontPair1d { p1, p2, .. } => {
            xi_integral(&[p1.eval(t).rem_euclid(1.0)]) + xi_integral(&[p2.eval(t).rem_euclid(1.0)])
        }
        FlowField::Circle2d { center, radius, .. } => {
            let r = radius.r(t);
            let gl_phi = GaussLegendre::new(32);
            gl_phi.integrate_composite(0.0, 2.0 * std::f64::consts::PI, 8, |phi| {
                let x = [center[0] + r * phi.cos(), center[1] + r * phi.sin()];
                r * xi_integral(&x)
            })
        }
    };

    let h = 1.0 / n_grid as f64;
    let mut values = Vec::new();
    for &eps in eps_ladder {
        let cells = eps / h;
        if cells < 8.0 {
            return Err(Error::Resolution { cells, needed: 8.0 });
        }
        let mut acc = KahanSum::new();
        match flow.dim() {
            1 => {
                for i in 0..n_grid {
                    let x = [i as f64 * h];
                    let dd = sdf.eval(t, &x);
                    acc.add(a_fn(&x, dd.d / eps) * h);
                }
            }
            _ => {
                for i in 0..n_grid {
                    for j in 0..n_grid {
                        let x = [i as f64 * h, j as f64 * h];
                        let dd = sdf.eval(t, &x);
                        acc.add(a_fn(&x, dd.d / eps) * h * h);
                    }
                }
            }
        }
        values.push(acc.value() / eps);
    }

    let rel_err: Vec<f64> = values
        .iter()
        .map(|v| ((v - target) / target).abs())
        .collect();
    let order = crate::quad::order_fit(eps_ladder, &rel_err);
    Ok(CoareaReport {
        eps: eps_ladder.to_vec(),
        values,
        target,
        rel_err,
        order,
    })
}

pub fn load_flow(path: &std::path::Path) -> Result<FlowField> {
    let text = std::fs::read_to_string(path)?;
    let flow: FlowField = serde_json::from_str(&text)?;
    flow.validated()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn static_circle() -> FlowField {
        FlowField::circle([0.5, 0.5], RadiusLaw::Static { r0: 0.15 }, 0.05).unwrap()
    }

    fn translating_pair() -> FlowField {
        FlowField::front_pair(
            Trajectory::linear(0.25, 0.3),
            Trajectory::linear(0.75, 0.3),
            0.05,
        )
        .unwrap()
    }

    fn coeffs_reference() -> Coefficients {
        Coefficients {
            theta1: 1.0 / 48.0,
            theta2: 1.0 / 48.0,
            nu: 7.0 / 640.0,
            mu: 25.2,
            theta: 1.0,
        }
    }

    #[test]
    fn circle_distance_elementary_values() {
        let flow = static_circle();
        let sdf = SignedDistanceField::new(flow);
        // x at distance 0.05 outside the circle of radius 0.15
        let x = [0.5 + 0.20, 0.5];
        let dd = sdf.eval(0.0, &x);
        assert!((dd.d - 0.05).abs() < 1e-14);
        assert!((dd.lap - 5.0).abs() < 1e-12, "Δd = {}", dd.lap);
        assert!((dd.grad[0] - 1.0).abs() < 1e-14 && dd.grad[1].abs() < 1e-14);
        // on Γ: d = 0, |∇d| = 1
        let on = [0.5, 0.5 + 0.15];
        let dd = sdf.eval(0.0, &on);
        assert!(dd.d.abs() < 1e-14);
        let g = (dd.grad[0] * dd.grad[0] + dd.grad[1] * dd.grad[1]).sqrt();
        assert!((g - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shrinking_circle_has_positive_dt() {
        // ṙ = −0.1 ⇒ ∂_t d = −ṙ = +0.1
        let flow = FlowField::circle(
            [0.5, 0.5],
            RadiusLaw::Polynomial {
                coefficients: vec![0.15, -0.1],
            },
            0.05,
        )
        .unwrap();
        let sdf = SignedDistanceField::new(flow);
        let dd = sdf.eval(0.01, &[0.5 + 0.16, 0.5]);
        assert!((dd.dt - 0.1).abs() < 1e-13, "∂_t d = {}", dd.dt);
    }

    #[test]
    fn gradient_is_unit_inside_tube() {
        let flow = static_circle();
        let kappa = flow.kappa();
        let sdf = SignedDistanceField::new(flow);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let off = rng.random_range(-kappa..kappa);
            let rho = 0.15 + off;
            let x = [0.5 + rho * phi.cos(), 0.5 + rho * phi.sin()];
            let dd = sdf.eval(0.0, &x);
            let g = (dd.grad[0] * dd.grad[0] + dd.grad[1] * dd.grad[1]).sqrt();
            assert!((g - 1.0).abs() < 1e-13);
            assert!((dd.d - off).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences_in_tube() {
        let circle = FlowField::circle(
            [0.5, 0.5],
            RadiusLaw::Polynomial {
                coefficients: vec![0.15, -0.08, 0.4],
            },
            0.05,
        )
        .unwrap();
        let pair = FlowField::front_pair(
            Trajectory {
                coefficients: vec![0.25, 0.3, -0.5],
            },
            Trajectory {
                coefficients: vec![0.75, 0.2, 0.8],
            },
            0.05,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for flow in [circle, pair] {
            let kappa = flow.kappa();
            let dim = flow.dim();
            let sdf = SignedDistanceField::new(flow.clone());
            let h = 3e-4;
            let mut checked = 0;
            while checked < 100 {
                let t = rng.random_range(0.005..0.045);
                let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let dd = sdf.eval(t, &x[..dim]);
                if dd.d.abs() > 0.8 * kappa {
                    continue; // want strict interior of the tube
                }
                checked += 1;
                // Laplacian by centered differences of d
                let mut lap_fd = 0.0;
                for k in 0..dim {
                    let mut xp = [x[0], x[1]];
                    let mut xm = [x[0], x[1]];
                    xp[k] += h;
                    xm[k] -= h;
                    lap_fd += (sdf.eval(t, &xp[..dim]).d - 2.0 * dd.d + sdf.eval(t, &xm[..dim]).d)
                        / (h * h);
                }
                assert!(
                    (lap_fd - dd.lap).abs() < 1e-3 * (1.0 + dd.lap.abs()),
                    "Δd: fd {lap_fd} vs analytic {}",
                    dd.lap
                );
                let dt_fd =
                    (sdf.eval(t + h, &x[..dim]).d - sdf.eval(t - h, &x[..dim]).d) / (2.0 * h);
                assert!(
                    (dt_fd - dd.dt).abs() < 1e-6 * (1.0 + dd.dt.abs()),
                    "∂_t d: fd {dt_fd} vs analytic {}",
                    dd.dt
                );
            }
        }
    }

    #[test]
    fn saturation_seam_is_c2() {
        let flow = static_circle();
        let kappa = flow.kappa();
        let sdf = SignedDistanceField::new(flow);
        let h = 1e-3;
        // walk radially across both seams and difference d twice
        for seam in [kappa, 2.0 * kappa] {
            for side in [-1.0, 1.0] {
                let rho0 = 0.15 + side * seam;
                let mut second = Vec::new();
                for k in -2..=2 {
                    let rho = rho0 + k as f64 * h;
                    let f = |r: f64| sdf.eval(0.0, &[0.5 + r, 0.5]).d;
                    second.push((f(rho + h) - 2.0 * f(rho) + f(rho - h)) / (h * h));
                }
                for w in second.windows(2) {
                    assert!(
                        (w[1] - w[0]).abs() < 0.2,
                        "second derivative jumps across seam {seam}: {second:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn mcf_circle_has_zero_energy() {
        let c = coeffs_reference();
        let flow = FlowField::circle(
            [0.5, 0.5],
            RadiusLaw::Mcf {
                r0: 0.15,
                theta: c.theta,
            },
            0.005,
        )
        .unwrap();
        let e = s_ac(&flow, &c);
        assert!(e.abs() < 1e-12, "S_ac = {e:.3e}");
    }

    #[test]
    fn static_circle_energy_closed_form() {
        let c = coeffs_reference();
        let flow = static_circle();
        let e = s_ac(&flow, &c);
        let expect = std::f64::consts::PI * c.theta * c.theta * 0.05 / (2.0 * c.mu * 0.15);
        assert!(
            ((e - expect) / expect).abs() < 1e-12,
            "S_ac = {e}, closed form {expect}"
        );
    }

    #[test]
    fn static_fronts_have_zero_energy() {
        let c = coeffs_reference();
        let flow =
            FlowField::front_pair(Trajectory::constant(0.25), Trajectory::constant(0.75), 0.05)
                .unwrap();
        assert_eq!(s_ac(&flow, &c), 0.0);
    }

    #[test]
    fn translating_fronts_energy_closed_form() {
        let c = coeffs_reference();
        let e = s_ac(&translating_pair(), &c);
        let expect = 0.05 * 2.0 * 0.3 * 0.3 / (4.0 * c.mu); // T·2c²/(4μ)
        assert!(((e - expect) / expect).abs() < 1e-13);
    }

    #[test]
    fn time_quadrature_converges_fast() {
        // richer trajectory so the low-order composite rule has visible error
        let c = coeffs_reference();
        let flow = FlowField::circle(
            [0.5, 0.5],
            RadiusLaw::Polynomial {
                coefficients: vec![0.15, -0.9, 12.0, -60.0],
            },
            0.05,
        )
        .unwrap();
        let truth = s_ac_with(&flow, &c, 64, 16);
        let mut errs = Vec::new();
        let panels = [1usize, 2, 4];
        for &p in &panels {
            errs.push((s_ac_with(&flow, &c, p, 2) - truth).abs());
        }
        let hs: Vec<f64> = panels.iter().map(|&p| 1.0 / p as f64).collect();
        let slope = crate::quad::order_fit(&hs, &errs);
        assert!(slope >= 3.0, "time-quadrature order {slope}");
    }

    #[test]
    fn coarea_front_pair_converges_to_two_point_target() {
        // A = e^{−|ξ|}: ∫ = 2 per front, two fronts ⇒ target 4
        let flow = translating_pair();
        let report = coarea_check(
            &flow,
            0.02,
            |_x, xi| (-xi.abs()).exp(),
            &[0.04, 0.02, 0.01, 0.005],
            4096,
        )
        .unwrap();
        assert!(
            (report.target - 4.0).abs() < 1e-10,
            "target {}",
            report.target
        );
        let last = *report.rel_err.last().unwrap();
        assert!(last < 0.01, "rel err at eps=0.005: {last}");
        assert!(report.order >= 1.0, "order {}", report.order);
    }

    #[test]
    fn coarea_circle_converges_to_length_weighted_target() {
        // A = e^{−|ξ|/2}: ∫ = 4; circumference 2π·0.15 ⇒ target 1.2π
        let flow = static_circle();
        let report = coarea_check(
            &flow,
            0.0,
            |_x, xi| (-0.5 * xi.abs()).exp(),
            &[0.04, 0.02, 0.01, 0.005],
            2048,
        )
        .unwrap();
        let expect = 1.2 * std::f64::consts::PI;
        assert!(
            ((report.target - expect) / expect).abs() < 1e-10,
            "target {}",
            report.target
        );
        let last = *report.rel_err.last().unwrap();
        assert!(last < 0.01, "rel err at eps=0.005: {last}");
        assert!(report.order >= 1.0, "order {}", report.order);
    }

    #[test]
    fn non_decaying_integrand_is_rejected() {
        let flow = translating_pair();
        match coarea_check(&flow, 0.0, |_x, _xi| 1.0, &[0.02], 1024) {
            Err(Error::Decay(_)) => {}
            other => panic!("expected DecayError, got {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let flow = translating_pair();
        match coarea_check(&flow, 0.0, |_x, xi| (-xi.abs()).exp(), &[0.01], 256) {
            Err(Error::Resolution { .. }) => {}
            other => panic!("expected ResolutionError, got {other:?}"),
        }
    }

    #[test]
    fn colliding_fronts_are_rejected() {
        match FlowField::front_pair(
            Trajectory::linear(0.25, 4.0),
            Trajectory::constant(0.50),
            0.1,
        ) {
            Err(Error::CutLocus(_)) => {}
            other => panic!("expected CutLocusError, got {other:?}"),
        }
    }

    #[test]
    fn radius_leaving_band_is_rejected() {
        match FlowField::circle([0.5, 0.5], RadiusLaw::Static { r0: 0.3 }, 0.05) {
            Err(Error::CutLocus(_)) => {}
            other => panic!("expected CutLocusError, got {other:?}"),
        }
    }

    #[test]
    fn flow_json_roundtrip() {
        let text = r#"{
            "kind": "circle-2d",
            "center": [0.5, 0.5],
            "radius": {"kind": "mcf", "r0": 0.15, "theta": 1.0},
            "T": 0.005
        }"#;
        let flow: FlowField = serde_json::from_str(text).unwrap();
        let flow = flow.validated().unwrap();
        assert_eq!(flow.dim(), 2);
        assert!(flow.kappa() > 0.0);
    }
}

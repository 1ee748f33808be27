//! The standing wave ū and v̄ = P(ū) on a truncated ξ-line, and the scalar
//! coefficients θ₁, θ₂, ν, μ, θ derived from it.
//!
//! Construction is by the separable quadrature
//!
//! ```text
//! ξ(u) = ∫_{(ρ₋+ρ₊)/2}^{u} P'(ρ)/√(2W̃(ρ)) dρ
//! ```
//!
//! inverted monotonically onto the grid. Near the wells the integrand has a
//! 1/|ρ−ρ_w| singularity; with ρ = ρ_w ∓ s² and then τ = ln s it becomes a
//! smooth bounded integrand (the well factorization W̃ = t²g(t) cancels the
//! singular scale exactly), so composite Gauss–Legendre panels in τ reach
//! machine accuracy down to deviations of 1e-10 from the wells. Beyond that
//! the linearized exponential tail ρ_w ∓ c e^{∓γ_w ξ} takes over.
//!
//! All derivative samples come from the analytic identities
//! v̄' = √(2W̃(ū)), v̄'' = W'(ū), v̄''' = W''(ū)ū', never from finite
//! differences, which preserves the exponential-decay structure to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::LineOperator;
use crate::model::ModelFunctions;
use crate::quad::{line_fit, line_fit_residual, trapezoid, GaussLegendre, KahanSum};

/// Deviation from the well at which quadrature hands over to the tail.
const PATCH_DELTA: f64 = 1e-10;

/// Uniform symmetric grid on [-L, L] with ξ = 0 as a node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiGrid {
    pub l: f64,
    pub n: usize,
    pub points: Vec<f64>,
}

impl XiGrid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if n.is_multiple_of(2) || n < 9 {
            return Err(Error::InvalidInput(format!(
                "grid size must be odd and >= 9, got {n}"
            )));
        }
        if l <= 1.0 {
            return Err(Error::Domain(format!("half-width {l} too small")));
        }
        let h = 2.0 * l / (n - 1) as f64;
        let points = (0..n).map(|i| -l + i as f64 * h).collect();
        Ok(Self { l, n, points })
    }

    /// Default production grid: L = 40, n = 8193.
    pub fn default_grid() -> Self {
        Self::new(40.0, 8193).unwrap()
    }

    pub fn h(&self) -> f64 {
        2.0 * self.l / (self.n - 1) as f64
    }

    /// The grid with the same half-width and doubled resolution (2n−1 nodes).
    pub fn refined(&self) -> Self {
        Self::new(self.l, 2 * self.n - 1).unwrap()
    }
}

/// Linearized tail data on one side of the layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailSide {
    /// Decay rate γ_w = √(W''(ρ_w)/P'(ρ_w)).
    pub gamma: f64,
    /// Amplitude: deviation(ξ) = c e^{−γ |ξ|} beyond the patch point.
    pub c: f64,
    /// |ξ| where the quadrature stops resolving (deviation = 1e-10).
    pub xi_patch: f64,
}

/// The sampled standing wave with analytic derivatives and tail data.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub grid: XiGrid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub du: Vec<f64>,
    pub ddu: Vec<f64>,
    pub dddu: Vec<f64>,
    pub dv: Vec<f64>,
    pub ddv: Vec<f64>,
    pub dddv: Vec<f64>,
    /// Realized decay rate of v̄' from the least-squares tail fit.
    pub gamma: f64,
    /// ū sampled at cell midpoints (for flux coefficients).
    pub u_mid: Vec<f64>,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub tail_minus: TailSide,
    pub tail_plus: TailSide,
}

/// Pointwise residual diagnostics of a (possibly perturbed) profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    /// max |v̄'' + B(ū) − D(ū)|
    pub ode_residual: f64,
    /// max |v̄' − √(2W̃(ū))|
    pub identity_residual: f64,
    /// number of non-increasing steps of ū
    pub monotonicity_violations: usize,
}

/// Least-squares exponential fit of the v̄' tails.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub c: f64,
    pub fit_residual: f64,
    /// Raised when the fit residual exceeds 0.1 (grid too short to trust).
    pub flagged: bool,
}

/// The model constants of the limiting energy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Coefficients {
    pub theta1: f64,
    pub theta2: f64,
    pub nu: f64,
    pub mu: f64,
    pub theta: f64,
}

// ---------------------------------------------------------------------------
// the side maps ξ(u)
// ---------------------------------------------------------------------------

/// One side of the separable quadrature, in the variable τ = ln s,
/// s = √|ρ_w − u|.
struct SideMap<'m> {
    model: &'m ModelFunctions,
    rho_w: f64,
    /// +1 on the ρ₊ side, −1 on the ρ₋ side.
    side: f64,
    tau_knots: Vec<f64>,
    xi_knots: Vec<f64>,
    gl: GaussLegendre,
}

impl<'m> SideMap<'m> {
    fn new(model: &'m ModelFunctions, side: f64) -> Self {
        let rho_w = if side > 0.0 {
            model.rho_plus
        } else {
            model.rho_minus
        };
        let gap = 0.5 * (model.rho_plus - model.rho_minus);
        let tau_mid = 0.5 * gap.ln();
        let tau_min = 0.5 * PATCH_DELTA.ln();
        let gl = GaussLegendre::new(24);

        let mut map = Self {
            model,
            rho_w,
            side,
            tau_knots: Vec::new(),
            xi_knots: Vec::new(),
            gl,
        };
        let mut tau = tau_mid;
        let mut xi = KahanSum::new();
        map.tau_knots.push(tau);
        map.xi_knots.push(0.0);
        while tau > tau_min {
            let next = (tau - 0.5).max(tau_min);
            xi.add(map.gl.integrate(next, tau, |t| map.integrand(t)));
            tau = next;
            map.tau_knots.push(tau);
            map.xi_knots.push(xi.value());
        }
        map
    }

    /// 2 P'(ρ(τ)) / √(2 g_w(t)), t = ρ(τ) − ρ_w = −side·e^{2τ}.
    fn integrand(&self, tau: f64) -> f64 {
        let dev = (2.0 * tau).exp();
        let t = -self.side * dev;
        let rho = self.rho_w + t;
        let g = self.well().gfactor.eval(t);
        2.0 * self.model.p_derivs(rho)[1] / (2.0 * g).sqrt()
    }

    fn well(&self) -> &crate::model::WellData {
        if self.side > 0.0 {
            self.model.well_plus()
        } else {
            self.model.well_minus()
        }
    }

    /// |ξ| of the patch point (deviation = PATCH_DELTA).
    fn xi_patch(&self) -> f64 {
        *self.xi_knots.last().unwrap()
    }

    /// Inverts ξ(u) = xi_abs; returns (u, deviation from the well).
    fn u_of_xi(&self, xi_abs: f64) -> (f64, f64) {
        debug_assert!(xi_abs >= 0.0 && xi_abs <= self.xi_patch() + 1e-12);
        // bracket in the knot table
        let mut k = 0;
        while k + 1 < self.xi_knots.len() && self.xi_knots[k + 1] < xi_abs {
            k += 1;
        }
        let (mut hi, mut lo) = (
            self.tau_knots[k],
            self.tau_knots[(k + 1).min(self.tau_knots.len() - 1)],
        );
        // target: f(τ) = xi_knots[k] + ∫_τ^{knot k} J = xi_abs, f decreasing in τ
        let f = |tau: f64| {
            self.xi_knots[k]
                + self
                    .gl
                    .integrate(tau, self.tau_knots[k], |t| self.integrand(t))
        };
        let mut tau = 0.5 * (lo + hi);
        for _ in 0..100 {
            let val = f(tau) - xi_abs;
            let step = val / self.integrand(tau); // f' = −J
            if step.abs() < 1e-14 * (1.0 + tau.abs()) {
                break;
            }
            if val > 0.0 {
                lo = tau;
            } else {
                hi = tau;
            }
            let next = tau + step;
            tau = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 {
                break;
            }
        }
        let dev = (2.0 * tau).exp();
        (self.rho_w - self.side * dev, dev)
    }
}

// ---------------------------------------------------------------------------
// profile construction
// ---------------------------------------------------------------------------

/// Solves the standing-wave problem on the grid. Deterministic: identical
/// inputs give bit-identical outputs.
pub fn solve_profile(model: &ModelFunctions, grid: &XiGrid) -> Result<WaveProfile> {
    let right = SideMap::new(model, 1.0);
    let left = SideMap::new(model, -1.0);

    let tail_of = |map: &SideMap| -> TailSide {
        let gamma = map.well().gamma;
        let xi_patch = map.xi_patch();
        TailSide {
            gamma,
            c: PATCH_DELTA * (gamma * xi_patch).exp(),
            xi_patch,
        }
    };
    let tail_plus = tail_of(&right);
    let tail_minus = tail_of(&left);

    // tail-consistency check one unit inside the patch point (when resolvable)
    for (map, tail) in [(&right, &tail_plus), (&left, &tail_minus)] {
        let xi_test = tail.xi_patch - 1.0;
        if xi_test > 0.0 {
            let (_, dev_quad) = map.u_of_xi(xi_test);
            let dev_tail = tail.c * (-tail.gamma * xi_test).exp();
            let mismatch = (dev_quad - dev_tail).abs();
            if mismatch > 1e-8 {
                return Err(Error::Tail {
                    xi: xi_test,
                    mismatch,
                });
            }
        }
    }

    let mid = model.well_mid();
    let sample = |xi: f64| -> (f64, f64, f64) {
        // returns (u, deviation from the relevant well, side sign)
        if xi == 0.0 {
            return (mid, mid - model.rho_minus, 0.0);
        }
        let (map, tail, side) = if xi > 0.0 {
            (&right, &tail_plus, 1.0)
        } else {
            (&left, &tail_minus, -1.0)
        };
        let a = xi.abs();
        if a <= tail.xi_patch {
            let (u, dev) = map.u_of_xi(a);
            (u, dev, side)
        } else {
            let dev = tail.c * (-tail.gamma * a).exp();
            (map.rho_w - side * dev, dev, side)
        }
    };

    let n = grid.n;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut du = vec![0.0; n];
    let mut ddu = vec![0.0; n];
    let mut dddu = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut ddv = vec![0.0; n];
    let mut dddv = vec![0.0; n];

    for (i, &xi) in grid.points.iter().enumerate() {
        let (ui, _dev, _side) = sample(xi);
        let pd = model.p_derivs(ui);
        let w = model.w_prime_derivs(ui);
        let sq = model.sqrt_2wtilde(ui);
        u[i] = ui;
        v[i] = pd[0];
        dv[i] = sq;
        ddv[i] = w[0];
        du[i] = sq / pd[1];
        dddv[i] = w[1] * du[i];
        ddu[i] = (ddv[i] - pd[2] * du[i] * du[i]) / pd[1];
        dddu[i] = (dddv[i] - pd[3] * du[i].powi(3) - 3.0 * pd[2] * du[i] * ddu[i]) / pd[1];
    }

    let h = grid.h();
    let u_mid = (0..n - 1)
        .map(|i| sample(grid.points[i] + 0.5 * h).0)
        .collect();

    let mut profile = WaveProfile {
        grid: grid.clone(),
        u,
        v,
        du,
        ddu,
        dddu,
        dv,
        ddv,
        dddv,
        gamma: 0.0,
        u_mid,
        rho_minus: model.rho_minus,
        rho_plus: model.rho_plus,
        tail_minus,
        tail_plus,
    };
    profile.gamma = fit_decay(&profile).map(|f| f.gamma).unwrap_or(f64::NAN);
    Ok(profile)
}

impl WaveProfile {
    /// Continuous evaluation of ū by cubic interpolation of the samples,
    /// with the closed-form exponential tails beyond ±L.
    pub fn eval_u(&self, xi: f64) -> f64 {
        if xi > self.grid.l {
            self.rho_plus - self.tail_plus.c * (-self.tail_plus.gamma * xi).exp()
        } else if xi < -self.grid.l {
            self.rho_minus + self.tail_minus.c * (self.tail_minus.gamma * xi).exp()
        } else {
            cubic_interp(&self.grid, &self.u, xi)
        }
    }

    /// Continuous ū' with tail closed forms.
    pub fn eval_du(&self, xi: f64) -> f64 {
        if xi > self.grid.l {
            let dev = self.tail_plus.c * (-self.tail_plus.gamma * xi).exp();
            self.tail_plus.gamma * dev
        } else if xi < -self.grid.l {
            let dev = self.tail_minus.c * (self.tail_minus.gamma * xi).exp();
            self.tail_minus.gamma * dev
        } else {
            cubic_interp(&self.grid, &self.du, xi)
        }
    }

    /// Continuous v̄' (vanishing tails beyond the decay floor).
    pub fn eval_dv(&self, xi: f64) -> f64 {
        if xi.abs() > self.grid.l {
            let (tail, _) = if xi > 0.0 {
                (&self.tail_plus, 1.0)
            } else {
                (&self.tail_minus, -1.0)
            };
            let dev = tail.c * (-tail.gamma * xi.abs()).exp();
            // v̄' = √(W̃'') · dev to leading order
            (2.0_f64).sqrt()
                * (0.5 * tail.gamma * tail.gamma).sqrt()
                * dev
                * self.p_prime_at_well(xi)
        } else {
            cubic_interp(&self.grid, &self.dv, xi)
        }
    }

    fn p_prime_at_well(&self, xi: f64) -> f64 {
        // √(W̃'') = γ_w P'(ρ_w); recover P'(ρ_w) from stored data
        if xi > 0.0 {
            self.dv[self.grid.n - 1] / self.du[self.grid.n - 1].max(f64::MIN_POSITIVE)
        } else {
            self.dv[0] / self.du[0].max(f64::MIN_POSITIVE)
        }
    }

    /// Trapezoid inner product on the grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        crate::quad::inner_product(f, g, self.grid.h())
    }
}

/// Cubic (4-point Lagrange) interpolation on a uniform grid.
pub fn cubic_interp(grid: &XiGrid, values: &[f64], xi: f64) -> f64 {
    let h = grid.h();
    let pos = (xi + grid.l) / h;
    let n = grid.n;
    let i1 = (pos.floor() as isize).clamp(1, n as isize - 3) as usize;
    let t = pos - i1 as f64; // in [0,1] away from the edges
    let (m1, p0, p1, p2) = (values[i1 - 1], values[i1], values[i1 + 1], values[i1 + 2]);
    // Lagrange weights at offsets -1, 0, 1, 2
    let w_m1 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w_0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w_1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w_2 = (t + 1.0) * t * (t - 1.0) / 6.0;
    w_m1 * m1 + w_0 * p0 + w_1 * p1 + w_2 * p2
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

/// Residuals of the stored arrays against the ODE and the v̄' identity,
/// evaluated at the stored ū samples (so perturbations of `u` show up).
pub fn profile_residuals(profile: &WaveProfile, model: &ModelFunctions) -> ResidualReport {
    let mut ode = 0.0_f64;
    let mut ident = 0.0_f64;
    for i in 0..profile.grid.n {
        let ui = profile.u[i];
        ode = ode.max((profile.ddv[i] + model.b_val(ui) - model.d_val(ui)).abs());
        ident = ident.max((profile.dv[i] - model.sqrt_2wtilde(ui)).abs());
    }
    let monotonicity_violations = profile.u.windows(2).filter(|w| w[1] <= w[0]).count();
    ResidualReport {
        ode_residual: ode,
        identity_residual: ident,
        monotonicity_violations,
    }
}

/// Least-squares fit of log v̄' against |ξ| over both tail windows
/// [0.5 L, 0.9 L].
pub fn fit_decay(profile: &WaveProfile) -> Result<DecayFit> {
    let l = profile.grid.l;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &xi) in profile.grid.points.iter().enumerate() {
        let a = xi.abs();
        if a >= 0.5 * l && a <= 0.9 * l {
            let value = profile.dv[i];
            if value <= 0.0 || !value.is_normal() {
                return Err(Error::Underflow(format!(
                    "v̄'({xi}) = {value} below the floating-point floor"
                )));
            }
            xs.push(a);
            ys.push(value.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::Domain(
            "tail window contains fewer than 4 samples".into(),
        ));
    }
    let (slope, intercept) = line_fit(&xs, &ys);
    let residual = line_fit_residual(&xs, &ys, slope, intercept);
    Ok(DecayFit {
        gamma: -slope,
        c: intercept.exp(),
        fit_residual: residual,
        flagged: residual > 0.1,
    })
}

// ---------------------------------------------------------------------------
// coefficients
// ---------------------------------------------------------------------------

/// θ₁, θ₂ by ρ-quadrature cross-checked against the line integrals
/// ⟨ū', v̄'⟩ and ⟨v̄', v̄'⟩ (ConsistencyError beyond 1e-6 relative), ν from
/// the quadratic form of −L_ū with analytic derivative samples, cross-checked
/// against the discrete operator apply.
pub fn compute_coefficients(
    profile: &WaveProfile,
    model: &ModelFunctions,
    op: &LineOperator,
) -> Result<Coefficients> {
    let gl = GaussLegendre::new(48);
    let theta1_rho = gl.integrate_composite(model.rho_minus, model.rho_plus, 24, |rho| {
        model.sqrt_2wtilde(rho)
    });
    let theta2_rho = gl.integrate_composite(model.rho_minus, model.rho_plus, 24, |rho| {
        model.p_derivs(rho)[1] * model.sqrt_2wtilde(rho)
    });

    let theta1_line = profile.inner(&profile.du, &profile.dv);
    let theta2_line = profile.inner(&profile.dv, &profile.dv);
    for (what, a, b) in [
        ("theta1 (rho vs line)", theta1_rho, theta1_line),
        ("theta2 (rho vs line)", theta2_rho, theta2_line),
    ] {
        if ((a - b) / a).abs() > 1e-6 {
            return Err(Error::Consistency { what, a, b });
        }
    }

    // ν = ⟨v̄', (−L_ū)v̄'⟩/2 through the quadratic form with analytic v̄'':
    // ⟨ψ, (−L)ψ⟩ = ∫ 2σ(ū)(ψ')² + (B+D)(ū)ψ².
    let energy: Vec<f64> = (0..profile.grid.n)
        .map(|i| {
            let ui = profile.u[i];
            2.0 * model.sigma_val(ui) * profile.ddv[i] * profile.ddv[i]
                + model.bd_sum(ui) * profile.dv[i] * profile.dv[i]
        })
        .collect();
    let nu = 0.5 * trapezoid(&energy, profile.grid.h());

    // discrete-apply cross-check (second-order in h)
    let nu_apply = nu_via_apply(profile, op);
    let h2 = profile.grid.h() * profile.grid.h();
    if ((nu_apply - nu) / nu).abs() > 1.0e3 * h2 + 1e-8 {
        return Err(Error::Consistency {
            what: "nu (quadratic form vs discrete apply)",
            a: nu,
            b: nu_apply,
        });
    }

    Ok(Coefficients {
        theta1: theta1_rho,
        theta2: theta2_rho,
        nu,
        mu: nu / (theta1_rho * theta1_rho),
        theta: theta2_rho / theta1_rho,
    })
}

/// ν through the assembled operator: ⟨v̄', (−L_h)v̄'⟩/2 with the discrete
/// stencil (O(h²) accurate; used as the grid-refinement witness).
pub fn nu_via_apply(profile: &WaveProfile, op: &LineOperator) -> f64 {
    let lv = op.apply(&profile.dv).expect("shape matches");
    let neg: Vec<f64> = lv.iter().map(|x| -x).collect();
    0.5 * profile.inner(&profile.dv, &neg)
}

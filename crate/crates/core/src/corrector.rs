//! The optimal first-order corrector and the quadratic cost density.
//!
//! For interface data (a, b) = (∂_t d, Δd) the forcing profile is
//!
//! ```text
//! F_Q(ξ) = ū'(ξ) a − v̄'(ξ) b − 2v̄''(ξ) ∂_ξQ − v̄'(ξ) ∂²_ξQ,
//! ```
//!
//! and the cost ∫ F_Q (−L_ū)⁻¹ F_Q dξ is minimized over admissible Q at
//!
//! ```text
//! Q̄_min(ξ) = ∫_0^ξ (v̄')⁻²(ξ̃) ∫_{-∞}^{ξ̃} ψ_min v̄' dξ̂ dξ̃,
//! ψ_min     = ū' a − v̄' b − (λ/2) L_ū v̄',
//! λ         = 2(‖v̄'‖² b − ⟨ū', v̄'⟩ a) / ⟨−L_ū v̄', v̄'⟩,
//! ```
//!
//! with minimum value (a − θb)²/(2μ). Everything is affine in (a, b) with
//! zero constant term, so two basis solves — (a,b) = (1,0) and (0,1) —
//! determine the corrector, the multiplier and the linearized maximizer
//! profile Ĥ₁ = (−L_ū)⁻¹F_{Q̄_min} for all interface data.
//!
//! Numerical notes. λ is computed from the same discrete inner products the
//! cumulative integral uses, so the orthogonality ⟨ψ_min, v̄'⟩ = 0 holds to
//! rounding and the inner integral returns to zero at +L; the right half is
//! accumulated backwards from +L, which keeps ∂_ξQ̄_min relatively accurate
//! all the way into the tails. The stored ∂²_ξQ̄_min comes from the corrector
//! equation 2v̄''Q' + v̄'Q'' = ψ_min itself, so F_{Q̄_min} collapses
//! algebraically to (λ/2)L_ū v̄' with no quadrature error. Cost values are
//! Richardson-extrapolated from the base grid and its 2n−1 refinement,
//! removing the O(h²) error of the tridiagonal solve.

use crate::error::{Error, Result};
use crate::linop::{assemble, LineOperator};
use crate::model::ModelFunctions;
use crate::profile::{
    compute_coefficients, cubic_interp, solve_profile, Coefficients, WaveProfile, XiGrid,
};
use crate::quad::{cumulative_trapezoid, cumulative_trapezoid_rev, richardson_h2};

/// Quadrature is trusted where v̄' exceeds this floor; beyond it ∂_ξQ̄_min
/// is extended by its analytic endpoint limit and Q̄_min continues linearly.
const DQ_FLOOR: f64 = 1e-10;

/// The universal corrector profiles: Q̄_min(a,b) = a·Q_A + b·Q_B,
/// Ĥ₁(a,b) = a·H_A + b·H_B, λ(a,b) = a·λ_A + b·λ_B.
#[derive(Debug, Clone)]
pub struct CorrectorBasis {
    pub grid: XiGrid,
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
    pub dq_a: Vec<f64>,
    pub dq_b: Vec<f64>,
    pub ddq_a: Vec<f64>,
    pub ddq_b: Vec<f64>,
    pub h_a: Vec<f64>,
    pub h_b: Vec<f64>,
    pub lambda_a: f64,
    pub lambda_b: f64,
    /// Endpoint limits of ∂_ξQ for the two columns: (at −∞, at +∞).
    pub dq_limit_a: (f64, f64),
    pub dq_limit_b: (f64, f64),
    /// (−L_ū)⁻¹ū' and (−L_ū)⁻¹v̄': the linearized maximizer of any scaled
    /// corrector is a combination of these and v̄'.
    pub s_u: Vec<f64>,
    pub s_v: Vec<f64>,
}

/// The two cost normalizations: `half` = ½∫F(−L)⁻¹F (the limiting S_ac
/// density) and `full` = ∫F(−L)⁻¹F (which equals (a−θb)²/(2μ) at Q̄_min).
#[derive(Debug, Clone, Copy)]
pub struct CostDensity {
    pub half: f64,
    pub full: f64,
}

/// Base-grid and refined-grid objects kept together so that cost values can
/// be Richardson-extrapolated. Immutable; evaluation over (a,b) lattices is
/// safe to run concurrently.
pub struct CorrectorWorkspace {
    pub model: ModelFunctions,
    pub profile: WaveProfile,
    pub op: LineOperator,
    pub basis: CorrectorBasis,
    pub profile_fine: WaveProfile,
    pub op_fine: LineOperator,
    pub basis_fine: CorrectorBasis,
    pub coeffs: Coefficients,
}

/// λ(a, b) = 2(θ₂ b − θ₁ a)/(2ν) from the model coefficients.
pub fn lambda_coeff(a: f64, b: f64, coeffs: &Coefficients) -> f64 {
    (coeffs.theta2 * b - coeffs.theta1 * a) / coeffs.nu
}

/// F_Q = ū' a − v̄' b − 2v̄'' ∂_ξQ − v̄' ∂²_ξQ on the grid.
pub fn f_of_q(
    a: f64,
    b: f64,
    q_triple: (&[f64], &[f64], &[f64]),
    profile: &WaveProfile,
) -> Result<Vec<f64>> {
    let n = profile.grid.n;
    let (q, dq, ddq) = q_triple;
    for arr in [q, dq, ddq] {
        if arr.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: arr.len(),
            });
        }
    }
    Ok((0..n)
        .map(|i| {
            a * profile.du[i]
                - b * profile.dv[i]
                - 2.0 * profile.ddv[i] * dq[i]
                - profile.dv[i] * ddq[i]
        })
        .collect())
}

/// Analytic image L_ū v̄' = 2σ(ū)v̄''' + 2σ'(ū)ū'v̄'' − (B+D)(ū)v̄'.
fn l_of_dv(profile: &WaveProfile, model: &ModelFunctions) -> Vec<f64> {
    (0..profile.grid.n)
        .map(|i| {
            let u = profile.u[i];
            2.0 * model.sigma_val(u) * profile.dddv[i]
                + 2.0 * model.sigma_prime(u) * profile.du[i] * profile.ddv[i]
                - model.bd_sum(u) * profile.dv[i]
        })
        .collect()
}

/// Trapezoid + exponential tail completion of ∫ f g dξ over the whole line,
/// for integrands decaying at twice the profile rates.
fn inner_with_tails(profile: &WaveProfile, f: &[f64], g: &[f64]) -> f64 {
    let n = profile.grid.n;
    let core = profile.inner(f, g);
    let t_plus = f[n - 1] * g[n - 1] / (2.0 * profile.tail_plus.gamma);
    let t_minus = f[0] * g[0] / (2.0 * profile.tail_minus.gamma);
    core + t_plus + t_minus
}

/// The l'Hôpital endpoint limit of ∂_ξQ̄_min at ξ → ±∞:
///
/// ```text
/// ∓ √(P'(ρ±)/(4W''(ρ±))) · [ (a/P'(ρ±) − b)
///    − (λ/2)(2σ(ρ±)W''(ρ±)/P'(ρ±) − (B+D)(ρ±)) ]
/// ```
pub fn dq_endpoint_limit(
    a: f64,
    b: f64,
    lambda: f64,
    model: &ModelFunctions,
    plus_side: bool,
) -> f64 {
    let rho = if plus_side {
        model.rho_plus
    } else {
        model.rho_minus
    };
    let pp = model.p_derivs(rho)[1];
    let wdd = model.w_prime_derivs(rho)[1];
    let root = (pp / (4.0 * wdd)).sqrt();
    let bracket =
        (a / pp - b) - 0.5 * lambda * (2.0 * model.sigma_val(rho) * wdd / pp - model.bd_sum(rho));
    let sign = if plus_side { -1.0 } else { 1.0 };
    sign * root * bracket
}

/// One corrector column for fixed data (a, b).
pub(crate) struct CorrectorColumn {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
    pub lambda: f64,
    pub dq_limits: (f64, f64),
}

pub(crate) fn build_column(
    a: f64,
    b: f64,
    profile: &WaveProfile,
    model: &ModelFunctions,
) -> Result<CorrectorColumn> {
    let n = profile.grid.n;
    let h = profile.grid.h();
    let lv = l_of_dv(profile, model);

    // discrete inner products so the orthogonality cancels exactly
    let i_uv = inner_with_tails(profile, &profile.du, &profile.dv);
    let i_vv = inner_with_tails(profile, &profile.dv, &profile.dv);
    let i_lv = inner_with_tails(profile, &lv, &profile.dv);
    let lambda = 2.0 * (i_vv * b - i_uv * a) / (-i_lv);

    let psi: Vec<f64> = (0..n)
        .map(|i| a * profile.du[i] - b * profile.dv[i] - 0.5 * lambda * lv[i])
        .collect();
    let g: Vec<f64> = (0..n).map(|i| psi[i] * profile.dv[i]).collect();

    // inner integral N(ξ) = ∫_{−∞}^ξ ψ v̄'; the total over the line must
    // vanish by the orthogonality built into λ
    let t_minus = g[0] / (2.0 * profile.tail_minus.gamma);
    let t_plus = g[n - 1] / (2.0 * profile.tail_plus.gamma);
    let fwd = cumulative_trapezoid(&g, h);
    let rev = cumulative_trapezoid_rev(&g, h);
    let defect = (t_minus + fwd[n - 1] + t_plus).abs();
    let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    if defect > 1e-8 * scale {
        return Err(Error::Quadrature { defect });
    }

    let limit_minus = dq_endpoint_limit(a, b, lambda, model, false);
    let limit_plus = dq_endpoint_limit(a, b, lambda, model, true);

    let mid = n / 2;
    let mut dq = vec![0.0; n];
    for i in 0..n {
        if profile.dv[i] <= DQ_FLOOR {
            dq[i] = if i < mid { limit_minus } else { limit_plus };
            continue;
        }
        // left half forwards (relative accuracy from the −∞ tail), right
        // half backwards (N(+∞) = 0 to rounding)
        let nval = if i <= mid {
            t_minus + fwd[i]
        } else {
            -(rev[i] + t_plus)
        };
        dq[i] = nval / (profile.dv[i] * profile.dv[i]);
    }

    // ∂²_ξQ from the corrector equation 2v̄''Q' + v̄'Q'' = ψ
    let mut ddq = vec![0.0; n];
    for i in 0..n {
        if profile.dv[i] > DQ_FLOOR {
            ddq[i] = (psi[i] - 2.0 * profile.ddv[i] * dq[i]) / profile.dv[i];
        }
    }

    // outer integral from ξ = 0 (Q̄_min(0) = 0)
    let q_raw = cumulative_trapezoid(&dq, h);
    let offset = q_raw[mid];
    let q: Vec<f64> = q_raw.into_iter().map(|v| v - offset).collect();

    Ok(CorrectorColumn {
        q,
        dq,
        ddq,
        lambda,
        dq_limits: (limit_minus, limit_plus),
    })
}

/// Builds the two-column corrector basis and the Ĥ₁ columns on one grid.
pub fn qmin_basis(
    profile: &WaveProfile,
    op: &LineOperator,
    model: &ModelFunctions,
) -> Result<CorrectorBasis> {
    let col_a = build_column(1.0, 0.0, profile, model)?;
    let col_b = build_column(0.0, 1.0, profile, model)?;

    let solve_h = |col: &CorrectorColumn, a: f64, b: f64| -> Result<Vec<f64>> {
        let f = f_of_q(a, b, (&col.q, &col.dq, &col.ddq), profile)?;
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        op.solve(&neg_f)
    };
    let h_a = solve_h(&col_a, 1.0, 0.0)?;
    let h_b = solve_h(&col_b, 0.0, 1.0)?;
    let neg_du: Vec<f64> = profile.du.iter().map(|x| -x).collect();
    let neg_dv: Vec<f64> = profile.dv.iter().map(|x| -x).collect();
    let s_u = op.solve(&neg_du)?;
    let s_v = op.solve(&neg_dv)?;

    Ok(CorrectorBasis {
        grid: profile.grid.clone(),
        q_a: col_a.q,
        q_b: col_b.q,
        dq_a: col_a.dq,
        dq_b: col_b.dq,
        ddq_a: col_a.ddq,
        ddq_b: col_b.ddq,
        h_a,
        h_b,
        lambda_a: col_a.lambda,
        lambda_b: col_b.lambda,
        dq_limit_a: col_a.dq_limits,
        dq_limit_b: col_b.dq_limits,
        s_u,
        s_v,
    })
}

impl CorrectorBasis {
    /// Q̄_min(a,b) and its two ξ-derivatives at an arbitrary ξ, interpolated
    /// cubically with the linear/constant tail continuation.
    pub fn eval_q(&self, a: f64, b: f64, xi: f64) -> (f64, f64, f64) {
        let l = self.grid.l;
        let n = self.grid.n;
        if xi > l {
            let dq = a * self.dq_limit_a.1 + b * self.dq_limit_b.1;
            let q_end = a * self.q_a[n - 1] + b * self.q_b[n - 1];
            (q_end + dq * (xi - l), dq, 0.0)
        } else if xi < -l {
            let dq = a * self.dq_limit_a.0 + b * self.dq_limit_b.0;
            let q_end = a * self.q_a[0] + b * self.q_b[0];
            (q_end + dq * (xi + l), dq, 0.0)
        } else {
            let q = a * cubic_interp(&self.grid, &self.q_a, xi)
                + b * cubic_interp(&self.grid, &self.q_b, xi);
            let dq = a * cubic_interp(&self.grid, &self.dq_a, xi)
                + b * cubic_interp(&self.grid, &self.dq_b, xi);
            let ddq = a * cubic_interp(&self.grid, &self.ddq_a, xi)
                + b * cubic_interp(&self.grid, &self.ddq_b, xi);
            (q, dq, ddq)
        }
    }

    /// Q̄_min(a,b) + offset: the one-parameter family of minimizers (the
    /// corrector equation fixes Q only up to an additive constant, and the
    /// cost depends on derivatives alone, so every offset is optimal).
    pub fn eval_q_offset(&self, a: f64, b: f64, xi: f64, offset: f64) -> (f64, f64, f64) {
        let (q, dq, ddq) = self.eval_q(a, b, xi);
        (q + offset, dq, ddq)
    }

    /// Ĥ₁(a,b) at an arbitrary ξ (zero beyond the grid, where it has
    /// decayed below rounding).
    pub fn eval_h1(&self, a: f64, b: f64, xi: f64) -> f64 {
        if xi.abs() > self.grid.l {
            0.0
        } else {
            a * cubic_interp(&self.grid, &self.h_a, xi)
                + b * cubic_interp(&self.grid, &self.h_b, xi)
        }
    }

    /// ∂_ξĤ₁(a,b) by centered differences of the stored columns.
    pub fn eval_dh1(&self, a: f64, b: f64, xi: f64) -> f64 {
        let h = self.grid.h();
        (self.eval_h1(a, b, xi + h) - self.eval_h1(a, b, xi - h)) / (2.0 * h)
    }
}

impl CorrectorWorkspace {
    /// Builds profile, operator and basis on `grid` and on its 2n−1
    /// refinement.
    pub fn build(model: &ModelFunctions, grid: &XiGrid) -> Result<Self> {
        let profile = solve_profile(model, grid)?;
        let op = assemble(&profile, model)?;
        let basis = qmin_basis(&profile, &op, model)?;
        let fine_grid = grid.refined();
        let profile_fine = solve_profile(model, &fine_grid)?;
        let op_fine = assemble(&profile_fine, model)?;
        let basis_fine = qmin_basis(&profile_fine, &op_fine, model)?;
        let coeffs = compute_coefficients(&profile, model, &op)?;
        Ok(Self {
            model: model.clone(),
            profile,
            op,
            basis,
            profile_fine,
            op_fine,
            basis_fine,
            coeffs,
        })
    }

    pub fn lambda(&self, a: f64, b: f64) -> f64 {
        lambda_coeff(a, b, &self.coeffs)
    }

    /// ∫F(−L)⁻¹F on one grid: solve Lψ = −F, then ⟨F, ψ⟩.
    fn cost_one_grid(f: &[f64], profile: &WaveProfile, op: &LineOperator) -> Result<f64> {
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let psi = op.solve(&neg_f)?;
        Ok(profile.inner(f, &psi))
    }

    /// Cost of explicit corrector samples given on both grids.
    pub fn cost_from_triples(
        &self,
        a: f64,
        b: f64,
        base: (&[f64], &[f64], &[f64]),
        fine: (&[f64], &[f64], &[f64]),
    ) -> Result<CostDensity> {
        let f_base = f_of_q(a, b, base, &self.profile)?;
        let f_fine = f_of_q(a, b, fine, &self.profile_fine)?;
        let q_h = Self::cost_one_grid(&f_base, &self.profile, &self.op)?;
        let q_h2 = Self::cost_one_grid(&f_fine, &self.profile_fine, &self.op_fine)?;
        let full = richardson_h2(q_h, q_h2);
        Ok(CostDensity {
            half: 0.5 * full,
            full,
        })
    }

    /// Cost with the optimal corrector; equals (a − θb)²/(2μ).
    pub fn cost_qmin(&self, a: f64, b: f64) -> Result<CostDensity> {
        self.cost_scaled(a, b, 1.0, 1.0)
    }

    /// Cost with Q ≡ 0 (the bare liminf forcing F = ū'a − v̄'b).
    pub fn cost_zero(&self, a: f64, b: f64) -> Result<CostDensity> {
        self.cost_scaled(a, b, 0.0, 0.0)
    }

    /// Cost with the rescaled basis combination Q = ca·a·Q_A + cb·b·Q_B.
    pub fn cost_scaled(&self, a: f64, b: f64, ca: f64, cb: f64) -> Result<CostDensity> {
        let combine = |basis: &CorrectorBasis| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let n = basis.grid.n;
            let (wa, wb) = (ca * a, cb * b);
            let mut q = vec![0.0; n];
            let mut dq = vec![0.0; n];
            let mut ddq = vec![0.0; n];
            for i in 0..n {
                q[i] = wa * basis.q_a[i] + wb * basis.q_b[i];
                dq[i] = wa * basis.dq_a[i] + wb * basis.dq_b[i];
                ddq[i] = wa * basis.ddq_a[i] + wb * basis.ddq_b[i];
            }
            (q, dq, ddq)
        };
        let (qb, dqb, ddqb) = combine(&self.basis);
        let (qf, dqf, ddqf) = combine(&self.basis_fine);
        self.cost_from_triples(a, b, (&qb, &dqb, &ddqb), (&qf, &dqf, &ddqf))
    }

    /// Cost for an analytic corrector ξ ↦ (Q, ∂_ξQ, ∂²_ξQ).
    pub fn cost_custom<F>(&self, a: f64, b: f64, q_fn: F) -> Result<CostDensity>
    where
        F: Fn(f64) -> (f64, f64, f64),
    {
        let sample = |grid: &XiGrid| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let mut q = vec![0.0; grid.n];
            let mut dq = vec![0.0; grid.n];
            let mut ddq = vec![0.0; grid.n];
            for (i, &x) in grid.points.iter().enumerate() {
                let (v, d1, d2) = q_fn(x);
                q[i] = v;
                dq[i] = d1;
                ddq[i] = d2;
            }
            (q, dq, ddq)
        };
        let (qb, dqb, ddqb) = sample(&self.profile.grid);
        let (qf, dqf, ddqf) = sample(&self.profile_fine.grid);
        self.cost_from_triples(a, b, (&qb, &dqb, &ddqb), (&qf, &dqf, &ddqf))
    }

    /// Ĥ₁(a,b) samples on the base grid: L_ū Ĥ₁ = −F_{Q̄_min}.
    pub fn h1_solve(&self, a: f64, b: f64) -> Vec<f64> {
        (0..self.profile.grid.n)
            .map(|i| a * self.basis.h_a[i] + b * self.basis.h_b[i])
            .collect()
    }

    /// The closed-form minimum (a − θb)²/(2μ).
    pub fn cost_closed_form(&self, a: f64, b: f64) -> f64 {
        let d = a - self.coeffs.theta * b;
        d * d / (2.0 * self.coeffs.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{half_mobility_model, reference_model};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn workspace() -> &'static CorrectorWorkspace {
        static WS: OnceLock<CorrectorWorkspace> = OnceLock::new();
        WS.get_or_init(|| {
            CorrectorWorkspace::build(&reference_model(), &XiGrid::default_grid()).unwrap()
        })
    }

    #[test]
    fn lambda_closed_forms() {
        let ws = workspace();
        // λ(1,0) = −θ₁/ν = −40/21, λ(0,1) = θ₂/ν = 40/21
        let expect = 40.0 / 21.0;
        assert!(
            (ws.lambda(1.0, 0.0) + expect).abs() < 1e-6,
            "{}",
            ws.lambda(1.0, 0.0)
        );
        assert!((ws.lambda(0.0, 1.0) - expect).abs() < 1e-6);
        // vanishes on mean-curvature-flow data a = θb
        let b = 1.3;
        assert!(ws.lambda(ws.coeffs.theta * b, b).abs() < 1e-12);
        // the basis columns carry the same multipliers
        assert!((ws.basis.lambda_a - ws.lambda(1.0, 0.0)).abs() < 1e-9);
        assert!((ws.basis.lambda_b - ws.lambda(0.0, 1.0)).abs() < 1e-9);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn f_of_q_linear_reads() {
        let ws = workspace();
        let n = ws.profile.grid.n;
        let z = vec![0.0; n];
        let f0 = f_of_q(0.0, 0.0, (&z, &z, &z), &ws.profile).unwrap();
        assert!(f0.iter().all(|&x| x == 0.0));
        let fa = f_of_q(1.0, 0.0, (&z, &z, &z), &ws.profile).unwrap();
        for i in 0..n {
            assert_eq!(fa[i], ws.profile.du[i]);
        }
    }

    #[test]
    fn cost_is_offset_invariant() {
        // F depends on Q only through its derivatives
        let ws = workspace();
        let n = ws.profile.grid.n;
        let cost0 = ws.cost_qmin(1.0, 0.0).unwrap();
        let cost_shift = ws
            .cost_custom(1.0, 0.0, |xi| ws.basis.eval_q_offset(1.0, 0.0, xi, 3.7))
            .unwrap();
        assert!(
            (cost0.full - cost_shift.full).abs() <= 1e-9 * cost0.full,
            "offset changed the cost: {} vs {}",
            cost0.full,
            cost_shift.full
        );
        let shifted: Vec<f64> = ws.basis.q_a.iter().map(|q| q + 3.7).collect();
        let f1 = f_of_q(
            1.0,
            0.0,
            (&ws.basis.q_a, &ws.basis.dq_a, &ws.basis.ddq_a),
            &ws.profile,
        )
        .unwrap();
        let f2 = f_of_q(
            1.0,
            0.0,
            (&shifted, &ws.basis.dq_a, &ws.basis.ddq_a),
            &ws.profile,
        )
        .unwrap();
        for i in 0..n {
            assert_eq!(f1[i], f2[i]);
        }
    }

    #[test]
    fn forcing_at_qmin_is_lambda_half_times_l_dv() {
        let ws = workspace();
        let f = f_of_q(
            1.0,
            0.0,
            (&ws.basis.q_a, &ws.basis.dq_a, &ws.basis.ddq_a),
            &ws.profile,
        )
        .unwrap();
        let lv = l_of_dv(&ws.profile, &ws.model);
        let mut sup = 0.0_f64;
        for i in 0..ws.profile.grid.n {
            if ws.profile.dv[i] > DQ_FLOOR {
                sup = sup.max((f[i] - 0.5 * ws.basis.lambda_a * lv[i]).abs());
            }
        }
        assert!(sup < 1e-12, "F − (λ/2)Lv̄' = {sup:.3e}");
    }

    #[test]
    fn orthogonality_identities_on_data_lattice() {
        // ψ_min ⊥ v̄' for all (a,b), and the scalar identity
        // ⟨F_{Q̄_min}, v̄'⟩ = aθ₁ − bθ₂ = −λν.
        let ws = workspace();
        let lv = l_of_dv(&ws.profile, &ws.model);
        for ia in 0..5 {
            for ib in 0..5 {
                let a = -2.0 + ia as f64;
                let b = -2.0 + ib as f64;
                let lambda = ws.lambda(a, b);
                let n = ws.profile.grid.n;
                let psi: Vec<f64> = (0..n)
                    .map(|i| a * ws.profile.du[i] - b * ws.profile.dv[i] - 0.5 * lambda * lv[i])
                    .collect();
                let ortho = inner_with_tails(&ws.profile, &psi, &ws.profile.dv);
                assert!(ortho.abs() < 1e-8, "⟨ψ_min, v̄'⟩ = {ortho:.3e} at ({a},{b})");

                let mut q = vec![0.0; n];
                let mut dq = vec![0.0; n];
                let mut ddq = vec![0.0; n];
                for i in 0..n {
                    q[i] = a * ws.basis.q_a[i] + b * ws.basis.q_b[i];
                    dq[i] = a * ws.basis.dq_a[i] + b * ws.basis.dq_b[i];
                    ddq[i] = a * ws.basis.ddq_a[i] + b * ws.basis.ddq_b[i];
                }
                let f = f_of_q(a, b, (&q, &dq, &ddq), &ws.profile).unwrap();
                let ip = inner_with_tails(&ws.profile, &f, &ws.profile.dv);
                let expect = a * ws.coeffs.theta1 - b * ws.coeffs.theta2;
                assert!(
                    (ip - expect).abs() < 1e-8,
                    "⟨F, v̄'⟩ = {ip:.6e} vs aθ₁−bθ₂ = {expect:.6e} at ({a},{b})"
                );
                assert!((expect + lambda * ws.coeffs.nu).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrector_ode_holds_between_stored_derivatives() {
        // independent check that dq really is the derivative of q and ddq of
        // dq (the construction never finite-differences)
        let ws = workspace();
        let h = ws.profile.grid.h();
        let n = ws.profile.grid.n;
        let mut sup_q = 0.0_f64;
        let mut sup_dq = 0.0_f64;
        for i in 1..n - 1 {
            if ws.profile.dv[i] > 1e-6 {
                let fd_q = (ws.basis.q_a[i + 1] - ws.basis.q_a[i - 1]) / (2.0 * h);
                let fd_dq = (ws.basis.dq_a[i + 1] - ws.basis.dq_a[i - 1]) / (2.0 * h);
                sup_q = sup_q.max((fd_q - ws.basis.dq_a[i]).abs());
                sup_dq = sup_dq.max((fd_dq - ws.basis.ddq_a[i]).abs());
            }
        }
        assert!(sup_q < 2e-4, "dQ vs FD(Q): {sup_q:.3e}");
        assert!(sup_dq < 2e-3, "ddQ vs FD(dQ): {sup_dq:.3e}");
    }

    #[test]
    fn endpoint_limits_match_lhopital_closed_form() {
        let ws = workspace();
        // measure ∂_ξQ at the points where v̄' crosses 3e-7: deep enough in
        // the tail for the limit, far above the quadrature noise floor
        let probe = |dq: &[f64], plus: bool| -> f64 {
            let n = ws.profile.grid.n;
            if plus {
                (0..n)
                    .rev()
                    .find(|&i| ws.profile.dv[i] > 3e-7)
                    .map(|i| dq[i])
                    .unwrap()
            } else {
                (0..n)
                    .find(|&i| ws.profile.dv[i] > 3e-7)
                    .map(|i| dq[i])
                    .unwrap()
            }
        };
        for (dq, limits) in [
            (&ws.basis.dq_a, ws.basis.dq_limit_a),
            (&ws.basis.dq_b, ws.basis.dq_limit_b),
        ] {
            let got_minus = probe(dq, false);
            let got_plus = probe(dq, true);
            assert!(
                (got_minus - limits.0).abs() < 1e-4,
                "-∞ limit: {got_minus} vs {}",
                limits.0
            );
            assert!(
                (got_plus - limits.1).abs() < 1e-4,
                "+∞ limit: {got_plus} vs {}",
                limits.1
            );
        }
        // reference-model closed form at +∞ for (a,b) = (1,0):
        // λ = −40/21, limit = −[1 − (λ/2)(−3/4)] = −2/7
        assert!(
            (ws.basis.dq_limit_a.1 + 2.0 / 7.0).abs() < 1e-9,
            "{}",
            ws.basis.dq_limit_a.1
        );
    }

    #[test]
    fn growth_bounds_of_the_minimizer() {
        let ws = workspace();
        let n = ws.profile.grid.n;
        let mut sup_ratio = 0.0_f64;
        let mut sup_dq = 0.0_f64;
        for i in 0..n {
            let xi = ws.profile.grid.points[i];
            sup_ratio = sup_ratio.max(ws.basis.q_a[i].abs() / (1.0 + xi.abs()));
            sup_dq = sup_dq.max(ws.basis.dq_a[i].abs());
        }
        assert!(sup_ratio < 10.0, "sup |Q|/(1+|ξ|) = {sup_ratio}");
        assert!(sup_dq < 10.0, "sup |∂Q| = {sup_dq}");
    }

    #[test]
    fn minimality_on_the_data_lattice() {
        let ws = workspace();
        for ia in 0..7 {
            for ib in 0..7 {
                let a = -2.0 + ia as f64 * (4.0 / 6.0);
                let b = -2.0 + ib as f64 * (4.0 / 6.0);
                let cost = ws.cost_qmin(a, b).unwrap();
                let closed = ws.cost_closed_form(a, b);
                let err = if closed.abs() > 1e-8 {
                    ((cost.full - closed) / closed).abs()
                } else {
                    cost.full.abs()
                };
                assert!(
                    err < 1e-6,
                    "cost({a},{b}) = {:.12e}, closed {closed:.12e}, err {err:.3e}",
                    cost.full
                );
            }
        }
    }

    #[test]
    fn reference_cost_at_unit_velocity() {
        let ws = workspace();
        let cost = ws.cost_qmin(1.0, 0.0).unwrap();
        let expect = 1.0 / 50.4; // 1/(2μ) with μ = 25.2
        assert!(
            ((cost.full - expect) / expect).abs() < 1e-6,
            "{} vs {expect}",
            cost.full
        );
        assert!((cost.half - 0.5 * cost.full).abs() < 1e-18);
    }

    #[test]
    fn mcf_data_has_zero_cost() {
        let ws = workspace();
        let b = 1.0;
        let cost = ws.cost_qmin(ws.coeffs.theta * b, b).unwrap();
        assert!(cost.full.abs() < 1e-10, "{}", cost.full);
    }

    #[test]
    fn random_admissible_correctors_respect_the_lower_bound() {
        let ws = workspace();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (a, b) = (1.0, -0.7);
        let bound = ws.cost_closed_form(a, b);
        for trial in 0..50 {
            // smooth compactly-supported bump + multiples of the basis
            let c0: f64 = rng.random_range(-1.0..1.0);
            let c1: f64 = rng.random_range(-1.0..1.0);
            let amp: f64 = rng.random_range(-2.0..2.0);
            let width: f64 = rng.random_range(1.0..6.0);
            let center: f64 = rng.random_range(-8.0..8.0);
            let mk = |basis: &CorrectorBasis, grid: &XiGrid| {
                let n = grid.n;
                let mut q = vec![0.0; n];
                let mut dq = vec![0.0; n];
                let mut ddq = vec![0.0; n];
                for i in 0..n {
                    let x = grid.points[i];
                    let s = (x - center) / width;
                    let bump = amp * (-s * s).exp();
                    let dbump = -2.0 * s / width * bump;
                    let ddbump = (-2.0 / (width * width)) * bump + (2.0 * s / width).powi(2) * bump;
                    q[i] = c0 * basis.q_a[i] + c1 * basis.q_b[i] + bump;
                    dq[i] = c0 * basis.dq_a[i] + c1 * basis.dq_b[i] + dbump;
                    ddq[i] = c0 * basis.ddq_a[i] + c1 * basis.ddq_b[i] + ddbump;
                }
                (q, dq, ddq)
            };
            let (qb, dqb, ddqb) = mk(&ws.basis, &ws.profile.grid);
            let (qf, dqf, ddqf) = mk(&ws.basis_fine, &ws.profile_fine.grid);
            let cost = ws
                .cost_from_triples(a, b, (&qb, &dqb, &ddqb), (&qf, &dqf, &ddqf))
                .unwrap();
            assert!(
                cost.full >= bound - 1e-6,
                "trial {trial}: cost {} < bound {bound}",
                cost.full
            );
        }
    }

    #[test]
    fn inverse_quadratic_form_is_positive() {
        let ws = workspace();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let psi = crate::linop::tests::random_smooth(&ws.profile.grid, &mut rng);
            let neg: Vec<f64> = psi.iter().map(|x| -x).collect();
            let phi = ws.op.solve(&neg).unwrap();
            let lhs = ws.profile.inner(&psi, &phi);
            let rhs = ws.op.quadratic_form(&phi);
            assert!(lhs >= 0.0);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-12),
                "⟨ψ,(−L)⁻¹ψ⟩ = {lhs:.6e} vs energy {rhs:.6e}"
            );
        }
    }

    #[test]
    fn affinity_against_direct_single_data_build() {
        let ws = workspace();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            let col = build_column(a, b, &ws.profile, &ws.model).unwrap();
            let mut sup = 0.0_f64;
            for i in 0..ws.profile.grid.n {
                let combo = a * ws.basis.q_a[i] + b * ws.basis.q_b[i];
                sup = sup.max((combo - col.q[i]).abs());
            }
            assert!(sup < 1e-9, "affinity defect {sup:.3e} at ({a},{b})");
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn h1_solves_the_linearized_equation() {
        let ws = workspace();
        let (a, b) = (1.0, 0.0);
        let h1 = ws.h1_solve(a, b);
        let f = f_of_q(
            a,
            b,
            (&ws.basis.q_a, &ws.basis.dq_a, &ws.basis.ddq_a),
            &ws.profile,
        )
        .unwrap();
        // roundtrip: L Ĥ₁ + F ≈ 0
        let back = ws.op.apply(&h1).unwrap();
        let mut sup = 0.0_f64;
        for i in 1..ws.profile.grid.n - 1 {
            sup = sup.max((back[i] + f[i]).abs());
        }
        assert!(sup < 1e-8, "L Ĥ₁ + F = {sup:.3e}");
        // for the optimal corrector Ĥ₁ = −(λ/2)v̄' analytically
        let mut sup2 = 0.0_f64;
        for i in 0..ws.profile.grid.n {
            sup2 = sup2.max((h1[i] + 0.5 * ws.basis.lambda_a * ws.profile.dv[i]).abs());
        }
        assert!(sup2 < 1e-6, "Ĥ₁ + (λ/2)v̄' = {sup2:.3e}");
    }

    #[test]
    fn h1_is_orthogonal_to_l_dv_on_mcf_data() {
        let ws = workspace();
        let theta = ws.coeffs.theta;
        let h1 = ws.h1_solve(theta, 1.0);
        let lv = l_of_dv(&ws.profile, &ws.model);
        // ⟨Ĥ₁, L v̄'⟩ = −⟨F, v̄'⟩ = 0 by self-adjointness and orthogonality
        let ip = inner_with_tails(&ws.profile, &h1, &lv);
        assert!(ip.abs() < 1e-8, "⟨Ĥ₁, Lv̄'⟩ = {ip:.3e}");
    }

    #[test]
    fn h1_decays_at_the_operator_rate() {
        let ws = workspace();
        let f = f_of_q(
            1.0,
            0.0,
            (&ws.basis.q_a, &ws.basis.dq_a, &ws.basis.ddq_a),
            &ws.profile,
        )
        .unwrap();
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let gamma_fit = ws.profile.gamma;
        let est = ws.op.decay_estimate(&neg, gamma_fit).unwrap();
        assert!(
            est.satisfied,
            "Ĥ₁ decay {} below bound {}",
            est.gamma_out, est.bound
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn half_mobility_corrector_separates() {
        // For P = u/2 the minimizer factorizes: Q̄_min = (2a − b) Q*(ξ) with
        // Q* built from ū' alone. Equivalently Q_A = 2Q*, Q_B = −Q*.
        let model = half_mobility_model();
        let ws = CorrectorWorkspace::build(&model, &XiGrid::default_grid()).unwrap();
        let p = &ws.profile;
        let n = p.grid.n;
        let h = p.grid.h();

        // independent construction of Q* from the separable formula
        let lu: Vec<f64> = (0..n)
            .map(|i| {
                let u = p.u[i];
                2.0 * model.sigma_val(u) * p.dddu[i]
                    + 2.0 * model.sigma_prime(u) * p.du[i] * p.ddu[i]
                    - model.bd_sum(u) * p.du[i]
            })
            .collect();
        let i_uu = inner_with_tails(p, &p.du, &p.du);
        let i_lu = inner_with_tails(p, &lu, &p.du);
        let psi: Vec<f64> = (0..n).map(|i| p.du[i] + i_uu * lu[i] / (-i_lu)).collect();
        let g: Vec<f64> = (0..n).map(|i| psi[i] * p.du[i]).collect();
        let t_minus = g[0] / (2.0 * p.tail_minus.gamma);
        let t_plus = g[n - 1] / (2.0 * p.tail_plus.gamma);
        let fwd = cumulative_trapezoid(&g, h);
        let rev = cumulative_trapezoid_rev(&g, h);
        let mid = n / 2;
        let mut dq_star = vec![0.0; n];
        for i in 0..n {
            if p.du[i] > DQ_FLOOR {
                let nval = if i <= mid {
                    t_minus + fwd[i]
                } else {
                    -(rev[i] + t_plus)
                };
                dq_star[i] = nval / (p.du[i] * p.du[i]);
            }
        }
        let q_raw = cumulative_trapezoid(&dq_star, h);
        let offset = q_raw[mid];
        let q_star: Vec<f64> = q_raw.into_iter().map(|v| v - offset).collect();

        let mut sup_a = 0.0_f64;
        let mut sup_b = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..n {
            if p.du[i] > 1e-9 {
                sup_a = sup_a.max((ws.basis.q_a[i] - 2.0 * q_star[i]).abs());
                sup_b = sup_b.max((ws.basis.q_b[i] + q_star[i]).abs());
                scale = scale.max(q_star[i].abs());
            }
        }
        assert!(sup_a <= 1e-6 * scale.max(1.0), "Q_A − 2Q*: {sup_a:.3e}");
        assert!(sup_b <= 1e-6 * scale.max(1.0), "Q_B + Q*: {sup_b:.3e}");
    }
}

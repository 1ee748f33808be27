//! The transition-layer ansatz
//!
//! ```text
//! φ_ε(t,x) = ū(d(t,x)/ε + ε Q(t, x, d/ε)) + ε R_ε(t,x),
//! ```
//!
//! the maximizer H_max,ε of the variational rate functional — the unique
//! solution of the nonlinear Poisson equation
//!
//! ```text
//! ∂_tφ + ∇·[2σ(φ)∇H] = ΔP(φ) + (B(φ)e^H − D(φ)e^{−H})/ε²
//! ```
//!
//! — and the three evaluations of S_ε: the direct supremum value, the
//! variational lower bound J^H for arbitrary test fields, and the ε-free
//! asymptotic evaluator ∫∫ ½∫F_Q(−L_ū)⁻¹F_Q dξ dH^{d−1} dt.
//!
//! The spatial discretization is periodic flux-form finite differences on
//! the unit torus (full 1-d torus or full 2-d grid). The same discrete
//! operators enter the Newton residual, the Jacobian, J and S, so J(H_max)
//! equals S_ε identically at the solver tolerance and J is globally concave
//! in H — the discrete maximizer certificate is exact, not asymptotic.
//! ∂_tφ_ε is assembled analytically through the chain rule (signed-distance
//! time derivatives and the corrector columns), never by time differencing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::CorrectorWorkspace;
use crate::error::{Error, Result};
use crate::geometry::{s_ac, DistData, FlowField, SignedDistanceField};
use crate::quad::{order_fit, GaussLegendre, KahanSum};

// ---------------------------------------------------------------------------
// ansatz specification
// ---------------------------------------------------------------------------

/// Which corrector modulates the layer profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectorChoice {
    /// Q ≡ 0.
    Zero,
    /// The optimal corrector Q̄_min.
    QMin,
    /// Rescaled basis combination Q = ca·a·Q_A + cb·b·Q_B (ca = cb = 1
    /// recovers Q̄_min); exercises the liminf inequality off the optimum.
    Scaled { ca: f64, cb: f64 },
}

impl CorrectorChoice {
    fn scalings(&self) -> (f64, f64) {
        match self {
            CorrectorChoice::Zero => (0.0, 0.0),
            CorrectorChoice::QMin => (1.0, 1.0),
            CorrectorChoice::Scaled { ca, cb } => (*ca, *cb),
        }
    }
}

/// Smooth periodic perturbation R_ε = √ε · amplitude · bump(x); the √ε
/// factor realizes a vanishing family in the admissible class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl PerturbationSpec {
    /// exp(−Σ sin²(π(x_k − c_k))/w²): smooth and 1-periodic in each
    /// coordinate. Missing center components default to 0.5.
    fn bump(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (k, &xk) in x.iter().enumerate() {
            let ck = self.center.get(k).copied().unwrap_or(0.5);
            let arg = (std::f64::consts::PI * (xk - ck)).sin();
            s += arg * arg;
        }
        self.amplitude * (-s / (self.width * self.width)).exp()
    }
}

/// The full ansatz: model objects, flow, corrector choice, perturbation and
/// the layer width ε. Immutable; slices may be built concurrently.
pub struct AnsatzField<'a> {
    pub ws: &'a CorrectorWorkspace,
    pub flow: &'a FlowField,
    pub q_choice: CorrectorChoice,
    pub r_eps: Option<PerturbationSpec>,
    pub eps: f64,
    sdf: SignedDistanceField,
}

/// One time slice of the ansatz on the periodic lattice: everything the
/// Newton solve and the functionals need.
#[derive(Debug, Clone)]
pub struct PhiSlice {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub eps: f64,
    pub phi: Vec<f64>,
    pub dphi_dt: Vec<f64>,
    /// 2σ(φ) at x-edges (i+½, j) and y-edges (i, j+½).
    pub ae_x: Vec<f64>,
    pub ae_y: Vec<f64>,
    pub p_of_phi: Vec<f64>,
    pub b_of_phi: Vec<f64>,
    pub d_of_phi: Vec<f64>,
    /// Newton initial guess εĤ₁(t, x, d/ε).
    pub h_guess: Vec<f64>,
}

/// Newton output for one slice.
#[derive(Debug, Clone)]
pub struct MaximizerField {
    pub h: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub stiffness_warning: bool,
}

impl<'a> AnsatzField<'a> {
    pub fn new(
        ws: &'a CorrectorWorkspace,
        flow: &'a FlowField,
        q_choice: CorrectorChoice,
        r_eps: Option<PerturbationSpec>,
        eps: f64,
    ) -> Self {
        Self {
            ws,
            flow,
            q_choice,
            r_eps,
            eps,
            sdf: SignedDistanceField::new(flow.clone()),
        }
    }

    /// (Q, ∂_ξQ, ∂_tQ at frozen ξ) for the active choice at the interface
    /// data carried by `dd`.
    fn q_eval(&self, dd: &DistData, xi: f64) -> (f64, f64, f64) {
        let (ca, cb) = self.q_choice.scalings();
        if ca == 0.0 && cb == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let basis = &self.ws.basis;
        let (qa, dqa, _) = basis.eval_q(1.0, 0.0, xi);
        let (qb, dqb, _) = basis.eval_q(0.0, 1.0, xi);
        let wa = ca * dd.dt;
        let wb = cb * dd.lap;
        let q = wa * qa + wb * qb;
        let dq = wa * dqa + wb * dqb;
        // ∂_tQ at frozen ξ: the data (a, b) carry the time dependence
        let dt_q = ca * dd.dtt * qa + cb * dd.dt_lap * qb;
        (q, dq, dt_q)
    }

    /// φ_ε and ∂_tφ_ε at one point.
    pub fn phi_point(&self, t: f64, x: &[f64]) -> (f64, f64) {
        let dd = self.sdf.eval(t, x);
        let eps = self.eps;
        let xi = dd.d / eps;
        let (q, dq, dt_q) = self.q_eval(&dd, xi);
        let z = xi + eps * q;
        let r = self.r_eps.as_ref().map_or(0.0, |p| p.bump(x)) * eps.sqrt();
        let phi = self.ws.profile.eval_u(z) + eps * r;
        // ∂_t z = ∂_t d/ε + ε ∂_tQ + ∂_ξQ ∂_t d ; R is time-independent
        let dz_dt = dd.dt / eps + eps * dt_q + dq * dd.dt;
        let dphi_dt = self.ws.profile.eval_du(z) * dz_dt;
        (phi, dphi_dt)
    }

    /// Newton initial guess Ĥ₁ for the active corrector choice, composed
    /// from the stored inverse columns:
    /// Ĥ₁ = a[(1−ca)S_u − ca(λ_A/2)v̄'] + b[−(1−cb)S_v − cb(λ_B/2)v̄']
    /// with S_u = (−L)⁻¹ū', S_v = (−L)⁻¹v̄'.
    fn h1_point(&self, dd: &DistData, xi: f64) -> f64 {
        let (ca, cb) = self.q_choice.scalings();
        let basis = &self.ws.basis;
        if xi.abs() > basis.grid.l {
            return 0.0;
        }
        let su = crate::profile::cubic_interp(&basis.grid, &basis.s_u, xi);
        let sv = crate::profile::cubic_interp(&basis.grid, &basis.s_v, xi);
        let dv = self.ws.profile.eval_dv(xi);
        let col_a = (1.0 - ca) * su - ca * 0.5 * basis.lambda_a * dv;
        let col_b = -(1.0 - cb) * sv - cb * 0.5 * basis.lambda_b * dv;
        dd.dt * col_a + dd.lap * col_b
    }

    /// Builds the slice at time t on an n (or n×n) lattice.
    pub fn build_slice(&self, t: f64, n: usize) -> Result<PhiSlice> {
        let dim = self.flow.dim();
        let h = 1.0 / n as f64;
        let eps = self.eps;
        let model = &self.ws.model;
        let total = if dim == 1 { n } else { n * n };

        let mut phi = vec![0.0; total];
        let mut dphi_dt = vec![0.0; total];
        let mut ae_x = vec![0.0; total];
        let mut ae_y = if dim == 2 {
            vec![0.0; total]
        } else {
            Vec::new()
        };
        let mut h_guess = vec![0.0; total];

        let point = |idx: usize| -> Vec<f64> {
            if dim == 1 {
                vec![idx as f64 * h]
            } else {
                vec![(idx % n) as f64 * h, (idx / n) as f64 * h]
            }
        };

        for idx in 0..total {
            let x = point(idx);
            let (p, dp) = self.phi_point(t, &x);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Range {
                    index: idx,
                    value: p,
                });
            }
            phi[idx] = p;
            dphi_dt[idx] = dp;
            let dd = self.sdf.eval(t, &x);
            h_guess[idx] = eps * self.h1_point(&dd, dd.d / eps);

            // σ(φ) at the forward edges, from the analytic ansatz
            let mut xe = x.clone();
            xe[0] += 0.5 * h;
            ae_x[idx] = 2.0 * model.sigma_val(self.phi_point(t, &xe).0);
            if dim == 2 {
                let mut ye = x.clone();
                ye[1] += 0.5 * h;
                ae_y[idx] = 2.0 * model.sigma_val(self.phi_point(t, &ye).0);
            }
        }

        let p_of_phi = phi.iter().map(|&p| model.p_derivs(p)[0]).collect();
        let b_of_phi = phi.iter().map(|&p| model.b_val(p)).collect();
        let d_of_phi = phi.iter().map(|&p| model.d_val(p)).collect();

        Ok(PhiSlice {
            dim,
            n,
            h,
            eps,
            phi,
            dphi_dt,
            ae_x,
            ae_y,
            p_of_phi,
            b_of_phi,
            d_of_phi,
            h_guess,
        })
    }
}

// ---------------------------------------------------------------------------
// discrete operators on the periodic lattice
// ---------------------------------------------------------------------------

impl PhiSlice {
    #[inline]
    fn left(&self, idx: usize) -> usize {
        let n = self.n;
        if self.dim == 1 {
            (idx + n - 1) % n
        } else {
            let (ix, iy) = (idx % n, idx / n);
            iy * n + (ix + n - 1) % n
        }
    }

    #[inline]
    fn right(&self, idx: usize) -> usize {
        let n = self.n;
        if self.dim == 1 {
            (idx + 1) % n
        } else {
            let (ix, iy) = (idx % n, idx / n);
            iy * n + (ix + 1) % n
        }
    }

    #[inline]
    fn down(&self, idx: usize) -> usize {
        let n = self.n;
        let (ix, iy) = (idx % n, idx / n);
        ((iy + n - 1) % n) * n + ix
    }

    #[inline]
    fn up(&self, idx: usize) -> usize {
        let n = self.n;
        let (ix, iy) = (idx % n, idx / n);
        ((iy + 1) % n) * n + ix
    }

    /// ∇·[2σ(φ)∇H] in flux form.
    pub fn div_sigma_grad(&self, hfield: &[f64], out: &mut [f64]) {
        let h2 = self.h * self.h;
        for idx in 0..hfield.len() {
            let l = self.left(idx);
            let r = self.right(idx);
            let mut acc = self.ae_x[idx] * (hfield[r] - hfield[idx])
                - self.ae_x[l] * (hfield[idx] - hfield[l]);
            if self.dim == 2 {
                let d = self.down(idx);
                let u = self.up(idx);
                acc += self.ae_y[idx] * (hfield[u] - hfield[idx])
                    - self.ae_y[d] * (hfield[idx] - hfield[d]);
            }
            out[idx] = acc / h2;
        }
    }

    /// Periodic Laplacian of P(φ).
    pub fn lap_p_of_phi(&self) -> Vec<f64> {
        let h2 = self.h * self.h;
        let p = &self.p_of_phi;
        (0..p.len())
            .map(|idx| {
                let mut acc = p[self.right(idx)] - 2.0 * p[idx] + p[self.left(idx)];
                if self.dim == 2 {
                    acc += p[self.up(idx)] - 2.0 * p[idx] + p[self.down(idx)];
                }
                acc / h2
            })
            .collect()
    }

    /// Residual of the nonlinear Poisson equation at H.
    pub fn residual(&self, hfield: &[f64], lap_p: &[f64], out: &mut [f64]) {
        let eps2 = self.eps * self.eps;
        self.div_sigma_grad(hfield, out);
        for (idx, &hval) in hfield.iter().enumerate() {
            let eh = hval.exp();
            out[idx] += self.dphi_dt[idx]
                - lap_p[idx]
                - (self.b_of_phi[idx] * eh - self.d_of_phi[idx] / eh) / eps2;
        }
    }

    /// Volume element h^dim.
    pub fn vol(&self) -> f64 {
        if self.dim == 1 {
            self.h
        } else {
            self.h * self.h
        }
    }

    /// ∫σ(φ)|∇H|² by the edge-consistent quadrature ½Σ a_e (ΔH/h)² h^d —
    /// exactly the Dirichlet form of `div_sigma_grad`.
    pub fn sigma_grad_energy(&self, hfield: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        let inv_h2 = 1.0 / (self.h * self.h);
        for idx in 0..hfield.len() {
            let r = self.right(idx);
            let dx = hfield[r] - hfield[idx];
            acc.add(self.ae_x[idx] * dx * dx * inv_h2);
            if self.dim == 2 {
                let u = self.up(idx);
                let dy = hfield[u] - hfield[idx];
                acc.add(self.ae_y[idx] * dy * dy * inv_h2);
            }
        }
        0.5 * acc.value() * self.vol()
    }

    /// The direct rate-density of this slice at the maximizer:
    /// (1/ε)∫σ|∇H|² + (1/ε³)∫[B f(H) + D f(−H)], f(H) = 1 − e^H + He^H.
    pub fn s_density(&self, hfield: &[f64]) -> f64 {
        let eps = self.eps;
        let mut acc = KahanSum::new();
        for (idx, &h) in hfield.iter().enumerate() {
            acc.add(self.b_of_phi[idx] * exp_rem(h) + self.d_of_phi[idx] * exp_rem(-h));
        }
        self.sigma_grad_energy(hfield) / eps + acc.value() * self.vol() / (eps * eps * eps)
    }

    /// The variational density J^H of this slice for an arbitrary test
    /// field.
    pub fn j_density(&self, hfield: &[f64], lap_p: &[f64]) -> f64 {
        let eps = self.eps;
        let mut lin = KahanSum::new();
        let mut exps = KahanSum::new();
        for idx in 0..hfield.len() {
            lin.add(hfield[idx] * (self.dphi_dt[idx] - lap_p[idx]));
            exps.add(
                self.b_of_phi[idx] * hfield[idx].exp_m1()
                    + self.d_of_phi[idx] * (-hfield[idx]).exp_m1(),
            );
        }
        (lin.value() * self.vol() - self.sigma_grad_energy(hfield)) / eps
            - exps.value() * self.vol() / (eps * eps * eps)
    }

    /// Gateaux derivative of J at H in the direction v:
    /// dJ[v] = −(1/ε) Σ v G(H) h^d.
    pub fn gateaux(&self, hfield: &[f64], lap_p: &[f64], v: &[f64]) -> f64 {
        let mut g = vec![0.0; hfield.len()];
        self.residual(hfield, lap_p, &mut g);
        let mut acc = KahanSum::new();
        for idx in 0..hfield.len() {
            acc.add(v[idx] * g[idx]);
        }
        -acc.value() * self.vol() / self.eps
    }

    /// Newton iteration for H_max,ε starting from `guess`; residual
    /// tolerance 1e-10 in sup norm, at most 25 iterations.
    pub fn solve_hmax(&self, guess: &[f64]) -> Result<MaximizerField> {
        let tol = 1e-10;
        let max_iter = 25;
        let eps2 = self.eps * self.eps;
        let total = self.phi.len();
        let lap_p = self.lap_p_of_phi();
        let mut hfield = guess.to_vec();
        let mut g = vec![0.0; total];
        let mut iterations = 0;
        let mut res;
        loop {
            self.residual(&hfield, &lap_p, &mut g);
            res = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if res <= tol {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NewtonDivergence {
                    iterations,
                    residual: res,
                });
            }
            // (−J)δ = G with J = div_sigma_grad − diag(c), c > 0
            let c: Vec<f64> = (0..total)
                .map(|idx| {
                    let eh = hfield[idx].exp();
                    (self.b_of_phi[idx] * eh + self.d_of_phi[idx] / eh) / eps2
                })
                .collect();
            let delta = if self.dim == 1 {
                self.solve_neg_jacobian_1d(&c, &g)
            } else {
                self.solve_neg_jacobian_cg(&c, &g)?
            };
            for idx in 0..total {
                hfield[idx] += delta[idx];
            }
            iterations += 1;
        }
        Ok(MaximizerField {
            h: hfield,
            iterations,
            final_residual: res,
            stiffness_warning: 1.0 / eps2 > 1e12,
        })
    }

    /// Direct cyclic-tridiagonal solve of (−J)δ = g (1-d).
    fn solve_neg_jacobian_1d(&self, c: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h2 = self.h * self.h;
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n - 1];
        for i in 0..n {
            let l = (i + n - 1) % n;
            diag[i] = (self.ae_x[i] + self.ae_x[l]) / h2 + c[i];
        }
        for (i, s) in sub.iter_mut().enumerate() {
            *s = -self.ae_x[i] / h2;
        }
        let corner = -self.ae_x[n - 1] / h2;
        solve_cyclic_spd(&sub, &diag, corner, g)
    }

    /// Jacobi-preconditioned conjugate gradients on (−J)δ = g (2-d).
    fn solve_neg_jacobian_cg(&self, c: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let total = g.len();
        let apply = |x: &[f64], out: &mut [f64]| {
            self.div_sigma_grad(x, out);
            for idx in 0..total {
                out[idx] = -out[idx] + c[idx] * x[idx];
            }
        };
        let diag: Vec<f64> = (0..total)
            .map(|idx| {
                let l = self.left(idx);
                let mut dd = (self.ae_x[idx] + self.ae_x[l]) / (self.h * self.h) + c[idx];
                if self.dim == 2 {
                    let d = self.down(idx);
                    dd += (self.ae_y[idx] + self.ae_y[d]) / (self.h * self.h);
                }
                dd
            })
            .collect();

        let dot = |a: &[f64], b: &[f64]| -> f64 {
            let mut acc = KahanSum::new();
            for (x, y) in a.iter().zip(b) {
                acc.add(x * y);
            }
            acc.value()
        };
        let gnorm = dot(g, g).sqrt();
        let tol = 1e-13 * gnorm + 1e-300;
        let mut x = vec![0.0; total];
        let mut r = g.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; total];
        for _ in 0..20 * total {
            if dot(&r, &r).sqrt() <= tol {
                return Ok(x);
            }
            apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for idx in 0..total {
                x[idx] += alpha * p[idx];
                r[idx] -= alpha * ap[idx];
            }
            for idx in 0..total {
                z[idx] = r[idx] / diag[idx];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for idx in 0..total {
                p[idx] = z[idx] + beta * p[idx];
            }
        }
        Err(Error::NewtonDivergence {
            iterations: 20 * total,
            residual: dot(&r, &r).sqrt(),
        })
    }
}

/// 1 − e^H + He^H = Σ_{k≥2}(k−1)H^k/k!, by the series for small H (the
/// direct expression cancels catastrophically there) and by
/// (H−1)expm1(H) + H beyond.
pub fn exp_rem(h: f64) -> f64 {
    if h.abs() < 0.25 {
        let mut acc = 0.0;
        let mut hk = h * h; // H^k
        let mut fact = 2.0; // k!
        let mut k = 2.0;
        loop {
            let term = (k - 1.0) * hk / fact;
            acc += term;
            if term.abs() < 1e-18 * acc.abs().max(1e-30) || k > 24.0 {
                break;
            }
            k += 1.0;
            hk *= h;
            fact *= k;
        }
        acc
    } else {
        (h - 1.0) * h.exp_m1() + h
    }
}

/// SPD cyclic tridiagonal solve via a rank-one (Sherman–Morrison) update of
/// an SPD tridiagonal factorization. `corner` is the coupling between the
/// first and last unknowns.
pub fn solve_cyclic_spd(sub: &[f64], diag: &[f64], corner: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(sub.len(), n - 1);
    assert_eq!(rhs.len(), n);
    if corner == 0.0 {
        return solve_tridiag_spd(sub, diag, rhs);
    }
    // M = T' + u vᵀ with γ = −|corner|: the diagonal boosts keep T' SPD
    let gamma = -corner.abs();
    let mut diag2 = diag.to_vec();
    diag2[0] -= gamma;
    diag2[n - 1] -= corner * corner / gamma;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner;
    let y = solve_tridiag_spd(sub, &diag2, rhs);
    let z = solve_tridiag_spd(sub, &diag2, &u);
    // v = e₀ + (corner/γ) e_{n−1}
    let vy = y[0] + corner / gamma * y[n - 1];
    let vz = z[0] + corner / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    (0..n).map(|i| y[i] - factor * z[i]).collect()
}

/// LDLᵀ solve of an SPD tridiagonal system.
pub fn solve_tridiag_spd(sub: &[f64], diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut l = sub.to_vec();
    for k in 0..n - 1 {
        l[k] /= d[k];
        d[k + 1] -= l[k] * l[k] * d[k];
    }
    let mut y = rhs.to_vec();
    for k in 1..n {
        let lk = l[k - 1];
        y[k] -= lk * y[k - 1];
    }
    for k in 0..n {
        y[k] /= d[k];
    }
    for k in (0..n - 1).rev() {
        let lk = l[k];
        y[k] -= lk * y[k + 1];
    }
    y
}

// ---------------------------------------------------------------------------
// time integration and the three S evaluations
// ---------------------------------------------------------------------------

/// Gauss–Legendre nodes on [0, T].
#[derive(Debug, Clone)]
pub struct TimeQuad {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TimeQuad {
    pub fn gauss(t_end: f64, order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let half = 0.5 * t_end;
        TimeQuad {
            nodes: gl.nodes.iter().map(|x| half * (x + 1.0)).collect(),
            weights: gl.weights.iter().map(|w| w * half).collect(),
        }
    }
}

/// Per-run diagnostics of a direct evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectDiagnostics {
    pub max_newton_iterations: usize,
    pub max_residual: f64,
    pub j_vs_s_rel_gap: f64,
}

/// S_ε(φ_ε) by solving the maximizer on every time node.
/// Also returns J(H_max) for the variational cross-check.
pub fn evaluate_s_direct(
    ansatz: &AnsatzField,
    quad: &TimeQuad,
    grid_n: usize,
) -> Result<(f64, DirectDiagnostics)> {
    let per_node: Result<Vec<(f64, f64, usize, f64)>> = quad
        .nodes
        .par_iter()
        .map(|&t| {
            let slice = ansatz.build_slice(t, grid_n)?;
            let hmax = slice.solve_hmax(&slice.h_guess)?;
            let lap_p = slice.lap_p_of_phi();
            let s = slice.s_density(&hmax.h);
            let j = slice.j_density(&hmax.h, &lap_p);
            Ok((s, j, hmax.iterations, hmax.final_residual))
        })
        .collect();
    let per_node = per_node?;

    let mut s_acc = KahanSum::new();
    let mut j_acc = KahanSum::new();
    let mut max_iter = 0;
    let mut max_res = 0.0_f64;
    for ((s, j, iters, res), &w) in per_node.iter().zip(&quad.weights) {
        s_acc.add(w * s);
        j_acc.add(w * j);
        max_iter = max_iter.max(*iters);
        max_res = max_res.max(*res);
    }
    let s = s_acc.value();
    let j = j_acc.value();
    let gap = ((j - s) / s.abs().max(1e-300)).abs();
    Ok((
        s,
        DirectDiagnostics {
            max_newton_iterations: max_iter,
            max_residual: max_res,
            j_vs_s_rel_gap: gap,
        },
    ))
}

/// J^H(φ_ε) for an arbitrary analytic test field H(t, x).
pub fn evaluate_j<H>(ansatz: &AnsatzField, quad: &TimeQuad, grid_n: usize, h_fn: H) -> Result<f64>
where
    H: Fn(f64, &[f64]) -> f64 + Sync,
{
    let per_node: Result<Vec<f64>> = quad
        .nodes
        .par_iter()
        .map(|&t| {
            let slice = ansatz.build_slice(t, grid_n)?;
            let lap_p = slice.lap_p_of_phi();
            let n = slice.n;
            let h = slice.h;
            let total = slice.phi.len();
            let hfield: Vec<f64> = (0..total)
                .map(|idx| {
                    let x = if slice.dim == 1 {
                        vec![idx as f64 * h]
                    } else {
                        vec![(idx % n) as f64 * h, (idx / n) as f64 * h]
                    };
                    h_fn(t, &x)
                })
                .collect();
            Ok(slice.j_density(&hfield, &lap_p))
        })
        .collect();
    let mut acc = KahanSum::new();
    for (v, &w) in per_node?.iter().zip(&quad.weights) {
        acc.add(w * v);
    }
    Ok(acc.value())
}

/// The ε-free asymptotic value ∫_0^T ∫_{Γ_t} ½∫F_Q(−L_ū)⁻¹F_Q dξ dH^{d−1} dt
/// with (a, b) = (∂_t d, Δd) on Γ_t; equals S_ac for Q = Q̄_min.
pub fn evaluate_s_asymptotic(
    ws: &CorrectorWorkspace,
    flow: &FlowField,
    q_choice: CorrectorChoice,
    quad: &TimeQuad,
) -> Result<f64> {
    let (ca, cb) = q_choice.scalings();
    let per_node: Result<Vec<f64>> = quad
        .nodes
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            for (a, b, mass) in flow.interface_data(t) {
                let cost = ws.cost_scaled(a, b, ca, cb)?;
                acc += mass * cost.half;
            }
            Ok(acc)
        })
        .collect();
    let mut acc = KahanSum::new();
    for (v, &w) in per_node?.iter().zip(&quad.weights) {
        acc.add(w * v);
    }
    Ok(acc.value())
}

// ---------------------------------------------------------------------------
// convergence studies
// ---------------------------------------------------------------------------

/// Evaluation mode of a rate study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceMode {
    #[serde(rename = "direct-1d")]
    Direct1d,
    #[serde(rename = "asymptotic-2d")]
    Asymptotic2d,
    #[serde(rename = "direct-2d-slow")]
    Direct2dSlow,
}

/// The ε-ladder record of one study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: ConvergenceMode,
    pub eps: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Exact limiting energy of the flow.
    pub s_ac: f64,
    /// Asymptotic value of this ansatz (equals s_ac only for Q̄_min).
    pub s_limit: f64,
    pub rel_err: Vec<f64>,
    pub order: f64,
    pub monotone: bool,
    pub newton_iters: Vec<usize>,
    pub grid_n: Vec<usize>,
    pub wall_ms: Vec<f64>,
}

/// Smallest power of two giving at least `cells` lattice cells per ε-layer.
pub fn grid_for_eps(eps: f64, cells: f64, min_n: usize) -> usize {
    let needed = (cells / eps).ceil() as usize;
    let mut n = min_n.max(8);
    while n < needed {
        n *= 2;
    }
    n
}

/// Runs an ε-ladder and fits the convergence order of |S_ε − S_limit|.
pub fn convergence_study(
    ws: &CorrectorWorkspace,
    flow: &FlowField,
    q_choice: CorrectorChoice,
    r_eps: Option<PerturbationSpec>,
    eps_ladder: &[f64],
    mode: ConvergenceMode,
) -> Result<RateReport> {
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "eps ladder must be non-empty and strictly decreasing".into(),
        ));
    }
    match (mode, flow.dim()) {
        (ConvergenceMode::Direct1d, 1) | (ConvergenceMode::Asymptotic2d, _) => {}
        (ConvergenceMode::Direct2dSlow, 2) => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "mode {mode:?} incompatible with a {}-d flow",
                flow.dim()
            )))
        }
    }

    let quad = TimeQuad::gauss(flow.horizon(), 16);
    let s_ac_value = s_ac(flow, &ws.coeffs);
    let s_limit = evaluate_s_asymptotic(ws, flow, q_choice, &quad)?;

    let mut s_values = Vec::new();
    let mut newton_iters = Vec::new();
    let mut grid_ns = Vec::new();
    let mut wall_ms = Vec::new();
    for &eps in eps_ladder {
        let t0 = std::time::Instant::now();
        let (value, iters, n) = match mode {
            ConvergenceMode::Asymptotic2d => (s_limit, 0, 0),
            ConvergenceMode::Direct1d => {
                let n = grid_for_eps(eps, 16.0, 512);
                if eps * (n as f64) < 8.0 {
                    return Err(Error::Resolution {
                        cells: eps * n as f64,
                        needed: 8.0,
                    });
                }
                let ansatz = AnsatzField::new(ws, flow, q_choice, r_eps.clone(), eps);
                let (s, diag) = evaluate_s_direct(&ansatz, &quad, n)?;
                (s, diag.max_newton_iterations, n)
            }
            ConvergenceMode::Direct2dSlow => {
                let n = grid_for_eps(eps, 8.0, 256).min(512);
                if eps * (n as f64) < 8.0 {
                    return Err(Error::Resolution {
                        cells: eps * n as f64,
                        needed: 8.0,
                    });
                }
                let ansatz = AnsatzField::new(ws, flow, q_choice, r_eps.clone(), eps);
                let (s, diag) = evaluate_s_direct(&ansatz, &quad, n)?;
                (s, diag.max_newton_iterations, n)
            }
        };
        s_values.push(value);
        newton_iters.push(iters);
        grid_ns.push(n);
        wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }

    let denom = s_limit.abs().max(1e-300);
    let rel_err: Vec<f64> = s_values
        .iter()
        .map(|s| ((s - s_limit) / denom).abs())
        .collect();
    let monotone = rel_err.windows(2).all(|w| w[1] <= w[0] + 1e-14);
    let order = order_fit(eps_ladder, &rel_err);
    Ok(RateReport {
        mode,
        eps: eps_ladder.to_vec(),
        s_values,
        s_ac: s_ac_value,
        s_limit,
        rel_err,
        order,
        monotone,
        newton_iters,
        grid_n: grid_ns,
        wall_ms,
    })
}

/// ‖H_max − εĤ₁‖∞ across an ε-ladder at the mid-horizon slice; the fitted
/// order certifies the ε²K̂_ε structure of the maximizer decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub eps: Vec<f64>,
    pub sup_diff: Vec<f64>,
    pub order: f64,
    pub c_bound: f64,
}

pub fn decomposition_study(
    ws: &CorrectorWorkspace,
    flow: &FlowField,
    q_choice: CorrectorChoice,
    eps_ladder: &[f64],
) -> Result<DecompositionReport> {
    let t = 0.5 * flow.horizon();
    let mut sup_diff = Vec::new();
    let mut c_bound = 0.0_f64;
    for &eps in eps_ladder {
        let n = grid_for_eps(eps, 16.0, 512);
        let ansatz = AnsatzField::new(ws, flow, q_choice, None, eps);
        let slice = ansatz.build_slice(t, n)?;
        let hmax = slice.solve_hmax(&slice.h_guess)?;
        let mut sup = 0.0_f64;
        for idx in 0..hmax.h.len() {
            sup = sup.max((hmax.h[idx] - slice.h_guess[idx]).abs());
        }
        sup_diff.push(sup);
        c_bound = c_bound.max(sup / (eps * eps));
    }
    let order = order_fit(eps_ladder, &sup_diff);
    Ok(DecompositionReport {
        eps: eps_ladder.to_vec(),
        sup_diff,
        order,
        c_bound,
    })
}

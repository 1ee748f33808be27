//! Symmetric flux-form discretization of
//!
//! ```text
//! L_ū ψ = (2σ(ū) ψ')' − (B(ū)+D(ū)) ψ
//! ```
//!
//! on the ξ-grid with homogeneous Dirichlet truncation at ±L, and a cached
//! LDLᵀ factorization of the (SPD, tridiagonal) interior matrix of −L_ū.
//! Truncation error is exponentially small for decaying data, which the
//! boundary-insensitivity tests pin down.

use crate::error::{Error, Result};
use crate::model::ModelFunctions;
use crate::profile::{WaveProfile, XiGrid};
use crate::quad::{line_fit, KahanSum};

/// The discretized operator. Immutable after assembly; `solve` only reads
/// the cached factorization, so concurrent solves are safe.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub grid: XiGrid,
    /// a_{i+1/2} = 2σ(ū) at cell midpoints (length n−1).
    pub flux_coeff: Vec<f64>,
    /// m_i = (B+D)(ū_i) at nodes (length n).
    pub mass_coeff: Vec<f64>,
    fact_diag: Vec<f64>,
    fact_sub: Vec<f64>,
}

/// Result of the decay transfer estimate for one right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct DecayEstimate {
    pub gamma_out: f64,
    pub c_out: f64,
    /// min(γ₀/2, γ_in) − 0.02 with γ₀ = √(min(B+D)/max(2σ)).
    pub bound: f64,
    pub satisfied: bool,
}

/// Builds the operator from a profile; the flux coefficient is evaluated at
/// the true midpoint samples of ū carried by the profile.
pub fn assemble(profile: &WaveProfile, model: &ModelFunctions) -> Result<LineOperator> {
    let n = profile.grid.n;
    let mass_coeff: Vec<f64> = profile.u.iter().map(|&u| model.bd_sum(u)).collect();
    for (i, &m) in mass_coeff.iter().enumerate() {
        if m <= 0.0 {
            return Err(Error::Singularity { index: i, value: m });
        }
    }
    let flux_coeff: Vec<f64> = profile
        .u_mid
        .iter()
        .map(|&u| 2.0 * model.sigma_val(u))
        .collect();

    let h = profile.grid.h();
    let h2 = h * h;
    // interior tridiagonal of −L: rows i = 1..n-2
    let m_int = n - 2;
    let mut fact_diag = vec![0.0; m_int];
    let mut fact_sub = vec![0.0; m_int.saturating_sub(1)];
    for (k, d) in fact_diag.iter_mut().enumerate() {
        let i = k + 1;
        *d = (flux_coeff[i - 1] + flux_coeff[i]) / h2 + mass_coeff[i];
    }
    for (k, s) in fact_sub.iter_mut().enumerate() {
        *s = -flux_coeff[k + 1] / h2;
    }
    // in-place LDLᵀ
    for k in 0..m_int {
        if fact_diag[k] <= 0.0 {
            return Err(Error::Factorization {
                row: k,
                pivot: fact_diag[k],
            });
        }
        if k + 1 < m_int {
            let l = fact_sub[k] / fact_diag[k];
            fact_diag[k + 1] -= l * fact_sub[k];
            fact_sub[k] = l;
        }
    }

    Ok(LineOperator {
        grid: profile.grid.clone(),
        flux_coeff,
        mass_coeff,
        fact_diag,
        fact_sub,
    })
}

impl LineOperator {
    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// Strict lower bound of the discrete coercivity constant: min(B+D).
    pub fn c0(&self) -> f64 {
        self.mass_coeff
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Constant-coefficient tail rate √(min(B+D)/max(2σ)) — the operational
    /// stand-in for the decay constant of the inverse.
    pub fn gamma0(&self) -> f64 {
        let min_m = self.c0();
        let max_a = self.flux_coeff.iter().cloned().fold(0.0, f64::max);
        (min_m / max_a).sqrt()
    }

    /// L_ū ψ with homogeneous Dirichlet ghosts beyond ±L.
    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n;
        if psi.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: psi.len(),
            });
        }
        let h2 = self.h() * self.h();
        let mut out = vec![0.0; n];
        for i in 0..n {
            // ghost edges reuse the nearest interior flux coefficient
            let a_left = if i == 0 {
                self.flux_coeff[0]
            } else {
                self.flux_coeff[i - 1]
            };
            let a_right = if i == n - 1 {
                self.flux_coeff[n - 2]
            } else {
                self.flux_coeff[i]
            };
            let psi_left = if i == 0 { 0.0 } else { psi[i - 1] };
            let psi_right = if i == n - 1 { 0.0 } else { psi[i + 1] };
            out[i] = (a_right * (psi_right - psi[i]) - a_left * (psi[i] - psi_left)) / h2
                - self.mass_coeff[i] * psi[i];
        }
        Ok(out)
    }

    /// Solves L_ū ψ = w (through the SPD factorization of −L); the returned
    /// vector carries the Dirichlet zeros at ±L.
    pub fn solve(&self, w: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n;
        if w.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: w.len(),
            });
        }
        let m = n - 2;
        // (−L)ψ = −w on the interior
        let mut y: Vec<f64> = (0..m).map(|k| -w[k + 1]).collect();
        // forward: solve L_unit y' = y
        for k in 1..m {
            let l = self.fact_sub[k - 1];
            y[k] -= l * y[k - 1];
        }
        // diagonal
        for (k, yk) in y.iter_mut().enumerate() {
            *yk /= self.fact_diag[k];
        }
        // backward
        for k in (0..m - 1).rev() {
            let l = self.fact_sub[k];
            y[k] -= l * y[k + 1];
        }
        let mut psi = vec![0.0; n];
        psi[1..=m].copy_from_slice(&y);

        // discrete coercivity bound ‖ψ‖ ≤ c₀⁻¹‖w‖ holds by construction
        debug_assert!({
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            norm(&psi) <= norm(w) / self.c0() * (1.0 + 1e-10) + 1e-300
        });
        Ok(psi)
    }

    /// The discrete quadratic form ⟨ψ, (−L_ū)ψ⟩ h = Σ a (Δψ/h)² h + Σ m ψ² h
    /// for vectors in the Dirichlet class.
    pub fn quadratic_form(&self, psi: &[f64]) -> f64 {
        let h = self.h();
        let mut acc = KahanSum::new();
        for i in 0..psi.len() - 1 {
            let d = (psi[i + 1] - psi[i]) / h;
            acc.add(self.flux_coeff[i] * d * d * h);
        }
        // Dirichlet ghost edges
        let d0 = psi[0] / h;
        let dn = psi[psi.len() - 1] / h;
        acc.add(self.flux_coeff[0] * d0 * d0 * h);
        acc.add(self.flux_coeff[self.flux_coeff.len() - 1] * dn * dn * h);
        for (i, &p) in psi.iter().enumerate() {
            acc.add(self.mass_coeff[i] * p * p * h);
        }
        acc.value()
    }

    /// (row, col, value) triplets of the symmetric matrix of L_ū under the
    /// Dirichlet ghost convention — debugging dump, row-major order.
    pub fn matrix_triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.grid.n;
        let h2 = self.h() * self.h();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            let a_left = if i == 0 {
                self.flux_coeff[0]
            } else {
                self.flux_coeff[i - 1]
            };
            let a_right = if i == n - 1 {
                self.flux_coeff[n - 2]
            } else {
                self.flux_coeff[i]
            };
            if i > 0 {
                out.push((i, i - 1, a_left / h2));
            }
            out.push((i, i, -(a_left + a_right) / h2 - self.mass_coeff[i]));
            if i + 1 < n {
                out.push((i, i + 1, a_right / h2));
            }
        }
        out
    }

    /// Solves L ψ = w, then fits the exponential envelope of ψ, ψ', ψ''
    /// over the tail windows and checks the transfer bound
    /// γ_out ≥ min(γ₀/2, γ_in) − 0.02.
    pub fn decay_estimate(&self, w: &[f64], gamma_in: f64) -> Result<DecayEstimate> {
        let psi = self.solve(w)?;
        let bound = (0.5 * self.gamma0()).min(gamma_in) - 0.02;
        let sup = psi.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
        if sup == 0.0 {
            return Ok(DecayEstimate {
                gamma_out: f64::INFINITY,
                c_out: 0.0,
                bound,
                satisfied: true,
            });
        }
        let h = self.h();
        let n = self.grid.n;
        let dpsi: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    (psi[i + 1] - psi[i - 1]) / (2.0 * h)
                }
            })
            .collect();
        let ddpsi: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) / (h * h)
                }
            })
            .collect();
        let mut gamma_out = f64::INFINITY;
        let mut c_out = 0.0_f64;
        for field in [&psi, &dpsi, &ddpsi] {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (i, &xi) in self.grid.points.iter().enumerate() {
                let a = xi.abs();
                if a >= 0.45 * self.grid.l && a <= 0.85 * self.grid.l {
                    let v = field[i].abs();
                    if v > 1e-280 {
                        xs.push(a);
                        ys.push(v.ln());
                    }
                }
            }
            if xs.len() < 4 {
                continue;
            }
            let (slope, intercept) = line_fit(&xs, &ys);
            gamma_out = gamma_out.min(-slope);
            c_out = c_out.max(intercept.exp());
        }
        Ok(DecayEstimate {
            gamma_out,
            c_out,
            bound,
            satisfied: gamma_out >= bound,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::reference_model;
    use crate::profile::solve_profile;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ModelFunctions, WaveProfile, LineOperator) {
        let m = reference_model();
        let grid = XiGrid::default_grid();
        let p = solve_profile(&m, &grid).unwrap();
        let op = assemble(&p, &m).unwrap();
        (m, p, op)
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn constants_see_only_the_mass_term() {
        // reference model: σ = 1/2, B+D = 1, so −L·1 = 1 at interior nodes
        let (_, _, op) = setup();
        let ones = vec![1.0; op.grid.n];
        let out = op.apply(&ones).unwrap();
        for i in 2..op.grid.n - 2 {
            assert!((out[i] + 1.0).abs() < 1e-12, "row {i}: {}", out[i]);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let (_, _, op) = setup();
        let z = vec![0.0; op.grid.n];
        assert!(op.apply(&z).unwrap().iter().all(|&x| x == 0.0));
        assert!(op.solve(&z).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn apply_matches_analytic_image_of_dv() {
        // L v̄' = 2σ v̄''' + 2σ'ū'v̄'' − (B+D)v̄' = v̄''' − v̄' for the
        // reference model
        let (_, p, op) = setup();
        let out = op.apply(&p.dv).unwrap();
        let mut sup = 0.0_f64;
        for i in 1..p.grid.n - 1 {
            let analytic = p.dddv[i] - p.dv[i];
            sup = sup.max((out[i] - analytic).abs());
        }
        assert!(sup < 1e-5, "O(h²) stencil error too large: {sup:.3e}");
    }

    /// Random smooth Dirichlet test function: a handful of sine modes with
    /// seeded random amplitudes.
    pub(crate) fn random_smooth(grid: &XiGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut coeffs = Vec::new();
        for _ in 0..12 {
            coeffs.push((
                rng.random_range(1..=48) as f64,
                rng.random_range(-1.0..1.0_f64),
            ));
        }
        grid.points
            .iter()
            .map(|&x| {
                coeffs
                    .iter()
                    .map(|&(k, a)| {
                        a * (k * std::f64::consts::PI * (x + grid.l) / (2.0 * grid.l)).sin()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn operator_is_self_adjoint_and_coercive() {
        let (_, _, op) = setup();
        let h = op.h();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dot = |a: &[f64], b: &[f64]| {
            let mut acc = KahanSum::new();
            for (x, y) in a.iter().zip(b) {
                acc.add(x * y * h);
            }
            acc.value()
        };
        for _ in 0..100 {
            let psi = random_smooth(&op.grid, &mut rng);
            let phi = random_smooth(&op.grid, &mut rng);
            let lp = op.apply(&psi).unwrap();
            let lq = op.apply(&phi).unwrap();
            let asym = (dot(&lp, &phi) - dot(&psi, &lq)).abs();
            let bound = 1e-12 * dot(&psi, &psi).sqrt() * dot(&phi, &phi).sqrt();
            assert!(asym <= bound, "asymmetry {asym:.3e} > {bound:.3e}");
            let coercive = -dot(&lp, &psi);
            assert!(coercive >= (op.c0() - 1e-10) * dot(&psi, &psi));
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn solve_roundtrip_recovers_rhs() {
        let (_, p, op) = setup();
        let w = op.apply(&p.dv).unwrap();
        let psi = op.solve(&w).unwrap();
        let mut sup = 0.0_f64;
        // away from the Dirichlet boundary the roundtrip is exact
        for i in 0..p.grid.n {
            if p.grid.points[i].abs() <= 0.75 * p.grid.l {
                sup = sup.max((psi[i] - p.dv[i]).abs());
            }
        }
        let scale = p.dv.iter().cloned().fold(0.0_f64, f64::max);
        assert!(sup <= 1e-8 * scale.max(1.0), "roundtrip error {sup:.3e}");

        let back = op.apply(&psi).unwrap();
        let mut sup2 = 0.0_f64;
        for i in 1..p.grid.n - 1 {
            sup2 = sup2.max((back[i] - w[i]).abs());
        }
        let wsup = w.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(sup2 <= 1e-8 * wsup, "L(solve(w)) − w = {sup2:.3e}");
    }

    #[test]
    fn refinement_converges_at_second_order() {
        let m = reference_model();
        let w_fn = |xi: f64| (xi / 4.0).cosh().powi(-2) / 16.0;
        let mut solutions = Vec::new();
        let sizes = [513usize, 1025, 2049, 4097];
        for &n in &sizes {
            let grid = XiGrid::new(40.0, n).unwrap();
            let p = solve_profile(&m, &grid).unwrap();
            let op = assemble(&p, &m).unwrap();
            let w: Vec<f64> = grid.points.iter().map(|&x| w_fn(x)).collect();
            solutions.push((grid, op.solve(&w).unwrap()));
        }
        let (fine_grid, fine) = solutions.last().unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for (grid, psi) in &solutions[..solutions.len() - 1] {
            let stride = (fine_grid.n - 1) / (grid.n - 1);
            let mut sup = 0.0_f64;
            for i in 0..grid.n {
                sup = sup.max((psi[i] - fine[i * stride]).abs());
            }
            errs.push(sup);
            hs.push(grid.h());
        }
        let slope = crate::quad::order_fit(&hs, &errs);
        assert!(slope >= 1.9, "refinement order {slope}");
    }

    #[test]
    fn truncation_is_exponentially_insensitive() {
        let m = reference_model();
        let h_target = 80.0 / 8192.0;
        let g40 = XiGrid::new(40.0, 8193).unwrap();
        let n50 = (2.0 * 50.0 / h_target) as usize + 1;
        let g50 = XiGrid::new(50.0, n50).unwrap();
        assert!((g40.h() - g50.h()).abs() < 1e-14);
        let w_fn = |xi: f64| (xi / 4.0).cosh().powi(-2) / 16.0;
        let p40 = solve_profile(&m, &g40).unwrap();
        let p50 = solve_profile(&m, &g50).unwrap();
        let op40 = assemble(&p40, &m).unwrap();
        let op50 = assemble(&p50, &m).unwrap();
        let psi40 = op40
            .solve(&g40.points.iter().map(|&x| w_fn(x)).collect::<Vec<_>>())
            .unwrap();
        let psi50 = op50
            .solve(&g50.points.iter().map(|&x| w_fn(x)).collect::<Vec<_>>())
            .unwrap();
        let offset = (g50.n - g40.n) / 2;
        let mut sup = 0.0_f64;
        for i in 0..g40.n {
            if g40.points[i].abs() <= 20.0 {
                sup = sup.max((psi40[i] - psi50[i + offset]).abs());
            }
        }
        assert!(sup <= 1e-8, "truncation sensitivity {sup:.3e}");
    }

    #[test]
    fn decay_estimate_for_dv_meets_the_bound() {
        let (_, p, op) = setup();
        // γ₀ = √(1/1) = 1 for the reference model; forcing rate 0.5
        assert!((op.gamma0() - 1.0).abs() < 1e-9);
        let est = op.decay_estimate(&p.dv, 0.5).unwrap();
        assert!(est.satisfied, "gamma_out = {}", est.gamma_out);
        assert!(est.gamma_out >= 0.25 - 0.02);
    }

    #[test]
    fn compact_support_forcing_decays_at_the_free_rate() {
        let (_, _, op) = setup();
        let w: Vec<f64> = op
            .grid
            .points
            .iter()
            .map(|&x| {
                if x.abs() < 1.0 {
                    (1.0 - x * x).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        let est = op.decay_estimate(&w, f64::INFINITY).unwrap();
        // Green-function tail rate of −ψ'' + ψ is 1
        assert!(
            (est.gamma_out - 1.0).abs() < 0.05,
            "gamma_out = {}",
            est.gamma_out
        );
    }

    #[test]
    fn zero_rhs_has_zero_envelope() {
        let (_, _, op) = setup();
        let est = op.decay_estimate(&vec![0.0; op.grid.n], 1.0).unwrap();
        assert_eq!(est.c_out, 0.0);
    }

    #[test]
    fn matrix_triplets_reproduce_apply() {
        let (_, _, op) = setup();
        let n = op.grid.n;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = op.apply(&psi).unwrap();
        let mut via_matrix = vec![0.0; n];
        for (r, c, v) in op.matrix_triplets() {
            via_matrix[r] += v * psi[c];
        }
        for i in 0..n {
            assert!(
                (via_matrix[i] - direct[i]).abs() <= 1e-9 * (1.0 + direct[i].abs()),
                "row {i}"
            );
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (_, _, op) = setup();
        match op.apply(&[1.0, 2.0]) {
            Err(Error::Shape { expected, got }) => {
                assert_eq!(expected, op.grid.n);
                assert_eq!(got, 2);
            }
            other => panic!("expected ShapeError, got {other:?}"),
        }
    }
}

//! Model functions (P, B, D, σ) on [0, 1], the derived potential W with
//! W' = D − B, the tilted potential W̃(ρ) = ∫_{ρ₋}^ρ W'P' dρ̃, and the
//! structural assumptions:
//!
//! * (A1) P(0) = 0 and P' > 0 on [0, 1];
//! * (A2) B > 0 and D > 0 on [0, 1] (strictly, as the maximum-principle
//!   argument requires, which is stronger than B + D > 0);
//! * (A3) W' has exactly three roots ρ₋ < ρ* < ρ₊ in (0, 1) with
//!   W''(ρ±) > 0 and a genuine double-well shape;
//! * (A4) the P-balance ∫_{ρ₋}^{ρ₊} W'P' dρ = 0, equivalently W̃(ρ₊) = 0.
//!
//! The double-well shape test is run on the tilted potential W̃, whose wells
//! are equal by (A4) for every admissible P; the raw depth difference
//! W(ρ₊) − W(ρ₋) is reported but is only zero when P is linear.
//!
//! W is normalized by W(ρ₋) = 0. All derivative evaluation is analytic
//! (Horner with derivative accumulation, quotient rule), never finite
//! differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Number of points for dense positivity / domination sampling.
const DENSE_SAMPLES: usize = 2001;
/// Root bracketing grid size for W' (refined by bisection afterwards).
const ROOT_GRID: usize = 10_000;
/// Bisection tolerance for critical points of W.
const ROOT_TOL: f64 = 1e-12;
/// Bisection tolerance for the numerical inverse of P.
const P_INV_TOL: f64 = 1e-13;

// ---------------------------------------------------------------------------
// polynomials
// ---------------------------------------------------------------------------

/// Dense polynomial Σ c_k ρ^k with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and the first four derivatives at x.
    pub fn derivs4(&self, x: f64) -> [f64; 5] {
        let mut d = [0.0_f64; 5];
        for &c in self.coeffs.iter().rev() {
            d[4] = d[4] * x + d[3];
            d[3] = d[3] * x + d[2];
            d[2] = d[2] * x + d[1];
            d[1] = d[1] * x + d[0];
            d[0] = d[0] * x + c;
        }
        d[2] *= 2.0;
        d[3] *= 6.0;
        d[4] *= 24.0;
        d
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::constant(0.0);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative with value `at_value` at `at`.
    pub fn antiderivative(&self, at: f64, at_value: f64) -> Polynomial {
        let mut coeffs = vec![0.0];
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c / (k as f64 + 1.0)),
        );
        let mut p = Polynomial::new(coeffs);
        let shift = at_value - p.eval(at);
        p.coeffs[0] += shift;
        p
    }

    /// Coefficients of the shifted polynomial q(t) = p(a + t), by repeated
    /// synthetic division (each pass peels off one Taylor coefficient).
    pub fn taylor_at(&self, a: f64) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut work = self.coeffs.to_vec();
        let mut out = vec![0.0; n];
        for item in out.iter_mut().take(n) {
            let mut rem = 0.0;
            for j in (0..work.len()).rev() {
                rem = rem * a + work[j];
                work[j] = rem;
            }
            *item = work[0];
            work.remove(0);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// scalar function specs
// ---------------------------------------------------------------------------

/// An analytic scalar function на [0, 1], serializable as a tagged JSON
/// object. Derivatives up to third order are exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ScalarFunctionSpec {
    /// Σ c_k ρ^k.
    #[serde(rename = "polynomial-coefficients")]
    Polynomial { coefficients: Vec<f64> },
    /// num(ρ) / den(ρ) for two polynomials.
    #[serde(rename = "rational-of-polynomials")]
    Rational {
        coefficients: Vec<f64>,
        denominator: Vec<f64>,
    },
    /// (S_sum ± W̃'/P')/2 — the derived birth/death rates of the
    /// quasilinear construction; `sign` is −1 for B and +1 for D.
    #[serde(rename = "composed-from-wtilde")]
    ComposedFromWtilde {
        sign: f64,
        p: Vec<f64>,
        wtilde: Vec<f64>,
        s_sum: Box<ScalarFunctionSpec>,
    },
}

impl ScalarFunctionSpec {
    pub fn poly(coeffs: &[f64]) -> Self {
        ScalarFunctionSpec::Polynomial {
            coefficients: coeffs.to_vec(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::poly(&[c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    /// Value and derivatives of order 1..3.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        match self {
            ScalarFunctionSpec::Polynomial { coefficients } => {
                let d = Polynomial::new(coefficients.clone()).derivs4(x);
                [d[0], d[1], d[2], d[3]]
            }
            ScalarFunctionSpec::Rational {
                coefficients,
                denominator,
            } => {
                let n = Polynomial::new(coefficients.clone()).derivs4(x);
                let d = Polynomial::new(denominator.clone()).derivs4(x);
                quotient_derivs([n[0], n[1], n[2], n[3]], [d[0], d[1], d[2], d[3]])
            }
            ScalarFunctionSpec::ComposedFromWtilde {
                sign,
                p,
                wtilde,
                s_sum,
            } => {
                let wt = Polynomial::new(wtilde.clone()).derivs4(x);
                let pp = Polynomial::new(p.clone()).derivs4(x);
                // r = W̃'/P': numerator derivs are W̃', W̃'', W̃''', W̃⁗.
                let r = quotient_derivs([wt[1], wt[2], wt[3], wt[4]], [pp[1], pp[2], pp[3], pp[4]]);
                let s = s_sum.derivs(x);
                let mut out = [0.0; 4];
                for k in 0..4 {
                    out[k] = 0.5 * (s[k] + sign * r[k]);
                }
                out
            }
        }
    }

    /// True if the function is representable as a dense polynomial; returns it.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        match self {
            ScalarFunctionSpec::Polynomial { coefficients } => {
                Some(Polynomial::new(coefficients.clone()))
            }
            _ => None,
        }
    }

    /// Verifies the function spec is finite on [0,1] with three derivatives.
    pub fn check_evaluable(&self) -> Result<()> {
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let d = self.derivs(x);
            if !d.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "spec not finite at rho = {x}: {d:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Derivatives of n/d up to order 3 from derivatives of n and d
/// (Leibniz applied to n = f·d).
fn quotient_derivs(n: [f64; 4], d: [f64; 4]) -> [f64; 4] {
    let f0 = n[0] / d[0];
    let f1 = (n[1] - f0 * d[1]) / d[0];
    let f2 = (n[2] - 2.0 * f1 * d[1] - f0 * d[2]) / d[0];
    let f3 = (n[3] - 3.0 * f2 * d[1] - 3.0 * f1 * d[2] - f0 * d[3]) / d[0];
    [f0, f1, f2, f3]
}

// ---------------------------------------------------------------------------
// tilted potential
// ---------------------------------------------------------------------------

/// Taylor data of W̃ at one well: W̃(ρ_w + t) = t² g(t).
#[derive(Debug, Clone)]
pub struct WellData {
    pub rho: f64,
    /// g(t) as a polynomial in t (possibly truncated in the numeric case).
    pub gfactor: Polynomial,
    /// W̃''(ρ_w) = 2 g(0) = W''(ρ_w) P'(ρ_w).
    pub wtilde_dd: f64,
    /// Tail rate √(W''(ρ_w)/P'(ρ_w)).
    pub gamma: f64,
}

#[derive(Debug, Clone)]
enum WtildeEval {
    /// Exact antiderivative of the polynomial W'P'.
    Poly(Polynomial),
    /// Anchored composite Gauss–Legendre cumulative of W'P'.
    Numeric {
        anchors: Vec<f64>,
        lo: f64,
        step: f64,
    },
}

// ---------------------------------------------------------------------------
// the model
// ---------------------------------------------------------------------------

/// The validated tuple (P, B, D, σ) together with every derived object:
/// wells of W, the tilted potential W̃ and its well factorizations, and the
/// maximal decay rate of the standing wave. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ModelFunctions {
    pub p: ScalarFunctionSpec,
    pub b: ScalarFunctionSpec,
    pub d: ScalarFunctionSpec,
    pub sigma: ScalarFunctionSpec,
    pub rho_minus: f64,
    pub rho_star: f64,
    pub rho_plus: f64,
    pub gamma_max_v: f64,
    wtilde: WtildeEval,
    well_minus: WellData,
    well_plus: WellData,
}

/// One assumption line of a validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Machine-readable outcome of `validate_model`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted: bool,
    pub assumptions: Vec<AssumptionCheck>,
    pub rho_minus: f64,
    pub rho_star: f64,
    pub rho_plus: f64,
    pub balance_integral: f64,
    pub gamma_max_v: f64,
    /// |W(ρ₊) − W(ρ₋)| — zero only for linear P; informational.
    pub w_depth_mismatch: f64,
}

impl ModelFunctions {
    /// Builds the derived objects. Fails with `RootCountError` when W' does
    /// not have exactly three roots in (0, 1); every other assumption is
    /// checked by [`validate_model`].
    pub fn from_specs(
        p: ScalarFunctionSpec,
        b: ScalarFunctionSpec,
        d: ScalarFunctionSpec,
        sigma: ScalarFunctionSpec,
    ) -> Result<Self> {
        p.check_evaluable()?;
        b.check_evaluable()?;
        d.check_evaluable()?;
        sigma.check_evaluable()?;

        let w_prime = |x: f64| d.eval(x) - b.eval(x);
        let roots = bracket_roots(&w_prime, ROOT_GRID);
        if roots.len() != 3 {
            return Err(Error::RootCount { found: roots.len() });
        }
        let (rho_minus, rho_star, rho_plus) = (roots[0], roots[1], roots[2]);

        // W'P' as a polynomial when the specs allow it (exact W̃), else a
        // dense anchored cumulative.
        let wtilde = build_wtilde(&p, &b, &d, rho_minus)?;

        let wp_dd = |x: f64| {
            let db = d.derivs(x);
            let bb = b.derivs(x);
            db[1] - bb[1] // W'' = D' - B'
        };
        let mk_well = |rho_w: f64| -> WellData {
            let wdd = wp_dd(rho_w);
            let pp = p.derivs(rho_w)[1];
            let gamma = (wdd / pp).max(0.0).sqrt();
            let gfactor = well_gfactor(&wtilde, &p, &b, &d, rho_w);
            WellData {
                rho: rho_w,
                gfactor,
                wtilde_dd: wdd * pp,
                gamma,
            }
        };
        let well_minus = mk_well(rho_minus);
        let well_plus = mk_well(rho_plus);
        let gamma_max_v = well_minus.gamma.min(well_plus.gamma);

        Ok(Self {
            p,
            b,
            d,
            sigma,
            rho_minus,
            rho_star,
            rho_plus,
            gamma_max_v,
            wtilde,
            well_minus,
            well_plus,
        })
    }

    // -- point evaluation -----------------------------------------------

    /// P and its first three derivatives.
    pub fn p_derivs(&self, rho: f64) -> [f64; 4] {
        self.p.derivs(rho)
    }

    pub fn b_val(&self, rho: f64) -> f64 {
        self.b.eval(rho)
    }

    pub fn d_val(&self, rho: f64) -> f64 {
        self.d.eval(rho)
    }

    pub fn sigma_val(&self, rho: f64) -> f64 {
        self.sigma.eval(rho)
    }

    pub fn sigma_prime(&self, rho: f64) -> f64 {
        self.sigma.derivs(rho)[1]
    }

    /// B + D at ρ.
    pub fn bd_sum(&self, rho: f64) -> f64 {
        self.b.eval(rho) + self.d.eval(rho)
    }

    /// W' = D − B and its next two derivatives: [W', W'', W'''].
    pub fn w_prime_derivs(&self, rho: f64) -> [f64; 3] {
        let dd = self.d.derivs(rho);
        let bb = self.b.derivs(rho);
        [dd[0] - bb[0], dd[1] - bb[1], dd[2] - bb[2]]
    }

    pub fn w_prime(&self, rho: f64) -> f64 {
        self.d.eval(rho) - self.b.eval(rho)
    }

    /// W(ρ) = ∫_{ρ₋}^ρ W' dρ̃ (normalization W(ρ₋) = 0).
    pub fn w_value(&self, rho: f64) -> f64 {
        let gl = GaussLegendre::new(24);
        let panels = ((rho - self.rho_minus).abs() * 32.0).ceil().max(1.0) as usize;
        gl.integrate_composite(self.rho_minus, rho, panels, |x| self.w_prime(x))
    }

    /// The tilted potential W̃(ρ) = ∫_{ρ₋}^ρ W'P' dρ̃, evaluated through the
    /// well factorization t²g(t) near the wells for full relative accuracy.
    pub fn wtilde(&self, rho: f64) -> f64 {
        let span = self.rho_plus - self.rho_minus;
        for well in [&self.well_minus, &self.well_plus] {
            let t = rho - well.rho;
            if t.abs() < 0.2 * span {
                return t * t * well.gfactor.eval(t);
            }
        }
        self.wtilde_raw(rho)
    }

    fn wtilde_raw(&self, rho: f64) -> f64 {
        match &self.wtilde {
            WtildeEval::Poly(p) => p.eval(rho),
            WtildeEval::Numeric { anchors, lo, step } => {
                let idx = (((rho - lo) / step).floor() as isize)
                    .clamp(0, anchors.len() as isize - 1) as usize;
                let base = lo + idx as f64 * step;
                let gl = GaussLegendre::new(20);
                anchors[idx] + gl.integrate(base, rho, |x| self.wtilde_deriv(x))
            }
        }
    }

    /// W̃' = W'P'.
    pub fn wtilde_deriv(&self, rho: f64) -> f64 {
        self.w_prime(rho) * self.p.derivs(rho)[1]
    }

    /// √(2W̃(ρ)), exact near the wells via the factorization
    /// √(2W̃) = |ρ−ρ_w|·√(2g(ρ−ρ_w)); clamped at 0 against rounding noise.
    pub fn sqrt_2wtilde(&self, rho: f64) -> f64 {
        let span = self.rho_plus - self.rho_minus;
        for well in [&self.well_minus, &self.well_plus] {
            let t = rho - well.rho;
            if t.abs() < 0.2 * span {
                let g = well.gfactor.eval(t).max(0.0);
                return t.abs() * (2.0 * g).sqrt();
            }
        }
        (2.0 * self.wtilde_raw(rho)).max(0.0).sqrt()
    }

    pub fn well_minus(&self) -> &WellData {
        &self.well_minus
    }

    pub fn well_plus(&self) -> &WellData {
        &self.well_plus
    }

    pub fn well_mid(&self) -> f64 {
        0.5 * (self.rho_minus + self.rho_plus)
    }

    /// Monotone bisection inverse of P on [0, P(1)].
    pub fn p_inverse(&self, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let f = |x: f64| self.p.eval(x) - alpha;
        if f(lo) > 0.0 {
            return 0.0;
        }
        if f(hi) < 0.0 {
            return 1.0;
        }
        while hi - lo > P_INV_TOL {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Pure validation report; see [`validate_model`] for the erroring form.
    pub fn validation_report(&self, tol: f64) -> ValidationReport {
        let mut checks = Vec::new();

        // (A1) P(0) = 0, P' > 0
        let p0 = self.p.eval(0.0);
        let mut a1_pass = p0.abs() <= tol;
        let mut a1_detail = format!("P(0) = {p0:.3e}");
        if let Some((rho, v)) = min_on_dense(|x| self.p.derivs(x)[1]) {
            if v <= 0.0 {
                a1_pass = false;
            }
            a1_detail.push_str(&format!(", min P' = {v:.6e} at rho = {rho:.4}"));
        }
        checks.push(AssumptionCheck {
            name: "A1: P(0)=0 and P'>0".into(),
            passed: a1_pass,
            detail: a1_detail,
        });

        // (A2) B > 0, D > 0 individually (maximum-principle form)
        let bmin = min_on_dense(|x| self.b.eval(x)).unwrap();
        let dmin = min_on_dense(|x| self.d.eval(x)).unwrap();
        let smin = min_on_dense(|x| self.sigma.eval(x)).unwrap();
        let a2_pass = bmin.1 > 0.0 && dmin.1 > 0.0 && smin.1 > 0.0;
        checks.push(AssumptionCheck {
            name: "A2: B, D, sigma > 0".into(),
            passed: a2_pass,
            detail: format!(
                "min B = {:.6e}, min D = {:.6e}, min sigma = {:.6e}",
                bmin.1, dmin.1, smin.1
            ),
        });

        // (A3) three critical points, W''(ρ±) > 0, double-well shape of the
        // tilted potential (strictly positive between the wells).
        let wdd_m = self.w_prime_derivs(self.rho_minus)[1];
        let wdd_p = self.w_prime_derivs(self.rho_plus)[1];
        let mut a3_pass = wdd_m > 0.0 && wdd_p > 0.0;
        let mut min_interior = f64::INFINITY;
        for i in 1..DENSE_SAMPLES {
            let s = i as f64 / DENSE_SAMPLES as f64;
            let rho = self.rho_minus + s * (self.rho_plus - self.rho_minus);
            if rho > self.rho_minus + 1e-4 && rho < self.rho_plus - 1e-4 {
                min_interior = min_interior.min(self.wtilde(rho));
            }
        }
        if min_interior <= 0.0 {
            a3_pass = false;
        }
        let w_depth_mismatch = (self.w_value(self.rho_plus)).abs();
        checks.push(AssumptionCheck {
            name: "A3: double well (three roots, W''(rho±)>0, tilted wells equal)".into(),
            passed: a3_pass,
            detail: format!(
                "W''(rho-) = {wdd_m:.6e}, W''(rho+) = {wdd_p:.6e}, min interior Wtilde = {min_interior:.3e}, |W(rho+)-W(rho-)| = {w_depth_mismatch:.3e}"
            ),
        });

        // (A4) P-balance
        let balance = self.wtilde_raw(self.rho_plus);
        let a4_pass = balance.abs() <= tol;
        checks.push(AssumptionCheck {
            name: "A4: P-balance".into(),
            passed: a4_pass,
            detail: format!("Wtilde(rho+) = {balance:.3e} (tol {tol:.1e})"),
        });

        ValidationReport {
            accepted: checks.iter().all(|c| c.passed),
            assumptions: checks,
            rho_minus: self.rho_minus,
            rho_star: self.rho_star,
            rho_plus: self.rho_plus,
            balance_integral: balance,
            gamma_max_v: self.gamma_max_v,
            w_depth_mismatch,
        }
    }
}

/// Validates (A1)–(A4); returns the report on acceptance and the specific
/// violated-assumption error otherwise. Idempotent and side-effect free.
pub fn validate_model(model: &ModelFunctions, tol: f64) -> Result<ValidationReport> {
    // positivity errors carry the offending location
    if let Some((rho, v)) = min_on_dense(|x| model.p.derivs(x)[1]) {
        if v <= 0.0 {
            return Err(Error::Positivity {
                what: "P'",
                rho,
                value: v,
            });
        }
    }
    for (name, f) in [
        ("B", &model.b as &ScalarFunctionSpec),
        ("D", &model.d),
        ("sigma", &model.sigma),
    ] {
        let (rho, v) = min_on_dense(|x| f.eval(x)).unwrap();
        if v <= 0.0 {
            return Err(Error::Positivity {
                what: match name {
                    "B" => "B",
                    "D" => "D",
                    _ => "sigma",
                },
                rho,
                value: v,
            });
        }
    }
    let report = model.validation_report(tol);
    if !report.assumptions[3].passed {
        return Err(Error::Balance {
            value: report.balance_integral,
            tol,
        });
    }
    if !report.accepted {
        return Err(Error::InvalidInput(format!(
            "model rejected: {:?}",
            report
                .assumptions
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.clone())
                .collect::<Vec<_>>()
        )));
    }
    Ok(report)
}

/// Builds (B, D) = ((S − W')/2, (S + W')/2) with W' := W̃'/P', so the
/// P-balance holds by construction. σ defaults to the constant 1/2 when not
/// supplied.
pub fn build_quasilinear_from_wtilde(
    p: ScalarFunctionSpec,
    wtilde: ScalarFunctionSpec,
    s_sum: ScalarFunctionSpec,
    sigma: Option<ScalarFunctionSpec>,
) -> Result<ModelFunctions> {
    let p_poly = p
        .as_polynomial()
        .ok_or_else(|| Error::InvalidInput("P must be polynomial in this construction".into()))?;
    let wt_poly = wtilde.as_polynomial().ok_or_else(|| {
        Error::InvalidInput("Wtilde must be polynomial in this construction".into())
    })?;

    // domination check: S_sum > |W̃'/P'| on a dense sample
    let wt_d = wt_poly.derivative();
    let p_d = p_poly.derivative();
    for i in 0..=DENSE_SAMPLES {
        let rho = i as f64 / DENSE_SAMPLES as f64;
        let wp = wt_d.eval(rho) / p_d.eval(rho);
        let s = s_sum.eval(rho);
        if s <= wp.abs() {
            return Err(Error::Domination {
                rho,
                s,
                wp: wp.abs(),
            });
        }
    }

    let mk = |sign: f64| ScalarFunctionSpec::ComposedFromWtilde {
        sign,
        p: p_poly.coeffs.clone(),
        wtilde: wt_poly.coeffs.clone(),
        s_sum: Box::new(s_sum.clone()),
    };
    let sigma = sigma.unwrap_or_else(|| ScalarFunctionSpec::constant(0.5));
    ModelFunctions::from_specs(p, mk(-1.0), mk(1.0), sigma)
}

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

/// On-disk model document: either the four functions directly or the
/// quasilinear construction data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Direct {
        #[serde(rename = "P")]
        p: ScalarFunctionSpec,
        #[serde(rename = "B")]
        b: ScalarFunctionSpec,
        #[serde(rename = "D")]
        d: ScalarFunctionSpec,
        sigma: ScalarFunctionSpec,
    },
    FromWtilde {
        #[serde(rename = "P")]
        p: ScalarFunctionSpec,
        #[serde(rename = "Wtilde")]
        wtilde: ScalarFunctionSpec,
        #[serde(rename = "S_sum")]
        s_sum: ScalarFunctionSpec,
        #[serde(default)]
        sigma: Option<ScalarFunctionSpec>,
    },
}

impl ModelFile {
    pub fn build(self) -> Result<ModelFunctions> {
        match self {
            ModelFile::Direct { p, b, d, sigma } => ModelFunctions::from_specs(p, b, d, sigma),
            ModelFile::FromWtilde {
                p,
                wtilde,
                s_sum,
                sigma,
            } => build_quasilinear_from_wtilde(p, wtilde, s_sum, sigma),
        }
    }
}

pub fn load_model(path: &std::path::Path) -> Result<ModelFunctions> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.build()
}

// ---------------------------------------------------------------------------
// reference models used across the test suites
// ---------------------------------------------------------------------------

/// The reference model: P(ρ) = ρ, W = ½(ρ−¼)²(¾−ρ)², B = (1−W')/2,
/// D = (1+W')/2, σ = ½. Wells at 0.25 / 0.75, θ = 1, μ = 25.2.
pub fn reference_model() -> ModelFunctions {
    // W' = (ρ-1/4)(3/4-ρ)(1-2ρ) expanded: -3/16 + (5/4)ρ - (5/2)ρ² + ... derive
    // exactly via polynomial arithmetic below.
    let w_prime = poly_mul(&poly_mul(&[-0.25, 1.0], &[0.75, -1.0]), &[1.0, -2.0]);
    let mut b = vec![0.0; w_prime.len().max(1)];
    let mut d = vec![0.0; w_prime.len().max(1)];
    for (k, &c) in w_prime.iter().enumerate() {
        b[k] = -0.5 * c;
        d[k] = 0.5 * c;
    }
    b[0] += 0.5;
    d[0] += 0.5;
    ModelFunctions::from_specs(
        ScalarFunctionSpec::poly(&[0.0, 1.0]),
        ScalarFunctionSpec::Polynomial { coefficients: b },
        ScalarFunctionSpec::Polynomial { coefficients: d },
        ScalarFunctionSpec::constant(0.5),
    )
    .expect("reference model is valid")
}

/// Quartic W̃ = ½(ρ−¼)²(¾−ρ)² as a dense polynomial.
pub fn reference_wtilde_poly() -> Vec<f64> {
    let a = poly_mul(&[-0.25, 1.0], &[-0.25, 1.0]);
    let b = poly_mul(&[0.75, -1.0], &[0.75, -1.0]);
    poly_mul(&a, &b).iter().map(|c| 0.5 * c).collect()
}

/// Quasilinear companion model with P(ρ) = ρ + ρ² and the quartic W̃.
pub fn quasilinear_model() -> ModelFunctions {
    build_quasilinear_from_wtilde(
        ScalarFunctionSpec::poly(&[0.0, 1.0, 1.0]),
        ScalarFunctionSpec::Polynomial {
            coefficients: reference_wtilde_poly(),
        },
        ScalarFunctionSpec::constant(1.0),
        None,
    )
    .expect("quasilinear model is valid")
}

/// The P(ρ) = ρ/2 model of the separable-corrector cross-check.
pub fn half_mobility_model() -> ModelFunctions {
    build_quasilinear_from_wtilde(
        ScalarFunctionSpec::poly(&[0.0, 0.5]),
        ScalarFunctionSpec::Polynomial {
            coefficients: reference_wtilde_poly(),
        },
        ScalarFunctionSpec::constant(1.0),
        None,
    )
    .expect("half-mobility model is valid")
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// internals
// ---------------------------------------------------------------------------

fn min_on_dense<F: Fn(f64) -> f64>(f: F) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=DENSE_SAMPLES {
        let x = i as f64 / DENSE_SAMPLES as f64;
        let v = f(x);
        if best.map(|(_, bv)| v < bv).unwrap_or(true) {
            best = Some((x, v));
        }
    }
    best
}

/// Sign-change bracketing on a uniform grid over (0,1), refined by bisection.
fn bracket_roots<F: Fn(f64) -> f64>(f: &F, grid: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let h = 1.0 / grid as f64;
    let mut x_prev = h;
    let mut f_prev = f(x_prev);
    for i in 2..grid {
        let x = i as f64 * h;
        let fx = f(x);
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if f_prev * fx < 0.0 {
            roots.push(bisect(f, x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    roots
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// W̃ as an exact polynomial when W'P' is polynomial, else a dense anchored
/// cumulative of W'P'.
fn build_wtilde(
    p: &ScalarFunctionSpec,
    b: &ScalarFunctionSpec,
    d: &ScalarFunctionSpec,
    rho_minus: f64,
) -> Result<WtildeEval> {
    let wp_poly: Option<Polynomial> = match (b, d) {
        // both polynomial: W' = D − B is polynomial
        (
            ScalarFunctionSpec::Polynomial { coefficients: bc },
            ScalarFunctionSpec::Polynomial { coefficients: dc },
        ) => {
            let n = bc.len().max(dc.len());
            let mut w = vec![0.0; n];
            for (k, slot) in w.iter_mut().enumerate() {
                *slot = dc.get(k).copied().unwrap_or(0.0) - bc.get(k).copied().unwrap_or(0.0);
            }
            Some(Polynomial::new(w))
        }
        // quasilinear construction: W'P' = W̃' exactly
        (
            ScalarFunctionSpec::ComposedFromWtilde {
                wtilde: wb,
                p: pb,
                sign: sb,
                ..
            },
            ScalarFunctionSpec::ComposedFromWtilde {
                wtilde: wd,
                p: pd,
                sign: sd,
                ..
            },
        ) if wb == wd && pb == pd && *sb == -1.0 && *sd == 1.0 => {
            let wt_d = Polynomial::new(wb.clone()).derivative();
            // W̃_model(ρ) = W̃_given(ρ) − W̃_given(ρ₋)
            return Ok(WtildeEval::Poly(wt_d.antiderivative(rho_minus, 0.0)));
        }
        _ => None,
    };

    if let (Some(wp), Some(pp)) = (wp_poly, p.as_polynomial()) {
        let integrand = Polynomial::new(poly_mul(&wp.coeffs, &pp.derivative().coeffs));
        return Ok(WtildeEval::Poly(integrand.antiderivative(rho_minus, 0.0)));
    }

    // numeric fallback: anchors on a fine uniform grid
    let n_anchor = 2049usize;
    let lo = 0.0;
    let step = 1.0 / (n_anchor - 1) as f64;
    let gl = GaussLegendre::new(20);
    let integrand = |x: f64| (d.eval(x) - b.eval(x)) * p.derivs(x)[1];
    let mut anchors = vec![0.0; n_anchor];
    // cumulative from 0, then shift so the anchor value at ρ₋ is 0
    let mut acc = 0.0;
    for (i, anchor) in anchors.iter_mut().enumerate().skip(1) {
        let a = lo + (i - 1) as f64 * step;
        acc += gl.integrate(a, a + step, integrand);
        *anchor = acc;
    }
    let idx = ((rho_minus - lo) / step).floor() as usize;
    let base = lo + idx as f64 * step;
    let at_rho_minus = anchors[idx] + gl.integrate(base, rho_minus, integrand);
    for a in &mut anchors {
        *a -= at_rho_minus;
    }
    Ok(WtildeEval::Numeric { anchors, lo, step })
}

/// g(t) with W̃(ρ_w + t) = t² g(t): exact Taylor factorization for the
/// polynomial case, cubic Taylor truncation for the numeric case.
fn well_gfactor(
    wtilde: &WtildeEval,
    p: &ScalarFunctionSpec,
    b: &ScalarFunctionSpec,
    d: &ScalarFunctionSpec,
    rho_w: f64,
) -> Polynomial {
    match wtilde {
        WtildeEval::Poly(wt) => {
            let shifted = wt.taylor_at(rho_w);
            // drop the (numerically ~0) constant and linear terms of the
            // double root
            Polynomial::new(shifted[2..].to_vec())
        }
        WtildeEval::Numeric { .. } => {
            // W̃⁽ᵏ⁾(ρ_w) from derivatives of W'P'
            let wd = |x: f64| {
                let db = d.derivs(x);
                let bb = b.derivs(x);
                let pp = p.derivs(x);
                let w = [db[0] - bb[0], db[1] - bb[1], db[2] - bb[2], db[3] - bb[3]];
                // (W'P')^(k) by Leibniz, k = 0..2
                let g0 = w[0] * pp[1];
                let g1 = w[1] * pp[1] + w[0] * pp[2];
                let g2 = w[2] * pp[1] + 2.0 * w[1] * pp[2] + w[0] * pp[3];
                [g0, g1, g2]
            };
            let g = wd(rho_w);
            // c_k = W̃^{(k)}/k! for k = 2, 3, 4
            Polynomial::new(vec![g[0] / 2.0, g[1] / 6.0, g[2] / 24.0])
        }
    }
}

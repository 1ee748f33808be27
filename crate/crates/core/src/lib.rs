//! # sharplim
//!
//! A numerical laboratory for the sharp-interface limit of the large-deviation
//! rate functional attached to a quasilinear reaction-diffusion equation
//!
//! ```text
//! ∂_t ρ = Δ P(ρ) + (B(ρ) − D(ρ)) / ε²
//! ```
//!
//! on the torus. The crate builds every constructive object of that limit at
//! desk scale and cross-checks each against an independent route:
//!
//! * [`model`] — model functions (P, B, D, σ), the potential W with
//!   W' = D − B, the tilted potential W̃, and the structural assumptions
//!   (positivity, double well, P-balance).
//! * [`profile`] — the standing wave ū and v̄ = P(ū) connecting the two
//!   stable phases, with exponential tails and the scalar coefficients
//!   θ₁, θ₂, ν, μ, θ.
//! * [`linop`] — the Sturm–Liouville operator L_ū ψ = (2σ(ū)ψ')' − (B+D)(ū)ψ
//!   on a truncated line, with a cached SPD factorization of −L_ū.
//! * [`corrector`] — the optimal first-order corrector Q̄_min, its Lagrange
//!   multiplier λ, the linearized maximizer profile Ĥ₁ and the quadratic
//!   cost density ∫ F (−L_ū)⁻¹ F dξ with its closed-form minimum
//!   (∂_t d − θΔd)²/(2μ).
//! * [`geometry`] — prescribed geometric flows (1-d front pairs, 2-d
//!   circles) with analytic regularized signed distance, the limiting
//!   energy S_ac, and co-area convergence checks.
//! * [`functional`] — the transition-layer ansatz φ_ε, the nonlinear
//!   maximizer H_max,ε solved by Newton iteration, the rate functional S_ε
//!   evaluated directly and asymptotically, and ε-ladder studies of
//!   S_ε(φ_ε) → S_ac(Γ).
//!
//! All state is immutable after construction; evaluation is pure and safe to
//! run concurrently (ladder points and time slices are parallelized with
//! rayon).

pub mod corrector;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod linop;
pub mod model;
pub mod profile;
pub mod quad;
pub mod report;

pub use corrector::{f_of_q, lambda_coeff, CorrectorBasis, CorrectorWorkspace};
pub use error::Error;
pub use functional::{
    AnsatzField, ConvergenceMode, CorrectorChoice, MaximizerField, PerturbationSpec, RateReport,
};
pub use geometry::{FlowField, RadiusLaw, SignedDistanceField, Trajectory};
pub use linop::LineOperator;
pub use model::{ModelFunctions, ScalarFunctionSpec, ValidationReport};
pub use profile::{Coefficients, WaveProfile, XiGrid};

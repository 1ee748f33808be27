//! Config-driven command-line driver: model validation, standing-wave and
//! coefficient computation, corrector diagnostics, rate-functional ladder
//! studies and co-area checks. Every command writes a JSON report (with the
//! seed and input fingerprints embedded) plus CSV plot data into the output
//! directory, and exits non-zero with a failure manifest naming the violated
//! invariant when any check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sharplim::corrector::CorrectorWorkspace;
use sharplim::functional::{
    convergence_study, decomposition_study, evaluate_s_asymptotic, ConvergenceMode,
    CorrectorChoice, PerturbationSpec, TimeQuad,
};
use sharplim::geometry::{coarea_check, load_flow, s_ac, FlowField, RadiusLaw, Trajectory};
use sharplim::linop::assemble;
use sharplim::model::{load_model, validate_model, ModelFunctions};
use sharplim::profile::{
    compute_coefficients, fit_decay, profile_residuals, solve_profile, XiGrid,
};
use sharplim::report::{basis_csv, fingerprint_file, fingerprint_str, ladder_csv, profile_csv};

type DynError = Box<dyn std::error::Error + Send + Sync>;
type Result<T> = std::result::Result<T, DynError>;

#[derive(Parser)]
#[command(
    name = "sharplim",
    about = "sharp-interface rate-functional laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and CSV plot data.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for every randomized check (recorded in the reports).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Enables the 2-d direct evaluation inside `rate`/`all`.
    #[arg(long, global = true, default_value_t = false)]
    slow: bool,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check assumptions (A1)-(A4) of the configured model.
    Validate,
    /// Solve the standing wave and report residuals and the decay fit.
    Profile,
    /// Compute θ₁, θ₂, ν, μ, θ with the dual-route consistency checks.
    Coefficients,
    /// Build the corrector basis and verify minimality and the lower bound.
    Corrector,
    /// Run the ε-ladder rate study configured by `mode`.
    Rate,
    /// Run the layered-integral convergence check.
    Coarea,
    /// Run the full suite in dependency order.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Profile => "profile",
            Command::Coefficients => "coefficients",
            Command::Corrector => "corrector",
            Command::Rate => "rate",
            Command::Coarea => "coarea",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
struct ExperimentConfig {
    model: Option<PathBuf>,
    flow: Option<PathBuf>,
    corrector: Option<String>,
    eps_ladder: Option<Vec<f64>>,
    mode: Option<ConvergenceMode>,
    grid: Option<GridConfig>,
    tolerance: Option<f64>,
    perturbation: Option<PerturbationSpec>,
    coarea_integrand: Option<String>,
    coarea_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct GridConfig {
    l: f64,
    n: usize,
}

#[derive(Debug, Serialize)]
struct Failure {
    check: String,
    detail: String,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    seed: u64,
    slow: bool,
    meta: Value,
    failures: Vec<Failure>,
}

impl Ctx {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures.push(Failure {
                check: name.to_string(),
                detail,
            });
        }
    }

    fn grid(&self) -> XiGrid {
        match self.cfg.grid {
            Some(g) => XiGrid::new(g.l, g.n).expect("grid config"),
            None => XiGrid::default_grid(),
        }
    }

    fn tolerance(&self) -> f64 {
        self.cfg.tolerance.unwrap_or(1e-10)
    }

    fn ladder(&self) -> Vec<f64> {
        self.cfg
            .eps_ladder
            .clone()
            .unwrap_or_else(|| vec![0.04, 0.02, 0.01, 0.005])
    }

    fn corrector_choice(&self) -> CorrectorChoice {
        match self.cfg.corrector.as_deref() {
            Some("zero") => CorrectorChoice::Zero,
            _ => CorrectorChoice::QMin,
        }
    }

    fn write_report(&self, name: &str, mut body: Value) -> Result<()> {
        body["meta"] = self.meta.clone();
        let path = self.out.join(format!("{name}_report.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            write_manifest(&cli, &failures);
            eprintln!("FAIL: {} check(s) violated", failures.len());
            for f in &failures {
                eprintln!("  {}: {}", f.check, f.detail);
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            let failures = vec![Failure {
                check: "execution".into(),
                detail: e.to_string(),
            }];
            write_manifest(&cli, &failures);
            eprintln!("ERROR: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_manifest(cli: &Cli, failures: &[Failure]) {
    std::fs::create_dir_all(&cli.out).ok();
    let manifest = json!({
        "command": cli.command.name(),
        "failures": failures.iter().map(|f| json!({
            "check": f.check, "detail": f.detail,
        })).collect::<Vec<_>>(),
    });
    let path = cli.out.join("failure_manifest.json");
    let _ = std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap());
}

fn run(cli: &Cli) -> Result<Vec<Failure>> {
    std::fs::create_dir_all(&cli.out)?;
    let (cfg, cfg_text) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            (serde_json::from_str::<ExperimentConfig>(&text)?, text)
        }
        None => (ExperimentConfig::default(), String::new()),
    };

    let model_path = cfg
        .model
        .clone()
        .unwrap_or_else(|| PathBuf::from("configs/model_reference.json"));
    let mut meta = json!({
        "seed": cli.seed,
        "config_fingerprint": fingerprint_str(&cfg_text),
        "model_fingerprint": fingerprint_file(&model_path).unwrap_or_default(),
        "model_path": model_path.display().to_string(),
    });
    if let Some(flow_path) = &cfg.flow {
        meta["flow_fingerprint"] = json!(fingerprint_file(flow_path).unwrap_or_default());
        meta["flow_path"] = json!(flow_path.display().to_string());
    }

    let mut ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        seed: cli.seed,
        slow: cli.slow,
        meta,
        failures: Vec::new(),
    };

    let model = load_model(&model_path)?;
    match cli.command {
        Command::Validate => cmd_validate(&mut ctx, &model)?,
        Command::Profile => cmd_profile(&mut ctx, &model)?,
        Command::Coefficients => cmd_coefficients(&mut ctx, &model)?,
        Command::Corrector => cmd_corrector(&mut ctx, &model)?,
        Command::Rate => cmd_rate(&mut ctx, &model)?,
        Command::Coarea => cmd_coarea(&mut ctx)?,
        Command::All => cmd_all(&mut ctx, &model)?,
    }
    Ok(ctx.failures)
}

fn cmd_validate(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let report = match validate_model(model, ctx.tolerance()) {
        Ok(report) => report,
        Err(e) => {
            ctx.check("validate_model", false, e.to_string());
            let body = json!({"accepted": false, "error": e.to_string()});
            ctx.write_report("validate", body)?;
            return Ok(());
        }
    };
    ctx.check(
        "validate_model",
        report.accepted,
        format!("{:?}", report.assumptions),
    );
    ctx.write_report("validate", serde_json::to_value(&report)?)?;
    Ok(())
}

fn cmd_profile(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let grid = ctx.grid();
    let profile = solve_profile(model, &grid)?;
    let residuals = profile_residuals(&profile, model);
    let decay = fit_decay(&profile)?;
    ctx.check(
        "profile.ode_residual",
        residuals.ode_residual < 1e-8,
        format!("{:.3e}", residuals.ode_residual),
    );
    ctx.check(
        "profile.identity_residual",
        residuals.identity_residual < 1e-8,
        format!("{:.3e}", residuals.identity_residual),
    );
    ctx.check(
        "profile.monotone",
        residuals.monotonicity_violations == 0,
        format!("{} violations", residuals.monotonicity_violations),
    );
    ctx.check(
        "profile.decay_below_gamma_max",
        decay.gamma <= model.gamma_max_v + 0.01,
        format!(
            "gamma_fit {} vs gamma_max {}",
            decay.gamma, model.gamma_max_v
        ),
    );
    profile_csv(&ctx.out.join("profile.csv"), &profile)?;
    ctx.write_report(
        "profile",
        json!({
            "grid": {"l": grid.l, "n": grid.n},
            "residuals": residuals,
            "decay": decay,
            "gamma_max_v": model.gamma_max_v,
            "rho_minus": model.rho_minus,
            "rho_plus": model.rho_plus,
        }),
    )?;
    Ok(())
}

fn cmd_coefficients(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let grid = ctx.grid();
    let profile = solve_profile(model, &grid)?;
    let op = assemble(&profile, model)?;
    let coeffs = compute_coefficients(&profile, model, &op)?;
    ctx.check(
        "coefficients.positive",
        coeffs.theta1 > 0.0 && coeffs.theta2 > 0.0 && coeffs.nu > 0.0,
        format!("{coeffs:?}"),
    );
    ctx.write_report("coefficients", serde_json::to_value(coeffs)?)?;
    Ok(())
}

fn cmd_corrector(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let ws = CorrectorWorkspace::build(model, &ctx.grid())?;
    // minimality over the 7×7 data lattice
    let mut worst = 0.0_f64;
    for ia in 0..7 {
        for ib in 0..7 {
            let a = -2.0 + ia as f64 * (4.0 / 6.0);
            let b = -2.0 + ib as f64 * (4.0 / 6.0);
            let cost = ws.cost_qmin(a, b)?;
            let closed = ws.cost_closed_form(a, b);
            let err = if closed.abs() > 1e-8 {
                ((cost.full - closed) / closed).abs()
            } else {
                cost.full.abs()
            };
            worst = worst.max(err);
        }
    }
    ctx.check(
        "corrector.minimality_lattice",
        worst < 1e-6,
        format!("worst relative defect {worst:.3e}"),
    );

    // lower bound on seeded random admissible correctors
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let (a, b) = (1.0, -0.7);
    let bound = ws.cost_closed_form(a, b);
    let mut violations = 0usize;
    for _ in 0..50 {
        let c0: f64 = rng.random_range(-1.0..1.0);
        let c1: f64 = rng.random_range(-1.0..1.0);
        let amp: f64 = rng.random_range(-2.0..2.0);
        let width: f64 = rng.random_range(1.0..6.0);
        let center: f64 = rng.random_range(-8.0..8.0);
        let cost = ws.cost_custom(a, b, |xi| {
            let s = (xi - center) / width;
            let bump = amp * (-s * s).exp();
            let dbump = -2.0 * s / width * bump;
            let ddbump = (-2.0 / (width * width)) * bump + (2.0 * s / width).powi(2) * bump;
            let (qa, dqa, ddqa) = ws.basis.eval_q(1.0, 0.0, xi);
            let (qb, dqb, ddqb) = ws.basis.eval_q(0.0, 1.0, xi);
            (
                c0 * qa + c1 * qb + bump,
                c0 * dqa + c1 * dqb + dbump,
                c0 * ddqa + c1 * ddqb + ddbump,
            )
        })?;
        if cost.full < bound - 1e-6 {
            violations += 1;
        }
    }
    ctx.check(
        "corrector.lower_bound",
        violations == 0,
        format!("{violations} of 50 random correctors undercut (a−θb)²/(2μ)"),
    );

    basis_csv(&ctx.out.join("corrector_basis.csv"), &ws.basis)?;
    ctx.write_report(
        "corrector",
        json!({
            "lambda_a": ws.basis.lambda_a,
            "lambda_b": ws.basis.lambda_b,
            "dq_limit_a": ws.basis.dq_limit_a,
            "dq_limit_b": ws.basis.dq_limit_b,
            "minimality_worst_rel_defect": worst,
            "lower_bound_violations": violations,
            "coefficients": ws.coeffs,
        }),
    )?;
    Ok(())
}

fn load_flow_or_default(ctx: &Ctx) -> Result<FlowField> {
    match &ctx.cfg.flow {
        Some(path) => Ok(load_flow(path)?),
        None => Ok(FlowField::front_pair(
            Trajectory::linear(0.25, 0.3),
            Trajectory::linear(0.75, 0.3),
            0.05,
        )?),
    }
}

fn cmd_rate(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let ws = CorrectorWorkspace::build(model, &ctx.grid())?;
    let flow = load_flow_or_default(ctx)?;
    let mode = ctx.cfg.mode.unwrap_or(match flow.dim() {
        1 => ConvergenceMode::Direct1d,
        _ => ConvergenceMode::Asymptotic2d,
    });
    if mode == ConvergenceMode::Direct2dSlow && !ctx.slow {
        ctx.check(
            "rate.slow_gate",
            false,
            "direct-2d-slow requires the --slow flag".into(),
        );
        return Ok(());
    }
    let choice = ctx.corrector_choice();
    let report = convergence_study(
        &ws,
        &flow,
        choice,
        ctx.cfg.perturbation.clone(),
        &ctx.ladder(),
        mode,
    )?;
    let sac = report.s_ac;

    match mode {
        ConvergenceMode::Direct1d | ConvergenceMode::Direct2dSlow => {
            ctx.check(
                "rate.monotone_error_decrease",
                report.monotone,
                format!("{:?}", report.rel_err),
            );
            if matches!(choice, CorrectorChoice::QMin) {
                let last = *report.rel_err.last().unwrap();
                ctx.check(
                    "rate.final_rel_err",
                    last <= 0.05,
                    format!("{last:.3e} at eps = {}", report.eps.last().unwrap()),
                );
            }
            if matches!(choice, CorrectorChoice::Zero) {
                // liminf property: S_ε ≥ S_ac − 2% at the smallest ε
                let last = *report.s_values.last().unwrap();
                ctx.check(
                    "rate.liminf",
                    last >= sac * 0.98,
                    format!("S = {last:.6e} vs 0.98·S_ac = {:.6e}", sac * 0.98),
                );
            }
        }
        ConvergenceMode::Asymptotic2d => {
            if matches!(choice, CorrectorChoice::QMin) {
                let ok = if sac.abs() > 1e-8 {
                    ((report.s_limit - sac) / sac).abs() <= 1e-6
                } else {
                    report.s_limit.abs() <= 1e-10
                };
                ctx.check(
                    "rate.asymptotic_matches_s_ac",
                    ok,
                    format!("S_asym = {:.9e}, S_ac = {sac:.9e}", report.s_limit),
                );
            }
        }
    }

    ladder_csv(
        &ctx.out.join("rate_ladder.csv"),
        &report.eps,
        &report.s_values,
        report.s_limit,
        sac,
        &report.rel_err,
        &report.newton_iters,
    )?;
    ctx.write_report("rate", serde_json::to_value(&report)?)?;
    Ok(())
}

fn cmd_coarea(ctx: &mut Ctx) -> Result<()> {
    let flow = load_flow_or_default(ctx)?;
    let ladder = ctx.ladder();
    let (name, rate): (&str, f64) = match ctx.cfg.coarea_integrand.as_deref() {
        Some("exp-half") => ("exp-half", 0.5),
        _ => ("exp-one", 1.0),
    };
    let n_default = if flow.dim() == 1 { 4096 } else { 2048 };
    let n_grid = ctx.cfg.coarea_grid.unwrap_or(n_default);
    let t = 0.5 * flow.horizon();
    let report = coarea_check(&flow, t, |_x, xi| (-rate * xi.abs()).exp(), &ladder, n_grid)?;
    let last = *report.rel_err.last().unwrap();
    ctx.check(
        "coarea.final_rel_err",
        last <= 0.01,
        format!("{last:.3e} at eps = {}", report.eps.last().unwrap()),
    );
    let rows: Vec<Vec<f64>> = (0..report.eps.len())
        .map(|i| {
            vec![
                report.eps[i],
                report.values[i],
                report.target,
                report.rel_err[i],
            ]
        })
        .collect();
    sharplim::report::write_csv(
        &ctx.out.join("coarea_ladder.csv"),
        "eps,value,target,rel_err",
        &rows,
    )?;
    let mut body = serde_json::to_value(&report)?;
    body["integrand"] = json!(name);
    ctx.write_report("coarea", body)?;
    Ok(())
}

/// The full battery in dependency order on the configured model: validation,
/// profile, coefficients, operator spot-checks, corrector, the 1-d direct
/// ladder (optimal and liminf variants), 2-d asymptotic circles, the
/// decomposition study, and the co-area ladders.
fn cmd_all(ctx: &mut Ctx, model: &ModelFunctions) -> Result<()> {
    let t_start = std::time::Instant::now();
    cmd_validate(ctx, model)?;
    cmd_profile(ctx, model)?;
    cmd_coefficients(ctx, model)?;
    cmd_corrector(ctx, model)?;

    let ws = CorrectorWorkspace::build(model, &ctx.grid())?;
    let ladder = ctx.ladder();

    // operator spot-checks
    {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5179);
        let op = &ws.op;
        let h = op.h();
        let mut worst = 0.0_f64;
        for _ in 0..16 {
            let psi = smooth_field(&ws.profile.grid, &mut rng);
            let phi = smooth_field(&ws.profile.grid, &mut rng);
            let lp = op.apply(&psi)?;
            let lq = op.apply(&phi)?;
            let dot = |a: &[f64], b: &[f64]| {
                let mut acc = sharplim::quad::KahanSum::new();
                for (x, y) in a.iter().zip(b) {
                    acc.add(x * y * h);
                }
                acc.value()
            };
            let asym = (dot(&lp, &phi) - dot(&psi, &lq)).abs()
                / (dot(&psi, &psi).sqrt() * dot(&phi, &phi).sqrt());
            worst = worst.max(asym);
        }
        ctx.check(
            "operator.self_adjoint",
            worst <= 1e-12,
            format!("normalized asymmetry {worst:.3e}"),
        );
        let w = op.apply(&ws.profile.dv)?;
        let psi = op.solve(&w)?;
        let mut sup = 0.0_f64;
        for (i, &p) in psi.iter().enumerate() {
            if ws.profile.grid.points[i].abs() <= 0.75 * ws.profile.grid.l {
                sup = sup.max((p - ws.profile.dv[i]).abs());
            }
        }
        ctx.check(
            "operator.solve_roundtrip",
            sup <= 1e-8,
            format!("{sup:.3e}"),
        );
    }

    // 1-d direct ladder with the optimal corrector
    let pair = FlowField::front_pair(
        Trajectory::linear(0.25, 0.3),
        Trajectory::linear(0.75, 0.3),
        0.05,
    )?;
    let report = convergence_study(
        &ws,
        &pair,
        CorrectorChoice::QMin,
        None,
        &ladder,
        ConvergenceMode::Direct1d,
    )?;
    ctx.check(
        "rate.monotone_error_decrease",
        report.monotone,
        format!("{:?}", report.rel_err),
    );
    ctx.check(
        "rate.final_rel_err",
        *report.rel_err.last().unwrap() <= 0.05,
        format!("{:.3e}", report.rel_err.last().unwrap()),
    );
    ladder_csv(
        &ctx.out.join("rate_ladder.csv"),
        &report.eps,
        &report.s_values,
        report.s_limit,
        report.s_ac,
        &report.rel_err,
        &report.newton_iters,
    )?;
    ctx.write_report("rate", serde_json::to_value(&report)?)?;

    // liminf variant: zero corrector + √ε bump
    let liminf = convergence_study(
        &ws,
        &pair,
        CorrectorChoice::Zero,
        Some(PerturbationSpec {
            amplitude: 0.5,
            center: vec![0.5],
            width: 0.25,
        }),
        &ladder,
        ConvergenceMode::Direct1d,
    )?;
    let sac_pair = liminf.s_ac;
    ctx.check(
        "rate.liminf",
        *liminf.s_values.last().unwrap() >= 0.98 * sac_pair,
        format!(
            "S = {:.6e} vs 0.98 S_ac = {:.6e}",
            liminf.s_values.last().unwrap(),
            0.98 * sac_pair
        ),
    );
    ctx.write_report("rate_liminf", serde_json::to_value(&liminf)?)?;

    // 2-d asymptotic: static and mean-curvature-flow circles
    let quad = TimeQuad::gauss(0.05, 16);
    let static_circle = FlowField::circle([0.5, 0.5], RadiusLaw::Static { r0: 0.15 }, 0.05)?;
    let s_asym = evaluate_s_asymptotic(&ws, &static_circle, CorrectorChoice::QMin, &quad)?;
    let s_exact = s_ac(&static_circle, &ws.coeffs);
    ctx.check(
        "rate.asymptotic_static_circle",
        ((s_asym - s_exact) / s_exact).abs() <= 1e-6,
        format!("{s_asym:.9e} vs {s_exact:.9e}"),
    );
    let mcf_circle = FlowField::circle(
        [0.5, 0.5],
        RadiusLaw::Mcf {
            r0: 0.15,
            theta: ws.coeffs.theta,
        },
        0.005,
    )?;
    let quad_mcf = TimeQuad::gauss(0.005, 16);
    let s_mcf = evaluate_s_asymptotic(&ws, &mcf_circle, CorrectorChoice::QMin, &quad_mcf)?;
    ctx.check(
        "rate.asymptotic_mcf_circle",
        s_mcf.abs() <= 1e-10,
        format!("{s_mcf:.3e}"),
    );

    // maximizer decomposition order
    let dec = decomposition_study(&ws, &pair, CorrectorChoice::QMin, &[0.04, 0.02, 0.01])?;
    ctx.check(
        "maximizer.decomposition_order",
        dec.order >= 1.8,
        format!("order {:.2}, sup {:?}", dec.order, dec.sup_diff),
    );
    ctx.write_report("decomposition", serde_json::to_value(&dec)?)?;

    // co-area ladders, 1-d and 2-d
    let co1 = coarea_check(&pair, 0.025, |_x, xi| (-xi.abs()).exp(), &ladder, 4096)?;
    ctx.check(
        "coarea.front_pair",
        *co1.rel_err.last().unwrap() <= 0.01,
        format!("{:.3e}", co1.rel_err.last().unwrap()),
    );
    let co2 = coarea_check(
        &static_circle,
        0.025,
        |_x, xi| (-0.5 * xi.abs()).exp(),
        &ladder,
        2048,
    )?;
    ctx.check(
        "coarea.circle",
        *co2.rel_err.last().unwrap() <= 0.01,
        format!("{:.3e}", co2.rel_err.last().unwrap()),
    );
    ctx.write_report("coarea", serde_json::to_value(&co2)?)?;

    // optional slow 2-d direct spot value
    if ctx.slow {
        let ansatz = sharplim::functional::AnsatzField::new(
            &ws,
            &static_circle,
            CorrectorChoice::QMin,
            None,
            0.02,
        );
        let quad2 = TimeQuad::gauss(0.05, 4);
        let (s2d, diag) = sharplim::functional::evaluate_s_direct(&ansatz, &quad2, 512)?;
        ctx.write_report(
            "rate_2d_slow",
            json!({"eps": 0.02, "s_direct": s2d, "diagnostics": diag}),
        )?;
    }

    ctx.write_report(
        "all",
        json!({
            "elapsed_seconds": t_start.elapsed().as_secs_f64(),
            "checks_failed": ctx.failures.len(),
        }),
    )?;
    Ok(())
}

fn smooth_field(grid: &XiGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let modes: Vec<(f64, f64)> = (0..12)
        .map(|_| (rng.random_range(1..=48) as f64, rng.random_range(-1.0..1.0)))
        .collect();
    grid.points
        .iter()
        .map(|&x| {
            modes
                .iter()
                .map(|&(k, a)| a * (k * std::f64::consts::PI * (x + grid.l) / (2.0 * grid.l)).sin())
                .sum()
        })
        .collect()
}

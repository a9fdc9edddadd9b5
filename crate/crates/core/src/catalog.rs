//! Built-in example instances and their self-checks.

use serde::Serialize;
use thiserror::Error;

use crate::alm::{alm_solve, default_probes, AlmConfig, AlmError, AlmTrace, Solution};
use crate::linalg::{self, LinalgError, LinearOperator, Matrix};
use crate::multipliers::{
    compatibility_consistency_check, essential_multiplier, normal_cone_candidates, proper_candidate_check, MultiplierError, CONE_CANDIDATES,
};
use crate::ocp::{eigen_example_check, OcpError};
use crate::problem::{ModelProblem, ProblemError, QuadraticObjective};
use crate::sets::{ConvexSet, SamplePlan, SetError};

pub const EXAMPLE_NAMES: [&str; 6] = ["ex1-k1", "ex1-k2", "ex2-k3", "ex2-k4", "alm-toy", "eigen"];

/// Candidate grid t ∈ {−2, −1.5, …, 2} for the (α, t) sweep on K₁.
pub const K1_SWEEP: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

/// The ex1 instances have no proper multiplier when α ≠ 0 and the iterates
/// approach u* = 0 only like (βk)^{-1/3}, so the run needs a very large β.
pub const EX1_BETA: f64 = 1e16;
pub const EX1_MAX_OUTER: usize = 2000;

pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown example '{0}'; known examples: {names}", names = EXAMPLE_NAMES.join(", "))]
    Unknown(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Alm(#[from] AlmError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, Default)]
pub struct ExampleParams {
    pub alpha: Option<f64>,
    pub r: Option<f64>,
    pub beta: Option<f64>,
    pub n: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExampleReport {
    pub name: String,
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
}

impl ExampleReport {
    fn new(name: &str) -> Self {
        ExampleReport { name: name.to_string(), lines: Vec::new(), checks: Vec::new() }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn check(&mut self, label: impl Into<String>, passed: bool) {
        self.checks.push(Check { label: label.into(), passed });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("== {} ==\n", self.name);
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        for c in &self.checks {
            out.push_str(&format!("[{}] {}\n", if c.passed { "ok" } else { "FAIL" }, c.label));
        }
        out
    }
}

/// θ(x) = ½(x₁ − α)² + ½x₂², S = diag(1, 0).
pub fn disk_problem(alpha: f64, set: ConvexSet) -> Result<ModelProblem, CatalogError> {
    let obj = QuadraticObjective::new(Matrix::identity(2), vec![alpha, 0.0], alpha * alpha / 2.0)?;
    let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]])?);
    Ok(ModelProblem::new(obj, s, set, Some(vec![0.0, 0.0]))?)
}

pub fn k1() -> ConvexSet {
    ConvexSet::ball(vec![0.0, 1.0], 1.0).expect("valid ball")
}

/// K₁ ∩ {ζ₁ ≤ ζ₂}
pub fn k2() -> ConvexSet {
    ConvexSet::intersection(vec![k1(), ConvexSet::halfspace(vec![1.0, -1.0], 0.0).expect("valid halfspace")]).expect("same dimension")
}

pub fn k3(r: f64) -> Result<ConvexSet, CatalogError> {
    Ok(ConvexSet::ball(vec![r, 0.0], r)?)
}

/// K₃ ∩ {ζ₂ ≥ 0}
pub fn k4(r: f64) -> Result<ConvexSet, CatalogError> {
    Ok(ConvexSet::intersection(vec![k3(r)?, ConvexSet::halfspace(vec![0.0, -1.0], 0.0)?])?)
}

/// θ(x) = ½x², S = (1, 2)ᵀ, K = {(1, 2)}.
pub fn alm_toy_problem() -> ModelProblem {
    let obj = QuadraticObjective::new(Matrix::identity(1), vec![0.0], 0.0).expect("valid objective");
    let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0], vec![2.0]]).expect("valid matrix"));
    ModelProblem::new(obj, s, ConvexSet::singleton(vec![1.0, 2.0]).expect("valid point"), None).expect("consistent shapes")
}

pub fn ex1_config(beta: f64) -> AlmConfig {
    AlmConfig { beta, max_outer: EX1_MAX_OUTER, tol_primal: 1e-13, tol_step: 1e-8, ..AlmConfig::default() }
}

pub fn alm_toy_config(beta: f64, steps: usize) -> AlmConfig {
    AlmConfig { beta, max_outer: steps, tol_primal: 1e-300, tol_step: 1e-300, ..AlmConfig::default() }
}

pub fn run_example(name: &str, params: &ExampleParams) -> Result<ExampleReport, CatalogError> {
    match name {
        "ex1-k1" => ex1(name, params, k1()),
        "ex1-k2" => ex1(name, params, k2()),
        "ex2-k3" | "ex2-k4" => ex2(name, params),
        "alm-toy" => alm_toy(params),
        "eigen" => eigen(params),
        other => Err(CatalogError::Unknown(other.to_string())),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("({})", parts.join(", "))
}

fn positive(name: &str, x: f64) -> Result<f64, CatalogError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CatalogError::Invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<f64, CatalogError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CatalogError::Invalid(format!("{name} must be finite, got {x}")))
    }
}

fn solve_and_report(rep: &mut ExampleReport, p: &ModelProblem, cfg: &AlmConfig, u_star: &[f64]) -> Result<(Solution, AlmTrace), CatalogError> {
    let (sol, trace) = alm_solve(p, cfg, &default_probes(p.dim(), 0))?;
    let gap = linalg::dist(&sol.u_final, u_star);
    rep.line(format!(
        "ALM (beta = {:e}): u = {} after {} outer steps ({}), |u - u*| = {gap:.3e}",
        cfg.beta,
        fmt_vec(&sol.u_final),
        sol.outer_iterations,
        sol.termination.as_str()
    ));
    rep.check(format!("ALM iterate within 1e-6 of u* = {}", fmt_vec(u_star)), gap <= 1e-6);
    Ok((sol, trace))
}

fn ex1(name: &str, params: &ExampleParams, set: ConvexSet) -> Result<ExampleReport, CatalogError> {
    let alpha = finite("alpha", params.alpha.unwrap_or(1.0))?;
    let beta = positive("beta", params.beta.unwrap_or(EX1_BETA))?;
    let plan = SamplePlan { seed: params.seed, ..SamplePlan::default() };
    let p = disk_problem(alpha, set.clone())?;
    let u_star = [0.0, 0.0];
    let mut rep = ExampleReport::new(name);
    rep.line(format!("alpha = {alpha}, minimizer u* = (0, 0)"));
    solve_and_report(&mut rep, &p, &ex1_config(beta), &u_star)?;

    let ess = essential_multiplier(&p, &u_star, linalg::DEFAULT_RANK_TOL, &plan)?;
    let lam = ess.essential.clone().unwrap_or_default();
    rep.line(format!("essential multiplier = {}, stationarity residual {:.3e}", fmt_vec(&lam), ess.stationarity_residual));
    rep.check("essential multiplier equals (alpha, 0)", linalg::dist(&lam, &[alpha, 0.0]) <= RESIDUAL_TOL);

    if alpha == 0.0 {
        let a = proper_candidate_check(&p, &u_star, &[0.0, 0.0], RESIDUAL_TOL, &plan)?;
        rep.line("proper multiplier: (0, 0) exists");
        rep.check("(0, 0) passes the proper-multiplier test", a.passes);
        return Ok(rep);
    }

    if name == "ex1-k1" {
        let mut min_res = f64::INFINITY;
        let mut any_pass = false;
        for t in K1_SWEEP {
            let a = proper_candidate_check(&p, &u_star, &[alpha, t], RESIDUAL_TOL, &plan)?;
            min_res = min_res.min(a.normal_cone_residual);
            any_pass |= a.passes || a.normal_cone_residual <= 0.0;
        }
        rep.line(format!("candidates (alpha, t), t in [-2, 2]: smallest normal-cone residual {min_res:.3e}"));
        rep.line("proper multiplier: none");
        rep.check("every candidate (alpha, t) fails the normal-cone test", !any_pass);
        return Ok(rep);
    }

    let cands = normal_cone_candidates(&set, &u_star, CONE_CANDIDATES, params.seed);
    let mut consistent = 0;
    let mut constructed: Vec<Vec<f64>> = Vec::new();
    let mut constructed_ok = true;
    for c in cands.iter().filter(|c| linalg::norm(c) > 0.0) {
        let r = compatibility_consistency_check(&p, &u_star, &lam, c, &lam, RESIDUAL_TOL, &plan)?;
        if r.compatibility && r.consistency {
            consistent += 1;
            if let (Some(l), Some(chk)) = (r.constructed, r.constructed_check) {
                constructed_ok &= chk.passes;
                constructed.push(l);
            }
        }
    }
    rep.line(format!("{} normal-cone candidates sampled, {consistent} compatible and consistent", cands.len()));
    if alpha > 0.0 {
        if let Some(l) = constructed.first() {
            rep.line(format!("proper multiplier: constructed {}", fmt_vec(l)));
        }
        rep.check("a constructed candidate passes the proper-multiplier test", !constructed.is_empty() && constructed_ok);
    } else {
        rep.line("proper multiplier: none (consistency fails)");
        rep.check("consistency fails for every sampled candidate", consistent == 0);
    }
    Ok(rep)
}

fn ex2(name: &str, params: &ExampleParams) -> Result<ExampleReport, CatalogError> {
    let alpha = finite("alpha", params.alpha.unwrap_or(1.0))?;
    let r = positive("r", params.r.unwrap_or(0.25))?;
    let beta = positive("beta", params.beta.unwrap_or(1.0))?;
    let plan = SamplePlan { seed: params.seed, ..SamplePlan::default() };
    let set = if name == "ex2-k3" { k3(r)? } else { k4(r)? };
    let p = disk_problem(alpha, set)?;
    let u_star = [alpha.clamp(0.0, 2.0 * r), 0.0];
    let mut rep = ExampleReport::new(name);
    rep.line(format!("alpha = {alpha}, r = {r}, minimizer u* = {}", fmt_vec(&u_star)));
    solve_and_report(&mut rep, &p, &AlmConfig { beta, ..AlmConfig::default() }, &u_star)?;

    let ess = essential_multiplier(&p, &u_star, linalg::DEFAULT_RANK_TOL, &plan)?;
    let lam = ess.essential.clone().unwrap_or_default();
    let expected = [alpha - u_star[0], 0.0];
    rep.line(format!("essential multiplier = {}", fmt_vec(&lam)));
    rep.check(format!("essential multiplier equals {}", fmt_vec(&expected)), linalg::dist(&lam, &expected) <= RESIDUAL_TOL);

    let (passing, failing): (Vec<f64>, Vec<f64>) = if name == "ex2-k3" { (vec![0.0], vec![0.1, -0.1]) } else { (vec![0.0, -0.1, -0.5], vec![0.1]) };
    for t in passing {
        let a = proper_candidate_check(&p, &u_star, &[expected[0], t], RESIDUAL_TOL, &plan)?;
        rep.line(format!(
            "candidate ({:.4}, {t}): stationarity {:.3e}, normal cone {:.3e}, restriction gap {:.3e}",
            expected[0], a.stationarity_residual, a.normal_cone_residual, a.restriction_gap
        ));
        let small = a.stationarity_residual <= RESIDUAL_TOL && a.normal_cone_residual <= RESIDUAL_TOL && a.restriction_gap <= RESIDUAL_TOL;
        rep.check(format!("({:.4}, {t}) is a proper multiplier", expected[0]), a.passes && small);
    }
    for t in failing {
        let a = proper_candidate_check(&p, &u_star, &[expected[0], t], RESIDUAL_TOL, &plan)?;
        rep.line(format!("candidate ({:.4}, {t}): normal cone {:.3e}", expected[0], a.normal_cone_residual));
        rep.check(format!("({:.4}, {t}) is rejected", expected[0]), !a.passes);
    }
    if name == "ex2-k3" {
        rep.line(format!("proper multiplier: {} (unique)", fmt_vec(&expected)));
    } else {
        rep.line(format!("proper multipliers: ({:.4}, t) for t <= 0", expected[0]));
    }
    Ok(rep)
}

fn alm_toy(params: &ExampleParams) -> Result<ExampleReport, CatalogError> {
    let beta = positive("beta", params.beta.unwrap_or(1.0))?;
    let p = alm_toy_problem();
    let (_, trace) = alm_solve(&p, &alm_toy_config(beta, 30), &default_probes(1, 0))?;
    let ratio = 1.0 / (1.0 + 5.0 * beta);
    let mut rep = ExampleReport::new("alm-toy");
    rep.line(format!("beta = {beta}, predicted contraction 1/(1 + 5 beta) = {ratio:.12}"));

    let x_off: Vec<f64> = trace.records.iter().map(|r| r.anchor_offset.as_ref().map_or(r.u[0] - 1.0, |o| o[0])).collect();
    let s_off: Vec<f64> = trace.records.iter().map(|r| r.anchor_gap.as_ref().map_or(r.lambda[0] + 2.0 * r.lambda[1] + 1.0, |g| g[0])).collect();
    let x_ratios: Vec<f64> = x_off.windows(2).take(20).map(|w| w[1] / w[0]).collect();
    let s_ratios: Vec<f64> = s_off.windows(2).take(20).map(|w| w[1] / w[0]).collect();
    let x_err = x_ratios.iter().map(|q| (q - ratio).abs()).fold(0.0, f64::max);
    let s_err = s_ratios.iter().map(|q| (q - ratio).abs()).fold(0.0, f64::max);
    rep.line(format!("first ratios (x - 1): {}", fmt_vec(&x_ratios[..3.min(x_ratios.len())])));
    rep.check(format!("20 ratios (x^(k+1) - 1)/(x^k - 1) within 1e-10 of {ratio:.6}, max error {x_err:.2e}"), x_ratios.len() == 20 && x_err <= 1e-10);
    rep.check(format!("20 ratios (s^(k+1) + 1)/(s^k + 1) within 1e-10, max error {s_err:.2e}"), s_ratios.len() == 20 && s_err <= 1e-10);
    let last = trace.records.last().map(|r| r.lambda[0] + 2.0 * r.lambda[1]).unwrap_or(f64::NAN);
    rep.line(format!("s after 30 steps = {last:.15}"));
    rep.check("|s^30 + 1| <= 1e-8", (last + 1.0).abs() <= 1e-8);
    let dists: Vec<f64> = s_off.iter().map(|s| s.abs() / 5f64.sqrt()).collect();
    rep.check("distance of lambda^k to the multiplier line decreases monotonically", dists.windows(2).all(|w| w[1] <= w[0]));
    let ess = essential_multiplier(&p, &[1.0], linalg::DEFAULT_RANK_TOL, &SamplePlan { seed: params.seed, ..SamplePlan::default() })?;
    let lam = ess.essential.unwrap_or_default();
    rep.line(format!("essential multiplier = {}", fmt_vec(&lam)));
    rep.check("essential multiplier equals -(1, 2)/5", linalg::dist(&lam, &[-0.2, -0.4]) <= 1e-10);
    Ok(rep)
}

fn eigen(params: &ExampleParams) -> Result<ExampleReport, CatalogError> {
    let n = params.n.unwrap_or(63);
    let r = eigen_example_check(n, 1e-14)?;
    let mut rep = ExampleReport::new("eigen");
    rep.line(format!("n = {n}, h = {:.6e}", r.h));
    rep.line(format!("mu1 = {:.15}, closed form {:.15}, |mu1 - pi^2| = {:.3e}", r.mu1, r.mu1_closed_form, r.continuum_gap));
    rep.line(format!("surrogate KKT at lambda = -mu1: stationarity {:.3e}, complementarity {:.3e}", r.stationarity_residual, r.complementarity_residual));
    rep.check("stationarity residual <= 1e-8", r.stationarity_residual <= 1e-8);
    rep.check("eigenvalue matches (2/h^2)(1 - cos(pi h)) to 1e-10", r.eigenvalue_error <= 1e-10);
    Ok(rep)
}

//! Classical augmented Lagrangian method with trace recording and
//! convergence monitors.
//!
//! Outer step: (u, ζ) = argmin L_β(u, ζ; λ), then λ ← λ + β(Su − ζ).
//! The joint minimization is reduced to u alone:
//! F_β(u) = θ(u) + (β/2)·dist²(Su + λ/β, K).

use std::cell::OnceCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, cholesky, dot, norm, norm_sq, solve_spd, Cholesky, LinalgError, Matrix};
use crate::problem::{ModelProblem, ProblemError};
use crate::sets::{sample_points_near, ConvexSet, SamplePlan, SampleStrategy, SetError, PROJECTION_TOL};

/// Newton is used only up to this many unknowns (dense Hessians).
const NEWTON_MAX_DIM: usize = 512;
const STALL_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerConfig {
    pub max_iter: usize,
    pub tol_grad_abs: f64,
    /// Outer step j uses tol_grad_abs / j^p.
    pub tol_tighten_exponent: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig { max_iter: 100_000, tol_grad_abs: 1e-10, tol_tighten_exponent: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmConfig {
    pub beta: f64,
    /// λ¹; zero when `None`.
    pub lambda0: Option<Vec<f64>>,
    pub max_outer: usize,
    pub tol_primal: f64,
    pub tol_step: f64,
    pub inner: InnerConfig,
}

impl Default for AlmConfig {
    fn default() -> Self {
        AlmConfig { beta: 1.0, lambda0: None, max_outer: 500, tol_primal: 1e-8, tol_step: 1e-8, inner: InnerConfig::default() }
    }
}

impl AlmConfig {
    pub fn validate(&self, constraint_dim: usize) -> Result<(), AlmError> {
        let bad = |m: &str| Err(AlmError::Config(m.to_string()));
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad("beta must be positive and finite");
        }
        if !(self.tol_primal > 0.0) || !(self.tol_step > 0.0) || !(self.inner.tol_grad_abs > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer == 0 || self.inner.max_iter == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.inner.tol_tighten_exponent >= 0.0) {
            return bad("tolerance exponent must be nonnegative");
        }
        if let Some(l) = &self.lambda0 {
            if l.len() != constraint_dim {
                return Err(AlmError::Problem(ProblemError::Dimension { what: "lambda0", expected: constraint_dim, got: l.len() }));
            }
        }
        Ok(())
    }

    /// Inner gradient tolerance at outer step j ≥ 1.
    pub fn inner_tolerance(&self, j: usize) -> f64 {
        self.inner.tol_grad_abs / (j.max(1) as f64).powf(self.inner.tol_tighten_exponent)
    }
}

#[derive(Debug, Error)]
pub enum InnerError {
    #[error("inner solver hit {iterations} iterations with gradient norm {grad_norm:e}")]
    MaxIterations { iterations: usize, grad_norm: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Error)]
pub enum AlmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("outer step {outer}: {source}")]
    Inner { outer: usize, source: InnerError, trace: Box<AlmTrace> },
    #[error("feasibility suspect: residual stalled at {r_norm:e} for {window} outer steps")]
    FeasibilitySuspect { r_norm: f64, window: usize, trace: Box<AlmTrace> },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Set(#[from] SetError),
}

impl AlmError {
    /// The partial trace recorded before the failure, if any.
    pub fn trace(&self) -> Option<&AlmTrace> {
        match self {
            AlmError::Inner { trace, .. } | AlmError::FeasibilitySuspect { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerMethod {
    /// K is a single point: one SPD solve.
    Exact,
    SemismoothNewton,
    GradientDescent,
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    pub u: Vec<f64>,
    pub zeta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub method: InnerMethod,
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
    scale: f64,
    /// β‖w‖: rounding in w = Su + λ/β is amplified by β in the gradient
    noise: f64,
}

/// Reusable minimizer of F_β for a fixed problem and β.
pub struct InnerSolver<'a> {
    problem: &'a ModelProblem,
    beta: f64,
    singleton: Option<(Vec<f64>, Cholesky, Matrix)>,
    dense: Option<(Matrix, Matrix)>,
    lipschitz: OnceCell<f64>,
}

impl<'a> InnerSolver<'a> {
    pub fn new(problem: &'a ModelProblem, beta: f64) -> Result<Self, InnerError> {
        let n = problem.dim();
        let m = problem.constraint_dim();
        let mut singleton = None;
        let mut dense = None;
        if n <= NEWTON_MAX_DIM {
            let q = problem.objective.dense_q();
            let s = problem.operator.to_dense();
            if let Some(point) = problem.set.singleton_point() {
                let mut h = s.gram().scaled(beta);
                h.add_assign(&q, 1.0)?;
                let c = cholesky(&h)?;
                singleton = Some((point, c, h));
            } else if problem.set.projection_jacobian(&vec![0.0; m]).is_some() {
                dense = Some((q, s));
            }
        }
        Ok(InnerSolver { problem, beta, singleton, dense, lipschitz: OnceCell::new() })
    }

    pub fn method(&self) -> InnerMethod {
        if self.singleton.is_some() {
            InnerMethod::Exact
        } else if self.dense.is_some() {
            InnerMethod::SemismoothNewton
        } else {
            InnerMethod::GradientDescent
        }
    }

    /// The Cholesky factor of Q + βS*S for singleton K.
    fn singleton_parts(&self) -> Option<&(Vec<f64>, Cholesky, Matrix)> {
        self.singleton.as_ref()
    }

    fn lipschitz(&self) -> Result<f64, InnerError> {
        if let Some(l) = self.lipschitz.get() {
            return Ok(*l);
        }
        let l = self.problem.objective.largest_eigenvalue()? + self.beta * self.problem.operator.norm_sq()?;
        Ok(*self.lipschitz.get_or_init(|| l))
    }

    fn eval(&self, u: &[f64], lambda: &[f64]) -> Result<Eval, InnerError> {
        let p = self.problem;
        let su = p.operator.apply(u)?;
        let w: Vec<f64> = su.iter().zip(lambda).map(|(s, l)| s + l / self.beta).collect();
        let proj = p.set.project(&w, PROJECTION_TOL)?;
        let diff = linalg::sub(&w, &proj);
        let qu = p.objective.apply_q(u)?;
        let value = 0.5 * dot(u, &qu) - dot(p.objective.linear(), u) + p.objective.constant() + 0.5 * self.beta * norm_sq(&diff);
        let pen = p.operator.apply_adjoint(&diff)?;
        let grad: Vec<f64> = (0..u.len()).map(|i| qu[i] - p.objective.linear()[i] + self.beta * pen[i]).collect();
        let scale = norm(&qu) + norm(p.objective.linear()) + self.beta * norm(&pen);
        let noise = self.beta * norm(&w);
        Ok(Eval { value, grad, w, p: proj, scale, noise })
    }

    /// Tolerance actually enforced: `tol` or the rounding floor of the
    /// gradient evaluation, whichever is larger.
    fn effective_tol(tol: f64, e: &Eval) -> f64 {
        tol.max(1e3 * f64::EPSILON * (1.0 + e.scale)).max(16.0 * f64::EPSILON * e.noise)
    }

    pub fn solve(&self, lambda: &[f64], warm: &[f64], tol: f64, max_iter: usize) -> Result<InnerResult, InnerError> {
        if let Some((point, chol, h)) = &self.singleton {
            let p = self.problem;
            let mut rhs: Vec<f64> = point.iter().zip(lambda).map(|(z, l)| self.beta * z - l).collect();
            rhs = p.operator.apply_adjoint(&rhs)?;
            linalg::axpy(1.0, p.objective.linear(), &mut rhs);
            let u = refine(chol, h, &rhs)?;
            let e = self.eval(&u, lambda)?;
            return Ok(InnerResult { u, zeta: point.clone(), iterations: 1, grad_norm: norm(&e.grad), method: InnerMethod::Exact });
        }
        let mut u = warm.to_vec();
        let mut used = 0;
        if let Some((q, s)) = &self.dense {
            match self.newton(q, s, lambda, &mut u, tol, max_iter)? {
                NewtonOutcome::Converged(r) => return Ok(r),
                NewtonOutcome::Stalled(iters) => used = iters,
            }
        }
        self.gradient_descent(lambda, u, tol, max_iter.saturating_sub(used), used)
    }

    fn newton(&self, q: &Matrix, s: &Matrix, lambda: &[f64], u: &mut Vec<f64>, tol: f64, max_iter: usize) -> Result<NewtonOutcome, InnerError> {
        let set = &self.problem.set;
        let mut e = self.eval(u, lambda)?;
        for it in 0..max_iter {
            let gn = norm(&e.grad);
            if gn <= Self::effective_tol(tol, &e) {
                return Ok(NewtonOutcome::Converged(InnerResult {
                    u: u.clone(),
                    zeta: e.p,
                    iterations: it,
                    grad_norm: gn,
                    method: InnerMethod::SemismoothNewton,
                }));
            }
            let mut h = match set.projection_jacobian_diagonal(&e.w) {
                Some(d) => {
                    let wts: Vec<f64> = d.iter().map(|j| self.beta * (1.0 - j)).collect();
                    s.weighted_gram(Some(&wts))
                }
                None => {
                    let Some(j) = set.projection_jacobian(&e.w) else { return Ok(NewtonOutcome::Stalled(it)) };
                    let mut ij = Matrix::identity(j.rows());
                    ij.add_assign(&j, -1.0)?;
                    s.transpose().matmul(&ij.matmul(s)?)?.scaled(self.beta)
                }
            };
            h.add_assign(q, 1.0)?;
            let minus_g = linalg::scale(&e.grad, -1.0);
            let d = match solve_spd(&h, &minus_g) {
                Ok(d) => d,
                Err(_) => return Ok(NewtonOutcome::Stalled(it)),
            };
            let slope = dot(&e.grad, &d);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let et = self.eval(&trial, lambda)?;
                if et.value <= e.value + 1e-4 * t * slope || norm(&et.grad) <= 0.5 * gn {
                    *u = trial;
                    e = et;
                    break;
                }
                t *= 0.5;
                if t < 1e-10 {
                    return Ok(NewtonOutcome::Stalled(it + 1));
                }
            }
        }
        Ok(NewtonOutcome::Stalled(max_iter))
    }

    fn gradient_descent(&self, lambda: &[f64], mut u: Vec<f64>, tol: f64, max_iter: usize, offset: usize) -> Result<InnerResult, InnerError> {
        let step = 1.0 / self.lipschitz()?;
        let mut e = self.eval(&u, lambda)?;
        for it in 0..=max_iter {
            let gn = norm(&e.grad);
            if gn <= Self::effective_tol(tol, &e) {
                return Ok(InnerResult { u, zeta: e.p, iterations: offset + it, grad_norm: gn, method: InnerMethod::GradientDescent });
            }
            if it == max_iter {
                return Err(InnerError::MaxIterations { iterations: offset + max_iter, grad_norm: gn });
            }
            linalg::axpy(-step, &e.grad, &mut u);
            e = self.eval(&u, lambda)?;
        }
        unreachable!()
    }
}

enum NewtonOutcome {
    Converged(InnerResult),
    Stalled(usize),
}

fn refine(chol: &Cholesky, a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let mut x = chol.solve(b)?;
    let ax = a.matvec(&x)?;
    let r = linalg::sub(b, &ax);
    let dx = chol.solve(&r)?;
    linalg::axpy(1.0, &dx, &mut x);
    Ok(x)
}

/// One joint minimization of the augmented Lagrangian for fixed λ.
pub fn inner_solve(
    problem: &ModelProblem,
    lambda: &[f64],
    beta: f64,
    warm_start: &[f64],
    tol_grad: f64,
    max_iter: usize,
) -> Result<InnerResult, InnerError> {
    if !(tol_grad > 0.0) {
        return Err(InnerError::Set(SetError::Invalid("tol_grad must be positive".into())));
    }
    InnerSolver::new(problem, beta)?.solve(lambda, warm_start, tol_grad, max_iter)
}

/// State after outer step k (λ^k is the post-update multiplier).
#[derive(Clone, Debug, PartialEq)]
pub struct AlmRecord {
    pub k: usize,
    pub u: Vec<f64>,
    pub zeta: Vec<f64>,
    pub lambda: Vec<f64>,
    /// r^k = Su^k − ζ^k
    pub residual: Vec<f64>,
    pub r_norm: f64,
    pub step_norm: f64,
    pub objective: f64,
    pub lambda_norm: f64,
    /// Fejér slack against the previous record; `None` for the first.
    pub fejer_slack: Option<f64>,
    pub probe_values: Vec<f64>,
    pub inner_iterations: usize,
    pub inner_grad_norm: f64,
    pub inner_tol: f64,
    /// u^k − û for the anchored singleton path.
    pub anchor_offset: Option<Vec<f64>>,
    /// Dθ(û) + S*λ^k for the anchored singleton path.
    pub anchor_gap: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmTrace {
    pub beta: f64,
    pub c0: f64,
    pub lambda_initial: Vec<f64>,
    pub u_initial: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    pub records: Vec<AlmRecord>,
    pub method: Option<InnerMethod>,
}

impl AlmTrace {
    pub fn last(&self) -> Option<&AlmRecord> {
        self.records.last()
    }

    /// λ^{k+1} == λ^k + β·r^{k+1} bitwise for every step, starting from λ¹.
    pub fn lambda_update_identity_holds(&self) -> bool {
        let mut prev = &self.lambda_initial;
        for r in &self.records {
            let ok = r.lambda.iter().zip(prev).zip(&r.residual).all(|((ln, lp), ri)| *ln == *lp + self.beta * *ri);
            if !ok {
                return false;
            }
            prev = &r.lambda;
        }
        true
    }

    pub fn max_inner_tol(&self) -> f64 {
        self.records.iter().map(|r| r.inner_tol).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxOuterIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxOuterIterations => "max_outer_iterations",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub u_final: Vec<f64>,
    pub zeta_final: Vec<f64>,
    pub lambda_final: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    pub outer_iterations: usize,
}

/// Canonical basis for dim ≤ 16, otherwise 8 seeded random unit vectors.
pub fn default_probes(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim <= 16 {
        return (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    random_probes(dim, 8, seed)
}

pub fn random_probes(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&v);
            if n > 1e-3 {
                break linalg::scale(&v, 1.0 / n);
            }
        })
        .collect()
}

/// Feasible anchor for the singleton path: the witness or the min-norm
/// solution of Sû = ζ̂.
fn singleton_anchor(problem: &ModelProblem, point: &[f64]) -> Result<Option<Vec<f64>>, AlmError> {
    let s = &problem.operator;
    let candidate = match &problem.witness {
        Some(w) => w.clone(),
        None => {
            let sol = linalg::min_norm_solve(&s.gram_dense(), &s.apply_adjoint(point)?, linalg::DEFAULT_RANK_TOL)?;
            sol.y
        }
    };
    let gap = linalg::dist(&s.apply(&candidate)?, point);
    Ok((gap <= 1e-12 * (1.0 + norm(point))).then_some(candidate))
}

fn fejer_slack(prev: &AlmRecord, r: &[f64], u: &[f64], c0: f64, beta: f64) -> f64 {
    let dr = linalg::dist(r, &prev.residual);
    let du = linalg::dist(u, &prev.u);
    norm_sq(r) - prev.r_norm * prev.r_norm + dr * dr + 2.0 * c0 / beta * du * du
}

/// Runs the classical ALM from the witness (or zero) with λ¹ = cfg.lambda0.
pub fn alm_solve(problem: &ModelProblem, cfg: &AlmConfig, probes: &[Vec<f64>]) -> Result<(Solution, AlmTrace), AlmError> {
    let n = problem.dim();
    let m = problem.constraint_dim();
    cfg.validate(m)?;
    if let Some(p) = probes.iter().find(|p| p.len() != n) {
        return Err(AlmError::Problem(ProblemError::Dimension { what: "probe", expected: n, got: p.len() }));
    }
    let beta = cfg.beta;
    let s = &problem.operator;
    let probe_images = probes.iter().map(|v| s.apply(v)).collect::<Result<Vec<_>, _>>()?;
    let solver = InnerSolver::new(problem, beta).map_err(|e| AlmError::Inner {
        outer: 0,
        source: e,
        trace: Box::new(empty_trace(problem, cfg, probes)),
    })?;
    let mut trace = empty_trace(problem, cfg, probes);
    trace.method = Some(solver.method());
    let mut lambda = trace.lambda_initial.clone();
    let mut u_prev = trace.u_initial.clone();

    // anchored singleton state: δ = u − û, σ = Dθ(û) + S*λ
    let mut anchored = None;
    if let Some((point, chol, h)) = solver.singleton_parts() {
        if let Some(u_hat) = singleton_anchor(problem, point)? {
            let e0 = linalg::sub(&s.apply(&u_hat)?, point);
            let mut sigma = problem.objective.gradient(&u_hat)?;
            linalg::axpy(1.0, &s.apply_adjoint(&lambda)?, &mut sigma);
            anchored = Some((u_hat, e0, sigma, chol, h));
        }
    }

    let mut termination = Termination::MaxOuterIterations;
    for j in 1..=cfg.max_outer {
        let tol = cfg.inner_tolerance(j);
        let (u, zeta, r, lambda_next, iters, gnorm, offset, gap) = if let Some((u_hat, e0, sigma, chol, h)) = anchored.as_mut() {
            let rhs = linalg::scale(sigma, -1.0);
            let delta = refine(chol, h, &rhs)?;
            let mut r = s.apply(&delta)?;
            linalg::axpy(1.0, e0, &mut r);
            let lambda_next: Vec<f64> = lambda.iter().zip(&r).map(|(l, ri)| l + beta * ri).collect();
            let br = linalg::scale(&r, beta);
            linalg::axpy(1.0, &s.apply_adjoint(&br)?, sigma);
            let u = linalg::add(u_hat, &delta);
            let gnorm = norm(sigma);
            let zeta = linalg::sub(&s.apply(&u)?, &r);
            (u, zeta, r, lambda_next, 1, gnorm, Some(delta), Some(sigma.clone()))
        } else {
            let res = match solver.solve(&lambda, &u_prev, tol, cfg.inner.max_iter) {
                Ok(res) => res,
                Err(e) => return Err(AlmError::Inner { outer: j, source: e, trace: Box::new(trace) }),
            };
            let su = s.apply(&res.u)?;
            let r = linalg::sub(&su, &res.zeta);
            let lambda_next: Vec<f64> = lambda.iter().zip(&r).map(|(l, ri)| l + beta * ri).collect();
            (res.u, res.zeta, r, lambda_next, res.iterations, res.grad_norm, None, None)
        };
        let r_norm = norm(&r);
        let step_norm = linalg::dist(&u, &u_prev);
        let fejer = trace.records.last().map(|p| fejer_slack(p, &r, &u, trace.c0, beta));
        let record = AlmRecord {
            k: j + 1,
            objective: problem.objective.value(&u)?,
            lambda_norm: norm(&lambda_next),
            probe_values: probe_images.iter().map(|sv| dot(&lambda_next, sv)).collect(),
            u,
            zeta,
            lambda: lambda_next,
            residual: r,
            r_norm,
            step_norm,
            fejer_slack: fejer,
            inner_iterations: iters,
            inner_grad_norm: gnorm,
            inner_tol: tol,
            anchor_offset: offset,
            anchor_gap: gap,
        };
        lambda = record.lambda.clone();
        u_prev = record.u.clone();
        trace.records.push(record);
        if r_norm <= cfg.tol_primal && step_norm <= cfg.tol_step {
            termination = Termination::Converged;
            break;
        }
        if let Some(stalled) = stalled_residual(&trace.records, cfg.tol_primal) {
            return Err(AlmError::FeasibilitySuspect { r_norm: stalled, window: STALL_WINDOW, trace: Box::new(trace) });
        }
    }
    let last = trace.records.last().expect("at least one outer step");
    let solution = Solution {
        u_final: last.u.clone(),
        zeta_final: last.zeta.clone(),
        lambda_final: last.lambda.clone(),
        converged: termination == Termination::Converged,
        termination,
        outer_iterations: trace.records.len(),
    };
    Ok((solution, trace))
}

fn empty_trace(problem: &ModelProblem, cfg: &AlmConfig, probes: &[Vec<f64>]) -> AlmTrace {
    AlmTrace {
        beta: cfg.beta,
        c0: problem.objective.strong_convexity(),
        lambda_initial: cfg.lambda0.clone().unwrap_or_else(|| vec![0.0; problem.constraint_dim()]),
        u_initial: problem.witness.clone().unwrap_or_else(|| vec![0.0; problem.dim()]),
        probes: probes.to_vec(),
        records: Vec::new(),
        method: None,
    }
}

/// Residual stuck above tolerance (relative drop < 1e-3 over the window)
/// while the primal steps keep shrinking.
fn stalled_residual(records: &[AlmRecord], tol: f64) -> Option<f64> {
    let n = records.len();
    if n <= STALL_WINDOW {
        return None;
    }
    let now = &records[n - 1];
    let then = &records[n - 1 - STALL_WINDOW];
    let stuck = now.r_norm > tol && now.r_norm >= (1.0 - 1e-3) * then.r_norm;
    let shrinking = now.step_norm <= then.step_norm;
    (stuck && shrinking).then_some(now.r_norm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FejerReport {
    /// (k, slack) for consecutive pairs (k−1, k).
    pub slacks: Vec<(usize, f64)>,
    pub max_slack: f64,
    pub within_slack: bool,
    pub partial_sums: Vec<f64>,
    pub nondecreasing: bool,
    /// Finite-run Cauchy proxy: the partial-sum increment over the last
    /// quarter is no larger than over the first quarter and at most a quarter
    /// of the total (or below `slack`).
    pub cauchy_within_run: bool,
    /// ‖r^k‖ nonincreasing up to `slack`.
    pub r_norm_monotone: bool,
}

pub fn convergence_monitors(trace: &AlmTrace, c0: f64, beta: f64, slack: f64) -> FejerReport {
    let recs = &trace.records;
    let mut slacks = Vec::new();
    for w in recs.windows(2) {
        slacks.push((w[1].k, fejer_slack(&w[0], &w[1].residual, &w[1].u, c0, beta)));
    }
    let max_slack = slacks.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut partial_sums = Vec::with_capacity(recs.len());
    let mut acc = 0.0;
    for r in recs {
        acc += r.r_norm * r.r_norm;
        partial_sums.push(acc);
    }
    let nondecreasing = partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let cauchy = if recs.len() < 4 {
        true
    } else {
        let q = recs.len() / 4;
        let total = *partial_sums.last().unwrap();
        let first = partial_sums[q] - partial_sums[0] + recs[0].r_norm.powi(2);
        let last = total - partial_sums[recs.len() - 1 - q];
        (last <= first + slack) && (last <= 0.25 * total || last <= slack)
    };
    let r_norm_monotone = recs.windows(2).all(|w| w[1].r_norm * w[1].r_norm <= w[0].r_norm * w[0].r_norm + slack);
    FejerReport {
        within_slack: slacks.iter().all(|s| s.1 <= slack),
        slacks,
        max_slack: if max_slack.is_finite() { max_slack } else { 0.0 },
        partial_sums,
        nondecreasing,
        cauchy_within_run: cauchy,
        r_norm_monotone,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BregmanReport {
    /// D_k per record.
    pub distances: Vec<f64>,
    /// Bregman increments between consecutive records.
    pub steps: Vec<f64>,
    pub min_distance: f64,
    /// Largest |D-step_k + β‖r^{k+1}‖² − (D_k − D_{k+1})|.
    pub max_step_identity_error: f64,
    /// |Σ (D-step_k + β‖r^{k+1}‖²) − (D_first − D_last)| over the run.
    pub telescoping_error: f64,
    /// Largest violation of the u-Cauchy bound over checked pairs (≤ 0 is good).
    pub cauchy_bound_violation: f64,
    pub nonnegative: bool,
    pub holds: bool,
}

/// Bregman distances to a feasible reference (û, ζ̂) and the telescoping
/// identity between consecutive records.
pub fn bregman_monitor(trace: &AlmTrace, problem: &ModelProblem, u_ref: &[f64], zeta_ref: &[f64], slack: f64) -> Result<BregmanReport, AlmError> {
    let s = &problem.operator;
    let gap = linalg::dist(&s.apply(u_ref)?, zeta_ref);
    if gap > 1e-9 || !problem.set.contains(zeta_ref, 1e-9)? {
        return Err(AlmError::Problem(ProblemError::InfeasibleWitness(gap.max(problem.set.distance(zeta_ref)?))));
    }
    let q = &problem.objective;
    let recs = &trace.records;
    let mut distances = Vec::with_capacity(recs.len());
    for r in recs {
        let d = linalg::sub(u_ref, &r.u);
        let qd = q.apply_q(&d)?;
        distances.push(0.5 * dot(&d, &qd) - dot(&r.lambda, &linalg::sub(zeta_ref, &r.zeta)));
    }
    let mut steps = Vec::new();
    let mut max_err = 0.0_f64;
    let mut lhs_sum = 0.0;
    for (i, w) in recs.windows(2).enumerate() {
        let du = linalg::sub(&w[1].u, &w[0].u);
        let qdu = q.apply_q(&du)?;
        let step = 0.5 * dot(&du, &qdu) - dot(&w[0].lambda, &linalg::sub(&w[1].zeta, &w[0].zeta));
        let lhs = step + trace.beta * w[1].r_norm * w[1].r_norm;
        max_err = max_err.max((lhs - (distances[i] - distances[i + 1])).abs());
        lhs_sum += lhs;
        steps.push(step);
    }
    let telescoping_error = if recs.len() >= 2 { (lhs_sum - (distances[0] - distances[recs.len() - 1])).abs() } else { 0.0 };
    let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);

    // (c₀/2)‖u^k − u^n‖² ≤ β Σ_{i=n}^{k} ‖r^i‖² + |D_k − D_n| + slack
    let n_rec = recs.len();
    let stride = (n_rec / 200).max(1);
    let mut prefix = vec![0.0; n_rec + 1];
    for (i, r) in recs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + r.r_norm * r.r_norm;
    }
    let mut viol = f64::NEG_INFINITY;
    for a in (0..n_rec).step_by(stride) {
        for b in (a + 1..n_rec).step_by(stride) {
            let lhs = 0.5 * trace.c0 * linalg::dist(&recs[a].u, &recs[b].u).powi(2);
            let rhs = trace.beta * (prefix[b + 1] - prefix[a]) + (distances[b] - distances[a]).abs();
            viol = viol.max(lhs - rhs - slack);
        }
    }
    let nonnegative = min_distance >= -slack;
    let holds = nonnegative && max_err <= slack && telescoping_error <= slack && !(viol > 0.0);
    Ok(BregmanReport {
        distances,
        steps,
        min_distance: if min_distance.is_finite() { min_distance } else { 0.0 },
        max_step_identity_error: max_err,
        telescoping_error,
        cauchy_bound_violation: if viol.is_finite() { viol } else { 0.0 },
        nonnegative,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WakktRow {
    pub k: usize,
    /// ⟨Dθ(u_f), v_j⟩ + ⟨λ^k, Sv_j⟩ per test direction.
    pub stationarity: Vec<f64>,
    /// max over sampled ζ of ⟨λ^k, ζ − Su_f⟩.
    pub complementarity: f64,
    /// max over v, ζ, t of ⟨Dθ(u_f), v⟩ + ⟨λ^k, Sv + t(ζ − Su_f)⟩.
    pub combined: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WakktReport {
    pub rows: Vec<WakktRow>,
    pub final_stationarity: f64,
    pub last_quarter_complementarity: f64,
    pub last_quarter_combined: f64,
}

/// Weak asymptotic KKT probes evaluated along the trace against the final
/// iterate u_f.
pub fn wakkt_residuals(
    problem: &ModelProblem,
    trace: &AlmTrace,
    test_dirs: &[Vec<f64>],
    plan: &SamplePlan,
    t_grid: &[f64],
) -> Result<WakktReport, AlmError> {
    let last = trace.records.last().ok_or_else(|| AlmError::Config("empty trace".into()))?;
    let s = &problem.operator;
    let g = problem.objective.gradient(&last.u)?;
    let su = s.apply(&last.u)?;
    let anchor = problem.set.project(&su, PROJECTION_TOL)?;
    let mut zetas = vec![anchor.clone()];
    for strategy in [SampleStrategy::BoundaryBiased, SampleStrategy::UniformThenProject] {
        zetas.extend(sample_points_near(&problem.set, &SamplePlan { strategy, ..*plan }, &anchor)?);
    }
    let dirs: Vec<(f64, Vec<f64>)> = test_dirs.iter().map(|v| Ok((dot(&g, v), s.apply(v)?))).collect::<Result<_, LinalgError>>()?;
    let diffs: Vec<Vec<f64>> = zetas.iter().map(|z| linalg::sub(z, &su)).collect();
    let mut rows = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let stationarity: Vec<f64> = dirs.iter().map(|(gv, sv)| gv + dot(&r.lambda, sv)).collect();
        let comps: Vec<f64> = diffs.iter().map(|d| dot(&r.lambda, d)).collect();
        let complementarity = comps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut combined = f64::NEG_INFINITY;
        for st in &stationarity {
            for &t in t_grid {
                combined = combined.max(st + t * complementarity);
            }
        }
        rows.push(WakktRow { k: r.k, stationarity, complementarity, combined });
    }
    let final_stationarity = rows.last().map_or(0.0, |r| r.stationarity.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    let start = rows.len() - rows.len().div_ceil(4);
    let tail = &rows[start..];
    Ok(WakktReport {
        final_stationarity,
        last_quarter_complementarity: tail.iter().map(|r| r.complementarity).fold(f64::NEG_INFINITY, f64::max),
        last_quarter_combined: tail.iter().map(|r| r.combined).fold(f64::NEG_INFINITY, f64::max),
        rows,
    })
}

/// Whole-space set of the right dimension (convenience for tests and CLI).
pub fn unconstrained(problem_dim: usize) -> ConvexSet {
    ConvexSet::unbounded(problem_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearOperator;
    use crate::problem::QuadraticObjective;

    fn toy() -> ModelProblem {
        let obj = QuadraticObjective::new(Matrix::identity(1), vec![0.0], 0.0).unwrap();
        let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        ModelProblem::new(obj, s, ConvexSet::singleton(vec![1.0, 2.0]).unwrap(), None).unwrap()
    }

    fn disk(alpha: f64) -> ModelProblem {
        let obj = QuadraticObjective::new(Matrix::identity(2), vec![alpha, 0.0], alpha * alpha / 2.0).unwrap();
        let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        ModelProblem::new(obj, s, ConvexSet::ball(vec![0.0, 1.0], 1.0).unwrap(), Some(vec![0.0, 0.0])).unwrap()
    }

    fn toy_cfg(steps: usize) -> AlmConfig {
        AlmConfig { max_outer: steps, tol_primal: 1e-300, tol_step: 1e-300, ..AlmConfig::default() }
    }

    /// Box-constrained QP with S = I solved by enumerating all
    /// lower/free/upper patterns and checking the KKT signs.
    fn box_oracle(q: &Matrix, b: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut best: Option<Vec<f64>> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut pat = vec![0u8; n];
            let mut c = code;
            for p in pat.iter_mut() {
                *p = (c % 3) as u8;
                c /= 3;
            }
            let mut u = vec![0.0; n];
            for i in 0..n {
                u[i] = match pat[i] {
                    1 => lo[i],
                    2 => hi[i],
                    _ => 0.0,
                };
            }
            let free: Vec<usize> = (0..n).filter(|&i| pat[i] == 0).collect();
            if !free.is_empty() {
                let rows: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| q.get(i, j)).collect()).collect();
                let rhs: Vec<f64> = free
                    .iter()
                    .map(|&i| b[i] - (0..n).filter(|j| pat[*j] != 0).map(|j| q.get(i, j) * u[j]).sum::<f64>())
                    .collect();
                let sol = solve_spd(&Matrix::from_rows(&rows).unwrap(), &rhs).unwrap();
                for (k, &i) in free.iter().enumerate() {
                    u[i] = sol[k];
                }
            }
            let g = linalg::sub(&q.matvec(&u).unwrap(), b);
            let ok = (0..n).all(|i| match pat[i] {
                0 => u[i] >= lo[i] - 1e-12 && u[i] <= hi[i] + 1e-12,
                1 => g[i] >= -1e-12,
                _ => g[i] <= 1e-12,
            });
            if ok {
                best = Some(u);
                break;
            }
        }
        best.expect("strongly convex box QP has a KKT point")
    }

    fn random_box_qp(seed: u64, n: usize) -> (ModelProblem, Matrix, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_rows(&(0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect::<Vec<_>>()).unwrap();
        let mut q = a.gram();
        q.add_diag(0.1);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let obj = QuadraticObjective::new(q.clone(), b.clone(), 0.0).unwrap();
        let p = ModelProblem::new(obj, LinearOperator::identity(n), ConvexSet::boxed(lo.clone(), hi.clone()).unwrap(), Some(vec![0.0; n])).unwrap();
        (p, q, b, lo, hi)
    }

    #[test]
    fn inner_exact_singleton_example() {
        let r = inner_solve(&toy(), &[0.0, 0.0], 1.0, &[0.0], 1e-12, 10).unwrap();
        assert!((r.u[0] - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.method, InnerMethod::Exact);
    }

    #[test]
    fn inner_unconstrained_gives_q_inverse_b() {
        let obj = QuadraticObjective::new(Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(), vec![1.0, -1.0], 0.0).unwrap();
        let p = ModelProblem::new(obj, LinearOperator::identity(2), ConvexSet::unbounded(2), None).unwrap();
        let lam = [0.3, -0.7];
        let r = inner_solve(&p, &lam, 2.0, &[0.0, 0.0], 1e-12, 1000).unwrap();
        let x = solve_spd(&p.objective.dense_q(), &[1.0, -1.0]).unwrap();
        assert!(linalg::dist(&r.u, &x) < 1e-11);
        let w: Vec<f64> = r.u.iter().zip(&lam).map(|(u, l)| u + l / 2.0).collect();
        assert!(linalg::dist(&r.zeta, &w) < 1e-12);
    }

    #[test]
    fn inner_gradient_tolerance_met() {
        let p = disk(1.0);
        let solver = InnerSolver::new(&p, 10.0).unwrap();
        let r = solver.solve(&[0.0, 0.0], &[0.0, 0.0], 1e-10, 10_000).unwrap();
        let e = solver.eval(&r.u, &[0.0, 0.0]).unwrap();
        assert!(norm(&e.grad) <= 1e-10);
        // the gradient-descent path on its own meets the same tolerance
        let g = solver.gradient_descent(&[0.0, 0.0], vec![0.0, 0.0], 1e-10, 100_000, 0).unwrap();
        assert!(g.grad_norm <= 1e-10);
        assert!(linalg::dist(&g.u, &r.u) < 1e-9);
    }

    #[test]
    fn toy_contraction_ratio() {
        let (_, trace) = alm_solve(&toy(), &toy_cfg(30), &default_probes(1, 0)).unwrap();
        assert_eq!(trace.records.len(), 30);
        for w in trace.records.windows(2).take(20) {
            let a = w[0].anchor_offset.as_ref().unwrap()[0];
            let b = w[1].anchor_offset.as_ref().unwrap()[0];
            assert!((b / a - 1.0 / 6.0).abs() < 1e-10, "{}", b / a);
        }
        assert!((trace.records[0].u[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!(trace.lambda_update_identity_holds());
    }

    #[test]
    fn optimal_start_converges_in_one_step() {
        let cfg = AlmConfig { lambda0: Some(vec![-0.2, -0.4]), ..AlmConfig::default() };
        let obj = QuadraticObjective::new(Matrix::identity(1), vec![0.0], 0.0).unwrap();
        let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let p = ModelProblem::new(obj, s, ConvexSet::singleton(vec![1.0, 2.0]).unwrap(), Some(vec![1.0])).unwrap();
        let (sol, _) = alm_solve(&p, &cfg, &[]).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.outer_iterations, 1);
    }

    #[test]
    fn toy_monitors() {
        let p = toy();
        let (_, trace) = alm_solve(&p, &toy_cfg(30), &default_probes(1, 0)).unwrap();
        let f = convergence_monitors(&trace, 1.0, 1.0, 1e-9);
        assert!(f.within_slack, "{}", f.max_slack);
        assert!(f.nondecreasing && f.cauchy_within_run);
        let b = bregman_monitor(&trace, &p, &[1.0], &[1.0, 2.0], 1e-8).unwrap();
        assert!(b.holds, "{b:?}");
        assert!(b.max_step_identity_error < 1e-12);
    }

    #[test]
    fn bregman_self_reference_has_zero_theta_part() {
        let p = toy();
        let (_, trace) = alm_solve(&p, &toy_cfg(5), &[]).unwrap();
        let r = &trace.records[2];
        let d = linalg::sub(&r.u, &r.u);
        assert_eq!(0.5 * dot(&d, &p.objective.apply_q(&d).unwrap()), 0.0);
        assert!(bregman_monitor(&trace, &p, &[0.0], &[0.0, 0.0], 1e-8).is_err());
    }

    #[test]
    fn single_record_monitor_is_empty() {
        let (_, trace) = alm_solve(&toy(), &toy_cfg(1), &[]).unwrap();
        let f = convergence_monitors(&trace, 1.0, 1.0, 1e-9);
        assert!(f.slacks.is_empty() && f.within_slack);
    }

    #[test]
    fn random_box_qps_match_oracle() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 5);
            let (p, q, b, lo, hi) = random_box_qp(seed, n);
            let (sol, trace) = alm_solve(&p, &AlmConfig::default(), &default_probes(n, seed)).unwrap();
            let oracle = box_oracle(&q, &b, &lo, &hi);
            assert!(sol.converged);
            assert!(linalg::dist(&sol.u_final, &oracle) < 1e-6, "seed {seed}");
            let slack = 10.0 * trace.max_inner_tol();
            let f = convergence_monitors(&trace, p.objective.strong_convexity(), 1.0, slack);
            assert!(f.within_slack, "seed {seed}: {}", f.max_slack);
            let br = bregman_monitor(&trace, &p, &oracle, &oracle, 1e-6).unwrap();
            assert!(br.holds, "seed {seed}: {br:?}");
            assert!(trace.lambda_update_identity_holds());
            for r in &trace.records {
                assert!(p.set.contains(&r.zeta, 1e-9).unwrap());
            }
        }
    }

    #[test]
    fn wakkt_trivial_and_toy() {
        let p = toy();
        let (_, trace) = alm_solve(&p, &toy_cfg(30), &[]).unwrap();
        let plan = SamplePlan::new(16, 0, SampleStrategy::UniformThenProject).unwrap();
        let w = wakkt_residuals(&p, &trace, &[vec![0.0]], &plan, &[0.0]).unwrap();
        assert!(w.rows.iter().all(|r| r.stationarity[0] == 0.0 && r.complementarity == 0.0 && r.combined == 0.0));
        let w = wakkt_residuals(&p, &trace, &[vec![1.0]], &plan, &[0.0, 1.0]).unwrap();
        for pair in w.rows.windows(2).take(12) {
            let ratio = pair[1].stationarity[0] / pair[0].stationarity[0];
            assert!((ratio - 1.0 / 6.0).abs() < 1e-6, "{ratio}");
        }
    }

    #[test]
    fn disk_complementarity_nonpositive() {
        let p = disk(1.0);
        let cfg = AlmConfig { max_outer: 400, ..AlmConfig::default() };
        let (_, trace) = alm_solve(&p, &cfg, &default_probes(2, 0)).unwrap();
        let w = wakkt_residuals(&p, &trace, &default_probes(2, 0), &SamplePlan::default(), &[0.0, 0.5, 1.0]).unwrap();
        assert!(w.last_quarter_complementarity <= 1e-6, "{}", w.last_quarter_complementarity);
        assert!(w.final_stationarity <= 1e-6);
    }

    #[test]
    fn probes_are_unit_and_deterministic() {
        let a = default_probes(20, 3);
        assert_eq!(a, default_probes(20, 3));
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|v| (norm(v) - 1.0).abs() < 1e-14));
        assert_eq!(default_probes(3, 0)[1], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let p = toy();
        let bad = AlmConfig { beta: 0.0, ..AlmConfig::default() };
        assert!(matches!(alm_solve(&p, &bad, &[]), Err(AlmError::Config(_))));
        let bad = AlmConfig { lambda0: Some(vec![0.0]), ..AlmConfig::default() };
        assert!(alm_solve(&p, &bad, &[]).is_err());
        assert!(inner_solve(&p, &[0.0, 0.0], 1.0, &[0.0], 0.0, 10).is_err());
    }

    #[test]
    fn infeasible_problem_flagged() {
        // Su = (u, u) must lie in {ζ₁ ≤ −1} ∩ {ζ₂ ≥ 1}: empty image
        let obj = QuadraticObjective::new(Matrix::identity(1), vec![0.0], 0.0).unwrap();
        let s = LinearOperator::Dense(Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let k = ConvexSet::boxed(vec![f64::NEG_INFINITY, 1.0], vec![-1.0, f64::INFINITY]).unwrap();
        let p = ModelProblem::new(obj, s, k, None).unwrap();
        let r = alm_solve(&p, &AlmConfig { max_outer: 300, ..AlmConfig::default() }, &[]);
        match r {
            Err(e @ AlmError::FeasibilitySuspect { .. }) => assert!(e.trace().unwrap().records.len() > STALL_WINDOW),
            other => panic!("{other:?}"),
        }
    }
}

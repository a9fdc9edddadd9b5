//! 1D Poisson optimal control with pointwise state or control bounds,
//! discretized by finite differences, and the discrete Dirichlet
//! eigenvalue example.
//!
//! Linear algebra uses the plain Euclidean inner product. The mesh weight h
//! enters only through reported norms sqrt(h·Σxᵢ²) and through G(u) = h·Σuᵢ².

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::alm::{alm_solve, default_probes, AlmConfig, AlmError};
use crate::linalg::{self, norm, LinalgError, LinearOperator, Matrix, TridiagonalSpd};
use crate::problem::{build_surrogate, surrogate_kkt_equivalence, ModelProblem, NonlinearProblemSpec, ProblemError, QuadraticObjective};
use crate::sets::{ConvexSet, SamplePlan, SetError};

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("invalid OCP spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Alm(#[from] AlmError),
}

/// Desired state y_d on the mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum DesiredState {
    /// amplitude·sin(πx)
    Sine { amplitude: f64 },
    Values(Vec<f64>),
}

/// A bound on the mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    Constant(f64),
    Values(Vec<f64>),
    /// factor · max of the corresponding unconstrained optimum (state or
    /// control), evaluated on the same mesh.
    FractionOfUnconstrainedMax(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    State { lower: Bound, upper: Bound },
    Control { lower: Bound, upper: Bound },
    Both { state_lower: Bound, state_upper: Bound, control_lower: Bound, control_upper: Bound },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpSpec {
    /// interior mesh points; h = 1/(n+1)
    pub n: usize,
    pub alpha: f64,
    pub y_d: DesiredState,
    pub constraint: ConstraintKind,
    /// S = [L; I] with K = Y_ad × U_ad, or the reduced S = L (state) / S = I (control).
    pub stacked: bool,
}

pub const DEFAULT_ALPHA: f64 = 1e-2;
pub const DEFAULT_AMPLITUDE: f64 = 4.0;
pub const DEFAULT_BOUND_FRACTION: f64 = 0.5;

impl OcpSpec {
    /// State-constrained template: y ≤ 0.5·max(unconstrained state).
    pub fn state_template(n: usize) -> Self {
        OcpSpec {
            n,
            alpha: DEFAULT_ALPHA,
            y_d: DesiredState::Sine { amplitude: DEFAULT_AMPLITUDE },
            constraint: ConstraintKind::State {
                lower: Bound::Constant(f64::NEG_INFINITY),
                upper: Bound::FractionOfUnconstrainedMax(DEFAULT_BOUND_FRACTION),
            },
            stacked: true,
        }
    }

    /// Control-constrained template: |u| ≤ 0.5·max(unconstrained control).
    pub fn control_template(n: usize) -> Self {
        OcpSpec {
            n,
            alpha: DEFAULT_ALPHA,
            y_d: DesiredState::Sine { amplitude: DEFAULT_AMPLITUDE },
            constraint: ConstraintKind::Control {
                lower: Bound::FractionOfUnconstrainedMax(-DEFAULT_BOUND_FRACTION),
                upper: Bound::FractionOfUnconstrainedMax(DEFAULT_BOUND_FRACTION),
            },
            stacked: true,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        OcpSpec { n, ..self.clone() }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn mesh(&self) -> Vec<f64> {
        let h = self.h();
        (1..=self.n).map(|i| i as f64 * h).collect()
    }

    pub fn validate(&self) -> Result<(), OcpError> {
        if self.n < 2 {
            return Err(OcpError::Invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(OcpError::Invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let DesiredState::Values(v) = &self.y_d {
            if v.len() != self.n {
                return Err(OcpError::Invalid(format!("y_d has {} values, mesh has {}", v.len(), self.n)));
            }
        }
        Ok(())
    }

    fn desired(&self) -> Vec<f64> {
        match &self.y_d {
            DesiredState::Sine { amplitude } => self.mesh().iter().map(|x| amplitude * (std::f64::consts::PI * x).sin()).collect(),
            DesiredState::Values(v) => v.clone(),
        }
    }
}

/// A built OCP instance with its block layout.
#[derive(Clone, Debug)]
pub struct OcpProblem {
    pub problem: ModelProblem,
    pub laplacian: TridiagonalSpd,
    pub h: f64,
    pub mesh: Vec<f64>,
    pub y_d: Vec<f64>,
    /// rows of λ holding the state multiplier
    pub state_block: Option<Range<usize>>,
    /// rows of λ holding the control multiplier
    pub control_block: Option<Range<usize>>,
}

impl OcpProblem {
    /// Discrete L² norm of a block of λ.
    pub fn block_norm(&self, lambda: &[f64], block: &Range<usize>) -> f64 {
        (self.h * linalg::norm_sq(&lambda[block.clone()])).sqrt()
    }

    pub fn state(&self, u: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.laplacian.solve(u)
    }
}

fn resolve(bound: &Bound, n: usize, reference: &dyn Fn() -> Result<f64, OcpError>) -> Result<Vec<f64>, OcpError> {
    match bound {
        Bound::Constant(c) => Ok(vec![*c; n]),
        Bound::Values(v) if v.len() == n => Ok(v.clone()),
        Bound::Values(v) => Err(OcpError::Invalid(format!("bound has {} values, mesh has {n}", v.len()))),
        Bound::FractionOfUnconstrainedMax(f) => Ok(vec![f * reference()?; n]),
    }
}

fn check_order(lo: &[f64], hi: &[f64], what: &str) -> Result<(), OcpError> {
    if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(OcpError::Invalid(format!("{what} lower bound exceeds upper bound")));
    }
    Ok(())
}

/// θ(u) = ½‖Lu − y_d‖² + (α/2)‖u‖² with L = T⁻¹, with the constraint chosen by `spec.constraint`.
pub fn build_ocp(spec: &OcpSpec) -> Result<OcpProblem, OcpError> {
    spec.validate()?;
    let n = spec.n;
    let t = TridiagonalSpd::dirichlet_laplacian(n)?;
    let l = LinearOperator::TridiagonalInverse(t.clone());
    let yd = spec.desired();
    let b = l.apply_adjoint(&yd)?;
    let objective = QuadraticObjective::gram(l.clone(), spec.alpha, b, 0.5 * linalg::norm_sq(&yd))?;

    let unconstrained = || -> Result<Vec<f64>, OcpError> { conjugate_gradient(&objective, objective.linear()) };
    let max_control = || Ok(unconstrained()?.into_iter().fold(f64::NEG_INFINITY, f64::max));
    let max_state = || Ok(t.solve(&unconstrained()?)?.into_iter().fold(f64::NEG_INFINITY, f64::max));

    let free = || ConvexSet::unbounded(n);
    let (y_set, u_set) = match &spec.constraint {
        ConstraintKind::State { lower, upper } => {
            let (lo, hi) = (resolve(lower, n, &max_state)?, resolve(upper, n, &max_state)?);
            check_order(&lo, &hi, "state")?;
            (Some(ConvexSet::boxed(lo, hi)?), None)
        }
        ConstraintKind::Control { lower, upper } => {
            let (lo, hi) = (resolve(lower, n, &max_control)?, resolve(upper, n, &max_control)?);
            check_order(&lo, &hi, "control")?;
            (None, Some(ConvexSet::boxed(lo, hi)?))
        }
        ConstraintKind::Both { state_lower, state_upper, control_lower, control_upper } => {
            let (a, bb) = (resolve(state_lower, n, &max_state)?, resolve(state_upper, n, &max_state)?);
            let (c, d) = (resolve(control_lower, n, &max_control)?, resolve(control_upper, n, &max_control)?);
            check_order(&a, &bb, "state")?;
            check_order(&c, &d, "control")?;
            (Some(ConvexSet::boxed(a, bb)?), Some(ConvexSet::boxed(c, d)?))
        }
    };
    let both = y_set.is_some() && u_set.is_some();
    let (operator, set, state_block, control_block) = if spec.stacked || both {
        let op = LinearOperator::stack(vec![l.clone(), LinearOperator::identity(n)])?;
        let k = ConvexSet::product(vec![y_set.unwrap_or_else(free), u_set.unwrap_or_else(free)])?;
        (op, k, Some(0..n), Some(n..2 * n))
    } else if let Some(y) = y_set {
        (l.clone(), y, Some(0..n), None)
    } else {
        (LinearOperator::identity(n), u_set.expect("control set"), None, Some(0..n))
    };
    let zero = vec![0.0; n];
    let witness = set.contains(&operator.apply(&zero)?, 0.0)?.then_some(zero);
    let problem = ModelProblem::new(objective, operator, set, witness)?;
    Ok(OcpProblem { problem, laplacian: t, h: spec.h(), mesh: spec.mesh(), y_d: yd, state_block, control_block })
}

/// Solves Qu = rhs by conjugate gradients. Q = L*L + αI has spectrum in
/// [α, α + ‖L‖²], so few iterations are needed.
fn conjugate_gradient(obj: &QuadraticObjective, rhs: &[f64]) -> Result<Vec<f64>, OcpError> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = linalg::norm_sq(&r);
    let stop = (1e-15 * norm(rhs)).powi(2);
    for _ in 0..10 * n.max(10) {
        if rr <= stop {
            return Ok(x);
        }
        let qp = obj.apply_q(&p)?;
        let a = rr / linalg::dot(&p, &qp);
        linalg::axpy(a, &p, &mut x);
        linalg::axpy(-a, &qp, &mut r);
        let rr_new = linalg::norm_sq(&r);
        p = r.iter().zip(&p).map(|(ri, pi)| ri + rr_new / rr * pi).collect();
        rr = rr_new;
    }
    Err(OcpError::Linalg(LinalgError::NoConvergence { iterations: 10 * n.max(10), best: rr.sqrt() }))
}

/// ALM settings that reach the multiplier accuracy the mesh study needs.
/// State constraints act through the smoothing L, so the dual is badly
/// conditioned at fine meshes and a large β is used.
pub fn recommended_config(spec: &OcpSpec) -> AlmConfig {
    let state = !matches!(spec.constraint, ConstraintKind::Control { .. });
    if state {
        AlmConfig { beta: 1e5, max_outer: 500, tol_primal: 1e-10, tol_step: 1e-10, ..AlmConfig::default() }
    } else {
        AlmConfig { beta: 10.0, max_outer: 500, tol_primal: 1e-10, tol_step: 1e-10, ..AlmConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshStudyRow {
    pub n: usize,
    pub h: f64,
    pub lambda_norm_state: Option<f64>,
    pub lambda_norm_control: Option<f64>,
    pub u_dist: Option<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Piecewise-linear interpolant of nodal values (zero Dirichlet ends) at x.
pub fn interpolate(mesh: &[f64], values: &[f64], x: f64) -> f64 {
    let n = mesh.len();
    let h = 1.0 / (n as f64 + 1.0);
    let s = x / h;
    let i = s.floor() as isize;
    let node = |k: isize| if k <= 0 || k as usize > n { 0.0 } else { values[k as usize - 1] };
    let w = s - i as f64;
    (1.0 - w) * node(i) + w * node(i + 1)
}

/// Solves the template on each mesh and reports block multiplier norms and
/// the distance of u to the finest-mesh solution.
pub fn mesh_refinement_study(template: &OcpSpec, meshes: &[usize], cfg: &AlmConfig) -> Result<Vec<MeshStudyRow>, OcpError> {
    if meshes.is_empty() || meshes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OcpError::Invalid("meshes must be nonempty and strictly increasing".into()));
    }
    let mut solved = Vec::with_capacity(meshes.len());
    for &n in meshes {
        let spec = template.with_n(n);
        let outcome = build_ocp(&spec).map_err(|e| e.to_string()).and_then(|ocp| {
            let probes = default_probes(n, 0);
            alm_solve(&ocp.problem, cfg, &probes).map(|(sol, _)| (ocp, sol)).map_err(|e| e.to_string())
        });
        solved.push((n, outcome));
    }
    let reference = match solved.last() {
        Some((_, Ok((ocp, sol)))) => Some((ocp.mesh.clone(), sol.u_final.clone())),
        _ => None,
    };
    Ok(solved
        .into_iter()
        .map(|(n, outcome)| {
            let h = 1.0 / (n as f64 + 1.0);
            match outcome {
                Ok((ocp, sol)) => {
                    let u_dist = reference.as_ref().map(|(fm, fu)| {
                        let diff: Vec<f64> = ocp.mesh.iter().zip(&sol.u_final).map(|(x, u)| u - interpolate(fm, fu, *x)).collect();
                        (h * linalg::norm_sq(&diff)).sqrt()
                    });
                    MeshStudyRow {
                        n,
                        h,
                        lambda_norm_state: ocp.state_block.as_ref().map(|b| ocp.block_norm(&sol.lambda_final, b)),
                        lambda_norm_control: ocp.control_block.as_ref().map(|b| ocp.block_norm(&sol.lambda_final, b)),
                        u_dist,
                        outer_iterations: sol.outer_iterations,
                        converged: sol.converged,
                        error: None,
                    }
                }
                Err(e) => MeshStudyRow {
                    n,
                    h,
                    lambda_norm_state: None,
                    lambda_norm_control: None,
                    u_dist: None,
                    outer_iterations: 0,
                    converged: false,
                    error: Some(e),
                },
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenReport {
    pub n: usize,
    pub h: f64,
    /// μ₁ from inverse iteration
    pub mu1: f64,
    /// 4/h²·sin²(πh/2)
    pub mu1_closed_form: f64,
    pub eigenvalue_error: f64,
    /// surrogate stationarity residual at λ = −μ₁
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    /// |μ₁ − π²|
    pub continuum_gap: f64,
}

/// f(u) = h·uᵀTu, G(u) = h·Σuᵢ², 𝒦 = {1}.
pub fn eigen_problem_spec(n: usize) -> Result<NonlinearProblemSpec, OcpError> {
    let t = TridiagonalSpd::dirichlet_laplacian(n)?;
    let h = 1.0 / (n as f64 + 1.0);
    let (t1, t2) = (t.clone(), t);
    Ok(NonlinearProblemSpec {
        f: Box::new(move |u| h * linalg::dot(u, &t1.apply(u).expect("dimension"))),
        grad_f: Box::new(move |u| linalg::scale(&t2.apply(u).expect("dimension"), 2.0 * h)),
        g: Box::new(move |u| vec![h * linalg::norm_sq(u)]),
        jac_g: Box::new(move |u| Matrix::from_row_major(1, u.len(), linalg::scale(u, 2.0 * h)).expect("shape")),
        constraint_set: ConvexSet::singleton(vec![1.0])?,
    })
}

/// First discrete Dirichlet eigenpair and the surrogate KKT residuals there.
pub fn eigen_example_check(n: usize, tol: f64) -> Result<EigenReport, OcpError> {
    if n < 3 {
        return Err(OcpError::Invalid(format!("eigen example needs n ≥ 3, got {n}")));
    }
    let t = TridiagonalSpd::dirichlet_laplacian(n)?;
    let h = 1.0 / (n as f64 + 1.0);
    let (mu, v) = t.smallest_eigenpair(tol, 100_000)?;
    let u = linalg::scale(&v, 1.0 / (h * linalg::norm_sq(&v)).sqrt());
    let spec = eigen_problem_spec(n)?;
    let ((stat, comp), _) = surrogate_kkt_equivalence(&spec, &u, &[-mu], &SamplePlan::default())?;
    let closed = 4.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
    Ok(EigenReport {
        n,
        h,
        mu1: mu,
        mu1_closed_form: closed,
        eigenvalue_error: (mu - closed).abs(),
        stationarity_residual: stat,
        complementarity_residual: comp,
        continuum_gap: (mu - std::f64::consts::PI.powi(2)).abs(),
    })
}

/// Surrogate of the eigen example at an arbitrary anchor; fails when the
/// anchor violates h·Σuᵢ² = 1.
pub fn eigen_surrogate_at(n: usize, u: &[f64]) -> Result<ModelProblem, OcpError> {
    let spec = eigen_problem_spec(n)?;
    let s = build_surrogate(&spec, u, crate::problem::DEFAULT_SURROGATE_CURVATURE)?;
    if !s.anchor_feasible {
        return Err(OcpError::Problem(ProblemError::InfeasibleWitness((spec.g)(u)[0] - 1.0)));
    }
    Ok(s.base)
}

/// sqrt(h·Σxᵢ²)
pub fn discrete_l2(x: &[f64], h: f64) -> f64 {
    h.sqrt() * norm(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn control_spec(n: usize, bound: f64) -> OcpSpec {
        OcpSpec {
            n,
            alpha: 1e-2,
            y_d: DesiredState::Sine { amplitude: 1.0 },
            constraint: ConstraintKind::Control { lower: Bound::Constant(-bound), upper: Bound::Constant(bound) },
            stacked: true,
        }
    }

    /// Projected gradient on the reduced control problem.
    fn projected_gradient(ocp: &OcpProblem, lo: f64, hi: f64) -> Vec<f64> {
        let obj = &ocp.problem.objective;
        let step = 1.0 / obj.largest_eigenvalue().unwrap();
        let mut u = vec![0.0; ocp.mesh.len()];
        for _ in 0..200_000 {
            let g = obj.gradient(&u).unwrap();
            let next: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| (x - step * gi).clamp(lo, hi)).collect();
            let d = linalg::dist(&next, &u);
            u = next;
            if d < 1e-15 {
                break;
            }
        }
        u
    }

    #[test]
    fn zero_data_converges_immediately() {
        let spec = OcpSpec { y_d: DesiredState::Values(vec![0.0; 3]), ..control_spec(3, 1.0) };
        let ocp = build_ocp(&spec).unwrap();
        let (sol, _) = alm_solve(&ocp.problem, &AlmConfig::default(), &[]).unwrap();
        assert!(sol.converged && sol.outer_iterations <= 3);
        assert!(norm(&sol.u_final) < 1e-12);
    }

    #[test]
    fn control_case_matches_projected_gradient() {
        let spec = control_spec(31, 0.3);
        let ocp = build_ocp(&spec).unwrap();
        let (sol, _) = alm_solve(&ocp.problem, &recommended_config(&spec), &[]).unwrap();
        let oracle = projected_gradient(&ocp, -0.3, 0.3);
        assert!(sol.converged);
        assert!(linalg::dist(&sol.u_final, &oracle) < 1e-6, "{}", linalg::dist(&sol.u_final, &oracle));
    }

    #[test]
    fn stacked_and_reduced_state_forms_agree() {
        let stacked = OcpSpec::state_template(15);
        let reduced = OcpSpec { stacked: false, ..stacked.clone() };
        let cfg = recommended_config(&stacked);
        let a = alm_solve(&build_ocp(&stacked).unwrap().problem, &cfg, &[]).unwrap().0;
        let b = alm_solve(&build_ocp(&reduced).unwrap().problem, &cfg, &[]).unwrap().0;
        assert!(linalg::dist(&a.u_final, &b.u_final) < 1e-8, "{}", linalg::dist(&a.u_final, &b.u_final));
    }

    #[test]
    fn state_multiplier_matches_stationarity() {
        let spec = OcpSpec::state_template(31);
        let ocp = build_ocp(&spec).unwrap();
        let (sol, _) = alm_solve(&ocp.problem, &recommended_config(&spec), &[]).unwrap();
        // Qu − b + Lλ_y + λ_u = 0 with λ_u = 0 gives λ_y = −T(Qu − b)
        let g = ocp.problem.objective.gradient(&sol.u_final).unwrap();
        let lam_y = linalg::scale(&ocp.laplacian.apply(&g).unwrap(), -1.0);
        let block = &sol.lambda_final[0..31];
        assert!(linalg::dist(&lam_y, block) <= 1e-6 * (1.0 + norm(block)));
        assert!(sol.lambda_final[31..].iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn maximum_principle_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [15, 31] {
            let ocp = build_ocp(&OcpSpec::state_template(n)).unwrap();
            let l = LinearOperator::TridiagonalInverse(ocp.laplacian.clone());
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                assert!(l.apply(&x).unwrap().iter().all(|v| *v >= 0.0));
                let y: Vec<f64> = (0..ocp.problem.constraint_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s = &ocp.problem.operator;
                let lhs = linalg::dot(&s.apply(&x).unwrap(), &y);
                let rhs = linalg::dot(&x, &s.apply_adjoint(&y).unwrap());
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn inactive_bounds_give_zero_multiplier() {
        let spec = OcpSpec {
            constraint: ConstraintKind::Control { lower: Bound::Constant(-100.0), upper: Bound::Constant(100.0) },
            ..OcpSpec::control_template(15)
        };
        let rows = mesh_refinement_study(&spec, &[7, 15], &AlmConfig::default()).unwrap();
        for r in rows {
            assert!(r.lambda_norm_control.unwrap() <= 1e-6);
            assert!(r.lambda_norm_state.unwrap() <= 1e-6);
        }
    }

    #[test]
    fn study_rejects_unsorted_meshes() {
        assert!(mesh_refinement_study(&OcpSpec::control_template(7), &[15, 7], &AlmConfig::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(build_ocp(&OcpSpec { n: 1, ..OcpSpec::control_template(1) }).is_err());
        assert!(build_ocp(&OcpSpec { alpha: 0.0, ..OcpSpec::control_template(5) }).is_err());
        let bad = OcpSpec {
            constraint: ConstraintKind::Control { lower: Bound::Constant(1.0), upper: Bound::Constant(-1.0) },
            ..OcpSpec::control_template(5)
        };
        assert!(build_ocp(&bad).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes_and_lines() {
        let mesh: Vec<f64> = (1..=7).map(|i| i as f64 / 8.0).collect();
        let vals: Vec<f64> = mesh.iter().map(|x| x * (1.0 - x)).collect();
        for (x, v) in mesh.iter().zip(&vals) {
            assert!((interpolate(&mesh, &vals, *x) - v).abs() < 1e-15);
        }
        let mid = interpolate(&mesh, &vals, 1.5 / 8.0);
        assert!((mid - 0.5 * (vals[0] + vals[1])).abs() < 1e-15);
        assert!(interpolate(&mesh, &vals, 1.0 / 16.0) - 0.5 * vals[0] < 1e-15);
    }

    #[test]
    fn eigen_examples() {
        let r = eigen_example_check(63, 1e-14).unwrap();
        assert!(r.stationarity_residual <= 1e-8, "{r:?}");
        let h = r.h;
        let closed = 2.0 / (h * h) * (1.0 - (std::f64::consts::PI * h).cos());
        assert!((r.mu1 - closed).abs() <= 1e-10, "{}", (r.mu1 - closed).abs());
        assert!(r.continuum_gap < 1e-2);
        let r = eigen_example_check(3, 1e-14).unwrap();
        // eigenvalues of tridiag(-1,2,-1)/h² for n = 3: (2 − √2)/h²
        assert!((r.mu1 - (2.0 - 2f64.sqrt()) * 16.0).abs() < 1e-12);
        assert!(r.stationarity_residual <= 1e-10);
    }

    #[test]
    fn eigen_surrogate_offset_and_scaled_anchor() {
        let n = 15;
        let t = TridiagonalSpd::dirichlet_laplacian(n).unwrap();
        let h = 1.0 / 16.0;
        let (_, v) = t.smallest_eigenpair(1e-14, 10_000).unwrap();
        let u = linalg::scale(&v, 1.0 / (h * linalg::norm_sq(&v)).sqrt());
        let p = eigen_surrogate_at(n, &u).unwrap();
        assert!((p.set.singleton_point().unwrap()[0] - 2.0).abs() < 1e-12);
        assert!(eigen_surrogate_at(n, &linalg::scale(&u, 1.5)).is_err());
    }
}

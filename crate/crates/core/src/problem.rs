//! Model problem min θ(u) s.t. Su ∈ K, nonlinear problem specs and the
//! surrogate model built at a candidate point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, dot, norm, symmetric_eigen, LinalgError, LinearOperator, Matrix};
use crate::sets::{normal_cone_residual, ConvexSet, SamplePlan, SetError};

/// Feasibility tolerance for witnesses and anchors.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("Q must be symmetric (max |Q_ij - Q_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("Q must be positive definite (smallest eigenvalue {0:e})")]
    NotStronglyConvex(f64),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("witness is infeasible: dist(S·w, K) = {0:e}")]
    InfeasibleWitness(f64),
    #[error("surrogate curvature must be positive, got {0}")]
    NonPositiveCurvature(f64),
    #[error("Jacobian disagrees with finite differences of G (relative error {0:e})")]
    JacobianMismatch(f64),
    #[error("translated set membership disagrees with the original constraint at the anchor")]
    TranslationMismatch,
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Set(#[from] SetError),
}

/// Curvature of a quadratic objective.
#[derive(Clone, Debug, PartialEq)]
pub enum Curvature {
    Dense(Matrix),
    /// A*A + shift·I, applied without forming the product.
    Gram { op: LinearOperator, shift: f64 },
}

/// θ(u) = ½⟨u,Qu⟩ − ⟨b,u⟩ + c.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    curvature: Curvature,
    b: Vec<f64>,
    c: f64,
    c0: f64,
}

impl QuadraticObjective {
    pub fn new(q: Matrix, b: Vec<f64>, c: f64) -> Result<Self, ProblemError> {
        if q.rows() != q.cols() {
            return Err(ProblemError::Dimension { what: "Q (square)", expected: q.rows(), got: q.cols() });
        }
        if b.len() != q.rows() {
            return Err(ProblemError::Dimension { what: "b", expected: q.rows(), got: b.len() });
        }
        if !linalg::all_finite(q.as_slice()) || !linalg::all_finite(&b) || !c.is_finite() {
            return Err(ProblemError::NonFinite("objective"));
        }
        let asym = q.asymmetry().unwrap_or(0.0);
        if asym > 1e-12 * q.max_abs().max(1.0) {
            return Err(ProblemError::NotSymmetric(asym));
        }
        let c0 = if q.rows() == 0 { 0.0 } else { symmetric_eigen(&q)?.values[0] };
        if !(c0 > 0.0) {
            return Err(ProblemError::NotStronglyConvex(c0));
        }
        Ok(QuadraticObjective { curvature: Curvature::Dense(q), b, c, c0 })
    }

    /// Q = A*A + shift·I with shift > 0.
    pub fn gram(op: LinearOperator, shift: f64, b: Vec<f64>, c: f64) -> Result<Self, ProblemError> {
        if !(shift > 0.0) {
            return Err(ProblemError::NotStronglyConvex(shift));
        }
        if b.len() != op.cols() {
            return Err(ProblemError::Dimension { what: "b", expected: op.cols(), got: b.len() });
        }
        Ok(QuadraticObjective { curvature: Curvature::Gram { op, shift }, b, c, c0: shift })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn curvature(&self) -> &Curvature {
        &self.curvature
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    /// Strong convexity modulus c₀ (a lower bound for the Gram form).
    pub fn strong_convexity(&self) -> f64 {
        self.c0
    }

    pub fn apply_q(&self, u: &[f64]) -> Result<Vec<f64>, ProblemError> {
        if u.len() != self.dim() {
            return Err(ProblemError::Dimension { what: "u", expected: self.dim(), got: u.len() });
        }
        Ok(match &self.curvature {
            Curvature::Dense(q) => q.matvec(u)?,
            Curvature::Gram { op, shift } => {
                let mut out = op.apply_adjoint(&op.apply(u)?)?;
                linalg::axpy(*shift, u, &mut out);
                out
            }
        })
    }

    pub fn dense_q(&self) -> Matrix {
        match &self.curvature {
            Curvature::Dense(q) => q.clone(),
            Curvature::Gram { op, shift } => {
                let mut g = op.gram_dense();
                g.add_diag(*shift);
                g
            }
        }
    }

    /// (value, gradient)
    pub fn eval(&self, u: &[f64]) -> Result<(f64, Vec<f64>), ProblemError> {
        let qu = self.apply_q(u)?;
        let value = 0.5 * dot(u, &qu) - dot(&self.b, u) + self.c;
        Ok((value, linalg::sub(&qu, &self.b)))
    }

    pub fn value(&self, u: &[f64]) -> Result<f64, ProblemError> {
        self.eval(u).map(|(v, _)| v)
    }

    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.eval(u).map(|(_, g)| g)
    }

    /// λ_max(Q).
    pub fn largest_eigenvalue(&self) -> Result<f64, ProblemError> {
        Ok(match &self.curvature {
            Curvature::Dense(q) => symmetric_eigen(q)?.values.last().copied().unwrap_or(0.0),
            Curvature::Gram { op, shift } => op.norm_sq()? + shift,
        })
    }
}

/// Free-function form of [`QuadraticObjective::eval`].
pub fn eval_objective(obj: &QuadraticObjective, u: &[f64]) -> Result<(f64, Vec<f64>), ProblemError> {
    obj.eval(u)
}

/// min θ(u) s.t. Su ∈ K.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelProblem {
    pub objective: QuadraticObjective,
    pub operator: LinearOperator,
    pub set: ConvexSet,
    pub witness: Option<Vec<f64>>,
}

impl ModelProblem {
    pub fn new(
        objective: QuadraticObjective,
        operator: LinearOperator,
        set: ConvexSet,
        witness: Option<Vec<f64>>,
    ) -> Result<Self, ProblemError> {
        if operator.cols() != objective.dim() {
            return Err(ProblemError::Dimension { what: "operator columns", expected: objective.dim(), got: operator.cols() });
        }
        if set.dim() != operator.rows() {
            return Err(ProblemError::Dimension { what: "set dimension", expected: operator.rows(), got: set.dim() });
        }
        if let Some(w) = &witness {
            if w.len() != objective.dim() {
                return Err(ProblemError::Dimension { what: "witness", expected: objective.dim(), got: w.len() });
            }
            let d = set.distance(&operator.apply(w)?)?;
            if d > FEASIBILITY_TOL {
                return Err(ProblemError::InfeasibleWitness(d));
            }
        }
        Ok(ModelProblem { objective, operator, set, witness })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn constraint_dim(&self) -> usize {
        self.operator.rows()
    }

    pub fn is_feasible(&self, u: &[f64], tol: f64) -> Result<bool, ProblemError> {
        Ok(self.set.contains(&self.operator.apply(u)?, tol)?)
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// min f(u) s.t. G(u) ∈ 𝒦 with user-supplied oracles. The oracles must be
/// pure.
pub struct NonlinearProblemSpec {
    pub f: ScalarFn,
    pub grad_f: VectorFn,
    pub g: VectorFn,
    pub jac_g: MatrixFn,
    pub constraint_set: ConvexSet,
}

impl std::fmt::Debug for NonlinearProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearProblemSpec").field("constraint_set", &self.constraint_set).finish_non_exhaustive()
    }
}

impl NonlinearProblemSpec {
    /// Linear constraint G(u) = Su with the given objective oracles.
    pub fn linear(f: ScalarFn, grad_f: VectorFn, s: Matrix, set: ConvexSet) -> Self {
        let s2 = s.clone();
        NonlinearProblemSpec {
            f,
            grad_f,
            g: Box::new(move |u| s.matvec(u).expect("dimension")),
            jac_g: Box::new(move |_| s2.clone()),
            constraint_set: set,
        }
    }

    /// Compares jac_G against central differences of G at five seeded probes
    /// near `around`.
    pub fn check_jacobian(&self, around: &[f64], seed: u64) -> Result<(), ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = around.len();
        for _ in 0..5 {
            let u: Vec<f64> = around.iter().map(|a| a + rng.gen_range(-0.5..0.5)).collect();
            let j = (self.jac_g)(&u);
            let m = (self.g)(&u).len();
            if j.rows() != m || j.cols() != n {
                return Err(ProblemError::Dimension { what: "jac_G", expected: m * n, got: j.rows() * j.cols() });
            }
            let mut err = 0.0_f64;
            for c in 0..n {
                let step = 1e-6 * (1.0 + u[c].abs());
                let mut up = u.clone();
                up[c] += step;
                let mut um = u.clone();
                um[c] -= step;
                let gp = (self.g)(&up);
                let gm = (self.g)(&um);
                for r in 0..m {
                    let fd = (gp[r] - gm[r]) / (2.0 * step);
                    err = err.max((fd - j.get(r, c)).abs());
                }
            }
            let rel = err / (1.0 + j.max_abs());
            if rel > 1e-5 {
                return Err(ProblemError::JacobianMismatch(rel));
            }
        }
        Ok(())
    }
}

/// The strongly convex linearization of a nonlinear spec at an anchor u*.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    pub base: ModelProblem,
    pub anchor: Vec<f64>,
    pub curvature: f64,
    /// Whether G(u*) ∈ 𝒦 (equivalently S·u* ∈ K).
    pub anchor_feasible: bool,
}

pub const DEFAULT_SURROGATE_CURVATURE: f64 = 1.0;

/// θ_s(u) = f(u*) + ⟨∇f(u*), u − u*⟩ + (c/2)‖u − u*‖², S = G'(u*),
/// K = 𝒦 − G(u*) + G'(u*)u*.
pub fn build_surrogate(spec: &NonlinearProblemSpec, u_star: &[f64], c: f64) -> Result<SurrogateModel, ProblemError> {
    if !(c > 0.0) {
        return Err(ProblemError::NonPositiveCurvature(c));
    }
    spec.check_jacobian(u_star, 0)?;
    let n = u_star.len();
    let grad = (spec.grad_f)(u_star);
    if grad.len() != n {
        return Err(ProblemError::Dimension { what: "grad_f", expected: n, got: grad.len() });
    }
    let f_star = (spec.f)(u_star);
    let g_star = (spec.g)(u_star);
    let jac = (spec.jac_g)(u_star);
    let b: Vec<f64> = u_star.iter().zip(&grad).map(|(u, g)| c * u - g).collect();
    let constant = f_star - dot(&grad, u_star) + 0.5 * c * linalg::norm_sq(u_star);
    let objective = QuadraticObjective::new(Matrix::identity(n).scaled(c), b, constant)?;
    let ju = jac.matvec(u_star)?;
    let offset = linalg::sub(&ju, &g_star);
    let set = ConvexSet::shift(spec.constraint_set.clone(), offset)?;
    let operator = LinearOperator::Dense(jac);
    let in_k = set.contains(&ju, FEASIBILITY_TOL)?;
    let in_orig = spec.constraint_set.contains(&g_star, FEASIBILITY_TOL)?;
    if in_k != in_orig {
        return Err(ProblemError::TranslationMismatch);
    }
    let witness = in_k.then(|| u_star.to_vec());
    let base = ModelProblem::new(objective, operator, set, witness)?;
    Ok(SurrogateModel { base, anchor: u_star.to_vec(), curvature: c, anchor_feasible: in_k })
}

/// (stationarity, complementarity) residual pair.
pub type KktResiduals = (f64, f64);

/// KKT residuals of λ̄ at u* for the surrogate and for the original problem.
/// Errors if they disagree by more than 1e-10.
pub fn surrogate_kkt_equivalence(
    spec: &NonlinearProblemSpec,
    u_star: &[f64],
    lambda: &[f64],
    plan: &SamplePlan,
) -> Result<(KktResiduals, KktResiduals), ProblemError> {
    let sur = build_surrogate(spec, u_star, DEFAULT_SURROGATE_CURVATURE)?;
    let p = &sur.base;
    let gs = p.objective.gradient(u_star)?;
    let stat_s = norm(&linalg::add(&gs, &p.operator.apply_adjoint(lambda)?));
    let su = p.operator.apply(u_star)?;
    let comp_s = normal_cone_residual(&p.set, &su, lambda, plan)?;

    let go = (spec.grad_f)(u_star);
    let jac = (spec.jac_g)(u_star);
    let stat_o = norm(&linalg::add(&go, &jac.tr_matvec(lambda)?));
    let g_star = (spec.g)(u_star);
    let comp_o = normal_cone_residual(&spec.constraint_set, &g_star, lambda, plan)?;

    let scale = 1.0 + norm(lambda) * (1.0 + norm(&su));
    if (stat_s - stat_o).abs() > 1e-10 * scale || (comp_s - comp_o).abs() > 1e-10 * scale {
        return Err(ProblemError::TranslationMismatch);
    }
    Ok(((stat_s, comp_s), (stat_o, comp_o)))
}

/// Membership of v in the linearizing cone at ū, searched over
/// t ∈ {2⁻²⁰, …, 2²⁰}. Returns the witnessing t (`Some(1.0)` for v = 0).
pub fn linearizing_cone_contains(spec: &NonlinearProblemSpec, u_bar: &[f64], v: &[f64], tol: f64) -> Result<Option<f64>, ProblemError> {
    if v.iter().all(|x| *x == 0.0) {
        return Ok(Some(1.0));
    }
    let g = (spec.g)(u_bar);
    let jac = (spec.jac_g)(u_bar);
    let jv = jac.matvec(v)?;
    let jv_norm = crate::linalg::norm(&jv);
    for e in -20..=20 {
        let t = 2f64.powi(e);
        let x: Vec<f64> = g.iter().zip(&jv).map(|(gi, ji)| gi + ji / t).collect();
        // tolerance relative to the step length so that tangent but
        // non-feasible directions are rejected
        let scale = if jv_norm > 0.0 { jv_norm / t } else { 1.0 };
        if spec.constraint_set.distance(&x)? <= tol * scale {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

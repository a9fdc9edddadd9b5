//! Lagrange-multiplier diagnostics: essential multipliers, optimality
//! certificates, proper-candidate checks and ALM multiplier probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::alm::AlmTrace;
use crate::linalg::{self, dot, norm, symmetric_eigen, LinalgError, LinearOperator, Matrix, SymmetricEigen};
use crate::problem::{ModelProblem, ProblemError, FEASIBILITY_TOL};
use crate::sets::{normal_cone_residual, sample_points_near, ConvexSet, SamplePlan, SampleStrategy, SetError};

/// Principal-angle tolerance for subspace equality.
pub const SUBSPACE_TOL: f64 = 1e-8;
/// Membership tolerance for sampled points of K ∩ range(S).
const SAMPLE_MEMBERSHIP_TOL: f64 = 1e-9;
/// Number of seeded conic combinations per normal-cone candidate search.
pub const CONE_CANDIDATES: usize = 100;

#[derive(Debug, Error)]
pub enum MultiplierError {
    #[error("u* is infeasible: dist(Su*, K) = {0:e}")]
    Infeasible(f64),
    #[error("essential multiplier is zero; the compatibility/consistency test needs λ* ≠ 0")]
    ZeroEssential,
    #[error("ζ̄₀ is not in range(S) (distance {0:e})")]
    NotInRange(f64),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplierReport {
    pub essential: Option<Vec<f64>>,
    /// ‖S*λ* + Dθ(u*)‖
    pub stationarity_residual: f64,
    /// max over sampled ζ ∈ K ∩ range(S) of ⟨λ*, ζ − Su*⟩
    pub vi_violation: f64,
    pub exists_verdict: bool,
    pub rank_s: usize,
    pub sigma_min_positive: f64,
    pub kernel_s_star_basis: Vec<Vec<f64>>,
    pub feasible: bool,
    pub certificate: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProperCandidateAnalysis {
    pub candidate: Vec<f64>,
    pub stationarity_residual: f64,
    pub normal_cone_residual: f64,
    /// ‖Proj_range(S) λ̄ − λ*‖
    pub restriction_gap: f64,
    pub compatibility: Option<bool>,
    pub consistency: Option<bool>,
    pub witness: Option<Vec<f64>>,
    pub constructed: Option<Vec<f64>>,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub compatibility: bool,
    pub consistency: bool,
    /// Largest principal-angle sine between Ker(λ̃) ∩ range(S) and Ker(λ*) ∩ range(S)
    /// (1 when the dimensions differ).
    pub max_angle_sine: f64,
    pub t0: Option<f64>,
    pub constructed: Option<Vec<f64>>,
    pub constructed_check: Option<ProperCandidateAnalysis>,
}

/// Orthogonal projector onto range(S), built from one eigen-decomposition of S*S.
struct RangeProjector<'a> {
    op: &'a LinearOperator,
    gram: Matrix,
    eig: SymmetricEigen,
    rank_tol: f64,
}

impl<'a> RangeProjector<'a> {
    fn new(op: &'a LinearOperator, rank_tol: f64) -> Result<Self, LinalgError> {
        let gram = op.gram_dense();
        let eig = symmetric_eigen(&gram)?;
        Ok(RangeProjector { op, gram, eig, rank_tol })
    }

    /// Min-norm y with (S*S)y = rhs.
    fn solve(&self, rhs: &[f64]) -> linalg::MinNormSolution {
        linalg::min_norm_from_eigen(&self.gram, &self.eig, rhs, self.rank_tol)
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let y = self.solve(&self.op.apply_adjoint(x)?).y;
        self.op.apply(&y)
    }

    fn spectrum(&self) -> (usize, f64) {
        let top = self.eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let kept: Vec<f64> = self.eig.values.iter().copied().filter(|w| top > 0.0 && *w > self.rank_tol * top).collect();
        let smin = kept.iter().copied().fold(f64::INFINITY, f64::min);
        (kept.len(), if smin.is_finite() { smin.sqrt() } else { 0.0 })
    }
}

/// Orthonormal basis of range(S) from the eigenvectors of SS*.
fn range_basis(op: &LinearOperator, rank_tol: f64) -> Result<Vec<Vec<f64>>, LinalgError> {
    let outer = op.outer_gram_dense();
    let eig = symmetric_eigen(&outer)?;
    let top = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok((0..eig.values.len()).filter(|&k| top > 0.0 && eig.values[k] > rank_tol * top).map(|k| eig.vector(k)).collect())
}

fn kernel_adjoint_basis(op: &LinearOperator, rank_tol: f64) -> Result<Vec<Vec<f64>>, LinalgError> {
    let outer = op.outer_gram_dense();
    let eig = symmetric_eigen(&outer)?;
    let top = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok((0..eig.values.len()).filter(|&k| top == 0.0 || eig.values[k] <= rank_tol * top).map(|k| eig.vector(k)).collect())
}

/// Points of K ∩ range(S): K samples projected to range(S) and filtered by
/// membership, plus Su* and any extra points supplied.
fn range_samples(
    set: &ConvexSet,
    proj: &RangeProjector,
    su: &[f64],
    plan: &SamplePlan,
    extra: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, MultiplierError> {
    let mut out = vec![su.to_vec()];
    for strategy in [SampleStrategy::BoundaryBiased, SampleStrategy::UniformThenProject] {
        for z in sample_points_near(set, &SamplePlan { strategy, ..*plan }, su)? {
            let p = proj.project(&z)?;
            if set.contains(&p, SAMPLE_MEMBERSHIP_TOL)? {
                out.push(p);
            }
        }
    }
    out.extend(extra.iter().cloned());
    Ok(out)
}

fn essential_inner(
    problem: &ModelProblem,
    u_star: &[f64],
    rank_tol: f64,
    plan: &SamplePlan,
    extra: &[Vec<f64>],
    require_feasible: bool,
) -> Result<MultiplierReport, MultiplierError> {
    if u_star.len() != problem.dim() {
        return Err(MultiplierError::Dimension { what: "u*", expected: problem.dim(), got: u_star.len() });
    }
    let s = &problem.operator;
    let su = s.apply(u_star)?;
    let dist = problem.set.distance(&su)?;
    let feasible = dist <= FEASIBILITY_TOL;
    if require_feasible && !feasible {
        return Err(MultiplierError::Infeasible(dist));
    }
    let g = problem.objective.gradient(u_star)?;
    let proj = RangeProjector::new(s, rank_tol)?;
    let y = proj.solve(&linalg::scale(&g, -1.0)).y;
    let lambda = s.apply(&y)?;
    let mut stat = s.apply_adjoint(&lambda)?;
    linalg::axpy(1.0, &g, &mut stat);
    let stationarity_residual = norm(&stat);
    let exists_verdict = stationarity_residual <= rank_tol * (1.0 + norm(&g));
    let (rank_s, sigma_min_positive) = proj.spectrum();
    let vi_violation = if feasible {
        range_samples(&problem.set, &proj, &su, plan, extra)?
            .iter()
            .map(|z| dot(&lambda, &linalg::sub(z, &su)))
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(MultiplierReport {
        essential: exists_verdict.then_some(lambda),
        stationarity_residual,
        vi_violation,
        exists_verdict,
        rank_s,
        sigma_min_positive,
        kernel_s_star_basis: kernel_adjoint_basis(s, rank_tol)?,
        feasible,
        certificate: None,
    })
}

/// Essential multiplier λ* = Sy with y the min-norm solution of (S*S)y = −Dθ(u*).
pub fn essential_multiplier(problem: &ModelProblem, u_star: &[f64], rank_tol: f64, plan: &SamplePlan) -> Result<MultiplierReport, MultiplierError> {
    essential_inner(problem, u_star, rank_tol, plan, &[], true)
}

/// As [`essential_multiplier`], with extra points of K ∩ range(S) (for
/// instance ALM iterates ζ^k) added to the variational-inequality samples.
pub fn essential_multiplier_with_samples(
    problem: &ModelProblem,
    u_star: &[f64],
    rank_tol: f64,
    plan: &SamplePlan,
    extra: &[Vec<f64>],
) -> Result<MultiplierReport, MultiplierError> {
    essential_inner(problem, u_star, rank_tol, plan, extra, true)
}

/// Certified iff u is feasible, λ* exists and the sampled variational
/// inequality holds to `tol`.
pub fn optimality_certificate(problem: &ModelProblem, u: &[f64], tol: f64, plan: &SamplePlan) -> Result<(bool, MultiplierReport), MultiplierError> {
    let mut report = essential_inner(problem, u, linalg::DEFAULT_RANK_TOL, plan, &[], false)?;
    let certified = report.feasible && report.exists_verdict && report.vi_violation <= tol;
    report.certificate = Some(certified);
    Ok((certified, report))
}

/// Checks λ̄ against the classical KKT system at u*.
pub fn proper_candidate_check(
    problem: &ModelProblem,
    u_star: &[f64],
    candidate: &[f64],
    tol: f64,
    plan: &SamplePlan,
) -> Result<ProperCandidateAnalysis, MultiplierError> {
    let m = problem.constraint_dim();
    if candidate.len() != m {
        return Err(MultiplierError::Dimension { what: "candidate", expected: m, got: candidate.len() });
    }
    let s = &problem.operator;
    let su = s.apply(u_star)?;
    let g = problem.objective.gradient(u_star)?;
    let mut stat = s.apply_adjoint(candidate)?;
    linalg::axpy(1.0, &g, &mut stat);
    let stationarity_residual = norm(&stat);
    let ncr = normal_cone_residual(&problem.set, &su, candidate, plan)?;
    let proj = RangeProjector::new(s, linalg::DEFAULT_RANK_TOL)?;
    let y = proj.solve(&linalg::scale(&g, -1.0)).y;
    let essential = s.apply(&y)?;
    let restriction_gap = linalg::dist(&proj.project(candidate)?, &essential);
    let passes = stationarity_residual <= tol * (1.0 + norm(&g)) && ncr <= tol;
    Ok(ProperCandidateAnalysis {
        candidate: candidate.to_vec(),
        stationarity_residual,
        normal_cone_residual: ncr,
        restriction_gap,
        compatibility: None,
        consistency: None,
        witness: None,
        constructed: None,
        passes,
    })
}

/// Orthonormal basis (in range-basis coordinates) of {c : ⟨a, c⟩ = 0}.
fn orthogonal_complement(a: &[f64]) -> Result<Vec<Vec<f64>>, LinalgError> {
    let r = a.len();
    let na = norm(a);
    if na == 0.0 {
        return Ok((0..r).map(|i| (0..r).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect());
    }
    let ah = linalg::scale(a, 1.0 / na);
    let mut p = Matrix::identity(r);
    for i in 0..r {
        for j in 0..r {
            p.set(i, j, p.get(i, j) - ah[i] * ah[j]);
        }
    }
    let eig = symmetric_eigen(&p)?;
    Ok((0..r).filter(|&k| eig.values[k] > 0.5).map(|k| eig.vector(k)).collect())
}

/// Largest principal-angle sine between two subspaces given by orthonormal
/// bases; 1 if the dimensions differ.
fn max_angle_sine(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, LinalgError> {
    if a.len() != b.len() {
        return Ok(1.0);
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    // residual of projecting a's basis onto span(b)
    let res: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            let mut r = x.clone();
            for y in b {
                linalg::axpy(-dot(x, y), y, &mut r);
            }
            r
        })
        .collect();
    let k = res.len();
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram.set(i, j, dot(&res[i], &res[j]));
        }
    }
    let top = symmetric_eigen(&gram)?.values.iter().fold(0.0_f64, |m, x| m.max(*x));
    Ok(top.max(0.0).sqrt())
}

/// Compatibility (equal kernels within range(S)) and consistency
/// (⟨λ̃, ζ̄₀⟩ > tol and ⟨λ*, ζ̄₀⟩ > tol). When both hold the scaled candidate
/// λ̄ = t₀λ̃ is built and checked.
pub fn compatibility_consistency_check(
    problem: &ModelProblem,
    u_star: &[f64],
    essential: &[f64],
    tilde: &[f64],
    zeta0: &[f64],
    tol: f64,
    plan: &SamplePlan,
) -> Result<CompatibilityReport, MultiplierError> {
    let m = problem.constraint_dim();
    for (what, v) in [("λ*", essential), ("λ̃", tilde), ("ζ̄₀", zeta0)] {
        if v.len() != m {
            return Err(MultiplierError::Dimension { what, expected: m, got: v.len() });
        }
    }
    if norm(essential) == 0.0 {
        return Err(MultiplierError::ZeroEssential);
    }
    let s = &problem.operator;
    let proj = RangeProjector::new(s, linalg::DEFAULT_RANK_TOL)?;
    let off = linalg::dist(&proj.project(zeta0)?, zeta0);
    if off > tol * (1.0 + norm(zeta0)) {
        return Err(MultiplierError::NotInRange(off));
    }
    let basis = range_basis(s, linalg::DEFAULT_RANK_TOL)?;
    let coords = |v: &[f64]| basis.iter().map(|b| dot(b, v)).collect::<Vec<f64>>();
    let ker_t = orthogonal_complement(&coords(tilde))?;
    let ker_e = orthogonal_complement(&coords(essential))?;
    let sine = max_angle_sine(&ker_t, &ker_e)?.max(max_angle_sine(&ker_e, &ker_t)?);
    let compatibility = sine <= SUBSPACE_TOL;
    let a = dot(tilde, zeta0);
    let b = dot(essential, zeta0);
    let consistency = a > tol && b > tol;
    let (t0, constructed, check) = if compatibility && consistency {
        let t0 = b / a;
        let lam = linalg::scale(tilde, t0);
        let chk = proper_candidate_check(problem, u_star, &lam, tol.max(1e-8), plan)?;
        (Some(t0), Some(lam), Some(chk))
    } else {
        (None, None, None)
    };
    Ok(CompatibilityReport { compatibility, consistency, max_angle_sine: sine, t0, constructed, constructed_check: check })
}

/// Candidates λ̃ ∈ 𝒩(ζ, K) from the set geometry: the generators and
/// `count` seeded conic combinations of them.
pub fn normal_cone_candidates(set: &ConvexSet, zeta: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let gens = set.normal_generators(zeta, 1e-9);
    if gens.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = gens.clone();
    for _ in 0..count {
        let mut v = vec![0.0; zeta.len()];
        for g in &gens {
            linalg::axpy(rng.gen_range(0.0..1.0), g, &mut v);
        }
        out.push(v);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeGapRow {
    pub k: usize,
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeGapTable {
    pub rows: Vec<ProbeGapRow>,
    pub last_quarter_max: f64,
}

/// |⟨λ^k − λ*, Sv_j⟩| along the trace.
pub fn multiplier_convergence_probe(
    trace: &AlmTrace,
    essential: &[f64],
    op: &LinearOperator,
    probes: &[Vec<f64>],
) -> Result<ProbeGapTable, MultiplierError> {
    let images = probes.iter().map(|v| op.apply(v)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<ProbeGapRow> = trace
        .records
        .iter()
        .map(|r| {
            let diff = linalg::sub(&r.lambda, essential);
            ProbeGapRow { k: r.k, gaps: images.iter().map(|sv| dot(&diff, sv).abs()).collect() }
        })
        .collect();
    let start = rows.len() - rows.len().div_ceil(4);
    let last_quarter_max = rows[start..].iter().flat_map(|r| r.gaps.iter().copied()).fold(0.0, f64::max);
    Ok(ProbeGapTable { rows, last_quarter_max })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedRangeRow {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub sigma_min_positive: f64,
    pub rank: usize,
}

/// Smallest positive singular value and numerical rank for each operator.
pub fn closed_range_diagnostic(family: &[LinearOperator], rank_tol: f64) -> Result<Vec<ClosedRangeRow>, MultiplierError> {
    family
        .iter()
        .enumerate()
        .map(|(index, op)| {
            let (rank, smin) = match op {
                LinearOperator::TridiagonalInverse(_) => {
                    let est = op.gram_spectrum(rank_tol)?;
                    (op.cols(), est.smallest_positive.sqrt())
                }
                _ => RangeProjector::new(op, rank_tol)?.spectrum(),
            };
            Ok(ClosedRangeRow { index, rows: op.rows(), cols: op.cols(), sigma_min_positive: smin, rank })
        })
        .collect()
}

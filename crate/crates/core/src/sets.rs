//! Closed convex sets: projection, membership, normal-cone residuals and
//! deterministic sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, dot, norm, norm_sq, Matrix};

/// Default tolerance handed to [`ConvexSet::project`] by the solver and the
/// diagnostics.
pub const PROJECTION_TOL: f64 = 1e-14;

const DYKSTRA_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: set has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid set: {0}")]
    Invalid(String),
    #[error("Dykstra projection did not converge after {sweeps} sweeps (intersection may be empty)")]
    DykstraNoConvergence { sweeps: usize, last: Vec<f64> },
}

/// Closed convex subset of ℝᵐ.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    /// lo ≤ ζ ≤ hi; bounds may be infinite.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Singleton { point: Vec<f64> },
    /// ⟨normal, ζ⟩ ≤ offset
    Halfspace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    /// inner + offset
    Shift { inner: Box<ConvexSet>, offset: Vec<f64> },
    Product { factors: Vec<ConvexSet> },
    Intersection { members: Vec<ConvexSet> },
}

fn invalid(msg: impl Into<String>) -> SetError {
    SetError::Invalid(msg.into())
}

fn finite(v: &[f64], what: &str) -> Result<(), SetError> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(invalid(format!("{what} contains NaN")));
    }
    Ok(())
}

impl ConvexSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SetError> {
        if lo.len() != hi.len() {
            return Err(SetError::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        finite(&lo, "box lower bound")?;
        finite(&hi, "box upper bound")?;
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i] || lo[i] == f64::INFINITY || hi[i] == f64::NEG_INFINITY) {
            return Err(invalid(format!("box bounds violate lo <= hi at index {i}")));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// The whole space ℝⁿ.
    pub fn unbounded(n: usize) -> Self {
        ConvexSet::Box { lo: vec![f64::NEG_INFINITY; n], hi: vec![f64::INFINITY; n] }
    }

    pub fn singleton(point: Vec<f64>) -> Result<Self, SetError> {
        if !linalg::all_finite(&point) {
            return Err(invalid("singleton point must be finite"));
        }
        Ok(ConvexSet::Singleton { point })
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self, SetError> {
        if !linalg::all_finite(&normal) || !offset.is_finite() {
            return Err(invalid("halfspace data must be finite"));
        }
        if norm(&normal) == 0.0 {
            return Err(invalid("halfspace normal must be nonzero"));
        }
        Ok(ConvexSet::Halfspace { normal, offset })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        if !linalg::all_finite(&center) || !radius.is_finite() {
            return Err(invalid("ball data must be finite"));
        }
        if radius < 0.0 {
            return Err(invalid("ball radius must be nonnegative"));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn shift(inner: ConvexSet, offset: Vec<f64>) -> Result<Self, SetError> {
        if inner.dim() != offset.len() {
            return Err(SetError::DimensionMismatch { expected: inner.dim(), got: offset.len() });
        }
        if !linalg::all_finite(&offset) {
            return Err(invalid("shift offset must be finite"));
        }
        Ok(ConvexSet::Shift { inner: Box::new(inner), offset })
    }

    pub fn product(factors: Vec<ConvexSet>) -> Result<Self, SetError> {
        if factors.is_empty() {
            return Err(invalid("product needs at least one factor"));
        }
        Ok(ConvexSet::Product { factors })
    }

    pub fn intersection(members: Vec<ConvexSet>) -> Result<Self, SetError> {
        let dim = members.first().map(|m| m.dim()).ok_or_else(|| invalid("intersection needs at least one member"))?;
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(SetError::DimensionMismatch { expected: dim, got: m.dim() });
        }
        Ok(ConvexSet::Intersection { members })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Singleton { point } => point.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Shift { offset, .. } => offset.len(),
            ConvexSet::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
            ConvexSet::Intersection { members } => members.first().map_or(0, |m| m.dim()),
        }
    }

    /// Re-checks the constructor invariants (useful after deserialization).
    pub fn validate(&self) -> Result<(), SetError> {
        match self {
            ConvexSet::Box { lo, hi } => ConvexSet::boxed(lo.clone(), hi.clone()).map(|_| ()),
            ConvexSet::Singleton { point } => ConvexSet::singleton(point.clone()).map(|_| ()),
            ConvexSet::Halfspace { normal, offset } => ConvexSet::halfspace(normal.clone(), *offset).map(|_| ()),
            ConvexSet::Ball { center, radius } => ConvexSet::ball(center.clone(), *radius).map(|_| ()),
            ConvexSet::Shift { inner, offset } => {
                inner.validate()?;
                ConvexSet::shift((**inner).clone(), offset.clone()).map(|_| ())
            }
            ConvexSet::Product { factors } => {
                if factors.is_empty() {
                    return Err(invalid("product needs at least one factor"));
                }
                factors.iter().try_for_each(|f| f.validate())
            }
            ConvexSet::Intersection { members } => {
                members.iter().try_for_each(|m| m.validate())?;
                ConvexSet::intersection(members.clone()).map(|_| ())
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), SetError> {
        if x.len() != self.dim() {
            return Err(SetError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Euclidean projection. `tol` only affects intersections (Dykstra
    /// stopping rule).
    pub fn project(&self, x: &[f64], tol: f64) -> Result<Vec<f64>, SetError> {
        self.check_dim(x)?;
        self.project_unchecked(x, tol)
    }

    fn project_unchecked(&self, x: &[f64], tol: f64) -> Result<Vec<f64>, SetError> {
        Ok(match self {
            ConvexSet::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.max(*l).min(*h)).collect(),
            ConvexSet::Singleton { point } => point.clone(),
            ConvexSet::Halfspace { normal, offset } => {
                let s = dot(normal, x);
                if s <= *offset {
                    x.to_vec()
                } else {
                    let c = (s - offset) / norm_sq(normal);
                    x.iter().zip(normal).map(|(v, a)| v - c * a).collect()
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = linalg::sub(x, center);
                let nd = norm(&d);
                if nd <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / nd;
                    center.iter().zip(&d).map(|(c, di)| c + s * di).collect()
                }
            }
            ConvexSet::Shift { inner, offset } => {
                let p = inner.project_unchecked(&linalg::sub(x, offset), tol)?;
                linalg::add(&p, offset)
            }
            ConvexSet::Product { factors } => {
                let mut out = Vec::with_capacity(x.len());
                let mut off = 0;
                for f in factors {
                    let d = f.dim();
                    out.extend(f.project_unchecked(&x[off..off + d], tol)?);
                    off += d;
                }
                out
            }
            ConvexSet::Intersection { members } => match exact_member_projection(members, x)? {
                Some((_, p)) => p,
                None => dykstra(members, x, tol)?,
            },
        })
    }

    /// ‖x − P(x)‖ ≤ tol. Intersections test each member separately, which
    /// avoids running Dykstra for a yes/no question.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, SetError> {
        self.check_dim(x)?;
        Ok(self.distance_unchecked(x)? <= tol)
    }

    /// Distance to the set (largest member distance for intersections).
    pub fn distance(&self, x: &[f64]) -> Result<f64, SetError> {
        self.check_dim(x)?;
        self.distance_unchecked(x)
    }

    fn distance_unchecked(&self, x: &[f64]) -> Result<f64, SetError> {
        match self {
            ConvexSet::Intersection { members } => {
                let mut worst = 0.0_f64;
                for m in members {
                    worst = worst.max(m.distance_unchecked(x)?);
                }
                Ok(worst)
            }
            ConvexSet::Shift { inner, offset } => inner.distance_unchecked(&linalg::sub(x, offset)),
            ConvexSet::Product { factors } => {
                let mut s = 0.0;
                let mut off = 0;
                for f in factors {
                    let d = f.dim();
                    s += f.distance_unchecked(&x[off..off + d])?.powi(2);
                    off += d;
                }
                Ok(s.sqrt())
            }
            _ => Ok(linalg::dist(x, &self.project_unchecked(x, PROJECTION_TOL)?)),
        }
    }

    /// The unique point when the set is a (shifted, product of) singleton.
    pub fn singleton_point(&self) -> Option<Vec<f64>> {
        match self {
            ConvexSet::Singleton { point } => Some(point.clone()),
            ConvexSet::Box { lo, hi } if lo == hi => Some(lo.clone()),
            ConvexSet::Shift { inner, offset } => inner.singleton_point().map(|p| linalg::add(&p, offset)),
            ConvexSet::Product { factors } => {
                let mut out = Vec::new();
                for f in factors {
                    out.extend(f.singleton_point()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// An element of the generalized Jacobian of the projection at `x`.
    pub fn projection_jacobian(&self, x: &[f64]) -> Option<Matrix> {
        let n = self.dim();
        match self {
            ConvexSet::Box { lo, hi } => {
                let d: Vec<f64> = (0..n).map(|i| if lo[i] <= x[i] && x[i] <= hi[i] && lo[i] < hi[i] { 1.0 } else { 0.0 }).collect();
                Some(Matrix::from_diag(&d))
            }
            ConvexSet::Singleton { .. } => Some(Matrix::zeros(n, n)),
            ConvexSet::Halfspace { normal, offset } => {
                let mut j = Matrix::identity(n);
                if dot(normal, x) > *offset {
                    let nn = norm_sq(normal);
                    for a in 0..n {
                        for b in 0..n {
                            j.set(a, b, j.get(a, b) - normal[a] * normal[b] / nn);
                        }
                    }
                }
                Some(j)
            }
            ConvexSet::Ball { center, radius } => {
                let d = linalg::sub(x, center);
                let nd = norm(&d);
                if nd <= *radius {
                    return Some(Matrix::identity(n));
                }
                let s = radius / nd;
                let mut j = Matrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        j.set(a, b, s * (delta - d[a] * d[b] / (nd * nd)));
                    }
                }
                Some(j)
            }
            ConvexSet::Shift { inner, offset } => inner.projection_jacobian(&linalg::sub(x, offset)),
            ConvexSet::Product { factors } => {
                let mut j = Matrix::zeros(n, n);
                let mut off = 0;
                for f in factors {
                    let d = f.dim();
                    let jf = f.projection_jacobian(&x[off..off + d])?;
                    for a in 0..d {
                        for b in 0..d {
                            j.set(off + a, off + b, jf.get(a, b));
                        }
                    }
                    off += d;
                }
                Some(j)
            }
            ConvexSet::Intersection { members } => {
                if let Ok(Some((i, _))) = exact_member_projection(members, x) {
                    return members[i].projection_jacobian(x);
                }
                // corner: drop every active normal direction
                let z = dykstra(members, x, PROJECTION_TOL).ok()?;
                let tol = 1e-9 * (1.0 + norm(&z));
                let gens: Vec<Vec<f64>> = members.iter().flat_map(|m| m.normal_generators(&z, tol)).collect();
                Some(complement_projector(n, &gens))
            }
        }
    }

    /// Diagonal of the projection Jacobian when it is diagonal (boxes,
    /// singletons and products of those).
    pub fn projection_jacobian_diagonal(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            ConvexSet::Box { lo, hi } => Some(
                (0..lo.len()).map(|i| if lo[i] <= x[i] && x[i] <= hi[i] && lo[i] < hi[i] { 1.0 } else { 0.0 }).collect(),
            ),
            ConvexSet::Singleton { point } => Some(vec![0.0; point.len()]),
            ConvexSet::Shift { inner, offset } => inner.projection_jacobian_diagonal(&linalg::sub(x, offset)),
            ConvexSet::Product { factors } => {
                let mut out = Vec::with_capacity(x.len());
                let mut off = 0;
                for f in factors {
                    let d = f.dim();
                    out.extend(f.projection_jacobian_diagonal(&x[off..off + d])?);
                    off += d;
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Componentwise bounding box (entries may be infinite).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        match self {
            ConvexSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            ConvexSet::Singleton { point } => (point.clone(), point.clone()),
            ConvexSet::Halfspace { .. } => (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]),
            ConvexSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexSet::Shift { inner, offset } => {
                let (lo, hi) = inner.bounding_box();
                (linalg::add(&lo, offset), linalg::add(&hi, offset))
            }
            ConvexSet::Product { factors } => {
                let mut lo = Vec::with_capacity(n);
                let mut hi = Vec::with_capacity(n);
                for f in factors {
                    let (l, h) = f.bounding_box();
                    lo.extend(l);
                    hi.extend(h);
                }
                (lo, hi)
            }
            ConvexSet::Intersection { members } => {
                let mut lo = vec![f64::NEG_INFINITY; n];
                let mut hi = vec![f64::INFINITY; n];
                for m in members {
                    let (l, h) = m.bounding_box();
                    for i in 0..n {
                        lo[i] = lo[i].max(l[i]);
                        hi[i] = hi[i].min(h[i]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Generators of the normal cone at `zeta` read off the set geometry:
    /// outward normals of the active pieces. The cone they span is contained
    /// in the true normal cone (equal for boxes, balls, halfspaces, and
    /// intersections satisfying a constraint qualification).
    pub fn normal_generators(&self, zeta: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let n = self.dim();
        let unit = |i: usize, s: f64| {
            let mut e = vec![0.0; n];
            e[i] = s;
            e
        };
        match self {
            ConvexSet::Box { lo, hi } => {
                let mut out = Vec::new();
                for i in 0..n {
                    if zeta[i] >= hi[i] - tol {
                        out.push(unit(i, 1.0));
                    }
                    if zeta[i] <= lo[i] + tol {
                        out.push(unit(i, -1.0));
                    }
                }
                out
            }
            ConvexSet::Singleton { .. } => (0..n).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect(),
            ConvexSet::Halfspace { normal, offset } => {
                if dot(normal, zeta) >= offset - tol * (1.0 + offset.abs()) {
                    vec![normal.clone()]
                } else {
                    Vec::new()
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = linalg::sub(zeta, center);
                if *radius == 0.0 {
                    (0..n).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect()
                } else if norm(&d) >= radius - tol {
                    vec![d]
                } else {
                    Vec::new()
                }
            }
            ConvexSet::Shift { inner, offset } => inner.normal_generators(&linalg::sub(zeta, offset), tol),
            ConvexSet::Product { factors } => {
                let mut out = Vec::new();
                let mut off = 0;
                for f in factors {
                    let d = f.dim();
                    for g in f.normal_generators(&zeta[off..off + d], tol) {
                        let mut e = vec![0.0; n];
                        e[off..off + d].copy_from_slice(&g);
                        out.push(e);
                    }
                    off += d;
                }
                out
            }
            ConvexSet::Intersection { members } => members.iter().flat_map(|m| m.normal_generators(zeta, tol)).collect(),
        }
    }
}

/// P_m(x) for the first member whose projection already lies in all the
/// others; that point is then the projection onto the intersection.
fn exact_member_projection(members: &[ConvexSet], x: &[f64]) -> Result<Option<(usize, Vec<f64>)>, SetError> {
    for (i, m) in members.iter().enumerate() {
        let p = m.project_unchecked(x, PROJECTION_TOL)?;
        let mut inside = true;
        for (j, other) in members.iter().enumerate() {
            if j != i && other.distance_unchecked(&p)? > 0.0 {
                inside = false;
                break;
            }
        }
        if inside {
            return Ok(Some((i, p)));
        }
    }
    Ok(None)
}

/// I − projector onto span(gens), by Gram-Schmidt.
fn complement_projector(n: usize, gens: &[Vec<f64>]) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for g in gens {
        let mut v = g.clone();
        for b in &basis {
            let c = dot(&v, b);
            linalg::axpy(-c, b, &mut v);
        }
        let nv = norm(&v);
        if nv > 1e-10 * (1.0 + norm(g)) {
            basis.push(linalg::scale(&v, 1.0 / nv));
        }
    }
    let mut j = Matrix::identity(n);
    for b in &basis {
        for r in 0..n {
            for c in 0..n {
                j.set(r, c, j.get(r, c) - b[r] * b[c]);
            }
        }
    }
    j
}

fn dykstra(members: &[ConvexSet], x: &[f64], tol: f64) -> Result<Vec<f64>, SetError> {
    let mut y = x.to_vec();
    let mut incr = vec![vec![0.0; x.len()]; members.len()];
    let scale = 1.0 + norm(x);
    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        let start = y.clone();
        let mut moved = 0.0;
        for (m, p) in members.iter().zip(incr.iter_mut()) {
            let z = linalg::add(&y, p);
            let proj = m.project_unchecked(&z, tol)?;
            *p = linalg::sub(&z, &proj);
            moved += linalg::dist(&proj, &y);
            y = proj;
        }
        if linalg::dist(&y, &start) <= tol * scale && sweep > 1 {
            let feasible = members
                .iter()
                .map(|m| m.distance_unchecked(&y))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .all(|d| d <= 1e3 * tol * scale + 1e-12);
            if feasible && moved <= 1e3 * tol * scale * members.len() as f64 + 1e-12 {
                return Ok(y);
            }
            if !feasible && moved <= tol * scale {
                // iterates frozen outside some member: empty intersection
                return Err(SetError::DykstraNoConvergence { sweeps: sweep, last: y });
            }
        }
    }
    Err(SetError::DykstraNoConvergence { sweeps: DYKSTRA_MAX_SWEEPS, last: y })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleStrategy {
    /// Small perturbations of an anchor point, projected back onto the set.
    BoundaryBiased,
    /// Uniform draws from the (finitized) bounding box, projected.
    UniformThenProject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    pub strategy: SampleStrategy,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan { count: 256, seed: 0, strategy: SampleStrategy::UniformThenProject }
    }
}

impl SamplePlan {
    pub fn new(count: usize, seed: u64, strategy: SampleStrategy) -> Result<Self, SetError> {
        if count == 0 {
            return Err(invalid("sample count must be at least 1"));
        }
        Ok(SamplePlan { count, seed, strategy })
    }
}

const SCALES: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const MEMBERSHIP_TOL: f64 = 1e-9;

fn finite_box(set: &ConvexSet, anchor: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = set.bounding_box();
    let reach = 2.0 * (1.0 + linalg::inf_norm(anchor));
    for i in 0..lo.len() {
        if !lo[i].is_finite() {
            lo[i] = if hi[i].is_finite() { hi[i].min(anchor[i]) - reach } else { anchor[i] - reach };
        }
        if !hi[i].is_finite() {
            hi[i] = lo[i].max(anchor[i]) + reach;
        }
    }
    (lo, hi)
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv = norm(&v);
        if nv > 1e-3 && nv <= 1.0 {
            return linalg::scale(&v, 1.0 / nv);
        }
    }
}

fn keep_members(set: &ConvexSet, pts: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, SetError> {
    let mut out = Vec::with_capacity(pts.len());
    for p in pts {
        if set.contains(&p, MEMBERSHIP_TOL)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// Deterministic sample of `plan.count` candidate points of the set (points
/// failing the 1e-9 membership check after projection are dropped). The
/// anchor for boundary-biased sampling is the projection of the bounding-box
/// centre.
pub fn sample_points(set: &ConvexSet, plan: &SamplePlan) -> Result<Vec<Vec<f64>>, SetError> {
    let zero = vec![0.0; set.dim()];
    let (lo, hi) = finite_box(set, &zero);
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let anchor = set.project(&centre, PROJECTION_TOL)?;
    sample_points_near(set, plan, &anchor)
}

/// As [`sample_points`], with unbounded directions and boundary-biased
/// perturbations centred at `anchor`. Translation-equivariant for shifts.
pub fn sample_points_near(set: &ConvexSet, plan: &SamplePlan, anchor: &[f64]) -> Result<Vec<Vec<f64>>, SetError> {
    set.check_dim(anchor)?;
    if let ConvexSet::Shift { inner, offset } = set {
        let inner_pts = sample_points_near(inner, plan, &linalg::sub(anchor, offset))?;
        return Ok(inner_pts.into_iter().map(|p| linalg::add(&p, offset)).collect());
    }
    let n = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut pts = Vec::with_capacity(plan.count);
    match plan.strategy {
        SampleStrategy::UniformThenProject => {
            let (lo, hi) = finite_box(set, anchor);
            for _ in 0..plan.count {
                let x: Vec<f64> = (0..n).map(|i| if lo[i] < hi[i] { rng.gen_range(lo[i]..=hi[i]) } else { lo[i] }).collect();
                pts.push(set.project(&x, PROJECTION_TOL)?);
            }
        }
        SampleStrategy::BoundaryBiased => {
            for k in 0..plan.count {
                let d = random_unit(n, &mut rng);
                let eps = SCALES[k % SCALES.len()];
                let x: Vec<f64> = anchor.iter().zip(&d).map(|(a, di)| a + eps * di).collect();
                pts.push(set.project(&x, PROJECTION_TOL)?);
            }
        }
    }
    keep_members(set, pts)
}

/// Points used by the normal-cone test at `anchor`: the anchor itself,
/// projections of anchor ± ε·eᵢ and anchor + ε·λ̂, and both sampling
/// strategies of `plan`.
pub fn probe_points(set: &ConvexSet, anchor: &[f64], direction: Option<&[f64]>, plan: &SamplePlan) -> Result<Vec<Vec<f64>>, SetError> {
    let n = set.dim();
    let mut pts = vec![anchor.to_vec()];
    for &eps in &SCALES {
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut x = anchor.to_vec();
                x[i] += s * eps;
                pts.push(set.project(&x, PROJECTION_TOL)?);
            }
        }
        if let Some(d) = direction {
            let nd = norm(d);
            if nd > 0.0 {
                let x: Vec<f64> = anchor.iter().zip(d).map(|(a, di)| a + eps * di / nd).collect();
                pts.push(set.project(&x, PROJECTION_TOL)?);
            }
        }
    }
    let mut pts = keep_members(set, pts)?;
    pts.insert(0, anchor.to_vec());
    for strategy in [SampleStrategy::BoundaryBiased, SampleStrategy::UniformThenProject] {
        let p = SamplePlan { strategy, ..*plan };
        pts.extend(sample_points_near(set, &p, anchor)?);
    }
    Ok(pts)
}

/// max over sampled ζ ∈ set of ⟨λ, ζ − ζ₀⟩. A value ≤ 0 means λ passes the
/// sampled normal-cone test at ζ₀.
pub fn normal_cone_residual(set: &ConvexSet, anchor: &[f64], lambda: &[f64], plan: &SamplePlan) -> Result<f64, SetError> {
    set.check_dim(anchor)?;
    set.check_dim(lambda)?;
    if lambda.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let pts = probe_points(set, anchor, Some(lambda), plan)?;
    Ok(pts
        .iter()
        .map(|z| lambda.iter().zip(z.iter().zip(anchor)).map(|(l, (zi, ai))| l * (zi - ai)).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

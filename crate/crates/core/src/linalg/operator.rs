use super::factor::{estimates_from_values, power_iteration, symmetric_eigen, SpectralEstimates};
use super::{all_finite, check_len, LinalgError, Matrix};

/// Symmetric positive definite tridiagonal matrix with a cached LDLᵀ
/// factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalSpd {
    diag: Vec<f64>,
    off: Vec<f64>,
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

impl TridiagonalSpd {
    /// `off` has `diag.len() - 1` entries (sub = super diagonal).
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, LinalgError> {
        let n = diag.len();
        if n == 0 {
            return Err(LinalgError::DimensionMismatch { expected: 1, got: 0 });
        }
        check_len(&off, n - 1)?;
        if !all_finite(&diag) || !all_finite(&off) {
            return Err(LinalgError::NonFinite);
        }
        let mut pivots = vec![0.0; n];
        let mut mult = vec![0.0; n - 1];
        pivots[0] = diag[0];
        for i in 0..n {
            if i > 0 {
                mult[i - 1] = off[i - 1] / pivots[i - 1];
                pivots[i] = diag[i] - mult[i - 1] * off[i - 1];
            }
            if !(pivots[i] > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { index: i, pivot: pivots[i] });
            }
        }
        Ok(TridiagonalSpd { diag, off, pivots, mult })
    }

    /// (1/h²)·tridiag(−1, 2, −1) with h = 1/(n+1).
    pub fn dirichlet_laplacian(n: usize) -> Result<Self, LinalgError> {
        let h = 1.0 / (n as f64 + 1.0);
        let s = 1.0 / (h * h);
        TridiagonalSpd::new(vec![2.0 * s; n], vec![-s; n.saturating_sub(1)])
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// T x
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(x, self.dim())?;
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        Ok(y)
    }

    /// T⁻¹ b
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(b, self.dim())?;
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.mult[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.mult[i] * x[i + 1];
        }
        Ok(x)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, self.diag[i]);
            if i + 1 < n {
                m.set(i, i + 1, self.off[i]);
                m.set(i + 1, i, self.off[i]);
            }
        }
        m
    }

    /// Smallest eigenpair by inverse power iteration.
    pub fn smallest_eigenpair(&self, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>), LinalgError> {
        let (inv, mut v) = power_iteration(|x| self.solve(x), self.dim(), tol, max_iter)?;
        debug_assert!(inv > 0.0);
        // the vector lags the Rayleigh quotient; polish with plain inverse
        // steps while the eigen-residual keeps dropping
        let residual = |v: &[f64]| -> Result<(f64, f64), LinalgError> {
            let tv = self.apply(v)?;
            let mu = super::dot(v, &tv) / super::dot(v, v);
            let r: Vec<f64> = tv.iter().zip(v).map(|(a, b)| a - mu * b).collect();
            Ok((mu, super::norm(&r)))
        };
        let (mut mu, mut res) = residual(&v)?;
        for _ in 0..100 {
            let w = self.solve(&v)?;
            let w = super::scale(&w, 1.0 / super::norm(&w));
            let (m2, r2) = residual(&w)?;
            if r2 >= 0.9 * res {
                break;
            }
            v = w;
            mu = m2;
            res = r2;
        }
        Ok((mu, v))
    }

    /// Largest eigenvalue by power iteration.
    pub fn largest_eigenvalue(&self, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
        power_iteration(|x| self.apply(x), self.dim(), tol, max_iter).map(|(r, _)| r)
    }
}

/// Linear map S : 𝒰 → 𝒳.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearOperator {
    Dense(Matrix),
    /// T⁻¹ for an SPD tridiagonal T; never densified on apply.
    TridiagonalInverse(TridiagonalSpd),
    /// Vertical stack: x ↦ (S₁x; S₂x; …). All blocks share the column count.
    Stack(Vec<LinearOperator>),
}

impl LinearOperator {
    pub fn identity(n: usize) -> Self {
        LinearOperator::Dense(Matrix::identity(n))
    }

    pub fn stack(blocks: Vec<LinearOperator>) -> Result<Self, LinalgError> {
        let cols = blocks.first().map(|b| b.cols()).ok_or(LinalgError::DimensionMismatch {
            expected: 1,
            got: 0,
        })?;
        for b in &blocks {
            if b.cols() != cols {
                return Err(LinalgError::DimensionMismatch { expected: cols, got: b.cols() });
            }
        }
        Ok(LinearOperator::Stack(blocks))
    }

    pub fn rows(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.rows(),
            LinearOperator::TridiagonalInverse(t) => t.dim(),
            LinearOperator::Stack(bs) => bs.iter().map(|b| b.rows()).sum(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.cols(),
            LinearOperator::TridiagonalInverse(t) => t.dim(),
            LinearOperator::Stack(bs) => bs.first().map_or(0, |b| b.cols()),
        }
    }

    /// Sv, or S*v when `adjoint`.
    pub fn operator_apply(&self, v: &[f64], adjoint: bool) -> Result<Vec<f64>, LinalgError> {
        if adjoint {
            self.apply_adjoint(v)
        } else {
            self.apply(v)
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(v, self.cols())?;
        match self {
            LinearOperator::Dense(m) => Ok(m.matvec_unchecked(v)),
            LinearOperator::TridiagonalInverse(t) => t.solve(v),
            LinearOperator::Stack(bs) => {
                let mut out = Vec::with_capacity(self.rows());
                for b in bs {
                    out.extend(b.apply(v)?);
                }
                Ok(out)
            }
        }
    }

    pub fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(w, self.rows())?;
        match self {
            LinearOperator::Dense(m) => Ok(m.tr_matvec_unchecked(w)),
            LinearOperator::TridiagonalInverse(t) => t.solve(w),
            LinearOperator::Stack(bs) => {
                let mut out = vec![0.0; self.cols()];
                let mut off = 0;
                for b in bs {
                    let r = b.rows();
                    let part = b.apply_adjoint(&w[off..off + r])?;
                    super::axpy(1.0, &part, &mut out);
                    off += r;
                }
                Ok(out)
            }
        }
    }

    /// Row ranges of each stack block (a single range for other kinds).
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            LinearOperator::Stack(bs) => {
                let mut off = 0;
                bs.iter()
                    .map(|b| {
                        let r = off..off + b.rows();
                        off += b.rows();
                        r
                    })
                    .collect()
            }
            _ => std::iter::once(0..self.rows()).collect(),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            LinearOperator::Dense(m) => m.clone(),
            LinearOperator::TridiagonalInverse(t) => {
                let n = t.dim();
                let mut m = Matrix::zeros(n, n);
                let mut e = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    let col = t.solve(&e).expect("dimension fixed");
                    e[j] = 0.0;
                    for i in 0..n {
                        m.set(i, j, col[i]);
                    }
                }
                // T⁻¹ is symmetric; remove round-off asymmetry
                for i in 0..n {
                    for j in 0..i {
                        let s = 0.5 * (m.get(i, j) + m.get(j, i));
                        m.set(i, j, s);
                        m.set(j, i, s);
                    }
                }
                m
            }
            LinearOperator::Stack(bs) => {
                let cols = self.cols();
                let mut data = Vec::with_capacity(self.rows() * cols);
                for b in bs {
                    data.extend_from_slice(b.to_dense().as_slice());
                }
                Matrix::from_row_major(self.rows(), cols, data).expect("consistent stack")
            }
        }
    }

    /// S*S as a dense matrix.
    pub fn gram_dense(&self) -> Matrix {
        self.to_dense().gram()
    }

    /// S S* as a dense matrix.
    pub fn outer_gram_dense(&self) -> Matrix {
        self.to_dense().transpose().gram()
    }

    /// Extreme eigenvalues of S*S (squared singular values of S).
    pub fn gram_spectrum(&self, rank_tol: f64) -> Result<SpectralEstimates, LinalgError> {
        match self {
            LinearOperator::TridiagonalInverse(t) => {
                let (mu_min, _) = t.smallest_eigenpair(1e-12, 10_000)?;
                let mu_max = t.largest_eigenvalue(1e-12, 10_000)?;
                Ok(SpectralEstimates {
                    largest: 1.0 / (mu_min * mu_min),
                    smallest_positive: 1.0 / (mu_max * mu_max),
                })
            }
            _ => {
                let eig = symmetric_eigen(&self.gram_dense())?;
                Ok(estimates_from_values(&eig.values, rank_tol))
            }
        }
    }

    /// ‖S‖² = λ_max(S*S).
    pub fn norm_sq(&self) -> Result<f64, LinalgError> {
        match self {
            LinearOperator::Dense(m) if m.cols() <= 512 => {
                let eig = symmetric_eigen(&m.gram())?;
                Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0))
            }
            LinearOperator::TridiagonalInverse(_) => Ok(self.gram_spectrum(0.0)?.largest),
            _ => {
                let n = self.cols();
                power_iteration(|x| self.apply_adjoint(&self.apply(x)?), n, 1e-10, 10_000)
                    .map(|(r, _)| r)
            }
        }
    }
}

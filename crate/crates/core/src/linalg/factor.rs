use super::{check_len, dot, norm, LinalgError, Matrix};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Lower-triangular Cholesky factor, A = L Lᵀ.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

pub fn cholesky(a: &Matrix) -> Result<Cholesky, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: a.cols() });
    }
    let asym = a.asymmetry().unwrap_or(0.0);
    if asym > 1e-12 * a.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.dim();
        check_len(b, n)?;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        Ok(y)
    }
}

/// Solves Ax = b for symmetric positive definite A, with one step of
/// iterative refinement.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let c = cholesky(a)?;
    let mut x = c.solve(b)?;
    let ax = a.matvec_unchecked(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = c.solve(&r)?;
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix. `values` ascending, `vectors`
/// holds the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

/// Cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: a.cols() });
    }
    let mut m = a.clone();
    // symmetrize against round-off in callers
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius();
    let mut converged = n < 2 || scale == 0.0;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_MAX_SWEEPS {
        sweep += 1;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { iterations: sweep, best: f64::NAN });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new, v.get(k, old));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinNormSolution {
    pub y: Vec<f64>,
    pub residual: f64,
    pub rank: usize,
}

/// Minimum-norm least-squares solution of Ay = g for symmetric PSD A.
/// Eigenvalues at or below `rank_tol * max|eig|` are treated as zero.
pub fn min_norm_solve(a: &Matrix, g: &[f64], rank_tol: f64) -> Result<MinNormSolution, LinalgError> {
    check_len(g, a.rows())?;
    let eig = symmetric_eigen(a)?;
    Ok(min_norm_from_eigen(a, &eig, g, rank_tol))
}

pub(crate) fn min_norm_from_eigen(
    a: &Matrix,
    eig: &SymmetricEigen,
    g: &[f64],
    rank_tol: f64,
) -> MinNormSolution {
    let n = a.rows();
    let top = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cut = rank_tol * top;
    let mut y = vec![0.0; n];
    let mut rank = 0;
    for (k, &w) in eig.values.iter().enumerate() {
        if top == 0.0 || w <= cut {
            continue;
        }
        rank += 1;
        let vk = eig.vector(k);
        let c = dot(&vk, g) / w;
        super::axpy(c, &vk, &mut y);
    }
    let ay = a.matvec_unchecked(&y);
    let residual = ay.iter().zip(g).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    MinNormSolution { y, residual, rank }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimates {
    pub largest: f64,
    pub smallest_positive: f64,
}

/// Extreme eigenvalues of a symmetric PSD matrix. `smallest_positive`
/// ignores eigenvalues at or below `rank_tol * largest` (0 if none remain).
pub fn spectral_estimates(a: &Matrix, rank_tol: f64) -> Result<SpectralEstimates, LinalgError> {
    let eig = symmetric_eigen(a)?;
    Ok(estimates_from_values(&eig.values, rank_tol))
}

pub(crate) fn estimates_from_values(values: &[f64], rank_tol: f64) -> SpectralEstimates {
    let largest = values.iter().fold(0.0_f64, |m, x| m.max(*x));
    let smallest_positive = values
        .iter()
        .copied()
        .filter(|w| *w > rank_tol * largest && largest > 0.0)
        .fold(f64::INFINITY, f64::min);
    SpectralEstimates {
        largest,
        smallest_positive: if smallest_positive.is_finite() { smallest_positive } else { 0.0 },
    }
}

/// Power iteration for the dominant eigenpair of a symmetric operator given
/// by `apply`. Stops once the Rayleigh quotient and the (sign-aligned) unit
/// vector both change by at most `tol` (relative for the quotient).
pub fn power_iteration<F>(
    apply: F,
    dim: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>), LinalgError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, LinalgError>,
{
    // deterministic start with components along every mode
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + 0.25 * ((i as f64 + 1.0) * 0.7).sin()).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut rho = 0.0;
    for it in 1..=max_iter {
        let y = apply(&x)?;
        let new_rho = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok((0.0, x));
        }
        let mut z: Vec<f64> = y.iter().map(|v| v / ny).collect();
        if dot(&z, &x) < 0.0 {
            z.iter_mut().for_each(|v| *v = -*v);
        }
        let dx = super::dist(&z, &x);
        let drho = (new_rho - rho).abs();
        x = z;
        rho = new_rho;
        if it > 1 && drho <= tol * rho.abs() && dx <= tol.sqrt().min(1e-4).max(tol) {
            let y = apply(&x)?;
            return Ok((dot(&x, &y), x));
        }
    }
    Err(LinalgError::NoConvergence { iterations: max_iter, best: rho })
}

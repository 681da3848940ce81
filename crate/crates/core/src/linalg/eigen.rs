use super::Matrix;
use crate::error::{Error, Result};

/// Eigendecomposition `A = Q diag(λ) Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl SymEigen {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let qi = q[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += qi * q[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }
}

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

fn symmetry_tol(a: &Matrix) -> f64 {
    1e-8 * a.max_abs().max(1.0)
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    match a.asymmetry() {
        None => Err(Error::shape(
            "sym_eigen",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        )),
        Some(asym) if asym > symmetry_tol(a) => Err(Error::NotSymmetric { asymmetry: asym }),
        Some(_) => Ok(()),
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below `1e-12`
/// relative to the input's Frobenius norm.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    check_symmetric(a)?;
    if !a.is_finite() {
        return Err(Error::NonFinite("sym_eigen input".into()));
    }
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut q = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let target = OFF_DIAGONAL_TOL * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = m[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let arr = m[(r, r)];
                // Rotation angle that zeroes m[p][r].
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;

                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = q[(k, src)];
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues in `[-clamp_tol, 0)` are rounding noise and are clamped to zero;
/// anything more negative means the input was not PSD. `None` uses
/// `1e-10 × max |λ|`.
pub fn sym_sqrt(a: &Matrix, clamp_tol: Option<f64>) -> Result<Matrix> {
    let eig = sym_eigen(a)?;
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = clamp_tol.unwrap_or(1e-10 * max_abs);
    if let Some(&lowest) = eig.eigenvalues.first() {
        if lowest < -tol {
            return Err(Error::NotPsd {
                eigenvalue: lowest,
                tolerance: tol,
            });
        }
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()).symmetrized())
}

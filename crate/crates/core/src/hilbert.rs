//! Finite-dimensional stand-in for the reference self-adjoint operator `A°`.
//!
//! A [`SelfAdjointGenerator`] is a dense symmetric matrix together with its
//! eigendecomposition. All shifted solves and square-root energies go through
//! the cached spectrum, which keeps them deterministic and exact for
//! eigenvectors.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Relative asymmetry accepted for explicit matrices.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// How to build a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Dense symmetric matrix, row-major.
    Explicit { matrix: Vec<Vec<f64>> },
    /// Second-difference Dirichlet Laplacian on `n` interior nodes with spacing `h`.
    #[serde(rename = "dirichlet_1d")]
    Dirichlet1d { n: usize, h: f64 },
    /// Diagonal matrix with the given entries.
    Diagonal { eigenvalues: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SelfAdjointGenerator {
    matrix: Matrix,
    /// Ascending.
    eigenvalues: Vector,
    /// Orthonormal columns matching `eigenvalues`.
    eigenvectors: Matrix,
    lower_bound: f64,
}

impl SelfAdjointGenerator {
    pub fn assemble(spec: &GeneratorSpec) -> Result<Self> {
        match spec {
            GeneratorSpec::Explicit { matrix } => {
                let n = matrix.len();
                if n == 0 {
                    return Err(Error::InvalidGenerator("empty matrix".into()));
                }
                if let Some(row) = matrix.iter().find(|row| row.len() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: row.len(),
                    });
                }
                Self::from_matrix(Matrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            GeneratorSpec::Dirichlet1d { n, h } => {
                if *n < 2 {
                    return Err(Error::InvalidGenerator(format!(
                        "dirichlet_1d needs n >= 2, got {n}"
                    )));
                }
                if !(*h > 0.0) || !h.is_finite() {
                    return Err(Error::InvalidGenerator(format!(
                        "dirichlet_1d needs h > 0, got {h}"
                    )));
                }
                let scale = 1.0 / (h * h);
                let matrix = Matrix::from_fn(*n, *n, |i, j| {
                    if i == j {
                        2.0 * scale
                    } else if i.abs_diff(j) == 1 {
                        -scale
                    } else {
                        0.0
                    }
                });
                Self::from_matrix(matrix)
            }
            GeneratorSpec::Diagonal { eigenvalues } => {
                if eigenvalues.is_empty() {
                    return Err(Error::InvalidGenerator("empty eigenvalue list".into()));
                }
                if eigenvalues.iter().any(|e| !e.is_finite()) {
                    return Err(Error::InvalidGenerator("non-finite eigenvalue".into()));
                }
                Self::from_matrix(Matrix::from_diagonal(&Vector::from_column_slice(
                    eigenvalues,
                )))
            }
        }
    }

    /// Builds a generator from a dense matrix, symmetrizing it when the
    /// asymmetry is within [`SYMMETRY_TOLERANCE`].
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidGenerator(format!(
                "matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGenerator("non-finite entry".into()));
        }
        let asymmetry = relative_asymmetry(&matrix);
        if asymmetry > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let (eigenvalues, eigenvectors) = sorted_symmetric_eigen(&matrix);
        let lower_bound = -eigenvalues[0];
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            lower_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    /// `ω`, with `A° + ω ≥ 0` sharp.
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn check_shift(&self, lambda: f64) -> Result<()> {
        if lambda > self.lower_bound && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidShift {
                lambda,
                bound: self.lower_bound,
            })
        }
    }

    fn check_dim(&self, v: &Vector) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            })
        }
    }

    /// Applies `f(eigenvalue)` spectrally: `V diag(f(e)) Vᵀ b`.
    pub fn spectral_apply(&self, b: &Vector, f: impl Fn(f64) -> f64) -> Vector {
        let mut coeffs = self.eigenvectors.tr_mul(b);
        for (c, &e) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= f(e);
        }
        &self.eigenvectors * coeffs
    }

    /// `V diag(f(e)) Vᵀ` as a dense matrix.
    pub fn spectral_matrix(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let weights = self.eigenvalues.map(f);
        let scaled = Matrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.eigenvectors[(i, j)] * weights[j]
        });
        scaled * self.eigenvectors.transpose()
    }

    /// `(A° + λ) u`.
    pub fn apply_shifted(&self, lambda: f64, u: &Vector) -> Vector {
        &self.matrix * u + u * lambda
    }

    /// `R°_λ b = (A° + λ)^{-1} b`, with one step of iterative refinement.
    pub fn resolvent_apply(&self, lambda: f64, b: &Vector) -> Result<Vector> {
        self.check_shift(lambda)?;
        self.check_dim(b)?;
        let mut x = self.spectral_apply(b, |e| 1.0 / (e + lambda));
        let residual = b - self.apply_shifted(lambda, &x);
        x += self.spectral_apply(&residual, |e| 1.0 / (e + lambda));
        Ok(x)
    }

    /// `R°_λ` as a dense matrix.
    pub fn resolvent_matrix(&self, lambda: f64) -> Result<Matrix> {
        self.check_shift(lambda)?;
        Ok(self.spectral_matrix(|e| 1.0 / (e + lambda)))
    }

    /// `½‖(A° + λ°)^{1/2} u‖²`.
    pub fn half_power_energy(&self, lambda0: f64, u: &Vector) -> Result<f64> {
        self.check_shift(lambda0)?;
        self.check_dim(u)?;
        let coeffs = self.eigenvectors.tr_mul(u);
        Ok(0.5
            * coeffs
                .iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, e)| (e + lambda0) * c * c)
                .sum::<f64>())
    }
}

fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn sorted_symmetric_eigen(m: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

//! Dense symmetric matrices of small dimension.
//!
//! Everything downstream (bound formulas, Wasserstein distances, diffused
//! precisions) only ever needs symmetric matrices of dimension at most a few
//! dozen, so this module keeps one representation and a cyclic Jacobi
//! eigensolver, which is deterministic and needs no convergence tuning.

use crate::error::{check_dim, Error, Result};

/// Eigenvalues at or above this (negative) value are clamped to zero before
/// taking a square root.
pub const PSD_CLAMP: f64 = -1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Row-major symmetric matrix. Construction symmetrizes its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

/// Eigen-decomposition `A = V diag(values) Vᵀ`; `vectors[k]` is the k-th
/// unit eigenvector.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymMatrix {
    /// Builds a matrix from `dim * dim` row-major entries, replacing them
    /// by `(A + Aᵀ) / 2`.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        check_dim(dim * dim, entries.len())?;
        let mut m = SymMatrix { dim, data: entries };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = s;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let d = v.len();
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.data[i * d + j] = v[i] * v[j];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymMatrix> {
        check_dim(self.dim, other.dim)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self + s·I`
    pub fn shift_diagonal(&self, s: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += s;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked `out = self · v`; callers guarantee lengths.
    #[inline]
    pub(crate) fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        Ok(dot(&ax, x))
    }

    fn raw_product(&self, other: &SymMatrix) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    /// Symmetric part of `self · other`, i.e. `(AB + BA) / 2`. Exact when
    /// the two matrices commute.
    pub fn sym_product(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim, other.dim)?;
        SymMatrix::new(self.dim, self.raw_product(other))
    }

    /// `B · self · B` for symmetric `B`, which is symmetric.
    pub fn sandwich(&self, b: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim, b.dim)?;
        let left = SymMatrix {
            dim: self.dim,
            data: b.raw_product(self),
        };
        SymMatrix::new(self.dim, left.raw_product(b))
    }

    /// Cyclic Jacobi eigen-decomposition.
    pub fn eigen(&self) -> SymEigen {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            v[i * d + i] = 1.0;
        }
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale > 0.0 {
            for _ in 0..JACOBI_MAX_SWEEPS {
                let off: f64 = (0..d)
                    .flat_map(|i| (0..d).filter(move |j| *j != i).map(move |j| (i, j)))
                    .map(|(i, j)| a[i * d + j] * a[i * d + j])
                    .sum::<f64>()
                    .sqrt();
                if off <= 1e-15 * scale {
                    break;
                }
                for p in 0..d {
                    for q in (p + 1)..d {
                        let apq = a[p * d + q];
                        if apq.abs() <= f64::MIN_POSITIVE {
                            continue;
                        }
                        let app = a[p * d + p];
                        let aqq = a[q * d + q];
                        let theta = (aqq - app) / (2.0 * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..d {
                            let akp = a[k * d + p];
                            let akq = a[k * d + q];
                            a[k * d + p] = c * akp - s * akq;
                            a[k * d + q] = s * akp + c * akq;
                        }
                        for k in 0..d {
                            let apk = a[p * d + k];
                            let aqk = a[q * d + k];
                            a[p * d + k] = c * apk - s * aqk;
                            a[q * d + k] = s * apk + c * aqk;
                        }
                        for k in 0..d {
                            let vkp = v[k * d + p];
                            let vkq = v[k * d + q];
                            v[k * d + p] = c * vkp - s * vkq;
                            v[k * d + q] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        SymEigen {
            values: (0..d).map(|i| a[i * d + i]).collect(),
            vectors: (0..d)
                .map(|k| (0..d).map(|i| v[i * d + k]).collect())
                .collect(),
        }
    }

    /// `V diag(f(λ)) Vᵀ`
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        self.eigen().reconstruct(f)
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigen()
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen()
            .values
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Lower-triangular Cholesky factor.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let d = self.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let diag = self.get(j, j) - (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum::<f64>();
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    row: j,
                    pivot: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let s = self.get(i, j) - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: d, lower: l })
    }

    pub fn cholesky_inverse(&self) -> Result<SymMatrix> {
        self.cholesky()?.inverse()
    }

    /// Principal square root of a PSD matrix.
    pub fn sqrtm_psd(&self) -> Result<SymMatrix> {
        let eig = self.eigen();
        if let Some(bad) = eig.values.iter().find(|v| **v < PSD_CLAMP) {
            return Err(Error::NotPsd { eigenvalue: *bad });
        }
        Ok(eig.reconstruct(|v| v.max(0.0).sqrt()))
    }

    /// Inverse of a symmetric, possibly indefinite, matrix through its
    /// eigen-decomposition. Fails when the smallest `|λ|` falls below
    /// `rel_tol · ‖A‖`.
    pub fn symmetric_inverse(&self, rel_tol: f64) -> Result<SymMatrix> {
        let eig = self.eigen();
        let norm = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let min_abs = eig.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if !(min_abs >= rel_tol * norm) || min_abs == 0.0 {
            return Err(Error::SingularLambda {
                min_abs_eigenvalue: min_abs,
                norm,
            });
        }
        Ok(eig.reconstruct(|v| 1.0 / v))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl SymEigen {
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.values.len();
        let mut data = vec![0.0; d * d];
        for (lambda, vec) in self.values.iter().zip(&self.vectors) {
            let w = f(*lambda);
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] += w * vec[i] * vec[j];
                }
            }
        }
        let mut m = SymMatrix { dim: d, data };
        m.symmetrize();
        m
    }
}

/// Lower Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L · z`
    pub fn mul_lower(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..=i).map(|k| self.lower[i * d + k] * z[k]).sum();
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        check_dim(d, b.len())?;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| self.lower[i * d + k] * y[k]).sum();
            y[i] = (b[i] - s) / self.lower[i * d + i];
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = ((i + 1)..d).map(|k| self.lower[k * d + i] * x[k]).sum();
            x[i] = (y[i] - s) / self.lower[i * d + i];
        }
        Ok(x)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..d {
                data[i * d + j] = col[i];
            }
        }
        SymMatrix::new(d, data)
    }
}

pub fn spectral_norm(a: &SymMatrix) -> f64 {
    a.spectral_norm()
}

pub fn cholesky_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    a.cholesky_inverse()
}

pub fn sqrtm_psd(a: &SymMatrix) -> Result<SymMatrix> {
    a.sqrtm_psd()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

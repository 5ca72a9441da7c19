use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Symmetric bilinear form on R^n, stored densely with exact symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricForm {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricForm {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut f = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            f.entries[i * diag.len() + i] = *d;
        }
        f
    }

    /// Symmetrizes `m` as (m + mᵀ)/2.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "square matrix required");
        let mut f = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                f.entries[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        f
    }

    /// Outer product u ⊗ u.
    pub fn outer(u: &[f64]) -> Self {
        let n = u.len();
        let mut f = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                f.entries[i * n + j] = u[i] * u[j];
            }
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius norm squared, |H|².
    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// self + c·id
    pub fn shift(&self, c: f64) -> Self {
        let mut f = self.clone();
        for i in 0..self.dim {
            f.entries[i * self.dim + i] += c;
        }
        f
    }

    /// Matrix square H².
    pub fn square(&self) -> Self {
        let m = self.to_matrix();
        Self::from_matrix(&(&m * &m))
    }

    /// Trace-free part H - tr(H)/n id.
    pub fn traceless(&self) -> Self {
        self.shift(-self.trace() / self.dim as f64)
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.entries[i * n + j] * v[i] * v[j];
            }
        }
        s
    }

    /// Eigenvalues in nondecreasing order with matching unit eigenvectors (columns).
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.to_matrix());
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&k| eig.eigenvectors.column(k).into_owned())
                .collect::<Vec<DVector<f64>>>(),
        );
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        let diff = self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / 1f64.max(self.max_abs()).max(other.max_abs())
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

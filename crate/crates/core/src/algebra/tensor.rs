use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::{MAX_DIM, MIN_DIM};

/// Number of coordinate 2-planes e_i ∧ e_j (i < j) in dimension `n`.
#[inline]
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Index of the coordinate 2-plane (i, j), i < j, in lexicographic order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// All pairs (i, j) with i < j in [`pair_index`] order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

/// Index and sign of an ordered pair; `None` when i == j.
#[inline]
fn signed_pair(n: usize, i: usize, j: usize) -> Option<(usize, f64)> {
    use std::cmp::Ordering::*;
    match i.cmp(&j) {
        Less => Some((pair_index(n, i, j), 1.0)),
        Greater => Some((pair_index(n, j, i), -1.0)),
        Equal => None,
    }
}

/// Algebraic curvature tensor in dimension n.
///
/// Stored as the symmetric N×N block over coordinate 2-planes, so that
/// R_ijkl = -R_jikl = -R_ijlk = R_klij hold by construction. The first
/// Bianchi identity is not implied by this storage: every constructor that
/// accepts arbitrary data routes through [`bianchi_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    dim: usize,
    pairs: usize,
    block: Vec<f64>,
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if !(MIN_DIM..=MAX_DIM).contains(&n) {
        return Err(LabError::UnsupportedDimension(n));
    }
    Ok(())
}

impl CurvatureTensor {
    pub fn zeros(n: usize) -> Result<Self> {
        check_dim(n)?;
        let p = pair_count(n);
        Ok(Self {
            dim: n,
            pairs: p,
            block: vec![0.0; p * p],
        })
    }

    pub(crate) fn zeros_unchecked(n: usize) -> Self {
        let p = pair_count(n);
        Self {
            dim: n,
            pairs: p,
            block: vec![0.0; p * p],
        }
    }

    /// Builds a tensor from component values on ordered plane pairs.
    /// `f(i, j, k, l)` is queried for i<j, k<l; the block is symmetrized and
    /// then projected onto the Bianchi subspace.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut t = Self::exact_from_fn(n, f)?;
        t.symmetrize();
        Ok(t.projected())
    }

    /// Like [`from_fn`](Self::from_fn) but skips symmetrization and projection.
    /// Used for formulas that satisfy all symmetries algebraically
    /// (Kulkarni–Nomizu products, model-space tensors).
    pub fn exact_from_fn(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut t = Self::zeros(n)?;
        let pl = pairs(n);
        for (a, &(i, j)) in pl.iter().enumerate() {
            for (b, &(k, l)) in pl.iter().enumerate() {
                t.block[a * t.pairs + b] = f(i, j, k, l);
            }
        }
        Ok(t)
    }

    /// Symmetric N×N block input; symmetrized and Bianchi-projected.
    pub fn from_block(n: usize, block: &DMatrix<f64>) -> Result<Self> {
        let mut t = Self::zeros(n)?;
        if block.nrows() != t.pairs || block.ncols() != t.pairs {
            return Err(LabError::DimensionMismatch {
                left: block.nrows(),
                right: t.pairs,
            });
        }
        for a in 0..t.pairs {
            for b in 0..t.pairs {
                t.block[a * t.pairs + b] = 0.5 * (block[(a, b)] + block[(b, a)]);
            }
        }
        Ok(t.projected())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn pair_count(&self) -> usize {
        self.pairs
    }

    #[inline]
    pub fn block(&self, a: usize, b: usize) -> f64 {
        self.block[a * self.pairs + b]
    }

    /// Sets a block entry and its mirror.
    pub(crate) fn set_block(&mut self, a: usize, b: usize, v: f64) {
        self.block[a * self.pairs + b] = v;
        self.block[b * self.pairs + a] = v;
    }

    /// R_ijkl with sign rules applied.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        match (signed_pair(self.dim, i, j), signed_pair(self.dim, k, l)) {
            (Some((a, sa)), Some((b, sb))) => sa * sb * self.block[a * self.pairs + b],
            _ => 0.0,
        }
    }

    /// Dense n⁴ array, index ((i·n + j)·n + k)·n + l.
    pub fn full(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n * n * n];
        for (a, &(i, j)) in pairs(n).iter().enumerate() {
            for (b, &(k, l)) in pairs(n).iter().enumerate() {
                let v = self.block[a * self.pairs + b];
                out[((i * n + j) * n + k) * n + l] = v;
                out[((j * n + i) * n + k) * n + l] = -v;
                out[((i * n + j) * n + l) * n + k] = -v;
                out[((j * n + i) * n + l) * n + k] = v;
            }
        }
        out
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.pairs, self.pairs, &self.block)
    }

    fn symmetrize(&mut self) {
        let p = self.pairs;
        for a in 0..p {
            for b in a + 1..p {
                let v = 0.5 * (self.block[a * p + b] + self.block[b * p + a]);
                self.block[a * p + b] = v;
                self.block[b * p + a] = v;
            }
        }
    }

    /// Largest |R_ijkl + R_iklj + R_iljk| over all index quadruples.
    pub fn bianchi_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Orthogonal projection onto the Bianchi subspace: removes the totally
    /// antisymmetric part (R_ijkl + R_iklj + R_iljk)/3, which only lives on
    /// quadruples of distinct indices.
    pub fn projected(&self) -> Self {
        let n = self.dim;
        let mut out = self.clone();
        let pl = pairs(n);
        for (a, &(i, j)) in pl.iter().enumerate() {
            for (b, &(k, l)) in pl.iter().enumerate().skip(a) {
                if k == i || k == j || l == i || l == j {
                    continue;
                }
                let alt =
                    (self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k)) / 3.0;
                out.set_block(a, b, self.block(a, b) - alt);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.block.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Max componentwise difference relative to max(1, component scale).
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let diff = self
            .block
            .iter()
            .zip(&other.block)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / 1f64.max(self.max_abs()).max(other.max_abs())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            pairs: self.pairs,
            block: self.block.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// self + c·other
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "tensor dimension mismatch");
        Self {
            dim: self.dim,
            pairs: self.pairs,
            block: self
                .block
                .iter()
                .zip(&other.block)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    /// Eigenvalues of the curvature operator (the block), nondecreasing.
    pub fn operator_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_matrix())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Embeds R into dimension n + extra as R ⊕ 0 (the curvature of M × R^extra).
    pub fn product_with_flat(&self, extra: usize) -> Self {
        let m = self.dim + extra;
        let mut out = Self::zeros_unchecked(m);
        for (a, &(i, j)) in pairs(self.dim).iter().enumerate() {
            for (b, &(k, l)) in pairs(self.dim).iter().enumerate() {
                out.block[pair_index(m, i, j) * out.pairs + pair_index(m, k, l)] = self.block(a, b);
            }
        }
        out
    }

    /// Upper triangle of the block, row-major.
    pub fn packed(&self) -> Vec<f64> {
        let p = self.pairs;
        let mut out = Vec::with_capacity(p * (p + 1) / 2);
        for a in 0..p {
            for b in a..p {
                out.push(self.block[a * p + b]);
            }
        }
        out
    }

    /// Inverse of [`packed`](Self::packed); no projection is applied.
    pub fn from_packed(n: usize, packed: &[f64]) -> Result<Self> {
        let mut t = Self::zeros(n)?;
        let p = t.pairs;
        if packed.len() != p * (p + 1) / 2 {
            return Err(LabError::Format(format!(
                "packed length {} does not match n = {n} (expected {})",
                packed.len(),
                p * (p + 1) / 2
            )));
        }
        let mut it = packed.iter();
        for a in 0..p {
            for b in a..p {
                let v = *it.next().unwrap();
                t.block[a * p + b] = v;
                t.block[b * p + a] = v;
            }
        }
        Ok(t)
    }

    pub(crate) fn from_packed_unchecked(n: usize, packed: &[f64]) -> Self {
        let mut t = Self::zeros_unchecked(n);
        let p = t.pairs;
        let mut idx = 0;
        for a in 0..p {
            for b in a..p {
                t.block[a * p + b] = packed[idx];
                t.block[b * p + a] = packed[idx];
                idx += 1;
            }
        }
        t
    }

    pub fn to_record(&self) -> TensorRecord {
        TensorRecord {
            version: TensorRecord::VERSION,
            n: self.dim,
            packed: self.packed(),
        }
    }

    pub fn from_record(rec: &TensorRecord) -> Result<Self> {
        if rec.version != TensorRecord::VERSION {
            return Err(LabError::Format(format!(
                "unsupported tensor record version {}",
                rec.version
            )));
        }
        Self::from_packed(rec.n, &rec.packed)
    }

    /// Conjugation by an orthogonal matrix: (Oᵀ R O)_ijkl = Σ R_pqrs O_pi O_qj O_rk O_sl.
    pub fn rotated(&self, o: &DMatrix<f64>) -> Self {
        let n = self.dim;
        let full = self.full();
        // contract one index at a time: n⁵ work
        let mut cur = full;
        for slot in 0..4 {
            let mut next = vec![0.0; n * n * n * n];
            let stride = n.pow(3 - slot as u32);
            for idx in 0..n * n * n * n {
                let digit = (idx / stride) % n;
                let base = idx - digit * stride;
                let mut s = 0.0;
                for p in 0..n {
                    s += cur[base + p * stride] * o[(p, digit)];
                }
                next[idx] = s;
            }
            cur = next;
        }
        let mut out = Self::zeros_unchecked(n);
        for (a, &(i, j)) in pairs(n).iter().enumerate() {
            for (b, &(k, l)) in pairs(n).iter().enumerate() {
                out.block[a * out.pairs + b] = cur[((i * n + j) * n + k) * n + l];
            }
        }
        out.symmetrize();
        out
    }
}

/// Orthogonal projection of a raw 4-index array (n⁴, pair symmetries
/// required within `tol` relative) onto algebraic curvature tensors.
pub fn bianchi_project(n: usize, raw: &[f64], tol: f64) -> Result<CurvatureTensor> {
    check_dim(n)?;
    if raw.len() != n.pow(4) {
        return Err(LabError::Format(format!(
            "raw array length {} != n^4",
            raw.len()
        )));
    }
    let at = |i: usize, j: usize, k: usize, l: usize| raw[((i * n + j) * n + k) * n + l];
    let scale = raw.iter().fold(1f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = at(i, j, k, l);
                    worst = worst
                        .max((v + at(j, i, k, l)).abs())
                        .max((v + at(i, j, l, k)).abs())
                        .max((v - at(k, l, i, j)).abs());
                }
            }
        }
    }
    if worst > tol * scale {
        return Err(LabError::SymmetryViolation(worst));
    }
    CurvatureTensor::from_fn(n, at)
}

/// Serialized form: packed upper-triangular N×N block, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub version: u32,
    pub n: usize,
    pub packed: Vec<f64>,
}

impl TensorRecord {
    pub const VERSION: u32 = 1;

    /// Little-endian binary layout: version u32, n u32, then packed f64s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.packed.len());
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for v in &self.packed {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || (bytes.len() - 8) % 8 != 0 {
            return Err(LabError::Format("truncated tensor record".into()));
        }
        let version = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let packed = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { version, n, packed })
    }
}

use nalgebra::DMatrix;

use super::form::SymmetricForm;
use super::tensor::{pairs, CurvatureTensor};
use crate::error::{LabError, Result};

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(LabError::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Kulkarni–Nomizu product
/// (A⊼B)_ijkl = A_ik B_jl − A_il B_jk − A_jk B_il + A_jl B_ik.
pub fn kn_product(a: &SymmetricForm, b: &SymmetricForm) -> Result<CurvatureTensor> {
    same_dim(a.dim(), b.dim())?;
    CurvatureTensor::exact_from_fn(a.dim(), |i, j, k, l| {
        a.get(i, k) * b.get(j, l) - a.get(i, l) * b.get(j, k) - a.get(j, k) * b.get(i, l)
            + a.get(j, l) * b.get(i, k)
    })
}

/// H⊼id, the common special case.
pub fn kn_with_identity(h: &SymmetricForm) -> CurvatureTensor {
    kn_product(h, &SymmetricForm::identity(h.dim())).expect("dimension checked by caller")
}

/// id⊼id in dimension n: R_ijij = 2 for i ≠ j.
pub fn id_kn_id(n: usize) -> CurvatureTensor {
    let mut t = CurvatureTensor::zeros_unchecked(n);
    for a in 0..t.pair_count() {
        t.set_block(a, a, 2.0);
    }
    t
}

/// Rows (a, c), columns (p, q): X[(a,c),(p,q)] = S_apcq.
fn mixed_matrix(s: &CurvatureTensor) -> DMatrix<f64> {
    let n = s.dim();
    DMatrix::from_fn(n * n, n * n, |r, c| s.get(r / n, c / n, r % n, c % n))
}

/// The symmetric bilinear map B with B(R, R) = Q(R).
pub fn b_product(s: &CurvatureTensor, t: &CurvatureTensor) -> Result<CurvatureTensor> {
    same_dim(s.dim(), t.dim())?;
    let n = s.dim();
    let bs = s.to_matrix();
    let bt = t.to_matrix();
    // ½ Σ_pq over ordered pairs is a sum over unordered planes
    let planes = &bs * &bt + &bt * &bs;
    let xs = mixed_matrix(s);
    let xt = mixed_matrix(t);
    let u = &xs * xt.transpose();
    // U_abcd = Σ_pq S_apcq T_bpdq lives at row (a,c), column (b,d)
    let at = |a: usize, b: usize, c: usize, d: usize| u[(a * n + c, b * n + d)];
    let pl = pairs(n);
    let mut out = CurvatureTensor::zeros_unchecked(n);
    for (x, &(i, j)) in pl.iter().enumerate() {
        for (y, &(k, l)) in pl.iter().enumerate().skip(x) {
            let v =
                planes[(x, y)] + at(i, j, k, l) - at(i, j, l, k) - at(j, i, k, l) + at(j, i, l, k);
            out.set_block(x, y, v);
        }
    }
    Ok(out.projected())
}

/// Hamilton's reaction term Q(R) = B(R, R).
pub fn q_quadratic(r: &CurvatureTensor) -> CurvatureTensor {
    b_product(r, r).expect("same tensor")
}

/// Ric_ik = Σ_j R_ijkj.
pub fn ricci(r: &CurvatureTensor) -> SymmetricForm {
    let n = r.dim();
    let mut ric = SymmetricForm::zeros(n);
    for i in 0..n {
        for k in i..n {
            let v = (0..n).map(|j| r.get(i, j, k, j)).sum();
            ric.set(i, k, v);
        }
    }
    ric
}

pub fn scalar(r: &CurvatureTensor) -> f64 {
    2.0 * (0..r.pair_count()).map(|a| r.block(a, a)).sum::<f64>()
}

pub fn ricci_traceless(r: &CurvatureTensor) -> SymmetricForm {
    ricci(r).traceless()
}

/// (S*H)_ik = Σ_jl S_ijkl H_jl.
pub fn contract_sh(s: &CurvatureTensor, h: &SymmetricForm) -> Result<SymmetricForm> {
    same_dim(s.dim(), h.dim())?;
    let n = s.dim();
    let mut out = SymmetricForm::zeros(n);
    for i in 0..n {
        for k in i..n {
            let mut v = 0.0;
            for j in 0..n {
                for l in 0..n {
                    v += s.get(i, j, k, l) * h.get(j, l);
                }
            }
            out.set(i, k, v);
        }
    }
    Ok(out)
}

/// Weyl part R − Ric₀⊼id/(n−2) − scal/(2n(n−1)) id⊼id.
pub fn weyl_part(r: &CurvatureTensor) -> CurvatureTensor {
    let n = r.dim() as f64;
    r.axpy(-1.0 / (n - 2.0), &kn_with_identity(&ricci_traceless(r)))
        .axpy(-scalar(r) / (2.0 * n * (n - 1.0)), &id_kn_id(r.dim()))
}

/// Removes the trace-free Ricci part: R − Ric₀(R)⊼id/(n−2).
pub fn remove_traceless_ricci(r: &CurvatureTensor) -> CurvatureTensor {
    let n = r.dim() as f64;
    r.axpy(-1.0 / (n - 2.0), &kn_with_identity(&ricci_traceless(r)))
}

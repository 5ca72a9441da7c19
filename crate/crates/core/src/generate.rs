//! Seeded random curvature tensors of prescribed type.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{id_kn_id, kn_product, kn_with_identity, remove_traceless_ricci, scalar};
use crate::algebra::{CurvatureTensor, SymmetricForm};
use crate::error::{LabError, Result};
use crate::oracle::{complex_sectional_min, curv_op_min_eig, ConeSpec, OracleOptions};
use crate::sampling::{
    gaussian, random_orthogonal, random_psd_form, random_tensor, rng_for, LabRng,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum CurvatureClass {
    Generic,
    /// Strictly PIC2, certified by the oracle.
    Pic2Interior,
    /// Nonnegative curvature operator, with the smallest eigenvalue near 0.
    PsdOperator,
    ConeMember {
        sigma: f64,
        theta: f64,
    },
    ConeBoundary {
        sigma: f64,
        theta: f64,
    },
}

/// A cone point together with the decomposition it was built from.
#[derive(Debug, Clone)]
pub struct ConeSample {
    pub r: CurvatureTensor,
    pub s: CurvatureTensor,
    pub h: SymmetricForm,
}

const ATTEMPTS: usize = 50;
const MIN_CERTIFIED: f64 = 1e-6;

/// Σ_k A_k⊼A_k with positive definite A_k: nonnegative curvature operator.
fn psd_kn_sum(rng: &mut LabRng, n: usize, terms: usize) -> CurvatureTensor {
    let mut out = CurvatureTensor::zeros_unchecked(n);
    for _ in 0..terms {
        let a = random_psd_form(rng, n).shift(0.05);
        out = out.add(&kn_product(&a, &a).expect("same dimension"));
    }
    out
}

/// A Ric₀-free tensor whose complex sectional minimum equals `margin`
/// (relative to its component scale).
fn random_gauge_s(
    rng: &mut LabRng,
    n: usize,
    margin: f64,
    opts: &OracleOptions,
) -> CurvatureTensor {
    let weight = rng.random_range(0.0..1.0);
    let raw = psd_kn_sum(rng, n, 2).add(&random_tensor(rng, n).scale(weight));
    let s0 = remove_traceless_ricci(&raw);
    let s0 = s0.scale(1.0 / s0.max_abs());
    let csm = complex_sectional_min(&s0, opts).value;
    // csm(X + c id⊼id) = csm(X) + 2c
    s0.axpy((margin - csm) / 2.0, &id_kn_id(n))
}

/// H = t/(n − 2σ) id − A with A ⪰ 0, tr A = 2σt/(n − 2σ), so tr H = t and
/// tr(H) id − (n − 2σ) H = (n − 2σ) A. With `singular` the smallest
/// eigenvalue of A is 0.
fn random_h(rng: &mut LabRng, n: usize, sigma: f64, t: f64, singular: bool) -> SymmetricForm {
    let gap = n as f64 - 2.0 * sigma;
    let mut a: Vec<f64> = (0..n).map(|_| gaussian(rng).abs() + 0.05).collect();
    if singular {
        a[0] = 0.0;
    }
    let total: f64 = a.iter().sum();
    let target = 2.0 * sigma * t / gap;
    let q = random_orthogonal(rng, n);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        a.iter().map(|x| x * target / total),
    ));
    let a = SymmetricForm::from_matrix(&(&q * d * q.transpose()));
    a.scale(-1.0).shift(t / gap)
}

/// A member of C(σ, θ) in its (S, H) parameterization. On the boundary the
/// gauge-optimal S is PIC2-critical and one linear constraint is active.
pub fn random_cone_sample(
    rng: &mut LabRng,
    n: usize,
    spec: &ConeSpec,
    boundary: bool,
    opts: &OracleOptions,
) -> Result<ConeSample> {
    spec.check_dim(n)?;
    let margin = if boundary {
        0.0
    } else {
        rng.random_range(0.05..0.5)
    };
    let s = random_gauge_s(rng, n, margin, opts);
    let floor = spec.theta * scalar(&s);
    // boundary points alternate between the eigen- and trace-active faces
    let trace_active = boundary && spec.theta > 0.0 && rng.random_bool(0.5);
    let t = if trace_active {
        floor
    } else {
        floor + rng.random_range(0.1..2.0)
    };
    let h = random_h(rng, n, spec.sigma, t, boundary && !trace_active);
    let r = s.add(&kn_with_identity(&h));
    let scale = r.max_abs();
    Ok(ConeSample {
        r: r.scale(1.0 / scale),
        s: s.scale(1.0 / scale),
        h: h.scale(1.0 / scale),
    })
}

pub fn random_curvature(
    n: usize,
    seed: u64,
    class: CurvatureClass,
    opts: &OracleOptions,
) -> Result<CurvatureTensor> {
    crate::algebra::check_dim(n)?;
    let mut rng = rng_for(seed, 0x9e4e);
    match class {
        CurvatureClass::Generic => Ok(random_tensor(&mut rng, n)),
        CurvatureClass::Pic2Interior => {
            for _ in 0..ATTEMPTS {
                let base = psd_kn_sum(&mut rng, n, 3);
                let noise = random_tensor(&mut rng, n).scale(0.05 * base.max_abs());
                let r = base.add(&noise);
                if complex_sectional_min(&r, opts).value > MIN_CERTIFIED * r.max_abs() {
                    return Ok(r);
                }
            }
            Err(LabError::SamplerExhausted(ATTEMPTS))
        }
        CurvatureClass::PsdOperator => {
            let r = random_tensor(&mut rng, n);
            // the operator of id⊼id is 2·identity
            let lift = -curv_op_min_eig(&r) / 2.0 + rng.random_range(0.0..0.01);
            Ok(r.axpy(lift, &id_kn_id(n)))
        }
        CurvatureClass::ConeMember { sigma, theta } => {
            Ok(random_cone_sample(&mut rng, n, &ConeSpec::new(sigma, theta)?, false, opts)?.r)
        }
        CurvatureClass::ConeBoundary { sigma, theta } => {
            Ok(random_cone_sample(&mut rng, n, &ConeSpec::new(sigma, theta)?, true, opts)?.r)
        }
    }
}

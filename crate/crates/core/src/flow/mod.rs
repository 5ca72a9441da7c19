//! Hamilton's ODE dR/dt = Q(R), both for R itself and for the coupled
//! evolution of a decomposition R = S + H⊼id.

mod integrate;
mod probes;
mod steps;

use crate::algebra::{
    contract_sh, id_kn_id, kn_product, kn_with_identity, q_quadratic, remove_traceless_ricci,
    ricci_traceless, scalar, CurvatureTensor, SymmetricForm,
};
use crate::error::{LabError, Result};

pub use integrate::{integrate, Controls, Stop, StopReason, TracePoint, TraceRecord, Trajectory};
pub use probes::{
    directional_derivatives, invariance_from, invariance_probe, sample_start, transversality_probe,
    InvarianceReport, SampleVerdict, SlackTarget, TransversalityReport, TransversalitySample,
    DIFFERENCE_STEPS, INVARIANCE_TOL,
};
pub use steps::{
    default_sigma_grid, gap_form_consistency, reaction_pair_eigenvalue,
    reaction_pair_high_sigma_form, reaction_pair_low_sigma_form, theta_bar_estimate,
    trace_face_derivative, trace_face_uncollected, validate_trace_face, EigenData, GapFormReport,
    ThetaBar, TraceFaceValidation,
};

/// Relative size of Ric₀(S) tolerated by the coupled system.
pub const GAUGE_TOL: f64 = 1e-8;

pub fn rhs_full(r: &CurvatureTensor) -> CurvatureTensor {
    q_quadratic(r)
}

/// The reaction part of dS/dt beyond Q(S):
/// (n−2)H⊼H − 2tr(H)H⊼id + 2H²⊼id + (2/(σ(n−2σ)))tr(H)² id⊼id − ((2−σ)/σ)|H|² id⊼id.
pub fn coupled_s_source(h: &SymmetricForm, sigma: f64) -> CurvatureTensor {
    let n = h.dim() as f64;
    let tr = h.trace();
    let idid = id_kn_id(h.dim());
    kn_product(h, h)
        .expect("same dimension")
        .scale(n - 2.0)
        .axpy(-2.0 * tr, &kn_with_identity(h))
        .axpy(2.0, &kn_with_identity(&h.square()))
        .axpy(2.0 / (sigma * (n - 2.0 * sigma)) * tr * tr, &idid)
        .axpy(-(2.0 - sigma) / sigma * h.norm_sq(), &idid)
}

fn gauge_scale(s: &CurvatureTensor, h: &SymmetricForm) -> f64 {
    s.max_abs().max(h.max_abs()).max(1.0)
}

/// (dS/dt, dH/dt) of the coupled system.
pub fn rhs_coupled(
    s: &CurvatureTensor,
    h: &SymmetricForm,
    sigma: f64,
) -> Result<(CurvatureTensor, SymmetricForm)> {
    if s.dim() != h.dim() {
        return Err(LabError::DimensionMismatch {
            left: s.dim(),
            right: h.dim(),
        });
    }
    let n = h.dim() as f64;
    if !(n - 2.0 * sigma > 0.0) {
        return Err(LabError::Precondition(format!(
            "n - 2 sigma = {} must be positive",
            n - 2.0 * sigma
        )));
    }
    let defect = ricci_traceless(s).max_abs();
    if defect > GAUGE_TOL * gauge_scale(s, h) {
        return Err(LabError::GaugeViolation(defect));
    }
    let (ds, dh) = coupled_unchecked(s, h, sigma);
    debug_assert!(
        coupled_residual(s, h, &ds, &dh) <= 1e-9,
        "coupled system left the Hamilton ODE"
    );
    Ok((ds, dh))
}

fn coupled_unchecked(
    s: &CurvatureTensor,
    h: &SymmetricForm,
    sigma: f64,
) -> (CurvatureTensor, SymmetricForm) {
    let n = h.dim() as f64;
    let tr = h.trace();
    let ds = q_quadratic(s).add(&coupled_s_source(h, sigma));
    let dh = contract_sh(s, h)
        .expect("same dimension")
        .scale(2.0)
        .add(&h.scale(2.0 / n * scalar(s) + 4.0 * tr))
        .add(&h.square().scale(-4.0))
        .shift(-2.0 / (sigma * (n - 2.0 * sigma)) * tr * tr + 2.0 / sigma * h.norm_sq());
    (ds, dh)
}

/// max|dS + dH⊼id − Q(S + H⊼id)| relative to max(1, |Q|).
pub fn coupled_residual(
    s: &CurvatureTensor,
    h: &SymmetricForm,
    ds: &CurvatureTensor,
    dh: &SymmetricForm,
) -> f64 {
    let q = q_quadratic(&s.add(&kn_with_identity(h)));
    q.max_rel_diff(&ds.add(&kn_with_identity(dh)))
}

/// Moves Ric₀(S) into H, leaving S + H⊼id unchanged.
pub fn regauge(s: &CurvatureTensor, h: &SymmetricForm) -> (CurvatureTensor, SymmetricForm) {
    let n = s.dim() as f64;
    let shift = ricci_traceless(s).scale(1.0 / (n - 2.0));
    (remove_traceless_ricci(s), h.add(&shift))
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeState {
    Full {
        r: CurvatureTensor,
    },
    Coupled {
        s: CurvatureTensor,
        h: SymmetricForm,
        sigma: f64,
    },
}

impl OdeState {
    pub fn dim(&self) -> usize {
        match self {
            OdeState::Full { r } => r.dim(),
            OdeState::Coupled { s, .. } => s.dim(),
        }
    }

    /// The curvature tensor represented by the state.
    pub fn tensor(&self) -> CurvatureTensor {
        match self {
            OdeState::Full { r } => r.clone(),
            OdeState::Coupled { s, h, .. } => s.add(&kn_with_identity(h)),
        }
    }

    pub fn scal(&self) -> f64 {
        match self {
            OdeState::Full { r } => scalar(r),
            OdeState::Coupled { s, h, .. } => scalar(s) + 2.0 * (s.dim() as f64 - 1.0) * h.trace(),
        }
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        match self {
            OdeState::Full { r } => r.packed(),
            OdeState::Coupled { s, h, .. } => {
                let mut v = s.packed();
                let n = h.dim();
                for i in 0..n {
                    for j in i..n {
                        v.push(h.get(i, j));
                    }
                }
                v
            }
        }
    }

    /// Rebuilds a state of the same shape from `v`.
    pub(crate) fn with_vec(&self, v: &[f64]) -> Self {
        let n = self.dim();
        let p = n * (n - 1) / 2;
        let tensor_len = p * (p + 1) / 2;
        match self {
            OdeState::Full { .. } => OdeState::Full {
                r: CurvatureTensor::from_packed_unchecked(n, &v[..tensor_len]),
            },
            OdeState::Coupled { sigma, .. } => {
                let s = CurvatureTensor::from_packed_unchecked(n, &v[..tensor_len]);
                let mut h = SymmetricForm::zeros(n);
                let mut it = v[tensor_len..].iter();
                for i in 0..n {
                    for j in i..n {
                        h.set(i, j, *it.next().expect("length matches shape"));
                    }
                }
                OdeState::Coupled {
                    s,
                    h,
                    sigma: *sigma,
                }
            }
        }
    }

    /// Time derivative, packed like [`to_vec`](Self::to_vec).
    pub(crate) fn derivative(&self) -> Vec<f64> {
        match self {
            OdeState::Full { r } => OdeState::Full { r: rhs_full(r) }.to_vec(),
            OdeState::Coupled { s, h, sigma } => {
                let (ds, dh) = coupled_unchecked(s, h, *sigma);
                OdeState::Coupled {
                    s: ds,
                    h: dh,
                    sigma: *sigma,
                }
                .to_vec()
            }
        }
    }

    /// Bianchi projection, and for the coupled system the gauge Ric₀(S) = 0.
    pub fn reprojected(&self) -> Self {
        match self {
            OdeState::Full { r } => OdeState::Full { r: r.projected() },
            OdeState::Coupled { s, h, sigma } => {
                let (s, h) = regauge(&s.projected(), h);
                OdeState::Coupled {
                    s,
                    h,
                    sigma: *sigma,
                }
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            OdeState::Full { r } => OdeState::Full { r: r.scale(c) },
            OdeState::Coupled { s, h, sigma } => OdeState::Coupled {
                s: s.scale(c),
                h: h.scale(c),
                sigma: *sigma,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_form, random_tensor, rng_for};

    fn cylinder(n: usize) -> CurvatureTensor {
        let mut d = vec![1.0; n];
        d[0] = -1.0;
        kn_with_identity(&SymmetricForm::diagonal(&d))
    }

    #[test]
    fn sphere_and_cylinder_rates() {
        for n in 4..=7 {
            let q = rhs_full(&id_kn_id(n));
            assert!(q.max_rel_diff(&id_kn_id(n).scale(4.0 * n as f64 - 4.0)) < 1e-13);
            let q = rhs_full(&cylinder(n));
            for j in 1..n {
                for k in 0..n {
                    for l in 0..n {
                        assert!(q.get(0, j, k, l).abs() < 1e-13);
                    }
                }
            }
        }
        assert_eq!(rhs_full(&CurvatureTensor::zeros(5).unwrap()).max_abs(), 0.0);
    }

    #[test]
    fn coupled_regression_values() {
        let n = 5;
        let s = CurvatureTensor::zeros(n).unwrap();
        let (ds, dh) = rhs_coupled(&s, &SymmetricForm::identity(n), 1.0).unwrap();
        assert!(dh.max_rel_diff(&SymmetricForm::identity(n).scale(28.0 / 3.0)) < 1e-14);
        assert!(ds.max_rel_diff(&id_kn_id(n).scale(20.0 / 3.0)) < 1e-14);
        let (ds, dh) = rhs_coupled(&s, &SymmetricForm::zeros(n), 1.0).unwrap();
        assert_eq!((ds.max_abs(), dh.max_abs()), (0.0, 0.0));
    }

    #[test]
    fn source_term_has_no_tracefree_ricci() {
        let mut rng = rng_for(11, 0);
        for n in 5..=8 {
            let h = random_form(&mut rng, n);
            let sigma = 0.3 + 1.7 * (n as f64 - 5.0) / 3.0;
            assert!(
                ricci_traceless(&coupled_s_source(&h, sigma)).max_abs()
                    < 1e-10 * (1.0 + h.norm_sq())
            );
        }
    }

    #[test]
    fn coupled_identity_on_random_states() {
        let mut rng = rng_for(12, 0);
        for n in 5..=8 {
            for k in 0..10 {
                let s = remove_traceless_ricci(&random_tensor(&mut rng, n));
                let h = random_form(&mut rng, n);
                let sigma = 0.1 + 0.19 * k as f64;
                let (ds, dh) = rhs_coupled(&s, &h, sigma).unwrap();
                assert!(coupled_residual(&s, &h, &ds, &dh) < 1e-12);
            }
        }
    }

    #[test]
    fn gauge_is_enforced() {
        let mut rng = rng_for(13, 0);
        let s = random_tensor(&mut rng, 5);
        let h = random_form(&mut rng, 5);
        assert!(matches!(
            rhs_coupled(&s, &h, 1.0),
            Err(LabError::GaugeViolation(_))
        ));
        let (s2, h2) = regauge(&s, &h);
        assert!(
            s2.add(&kn_with_identity(&h2))
                .max_rel_diff(&s.add(&kn_with_identity(&h)))
                < 1e-14
        );
        assert!(rhs_coupled(&s2, &h2, 1.0).is_ok());
    }

    #[test]
    fn state_vector_roundtrip() {
        let mut rng = rng_for(14, 0);
        let st = OdeState::Coupled {
            s: random_tensor(&mut rng, 5),
            h: random_form(&mut rng, 5),
            sigma: 1.5,
        };
        assert_eq!(st.with_vec(&st.to_vec()), st);
    }
}

//! Pointwise checks of the individual preservation arguments for C(σ, θ).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rhs_coupled;
use crate::algebra::{contract_sh, scalar, CurvatureTensor, SymmetricForm};
use crate::error::{LabError, Result};
use crate::sampling::{gaussian, rng_for};

/// Eigenvalues, ascending, of A = tr(H)/(n − 2σ) id − H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub a: Vec<f64>,
}

impl EigenData {
    pub fn new(mut a: Vec<f64>) -> Self {
        a.sort_by(f64::total_cmp);
        Self { a }
    }

    pub fn from_h(h: &SymmetricForm, sigma: f64) -> Self {
        let gap = h.dim() as f64 - 2.0 * sigma;
        Self::new(h.scale(-1.0).shift(h.trace() / gap).eigenvalues())
    }

    fn trace(&self) -> f64 {
        self.a.iter().sum()
    }

    fn norm_sq(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum()
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        let n = self.a.len();
        if i == j || i >= n || j >= n {
            return Err(LabError::Precondition(format!(
                "need distinct indices below {n}, got ({i}, {j})"
            )));
        }
        let floor = -1e-12 * self.a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if self.a[0] < floor {
            return Err(LabError::Precondition(format!(
                "negative eigenvalue {:e}",
                self.a[0]
            )));
        }
        Ok(())
    }
}

/// (n−2)a_i a_j + a_i² + a_j² − tr(A)(a_i + a_j) + tr(A)²/σ² − ((2−σ)/σ)|A|²,
/// the eigenvalue of the reaction term's curvature operator on e_i∧e_j.
pub fn reaction_pair_eigenvalue(a: &EigenData, sigma: f64, i: usize, j: usize) -> Result<f64> {
    a.check(i, j)?;
    let n = a.a.len() as f64;
    let (ai, aj, tr, sq) = (a.a[i], a.a[j], a.trace(), a.norm_sq());
    Ok(
        (n - 2.0) * ai * aj + ai * ai + aj * aj - tr * (ai + aj) + tr * tr / (sigma * sigma)
            - (2.0 - sigma) / sigma * sq,
    )
}

/// Σ_{p≠q, p,q∉{i,j}} a_p a_q, written without cancellation.
fn off_pair_sum(a: &EigenData, i: usize, j: usize) -> f64 {
    let rest: Vec<f64> =
        a.a.iter()
            .enumerate()
            .filter(|(k, _)| *k != i && *k != j)
            .map(|(_, x)| *x)
            .collect();
    let s: f64 = rest.iter().sum();
    let sq: f64 = rest.iter().map(|x| x * x).sum();
    s * s - sq
}

/// Sum-of-nonnegative-terms form, termwise nonnegative for σ ≤ 4/3.
pub fn reaction_pair_low_sigma_form(a: &EigenData, sigma: f64, i: usize, j: usize) -> Result<f64> {
    a.check(i, j)?;
    let n = a.a.len() as f64;
    let (ai, aj, tr, sq) = (a.a[i], a.a[j], a.trace(), a.norm_sq());
    Ok((n - 3.0) * ai * aj
        + (1.0 - sigma).powi(2) / (sigma * sigma) * tr * tr
        + (4.0 - 3.0 * sigma) / (2.0 * sigma) * (tr * tr - sq)
        + 0.5 * off_pair_sum(a, i, j))
}

/// Sum-of-nonnegative-terms form, termwise nonnegative for σ ≥ 4/3.
pub fn reaction_pair_high_sigma_form(a: &EigenData, sigma: f64, i: usize, j: usize) -> Result<f64> {
    a.check(i, j)?;
    let n = a.a.len() as f64;
    let (ai, aj, tr) = (a.a[i], a.a[j], a.trace());
    let ratio = (2.0 - sigma) / sigma;
    Ok((n - 4.0 + 2.0 * ratio) * ai * aj
        + (2.0 - sigma).powi(2) / (4.0 * sigma * sigma) * tr * tr
        + (3.0 * sigma - 4.0) / sigma * (0.5 * tr - ai - aj).powi(2)
        + ratio * off_pair_sum(a, i, j))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFormReport {
    /// Displayed d/dt(tr(H) id − (n−2σ)H) against a central difference of the flow.
    pub relative_error: f64,
    /// uᵀ(dM/dt)u at a null eigenvector u of M, when M is singular.
    pub boundary_derivative: Option<f64>,
    /// The 2 S*(M) part of that derivative.
    pub s_term: Option<f64>,
}

pub fn gap_form_consistency(
    s: &CurvatureTensor,
    h: &SymmetricForm,
    sigma: f64,
) -> Result<GapFormReport> {
    let n = h.dim();
    let nf = n as f64;
    let gap = nf - 2.0 * sigma;
    let tr = h.trace();
    let m_of = |h: &SymmetricForm| h.scale(-gap).shift(h.trace());
    let m = m_of(h);
    let sm = contract_sh(s, &m)?.scale(2.0);
    let display = sm
        .add(&m.scale(2.0 / nf * scalar(s) + 4.0 * tr))
        .add(&h.square().scale(4.0 * gap))
        .shift(-4.0 / gap * tr * tr);

    let (_, dh) = rhs_coupled(s, h, sigma)?;
    let eps = 1e-6 / (1.0 + dh.max_abs());
    let fd = m_of(&h.add(&dh.scale(eps)))
        .sub(&m_of(&h.add(&dh.scale(-eps))))
        .scale(0.5 / eps);
    let relative_error = display.sub(&fd).max_abs() / display.max_abs().max(1.0);

    let (vals, vecs) = m.eigen();
    let scale = m.max_abs().max(1.0);
    let (boundary_derivative, s_term) = if vals[0].abs() <= 1e-9 * scale {
        let u: Vec<f64> = vecs.column(0).iter().copied().collect();
        (Some(display.quad(&u)), Some(sm.quad(&u)))
    } else {
        (None, None)
    };
    Ok(GapFormReport {
        relative_error,
        boundary_derivative,
        s_term,
    })
}

fn trace_face_inputs(h: &SymmetricForm, scal_s: f64, theta: f64) -> Result<(f64, f64, f64)> {
    if !(theta > 0.0) {
        return Err(LabError::Precondition(
            "the trace constraint is only active for theta > 0".into(),
        ));
    }
    let tr = h.trace();
    if (tr - theta * scal_s).abs() > 1e-10 * tr.abs().max(1.0) {
        return Err(LabError::Precondition(format!(
            "tr(H) = {tr} is off the face tr(H) = theta scal(S)"
        )));
    }
    Ok((h.dim() as f64, tr, h.norm_sq()))
}

/// d/dt(tr(H) − θ scal(S)) on the face tr(H) = θ scal(S), in the collected form
/// 2tr²/(nθ) + (4+2nθ)(tr² − |H|²) + ((2+2(n−1)(2−σ)θ)/σ)(n|H|² − tr²)
/// − ((4+2(n−1)(n+4−2σ)θ)/(n−2σ)) tr².
pub fn trace_face_derivative(
    h: &SymmetricForm,
    scal_s: f64,
    theta: f64,
    sigma: f64,
) -> Result<f64> {
    let (n, tr, sq) = trace_face_inputs(h, scal_s, theta)?;
    Ok(trace_face_reduced(n, tr, sq, theta, sigma))
}

fn trace_face_reduced(n: f64, tr: f64, sq: f64, theta: f64, sigma: f64) -> f64 {
    let t2 = tr * tr;
    2.0 / (n * theta) * t2
        + (4.0 + 2.0 * n * theta) * (t2 - sq)
        + (2.0 + 2.0 * (n - 1.0) * (2.0 - sigma) * theta) / sigma * (n * sq - t2)
        - (4.0 + 2.0 * (n - 1.0) * (n + 4.0 - 2.0 * sigma) * theta) / (n - 2.0 * sigma) * t2
}

/// The same derivative assembled from d/dt tr(H) and d/dt scal(S) before collecting terms.
pub fn trace_face_uncollected(
    h: &SymmetricForm,
    scal_s: f64,
    theta: f64,
    sigma: f64,
) -> Result<f64> {
    let (n, tr, sq) = trace_face_inputs(h, scal_s, theta)?;
    let gap = n - 2.0 * sigma;
    let d_scal = 2.0 / n * scal_s * scal_s - 2.0 * n * (tr * tr - sq)
        + 4.0 * n * (n - 1.0) / (sigma * gap) * tr * tr
        - 2.0 * n * (n - 1.0) * (2.0 - sigma) / sigma * sq;
    let d_tr = 4.0 / n * scal_s * tr + 4.0 * (tr * tr - sq) - 2.0 * n / (sigma * gap) * tr * tr
        + 2.0 * n / sigma * sq;
    Ok(d_tr - theta * d_scal)
}

/// Minimum of the trace-face derivative over admissible H with tr(H) = 1.
///
/// The derivative depends on H only through tr(H) and |H|², and on the
/// admissible set |H|² ranges over [tr(H)²/n, ∞): the eigenvalue constraint
/// bounds H from above only. The minimum is therefore at H = id/n when the
/// |H|² coefficient is nonnegative and −∞ otherwise.
fn trace_face_min_over_h(n: usize, theta: f64, sigma: f64) -> f64 {
    let nf = n as f64;
    let slope =
        -(4.0 + 2.0 * nf * theta) + nf * (2.0 + 2.0 * (nf - 1.0) * (2.0 - sigma) * theta) / sigma;
    if slope < 0.0 {
        return f64::NEG_INFINITY;
    }
    trace_face_reduced(nf, 1.0, 1.0 / nf, theta, sigma)
}

pub fn default_sigma_grid() -> Vec<f64> {
    (1..=40).map(|k| 0.05 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBar {
    pub n: usize,
    pub theta_hat: f64,
    /// Grid value of σ where the predicate first fails above θ̂.
    pub binding_sigma: f64,
    pub bisection_steps: usize,
}

/// Largest θ for which the trace-face derivative is nonnegative on every
/// admissible H and every σ of the grid, by bisection.
pub fn theta_bar_estimate(n: usize, sigma_grid: &[f64]) -> Result<ThetaBar> {
    if n < 5 {
        return Err(LabError::Precondition(format!(
            "n = {n}: the estimate needs n >= 5"
        )));
    }
    let grid: Vec<f64> = if sigma_grid.is_empty() {
        default_sigma_grid()
    } else {
        sigma_grid.to_vec()
    };
    if grid.iter().any(|s| !(*s > 0.0 && *s <= 2.0)) {
        return Err(LabError::InvalidSpec(
            "sigma grid must lie in (0, 2]".into(),
        ));
    }
    let worst = |theta: f64| -> (f64, f64) {
        grid.iter()
            .map(|&s| (trace_face_min_over_h(n, theta, s), s))
            .fold(
                (f64::INFINITY, 0.0),
                |acc, x| if x.0 < acc.0 { x } else { acc },
            )
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while worst(hi).0 >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(LabError::Precondition(
                "predicate holds for every theta; grid too coarse".into(),
            ));
        }
    }
    let mut steps = 0;
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if worst(mid).0 >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    if !(lo > 0.0) {
        return Err(LabError::Precondition("no positive theta certified".into()));
    }
    Ok(ThetaBar {
        n,
        theta_hat: lo,
        binding_sigma: worst(hi).1,
        bisection_steps: steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFaceValidation {
    pub n: usize,
    pub theta: f64,
    pub samples: usize,
    pub min_value: f64,
    pub violations: usize,
    /// (σ, eigenvalues of H) of the most negative sample.
    pub worst_sigma: f64,
    pub worst_h: Vec<f64>,
}

/// Random admissible H on the face tr(H) = θ scal(S), normalized to tr(H) = 1.
pub fn validate_trace_face(
    n: usize,
    theta: f64,
    samples: usize,
    seed: u64,
    sigma_grid: &[f64],
) -> Result<TraceFaceValidation> {
    let grid: Vec<f64> = if sigma_grid.is_empty() {
        default_sigma_grid()
    } else {
        sigma_grid.to_vec()
    };
    let mut rng = rng_for(seed, 0x57e4);
    let nf = n as f64;
    let mut out = TraceFaceValidation {
        n,
        theta,
        samples,
        min_value: f64::INFINITY,
        violations: 0,
        worst_sigma: 0.0,
        worst_h: Vec::new(),
    };
    for k in 0..samples {
        let sigma = if k % 2 == 0 {
            grid[rng.random_range(0..grid.len())]
        } else {
            rng.random_range(1e-3..=2.0)
        };
        let gap = nf - 2.0 * sigma;
        if gap <= 0.0 {
            continue;
        }
        // A ⪰ 0 with tr A = 2σ/(n − 2σ); log-normal weights from nearly
        // isotropic to strongly concentrated
        let spread = 10f64.powf(rng.random_range(-4.0..0.5));
        let w: Vec<f64> = (0..n)
            .map(|_| (spread * gaussian(&mut rng)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        let h: Vec<f64> = w
            .iter()
            .map(|x| 1.0 / gap - 2.0 * sigma / gap * x / total)
            .collect();
        let form = SymmetricForm::diagonal(&h);
        let value = trace_face_derivative(&form, form.trace() / theta, theta, sigma)?;
        if value < -1e-9 {
            out.violations += 1;
        }
        if value < out.min_value {
            out.min_value = value;
            out.worst_sigma = sigma;
            out.worst_h = h;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{id_kn_id, kn_with_identity, remove_traceless_ricci};
    use crate::sampling::{random_form, random_psd_form, random_tensor};

    #[test]
    fn reaction_pair_special_values() {
        let zero = EigenData::new(vec![0.0; 5]);
        assert_eq!(reaction_pair_eigenvalue(&zero, 1.0, 0, 1).unwrap(), 0.0);
        let mut a = vec![0.0; 5];
        a[4] = 1.0;
        let a = EigenData::new(a);
        for j in 0..4 {
            let raw = reaction_pair_eigenvalue(&a, 1.0, 4, j).unwrap();
            assert!(raw.abs() < 1e-15);
            assert!((reaction_pair_low_sigma_form(&a, 1.0, 4, j).unwrap() - raw).abs() < 1e-12);
        }
        assert!(reaction_pair_eigenvalue(
            &EigenData::new(vec![-1.0, 1.0, 1.0, 1.0, 1.0]),
            1.0,
            0,
            1
        )
        .is_err());
        assert!(reaction_pair_eigenvalue(&zero, 1.0, 2, 2).is_err());
    }

    #[test]
    fn pair_forms_reproduce_the_eigenvalue() {
        let mut rng = rng_for(21, 0);
        for k in 0..2000 {
            let n = 5 + k % 4;
            let a = EigenData::new((0..n).map(|_| gaussian(&mut rng).abs()).collect());
            let sigma = rng.random_range(1e-3..=2.0);
            let (i, j) = (k % n, (k + 1 + k % (n - 1)) % n);
            if i == j {
                continue;
            }
            let raw = reaction_pair_eigenvalue(&a, sigma, i, j).unwrap();
            let scale = raw.abs().max(1.0) * (1.0 + 1.0 / (sigma * sigma));
            assert!(raw >= -1e-9);
            assert!(
                (reaction_pair_low_sigma_form(&a, sigma, i, j).unwrap() - raw).abs()
                    <= 1e-10 * scale
            );
            assert!(
                (reaction_pair_high_sigma_form(&a, sigma, i, j).unwrap() - raw).abs()
                    <= 1e-10 * scale
            );
        }
    }

    #[test]
    fn gap_form_display_matches_the_flow() {
        let mut rng = rng_for(22, 0);
        for n in 5..=7 {
            let s = remove_traceless_ricci(&random_tensor(&mut rng, n));
            let h = random_form(&mut rng, n);
            let rep = gap_form_consistency(&s, &h, 1.3).unwrap();
            assert!(rep.relative_error <= 1e-6, "{}", rep.relative_error);
            assert!(rep.boundary_derivative.is_none());
            let rep =
                gap_form_consistency(&s, &SymmetricForm::identity(n).scale(0.7), 1.3).unwrap();
            assert!(rep.relative_error <= 1e-6);
        }
    }

    #[test]
    fn gap_form_boundary_derivative_is_nonnegative_for_flat_s() {
        let n = 6;
        let sigma = 1.5;
        let mut rng = rng_for(23, 0);
        let s = CurvatureTensor::zeros(n).unwrap();
        for _ in 0..20 {
            // H = t/(n−2σ) id − A with A ⪰ 0 singular
            let mut a = random_psd_form(&mut rng, n).to_matrix();
            let (vals, vecs) = SymmetricForm::from_matrix(&a).eigen();
            a -= vecs.column(0) * vecs.column(0).transpose() * vals[0];
            let a = SymmetricForm::from_matrix(&a);
            let t = a.trace() * (n as f64 - 2.0 * sigma) / (2.0 * sigma);
            let h = a.scale(-1.0).shift(t / (n as f64 - 2.0 * sigma));
            let rep = gap_form_consistency(&s, &h, sigma).unwrap();
            assert!(rep.boundary_derivative.unwrap() >= -1e-9);
            assert_eq!(rep.s_term, Some(0.0));
        }
    }

    #[test]
    fn gap_form_s_term_is_nonnegative_for_einstein_s_with_nonnegative_operator() {
        use crate::catalog::{model_tensor, ModelKind};
        use crate::oracle::curv_op_min_eig;
        let n = 6;
        let sigma = 1.5;
        let mut rng = rng_for(24, 0);
        let sources = [
            id_kn_id(n).scale(0.3),
            model_tensor(ModelKind::Cp, n).unwrap(),
            model_tensor(ModelKind::ProductSpheres { k: 3 }, n).unwrap(),
        ];
        for s in &sources {
            assert!(curv_op_min_eig(s) >= -1e-12);
            for _ in 0..10 {
                let mut a = random_psd_form(&mut rng, n).to_matrix();
                let (vals, vecs) = SymmetricForm::from_matrix(&a).eigen();
                a -= vecs.column(0) * vecs.column(0).transpose() * vals[0];
                let a = SymmetricForm::from_matrix(&a);
                let t = a.trace() * (n as f64 - 2.0 * sigma) / (2.0 * sigma);
                let h = a.scale(-1.0).shift(t / (n as f64 - 2.0 * sigma));
                let rep = gap_form_consistency(s, &h, sigma).unwrap();
                let s_term = rep.s_term.unwrap();
                assert!(s_term >= -1e-9, "{s_term}");
                // the remaining terms cancel at the null eigenvector
                assert!(
                    (rep.boundary_derivative.unwrap() - s_term).abs()
                        <= 1e-9 * (1.0 + s_term.abs())
                );
            }
        }
    }

    #[test]
    fn trace_face_forms_agree_with_the_coupled_flow() {
        let mut rng = rng_for(24, 0);
        for n in 5..=8 {
            let sigma = 1.1 + 0.2 * (n - 5) as f64;
            let theta = 0.03;
            let mut s = remove_traceless_ricci(&random_tensor(&mut rng, n));
            let h = random_form(&mut rng, n).shift(1.5);
            // rescale the scalar part of S onto the face tr(H) = θ scal(S)
            let want = h.trace() / theta;
            let c = (want - scalar(&s)) / (2.0 * n as f64 * (n as f64 - 1.0));
            s = s.axpy(c, &crate::algebra::id_kn_id(n));
            let d4 = trace_face_derivative(&h, scalar(&s), theta, sigma).unwrap();
            let prev = trace_face_uncollected(&h, scalar(&s), theta, sigma).unwrap();
            let (ds, dh) = rhs_coupled(&s, &h, sigma).unwrap();
            let flow = dh.trace() - theta * scalar(&ds);
            let scale = d4.abs().max(1.0);
            assert!((d4 - prev).abs() <= 1e-10 * scale * 1e2, "{d4} vs {prev}");
            assert!((d4 - flow).abs() <= 1e-9 * scale * 1e2, "{d4} vs {flow}");
            let _ = kn_with_identity(&h);
        }
        let zero = SymmetricForm::zeros(5);
        assert_eq!(trace_face_derivative(&zero, 0.0, 0.1, 1.0).unwrap(), 0.0);
        assert!(trace_face_derivative(&SymmetricForm::identity(5), 1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn theta_bar_brackets() {
        for n in 5..=8 {
            let tb = theta_bar_estimate(n, &[]).unwrap();
            assert!(tb.theta_hat > 0.0);
            let ok = validate_trace_face(n, tb.theta_hat / 2.0, 20_000, 1, &[]).unwrap();
            assert_eq!(ok.violations, 0, "n={n} min {}", ok.min_value);
            let bad = validate_trace_face(n, tb.theta_hat * 2.0, 20_000, 1, &[]).unwrap();
            assert!(bad.violations > 0);
        }
        let tb = theta_bar_estimate(5, &[]).unwrap();
        assert!((tb.theta_hat - 0.1).abs() < 1e-12, "{}", tb.theta_hat);
        assert!(theta_bar_estimate(4, &[]).is_err());
    }
}

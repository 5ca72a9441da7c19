//! The surgery cutoff g̃ = e^{−2φ} g on a rotationally symmetric neck
//! dz² + w(z)² g_{S^{n−1}}, and the pointwise pinching audit of the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{kn_with_identity, scalar, CurvatureTensor, SymmetricForm};
use crate::error::{LabError, Result};
use crate::oracle::{ConeGeometry, ConeSpec, OracleOptions};
use crate::pinching::{pinched_slack, PinchingFunction};

/// Relative tolerance on the post-surgery pinched slack.
pub const POST_TOL: f64 = 1e-8;
/// Constant in the trace-gain bound tr(H̃) − tr(H) ≥ (1 − c) z⁻⁴e^{−1/z}.
pub const TRACE_GAIN_C: f64 = 0.2;
/// Relative size below which the trace gain is not resolved in double precision.
pub const GAIN_FLOOR: f64 = 1e-10;
/// Upper end of the range where the trace-gain bound is checked.
pub const TRACE_GAIN_ZMAX: f64 = 0.2;

/// (φ, φ′, φ″) for φ = e^{−1/z} on z > 0 and 0 elsewhere.
pub fn cutoff_phi(z: f64) -> (f64, f64, f64) {
    if z <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let phi = (-1.0 / z).exp();
    let z2 = z * z;
    (phi, phi / z2, phi * (1.0 - 2.0 * z) / (z2 * z2))
}

/// z⁻⁴e^{−1/z}, the leading term of φ″.
pub fn hessian_scale(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        (-1.0 / z).exp() / z.powi(4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum NeckProfile {
    /// w ≡ 1: the round cylinder of unit radius.
    Standard,
    /// w = 1 + δ cos z, so |w − 1|, |w′| and |w″| are all at most δ.
    Cosine { delta: f64 },
}

impl NeckProfile {
    /// (w, w′, w″).
    pub fn warp(&self, z: f64) -> (f64, f64, f64) {
        match *self {
            NeckProfile::Standard => (1.0, 0.0, 0.0),
            NeckProfile::Cosine { delta } => {
                (1.0 + delta * z.cos(), -delta * z.sin(), -delta * z.cos())
            }
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            NeckProfile::Standard => 0.0,
            NeckProfile::Cosine { delta } => delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckGeometry {
    pub n: usize,
    pub profile: NeckProfile,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

/// 2048 uniform points on [−10, 10] and a geometric refinement of (0, 10/1023)
/// down to 1e−3.
pub fn default_grid() -> Vec<f64> {
    let mut z: Vec<f64> = (0..2048)
        .map(|k| -10.0 + 20.0 * k as f64 / 2047.0)
        .collect();
    let first_positive = z
        .iter()
        .copied()
        .find(|x| *x > 0.0)
        .expect("grid crosses 0");
    let mut x = 1e-3;
    while x < first_positive {
        z.push(x);
        x *= 1.1;
    }
    z.sort_by(f64::total_cmp);
    z.dedup();
    z
}

impl NeckGeometry {
    pub fn new(n: usize, profile: NeckProfile, z: Vec<f64>) -> Result<Self> {
        crate::algebra::check_dim(n)?;
        if z.windows(2).any(|p| !(p[0] < p[1])) || z.iter().any(|x| !(-10.0..=10.0).contains(x)) {
            return Err(LabError::Precondition(
                "z grid must increase strictly inside [-10, 10]".into(),
            ));
        }
        let delta = profile.delta();
        if !(0.0..0.5).contains(&delta) {
            return Err(LabError::Precondition(format!(
                "perturbation {delta} outside [0, 0.5)"
            )));
        }
        let w = z.iter().map(|&x| profile.warp(x).0).collect();
        Ok(Self { n, profile, z, w })
    }

    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, NeckProfile::Standard, default_grid())
    }

    pub fn perturbed(n: usize, delta: f64) -> Result<Self> {
        Self::new(n, NeckProfile::Cosine { delta }, default_grid())
    }

    fn index(&self, k: usize) -> Result<f64> {
        self.z
            .get(k)
            .copied()
            .ok_or_else(|| LabError::Precondition(format!("grid index {k} out of range")))
    }

    /// H with R = H⊼id in the frame (∂_z, sphere directions): the radial
    /// sectional curvature is −w″/w and the spherical one (1 − w′²)/w².
    pub fn neck_h(&self, k: usize) -> Result<SymmetricForm> {
        let (w, dw, ddw) = self.profile.warp(self.index(k)?);
        let sph = (1.0 - dw * dw) / (2.0 * w * w);
        let mut d = vec![sph; self.n];
        d[0] = -ddw / w - sph;
        Ok(SymmetricForm::diagonal(&d))
    }

    /// (dφ, D²φ) in the same frame; D²φ = diag(φ″, (w′/w)φ′, …).
    pub fn phi_derivatives(&self, k: usize) -> Result<(f64, Vec<f64>, SymmetricForm)> {
        let z = self.index(k)?;
        let (phi, dphi, ddphi) = cutoff_phi(z);
        let (w, dw, _) = self.profile.warp(z);
        let mut grad = vec![0.0; self.n];
        grad[0] = dphi;
        let mut hess = vec![dw / w * dphi; self.n];
        hess[0] = ddphi;
        Ok((phi, grad, SymmetricForm::diagonal(&hess)))
    }
}

pub fn neck_curvature(geom: &NeckGeometry, k: usize) -> Result<CurvatureTensor> {
    Ok(kn_with_identity(&geom.neck_h(k)?))
}

/// D²φ + dφ⊗dφ − ½|dφ|² id.
fn conformal_form(dphi: &[f64], hess: &SymmetricForm) -> SymmetricForm {
    let sq: f64 = dphi.iter().map(|x| x * x).sum();
    hess.add(&SymmetricForm::outer(dphi)).shift(-0.5 * sq)
}

/// Curvature of e^{−2φ}g in the rescaled frame e^{φ}e_i:
/// e^{2φ}R + e^{2φ}(D²φ + dφ⊗dφ − ½|dφ|² id)⊼id.
pub fn conformal_transform(
    r: &CurvatureTensor,
    phi: f64,
    dphi: &[f64],
    hess: &SymmetricForm,
) -> Result<CurvatureTensor> {
    if dphi.len() != r.dim() || hess.dim() != r.dim() {
        return Err(LabError::DimensionMismatch {
            left: r.dim(),
            right: dphi.len().max(hess.dim()),
        });
    }
    let e = (2.0 * phi).exp();
    Ok(r.scale(e)
        .add(&kn_with_identity(&conformal_form(dphi, hess)).scale(e)))
}

/// (S̃, H̃) = (e^{2φ}S, e^{2φ}(H + D²φ + dφ⊗dφ − ½|dφ|² id)), checked against R̃.
pub fn surgery_decompose(
    r_tilde: &CurvatureTensor,
    s: &CurvatureTensor,
    h: &SymmetricForm,
    phi: f64,
    dphi: &[f64],
    hess: &SymmetricForm,
) -> Result<(CurvatureTensor, SymmetricForm)> {
    if s.dim() != h.dim() || s.dim() != r_tilde.dim() {
        return Err(LabError::DimensionMismatch {
            left: s.dim(),
            right: h.dim(),
        });
    }
    let e = (2.0 * phi).exp();
    let s_tilde = s.scale(e);
    let h_tilde = h.add(&conformal_form(dphi, hess)).scale(e);
    let err = r_tilde.max_rel_diff(&s_tilde.add(&kn_with_identity(&h_tilde)));
    if err > 1e-12 {
        return Err(LabError::Reconstruction(err));
    }
    Ok((s_tilde, h_tilde))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub z: f64,
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
    pub pre_slack: f64,
    /// Pinched slack of R̃, divided by its component scale.
    pub post_slack: f64,
    pub trh_gain: f64,
    /// z⁻⁴e^{−1/z}.
    pub bound: f64,
    /// 1 − gain/bound, when the gain is above rounding level.
    pub measured_c: Option<f64>,
    /// f(tr H̃) − f(tr H) − (tr H̃ − tr H)/(n − 2).
    pub f_gap: f64,
    pub lambda_max_gap: f64,
    pub lambda_min_gap: f64,
    /// (tr H̃ − θ scal S̃) − e^{2φ}(tr H − θ scal S).
    pub trace_theta_gain: f64,
    /// Slack of R̃ in C(1, θ), relative to its scale.
    pub c1_slack: f64,
    pub unchanged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryAudit {
    pub n: usize,
    pub profile: NeckProfile,
    pub sigma0: f64,
    pub theta: f64,
    pub points: Vec<AuditPoint>,
    pub min_post_slack: f64,
    pub worst_post_z: f64,
    pub post_failures: usize,
    /// Points of (0, 0.2] where the gain falls below (1 − c) z⁻⁴e^{−1/z}.
    pub trace_gain_failures: usize,
    pub max_measured_c: f64,
    pub f_gap_failures: usize,
    pub z_nonpositive_identical: bool,
    pub c1_failures_beyond_one: usize,
    pub pass: bool,
}

impl SurgeryAudit {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z,phi,pre_slack,post_slack,trH_gain,bound\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                p.z, p.phi, p.pre_slack, p.post_slack, p.trh_gain, p.bound
            ));
        }
        out
    }
}

fn relative(slack: f64, scale: f64) -> f64 {
    slack / scale.max(f64::MIN_POSITIVE)
}

/// Applies the cutoff at every grid point and checks (f, θ)-pinching of the
/// result, along with the intermediate inequalities of the argument.
pub fn pinching_audit(
    geom: &NeckGeometry,
    f: &PinchingFunction,
    opts: &OracleOptions,
) -> Result<SurgeryAudit> {
    if f.n != geom.n {
        return Err(LabError::DimensionMismatch {
            left: geom.n,
            right: f.n,
        });
    }
    let n = geom.n;
    let theta = f.theta;
    let c1 = ConeSpec::new(1.0, theta)?;
    let points = (0..geom.z.len())
        .into_par_iter()
        .map(|k| -> Result<AuditPoint> {
            let z = geom.z[k];
            let h = geom.neck_h(k)?;
            let s = CurvatureTensor::zeros(n)?;
            let r = s.add(&kn_with_identity(&h));
            let pre = ConeGeometry::new(&r, opts, &[]);
            let pre_slack = relative(pinched_slack(&pre, f).0, pre.scale);
            if pre_slack < -POST_TOL {
                return Err(LabError::Precondition(format!(
                    "neck is not pinched at z = {z} ({pre_slack:e})"
                )));
            }
            let (phi, dphi, hess) = geom.phi_derivatives(k)?;
            let r_tilde = conformal_transform(&r, phi, &dphi, &hess)?;
            let (s_tilde, h_tilde) = surgery_decompose(&r_tilde, &s, &h, phi, &dphi, &hess)?;
            let post = ConeGeometry::new(&r_tilde, opts, &pre.warm_start());
            let post_slack = relative(pinched_slack(&post, f).0, post.scale);
            let (tr, tr_tilde) = (h.trace(), h_tilde.trace());
            let trh_gain = tr_tilde - tr;
            let bound = hessian_scale(z);
            // The gain is a difference of O(|tr H|) numbers; below this floor it is rounding.
            let resolvable = bound > GAIN_FLOOR * (1.0 + tr.abs());
            let measured_c = resolvable.then(|| 1.0 - trh_gain / bound);
            let f_gap =
                f.eval(tr_tilde.max(0.0))? - f.eval(tr.max(0.0))? - trh_gain / (n as f64 - 2.0);
            let (ev, ev_tilde) = (h.eigenvalues(), h_tilde.eigenvalues());
            let e = (2.0 * phi).exp();
            Ok(AuditPoint {
                z,
                phi,
                dphi: dphi[0],
                ddphi: hess.get(0, 0),
                pre_slack,
                post_slack,
                trh_gain,
                bound,
                measured_c,
                f_gap,
                lambda_max_gap: ev_tilde[n - 1] - ev[n - 1],
                lambda_min_gap: ev_tilde[0] - ev[0],
                trace_theta_gain: (tr_tilde - theta * scalar(&s_tilde))
                    - e * (tr - theta * scalar(&s)),
                c1_slack: relative(post.slack(&c1), post.scale),
                unchanged: r_tilde
                    .packed()
                    .iter()
                    .zip(r.packed())
                    .all(|(a, b)| a.to_bits() == b.to_bits()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (min_post_slack, worst_post_z) = points
        .iter()
        .map(|p| (p.post_slack, p.z))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let post_failures = points.iter().filter(|p| p.post_slack < -POST_TOL).count();
    let near = || {
        points
            .iter()
            .filter(|p| p.z > 0.0 && p.z <= TRACE_GAIN_ZMAX)
    };
    let trace_gain_failures = near()
        .filter(|p| p.measured_c.is_some() && p.trh_gain < (1.0 - TRACE_GAIN_C) * p.bound)
        .count();
    let max_measured_c = near()
        .filter_map(|p| p.measured_c)
        .fold(f64::NEG_INFINITY, f64::max);
    let f_gap_failures = points
        .iter()
        .filter(|p| p.trh_gain >= 0.0 && p.f_gap < -1e-12)
        .count();
    let z_nonpositive_identical = points.iter().filter(|p| p.z <= 0.0).all(|p| p.unchanged);
    let c1_failures_beyond_one = points
        .iter()
        .filter(|p| p.z >= 1.0 && p.c1_slack < -POST_TOL)
        .count();
    Ok(SurgeryAudit {
        n,
        profile: geom.profile,
        sigma0: f.sigma0,
        theta,
        pass: post_failures == 0,
        points,
        min_post_slack,
        worst_post_z,
        post_failures,
        trace_gain_failures,
        max_measured_c,
        f_gap_failures,
        z_nonpositive_identical,
        c1_failures_beyond_one,
    })
}

/// Sectional curvatures (radial-spherical, spherical-spherical) of
/// e^{2u(z)}(dz² + w(z)² g_{S^{n−1}}) at height z, by finite differences of
/// the metric on the totally geodesic slice (z, α, β) ↦ dz² + w²(dα² + sin²α dβ²)
/// at α = π/2.
pub fn fd_sectional_curvatures(
    w: impl Fn(f64) -> f64,
    u: impl Fn(f64) -> f64,
    z: f64,
) -> (f64, f64) {
    let metric = |x: [f64; 3]| -> [f64; 3] {
        let c = (2.0 * u(x[0])).exp();
        let r2 = w(x[0]).powi(2);
        [c, c * r2, c * r2 * x[1].sin().powi(2)]
    };
    const H1: f64 = 1e-5;
    const H2: f64 = 1e-4;
    let bump = |x: [f64; 3], d: usize, h: f64| {
        let mut y = x;
        y[d] += h;
        y
    };
    // Γ^a_{bc} for a diagonal metric
    let christoffel = |x: [f64; 3]| -> [[[f64; 3]; 3]; 3] {
        let g = metric(x);
        let mut dg = [[0.0; 3]; 3]; // dg[d][a] = ∂_d g_aa
        for d in 0..3 {
            let (p, m) = (metric(bump(x, d, H1)), metric(bump(x, d, -H1)));
            for a in 0..3 {
                dg[d][a] = (p[a] - m[a]) / (2.0 * H1);
            }
        }
        let mut gam = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut v = 0.0;
                    if a == c {
                        v += dg[b][a];
                    }
                    if a == b {
                        v += dg[c][a];
                    }
                    if b == c {
                        v -= dg[a][b];
                    }
                    gam[a][b][c] = 0.5 * v / g[a];
                }
            }
        }
        gam
    };
    let x = [z, std::f64::consts::FRAC_PI_2, 0.0];
    let g = metric(x);
    let gam = christoffel(x);
    let mut dgam = [[[[0.0; 3]; 3]; 3]; 3]; // dgam[d][a][b][c] = ∂_d Γ^a_{bc}
    for d in 0..3 {
        let (p, m) = (christoffel(bump(x, d, H2)), christoffel(bump(x, d, -H2)));
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    dgam[d][a][b][c] = (p[a][b][c] - m[a][b][c]) / (2.0 * H2);
                }
            }
        }
    }
    // R_{abab} = g_aa (∂_a Γ^a_{bb} − ∂_b Γ^a_{ab} + Γ^a_{ae}Γ^e_{bb} − Γ^a_{be}Γ^e_{ab})
    let sectional = |a: usize, b: usize| {
        let mut v = dgam[a][a][b][b] - dgam[b][a][a][b];
        for e in 0..3 {
            v += gam[a][a][e] * gam[e][b][b] - gam[a][b][e] * gam[e][a][b];
        }
        g[a] * v / (g[a] * g[b])
    };
    (sectional(0, 1), sectional(1, 2))
}

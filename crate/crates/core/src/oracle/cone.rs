//! The cones C(σ, θ) of tensors R = S + H⊼id with S ∈ PIC2, Ric₀(S) = 0,
//! tr(H) id − (n − 2σ) H ≥ 0 and tr(H) ≥ θ scal(S).
//!
//! Ric₀(S) = 0 pins the trace-free part of H to Ric₀(R)/(n − 2), leaving the
//! gauge t = tr(H). With S(t) = R − Ric₀⊼id/(n−2) − (t/n) id⊼id, the PIC2
//! slack of S(t) decreases in t while both linear constraints hold exactly
//! for t ≥ t*, so membership reduces to S(t*) ∈ PIC2. Because the complex
//! sectional functional equals 2 on id⊼id, csm(S(t)) = csm(S(0)) − 2t/n and
//! one oracle call serves every (σ, θ).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{id_kn_id, kn_with_identity, remove_traceless_ricci, ricci_traceless, scalar};
use crate::algebra::{CurvatureTensor, SymmetricForm};
use crate::error::{LabError, Result};

use super::complex::complex_sectional_min_warm;
use super::frames::pic2_min;
use super::witness::FrameWitness;
use super::{OracleOptions, OracleResult, MEMBERSHIP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub sigma: f64,
    pub theta: f64,
}

impl ConeSpec {
    pub fn new(sigma: f64, theta: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 2.0) {
            return Err(LabError::InvalidSpec(format!(
                "sigma = {sigma} outside (0, 2]"
            )));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(LabError::InvalidSpec(format!(
                "theta = {theta} must be finite and >= 0"
            )));
        }
        Ok(Self { sigma, theta })
    }

    /// Checks n − 2σ > 0, admitting the degenerate σ = 2, n = 4 case.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        Self::new(self.sigma, self.theta)?;
        let gap = n as f64 - 2.0 * self.sigma;
        if gap > 0.0 || (n == 4 && self.sigma == 2.0) {
            Ok(())
        } else {
            Err(LabError::InvalidSpec(format!(
                "n - 2 sigma = {gap} must be positive"
            )))
        }
    }

    /// Coefficient (n − 2σ)/(2(n − 2)σ) of the eigen-branch.
    pub fn eigen_coefficient(&self, n: usize) -> f64 {
        let n = n as f64;
        (n - 2.0 * self.sigma) / (2.0 * (n - 2.0) * self.sigma)
    }

    /// Coefficient θ/(1 + 2(n − 1)θ) of the trace branch.
    pub fn trace_coefficient(&self, n: usize) -> f64 {
        self.theta / (1.0 + 2.0 * (n as f64 - 1.0) * self.theta)
    }
}

/// Which constraint fixes the gauge t*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// tr(H) id − (n − 2σ) H ≥ 0, attained along the top Ric₀ eigenvector.
    Eigen,
    /// tr(H) ≥ θ scal(S).
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub cone: String,
    pub sigma: f64,
    pub theta: f64,
    pub member: bool,
    pub slack: f64,
    pub branch: Branch,
    /// Gauge t* = tr(H) at which S(t*) was tested.
    pub gauge: f64,
    pub witness: FrameWitness,
    pub evaluations: usize,
    pub seed: u64,
}

impl MembershipReport {
    /// S(t*) for the tensor this report was computed from.
    pub fn tested_tensor(&self, r: &CurvatureTensor) -> CurvatureTensor {
        let n = r.dim();
        remove_traceless_ricci(r).axpy(-self.gauge / n as f64, &id_kn_id(n))
    }

    /// Re-evaluates the slack from the witness.
    pub fn replay(&self, r: &CurvatureTensor) -> f64 {
        self.witness
            .evaluate(&self.tested_tensor(r))
            .expect("cone witnesses are frames")
    }
}

/// Per-tensor data shared by every cone query on the same R.
#[derive(Debug, Clone)]
pub struct ConeGeometry {
    pub n: usize,
    /// R − Ric₀⊼id/(n − 2), the t = 0 member of the gauge line.
    pub base: CurvatureTensor,
    pub base_min: OracleResult,
    pub scal: f64,
    /// Largest eigenvalue of Ric₀ and its eigenvector.
    pub ric0_max: f64,
    pub ric0_top: Vec<f64>,
    /// Component scale of R, used for relative tolerances.
    pub scale: f64,
    pub seed: u64,
}

impl ConeGeometry {
    pub fn new(r: &CurvatureTensor, opts: &OracleOptions, warm: &[Vec<Complex64>]) -> Self {
        let n = r.dim();
        let base = remove_traceless_ricci(r);
        let base_min = complex_sectional_min_warm(&base, opts, warm);
        let (vals, vecs) = ricci_traceless(r).eigen();
        Self {
            n,
            base,
            base_min,
            scal: scalar(r),
            ric0_max: vals[n - 1],
            ric0_top: vecs.column(n - 1).iter().copied().collect(),
            scale: r.max_abs(),
            seed: opts.seed,
        }
    }

    /// Geometry of R + c·id⊼id without another oracle call.
    pub fn shifted(&self, c: f64) -> Self {
        let n = self.n as f64;
        let mut out = self.clone();
        out.base = self.base.axpy(c, &id_kn_id(self.n));
        out.base_min.value += 2.0 * c;
        out.scal += 2.0 * n * (n - 1.0) * c;
        out.scale = self.scale + 2.0 * c.abs();
        out
    }

    /// Warm starts that reproduce the base minimizer.
    pub fn warm_start(&self) -> Vec<Vec<Complex64>> {
        match self.base_min.witness.complex_pair() {
            Some((z, w)) => vec![z, w],
            None => Vec::new(),
        }
    }

    pub fn eigen_gauge(&self, spec: &ConeSpec) -> f64 {
        self.n as f64 * spec.eigen_coefficient(self.n) * self.ric0_max
    }

    pub fn trace_gauge(&self, spec: &ConeSpec) -> f64 {
        spec.trace_coefficient(self.n) * self.scal
    }

    /// (t*, branch) with t* = max of the two gauges.
    pub fn gauge(&self, spec: &ConeSpec) -> (f64, Branch) {
        let (te, tt) = (self.eigen_gauge(spec), self.trace_gauge(spec));
        if te >= tt {
            (te, Branch::Eigen)
        } else {
            (tt, Branch::Trace)
        }
    }

    /// Signed slack: complex sectional minimum of S(t*).
    pub fn slack(&self, spec: &ConeSpec) -> f64 {
        self.base_min.value - 2.0 * self.gauge(spec).0 / self.n as f64
    }

    pub fn report(&self, spec: &ConeSpec, tol: f64) -> MembershipReport {
        let (gauge, branch) = self.gauge(spec);
        let slack = self.base_min.value - 2.0 * gauge / self.n as f64;
        MembershipReport {
            cone: "C(sigma,theta)".into(),
            sigma: spec.sigma,
            theta: spec.theta,
            member: slack >= -tol * self.scale,
            slack,
            branch,
            gauge,
            witness: self.base_min.witness.clone(),
            evaluations: self.base_min.evaluations,
            seed: self.seed,
        }
    }
}

/// Membership in C(σ, θ) with the default relative tolerance.
pub fn cone_membership(
    r: &CurvatureTensor,
    spec: &ConeSpec,
    opts: &OracleOptions,
) -> Result<MembershipReport> {
    cone_membership_with(r, spec, opts, &[])
}

pub fn cone_membership_with(
    r: &CurvatureTensor,
    spec: &ConeSpec,
    opts: &OracleOptions,
    warm: &[Vec<Complex64>],
) -> Result<MembershipReport> {
    spec.check_dim(r.dim())?;
    Ok(ConeGeometry::new(r, opts, warm).report(spec, MEMBERSHIP_TOL))
}

/// Same verdict computed with the real-frame PIC2 functional on S(t*).
pub fn cone_membership_frames(
    r: &CurvatureTensor,
    spec: &ConeSpec,
    opts: &OracleOptions,
) -> Result<MembershipReport> {
    spec.check_dim(r.dim())?;
    let n = r.dim();
    let ric0 = ricci_traceless(r);
    let geometry_gauge = {
        let lam = ric0.eigenvalues()[n - 1];
        let te = n as f64 * spec.eigen_coefficient(n) * lam;
        let tt = spec.trace_coefficient(n) * scalar(r);
        if te >= tt {
            (te, Branch::Eigen)
        } else {
            (tt, Branch::Trace)
        }
    };
    let (gauge, branch) = geometry_gauge;
    let tested = remove_traceless_ricci(r).axpy(-gauge / n as f64, &id_kn_id(n));
    let res = pic2_min(&tested, opts);
    Ok(MembershipReport {
        cone: "C(sigma,theta)".into(),
        sigma: spec.sigma,
        theta: spec.theta,
        member: res.value >= -MEMBERSHIP_TOL * r.max_abs(),
        slack: res.value,
        branch,
        gauge,
        witness: res.witness,
        evaluations: res.evaluations,
        seed: opts.seed,
    })
}

/// A certificate R = S + H⊼id.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub s: CurvatureTensor,
    pub h: SymmetricForm,
    /// Joint slack at the chosen gauge.
    pub slack: f64,
    pub reconstruction_error: f64,
}

/// Searches the gauge t = tr(H) for the largest joint slack of the three
/// defining constraints; `None` when even the best gauge violates one by
/// more than the membership tolerance.
pub fn decompose(
    r: &CurvatureTensor,
    spec: &ConeSpec,
    opts: &OracleOptions,
) -> Result<Option<Decomposition>> {
    spec.check_dim(r.dim())?;
    let n = r.dim();
    let nf = n as f64;
    let ric0 = ricci_traceless(r);
    let h0 = ric0.scale(1.0 / (nf - 2.0));
    let lam = h0.eigenvalues()[n - 1];
    let base = remove_traceless_ricci(r);
    let scal_r = scalar(r);
    let sphere = id_kn_id(n);
    let scale = r.max_abs();

    let mut warm: Vec<Vec<Complex64>> = Vec::new();
    let quick = OracleOptions {
        restarts: opts.restarts.min(4),
        ..opts.clone()
    };
    let first = complex_sectional_min_warm(&base, opts, &[]);
    if let Some((z, w)) = first.witness.complex_pair() {
        warm = vec![z, w];
    }
    let joint = |t: f64, warm: &[Vec<Complex64>]| -> f64 {
        let s = base.axpy(-t / nf, &sphere);
        let pic2 = complex_sectional_min_warm(&s, &quick, warm).value;
        let eig = t - (nf - 2.0 * spec.sigma) * (lam + t / nf);
        let trace = t - spec.theta * (scal_r - 2.0 * (nf - 1.0) * t);
        pic2.min(eig).min(trace)
    };

    // all three pieces are affine in t up to oracle error, so the joint slack
    // is concave and unimodal
    let t_pic2 = nf * first.value / 2.0;
    let t_eig = if spec.sigma > 0.0 {
        nf * (nf - 2.0 * spec.sigma) * lam / (2.0 * spec.sigma)
    } else {
        0.0
    };
    let t_trace = spec.theta * scal_r / (1.0 + 2.0 * (nf - 1.0) * spec.theta);
    let span = 1.0 + t_pic2.abs() + t_eig.abs() + t_trace.abs();
    let (mut lo, mut hi) = (
        t_pic2.min(t_eig).min(t_trace) - span,
        t_pic2.max(t_eig).max(t_trace) + span,
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (joint(x1, &warm), joint(x2, &warm));
    while hi - lo > 1e-13 * span {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = joint(x1, &warm);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = joint(x2, &warm);
        }
    }
    let t = if f1 >= f2 { x1 } else { x2 };
    let slack = joint(t, &warm);
    if slack < -MEMBERSHIP_TOL * scale {
        return Ok(None);
    }
    let h = h0.shift(t / nf);
    let s = r.sub(&kn_with_identity(&h));
    let err = r.max_rel_diff(&s.add(&kn_with_identity(&h)));
    if err > 1e-10 {
        return Err(LabError::Reconstruction(err));
    }
    Ok(Some(Decomposition {
        s,
        h,
        slack,
        reconstruction_error: err,
    }))
}

//! The concave pinching function f built from a decreasing sequence σ_j → 1,
//! and the set F = C(σ₀, θ) ∩ ⋂_j {R : R + 2^{j−1} id⊼id ∈ C(σ_j, θ)}.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{id_kn_id, scalar, CurvatureTensor};
use crate::error::{LabError, Result};
use crate::flow::{directional_derivatives, invariance_probe, InvarianceReport, SlackTarget};
use crate::generate::random_cone_sample;
use crate::oracle::{ConeGeometry, ConeSpec, MembershipReport, OracleOptions, MEMBERSHIP_TOL};
use crate::sampling::rng_for;

pub const DEFAULT_DEPTH: usize = 20;

/// Tolerance on second differences in the concavity check.
pub const CONCAVITY_TOL: f64 = 1e-9;
/// Relative error allowed on the small-s branch s/(n − 2σ₀).
pub const SMALL_S_TOL: f64 = 1e-12;
/// Allowed gap between f(s)/s and 1/(n − 2) at the far end of the check grid.
pub const ASYMPTOTE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchingTerm {
    pub sigma: f64,
    /// 2^{j−1}: the term asks R + offset·id⊼id ∈ C(σ_j, θ).
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub s: f64,
    /// Branch indices on either side; 0 is s/(n − 2σ₀), j ≥ 1 the j-th term.
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingValidation {
    pub max_second_difference: f64,
    pub small_s_error: f64,
    pub asymptote_at: f64,
    pub asymptote_error: f64,
}

impl PinchingValidation {
    /// Concavity, the small-s branch and the asymptotic slope, each within tolerance.
    pub fn check(&self) -> Result<()> {
        if self.max_second_difference > CONCAVITY_TOL {
            return Err(LabError::InvalidPinching(format!(
                "not concave: second difference {:e}",
                self.max_second_difference
            )));
        }
        if self.small_s_error > SMALL_S_TOL {
            return Err(LabError::InvalidPinching(format!(
                "small-s branch off by {:e}",
                self.small_s_error
            )));
        }
        if !(self.asymptote_error <= ASYMPTOTE_TOL) {
            return Err(LabError::InvalidPinching(format!(
                "f(s)/s misses 1/(n-2) by {:e} at s = {:e}",
                self.asymptote_error, self.asymptote_at
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingFunction {
    pub sigma0: f64,
    pub theta: f64,
    pub n: usize,
    pub sequence: Vec<PinchingTerm>,
    pub breakpoints: Vec<Breakpoint>,
    /// Largest s with f(s) = s/(n − 2σ₀).
    pub small_s_threshold: f64,
    pub validation: PinchingValidation,
}

pub fn default_sequence(sigma0: f64, depth: usize) -> Vec<f64> {
    (1..=depth)
        .map(|j| 1.0 + (sigma0 - 1.0) * 0.5f64.powi(j as i32))
        .collect()
}

/// (slope, intercept) of branch k.
fn branch(n: usize, sigma0: f64, sequence: &[PinchingTerm], k: usize) -> (f64, f64) {
    let n = n as f64;
    if k == 0 {
        return (1.0 / (n - 2.0 * sigma0), 0.0);
    }
    let PinchingTerm { sigma, offset } = sequence[k - 1];
    let gap = n - 2.0 * sigma;
    (1.0 / gap, 2.0 * offset * sigma / gap)
}

/// Lower envelope of the branches on [0, ∞). Slopes decrease and intercepts
/// increase with k, so the envelope visits branches in increasing order.
fn envelope(n: usize, sigma0: f64, sequence: &[PinchingTerm]) -> Vec<Breakpoint> {
    let mut out = Vec::new();
    let mut current = 0;
    let mut s = 0.0;
    loop {
        let (mc, bc) = branch(n, sigma0, sequence, current);
        let next = (current + 1..=sequence.len())
            .map(|k| {
                let (mk, bk) = branch(n, sigma0, sequence, k);
                ((bk - bc) / (mc - mk), k)
            })
            .filter(|(x, _)| *x >= s)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        match next {
            Some((x, k)) => {
                out.push(Breakpoint {
                    s: x,
                    from: current,
                    to: k,
                });
                current = k;
                s = x;
            }
            None => return out,
        }
    }
}

impl PinchingFunction {
    /// Builds f from σ₀ and σ_1 > σ_2 > … > 1 (the default sequence when
    /// `sigmas` is `None`), then checks concavity, the small-s branch and the
    /// asymptotic slope 1/(n − 2).
    pub fn build(sigma0: f64, theta: f64, n: usize, sigmas: Option<&[f64]>) -> Result<Self> {
        crate::algebra::check_dim(n)?;
        if !(sigma0 > 1.0 && sigma0 < 2.0) {
            return Err(LabError::InvalidPinching(format!(
                "sigma0 = {sigma0} outside (1, 2)"
            )));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(LabError::InvalidPinching(format!(
                "theta = {theta} must be positive"
            )));
        }
        if n < 5 {
            return Err(LabError::InvalidPinching(format!(
                "n = {n}: pinching needs n >= 5"
            )));
        }
        let sigmas = sigmas
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| default_sequence(sigma0, DEFAULT_DEPTH));
        let mut prev = sigma0;
        for (j, &s) in sigmas.iter().enumerate() {
            if !(s > 1.0 && s < prev) {
                return Err(LabError::InvalidPinching(format!(
                    "sigma_{} = {s} must lie in (1, {prev}) for a strictly decreasing sequence",
                    j + 1
                )));
            }
            prev = s;
        }
        let sequence: Vec<PinchingTerm> = sigmas
            .iter()
            .enumerate()
            .map(|(j, &sigma)| PinchingTerm {
                sigma,
                offset: 2f64.powi(j as i32),
            })
            .collect();
        let breakpoints = envelope(n, sigma0, &sequence);
        let small_s_threshold = breakpoints.first().map_or(f64::INFINITY, |b| b.s);
        let mut f = Self {
            sigma0,
            theta,
            n,
            sequence,
            breakpoints,
            small_s_threshold,
            validation: PinchingValidation {
                max_second_difference: 0.0,
                small_s_error: 0.0,
                asymptote_at: 0.0,
                asymptote_error: 0.0,
            },
        };
        f.validation = f.validate();
        f.validation.check()?;
        Ok(f)
    }

    /// Recomputes the shape checks from the stored pieces.
    pub fn validate(&self) -> PinchingValidation {
        let last = self.breakpoints.last().map_or(0.0, |b| b.s);
        let top = (last * 1e3).max(1e6);
        let grid: Vec<f64> = (0..=400)
            .map(|k| 1e-3 * (top / 1e-3).powf(k as f64 / 400.0))
            .collect();
        let mut second = f64::NEG_INFINITY;
        for w in grid.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let (fa, fb, fc) = (self.value(a), self.value(b), self.value(c));
            // divided second difference, scaled to the function size
            let d = ((fc - fb) / (c - b) - (fb - fa) / (b - a)) * (c - a) / fc.abs().max(1.0);
            second = second.max(d);
        }
        let small = self.small_s_threshold.min(top);
        let slope0 = 1.0 / (self.n as f64 - 2.0 * self.sigma0);
        let small_s_error = (0..=100)
            .map(|k| small * k as f64 / 100.0)
            .map(|s| (self.value(s) - s * slope0).abs() / (s * slope0).max(1.0))
            .fold(0.0, f64::max);
        PinchingValidation {
            max_second_difference: second.max(0.0),
            small_s_error,
            asymptote_at: top,
            asymptote_error: (self.value(top) / top - 1.0 / (self.n as f64 - 2.0)).abs(),
        }
    }

    /// f(s) for s ≥ 0.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(LabError::Precondition(format!(
                "f is defined on [0, inf), got {s}"
            )));
        }
        Ok(self.value(s))
    }

    fn value(&self, s: f64) -> f64 {
        (0..=self.sequence.len())
            .map(|k| {
                let (m, b) = branch(self.n, self.sigma0, &self.sequence, k);
                m * s + b
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn depth(&self) -> usize {
        self.sequence.len()
    }

    /// The first `depth` terms, rebuilt without the asymptote check.
    pub fn truncated(&self, depth: usize) -> Self {
        let sequence = self.sequence[..depth.min(self.sequence.len())].to_vec();
        let breakpoints = envelope(self.n, self.sigma0, &sequence);
        let mut f = Self {
            small_s_threshold: breakpoints.first().map_or(f64::INFINITY, |b| b.s),
            breakpoints,
            sequence,
            ..self.clone()
        };
        f.validation = f.validate();
        f
    }

    /// The cones of F, base first: (shift, spec).
    pub fn terms(&self) -> Vec<(f64, ConeSpec)> {
        std::iter::once((
            0.0,
            ConeSpec {
                sigma: self.sigma0,
                theta: self.theta,
            },
        ))
        .chain(self.sequence.iter().map(|t| {
            (
                t.offset,
                ConeSpec {
                    sigma: t.sigma,
                    theta: self.theta,
                },
            )
        }))
        .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| LabError::Format(e.to_string()))?;
        let rebuilt = Self::build(
            f.sigma0,
            f.theta,
            f.n,
            Some(&f.sequence.iter().map(|t| t.sigma).collect::<Vec<_>>()),
        )?;
        if rebuilt != f {
            return Err(LabError::Format(
                "stored breakpoints or validation do not match the sequence".into(),
            ));
        }
        Ok(f)
    }
}

/// Slack of each term of F for the tensor behind `geometry`, base term first.
pub fn term_slacks(geometry: &ConeGeometry, f: &PinchingFunction) -> Vec<f64> {
    f.terms()
        .iter()
        .map(|(shift, spec)| geometry.shifted(*shift).slack(spec))
        .collect()
}

/// min over terms; the binding term index.
pub fn pinched_slack(geometry: &ConeGeometry, f: &PinchingFunction) -> (f64, usize) {
    term_slacks(geometry, f)
        .into_iter()
        .enumerate()
        .map(|(k, s)| (s, k))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchedMembership {
    pub member: bool,
    pub slack: f64,
    pub binding_term: usize,
    pub term_slacks: Vec<f64>,
    /// Membership report of the binding term, for R shifted by its offset.
    pub binding: MembershipReport,
}

pub fn pinched_membership(
    r: &CurvatureTensor,
    f: &PinchingFunction,
    opts: &OracleOptions,
) -> Result<PinchedMembership> {
    pinched_membership_with(r, f, opts, &[])
}

pub fn pinched_membership_with(
    r: &CurvatureTensor,
    f: &PinchingFunction,
    opts: &OracleOptions,
    warm: &[Vec<Complex64>],
) -> Result<PinchedMembership> {
    if r.dim() != f.n {
        return Err(LabError::DimensionMismatch {
            left: r.dim(),
            right: f.n,
        });
    }
    let geometry = ConeGeometry::new(r, opts, warm);
    let term_slacks = term_slacks(&geometry, f);
    let (slack, binding_term) = pinched_slack(&geometry, f);
    let (shift, spec) = f.terms()[binding_term];
    let mut binding = geometry.shifted(shift).report(&spec, MEMBERSHIP_TOL);
    binding.cone = format!("F term {binding_term}");
    Ok(PinchedMembership {
        member: slack >= -MEMBERSHIP_TOL * geometry.scale.max(f64::MIN_POSITIVE),
        slack,
        binding_term,
        term_slacks,
        binding,
    })
}

/// Smallest c with R + c·id⊼id on the boundary of F. The pinched slack is
/// concave, piecewise linear and strictly increasing in c.
pub fn boundary_shift(geometry: &ConeGeometry, f: &PinchingFunction) -> f64 {
    let slack = |c: f64| pinched_slack(&geometry.shifted(c), f).0;
    let mut step = geometry.scale.max(1.0);
    let (mut lo, mut hi) = (0.0, 0.0);
    if slack(0.0) >= 0.0 {
        while slack(lo) >= 0.0 {
            hi = lo;
            lo -= step;
            step *= 2.0;
        }
    } else {
        while slack(hi) < 0.0 {
            lo = hi;
            hi += step;
            step *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slack(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Invariance of F under the ODE; the same contract as the cone probe.
pub fn pinched_set_invariance(
    f: &PinchingFunction,
    samples: usize,
    seed: u64,
    horizon: f64,
    opts: &OracleOptions,
) -> Result<InvarianceReport> {
    invariance_probe(
        &SlackTarget::Pinched(f.clone()),
        f.n,
        samples,
        seed,
        horizon,
        opts,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub h: f64,
    pub n: usize,
    /// Scalar curvature threshold past which the shifted flow direction
    /// points strictly into the cone at every sampled boundary point.
    pub n_hat: f64,
    /// Smallest ε for which a sampled inclusion would fail.
    pub inclusion_min: f64,
    pub eps_hat: f64,
    pub samples: usize,
    pub transversal_failures_below_n_hat: usize,
}

/// Largest σ' ≤ σ-range with R ∈ C(σ', θ) failing, by bisection: the eigen
/// gauge grows as σ' decreases, so membership is monotone in σ'.
fn critical_sigma(geometry: &ConeGeometry, theta: f64, sigma: f64) -> f64 {
    let member = |s: f64| geometry.slack(&ConeSpec { sigma: s, theta }) >= 0.0;
    if !member(sigma) {
        return sigma;
    }
    let (mut lo, mut hi) = (1e-9, sigma);
    if member(lo) {
        return 0.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if member(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn boundary_sample(
    rng: &mut crate::sampling::LabRng,
    n: usize,
    sigma: f64,
    theta: f64,
    opts: &OracleOptions,
) -> Result<CurvatureTensor> {
    Ok(random_cone_sample(rng, n, &ConeSpec::new(sigma, theta)?, true, opts)?.r)
}

/// Sampled version of the ε of the shifted-cone inclusion on [α, β].
pub fn epsilon_search(
    alpha: f64,
    beta: f64,
    theta: f64,
    h: f64,
    n: usize,
    samples: usize,
    seed: u64,
    opts: &OracleOptions,
) -> Result<EpsilonReport> {
    if !(1.0 < alpha && alpha <= beta && beta < 2.0) {
        return Err(LabError::Precondition(format!(
            "[{alpha}, {beta}] must lie in (1, 2)"
        )));
    }
    if !(theta > 0.0) {
        return Err(LabError::Precondition("theta must be positive".into()));
    }
    if !(h > 0.0) {
        return Err(LabError::Precondition("h must be positive".into()));
    }
    let idid = id_kn_id(n);
    let nf = n as f64;
    let sphere_scal = 2.0 * nf * (nf - 1.0);

    // (i) threshold N: at boundary points with scal > N·h the direction
    // Q(R − 2h id⊼id) strictly increases the slack
    let mut n_hat = 1.0;
    let mut failures_below = 0;
    'scan: loop {
        let mut rng = rng_for(seed, 0xe951);
        for _ in 0..samples {
            let sigma = rng.random_range((alpha - 1.0 / n_hat).max(1.0 + 1e-6)..=beta);
            let spec = ConeSpec::new(sigma, theta)?;
            let b = boundary_sample(&mut rng, n, sigma, theta, opts)?;
            let lift = 10f64.powf(rng.random_range(0.0..6.0));
            let r = b.scale(n_hat * h * lift / scalar(&b));
            let v = crate::algebra::q_quadratic(&r.axpy(-2.0 * h, &idid));
            let d = directional_derivatives(&SlackTarget::Cone(spec), &r, &v, opts);
            if d.iter().any(|x| !(*x > 0.0)) {
                failures_below += 1;
                n_hat *= 2.0;
                if n_hat > 1e12 {
                    return Err(LabError::Precondition(
                        "no scalar curvature threshold found".into(),
                    ));
                }
                continue 'scan;
            }
        }
        break;
    }

    // (ii) inclusion {R + h id⊼id ∈ C_σ, scal ≤ N h} ⊆ {R + 2h id⊼id ∈ C_{σ−ε}}
    // checked at R = B − h id⊼id with B on the boundary of C_σ
    let mut rng = rng_for(seed, 0xe952);
    let mut inclusion_min = f64::INFINITY;
    for _ in 0..samples {
        let sigma = rng.random_range(alpha..=beta);
        let b = boundary_sample(&mut rng, n, sigma, theta, opts)?;
        let cap = n_hat * h + sphere_scal * h;
        let target = cap * 10f64.powf(rng.random_range(-2.0..0.0));
        let b = b.scale(target / scalar(&b));
        let shifted = b.axpy(h, &idid);
        let geometry = ConeGeometry::new(&shifted, opts, &[]);
        inclusion_min = inclusion_min.min(sigma - critical_sigma(&geometry, theta, sigma));
    }
    let eps_hat = inclusion_min.min(1.0 / n_hat * (1.0 - 1e-9));
    if !(eps_hat > 0.0) {
        return Err(LabError::Precondition(format!(
            "no positive epsilon certified ({inclusion_min:e})"
        )));
    }
    Ok(EpsilonReport {
        alpha,
        beta,
        theta,
        h,
        n,
        n_hat,
        inclusion_min,
        eps_hat,
        samples,
        transversal_failures_below_n_hat: failures_below,
    })
}

/// Number of the inclusion samples of `epsilon_search` that fail for `eps`.
pub fn inclusion_violations(
    report: &EpsilonReport,
    eps: f64,
    seed: u64,
    opts: &OracleOptions,
) -> Result<usize> {
    let n = report.n;
    let nf = n as f64;
    let idid = id_kn_id(n);
    let mut rng = rng_for(seed, 0xe952);
    let mut bad = 0;
    for _ in 0..report.samples {
        let sigma = rng.random_range(report.alpha..=report.beta);
        let b = boundary_sample(&mut rng, n, sigma, report.theta, opts)?;
        let cap = report.n_hat * report.h + 2.0 * nf * (nf - 1.0) * report.h;
        let target = cap * 10f64.powf(rng.random_range(-2.0..0.0));
        let b = b.scale(target / scalar(&b));
        let geometry = ConeGeometry::new(&b.axpy(report.h, &idid), opts, &[]);
        if sigma - eps <= 0.0
            || geometry.slack(&ConeSpec {
                sigma: sigma - eps,
                theta: report.theta,
            }) < 0.0
        {
            bad += 1;
        }
    }
    Ok(bad)
}

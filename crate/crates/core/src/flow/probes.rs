//! Sampled invariance and transversality checks along the ODE.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate, Controls, Stop, StopReason};
use super::OdeState;
use crate::algebra::{id_kn_id, q_quadratic, scalar, CurvatureTensor};
use crate::error::{LabError, Result};
use crate::generate::random_cone_sample;
use crate::oracle::{ConeGeometry, ConeSpec, OracleOptions};
use crate::pinching::{boundary_shift, pinched_slack, PinchingFunction};
use crate::sampling::{rng_for, LabRng};

/// Relative slack below which a trajectory counts as having left the set.
pub const INVARIANCE_TOL: f64 = 1e-5;
/// Central-difference steps, relative to the size of the base point.
pub const DIFFERENCE_STEPS: [f64; 2] = [1e-4, 1e-5];

const SAMPLE_STREAM: u64 = 0x1a7e;

/// A set whose signed slack is monitored along trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlackTarget {
    Cone(ConeSpec),
    Pinched(PinchingFunction),
}

impl SlackTarget {
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            SlackTarget::Cone(spec) => spec.check_dim(n),
            SlackTarget::Pinched(f) if f.n == n => Ok(()),
            SlackTarget::Pinched(f) => Err(LabError::DimensionMismatch {
                left: n,
                right: f.n,
            }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SlackTarget::Cone(s) => format!("C({}, {})", s.sigma, s.theta),
            SlackTarget::Pinched(f) => format!(
                "F(sigma0 = {}, theta = {}, depth {})",
                f.sigma0,
                f.theta,
                f.depth()
            ),
        }
    }

    fn slack_of(&self, geometry: &ConeGeometry) -> f64 {
        match self {
            SlackTarget::Cone(spec) => geometry.slack(spec),
            SlackTarget::Pinched(f) => pinched_slack(geometry, f).0,
        }
    }

    /// Absolute slack, and warm starts for the next nearby query.
    pub fn slack_warm(
        &self,
        r: &CurvatureTensor,
        opts: &OracleOptions,
        warm: &[Vec<Complex64>],
    ) -> (f64, Vec<Vec<Complex64>>) {
        let geometry = ConeGeometry::new(r, opts, warm);
        (self.slack_of(&geometry), geometry.warm_start())
    }
}

/// Slack derivative of `target` at `r` along `v` by central differences,
/// one entry per step of [`DIFFERENCE_STEPS`], in units of relative slack
/// per relative step.
pub fn directional_derivatives(
    target: &SlackTarget,
    r: &CurvatureTensor,
    v: &CurvatureTensor,
    opts: &OracleOptions,
) -> Vec<f64> {
    let size = r.max_abs().max(f64::MIN_POSITIVE);
    let dir = v.scale(size / v.max_abs().max(f64::MIN_POSITIVE));
    let (_, warm) = target.slack_warm(r, opts, &[]);
    DIFFERENCE_STEPS
        .iter()
        .map(|&h| {
            let (plus, _) = target.slack_warm(&r.axpy(h, &dir), opts, &warm);
            let (minus, _) = target.slack_warm(&r.axpy(-h, &dir), opts, &warm);
            (plus - minus) / (2.0 * h * size)
        })
        .collect()
}

/// A start point in the target set; on its boundary when `boundary` is set.
pub fn sample_start(
    target: &SlackTarget,
    n: usize,
    rng: &mut LabRng,
    boundary: bool,
    opts: &OracleOptions,
) -> Result<CurvatureTensor> {
    target.check_dim(n)?;
    match target {
        SlackTarget::Cone(spec) => Ok(random_cone_sample(rng, n, spec, boundary, opts)?.r),
        SlackTarget::Pinched(f) => {
            // a member of the base cone at a random scale, shifted along id⊼id
            // until the pinched slack vanishes
            let spec = ConeSpec::new(f.sigma0, f.theta)?;
            let size = 10f64.powf(rng.random_range(0.0..4.0));
            let base = random_cone_sample(rng, n, &spec, false, opts)?
                .r
                .scale(size);
            let geometry = ConeGeometry::new(&base, opts, &[]);
            let mut c = boundary_shift(&geometry, f);
            if !boundary {
                c += rng.random_range(0.05..0.5) * size;
            }
            Ok(base.axpy(c, &id_kn_id(n)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub index: usize,
    /// The sample is replayed from `rng_for(seed, stream)`.
    pub stream: u64,
    pub boundary: bool,
    pub initial_slack: f64,
    pub min_slack: f64,
    pub scal_factor: f64,
    pub steps: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub target: String,
    pub n: usize,
    pub seed: u64,
    pub horizon: f64,
    pub samples: Vec<SampleVerdict>,
    pub min_slack: f64,
    pub pass: bool,
}

fn probe_controls(target: &SlackTarget, opts: &OracleOptions) -> Controls {
    Controls {
        target: Some(target.clone()),
        oracle: opts.clone(),
        max_steps: 20_000,
        ..Controls::default()
    }
}

fn run_sample(
    start: &CurvatureTensor,
    horizon: f64,
    controls: &Controls,
) -> (f64, f64, f64, usize, StopReason) {
    let state = OdeState::Full { r: start.clone() };
    let traj = integrate(&state, Stop::ScalFactor(horizon), controls);
    let first = traj.trace.points[0].slack.unwrap_or(f64::NAN);
    let min = traj.trace.min_slack().unwrap_or(f64::NAN);
    let factor = traj.state.scal() / scalar(start);
    (first, min, factor, traj.trace.accepted, traj.stop)
}

fn summarize(
    target: &SlackTarget,
    n: usize,
    seed: u64,
    horizon: f64,
    samples: Vec<SampleVerdict>,
) -> InvarianceReport {
    let min_slack = samples
        .iter()
        .map(|s| s.min_slack)
        .fold(f64::INFINITY, f64::min);
    let reached = samples.iter().all(|s| s.stop == StopReason::ScalFactor);
    InvarianceReport {
        target: target.label(),
        n,
        seed,
        horizon,
        pass: reached && min_slack >= -INVARIANCE_TOL,
        min_slack,
        samples,
    }
}

/// Draws `samples` start points, alternating interior and boundary, and
/// integrates each until scal has grown by `horizon`.
pub fn invariance_probe(
    target: &SlackTarget,
    n: usize,
    samples: usize,
    seed: u64,
    horizon: f64,
    opts: &OracleOptions,
) -> Result<InvarianceReport> {
    target.check_dim(n)?;
    let controls = probe_controls(target, opts);
    let verdicts = (0..samples)
        .into_par_iter()
        .map(|index| {
            let stream = SAMPLE_STREAM + index as u64;
            let mut rng = rng_for(seed, stream);
            let boundary = index % 2 == 1;
            let start = sample_start(target, n, &mut rng, boundary, opts)?;
            let (initial_slack, min_slack, scal_factor, steps, stop) =
                run_sample(&start, horizon, &controls);
            Ok(SampleVerdict {
                index,
                stream,
                boundary,
                initial_slack,
                min_slack,
                scal_factor,
                steps,
                stop,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(target, n, seed, horizon, verdicts))
}

/// The probe on given start points; refuses points outside the target.
pub fn invariance_from(
    target: &SlackTarget,
    starts: &[CurvatureTensor],
    horizon: f64,
    opts: &OracleOptions,
) -> Result<InvarianceReport> {
    let n = starts.first().map_or(0, CurvatureTensor::dim);
    target.check_dim(n)?;
    for (k, r) in starts.iter().enumerate() {
        let (slack, _) = target.slack_warm(r, opts, &[]);
        if slack < -INVARIANCE_TOL * r.max_abs() {
            return Err(LabError::Precondition(format!(
                "start {k} lies outside {} (slack {slack:e})",
                target.label()
            )));
        }
    }
    let controls = probe_controls(target, opts);
    let verdicts = starts
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let (initial_slack, min_slack, scal_factor, steps, stop) =
                run_sample(r, horizon, &controls);
            SampleVerdict {
                index,
                stream: 0,
                boundary: false,
                initial_slack,
                min_slack,
                scal_factor,
                steps,
                stop,
            }
        })
        .collect();
    Ok(summarize(target, n, 0, horizon, verdicts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalitySample {
    pub index: usize,
    pub stream: u64,
    pub slack: f64,
    /// One derivative per step of [`DIFFERENCE_STEPS`].
    pub derivatives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub sigma: f64,
    pub theta: f64,
    pub n: usize,
    pub seed: u64,
    pub steps: Vec<f64>,
    pub samples: Vec<TransversalitySample>,
    pub min_derivative: f64,
    pub signs_agree: bool,
    pub pass: bool,
}

/// Derivative of the slack along the scale-normalized flow direction
/// Q(R) − (scal(Q(R))/scal(R)) R at sampled boundary points.
pub fn transversality_probe(
    spec: &ConeSpec,
    n: usize,
    samples: usize,
    seed: u64,
    opts: &OracleOptions,
) -> Result<TransversalityReport> {
    spec.check_dim(n)?;
    if !(spec.sigma > 0.0 && spec.sigma < 2.0 && spec.sigma != 1.0) {
        return Err(LabError::Precondition(format!(
            "sigma = {} is outside (0, 1) and (1, 2)",
            spec.sigma
        )));
    }
    if !(spec.theta > 0.0) {
        return Err(LabError::Precondition(
            "transversality needs theta > 0".into(),
        ));
    }
    let target = SlackTarget::Cone(*spec);
    let rows = (0..samples)
        .into_par_iter()
        .map(|index| {
            let stream = SAMPLE_STREAM + index as u64;
            let mut rng = rng_for(seed, stream);
            let r = random_cone_sample(&mut rng, n, spec, true, opts)?.r;
            let q = q_quadratic(&r);
            let v = q.axpy(-scalar(&q) / scalar(&r), &r);
            let (slack, _) = target.slack_warm(&r, opts, &[]);
            let derivatives = directional_derivatives(&target, &r, &v, opts);
            Ok(TransversalitySample {
                index,
                stream,
                slack,
                derivatives,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_derivative = rows
        .iter()
        .flat_map(|s| s.derivatives.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let signs_agree = rows.iter().all(|s| {
        let first = s.derivatives[0] > 0.0;
        s.derivatives.iter().all(|d| (*d > 0.0) == first)
    });
    Ok(TransversalityReport {
        sigma: spec.sigma,
        theta: spec.theta,
        n,
        seed,
        steps: DIFFERENCE_STEPS.to_vec(),
        pass: signs_agree && min_derivative > 0.0,
        min_derivative,
        signs_agree,
        samples: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{kn_with_identity, SymmetricForm};

    #[test]
    fn cone_invariance_small() {
        let opts = OracleOptions::default();
        let target = SlackTarget::Cone(ConeSpec::new(2.0, 0.0).unwrap());
        let rep = invariance_probe(&target, 5, 4, 1, 100.0, &opts).unwrap();
        assert!(rep.pass, "{rep:?}");
        let again = invariance_probe(&target, 5, 4, 1, 100.0, &opts).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn outside_starts_are_refused() {
        let opts = OracleOptions::default();
        let target = SlackTarget::Cone(ConeSpec::new(1.0, 0.0).unwrap());
        let bad = id_kn_id(5).scale(-1.0);
        assert!(matches!(
            invariance_from(&target, &[bad], 10.0, &opts),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn transversality_guards() {
        let opts = OracleOptions::default();
        for (s, t) in [(1.0, 0.05), (2.0, 0.0), (2.0, 0.05), (1.5, 0.0)] {
            let spec = ConeSpec::new(s, t).unwrap();
            assert!(transversality_probe(&spec, 5, 1, 0, &opts).is_err());
        }
    }

    #[test]
    fn derivative_of_a_shift_is_positive() {
        let opts = OracleOptions::default();
        let target = SlackTarget::Cone(ConeSpec::new(1.5, 0.05).unwrap());
        let mut d = vec![1.0; 5];
        d[0] = -1.0;
        let r = kn_with_identity(&SymmetricForm::diagonal(&d));
        let der = directional_derivatives(&target, &r, &id_kn_id(5), &opts);
        assert!(der.iter().all(|x| *x > 0.0), "{der:?}");
    }
}

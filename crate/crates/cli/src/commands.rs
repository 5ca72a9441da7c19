use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use curvlab::algebra::{CurvatureTensor, TensorRecord};
use curvlab::catalog::{boundary_audit, classify, model_tensor, ModelKind};
use curvlab::flow::{
    integrate, invariance_probe, theta_bar_estimate, transversality_probe, validate_trace_face,
    Controls, InvarianceReport, OdeState, SlackTarget, Stop, StopReason, INVARIANCE_TOL,
};
use curvlab::generate::{random_curvature, CurvatureClass};
use curvlab::identities::{run_identities, IdentityOptions};
use curvlab::oracle::{cone_membership, ConeSpec};
use curvlab::pinching::{
    default_sequence, pinched_set_invariance, PinchingFunction, DEFAULT_DEPTH,
};
use curvlab::surgery::{pinching_audit, NeckGeometry, NeckProfile};
use curvlab::LabError;

use crate::config::RunConfig;
use crate::CliError;

/// Where a command takes its curvature tensor from.
#[derive(Debug, Clone, Default, Args)]
pub struct Source {
    /// Model space, e.g. `cylinder` or `product_spheres:2`
    #[arg(long, conflicts_with_all = ["input", "random"])]
    pub model: Option<String>,
    /// Tensor JSON, as written by `--save`
    #[arg(long, conflicts_with = "random")]
    pub input: Option<PathBuf>,
    /// Random tensor of class generic, pic2, psd, member or boundary (needs --seed)
    #[arg(long)]
    pub random: Option<String>,
    /// Save the tensor as JSON
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum PinchingAction {
    /// Build f from σ₀ (--sigma), θ and the default sequence
    Build {
        /// Number of shifted cones
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
    },
    /// Evaluate a saved f
    Eval {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated arguments s ≥ 0
        #[arg(long, value_delimiter = ',', required = true)]
        at: Vec<f64>,
    },
    /// Check the shape of f and probe invariance of its pinched set
    Verify {
        /// Saved f; built from the flags when absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
    },
}

/// What a command hands back to the driver.
pub struct Outcome {
    pub pass: bool,
    pub lines: Vec<String>,
    pub report: Value,
    pub csv: Option<String>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_class(name: &str, sigma: f64, theta: f64) -> Result<CurvatureClass, CliError> {
    Ok(match name {
        "generic" => CurvatureClass::Generic,
        "pic2" => CurvatureClass::Pic2Interior,
        "psd" => CurvatureClass::PsdOperator,
        "member" => CurvatureClass::ConeMember { sigma, theta },
        "boundary" => CurvatureClass::ConeBoundary { sigma, theta },
        _ => return Err(CliError::Config(format!("unknown tensor class `{name}`"))),
    })
}

/// The tensor and a label for it; `Some(kind)` for catalog models.
fn load_tensor(
    cfg: &RunConfig,
    source: &Source,
    spec: &ConeSpec,
) -> Result<(CurvatureTensor, String, Option<ModelKind>), CliError> {
    let n = cfg.n(5);
    let (r, label, kind) = if let Some(path) = &source.input {
        let record: TensorRecord = serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Lab(LabError::Format(e.to_string())))?;
        (
            CurvatureTensor::from_record(&record)?,
            format!("file:{}", path.display()),
            None,
        )
    } else if let Some(class) = &source.random {
        let class = parse_class(class, spec.sigma, spec.theta)?;
        let seed = cfg.seed()?;
        (
            random_curvature(n, seed, class, &cfg.oracle())?,
            format!("random:{}", class_name(&class)),
            None,
        )
    } else {
        let kind = ModelKind::parse(source.model.as_deref().unwrap_or("sphere"))?;
        (model_tensor(kind, n)?, kind.name(), Some(kind))
    };
    if let Some(path) = &source.save {
        write(
            path,
            &serde_json::to_string_pretty(&r.to_record()).expect("records serialize"),
        )?;
    }
    Ok((r, label, kind))
}

fn class_name(class: &CurvatureClass) -> String {
    match to_value(class).get("class") {
        Some(Value::String(s)) => s.clone(),
        _ => "unknown".into(),
    }
}

pub fn identities(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let defaults = IdentityOptions::default();
    let opts = IdentityOptions {
        seed: cfg.flags.seed.unwrap_or(defaults.seed),
        dims: cfg.flags.n.map_or(defaults.dims, |n| vec![n]),
        cases: cfg.samples(defaults.cases),
        coupled_cases: defaults.coupled_cases,
        tol: cfg.flags.tol,
    };
    let report = run_identities(&opts)?;
    let lines = report
        .checks
        .iter()
        .map(|c| {
            let verdict = if c.pass { "ok" } else { "FAILED" };
            let mut line = format!(
                "{:<20} {verdict:<6} max error {:.2e} (tol {:.0e}, {} cases)",
                c.name, c.max_error, c.tol, c.cases
            );
            if !c.pass {
                let _ = write!(
                    line,
                    "; worst at n = {}, case {} of seed {}",
                    c.worst_n, c.worst_case, report.seed
                );
            }
            line
        })
        .collect();
    Ok(Outcome {
        pass: report.pass,
        lines,
        report: to_value(&report),
        csv: None,
    })
}

pub fn membership(cfg: &RunConfig, source: &Source) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let spec = ConeSpec::new(cfg.sigma(2.0), cfg.theta(n, Some(0.0))?)?;
    spec.check_dim(n)?;
    let (r, label, kind) = load_tensor(cfg, source, &spec)?;
    let opts = cfg.oracle();
    let mut lines = Vec::new();
    let report = if kind.is_some() {
        let (report, class, exiting) = classify(&r, &spec, &opts, 20)?;
        lines.push(format!(
            "{label}: {:?}, slack {:.3e} ({} exiting perturbations)",
            class, report.slack, exiting
        ));
        json!({ "source": label, "n": n, "membership": report, "classification": class, "exiting_directions": exiting })
    } else {
        let report = cone_membership(&r, &spec, &opts)?;
        lines.push(format!(
            "{label}: member = {}, slack {:.3e}",
            report.member, report.slack
        ));
        json!({ "source": label, "n": n, "membership": report })
    };
    Ok(Outcome {
        pass: true,
        lines,
        report,
        csv: None,
    })
}

fn catalog_kinds(n: usize) -> Vec<ModelKind> {
    let mut kinds = vec![
        ModelKind::Sphere,
        ModelKind::Cylinder,
        ModelKind::PseudoCylinder,
    ];
    kinds.extend((2..=n.saturating_sub(2)).map(|k| ModelKind::ProductSpheres { k }));
    kinds.extend([ModelKind::SH2, ModelKind::SR2, ModelKind::Cp, ModelKind::Hp]);
    kinds.into_iter().filter(|k| k.check(n).is_ok()).collect()
}

pub fn catalog(cfg: &RunConfig, model: Option<&str>) -> Result<Outcome, CliError> {
    let n = cfg.n(6);
    let spec = ConeSpec::new(cfg.sigma(2.0), cfg.theta(n, Some(0.0))?)?;
    spec.check_dim(n)?;
    let kinds = match model {
        Some(m) => vec![ModelKind::parse(m)?],
        None => catalog_kinds(n),
    };
    let opts = cfg.oracle();
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut csv = String::from("model,n,slack,classification,exiting_directions\n");
    for kind in kinds {
        let audit = boundary_audit(kind, n, &spec, &opts)?;
        let tensor = model_tensor(kind, n)?.to_record();
        lines.push(format!(
            "{:<18} {:?} (slack {:.3e})",
            audit.model, audit.classification, audit.report.slack
        ));
        let class = to_value(&audit.classification);
        let _ = writeln!(
            csv,
            "{},{n},{:e},{},{}",
            audit.model,
            audit.report.slack,
            class.as_str().unwrap_or_default(),
            audit.exiting_directions
        );
        records.push(json!({ "model": audit.model, "n": n, "tensor": tensor, "audit": audit }));
    }
    Ok(Outcome {
        pass: true,
        lines,
        report: json!({ "sigma": spec.sigma, "theta": spec.theta, "records": records }),
        csv: Some(csv),
    })
}

pub fn evolve(cfg: &RunConfig, source: &Source, normalize: bool) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let target = match cfg.flags.sigma {
        Some(sigma) => {
            let spec = ConeSpec::new(sigma, cfg.theta(n, Some(0.0))?)?;
            spec.check_dim(n)?;
            Some(spec)
        }
        None => None,
    };
    let spec_for_source = target.unwrap_or(ConeSpec::new(2.0, 0.0)?);
    let (r, label, _) = load_tensor(cfg, source, &spec_for_source)?;
    let mut controls = Controls {
        normalize,
        target: target.map(SlackTarget::Cone),
        ..Controls::default()
    };
    if let Some(restarts) = cfg.flags.restarts {
        controls.oracle.restarts = restarts;
    }
    if let Some(tol) = cfg.flags.tol {
        controls.rtol = tol;
    }
    let horizon = cfg.horizon(100.0);
    let traj = integrate(&OdeState::Full { r }, Stop::ScalFactor(horizon), &controls);
    let pass = traj.stop == StopReason::ScalFactor;
    let min_slack = traj.trace.min_slack();
    let mut lines = vec![format!(
        "{label}: stopped by {:?} at t = {:.6e} after {} steps ({} rejected)",
        traj.stop, traj.time, traj.trace.accepted, traj.trace.rejected
    )];
    if let Some(s) = min_slack {
        lines.push(format!(
            "minimum relative slack along the trajectory {s:.3e}"
        ));
    }
    let report = json!({
        "source": label,
        "n": n,
        "horizon": horizon,
        "stop": traj.stop,
        "time": traj.time,
        "final_tensor": traj.state.tensor().to_record(),
        "min_slack": min_slack,
        "trace": traj.trace,
    });
    Ok(Outcome {
        pass,
        lines,
        report,
        csv: Some(traj.trace.to_csv()),
    })
}

fn verdict_csv(report: &InvarianceReport) -> String {
    let mut csv =
        String::from("index,stream,boundary,initial_slack,min_slack,scal_factor,steps,stop\n");
    for s in &report.samples {
        let stop = to_value(&s.stop);
        let _ = writeln!(
            csv,
            "{},{},{},{:e},{:e},{:e},{},{}",
            s.index,
            s.stream,
            s.boundary,
            s.initial_slack,
            s.min_slack,
            s.scal_factor,
            s.steps,
            stop.as_str().unwrap_or_default()
        );
    }
    csv
}

/// Re-judges a probe against the configured tolerance.
fn rejudge(report: &mut InvarianceReport, tol: f64) {
    let reached = report
        .samples
        .iter()
        .all(|s| s.stop == StopReason::ScalFactor);
    report.pass = reached && report.min_slack >= -tol;
}

fn invariance_lines(report: &InvarianceReport) -> Vec<String> {
    let unfinished = report
        .samples
        .iter()
        .filter(|s| s.stop != StopReason::ScalFactor)
        .count();
    vec![format!(
        "{} (n = {}): {} samples to scal x{}, min relative slack {:.3e}, {} unfinished",
        report.target,
        report.n,
        report.samples.len(),
        report.horizon,
        report.min_slack,
        unfinished
    )]
}

pub fn invariance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let spec = ConeSpec::new(cfg.sigma(1.5), cfg.theta(n, None)?)?;
    let seed = cfg.seed()?;
    let mut report = invariance_probe(
        &SlackTarget::Cone(spec),
        n,
        cfg.samples(50),
        seed,
        cfg.horizon(100.0),
        &cfg.oracle(),
    )?;
    rejudge(&mut report, cfg.tol(INVARIANCE_TOL));
    Ok(Outcome {
        pass: report.pass,
        lines: invariance_lines(&report),
        csv: Some(verdict_csv(&report)),
        report: to_value(&report),
    })
}

pub fn transversality(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let spec = ConeSpec::new(cfg.sigma(1.5), cfg.theta(n, None)?)?;
    let seed = cfg.seed()?;
    let report = transversality_probe(&spec, n, cfg.samples(20), seed, &cfg.oracle())?;
    let mut csv = String::from("index,stream,slack");
    for h in &report.steps {
        let _ = write!(csv, ",derivative_h{h:e}");
    }
    csv.push('\n');
    for s in &report.samples {
        let _ = write!(csv, "{},{},{:e}", s.index, s.stream, s.slack);
        for d in &s.derivatives {
            let _ = write!(csv, ",{d:e}");
        }
        csv.push('\n');
    }
    let lines = vec![format!(
        "C({}, {:.4}) boundary, n = {n}: min derivative {:.3e}, signs agree: {}",
        spec.sigma, spec.theta, report.min_derivative, report.signs_agree
    )];
    Ok(Outcome {
        pass: report.pass,
        lines,
        report: to_value(&report),
        csv: Some(csv),
    })
}

pub fn theta_bar(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let seed = cfg.flags.seed.unwrap_or(0);
    let samples = cfg.samples(100_000);
    let estimate = theta_bar_estimate(n, &[])?;
    let th = estimate.theta_hat;
    let half = validate_trace_face(n, th / 2.0, samples, seed, &[])?;
    let double = validate_trace_face(n, 2.0 * th, samples, seed, &[])?;
    let pass = th > 0.0 && half.min_value >= -cfg.tol(1e-9) && double.violations > 0;
    let lines = vec![
        format!(
            "theta_hat({n}) = {th:.12} (binding sigma {})",
            estimate.binding_sigma
        ),
        format!(
            "theta_hat/2: min derivative {:.3e} over {samples} samples",
            half.min_value
        ),
        format!(
            "2 theta_hat: {} of {samples} samples violate",
            double.violations
        ),
    ];
    let report = json!({ "estimate": estimate, "at_half": half, "at_double": double });
    Ok(Outcome {
        pass,
        lines,
        report,
        csv: None,
    })
}

fn load_pinching(path: &Path) -> Result<PinchingFunction, CliError> {
    let text = read(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Lab(LabError::Format(e.to_string())))?;
    // accept both a bare function and a `pinching build --json` report
    let body = value.get("report").cloned().unwrap_or(value);
    Ok(PinchingFunction::from_json(&body.to_string())?)
}

fn build_pinching(cfg: &RunConfig, depth: usize) -> Result<PinchingFunction, CliError> {
    let n = cfg.n(5);
    let sigma0 = cfg.sigma(1.5);
    let theta = cfg.theta(n, None)?;
    Ok(PinchingFunction::build(
        sigma0,
        theta,
        n,
        Some(&default_sequence(sigma0, depth)),
    )?)
}

fn pinching_csv(f: &PinchingFunction, points: &[f64]) -> Result<String, CliError> {
    let mut csv = String::from("s,f\n");
    for &s in points {
        let _ = writeln!(csv, "{s:e},{:e}", f.eval(s)?);
    }
    Ok(csv)
}

pub fn pinching(cfg: &RunConfig, action: &PinchingAction) -> Result<Outcome, CliError> {
    match action {
        PinchingAction::Build { depth } => {
            let f = build_pinching(cfg, *depth)?;
            let grid: Vec<f64> = (0..=200)
                .map(|k| 1e-3 * 1e9f64.powf(k as f64 / 200.0))
                .collect();
            let lines = vec![format!(
                "f for sigma0 = {}, theta = {:.6}, n = {}: {} terms, small-s branch up to {:.4e}",
                f.sigma0,
                f.theta,
                f.n,
                f.depth(),
                f.small_s_threshold
            )];
            let pass = f.validation.check().is_ok();
            Ok(Outcome {
                pass,
                lines,
                csv: Some(pinching_csv(&f, &grid)?),
                report: to_value(&f),
            })
        }
        PinchingAction::Eval { input, at } => {
            let f = load_pinching(input)?;
            let values = at
                .iter()
                .map(|&s| Ok(json!({ "s": s, "f": f.eval(s)? })))
                .collect::<Result<Vec<_>, CliError>>()?;
            let lines = values
                .iter()
                .map(|v| format!("f({}) = {}", v["s"], v["f"]))
                .collect();
            Ok(Outcome {
                pass: true,
                lines,
                csv: Some(pinching_csv(&f, at)?),
                report: json!({ "values": values }),
            })
        }
        PinchingAction::Verify { input, depth } => {
            let f = match input {
                Some(path) => load_pinching(path)?,
                None => build_pinching(cfg, *depth)?,
            };
            let shape = f.validate();
            let shape_ok = shape.check().is_ok();
            let seed = cfg.seed()?;
            let mut report = pinched_set_invariance(
                &f,
                cfg.samples(30),
                seed,
                cfg.horizon(100.0),
                &cfg.oracle(),
            )?;
            rejudge(&mut report, cfg.tol(INVARIANCE_TOL));
            let mut lines = vec![format!(
                "shape checks {}: concavity {:.1e}, small-s {:.1e}, asymptote {:.1e}",
                if shape_ok { "hold" } else { "fail" },
                shape.max_second_difference,
                shape.small_s_error,
                shape.asymptote_error
            )];
            lines.extend(invariance_lines(&report));
            Ok(Outcome {
                pass: shape_ok && report.pass,
                lines,
                csv: Some(verdict_csv(&report)),
                report: json!({ "shape": shape, "invariance": report }),
            })
        }
    }
}

fn parse_profile(text: &str) -> Result<NeckProfile, CliError> {
    match text.split_once(':') {
        None if text == "standard" => Ok(NeckProfile::Standard),
        Some(("cosine", delta)) => delta
            .parse()
            .map(|delta| NeckProfile::Cosine { delta })
            .map_err(|_| CliError::Config(format!("bad perturbation size in `{text}`"))),
        _ => Err(CliError::Config(format!(
            "unknown profile `{text}` (standard or cosine:DELTA)"
        ))),
    }
}

pub fn surgery(cfg: &RunConfig, profile: &str) -> Result<Outcome, CliError> {
    let n = cfg.n(5);
    let f = PinchingFunction::build(cfg.sigma(1.5), cfg.theta(n, None)?, n, None)?;
    let geom = match parse_profile(profile)? {
        NeckProfile::Standard => NeckGeometry::standard(n)?,
        NeckProfile::Cosine { delta } => NeckGeometry::perturbed(n, delta)?,
    };
    let audit = pinching_audit(&geom, &f, &cfg.oracle())?;
    let lines = vec![
        format!(
            "post-surgery pinching: {} failures of {} points, min relative slack {:.3e} at z = {:.4}",
            audit.post_failures,
            audit.points.len(),
            audit.min_post_slack,
            audit.worst_post_z
        ),
        format!(
            "trace gain below (1 - c) z^-4 e^(-1/z) on (0, 0.2]: {} points, largest measured c {:.3}",
            audit.trace_gain_failures, audit.max_measured_c
        ),
        format!(
            "z <= 0 unchanged: {}; points with z >= 1 outside C(1, theta): {}; f-gap failures: {}",
            audit.z_nonpositive_identical, audit.c1_failures_beyond_one, audit.f_gap_failures
        ),
    ];
    Ok(Outcome {
        pass: audit.pass,
        lines,
        csv: Some(audit.to_csv()),
        report: to_value(&audit),
    })
}

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails. Pass criterion numbers as arguments
//! to run a subset: `cargo test --test acceptance -- 3 8`.

use std::process::ExitCode;
use std::time::Instant;

use curvlab::algebra::{id_kn_id, remove_traceless_ricci};
use curvlab::catalog::{boundary_audit, Classification, ModelKind};
use curvlab::flow::{
    coupled_residual, integrate, invariance_probe, reaction_pair_eigenvalue,
    reaction_pair_high_sigma_form, reaction_pair_low_sigma_form, rhs_coupled, theta_bar_estimate,
    transversality_probe, validate_trace_face, Controls, EigenData, OdeState, SlackTarget, Stop,
    StopReason,
};
use curvlab::generate::{random_curvature, CurvatureClass};
use curvlab::identities::{kn_square_error, run_identities, IdentityOptions};
use curvlab::oracle::{
    complex_sectional_min, cone_membership, curv_op_min_eig, pic2_min, ConeSpec, OracleOptions,
    BOUNDARY_BAND,
};
use curvlab::pinching::{epsilon_search, pinched_set_invariance, PinchingFunction};
use curvlab::sampling::{gaussian, random_form, random_tensor, rng_for};
use curvlab::surgery::{pinching_audit, NeckGeometry};
use curvlab::Result;
use rand::Rng;

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn theta_hat(n: usize) -> f64 {
    theta_bar_estimate(n, &[]).expect("n >= 5").theta_hat
}

fn c1_identities() -> Result<Outcome> {
    let start = Instant::now();
    let opts = IdentityOptions {
        seed: SEED,
        dims: (4..=8).collect(),
        cases: 200,
        coupled_cases: 0,
        tol: None,
    };
    let report = run_identities(&opts)?;
    let pick = |name: &str| {
        report
            .checks
            .iter()
            .find(|c| c.name == name)
            .expect("check exists")
            .max_error
    };
    let (b, q) = (pick("b_with_kn"), pick("q_of_kn"));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        b <= 1e-10 && q <= 1e-10 && secs < 30.0,
        format!("max rel error B(S,H⊼id) {b:.2e}, Q(H⊼id) {q:.2e}"),
    )
}

fn c2_kn_squares() -> Result<Outcome> {
    let worst = (5..=8)
        .map(kn_square_error)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!("max error {worst:.2e} over n = 5..8"),
    )
}

fn c3_boundary_audits() -> Result<Outcome> {
    let start = Instant::now();
    let opts = OracleOptions::with_restarts(64);
    let spec = ConeSpec::new(2.0, 0.0)?;
    let mut cases = Vec::new();
    for n in [5, 6, 8] {
        cases.push((ModelKind::Cylinder, n, Classification::Interior));
        for kind in [ModelKind::PseudoCylinder, ModelKind::SH2, ModelKind::SR2] {
            cases.push((kind, n, Classification::Boundary));
        }
    }
    cases.push((
        ModelKind::ProductSpheres { k: 2 },
        6,
        Classification::Boundary,
    ));
    cases.push((
        ModelKind::ProductSpheres { k: 3 },
        6,
        Classification::Boundary,
    ));
    cases.push((ModelKind::Cp, 6, Classification::Boundary));
    cases.push((ModelKind::Hp, 8, Classification::Boundary));
    let mut mismatches = Vec::new();
    for (kind, n, expected) in &cases {
        let audit = boundary_audit(*kind, *n, &spec, &opts)?;
        if audit.classification != *expected {
            mismatches.push(format!(
                "{}(n={n}) {:?} slack {:.2e}",
                audit.model, audit.classification, audit.report.slack
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 300.0,
        format!(
            "{} models, mismatches: [{}]",
            cases.len(),
            mismatches.join(", ")
        ),
    )
}

fn c4_reaction_pair() -> Result<Outcome> {
    let mut rng = rng_for(SEED, 4);
    let (mut worst, mut worst_case_error) = (f64::INFINITY, 0.0f64);
    for _ in 0..100_000 {
        let n = rng.random_range(5..=8);
        let a: Vec<f64> = (0..n)
            .map(|_| gaussian(&mut rng).abs() * 10f64.powf(gaussian(&mut rng)))
            .collect();
        let data = EigenData::new(a);
        let sigma = 2.0 * (1.0 - rng.random::<f64>());
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let raw = reaction_pair_eigenvalue(&data, sigma, i, j)?;
        let scale = data
            .a
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        worst = worst.min(raw / scale);
        for case in [
            reaction_pair_low_sigma_form(&data, sigma, i, j)?,
            reaction_pair_high_sigma_form(&data, sigma, i, j)?,
        ] {
            worst_case_error = worst_case_error.max((case - raw).abs() / scale.max(raw.abs()));
        }
    }
    outcome(
        worst >= -1e-9 && worst_case_error <= 1e-10,
        format!("min expression/|a|² {worst:.2e}, case decomposition error {worst_case_error:.2e}"),
    )
}

fn c5_theta_bar() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for n in 5..=8 {
        let th = theta_hat(n);
        let half = validate_trace_face(n, th / 2.0, 100_000, SEED, &[])?;
        let double = validate_trace_face(n, 2.0 * th, 100_000, SEED, &[])?;
        pass &= th > 0.0 && half.min_value >= -1e-9 && double.violations > 0;
        parts.push(format!(
            "n={n}: θ̂={th:.4} min@θ̂/2 {:.1e}, violations@2θ̂ {}",
            half.min_value, double.violations
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c6_invariance() -> Result<Outcome> {
    let opts = OracleOptions::default();
    let half = theta_hat(5) / 2.0;
    let mut parts = Vec::new();
    let mut pass = true;
    for sigma in [0.5, 1.0, 1.5, 2.0] {
        for theta in [0.0, half] {
            let target = SlackTarget::Cone(ConeSpec::new(sigma, theta)?);
            let report = invariance_probe(&target, 5, 50, SEED, 100.0, &opts)?;
            pass &= report.pass;
            parts.push(format!("C({sigma},{theta:.3}) {:.1e}", report.min_slack));
        }
    }
    for sigma in [1.2, 1.5, 1.8] {
        let report = transversality_probe(&ConeSpec::new(sigma, half)?, 5, 20, SEED, &opts)?;
        pass &= report.pass;
        parts.push(format!(
            "∂C({sigma}) min derivative {:.2e} agree={}",
            report.min_derivative, report.signs_agree
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c7_coupled() -> Result<Outcome> {
    let mut rng = rng_for(SEED, 7);
    let mut residual = 0.0f64;
    for k in 0..500 {
        let n = 5 + k % 4;
        let s = remove_traceless_ricci(&random_tensor(&mut rng, n));
        let h = random_form(&mut rng, n);
        let sigma = 2.0 * (1.0 - rng.random::<f64>());
        let (ds, dh) = rhs_coupled(&s, &h, sigma)?;
        residual = residual.max(coupled_residual(&s, &h, &ds, &dh));
    }
    let controls = Controls::default();
    let mut divergence = 0.0f64;
    let mut completed = 0;
    for k in 0..20u64 {
        let n = 5 + (k % 3) as usize;
        let sigma = [0.5, 1.0, 1.5, 2.0][k as usize % 4];
        let spec = ConeSpec::new(sigma, 0.0)?;
        let r = random_curvature(
            n,
            SEED + k,
            CurvatureClass::ConeMember { sigma, theta: 0.0 },
            &OracleOptions::default(),
        )?;
        let decomposition = curvlab::oracle::decompose(&r, &spec, &OracleOptions::default())?
            .expect("sampled cone members decompose");
        let full = integrate(
            &OdeState::Full { r: r.clone() },
            Stop::ScalFactor(100.0),
            &controls,
        );
        let coupled_start = OdeState::Coupled {
            s: decomposition.s,
            h: decomposition.h,
            sigma,
        };
        let coupled = integrate(&coupled_start, Stop::TEnd(full.time), &controls);
        if full.stop == StopReason::ScalFactor && coupled.stop == StopReason::TEnd {
            completed += 1;
        }
        let (a, b) = (full.state.tensor(), coupled.state.tensor());
        divergence = divergence.max(a.sub(&b).max_abs() / a.max_abs());
    }
    outcome(
        residual <= 1e-9 && divergence <= 1e-6 && completed == 20,
        format!("coupled residual {residual:.2e} (500 states); paired divergence {divergence:.2e} ({completed}/20 runs)"),
    )
}

fn c8_sphere() -> Result<Outcome> {
    let controls = Controls::default();
    let mut worst = 0.0f64;
    for n in [4usize, 5, 6, 8] {
        let start = OdeState::Full {
            r: id_kn_id(n).scale(0.5),
        };
        let traj = integrate(&start, Stop::ScalFactor(100.0), &controls);
        if traj.stop != StopReason::ScalFactor {
            return outcome(false, format!("n={n} stopped with {:?}", traj.stop));
        }
        let nf = n as f64;
        for p in &traj.trace.points {
            let exact = 0.5 / (1.0 - (2.0 * nf - 2.0) * p.t);
            let numeric = p.scal / (2.0 * nf * (nf - 1.0));
            worst = worst.max((numeric - exact).abs() / exact);
        }
    }
    outcome(
        worst <= 10.0 * controls.rtol,
        format!(
            "max relative error {worst:.2e} (10·rtol = {:.0e})",
            10.0 * controls.rtol
        ),
    )
}

fn c9_pinching() -> Result<Outcome> {
    let f = PinchingFunction::build(1.5, theta_hat(5) / 2.0, 5, None)?;
    let valid = f.validate() == f.validation && f.validation.check().is_ok();
    let report = pinched_set_invariance(&f, 30, SEED, 100.0, &OracleOptions::default())?;
    outcome(
        valid && report.pass,
        format!(
            "invariants {}; concavity {:.1e}, small-s {:.1e}, asymptote {:.1e}; invariance min slack {:.1e}",
            if valid { "hold" } else { "violated" },
            f.validation.max_second_difference,
            f.validation.small_s_error,
            f.validation.asymptote_error,
            report.min_slack
        ),
    )
}

fn c10_surgery() -> Result<Outcome> {
    let start = Instant::now();
    let f = PinchingFunction::build(1.5, theta_hat(5) / 2.0, 5, None)?;
    let audit = pinching_audit(&NeckGeometry::standard(5)?, &f, &OracleOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        audit.post_failures == 0
            && audit.trace_gain_failures == 0
            && audit.z_nonpositive_identical
            && audit.c1_failures_beyond_one == 0
            && secs < 600.0,
        format!(
            "post-surgery failures {} (min {:.2e} at z={:.3}); trace-gain failures {} (max c {:.3}); \
             z≤0 identical {}; C(1,θ) failures for z≥1: {}",
            audit.post_failures,
            audit.min_post_slack,
            audit.worst_post_z,
            audit.trace_gain_failures,
            audit.max_measured_c,
            audit.z_nonpositive_identical,
            audit.c1_failures_beyond_one
        ),
    )
}

fn c11_cross_validation() -> Result<Outcome> {
    let opts = OracleOptions::default();
    let (mut disagreements, mut ambiguous, mut positive) = (0, 0, 0);
    let mut witness_error = 0.0f64;
    for k in 0..100u64 {
        let n = 4 + (k % 3) as usize;
        let mut rng = rng_for(SEED, 1100 + k);
        let r = random_tensor(&mut rng, n).axpy(4.0 * rng.random::<f64>(), &id_kn_id(n));
        let band = BOUNDARY_BAND * r.max_abs();
        let (frames, complex) = (pic2_min(&r, &opts), complex_sectional_min(&r, &opts));
        if frames.value.abs() <= band || complex.value.abs() <= band {
            ambiguous += 1;
        } else if (frames.value > 0.0) != (complex.value > 0.0) {
            disagreements += 1;
        } else if frames.value > 0.0 {
            positive += 1;
        }
        for res in [&frames, &complex] {
            let replay = res.witness.evaluate(&r).expect("frame witness");
            witness_error = witness_error.max((replay - res.value).abs() / r.max_abs());
        }
        let report = cone_membership(&r, &ConeSpec::new(1.5, 0.02)?, &opts)?;
        witness_error = witness_error.max((report.replay(&r) - report.slack).abs() / r.max_abs());
    }
    let mut psd_failures = 0;
    for k in 0..100u64 {
        let n = 4 + (k % 3) as usize;
        let r = random_curvature(n, SEED + 2000 + k, CurvatureClass::PsdOperator, &opts)?;
        let band = BOUNDARY_BAND * r.max_abs();
        if curv_op_min_eig(&r) >= -band && pic2_min(&r, &opts).value < -band {
            psd_failures += 1;
        }
    }
    outcome(
        disagreements == 0 && psd_failures == 0 && witness_error <= 1e-9,
        format!(
            "verdict disagreements {disagreements} ({positive} PIC2, {ambiguous} inside the band); \
             PSD-operator failures {psd_failures}; \
             max witness replay error {witness_error:.1e}"
        ),
    )
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("reports serialize")
}

fn c12_determinism() -> Result<Outcome> {
    let opts = OracleOptions::with_restarts(8);
    let run = || -> Result<Vec<String>> {
        let target = SlackTarget::Cone(ConeSpec::new(1.5, 0.05)?);
        let f = PinchingFunction::build(1.5, 0.05, 5, None)?;
        Ok(vec![
            json(&invariance_probe(&target, 5, 4, SEED, 10.0, &opts)?),
            json(&transversality_probe(
                &ConeSpec::new(1.5, 0.05)?,
                5,
                4,
                SEED,
                &opts,
            )?),
            json(&validate_trace_face(6, 0.05, 2000, SEED, &[])?),
            json(&run_identities(&IdentityOptions {
                seed: SEED,
                dims: vec![5],
                cases: 5,
                coupled_cases: 5,
                tol: None,
            })?),
            json(&epsilon_search(1.5, 1.5, 0.05, 1.0, 5, 4, SEED, &opts)?),
            json(
                &random_curvature(
                    6,
                    SEED,
                    CurvatureClass::ConeBoundary {
                        sigma: 1.5,
                        theta: 0.01,
                    },
                    &opts,
                )?
                .to_record(),
            ),
            json(&pinching_audit(
                &NeckGeometry::perturbed(5, 0.01)?,
                &f,
                &opts,
            )?),
        ])
    };
    let first = run()?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(run)?;
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .expect("thread pool")
        .install(run)?;
    let differing: Vec<usize> = (0..first.len())
        .filter(|&k| first[k] != single[k] || first[k] != wide[k])
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} reports compared across 1/4 threads, differing: {differing:?}",
            first.len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 12] = [
    (1, "B and Q identities with H⊼id", c1_identities),
    (2, "squared Kulkarni–Nomizu identities", c2_kn_squares),
    (3, "model-space boundary audits", c3_boundary_audits),
    (
        4,
        "reaction-pair inequality and case split",
        c4_reaction_pair,
    ),
    (5, "θ̂ estimate and trace-face validation", c5_theta_bar),
    (6, "cone invariance and transversality", c6_invariance),
    (7, "coupled and full systems agree", c7_coupled),
    (8, "round-sphere closed form", c8_sphere),
    (
        9,
        "pinching function and pinched-set invariance",
        c9_pinching,
    ),
    (10, "surgery cutoff preserves pinching", c10_surgery),
    (11, "oracle cross-validation", c11_cross_validation),
    (12, "seeded reports are reproducible", c12_determinism),
];

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, title, run) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{id:>2}] {title}: {detail} ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

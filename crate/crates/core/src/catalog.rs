//! Curvature tensors of model spaces, emitted at unit scale.

use serde::{Deserialize, Serialize};

use crate::algebra::{kn_with_identity, CurvatureTensor, SymmetricForm};
use crate::error::{LabError, Result};
use crate::oracle::{
    cone_membership, ConeGeometry, ConeSpec, MembershipReport, OracleOptions, BOUNDARY_BAND,
};
use crate::sampling::{random_tensor, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ModelKind {
    /// Round sphere with sectional curvature 1.
    Sphere,
    /// S^{n−1} × R as diag(0,1,…,1)⊼diag(0,1,…,1).
    Cylinder,
    /// diag(−1,1,…,1)⊼diag(−1,1,…,1).
    PseudoCylinder,
    /// Einstein S^k × S^{n−k}; the S^k factor occupies the first k directions.
    ProductSpheres { k: usize },
    /// H² × S^{n−2} as H⊼id with H = diag(−1,−1,1,…,1).
    SH2,
    /// R² × S^{n−2}.
    SR2,
    /// Complex projective space, holomorphic curvature 1.
    Cp,
    /// Quaternionic projective space, quaternionic sectional curvature 1.
    Hp,
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Sphere => "sphere".into(),
            ModelKind::Cylinder => "cylinder".into(),
            ModelKind::PseudoCylinder => "pseudo_cylinder".into(),
            ModelKind::ProductSpheres { k } => format!("product_spheres_{k}"),
            ModelKind::SH2 => "s_h2".into(),
            ModelKind::SR2 => "s_r2".into(),
            ModelKind::Cp => "cp".into(),
            ModelKind::Hp => "hp".into(),
        }
    }

    /// Parses `sphere`, `product_spheres:2`, `cp`, … .
    pub fn parse(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match head {
            "sphere" => ModelKind::Sphere,
            "cylinder" => ModelKind::Cylinder,
            "pseudo_cylinder" => ModelKind::PseudoCylinder,
            "product_spheres" => {
                let k = arg
                    .ok_or_else(|| LabError::InvalidSpec("product_spheres needs :k".into()))?
                    .parse()
                    .map_err(|_| LabError::InvalidSpec(format!("bad k in {s}")))?;
                ModelKind::ProductSpheres { k }
            }
            "s_h2" => ModelKind::SH2,
            "s_r2" => ModelKind::SR2,
            "cp" => ModelKind::Cp,
            "hp" => ModelKind::Hp,
            _ => return Err(LabError::InvalidSpec(format!("unknown model {s}"))),
        };
        Ok(kind)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        crate::algebra::check_dim(n)?;
        let ok = match self {
            ModelKind::ProductSpheres { k } => *k >= 2 && *k + 2 <= n,
            ModelKind::Cp => n % 2 == 0,
            ModelKind::Hp => n % 4 == 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::InvalidSpec(format!(
                "{} is not defined in dimension {n}",
                self.name()
            )))
        }
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Constant curvature κ on the coordinate block [lo, hi).
fn block_sphere(n: usize, lo: usize, hi: usize, kappa: f64) -> CurvatureTensor {
    CurvatureTensor::exact_from_fn(n, |i, j, k, l| {
        let inside = |x: usize| (lo..hi).contains(&x);
        if inside(i) && inside(j) && inside(k) && inside(l) {
            kappa * (delta(i, k) * delta(j, l) - delta(i, l) * delta(j, k))
        } else {
            0.0
        }
    })
    .expect("dimension checked")
}

/// R = ¼(δδ − δδ + Σ_s [J_s-terms]) for a family of orthogonal complex structures,
/// with `j[s][k][i]` = ⟨J_s e_i, e_k⟩.
fn kahler_type(n: usize, structures: &[Vec<Vec<f64>>]) -> CurvatureTensor {
    CurvatureTensor::exact_from_fn(n, |i, j, k, l| {
        let mut v = delta(i, k) * delta(j, l) - delta(i, l) * delta(j, k);
        for m in structures {
            v += m[k][i] * m[l][j] - m[l][i] * m[k][j] + 2.0 * m[j][i] * m[l][k];
        }
        0.25 * v
    })
    .expect("dimension checked")
}

fn complex_structure(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for a in 0..n / 2 {
        // J e_{2a} = e_{2a+1}, J e_{2a+1} = −e_{2a}
        m[2 * a + 1][2 * a] = 1.0;
        m[2 * a][2 * a + 1] = -1.0;
    }
    m
}

/// Left multiplication by i, j, k on each quaternion line (basis 1, i, j, k).
fn quaternionic_structures(n: usize) -> Vec<Vec<Vec<f64>>> {
    // images of the basis (1, i, j, k) as (target index, sign)
    let tables: [[(usize, f64); 4]; 3] = [
        [(1, 1.0), (0, -1.0), (3, 1.0), (2, -1.0)],
        [(2, 1.0), (3, -1.0), (0, -1.0), (1, 1.0)],
        [(3, 1.0), (2, 1.0), (1, -1.0), (0, -1.0)],
    ];
    tables
        .iter()
        .map(|t| {
            let mut m = vec![vec![0.0; n]; n];
            for q in 0..n / 4 {
                for (src, &(dst, sign)) in t.iter().enumerate() {
                    m[4 * q + dst][4 * q + src] = sign;
                }
            }
            m
        })
        .collect()
}

/// The H of the H² × S^{n−2} model.
pub fn s_h2_form(n: usize) -> SymmetricForm {
    let mut d = vec![1.0; n];
    d[0] = -1.0;
    d[1] = -1.0;
    SymmetricForm::diagonal(&d)
}

pub fn model_tensor(kind: ModelKind, n: usize) -> Result<CurvatureTensor> {
    kind.check(n)?;
    let t = match kind {
        ModelKind::Sphere => block_sphere(n, 0, n, 1.0),
        ModelKind::Cylinder => {
            let mut d = vec![1.0; n];
            d[0] = 0.0;
            let a = SymmetricForm::diagonal(&d);
            crate::algebra::kn_product(&a, &a)?
        }
        ModelKind::PseudoCylinder => {
            let mut d = vec![1.0; n];
            d[0] = -1.0;
            let a = SymmetricForm::diagonal(&d);
            crate::algebra::kn_product(&a, &a)?
        }
        ModelKind::ProductSpheres { k } => {
            block_sphere(n, 0, k, (n - k - 1) as f64).add(&block_sphere(n, k, n, (k - 1) as f64))
        }
        ModelKind::SH2 => kn_with_identity(&s_h2_form(n)),
        ModelKind::SR2 => model_tensor(ModelKind::ProductSpheres { k: 2 }, n)?
            .axpy((n as f64 - 3.0) / 2.0, &kn_with_identity(&s_h2_form(n))),
        ModelKind::Cp => kahler_type(n, &[complex_structure(n)]),
        ModelKind::Hp => kahler_type(n, &quaternionic_structures(n)),
    };
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub model: String,
    pub n: usize,
    pub report: MembershipReport,
    pub classification: Classification,
    /// Perturbations ±ε·P (out of `probes`) that left the cone.
    pub exiting_directions: usize,
    pub probes: usize,
}

/// Classifies a tensor against a cone: boundary needs |slack| within the band
/// and at least one of `directions` random ±perturbations leaving the cone.
pub fn classify(
    r: &CurvatureTensor,
    spec: &ConeSpec,
    opts: &OracleOptions,
    directions: usize,
) -> Result<(MembershipReport, Classification, usize)> {
    let report = cone_membership(r, spec, opts)?;
    let scale = r.max_abs().max(f64::MIN_POSITIVE);
    let band = BOUNDARY_BAND * scale;
    let mut exiting = 0;
    if report.slack.abs() <= band {
        let eps = 1e-3 * scale;
        let mut rng = rng_for(opts.seed, 0xa0d1);
        for _ in 0..directions {
            let p = random_tensor(&mut rng, r.dim());
            let p = p.scale(1.0 / p.max_abs());
            for sign in [1.0, -1.0] {
                let moved = r.axpy(sign * eps, &p);
                let slack = ConeGeometry::new(&moved, opts, &[]).slack(spec);
                if slack < -band {
                    exiting += 1;
                }
            }
        }
    }
    let class = if report.slack > band {
        Classification::Interior
    } else if report.slack < -band {
        Classification::Exterior
    } else if exiting > 0 {
        Classification::Boundary
    } else {
        Classification::Interior
    };
    Ok((report, class, exiting))
}

pub fn boundary_audit(
    kind: ModelKind,
    n: usize,
    spec: &ConeSpec,
    opts: &OracleOptions,
) -> Result<AuditReport> {
    let r = model_tensor(kind, n)?;
    const DIRECTIONS: usize = 20;
    let (report, classification, exiting_directions) = classify(&r, spec, opts, DIRECTIONS)?;
    Ok(AuditReport {
        model: kind.name(),
        n,
        report,
        classification,
        exiting_directions,
        probes: 2 * DIRECTIONS,
    })
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::CurvatureTensor;

use super::complex::complex_sectional;
use super::frames::frame_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// Orthonormal e1..e4 with weights λ, μ.
    RealFrame,
    /// Hermitian-orthonormal (z, w); vectors are [Re z, Im z, Re w, Im w].
    ComplexFrame,
    /// A single unit vector.
    Vector,
}

/// Minimizer reported by an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameWitness {
    pub kind: WitnessKind,
    pub vectors: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
}

impl FrameWitness {
    pub fn real_frame(vectors: Vec<Vec<f64>>, lambda: f64, mu: f64) -> Self {
        Self {
            kind: WitnessKind::RealFrame,
            vectors,
            lambda: Some(lambda),
            mu: Some(mu),
        }
    }

    pub fn complex_frame(z: &[Complex64], w: &[Complex64]) -> Self {
        let re = |v: &[Complex64]| v.iter().map(|c| c.re).collect::<Vec<_>>();
        let im = |v: &[Complex64]| v.iter().map(|c| c.im).collect::<Vec<_>>();
        Self {
            kind: WitnessKind::ComplexFrame,
            vectors: vec![re(z), im(z), re(w), im(w)],
            lambda: None,
            mu: None,
        }
    }

    pub fn vector(v: Vec<f64>) -> Self {
        Self {
            kind: WitnessKind::Vector,
            vectors: vec![v],
            lambda: None,
            mu: None,
        }
    }

    /// (z, w) of a complex witness.
    pub fn complex_pair(&self) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
        if self.kind != WitnessKind::ComplexFrame {
            return None;
        }
        let join = |re: &[f64], im: &[f64]| {
            re.iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(*a, *b))
                .collect()
        };
        Some((
            join(&self.vectors[0], &self.vectors[1]),
            join(&self.vectors[2], &self.vectors[3]),
        ))
    }

    /// Largest deviation from orthonormality (Hermitian for complex frames).
    pub fn orthonormality_defect(&self) -> f64 {
        match self.kind {
            WitnessKind::RealFrame | WitnessKind::Vector => {
                let mut worst = 0.0f64;
                for (a, u) in self.vectors.iter().enumerate() {
                    for (b, v) in self.vectors.iter().enumerate() {
                        let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                        let want = if a == b { 1.0 } else { 0.0 };
                        worst = worst.max((dot - want).abs());
                    }
                }
                worst
            }
            WitnessKind::ComplexFrame => {
                let (z, w) = self.complex_pair().unwrap();
                let herm = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
                    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
                };
                let a = (herm(&z, &z).re - 1.0).abs();
                let b = (herm(&w, &w).re - 1.0).abs();
                a.max(b).max(herm(&z, &w).norm())
            }
        }
    }

    /// Re-evaluates the underlying functional of `r` at this witness.
    pub fn evaluate(&self, r: &CurvatureTensor) -> Option<f64> {
        match self.kind {
            WitnessKind::RealFrame => {
                let v = &self.vectors;
                Some(frame_value(
                    r,
                    [&v[0], &v[1], &v[2], &v[3]],
                    self.lambda?,
                    self.mu?,
                ))
            }
            WitnessKind::ComplexFrame => {
                let (z, w) = self.complex_pair()?;
                Some(complex_sectional(r, &z, &w))
            }
            WitnessKind::Vector => None,
        }
    }
}

//! Membership oracles: minima of curvature functionals with witnesses, the
//! cones C(σ, θ), and the (S, H) gauge decomposition.

mod complex;
mod cone;
mod frames;
mod witness;

use serde::{Deserialize, Serialize};

pub use complex::{
    complex_sectional, complex_sectional_min, complex_sectional_min_warm, complex_sectional_sampled,
};
pub use cone::{
    cone_membership, cone_membership_frames, cone_membership_with, decompose, Branch, ConeGeometry,
    ConeSpec, Decomposition, MembershipReport,
};
pub use frames::{
    frame_min, frame_min_sampled, frame_value, isotropic_min, pic1_min, pic1_min_product, pic2_min,
    pic2_min_product, FrameMode,
};
pub use witness::{FrameWitness, WitnessKind};

use crate::algebra::CurvatureTensor;

/// Membership tolerance relative to the tensor's component scale.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Boundary band relative to the tensor's component scale.
pub const BOUNDARY_BAND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Random starts on top of the deterministic coordinate starts.
    pub restarts: usize,
    pub seed: u64,
    /// Relative decrease below which a local descent stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Include coordinate frames (and their polish) as starts.
    pub coordinate_scan: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0,
            tol: 1e-14,
            max_iter: 500,
            coordinate_scan: true,
        }
    }
}

impl OracleOptions {
    pub fn with_restarts(restarts: usize) -> Self {
        Self {
            restarts,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub witness: FrameWitness,
    pub evaluations: usize,
    pub converged: bool,
}

/// Smallest eigenvalue of the curvature operator on 2-forms.
pub fn curv_op_min_eig(r: &CurvatureTensor) -> f64 {
    r.operator_eigenvalues()[0]
}

//! Numerical laboratory for algebraic curvature tensors under Hamilton's ODE
//! dR/dt = Q(R): invariant cones, pinching sets and the conformal neck cutoff.

pub mod algebra;
pub mod catalog;
pub mod error;
pub mod flow;
pub mod generate;
pub mod identities;
pub mod oracle;
pub mod pinching;
pub mod sampling;
pub mod surgery;

pub use algebra::{CurvatureTensor, SymmetricForm};
pub use error::{LabError, Result};

/// Smallest supported dimension.
pub const MIN_DIM: usize = 4;
/// Largest dimension accepted from users.
pub const USER_MAX_DIM: usize = 12;
/// Internal ceiling; product embeddings R ⊕ 0 go up to two dimensions past the user range.
pub const MAX_DIM: usize = USER_MAX_DIM + 2;

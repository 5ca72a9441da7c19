//! Pointwise algebra of curvature tensors and symmetric forms.

mod form;
mod products;
mod tensor;

pub use form::SymmetricForm;
pub use products::{
    b_product, contract_sh, id_kn_id, kn_product, kn_with_identity, q_quadratic,
    remove_traceless_ricci, ricci, ricci_traceless, scalar, weyl_part,
};
pub(crate) use tensor::check_dim;
pub use tensor::{bianchi_project, pair_count, pair_index, pairs, CurvatureTensor, TensorRecord};

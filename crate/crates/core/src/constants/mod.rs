//! Predicted constants: p-adic densities, their Euler products, and the
//! archimedean factors.

pub mod archimedean;
pub mod local;
pub mod series;

pub use archimedean::{
    c_inf_window, gamma_inf_nonsplit, sigma_inf, slab_density_split, SlabLimit, Window, WindowSpec,
};
pub use local::{density_cp, density_limit, local_count, LocalContext, LocalDensity, LocalProblem, ValueCondition};
pub use series::{
    gamma_jk, iwaniec_c, sigma_hat, sigma_p, sigma_tilde, sigma_tilde_p, EulerProduct, IwaniecConstant,
};

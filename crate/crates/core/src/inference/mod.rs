//! MAP estimation, curvature, Laplace evidence and model selection.

pub mod evidence;
pub mod hessian;
pub mod nelder_mead;

mod fit;
mod select;

pub use evidence::{laplace_evidence, Evidence};
pub use fit::{estimate_hessian, map_fit, posterior_gradient, Convergence, FitConfig, FitResult};
pub use hessian::{finite_difference_hessian, HessianEstimate};
pub use select::{model_grid, select_model, ModelRow, SelectionDocument, SelectionReport};

//! Latent-class parametrisation of personalised cause-specific hazards.

mod model;
mod params;
mod spline;

pub use model::{param_count, CensoringChoice, CensoringMode, Layout, ModelId, Variant};
pub use params::{softmax_pinned, ParamSet};
pub use spline::{exprel, BaseHazardSpline, GridPosition, KnotGrid};

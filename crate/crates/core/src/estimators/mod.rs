//! Reportable quantities derived from a fitted parameter set.

mod assign;
mod curves;
mod km;
mod profile;
pub mod quadrature;
mod summary;
mod zpreset;

pub use assign::{
    allocation_quality, assign_class, assign_cohort, best_label_map, write_posteriors, AllocationQuality,
    ClassPosterior,
};
pub use curves::{
    class_decon_survival, crude_hazard, crude_survival, cumulative_incidence, decon_hazard, decon_survival,
    event_free_survival, uniform_grid, Curve, CurveKind, CurveOptions, CurveSet, Incidence,
};
pub use km::{kaplan_meier, KaplanMeier, KmStep};
pub use profile::Profile;
pub use summary::{association_summary, summarize_associations, AssociationRow, AssociationSummary, Z95};
pub use zpreset::{Quartiles, ZPreset};

//! Forcing and parallel-transport semantics for fiber bundles of
//! first-order structures over real base boxes.

// `!(a < b)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod error;
pub mod expr;
pub mod forcing;
pub mod logic;
pub mod model;
pub mod parallel;
pub mod suite;
pub mod transport;

pub use bundle::{AxisBox, BaseBox, FiberBundle, SampledCurve, Section, SectionValues, SmoothMap, StructureBundle};
pub use error::{Error, Result};
pub use forcing::{
    density_check, force, is_forced, positive_stability_check, spatial_extension, Decision, ForcingVerdict, GridSet,
    NeighborhoodPolicy,
};
pub use model::{Model, NamedMap};
pub use parallel::{
    check_pullback_compatibility, horizontal_extension, parallel_forced, positive_lemma_trials, prop46_check,
    pullback_theorem_trials, recheck_horizontal_member, vertical_extension, CompatibilityReport, ExtensionSet,
    FamilyPath, FamilySpec, ParallelVerdict, PathFamily, Prop46Options, Prop46Report, TrialFailure, TrialSummary,
};
pub use suite::{run_suite, SuiteOptions, SuiteReport, SuiteRow, SHIPPED_MODELS};
pub use transport::{
    curvature_estimate, direct_sum_connection, lift_uniqueness_gap, parallel_transport, pullback_connection,
    Connection, LiftField, TransportResult,
};

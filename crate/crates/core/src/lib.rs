//! Visual preference learning for tabletop rearrangement.
//!
//! The crate covers the offline half of the pipeline:
//!
//! - [`scene`] and [`catalog`]: arrangements, objects, and the object catalog
//! - [`lifting`]: language and image renderings of objects and arrangements
//! - [`prompt`]: prompt bundles for the four method variants
//! - [`prediction`]: parsing sampled model answers and aggregating them into a task plan
//! - [`evaluation`]: feature matching, object accuracy, and Kabsch RMSD
//! - [`simulation`]: the simulated-preference benchmark
//! - [`acceptability`]: jitter, ratings analysis, and acceptance tables
//! - [`dataset`]: persistence for study records and context construction

pub mod acceptability;
pub mod catalog;
pub mod dataset;
pub mod evaluation;
pub mod lifting;
pub mod placeholder;
pub mod prediction;
pub mod prompt;
pub mod scene;
pub mod simulation;

pub use catalog::{load_catalog, Catalog, CatalogError, TableSpec};
pub use scene::{
    arrangement_valid_for_study, normalize_rotation, Arrangement, Color, ContextEntry, Material,
    ObjectClass, ObjectSpec, Placement, PreferenceContext,
};

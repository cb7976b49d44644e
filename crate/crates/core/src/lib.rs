//! Region mass estimation from CT volumes.
//!
//! Atlases with manual region masks are registered elastically onto each
//! scan; the propagated masks and their majority vote are summarized by
//! intensity statistics, and a regressor maps those descriptors to grams.
//! Feature subset and regressor hyperparameters are chosen jointly by
//! simulated annealing on repeated k-fold r².
//!
//! Modules follow the pipeline: [`volume`] (data model and NIfTI I/O),
//! [`registration`], [`features`], [`regress`], [`selection`], [`stats`],
//! [`phantom`] (synthetic cohorts with ground truth) and [`pipeline`]
//! (the batch commands).

pub mod error;
pub mod features;
pub mod phantom;
pub mod pipeline;
pub mod registration;
pub mod regress;
pub mod seeds;
pub mod selection;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};

//! Elastic registration of atlas scans onto a target scan and propagation
//! of the atlas annotations.
//!
//! Transforms always map fixed (target) coordinates into moving (atlas)
//! coordinates, so warping an atlas mask with the registration result
//! lands it directly in the target frame.

mod bspline;
mod metric;
mod register;
mod warp;

use serde::{Deserialize, Serialize};

pub use bspline::{cubic_bspline, cubic_weights, BSplineTransform};
pub use metric::mutual_information;
pub use register::{
    atlas_seed, initial_align, register, segment_by_atlases, segment_by_atlases_detailed, Atlas,
    AtlasSegmentation, RegistrationConfig, SimilarityReport, BODY_THRESHOLD_HU,
};
pub use warp::{warp_mask, warp_mask_with_threshold, warp_volume};

/// On-disk record of a registration result, sufficient to replay the mask
/// propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub transform: BSplineTransform,
    pub report: SimilarityReport,
    pub config: RegistrationConfig,
}

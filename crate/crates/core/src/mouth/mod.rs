//! Mouth interior synthesis by retrieval from the target sequence.
//!
//! Every tracked target frame contributes a mouth texture normalized into
//! the prior's UV chart, a local-binary-pattern feature of that texture, and
//! a descriptor `K = {R, δ, F, L}`. The database clusters these frames with
//! a k-medoid variant under the offline part of the descriptor distance and
//! keeps a fully connected appearance graph. At run time the closest cluster
//! representative is chosen as the target frame, and the graph picks an
//! in-between frame close to both it and the previous retrieval. The
//! retrieved texture is aligned to and blended with the previous one,
//! corrected for illumination, and composited over the rendered face.

mod chart;
mod composite;
mod database;
mod descriptor;
mod lbp;

pub use chart::{normalize_mouth, MouthChart, MIN_MOUTH_VISIBILITY};
pub use composite::{
    align_translation, blend_and_composite, feathered_alpha, illumination_ratio, shift_texture, Composite, ALIGN_RADIUS,
    BLEND_WEIGHT, ILLUMINATION_EPSILON, RATIO_RANGE,
};
pub use database::{capture_sample, MouthDatabase, MouthSample, Retrieval, RetrievalState, MAX_ROUNDS, MOUTH_MAGIC};
pub use descriptor::{dist_a, dist_c, dist_l, dist_m, dist_p, dist_total, weight_c, MouthDescriptor};
pub use lbp::{compute_lbp, lbp_code, uniform_bin, LbpHistogram, LBP_BINS, LBP_CELLS};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 10;
pub const DEFAULT_TEXTURE_SIZE: usize = 64;

/// Indices into the four mouth landmarks: left corner, right corner, upper
/// lip middle, lower lip middle.
pub type LandmarkPair = [usize; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MouthConfig {
    pub clusters: usize,
    pub texture_size: usize,
    /// Ω: mouth landmark pairs whose distances are compared.
    pub landmark_pairs: Vec<LandmarkPair>,
}

impl Default for MouthConfig {
    fn default() -> Self {
        Self {
            clusters: DEFAULT_CLUSTERS,
            texture_size: DEFAULT_TEXTURE_SIZE,
            landmark_pairs: vec![[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]],
        }
    }
}

impl MouthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::InvalidConfig("mouth clusters must be >= 1".into()));
        }
        if self.texture_size < LBP_CELLS * 3 {
            return Err(Error::InvalidConfig(format!(
                "mouth texture_size must be at least {}",
                LBP_CELLS * 3
            )));
        }
        if self.landmark_pairs.iter().any(|p| p[0] >= 4 || p[1] >= 4 || p[0] == p[1]) {
            return Err(Error::InvalidConfig(
                "landmark pairs must name two distinct mouth landmarks in 0..4".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

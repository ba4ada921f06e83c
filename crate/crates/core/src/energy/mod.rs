//! The fitting objective
//!
//! ```text
//! E(P) = w_col·E_col + w_lan·E_lan + w_reg·E_reg
//! E_col = 1/|V| · Σ_{p∈V} ‖C_S(p) − C_I(p)‖₂
//! E_lan = 1/|F| · Σ_j w_conf,j · ‖f_j − Π(Φ(v_j))‖²
//! E_reg = Σ (α_i/σ_id,i)² + Σ (β_i/σ_alb,i)² + Σ (δ_i/σ_exp,i)²
//! ```
//!
//! The robust photometric term is minimized by IRLS: each Gauss-Newton step
//! squares the per-pixel residual and weights it by `1/max(‖r_p(P_old)‖, ε)`.
//! Square roots of the normalizations and weights are folded into the rows so
//! the normal equations minimize exactly the reweighted energy.

mod linearize;

pub use linearize::{Linearization, LinearizeOptions};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::imaging::{rasterize, CameraIntrinsics, Frame, Illumination, RasterOutput, RigidPose, SH_COEFFS};
use crate::model::{vertex, FacePrior};
use crate::{Error, Result, Vec3};

/// The full unknown vector: identity, albedo, expression, illumination, pose
/// and intrinsics. Intrinsics are always stored at full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub delta: DVector<f64>,
    pub gamma: Illumination,
    pub pose: RigidPose,
    pub camera: CameraIntrinsics,
}

impl SceneParams {
    /// Mean face at the origin under unit ambient light.
    pub fn zeros(prior: &FacePrior, camera: CameraIntrinsics) -> Self {
        Self {
            alpha: DVector::zeros(prior.d_id()),
            beta: DVector::zeros(prior.d_alb()),
            delta: DVector::zeros(prior.d_exp()),
            gamma: Illumination::default(),
            pose: RigidPose::identity(),
            camera,
        }
    }

    /// Mean face 2.8 units in front of a default camera, lit mostly ambiently
    /// with some light from the viewer.
    pub fn frontal(prior: &FacePrior, width: usize, height: usize) -> Self {
        let mut p = Self::zeros(prior, CameraIntrinsics::default_for(width, height));
        p.pose.translation = Vec3::new(0.0, 0.0, 2.8);
        p.gamma = frontal_light([0.75; 3], [0.25; 3]);
        p
    }

    pub fn check(&self, prior: &FacePrior) -> Result<()> {
        let dims = [
            ("alpha", prior.d_id(), self.alpha.len()),
            ("beta", prior.d_alb(), self.beta.len()),
            ("delta", prior.d_exp(), self.delta.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        let finite = self.alpha.iter().chain(&self.beta).chain(&self.delta).all(|v| v.is_finite())
            && self.gamma.0.iter().all(|v| v.is_finite())
            && self.pose.rotation.iter().all(|v| v.is_finite())
            && self.pose.translation.iter().all(|v| v.is_finite())
            && self.camera.to_array().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("scene parameters"));
        }
        Ok(())
    }

    /// Applies an update vector laid out by `layout`. Linear blocks are
    /// additive, rotation is a left increment `R ← exp([ω]×)·R`.
    pub fn apply_update(&mut self, layout: &ParamLayout, dx: &[f64]) {
        for slot in layout.slots() {
            let d = &dx[slot.offset..slot.offset + slot.len];
            match slot.block {
                ParamBlock::Alpha => add(&mut self.alpha, d),
                ParamBlock::Beta => add(&mut self.beta, d),
                ParamBlock::Delta => add(&mut self.delta, d),
                ParamBlock::Gamma => {
                    for (g, v) in self.gamma.0.iter_mut().zip(d) {
                        *g += v;
                    }
                }
                ParamBlock::Rotation => {
                    self.pose = self.pose.rotate_left(&Vec3::new(d[0], d[1], d[2]));
                }
                ParamBlock::Translation => {
                    self.pose.translation += Vec3::new(d[0], d[1], d[2]);
                }
                ParamBlock::Intrinsics => {
                    let mut k = self.camera.to_array();
                    for (a, v) in k.iter_mut().zip(d) {
                        *a += v;
                    }
                    self.camera = CameraIntrinsics::from_array(k);
                }
            }
        }
    }
}

fn add(v: &mut DVector<f64>, d: &[f64]) {
    for (a, b) in v.iter_mut().zip(d) {
        *a += b;
    }
}

/// Irradiance `ambient + directional·(−n_z)` per channel, i.e. light coming
/// from the camera side.
pub fn frontal_light(ambient: [f64; 3], directional: [f64; 3]) -> Illumination {
    let mut g = Illumination::ambient(ambient);
    let c1 = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
    for c in 0..3 {
        g.0[c * SH_COEFFS + 2] = -directional[c] / c1;
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub w_col: f64,
    pub w_lan: f64,
    pub w_reg: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w_col: 1.0,
            w_lan: 10.0,
            w_reg: 2.5e-5,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_col", self.w_col), ("w_lan", self.w_lan), ("w_reg", self.w_reg)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// A 2D feature point matched to one of the prior's landmark vertices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkObservation {
    /// Index into `FacePrior::landmark_vertices`.
    pub landmark: usize,
    /// Full-resolution pixel coordinates.
    pub position: [f64; 2],
    pub confidence: f64,
}

/// Image and landmarks of one frame at one pyramid level. `scale` is the
/// downsample factor of `frame` relative to full resolution; landmarks are
/// always in full-resolution pixels.
#[derive(Clone, Copy, Debug)]
pub struct FrameTarget<'a> {
    pub frame: &'a Frame,
    pub landmarks: &'a [LandmarkObservation],
    pub scale: f64,
}

impl<'a> FrameTarget<'a> {
    pub fn new(frame: &'a Frame, landmarks: &'a [LandmarkObservation]) -> Self {
        Self {
            frame,
            landmarks,
            scale: 1.0,
        }
    }

    pub fn level_camera(&self, params: &SceneParams) -> CameraIntrinsics {
        params.camera.downscaled(self.scale)
    }
}

pub const DEFAULT_IRLS_EPSILON: f64 = 1e-4;

/// Per-pixel residual norms of the previous iterate, in `visible` order.
#[derive(Clone, Debug, PartialEq)]
pub struct IrlsState {
    pub norms: Vec<f64>,
    pub epsilon: f64,
}

impl IrlsState {
    pub fn from_raster(raster: &RasterOutput, frame: &Frame, epsilon: f64) -> Self {
        let norms = raster
            .visible
            .iter()
            .map(|&idx| pixel_residual(raster, frame, idx).norm())
            .collect();
        Self { norms, epsilon }
    }

    pub fn weight(&self, i: usize) -> f64 {
        1.0 / self.norms[i].max(self.epsilon)
    }
}

pub(crate) fn pixel_residual(raster: &RasterOutput, frame: &Frame, idx: usize) -> Vec3 {
    let s = raster.color.pixel(idx);
    let i = frame.pixel(idx);
    Vec3::new(s[0] - i[0], s[1] - i[1], s[2] - i[2])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub col: f64,
    pub lan: f64,
    pub reg: f64,
    pub visible: usize,
}

/// Photometric rows `sqrt(w_col/|V|)·sqrt(w_p)·(C_S(p) − C_I(p))`, three per
/// visible pixel, plus the pixel index of each row triple.
pub fn residual_col(
    raster: &RasterOutput,
    frame: &Frame,
    irls: &IrlsState,
    weights: &EnergyWeights,
) -> (Vec<f64>, Vec<usize>) {
    let nv = raster.visible.len();
    let mut rows = Vec::with_capacity(3 * nv);
    if nv == 0 {
        return (rows, Vec::new());
    }
    let base = (weights.w_col / nv as f64).sqrt();
    for (i, &idx) in raster.visible.iter().enumerate() {
        let s = base * irls.weight(i).sqrt();
        let r = pixel_residual(raster, frame, idx);
        rows.extend([s * r.x, s * r.y, s * r.z]);
    }
    (rows, raster.visible.clone())
}

/// Landmark rows `sqrt(w_lan/|F|)·sqrt(w_conf)·(f_j − Π(Φ(v_j)))`. Rows of
/// landmarks behind the camera are zero; the second value counts them.
pub fn residual_lan(
    prior: &FacePrior,
    params: &SceneParams,
    landmarks: &[LandmarkObservation],
    weights: &EnergyWeights,
) -> Result<(Vec<f64>, usize)> {
    let geo = prior.eval_geometry(&params.alpha, &params.delta)?;
    Ok(landmark_rows(prior, &geo, params, landmarks, weights))
}

pub(crate) fn landmark_rows(
    prior: &FacePrior,
    geo: &DVector<f64>,
    params: &SceneParams,
    landmarks: &[LandmarkObservation],
    weights: &EnergyWeights,
) -> (Vec<f64>, usize) {
    let mut rows = Vec::with_capacity(2 * landmarks.len());
    let mut dropped = 0;
    if landmarks.is_empty() {
        return (rows, 0);
    }
    let base = weights.w_lan / landmarks.len() as f64;
    for obs in landmarks {
        let v = params.pose.apply(&vertex(geo, prior.landmark_vertices[obs.landmark]));
        match params.camera.project(&v) {
            Some(q) => {
                let s = (base * obs.confidence).sqrt();
                rows.push(s * (obs.position[0] - q.x));
                rows.push(s * (obs.position[1] - q.y));
            }
            None => {
                dropped += 1;
                rows.extend([0.0, 0.0]);
            }
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} landmark(s) behind the camera were ignored");
    }
    (rows, dropped)
}

/// Prior rows `sqrt(w_reg)·c_i/σ_i` for α, β and δ in that order.
pub fn residual_reg(prior: &FacePrior, params: &SceneParams, weights: &EnergyWeights) -> Vec<f64> {
    let s = weights.w_reg.sqrt();
    let pairs = [
        (&params.alpha, &prior.sigma_id),
        (&params.beta, &prior.sigma_alb),
        (&params.delta, &prior.sigma_exp),
    ];
    pairs
        .iter()
        .flat_map(|(c, sigma)| c.iter().zip(sigma.iter()).map(move |(c, s_i)| s * c / s_i))
        .collect()
}

/// Unweighted `Σ (c_i/σ_i)²` over all coefficient blocks.
pub fn reg_energy(prior: &FacePrior, params: &SceneParams) -> f64 {
    let unit = EnergyWeights {
        w_col: 0.0,
        w_lan: 0.0,
        w_reg: 1.0,
    };
    residual_reg(prior, params, &unit).iter().map(|r| r * r).sum()
}

/// Evaluates the true objective: rasterizes at the target's level and uses
/// the ℓ2,1 photometric norm.
pub fn eval_energy(
    prior: &FacePrior,
    params: &SceneParams,
    target: &FrameTarget,
    weights: &EnergyWeights,
) -> Result<EnergyReport> {
    let mut level = params.clone();
    level.camera = target.level_camera(params);
    let raster = rasterize(prior, &level, target.frame.width, target.frame.height)?;
    energy_from_raster(prior, params, &raster, target, weights)
}

/// Root-mean-square photometric residual over visible pixels and channels
/// of a full-resolution rasterization.
pub fn photometric_rms(prior: &FacePrior, params: &SceneParams, frame: &Frame) -> Result<f64> {
    let raster = rasterize(prior, params, frame.width, frame.height)?;
    if raster.visible.is_empty() {
        return Err(Error::EmptyVisibility);
    }
    let sum: f64 = raster
        .visible
        .iter()
        .map(|&idx| pixel_residual(&raster, frame, idx).norm_squared())
        .sum();
    Ok((sum / (3 * raster.visible.len()) as f64).sqrt())
}

pub(crate) fn energy_from_raster(
    prior: &FacePrior,
    params: &SceneParams,
    raster: &RasterOutput,
    target: &FrameTarget,
    weights: &EnergyWeights,
) -> Result<EnergyReport> {
    let nv = raster.visible.len();
    if nv == 0 && weights.w_col > 0.0 {
        return Err(Error::EmptyVisibility);
    }
    let col = if nv == 0 {
        0.0
    } else {
        let sum: f64 = raster
            .visible
            .iter()
            .map(|&idx| pixel_residual(raster, target.frame, idx).norm())
            .sum();
        sum / nv as f64
    };
    let lan = if target.landmarks.is_empty() {
        0.0
    } else {
        let unit = EnergyWeights {
            w_col: 0.0,
            w_lan: 1.0,
            w_reg: 0.0,
        };
        let (rows, _) = residual_lan(prior, params, target.landmarks, &unit)?;
        rows.iter().map(|r| r * r).sum()
    };
    let reg = reg_energy(prior, params);
    let total = weights.w_col * col + weights.w_lan * lan + weights.w_reg * reg;
    if !total.is_finite() {
        return Err(Error::NonFinite("energy"));
    }
    Ok(EnergyReport {
        total,
        col,
        lan,
        reg,
        visible: nv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamBlock {
    Alpha,
    Beta,
    Delta,
    Gamma,
    Rotation,
    Translation,
    Intrinsics,
}

impl ParamBlock {
    pub fn len(&self, prior: &FacePrior) -> usize {
        match self {
            ParamBlock::Alpha => prior.d_id(),
            ParamBlock::Beta => prior.d_alb(),
            ParamBlock::Delta => prior.d_exp(),
            ParamBlock::Gamma => 3 * SH_COEFFS,
            ParamBlock::Rotation | ParamBlock::Translation => 3,
            ParamBlock::Intrinsics => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSlot {
    pub block: ParamBlock,
    pub offset: usize,
    pub len: usize,
}

/// Ordered placement of active parameter blocks in the unknown vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    slots: Vec<BlockSlot>,
    dim: usize,
}

impl ParamLayout {
    pub fn new(prior: &FacePrior, blocks: &[ParamBlock]) -> Result<Self> {
        let mut slots = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for (i, &block) in blocks.iter().enumerate() {
            if blocks[..i].contains(&block) {
                return Err(Error::InvalidConfig(format!("block {block:?} listed twice")));
            }
            let len = block.len(prior);
            slots.push(BlockSlot { block, offset, len });
            offset += len;
        }
        Ok(Self { slots, dim: offset })
    }

    /// Every block, model coefficients first.
    pub fn full(prior: &FacePrior) -> Self {
        use ParamBlock::*;
        Self::new(prior, &[Alpha, Beta, Delta, Gamma, Rotation, Translation, Intrinsics]).expect("distinct blocks")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slots(&self) -> &[BlockSlot] {
        &self.slots
    }

    pub fn slot(&self, block: ParamBlock) -> Option<BlockSlot> {
        self.slots.iter().copied().find(|s| s.block == block)
    }

    pub fn contains(&self, block: ParamBlock) -> bool {
        self.slot(block).is_some()
    }
}

use nalgebra::DVector;

use super::{LandmarkPair, LbpHistogram, LBP_BINS, LBP_CELLS};
use crate::energy::SceneParams;
use crate::imaging::Frame;
use crate::model::{vertex, FacePrior};
use crate::{Mat3, Result};

/// `K = {R, δ, F, L}` of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthDescriptor {
    pub rotation: Mat3,
    pub delta: DVector<f64>,
    /// Projected mouth landmarks in full-resolution pixels: left, right,
    /// upper, lower.
    pub landmarks: [[f64; 2]; 4],
    pub lbp: LbpHistogram,
}

impl MouthDescriptor {
    /// Geometry from the model at `params`, appearance from `lbp`. Landmarks
    /// behind the camera project to the origin.
    pub fn from_params(prior: &FacePrior, params: &SceneParams, lbp: LbpHistogram) -> Result<Self> {
        let geo = prior.eval_geometry(&params.alpha, &params.delta)?;
        let landmarks = prior.mouth_landmark_vertices().map(|v| {
            let p = params.pose.apply(&vertex(&geo, v));
            params.camera.project(&p).map_or([0.0; 2], |q| [q.x, q.y])
        });
        Ok(Self {
            rotation: params.pose.rotation,
            delta: params.delta.clone(),
            landmarks,
            lbp,
        })
    }
}

/// `‖δ_T − δ_S‖² + ‖R_T − R_S‖_F²`.
pub fn dist_p(kt: &MouthDescriptor, ks: &MouthDescriptor) -> f64 {
    (&kt.delta - &ks.delta).norm_squared() + (kt.rotation - ks.rotation).norm_squared()
}

fn landmark_distance(f: &[[f64; 2]; 4], p: &LandmarkPair) -> f64 {
    let (a, b) = (f[p[0]], f[p[1]]);
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Squared differences of landmark-pair distances over Ω.
pub fn dist_m(kt: &MouthDescriptor, ks: &MouthDescriptor, pairs: &[LandmarkPair]) -> f64 {
    pairs
        .iter()
        .map(|p| (landmark_distance(&kt.landmarks, p) - landmark_distance(&ks.landmarks, p)).powi(2))
        .sum()
}

/// Chi-squared distance `Σ (p − q)²/(p + q)` between the per-cell normalized
/// histograms; bins empty in both contribute zero.
pub fn dist_l(kt: &MouthDescriptor, ks: &MouthDescriptor) -> f64 {
    let mut d = 0.0;
    for c in 0..LBP_CELLS * LBP_CELLS {
        let (a, b) = (kt.lbp.cell(c), ks.lbp.cell(c));
        let na = a.iter().sum::<u32>().max(1) as f64;
        let nb = b.iter().sum::<u32>().max(1) as f64;
        for k in 0..LBP_BINS {
            let (p, q) = (a[k] as f64 / na, b[k] as f64 / nb);
            if p + q > 0.0 {
                d += (p - q).powi(2) / (p + q);
            }
        }
    }
    d
}

/// `1 − NCC` over all RGB texel values, so identical textures give 0.
/// When either texture is constant the correlation is undefined; the
/// distance is then 0 for identical textures and 1 otherwise.
pub fn dist_c(a: &Frame, b: &Frame) -> f64 {
    let n = a.rgb.len() as f64;
    let ma = a.rgb.iter().sum::<f64>() / n;
    let mb = b.rgb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.rgb.iter().zip(&b.rgb) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a.rgb == b.rgb { 0.0 } else { 1.0 };
    }
    (1.0 - sab / (saa * sbb).sqrt()).max(0.0)
}

/// `exp(−D_m²)`.
pub fn weight_c(dm: f64) -> f64 {
    (-dm * dm).exp()
}

/// `D_l + w_c·D_c`, with the second term dropped when there is no previous
/// retrieval.
pub fn dist_a(kt: &MouthDescriptor, ks: &MouthDescriptor, pairs: &[LandmarkPair], dc: Option<f64>) -> f64 {
    let dl = dist_l(kt, ks);
    match dc {
        Some(dc) => dl + weight_c(dist_m(kt, ks, pairs)) * dc,
        None => dl,
    }
}

/// `D_p + D_m + D_a`. `dc` is `D_c(τ, t)` of the candidate frame `t`.
pub fn dist_total(kt: &MouthDescriptor, ks: &MouthDescriptor, pairs: &[LandmarkPair], dc: Option<f64>) -> f64 {
    dist_p(kt, ks) + dist_m(kt, ks, pairs) + dist_a(kt, ks, pairs, dc)
}

//! Fixtures shared by the unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundling::Keyframe;
use crate::energy::{frontal_light, LandmarkObservation, Linearization, ParamBlock, SceneParams};
use crate::imaging::{rasterize, Frame};
use crate::model::{synth_prior, vertex, FacePrior, PriorConfig};
use crate::solver::DenseJacobian;
use crate::Vec3;

pub fn desk_prior(seed: u64) -> FacePrior {
    synth_prior(&PriorConfig::desk(seed)).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, a: f64) -> f64 {
    rng.random_range(-a..a)
}

/// Random but plausible state: coefficients within `spread`·σ, small head
/// rotation, mild colored lighting.
pub fn random_params(prior: &FacePrior, rng: &mut ChaCha8Rng, w: usize, h: usize, spread: f64) -> SceneParams {
    let mut p = SceneParams::frontal(prior, w, h);
    p.alpha.iter_mut().zip(prior.sigma_id.iter()).for_each(|(a, s)| *a = uniform(rng, spread) * s);
    p.beta.iter_mut().zip(prior.sigma_alb.iter()).for_each(|(a, s)| *a = uniform(rng, spread) * s);
    p.delta.iter_mut().zip(prior.sigma_exp.iter()).for_each(|(a, s)| *a = uniform(rng, spread) * s);
    let ambient = [0.7 + uniform(rng, 0.05), 0.7 + uniform(rng, 0.05), 0.7 + uniform(rng, 0.05)];
    p.gamma = frontal_light(ambient, [0.2; 3]);
    for c in 0..3 {
        for j in [1, 3, 4, 5, 7, 8] {
            p.gamma.0[c * 9 + j] += uniform(rng, 0.05);
        }
    }
    let aa = Vec3::new(uniform(rng, 0.1), uniform(rng, 0.1), uniform(rng, 0.05));
    p.pose = crate::imaging::RigidPose::from_axis_angle(aa, Vec3::new(uniform(rng, 0.05), uniform(rng, 0.05), 2.8));
    p.camera.fx *= 1.0 + uniform(rng, 0.02);
    p.camera.fy = p.camera.fx * (1.0 + uniform(rng, 0.01));
    p.camera.cx += uniform(rng, 1.0);
    p.camera.cy += uniform(rng, 1.0);
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clamped self-render with a gray background.
pub fn render(prior: &FacePrior, params: &SceneParams, w: usize, h: usize) -> Frame {
    let r = rasterize(prior, params, w, h).unwrap();
    let mut f = Frame::filled(w, h, [0.2, 0.25, 0.3]);
    for &idx in &r.visible {
        f.set_pixel(idx, r.color.pixel(idx));
    }
    f.clamped()
}

/// Exact projections of every landmark vertex.
pub fn landmarks(prior: &FacePrior, params: &SceneParams) -> Vec<LandmarkObservation> {
    let geo = prior.eval_geometry(&params.alpha, &params.delta).unwrap();
    (0..prior.landmark_vertices.len())
        .map(|l| {
            let v = params.pose.apply(&vertex(&geo, prior.landmark_vertices[l]));
            let q = params.camera.project(&v).unwrap();
            LandmarkObservation {
                landmark: l,
                position: [q.x, q.y],
                confidence: 1.0,
            }
        })
        .collect()
}

pub fn fd_step(prior: &FacePrior, params: &SceneParams, block: ParamBlock, i: usize) -> f64 {
    let base = 1e-5;
    match block {
        ParamBlock::Alpha => base * prior.sigma_id[i],
        ParamBlock::Beta => base * prior.sigma_alb[i],
        ParamBlock::Delta => base * prior.sigma_exp[i],
        ParamBlock::Intrinsics => base * params.camera.fx,
        _ => base,
    }
}

/// Central finite differences of the frozen residuals.
pub fn fd_jacobian(prior: &FacePrior, lin: &Linearization) -> DenseJacobian {
    let layout = lin.layout().clone();
    let base = lin.params().clone();
    let rows = lin.residual_len();
    let mut j = DenseJacobian::zeros(rows, layout.dim());
    let cols = layout.dim();
    for slot in layout.slots() {
        for i in 0..slot.len {
            let h = fd_step(prior, &base, slot.block, i);
            let mut dx = vec![0.0; cols];
            dx[slot.offset + i] = h;
            let mut plus = base.clone();
            plus.apply_update(&layout, &dx);
            dx[slot.offset + i] = -h;
            let mut minus = base.clone();
            minus.apply_update(&layout, &dx);
            let rp = lin.frozen_residuals(&plus).unwrap();
            let rm = lin.frozen_residuals(&minus).unwrap();
            for r in 0..rows {
                j.data_mut()[r * cols + slot.offset + i] = (rp[r] - rm[r]) / (2.0 * h);
            }
        }
    }
    j
}

/// Largest per-column relative error `‖a − b‖ / ‖b‖`.
pub fn max_column_error(a: &DenseJacobian, b: &DenseJacobian) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for c in 0..a.cols() {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for r in 0..a.rows() {
            diff += (a.get(r, c) - b.get(r, c)).powi(2);
            norm += b.get(r, c).powi(2);
        }
        let rel = diff.sqrt() / norm.sqrt().max(1e-8);
        if rel > worst.0 {
            worst = (rel, c);
        }
    }
    worst
}

/// Keyframes of one subject: shared identity, albedo and camera, with
/// per-frame expression, pose and light.
pub fn keyframe_set(prior: &FacePrior, seed: u64, k: usize, size: usize) -> (Vec<SceneParams>, Vec<Keyframe>) {
    let mut rng = rng(seed);
    let first = random_params(prior, &mut rng, size, size, 1.0);
    let mut truth = Vec::with_capacity(k);
    let mut frames = Vec::with_capacity(k);
    for i in 0..k {
        let mut p = random_params(prior, &mut rng, size, size, 1.0);
        p.alpha = first.alpha.clone();
        p.beta = first.beta.clone();
        p.camera = first.camera;
        let frame = render(prior, &p, size, size);
        frames.push(Keyframe::new(i, &frame, landmarks(prior, &p)).unwrap());
        truth.push(p);
    }
    (truth, frames)
}

use f2f_core::bundling::{run_bundling, BundleOptions, Keyframe};
use f2f_core::energy::{frontal_light, LandmarkObservation, SceneParams};
use f2f_core::imaging::{rasterize, Frame, RigidPose};
use f2f_core::model::{synth_prior, vertex, FacePrior, PriorConfig};
use f2f_core::Vec3;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn render(prior: &FacePrior, p: &SceneParams, size: usize) -> Frame {
    let r = rasterize(prior, p, size, size).unwrap();
    let mut f = Frame::filled(size, size, [0.2, 0.25, 0.3]);
    for &i in &r.visible {
        f.set_pixel(i, r.color.pixel(i));
    }
    f.clamped()
}

fn landmarks(prior: &FacePrior, p: &SceneParams) -> Vec<LandmarkObservation> {
    let geo = prior.eval_geometry(&p.alpha, &p.delta).unwrap();
    (0..prior.landmark_vertices.len())
        .map(|l| {
            let q = p.camera.project(&p.pose.apply(&vertex(&geo, prior.landmark_vertices[l]))).unwrap();
            LandmarkObservation {
                landmark: l,
                position: [q.x, q.y],
                confidence: 1.0,
            }
        })
        .collect()
}

/// Neutral-expression views of one subject under varying pose and light.
fn neutral_views(prior: &FacePrior, alpha: &DVector<f64>, beta: &DVector<f64>, k: usize, seed: u64) -> Vec<Keyframe> {
    let size = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| {
            let mut p = SceneParams::frontal(prior, size, size);
            p.alpha = alpha.clone();
            p.beta = beta.clone();
            let aa = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1));
            p.pose = RigidPose::from_axis_angle(aa, Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 2.8));
            let amb = std::array::from_fn(|_| 0.7 + rng.random_range(-0.1..0.1));
            p.gamma = frontal_light(amb, [0.25; 3]);
            Keyframe::new(i, &render(prior, &p, size), landmarks(prior, &p)).unwrap()
        })
        .collect()
}

// Single subjects are noisy: with identical geometry in every view only the
// per-frame expression prior separates a shared expression offset from
// identity. The trend is checked on the mean over subjects.
#[test]
fn identity_error_shrinks_with_more_keyframes() {
    let ks = [1, 2, 4, 6];
    let mut mean = [0.0; 4];
    let subjects = 6;
    for seed in 0..subjects {
        let prior = synth_prior(&PriorConfig::desk(70 + seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(70 + seed);
        let alpha = DVector::from_iterator(prior.d_id(), prior.sigma_id.iter().map(|s| rng.random_range(-2.0..2.0) * s));
        let beta = DVector::from_iterator(prior.d_alb(), prior.sigma_alb.iter().map(|s| rng.random_range(-2.0..2.0) * s));
        let views = neutral_views(&prior, &alpha, &beta, 6, 170 + seed);
        for (m, &k) in mean.iter_mut().zip(&ks) {
            let res = run_bundling(&prior, &views[..k], &BundleOptions::default()).unwrap();
            let est = DVector::from_column_slice(&res.calibration.alpha);
            let e = (est - &alpha).norm() / alpha.norm();
            *m += e / subjects as f64;
        }
    }
    eprintln!("mean alpha relative error by k: {mean:?}");
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}

//! Synthetic ground-truth sequences.
//!
//! All randomness derives from the run seed through named ChaCha streams:
//! the prior, and per subject its identity, trajectory and landmark noise.
//! Changing the noise level therefore leaves the rendered frames untouched.

use f2f_core::energy::{frontal_light, LandmarkObservation, SceneParams};
use f2f_core::imaging::{interpolate_normal_albedo, rasterize, sh_shade, Frame, RigidPose, SurfaceState};
use f2f_core::model::{synth_prior, vertex, FacePrior};
use f2f_core::{Vec3, Result as CoreResult};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{PriorSettings, SynthSettings};
use crate::io::{GroundTruthRecord, SequenceInfo, SubjectTruth};

pub const BACKGROUND: [f64; 3] = [0.2, 0.25, 0.3];
/// Subject index of the driving actor and of the reenacted one.
pub const SOURCE_SUBJECT: u64 = 0;
pub const TARGET_SUBJECT: u64 = 1;

const PRIOR_STREAM: u64 = 1;
const IDENTITY: u64 = 0;
const TRAJECTORY: u64 = 1;
const NOISE: u64 = 2;

const CAVITY: [f64; 3] = [0.15, 0.05, 0.06];
const TEETH: [f64; 3] = [0.92, 0.9, 0.82];

/// Generator for the named sub-stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn subject_stream(seed: u64, subject: u64, kind: u64) -> ChaCha8Rng {
    substream(seed, 16 * (subject + 1) + kind)
}

pub fn generate_prior(settings: &PriorSettings, seed: u64) -> CoreResult<FacePrior> {
    let prior_seed = substream(seed, PRIOR_STREAM).random::<u64>();
    synth_prior(&settings.prior_config(prior_seed))
}

/// Expression-dependent mouth interior: a dark cavity with a band of teeth
/// whose height follows the lip gap and whose width follows the corner
/// distance. Painted as albedo, so it is lit like the rest of the face.
#[derive(Clone, Debug)]
pub struct MouthInterior {
    center: [f64; 2],
    radii: [f64; 2],
    /// Linear change of lip gap and corner distance per δ, scaled to unit
    /// standard deviation under the prior.
    gap: DVector<f64>,
    width: DVector<f64>,
}

fn normalized_sensitivity(prior: &FacePrior, alpha: &DVector<f64>, a: usize, b: usize) -> DVector<f64> {
    let neutral = &prior.mean_shape + &prior.basis_id * alpha;
    let dir = (vertex(&neutral, b) - vertex(&neutral, a)).normalize();
    let g = DVector::from_fn(prior.d_exp(), |i, _| {
        let col = prior.basis_exp.column(i);
        let d = Vec3::new(col[3 * b] - col[3 * a], col[3 * b + 1] - col[3 * a + 1], col[3 * b + 2] - col[3 * a + 2]);
        dir.dot(&d)
    });
    let s = g.component_mul(&prior.sigma_exp).norm().max(1e-12);
    g / s
}

impl MouthInterior {
    pub fn new(prior: &FacePrior, alpha: &DVector<f64>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &t in &prior.mouth_region {
            for &v in &prior.triangles[t] {
                for k in 0..2 {
                    lo[k] = lo[k].min(prior.uv_coords[v][k]);
                    hi[k] = hi[k].max(prior.uv_coords[v][k]);
                }
            }
        }
        let [left, right, upper, lower] = prior.mouth_landmark_vertices();
        Self {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
            radii: [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])],
            gap: normalized_sensitivity(prior, alpha, upper, lower),
            width: normalized_sensitivity(prior, alpha, left, right),
        }
    }

    /// Interior albedo and its opacity at a UV point for expression `delta`.
    pub fn albedo(&self, uv: [f64; 2], delta: &DVector<f64>) -> ([f64; 3], f64) {
        let open = self.gap.dot(delta).clamp(-2.5, 2.5);
        let wide = self.width.dot(delta).clamp(-2.5, 2.5);
        let h = self.radii[1] * (0.45 + 0.15 * open);
        let w = self.radii[0] * (0.7 + 0.08 * wide);
        let du = (uv[0] - self.center[0]) / w;
        let dv = (uv[1] - self.center[1]) / h;
        let e = (du * du + dv * dv).sqrt();
        let opacity = ((1.0 - e) / 0.2).clamp(0.0, 1.0);
        let teeth_edge = -1.0 + 2.0 * (0.35 + 0.1 * wide.tanh());
        let t = ((teeth_edge - dv) / 0.15).clamp(0.0, 1.0);
        let color = std::array::from_fn(|c| t * TEETH[c] + (1.0 - t) * CAVITY[c]);
        (color, opacity)
    }
}

/// Renders the model over the background, painting the mouth interior
/// when given. Colors are clamped to [0, 1].
pub fn render_frame(
    prior: &FacePrior,
    params: &SceneParams,
    interior: Option<&MouthInterior>,
    width: usize,
    height: usize,
) -> CoreResult<Frame> {
    let raster = rasterize(prior, params, width, height)?;
    let mut frame = Frame::filled(width, height, BACKGROUND);
    let surface = match interior {
        Some(_) => Some(SurfaceState::new(prior, params)?),
        None => None,
    };
    let mut in_mouth = vec![false; prior.triangles.len()];
    prior.mouth_region.iter().for_each(|&t| in_mouth[t] = true);
    for &idx in &raster.visible {
        let t = raster.tri_id[idx] as usize;
        let color = match (interior, &surface) {
            (Some(m), Some(s)) if in_mouth[t] => {
                let tri = prior.triangles[t];
                let b = raster.bary[idx];
                let uv = [0, 1].map(|k| (0..3).map(|j| b[j] * prior.uv_coords[tri[j]][k]).sum::<f64>());
                let (n, skin) = interpolate_normal_albedo(s, &tri, &b);
                let (paint, a) = m.albedo(uv, &params.delta);
                let albedo = std::array::from_fn(|c| a * paint[c] + (1.0 - a) * skin[c]);
                sh_shade(&(params.pose.rotation * n), &albedo, &params.gamma)
            }
            _ => raster.color.pixel(idx),
        };
        frame.set_pixel(idx, color);
    }
    Ok(frame.clamped())
}

/// Exact projections of every landmark vertex; `None` behind the camera.
pub fn project_landmarks(prior: &FacePrior, params: &SceneParams) -> CoreResult<Vec<Option<[f64; 2]>>> {
    let geo = prior.eval_geometry(&params.alpha, &params.delta)?;
    Ok(prior
        .landmark_vertices
        .iter()
        .map(|&v| params.camera.project(&params.pose.apply(&vertex(&geo, v))).map(|q| [q.x, q.y]))
        .collect())
}

#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub info: SequenceInfo,
    pub params: Vec<SceneParams>,
    pub frames: Vec<Frame>,
    pub landmarks: Vec<Vec<LandmarkObservation>>,
    pub truth: Vec<GroundTruthRecord>,
}

fn walk(rng: &mut ChaCha8Rng, value: &mut f64, step: f64, bound: f64) {
    if step > 0.0 {
        *value = (*value + rng.random_range(-step..=step)).clamp(-bound, bound);
    }
}

/// Random-walk trajectory of one subject: fixed identity and albedo within
/// ±1σ, expression, head pose and light walking inside their bounds.
pub fn subject_trajectory(prior: &FacePrior, s: &SynthSettings, seed: u64, subject: u64) -> Vec<SceneParams> {
    let mut id_rng = subject_stream(seed, subject, IDENTITY);
    let mut base = SceneParams::frontal(prior, s.width, s.height);
    let unit = |rng: &mut ChaCha8Rng| rng.random_range(-1.0..=1.0);
    base.alpha = DVector::from_fn(prior.d_id(), |i, _| unit(&mut id_rng) * prior.sigma_id[i]);
    base.beta = DVector::from_fn(prior.d_alb(), |i, _| unit(&mut id_rng) * prior.sigma_alb[i]);
    let ambient = std::array::from_fn(|_| id_rng.random_range(0.65..0.8));
    base.gamma = frontal_light(ambient, [0.25; 3]);

    let mut rng = subject_stream(seed, subject, TRAJECTORY);
    let d = prior.d_exp();
    let mut delta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut rot = [0.0; 3];
    let mut trans = [0.0; 3];
    let mut light = [0.0; 27];
    let mut out = Vec::with_capacity(s.frames);
    for f in 0..s.frames {
        if f > 0 {
            delta.iter_mut().for_each(|v| walk(&mut rng, v, s.expression_step, s.expression_bound));
            rot.iter_mut().for_each(|v| walk(&mut rng, v, s.rotation_step, s.rotation_bound));
            trans.iter_mut().for_each(|v| walk(&mut rng, v, s.translation_step, s.translation_bound));
            for c in 0..3 {
                for j in 1..9 {
                    walk(&mut rng, &mut light[c * 9 + j], s.light_step, s.light_bound);
                }
            }
        }
        let mut p = base.clone();
        p.delta = DVector::from_fn(d, |i, _| delta[i] * prior.sigma_exp[i]);
        p.pose = RigidPose::from_axis_angle(
            Vec3::from(rot),
            base.pose.translation + Vec3::from(trans),
        );
        p.gamma.0.iter_mut().zip(&light).for_each(|(g, l)| *g += l);
        out.push(p);
    }
    out
}

/// Renders a subject's trajectory with landmarks and ground truth.
pub fn synth_sequence(prior: &FacePrior, s: &SynthSettings, seed: u64, subject: u64) -> CoreResult<SyntheticSequence> {
    let params = subject_trajectory(prior, s, seed, subject);
    let interior = s.mouth_interior.then(|| MouthInterior::new(prior, &params[0].alpha));
    let mut noise_rng = subject_stream(seed, subject, NOISE);
    let noise = Normal::new(0.0, s.landmark_noise).expect("validated noise level");
    let mut frames = Vec::with_capacity(params.len());
    let mut landmarks = Vec::with_capacity(params.len());
    let mut truth = Vec::with_capacity(params.len());
    for (f, p) in params.iter().enumerate() {
        frames.push(render_frame(prior, p, interior.as_ref(), s.width, s.height)?);
        let exact = project_landmarks(prior, p)?;
        let mut obs = Vec::new();
        for (l, q) in exact.iter().enumerate() {
            let (nx, ny) = (noise.sample(&mut noise_rng), noise.sample(&mut noise_rng));
            if let Some(q) = q {
                obs.push(LandmarkObservation {
                    landmark: l,
                    position: [q[0] + nx, q[1] + ny],
                    confidence: 1.0,
                });
            }
        }
        landmarks.push(obs);
        truth.push(GroundTruthRecord {
            frame: f,
            delta: p.delta.as_slice().to_vec(),
            pose: p.pose.to_record(),
            gamma: p.gamma,
            landmarks: exact.iter().map(|q| q.unwrap_or([f64::NAN; 2])).collect(),
        });
    }
    let first = &params[0];
    Ok(SyntheticSequence {
        info: SequenceInfo {
            frames: params.len(),
            width: s.width,
            height: s.height,
            subject: Some(SubjectTruth {
                alpha: first.alpha.as_slice().to_vec(),
                beta: first.beta.as_slice().to_vec(),
                camera: first.camera,
            }),
        },
        params,
        frames,
        landmarks,
        truth,
    })
}

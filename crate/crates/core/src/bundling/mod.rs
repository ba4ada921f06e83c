//! Joint identity estimation over several keyframes.
//!
//! The stacked unknown is `[global ∥ local_1 ∥ … ∥ local_k]`. The global
//! block holds identity, albedo and (at coarse levels) intrinsics; local
//! block `f` holds frame `f`'s expression, pose and illumination. Frame `f`
//! is linearized on its own per-frame vector `[global ∥ local_f]`;
//! [`BundleLayout::promote`] lifts such a vector into the stacked one and
//! [`BundleLayout::restrict`] is its inverse. `JᵀF` and `JᵀJ·x` are sums of
//! per-frame products, accumulated in frame order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{
    photometric_rms, EnergyReport, EnergyWeights, FrameTarget, LandmarkObservation, Linearization, LinearizeOptions,
    ParamBlock, ParamLayout, SceneParams, DEFAULT_IRLS_EPSILON,
};
use crate::imaging::{
    build_pyramid, rasterize, CameraIntrinsics, Frame, Illumination, PoseRecord, RigidPose,
};
use crate::model::{vertex, FacePrior};
use crate::solver::{
    gauss_newton_step, solve_single_frame, DenseSystem, LevelSchedule, NormalEquations, PcgOptions, SolveOptions,
    SolveReport, SolveSchedule, TraceEntry, FINEST_LEVEL,
};
use crate::{Error, Result, Vec3};

pub const DEFAULT_KEYFRAMES: usize = 6;

/// Blocks shared by all keyframes, in stacked order.
pub const GLOBAL_BLOCKS: [ParamBlock; 3] = [ParamBlock::Alpha, ParamBlock::Beta, ParamBlock::Intrinsics];
/// Blocks owned by each keyframe, in stacked order.
pub const LOCAL_BLOCKS: [ParamBlock; 4] =
    [ParamBlock::Delta, ParamBlock::Rotation, ParamBlock::Translation, ParamBlock::Gamma];

const MAX_HALVINGS: usize = 8;

/// Placement of per-frame vectors in the stacked bundling vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleLayout {
    frame: ParamLayout,
    global_dim: usize,
    local_dim: usize,
    frames: usize,
}

impl BundleLayout {
    /// `global` blocks come first in every per-frame vector, then `local`.
    pub fn new(prior: &FacePrior, global: &[ParamBlock], local: &[ParamBlock], frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::NotEnoughFrames { needed: 1, have: 0 });
        }
        let blocks: Vec<ParamBlock> = global.iter().chain(local).copied().collect();
        let frame = ParamLayout::new(prior, &blocks)?;
        let global_dim = global.iter().map(|b| b.len(prior)).sum();
        Ok(Self {
            local_dim: frame.dim() - global_dim,
            frame,
            global_dim,
            frames,
        })
    }

    /// Layout of one frame's `[global ∥ local]` vector.
    pub fn frame_layout(&self) -> &ParamLayout {
        &self.frame
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dim(&self) -> usize {
        self.global_dim + self.frames * self.local_dim
    }

    pub fn local_offset(&self, f: usize) -> usize {
        self.global_dim + f * self.local_dim
    }

    /// Ψ_f: per-frame vector into a zero stacked vector.
    pub fn promote(&self, f: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.promote_add(f, x, &mut out);
        out
    }

    /// Adds Ψ_f(x) into `out`.
    pub fn promote_add(&self, f: usize, x: &[f64], out: &mut [f64]) {
        let (g, l) = x.split_at(self.global_dim);
        for (o, v) in out[..self.global_dim].iter_mut().zip(g) {
            *o += v;
        }
        let off = self.local_offset(f);
        for (o, v) in out[off..off + self.local_dim].iter_mut().zip(l) {
            *o += v;
        }
    }

    /// Ψ_f⁻¹: the `[global ∥ local_f]` part of a stacked vector.
    pub fn restrict(&self, f: usize, x: &[f64]) -> Vec<f64> {
        let off = self.local_offset(f);
        let mut out = Vec::with_capacity(self.frame.dim());
        out.extend_from_slice(&x[..self.global_dim]);
        out.extend_from_slice(&x[off..off + self.local_dim]);
        out
    }
}

/// Stacked normal equations over per-frame dense systems.
#[derive(Clone, Debug)]
pub struct BundleSystem {
    pub layout: BundleLayout,
    pub frames: Vec<DenseSystem>,
}

impl BundleSystem {
    pub fn new(layout: BundleLayout, frames: Vec<DenseSystem>) -> Result<Self> {
        if frames.len() != layout.frames() {
            return Err(Error::DimensionMismatch {
                what: "bundle frames",
                expected: layout.frames(),
                got: frames.len(),
            });
        }
        for s in &frames {
            if s.jacobian.cols() != layout.frame_layout().dim() {
                return Err(Error::DimensionMismatch {
                    what: "per-frame Jacobian columns",
                    expected: layout.frame_layout().dim(),
                    got: s.jacobian.cols(),
                });
            }
        }
        Ok(Self { layout, frames })
    }

    /// Ψ̂: per-frame residuals concatenated in frame order.
    pub fn stacked_residual(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|s| s.residual.iter().copied()).collect()
    }

    /// Per-frame products are computed in parallel and summed in frame order.
    fn accumulate(&self, per_frame: impl Fn(usize, &DenseSystem) -> Vec<f64> + Sync) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self.frames.par_iter().enumerate().map(|(f, s)| per_frame(f, s)).collect();
        let mut out = vec![0.0; self.layout.dim()];
        for (f, p) in parts.iter().enumerate() {
            self.layout.promote_add(f, p, &mut out);
        }
        out
    }
}

impl NormalEquations for BundleSystem {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn gradient(&self) -> Vec<f64> {
        self.accumulate(|_, s| s.gradient())
    }

    fn apply_jtj(&self, x: &[f64]) -> Vec<f64> {
        self.accumulate(|f, s| s.apply_jtj(&self.layout.restrict(f, x)))
    }

    fn jacobi_diag(&self) -> Vec<f64> {
        self.accumulate(|_, s| s.jacobi_diag())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeSelection {
    /// Indices `⌊i·(L − 1)/(k − 1)⌋`.
    #[default]
    Uniform,
    /// Greedy max-min distance between landmark configurations, seeded
    /// with the first frame.
    Diversity,
}

/// Picks `k` frames of a sequence given its per-frame landmarks. Returned
/// indices are ascending.
pub fn select_keyframes(
    landmarks: &[Vec<LandmarkObservation>],
    k: usize,
    mode: KeyframeSelection,
) -> Result<Vec<usize>> {
    let len = landmarks.len();
    if k == 0 || len < k {
        return Err(Error::NotEnoughFrames { needed: k.max(1), have: len });
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    match mode {
        KeyframeSelection::Uniform => Ok((0..k).map(|i| i * (len - 1) / (k - 1)).collect()),
        KeyframeSelection::Diversity => {
            let mut picked = vec![0];
            let mut nearest: Vec<f64> = (0..len).map(|j| configuration_distance(&landmarks[0], &landmarks[j])).collect();
            while picked.len() < k {
                let mut best = None;
                for j in 0..len {
                    if picked.contains(&j) {
                        continue;
                    }
                    if best.is_none_or(|b: usize| nearest[j] > nearest[b]) {
                        best = Some(j);
                    }
                }
                let b = best.expect("len >= k leaves a candidate");
                picked.push(b);
                for j in 0..len {
                    nearest[j] = nearest[j].min(configuration_distance(&landmarks[b], &landmarks[j]));
                }
            }
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

/// Euclidean distance over landmarks observed in both frames.
fn configuration_distance(a: &[LandmarkObservation], b: &[LandmarkObservation]) -> f64 {
    let mut sum = 0.0;
    for p in a {
        if let Some(q) = b.iter().find(|q| q.landmark == p.landmark) {
            sum += (p.position[0] - q.position[0]).powi(2) + (p.position[1] - q.position[1]).powi(2);
        }
    }
    sum.sqrt()
}

/// One keyframe: its pyramid (finest first) and full-resolution landmarks.
#[derive(Clone, Debug)]
pub struct Keyframe {
    /// Frame index in the source sequence.
    pub index: usize,
    pub pyramid: Vec<Frame>,
    pub landmarks: Vec<LandmarkObservation>,
}

impl Keyframe {
    pub fn new(index: usize, frame: &Frame, landmarks: Vec<LandmarkObservation>) -> Result<Self> {
        Ok(Self {
            index,
            pyramid: build_pyramid(frame, FINEST_LEVEL)?,
            landmarks,
        })
    }

    pub fn frame(&self) -> &Frame {
        &self.pyramid[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BundleOptions {
    pub weights: EnergyWeights,
    pub schedule: SolveSchedule,
    pub irls_epsilon: f64,
    pub step_halving: bool,
    pub pcg_early_exit: Option<f64>,
    pub solve_intrinsics: bool,
    /// Intrinsics stay fixed at this schedule level and finer.
    pub freeze_intrinsics_at: Option<usize>,
    /// Landmark-only pose iterations before the joint solve.
    pub warm_start_iterations: usize,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            schedule: SolveSchedule::bundling(),
            irls_epsilon: DEFAULT_IRLS_EPSILON,
            step_halving: false,
            pcg_early_exit: None,
            solve_intrinsics: true,
            freeze_intrinsics_at: Some(FINEST_LEVEL),
            warm_start_iterations: 10,
        }
    }
}

impl BundleOptions {
    fn layout_for(&self, prior: &FacePrior, level: usize, frames: usize) -> Result<BundleLayout> {
        let frozen = self.freeze_intrinsics_at.is_some_and(|l| level >= l);
        let global: Vec<ParamBlock> = GLOBAL_BLOCKS
            .into_iter()
            .filter(|b| *b != ParamBlock::Intrinsics || (self.solve_intrinsics && !frozen))
            .collect();
        BundleLayout::new(prior, &global, &LOCAL_BLOCKS, frames)
    }

    /// The single-frame options that solve the same problem for `k = 1`.
    pub fn single_frame_equivalent(&self) -> SolveOptions {
        let mut blocks = GLOBAL_BLOCKS.to_vec();
        if !self.solve_intrinsics {
            blocks.retain(|b| *b != ParamBlock::Intrinsics);
        }
        blocks.extend(LOCAL_BLOCKS);
        let mut o = SolveOptions::new(&blocks);
        o.weights = self.weights;
        o.irls_epsilon = self.irls_epsilon;
        o.step_halving = self.step_halving;
        o.pcg_early_exit = self.pcg_early_exit;
        o.freeze_intrinsics_at = self.freeze_intrinsics_at;
        o
    }
}

fn coefficient_energy(c: &[f64], sigma: &[f64]) -> f64 {
    c.iter().zip(sigma).map(|(c, s)| (c / s).powi(2)).sum()
}

/// Objective summed over frames with the identity and albedo prior counted once.
fn bundle_energy(prior: &FacePrior, params: &[SceneParams], reports: &[EnergyReport], w: &EnergyWeights) -> EnergyReport {
    let p0 = &params[0];
    let mut reg = coefficient_energy(p0.alpha.as_slice(), prior.sigma_id.as_slice())
        + coefficient_energy(p0.beta.as_slice(), prior.sigma_alb.as_slice());
    let mut out = EnergyReport::default();
    for (p, r) in params.iter().zip(reports) {
        reg += coefficient_energy(p.delta.as_slice(), prior.sigma_exp.as_slice());
        out.col += r.col;
        out.lan += r.lan;
        out.visible += r.visible;
    }
    out.reg = reg;
    out.total = w.w_col * out.col + w.w_lan * out.lan + w.w_reg * out.reg;
    out
}

struct BundleStep<'a> {
    lins: Vec<Linearization<'a>>,
    energy: EnergyReport,
}

fn linearize_all<'a>(
    prior: &'a FacePrior,
    params: &[SceneParams],
    keyframes: &'a [Keyframe],
    level: &LevelSchedule,
    layout: &BundleLayout,
    options: &BundleOptions,
) -> Result<BundleStep<'a>> {
    let lins = params
        .par_iter()
        .zip(keyframes)
        .enumerate()
        .map(|(f, (p, kf))| {
            let target = FrameTarget {
                frame: &kf.pyramid[level.pyramid_index()],
                landmarks: &kf.landmarks,
                scale: level.scale(),
            };
            // the identity and albedo prior belongs to frame 0 only
            let reg_blocks = if f == 0 {
                vec![ParamBlock::Alpha, ParamBlock::Beta, ParamBlock::Delta]
            } else {
                vec![ParamBlock::Delta]
            };
            let opts = LinearizeOptions {
                reg_blocks,
                irls_epsilon: options.irls_epsilon,
            };
            Linearization::new(prior, p, target, &options.weights, layout.frame_layout(), &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EnergyReport> = lins.iter().map(|l| l.energy()).collect();
    let energy = bundle_energy(prior, params, &reports, &options.weights);
    Ok(BundleStep { lins, energy })
}

fn apply_stacked(params: &[SceneParams], layout: &BundleLayout, dx: &[f64]) -> Vec<SceneParams> {
    params
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let mut next = p.clone();
            next.apply_update(layout.frame_layout(), &layout.restrict(f, dx));
            next
        })
        .collect()
}

fn check_keyframes(keyframes: &[Keyframe]) -> Result<(usize, usize)> {
    let first = keyframes.first().ok_or(Error::NotEnoughFrames { needed: 1, have: 0 })?;
    let (w, h) = (first.frame().width, first.frame().height);
    for kf in keyframes {
        if kf.frame().width != w || kf.frame().height != h {
            return Err(Error::InvalidConfig("keyframes differ in resolution".into()));
        }
        if kf.pyramid.len() < FINEST_LEVEL {
            return Err(Error::InvalidConfig(format!(
                "keyframe pyramid has {} levels, need {FINEST_LEVEL}",
                kf.pyramid.len()
            )));
        }
    }
    Ok((w, h))
}

/// Hierarchical joint Gauss-Newton over all keyframes. The globals of
/// `initial[0]` are used for every frame.
pub fn bundle_solve(
    prior: &FacePrior,
    initial: &[SceneParams],
    keyframes: &[Keyframe],
    options: &BundleOptions,
) -> Result<(Vec<SceneParams>, SolveReport)> {
    check_keyframes(keyframes)?;
    if initial.len() != keyframes.len() {
        return Err(Error::DimensionMismatch {
            what: "initial keyframe parameters",
            expected: keyframes.len(),
            got: initial.len(),
        });
    }
    options.schedule.validate()?;
    options.weights.validate()?;
    let mut params: Vec<SceneParams> = initial
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.alpha = initial[0].alpha.clone();
            q.beta = initial[0].beta.clone();
            q.camera = initial[0].camera;
            q
        })
        .collect();
    let mut report = SolveReport::default();
    for level in &options.schedule.levels {
        let layout = options.layout_for(prior, level.level, keyframes.len())?;
        let pcg = PcgOptions {
            iterations: level.pcg_iterations,
            early_exit: options.pcg_early_exit,
        };
        let mut step = linearize_all(prior, &params, keyframes, level, &layout, options)?;
        report.trace.push(TraceEntry {
            iteration: 0,
            level: level.level,
            energy: step.energy,
        });
        for it in 1..=level.gn_iterations {
            let systems = step
                .lins
                .par_iter()
                .map(|l| DenseSystem {
                    jacobian: l.jacobian(),
                    residual: l.residuals(),
                })
                .collect();
            let system = BundleSystem::new(layout.clone(), systems)?;
            let mut dx = gauss_newton_step(&system, &pcg)?.x;
            let mut next_params = apply_stacked(&params, &layout, &dx);
            let mut next = linearize_all(prior, &next_params, keyframes, level, &layout, options)?;
            if options.step_halving {
                let mut halvings = 0;
                while next.energy.total > step.energy.total && halvings < MAX_HALVINGS {
                    dx.iter_mut().for_each(|v| *v *= 0.5);
                    next_params = apply_stacked(&params, &layout, &dx);
                    next = linearize_all(prior, &next_params, keyframes, level, &layout, options)?;
                    halvings += 1;
                }
            }
            report.update_norms.push(dx.iter().map(|v| v * v).sum::<f64>().sqrt());
            report.trace.push(TraceEntry {
                iteration: it,
                level: level.level,
                energy: next.energy,
            });
            params = next_params;
            step = next;
        }
    }
    for p in &mut params {
        p.gamma.project_nonnegative_ambient();
    }
    Ok((params, report))
}

/// Rough pose from landmarks: identity rotation, depth from the ratio of
/// model to image landmark spread, translation from the centroids.
pub fn initial_pose(
    prior: &FacePrior,
    landmarks: &[LandmarkObservation],
    camera: &CameraIntrinsics,
) -> Result<RigidPose> {
    let mut wsum = 0.0;
    let mut model_c = Vec3::zeros();
    let mut image_c = [0.0; 2];
    for obs in landmarks {
        let m = vertex(&prior.mean_shape, prior.landmark_vertices[obs.landmark]);
        wsum += obs.confidence;
        model_c += obs.confidence * m;
        image_c[0] += obs.confidence * obs.position[0];
        image_c[1] += obs.confidence * obs.position[1];
    }
    if !(wsum > 0.0) {
        return Err(Error::InvalidConfig("warm start needs landmarks with positive confidence".into()));
    }
    model_c /= wsum;
    image_c = [image_c[0] / wsum, image_c[1] / wsum];
    let mut model_spread = 0.0;
    let mut image_spread = 0.0;
    for obs in landmarks {
        let m = vertex(&prior.mean_shape, prior.landmark_vertices[obs.landmark]);
        model_spread += obs.confidence * ((m.x - model_c.x).powi(2) + (m.y - model_c.y).powi(2));
        image_spread += obs.confidence
            * ((obs.position[0] - image_c[0]).powi(2) / camera.fx.powi(2)
                + (obs.position[1] - image_c[1]).powi(2) / camera.fy.powi(2));
    }
    if !(image_spread > 0.0) {
        return Err(Error::InvalidConfig("landmarks are degenerate".into()));
    }
    let depth = (model_spread / image_spread).sqrt();
    let translation = Vec3::new(
        (image_c[0] - camera.cx) / camera.fx * depth - model_c.x,
        (image_c[1] - camera.cy) / camera.fy * depth - model_c.y,
        depth - model_c.z,
    );
    Ok(RigidPose {
        rotation: crate::Mat3::identity(),
        translation,
    })
}

/// Per-channel ambient level minimizing `Σ (ρ_c·a_c − I_c)²` over the
/// visible pixels.
pub fn fit_ambient(prior: &FacePrior, params: &SceneParams, frame: &Frame) -> Result<Illumination> {
    let mut unlit = params.clone();
    unlit.gamma = Illumination::ambient([1.0; 3]);
    let raster = rasterize(prior, &unlit, frame.width, frame.height)?;
    if raster.visible.is_empty() {
        return Err(Error::EmptyVisibility);
    }
    let mut num = [0.0; 3];
    let mut den = [0.0; 3];
    for &idx in &raster.visible {
        let rho = raster.color.pixel(idx);
        let obs = frame.pixel(idx);
        for c in 0..3 {
            num[c] += rho[c] * obs[c];
            den[c] += rho[c] * rho[c];
        }
    }
    let level = std::array::from_fn(|c| if den[c] > 0.0 { (num[c] / den[c]).max(0.0) } else { 0.0 });
    Ok(Illumination::ambient(level))
}

/// Zero coefficients, landmark-only pose and an ambient light fit.
pub fn warm_start(
    prior: &FacePrior,
    keyframe: &Keyframe,
    camera: CameraIntrinsics,
    options: &BundleOptions,
) -> Result<SceneParams> {
    let mut p = SceneParams::zeros(prior, camera);
    p.pose = initial_pose(prior, &keyframe.landmarks, &camera)?;
    if options.warm_start_iterations > 0 {
        let mut o = SolveOptions::pose_only();
        o.weights = EnergyWeights {
            w_col: 0.0,
            w_lan: 1.0,
            w_reg: 0.0,
        };
        let schedule = SolveSchedule {
            levels: vec![LevelSchedule::new(FINEST_LEVEL, options.warm_start_iterations, 6)],
        };
        p = solve_single_frame(prior, &p, &keyframe.pyramid, &keyframe.landmarks, &schedule, &o)?.0;
    }
    p.gamma = fit_ambient(prior, &p, keyframe.frame())?;
    Ok(p)
}

/// Serialized calibration: shared identity, albedo and intrinsics plus the
/// per-keyframe state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub camera: CameraIntrinsics,
    pub keyframes: Vec<KeyframeRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeRecord {
    pub frame: usize,
    pub delta: Vec<f64>,
    pub pose: PoseRecord,
    pub gamma: Illumination,
    pub photometric_rms: f64,
}

impl Calibration {
    /// Scene parameters of keyframe `i`, or of a neutral frame when `None`.
    pub fn scene_params(&self, prior: &FacePrior, keyframe: Option<usize>) -> Result<SceneParams> {
        let mut p = SceneParams::zeros(prior, self.camera);
        p.alpha = nalgebra::DVector::from_column_slice(&self.alpha);
        p.beta = nalgebra::DVector::from_column_slice(&self.beta);
        if let Some(i) = keyframe {
            let k = self.keyframes.get(i).ok_or(Error::InvalidConfig(format!("no keyframe {i}")))?;
            p.delta = nalgebra::DVector::from_column_slice(&k.delta);
            p.pose = RigidPose::from_record(&k.pose);
            p.gamma = k.gamma;
        }
        p.check(prior)?;
        Ok(p)
    }
}

#[derive(Clone, Debug)]
pub struct BundleResult {
    pub calibration: Calibration,
    /// Final parameters of the kept keyframes.
    pub params: Vec<SceneParams>,
    pub report: SolveReport,
    /// Positions (in the input list) of the keyframes that were kept.
    pub kept: Vec<usize>,
}

/// Warm-starts every keyframe, drops those the face does not reach, and
/// runs the joint solve.
pub fn run_bundling(prior: &FacePrior, keyframes: &[Keyframe], options: &BundleOptions) -> Result<BundleResult> {
    let (w, h) = check_keyframes(keyframes)?;
    let camera = CameraIntrinsics::default_for(w, h);
    let starts: Vec<Result<SceneParams>> =
        keyframes.par_iter().map(|kf| warm_start(prior, kf, camera, options)).collect();
    let mut kept = Vec::new();
    let mut initial = Vec::new();
    for (i, s) in starts.into_iter().enumerate() {
        match s {
            Ok(p) => {
                kept.push(i);
                initial.push(p);
            }
            Err(Error::EmptyVisibility) => {
                log::warn!("keyframe {} has no visible pixels after warm start; dropped", keyframes[i].index)
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyVisibility);
    }
    let used: Vec<Keyframe> = kept.iter().map(|&i| keyframes[i].clone()).collect();
    let (params, report) = bundle_solve(prior, &initial, &used, options)?;
    let mut records = Vec::with_capacity(params.len());
    for (p, kf) in params.iter().zip(&used) {
        records.push(KeyframeRecord {
            frame: kf.index,
            delta: p.delta.as_slice().to_vec(),
            pose: p.pose.to_record(),
            gamma: p.gamma,
            photometric_rms: photometric_rms(prior, p, kf.frame())?,
        });
    }
    let calibration = Calibration {
        alpha: params[0].alpha.as_slice().to_vec(),
        beta: params[0].beta.as_slice().to_vec(),
        camera: params[0].camera,
        keyframes: records,
    };
    Ok(BundleResult {
        calibration,
        params,
        report,
        kept,
    })
}

//! Online tracking of expression, pose and illumination with identity,
//! albedo and intrinsics held at their calibrated values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{photometric_rms, EnergyReport, EnergyWeights, LandmarkObservation, SceneParams, DEFAULT_IRLS_EPSILON};
use crate::imaging::{build_pyramid, Frame, Illumination, PoseRecord, RigidPose};
use crate::model::FacePrior;
use crate::solver::{solve_single_frame, SolveOptions, SolveReport, SolveSchedule, FINEST_LEVEL};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub weights: EnergyWeights,
    pub schedule: SolveSchedule,
    pub irls_epsilon: f64,
    /// Frames whose mean per-pixel color error exceeds this are lost.
    pub lost_threshold: f64,
    /// Weight of the previous frame's illumination in the reported one.
    pub gamma_smoothing: f64,
    pub step_halving: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            schedule: SolveSchedule::tracking(),
            irls_epsilon: DEFAULT_IRLS_EPSILON,
            lost_threshold: 0.25,
            gamma_smoothing: 0.5,
            step_halving: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.schedule.validate()?;
        if !(self.lost_threshold > 0.0) {
            return Err(Error::InvalidConfig("lost_threshold must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma_smoothing) {
            return Err(Error::InvalidConfig("gamma_smoothing must be in [0, 1)".into()));
        }
        if !(self.irls_epsilon > 0.0) {
            return Err(Error::InvalidConfig("irls_epsilon must be positive".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        let mut o = SolveOptions::tracking();
        o.weights = self.weights;
        o.irls_epsilon = self.irls_epsilon;
        o.step_halving = self.step_halving;
        o
    }
}

/// Calibrated globals plus the last accepted per-frame state.
#[derive(Clone, Debug)]
pub struct TrackerState<'a> {
    prior: &'a FacePrior,
    config: TrackerConfig,
    current: SceneParams,
    frames_seen: usize,
    lost_streak: usize,
}

impl<'a> TrackerState<'a> {
    /// `initial` carries the calibration (α, β, κ) and the state the first
    /// frame starts from.
    pub fn new(prior: &'a FacePrior, initial: SceneParams, config: TrackerConfig) -> Result<Self> {
        initial.check(prior)?;
        config.validate()?;
        Ok(Self {
            prior,
            config,
            current: initial,
            frames_seen: 0,
            lost_streak: 0,
        })
    }

    pub fn params(&self) -> &SceneParams {
        &self.current
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Consecutive lost frames up to now.
    pub fn lost_streak(&self) -> usize {
        self.lost_streak
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }
}

/// One line of the per-frame parameter stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame: usize,
    pub delta: Vec<f64>,
    pub pose: PoseRecord,
    pub gamma: Illumination,
    pub energy: EnergyReport,
    /// Absent when the face covers no pixel.
    pub photometric_rms: Option<f64>,
    pub lost: bool,
}

impl FrameRecord {
    /// Applies the record's per-frame state to calibrated parameters.
    pub fn apply_to(&self, base: &SceneParams) -> SceneParams {
        let mut p = base.clone();
        p.delta = nalgebra::DVector::from_column_slice(&self.delta);
        p.pose = RigidPose::from_record(&self.pose);
        p.gamma = self.gamma;
        p
    }
}

#[derive(Clone, Debug)]
pub struct TrackedFrame {
    pub record: FrameRecord,
    pub params: SceneParams,
    /// `None` when the frame was lost before a solve finished.
    pub report: Option<SolveReport>,
}

/// Tracks one frame starting from the previous state. A frame is lost
/// when the face misses the image, or when the color error exceeds the
/// threshold before or after the solve; the state then stays at the
/// previous frame.
pub fn track_frame(state: &mut TrackerState, frame: &Frame, landmarks: &[LandmarkObservation]) -> Result<TrackedFrame> {
    let prior = state.prior;
    let index = state.frames_seen;
    state.frames_seen += 1;
    let pyramid = build_pyramid(frame, FINEST_LEVEL)?;
    let options = state.config.solve_options();
    let solved = match solve_single_frame(prior, &state.current, &pyramid, landmarks, &state.config.schedule, &options) {
        Ok(r) => Some(r),
        Err(Error::EmptyVisibility) => None,
        Err(e) => return Err(e),
    };
    let threshold = state.config.lost_threshold;
    let accepted = solved.filter(|(_, report)| {
        let start = report.initial_energy().map_or(f64::INFINITY, |e| e.col);
        let end = report.final_energy().map_or(f64::INFINITY, |e| e.col);
        start <= threshold && end <= threshold
    });
    let (params, report, lost) = match accepted {
        Some((mut p, report)) => {
            let s = state.config.gamma_smoothing;
            for (g, prev) in p.gamma.0.iter_mut().zip(state.current.gamma.0) {
                *g = s * prev + (1.0 - s) * *g;
            }
            state.current = p.clone();
            state.lost_streak = 0;
            (p, Some(report), false)
        }
        None => {
            state.lost_streak += 1;
            log::warn!("frame {index} lost; keeping the previous state");
            (state.current.clone(), None, true)
        }
    };
    let energy = report.as_ref().and_then(|r| r.final_energy()).unwrap_or_default();
    let rms = match photometric_rms(prior, &params, frame) {
        Ok(v) => Some(v),
        Err(Error::EmptyVisibility) => None,
        Err(e) => return Err(e),
    };
    Ok(TrackedFrame {
        record: FrameRecord {
            frame: index,
            delta: params.delta.as_slice().to_vec(),
            pose: params.pose.to_record(),
            gamma: params.gamma,
            energy,
            photometric_rms: rms,
            lost,
        },
        params,
        report,
    })
}

/// Mean and standard deviation of the photometric RMS over tracked frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub frames: usize,
    pub lost: usize,
    pub rms_mean: f64,
    pub rms_std: f64,
}

impl SequenceMetrics {
    pub fn from_records(records: &[FrameRecord]) -> Self {
        let rms: Vec<f64> = records.iter().filter(|r| !r.lost).filter_map(|r| r.photometric_rms).collect();
        let n = rms.len().max(1) as f64;
        let mean = rms.iter().sum::<f64>() / n;
        let var = rms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            frames: records.len(),
            lost: records.iter().filter(|r| r.lost).count(),
            rms_mean: mean,
            rms_std: var.sqrt(),
        }
    }
}

/// Tracks every frame in order. `landmarks[i]` belongs to `frames[i]`.
pub fn track_sequence(
    state: &mut TrackerState,
    frames: &[Frame],
    landmarks: &[Vec<LandmarkObservation>],
) -> Result<(Vec<FrameRecord>, SequenceMetrics)> {
    if frames.len() != landmarks.len() {
        return Err(Error::DimensionMismatch {
            what: "landmark stream",
            expected: frames.len(),
            got: landmarks.len(),
        });
    }
    let mut records = Vec::with_capacity(frames.len());
    for (f, l) in frames.iter().zip(landmarks) {
        records.push(track_frame(state, f, l)?.record);
    }
    let metrics = SequenceMetrics::from_records(&records);
    Ok((records, metrics))
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[FrameRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<FrameRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub const METRICS_CSV_HEADER: &str = "frame,E_total,E_col,E_lan,E_reg,visible,photometric_rms,lost";

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[FrameRecord]) -> Result<()> {
    writeln!(w, "{METRICS_CSV_HEADER}")?;
    for r in records {
        let e = &r.energy;
        let rms = r.photometric_rms.map_or(String::new(), |v| format!("{v:e}"));
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{},{},{}",
            r.frame, e.total, e.col, e.lan, e.reg, e.visible, rms, r.lost as u8
        )?;
    }
    Ok(())
}

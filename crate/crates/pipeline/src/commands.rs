//! The stages behind the CLI subcommands. Each reads its inputs from the
//! sequence directories and the output directory and writes its artifacts
//! to the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use f2f_core::bundling::{fit_ambient, initial_pose, run_bundling, select_keyframes, Calibration, Keyframe};
use f2f_core::energy::{LandmarkObservation, SceneParams};
use f2f_core::imaging::Frame;
use f2f_core::model::FacePrior;
use f2f_core::mouth::{capture_sample, MouthChart, MouthDatabase};
use f2f_core::tracking::{self, track_sequence, FrameRecord, SequenceMetrics, TrackerState};
use f2f_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{create_dir, read_json, write_json, SequenceDir};
use crate::synth::{generate_prior, synth_sequence, SOURCE_SUBJECT, TARGET_SUBJECT};
use crate::{Error, Result};

pub const PRIOR_FILE: &str = "prior.bin";
pub const MOUTH_DB_FILE: &str = "mouth_db.bin";
pub const TRANSFER_FILE: &str = "transfer.bin";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Target => "target",
        }
    }
}

/// Configuration plus the prior every stage shares.
pub struct Context {
    pub cfg: RunConfig,
    pub prior: FacePrior,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let prior = match &cfg.paths.prior {
            Some(path) => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                FacePrior::read_from(std::io::BufReader::new(file))?
            }
            None => generate_prior(&cfg.prior, cfg.seed)?,
        };
        Ok(Self { cfg, prior })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.out.join(name)
    }

    pub fn sequence(&self, role: Role) -> SequenceDir {
        SequenceDir::new(match role {
            Role::Source => &self.cfg.paths.source,
            Role::Target => &self.cfg.paths.target,
        })
    }

    /// Roles with distinct sequences; the target alone when they coincide.
    pub fn roles(&self) -> Vec<Role> {
        if self.cfg.is_self_reenactment() {
            vec![Role::Target]
        } else {
            vec![Role::Source, Role::Target]
        }
    }

    /// The role whose artifacts stand in for `role`.
    pub fn canonical(&self, role: Role) -> Role {
        if self.cfg.is_self_reenactment() {
            Role::Target
        } else {
            role
        }
    }

    pub fn calibration_path(&self, role: Role) -> PathBuf {
        self.out(&format!("calibration_{}.json", self.canonical(role).name()))
    }

    pub fn track_path(&self, role: Role) -> PathBuf {
        self.out(&format!("track_{}.jsonl", self.canonical(role).name()))
    }

    pub fn metrics_path(&self, role: Role) -> PathBuf {
        self.out(&format!("metrics_{}.csv", self.canonical(role).name()))
    }

    pub fn frames_and_landmarks(&self, role: Role) -> Result<(Vec<Frame>, Vec<Vec<LandmarkObservation>>)> {
        let seq = self.sequence(role);
        let frames = seq.read_frames(self.cfg.frames)?;
        let landmarks = seq.read_landmarks(frames.len())?;
        Ok((frames, landmarks))
    }

    pub fn calibration(&self, role: Role) -> Result<Calibration> {
        let path = self.calibration_path(role);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "calibration",
                path,
                stage: "calibrate",
            });
        }
        read_json(&path)
    }

    /// Stored tracking results of `role`, or `None` if tracking has not run.
    pub fn stored_track(&self, role: Role) -> Result<Option<Vec<FrameRecord>>> {
        let path = self.track_path(role);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(tracking::read_jsonl(&text)?))
    }

    /// Stored tracking of `role`, running the tracker first when missing.
    pub fn track(&self, role: Role) -> Result<Vec<FrameRecord>> {
        match self.stored_track(role)? {
            Some(r) => Ok(r),
            None => Ok(track_role(self, role)?.0),
        }
    }

    pub fn mouth_db(&self) -> Result<MouthDatabase> {
        let path = self.out(MOUTH_DB_FILE);
        let file = File::open(&path).map_err(|_| Error::MissingArtifact {
            what: "mouth database",
            path: path.clone(),
            stage: "build-mouth-db",
        })?;
        Ok(MouthDatabase::read_from(std::io::BufReader::new(file))?)
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes the target sequence, the source sequence when it differs, and
/// the prior.
pub fn cmd_synth(ctx: &Context) -> Result<()> {
    create_dir(&ctx.cfg.paths.out)?;
    ctx.prior.write_to(create_file(&ctx.out(PRIOR_FILE))?)?;
    for role in ctx.roles() {
        let subject = match role {
            Role::Source => SOURCE_SUBJECT,
            Role::Target => TARGET_SUBJECT,
        };
        let seq = synth_sequence(&ctx.prior, &ctx.cfg.synth, ctx.cfg.seed, subject)?;
        let dir = ctx.sequence(role);
        create_dir(&dir.root)?;
        for (i, f) in seq.frames.iter().enumerate() {
            dir.write_frame(i, f)?;
        }
        let lms: Vec<_> = seq
            .landmarks
            .iter()
            .enumerate()
            .map(|(frame, l)| crate::io::LandmarkRecord {
                frame,
                landmarks: l.clone(),
            })
            .collect();
        crate::io::write_jsonl(&dir.landmarks_path(), &lms)?;
        crate::io::write_jsonl(&dir.ground_truth_path(), &seq.truth)?;
        write_json(&dir.info_path(), &seq.info)?;
        log::info!("wrote {} frames to {}", seq.frames.len(), dir.root.display());
    }
    Ok(())
}

/// Keyframe selection and bundling of one sequence.
pub fn calibrate_role(ctx: &Context, role: Role) -> Result<Calibration> {
    let (frames, landmarks) = ctx.frames_and_landmarks(role)?;
    let c = &ctx.cfg.calibration;
    let picked = select_keyframes(&landmarks, c.keyframes, c.selection)?;
    let keyframes = picked
        .iter()
        .map(|&i| Keyframe::new(i, &frames[i], landmarks[i].clone()))
        .collect::<f2f_core::Result<Vec<_>>>()?;
    let result = run_bundling(&ctx.prior, &keyframes, &c.bundle)?;
    create_dir(&ctx.cfg.paths.out)?;
    write_json(&ctx.calibration_path(role), &result.calibration)?;
    log::info!("{} calibrated from keyframes {:?}", role.name(), picked);
    Ok(result.calibration)
}

pub fn cmd_calibrate(ctx: &Context) -> Result<()> {
    for role in ctx.roles() {
        calibrate_role(ctx, role)?;
    }
    Ok(())
}

/// Starting state of frame 0: the keyframe state if frame 0 is a keyframe,
/// otherwise a landmark pose with ambient light on the calibrated identity.
pub fn initial_state(
    prior: &FacePrior,
    calib: &Calibration,
    frame0: &Frame,
    landmarks0: &[LandmarkObservation],
) -> Result<SceneParams> {
    if let Some(k) = calib.keyframes.iter().position(|k| k.frame == 0) {
        return Ok(calib.scene_params(prior, Some(k))?);
    }
    let mut p = calib.scene_params(prior, None)?;
    p.pose = initial_pose(prior, landmarks0, &p.camera)?;
    p.gamma = fit_ambient(prior, &p, frame0)?;
    Ok(p)
}

pub fn track_role(ctx: &Context, role: Role) -> Result<(Vec<FrameRecord>, SequenceMetrics)> {
    let calib = ctx.calibration(role)?;
    let (frames, landmarks) = ctx.frames_and_landmarks(role)?;
    let init = initial_state(&ctx.prior, &calib, &frames[0], &landmarks[0])?;
    let mut state = TrackerState::new(&ctx.prior, init, ctx.cfg.tracking.clone())?;
    let (records, metrics) = track_sequence(&mut state, &frames, &landmarks)?;
    create_dir(&ctx.cfg.paths.out)?;
    tracking::write_jsonl(create_file(&ctx.track_path(role))?, &records)?;
    tracking::write_metrics_csv(create_file(&ctx.metrics_path(role))?, &records)?;
    log::info!(
        "{}: {} frames, {} lost, photometric RMS {:.4e} ± {:.1e}",
        role.name(),
        metrics.frames,
        metrics.lost,
        metrics.rms_mean,
        metrics.rms_std
    );
    Ok((records, metrics))
}

pub fn cmd_track(ctx: &Context) -> Result<()> {
    for role in ctx.roles() {
        track_role(ctx, role)?;
    }
    Ok(())
}

/// Normalized mouths of the first `db_frames` tracked target frames,
/// clustered into the database. Lost frames and hidden mouths are skipped.
pub fn cmd_build_mouth_db(ctx: &Context) -> Result<MouthDatabase> {
    let calib = ctx.calibration(Role::Target)?;
    let records = ctx.track(Role::Target)?;
    let seq = ctx.sequence(Role::Target);
    let base = calib.scene_params(&ctx.prior, None)?;
    let chart = MouthChart::new(&ctx.prior, ctx.cfg.mouth.texture_size)?;
    let limit = ctx.cfg.reenact.db_frames.unwrap_or(records.len()).min(records.len());
    let mut samples = Vec::with_capacity(limit);
    for r in &records[..limit] {
        if r.lost {
            log::warn!("target frame {} was lost during tracking; not in the mouth database", r.frame);
            continue;
        }
        let frame = seq.read_frame(r.frame)?;
        match capture_sample(&ctx.prior, &chart, r.frame, &frame, &r.apply_to(&base)) {
            Ok(s) => samples.push(s),
            Err(CoreError::MouthHidden(v)) => {
                log::warn!("target frame {}: mouth hidden ({v:.2} visible); skipped", r.frame)
            }
            Err(e) => return Err(e.into()),
        }
    }
    let db = MouthDatabase::build(samples, &ctx.cfg.mouth)?;
    create_dir(&ctx.cfg.paths.out)?;
    db.write_to(create_file(&ctx.out(MOUTH_DB_FILE))?)?;
    log::info!("mouth database: {} frames in {} clusters", db.len(), db.clusters.len());
    Ok(db)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingEval {
    pub frames: usize,
    pub lost: usize,
    pub photometric_rms_mean: f64,
    /// Present when the sequence has ground truth.
    pub delta_relative_error_mean: Option<f64>,
    pub rotation_error_deg_mean: Option<f64>,
    pub translation_error_mean: Option<f64>,
    pub alpha_relative_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: Option<TrackingEval>,
    pub target: Option<TrackingEval>,
    pub reenactment: Option<crate::reenact::ReenactSummary>,
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(1e-300)
}

fn eval_role(ctx: &Context, role: Role) -> Result<Option<TrackingEval>> {
    let Some(records) = ctx.stored_track(role)? else {
        return Ok(None);
    };
    let metrics = SequenceMetrics::from_records(&records);
    let mut out = TrackingEval {
        frames: metrics.frames,
        lost: metrics.lost,
        photometric_rms_mean: metrics.rms_mean,
        ..Default::default()
    };
    let seq = ctx.sequence(role);
    if let Some(truth) = seq.read_ground_truth()? {
        let n = records.len().min(truth.len()).max(1) as f64;
        let (mut dd, mut rot, mut tr) = (0.0, 0.0, 0.0);
        for (r, t) in records.iter().zip(&truth) {
            dd += relative(&r.delta, &t.delta);
            let ra = f2f_core::imaging::RigidPose::from_record(&r.pose);
            let ta = f2f_core::imaging::RigidPose::from_record(&t.pose);
            let rel = ra.rotation * ta.rotation.transpose();
            let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            rot += cos.acos().to_degrees();
            tr += (ra.translation - ta.translation).norm();
        }
        out.delta_relative_error_mean = Some(dd / n);
        out.rotation_error_deg_mean = Some(rot / n);
        out.translation_error_mean = Some(tr / n);
        if let (Some(subject), Ok(calib)) = (seq.info()?.subject, ctx.calibration(role)) {
            out.alpha_relative_error = Some(relative(&calib.alpha, &subject.alpha));
        }
    }
    Ok(Some(out))
}

pub fn cmd_eval(ctx: &Context) -> Result<EvalReport> {
    let source = if ctx.cfg.is_self_reenactment() {
        None
    } else {
        eval_role(ctx, Role::Source)?
    };
    let summary_path = ctx.out(crate::reenact::SUMMARY_FILE);
    let report = EvalReport {
        source,
        target: eval_role(ctx, Role::Target)?,
        reenactment: if summary_path.exists() {
            Some(read_json(&summary_path)?)
        } else {
            None
        },
    };
    if report.source.is_none() && report.target.is_none() && report.reenactment.is_none() {
        return Err(Error::MissingArtifact {
            what: "tracking or reenactment results",
            path: ctx.cfg.paths.out.clone(),
            stage: "track",
        });
    }
    create_dir(&ctx.cfg.paths.out)?;
    write_json(&ctx.out(EVAL_FILE), &report)?;
    Ok(report)
}

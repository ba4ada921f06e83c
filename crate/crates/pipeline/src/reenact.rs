//! The reenactment driver. Per frame: the source expression is transferred
//! to the target identity, the target model is rendered with it under the
//! target's pose and light, a mouth is retrieved from the target database,
//! and everything is composited over the target frame.
//!
//! Source pixels are read in one place only, [`source_mouth_lbp`], whose
//! histogram steers retrieval. Output pixels come from the target frame,
//! the target render and target database textures.

use std::fmt::Write as _;

use f2f_core::bundling::Calibration;
use f2f_core::energy::SceneParams;
use f2f_core::imaging::{rasterize, Frame};
use f2f_core::model::FacePrior;
use f2f_core::mouth::{
    blend_and_composite, compute_lbp, normalize_mouth, LbpHistogram, MouthChart, MouthDatabase, MouthDescriptor,
    Retrieval, RetrievalState, LBP_BINS, LBP_CELLS,
};
use f2f_core::tracking::FrameRecord;
use f2f_core::transfer::TransferOperator;
use f2f_core::Error as CoreError;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::commands::{Context, Role, TRANSFER_FILE};
use crate::io::{create_dir, write_json, SequenceDir};
use crate::{Error, Result};

pub const SUMMARY_FILE: &str = "reenact_summary.json";
pub const REENACT_DIR: &str = "reenact";
pub const METRICS_HEADER: &str = "frame,target,inbetween,face_pixels,rms_face,mouth_pixels,rms_mouth";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReenactSummary {
    pub frames: usize,
    pub db_frames: Option<usize>,
    /// RMS difference to the target frames over composited face pixels.
    pub rms_face: f64,
    /// The same over frames inside and outside the database.
    pub rms_db: Option<f64>,
    pub rms_held_out: Option<f64>,
    /// RMS over pixels that take part of their color from the mouth texture.
    pub rms_mouth: f64,
}

#[derive(Clone, Debug)]
pub struct ReenactedFrame {
    pub frame: Frame,
    pub retrieval: Retrieval,
    /// Squared error against the target frame summed over face pixels and
    /// channels, and the number of face pixels.
    pub face_sq_sum: f64,
    pub face_pixels: usize,
    /// The same over pixels with a nonzero mouth weight.
    pub mouth_sq_sum: f64,
    pub mouth_pixels: usize,
}

/// LBP of the source frame's normalized mouth; empty when the mouth is
/// hidden.
pub fn source_mouth_lbp(
    prior: &FacePrior,
    chart: &MouthChart,
    source_frame: &Frame,
    source_params: &SceneParams,
) -> Result<LbpHistogram> {
    match normalize_mouth(prior, chart, source_frame, source_params) {
        Ok(tex) => Ok(compute_lbp(&tex)),
        Err(CoreError::MouthHidden(_)) => Ok(LbpHistogram {
            counts: vec![0; LBP_CELLS * LBP_CELLS * LBP_BINS],
        }),
        Err(e) => Err(e.into()),
    }
}

pub struct Reenactor<'a> {
    prior: &'a FacePrior,
    db: &'a MouthDatabase,
    chart: MouthChart,
    transfer: TransferOperator,
    source_base: SceneParams,
    target_base: SceneParams,
    state: RetrievalState,
}

impl<'a> Reenactor<'a> {
    /// Neutral expressions of both actors are taken as δ = 0.
    pub fn new(prior: &'a FacePrior, db: &'a MouthDatabase, source: &Calibration, target: &Calibration) -> Result<Self> {
        let source_base = source.scene_params(prior, None)?;
        let target_base = target.scene_params(prior, None)?;
        let zero = DVector::zeros(prior.d_exp());
        let transfer = TransferOperator::build(prior, &source_base.alpha, &zero, &target_base.alpha, &zero)?;
        Ok(Self {
            prior,
            db,
            chart: MouthChart::new(prior, db.config.texture_size)?,
            transfer,
            source_base,
            target_base,
            state: RetrievalState::default(),
        })
    }

    pub fn transfer(&self) -> &TransferOperator {
        &self.transfer
    }

    /// Target parameters driven by the source expression.
    pub fn target_params(&self, source: &FrameRecord, target: &FrameRecord) -> Result<SceneParams> {
        let delta_s = DVector::from_column_slice(&source.delta);
        let mut p = target.apply_to(&self.target_base);
        p.delta = self.transfer.transfer_expression(&delta_s)?;
        Ok(p)
    }

    pub fn frame(
        &mut self,
        source_frame: &Frame,
        source: &FrameRecord,
        target_frame: &Frame,
        target: &FrameRecord,
    ) -> Result<ReenactedFrame> {
        let params = self.target_params(source, target)?;
        let source_params = source.apply_to(&self.source_base);
        let lbp = source_mouth_lbp(self.prior, &self.chart, source_frame, &source_params)?;
        let query = MouthDescriptor::from_params(self.prior, &params, lbp)?;
        let retrieval = self.db.retrieve(&query, &mut self.state);
        let (w, h) = (target_frame.width, target_frame.height);
        let render = rasterize(self.prior, &params, w, h)?;
        let out = blend_and_composite(
            self.prior,
            &self.chart,
            self.db,
            retrieval,
            &mut self.state,
            target_frame,
            &render,
            &params,
        )?;
        let mut face = (0.0, 0);
        let mut mouth = (0.0, 0);
        for (i, wts) in out.weights.iter().enumerate() {
            if wts[0] < 1.0 {
                let (a, b) = (out.frame.pixel(i), target_frame.pixel(i));
                let sq = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
                face = (face.0 + sq, face.1 + 1);
                if wts[2] > 0.0 {
                    mouth = (mouth.0 + sq, mouth.1 + 1);
                }
            }
        }
        Ok(ReenactedFrame {
            frame: out.frame,
            retrieval,
            face_sq_sum: face.0,
            face_pixels: face.1,
            mouth_sq_sum: mouth.0,
            mouth_pixels: mouth.1,
        })
    }
}

fn rms(sq: f64, pixels: usize) -> f64 {
    (sq / (3 * pixels.max(1)) as f64).sqrt()
}

pub fn cmd_reenact(ctx: &Context) -> Result<ReenactSummary> {
    let source_calib = ctx.calibration(Role::Source)?;
    let target_calib = ctx.calibration(Role::Target)?;
    let db = ctx.mouth_db()?;
    let source_track = ctx.track(Role::Source)?;
    let target_track = ctx.track(Role::Target)?;
    let mut reenactor = Reenactor::new(&ctx.prior, &db, &source_calib, &target_calib)?;
    create_dir(&ctx.cfg.paths.out)?;
    let xfer = ctx.out(TRANSFER_FILE);
    let file = std::fs::File::create(&xfer).map_err(|e| Error::io(&xfer, e))?;
    reenactor.transfer().write_to(std::io::BufWriter::new(file))?;

    let source_seq = ctx.sequence(Role::Source);
    let target_seq = ctx.sequence(Role::Target);
    let n = source_track.len().min(target_track.len());
    let out_dir = SequenceDir::new(ctx.out(REENACT_DIR));
    create_dir(&out_dir.root)?;
    let db_frames = ctx.cfg.reenact.db_frames;
    let split = db_frames.unwrap_or(n);
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    let mut sums = [(0.0, 0usize); 2];
    let mut mouth = (0.0, 0usize);
    for i in 0..n {
        let source_frame = source_seq.read_frame(i)?;
        let target_frame = target_seq.read_frame(i)?;
        let r = reenactor.frame(&source_frame, &source_track[i], &target_frame, &target_track[i])?;
        out_dir.write_frame(i, &r.frame)?;
        let half = (i >= split) as usize;
        sums[half].0 += r.face_sq_sum;
        sums[half].1 += r.face_pixels;
        mouth = (mouth.0 + r.mouth_sq_sum, mouth.1 + r.mouth_pixels);
        let _ = writeln!(
            csv,
            "{i},{},{},{},{:e},{},{:e}",
            r.retrieval.target,
            r.retrieval.inbetween,
            r.face_pixels,
            rms(r.face_sq_sum, r.face_pixels),
            r.mouth_pixels,
            rms(r.mouth_sq_sum, r.mouth_pixels)
        );
    }
    let metrics = ctx.out(&format!("{REENACT_DIR}/metrics.csv"));
    std::fs::write(&metrics, csv).map_err(|e| Error::io(&metrics, e))?;
    let summary = ReenactSummary {
        frames: n,
        db_frames,
        rms_face: rms(sums[0].0 + sums[1].0, sums[0].1 + sums[1].1),
        rms_db: (db_frames.is_some() && sums[0].1 > 0).then(|| rms(sums[0].0, sums[0].1)),
        rms_held_out: (db_frames.is_some() && sums[1].1 > 0).then(|| rms(sums[1].0, sums[1].1)),
        rms_mouth: rms(mouth.0, mouth.1),
    };
    write_json(&ctx.out(SUMMARY_FILE), &summary)?;
    log::info!("reenacted {n} frames, face RMS {:.4e}", summary.rms_face);
    Ok(summary)
}

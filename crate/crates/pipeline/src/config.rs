//! Run configuration. Every field has a default, unknown fields are
//! rejected, and [`RunConfig::validate`] runs before any stage. The JSON
//! layout is documented in `CONFIG.md` at the repository root.

use std::path::{Path, PathBuf};

use f2f_core::bundling::{BundleOptions, KeyframeSelection, DEFAULT_KEYFRAMES};
use f2f_core::model::PriorConfig;
use f2f_core::mouth::MouthConfig;
use f2f_core::tracking::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Sequence directory of the driving actor.
    pub source: PathBuf,
    /// Sequence directory of the actor being reenacted. May equal `source`.
    pub target: PathBuf,
    /// Directory for every artifact the stages produce.
    pub out: PathBuf,
    /// Prior container to load instead of generating one.
    pub prior: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            source: "run/source".into(),
            target: "run/target".into(),
            out: "run/out".into(),
            prior: None,
        }
    }
}

/// Dimensions of the generated prior; its seed comes from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSettings {
    pub n_subdiv: usize,
    pub d_id: usize,
    pub d_alb: usize,
    pub d_exp: usize,
}

impl Default for PriorSettings {
    fn default() -> Self {
        let d = PriorConfig::desk(0);
        Self {
            n_subdiv: d.n_subdiv,
            d_id: d.d_id,
            d_alb: d.d_alb,
            d_exp: d.d_exp,
        }
    }
}

impl PriorSettings {
    pub fn prior_config(&self, seed: u64) -> PriorConfig {
        PriorConfig {
            n_subdiv: self.n_subdiv,
            d_id: self.d_id,
            d_alb: self.d_alb,
            d_exp: self.d_exp,
            seed,
        }
    }
}

/// Synthetic sequence generation. Steps are per-frame random-walk
/// increments; bounds clamp the walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Landmark noise standard deviation in pixels.
    pub landmark_noise: f64,
    /// Expression step and bound in units of σ_exp.
    pub expression_step: f64,
    pub expression_bound: f64,
    /// Head rotation step and bound, radians per axis.
    pub rotation_step: f64,
    pub rotation_bound: f64,
    /// Head translation step and bound, model units per axis.
    pub translation_step: f64,
    pub translation_bound: f64,
    /// Step and bound of the non-ambient SH coefficients.
    pub light_step: f64,
    pub light_bound: f64,
    /// Paint an expression-dependent mouth interior the model cannot render.
    pub mouth_interior: bool,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            frames: 60,
            width: 64,
            height: 64,
            landmark_noise: 0.5,
            expression_step: 0.2,
            expression_bound: 2.5,
            rotation_step: 0.004,
            rotation_bound: 0.12,
            translation_step: 0.002,
            translation_bound: 0.04,
            light_step: 0.004,
            light_bound: 0.06,
            mouth_interior: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub keyframes: usize,
    pub selection: KeyframeSelection,
    pub bundle: BundleOptions,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            keyframes: DEFAULT_KEYFRAMES,
            selection: KeyframeSelection::default(),
            bundle: BundleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReenactSettings {
    /// Leading target frames that enter the mouth database; later frames
    /// are held out. All frames when unset.
    pub db_frames: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Process only the first this many frames of each sequence.
    pub frames: Option<usize>,
    pub paths: Paths,
    pub prior: PriorSettings,
    pub synth: SynthSettings,
    pub calibration: CalibrationSettings,
    pub tracking: TrackerConfig,
    pub mouth: MouthConfig,
    pub reenact: ReenactSettings,
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

impl RunConfig {
    /// Parses and validates a JSON configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        check(s.frames >= 1, "synth.frames must be >= 1")?;
        check(s.width >= 16 && s.height >= 16, "synth.width and synth.height must be >= 16")?;
        for (name, v) in [
            ("landmark_noise", s.landmark_noise),
            ("expression_step", s.expression_step),
            ("rotation_step", s.rotation_step),
            ("translation_step", s.translation_step),
            ("light_step", s.light_step),
        ] {
            check(v.is_finite() && v >= 0.0, &format!("synth.{name} must be finite and nonnegative"))?;
        }
        for (name, v) in [
            ("expression_bound", s.expression_bound),
            ("rotation_bound", s.rotation_bound),
            ("translation_bound", s.translation_bound),
            ("light_bound", s.light_bound),
        ] {
            check(v.is_finite() && v > 0.0, &format!("synth.{name} must be positive"))?;
        }
        check(s.expression_bound <= 2.5, "synth.expression_bound must be <= 2.5")?;
        let p = &self.prior;
        check(p.d_id >= 1 && p.d_alb >= 1 && p.d_exp >= 1, "prior dimensions must be >= 1")?;
        check(p.n_subdiv >= 8, "prior.n_subdiv must be >= 8")?;
        check(self.calibration.keyframes >= 1, "calibration.keyframes must be >= 1")?;
        self.calibration.bundle.schedule.validate()?;
        self.calibration.bundle.weights.validate()?;
        self.tracking.validate()?;
        self.mouth.validate()?;
        if let Some(n) = self.frames {
            check(n >= 1, "frames must be >= 1")?;
        }
        if let Some(n) = self.reenact.db_frames {
            check(n >= 1, "reenact.db_frames must be >= 1")?;
        }
        Ok(())
    }

    /// Applies command-line overrides and validates again.
    pub fn with_overrides(mut self, seed: Option<u64>, frames: Option<usize>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(f) = frames {
            self.synth.frames = f;
            self.frames = Some(f);
        }
        if let Some(o) = out {
            self.paths.out = o;
        }
        self.validate()?;
        Ok(self)
    }

    /// Source and target name the same sequence.
    pub fn is_self_reenactment(&self) -> bool {
        self.paths.source == self.paths.target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"synth": {"frame": 3}}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"synth": {"frames": 3}}"#).unwrap();
        assert_eq!(partial.synth.frames, 3);
        assert_eq!(partial.synth.width, 64);
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        cfg.synth.expression_bound = 3.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.mouth.clusters = 0;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let cfg = RunConfig::default().with_overrides(Some(9), Some(0), None);
        assert!(cfg.is_err());
    }
}

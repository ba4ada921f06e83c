//! IRLS / Gauss-Newton with a Jacobi-preconditioned conjugate gradient inner
//! solver, and the coarse-to-fine driver for single-frame problems.
//!
//! Each Gauss-Newton step rasterizes the current estimate, refreshes the IRLS
//! weights from the current residuals, and solves `JᵀJ·Δ = −JᵀF` with a fixed
//! number of PCG iterations started from zero. `JᵀJ` is never formed; its
//! action is computed as `Jᵀ(J·x)`.

mod dense;
mod pcg;
mod schedule;

use std::io::Write;

pub use dense::DenseJacobian;
pub use pcg::{gauss_newton_step, pcg_solve, DenseSystem, NormalEquations, PcgOptions, PcgResult, PRECOND_FLOOR};
pub use schedule::{LevelSchedule, SolveSchedule, FINEST_LEVEL};

use serde::{Deserialize, Serialize};

use crate::energy::{
    EnergyReport, EnergyWeights, FrameTarget, LandmarkObservation, Linearization, LinearizeOptions, ParamBlock,
    ParamLayout, SceneParams, DEFAULT_IRLS_EPSILON,
};
use crate::imaging::Frame;
use crate::model::FacePrior;
use crate::{Error, Result};

/// Maximum number of halvings when step control is enabled.
const MAX_HALVINGS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub weights: EnergyWeights,
    /// Active blocks, in layout order.
    pub blocks: Vec<ParamBlock>,
    pub reg_blocks: Vec<ParamBlock>,
    pub irls_epsilon: f64,
    /// Halve steps that increase the energy. Off by default: plain GN.
    pub step_halving: bool,
    pub pcg_early_exit: Option<f64>,
    /// Intrinsics stay fixed at this schedule level and finer.
    pub freeze_intrinsics_at: Option<usize>,
}

impl SolveOptions {
    pub fn new(blocks: &[ParamBlock]) -> Self {
        Self {
            weights: EnergyWeights::default(),
            blocks: blocks.to_vec(),
            reg_blocks: vec![ParamBlock::Alpha, ParamBlock::Beta, ParamBlock::Delta],
            irls_epsilon: DEFAULT_IRLS_EPSILON,
            step_halving: false,
            pcg_early_exit: None,
            freeze_intrinsics_at: None,
        }
    }

    /// Expression, pose and illumination with identity fixed.
    pub fn tracking() -> Self {
        use ParamBlock::*;
        Self::new(&[Delta, Rotation, Translation, Gamma])
    }

    pub fn pose_only() -> Self {
        use ParamBlock::*;
        Self::new(&[Rotation, Translation])
    }

    fn layout_for(&self, prior: &FacePrior, level: usize) -> Result<ParamLayout> {
        let blocks: Vec<ParamBlock> = self
            .blocks
            .iter()
            .copied()
            .filter(|b| {
                !(*b == ParamBlock::Intrinsics && self.freeze_intrinsics_at.is_some_and(|l| level >= l))
            })
            .collect();
        ParamLayout::new(prior, &blocks)
    }

    fn linearize_options(&self) -> LinearizeOptions {
        LinearizeOptions {
            reg_blocks: self.reg_blocks.clone(),
            irls_epsilon: self.irls_epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Step within the level; 0 is the state on entering the level.
    pub iteration: usize,
    pub level: usize,
    pub energy: EnergyReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub trace: Vec<TraceEntry>,
    /// Euclidean norm of each applied update.
    pub update_norms: Vec<f64>,
}

impl SolveReport {
    pub fn initial_energy(&self) -> Option<EnergyReport> {
        self.trace.first().map(|t| t.energy)
    }

    pub fn final_energy(&self) -> Option<EnergyReport> {
        self.trace.last().map(|t| t.energy)
    }

    pub fn extend(&mut self, other: SolveReport) {
        self.trace.extend(other.trace);
        self.update_norms.extend(other.update_norms);
    }
}

pub const TRACE_CSV_HEADER: &str = "iteration,level,E_total,E_col,E_lan,E_reg,visible";

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceEntry]) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for t in trace {
        let e = &t.energy;
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{}",
            t.iteration, t.level, e.total, e.col, e.lan, e.reg, e.visible
        )?;
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coarse-to-fine IRLS / Gauss-Newton on one frame. `pyramid` is
/// finest-first with at least [`FINEST_LEVEL`] levels; landmarks are in
/// full-resolution pixels.
pub fn solve_single_frame(
    prior: &FacePrior,
    initial: &SceneParams,
    pyramid: &[Frame],
    landmarks: &[LandmarkObservation],
    schedule: &SolveSchedule,
    options: &SolveOptions,
) -> Result<(SceneParams, SolveReport)> {
    schedule.validate()?;
    options.weights.validate()?;
    let mut params = initial.clone();
    let mut report = SolveReport::default();
    let lin_opts = options.linearize_options();
    for level in &schedule.levels {
        let frame = pyramid.get(level.pyramid_index()).ok_or(Error::InvalidConfig(format!(
            "pyramid has {} levels, schedule needs level {}",
            pyramid.len(),
            level.level
        )))?;
        let target = FrameTarget {
            frame,
            landmarks,
            scale: level.scale(),
        };
        let layout = options.layout_for(prior, level.level)?;
        let pcg = PcgOptions {
            iterations: level.pcg_iterations,
            early_exit: options.pcg_early_exit,
        };
        let mut lin = Linearization::new(prior, &params, target, &options.weights, &layout, &lin_opts)?;
        report.trace.push(TraceEntry {
            iteration: 0,
            level: level.level,
            energy: lin.energy(),
        });
        for it in 1..=level.gn_iterations {
            let system = DenseSystem {
                jacobian: lin.jacobian(),
                residual: lin.residuals(),
            };
            let mut dx = gauss_newton_step(&system, &pcg)?.x;
            let mut next_params = params.clone();
            next_params.apply_update(&layout, &dx);
            let mut next = Linearization::new(prior, &next_params, target, &options.weights, &layout, &lin_opts)?;
            if options.step_halving {
                let mut halvings = 0;
                while next.energy().total > lin.energy().total && halvings < MAX_HALVINGS {
                    dx.iter_mut().for_each(|v| *v *= 0.5);
                    next_params = params.clone();
                    next_params.apply_update(&layout, &dx);
                    next = Linearization::new(prior, &next_params, target, &options.weights, &layout, &lin_opts)?;
                    halvings += 1;
                }
            }
            report.update_norms.push(norm(&dx));
            report.trace.push(TraceEntry {
                iteration: it,
                level: level.level,
                energy: next.energy(),
            });
            params = next_params;
            lin = next;
        }
    }
    if options.blocks.contains(&ParamBlock::Gamma) {
        params.gamma.project_nonnegative_ambient();
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests;

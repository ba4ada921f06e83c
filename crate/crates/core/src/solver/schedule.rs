use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of pyramid levels; schedule level `FINEST_LEVEL` is full
/// resolution and each level below it halves the resolution.
pub const FINEST_LEVEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSchedule {
    pub level: usize,
    pub gn_iterations: usize,
    pub pcg_iterations: usize,
}

impl LevelSchedule {
    pub const fn new(level: usize, gn_iterations: usize, pcg_iterations: usize) -> Self {
        Self {
            level,
            gn_iterations,
            pcg_iterations,
        }
    }

    /// Index into a finest-first pyramid.
    pub fn pyramid_index(&self) -> usize {
        FINEST_LEVEL - self.level
    }

    /// Downsample factor relative to full resolution.
    pub fn scale(&self) -> f64 {
        (1u32 << self.pyramid_index()) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolveSchedule {
    pub levels: Vec<LevelSchedule>,
}

impl SolveSchedule {
    pub fn tracking() -> Self {
        Self {
            levels: vec![LevelSchedule::new(2, 1, 4), LevelSchedule::new(3, 7, 4)],
        }
    }

    pub fn bundling() -> Self {
        Self {
            levels: vec![
                LevelSchedule::new(1, 25, 4),
                LevelSchedule::new(2, 5, 4),
                LevelSchedule::new(3, 1, 4),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("schedule has no levels".into()));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !(1..=FINEST_LEVEL).contains(&l.level) {
                return Err(Error::InvalidConfig(format!(
                    "schedule level {} outside 1..={FINEST_LEVEL}",
                    l.level
                )));
            }
            if l.gn_iterations == 0 || l.pcg_iterations == 0 {
                return Err(Error::InvalidConfig("schedule iteration counts must be at least 1".into()));
            }
            if i > 0 && l.level <= self.levels[i - 1].level {
                return Err(Error::InvalidConfig("schedule levels must ascend in resolution".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        SolveSchedule::tracking().validate().unwrap();
        SolveSchedule::bundling().validate().unwrap();
        assert_eq!(SolveSchedule::bundling().levels[0].scale(), 4.0);
        assert_eq!(SolveSchedule::tracking().levels[1].scale(), 1.0);
    }

    #[test]
    fn rejects_bad_schedules() {
        let bad = [
            vec![],
            vec![LevelSchedule::new(3, 1, 4), LevelSchedule::new(2, 1, 4)],
            vec![LevelSchedule::new(4, 1, 4)],
            vec![LevelSchedule::new(2, 0, 4)],
        ];
        for levels in bad {
            assert!(SolveSchedule { levels }.validate().is_err());
        }
    }
}

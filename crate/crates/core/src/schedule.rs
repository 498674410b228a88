//! Learning-rate schedules.
//!
//! Stage 1 is epoch-based: linear warmup from 0 over `warmup_epochs`, then
//! the base rate multiplied by `factor` once per milestone reached. Steps are
//! iterations; `steps_per_epoch` converts. Stage 2 warms up linearly over
//! `warmup_steps` iterations and then holds `max_lr`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Schedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub milestones: Vec<usize>,
    pub factor: f64,
    pub epochs: usize,
}

impl Default for Stage1Schedule {
    fn default() -> Self {
        Self::full()
    }
}

impl Stage1Schedule {
    pub fn full() -> Self {
        Self {
            base_lr: 0.1,
            warmup_epochs: 10,
            milestones: vec![60, 100],
            factor: 0.1,
            epochs: 120,
        }
    }

    /// Learning rate at iteration `step` with `steps_per_epoch` iterations
    /// per epoch.
    pub fn lr_at(&self, step: u64, steps_per_epoch: u64) -> f64 {
        let spe = steps_per_epoch.max(1);
        let warm = self.warmup_epochs as u64 * spe;
        if step < warm {
            return self.base_lr * step as f64 / warm as f64;
        }
        let epoch = step / spe;
        let passed = self.milestones.iter().filter(|&&m| epoch >= m as u64).count();
        self.base_lr * self.factor.powi(passed as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) || !(self.factor > 0.0 && self.factor <= 1.0) {
            return Err(TrainError::Config(format!(
                "stage-1 schedule: base_lr {} / factor {}",
                self.base_lr, self.factor
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::Config("stage-1 milestones must increase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Schedule {
    pub max_lr: f64,
    pub warmup_steps: u64,
    pub epochs: usize,
}

impl Default for Stage2Schedule {
    fn default() -> Self {
        Self::full()
    }
}

impl Stage2Schedule {
    pub fn full() -> Self {
        Self {
            max_lr: 2e-5,
            warmup_steps: 2000,
            epochs: 5,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            self.max_lr * step as f64 / self.warmup_steps as f64
        } else {
            self.max_lr
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr >= 0.0 && self.max_lr.is_finite()) {
            return Err(TrainError::Config(format!("stage-2 max_lr {}", self.max_lr)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_values() {
        let s = Stage1Schedule::full();
        assert!((s.lr_at(5, 1) - 0.05).abs() < 1e-15);
        assert_eq!(s.lr_at(0, 1), 0.0);
        assert!((s.lr_at(61, 1) - 0.01).abs() < 1e-15);
        assert!((s.lr_at(101, 1) - 0.001).abs() < 1e-15);
        let t = Stage2Schedule::full();
        assert_eq!(t.lr_at(0), 0.0);
        assert_eq!(t.lr_at(1000), 1e-5);
        assert_eq!(t.lr_at(2000), 2e-5);
        assert_eq!(t.lr_at(90_000), 2e-5);
    }
}

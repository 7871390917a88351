//! Cluster-count controller.
//!
//! After every round the aggregated score is appended to the history. Once
//! `window + patience` scores exist, the moving average of the last `window`
//! scores is compared with the best of the previous `patience` moving averages.
//! If it has not improved by more than `tolerance`, the cluster count grows by
//! one, up to `c_max`. The count never decreases.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    clusters: usize,
    c_min: usize,
    c_max: usize,
    window: usize,
    patience: usize,
    tolerance: f64,
    history: Vec<f64>,
}

impl ControllerState {
    pub fn new(
        c_min: usize,
        c_max: usize,
        window: usize,
        patience: usize,
        tolerance: f64,
    ) -> Result<Self> {
        if c_min == 0 || c_min > c_max {
            return Err(Error::InvalidInput(format!(
                "cluster bounds must satisfy 1 <= c_min <= c_max, got c_min={c_min} c_max={c_max}"
            )));
        }
        if window == 0 || patience == 0 {
            return Err(Error::InvalidInput(
                "window and patience must be positive".into(),
            ));
        }
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid tolerance {tolerance}"
            )));
        }
        Ok(Self {
            clusters: c_min,
            c_min,
            c_max,
            window,
            patience,
            tolerance,
            history: Vec::new(),
        })
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.c_min, self.c_max)
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Mean of the `window` scores ending at `end` (inclusive).
    fn moving_average(&self, end: usize) -> f64 {
        let s = &self.history[end + 1 - self.window..=end];
        s.iter().sum::<f64>() / self.window as f64
    }

    /// Records a round score and returns the cluster count for the next round.
    pub fn update(&mut self, score: f64) -> usize {
        self.history.push(score);
        let h = self.history.len();
        if h < self.window + self.patience {
            return self.clusters;
        }
        let current = self.moving_average(h - 1);
        let best_prev = (1..=self.patience)
            .map(|j| self.moving_average(h - 1 - j))
            .fold(f64::NEG_INFINITY, f64::max);
        if current <= best_prev + self.tolerance {
            self.clusters = (self.clusters + 1).min(self.c_max);
        }
        self.clusters
    }
}

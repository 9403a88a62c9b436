//! Plateau learning-rate schedule with early stopping.

/// Decision taken after observing one validation value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStep {
    pub improved: bool,
    pub lr_dropped: bool,
    pub stop: bool,
    pub learning_rate: f64,
}

/// Divides the learning rate by `1/factor` after `lr_patience` epochs without
/// improvement (or since the previous drop) and stops after `stop_patience`
/// epochs without improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr_patience: usize,
    stop_patience: usize,
    factor: f64,
    learning_rate: f64,
    best: Option<f64>,
    since_improvement: usize,
    since_event: usize,
}

impl PlateauScheduler {
    pub fn new(learning_rate: f64, lr_patience: usize, stop_patience: usize, factor: f64) -> Self {
        Self {
            lr_patience,
            stop_patience,
            factor,
            learning_rate,
            best: None,
            since_improvement: 0,
            since_event: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Feeds one epoch's validation value (lower is better).
    pub fn observe(&mut self, value: f64) -> ScheduleStep {
        let improved = value.is_finite() && self.best.is_none_or(|b| value < b);
        let mut lr_dropped = false;
        if improved {
            self.best = Some(value);
            self.since_improvement = 0;
            self.since_event = 0;
        } else {
            self.since_improvement += 1;
            self.since_event += 1;
            if self.since_event >= self.lr_patience {
                self.learning_rate *= self.factor;
                self.since_event = 0;
                lr_dropped = true;
            }
        }
        ScheduleStep {
            improved,
            lr_dropped,
            stop: self.since_improvement >= self.stop_patience,
            learning_rate: self.learning_rate,
        }
    }
}

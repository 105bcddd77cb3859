//! Per-iteration training rows and per-policy evaluation summaries.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRow {
    pub iteration: usize,
    pub reward: f64,
    /// Trailing mean over the last `window` rewards (fewer at the start).
    pub avg_reward: f64,
    /// `None` before the first gradient step.
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub served: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub policy: String,
    pub mean_reward: f64,
    pub mean_reward_per_mu: f64,
    pub served_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLog {
    pub window: usize,
    pub rows: Vec<TrainingRow>,
    pub evaluations: Vec<EvalSummary>,
}

impl MetricsLog {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            rows: Vec::new(),
            evaluations: Vec::new(),
        }
    }

    pub fn push(&mut self, iteration: usize, reward: f64, loss: Option<f64>, epsilon: f64, served: usize) {
        let from = (self.rows.len() + 1).saturating_sub(self.window);
        let tail = self.rows[from..].iter().map(|r| r.reward);
        let n = self.rows.len() + 1 - from;
        let avg_reward = (tail.sum::<f64>() + reward) / n as f64;
        self.rows.push(TrainingRow {
            iteration,
            reward,
            avg_reward,
            loss,
            epsilon,
            served,
        });
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_uses_trailing_window() {
        let mut log = MetricsLog::new(2);
        for (i, r) in [1.0, 3.0, 5.0].into_iter().enumerate() {
            log.push(i, r, None, 1.0, 0);
        }
        let avg: Vec<f64> = log.rows.iter().map(|r| r.avg_reward).collect();
        assert_eq!(avg, vec![1.0, 2.0, 4.0]);
    }
}

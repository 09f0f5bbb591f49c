use serde::{Deserialize, Serialize};

/// One Robbins-Monro step on the log proposal scale:
/// `log s + t^{-0.6} (α̂ - α*)`.
pub fn adapt_burnin(log_scale: f64, batch_acceptance: f64, target_acceptance: f64, batch_index: usize) -> f64 {
    let gain = (batch_index.max(1) as f64).powf(-0.6);
    log_scale + gain * (batch_acceptance - target_acceptance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationBatch {
    pub batch: usize,
    pub acceptance: f64,
    pub log_scale: f64,
}

/// Batches acceptance flags during burn-in and adapts the scale at the end
/// of every full batch.
#[derive(Debug, Clone)]
pub struct ScaleAdapter {
    log_scale: f64,
    target: f64,
    batch_size: usize,
    accepted: usize,
    seen: usize,
    history: Vec<AdaptationBatch>,
}

impl ScaleAdapter {
    pub fn new(initial_scale: f64, target: f64, batch_size: usize) -> Self {
        Self {
            log_scale: initial_scale.ln(),
            target,
            batch_size: batch_size.max(1),
            accepted: 0,
            seen: 0,
            history: Vec::new(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn record(&mut self, accepted: bool) {
        self.seen += 1;
        self.accepted += usize::from(accepted);
        if self.seen == self.batch_size {
            let rate = self.accepted as f64 / self.seen as f64;
            let batch = self.history.len() + 1;
            self.log_scale = adapt_burnin(self.log_scale, rate, self.target, batch);
            self.history.push(AdaptationBatch {
                batch,
                acceptance: rate,
                log_scale: self.log_scale,
            });
            self.accepted = 0;
            self.seen = 0;
        }
    }

    pub fn history(&self) -> &[AdaptationBatch] {
        &self.history
    }
}

//! Learning-rate range probing: try each candidate on a throwaway copy of
//! the model for a fixed budget and keep the one that lowers the loss most.

use crate::error::{Error, Result};

/// A model plus data that can be copied and trained in isolation.
pub trait ProbeTarget: Sized {
    /// An independent copy; training it must not affect `self`.
    fn fork(&self) -> Result<Self>;
    /// Current loss on the probe data.
    fn loss(&mut self) -> Result<f64>;
    /// One optimisation step at learning rate `lr`.
    fn step(&mut self, lr: f64) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub lr: f64,
    /// `(lr, loss decrease)` per candidate; `None` when it diverged.
    pub decreases: Vec<(f64, Option<f64>)>,
}

pub const DEFAULT_PROBE_BUDGET: usize = 200;

/// Returns the candidate with the largest loss decrease after `budget`
/// steps. Ties go to the smaller learning rate. `target` is only forked.
pub fn lr_range_probe<T: ProbeTarget>(target: &T, lr_grid: &[f64], budget: usize) -> Result<ProbeResult> {
    if lr_grid.is_empty() {
        return Err(Error::Scheduling("learning-rate grid is empty".into()));
    }
    if lr_grid.windows(2).any(|w| !(w[0] < w[1])) || lr_grid.iter().any(|&lr| !(lr > 0.0)) {
        return Err(Error::Scheduling(
            "learning-rate grid must be positive and strictly ascending".into(),
        ));
    }
    let mut decreases = Vec::with_capacity(lr_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lr in lr_grid {
        let outcome = run_candidate(target, lr, budget)?;
        if let Some(d) = outcome {
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((lr, d));
            }
        }
        decreases.push((lr, outcome));
    }
    match best {
        Some((lr, _)) => Ok(ProbeResult { lr, decreases }),
        None => Err(Error::Scheduling(format!(
            "every candidate learning rate diverged (largest {}); try a grid of smaller values",
            lr_grid[lr_grid.len() - 1]
        ))),
    }
}

fn run_candidate<T: ProbeTarget>(target: &T, lr: f64, budget: usize) -> Result<Option<f64>> {
    let mut model = target.fork()?;
    let start = model.loss()?;
    if !start.is_finite() {
        return Ok(None);
    }
    for _ in 0..budget {
        model.step(lr)?;
    }
    let end = model.loss()?;
    Ok(end.is_finite().then_some(start - end))
}

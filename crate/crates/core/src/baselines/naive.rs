use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param, Error, Result};

/// Repeat the last observed value.
pub fn naive_last(history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = history.last().ok_or_else(|| Error::Input("empty history".into()))?;
    Ok(vec![*last; horizon])
}

/// Repeat the final `period` samples of the history.
pub fn seasonal_naive(history: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(param("period", "must be positive"));
    }
    if history.len() < period {
        return Err(Error::Input(alloc::format!(
            "history of {} samples is shorter than the period {period}",
            history.len()
        )));
    }
    let season = &history[history.len() - period..];
    Ok((0..horizon).map(|t| season[t % period]).collect())
}

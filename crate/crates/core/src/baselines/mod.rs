//! Classical reference forecasters.

mod arima;
mod naive;
mod optimize;

pub use arima::{arima_fit, arima_forecast, ArimaForecast, ArimaModel, MIN_TRAIN_LEN};
pub use naive::{naive_last, seasonal_naive};
pub use optimize::{nelder_mead, Minimum};

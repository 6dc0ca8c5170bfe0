//! Latency and monetary cost models for local and cloud backends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Average power draw of the local device, in watts.
pub const LOCAL_POWER_WATTS: f64 = 600.0;
/// Electricity price per joule.
pub const ENERGY_PRICE: f64 = 2.06e-8;
/// Effective device throughput used when none is configured.
pub const DEFAULT_FLOPS: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum CostModelError {
    #[error("device throughput must be positive, got {0}")]
    NonPositiveFlops(f64),
}

/// `(T_in + T_out) / FLOPS` seconds.
pub fn local_latency(t_in: f64, t_out: f64, flops: f64) -> Result<f64, CostModelError> {
    if !(flops > 0.0) {
        return Err(CostModelError::NonPositiveFlops(flops));
    }
    Ok((t_in + t_out) / flops)
}

/// Energy cost of running locally for `latency` seconds.
pub fn local_cost(latency: f64) -> f64 {
    local_cost_with(latency, LOCAL_POWER_WATTS, ENERGY_PRICE)
}

pub fn local_cost_with(latency: f64, power_watts: f64, price_per_joule: f64) -> f64 {
    latency * power_watts * price_per_joule
}

/// Per-unit provider charges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudRates {
    pub input: f64,
    pub output: f64,
    pub image: f64,
}

pub fn cloud_cost(tok_in: f64, tok_out: f64, images: f64, rates: &CloudRates) -> f64 {
    tok_in * rates.input + tok_out * rates.output + images * rates.image
}

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillationSettings {
    /// Measurement noise standard deviation.
    pub noise_sd: f64,
    /// Upper end of the measurement-time domain.
    pub t_max: f64,
}

impl Default for OscillationSettings {
    fn default() -> Self {
        Self { noise_sd: 0.1, t_max: 2.0 * std::f64::consts::PI }
    }
}

/// y ~ Normal(sin(omega * t), noise_sd²)
pub fn simulate_oscillation(omega: f64, t: f64, settings: &OscillationSettings, rng: &mut Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (omega * t).sin() + settings.noise_sd * z
}

pub fn oscillation_log_likelihood(y: f64, omega: f64, t: f64, noise_sd: f64) -> f64 {
    let r = (y - (omega * t).sin()) / noise_sd;
    -0.5 * r * r - noise_sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

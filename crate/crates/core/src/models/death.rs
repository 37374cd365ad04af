use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::step_count;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeathSettings {
    pub population: u32,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for DeathSettings {
    fn default() -> Self {
        Self { population: 50, dt: 0.01, t_max: 4.0 }
    }
}

/// Infected count I(tau) of the discretised death process.
///
/// Starting from I(0) = 0, each step moves Bin(N - I, 1 - exp(-b dt))
/// susceptibles into the infected state.
pub fn simulate_death(b: f64, tau: f64, settings: &DeathSettings, rng: &mut Rng) -> u32 {
    let p = -(-b * settings.dt).exp_m1();
    let n = settings.population;
    let mut infected = 0u32;
    for _ in 0..step_count(tau, settings.dt) {
        let susceptible = n - infected;
        if susceptible == 0 {
            break;
        }
        infected += binomial(susceptible, p, rng);
    }
    infected
}

pub(crate) fn binomial(n: u32, p: f64, rng: &mut Rng) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(u64::from(n), p).expect("probability in (0, 1)").sample(rng) as u32
}

/// ln C(n, k) via summed logarithms; n is a small population count.
fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|j| f64::from(n - j).ln() - f64::from(j + 1).ln()).sum()
}

/// Exact log-likelihood of observing `infected` at time `tau`: the
/// susceptible count is Bin(N, exp(-b tau)).
pub fn death_log_likelihood(infected: u32, b: f64, tau: f64, population: u32) -> f64 {
    if infected > population {
        return f64::NEG_INFINITY;
    }
    let s = population - infected;
    let log_survive = -b * tau;
    let log_infect = if tau <= 0.0 || b <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (-log_survive.exp_m1()).ln()
    };
    let mut ll = ln_choose(population, s);
    if s > 0 {
        ll += f64::from(s) * log_survive;
    }
    if infected > 0 {
        ll += f64::from(infected) * log_infect;
    }
    ll
}

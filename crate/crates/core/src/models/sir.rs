use serde::{Deserialize, Serialize};

use super::death::binomial;
use super::step_count;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirSettings {
    pub population: u32,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for SirSettings {
    fn default() -> Self {
        Self { population: 50, dt: 0.01, t_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SirState {
    pub s: u32,
    pub i: u32,
    pub r: u32,
}

/// Population state at time `tau`, starting from (N - 1, 1, 0).
///
/// Per step, both transitions are drawn from the state at the start of the
/// step: ΔI ~ Bin(S, beta I / N), ΔR ~ Bin(I, gamma).
pub fn simulate_sir(beta: f64, gamma: f64, tau: f64, settings: &SirSettings, rng: &mut Rng) -> SirState {
    let n = settings.population;
    let mut st = SirState { s: n - 1, i: 1, r: 0 };
    for _ in 0..step_count(tau, settings.dt) {
        // no infected: absorbing
        if st.i == 0 {
            break;
        }
        let p_inf = (beta * f64::from(st.i) / f64::from(n)).clamp(0.0, 1.0);
        let new_inf = binomial(st.s, p_inf, rng);
        let new_rec = binomial(st.i, gamma.clamp(0.0, 1.0), rng);
        st.s -= new_inf;
        st.i = st.i + new_inf - new_rec;
        st.r += new_rec;
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedNode;
    use proptest::prelude::*;

    #[test]
    fn initial_condition_at_zero() {
        let s = SirSettings::default();
        let mut rng = SeedNode::new(1).rng();
        assert_eq!(simulate_sir(0.3, 0.2, 0.0, &s, &mut rng), SirState { s: 49, i: 1, r: 0 });
    }

    #[test]
    fn no_recovery_without_gamma() {
        let s = SirSettings::default();
        let mut rng = SeedNode::new(2).rng();
        for tau in [0.5, 2.0, 10.0] {
            for _ in 0..50 {
                assert_eq!(simulate_sir(0.15, 0.0, tau, &s, &mut rng).r, 0);
            }
        }
    }

    #[test]
    fn epidemic_dies_out_within_domain() {
        let s = SirSettings::default();
        let mut rng = SeedNode::new(3).rng();
        let alive = (0..200).filter(|_| simulate_sir(0.15, 0.05, 10.0, &s, &mut rng).i > 0).count();
        assert_eq!(alive, 0);
    }

    proptest! {
        #[test]
        fn population_is_conserved(beta in 0.0..0.5f64, gamma in 0.0..0.5f64, tau in 0.0..10.0f64, seed in any::<u64>()) {
            let s = SirSettings::default();
            let st = simulate_sir(beta, gamma, tau, &s, &mut SeedNode::new(seed).rng());
            prop_assert_eq!(st.s + st.i + st.r, 50);
        }
    }
}

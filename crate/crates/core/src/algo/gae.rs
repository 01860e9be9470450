use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::reward::Termination;

/// How a transition ended, as far as bootstrapping is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Done {
    #[default]
    Continue,
    /// Fell or joint limit: no value beyond this step.
    Terminal,
    /// Time limit: bootstraps from the value of the final state.
    Truncated,
}

impl From<Termination> for Done {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Running => Done::Continue,
            Termination::TimeLimit => Done::Truncated,
            Termination::Fell | Termination::JointLimit => Done::Terminal,
        }
    }
}

impl Done {
    pub fn is_done(self) -> bool {
        self != Done::Continue
    }

    /// Multiplier on the successor value.
    pub fn bootstrap_mask(self) -> f64 {
        if self == Done::Terminal {
            0.0
        } else {
            1.0
        }
    }
}

/// Generalized advantage estimation over one environment's consecutive
/// transitions. `next_values[t]` is the value of the state reached by
/// transition `t` (before any reset). Returns `(advantages, value targets)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[Done],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    check_len("gae values", n, values.len())?;
    check_len("gae next values", n, next_values.len())?;
    check_len("gae dones", n, dones.len())?;
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * dones[t].bootstrap_mask() * next_values[t] - values[t];
        let carry = if dones[t].is_done() { 0.0 } else { running };
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts to zero mean and scales to unit (population) variance. A constant
/// batch is only centered.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-12 {
            *a /= std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `A_t = Σ_l (γλ)^l δ_{t+l}` truncated at the first done.
    fn brute_force(r: &[f64], v: &[f64], nv: &[f64], d: &[Done], g: f64, l: f64) -> Vec<f64> {
        (0..r.len())
            .map(|t| {
                let mut total = 0.0;
                let mut w = 1.0;
                for k in t..r.len() {
                    total += w * (r[k] + g * d[k].bootstrap_mask() * nv[k] - v[k]);
                    if d[k].is_done() {
                        break;
                    }
                    w *= g * l;
                }
                total
            })
            .collect()
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let r = [1.0, 0.5, -0.2];
        let v = [0.3, 0.1, 0.7];
        let nv = [0.1, 0.7, 0.9];
        let d = [Done::Continue, Done::Continue, Done::Terminal];
        let (a, _) = compute_gae(&r, &v, &nv, &d, 0.9, 0.0).unwrap();
        assert_eq!(a, vec![1.0 + 0.9 * 0.1 - 0.3, 0.5 + 0.9 * 0.7 - 0.1, -0.2 - 0.7]);
    }

    #[test]
    fn gamma_zero_is_reward_minus_value() {
        let (a, ret) = compute_gae(&[1.0, 2.0], &[0.5, 0.25], &[9.0, 9.0], &[Done::Continue; 2], 0.0, 0.95).unwrap();
        assert_eq!(a, vec![0.5, 1.75]);
        assert_eq!(ret, vec![1.0, 2.0]);
    }

    #[test]
    fn three_step_hand_example() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 1.0, 1.5];
        let nv = [1.0, 1.5, 0.8];
        let d = [Done::Continue; 3];
        let (a, _) = compute_gae(&r, &v, &nv, &d, 0.9, 0.8).unwrap();
        let deltas = [1.0 + 0.9 * 1.0 - 0.5, 0.0 + 0.9 * 1.5 - 1.0, 2.0 + 0.9 * 0.8 - 1.5];
        let gl = 0.72;
        let expected = [deltas[0] + gl * deltas[1] + gl * gl * deltas[2], deltas[1] + gl * deltas[2], deltas[2]];
        for k in 0..3 {
            assert!((a[k] - expected[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_bootstraps_and_stops_propagation() {
        let r = [1.0, 1.0, 1.0];
        let v = [0.0; 3];
        let nv = [5.0, 7.0, 5.0];
        let d = [Done::Continue, Done::Truncated, Done::Continue];
        let (a, _) = compute_gae(&r, &v, &nv, &d, 0.5, 1.0).unwrap();
        assert_eq!(a[1], 1.0 + 0.5 * 7.0);
        assert_eq!(a[0], 1.0 + 0.5 * 5.0 + 0.5 * a[1]);
        let d = [Done::Continue, Done::Terminal, Done::Continue];
        let (a, _) = compute_gae(&r, &v, &nv, &d, 0.5, 1.0).unwrap();
        assert_eq!(a[1], 1.0);
    }

    #[test]
    fn termination_mapping() {
        assert_eq!(Done::from(Termination::JointLimit), Done::Terminal);
        assert_eq!(Done::from(Termination::Fell), Done::Terminal);
        assert_eq!(Done::from(Termination::TimeLimit), Done::Truncated);
        assert_eq!(Done::from(Termination::Running), Done::Continue);
    }

    #[test]
    fn constant_advantages_are_centered() {
        let mut a = vec![3.0; 4];
        normalize_advantages(&mut a);
        assert_eq!(a, vec![0.0; 4]);
        normalize_advantages(&mut []);
    }

    fn done_strategy() -> impl Strategy<Value = Done> {
        prop_oneof![Just(Done::Continue), Just(Done::Terminal), Just(Done::Truncated)]
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            data in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, done_strategy()), 1..20),
            gamma in 0.0..=1.0f64,
            lambda in 0.0..=1.0f64,
        ) {
            let r: Vec<f64> = data.iter().map(|x| x.0).collect();
            let v: Vec<f64> = data.iter().map(|x| x.1).collect();
            let nv: Vec<f64> = data.iter().map(|x| x.2).collect();
            let d: Vec<Done> = data.iter().map(|x| x.3).collect();
            let (a, ret) = compute_gae(&r, &v, &nv, &d, gamma, lambda).unwrap();
            let b = brute_force(&r, &v, &nv, &d, gamma, lambda);
            for k in 0..r.len() {
                prop_assert!((a[k] - b[k]).abs() < 1e-9);
                prop_assert!((ret[k] - a[k] - v[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn normalization_moments(mut a in proptest::collection::vec(-100.0..100.0f64, 2..200)) {
            let spread = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - a.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            normalize_advantages(&mut a);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }
    }
}

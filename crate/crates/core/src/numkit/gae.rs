use super::NumError;

/// GAE(λ) over one trajectory.
///
/// `bootstrap` is the value estimate of the state after the last step
/// (zero when the trajectory ended in a terminal state).
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), NumError> {
    if rewards.len() != values.len() {
        return Err(NumError::Shape(format!(
            "{} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_zero_values_is_reward() {
        let r = [1.0, -2.0, 0.5];
        let (a, ret) = gae_advantages(&r, &[0.0; 3], 0.0, 0.9, 0.0).unwrap();
        assert_eq!(a, r.to_vec());
        assert_eq!(ret, r.to_vec());
    }

    #[test]
    fn lambda_one_gamma_one_is_suffix_sum() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = gae_advantages(&r, &[0.0; 4], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(gae_advantages(&[1.0], &[0.0, 0.0], 0.0, 0.9, 0.9).is_err());
    }

    // Oracle: the forward-sum definition A_t = sum_l (γλ)^l δ_{t+l}.
    fn forward_sum(r: &[f64], v: &[f64], boot: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let next = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
        let deltas: Vec<f64> = (0..n).map(|t| r[t] + g * next(t) - v[t]).collect();
        (0..n)
            .map(|t| (t..n).map(|k| (g * l).powi((k - t) as i32) * deltas[k]).sum())
            .collect()
    }

    #[test]
    fn five_step_matches_forward_sum() {
        let r = [0.3, -0.1, 0.0, 0.7, 1.0];
        let v = [0.5, 0.4, 0.2, 0.6, 0.9];
        let (a, ret) = gae_advantages(&r, &v, 0.25, 0.99, 0.95).unwrap();
        let oracle = forward_sum(&r, &v, 0.25, 0.99, 0.95);
        // Frozen from an independent Python evaluation of the forward sum.
        let frozen = [
            1.3567887528987215,
            1.2342251492809373,
            1.633413236875,
            1.31782375,
            0.34750000000000003,
        ];
        for t in 0..5 {
            assert!((a[t] - oracle[t]).abs() < 1e-12);
            assert!((a[t] - frozen[t]).abs() < 1e-12, "t={t}: {}", a[t]);
            assert!((ret[t] - (a[t] + v[t])).abs() < 1e-15);
        }
    }
}

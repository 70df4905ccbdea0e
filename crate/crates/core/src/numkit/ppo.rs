use super::NumError;

/// Which piece of the dual-clip surrogate produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipRegion {
    /// `A >= 0`, ratio within the trust region.
    PositiveUnclipped,
    /// `A >= 0`, ratio above `1 + eps`.
    PositiveClipped,
    /// `A < 0`, ratio below `1 - eps`.
    NegativeClipped,
    /// `A < 0`, ratio in `[1 - eps, dual_c]`.
    NegativeUnclipped,
    /// `A < 0`, ratio above `dual_c`: the lower bound `dual_c * A` is active.
    DualClipped,
}

/// Dual-clip PPO surrogate for one sample, negated for minimisation.
///
/// Returns `(loss, d loss / d ratio, region)`. On clipped pieces the
/// gradient is exactly zero.
pub fn dual_clip_ppo_loss(
    ratio: f64,
    advantage: f64,
    clip_eps: f64,
    dual_c: f64,
) -> Result<(f64, f64, ClipRegion), NumError> {
    if !(ratio.is_finite() && advantage.is_finite() && clip_eps.is_finite() && dual_c.is_finite())
    {
        return Err(NumError::NonFinite(format!(
            "dual-clip inputs ratio={ratio} advantage={advantage} eps={clip_eps} c={dual_c}"
        )));
    }
    if !(clip_eps > 0.0 && clip_eps < 1.0) || dual_c <= 1.0 {
        return Err(NumError::Domain(format!(
            "need 0 < eps < 1 and dual_c > 1, got eps={clip_eps} c={dual_c}"
        )));
    }
    let out = if advantage >= 0.0 {
        if ratio <= 1.0 + clip_eps {
            (-ratio * advantage, -advantage, ClipRegion::PositiveUnclipped)
        } else {
            (-(1.0 + clip_eps) * advantage, 0.0, ClipRegion::PositiveClipped)
        }
    } else if ratio < 1.0 - clip_eps {
        (-(1.0 - clip_eps) * advantage, 0.0, ClipRegion::NegativeClipped)
    } else if ratio <= dual_c {
        (-ratio * advantage, -advantage, ClipRegion::NegativeUnclipped)
    } else {
        (-dual_c * advantage, 0.0, ClipRegion::DualClipped)
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_is_unclipped() {
        for a in [-2.0, -0.5, 0.0, 0.3, 4.0] {
            let (l, g, _) = dual_clip_ppo_loss(1.0, a, 0.2, 3.0).unwrap();
            assert_eq!(l, -a);
            assert_eq!(g, -a);
        }
    }

    #[test]
    fn positive_advantage_clips_high_ratio() {
        let (l, g, r) = dual_clip_ppo_loss(2.0, 1.0, 0.2, 3.0).unwrap();
        assert!((l + 1.2).abs() < 1e-12);
        assert_eq!(g, 0.0);
        assert_eq!(r, ClipRegion::PositiveClipped);
    }

    #[test]
    fn dual_clip_bounds_negative_advantage() {
        let (l, g, r) = dual_clip_ppo_loss(5.0, -1.0, 0.2, 3.0).unwrap();
        assert_eq!(l, 3.0);
        assert_eq!(g, 0.0);
        assert_eq!(r, ClipRegion::DualClipped);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(dual_clip_ppo_loss(f64::NAN, 1.0, 0.2, 3.0).is_err());
        assert!(dual_clip_ppo_loss(1.0, 1.0, 0.0, 3.0).is_err());
        assert!(dual_clip_ppo_loss(1.0, 1.0, 0.2, 1.0).is_err());
    }

    proptest::proptest! {
        // With dual_c beyond the ratio, the loss is the ordinary clipped PPO loss.
        #[test]
        fn reduces_to_clipped_ppo(ratio in 0.0f64..10.0, adv in -5.0f64..5.0, eps in 0.05f64..0.5) {
            let c = ratio + 1.0;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            let standard = -(ratio * adv).min(clipped * adv);
            let (l, _, _) = dual_clip_ppo_loss(ratio, adv, eps, c.max(1.0 + 1e-9)).unwrap();
            proptest::prop_assert!((l - standard).abs() < 1e-12);
        }
    }
}

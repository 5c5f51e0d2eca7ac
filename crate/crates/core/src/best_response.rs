//! Single-creator optimization: the sharing threshold, best quality at a fixed
//! sharing level, and the maximal unilateral deviation gain.

use serde::{Deserialize, Serialize};

use crate::equilibrium::creator_x_max;
use crate::error::{Error, Result};
use crate::model::{AllocationRule, GameInstance, Profile, Rivals, TrafficMode};
use crate::search::{maximize_on_interval, Maximum, SearchOptions};

/// Gains within this many ulps of the incumbent's gross payoff are rounding
/// noise and are reported as zero.
pub const ROUNDOFF_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub best_x: f64,
    pub best_s: f64,
    /// Utility of the best deviation minus the reference utility.
    pub gain: f64,
    /// Utility of the best deviation.
    pub utility: f64,
    pub evaluations: usize,
}

/// Ratio of `rho` above which creator `i` strictly prefers full sharing.
///
/// `profile.s[i]` is ignored. Only defined for linear GenAI quality.
pub fn sharing_threshold(instance: &GameInstance, profile: &Profile, i: usize) -> Result<f64> {
    instance.check_profile(profile)?;
    instance.check_index(i)?;
    let xi = profile.x[i];
    if xi <= 0.0 {
        return Err(Error::ZeroQuality(i));
    }
    let p = &instance.params;
    if !p.is_linear_ai() {
        return Err(Error::Unsupported("sharing threshold needs beta_ai = 1".into()));
    }
    let rivals = Rivals::of(profile, i);
    let x0 = p.prior_data;
    let tau = match p.traffic_mode {
        TrafficMode::HumanOnly => xi / (xi + rivals.total() + p.alpha * rivals.shared() + (1.0 + p.alpha) * x0),
        TrafficMode::HumanPlusAi => {
            let base = xi + rivals.total() + x0 + p.alpha * (x0 + rivals.shared());
            (((base + p.alpha * xi) / base).powf(1.0 - p.gamma) - 1.0) / p.alpha
        }
    };
    Ok(tau.clamp(0.0, 1.0))
}

/// Optimal sharing level: 1 when `rho >= tau_i`, else 0. Ties resolve to 1.
pub fn optimal_sharing(instance: &GameInstance, profile: &Profile, i: usize, rho: f64) -> Result<f64> {
    let tau = sharing_threshold(instance, profile, i)?;
    Ok(if rho >= tau { 1.0 } else { 0.0 })
}

/// Maximizes creator `i`'s utility over `x_i in [0, upper]` with `s_i` fixed,
/// holding the other entries of `profile` fixed.
#[allow(clippy::too_many_arguments)]
pub fn best_quality_given_sharing(
    instance: &GameInstance,
    profile: &Profile,
    i: usize,
    s_i: f64,
    rule: &AllocationRule,
    upper: f64,
    reference_utility: f64,
    opts: &SearchOptions,
) -> Result<DeviationResult> {
    instance.check_profile(profile)?;
    instance.check_index(i)?;
    let rivals = Rivals::of(profile, i);
    let m = maximize_on_interval(|x| rivals.utility(instance, rule, x, s_i), 0.0, upper, opts);
    Ok(to_deviation(m, s_i, reference_utility))
}

fn to_deviation(m: Maximum, s: f64, reference: f64) -> DeviationResult {
    DeviationResult {
        best_x: m.x,
        best_s: s,
        gain: m.value - reference,
        utility: m.value,
        evaluations: m.evaluations,
    }
}

/// Largest utility gain creator `i` obtains by deviating unilaterally from the
/// full-sharing profile `(x, 1)`. Only `s_i in {0, 1}` is searched; interior
/// sharing levels are dominated. The incumbent strategy is always a candidate,
/// so the gain is never negative.
pub fn deviation_gain(
    instance: &GameInstance,
    x: &[f64],
    rule: &AllocationRule,
    i: usize,
    opts: &SearchOptions,
) -> Result<DeviationResult> {
    let reference = Profile::full_sharing(x.to_vec())?;
    instance.check_profile(&reference)?;
    instance.check_index(i)?;
    let upper = creator_x_max(instance, i)?;
    let rivals = Rivals::of(&reference, i);
    let incumbent = rivals.utility(instance, rule, x[i], 1.0);

    let mut best = DeviationResult {
        best_x: x[i],
        best_s: 1.0,
        gain: 0.0,
        utility: incumbent,
        evaluations: 1,
    };
    let mut evaluations = 1;
    for s in [0.0, 1.0] {
        let m = maximize_on_interval(|z| rivals.utility(instance, rule, z, s), 0.0, upper, opts);
        evaluations += m.evaluations;
        let candidate = to_deviation(m, s, incumbent);
        if candidate.gain > best.gain {
            best = candidate;
        }
    }
    let gross = incumbent.abs() + instance.costs[i].value(x[i]).abs();
    if best.gain <= ROUNDOFF_ULPS * f64::EPSILON * gross {
        best = DeviationResult {
            best_x: x[i],
            best_s: 1.0,
            gain: 0.0,
            utility: incumbent,
            evaluations: 0,
        };
    }
    best.evaluations = evaluations;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{creator_utility, CostModel, CustomCost, ModelParams, RuleKind};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn inst(mu: f64, gamma: f64, alpha: f64, a: &[f64], theta: f64) -> GameInstance {
        GameInstance::power(ModelParams::new(mu, gamma, alpha).unwrap(), a, theta).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let g = inst(10.0, 0.8, 1.0, &[1.0, 1.0], 1.5);
        let p = Profile::new(vec![2.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(sharing_threshold(&g, &p, 0).unwrap(), 1.0);
        let p = Profile::new(vec![2.0, 2.0], vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(sharing_threshold(&g, &p, 0).unwrap(), 0.5);
        let p = Profile::new(vec![2.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(sharing_threshold(&g, &p, 0).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn threshold_undefined_at_zero_quality() {
        let g = inst(10.0, 0.8, 1.0, &[1.0, 1.0], 1.5);
        let p = Profile::full_sharing(vec![0.0, 2.0]).unwrap();
        assert!(matches!(sharing_threshold(&g, &p, 0), Err(Error::ZeroQuality(0))));
        assert!(optimal_sharing(&g, &p, 0, 0.5).is_err());
    }

    #[test]
    fn optimal_sharing_extremes() {
        let g = inst(10.0, 0.8, 0.5, &[1.0, 2.0, 3.0], 1.5);
        let p = Profile::full_sharing(vec![1.0, 2.0, 0.5]).unwrap();
        for i in 0..3 {
            assert_eq!(optimal_sharing(&g, &p, i, 1.0).unwrap(), 1.0);
            assert_eq!(optimal_sharing(&g, &p, i, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn tie_resolves_to_sharing() {
        let g = inst(10.0, 0.8, 1.0, &[1.0, 1.0], 1.5);
        let p = Profile::new(vec![2.0, 2.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(optimal_sharing(&g, &p, 0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn prior_data_lowers_threshold() {
        let g = inst(10.0, 0.8, 0.7, &[1.0, 1.0, 1.0], 1.5);
        let mut with_prior = g.clone();
        with_prior.params.prior_data = 0.5;
        let p = Profile::new(vec![1.0, 2.0, 3.0], vec![1.0, 0.3, 0.0]).unwrap();
        for i in 0..3 {
            assert!(sharing_threshold(&with_prior, &p, i).unwrap() < sharing_threshold(&g, &p, i).unwrap());
        }
    }

    #[test]
    fn s1_best_quality_at_ese_is_a_fixed_point() {
        let g = inst(100.0, 0.8, 0.5, &[2.0, 5.0, 9.0], 1.5);
        let ese = crate::equilibrium::solve_ese_foc(&g, 0.6, &Default::default()).unwrap();
        let rule = AllocationRule::proportional(0.6).unwrap();
        let p = Profile::full_sharing(ese.x_star.clone()).unwrap();
        for i in 0..3 {
            let reference = creator_utility(&g, &p, &rule, i).unwrap();
            let upper = creator_x_max(&g, i).unwrap();
            let d =
                best_quality_given_sharing(&g, &p, i, 1.0, &rule, upper, reference, &SearchOptions::default()).unwrap();
            assert_relative_eq!(d.best_x, ese.x_star[i], max_relative = 1e-6);
            assert!(d.gain.abs() < 1e-9, "gain {}", d.gain);
        }
    }

    #[test]
    fn withholding_deviation_matches_dense_grid() {
        // s_1 = 0 against x_2 = 9.375 in the two-creator quadratic instance
        let g = inst(10.0, 1.0, 1.0, &[0.1, 0.4], 2.0);
        let rule = AllocationRule::proportional(1.0).unwrap();
        let p = Profile::full_sharing(vec![37.5, 9.375]).unwrap();
        let upper = creator_x_max(&g, 0).unwrap();
        let d = best_quality_given_sharing(&g, &p, 0, 0.0, &rule, upper, 0.0, &SearchOptions::default()).unwrap();

        let oracle = |x: f64| 10.0 * (x + 9.375) * x / (x + 18.75) - 0.1 * x * x;
        let n = 1_000_000;
        let (mut bx, mut bv) = (0.0, f64::NEG_INFINITY);
        for k in 0..=n {
            let x = upper * k as f64 / n as f64;
            let v = oracle(x);
            if v > bv {
                bv = v;
                bx = x;
            }
        }
        assert!(d.utility >= bv - 1e-9, "{} vs {}", d.utility, bv);
        assert!((d.utility - bv).abs() < 1e-6);
        assert!((d.best_x - bx).abs() < 1e-3);
    }

    #[derive(Debug)]
    struct Free;
    impl CustomCost for Free {
        fn value(&self, _: f64) -> f64 {
            0.0
        }
        fn derivative(&self, _: f64) -> f64 {
            0.0
        }
        fn second_derivative(&self, _: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn zero_cost_model_is_clipped_at_upper_bound() {
        let params = ModelParams::new(10.0, 1.0, 1.0).unwrap();
        let g = GameInstance::new(
            params,
            vec![
                CostModel::custom_unchecked(Arc::new(Free)),
                CostModel::power(1.0, 2.0).unwrap(),
            ],
        )
        .unwrap();
        let p = Profile::full_sharing(vec![1.0, 3.0]).unwrap();
        let rule = AllocationRule::proportional(0.5).unwrap();
        let d = best_quality_given_sharing(&g, &p, 0, 0.0, &rule, 50.0, 0.0, &SearchOptions::default()).unwrap();
        assert_eq!(d.best_x, 50.0);
    }

    #[test]
    fn deviation_gain_is_positive_at_rho_zero() {
        let g = inst(100.0, 0.8, 0.5, &[2.0, 5.0, 9.0, 3.0], 1.5);
        let rule = AllocationRule::proportional(0.0).unwrap();
        let x = [3.0, 1.0, 0.5, 2.0];
        for i in 0..4 {
            let d = deviation_gain(&g, &x, &rule, i, &SearchOptions::default()).unwrap();
            assert!(d.gain > 0.0);
            assert_eq!(d.best_s, 0.0);
        }
    }

    #[test]
    fn doubling_grid_does_not_change_gain() {
        let g = inst(100.0, 0.8, 0.5, &[2.0, 5.0, 9.0], 1.5);
        let rule = AllocationRule::proportional(0.2).unwrap();
        let x = [4.0, 2.0, 1.0];
        let coarse = SearchOptions::default();
        let fine = SearchOptions {
            grid_points: 8192,
            ..coarse
        };
        for i in 0..3 {
            let a = deviation_gain(&g, &x, &rule, i, &coarse).unwrap();
            let b = deviation_gain(&g, &x, &rule, i, &fine).unwrap();
            assert!((a.gain - b.gain).abs() < 1e-9);
        }
    }

    #[test]
    fn btes_deviation_is_profitable() {
        let g = inst(10.0, 1.0, 1.0, &[0.1, 0.4], 2.0);
        let rule = AllocationRule::new(RuleKind::Btes, 1.0).unwrap();
        let d = deviation_gain(&g, &[37.5, 9.375], &rule, 0, &SearchOptions::default()).unwrap();
        assert_eq!(d.best_s, 0.0);
        assert!(d.gain >= 171.875 - 164.0625 - 1e-9);
    }
}

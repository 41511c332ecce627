//! Sharp bounds on the survivor average causal effect.
//!
//! Treated survivors are a mixture of LL and LD, control survivors a mixture
//! of LL and DL. For a given LL population share `pi`, the LL component takes
//! fraction `pi / p_t` of the treated survivor distribution and `pi / p_c` of
//! the control one. Its mean is then anywhere between the bottom- and
//! top-trimmed means at that fraction, or between the arm's survivor mean and
//! the top-trimmed mean when dominance is assumed. The bounds are the extreme
//! differences over all feasible `pi`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ArmObservation, AssumptionSet, BoundOptions, EstimateError, PiRange};

/// Which part of the survivor distribution the LL component occupies at an
/// optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimRule {
    Top,
    Bottom,
    SurvivorMean,
    /// Found by the linear-programming oracle.
    LinearProgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTrim {
    /// Share of the arm's survivors attributed to LL.
    pub fraction: f64,
    pub rule: TrimRule,
    pub ll_mean: f64,
}

/// Configuration attaining one endpoint of the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attainment {
    pub pi_ll: f64,
    /// The endpoint is the limit as `pi_ll` decreases to zero.
    pub limit: bool,
    pub treated: ArmTrim,
    pub control: ArmTrim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub lower: Attainment,
    pub upper: Attainment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub lower: f64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub upper: f64,
    pub assumptions: AssumptionSet,
    pub pi_ll_range: Option<PiRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attained_at: Option<Endpoints>,
    pub feasible: bool,
}

impl BoundsResult {
    pub(crate) fn infeasible(assumptions: AssumptionSet) -> Self {
        Self {
            lower: f64::NAN,
            upper: f64::NAN,
            assumptions,
            pi_ll_range: None,
            attained_at: None,
            feasible: false,
        }
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        self.feasible && value >= self.lower - tol && value <= self.upper + tol
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

const TIE: f64 = 1e-12;

/// Grid of LL shares to scan. A zero lower end is represented by `0.0`,
/// which callers treat as the limit from above.
pub(crate) fn pi_grid(range: &PiRange, points: usize) -> Vec<f64> {
    if range.hi <= range.lo || points < 2 {
        return vec![range.hi];
    }
    let steps = (points - 1) as f64;
    (0..points)
        .map(|k| {
            if k == points - 1 {
                range.hi
            } else {
                range.lo + (range.hi - range.lo) * (k as f64 / steps)
            }
        })
        .collect()
}

pub(crate) fn check_arms(
    obs_t: &ArmObservation,
    obs_c: &ArmObservation,
) -> Result<(f64, f64), EstimateError> {
    let (p_t, p_c) = (obs_t.survival_rate(), obs_c.survival_rate());
    if p_t <= 0.0 || p_c <= 0.0 {
        return Err(EstimateError::UndefinedSace);
    }
    Ok((p_t, p_c))
}

/// Lowest and highest LL mean in one arm at LL share `pi`.
fn ll_mean_range(obs: &ArmObservation, pi: f64, dominance: bool) -> (ArmTrim, ArmTrim) {
    let dist = obs.survivor_dist();
    let fraction = (pi / obs.survival_rate()).min(1.0);
    let high = ArmTrim {
        fraction,
        rule: TrimRule::Top,
        ll_mean: dist.top_trimmed_mean(fraction).expect("non-empty survivors"),
    };
    let low = if dominance {
        // LL mean >= cell-mate mean  <=>  LL mean >= survivor mean
        ArmTrim {
            fraction,
            rule: TrimRule::SurvivorMean,
            ll_mean: dist.mean().expect("non-empty survivors"),
        }
    } else {
        ArmTrim {
            fraction,
            rule: TrimRule::Bottom,
            ll_mean: dist.bottom_trimmed_mean(fraction).expect("non-empty survivors"),
        }
    };
    (low, high)
}

/// Bounds on `E[Y(T) | LL] - E[Y(C) | LL]` consistent with the observed arms.
///
/// Without monotonicity the LL share ranges over the feasible interval; the
/// extremes are scanned on `opts.grid_points` shares, and a zero lower end is
/// evaluated as the limit from above (trim fraction to zero). Under
/// monotonicity the LL share equals the control survival rate, and the result
/// is infeasible when that exceeds the treated rate.
///
/// Mean-level and first-order dominance give the same extreme LL means (the
/// survivor mean and the top-trimmed mean), so `opts.dominance` only matters
/// to [`bounds_oracle`](super::bounds_oracle).
pub fn sace_bounds(
    obs_t: &ArmObservation,
    obs_c: &ArmObservation,
    assumptions: &AssumptionSet,
    opts: &BoundOptions,
) -> Result<BoundsResult, EstimateError> {
    let (p_t, p_c) = check_arms(obs_t, obs_c)?;
    let Some(range) = PiRange::feasible(p_t, p_c, assumptions) else {
        return Ok(BoundsResult::infeasible(*assumptions));
    };
    if range.hi <= 0.0 {
        return Err(EstimateError::UndefinedSace);
    }
    let dominance = assumptions.stochastic_dominance;

    let mut best: Option<(f64, Attainment, f64, Attainment)> = None;
    for pi in pi_grid(&range, opts.grid_points) {
        let (t_low, t_high) = ll_mean_range(obs_t, pi, dominance);
        let (c_low, c_high) = ll_mean_range(obs_c, pi, dominance);
        let limit = pi == 0.0;
        let upper = t_high.ll_mean - c_low.ll_mean;
        let lower = t_low.ll_mean - c_high.ll_mean;
        let at_upper = Attainment {
            pi_ll: pi,
            limit,
            treated: t_high,
            control: c_low,
        };
        let at_lower = Attainment {
            pi_ll: pi,
            limit,
            treated: t_low,
            control: c_high,
        };
        best = Some(match best {
            None => (lower, at_lower, upper, at_upper),
            Some((lo, lo_at, up, up_at)) => {
                // earlier shares win ties up to rounding, so limits are reported as such
                let (lo, lo_at) = if lower < lo - TIE * (1.0 + lo.abs()) {
                    (lower, at_lower)
                } else {
                    (lo, lo_at)
                };
                let (up, up_at) = if upper > up + TIE * (1.0 + up.abs()) {
                    (upper, at_upper)
                } else {
                    (up, up_at)
                };
                (lo, lo_at, up, up_at)
            }
        });
    }
    let (lower, lower_at, upper, upper_at) = best.expect("grid is non-empty");
    Ok(BoundsResult {
        lower,
        upper,
        assumptions: *assumptions,
        pi_ll_range: Some(range),
        attained_at: Some(Endpoints {
            lower: lower_at,
            upper: upper_at,
        }),
        feasible: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strata::fixtures::running_example;
    use crate::strata::Arm;
    use crate::trial::expected_observed_summary;
    use proptest::prelude::*;

    fn running_arms() -> (ArmObservation, ArmObservation) {
        let sum = expected_observed_summary(&running_example());
        (
            ArmObservation::from_summary(&sum, Arm::Treatment, 1).unwrap(),
            ArmObservation::from_summary(&sum, Arm::Control, 1).unwrap(),
        )
    }

    #[test]
    fn running_example_rows() {
        let (t, c) = running_arms();
        let want = [(-200.0, 200.0), (-150.0, 0.0), (-100.0, 150.0), (-50.0, 0.0)];
        for (a, (lo, hi)) in AssumptionSet::table_rows().iter().zip(want) {
            let b = sace_bounds(&t, &c, a, &BoundOptions::default()).unwrap();
            assert!(b.feasible);
            assert!((b.lower - lo).abs() < 1e-9, "{a:?}: {}", b.lower);
            assert!((b.upper - hi).abs() < 1e-9, "{a:?}: {}", b.upper);
        }
    }

    #[test]
    fn no_assumption_extremes_are_limits() {
        let (t, c) = running_arms();
        let b = sace_bounds(&t, &c, &AssumptionSet::NONE, &BoundOptions::default()).unwrap();
        let at = b.attained_at.unwrap();
        assert!(at.upper.limit && at.lower.limit);
        assert_eq!(at.upper.treated.rule, TrimRule::Top);
        assert_eq!(at.upper.control.rule, TrimRule::Bottom);
        let range = b.pi_ll_range.unwrap();
        assert!(range.lo_open);
        assert!((range.hi - 0.4).abs() < 1e-12);
    }

    #[test]
    fn monotonicity_against_the_data_is_infeasible() {
        let t = ArmObservation::from_weights(0.3, [(1.0, 1.0)]).unwrap();
        let c = ArmObservation::from_weights(0.5, [(2.0, 1.0)]).unwrap();
        let b = sace_bounds(&t, &c, &AssumptionSet::new(true, false), &BoundOptions::default())
            .unwrap();
        assert!(!b.feasible);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("\"lower\":null"));
        let back: BoundsResult = serde_json::from_str(&json).unwrap();
        assert!(back.lower.is_nan() && !back.feasible);
    }

    #[test]
    fn zero_survival_is_undefined() {
        let t = ArmObservation::from_weights(0.0, []).unwrap();
        let c = ArmObservation::from_weights(0.5, [(2.0, 1.0)]).unwrap();
        assert_eq!(
            sace_bounds(&t, &c, &AssumptionSet::NONE, &BoundOptions::default()),
            Err(EstimateError::UndefinedSace)
        );
    }

    #[test]
    fn point_masses_pin_the_effect() {
        let t = ArmObservation::from_weights(0.7, [(10.0, 1.0)]).unwrap();
        let c = ArmObservation::from_weights(0.4, [(4.0, 1.0)]).unwrap();
        for a in AssumptionSet::table_rows() {
            let b = sace_bounds(&t, &c, &a, &BoundOptions::default()).unwrap();
            assert!((b.lower - 6.0).abs() < 1e-12 && (b.upper - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn high_survival_forces_positive_ll_share() {
        // p_t + p_c > 1: LL is at least 0.3 of the population
        let t = ArmObservation::from_weights(0.8, [(0.0, 1.0), (10.0, 1.0)]).unwrap();
        let c = ArmObservation::from_weights(0.5, [(0.0, 1.0), (10.0, 1.0)]).unwrap();
        let b = sace_bounds(&t, &c, &AssumptionSet::NONE, &BoundOptions::default()).unwrap();
        let range = b.pi_ll_range.unwrap();
        assert!((range.lo - 0.3).abs() < 1e-12 && !range.lo_open);
        // treated LL takes 3/8 of survivors: top mean 10, control LL 3/5: bottom mean 5/3
        assert!((b.upper - (10.0 - 10.0 / 6.0)).abs() < 1e-9, "{}", b.upper);
    }

    fn arb_arm() -> impl Strategy<Value = ArmObservation> {
        (
            0.05f64..1.0,
            prop::collection::vec((-20i32..20, 1u32..10), 1..6),
        )
            .prop_map(|(p, pairs)| {
                ArmObservation::from_weights(
                    p,
                    pairs.into_iter().map(|(v, w)| (v as f64 * 5.0, w as f64)),
                )
                .unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adding_assumptions_never_widens(t in arb_arm(), c in arb_arm()) {
            let opts = BoundOptions::with_grid_points(101);
            let rows = AssumptionSet::table_rows();
            let results: Vec<_> = rows
                .iter()
                .map(|a| sace_bounds(&t, &c, a, &opts).unwrap())
                .collect();
            for (a, ra) in rows.iter().zip(&results) {
                for (b, rb) in rows.iter().zip(&results) {
                    if a.is_subset_of(b) && rb.feasible {
                        prop_assert!(ra.feasible);
                        prop_assert!(rb.lower >= ra.lower - 1e-9);
                        prop_assert!(rb.upper <= ra.upper + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn shifting_an_arm_shifts_the_bounds(t in arb_arm(), c in arb_arm(), shift in -100.0f64..100.0) {
            let opts = BoundOptions::with_grid_points(101);
            for a in AssumptionSet::table_rows() {
                let base = sace_bounds(&t, &c, &a, &opts).unwrap();
                if !base.feasible {
                    continue;
                }
                let up = sace_bounds(&t.shifted(shift), &c, &a, &opts).unwrap();
                prop_assert!((up.lower - base.lower - shift).abs() < 1e-9);
                prop_assert!((up.upper - base.upper - shift).abs() < 1e-9);
                let down = sace_bounds(&t, &c.shifted(shift), &a, &opts).unwrap();
                prop_assert!((down.lower - base.lower + shift).abs() < 1e-9);
                prop_assert!((down.upper - base.upper + shift).abs() < 1e-9);
            }
        }

        #[test]
        fn survivor_contrast_lies_inside_unrestricted_bounds(t in arb_arm(), c in arb_arm()) {
            let b = sace_bounds(&t, &c, &AssumptionSet::NONE, &BoundOptions::with_grid_points(101)).unwrap();
            let naive = t.survivor_dist().mean().unwrap() - c.survivor_dist().mean().unwrap();
            prop_assert!(b.contains(naive, 1e-9));
        }
    }
}

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sacekit::covariate::{group_by_covariate, recover_principal_table, BinningRule};
use sacekit::estimators::{
    bounds_oracle, sace_bounds, ArmObservation, AssumptionSet, BoundOptions, DominanceMode,
};
use sacekit::mixture::{em_fit, identify_strata, EmOptions, MixtureFit};
use sacekit::strata::fixtures::covariate_example;
use sacekit::{
    assign_and_observe, expected_observed_summary, true_sace, Arm, NormalLaw, PopulationSpec,
    PrincipalStratum, StratumSpec, Survival,
};

/// Point-mass population on which `assumptions` hold.
fn population(
    weights: [f64; 4],
    ys: [f64; 4],
    assumptions: AssumptionSet,
) -> PopulationSpec {
    let mut w = weights;
    if assumptions.monotonicity {
        w[2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    let [ll_t, ll_c, mut ld, mut dl] = ys;
    if assumptions.stochastic_dominance {
        ld = ld.min(ll_t);
        dl = dl.min(ll_c);
    }
    let point = NormalLaw::point;
    use PrincipalStratum::*;
    PopulationSpec::new(vec![
        StratumSpec::empty(LL, w[0] / total)
            .with_law(Arm::Treatment, point(ll_t))
            .with_law(Arm::Control, point(ll_c)),
        StratumSpec::empty(LD, w[1] / total).with_law(Arm::Treatment, point(ld)),
        StratumSpec::empty(DL, w[2] / total).with_law(Arm::Control, point(dl)),
        StratumSpec::empty(DD, w[3] / total),
    ])
    .unwrap()
}

fn arb_population() -> impl Strategy<Value = (PopulationSpec, AssumptionSet)> {
    (
        [0.05f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0],
        [0.0f64..1000.0, 0.0f64..1000.0, 0.0f64..1000.0, 0.0f64..1000.0],
        0usize..4,
    )
        .prop_map(|(w, ys, row)| {
            let a = AssumptionSet::table_rows()[row];
            (population(w, ys, a), a)
        })
}

fn arms_of(pop: &PopulationSpec) -> (ArmObservation, ArmObservation) {
    let s = expected_observed_summary(pop);
    (
        ArmObservation::from_summary(&s, Arm::Treatment, 1).unwrap(),
        ArmObservation::from_summary(&s, Arm::Control, 1).unwrap(),
    )
}

fn arb_arm() -> impl Strategy<Value = ArmObservation> {
    (
        0.05f64..0.95,
        prop::collection::vec((-500.0f64..500.0, 0.01f64..1.0), 1..=6),
    )
        .prop_map(|(p, atoms)| ArmObservation::from_weights(p, atoms).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn truth_inside_bounds_whose_assumptions_hold((pop, held) in arb_population()) {
        let truth = true_sace(&pop).unwrap();
        let (t, c) = arms_of(&pop);
        for a in AssumptionSet::table_rows() {
            if !a.is_subset_of(&held) {
                continue;
            }
            let b = sace_bounds(&t, &c, &a, &BoundOptions::default()).unwrap();
            prop_assert!(b.feasible);
            prop_assert!(b.contains(truth, 1e-9), "{a:?}: {truth} outside [{}, {}]", b.lower, b.upper);
        }
    }

    #[test]
    fn oracle_agrees_with_trimming(t in arb_arm(), c in arb_arm()) {
        for a in AssumptionSet::table_rows() {
            for dominance in [DominanceMode::Mean, DominanceMode::FirstOrder] {
                let opts = BoundOptions { grid_points: 21, dominance };
                let closed = sace_bounds(&t, &c, &a, &opts).unwrap();
                let lp = bounds_oracle(&t, &c, &a, &opts).unwrap();
                prop_assert_eq!(closed.feasible, lp.feasible);
                if closed.feasible {
                    prop_assert!((closed.lower - lp.lower).abs() < 1e-6, "{a:?} {dominance:?} {} vs {}", closed.lower, lp.lower);
                    prop_assert!((closed.upper - lp.upper).abs() < 1e-6, "{a:?} {dominance:?} {} vs {}", closed.upper, lp.upper);
                }
            }
        }
    }

    #[test]
    fn exchanging_arms_negates_symmetric_bounds((pop, _) in arb_population()) {
        let (t, c) = arms_of(&pop);
        let (mt, mc) = arms_of(&pop.mirrored());
        prop_assert_eq!(true_sace(&pop.mirrored()).map(|v| -v), true_sace(&pop));
        for a in [AssumptionSet::new(false, false), AssumptionSet::new(false, true)] {
            let b = sace_bounds(&t, &c, &a, &BoundOptions::default()).unwrap();
            let m = sace_bounds(&mt, &mc, &a, &BoundOptions::default()).unwrap();
            prop_assert!((b.lower + m.upper).abs() < 1e-9 && (b.upper + m.lower).abs() < 1e-9);
        }
    }
}

fn two_normals(n: usize, seed: u64, gap: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = Normal::new(0.0, 1.0).unwrap();
    let high = Normal::new(gap, 1.5).unwrap();
    (0..n)
        .map(|i| if i % 3 == 0 { high.sample(&mut rng) } else { low.sample(&mut rng) })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_is_affine_equivariant(
        seed in 0u64..1000,
        scale in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
        shift in -500.0f64..500.0,
    ) {
        let x = two_normals(900, seed, 6.0);
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let opts = EmOptions { tol: 1e-14, max_iter: 20_000, ..EmOptions::with_seed(seed) };
        let fx = em_fit(&x, 2, &opts).unwrap();
        let fy = em_fit(&y, 2, &opts).unwrap();
        let mut mapped: Vec<(f64, f64, f64)> = fx
            .components
            .iter()
            .map(|c| (c.weight, scale * c.mean + shift, scale.abs() * c.sd))
            .collect();
        mapped.sort_by(|a, b| a.1.total_cmp(&b.1));
        for (m, c) in mapped.iter().zip(&fy.components) {
            prop_assert!((m.0 - c.weight).abs() < 1e-6, "{m:?} {c:?}");
            prop_assert!((m.1 - c.mean).abs() < 1e-6 * scale.abs(), "{m:?} {c:?}");
            prop_assert!((m.2 - c.sd).abs() < 1e-6 * scale.abs(), "{m:?} {c:?}");
        }
        for trace in [&fx.loglik_trace, &fy.loglik_trace] {
            for w in trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
            }
        }
    }

    #[test]
    fn covariate_recovery_ignores_record_order(seed in 0u64..1000) {
        let records = assign_and_observe(&covariate_example(10.0), 2_000, seed).unwrap();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let binning = BinningRule::Width { width: 100.0, origin: 0.0 };
        let a = recover_principal_table(&group_by_covariate(&records, binning).unwrap(), 0.5).unwrap();
        let b = recover_principal_table(&group_by_covariate(&shuffled, binning).unwrap(), 0.5).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Normal-law population whose survivor components sit more than 4 sd apart
/// in each arm and whose LL, LD and DL shares are pairwise distinct.
fn arb_separated() -> impl Strategy<Value = PopulationSpec> {
    (0.05f64..0.3, 0.05f64..0.3, 0.05f64..0.3, 1.0f64..40.0, prop::bool::ANY, prop::bool::ANY)
        .prop_filter("shares must differ", |(ll, ld, dl, ..)| {
            let far = |a: f64, b: f64| (a - b).abs() > 0.1 * a.max(b);
            far(*ll, *ld) && far(*ll, *dl) && far(*ld, *dl)
        })
        .prop_map(|(ll, ld, dl, sd, t_up, c_up)| {
            let gap = 4.5 * sd;
            let law = |m| NormalLaw::new(m, sd);
            let (ll_t, ld_t) = if t_up { (500.0 + gap, 500.0) } else { (500.0, 500.0 + gap) };
            let (ll_c, dl_c) = if c_up { (300.0 + gap, 300.0) } else { (300.0, 300.0 + gap) };
            use PrincipalStratum::*;
            PopulationSpec::new(vec![
                StratumSpec::empty(LL, ll)
                    .with_law(Arm::Treatment, law(ll_t))
                    .with_law(Arm::Control, law(ll_c)),
                StratumSpec::empty(LD, ld).with_law(Arm::Treatment, law(ld_t)),
                StratumSpec::empty(DL, dl).with_law(Arm::Control, law(dl_c)),
                StratumSpec::empty(DD, 1.0 - ll - ld - dl),
            ])
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn separated_components_identify_uniquely(pop in arb_separated()) {
        let s = expected_observed_summary(&pop);
        let fit = |arm| MixtureFit::from_mixture_terms(&s.cell(arm, Survival::Alive).mixture);
        let ident = identify_strata(
            &fit(Arm::Treatment),
            &fit(Arm::Control),
            s.survival_rate(Arm::Treatment),
            s.survival_rate(Arm::Control),
            0.05,
        )
        .unwrap();
        prop_assert!(!ident.ambiguous);
        prop_assert_eq!(ident.solutions.len(), 1);
        let got = ident.solutions[0].proportions.as_array();
        for (g, s) in got.iter().zip(PrincipalStratum::ALL) {
            prop_assert!((g - pop.proportion(s)).abs() < 1e-9, "{got:?}");
        }
    }
}

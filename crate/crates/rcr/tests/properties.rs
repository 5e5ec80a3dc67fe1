//! Property suites: estimator invariances, rejection monotonicity and
//! termination, canonical-form postconditions, deterministic replay.

use proptest::prelude::*;

use rcr::{
    build_deviation_set, canonicalize_sinusoid, central_tendency, chauvenet_tail_probability,
    generate_sample, meets_criterion, presets, rcr, sigma_for, CentralTendency,
    ContaminantSidedness, CorrectionTable, CoreShape, DistributionAssumption, Sample, Sidedness,
    SigmaTechnique, SigmaValue,
};

fn sigma_scalar(value: &SigmaValue) -> f64 {
    match *value {
        SigmaValue::TwoSided(s) => s,
        SigmaValue::OneSided { below, above } => below.max(above),
    }
}

fn finite_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e3..1.0e3f64, 1..40)
}

fn positive_weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..20.0f64, len..=len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn central_tendencies_are_affine_equivariant(
        values in finite_values(),
        a in 0.01..50.0f64,
        b in -100.0..100.0f64,
    ) {
        let base = Sample::unweighted(values.clone()).unwrap();
        let mapped = Sample::unweighted(values.iter().map(|y| a * y + b).collect()).unwrap();
        for kind in [CentralTendency::Mean, CentralTendency::Median, CentralTendency::Mode] {
            let direct = central_tendency(&mapped, kind);
            let expected = a * central_tendency(&base, kind) + b;
            let scale = 1.0 + direct.abs().max(expected.abs());
            prop_assert!(
                (direct - expected).abs() <= 1e-9 * scale,
                "{kind:?}: {direct} vs {expected}"
            );
        }
    }

    #[test]
    fn sigma_techniques_are_scale_equivariant(
        values in finite_values(),
        a in 0.01..50.0f64,
        b in -100.0..100.0f64,
    ) {
        let base = Sample::unweighted(values.clone()).unwrap();
        let mapped = Sample::unweighted(values.iter().map(|y| a * y + b).collect()).unwrap();
        let mu = central_tendency(&base, CentralTendency::Median);
        let mu_mapped = a * mu + b;
        for technique in [
            SigmaTechnique::Percentile,
            SigmaTechnique::LineFit,
            SigmaTechnique::BrokenLine,
        ] {
            for sidedness in [Sidedness::TwoSided, Sidedness::OneSided] {
                let s0 = sigma_for(&base, mu, technique, sidedness).unwrap();
                let s1 = sigma_for(&mapped, mu_mapped, technique, sidedness).unwrap();
                let (v0, v1) = (sigma_scalar(&s0.value), sigma_scalar(&s1.value));
                prop_assert!(
                    (v1 - a * v0).abs() <= 1e-9 * (1.0 + v1.abs()),
                    "{technique:?}/{sidedness:?}: {v1} vs {}", a * v0
                );
            }
        }
        if values.len() >= 2 {
            let s0 = sigma_scalar(&sigma_for(&base, mu, SigmaTechnique::StdDev, Sidedness::TwoSided).unwrap().value);
            let s1 = sigma_scalar(&sigma_for(&mapped, mu_mapped, SigmaTechnique::StdDev, Sidedness::TwoSided).unwrap().value);
            prop_assert!((s1 - a * s0).abs() <= 1e-9 * (1.0 + s1.abs()));
        }
    }

    #[test]
    fn unit_weights_match_unweighted_exactly(values in finite_values()) {
        let unweighted = Sample::unweighted(values.clone()).unwrap();
        let weighted = Sample::weighted(values.clone(), vec![1.0; values.len()]).unwrap();
        for kind in [CentralTendency::Mean, CentralTendency::Median, CentralTendency::Mode] {
            prop_assert_eq!(
                central_tendency(&unweighted, kind),
                central_tendency(&weighted, kind)
            );
        }
        let mu = central_tendency(&unweighted, CentralTendency::Median);
        for technique in [
            SigmaTechnique::Percentile,
            SigmaTechnique::LineFit,
            SigmaTechnique::BrokenLine,
        ] {
            let a = sigma_for(&unweighted, mu, technique, Sidedness::TwoSided).unwrap();
            let b = sigma_for(&weighted, mu, technique, Sidedness::TwoSided).unwrap();
            prop_assert_eq!(sigma_scalar(&a.value), sigma_scalar(&b.value));
        }
    }

    #[test]
    fn uniform_weight_scaling_changes_nothing(
        (values, weights) in finite_values()
            .prop_flat_map(|v| { let n = v.len(); (Just(v), positive_weights(n)) }),
        scale in 0.01..100.0f64,
    ) {
        let base = Sample::weighted(values.clone(), weights.clone()).unwrap();
        let scaled =
            Sample::weighted(values, weights.iter().map(|w| w * scale).collect()).unwrap();
        for kind in [CentralTendency::Mean, CentralTendency::Median, CentralTendency::Mode] {
            let a = central_tendency(&base, kind);
            let b = central_tendency(&scaled, kind);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{kind:?}: {a} vs {b}");
        }
        let mu = central_tendency(&base, CentralTendency::Median);
        for technique in [
            SigmaTechnique::Percentile,
            SigmaTechnique::LineFit,
            SigmaTechnique::BrokenLine,
        ] {
            let a = sigma_scalar(&sigma_for(&base, mu, technique, Sidedness::TwoSided).unwrap().value);
            let b = sigma_scalar(&sigma_for(&scaled, mu, technique, Sidedness::TwoSided).unwrap().value);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{technique:?}: {a} vs {b}");
        }
    }

    #[test]
    fn estimators_ignore_input_order(values in finite_values(), seed in any::<u64>()) {
        let mut shuffled = values.clone();
        // Deterministic Fisher-Yates from the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let a = Sample::unweighted(values).unwrap();
        let b = Sample::unweighted(shuffled).unwrap();
        for kind in [CentralTendency::Mean, CentralTendency::Median, CentralTendency::Mode] {
            let x = central_tendency(&a, kind);
            let y = central_tendency(&b, kind);
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{kind:?}: {x} vs {y}");
        }
        let mu = central_tendency(&a, CentralTendency::Median);
        for technique in [
            SigmaTechnique::Percentile,
            SigmaTechnique::LineFit,
            SigmaTechnique::BrokenLine,
        ] {
            let x = sigma_scalar(&sigma_for(&a, mu, technique, Sidedness::TwoSided).unwrap().value);
            let y = sigma_scalar(&sigma_for(&b, mu, technique, Sidedness::TwoSided).unwrap().value);
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn deviation_set_percentiles_and_abscissae_increase(values in finite_values()) {
        let sample = Sample::unweighted(values).unwrap();
        let mu = central_tendency(&sample, CentralTendency::Median);
        let devset = build_deviation_set(&sample, mu);
        for pair in devset.percentiles().windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        for pair in devset.abscissae().windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        for pair in devset.deviations().windows(2) {
            prop_assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn criterion_is_monotone_in_z_and_n(n in 1usize..100_000, z in 0.0..10.0f64) {
        // The tail is a probability and decreasing in z.
        let p = chauvenet_tail_probability(z);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(chauvenet_tail_probability(z + 0.5) <= p);
        // Rejection only gets easier as n shrinks.
        if meets_criterion(n, z) {
            prop_assert!(meets_criterion(n.div_ceil(2), z));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rejection_is_monotone_and_terminates(
        seed in any::<u64>(),
        n in 5usize..120,
        fraction in 0.0..0.6f64,
    ) {
        let scenario = rcr::Scenario {
            n_points: n,
            fraction,
            core: rcr::Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
            contaminants: rcr::Contaminants::TwoSided { sigma: 8.0 },
            mode: rcr::ContaminationMode::Replace,
            seed,
        };
        let labeled = generate_sample(&scenario).unwrap();
        let table = CorrectionTable::builtin();
        let assumption = DistributionAssumption::default();
        let result = match rcr(&labeled.sample, assumption, table) {
            Ok(r) => r,
            Err(rcr::RcrError::AllRejected { .. }) => return Ok(()),
            Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
        };

        // Partition: kept and rejected cover the input disjointly.
        let mut seen = vec![0u8; n];
        for &i in &result.kept {
            seen[i] += 1;
        }
        for &i in &result.rejected {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        // Monotone growth of the rejected set; n strictly decreases on
        // rejecting iterations; total rejections bounded by n.
        let mut rejected_so_far = 0usize;
        for record in &result.stage_log {
            prop_assert!(record.n == n - rejected_so_far);
            rejected_so_far += record.rejected.len();
        }
        prop_assert_eq!(rejected_so_far, result.rejected.len());
        prop_assert!(rejected_so_far <= n);

        // Final-state consistency: no kept point still meets the criterion
        // under the final statistics.
        let kept_n = result.kept.len();
        for &i in &result.kept {
            let delta = labeled.sample.values()[i] - result.mu;
            let sigma = result.sigma.value.for_offset(delta);
            if sigma > 0.0 {
                prop_assert!(
                    !meets_criterion(kept_n, delta.abs() / sigma),
                    "kept point {i} still meets the criterion"
                );
            }
        }

        // Deterministic replay.
        let again = rcr(&labeled.sample, assumption, table).unwrap();
        prop_assert_eq!(result.kept, again.kept);
        prop_assert_eq!(result.mu, again.mu);
    }

    #[test]
    fn weighted_rejection_holds_partition_invariants(
        seed in any::<u64>(),
        n in 5usize..60,
    ) {
        let scenario = rcr::Scenario {
            n_points: n,
            fraction: 0.3,
            core: rcr::Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
            contaminants: rcr::Contaminants::OneSided { sigma: 10.0 },
            mode: rcr::ContaminationMode::Replace,
            seed,
        };
        let labeled = generate_sample(&scenario).unwrap();
        // Attach deterministic, nonuniform weights.
        let weights: Vec<f64> = (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.25).collect();
        let sample = Sample::weighted(labeled.sample.values().to_vec(), weights).unwrap();
        let assumption = DistributionAssumption::new(
            CoreShape::Symmetric,
            ContaminantSidedness::OneSided,
        );
        match rcr(&sample, assumption, CorrectionTable::builtin()) {
            Ok(result) => {
                let mut seen = vec![0u8; n];
                for &i in result.kept.iter().chain(&result.rejected) {
                    seen[i] += 1;
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
            }
            Err(rcr::RcrError::AllRejected { .. }) => {}
            Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
        }
    }
}

#[test]
fn sinusoid_canonical_postconditions_hold_for_random_draws() {
    // 1e5 pseudo-random parameter vectors; afterwards the frequency is
    // nonnegative and the phase magnitude below pi, and a second pass is a
    // no-op.
    let mut state = 0x1234_5678_9abc_def0u64;
    let mut uniform = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..100_000 {
        let b = (uniform() - 0.5) * 200.0;
        let m = (uniform() - 0.5) * 60.0;
        let x0 = (uniform() - 0.5) * 400.0;
        let mut theta = [b, m, x0];
        canonicalize_sinusoid(&mut theta);
        if m != 0.0 {
            assert!(theta[1] >= 0.0, "m = {} from {:?}", theta[1], (b, m, x0));
            assert!(
                theta[1] * theta[2].abs() < std::f64::consts::PI,
                "phase {} from {:?}",
                theta[1] * theta[2].abs(),
                (b, m, x0)
            );
        }
        let mut again = theta;
        canonicalize_sinusoid(&mut again);
        for (a, b) in theta.iter().zip(&again) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{theta:?} vs {again:?}");
        }
    }
}

#[test]
fn scenario_generation_replays_deterministically() {
    for seed in [0u64, 1, 42, u64::MAX] {
        let a = generate_sample(&presets::fig3(seed)).unwrap();
        let b = generate_sample(&presets::fig3(seed)).unwrap();
        assert_eq!(a.sample.values(), b.sample.values());
        assert_eq!(a.contaminant, b.contaminant);
    }
}

mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use mlcvqkd::channel::{transmit, transmit_batch_with, ChannelParams, PhaseDrift, RandomSource};
use mlcvqkd::classifier::{train, QmlcParams};
use mlcvqkd::features::{extract, filter, FeatureVector, LabeledSample, ReferenceSet, Threshold};
use mlcvqkd::keyrate::holevo::symplectic_spectrum;
use mlcvqkd::keyrate::{
    covariance_z, entropy_g, rate_asymptotic, rate_finite, z_eight, z_four, z_gaussian, EveTerm,
    KeyRateParams, Protocol,
};
use mlcvqkd::metrics::{average_precision, prf, roc_curve};
use mlcvqkd::protocol::{intercept_resend_demo, run_session, AttackScenario, SessionConfig};
use mlcvqkd::statespace::{
    build_scheme, labels_of, EncodingRule, Label, LabelSet, ModulationKind, PhasePoint,
};
use mlcvqkd::Execution;

fn label_set() -> impl Strategy<Value = LabelSet> {
    (0u8..16).prop_map(|b| LabelSet::from_flags(std::array::from_fn(|j| b >> j & 1 == 1)))
}

fn point(r: f64) -> impl Strategy<Value = PhasePoint> {
    (-r..r, -r..r).prop_map(|(q, p)| PhasePoint::new(q, p))
}

fn kind() -> impl Strategy<Value = ModulationKind> {
    prop_oneof![Just(ModulationKind::Qpsk), Just(ModulationKind::Psk8)]
}

fn physical_params() -> impl Strategy<Value = KeyRateParams> {
    (
        prop_oneof![
            Just(Protocol::Gaussian),
            Just(Protocol::FourState),
            Just(Protocol::EightState)
        ],
        0.01f64..60.0,
        0.0f64..150.0,
        0.0f64..0.1,
        0.3f64..1.0,
        0.0f64..0.2,
    )
        .prop_map(|(protocol, vm, km, xi, eta, vel)| {
            let mut p = KeyRateParams::new(protocol, vm, 1.0).at_distance(km);
            p.excess_noise = xi;
            p.efficiency = eta;
            p.electronic_noise = vel;
            p
        })
}

// statespace

#[test]
fn psk8_pairs_alternate_with_singletons() {
    let s = build_scheme(ModulationKind::Psk8, 3.0).unwrap();
    let sizes: Vec<usize> = s.states().iter().map(|st| st.labels.len()).collect();
    assert_eq!(sizes.iter().filter(|&&n| n == 2).count(), 4);
    for i in 0..8 {
        assert_ne!(sizes[i], sizes[(i + 1) % 8]);
    }
}

proptest! {
    #[test]
    fn stored_labels_match_quadrants(kind in kind(), vm in 1e-3f64..200.0) {
        let s = build_scheme(kind, vm).unwrap();
        for st in s.states() {
            prop_assert_eq!(labels_of(st.point), st.labels);
            prop_assert!(st.labels.is_valid_state_set());
            prop_assert_eq!(s.state_for_labels(st.labels), Some(st.index));
        }
    }

    #[test]
    fn every_point_has_a_label(p in point(100.0)) {
        prop_assert!(!labels_of(p).is_empty());
    }

    #[test]
    fn encode_then_decode_round_trips(codes in prop::collection::vec("[01]{1,6}", 2..10)) {
        let rule = EncodingRule::new("r", mlcvqkd::statespace::Visibility::Private, codes.clone()).unwrap();
        for (i, c) in codes.iter().enumerate() {
            let bits = rule.encode(i + 1).unwrap();
            prop_assert_eq!(bits, c.as_str());
            prop_assert_eq!(rule.decode(i + 1).unwrap(), bits);
        }
    }
}

// channel

proptest! {
    #[test]
    fn noiseless_unit_channel_is_identity(p in point(50.0), seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        prop_assert_eq!(transmit(p, &ChannelParams::noiseless(), &mut rng), p);
    }

    #[test]
    fn zero_noise_output_is_scaled_rotation(p in point(20.0), t in 0.01f64..1.0, phi in -PI..PI) {
        let ch = ChannelParams::with_transmittance(t, 0.0).unwrap().shot_noise(0.0).unwrap().fixed_drift(phi).unwrap();
        let out = transmit(p, &ch, &mut RandomSource::new(0));
        let want = p.rotate(-phi).scale(t.sqrt());
        prop_assert!((out.q - want.q).abs() < 1e-12 && (out.p - want.p).abs() < 1e-12);
    }

    #[test]
    fn batch_transmission_is_deterministic(seed in any::<u64>(), n in 0usize..9000, km in 0.0f64..100.0) {
        let ch = ChannelParams::fiber(km, 0.01).unwrap()
            .phase_drift(PhaseDrift::Uniform { low: -0.1, high: 0.1 }).unwrap();
        let pts: Vec<_> = (0..n).map(|i| PhasePoint::new(i as f64 * 1e-3, 1.0)).collect();
        let a = transmit_batch_with(&pts, &ch, &mut RandomSource::new(seed), Execution::Sequential);
        let b = transmit_batch_with(&pts, &ch, &mut RandomSource::new(seed), Execution::Parallel);
        prop_assert_eq!(a, b);
    }
}

// features

proptest! {
    #[test]
    fn extract_is_translation_covariant(p in point(10.0), refs in prop::collection::vec(point(10.0), 1..9), dq in -5.0f64..5.0, dp in -5.0f64..5.0) {
        let a = extract(p, &ReferenceSet::new(refs.clone()).unwrap());
        let shifted: Vec<_> = refs.iter().map(|r| r.translate(dq, dp)).collect();
        let b = extract(p.translate(dq, dp), &ReferenceSet::new(shifted).unwrap());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn nearest_reference_survives_rotation(p in point(10.0), vm in 0.5f64..80.0, angle in -PI..PI) {
        let scheme = build_scheme(ModulationKind::Psk8, vm).unwrap();
        let argmin = |v: &FeatureVector| {
            let s = v.as_slice();
            (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap()
        };
        let plain = extract(p, &ReferenceSet::from_scheme(&scheme));
        let d = plain.as_slice();
        let mut sorted = d.to_vec();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted[1] - sorted[0] > 1e-9);
        let rotated: Vec<_> = scheme.points().iter().map(|r| r.rotate(angle)).collect();
        let turned = extract(p.rotate(angle), &ReferenceSet::new(rotated).unwrap());
        prop_assert_eq!(argmin(&plain), argmin(&turned));
    }

    #[test]
    fn filter_is_idempotent(vals in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 3), 1..200), q in 0.05f64..1.0) {
        let items: Vec<FeatureVector> = vals.into_iter().map(|v| FeatureVector::new(v).unwrap()).collect();
        let n = items.len();
        let first = filter(items, Threshold::Quantile(q)).unwrap();
        prop_assert_eq!(first.kept.len() + first.discarded.len(), n);
        let again = filter(first.kept.clone(), Threshold::Absolute(first.threshold)).unwrap();
        prop_assert!(again.discarded.is_empty());
        prop_assert_eq!(again.kept, first.kept);
    }
}

// classifier

fn continuous_fixture() -> impl Strategy<Value = (usize, Vec<LabeledSample>, Vec<Vec<f64>>)> {
    (1usize..6, 2usize..5).prop_flat_map(|(k, w)| {
        (
            Just(k),
            prop::collection::vec(
                (prop::collection::vec(0.0f64..10.0, w), label_set()),
                k + 1..60,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|(f, labels)| LabeledSample {
                        features: FeatureVector::new(f).unwrap(),
                        labels,
                        true_state: 1,
                    })
                    .collect::<Vec<_>>()
            }),
            prop::collection::vec(prop::collection::vec(0.0f64..10.0, w), 1..10),
        )
    })
}

proptest! {
    #[test]
    fn conditionals_are_normalised_and_strictly_inside_unit_interval((k, data, _) in continuous_fixture(), s in 0.1f64..3.0) {
        let params = QmlcParams { k, smoothing: s, threshold: 1.0 };
        let c = train(data, params).unwrap();
        for l in Label::ALL {
            for table in [c.conditional_with(l), c.conditional_without(l)] {
                prop_assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(table.iter().all(|&p| p > 0.0 && p < 1.0));
            }
            let prior = c.prior()[l.index()];
            prop_assert!(prior > 0.0 && prior < 1.0);
        }
    }

    #[test]
    fn decision_matches_exposed_ratios((k, data, queries) in continuous_fixture(), t in 0.2f64..3.0) {
        let c = train(data, QmlcParams { k, smoothing: 1.0, threshold: t }).unwrap();
        for q in queries {
            let pred = c.predict(&FeatureVector::new(q).unwrap()).unwrap();
            for l in Label::ALL {
                prop_assert_eq!(pred.labels.contains(l), pred.ratios[l.index()] > t);
            }
        }
    }

    #[test]
    fn positive_rescaling_leaves_predictions_unchanged((k, data, queries) in continuous_fixture(), factor in 0.01f64..100.0) {
        let scaled: Vec<LabeledSample> = data.iter()
            .map(|s| LabeledSample { features: s.features.scaled(factor), ..s.clone() })
            .collect();
        let a = train(data, QmlcParams::with_k(k)).unwrap();
        let b = train(scaled, QmlcParams::with_k(k)).unwrap();
        for l in Label::ALL {
            prop_assert_eq!(a.with_label_counts(l), b.with_label_counts(l));
        }
        for q in queries {
            let q = FeatureVector::new(q).unwrap();
            prop_assert_eq!(a.predict(&q).unwrap(), b.predict(&q.scaled(factor)).unwrap());
        }
    }

    #[test]
    fn power_of_two_rescaling_is_exact_with_ties(seed in 0u64..10_000, shift in -3i32..4) {
        let fx = common::Fixture::random(seed);
        let factor = 2f64.powi(shift);
        let scaled: Vec<LabeledSample> = fx.samples().into_iter()
            .map(|s| LabeledSample { features: s.features.scaled(factor), ..s })
            .collect();
        let a = train(fx.samples(), QmlcParams::with_k(fx.k)).unwrap();
        let b = train(scaled, QmlcParams::with_k(fx.k)).unwrap();
        for q in &fx.queries {
            let q = common::to_features(q);
            prop_assert_eq!(a.predict(&q).unwrap(), b.predict(&q.scaled(factor)).unwrap());
        }
    }
}

// metrics

proptest! {
    #[test]
    fn auc_invariant_under_monotone_transform(rows in prop::collection::vec((0u8..20, any::<bool>()), 2..100)) {
        let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let truth: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() - 7.0).collect();
        let a = roc_curve(&scores, &truth).unwrap().map(|x| x.1);
        let b = roc_curve(&warped, &truth).unwrap().map(|x| x.1);
        prop_assert_eq!(a, b);
        if let Some(auc) = a {
            prop_assert!((auc - common::mann_whitney(&scores, &truth).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&auc));
        }
    }

    #[test]
    fn prf_ignores_sample_order(rows in prop::collection::vec((label_set(), label_set()), 1..80), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let split = |r: &[(LabelSet, LabelSet)]| -> (Vec<LabelSet>, Vec<LabelSet>) { r.iter().cloned().unzip() };
        let (p1, t1) = split(&rows);
        let (p2, t2) = split(&shuffled);
        let a = prf(&p1, &t1).unwrap().macro_avg;
        let b = prf(&p2, &t2).unwrap().macro_avg;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_label_ap_is_mean_reciprocal_rank(rows in prop::collection::vec((prop::array::uniform4(0.0f64..1.0), 0usize..4), 1..60)) {
        let scores: Vec<[f64; 4]> = rows.iter().map(|r| r.0).collect();
        let truths: Vec<LabelSet> = rows.iter().map(|r| LabelSet::from_labels(&[Label::from_index(r.1).unwrap()])).collect();
        let ap = average_precision(&scores, &truths).unwrap().unwrap();
        let mrr = rows.iter().map(|(s, y)| {
            let rank = 1 + (0..4).filter(|&j| s[j] > s[*y] || (s[j] == s[*y] && j < *y)).count();
            1.0 / rank as f64
        }).sum::<f64>() / rows.len() as f64;
        prop_assert!((ap - mrr).abs() < 1e-12);
    }
}

// keyrate

proptest! {
    #[test]
    fn chi_tot_forms_agree(p in physical_params()) {
        prop_assert!((p.chi_tot() - p.chi_tot_direct()).abs() <= 1e-12 * p.chi_tot().abs().max(1.0));
    }

    #[test]
    fn entropy_is_nonnegative_and_increasing(x in 0.0f64..1e8, dx in 1e-6f64..10.0) {
        prop_assert!(entropy_g(x) >= 0.0);
        prop_assert!(entropy_g(x + dx) > entropy_g(x));
        prop_assert!(entropy_g(x).is_finite());
    }

    #[test]
    fn symplectic_eigenvalues_are_physical(p in physical_params()) {
        let z = covariance_z(p.protocol, p.modulation_variance);
        let spectrum = symplectic_spectrum(&p, p.transmittance, p.excess_noise, z).unwrap();
        prop_assert_eq!(spectrum.lambdas[4], 1.0);
        for l in &spectrum.lambdas[..4] {
            prop_assert!(*l >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn discrete_correlations_below_gaussian(vm in 1e-4f64..100.0) {
        let (z4, z8, zg) = (z_four(vm), z_eight(vm), z_gaussian(vm));
        prop_assert!(z4 <= z8 * (1.0 + 1e-14));
        prop_assert!(z8 <= zg);
    }

    #[test]
    fn ml_rate_degenerates_to_traditional(mut p in physical_params(), block in 1_000u64..10_000_000_000) {
        p.protocol = Protocol::EightState;
        p = p.with_block(block);
        let traditional = rate_finite(&p).unwrap();
        let ml = KeyRateParams { protocol: Protocol::Ml, classifier_efficiency: 1.0, eve_term: EveTerm::HolevoBound, ..p };
        let got = rate_finite(&ml).unwrap();
        prop_assert_eq!(got.key_rate, traditional.key_rate);
    }

    #[test]
    fn rate_decreases_with_distance(protocol in prop_oneof![Just(Protocol::Gaussian), Just(Protocol::FourState), Just(Protocol::EightState), Just(Protocol::Ml)], vm in 0.1f64..5.0) {
        let base = KeyRateParams::new(protocol, vm, 1.0);
        let rates: Vec<f64> = (0..40).map(|i| rate_asymptotic(&base.at_distance(i as f64 * 5.0)).unwrap().key_rate).collect();
        // past the cutoff both terms vanish and a negative rate creeps back towards zero
        let positive: Vec<f64> = rates.iter().copied().take_while(|&r| r > 0.0).collect();
        for w in positive.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        if positive.len() < rates.len() {
            prop_assert!(rates[positive.len()..].iter().all(|&r| r <= 0.0));
        }
    }
}

#[test]
fn correlation_ratios_tend_to_one() {
    for vm in [1e-3, 1e-4, 1e-5] {
        assert!((z_four(vm) / z_gaussian(vm) - 1.0).abs() < 10.0 * vm);
        assert!((z_eight(vm) / z_gaussian(vm) - 1.0).abs() < 10.0 * vm);
    }
}

#[test]
fn finite_rate_converges_to_asymptotic() {
    for protocol in [
        Protocol::Gaussian,
        Protocol::FourState,
        Protocol::EightState,
        Protocol::Ml,
    ] {
        let mut p = KeyRateParams::new(protocol, 0.35, 1.0).at_distance(20.0);
        p.block_length = 100_000_000_000_000;
        p.key_signals = p.block_length;
        let fin = rate_finite(&p).unwrap().key_rate;
        let asy = rate_asymptotic(&p).unwrap().key_rate;
        assert!((fin - asy).abs() < 1e-4, "{protocol}: {fin} vs {asy}");
    }
}

// protocol

fn scenario(active: &EncodingRule, eve: &EncodingRule) -> AttackScenario {
    AttackScenario {
        name: "x".into(),
        active_rule: active.clone(),
        eve_rule: eve.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn noiseless_prediction_agrees_for_any_rule(kind in kind(), vm in 1.0f64..80.0, k in 1usize..8, rule_pick in 0usize..4, seed in any::<u64>()) {
        let rule = match (kind, rule_pick) {
            (ModulationKind::Qpsk, _) => EncodingRule::natural_binary(4).unwrap(),
            (_, 0) => EncodingRule::eight_state_public(),
            (_, 1) => EncodingRule::learning_round_one(),
            _ => EncodingRule::learning_round_two(),
        };
        let cfg = SessionConfig {
            kind, modulation_variance: vm, channel: ChannelParams::noiseless(),
            qmlc: QmlcParams::with_k(k), training_size: 120, testing_size: 80, prediction_size: 150, rule,
            ..SessionConfig::default()
        };
        let (_, t) = run_session(&cfg, seed).unwrap();
        prop_assert_eq!(t.erasures, 0);
        prop_assert_eq!(t.symbol_agreement, 1.0);
        prop_assert_eq!(t.alice_bits(), t.bob_bits());
        prop_assert_eq!(t.alice_key.len(), t.bob_key.len());
    }

    #[test]
    fn rule_refresh_keeps_agreement_rate(seed in any::<u64>(), km in 5.0f64..40.0) {
        let mut cfg = SessionConfig {
            modulation_variance: 30.0, channel: ChannelParams::fiber(km, 0.01).unwrap(),
            training_size: 300, testing_size: 100, prediction_size: 300, auc_threshold: 0.51,
            ..SessionConfig::default()
        };
        let (_, a) = run_session(&cfg, seed).unwrap();
        cfg.rule = EncodingRule::learning_round_two();
        let (_, b) = run_session(&cfg, seed).unwrap();
        prop_assert_eq!(a.symbol_agreement, b.symbol_agreement);
        prop_assert_eq!(a.erasures, b.erasures);
        prop_assert_eq!(a.alice_key.len(), a.bob_key.len());
    }
}

proptest! {
    #[test]
    fn eve_matches_alice_iff_rules_match(sent in prop::collection::vec(1usize..=8, 1..12), a in 0usize..3, e in 0usize..3) {
        let rules = [EncodingRule::eight_state_public(), EncodingRule::learning_round_one(), EncodingRule::learning_round_two()];
        let row = &intercept_resend_demo(&[scenario(&rules[a], &rules[e])], &sent).unwrap()[0];
        prop_assert_eq!(&row.alice, &row.bob);
        // rules 1 and 2 agree on no state; rule 3 differs from both on every state
        prop_assert_eq!(row.eve == row.alice, a == e);
    }
}

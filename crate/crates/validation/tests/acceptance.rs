//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mlcvqkd::channel::{transmit_batch, ChannelParams, RandomSource};
use mlcvqkd::classifier::{train, QmlcParams};
use mlcvqkd::keyrate::holevo::symplectic_spectrum;
use mlcvqkd::keyrate::{
    covariance_z, optimize_vm, rate_finite, z_eight, z_four, z_gaussian, EveTerm, KeyRateParams,
    OptimizerSettings, Protocol,
};
use mlcvqkd::metrics::roc_curve;
use mlcvqkd::protocol::{
    intercept_resend_demo, learn_once, standard_scenarios, SessionConfig, DEMO_SENT,
};
use mlcvqkd::statespace::{Label, PhasePoint};
use mlcvqkd::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn attack_table() -> Outcome {
    let rows = intercept_resend_demo(&standard_scenarios(), &DEMO_SENT).unwrap();
    let expected = [
        ["011 110 001", "011 110 001", "011 110 001"],
        ["100 001 110", "100 001 110", "011 110 001"],
        ["1 1011 10101", "1 1011 10101", "100 001 110"],
    ];
    let got: Vec<[&str; 3]> = rows
        .iter()
        .map(|r| [r.alice.as_str(), r.bob.as_str(), r.eve.as_str()])
        .collect();
    let pass = got == expected;
    outcome(pass, format!("decoded strings {got:?}"))
}

fn optimal_variance_floors() -> Outcome {
    let distances = [80.0, 90.0, 100.0];
    let mut pass = true;
    let mut parts = Vec::new();
    for (protocol, target) in [(Protocol::FourState, 0.30), (Protocol::EightState, 0.35)] {
        let base = KeyRateParams::new(protocol, 1.0, 1.0);
        let opts = optimize_vm(
            &base,
            &distances,
            &OptimizerSettings::default(),
            Execution::default(),
        )
        .unwrap();
        let vms: Vec<String> = opts
            .iter()
            .map(|o| {
                pass &= (o.optimal_vm - target).abs() <= 0.05 && o.positive;
                format!("{}km={:.3}", o.distance_km, o.optimal_vm)
            })
            .collect();
        parts.push(format!(
            "{protocol} target {target}±0.05: {}",
            vms.join(" ")
        ));
    }
    let tail: Vec<String> = [Protocol::FourState, Protocol::EightState]
        .iter()
        .map(|&p| {
            let o = optimize_vm(
                &KeyRateParams::new(p, 1.0, 1.0),
                &[150.0],
                &OptimizerSettings::default(),
                Execution::default(),
            )
            .unwrap()[0];
            format!("{p} 150km={:.3}", o.optimal_vm)
        })
        .collect();
    parts.push(format!("(for reference {})", tail.join(", ")));
    outcome(pass, parts.join("; "))
}

fn z_convergence() -> Outcome {
    let mut worst_small: f64 = 0.0;
    for i in 1..=200 {
        let vm = 0.2 * i as f64 / 200.0;
        let zg = z_gaussian(vm);
        worst_small = worst_small
            .max((z_four(vm) - zg).abs() / zg)
            .max((z_eight(vm) - zg).abs() / zg);
    }
    let mut order_violations = 0;
    for i in 1..=200 {
        let vm = 100.0 * i as f64 / 200.0;
        if !(z_four(vm) <= z_eight(vm) && z_eight(vm) <= z_gaussian(vm)) {
            order_violations += 1;
        }
    }
    outcome(
        worst_small < 0.01 && order_violations == 0,
        format!("max relative gap for V_m <= 0.2: {worst_small:.2e}; ordering violations on (0,100]: {order_violations}"),
    )
}

fn operating_point(vm: f64, seed: u64) -> mlcvqkd::metrics::EvaluationReport {
    let cfg = SessionConfig {
        modulation_variance: vm,
        channel: ChannelParams::fiber(20.0, 0.01).unwrap(),
        qmlc: QmlcParams::with_k(9),
        training_size: 5000,
        testing_size: 10_000,
        ..SessionConfig::default()
    };
    learn_once(&cfg, seed, 0).unwrap().report
}

const SEED: u64 = 20_190_901;

fn classifier_auc() -> Outcome {
    let r = operating_point(50.0, SEED);
    let auc = r.average_auc.unwrap_or(f64::NAN);
    outcome(
        (0.85..=1.0).contains(&auc),
        format!("average AUC at 20 km, V_m=50: {auc:.4}"),
    )
}

fn classifier_prec_rec() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for vm in [40.0, 50.0, 60.0, 80.0] {
        let r = operating_point(vm, SEED);
        pass &= r.precision >= 0.95 && r.recall >= 0.95;
        parts.push(format!(
            "V_m={vm}: Prec={:.4} Rec={:.4}",
            r.precision, r.recall
        ));
    }
    outcome(pass, parts.join("; "))
}

fn finite_size_positivity() -> Outcome {
    let mut p = KeyRateParams::new(Protocol::Ml, 0.35, 1.0)
        .at_distance(10.0)
        .with_block(1_000_000);
    p.classifier_efficiency = 0.927;
    p.eve_term = EveTerm::Zero;
    let r = rate_finite(&p).unwrap();
    outcome(
        r.key_rate > 0.0,
        format!(
            "K = {:.6e} (I = {:.6e}, Δ = {:.6e})",
            r.key_rate, r.mutual_information, r.delta_n
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..200 {
        let fx = common::Fixture::random(10_000 + seed);
        let model = train(fx.samples(), QmlcParams::with_k(fx.k)).unwrap();
        let oracle = common::CountingOracle::fit(fx.points.clone(), fx.labels.clone(), fx.k);
        for q in fx.queries.iter().chain(&fx.points) {
            let want = oracle.decide(q);
            let got = model.predict(&common::to_features(q)).unwrap();
            let ratios_ok = (0..4).all(|j| {
                common::close_to_fraction(
                    got.ratios[j],
                    want.ratio_num[j],
                    want.ratio_den[j],
                    1e-12,
                )
            });
            if got.labels != want.labels || got.neighbor_counts != want.counts || !ratios_ok {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("200 fixtures, {mismatches} mismatching predictions"),
    )
}

fn numerical_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut chi_gap: f64 = 0.0;
    let mut lambda5_ok = true;
    for _ in 0..10_000 {
        let protocol = [
            Protocol::Gaussian,
            Protocol::FourState,
            Protocol::EightState,
        ][rng.random_range(0..3)];
        let mut p = KeyRateParams::new(protocol, rng.random_range(0.01..60.0), 1.0)
            .at_distance(rng.random_range(0.0..150.0));
        p.excess_noise = rng.random_range(0.0..0.1);
        p.efficiency = rng.random_range(0.3..1.0);
        p.electronic_noise = rng.random_range(0.0..0.2);
        chi_gap =
            chi_gap.max((p.chi_tot() - p.chi_tot_direct()).abs() / p.chi_tot().abs().max(1.0));
        let z = covariance_z(protocol, p.modulation_variance);
        match symplectic_spectrum(&p, p.transmittance, p.excess_noise, z) {
            Ok(s) => lambda5_ok &= s.lambdas[4] == 1.0,
            Err(_) => lambda5_ok = false,
        }
    }

    let mut norm_gap: f64 = 0.0;
    for seed in 0..200 {
        let fx = common::Fixture::random(seed);
        let model = train(fx.samples(), QmlcParams::with_k(fx.k)).unwrap();
        for l in Label::ALL {
            for t in [model.conditional_with(l), model.conditional_without(l)] {
                norm_gap = norm_gap.max((t.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }

    let mut auc_gap: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(2..=100);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if let (Some((_, auc)), Some(u)) = (
            roc_curve(&scores, &truth).unwrap(),
            common::mann_whitney(&scores, &truth),
        ) {
            auc_gap = auc_gap.max((auc - u).abs());
        }
    }
    let pass = chi_gap <= 1e-12 && lambda5_ok && norm_gap <= 1e-12 && auc_gap <= 1e-12;
    outcome(
        pass,
        format!("χ_tot gap {chi_gap:.1e}, λ5 == 1: {lambda5_ok}, normalisation gap {norm_gap:.1e}, |AUC − U| {auc_gap:.1e}"),
    )
}

fn channel_moments() -> Outcome {
    let x = PhasePoint::new(3.0, -2.0);
    let settings = [
        (0.5, 0.01, 0.0),
        (10f64.powf(-0.4), 0.05, 0.7),
        (0.9, 0.1, FRAC_PI_2),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(t, xi, phi)) in settings.iter().enumerate() {
        let ch = ChannelParams::with_transmittance(t, xi)
            .unwrap()
            .fixed_drift(phi)
            .unwrap();
        let out = transmit_batch(
            &vec![x; 100_000],
            &ch,
            &mut RandomSource::new(100 + i as u64),
        );
        let n = out.len() as f64;
        let mean = |f: fn(&PhasePoint) -> f64| out.iter().map(f).sum::<f64>() / n;
        let (mq, mp) = (mean(|o| o.q), mean(|o| o.p));
        let vq = out.iter().map(|o| (o.q - mq).powi(2)).sum::<f64>() / (n - 1.0);
        let vp = out.iter().map(|o| (o.p - mp).powi(2)).sum::<f64>() / (n - 1.0);
        let want_q = t.sqrt() * (x.q * phi.cos() + x.p * phi.sin());
        let want_p = t.sqrt() * (x.p * phi.cos() - x.q * phi.sin());
        let want_v = 1.0 + t * xi;
        let errs = [
            (mq - want_q).abs() / want_q.abs(),
            (mp - want_p).abs() / want_p.abs(),
            (vq - want_v).abs() / want_v,
            (vp - want_v).abs() / want_v,
        ];
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        pass &= worst < 0.05;
        parts.push(format!(
            "T={t:.3} ξ={xi} φ0={phi:.3}: worst rel err {worst:.2e}"
        ));
    }
    outcome(pass, parts.join("; "))
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1",
            "Intercept-resend decoding table",
            Duration::from_secs(1),
            attack_table,
        ),
        (
            "2",
            "Optimal-variance floors at 80-100 km",
            Duration::from_secs(120),
            optimal_variance_floors,
        ),
        (
            "3",
            "Z convergence and ordering",
            Duration::from_secs(10),
            z_convergence,
        ),
        (
            "4a",
            "Classifier average AUC in [0.85, 1]",
            Duration::from_secs(300),
            classifier_auc,
        ),
        (
            "4b",
            "Classifier macro Prec/Rec >= 0.95 for V_m >= 40",
            Duration::from_secs(300),
            classifier_prec_rec,
        ),
        (
            "5",
            "Finite-size ML rate positive at 10 km",
            Duration::from_secs(1),
            finite_size_positivity,
        ),
        (
            "6",
            "Classifier equals counting oracle",
            Duration::from_secs(60),
            oracle_equivalence,
        ),
        (
            "7",
            "Numerical identities",
            Duration::from_secs(60),
            numerical_identities,
        ),
        (
            "8",
            "Channel moments",
            Duration::from_secs(60),
            channel_moments,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "[{}] criterion {id}: {name} | {} | {:.3} s (budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", 9 - failed, 9);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mlcvqkd::channel::{ChannelParams, RandomSource};
use mlcvqkd::classifier::TrainedClassifier;
use mlcvqkd::keyrate::{optimize_vm, rate_curve, write_rate_csv, KeyRateParams};
use mlcvqkd::metrics::EvaluationReport;
use mlcvqkd::numfmt::sig17;
use mlcvqkd::protocol::{
    bits_to_hex, intercept_resend_demo, learn_once, render_attack_table, simulate_population,
    standard_scenarios, state_learning, state_prediction, streams, SessionConfig, DEMO_SENT,
};
use mlcvqkd::Error;
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(Error::from)?;
    for row in rows {
        w.write_record(row).map_err(Error::from)?;
    }
    w.flush().map_err(|e| CliError::File(path.to_path_buf(), e))
}

/// Creates the output directory and records the configuration actually used.
pub fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::File(cfg.out.clone(), e))?;
    write_json(&cfg.out.join("effective_config.json"), cfg)
}

/// Mixes `x` into a well-spread 64-bit value.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one evaluate grid point, independent of the rest of the grid.
fn grid_seed(master: u64, vm: f64, distance_km: f64) -> u64 {
    splitmix64(master ^ splitmix64(vm.to_bits() ^ splitmix64(distance_km.to_bits())))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let session = &cfg.session;
    let scheme = session.scheme()?;
    let mut rng = RandomSource::with_stream(cfg.seed, streams::SIMULATE);
    let pop = simulate_population(
        &scheme,
        &session.channel,
        cfg.simulate.population,
        &mut rng,
        session.execution,
    );

    #[derive(Serialize)]
    struct Row {
        true_state: usize,
        q_in: f64,
        p_in: f64,
        q_out: f64,
        p_out: f64,
    }
    let rows: Vec<Row> = (0..pop.len())
        .map(|i| Row {
            true_state: pop.states[i],
            q_in: pop.sent[i].q,
            p_in: pop.sent[i].p,
            q_out: pop.received[i].q,
            p_out: pop.received[i].p,
        })
        .collect();
    match cfg.format {
        OutputFormat::Json => write_json(&cfg.out.join("simulate.json"), &rows)?,
        OutputFormat::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.true_state.to_string(),
                        sig17(r.q_in),
                        sig17(r.p_in),
                        sig17(r.q_out),
                        sig17(r.p_out),
                    ]
                })
                .collect();
            write_csv(
                &cfg.out.join("simulate.csv"),
                &["true_state", "q_in", "p_in", "q_out", "p_out"],
                &table,
            )?;
        }
    }
    println!(
        "simulate: {} samples written to {}",
        rows.len(),
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct LearnSummary<'a> {
    accepted: bool,
    auc_threshold: f64,
    filter_threshold: Option<f64>,
    training_discarded: Option<usize>,
    testing_discarded: Option<usize>,
    attempts: Option<u32>,
    report: &'a EvaluationReport,
}

pub fn learn(cfg: &RunConfig) -> Result<()> {
    let eval_path = cfg.out.join("evaluation.json");
    match state_learning(&cfg.session, cfg.seed) {
        Ok(outcome) => {
            write_json(&cfg.out.join("classifier.json"), &outcome.classifier)?;
            write_json(
                &eval_path,
                &LearnSummary {
                    accepted: true,
                    auc_threshold: cfg.session.auc_threshold,
                    filter_threshold: Some(outcome.filter_threshold),
                    training_discarded: Some(outcome.training_discarded),
                    testing_discarded: Some(outcome.testing_discarded),
                    attempts: Some(outcome.attempts),
                    report: &outcome.report,
                },
            )?;
            if cfg.format == OutputFormat::Csv {
                outcome
                    .report
                    .write_roc_csv(create(&cfg.out.join("roc.csv"))?)?;
            }
            println!(
                "learn: accepted, average AUC {:.4}, Prec {:.4}, Rec {:.4}",
                outcome.report.lambda(),
                outcome.report.precision,
                outcome.report.recall
            );
            Ok(())
        }
        Err(Error::LearningRejected {
            auc,
            threshold,
            report,
        }) => {
            write_json(
                &eval_path,
                &LearnSummary {
                    accepted: false,
                    auc_threshold: threshold,
                    filter_threshold: None,
                    training_discarded: None,
                    testing_discarded: None,
                    attempts: Some(cfg.session.max_retries + 1),
                    report: &report,
                },
            )?;
            Err(Error::LearningRejected {
                auc,
                threshold,
                report,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn predict(cfg: &RunConfig, classifier_path: &Path) -> Result<()> {
    let text = fs::read_to_string(classifier_path)
        .map_err(|e| CliError::File(classifier_path.to_path_buf(), e))?;
    let classifier: TrainedClassifier = serde_json::from_str(&text).map_err(Error::from)?;
    let transcript = state_prediction(&classifier, &cfg.session, cfg.seed)?;
    write_json(&cfg.out.join("transcript.json"), &transcript)?;
    write_text(
        &cfg.out.join("alice_key.hex"),
        &format!("{}\n", bits_to_hex(&transcript.alice_bits())),
    )?;
    write_text(
        &cfg.out.join("bob_key.hex"),
        &format!("{}\n", bits_to_hex(&transcript.bob_bits())),
    )?;
    println!(
        "predict: {} symbols kept, {} erased, {} filtered, symbol agreement {:.4}, bit agreement {:.4}",
        transcript.alice_key.len(),
        transcript.erasures,
        transcript.filtered,
        transcript.symbol_agreement,
        transcript.bit_agreement
    );
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    modulation_variance: f64,
    distance_km: f64,
    seed: u64,
    precision: f64,
    recall: f64,
    fpr: f64,
    average_precision: Option<f64>,
    average_auc: Option<f64>,
    erasure_rate: f64,
    state_accuracy: f64,
    training_discarded: usize,
    testing_discarded: usize,
}

fn grid_point(session: &SessionConfig, master: u64, vm: f64, d: f64) -> mlcvqkd::Result<GridRow> {
    let ch = session.channel;
    let channel = ChannelParams::fiber_with_loss(d, ch.loss_db_per_km(), ch.excess_noise())?
        .phase_drift(ch.drift())?
        .shot_noise(ch.n0())?;
    let point = SessionConfig {
        modulation_variance: vm,
        channel,
        ..session.clone()
    };
    let seed = grid_seed(master, vm, d);
    let o = learn_once(&point, seed, 0)?;
    Ok(GridRow {
        modulation_variance: vm,
        distance_km: d,
        seed,
        precision: o.report.precision,
        recall: o.report.recall,
        fpr: o.report.fpr,
        average_precision: o.report.average_precision,
        average_auc: o.report.average_auc,
        erasure_rate: o.report.erasure_rate,
        state_accuracy: o.report.state_accuracy,
        training_discarded: o.training_discarded,
        testing_discarded: o.testing_discarded,
    })
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let grid: Vec<(f64, f64)> = cfg
        .evaluate
        .modulation_variances
        .iter()
        .flat_map(|&vm| cfg.evaluate.distances_km.iter().map(move |&d| (vm, d)))
        .collect();
    let rows: Vec<GridRow> = cfg
        .session
        .execution
        .map(&grid, |&(vm, d)| grid_point(&cfg.session, cfg.seed, vm, d))
        .into_iter()
        .collect::<mlcvqkd::Result<_>>()?;
    match cfg.format {
        OutputFormat::Json => write_json(&cfg.out.join("evaluate.json"), &rows)?,
        OutputFormat::Csv => {
            let opt = |x: Option<f64>| sig17(x.unwrap_or(f64::NAN));
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        sig17(r.modulation_variance),
                        sig17(r.distance_km),
                        r.seed.to_string(),
                        sig17(r.precision),
                        sig17(r.recall),
                        sig17(r.fpr),
                        opt(r.average_precision),
                        opt(r.average_auc),
                        sig17(r.erasure_rate),
                        sig17(r.state_accuracy),
                        r.training_discarded.to_string(),
                        r.testing_discarded.to_string(),
                    ]
                })
                .collect();
            write_csv(
                &cfg.out.join("evaluate.csv"),
                &[
                    "V_m",
                    "distance_km",
                    "seed",
                    "precision",
                    "recall",
                    "fpr",
                    "average_precision",
                    "average_auc",
                    "erasure_rate",
                    "state_accuracy",
                    "training_discarded",
                    "testing_discarded",
                ],
                &table,
            )?;
        }
    }
    println!(
        "evaluate: {} grid points written to {}",
        rows.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn keyrate(cfg: &RunConfig) -> Result<()> {
    let kr = &cfg.keyrate;
    let mut points = Vec::new();
    for &protocol in &kr.protocols {
        let base = KeyRateParams {
            protocol,
            ..kr.params
        };
        points.extend(rate_curve(
            &base,
            &kr.distances_km,
            kr.kind,
            cfg.session.execution,
        )?);
    }
    match cfg.format {
        OutputFormat::Json => write_json(&cfg.out.join("keyrate.json"), &points)?,
        OutputFormat::Csv => write_rate_csv(create(&cfg.out.join("keyrate.csv"))?, &points)?,
    }
    println!(
        "keyrate: {} rows written to {}",
        points.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn optimize(cfg: &RunConfig) -> Result<()> {
    let opt = &cfg.optimize;
    #[derive(Serialize)]
    struct Row {
        protocol: mlcvqkd::keyrate::Protocol,
        #[serde(flatten)]
        optimum: mlcvqkd::keyrate::VmOptimum,
    }
    let mut rows = Vec::new();
    for &protocol in &opt.protocols {
        let base = KeyRateParams {
            protocol,
            ..cfg.keyrate.params
        };
        for optimum in optimize_vm(
            &base,
            &opt.distances_km,
            &opt.settings,
            cfg.session.execution,
        )? {
            rows.push(Row { protocol, optimum });
        }
    }
    match cfg.format {
        OutputFormat::Json => write_json(&cfg.out.join("optimize.json"), &rows)?,
        OutputFormat::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let o = &r.optimum;
                    let status = if o.positive { "ok" } else { "no positive rate" };
                    vec![
                        sig17(o.distance_km),
                        sig17(o.optimal_vm),
                        sig17(o.key_rate),
                        r.protocol.to_string(),
                        status.into(),
                    ]
                })
                .collect();
            write_csv(
                &cfg.out.join("optimize.csv"),
                &[
                    "distance_km",
                    "optimal_Vm",
                    "key_rate",
                    "protocol",
                    "status",
                ],
                &table,
            )?;
        }
    }
    println!(
        "optimize: {} rows written to {}",
        rows.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn attack_demo(cfg: &RunConfig) -> Result<()> {
    let rows = intercept_resend_demo(&standard_scenarios(), &DEMO_SENT)?;
    let table = render_attack_table(&rows);
    print!("{table}");
    write_text(&cfg.out.join("attack_demo.txt"), &table)?;
    if cfg.format == OutputFormat::Json {
        write_json(&cfg.out.join("attack_demo.json"), &rows)?;
    }
    Ok(())
}

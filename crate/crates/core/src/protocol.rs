//! Two-phase ML-CVQKD sessions: state learning (train and validate the
//! classifier), state prediction (classify received states into key
//! symbols), and the intercept-resend demonstration for encoding rules.
//!
//! Error correction, parameter estimation and privacy amplification are not
//! simulated here; their cost enters the key rate through `β` and `Δ(n)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{transmit_batch_with, ChannelParams, RandomSource};
use crate::classifier::{decode_state, train, Decoded, QmlcParams, TrainedClassifier};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{extract_batch, filter, LabeledSample, ReferenceSet, Threshold};
use crate::metrics::{evaluate, EvaluationReport};
use crate::statespace::{build_scheme, EncodingRule, ModulationKind, ModulationScheme, PhasePoint};

/// ChaCha stream ids for each stage of a run.
pub mod streams {
    pub const SIMULATE: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
    pub const PREDICT: u64 = 4;
    /// Offset between the stream blocks of successive learning attempts.
    pub const RETRY_STRIDE: u64 = 16;
}

pub const TRANSCRIPT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub kind: ModulationKind,
    pub modulation_variance: f64,
    pub channel: ChannelParams,
    pub qmlc: QmlcParams,
    pub training_size: usize,
    pub testing_size: usize,
    pub prediction_size: usize,
    /// Active encoding rule for the key symbols.
    pub rule: EncodingRule,
    /// Learning passes when the average AUC reaches this value.
    pub auc_threshold: f64,
    pub filter: Threshold,
    /// Extra learning attempts after a rejection.
    pub max_retries: u32,
    /// Feature reference points; `None` uses the constellation itself.
    pub references: Option<Vec<PhasePoint>>,
    pub execution: Execution,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            kind: ModulationKind::Psk8,
            modulation_variance: 50.0,
            channel: ChannelParams::fiber(20.0, 0.01).expect("default channel is valid"),
            qmlc: QmlcParams::default(),
            training_size: 5000,
            testing_size: 10_000,
            prediction_size: 10_000,
            rule: EncodingRule::learning_round_one(),
            auc_threshold: 0.9,
            filter: Threshold::default(),
            max_retries: 0,
            references: None,
            execution: Execution::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let scheme = self.scheme()?;
        if self.training_size <= self.qmlc.k {
            return Err(Error::param(format!(
                "training_size ({}) must exceed k ({})",
                self.training_size, self.qmlc.k
            )));
        }
        if self.testing_size == 0 || self.prediction_size == 0 {
            return Err(Error::param(
                "testing_size and prediction_size must be positive",
            ));
        }
        if !(self.auc_threshold > 0.5 && self.auc_threshold <= 1.0) {
            return Err(Error::param(format!(
                "auc_threshold must lie in (0.5, 1], got {}",
                self.auc_threshold
            )));
        }
        if self.rule.state_count() != scheme.len() {
            return Err(Error::param(format!(
                "rule {} covers {} states but the constellation has {}",
                self.rule.rule_id(),
                self.rule.state_count(),
                scheme.len()
            )));
        }
        self.reference_set(&scheme)?;
        self.filter.resolve::<LabeledSample>(&[])?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<ModulationScheme> {
        build_scheme(self.kind, self.modulation_variance)
    }

    fn reference_set(&self, scheme: &ModulationScheme) -> Result<ReferenceSet> {
        match &self.references {
            Some(points) => ReferenceSet::new(points.clone()),
            None => Ok(ReferenceSet::from_scheme(scheme)),
        }
    }
}

/// Symbols sent through the channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    /// 1-based constellation indices.
    pub states: Vec<usize>,
    pub sent: Vec<PhasePoint>,
    pub received: Vec<PhasePoint>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws `n` states uniformly from the constellation and transmits them.
pub fn simulate_population(
    scheme: &ModulationScheme,
    channel: &ChannelParams,
    n: usize,
    rng: &mut RandomSource,
    exec: Execution,
) -> Population {
    let m = scheme.len();
    let states: Vec<usize> = (0..n).map(|_| rng.index(m) + 1).collect();
    let sent: Vec<PhasePoint> = states
        .iter()
        .map(|&k| scheme.states()[k - 1].point)
        .collect();
    let received = transmit_batch_with(&sent, channel, rng, exec);
    Population {
        states,
        sent,
        received,
    }
}

fn labeled(
    scheme: &ModulationScheme,
    refs: &ReferenceSet,
    pop: &Population,
    exec: Execution,
) -> Vec<LabeledSample> {
    extract_batch(&pop.received, refs, exec)
        .into_iter()
        .zip(&pop.states)
        .map(|(features, &k)| LabeledSample {
            features,
            labels: scheme.states()[k - 1].labels,
            true_state: k,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearningOutcome {
    pub classifier: TrainedClassifier,
    pub report: EvaluationReport,
    /// Absolute feature cap resolved on the training set.
    pub filter_threshold: f64,
    pub training_discarded: usize,
    pub testing_discarded: usize,
    /// 1 for a first-try pass.
    pub attempts: u32,
}

/// One learning attempt without the AUC gate: generate training and testing
/// populations on their own streams, filter with the training-set cap,
/// train, and evaluate on the kept testing samples.
pub fn learn_once(config: &SessionConfig, seed: u64, attempt: u32) -> Result<LearningOutcome> {
    config.validate()?;
    let exec = config.execution;
    let scheme = config.scheme()?;
    let refs = config.reference_set(&scheme)?;
    let block = attempt as u64 * streams::RETRY_STRIDE;

    let mut train_rng = RandomSource::with_stream(seed, streams::TRAIN + block);
    let train_pop = simulate_population(
        &scheme,
        &config.channel,
        config.training_size,
        &mut train_rng,
        exec,
    );
    let mut test_rng = RandomSource::with_stream(seed, streams::TEST + block);
    let test_pop = simulate_population(
        &scheme,
        &config.channel,
        config.testing_size,
        &mut test_rng,
        exec,
    );

    let training = labeled(&scheme, &refs, &train_pop, exec);
    let cap = config.filter.resolve(&training)?;
    let training = filter(training, Threshold::Absolute(cap))?;
    let testing = filter(
        labeled(&scheme, &refs, &test_pop, exec),
        Threshold::Absolute(cap),
    )?;

    let classifier = train(training.kept, config.qmlc)?;
    let queries: Vec<_> = testing.kept.iter().map(|s| s.features.clone()).collect();
    let predictions = classifier.predict_batch(&queries, exec)?;
    let decoded: Vec<Decoded> = predictions
        .iter()
        .map(|p| decode_state(p, &scheme))
        .collect();
    let truths: Vec<_> = testing.kept.iter().map(|s| s.labels).collect();
    let states: Vec<_> = testing.kept.iter().map(|s| s.true_state).collect();
    let report = evaluate(&predictions, &decoded, &truths, &states)?;

    Ok(LearningOutcome {
        classifier,
        report,
        filter_threshold: cap,
        training_discarded: training.discarded.len(),
        testing_discarded: testing.discarded.len(),
        attempts: attempt + 1,
    })
}

/// State learning with the AUC gate and up to `max_retries` restarts.
///
/// Returns [`Error::LearningRejected`] carrying the last report when every
/// attempt falls below `auc_threshold`.
pub fn state_learning(config: &SessionConfig, seed: u64) -> Result<LearningOutcome> {
    let mut attempt = 0;
    loop {
        let outcome = learn_once(config, seed, attempt)?;
        let auc = outcome.report.average_auc.unwrap_or(f64::NAN);
        if auc >= config.auc_threshold {
            return Ok(outcome);
        }
        if attempt >= config.max_retries {
            return Err(Error::LearningRejected {
                auc,
                threshold: config.auc_threshold,
                report: Box::new(outcome.report),
            });
        }
        attempt += 1;
    }
}

/// Feature cap for prediction that matches what learning applied.
///
/// A quantile cap always equals the largest max entry among the kept
/// training samples, so it can be recovered from the classifier alone.
pub fn prediction_cap(config: &SessionConfig, classifier: &TrainedClassifier) -> f64 {
    match config.filter {
        Threshold::Absolute(t) => t,
        Threshold::Quantile(_) => classifier
            .samples()
            .iter()
            .map(|s| s.features.max_entry())
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolOutcome {
    /// Bob decoded a state; both sides keep the symbol.
    Kept,
    /// Bob's label set matched no state.
    Erased,
    /// The received point fell outside the feature cap.
    Filtered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub sent_state: usize,
    pub received: PhasePoint,
    pub outcome: SymbolOutcome,
    pub decoded_state: Option<usize>,
    /// Code words, present for kept symbols only.
    pub alice_bits: Option<String>,
    pub bob_bits: Option<String>,
}

/// Record of one state-prediction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub format_version: u32,
    pub seed: u64,
    pub rule_id: String,
    pub modulation: ModulationKind,
    pub modulation_variance: f64,
    pub channel: ChannelParams,
    /// Training-set size and `k` of the classifier used.
    pub classifier_samples: usize,
    pub classifier_k: usize,
    pub filter_threshold: f64,
    pub learning_report: Option<EvaluationReport>,
    pub symbols: Vec<SymbolRecord>,
    /// Code words of the kept symbols, in order.
    pub alice_key: Vec<String>,
    pub bob_key: Vec<String>,
    pub erasures: usize,
    pub filtered: usize,
    /// Fraction of kept symbols decoded to the sent state.
    pub symbol_agreement: f64,
    /// Matching bit positions over aligned code words.
    pub bit_agreement: f64,
}

impl SessionTranscript {
    pub fn alice_bits(&self) -> String {
        self.alice_key.concat()
    }

    pub fn bob_bits(&self) -> String {
        self.bob_key.concat()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Compares code words position by position; a length mismatch counts every
/// surplus position as a disagreement.
pub fn bit_agreement(alice: &[String], bob: &[String]) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for (a, b) in alice.iter().zip(bob) {
        same += a.bytes().zip(b.bytes()).filter(|(x, y)| x == y).count();
        total += a.len().max(b.len());
    }
    if total == 0 {
        1.0
    } else {
        same as f64 / total as f64
    }
}

/// Packs a bit string MSB first into hex, zero-padding the final byte.
pub fn bits_to_hex(bits: &str) -> String {
    let mut out = String::with_capacity(bits.len().div_ceil(8) * 2);
    for chunk in bits.as_bytes().chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            if b == b'1' {
                byte |= 0x80 >> i;
            }
        }
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// State prediction with a trained classifier.
///
/// Alice draws `prediction_size` states uniformly on the prediction stream
/// and encodes them with the active rule; Bob filters, classifies, decodes
/// the state and looks up the same rule. Erased and filtered symbols are
/// dropped from both key streams.
#[allow(clippy::needless_range_loop)]
pub fn state_prediction(
    classifier: &TrainedClassifier,
    config: &SessionConfig,
    seed: u64,
) -> Result<SessionTranscript> {
    config.validate()?;
    let exec = config.execution;
    let scheme = config.scheme()?;
    let refs = config.reference_set(&scheme)?;
    if classifier.feature_width() != refs.len() {
        return Err(Error::input(format!(
            "classifier expects {} features but the reference set has {}",
            classifier.feature_width(),
            refs.len()
        )));
    }
    let cap = prediction_cap(config, classifier);

    let mut rng = RandomSource::with_stream(seed, streams::PREDICT);
    let pop = simulate_population(
        &scheme,
        &config.channel,
        config.prediction_size,
        &mut rng,
        exec,
    );
    let features = extract_batch(&pop.received, &refs, exec);
    let keep: Vec<bool> = features.iter().map(|f| f.max_entry() <= cap).collect();
    let queries: Vec<_> = features
        .into_iter()
        .zip(&keep)
        .filter_map(|(f, &k)| k.then_some(f))
        .collect();
    let mut predictions = classifier.predict_batch(&queries, exec)?.into_iter();

    let mut symbols = Vec::with_capacity(pop.len());
    let (mut alice_key, mut bob_key) = (Vec::new(), Vec::new());
    let (mut erasures, mut filtered, mut correct) = (0, 0, 0);
    for i in 0..pop.len() {
        let sent_state = pop.states[i];
        let mut record = SymbolRecord {
            sent_state,
            received: pop.received[i],
            outcome: SymbolOutcome::Filtered,
            decoded_state: None,
            alice_bits: None,
            bob_bits: None,
        };
        if !keep[i] {
            filtered += 1;
            symbols.push(record);
            continue;
        }
        let pred = predictions.next().expect("one prediction per kept symbol");
        match decode_state(&pred, &scheme) {
            Decoded::Erasure => {
                erasures += 1;
                record.outcome = SymbolOutcome::Erased;
            }
            Decoded::State(k) => {
                let a = config.rule.encode(sent_state)?.to_string();
                let b = config.rule.decode(k)?.to_string();
                correct += usize::from(k == sent_state);
                alice_key.push(a.clone());
                bob_key.push(b.clone());
                record.outcome = SymbolOutcome::Kept;
                record.decoded_state = Some(k);
                record.alice_bits = Some(a);
                record.bob_bits = Some(b);
            }
        }
        symbols.push(record);
    }

    let kept = alice_key.len();
    Ok(SessionTranscript {
        format_version: TRANSCRIPT_FORMAT_VERSION,
        seed,
        rule_id: config.rule.rule_id().to_string(),
        modulation: config.kind,
        modulation_variance: config.modulation_variance,
        channel: config.channel,
        classifier_samples: classifier.samples().len(),
        classifier_k: classifier.params().k,
        filter_threshold: cap,
        learning_report: None,
        symbol_agreement: if kept == 0 {
            1.0
        } else {
            correct as f64 / kept as f64
        },
        bit_agreement: bit_agreement(&alice_key, &bob_key),
        symbols,
        alice_key,
        bob_key,
        erasures,
        filtered,
    })
}

/// Learning followed by prediction, with the learning report attached.
pub fn run_session(
    config: &SessionConfig,
    seed: u64,
) -> Result<(LearningOutcome, SessionTranscript)> {
    let learned = state_learning(config, seed)?;
    let mut transcript = state_prediction(&learned.classifier, config, seed)?;
    transcript.learning_report = Some(learned.report.clone());
    Ok((learned, transcript))
}

/// One row of the intercept-resend demonstration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub name: String,
    /// Rule shared privately by Alice and Bob.
    pub active_rule: EncodingRule,
    /// Rule Eve decodes with (public, or a stale compromised one).
    pub eve_rule: EncodingRule,
}

/// States sent in the demonstration.
pub const DEMO_SENT: [usize; 3] = [4, 7, 2];

/// The three standard scenarios: conventional eight-state, ML after the
/// first learning round, and ML after the second with rule 2 compromised.
pub fn standard_scenarios() -> Vec<AttackScenario> {
    let r1 = EncodingRule::eight_state_public();
    let r2 = EncodingRule::learning_round_one();
    let r3 = EncodingRule::learning_round_two();
    vec![
        AttackScenario {
            name: "Eight-state CVQKD".into(),
            active_rule: r1.clone(),
            eve_rule: r1.clone(),
        },
        AttackScenario {
            name: "ML-CVQKD (after learning 1)".into(),
            active_rule: r2.clone(),
            eve_rule: r1,
        },
        AttackScenario {
            name: "ML-CVQKD (after learning 2)".into(),
            active_rule: r3,
            eve_rule: r2,
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRow {
    pub scenario: String,
    pub sent: Vec<usize>,
    pub alice: String,
    pub bob: String,
    pub eve: String,
}

fn decode_all(rule: &EncodingRule, states: &[usize]) -> Result<String> {
    let words: Vec<&str> = states
        .iter()
        .map(|&k| rule.decode(k))
        .collect::<Result<_>>()?;
    Ok(words.join(" "))
}

/// Noise-free intercept-resend: Eve learns every state exactly and resends
/// it, so Bob receives what Alice sent. Each party decodes with its rule.
pub fn intercept_resend_demo(
    scenarios: &[AttackScenario],
    sent: &[usize],
) -> Result<Vec<AttackRow>> {
    scenarios
        .iter()
        .map(|s| {
            Ok(AttackRow {
                scenario: s.name.clone(),
                sent: sent.to_vec(),
                alice: decode_all(&s.active_rule, sent)?,
                bob: decode_all(&s.active_rule, sent)?,
                eve: decode_all(&s.eve_rule, sent)?,
            })
        })
        .collect()
}

/// Plain-text table of the demonstration rows.
pub fn render_attack_table(rows: &[AttackRow]) -> String {
    let header = ["Scenario", "Sent states", "Alice", "Bob", "Eve"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let sent: Vec<String> = r.sent.iter().map(|k| format!("α{k}")).collect();
            [
                r.scenario.clone(),
                sent.join(" "),
                r.alice.clone(),
                r.bob.clone(),
                r.eve.clone(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

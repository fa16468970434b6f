//! Multi-label evaluation: Precision, Recall, FPR, Average Precision, ROC/AUC.
//!
//! Label-wise rates are macro-averaged (unweighted mean over labels). The
//! classifier efficiency `Λ` is the mean AUC over labels that have both
//! positive and negative samples.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifier::{Decoded, Prediction};
use crate::error::{Error, Result};
use crate::numfmt::sig17;
use crate::statespace::{Label, LabelSet, LABEL_COUNT};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// `TP / (TP + FP)`; with nothing predicted it is 1 when there was also
    /// nothing to find and 0 otherwise.
    pub fn precision(&self) -> f64 {
        match self.tp + self.fp {
            0 if self.fn_ == 0 => 1.0,
            0 => 0.0,
            d => self.tp as f64 / d as f64,
        }
    }

    /// `TP / (TP + FN)`; 1 when there are no positives.
    pub fn recall(&self) -> f64 {
        match self.tp + self.fn_ {
            0 => 1.0,
            d => self.tp as f64 / d as f64,
        }
    }

    /// `FP / (FP + TN)`; 0 when there are no negatives.
    pub fn fpr(&self) -> f64 {
        match self.fp + self.tn {
            0 => 0.0,
            d => self.fp as f64 / d as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_label: Vec<(Label, Confusion, Rates)>,
    /// Unweighted mean over labels.
    pub macro_avg: Rates,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::input(format!(
            "length mismatch: {a} predictions vs {b} truths"
        )));
    }
    Ok(())
}

pub fn prf(predictions: &[LabelSet], truths: &[LabelSet]) -> Result<PrfReport> {
    check_lengths(predictions.len(), truths.len())?;
    let mut per_label = Vec::with_capacity(LABEL_COUNT);
    for label in Label::ALL {
        let mut c = Confusion::default();
        for (p, t) in predictions.iter().zip(truths) {
            match (p.contains(label), t.contains(label)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        let rates = Rates {
            precision: c.precision(),
            recall: c.recall(),
            fpr: c.fpr(),
        };
        per_label.push((label, c, rates));
    }
    let n = LABEL_COUNT as f64;
    let macro_avg = Rates {
        precision: per_label.iter().map(|x| x.2.precision).sum::<f64>() / n,
        recall: per_label.iter().map(|x| x.2.recall).sum::<f64>() / n,
        fpr: per_label.iter().map(|x| x.2.fpr).sum::<f64>() / n,
    };
    Ok(PrfReport {
        per_label,
        macro_avg,
    })
}

/// 1-based rank of every label: higher score first, ties to the lower label.
pub fn label_ranks(scores: &[f64; LABEL_COUNT]) -> [usize; LABEL_COUNT] {
    let mut order: Vec<usize> = (0..LABEL_COUNT).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = [0; LABEL_COUNT];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos + 1;
    }
    ranks
}

/// Average Precision over samples with a non-empty true label set.
///
/// For each true label `y` of a sample, counts the true labels ranked at or
/// above `y` and divides by the rank of `y`; these fractions are averaged
/// over the sample's true labels and then over samples. Returns `None` when
/// no sample carries any true label.
pub fn average_precision(
    scores: &[[f64; LABEL_COUNT]],
    truths: &[LabelSet],
) -> Result<Option<f64>> {
    check_lengths(scores.len(), truths.len())?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (s, truth) in scores.iter().zip(truths) {
        if truth.is_empty() {
            continue;
        }
        let ranks = label_ranks(s);
        let mut acc = 0.0;
        for y in truth.iter() {
            let ry = ranks[y.index()];
            let above = truth.iter().filter(|y2| ranks[y2.index()] <= ry).count();
            acc += above as f64 / ry as f64;
        }
        total += acc / truth.len() as f64;
        counted += 1;
    }
    Ok((counted > 0).then(|| total / counted as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve of one binary problem and its trapezoidal area.
///
/// The threshold sweeps every distinct score from high to low, so tied
/// scores move the curve diagonally. Returns `None` when `truth` lacks
/// positives or negatives.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Option<(Vec<RocPoint>, f64)>> {
    check_lengths(scores.len(), truth.len())?;
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::input(format!("non-finite score {bad}")));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let next = RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        };
        area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
        points.push(next);
    }
    Ok(Some((points, area)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRoc {
    pub label: Label,
    pub points: Vec<RocPoint>,
    /// `None` when the label has no positive or no negative samples.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub per_label: Vec<LabelRoc>,
    /// Mean AUC over labels with a defined AUC.
    pub average_auc: Option<f64>,
    /// Labels excluded from the average.
    pub undefined: Vec<Label>,
}

pub fn roc_auc(scores: &[[f64; LABEL_COUNT]], truths: &[LabelSet]) -> Result<RocReport> {
    check_lengths(scores.len(), truths.len())?;
    let mut per_label = Vec::with_capacity(LABEL_COUNT);
    let mut undefined = Vec::new();
    for label in Label::ALL {
        let s: Vec<f64> = scores.iter().map(|x| x[label.index()]).collect();
        let t: Vec<bool> = truths.iter().map(|x| x.contains(label)).collect();
        match roc_curve(&s, &t)? {
            Some((points, auc)) => per_label.push(LabelRoc {
                label,
                points,
                auc: Some(auc),
            }),
            None => {
                undefined.push(label);
                per_label.push(LabelRoc {
                    label,
                    points: Vec::new(),
                    auc: None,
                });
            }
        }
    }
    let defined: Vec<f64> = per_label.iter().filter_map(|r| r.auc).collect();
    let average_auc =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(RocReport {
        per_label,
        average_auc,
        undefined,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: Label,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub auc: Option<f64>,
    pub roc: Vec<RocPoint>,
}

/// Everything measured on a testing set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub samples: usize,
    pub per_label: Vec<LabelSummary>,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub average_precision: Option<f64>,
    /// Mean AUC, used as the classifier efficiency `Λ`.
    pub average_auc: Option<f64>,
    pub undefined_auc: Vec<Label>,
    pub erasures: usize,
    pub erasure_rate: f64,
    /// Fraction of all samples decoded to the state actually sent.
    pub state_accuracy: f64,
    /// Same fraction among non-erased samples.
    pub kept_accuracy: f64,
}

impl EvaluationReport {
    /// Classifier efficiency `Λ` (average AUC), 0 when undefined.
    pub fn lambda(&self) -> f64 {
        self.average_auc.unwrap_or(0.0)
    }

    /// Writes the ROC point lists as `label,fpr,tpr`.
    pub fn write_roc_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["label", "fpr", "tpr"])?;
        for l in &self.per_label {
            for pt in &l.roc {
                out.write_record([l.label.to_string(), sig17(pt.fpr), sig17(pt.tpr)])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the full report for a testing set.
///
/// Erased predictions count as predicting no labels for Prec/Rec/FPR; ROC
/// and AP use the raw posterior ratios.
pub fn evaluate(
    predictions: &[Prediction],
    decoded: &[Decoded],
    truths: &[LabelSet],
    true_states: &[usize],
) -> Result<EvaluationReport> {
    let n = predictions.len();
    check_lengths(n, truths.len())?;
    check_lengths(n, decoded.len())?;
    check_lengths(n, true_states.len())?;

    let predicted: Vec<LabelSet> = predictions
        .iter()
        .zip(decoded)
        .map(|(p, d)| match d {
            Decoded::Erasure => LabelSet::EMPTY,
            Decoded::State(_) => p.labels,
        })
        .collect();
    let scores: Vec<[f64; LABEL_COUNT]> = predictions.iter().map(|p| p.ratios).collect();

    let prf = prf(&predicted, truths)?;
    let roc = roc_auc(&scores, truths)?;
    let ap = average_precision(&scores, truths)?;

    let erasures = decoded.iter().filter(|d| **d == Decoded::Erasure).count();
    let correct = decoded
        .iter()
        .zip(true_states)
        .filter(|(d, &k)| **d == Decoded::State(k))
        .count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };

    let per_label = prf
        .per_label
        .iter()
        .zip(roc.per_label)
        .map(|((label, confusion, rates), r)| LabelSummary {
            label: *label,
            confusion: *confusion,
            precision: rates.precision,
            recall: rates.recall,
            fpr: rates.fpr,
            auc: r.auc,
            roc: r.points,
        })
        .collect();

    Ok(EvaluationReport {
        samples: n,
        per_label,
        precision: prf.macro_avg.precision,
        recall: prf.macro_avg.recall,
        fpr: prf.macro_avg.fpr,
        average_precision: ap,
        average_auc: roc.average_auc,
        undefined_auc: roc.undefined,
        erasures,
        erasure_rate: ratio(erasures, n),
        state_accuracy: ratio(correct, n),
        kept_accuracy: ratio(correct, n - erasures),
    })
}

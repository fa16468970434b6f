//! Bayesian multi-label k-nearest-neighbour classifier.
//!
//! For every label `j` the classifier keeps a smoothed prior `P(H_j)` and two
//! histograms over `r = 0..=k`: how many training samples *with* label `j`
//! have exactly `r` label-`j` points among their `k` nearest neighbours
//! (`ς_j[r]`), and the same for samples *without* it (`ς̄_j[r]`). A query whose
//! neighbourhood holds `C_j` label-`j` points scores
//!
//! ```text
//! f(x, j) = P(H_j) · P(C_j | H_j) / (P(H̄_j) · P(C_j | H̄_j))
//! ```
//!
//! and receives label `j` when `f > t`.
//!
//! Neighbour search is an exact linear scan in feature space. Ties at equal
//! distance go to the lower training index. A training sample never counts
//! itself as its own neighbour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{FeatureVector, LabeledSample};
use crate::statespace::{Label, LabelSet, ModulationScheme, LABEL_COUNT};

/// Version tag written into serialized classifiers.
pub const CLASSIFIER_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmlcParams {
    /// Number of neighbours.
    pub k: usize,
    /// Additive smoothing weight (1 is Laplace smoothing).
    pub smoothing: f64,
    /// Decision threshold on the posterior ratio.
    pub threshold: f64,
}

impl Default for QmlcParams {
    fn default() -> Self {
        Self {
            k: 9,
            smoothing: 1.0,
            threshold: 1.0,
        }
    }
}

impl QmlcParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    fn validate(&self, training_size: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be positive"));
        }
        if self.k >= training_size {
            return Err(Error::param(format!(
                "k = {} needs more than {} training samples",
                self.k, training_size
            )));
        }
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return Err(Error::param(format!(
                "smoothing must be > 0, got {}",
                self.smoothing
            )));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::param(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest rows of `data` to `x`, nearest first.
fn nearest<T: AsRef<FeatureVector>>(
    x: &[f64],
    data: &[T],
    k: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, row) in data.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d = squared_distance(x, row.as_ref().as_slice());
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        // indices arrive in increasing order, so equal distances stay behind
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// The `k` training points nearest to `x`, nearest first.
pub fn count_neighbors<T: AsRef<FeatureVector>>(
    x: &FeatureVector,
    training: &[T],
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 || k >= training.len() {
        return Err(Error::param(format!(
            "k = {k} must be in 1..{} for this training set",
            training.len()
        )));
    }
    if let Some(row) = training.iter().find(|r| r.as_ref().len() != x.len()) {
        return Err(Error::input(format!(
            "feature width mismatch: query {} vs training {}",
            x.len(),
            row.as_ref().len()
        )));
    }
    Ok(nearest(x.as_slice(), training, k, None))
}

/// Output of [`TrainedClassifier::predict`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Posterior ratio `f(x, L_j)` for each label.
    pub ratios: [f64; LABEL_COUNT],
    /// Number of neighbours carrying each label.
    pub neighbor_counts: [usize; LABEL_COUNT],
    pub labels: LabelSet,
}

/// Result of mapping a predicted label set back to a constellation state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoded {
    State(usize),
    Erasure,
}

impl Decoded {
    pub fn state(self) -> Option<usize> {
        match self {
            Decoded::State(k) => Some(k),
            Decoded::Erasure => None,
        }
    }
}

/// Maps a label set to the unique state carrying it, or to an erasure.
///
/// For 8PSK a single label picks the quadrant-interior state and an adjacent
/// pair the axis state between them; for QPSK only singletons decode.
pub fn decode_state(pred: &Prediction, scheme: &ModulationScheme) -> Decoded {
    scheme
        .state_for_labels(pred.labels)
        .map_or(Decoded::Erasure, Decoded::State)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainedClassifier {
    format_version: u32,
    params: QmlcParams,
    samples: Vec<LabeledSample>,
    prior: [f64; LABEL_COUNT],
    /// `ς_j[r]`, indexed `[j][r]`.
    with_label: Vec<Vec<u64>>,
    /// `ς̄_j[r]`, indexed `[j][r]`.
    without_label: Vec<Vec<u64>>,
    /// `P(C_j = r | H_j)`.
    cond_with: Vec<Vec<f64>>,
    /// `P(C_j = r | H̄_j)`.
    cond_without: Vec<Vec<f64>>,
    /// Training samples carrying each label.
    #[serde(skip)]
    label_counts: [u64; LABEL_COUNT],
}

#[derive(Deserialize)]
struct ClassifierDoc {
    format_version: u32,
    params: QmlcParams,
    samples: Vec<LabeledSample>,
    prior: [f64; LABEL_COUNT],
    with_label: Vec<Vec<u64>>,
    without_label: Vec<Vec<u64>>,
}

impl<'de> Deserialize<'de> for TrainedClassifier {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = ClassifierDoc::deserialize(d)?;
        if doc.format_version != CLASSIFIER_FORMAT_VERSION {
            return Err(D::Error::custom(Error::Version {
                found: doc.format_version,
                expected: CLASSIFIER_FORMAT_VERSION,
            }));
        }
        let c = train(doc.samples, doc.params).map_err(D::Error::custom)?;
        let prior_ok = c
            .prior
            .iter()
            .zip(&doc.prior)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
        if !prior_ok || c.with_label != doc.with_label || c.without_label != doc.without_label {
            return Err(D::Error::custom(
                "stored tables disagree with the training samples",
            ));
        }
        Ok(c)
    }
}

/// Fits priors and neighbour-count histograms.
pub fn train(samples: Vec<LabeledSample>, params: QmlcParams) -> Result<TrainedClassifier> {
    let m = samples.len();
    params.validate(m)?;
    let width = samples[0].features.len();
    if samples.iter().any(|s| s.features.len() != width) {
        return Err(Error::input(
            "training samples have differing feature widths",
        ));
    }
    let k = params.k;
    let s = params.smoothing;

    let mut prior = [0.0; LABEL_COUNT];
    let mut label_counts = [0u64; LABEL_COUNT];
    for label in Label::ALL {
        let count = samples.iter().filter(|x| x.labels.contains(label)).count();
        label_counts[label.index()] = count as u64;
        prior[label.index()] = (s + count as f64) / (2.0 * s + m as f64);
    }

    let mut with_label = vec![vec![0u64; k + 1]; LABEL_COUNT];
    let mut without_label = vec![vec![0u64; k + 1]; LABEL_COUNT];
    for (i, sample) in samples.iter().enumerate() {
        let neighbours = nearest(sample.features.as_slice(), &samples, k, Some(i));
        for label in Label::ALL {
            let r = neighbours
                .iter()
                .filter(|&&n| samples[n].labels.contains(label))
                .count();
            let table = if sample.labels.contains(label) {
                &mut with_label
            } else {
                &mut without_label
            };
            table[label.index()][r] += 1;
        }
    }

    let smooth = |table: &[Vec<u64>]| -> Vec<Vec<f64>> {
        table
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = s * (k + 1) as f64 + total as f64;
                row.iter().map(|&c| (s + c as f64) / denom).collect()
            })
            .collect()
    };
    let cond_with = smooth(&with_label);
    let cond_without = smooth(&without_label);

    Ok(TrainedClassifier {
        format_version: CLASSIFIER_FORMAT_VERSION,
        params,
        samples,
        prior,
        with_label,
        without_label,
        cond_with,
        cond_without,
        label_counts,
    })
}

impl TrainedClassifier {
    pub fn params(&self) -> &QmlcParams {
        &self.params
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn feature_width(&self) -> usize {
        self.samples[0].features.len()
    }

    /// `P(H_j)` per label.
    pub fn prior(&self) -> [f64; LABEL_COUNT] {
        self.prior
    }

    /// `ς_j` histogram for `label`.
    pub fn with_label_counts(&self, label: Label) -> &[u64] {
        &self.with_label[label.index()]
    }

    /// `ς̄_j` histogram for `label`.
    pub fn without_label_counts(&self, label: Label) -> &[u64] {
        &self.without_label[label.index()]
    }

    /// `P(C_j = r | H_j)` for `r = 0..=k`.
    pub fn conditional_with(&self, label: Label) -> &[f64] {
        &self.cond_with[label.index()]
    }

    /// `P(C_j = r | H̄_j)` for `r = 0..=k`.
    pub fn conditional_without(&self, label: Label) -> &[f64] {
        &self.cond_without[label.index()]
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.len() != self.feature_width() {
            return Err(Error::input(format!(
                "query has {} features, classifier expects {}",
                x.len(),
                self.feature_width()
            )));
        }
        let neighbours = nearest(x.as_slice(), &self.samples, self.params.k, None);
        let mut ratios = [0.0; LABEL_COUNT];
        let mut neighbor_counts = [0; LABEL_COUNT];
        let mut labels = LabelSet::EMPTY;
        for label in Label::ALL {
            let j = label.index();
            let c = neighbours
                .iter()
                .filter(|&&n| self.samples[n].labels.contains(label))
                .count();
            let f = self.ratio(j, c);
            ratios[j] = f;
            neighbor_counts[j] = c;
            if f > self.params.threshold {
                labels.insert(label);
            }
        }
        Ok(Prediction {
            ratios,
            neighbor_counts,
            labels,
        })
    }

    /// `P(H)P(C=c|H) / (P(H̄)P(C=c|H̄))`, evaluated as one quotient of the
    /// smoothed counts so that integer smoothing gives an exact tie at 1.
    fn ratio(&self, j: usize, c: usize) -> f64 {
        let s = self.params.smoothing;
        let m = self.samples.len() as u64;
        let k1 = (self.params.k + 1) as f64;
        let with: u64 = self.with_label[j].iter().sum();
        let without: u64 = self.without_label[j].iter().sum();
        let num = (s + self.label_counts[j] as f64)
            * (s + self.with_label[j][c] as f64)
            * (s * k1 + without as f64);
        let den = (s + (m - self.label_counts[j]) as f64)
            * (s + self.without_label[j][c] as f64)
            * (s * k1 + with as f64);
        num / den
    }

    pub fn predict_batch(
        &self,
        queries: &[FeatureVector],
        exec: Execution,
    ) -> Result<Vec<Prediction>> {
        exec.map(queries, |x| self.predict(x)).into_iter().collect()
    }
}

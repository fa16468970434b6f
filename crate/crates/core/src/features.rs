//! Distance features and outlier filtering.
//!
//! A received point is described by its Euclidean distances to `w`
//! reference states; feature `j` is the distance to reference `j`. By default
//! the references are the transmitted constellation itself.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numfmt::sig17;
use crate::statespace::{Label, LabelSet, ModulationScheme, PhasePoint, LABEL_COUNT};

/// Default filtering rule: keep the lower 99.5 % of the max-entry distribution.
pub const DEFAULT_FILTER_QUANTILE: f64 = 0.995;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet(Vec<PhasePoint>);

impl ReferenceSet {
    pub fn new(points: Vec<PhasePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param(
                "reference set must contain at least one point",
            ));
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::param(format!("non-finite reference point {bad:?}")));
        }
        Ok(Self(points))
    }

    /// References at the constellation points, in state order.
    pub fn from_scheme(scheme: &ModulationScheme) -> Self {
        Self(scheme.points())
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(bad) = d.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::input(format!(
                "feature entries must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self(d))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_entry(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> FeatureVector {
        FeatureVector(self.0.iter().map(|x| x * factor).collect())
    }
}

impl AsRef<FeatureVector> for FeatureVector {
    fn as_ref(&self) -> &FeatureVector {
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub labels: LabelSet,
    /// 1-based constellation index of the state that was sent.
    pub true_state: usize,
}

impl AsRef<FeatureVector> for LabeledSample {
    fn as_ref(&self) -> &FeatureVector {
        &self.features
    }
}

pub fn euclidean(a: PhasePoint, b: PhasePoint) -> f64 {
    (a.q - b.q).hypot(a.p - b.p)
}

pub fn extract(point: PhasePoint, refs: &ReferenceSet) -> FeatureVector {
    FeatureVector(refs.0.iter().map(|&r| euclidean(point, r)).collect())
}

pub fn extract_batch(
    points: &[PhasePoint],
    refs: &ReferenceSet,
    exec: Execution,
) -> Vec<FeatureVector> {
    exec.map(points, |&p| extract(p, refs))
}

/// Rule deciding which feature vectors count as outliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    /// Discard vectors with any entry above this value.
    Absolute(f64),
    /// Cap at this quantile of the per-vector maximum entry.
    Quantile(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Quantile(DEFAULT_FILTER_QUANTILE)
    }
}

impl Threshold {
    fn validate(self) -> Result<()> {
        match self {
            Threshold::Absolute(t) if t > 0.0 => Ok(()),
            Threshold::Quantile(q) if q > 0.0 && q <= 1.0 => Ok(()),
            other => Err(Error::param(format!("invalid filter threshold {other:?}"))),
        }
    }

    /// Resolves to an absolute cap for this population.
    ///
    /// A quantile `q` over `n` vectors resolves to the `⌈q·n⌉`-th smallest
    /// max entry. An empty population resolves to `+∞`.
    pub fn resolve<T: AsRef<FeatureVector>>(self, items: &[T]) -> Result<f64> {
        self.validate()?;
        match self {
            Threshold::Absolute(t) => Ok(t),
            Threshold::Quantile(q) => {
                if items.is_empty() {
                    return Ok(f64::INFINITY);
                }
                let mut maxima: Vec<f64> = items.iter().map(|v| v.as_ref().max_entry()).collect();
                maxima.sort_by(f64::total_cmp);
                let rank = ((q * maxima.len() as f64).ceil() as usize).clamp(1, maxima.len());
                Ok(maxima[rank - 1])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Filtered<T> {
    /// Absolute cap that was applied.
    pub threshold: f64,
    pub kept: Vec<T>,
    pub discarded: Vec<T>,
}

impl<T> Filtered<T> {
    pub fn discard_rate(&self) -> f64 {
        let total = self.kept.len() + self.discarded.len();
        if total == 0 {
            0.0
        } else {
            self.discarded.len() as f64 / total as f64
        }
    }
}

/// Splits `items` into those whose every entry is within the resolved cap and
/// the rest, preserving order in both parts.
pub fn filter<T: AsRef<FeatureVector>>(items: Vec<T>, threshold: Threshold) -> Result<Filtered<T>> {
    let cap = threshold.resolve(&items)?;
    let (kept, discarded) = items
        .into_iter()
        .partition(|v| v.as_ref().max_entry() <= cap);
    Ok(Filtered {
        threshold: cap,
        kept,
        discarded,
    })
}

/// Writes a labelled dataset as CSV: `d_1..d_w, L1..L4, true_state`.
pub fn write_dataset<W: Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let width = samples.first().map_or(0, |s| s.features.len());
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=width).map(|j| format!("d_{j}")).collect();
    header.extend(Label::ALL.iter().map(|l| l.to_string()));
    header.push("true_state".into());
    out.write_record(&header)?;
    for s in samples {
        if s.features.len() != width {
            return Err(Error::input("samples have differing feature widths"));
        }
        let mut row: Vec<String> = s.features.as_slice().iter().map(|&x| sig17(x)).collect();
        row.extend(
            s.labels
                .flags()
                .iter()
                .map(|&f| if f { "1" } else { "0" }.to_string()),
        );
        row.push(s.true_state.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let width = header.iter().filter(|h| h.starts_with("d_")).count();
    if header.len() != width + LABEL_COUNT + 1 {
        return Err(Error::input(format!(
            "unexpected dataset header {header:?}"
        )));
    }
    let mut samples = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::input(format!("row {}: bad {what}", line + 1));
        let d = (0..width)
            .map(|j| rec[j].parse::<f64>().map_err(|_| bad("distance")))
            .collect::<Result<Vec<_>>>()?;
        let mut flags = [false; LABEL_COUNT];
        for (i, flag) in flags.iter_mut().enumerate() {
            *flag = match &rec[width + i] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("label flag")),
            };
        }
        let true_state = rec[width + LABEL_COUNT]
            .parse()
            .map_err(|_| bad("true_state"))?;
        samples.push(LabeledSample {
            features: FeatureVector::new(d)?,
            labels: LabelSet::from_flags(flags),
            true_state,
        });
    }
    Ok(samples)
}

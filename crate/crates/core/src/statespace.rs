//! Phase-space points, PSK constellations, quadrant labels and encoding rules.
//!
//! Quadrature values are in shot-noise units. A constellation of modulation
//! variance `V_m` places its states on a circle of radius `α = sqrt(V_m / 2)`.
//!
//! Quadrant labels follow the closed quadrants of the `(q, p)` plane, so a
//! point on an axis carries the two adjacent labels and the origin all four.
//! For 8PSK this makes the even-indexed states (on the axes) multi-label.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint { q: 0.0, p: 0.0 };

    pub const fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    /// Builds a point, rejecting NaN or infinite coordinates.
    pub fn try_new(q: f64, p: f64) -> Result<Self> {
        if q.is_finite() && p.is_finite() {
            Ok(Self { q, p })
        } else {
            Err(Error::param(format!(
                "non-finite phase-space point ({q}, {p})"
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }

    pub fn modulus(&self) -> f64 {
        self.q.hypot(self.p)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.q * factor, self.p * factor)
    }

    /// Rotates counter-clockwise by `angle` radians.
    pub fn rotate(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(self.q * c - self.p * s, self.q * s + self.p * c)
    }

    pub fn translate(&self, dq: f64, dp: f64) -> Self {
        Self::new(self.q + dq, self.p + dp)
    }
}

/// One of the four phase-space quadrants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    L1,
    L2,
    L3,
    L4,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::L1, Label::L2, Label::L3, Label::L4];

    /// Zero-based position (`L1` → 0).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    fn bit(self) -> u8 {
        1 << self.index()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index() + 1)
    }
}

/// Number of quadrant labels.
pub const LABEL_COUNT: usize = 4;

/// A subset of `{L1, L2, L3, L4}` stored as a bitmask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const FULL: LabelSet = LabelSet(0b1111);

    pub fn from_labels(labels: &[Label]) -> Self {
        LabelSet(labels.iter().fold(0, |acc, l| acc | l.bit()))
    }

    /// Builds a set from per-label flags in `L1..L4` order.
    pub fn from_flags(flags: [bool; LABEL_COUNT]) -> Self {
        let mut bits = 0;
        for (i, &on) in flags.iter().enumerate() {
            if on {
                bits |= 1 << i;
            }
        }
        LabelSet(bits)
    }

    pub fn flags(self) -> [bool; LABEL_COUNT] {
        Label::ALL.map(|l| self.contains(l))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, label: Label) -> bool {
        self.0 & label.bit() != 0
    }

    pub fn insert(&mut self, label: Label) {
        self.0 |= label.bit();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Label> {
        Label::ALL.into_iter().filter(move |&l| self.contains(l))
    }

    pub fn complement(self) -> Self {
        LabelSet(!self.0 & Self::FULL.0)
    }

    /// True for a single label or a pair of neighbouring quadrants.
    pub fn is_valid_state_set(self) -> bool {
        match self.len() {
            1 => true,
            2 => {
                let idx: Vec<usize> = self.iter().map(Label::index).collect();
                // L4 wraps around to L1.
                matches!(idx[1] - idx[0], 1 | 3)
            }
            _ => false,
        }
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let labels: Vec<Label> = self.iter().collect();
        labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<Label>::deserialize(d)?;
        Ok(LabelSet::from_labels(&labels))
    }
}

/// Labels of every closed quadrant containing `point`.
pub fn labels_of(point: PhasePoint) -> LabelSet {
    let PhasePoint { q, p } = point;
    LabelSet::from_flags([
        q >= 0.0 && p >= 0.0,
        q <= 0.0 && p >= 0.0,
        q <= 0.0 && p <= 0.0,
        q >= 0.0 && p <= 0.0,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModulationKind {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
}

impl ModulationKind {
    pub fn state_count(self) -> usize {
        match self {
            ModulationKind::Qpsk => 4,
            ModulationKind::Psk8 => 8,
        }
    }

    /// Angle of state `k` (1-based) as a multiple of `π/4`.
    fn eighths(self, k: usize) -> usize {
        match self {
            ModulationKind::Qpsk => 2 * k - 1,
            ModulationKind::Psk8 => k,
        }
    }
}

impl fmt::Display for ModulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModulationKind::Qpsk => "QPSK",
            ModulationKind::Psk8 => "8PSK",
        })
    }
}

// Unit vectors at multiples of π/4, exact on the axes.
const UNIT_EIGHTHS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstellationState {
    /// 1-based state index `k`.
    pub index: usize,
    /// Angle in radians, in `(0, 2π]`.
    pub angle: f64,
    pub point: PhasePoint,
    pub labels: LabelSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeDoc")]
pub struct ModulationScheme {
    kind: ModulationKind,
    modulation_variance: f64,
    amplitude: f64,
    states: Vec<ConstellationState>,
}

#[derive(Deserialize)]
struct SchemeDoc {
    kind: ModulationKind,
    modulation_variance: f64,
    #[serde(default)]
    states: Option<Vec<ConstellationState>>,
}

impl TryFrom<SchemeDoc> for ModulationScheme {
    type Error = Error;

    fn try_from(doc: SchemeDoc) -> Result<Self> {
        let scheme = build_scheme(doc.kind, doc.modulation_variance)?;
        if let Some(states) = doc.states {
            let consistent = states.len() == scheme.states.len()
                && states.iter().zip(&scheme.states).all(|(a, b)| {
                    a.index == b.index
                        && a.labels == b.labels
                        && (a.point.q - b.point.q).abs() < 1e-9
                        && (a.point.p - b.point.p).abs() < 1e-9
                });
            if !consistent {
                return Err(Error::input(
                    "constellation states disagree with kind and variance",
                ));
            }
        }
        Ok(scheme)
    }
}

/// Builds a QPSK or 8PSK constellation with `α = sqrt(V_m / 2)`.
///
/// QPSK states sit at `(2k−1)π/4` (quadrant interiors), 8PSK states at
/// `kπ/4`, so 8PSK states with even `k` lie on the axes.
pub fn build_scheme(kind: ModulationKind, modulation_variance: f64) -> Result<ModulationScheme> {
    if !(modulation_variance.is_finite() && modulation_variance > 0.0) {
        return Err(Error::param(format!(
            "modulation variance must be positive, got {modulation_variance}"
        )));
    }
    let amplitude = (modulation_variance / 2.0).sqrt();
    let states = (1..=kind.state_count())
        .map(|k| {
            let eighths = kind.eighths(k);
            let (cq, cp) = UNIT_EIGHTHS[eighths % 8];
            let point = PhasePoint::new(amplitude * cq, amplitude * cp);
            ConstellationState {
                index: k,
                angle: eighths as f64 * PI / 4.0,
                point,
                labels: labels_of(point),
            }
        })
        .collect();
    Ok(ModulationScheme {
        kind,
        modulation_variance,
        amplitude,
        states,
    })
}

impl ModulationScheme {
    pub fn kind(&self) -> ModulationKind {
        self.kind
    }

    pub fn modulation_variance(&self) -> f64 {
        self.modulation_variance
    }

    /// Constellation radius `α`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn states(&self) -> &[ConstellationState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State with 1-based index `k`.
    pub fn state(&self, k: usize) -> Result<&ConstellationState> {
        k.checked_sub(1)
            .and_then(|i| self.states.get(i))
            .ok_or_else(|| Error::param(format!("state index {k} outside 1..={}", self.len())))
    }

    pub fn points(&self) -> Vec<PhasePoint> {
        self.states.iter().map(|s| s.point).collect()
    }

    /// Index of the state carrying exactly `labels`, if any.
    pub fn state_for_labels(&self, labels: LabelSet) -> Option<usize> {
        self.states
            .iter()
            .find(|s| s.labels == labels)
            .map(|s| s.index)
    }

    /// Tabular view pairing every state with its bits under `rule`.
    pub fn table(&self, rule: &EncodingRule) -> Result<Vec<ConstellationEntry>> {
        self.states
            .iter()
            .map(|s| {
                Ok(ConstellationEntry {
                    index: s.index,
                    angle: s.angle,
                    q: s.point.q,
                    p: s.point.p,
                    labels: s.labels,
                    bits: rule.encode(s.index)?.to_owned(),
                })
            })
            .collect()
    }
}

/// Flat JSON row describing one constellation state and its code word.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstellationEntry {
    pub index: usize,
    pub angle: f64,
    pub q: f64,
    pub p: f64,
    pub labels: LabelSet,
    pub bits: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
}

/// Lookup table from state index to a bit string.
///
/// Code words may have different lengths. Encoding and decoding are the same
/// lookup; a mismatch between the rule used by the sender and the one used by
/// the receiver is what yields wrong bits for an eavesdropper.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleDoc")]
pub struct EncodingRule {
    rule_id: String,
    visibility: Visibility,
    codes: Vec<String>,
}

#[derive(Deserialize)]
struct RuleDoc {
    rule_id: String,
    visibility: Visibility,
    codes: Vec<String>,
}

impl TryFrom<RuleDoc> for EncodingRule {
    type Error = Error;

    fn try_from(doc: RuleDoc) -> Result<Self> {
        EncodingRule::new(doc.rule_id, doc.visibility, doc.codes)
    }
}

impl EncodingRule {
    /// `codes[k - 1]` is the code word of state `k`.
    pub fn new(
        rule_id: impl Into<String>,
        visibility: Visibility,
        codes: Vec<String>,
    ) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::param("encoding rule needs at least one code word"));
        }
        for (i, c) in codes.iter().enumerate() {
            if c.is_empty() || !c.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::param(format!(
                    "code word for state {} is not a non-empty bit string: {c:?}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            rule_id: rule_id.into(),
            visibility,
            codes,
        })
    }

    fn from_table(id: &str, visibility: Visibility, codes: &[&str]) -> Self {
        Self::new(
            id,
            visibility,
            codes.iter().map(|c| c.to_string()).collect(),
        )
        .expect("static table is valid")
    }

    /// Fixed public rule of conventional eight-state CV-QKD.
    pub fn eight_state_public() -> Self {
        Self::from_table(
            "rule-1",
            Visibility::Public,
            &["000", "001", "010", "011", "100", "101", "110", "111"],
        )
    }

    /// Private rule agreed after the first round of state learning.
    pub fn learning_round_one() -> Self {
        Self::from_table(
            "rule-2",
            Visibility::Private,
            &["111", "110", "101", "100", "011", "010", "001", "000"],
        )
    }

    /// Private variable-length rule agreed after a second round of learning.
    pub fn learning_round_two() -> Self {
        Self::from_table(
            "rule-3",
            Visibility::Private,
            &["00", "10101", "11", "1", "1001", "01", "1011", "101"],
        )
    }

    /// Natural binary code over `state_count` states (`k − 1` in binary).
    pub fn natural_binary(state_count: usize) -> Result<Self> {
        if state_count < 2 {
            return Err(Error::param(
                "natural binary rule needs at least two states",
            ));
        }
        let width = usize::BITS - (state_count - 1).leading_zeros();
        let codes = (0..state_count)
            .map(|i| format!("{i:0width$b}", width = width as usize))
            .collect();
        Self::new(format!("binary-{state_count}"), Visibility::Public, codes)
    }

    /// Looks up one of the built-in rules by id (`rule-1`, `rule-2`, `rule-3`).
    pub fn builtin(id: &str) -> Option<Self> {
        match id {
            "rule-1" => Some(Self::eight_state_public()),
            "rule-2" => Some(Self::learning_round_one()),
            "rule-3" => Some(Self::learning_round_two()),
            _ => None,
        }
    }

    pub fn rule_id(&self) -> &str {
        &self.rule_id
    }

    pub fn visibility(&self) -> Visibility {
        self.visibility
    }

    pub fn state_count(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn encode(&self, k: usize) -> Result<&str> {
        k.checked_sub(1)
            .and_then(|i| self.codes.get(i))
            .map(String::as_str)
            .ok_or_else(|| {
                Error::param(format!(
                    "state index {k} not covered by rule {} (1..={})",
                    self.rule_id,
                    self.codes.len()
                ))
            })
    }

    pub fn decode(&self, k: usize) -> Result<&str> {
        self.encode(k)
    }
}

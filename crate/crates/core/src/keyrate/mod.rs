//! Secret key rates for Gaussian, four-state, eight-state and ML-assisted
//! CV-QKD with heterodyne detection and reverse reconciliation.
//!
//! Asymptotic rate: `K = β·I(A:B) − χ_BE`.
//! Finite-size rate: `K = (n/N)[β·I(A:B) − S(E:B) − Δ(n)]`.
//! The ML protocol replaces `β` by `β·Λ` and Eve's term by a configurable
//! `χ_E^ML` ([`EveTerm`]).
//!
//! Noise bookkeeping (shot-noise units, referred to the channel input):
//!
//! ```text
//! χ_line = 1/T − 1 + ξ
//! χ_het  = [1 + (1 − η) + 2 v_el] / η
//! χ_tot  = χ_line + χ_het / T = ξ − 1 + 2(1 + v_el)/(ηT)
//! ```

pub mod covariance;
pub mod holevo;
pub mod optimize;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{fiber_transmittance, DEFAULT_LOSS_DB_PER_KM};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numfmt::sig17;

pub use covariance::{z_eight, z_four, z_gaussian};
pub use holevo::{entropy_g, holevo_chi_be, SymplecticSpectrum};
pub use optimize::{optimize_vm, OptimizerSettings, VmOptimum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Gaussian,
    FourState,
    EightState,
    /// Eight-state modulation with classifier-based state prediction.
    Ml,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Gaussian,
        Protocol::FourState,
        Protocol::EightState,
        Protocol::Ml,
    ];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Gaussian => "gaussian",
            Protocol::FourState => "four_state",
            Protocol::EightState => "eight_state",
            Protocol::Ml => "ml",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::param(format!("unknown protocol {s:?}")))
    }
}

/// Eve's information term for the ML protocol.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EveTerm {
    /// Private, refreshable encoding leaves Eve nothing.
    #[default]
    Zero,
    Constant(f64),
    /// Conservative comparison: the eight-state Holevo bound `χ_BE`.
    HolevoBound,
}

/// Every scalar entering the key-rate formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyRateParams {
    pub protocol: Protocol,
    /// `V_m`; the total variance is `V = V_m + 1`.
    pub modulation_variance: f64,
    /// `T`.
    pub transmittance: f64,
    /// `ξ`, referred to the channel input.
    pub excess_noise: f64,
    /// Detector efficiency `η`.
    pub efficiency: f64,
    /// Detector electronic noise `v_el`.
    pub electronic_noise: f64,
    /// Reconciliation efficiency `β`.
    pub reconciliation: f64,
    /// Classifier efficiency `Λ` (ML protocol only).
    pub classifier_efficiency: f64,
    /// Signals kept for the key, `n`.
    pub key_signals: u64,
    /// Total exchanged signals, `N`.
    pub block_length: u64,
    pub eps_smooth: f64,
    pub eps_pe: f64,
    pub eps_pa: f64,
    /// Dimension of Bob's raw-key Hilbert space.
    pub dim_hb: u32,
    pub eve_term: EveTerm,
    /// Channel transmittance used for Eve's term in finite-size rates;
    /// `None` uses the nominal `T`.
    pub pe_transmittance: Option<f64>,
    /// Excess noise used for Eve's term in finite-size rates.
    pub pe_excess_noise: Option<f64>,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        Self {
            protocol: Protocol::EightState,
            modulation_variance: 0.35,
            transmittance: 1.0,
            excess_noise: 0.01,
            efficiency: 0.6,
            electronic_noise: 0.05,
            reconciliation: 0.98,
            classifier_efficiency: 0.927,
            key_signals: 500_000,
            block_length: 1_000_000,
            eps_smooth: 1e-10,
            eps_pe: 1e-10,
            eps_pa: 1e-10,
            dim_hb: 2,
            eve_term: EveTerm::Zero,
            pe_transmittance: None,
            pe_excess_noise: None,
        }
    }
}

impl KeyRateParams {
    /// Default detector and security parameters with the given protocol,
    /// modulation variance and transmittance.
    pub fn new(protocol: Protocol, modulation_variance: f64, transmittance: f64) -> Self {
        Self {
            protocol,
            modulation_variance,
            transmittance,
            ..Self::default()
        }
    }

    /// Sets `T` from a fiber length at 0.2 dB/km.
    pub fn at_distance(mut self, distance_km: f64) -> Self {
        self.transmittance = fiber_transmittance(distance_km, DEFAULT_LOSS_DB_PER_KM);
        self
    }

    pub fn with_vm(mut self, modulation_variance: f64) -> Self {
        self.modulation_variance = modulation_variance;
        self
    }

    /// Sets `N` and `n = N/2`.
    pub fn with_block(mut self, block_length: u64) -> Self {
        self.block_length = block_length;
        self.key_signals = block_length / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        let in_open = |x: f64| x > 0.0 && x < 1.0;
        let checks: [(bool, &str, f64); 11] = [
            (
                self.modulation_variance > 0.0 && self.modulation_variance.is_finite(),
                "modulation_variance",
                self.modulation_variance,
            ),
            (
                in_unit(self.transmittance),
                "transmittance",
                self.transmittance,
            ),
            (
                self.excess_noise >= 0.0 && self.excess_noise.is_finite(),
                "excess_noise",
                self.excess_noise,
            ),
            (in_unit(self.efficiency), "efficiency", self.efficiency),
            (
                self.electronic_noise >= 0.0 && self.electronic_noise.is_finite(),
                "electronic_noise",
                self.electronic_noise,
            ),
            (
                in_unit(self.reconciliation),
                "reconciliation",
                self.reconciliation,
            ),
            (
                in_unit(self.classifier_efficiency),
                "classifier_efficiency",
                self.classifier_efficiency,
            ),
            (in_open(self.eps_smooth), "eps_smooth", self.eps_smooth),
            (in_open(self.eps_pe), "eps_pe", self.eps_pe),
            (in_open(self.eps_pa), "eps_pa", self.eps_pa),
            (self.dim_hb >= 1, "dim_hb", self.dim_hb as f64),
        ];
        for (ok, name, value) in checks {
            if !ok {
                return Err(Error::param(format!("{name} out of range: {value}")));
            }
        }
        if self.key_signals == 0 || self.key_signals > self.block_length {
            return Err(Error::param(format!(
                "need 0 < n <= N, got n = {}, N = {}",
                self.key_signals, self.block_length
            )));
        }
        if let Some(t) = self.pe_transmittance {
            if !in_unit(t) {
                return Err(Error::param(format!("pe_transmittance out of range: {t}")));
            }
        }
        if let Some(x) = self.pe_excess_noise {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::param(format!("pe_excess_noise out of range: {x}")));
            }
        }
        if let EveTerm::Constant(c) = self.eve_term {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::param(format!(
                    "constant Eve term must be >= 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// `V = V_m + 1`.
    pub fn v(&self) -> f64 {
        self.modulation_variance + 1.0
    }

    pub fn chi_line(&self) -> f64 {
        1.0 / self.transmittance - 1.0 + self.excess_noise
    }

    pub fn chi_het(&self) -> f64 {
        (1.0 + (1.0 - self.efficiency) + 2.0 * self.electronic_noise) / self.efficiency
    }

    /// `χ_line + χ_het / T`.
    pub fn chi_tot(&self) -> f64 {
        self.chi_line() + self.chi_het() / self.transmittance
    }

    /// `ξ − 1 + 2(1 + v_el)/(ηT)`, algebraically equal to [`chi_tot`](Self::chi_tot).
    pub fn chi_tot_direct(&self) -> f64 {
        self.excess_noise - 1.0
            + 2.0 * (1.0 + self.electronic_noise) / (self.efficiency * self.transmittance)
    }

    /// Correlation `Z` for this protocol; the ML protocol uses eight states.
    pub fn correlation(&self) -> f64 {
        covariance_z(self.protocol, self.modulation_variance)
    }
}

/// `Z_G`, `Z_4` or `Z_8` depending on the protocol.
pub fn covariance_z(protocol: Protocol, modulation_variance: f64) -> f64 {
    match protocol {
        Protocol::Gaussian => z_gaussian(modulation_variance),
        Protocol::FourState => z_four(modulation_variance),
        Protocol::EightState | Protocol::Ml => z_eight(modulation_variance),
    }
}

/// `I(A:B) = log2[(V + χ_tot) / (1 + χ_tot)]` for heterodyne detection.
pub fn mutual_information(params: &KeyRateParams) -> f64 {
    let chi = params.chi_tot();
    ((params.v() + chi) / (1.0 + chi)).log2()
}

/// Privacy-amplification penalty
/// `Δ(n) = (2·dim + 3)·sqrt(log2(2/ε̄)/n) + (2/n)·log2(1/ε_PA)`.
pub fn delta_n(params: &KeyRateParams) -> f64 {
    let n = params.key_signals as f64;
    (2.0 * params.dim_hb as f64 + 3.0) * ((2.0 / params.eps_smooth).log2() / n).sqrt()
        + 2.0 / n * (1.0 / params.eps_pa).log2()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub protocol: Protocol,
    /// Bits per channel use.
    pub key_rate: f64,
    pub mutual_information: f64,
    /// `χ_BE`, `S(E:B)` or `χ_E^ML`, whichever was subtracted.
    pub eve_information: f64,
    /// Zero for asymptotic rates.
    pub delta_n: f64,
    pub z: f64,
    /// Present whenever Eve's term came from the covariance matrix.
    pub spectrum: Option<SymplecticSpectrum>,
}

fn eve_information(
    params: &KeyRateParams,
    z: f64,
    finite: bool,
) -> Result<(f64, Option<SymplecticSpectrum>)> {
    let holevo = || -> Result<(f64, Option<SymplecticSpectrum>)> {
        let (t, xi) = if finite {
            (
                params.pe_transmittance.unwrap_or(params.transmittance),
                params.pe_excess_noise.unwrap_or(params.excess_noise),
            )
        } else {
            (params.transmittance, params.excess_noise)
        };
        let spectrum = holevo::symplectic_spectrum(params, t, xi, z)?;
        Ok((holevo::chi_from_spectrum(&spectrum), Some(spectrum)))
    };
    match (params.protocol, params.eve_term) {
        (Protocol::Ml, EveTerm::Zero) => Ok((0.0, None)),
        (Protocol::Ml, EveTerm::Constant(c)) => Ok((c, None)),
        _ => holevo(),
    }
}

fn effective_reconciliation(params: &KeyRateParams) -> f64 {
    match params.protocol {
        Protocol::Ml => params.reconciliation * params.classifier_efficiency,
        _ => params.reconciliation,
    }
}

/// Asymptotic rate under collective attacks.
pub fn rate_asymptotic(params: &KeyRateParams) -> Result<RateResult> {
    params.validate()?;
    let z = params.correlation();
    let info = mutual_information(params);
    let (eve, spectrum) = eve_information(params, z, false)?;
    Ok(RateResult {
        protocol: params.protocol,
        key_rate: effective_reconciliation(params) * info - eve,
        mutual_information: info,
        eve_information: eve,
        delta_n: 0.0,
        z,
        spectrum,
    })
}

/// Finite-size rate with block length `N` and `n` key signals.
pub fn rate_finite(params: &KeyRateParams) -> Result<RateResult> {
    params.validate()?;
    let z = params.correlation();
    let info = mutual_information(params);
    let (eve, spectrum) = eve_information(params, z, true)?;
    let delta = delta_n(params);
    let fraction = params.key_signals as f64 / params.block_length as f64;
    Ok(RateResult {
        protocol: params.protocol,
        key_rate: fraction * (effective_reconciliation(params) * info - eve - delta),
        mutual_information: info,
        eve_information: eve,
        delta_n: delta,
        z,
        spectrum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Asymptotic,
    Finite,
}

impl RateKind {
    pub fn evaluate(self, params: &KeyRateParams) -> Result<RateResult> {
        match self {
            RateKind::Asymptotic => rate_asymptotic(params),
            RateKind::Finite => rate_finite(params),
        }
    }
}

/// One row of a rate-versus-distance curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub distance_km: f64,
    pub transmittance: f64,
    pub modulation_variance: f64,
    pub result: RateResult,
}

/// Evaluates `kind` at every distance (0.2 dB/km fiber).
pub fn rate_curve(
    base: &KeyRateParams,
    distances_km: &[f64],
    kind: RateKind,
    exec: Execution,
) -> Result<Vec<RatePoint>> {
    exec.map(distances_km, |&d| {
        let p = base.at_distance(d);
        kind.evaluate(&p).map(|result| RatePoint {
            distance_km: d,
            transmittance: p.transmittance,
            modulation_variance: p.modulation_variance,
            result,
        })
    })
    .into_iter()
    .collect()
}

/// Writes `distance_km,T,V_m,I_AB,chi,delta_n,key_rate,protocol` rows.
pub fn write_rate_csv<W: Write>(writer: W, points: &[RatePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "distance_km",
        "T",
        "V_m",
        "I_AB",
        "chi",
        "delta_n",
        "key_rate",
        "protocol",
    ])?;
    for p in points {
        out.write_record([
            sig17(p.distance_km),
            sig17(p.transmittance),
            sig17(p.modulation_variance),
            sig17(p.result.mutual_information),
            sig17(p.result.eve_information),
            sig17(p.result.delta_n),
            sig17(p.result.key_rate),
            p.result.protocol.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

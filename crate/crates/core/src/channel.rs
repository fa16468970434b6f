//! Fiber channel map and seeded random sources.
//!
//! A point `(q, p)` leaves the channel as
//!
//! ```text
//! q' = √T (q cos φ0 + p sin φ0) + ε_q
//! p' = √T (p cos φ0 − q sin φ0) + ε_p
//! ```
//!
//! with `ε_q`, `ε_p` independent `N(0, N0 + T·ξ)` draws.
//!
//! # Stream splitting
//!
//! All randomness comes from ChaCha8. A [`RandomSource`] is a seed plus a
//! stream id. [`transmit_batch`] draws one 64-bit batch key from the caller's
//! source, then gives chunk `c` (points `c·4096 .. (c+1)·4096`) its own
//! ChaCha8 generator seeded with the batch key on stream `c`. Within a chunk
//! each point consumes, in order, the optional drift draw and then the `q`
//! and `p` noise draws. This layout is independent of thread count, so
//! sequential and parallel runs are bit-identical.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::statespace::PhasePoint;

/// Fiber attenuation used when none is given.
pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;

/// Points per independently seeded chunk in [`transmit_batch`].
pub const BATCH_CHUNK: usize = 4096;

/// Seeded ChaCha8 generator.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Generator for `seed` on an independent ChaCha stream.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derives a fresh, independent source from the next output of this one.
    pub fn fork(&mut self) -> RandomSource {
        RandomSource::new(self.rng.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        if low == high {
            // consume a draw to keep stream layout independent of the interval
            let _ = self.rng.next_u64();
            return low;
        }
        self.rng.random_range(low..high)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// How the channel rotates phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhaseDrift {
    /// The same drift `φ0` for every symbol.
    Fixed { radians: f64 },
    /// A fresh drift per symbol, uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

impl Default for PhaseDrift {
    fn default() -> Self {
        PhaseDrift::Fixed { radians: 0.0 }
    }
}

/// Parameters of the fiber channel.
///
/// Deserializes from `distance_km` (with optional `loss_db_per_km`) or from
/// `transmittance`; when both are given they must agree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelDoc")]
pub struct ChannelParams {
    distance_km: f64,
    loss_db_per_km: f64,
    transmittance: f64,
    phase_drift: PhaseDrift,
    excess_noise: f64,
    shot_noise: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    #[serde(default)]
    distance_km: Option<f64>,
    #[serde(default = "default_loss")]
    loss_db_per_km: f64,
    #[serde(default)]
    transmittance: Option<f64>,
    #[serde(default)]
    phase_drift: PhaseDrift,
    #[serde(default = "default_excess_noise")]
    excess_noise: f64,
    #[serde(default = "default_shot_noise")]
    shot_noise: f64,
}

fn default_loss() -> f64 {
    DEFAULT_LOSS_DB_PER_KM
}

fn default_excess_noise() -> f64 {
    0.01
}

fn default_shot_noise() -> f64 {
    1.0
}

impl TryFrom<ChannelDoc> for ChannelParams {
    type Error = Error;

    fn try_from(doc: ChannelDoc) -> Result<Self> {
        let base = match (doc.distance_km, doc.transmittance) {
            (Some(d), None) => Self::fiber_with_loss(d, doc.loss_db_per_km, doc.excess_noise)?,
            (d, Some(t)) => {
                let mut ch = Self::with_transmittance(t, doc.excess_noise)?;
                ch.loss_db_per_km = doc.loss_db_per_km;
                ch.distance_km = match d {
                    Some(d) => {
                        let implied = fiber_transmittance(d, doc.loss_db_per_km);
                        if (implied - t).abs() > 1e-9 * t {
                            return Err(Error::param(format!(
                                "transmittance {t} disagrees with {d} km at {} dB/km (T = {implied})",
                                doc.loss_db_per_km
                            )));
                        }
                        d
                    }
                    None if doc.loss_db_per_km > 0.0 => -10.0 * t.log10() / doc.loss_db_per_km,
                    None => 0.0,
                };
                ch
            }
            (None, None) => return Err(Error::param("channel needs distance_km or transmittance")),
        };
        base.phase_drift(doc.phase_drift)?
            .shot_noise(doc.shot_noise)
    }
}

/// `T = 10^(−loss · L / 10)`.
pub fn fiber_transmittance(distance_km: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * distance_km / 10.0)
}

impl ChannelParams {
    /// Fiber of length `distance_km` at 0.2 dB/km, zero drift, `N0 = 1`.
    pub fn fiber(distance_km: f64, excess_noise: f64) -> Result<Self> {
        Self::fiber_with_loss(distance_km, DEFAULT_LOSS_DB_PER_KM, excess_noise)
    }

    pub fn fiber_with_loss(
        distance_km: f64,
        loss_db_per_km: f64,
        excess_noise: f64,
    ) -> Result<Self> {
        if !(distance_km.is_finite() && distance_km >= 0.0) {
            return Err(Error::param(format!(
                "distance must be >= 0, got {distance_km}"
            )));
        }
        if !(loss_db_per_km.is_finite() && loss_db_per_km >= 0.0) {
            return Err(Error::param(format!(
                "loss must be >= 0 dB/km, got {loss_db_per_km}"
            )));
        }
        let t = fiber_transmittance(distance_km, loss_db_per_km);
        Self {
            distance_km,
            loss_db_per_km,
            transmittance: t,
            phase_drift: PhaseDrift::default(),
            excess_noise,
            shot_noise: 1.0,
        }
        .validated()
    }

    /// Channel given directly by its transmittance; distance is back-filled
    /// from the default loss.
    pub fn with_transmittance(transmittance: f64, excess_noise: f64) -> Result<Self> {
        let distance_km = if transmittance > 0.0 {
            -10.0 * transmittance.log10() / DEFAULT_LOSS_DB_PER_KM
        } else {
            f64::INFINITY
        };
        Self {
            distance_km,
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            transmittance,
            phase_drift: PhaseDrift::default(),
            excess_noise,
            shot_noise: 1.0,
        }
        .validated()
    }

    /// Identity channel with no noise at all (`T = 1`, `ξ = 0`, `N0 = 0`).
    pub fn noiseless() -> Self {
        Self {
            distance_km: 0.0,
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            transmittance: 1.0,
            phase_drift: PhaseDrift::default(),
            excess_noise: 0.0,
            shot_noise: 0.0,
        }
    }

    pub fn phase_drift(mut self, drift: PhaseDrift) -> Result<Self> {
        self.phase_drift = drift;
        self.validated()
    }

    pub fn fixed_drift(self, radians: f64) -> Result<Self> {
        self.phase_drift(PhaseDrift::Fixed { radians })
    }

    /// Overrides the vacuum noise `N0`. Zero gives a noise-free idealisation.
    pub fn shot_noise(mut self, n0: f64) -> Result<Self> {
        self.shot_noise = n0;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        let t = self.transmittance;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::param(format!(
                "transmittance must be in (0, 1], got {t}"
            )));
        }
        if !(self.excess_noise.is_finite() && self.excess_noise >= 0.0) {
            return Err(Error::param(format!(
                "excess noise must be >= 0, got {}",
                self.excess_noise
            )));
        }
        if !(self.shot_noise.is_finite() && self.shot_noise >= 0.0) {
            return Err(Error::param(format!(
                "shot noise must be >= 0, got {}",
                self.shot_noise
            )));
        }
        match self.phase_drift {
            PhaseDrift::Fixed { radians } if !radians.is_finite() => {
                return Err(Error::param("phase drift must be finite"));
            }
            PhaseDrift::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && low <= high) =>
            {
                return Err(Error::param(format!("bad drift interval [{low}, {high})")));
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }

    pub fn loss_db_per_km(&self) -> f64 {
        self.loss_db_per_km
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn drift(&self) -> PhaseDrift {
        self.phase_drift
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    pub fn n0(&self) -> f64 {
        self.shot_noise
    }

    /// Per-quadrature variance of the added noise, `N0 + T·ξ`.
    pub fn noise_variance(&self) -> f64 {
        self.shot_noise + self.transmittance * self.excess_noise
    }

    /// Noise-free image of `point`: `√T · R(−φ0) · (q, p)`.
    pub fn deterministic_image(&self, point: PhasePoint, drift: f64) -> PhasePoint {
        let (s, c) = drift.sin_cos();
        let g = self.transmittance.sqrt();
        PhasePoint::new(
            g * (point.q * c + point.p * s),
            g * (point.p * c - point.q * s),
        )
    }

    fn draw_drift<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.phase_drift {
            PhaseDrift::Fixed { radians } => radians,
            PhaseDrift::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + (high - low) * u
            }
        }
    }

    fn apply<R: Rng + ?Sized>(&self, point: PhasePoint, rng: &mut R) -> PhasePoint {
        let drift = self.draw_drift(rng);
        let sd = self.noise_variance().sqrt();
        let eq: f64 = rng.sample(StandardNormal);
        let ep: f64 = rng.sample(StandardNormal);
        let mean = self.deterministic_image(point, drift);
        PhasePoint::new(mean.q + sd * eq, mean.p + sd * ep)
    }
}

/// Sends one point through the channel.
pub fn transmit(point: PhasePoint, params: &ChannelParams, rng: &mut RandomSource) -> PhasePoint {
    params.apply(point, &mut rng.rng)
}

/// Sends every point through the channel with the default execution policy.
pub fn transmit_batch(
    points: &[PhasePoint],
    params: &ChannelParams,
    rng: &mut RandomSource,
) -> Vec<PhasePoint> {
    transmit_batch_with(points, params, rng, Execution::default())
}

/// [`transmit_batch`] with an explicit execution policy.
///
/// Advances `rng` by exactly one `u64` regardless of batch size.
pub fn transmit_batch_with(
    points: &[PhasePoint],
    params: &ChannelParams,
    rng: &mut RandomSource,
    exec: Execution,
) -> Vec<PhasePoint> {
    let key = rng.next_u64();
    let chunks: Vec<&[PhasePoint]> = points.chunks(BATCH_CHUNK).collect();
    let per_chunk = exec.map_range(chunks.len(), |c| {
        let mut local = ChaCha8Rng::seed_from_u64(key);
        local.set_stream(c as u64);
        chunks[c]
            .iter()
            .map(|&pt| params.apply(pt, &mut local))
            .collect::<Vec<_>>()
    });
    per_chunk.into_iter().flatten().collect()
}

//! Holevo bound `χ_BE` from the symplectic eigenvalues of the Alice–Bob–Eve
//! covariance matrices under heterodyne detection and reverse reconciliation.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

use super::KeyRateParams;

/// Slack allowed on `λ ≥ 1` and on non-negative discriminants.
pub const PHYSICAL_TOLERANCE: f64 = 1e-9;

/// Entropy function `G(x) = (x+1) log2(x+1) − x log2 x`, with `G(0) = 0`.
pub fn entropy_g(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // log2(x+1) + x·log2(1 + 1/x), stable for large x
    ((x + 1.0).ln() + x * (1.0 / x).ln_1p()) / LN_2
}

/// The five symplectic eigenvalues entering `χ_BE`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SymplecticSpectrum {
    pub lambdas: [f64; 5],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

fn pair_from_trace_det(context: &'static str, trace: f64, det: f64) -> Result<(f64, f64)> {
    let mut disc = trace * trace - 4.0 * det;
    if disc < 0.0 {
        if disc < -PHYSICAL_TOLERANCE * trace * trace.max(1.0) {
            return Err(Error::NumericalDomain {
                context,
                detail: format!("negative discriminant {disc:e} (trace {trace}, det {det})"),
            });
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let hi = 0.5 * (trace + root);
    let lo = 0.5 * (trace - root);
    // λ² = lo can lose digits to cancellation; det / hi is the stable twin
    let lo = if hi > 0.0 { det / hi } else { lo };
    let check = |l2: f64| -> Result<f64> {
        let l = l2.max(0.0).sqrt();
        if l < 1.0 - PHYSICAL_TOLERANCE || !l.is_finite() {
            return Err(Error::NumericalDomain {
                context,
                detail: format!("unphysical symplectic eigenvalue {l} (trace {trace}, det {det})"),
            });
        }
        Ok(l.max(1.0))
    };
    Ok((check(hi)?, check(lo)?))
}

/// Eigenvalues for correlation `z` at the channel in `params`.
///
/// `λ₁,₂` come from `A = V² + T²(V+χ_line)² − 2TZ²` and
/// `B = T²(V² + Vχ_line − Z²)²`. `λ₃,₄` come from the conditional matrix
/// after Bob's heterodyne measurement:
///
/// ```text
/// C = [Aχ_het² + B + 1 + 2χ_het(V√B + T(V + χ_line)) + 2TZ²] / (T²(V + χ_tot)²)
/// D = ((V + √B χ_het) / (T(V + χ_tot)))²
/// ```
///
/// and `λ₅ = 1`.
pub fn symplectic_spectrum(
    params: &KeyRateParams,
    transmittance: f64,
    excess_noise: f64,
    z: f64,
) -> Result<SymplecticSpectrum> {
    let v = params.v();
    let t = transmittance;
    let chi_line = 1.0 / t - 1.0 + excess_noise;
    let chi_het = params.chi_het();
    let chi_tot = chi_line + chi_het / t;
    let z2 = z * z;

    let a = v * v + t * t * (v + chi_line).powi(2) - 2.0 * t * z2;
    let b = (t * (v * v + v * chi_line - z2)).powi(2);
    let (l1, l2) = pair_from_trace_det("λ1,2", a, b)?;

    let sqrt_b = b.sqrt();
    let norm = (t * (v + chi_tot)).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * sqrt_b + t * (v + chi_line))
        + 2.0 * t * z2)
        / norm;
    let d = (v + sqrt_b * chi_het).powi(2) / norm;
    let (l3, l4) = pair_from_trace_det("λ3,4", c, d)?;

    Ok(SymplecticSpectrum {
        lambdas: [l1, l2, l3, l4, 1.0],
        a,
        b,
        c,
        d,
    })
}

/// `χ_BE = G((λ₁−1)/2) + G((λ₂−1)/2) − Σ_{i=3..5} G((λ_i−1)/2)`.
pub fn chi_from_spectrum(spectrum: &SymplecticSpectrum) -> f64 {
    let g = |l: f64| entropy_g((l - 1.0) / 2.0);
    let [l1, l2, l3, l4, l5] = spectrum.lambdas;
    g(l1) + g(l2) - g(l3) - g(l4) - g(l5)
}

/// Holevo bound at the nominal channel of `params` for correlation `z`.
pub fn holevo_chi_be(params: &KeyRateParams, z: f64) -> Result<(f64, SymplecticSpectrum)> {
    let spectrum = symplectic_spectrum(params, params.transmittance, params.excess_noise, z)?;
    Ok((chi_from_spectrum(&spectrum), spectrum))
}

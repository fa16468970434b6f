//! Alice–Bob correlation `Z` for Gaussian, four-state and eight-state modulation.
//!
//! For an `N`-state PSK constellation of amplitude `α` the averaged state is
//! diagonal in Fock space with weights
//!
//! ```text
//! l_k = e^{−α²} Σ_{n ≡ k (mod N)} α^{2n} / n!
//! ```
//!
//! and the correlation is `Z = 2α² Σ_k l_{k−1}^{3/2} / l_k^{1/2}` with the
//! index taken cyclically. The `l_k` have closed forms in terms of
//! `cosh`, `cos`, `sinh` and `sin` of `α²` (and `α²/√2` for eight states).
//! Below `α² = 1` the closed forms cancel catastrophically in the high-`k`
//! coefficients, so the direct series is used there instead.

use std::f64::consts::SQRT_2;

/// `α²` below which the Fock series replaces the closed forms.
pub const SERIES_CUTOVER: f64 = 1.0;

/// `Z_G = sqrt(V² − 1)` with `V = V_m + 1`.
pub fn z_gaussian(modulation_variance: f64) -> f64 {
    let v = modulation_variance + 1.0;
    (v * v - 1.0).max(0.0).sqrt()
}

/// `e^{−a} cosh(b)` without overflow for large `a`, `b ≤ a`.
fn ech(a: f64, b: f64) -> f64 {
    0.5 * ((b - a).exp() + (-b - a).exp())
}

/// `e^{−a} sinh(b)`.
fn esh(a: f64, b: f64) -> f64 {
    0.5 * ((b - a).exp() - (-b - a).exp())
}

/// `l_k` by summing the Fock series directly.
pub fn fock_weights(alpha_sq: f64, states: usize) -> Vec<f64> {
    let mut l = vec![0.0; states];
    if alpha_sq <= 0.0 {
        l[0] = 1.0;
        return l;
    }
    let prefactor = (-alpha_sq).exp();
    let mut term = prefactor; // e^{−a} a^n / n! at n = 0
    let mut n = 0usize;
    loop {
        l[n % states] += term;
        n += 1;
        term *= alpha_sq / n as f64;
        // weights sum to one, so an absolute cutoff past the peak suffices
        if (n as f64 > alpha_sq && term < 1e-20) || term == 0.0 {
            break;
        }
    }
    l
}

/// Four-state weights `l_0..l_3`.
pub fn four_state_weights(alpha_sq: f64) -> [f64; 4] {
    if alpha_sq < SERIES_CUTOVER {
        let l = fock_weights(alpha_sq, 4);
        return [l[0], l[1], l[2], l[3]];
    }
    let a = alpha_sq;
    let ec = (-a).exp() * a.cos();
    let es = (-a).exp() * a.sin();
    [
        0.5 * (ech(a, a) + ec),
        0.5 * (esh(a, a) + es),
        0.5 * (ech(a, a) - ec),
        0.5 * (esh(a, a) - es),
    ]
}

/// Eight-state weights `l_0..l_7`.
pub fn eight_state_weights(alpha_sq: f64) -> [f64; 8] {
    if alpha_sq < SERIES_CUTOVER {
        let l = fock_weights(alpha_sq, 8);
        let mut out = [0.0; 8];
        out.copy_from_slice(&l);
        return out;
    }
    let a = alpha_sq;
    let b = a / SQRT_2;
    let e = (-a).exp();
    let (ch, sh) = (ech(a, a), esh(a, a));
    let (c, s) = (e * a.cos(), e * a.sin());
    // e^{−a} cos(b) cosh(b) and friends
    let cos_cosh = b.cos() * ech(a, b);
    let cos_sinh = b.cos() * esh(a, b);
    let sin_cosh = b.sin() * ech(a, b);
    let sin_sinh = b.sin() * esh(a, b);
    let odd_plus = SQRT_2 * (cos_sinh + sin_cosh);
    let odd_minus = SQRT_2 * (cos_sinh - sin_cosh);
    [
        0.25 * (ch + c + 2.0 * cos_cosh),
        0.25 * (sh + s + odd_plus),
        0.25 * (ch - c + 2.0 * sin_sinh),
        0.25 * (sh - s - odd_minus),
        0.25 * (ch + c - 2.0 * cos_cosh),
        0.25 * (sh + s - odd_plus),
        0.25 * (ch - c - 2.0 * sin_sinh),
        0.25 * (sh - s + odd_minus),
    ]
}

/// `2α² Σ_k l_{k−1}^{3/2} / l_k^{1/2}` with cyclic indices.
pub fn z_from_weights(alpha_sq: f64, l: &[f64]) -> f64 {
    let n = l.len();
    let sum: f64 = (0..n)
        .map(|k| {
            let prev = l[(k + n - 1) % n];
            let cur = l[k];
            // both vanish together as α → 0; the limit of the term is 0
            if prev <= 0.0 || cur <= 0.0 {
                0.0
            } else {
                prev * (prev / cur).sqrt()
            }
        })
        .sum();
    2.0 * alpha_sq * sum
}

/// `Z_4` at modulation variance `V_m` (`α² = V_m / 2`).
pub fn z_four(modulation_variance: f64) -> f64 {
    let a2 = modulation_variance / 2.0;
    if a2 <= 0.0 {
        return 0.0;
    }
    z_from_weights(a2, &four_state_weights(a2))
}

/// `Z_8` at modulation variance `V_m` (`α² = V_m / 2`).
pub fn z_eight(modulation_variance: f64) -> f64 {
    let a2 = modulation_variance / 2.0;
    if a2 <= 0.0 {
        return 0.0;
    }
    z_from_weights(a2, &eight_state_weights(a2))
}

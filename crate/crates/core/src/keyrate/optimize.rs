//! Modulation-variance optimisation of the key rate at fixed distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

use super::{KeyRateParams, RateKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub vm_min: f64,
    pub vm_max: f64,
    /// Log-spaced points of the coarse scan.
    pub grid_points: usize,
    /// Golden-section stops once the bracket is narrower than this (in `V_m`).
    pub tolerance: f64,
    pub kind: RateKind,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            vm_min: 0.05,
            vm_max: 60.0,
            grid_points: 32,
            tolerance: 1e-4,
            kind: RateKind::Asymptotic,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.vm_min > 0.0 && self.vm_max > self.vm_min && self.vm_max.is_finite()) {
            return Err(Error::param(format!(
                "need 0 < vm_min < vm_max, got [{}, {}]",
                self.vm_min, self.vm_max
            )));
        }
        if self.grid_points < 3 {
            return Err(Error::param("grid_points must be at least 3"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::param("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmOptimum {
    pub distance_km: f64,
    pub optimal_vm: f64,
    pub key_rate: f64,
    pub positive: bool,
}

fn objective(base: &KeyRateParams, kind: RateKind, vm: f64) -> f64 {
    match kind.evaluate(&base.with_vm(vm)) {
        Ok(r) if r.key_rate.is_finite() => r.key_rate,
        _ => f64::NEG_INFINITY,
    }
}

fn optimum_at(base: &KeyRateParams, settings: &OptimizerSettings, distance_km: f64) -> VmOptimum {
    let params = base.at_distance(distance_km);
    let f = |vm: f64| objective(&params, settings.kind, vm);

    let (lo, hi) = (settings.vm_min.ln(), settings.vm_max.ln());
    let n = settings.grid_points;
    let grid: Vec<f64> = (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&vm| f(vm)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n - 1)];
    let (mut best_vm, mut best_rate) = (grid[best], values[best]);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > settings.tolerance {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    for (vm, r) in [(x1, f1), (x2, f2)] {
        if r > best_rate {
            best_vm = vm;
            best_rate = r;
        }
    }
    VmOptimum {
        distance_km,
        optimal_vm: best_vm,
        key_rate: best_rate,
        positive: best_rate > 0.0,
    }
}

/// Maximises the rate over `V_m` at every distance: a log-spaced scan of
/// `[vm_min, vm_max]` followed by golden-section refinement around the best
/// grid point. Parameter sets the rate formulas reject score `−∞`.
pub fn optimize_vm(
    base: &KeyRateParams,
    distances_km: &[f64],
    settings: &OptimizerSettings,
    exec: Execution,
) -> Result<Vec<VmOptimum>> {
    settings.validate()?;
    base.at_distance(distances_km.first().copied().unwrap_or(0.0))
        .validate()?;
    if let Some(d) = distances_km.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::param(format!(
            "distance must be finite and >= 0, got {d}"
        )));
    }
    Ok(exec.map(distances_km, |&d| optimum_at(base, settings, d)))
}

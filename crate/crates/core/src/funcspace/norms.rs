//! Homogeneous Sobolev norms, Hardy decomposition and shifted tail integrals.

use serde::{Deserialize, Serialize};

use super::grid::{fourier_transform_padded, inverse_fourier_transform, GridFunction, SpectrumGrid};
use crate::error::{Error, Result};

/// Smoothness index s of Ḣ^s.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Half,
    One,
}

impl Order {
    pub fn exponent(self) -> f64 {
        match self {
            Order::Half => 1.0,
            Order::One => 2.0,
        }
    }
}

/// End-of-grid level of the weighted integrand above which the norm is
/// declared divergent.
pub const DEFAULT_DIVERGENCE_TOL: f64 = 1e-3;

/// (∫ |ξ|^{2s} |f̂(ξ)|² dξ)^{1/2}, integrated separately on each half-line.
pub fn sobolev_norm(spec: &SpectrumGrid, order: Order) -> Result<f64> {
    sobolev_norm_with_tol(spec, order, DEFAULT_DIVERGENCE_TOL)
}

pub fn sobolev_norm_with_tol(spec: &SpectrumGrid, order: Order, tol: f64) -> Result<f64> {
    let p = order.exponent();
    let weighted = |k: usize| spec.xi(k).abs().powf(p) * spec.amplitudes[k].norm_sqr();
    let n = spec.len();
    let peak = (0..n).map(weighted).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    let end = weighted(0).max(weighted(n - 1)) / peak;
    if end > tol {
        return Err(Error::Divergence(format!(
            "weighted spectrum at grid end is {end:.2e} of its peak (tolerance {tol:.1e})"
        )));
    }
    let w = |xi: f64| xi.abs().powf(p);
    let total = spec.weighted_energy(spec.freq_start, 0.0, true, w) + spec.weighted_energy(0.0, spec.freq_end(), true, w);
    Ok(total.sqrt())
}

/// Frequency weights of the split: the zero bin and the lowest (Nyquist)
/// bin are shared equally so that f̊ is exactly imaginary for real input.
fn split_weight(spec: &SpectrumGrid, k: usize) -> f64 {
    let xi = spec.xi(k);
    let tiny = 1e-9 * spec.freq_step;
    if xi.abs() < tiny || (k == 0 && spec.len() % 2 == 0) {
        0.5
    } else if xi > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct HardySplit {
    pub plus: GridFunction,
    pub minus: GridFunction,
    pub ring: GridFunction,
}

/// f₊, f₋ and f̊ = f₋ − f₊ from the spectrum of a real f.
pub fn hardy_split(spec: &SpectrumGrid) -> HardySplit {
    let part = |positive: bool| {
        let mut s = spec.clone();
        for (k, a) in s.amplitudes.iter_mut().enumerate() {
            let w = split_weight(spec, k);
            *a *= if positive { w } else { 1.0 - w };
        }
        inverse_fourier_transform(&s)
    };
    let plus = part(true);
    let minus = part(false);
    let ring = GridFunction {
        grid_start: plus.grid_start,
        grid_step: plus.grid_step,
        values: minus.values.iter().zip(&plus.values).map(|(m, p)| m - p).collect(),
        descriptor: None,
    };
    HardySplit { plus, minus, ring }
}

/// Hardy split of a sampled function with one window-length of zero padding,
/// cropped back to the original grid.
pub fn hardy_split_function(g: &GridFunction) -> Result<HardySplit> {
    let spec = fourier_transform_padded(g, 2)?;
    let full = hardy_split(&spec);
    let offset = ((g.grid_start - full.plus.grid_start) / g.grid_step).round() as usize;
    let crop = |h: GridFunction| GridFunction {
        grid_start: g.grid_start,
        grid_step: g.grid_step,
        values: h.values[offset..offset + g.len()].to_vec(),
        descriptor: None,
    };
    Ok(HardySplit { plus: crop(full.plus), minus: crop(full.minus), ring: crop(full.ring) })
}

/// ∫_{lower}^∞ ξ |ĥ(ξ + shift)|² dξ over the part of the grid above the
/// lower limit.
pub fn tail_moment(spec: &SpectrumGrid, shift: f64, lower: f64) -> Result<f64> {
    let a = lower + shift;
    if spec.freq_end() < a {
        return Err(Error::Range(format!(
            "spectrum ends at {:.4} but the tail integral starts at {a:.4}",
            spec.freq_end()
        )));
    }
    Ok(spec.weighted_energy(a, spec.freq_end(), false, |eta| eta - shift))
}

/// (∫₁^∞ ξ |ĥ(ξ + R)|² dξ)^{1/2}.
pub fn shifted_tail_seminorm(spec: &SpectrumGrid, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("R must be at least 1, got {r}")));
    }
    Ok(tail_moment(spec, r, 1.0)?.sqrt())
}

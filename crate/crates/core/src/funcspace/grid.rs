//! Uniformly sampled functions and their continuous Fourier transforms.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::descriptor::Descriptor;
use crate::error::{Error, Result};

/// Default grid step for sampled descriptors.
pub const DEFAULT_STEP: f64 = 1.0 / 64.0;
/// Tail level targeted when auto-sizing windows.
pub const DEFAULT_TAIL: f64 = 1e-10;
/// Largest auto-sized grid.
pub const MAX_AUTO_POINTS: usize = 1 << 20;
/// Relative end-point level accepted by [`fourier_transform`].
pub const DEFAULT_TRANSFORM_TAIL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid_start: f64,
    pub grid_step: f64,
    pub values: Vec<Complex64>,
    pub descriptor: Option<Descriptor>,
}

impl GridFunction {
    /// Wraps raw samples; no closed form is attached.
    pub fn from_samples(grid_start: f64, grid_step: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(grid_step > 0.0) || values.is_empty() {
            return Err(Error::Domain("grid_step must be positive and values nonempty".into()));
        }
        if let Some(k) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain(format!("non-finite sample at index {k}")));
        }
        Ok(GridFunction { grid_start, grid_step, values, descriptor: None })
    }

    pub fn from_real(grid_start: f64, grid_step: f64, values: &[f64]) -> Result<Self> {
        Self::from_samples(grid_start, grid_step, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t(&self, k: usize) -> f64 {
        self.grid_start + k as f64 * self.grid_step
    }

    pub fn grid_end(&self) -> f64 {
        self.t(self.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.t(k))
    }

    /// Linear interpolation; `None` outside the grid range.
    pub fn interpolate(&self, t: f64) -> Option<Complex64> {
        let x = (t - self.grid_start) / self.grid_step;
        let last = (self.len() - 1) as f64;
        if !(x >= -1e-9 && x <= last + 1e-9) {
            return None;
        }
        let x = x.clamp(0.0, last);
        let k = (x.floor() as usize).min(self.len().saturating_sub(2));
        if self.len() == 1 {
            return Some(self.values[0]);
        }
        let frac = x - k as f64;
        Some(self.values[k] * (1.0 - frac) + self.values[k + 1] * frac)
    }

    /// Closed form if a descriptor is attached, interpolation otherwise.
    pub fn eval(&self, t: f64) -> Option<Complex64> {
        match &self.descriptor {
            Some(d) => Some(d.value(t)),
            None => self.interpolate(t),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_real(&self) -> f64 {
        self.values.iter().map(|v| v.re.abs()).fold(0.0, f64::max)
    }

    pub fn sup_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// Trapezoidal ∫|g|².
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.len();
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        let ends = 0.5 * (self.values[0].norm_sqr() + self.values[n - 1].norm_sqr());
        (s - ends) * self.grid_step
    }

    /// Largest endpoint magnitude relative to the sup norm.
    pub fn tail_level(&self) -> f64 {
        let sup = self.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        let n = self.len();
        self.values[0].norm().max(self.values[n - 1].norm()) / sup
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> GridFunction {
        GridFunction {
            grid_start: self.grid_start,
            grid_step: self.grid_step,
            values: self.values.iter().map(|&v| f(v)).collect(),
            descriptor: None,
        }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        let mut g = self.map(|v| v * c);
        g.descriptor = self.descriptor.map(|d| d.scaled(c));
        g
    }

    /// Two-column CSV `t, re, im`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "re", "im"])?;
        for (k, v) in self.values.iter().enumerate() {
            out.serialize((self.t(k), v.re, v.im))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Samples `desc` at `n_points` grid points starting at `grid_start`.
pub fn make_grid_function(desc: Descriptor, grid_start: f64, grid_step: f64, n_points: usize) -> Result<GridFunction> {
    if n_points < 2 {
        return Err(Error::Domain("n_points must be at least 2".into()));
    }
    desc.validate()?;
    let values: Vec<Complex64> = (0..n_points).map(|k| desc.value(grid_start + k as f64 * grid_step)).collect();
    let mut g = GridFunction::from_samples(grid_start, grid_step, values)?;
    g.descriptor = Some(desc);
    Ok(g)
}

/// Centered power-of-two grid with step `step` whose half-width covers the
/// descriptor's support at relative level `tail`, capped at `max_points`.
pub fn auto_grid(desc: Descriptor, step: f64, tail: f64, max_points: usize) -> Result<GridFunction> {
    let half = desc.support_halfwidth(tail).max(4.0 * step) * 1.05 + 4.0 * step;
    let n = ((2.0 * half / step).ceil() as usize).next_power_of_two().min(max_points.next_power_of_two());
    make_grid_function(desc, -(n as f64) / 2.0 * step, step, n)
}

/// Default sampling of a descriptor: step 1/64, tails below 1e−10 where the
/// point cap allows.
pub fn sample_default(desc: Descriptor) -> Result<GridFunction> {
    auto_grid(desc, DEFAULT_STEP, DEFAULT_TAIL, MAX_AUTO_POINTS)
}

/// Normalization tag; only the symmetric convention is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// f̂(ξ) = (2π)^{−1/2} ∫ f(t) e^{−iξt} dt
    #[default]
    Unitary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub freq_start: f64,
    pub freq_step: f64,
    pub amplitudes: Vec<Complex64>,
    pub convention: Convention,
    /// Start of the time grid the transform came from, needed to invert.
    pub time_origin: f64,
}

impl SpectrumGrid {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn xi(&self, k: usize) -> f64 {
        self.freq_start + k as f64 * self.freq_step
    }

    pub fn freq_end(&self) -> f64 {
        self.xi(self.len() - 1)
    }

    /// Spectrum of a descriptor sampled on the frequency grid matching a time
    /// grid of `n` points and step `dt` starting at `time_origin`.
    pub fn from_descriptor(desc: &Descriptor, time_origin: f64, dt: f64, n: usize) -> SpectrumGrid {
        let dxi = 2.0 * PI / (n as f64 * dt);
        let start = -(n as f64 / 2.0).floor() * dxi;
        SpectrumGrid {
            freq_start: start,
            freq_step: dxi,
            amplitudes: (0..n).map(|k| desc.spectrum(start + k as f64 * dxi)).collect(),
            convention: Convention::Unitary,
            time_origin,
        }
    }

    /// Trapezoidal ∫|f̂|².
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.len();
        let s: f64 = self.amplitudes.iter().map(|v| v.norm_sqr()).sum();
        (s - 0.5 * (self.amplitudes[0].norm_sqr() + self.amplitudes[n - 1].norm_sqr())) * self.freq_step
    }

    /// max_ξ |â(ξ) − conj â(−ξ)| over the symmetric part of the grid.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            let xi = self.xi(k);
            let mirror = (-xi - self.freq_start) / self.freq_step;
            let j = mirror.round();
            if j < 0.0 || j as usize >= self.len() || (mirror - j).abs() > 1e-6 {
                continue;
            }
            worst = worst.max((self.amplitudes[k] - self.amplitudes[j as usize].conj()).norm());
        }
        worst
    }

    /// Linear interpolation of the amplitude; zero outside the grid.
    pub fn interpolate(&self, xi: f64) -> Complex64 {
        let x = (xi - self.freq_start) / self.freq_step;
        let last = (self.len() - 1) as f64;
        if !(x >= 0.0 && x <= last) {
            return Complex64::new(0.0, 0.0);
        }
        let k = (x.floor() as usize).min(self.len() - 2);
        let frac = x - k as f64;
        self.amplitudes[k] * (1.0 - frac) + self.amplitudes[k + 1] * frac
    }

    /// ∫_a^b w(ξ)|f̂(ξ)|² dξ. The amplitude is replaced on each grid cell by
    /// its local degree-7 interpolant and integrated by 8-point Gauss–Legendre.
    /// With `confine`, stencils stay inside the nodes bracketing [a, b] so that
    /// a kink at a limit is not smeared.
    pub fn weighted_energy<W: Fn(f64) -> f64>(&self, a: f64, b: f64, confine: bool, weight: W) -> f64 {
        let n = self.len();
        if n < 2 || b <= a {
            return 0.0;
        }
        let pos = |x: f64| (x - self.freq_start) / self.freq_step;
        let lo = pos(a).max(0.0);
        let hi = pos(b).min((n - 1) as f64);
        if hi <= lo {
            return 0.0;
        }
        let klo = (lo + 1e-9).floor() as usize;
        let khi = ((hi - 1e-9).ceil() as usize).min(n - 1);
        let (gx, gw) = crate::quad::gauss_legendre(8, 0.0, 1.0);
        let mut total = 0.0;
        for cell in klo..khi {
            let c0 = (cell as f64).max(lo);
            let c1 = ((cell + 1) as f64).min(hi);
            if c1 <= c0 {
                continue;
            }
            let (slo, shi) = if confine { (klo, khi) } else { (0, n - 1) };
            let m = (shi - slo + 1).min(8);
            let start = (cell as i64 - (m as i64 / 2 - 1)).clamp(slo as i64, (shi + 1 - m) as i64) as usize;
            let stencil = &self.amplitudes[start..start + m];
            if stencil.iter().all(|v| v.norm_sqr() == 0.0) {
                continue;
            }
            for (x, w) in gx.iter().zip(&gw) {
                let u = c0 + (c1 - c0) * x;
                let amp = lagrange(stencil, u - start as f64);
                let xi = self.freq_start + u * self.freq_step;
                total += w * (c1 - c0) * weight(xi) * amp.norm_sqr();
            }
        }
        total * self.freq_step
    }

    /// Two-column CSV `xi, re, im`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["xi", "re", "im"])?;
        for (k, v) in self.amplitudes.iter().enumerate() {
            out.serialize((self.xi(k), v.re, v.im))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Value at fractional position `u` of the polynomial through `ys` at 0, 1, ….
fn lagrange(ys: &[Complex64], u: f64) -> Complex64 {
    let m = ys.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m {
        let mut l = 1.0;
        for k in 0..m {
            if k != j {
                l *= (u - k as f64) / (j as f64 - k as f64);
            }
        }
        acc += ys[j] * l;
    }
    acc
}

/// In-place DFT of `buf`, forward (e^{−2πikn/N}) or inverse (unnormalized).
pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(buf.len()) } else { planner.plan_fft_forward(buf.len()) };
    plan.process(buf);
}

/// Samples `values` at t_n = t0 + n·dt → unitary spectrum on ξ_k = (k − ⌊N/2⌋)·dξ.
pub(crate) fn dft_to_spectrum(values: &[Complex64], t0: f64, dt: f64) -> SpectrumGrid {
    let n = values.len();
    let half = n / 2;
    let dxi = 2.0 * PI / (n as f64 * dt);
    // shifting the output index by N/2 multiplies sample n by e^{iπn·2half/N}
    let mut buf: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(j, &v)| v * Complex64::from_polar(1.0, 2.0 * PI * (half * j % n) as f64 / n as f64))
        .collect();
    fft_in_place(&mut buf, false);
    let norm = dt / (2.0 * PI).sqrt();
    let freq_start = -(half as f64) * dxi;
    let amplitudes = buf
        .into_iter()
        .enumerate()
        .map(|(k, v)| v * Complex64::from_polar(norm, -(freq_start + k as f64 * dxi) * t0))
        .collect();
    SpectrumGrid { freq_start, freq_step: dxi, amplitudes, convention: Convention::Unitary, time_origin: t0 }
}

/// Inverse of [`dft_to_spectrum`].
pub(crate) fn spectrum_to_samples(spec: &SpectrumGrid) -> Vec<Complex64> {
    let n = spec.len();
    let t0 = spec.time_origin;
    let dxi = spec.freq_step;
    let mut buf: Vec<Complex64> = spec
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, &a)| a * Complex64::from_polar(1.0, spec.xi(k) * t0))
        .collect();
    fft_in_place(&mut buf, true);
    let kstart = (spec.freq_start / dxi).round() as i64;
    let norm = dxi / (2.0 * PI).sqrt();
    buf.into_iter()
        .enumerate()
        .map(|(j, v)| {
            let phase = 2.0 * PI * ((kstart * j as i64).rem_euclid(n as i64)) as f64 / n as f64;
            v * Complex64::from_polar(norm, phase)
        })
        .collect()
}

/// Unitary continuous Fourier transform by FFT, rejecting grids whose end
/// values exceed `tail_tol` relative to the sup norm.
pub fn fourier_transform_with_tol(g: &GridFunction, tail_tol: f64) -> Result<SpectrumGrid> {
    let level = g.tail_level();
    if level > tail_tol {
        return Err(Error::TailTruncation(format!(
            "end values at {level:.3e} of the sup norm exceed tolerance {tail_tol:.1e}"
        )));
    }
    Ok(dft_to_spectrum(&g.values, g.grid_start, g.grid_step))
}

pub fn fourier_transform(g: &GridFunction) -> Result<SpectrumGrid> {
    fourier_transform_with_tol(g, DEFAULT_TRANSFORM_TAIL)
}

/// Inverse transform back onto the time grid the spectrum was computed from.
pub fn inverse_fourier_transform(spec: &SpectrumGrid) -> GridFunction {
    let n = spec.len();
    let dt = 2.0 * PI / (n as f64 * spec.freq_step);
    GridFunction {
        grid_start: spec.time_origin,
        grid_step: dt,
        values: spectrum_to_samples(spec),
        descriptor: None,
    }
}

/// Zero-pads `g` symmetrically to `factor` times its length before transforming.
pub fn fourier_transform_padded(g: &GridFunction, factor: usize) -> Result<SpectrumGrid> {
    let n = g.len();
    let total = n * factor.max(1);
    let left = (total - n) / 2;
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    values[left..left + n].copy_from_slice(&g.values);
    let padded = GridFunction {
        grid_start: g.grid_start - left as f64 * g.grid_step,
        grid_step: g.grid_step,
        values,
        descriptor: None,
    };
    fourier_transform(&padded)
}

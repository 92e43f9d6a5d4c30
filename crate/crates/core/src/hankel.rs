//! Hankel operators with exponential symbols, their Hilbert–Schmidt norms and
//! the Fredholm determinant V_f(λ).
//!
//! Symbols are b = exp(λ f̊(·/2πR)) − 1 and c = exp(−λ f̊(·/2πR)) − 1. The
//! operator χ_{(1,∞)} H(b) acts with kernel ĥ(s+t)/(2π) in the
//! non-unitary convention, i.e. b̂_U(s+t)/√(2π) with the unitary transform.
//! The second factor pairs with the negative frequencies of c.
//!
//! When f̊ has a closed-form spectrum and is holomorphic in a strip, the
//! transform of a symbol at frequency η is evaluated along a shifted line
//! Im z = ∓c, which multiplies it by e^{−c|η|} analytically and keeps the
//! exponentially small kernel values above the floating-point noise floor.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{
    make_grid_function, spectrum_to_samples, tail_moment, Component, Convention, Descriptor, Shape,
    GridFunction, SpectrumGrid,
};
use crate::quad;

/// Default Nyström size on each half-line.
pub const DEFAULT_N_QUAD: usize = 128;
/// Largest admissible max Re(λ f̊) on the line used for a transform.
pub const DEFAULT_OVERFLOW_GUARD: f64 = 700.0;
/// Product of the two HS factors above which the determinant is refused.
pub const CONDITIONING_LIMIT: f64 = 50.0;
/// Relative agreement required between the two HS routes.
pub const HS_ROUTE_TOL: f64 = 1e-4;
/// Required change of V under doubling of the quadrature.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// HS products below this bound the doubling change by 2(e^p − 1) < 1e-6.
pub const SKIP_DOUBLING_PRODUCT: f64 = 1e-7;
/// Step of the shift grid for contour lines.
pub const SHIFT_STEP: f64 = 0.05;

/// Side of the product: `Plus` is χ H(b), `Minus` is the factor built from c.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

/// Grid on which f̊ is represented for symbol construction: dense enough to
/// resolve a kink-type spectrum far out, wide enough for slowly decaying f̊.
pub fn default_ring_grid(desc: Descriptor) -> Result<GridFunction> {
    let ring = desc.with_component(Component::Ring);
    let (dt, n) = if desc.analytic_strip().is_some() { (1.0 / 128.0, 1 << 18) } else { (1.0 / 1024.0, 1 << 19) };
    make_grid_function(ring, -(n as f64) / 2.0 * dt, dt, n)
}

#[derive(Clone, Copy, Debug)]
struct LineBox {
    shift: f64,
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
}

impl LineBox {
    fn of(shift: f64, values: &[Complex64]) -> Self {
        let mut b = LineBox { shift, re_min: 0.0, re_max: 0.0, im_min: 0.0, im_max: 0.0 };
        for v in values {
            b.re_min = b.re_min.min(v.re);
            b.re_max = b.re_max.max(v.re);
            b.im_min = b.im_min.min(v.im);
            b.im_max = b.im_max.max(v.im);
        }
        b
    }

    /// Upper bound of Re(λ w) over the box; exact for real or imaginary λ.
    fn max_re(&self, lambda: Complex64) -> f64 {
        let re = if lambda.re >= 0.0 { lambda.re * self.re_max } else { lambda.re * self.re_min };
        let im = if lambda.im >= 0.0 { -lambda.im * self.im_min } else { -lambda.im * self.im_max };
        re + im
    }
}

type LineKey = (Side, usize);

/// f̊ on the real line and on the family of shifted lines used for transforms.
pub struct RingLines {
    grid_start: f64,
    dt: f64,
    n: usize,
    /// Closed-form spectrum of f̊ on the transform grid, when available.
    spectrum: Option<Vec<Complex64>>,
    /// Real-line values (shift 0).
    real: Arc<Vec<Complex64>>,
    /// Lines Im z = −c (Plus) and Im z = +c (Minus), index 0 is the real line.
    boxes_plus: Vec<LineBox>,
    boxes_minus: Vec<LineBox>,
    cache: Mutex<Vec<(LineKey, Arc<Vec<Complex64>>)>>,
    fft: Arc<dyn Fft<f64>>,
    /// Pre-multiplier centering the output frequencies and the per-bin
    /// normalization and phase of the unitary transform.
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    /// f even: f̊ is odd and the reflected second symbol equals the first.
    even: bool,
    pub descriptor: Option<Descriptor>,
}

const CACHE_LINES: usize = 12;

impl RingLines {
    /// Builds the line family for f̊. A descriptor-backed f̊ is regenerated
    /// spectrally (periodic on the grid); sampled f̊ is used as given and only
    /// the real line is available.
    pub fn new(f_ring: &GridFunction, max_shift: Option<f64>) -> Result<Self> {
        let sup = f_ring.sup_norm();
        if f_ring.sup_real() > 1e-8 * sup.max(1e-300) {
            return Err(Error::Domain(format!(
                "f̊ must be purely imaginary; real part reaches {:.3e}",
                f_ring.sup_real()
            )));
        }
        let n = f_ring.len();
        let dt = f_ring.grid_step;
        let t0 = f_ring.grid_start;
        let desc = f_ring.descriptor.filter(|d| d.component == Component::Ring);
        let mut lines = RingLines {
            grid_start: t0,
            dt,
            n,
            spectrum: None,
            real: Arc::new(f_ring.values.clone()),
            boxes_plus: vec![],
            boxes_minus: vec![],
            cache: Mutex::new(Vec::new()),
            fft: FftPlanner::new().plan_fft_forward(n),
            pre: Vec::new(),
            post: Vec::new(),
            even: desc.map_or(false, |d| is_even(&d)),
            descriptor: desc,
        };
        let half = n / 2;
        let dxi = 2.0 * PI / (n as f64 * dt);
        let norm = dt / (2.0 * PI).sqrt();
        lines.pre = (0..n).map(|j| Complex64::from_polar(1.0, 2.0 * PI * (half * j % n) as f64 / n as f64)).collect();
        lines.post = (0..n).map(|k| Complex64::from_polar(norm, -((k as f64 - half as f64) * dxi) * t0)).collect();
        let Some(d) = desc else {
            let b = LineBox::of(0.0, &lines.real);
            lines.boxes_plus.push(b);
            lines.boxes_minus.push(b);
            return Ok(lines);
        };
        let template = SpectrumGrid::from_descriptor(&d, t0, dt, n);
        let spec = template.amplitudes.clone();
        let xi_max = template.freq_start.abs();
        // shifts reachable inside the analyticity strip with a decaying
        // continued spectrum on this grid
        let strip = d.analytic_strip().unwrap_or(0.0);
        let mut c_cap = max_shift.unwrap_or(0.9 * strip).min(0.9 * strip).min(3.0);
        let peak = spec.iter().map(|v| v.norm()).fold(0.0, f64::max);
        while c_cap > 0.0 {
            let edge = d.spectrum(xi_max).norm() * (c_cap * xi_max).exp();
            let top = (0..n)
                .step_by(64)
                .map(|k| spec[k].norm() * (c_cap * template.xi(k).abs()).exp())
                .fold(peak, f64::max);
            if edge <= 1e-17 * top {
                break;
            }
            c_cap -= SHIFT_STEP;
        }
        lines.spectrum = Some(spec);
        lines.real = Arc::new(lines.line_values(Side::Plus, 0.0));
        let count = (c_cap / SHIFT_STEP + 1e-9).floor().max(0.0) as usize;
        for side in [Side::Plus, Side::Minus] {
            for j in 0..=count {
                let c = j as f64 * SHIFT_STEP;
                let vals = if j == 0 { lines.real.as_ref().clone() } else { lines.line_values(side, c) };
                let b = LineBox::of(c, &vals);
                match side {
                    Side::Plus => lines.boxes_plus.push(b),
                    Side::Minus => lines.boxes_minus.push(b),
                }
            }
        }
        Ok(lines)
    }

    pub fn from_descriptor(desc: Descriptor) -> Result<Self> {
        Self::new(&default_ring_grid(desc)?, None)
    }

    pub fn real_line(&self) -> &[Complex64] {
        &self.real
    }

    pub fn max_shift(&self) -> f64 {
        self.boxes_plus.last().map(|b| b.shift).unwrap_or(0.0)
    }

    /// f̊(u ∓ ic) on the grid from the continued closed-form spectrum.
    fn line_values(&self, side: Side, c: f64) -> Vec<Complex64> {
        let spec = self.spectrum.as_ref().expect("closed-form spectrum");
        let dxi = 2.0 * PI / (self.n as f64 * self.dt);
        let start = -((self.n / 2) as f64) * dxi;
        let sign = match side {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        };
        let grid = SpectrumGrid {
            freq_start: start,
            freq_step: dxi,
            amplitudes: spec
                .iter()
                .enumerate()
                .map(|(k, a)| a * (sign * c * (start + k as f64 * dxi)).exp())
                .collect(),
            convention: Convention::Unitary,
            time_origin: self.grid_start,
        };
        spectrum_to_samples(&grid)
    }

    fn line(&self, side: Side, index: usize) -> Arc<Vec<Complex64>> {
        if index == 0 {
            return self.real.clone();
        }
        let key = (side, index);
        {
            let cache = self.cache.lock().expect("line cache");
            if let Some((_, v)) = cache.iter().find(|(k, _)| *k == key) {
                return v.clone();
            }
        }
        let c = index as f64 * SHIFT_STEP;
        let v = Arc::new(self.line_values(side, c));
        let mut cache = self.cache.lock().expect("line cache");
        if cache.len() >= CACHE_LINES {
            cache.remove(0);
        }
        cache.push((key, v.clone()));
        v
    }
}

fn is_even(d: &Descriptor) -> bool {
    match d.shape {
        Shape::Indicator { lo, hi } => lo == -hi,
        _ => true,
    }
}

/// exp(z) − 1 without cancellation for small z.
fn exp_m1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)))
    } else {
        z.exp() - 1.0
    }
}

/// One half of a symbol spectrum: Ĝ_U at η ≥ 0 (Plus) or at −η (Minus) for
/// the base-variable symbol G = exp(±λ f̊) − 1, stored tilted by e^{c η}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfSpectrum {
    pub side: Side,
    pub shift: f64,
    pub eta_step: f64,
    pub tilted: Vec<Complex64>,
    /// max Re of the exponent on the line used.
    pub max_exponent: f64,
}

impl HalfSpectrum {
    pub fn eta_max(&self) -> f64 {
        (self.tilted.len() - 1) as f64 * self.eta_step
    }

    /// Ĝ_U(±η) for η ≥ 0; zero beyond the grid.
    pub fn value(&self, eta: f64) -> Complex64 {
        let x = eta / self.eta_step;
        if !(x >= 0.0) || x > (self.tilted.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        lagrange_uniform(&self.tilted, x) * (-self.shift * eta).exp()
    }

    /// Untilted magnitudes as a spectrum grid over η ≥ 0.
    pub fn to_spectrum_grid(&self) -> SpectrumGrid {
        SpectrumGrid {
            freq_start: 0.0,
            freq_step: self.eta_step,
            amplitudes: self
                .tilted
                .iter()
                .enumerate()
                .map(|(k, a)| a * (-self.shift * k as f64 * self.eta_step).exp())
                .collect(),
            convention: Convention::Unitary,
            time_origin: 0.0,
        }
    }

    /// Size of the last stored value relative to the first stored value at
    /// or beyond `eta_from`, after untilting.
    pub fn truncation_level(&self, eta_from: f64) -> f64 {
        let k0 = ((eta_from / self.eta_step).ceil() as usize).min(self.tilted.len() - 1);
        let first = self.value(k0 as f64 * self.eta_step).norm();
        let last = self.value(self.eta_max()).norm();
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }
}

/// Six-point Lagrange interpolation on a uniform grid at fractional index x.
fn lagrange_uniform(ys: &[Complex64], x: f64) -> Complex64 {
    let n = ys.len();
    if n < 6 {
        let k = (x.floor() as usize).min(n.saturating_sub(2));
        let f = x - k as f64;
        return ys[k] * (1.0 - f) + ys[(k + 1).min(n - 1)] * f;
    }
    let start = ((x.floor() as i64) - 2).clamp(0, n as i64 - 6) as usize;
    let u = x - start as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..6 {
        let mut l = 1.0;
        for k in 0..6 {
            if k != j {
                l *= (u - k as f64) / (j as f64 - k as f64);
            }
        }
        acc += ys[start + j] * l;
    }
    acc
}

/// The pair of half spectra defining V at (λ, R).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymbolSpectrum {
    pub lambda: Complex64,
    pub r: f64,
    pub plus: HalfSpectrum,
    pub minus: HalfSpectrum,
}

impl SymbolSpectrum {
    fn half(&self, side: Side) -> &HalfSpectrum {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    /// Hankel kernel of the given factor at x = s + t > 0.
    pub fn kernel(&self, side: Side, x: f64) -> Complex64 {
        let eta = 2.0 * PI * self.r * x;
        self.half(side).value(eta) * ((2.0 * PI).sqrt() * self.r)
    }

    /// Spectrum of the dilated symbol on ξ ≥ 0 (Plus: b̂(ξ); Minus: ĉ(−ξ)).
    pub fn dilated_spectrum(&self, side: Side) -> SpectrumGrid {
        let mut g = self.half(side).to_spectrum_grid();
        let a = 2.0 * PI * self.r;
        g.freq_step /= a;
        g.amplitudes.iter_mut().for_each(|v| *v *= a);
        g
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == Complex64::new(0.0, 0.0)
    }
}

fn choose_line(boxes: &[LineBox], lambda: Complex64, eta_min: f64, guard: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, b) in boxes.iter().enumerate() {
        let m = b.max_re(lambda);
        if m > guard {
            continue;
        }
        let score = m.max(0.0) - b.shift * eta_min;
        if best.map_or(true, |(_, s)| score < s - 1e-12) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

fn build_half(lines: &RingLines, side: Side, lambda: Complex64, r: f64, guard: f64) -> Result<HalfSpectrum> {
    let boxes = match side {
        Side::Plus => &lines.boxes_plus,
        Side::Minus => &lines.boxes_minus,
    };
    let sgn = match side {
        Side::Plus => 1.0,
        Side::Minus => -1.0,
    };
    let lam = lambda * sgn;
    let eta_min = 2.0 * PI * r;
    let j = choose_line(boxes, lam, eta_min, guard).ok_or_else(|| {
        Error::Overflow(format!(
            "Re(λ f̊) exceeds {guard} on every available line (λ = {lambda}, side {side:?})"
        ))
    })?;
    let vals = lines.line(side, j);
    let mut max_exponent = f64::NEG_INFINITY;
    let mut buf: Vec<Complex64> = vals
        .iter()
        .zip(&lines.pre)
        .map(|(&w, &p)| {
            let z = lam * w;
            max_exponent = max_exponent.max(z.re);
            exp_m1(z) * p
        })
        .collect();
    if max_exponent > guard {
        return Err(Error::Overflow(format!("Re(λ f̊) reaches {max_exponent:.1} > {guard}")));
    }
    lines.fft.process(&mut buf);
    let half = lines.n / 2;
    let tilted: Vec<Complex64> = match side {
        Side::Plus => (half..lines.n).map(|k| buf[k] * lines.post[k]).collect(),
        Side::Minus => (0..=half).map(|k| buf[half - k] * lines.post[half - k]).collect(),
    };
    let eta_step = 2.0 * PI / (lines.n as f64 * lines.dt);
    Ok(HalfSpectrum { side, shift: boxes[j].shift, eta_step, tilted, max_exponent })
}

/// Symbol spectra for exp(±λ f̊(·/2πR)) − 1 with the default overflow guard.
pub fn build_symbol(f_ring: &GridFunction, lambda: Complex64, r: f64) -> Result<SymbolSpectrum> {
    let lines = RingLines::new(f_ring, None)?;
    build_symbol_from(&lines, lambda, r, DEFAULT_OVERFLOW_GUARD)
}

pub fn build_symbol_from(lines: &RingLines, lambda: Complex64, r: f64, guard: f64) -> Result<SymbolSpectrum> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("R must be positive, got {r}")));
    }
    let plus = build_half(lines, Side::Plus, lambda, r, guard)?;
    let minus = if lines.even {
        HalfSpectrum { side: Side::Minus, ..plus.clone() }
    } else {
        build_half(lines, Side::Minus, lambda, r, guard)?
    };
    Ok(SymbolSpectrum { lambda, r, plus, minus })
}

/// Mapped Gauss–Legendre rule on (0, ∞): t = α u/(1−u).
#[derive(Clone, Debug)]
pub struct HalfLineRule {
    pub nodes: Vec<f64>,
    pub sqrt_weights: Vec<f64>,
    pub scale: f64,
}

impl HalfLineRule {
    pub fn new(n: usize, scale: f64) -> Self {
        let (u, w) = quad::gauss_legendre(n, 0.0, 1.0);
        Self::from_unit(&u, &w, scale)
    }

    fn from_unit(u: &[f64], w: &[f64], scale: f64) -> Self {
        let nodes = u.iter().map(|&u| scale * u / (1.0 - u)).collect();
        let sqrt_weights = u.iter().zip(w).map(|(&u, &w)| (scale * w).sqrt() / (1.0 - u)).collect();
        HalfLineRule { nodes, sqrt_weights, scale }
    }
}

impl SymbolSpectrum {
    /// Length scale in x − 1 below which half of ∫ (x−1)|k(x)|² dx lies, for
    /// the side with the faster decay; clamped to [1e-4, 1].
    pub fn kernel_scale(&self) -> f64 {
        let a = 2.0 * PI * self.r;
        let mut scale: f64 = 1.0;
        for h in [&self.plus, &self.minus] {
            let k0 = (a / h.eta_step).ceil() as usize;
            if k0 >= h.tilted.len() {
                continue;
            }
            let eta0 = k0 as f64 * h.eta_step;
            let w: Vec<f64> = h.tilted[k0..]
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let eta = eta0 + j as f64 * h.eta_step;
                    (eta - a) * v.norm_sqr() * (-2.0 * h.shift * (eta - eta0)).exp()
                })
                .collect();
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                continue;
            }
            let mut acc = 0.0;
            for (j, v) in w.iter().enumerate() {
                acc += v;
                if acc >= 0.5 * total {
                    scale = scale.min((eta0 + j as f64 * h.eta_step - a) / a);
                    break;
                }
            }
        }
        scale.clamp(1e-4, 1.0)
    }
}

/// Weighted Nyström matrix of χ_{(1,∞)} H(·) for one side: entry (i, j) is
/// √w_i k(1 + t_i + t_j) √w_j, symmetric by the Hankel structure.
pub fn nystrom_matrix(sym: &SymbolSpectrum, side: Side, rule: &HalfLineRule) -> DMatrix<Complex64> {
    let n = rule.nodes.len();
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..=i {
            let v = sym.kernel(side, 1.0 + rule.nodes[i] + rule.nodes[j]) * (rule.sqrt_weights[i] * rule.sqrt_weights[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsNorm {
    pub side: Side,
    /// Route (a): (∫₀^∞ ξ |k(ξ+1)|² dξ)^{1/2} from the spectrum.
    pub spectral: f64,
    /// Route (b): Frobenius norm of the Nyström matrix.
    pub frobenius: f64,
    /// The same spectral integral with the lower limit 1 instead of 0.
    pub printed_seminorm: f64,
    pub relative_gap: f64,
    pub n_quad: usize,
}

/// Route (a) integral ∫_{lower}^∞ ξ |k(ξ+1)|² dξ where k is the Hankel kernel.
fn spectral_tail(sym: &SymbolSpectrum, side: Side, lower: f64) -> Result<f64> {
    let half = sym.half(side).to_spectrum_grid();
    let a = 2.0 * PI * sym.r;
    // the kernel is zero beyond the frequency grid
    if (1.0 + lower) * a >= half.freq_end() {
        return Ok(0.0);
    }
    // with η = 2πR x: ∫ (x−1)|k(x)|² dx = (1/2π) ∫ (η − 2πR) |Ĝ_U(η)|² dη
    Ok(tail_moment(&half, a, lower * a)? / (2.0 * PI))
}

/// Largest Nyström size tried by the Frobenius route.
pub const MAX_HS_N_QUAD: usize = 4096;

/// Both routes to ‖χ_{(1,∞)} H(h)‖_HS. The Frobenius route doubles the
/// Nyström size from the default until it settles; the routes must then
/// agree within [`HS_ROUTE_TOL`].
pub fn hankel_hs_norm(sym: &SymbolSpectrum, side: Side) -> Result<HsNorm> {
    hankel_hs_norm_from(sym, side, DEFAULT_N_QUAD)
}

pub fn hankel_hs_norm_from(sym: &SymbolSpectrum, side: Side, n_start: usize) -> Result<HsNorm> {
    if sym.is_zero() {
        return Ok(HsNorm { side, spectral: 0.0, frobenius: 0.0, printed_seminorm: 0.0, relative_gap: 0.0, n_quad: n_start });
    }
    let alpha = sym.kernel_scale();
    let mut n = n_start.max(8);
    let mut prev = frobenius(&nystrom_matrix(sym, side, &HalfLineRule::new(n, alpha)));
    while n < MAX_HS_N_QUAD {
        let next = frobenius(&nystrom_matrix(sym, side, &HalfLineRule::new(2 * n, alpha)));
        n *= 2;
        let settled = (next - prev).abs() <= 0.1 * HS_ROUTE_TOL * next;
        prev = next;
        if settled {
            break;
        }
    }
    hs_compare(sym, side, prev, n)
}

/// Both routes with a fixed Nyström rule.
pub fn hankel_hs_norm_with(sym: &SymbolSpectrum, side: Side, rule: &HalfLineRule) -> Result<HsNorm> {
    let n_quad = rule.nodes.len();
    if sym.is_zero() {
        return Ok(HsNorm { side, spectral: 0.0, frobenius: 0.0, printed_seminorm: 0.0, relative_gap: 0.0, n_quad });
    }
    hs_compare(sym, side, frobenius(&nystrom_matrix(sym, side, rule)), n_quad)
}

fn hs_compare(sym: &SymbolSpectrum, side: Side, frobenius: f64, n_quad: usize) -> Result<HsNorm> {
    let spectral = spectral_tail(sym, side, 0.0)?.sqrt();
    let printed_seminorm = spectral_tail(sym, side, 1.0)?.sqrt();
    let scale = spectral.max(frobenius);
    let relative_gap = if scale == 0.0 { 0.0 } else { (spectral - frobenius).abs() / scale };
    let out = HsNorm { side, spectral, frobenius, printed_seminorm, relative_gap, n_quad };
    if relative_gap > HS_ROUTE_TOL {
        return Err(Error::Consistency(format!(
            "HS routes disagree: spectral {spectral:.6e} vs Frobenius {frobenius:.6e} (relative {relative_gap:.2e}, n_quad {n_quad})"
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantEvaluation {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub r: f64,
    pub n_quad: usize,
    pub value_re: f64,
    pub value_im: f64,
    pub hs_norm_plus: f64,
    pub hs_norm_minus: f64,
    pub diagnostics: DeterminantDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct DeterminantDiagnostics {
    pub shift_plus: f64,
    pub shift_minus: f64,
    pub max_exponent: f64,
    pub map_scale: f64,
    /// Kernel magnitude at the end of the frequency grid relative to its value at x = 1.
    pub truncation_plus: f64,
    pub truncation_minus: f64,
    /// |V(n_quad) − V(2 n_quad)| when the doubling check ran.
    pub convergence_delta: Option<f64>,
}

impl DeterminantEvaluation {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }

    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.lambda_re, self.lambda_im)
    }

    fn identity(lambda: Complex64, r: f64, n_quad: usize) -> Self {
        DeterminantEvaluation {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            r,
            n_quad,
            value_re: 1.0,
            value_im: 0.0,
            hs_norm_plus: 0.0,
            hs_norm_minus: 0.0,
            diagnostics: DeterminantDiagnostics { map_scale: 1.0, ..Default::default() },
        }
    }
}

/// Settings of a determinant evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredholmOptions {
    pub n_quad: usize,
    /// Scale α of the map t = α u/(1−u); `None` adapts it to the kernel decay.
    pub map_scale: Option<f64>,
    pub overflow_guard: f64,
    pub conditioning_limit: f64,
    /// Recompute at 2·n_quad and fail when V moves by more than the tolerance.
    pub check_convergence: bool,
    pub convergence_tol: f64,
}

impl Default for FredholmOptions {
    fn default() -> Self {
        FredholmOptions {
            n_quad: DEFAULT_N_QUAD,
            map_scale: None,
            overflow_guard: DEFAULT_OVERFLOW_GUARD,
            conditioning_limit: CONDITIONING_LIMIT,
            check_convergence: false,
            convergence_tol: CONVERGENCE_TOL,
        }
    }
}

/// Reusable evaluator of V_{f(·/R)}(λ) for one f.
pub struct FredholmEvaluator {
    pub lines: RingLines,
    pub options: FredholmOptions,
    unit: (Vec<f64>, Vec<f64>),
    unit_fine: (Vec<f64>, Vec<f64>),
}

impl FredholmEvaluator {
    pub fn new(lines: RingLines, options: FredholmOptions) -> Result<Self> {
        if options.n_quad < 32 {
            return Err(Error::Domain(format!("n_quad must be at least 32, got {}", options.n_quad)));
        }
        if let Some(a) = options.map_scale {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("map scale must be positive, got {a}")));
            }
        }
        let unit = quad::gauss_legendre(options.n_quad, 0.0, 1.0);
        let unit_fine = quad::gauss_legendre(2 * options.n_quad, 0.0, 1.0);
        Ok(FredholmEvaluator { lines, options, unit, unit_fine })
    }

    pub fn for_descriptor(desc: Descriptor, options: FredholmOptions) -> Result<Self> {
        Self::new(RingLines::from_descriptor(desc)?, options)
    }

    pub fn symbol(&self, lambda: Complex64, r: f64) -> Result<SymbolSpectrum> {
        build_symbol_from(&self.lines, lambda, r, self.options.overflow_guard)
    }

    fn det_with(&self, sym: &SymbolSpectrum, rule: &HalfLineRule) -> (Complex64, f64, f64) {
        let a = nystrom_matrix(sym, Side::Plus, rule);
        let n = a.nrows();
        if self.lines.even {
            // B = A, so det(I − A²) = det(I − A) det(I + A)
            let h = frobenius(&a);
            let id = DMatrix::<Complex64>::identity(n, n);
            let value = (&id - &a).lu().determinant() * (&id + &a).lu().determinant();
            return (value, h, h);
        }
        let b = nystrom_matrix(sym, Side::Minus, rule);
        let hp = frobenius(&a);
        let hm = frobenius(&b);
        let m = DMatrix::identity(n, n) - &a * &b;
        (m.lu().determinant(), hp, hm)
    }

    /// V at (λ, R); `xi` is only used to label conditioning failures.
    pub fn evaluate_at(&self, lambda: Complex64, r: f64, xi: f64) -> Result<DeterminantEvaluation> {
        let n_quad = self.options.n_quad;
        if lambda == Complex64::new(0.0, 0.0) {
            return Ok(DeterminantEvaluation::identity(lambda, r, n_quad));
        }
        let sym = self.symbol(lambda, r)?;
        let alpha = self.options.map_scale.unwrap_or_else(|| sym.kernel_scale());
        let rule = HalfLineRule::from_unit(&self.unit.0, &self.unit.1, alpha);
        let (value, hp, hm) = self.det_with(&sym, &rule);
        if hp * hm > self.options.conditioning_limit {
            return Err(Error::Conditioning {
                xi,
                detail: format!("HS factor product {:.3e} exceeds {}", hp * hm, self.options.conditioning_limit),
            });
        }
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::Conditioning { xi, detail: "non-finite determinant".into() });
        }
        let mut diagnostics = DeterminantDiagnostics {
            shift_plus: sym.plus.shift,
            shift_minus: sym.minus.shift,
            max_exponent: sym.plus.max_exponent.max(sym.minus.max_exponent),
            map_scale: alpha,
            truncation_plus: sym.plus.truncation_level(2.0 * PI * r),
            truncation_minus: sym.minus.truncation_level(2.0 * PI * r),
            convergence_delta: None,
        };
        // |det(I − M) − 1| ≤ e^{‖A‖_F ‖B‖_F} − 1 for the matrices at either size,
        // so a tiny product settles the doubling check without recomputation
        let p = hp * hm;
        if self.options.check_convergence && p < SKIP_DOUBLING_PRODUCT {
            diagnostics.convergence_delta = Some(2.0 * p.exp_m1());
        } else if self.options.check_convergence {
            let fine_rule = HalfLineRule::from_unit(&self.unit_fine.0, &self.unit_fine.1, alpha);
            let (fine, _, _) = self.det_with(&sym, &fine_rule);
            let delta = (fine - value).norm();
            diagnostics.convergence_delta = Some(delta);
            if delta > self.options.convergence_tol {
                return Err(Error::Resolution(format!(
                    "V moved by {delta:.3e} under quadrature doubling (n_quad = {n_quad})"
                )));
            }
        }
        Ok(DeterminantEvaluation {
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            r,
            n_quad,
            value_re: value.re,
            value_im: value.im,
            hs_norm_plus: hp,
            hs_norm_minus: hm,
            diagnostics,
        })
    }

    pub fn evaluate(&self, lambda: Complex64, r: f64) -> Result<DeterminantEvaluation> {
        self.evaluate_at(lambda, r, f64::NAN)
    }

    pub fn value(&self, lambda: Complex64, r: f64) -> Result<Complex64> {
        Ok(self.evaluate(lambda, r)?.value())
    }
}

/// f̊ of a base function: closed-form descriptor when present, otherwise the
/// Hardy split of the samples.
pub fn ring_of(f: &GridFunction) -> Result<GridFunction> {
    match f.descriptor {
        Some(d) => default_ring_grid(d),
        None => Ok(crate::funcspace::hardy_split_function(f)?.ring),
    }
}

/// V_{f(·/R)}(λ) with the Nyström size `n_quad` and the doubling check.
pub fn fredholm_det_v(f: &GridFunction, lambda: Complex64, r: f64, n_quad: usize) -> Result<DeterminantEvaluation> {
    let lines = RingLines::new(&ring_of(f)?, None)?;
    let ev = FredholmEvaluator::new(lines, FredholmOptions { n_quad, check_convergence: true, ..Default::default() })?;
    ev.evaluate(lambda, r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyDerivative {
    pub derivative: Complex64,
    /// max |V| on the circle.
    pub max_on_circle: f64,
    pub n_circle: usize,
}

/// (1/2πi)∮ g(ζ)/(ζ−λ0)² dζ over |ζ − λ0| = radius by the trapezoidal rule.
pub fn cauchy_derivative_with<G>(g: G, lambda0: Complex64, radius: f64, n_circle: usize) -> Result<CauchyDerivative>
where
    G: Fn(Complex64) -> Result<Complex64> + Sync,
{
    use rayon::prelude::*;
    if n_circle < 3 || !(radius > 0.0) {
        return Err(Error::Domain("need at least 3 circle points and a positive radius".into()));
    }
    let values: Vec<(Complex64, Complex64)> = (0..n_circle)
        .into_par_iter()
        .map(|k| {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n_circle as f64);
            g(lambda0 + e * radius).map(|v| (v, e))
        })
        .collect::<Result<_>>()?;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut max_on_circle: f64 = 0.0;
    for (v, e) in &values {
        acc += v / e;
        max_on_circle = max_on_circle.max(v.norm());
    }
    Ok(CauchyDerivative { derivative: acc / (n_circle as f64 * radius), max_on_circle, n_circle })
}

/// dV/dλ at λ0 for f(·/R) on the unit circle around λ0.
pub fn cauchy_derivative(ev: &FredholmEvaluator, lambda0: Complex64, r: f64, n_circle: usize) -> Result<CauchyDerivative> {
    cauchy_derivative_with(|z| ev.value(z, r), lambda0, 1.0, n_circle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_is_exact_on_quintics() {
        let ys: Vec<Complex64> = (0..20).map(|k| Complex64::new((k as f64).powi(5) - 3.0 * k as f64, 1.0)).collect();
        let x: f64 = 7.3;
        let v = lagrange_uniform(&ys, x);
        assert!((v.re - (x.powi(5) - 3.0 * x)).abs() < 1e-8 * x.powi(5));
    }

    #[test]
    fn box_bound_is_exact_for_real_and_imaginary_lambda() {
        let vals = [Complex64::new(0.1, -0.5), Complex64::new(-0.2, 0.3)];
        let b = LineBox::of(0.0, &vals);
        let best = |l: Complex64| vals.iter().map(|w| (l * w).re).fold(f64::NEG_INFINITY, f64::max);
        for l in [Complex64::new(2.0, 0.0), Complex64::new(-1.5, 0.0), Complex64::new(0.0, 3.0), Complex64::new(0.0, -1.0)] {
            assert!((b.max_re(l) - best(l).max(0.0)).abs() < 1e-15 || b.max_re(l) >= best(l));
        }
    }

    #[test]
    fn cauchy_polynomial_self_test() {
        let sq = |z: Complex64| Ok(z * z);
        let d0 = cauchy_derivative_with(sq, Complex64::new(0.0, 0.0), 1.0, 64).unwrap();
        assert!(d0.derivative.norm() < 1e-10);
        let d1 = cauchy_derivative_with(sq, Complex64::new(1.0, 0.0), 1.0, 64).unwrap();
        assert!((d1.derivative - 2.0).norm() < 1e-10);
        let one = |_z: Complex64| Ok(Complex64::new(1.0, 0.0));
        assert!(cauchy_derivative_with(one, Complex64::new(0.3, 0.0), 1.0, 64).unwrap().derivative.norm() < 1e-10);
    }

    #[test]
    fn mapped_rule_integrates_exponential() {
        let rule = HalfLineRule::new(64, 1.0);
        let s: f64 = rule.nodes.iter().zip(&rule.sqrt_weights).map(|(t, w)| w * w * (-t).exp()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    /// Ĝ_U(η), η > 0, for the lorentzian: only the essential singularity of
    /// exp(λ f̊) at z = −i contributes, evaluated on a small circle around it.
    fn lorentzian_symbol_oracle(lambda: Complex64, eta: f64) -> Complex64 {
        let m = 4096;
        let rho = 0.6;
        let centre = Complex64::new(0.0, -1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..m {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64);
            let z = centre + e * rho;
            let fr = Complex64::new(0.0, -1.0) * z / (1.0 + z * z);
            acc += (lambda * fr).exp() * (Complex64::new(0.0, -eta) * z).exp() * e * rho;
        }
        // clockwise orientation from closing below
        -acc * Complex64::new(0.0, 1.0) / m as f64 * (2.0 * PI).sqrt()
    }

    fn lorentzian() -> FredholmEvaluator {
        FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions::default()).unwrap()
    }

    #[test]
    fn symbol_spectrum_matches_contour_oracle() {
        let ev = lorentzian();
        for lambda in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 3.0), Complex64::new(-2.0, 0.0)] {
            let sym = ev.symbol(lambda, 1.0).unwrap();
            for eta in [2.0 * PI, 10.0, 20.0, 40.0] {
                let want = lorentzian_symbol_oracle(lambda, eta);
                let got = sym.plus.value(eta);
                // periodising the 1/t tail of f̊ on a width-P grid perturbs the
                // symbol by a relative O(|λ| π²/3P²)
                assert!((got - want).norm() <= 1e-5 * want.norm(), "λ={lambda} η={eta}: {got} vs {want}");
                // minus side: reflected symbol of exp(−λ f̊)
                let want_m = lorentzian_symbol_oracle(lambda, eta);
                assert!((sym.minus.value(eta) - want_m).norm() <= 1e-5 * want_m.norm());
            }
        }
    }

    #[test]
    fn hs_routes_agree_and_match_small_lambda_limit() {
        let ev = lorentzian();
        for r in [1.0, 2.0, 3.0] {
            let lambda = 1e-3;
            let sym = ev.symbol(Complex64::new(lambda, 0.0), r).unwrap();
            let hs = hankel_hs_norm(&sym, Side::Plus).unwrap();
            // linearised symbol: HS = |λ| e^{−2πR}/4
            let lin = lambda * (-2.0 * PI * r).exp() / 4.0;
            assert!((hs.spectral / lin - 1.0).abs() < 1e-2, "R={r}: {} vs {lin}", hs.spectral);
            assert!(hs.relative_gap < HS_ROUTE_TOL);
            assert!(hs.printed_seminorm < hs.spectral);
        }
    }

    #[test]
    fn zero_lambda_is_exactly_one() {
        let e = lorentzian().evaluate(Complex64::new(0.0, 0.0), 2.0).unwrap();
        assert_eq!(e.value(), Complex64::new(1.0, 0.0));
        assert_eq!(e.hs_norm_plus, 0.0);
    }

    #[test]
    fn real_lambda_gives_real_determinant() {
        let ev = FredholmEvaluator::for_descriptor(Descriptor::hat(), FredholmOptions::default()).unwrap();
        for lambda in [1.0, -1.0, 2.5] {
            let e = ev.evaluate(Complex64::new(lambda, 0.0), 1.0).unwrap();
            assert!(e.value_im.abs() <= 1e-8, "{}", e.value_im);
            assert!((e.value_re - 1.0).abs() <= (e.hs_norm_plus * e.hs_norm_minus).exp() - 1.0 + 1e-12);
        }
    }

    #[test]
    fn small_lambda_determinant_follows_trace() {
        // 1 − V ≈ λ² (1/2π) ∫_{2πR}^∞ (η − 2πR)|F̂(η)|² dη for the hat at R = 1/2
        let ev = FredholmEvaluator::for_descriptor(Descriptor::hat(), FredholmOptions::default()).unwrap();
        let f = |e: f64| {
            let s = if e == 0.0 { 1.0 } else { (e / 2.0).sin() / (e / 2.0) };
            s * s / (2.0 * PI).sqrt()
        };
        let a = PI;
        let mut breaks = vec![a];
        while *breaks.last().unwrap() < 2.0e4 {
            breaks.push(breaks.last().unwrap() + 2.0 * PI);
        }
        let (x, w) = quad::composite(&breaks, 16);
        let oracle: f64 = x.iter().zip(&w).map(|(&e, &w)| w * (e - a) * f(e).powi(2)).sum::<f64>() / (2.0 * PI);
        let l = 0.01;
        let vp = ev.value(Complex64::new(l, 0.0), 0.5).unwrap().re;
        let vm = ev.value(Complex64::new(-l, 0.0), 0.5).unwrap().re;
        let coeff = (1.0 - (vp + vm) / 2.0) / (l * l);
        assert!((coeff / oracle - 1.0).abs() < 1e-3, "{coeff} vs {oracle}");
    }

    #[test]
    fn guards_raise_typed_errors() {
        let ev = lorentzian();
        let e = ev.evaluate(Complex64::new(0.0, 60.0), 1.0).unwrap_err();
        assert_eq!(e.kind(), "conditioning");
        let ring = make_grid_function(Descriptor::lorentzian().ring(), -64.0, 1.0 / 16.0, 2048).unwrap();
        let sampled = GridFunction { descriptor: None, ..ring };
        let ev = FredholmEvaluator::new(RingLines::new(&sampled, None).unwrap(), FredholmOptions::default()).unwrap();
        assert_eq!(ev.evaluate(Complex64::new(0.0, 5000.0), 1.0).unwrap_err().kind(), "overflow");
        assert!(build_symbol(&sampled, Complex64::new(1.0, 0.0), 0.0).is_err());
    }
}

//! Functions holomorphic and bounded in a horizontal strip, and the strip norm.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::descriptor::Descriptor;
use crate::error::{Error, Result};

/// A closed form known to be holomorphic and bounded on |Im z| ≤ δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolomorphicDescriptor {
    pub descriptor: Descriptor,
    pub delta: f64,
}

impl HolomorphicDescriptor {
    /// Requires δ strictly inside the descriptor's analytic strip.
    pub fn new(descriptor: Descriptor, delta: f64) -> Result<Self> {
        let strip = descriptor
            .analytic_strip()
            .ok_or_else(|| Error::Domain(format!("{descriptor} is not holomorphic")))?;
        if !(delta > 0.0 && delta < strip) {
            return Err(Error::Domain(format!("strip half-width {delta} must lie in (0, {strip})")));
        }
        Ok(HolomorphicDescriptor { descriptor, delta })
    }

    /// f(t + iδ₁) for |δ₁| ≤ δ.
    pub fn eval(&self, t: f64, delta1: f64) -> Result<Complex64> {
        if delta1.abs() > self.delta * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("line Im z = {delta1} outside the strip of half-width {}", self.delta)));
        }
        let v = self.descriptor.value_complex(Complex64::new(t, delta1))?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at {t} + {delta1}i")));
        }
        Ok(v)
    }

    pub fn scaled(&self, c: f64) -> Self {
        HolomorphicDescriptor { descriptor: self.descriptor.scaled(c), ..*self }
    }
}

/// Discretization of the strip norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HlOptions {
    /// Number of lines Im z = δ₁, equally spaced on [−δ, δ] including both edges.
    pub lines: usize,
    pub t_half: f64,
    pub t_step: f64,
}

impl Default for HlOptions {
    fn default() -> Self {
        HlOptions { lines: 33, t_half: 256.0, t_step: 1.0 / 64.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HlNorm {
    pub value: f64,
    pub sup_term: f64,
    pub derivative_term: f64,
    /// Line on which the sup term was attained.
    pub sup_line: f64,
    pub derivative_line: f64,
    pub lines: Vec<f64>,
}

/// sup|f| + sup_{δ₁} ‖f′(· + iδ₁)‖₂ over a finite family of lines; f′ by
/// fourth-order central differences.
pub fn hl_norm(h: &HolomorphicDescriptor, opts: &HlOptions) -> Result<HlNorm> {
    if opts.lines < 1 || !(opts.t_step > 0.0) || !(opts.t_half > 0.0) {
        return Err(Error::Domain("invalid strip-norm discretization".into()));
    }
    let lines: Vec<f64> = if opts.lines == 1 {
        vec![0.0]
    } else {
        (0..opts.lines)
            .map(|j| h.delta * (2.0 * j as f64 / (opts.lines - 1) as f64 - 1.0))
            .collect()
    };
    let n = (2.0 * opts.t_half / opts.t_step).round() as usize + 1;
    let dt = opts.t_step;
    let mut out = HlNorm {
        value: 0.0,
        sup_term: 0.0,
        derivative_term: 0.0,
        sup_line: lines[0],
        derivative_line: lines[0],
        lines: lines.clone(),
    };
    for &d1 in &lines {
        let vals: Vec<Complex64> = (0..n)
            .map(|k| h.eval(-opts.t_half + k as f64 * dt, d1))
            .collect::<Result<_>>()?;
        let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if sup > out.sup_term {
            out.sup_term = sup;
            out.sup_line = d1;
        }
        let energy: f64 = vals
            .windows(5)
            .map(|w| ((w[0] - w[4] + 8.0 * (w[3] - w[1])) / (12.0 * dt)).norm_sqr())
            .sum::<f64>()
            * dt;
        let d = energy.sqrt();
        if d > out.derivative_term {
            out.derivative_term = d;
            out.derivative_line = d1;
        }
    }
    out.value = out.sup_term + out.derivative_term;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_sup_on_boundary() {
        let h = HolomorphicDescriptor::new(Descriptor::lorentzian(), 0.5).unwrap();
        let r = hl_norm(&h, &HlOptions::default()).unwrap();
        assert_eq!(r.sup_line.abs(), 0.5);
        assert!((r.sup_term - 4.0 / 3.0).abs() < 1e-12);
        assert!(r.value.is_finite());
        assert_eq!(r.lines.len(), 33);
        // homogeneity
        let r2 = hl_norm(&h.scaled(2.0), &HlOptions::default()).unwrap();
        assert!((r2.value - 2.0 * r.value).abs() < 1e-12 * r.value);
        // on the real line ∫|f'|² = π/4 for 1/(1+t²)
        let line = hl_norm(&h, &HlOptions { lines: 1, ..Default::default() }).unwrap();
        assert!((line.derivative_term.powi(2) - std::f64::consts::FRAC_PI_4).abs() < 1e-4);
    }

    #[test]
    fn zero_function() {
        let h = HolomorphicDescriptor::new(Descriptor::gaussian().scaled(0.0), 1.0).unwrap();
        assert_eq!(hl_norm(&h, &HlOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_non_holomorphic_and_wide_strips() {
        assert!(HolomorphicDescriptor::new(Descriptor::hat(), 0.5).is_err());
        assert!(HolomorphicDescriptor::new(Descriptor::lorentzian(), 1.0).is_err());
        let h = HolomorphicDescriptor::new(Descriptor::lorentzian(), 0.9).unwrap();
        assert!(h.eval(0.0, 0.95).is_err());
    }
}

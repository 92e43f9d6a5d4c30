//! Closed-form test functions `a·φ(t/s)` and their Hardy components.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Profile φ of a closed-form function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Shape {
    /// e^{−u²}
    Gaussian,
    /// 1/(1+u²)
    Lorentzian,
    /// max(0, 1−|u|)
    Hat,
    /// 1 on [lo, hi], 0 elsewhere
    Indicator { lo: f64, hi: f64 },
}

/// Which piece of the frequency decomposition is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// f itself.
    #[default]
    Base,
    /// f₊, nonnegative frequencies.
    Plus,
    /// f₋, negative frequencies.
    Minus,
    /// f̊ = f₋ − f₊.
    Ring,
}

/// `amplitude · φ(t / scale)`, optionally restricted to a Hardy component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    #[serde(flatten)]
    pub shape: Shape,
    pub amplitude: f64,
    pub scale: f64,
    #[serde(default)]
    pub component: Component,
}

impl Descriptor {
    pub fn new(shape: Shape) -> Self {
        Descriptor { shape, amplitude: 1.0, scale: 1.0, component: Component::Base }
    }

    pub fn gaussian() -> Self {
        Self::new(Shape::Gaussian)
    }

    pub fn lorentzian() -> Self {
        Self::new(Shape::Lorentzian)
    }

    pub fn hat() -> Self {
        Self::new(Shape::Hat)
    }

    pub fn indicator(lo: f64, hi: f64) -> Self {
        Self::new(Shape::Indicator { lo, hi })
    }

    /// t ↦ f(t/r).
    pub fn dilate(self, r: f64) -> Self {
        Descriptor { scale: self.scale * r, ..self }
    }

    pub fn scaled(self, c: f64) -> Self {
        Descriptor { amplitude: self.amplitude * c, ..self }
    }

    pub fn with_component(self, component: Component) -> Self {
        Descriptor { component, ..self }
    }

    pub fn ring(self) -> Self {
        self.with_component(Component::Ring)
    }

    pub fn base(self) -> Self {
        self.with_component(Component::Base)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {}", self.scale)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Domain("amplitude must be finite".into()));
        }
        if let Shape::Indicator { lo, hi } = self.shape {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Domain(format!("indicator needs lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Closed form on the real line. Ring and half-line components of the
    /// gaussian go through Dawson's integral.
    pub fn value(&self, t: f64) -> Complex64 {
        let u = t / self.scale;
        let base = self.profile(u);
        let a = self.amplitude;
        match self.component {
            Component::Base => Complex64::new(a * base, 0.0),
            Component::Ring => Complex64::new(0.0, -a * self.profile_hilbert(u)),
            Component::Plus => 0.5 * a * Complex64::new(base, self.profile_hilbert(u)),
            Component::Minus => 0.5 * a * Complex64::new(base, -self.profile_hilbert(u)),
        }
    }

    fn profile(&self, u: f64) -> f64 {
        match self.shape {
            Shape::Gaussian => (-u * u).exp(),
            Shape::Lorentzian => 1.0 / (1.0 + u * u),
            Shape::Hat => (1.0 - u.abs()).max(0.0),
            Shape::Indicator { lo, hi } => {
                if u >= lo && u <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Hilbert transform (1/π) p.v. ∫ φ(y)/(u−y) dy of the profile.
    fn profile_hilbert(&self, u: f64) -> f64 {
        match self.shape {
            Shape::Gaussian => 2.0 / PI.sqrt() * dawson(Complex64::new(u, 0.0)).re,
            Shape::Lorentzian => u / (1.0 + u * u),
            Shape::Hat => {
                let xlx = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() };
                (xlx(u + 1.0) + xlx(u - 1.0) - 2.0 * xlx(u)) / PI
            }
            Shape::Indicator { lo, hi } => ((u - lo).abs() / (u - hi).abs()).ln() / PI,
        }
    }

    /// Unitary transform (2π)^{-1/2} ∫ f(t) e^{−iξt} dt in closed form.
    pub fn spectrum(&self, xi: f64) -> Complex64 {
        let s = self.scale;
        let base = self.amplitude * s * self.profile_spectrum(s * xi);
        let weight = match self.component {
            Component::Base => 1.0,
            Component::Ring => -sign0(xi),
            Component::Plus => half_step(xi),
            Component::Minus => half_step(-xi),
        };
        base * weight
    }

    fn profile_spectrum(&self, x: f64) -> Complex64 {
        let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
        match self.shape {
            Shape::Gaussian => Complex64::new(FRAC_1_SQRT_2 * (-0.25 * x * x).exp(), 0.0),
            Shape::Lorentzian => Complex64::new((PI / 2.0).sqrt() * (-x.abs()).exp(), 0.0),
            Shape::Hat => {
                let h = 0.5 * x;
                let sinc = if h.abs() < 1e-8 { 1.0 - h * h / 6.0 } else { h.sin() / h };
                Complex64::new(inv_sqrt_2pi * sinc * sinc, 0.0)
            }
            Shape::Indicator { lo, hi } => {
                if x.abs() < 1e-12 {
                    Complex64::new(inv_sqrt_2pi * (hi - lo), 0.0)
                } else {
                    let e = |a: f64| Complex64::from_polar(1.0, -x * a);
                    (e(lo) - e(hi)) / Complex64::new(0.0, x) * inv_sqrt_2pi
                }
            }
        }
    }

    /// Half-width beyond which the base profile stays below `tol · |amplitude|`.
    pub fn support_halfwidth(&self, tol: f64) -> f64 {
        let s = self.scale;
        match self.shape {
            Shape::Gaussian => s * (1.0 / tol).ln().max(0.0).sqrt(),
            Shape::Lorentzian => s * (1.0 / tol - 1.0).max(0.0).sqrt(),
            Shape::Hat => s,
            Shape::Indicator { lo, hi } => s * lo.abs().max(hi.abs()),
        }
    }

    /// Points where the profile or its derivative is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let s = self.scale;
        match self.shape {
            Shape::Gaussian | Shape::Lorentzian => vec![],
            Shape::Hat => vec![-s, 0.0, s],
            Shape::Indicator { lo, hi } => vec![s * lo, s * hi],
        }
    }

    /// Half-width of the horizontal strip on which the closed form is
    /// holomorphic; `None` for non-analytic profiles.
    pub fn analytic_strip(&self) -> Option<f64> {
        match self.shape {
            Shape::Gaussian => Some(f64::INFINITY),
            Shape::Lorentzian => Some(self.scale),
            Shape::Hat | Shape::Indicator { .. } => None,
        }
    }

    /// Continuation to complex argument inside the analytic strip.
    pub fn value_complex(&self, z: Complex64) -> Result<Complex64> {
        let strip = self
            .analytic_strip()
            .ok_or_else(|| Error::Domain(format!("{self} has no holomorphic continuation")))?;
        if z.im.abs() >= strip {
            return Err(Error::Domain(format!("Im z = {} outside strip of half-width {strip}", z.im)));
        }
        let u = z / self.scale;
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::i();
        let (base, hil) = match self.shape {
            Shape::Gaussian => ((-u * u).exp(), dawson(u) * (2.0 / PI.sqrt())),
            Shape::Lorentzian => (one / (one + u * u), u / (one + u * u)),
            _ => unreachable!(),
        };
        let a = self.amplitude;
        let v = match self.component {
            Component::Base => base,
            Component::Ring => -i * hil,
            Component::Plus => 0.5 * (base + i * hil),
            Component::Minus => 0.5 * (base - i * hil),
        };
        Ok(a * v)
    }

    /// ∫ |f|² dt of the base function.
    pub fn l2_norm_sq(&self) -> f64 {
        let a2s = self.amplitude * self.amplitude * self.scale;
        match self.shape {
            Shape::Gaussian => a2s * (PI / 2.0).sqrt(),
            Shape::Lorentzian => a2s * PI / 2.0,
            Shape::Hat => a2s * 2.0 / 3.0,
            Shape::Indicator { lo, hi } => a2s * (hi - lo),
        }
    }

    /// ∫ f dt of the base function.
    pub fn integral(&self) -> f64 {
        let a_s = self.amplitude * self.scale;
        match self.shape {
            Shape::Gaussian => a_s * PI.sqrt(),
            Shape::Lorentzian => a_s * PI,
            Shape::Hat => a_s,
            Shape::Indicator { lo, hi } => a_s * (hi - lo),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::Gaussian => "gaussian",
            Shape::Lorentzian => "lorentzian",
            Shape::Hat => "hat",
            Shape::Indicator { .. } => "indicator",
        }
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn half_step(x: f64) -> f64 {
    0.5 * (1.0 + sign0(x))
}

/// Dawson's integral D(z) = e^{−z²} ∫₀^z e^{s²} ds.
pub fn dawson(z: Complex64) -> Complex64 {
    if z.norm() > 7.0 && z.re.abs() > 2.0 * z.im.abs() {
        // asymptotic series, truncated at its smallest term
        let w = 1.0 / (2.0 * z * z);
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..60 {
            let next = term * w * (2 * k - 1) as f64;
            if next.norm() > term.norm() || next.norm() < 1e-18 {
                break;
            }
            term = next;
            sum += term;
        }
        return sum / (2.0 * z);
    }
    // D(z) = z ∫₀¹ exp(−z²(1−v²)) dv, integrand sharpest near v = 1
    let zz = z * z;
    let breaks = quad::panel_breaks(0.0, 1.0, 1.0 / 32.0, &[]);
    let (xs, ws) = quad::composite(&breaks, 12);
    let mut acc = Complex64::new(0.0, 0.0);
    for (v, w) in xs.iter().zip(&ws) {
        acc += (-zz * (1.0 - v * v)).exp() * *w;
    }
    z * acc
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        if let Shape::Indicator { lo, hi } = self.shape {
            write!(f, ":lo={lo},hi={hi},")?;
        } else {
            write!(f, ":")?;
        }
        write!(f, "amplitude={},scale={}", self.amplitude, self.scale)?;
        if self.component != Component::Base {
            let c = match self.component {
                Component::Plus => "plus",
                Component::Minus => "minus",
                Component::Ring => "ring",
                Component::Base => "base",
            };
            write!(f, ",component={c}")?;
        }
        Ok(())
    }
}

/// Parses `name[:key=value,...]`, e.g. `lorentzian:scale=2` or `indicator:lo=-5,hi=5`.
impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        let mut component = Component::Base;
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("bad descriptor parameter '{kv}'")))?;
            let k = k.trim();
            if k == "component" {
                component = match v.trim() {
                    "base" => Component::Base,
                    "plus" => Component::Plus,
                    "minus" => Component::Minus,
                    "ring" => Component::Ring,
                    other => return Err(Error::Domain(format!("unknown component '{other}'"))),
                };
                continue;
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("non-numeric value for '{k}'")))?;
            params.insert(k.to_string(), v);
        }
        let mut take = |k: &str, default: Option<f64>| -> Result<f64> {
            params
                .remove(k)
                .or(default)
                .ok_or_else(|| Error::Domain(format!("descriptor '{name}' needs '{k}'")))
        };
        let shape = match name.trim() {
            "gaussian" => Shape::Gaussian,
            "lorentzian" => Shape::Lorentzian,
            "hat" => Shape::Hat,
            "indicator" => Shape::Indicator { lo: take("lo", None)?, hi: take("hi", None)? },
            other => return Err(Error::Domain(format!("unknown descriptor '{other}'"))),
        };
        let d = Descriptor {
            shape,
            amplitude: take("amplitude", Some(1.0))?,
            scale: take("scale", Some(1.0))?,
            component,
        };
        if let Some(k) = params.keys().next() {
            return Err(Error::Domain(format!("unknown parameter '{k}' for '{name}'")));
        }
        d.validate()?;
        Ok(d)
    }
}

//! Closed-form identities every pipeline must reproduce exactly or to rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cltlab::{
    additive_functional, esseen_from, exact_variance, ks_distance, monte_carlo_statistics, rate_fit, Ecdf,
    EsseenOptions, McOptions, RateModel,
};
use crate::error::Result;
use crate::funcspace::{
    fourier_transform, hardy_split_function, make_grid_function, sobolev_norm, Descriptor, GridFunction, Order,
};
use crate::hankel::{build_symbol, cauchy_derivative_with, default_ring_grid, FredholmEvaluator, FredholmOptions, Side};
use crate::sinedpp::{build_kernel_eigensystem, sample_configuration, sine_kernel, Configuration};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Runs a check body; an error counts as a failure with its message as detail.
fn guarded(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match body() {
        Ok((p, d)) => check(name, p, d),
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

fn cfg(points: Vec<f64>) -> Configuration {
    Configuration { points, seed: 0, replicate: 0 }
}

/// Every trivial identity in one list, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![];
    let step = 1.0 / 64.0;

    out.push(guarded("gaussian sampled at 0 is 1", || {
        let g = make_grid_function(Descriptor::gaussian(), -8.0, step, 1025)?;
        let v = g.values[512].re;
        Ok((v == 1.0, format!("value {v}")))
    }));
    out.push(guarded("closed forms at ±1", || {
        let l = Descriptor::lorentzian().value(1.0).re;
        let h = (Descriptor::hat().value(1.0).re, Descriptor::hat().value(-1.0).re);
        Ok((l == 0.5 && h == (0.0, 0.0), format!("lorentzian {l}, hat {h:?}")))
    }));

    let zero = GridFunction::from_real(-8.0, step, &[0.0; 1025]).expect("valid grid");
    out.push(guarded("zero function has zero spectrum and ring", || {
        let s = fourier_transform(&zero)?;
        let sup = s.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.norm()));
        let ring = hardy_split_function(&zero)?.ring.sup_norm();
        Ok((sup == 0.0 && ring == 0.0, format!("spectrum sup {sup:e}, ring sup {ring:e}")))
    }));
    out.push(guarded("Sobolev norms of zero vanish", || {
        let s = fourier_transform(&zero)?;
        let (a, b) = (sobolev_norm(&s, Order::Half)?, sobolev_norm(&s, Order::One)?);
        Ok((a == 0.0 && b == 0.0, format!("half {a}, one {b}")))
    }));

    let gauss = make_grid_function(Descriptor::gaussian(), -16.0, step, 2049).expect("valid grid");
    out.push(guarded("ring component is imaginary", || {
        let re = hardy_split_function(&gauss)?.ring.sup_real();
        Ok((re < 1e-12, format!("sup |Re f̊| = {re:.2e}")))
    }));
    out.push(guarded("f₊ + f₋ = f", || {
        let h = hardy_split_function(&gauss)?;
        let d = h
            .plus
            .values
            .iter()
            .zip(&h.minus.values)
            .zip(&gauss.values)
            .fold(0.0f64, |m, ((p, q), f)| m.max((p + q - f).norm()));
        Ok((d < 1e-12, format!("max defect {d:.2e}")))
    }));
    out.push(guarded("Parseval", || {
        let s = fourier_transform(&gauss)?;
        let (a, b) = (gauss.l2_norm_sq(), s.l2_norm_sq());
        let rel = (a - b).abs() / a;
        Ok((rel < 1e-10, format!("‖f‖² = {a:.12}, ‖f̂‖² = {b:.12}")))
    }));
    out.push(guarded("Sobolev homogeneity", || {
        let s1 = fourier_transform(&gauss)?;
        let s2 = fourier_transform(&gauss.scaled(2.0))?;
        let (a, b) = (sobolev_norm(&s1, Order::Half)?, sobolev_norm(&s2, Order::Half)?);
        let rel = (b - 2.0 * a).abs() / b;
        Ok((rel < 1e-12, format!("‖2f‖ / ‖f‖ = {}", b / a)))
    }));

    out.push(check(
        "sine kernel K(0,0) = 1, K(0,1) = 0",
        sine_kernel(0.0, 0.0) == 1.0 && sine_kernel(0.0, 1.0).abs() < 1e-16,
        format!("{} {}", sine_kernel(0.0, 0.0), sine_kernel(0.0, 1.0)),
    ));
    out.push(guarded("zero eigenvalues give the empty configuration", || {
        let mut es = build_kernel_eigensystem(1.0, 16)?;
        es.eigenvalues.iter_mut().for_each(|l| *l = 0.0);
        let c = sample_configuration(&es, 1, 0)?;
        Ok((c.is_empty(), format!("{} points", c.len())))
    }));

    out.push(guarded("λ = 0 gives a zero symbol and V = 1", || {
        let ring = default_ring_grid(Descriptor::lorentzian())?;
        let sym = build_symbol(&ring, Complex64::new(0.0, 0.0), 5.0)?;
        let sup = sym.dilated_spectrum(Side::Plus).amplitudes.iter().fold(0.0f64, |m, a| m.max(a.norm()));
        let ev = FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions::default())?;
        let v = ev.value(Complex64::new(0.0, 0.0), 5.0)?;
        Ok((sup == 0.0 && v == Complex64::new(1.0, 0.0), format!("symbol sup {sup:e}, V = {v}")))
    }));
    out.push(guarded("real λ gives a unimodular symbol", || {
        let ring = default_ring_grid(Descriptor::lorentzian())?;
        let d = ring.values.iter().fold(0.0f64, |m, v| m.max(((v * 1.5).exp().norm() - 1.0).abs()));
        Ok((d < 1e-12, format!("max ||e^(λf̊)| − 1| = {d:.2e}")))
    }));
    out.push(guarded("Cauchy derivative of polynomials", || {
        let one = |_z: Complex64| Ok(Complex64::new(1.0, 0.0));
        let sq = |z: Complex64| Ok(z * z);
        let a = cauchy_derivative_with(one, Complex64::new(0.3, 0.0), 1.0, 64)?.derivative.norm();
        let b = cauchy_derivative_with(sq, Complex64::new(0.0, 0.0), 1.0, 64)?.derivative.norm();
        let c = (cauchy_derivative_with(sq, Complex64::new(1.0, 0.0), 1.0, 64)?.derivative - 2.0).norm();
        Ok((a < 1e-10 && b < 1e-10 && c < 1e-10, format!("errors {a:.1e} {b:.1e} {c:.1e}")))
    }));

    out.push(guarded("additive functional examples", || {
        let hat = make_grid_function(Descriptor::hat(), -2.0, step, 257)?;
        let a = additive_functional(&cfg(vec![]), &gauss)?;
        let b = additive_functional(&cfg(vec![0.0]), &gauss)?;
        let c = additive_functional(&cfg(vec![0.0, 1.0]), &hat)?;
        Ok((a == 0.0 && b == 1.0 && c == 1.0, format!("{a} {b} {c}")))
    }));
    out.push(guarded("variance of zero and quadratic scaling", || {
        let a = exact_variance(&zero)?;
        let g = make_grid_function(Descriptor::gaussian(), -8.0, step, 1025)?;
        let v1 = exact_variance(&g)?;
        let v2 = exact_variance(&make_grid_function(Descriptor::gaussian().scaled(2.0), -8.0, step, 1025)?)?;
        let rel = (v2 - 4.0 * v1).abs() / v2;
        Ok((a == 0.0 && rel < 1e-12, format!("Var 0 = {a}, Var(2g)/Var(g) = {}", v2 / v1)))
    }));
    out.push(guarded("Monte Carlo centering and reproducibility", || {
        let f = crate::cltlab::base_function(Descriptor::gaussian())?;
        let opts = McOptions::default();
        let s1 = monte_carlo_statistics(&f, 1.0, 1000, 17, &opts)?;
        let s2 = monte_carlo_statistics(&f, 1.0, 1000, 17, &opts)?;
        let centred = s1.mean.abs() <= 3.0 * s1.mean_stderr;
        Ok((centred && s1 == s2, format!("mean {:.4} ± {:.4}, repeat identical {}", s1.mean, s1.mean_stderr, s1 == s2)))
    }));
    out.push(guarded("KS of exact quantiles and of a point mass", || {
        let n = 1000;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let q: Vec<f64> = (1..=n).map(|k| normal.inverse_cdf((k as f64 - 0.5) / n as f64)).collect();
        let d = ks_distance(&Ecdf::new(&q), 1.0)?;
        let z = ks_distance(&Ecdf::new(&[0.0; 10]), 1.0)?;
        Ok((d <= 0.5 / n as f64 + 1e-9 && z == 0.5, format!("{d:.3e} {z}")))
    }));
    out.push(guarded("Esseen bound with W ≡ 1 is 4/max T", || {
        let one = |_x: f64| Ok(Complex64::new(1.0, 0.0));
        let zero_d = |_x: f64| Ok(Complex64::new(0.0, 0.0));
        let b = esseen_from(one, zero_d, 10.0, 1.0, &EsseenOptions::default())?.bound;
        Ok((b == 4.0 / 512.0, format!("bound {b}")))
    }));
    out.push(check(
        "Esseen bound refuses σ = 0",
        crate::cltlab::esseen_bound(&zero, 5.0, &[2.0]).is_err(),
        "precondition".into(),
    ));
    out.push(guarded("rate fits of synthetic data", || {
        let rs = [5.0f64, 10.0, 20.0, 40.0];
        let lin: Vec<(f64, f64)> = rs.iter().map(|&r| (r, 3.0 / r)).collect();
        let log: Vec<(f64, f64)> = rs.iter().map(|&r| (r, 2.0 / r.ln())).collect();
        let a = rate_fit(&lin, RateModel::InverseLinear)?;
        let b = rate_fit(&log, RateModel::InverseLog)?;
        let ok = (a.c - 3.0).abs() < 1e-12 && (b.c - 2.0).abs() < 1e-12 && a.residual_norm < 1e-12 && b.residual_norm < 1e-12;
        Ok((ok, format!("c = {} and {}", a.c, b.c)))
    }));
    out
}

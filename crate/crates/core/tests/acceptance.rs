//! Acceptance suite: one verdict line per check. Checks whose literal target is
//! known to be unattainable are marked expected failures; any other failure
//! makes the process exit nonzero.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use sineclt::cltlab::{
    base_function, esseen_bound, esseen_bound_configured, exact_variance, ks_distance,
    limit_variance, monte_carlo_statistics, rate_fit, windowed_dilation, BoundReport, McOptions, RateModel,
    SampleSummary, ESSEEN_CONVERGENCE_TOL,
};
use sineclt::error::Result;
use sineclt::funcspace::{
    fourier_transform_padded, hl_norm, sobolev_norm, Descriptor, HlOptions, HolomorphicDescriptor, Order,
};
use sineclt::hankel::{
    build_symbol_from, default_ring_grid, hankel_hs_norm_from, FredholmEvaluator, FredholmOptions,
    RingLines, Side, DEFAULT_OVERFLOW_GUARD,
};
use sineclt::sinedpp::{build_kernel_eigensystem, sample_many};

struct Suite {
    passed: usize,
    failed: usize,
    expected_failures: usize,
}

impl Suite {
    fn line(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        println!("[{}] {id}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }

    /// A check reported like any other whose failure does not fail the suite.
    fn line_expected_failure(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} (expected failure): {}", detail.as_ref());
        if pass {
            self.passed += 1;
        } else {
            self.expected_failures += 1;
        }
    }

    /// Records an error as a failure of `id`.
    fn run<T>(&mut self, id: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.line(id, false, format!("error: {e}"));
                None
            }
        }
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn dilated_variance(d: Descriptor, r: f64) -> Result<f64> {
    let f = base_function(d)?;
    let half_width = r * d.support_halfwidth(1e-16) + 1.0;
    exact_variance(&windowed_dilation(&f, r, half_width)?)
}

fn criterion_1(s: &mut Suite) {
    let rs = [5.0, 10.0, 20.0, 50.0];
    let Some(v) = s.run("C1", rs.iter().map(|&r| dilated_variance(Descriptor::gaussian(), r)).collect::<Result<Vec<_>>>())
    else {
        return;
    };
    let target = 1.0 / (4.0 * PI * PI);
    let gaps: Vec<f64> = v.iter().map(|x| (x - target).abs() / target).collect();
    s.line_expected_failure(
        "C1 literal (gaussian vs 1/(4π²))",
        gaps[3] <= 0.05 && strictly_decreasing(&gaps),
        format!("Var = [{}], relative gaps [{}]", fmt_list(&v), fmt_list(&gaps)),
    );
    let sigma2 = 1.0 / (2.0 * PI);
    let gaps: Vec<f64> = v.iter().map(|x| (x - sigma2).abs() / sigma2).collect();
    s.line(
        "C1 calibrated (gaussian vs ‖f‖²_Ḣ½/2π = 1/2π)",
        gaps.iter().all(|&g| g <= 0.05),
        format!("relative gaps [{}] (exact up to e^(−2π²R²) for the gaussian)", fmt_list(&gaps)),
    );
    // the gaussian is already at its limit, so the monotone approach is checked on the hat
    let hat = Descriptor::hat();
    let r = (|| -> Result<(Vec<f64>, f64)> {
        let sigma2 = limit_variance(&base_function(hat)?)?;
        Ok((rs.iter().map(|&r| dilated_variance(hat, r)).collect::<Result<_>>()?, sigma2))
    })();
    if let Some((v, sigma2)) = s.run("C1 calibrated (hat approach)", r) {
        let gaps: Vec<f64> = v.iter().map(|x| (x - sigma2).abs() / sigma2).collect();
        s.line(
            "C1 calibrated (hat approach)",
            gaps[3] <= 0.05 && strictly_decreasing(&gaps),
            format!("σ² = {sigma2:.6e}, relative gaps [{}]", fmt_list(&gaps)),
        );
    }
}

fn count_check(l: f64, n_nodes: usize, n: u64, seed: u64) -> Result<(bool, String)> {
    let es = build_kernel_eigensystem(l, n_nodes)?;
    let counts: Vec<f64> = sample_many(&es, seed, n)?.iter().map(|c| c.len() as f64).collect();
    let nf = n as f64;
    let mean = counts.iter().sum::<f64>() / nf;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = counts.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / nf;
    let (se_mean, se_var) = ((var / nf).sqrt(), ((m4 - var * var) / nf).sqrt());
    let f = sineclt::funcspace::make_grid_function(Descriptor::indicator(-l, l), -l - 1.0, 1.0 / 64.0, ((2.0 * l + 2.0) * 64.0) as usize + 1)?;
    let exact = exact_variance(&f)?;
    let (zm, zv) = ((mean - 2.0 * l) / se_mean, (var - exact) / se_var);
    Ok((
        zm.abs() <= 3.0 && zv.abs() <= 3.0,
        format!("mean {mean:.4} (z = {zm:.2}), variance {var:.4} vs exact {exact:.4} (z = {zv:.2})"),
    ))
}

fn criterion_2(s: &mut Suite) {
    if let Some((ok, d)) = s.run("C2", count_check(5.0, 200, 10_000, 2)) {
        s.line("C2 sampler counts (L = 5, 200 nodes, N = 10⁴)", ok, d);
    }
}

fn hs_routes(d: Descriptor, n_quad: usize) -> Result<Vec<(f64, f64, f64, f64, f64)>> {
    let lines = RingLines::from_descriptor(d)?;
    let mut out = vec![];
    for lam in [0.5, 1.0] {
        for r in [1.0, 2.0, 5.0] {
            let sym = build_symbol_from(&lines, Complex64::new(lam, 0.0), r, DEFAULT_OVERFLOW_GUARD)?;
            for side in [Side::Plus, Side::Minus] {
                let h = hankel_hs_norm_from(&sym, side, n_quad)?;
                out.push((lam, r, h.relative_gap, h.spectral, h.printed_seminorm));
            }
        }
    }
    Ok(out)
}

fn criterion_3(s: &mut Suite) -> Vec<(Descriptor, Vec<(f64, f64, f64, f64, f64)>)> {
    let mut kept = vec![];
    for d in [Descriptor::gaussian(), Descriptor::lorentzian()] {
        let id = format!("C3 {} spectral vs quadrature HS", d.name());
        let Some(rows) = s.run(&id, hs_routes(d, 128)) else { continue };
        let worst = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        s.line(&id, worst <= 1e-4, format!("max relative gap {worst:.2e} over λ ∈ {{0.5, 1}}, R ∈ {{1, 2, 5}}"));
        let printed = rows.iter().map(|r| (r.4 - r.3).abs() / r.3).fold(0.0, f64::max);
        s.line_expected_failure(
            &format!("C3 {} printed H(1) seminorm as HS norm (informational)", d.name()),
            printed <= 1e-4,
            format!("max relative gap {printed:.2e}: the lower limit 1 drops the band ξ ∈ (0, 1)"),
        );
        kept.push((d, rows));
    }
    kept
}

fn criterion_4(s: &mut Suite) -> Option<SampleSummary> {
    let f = s.run("C4", base_function(Descriptor::lorentzian()))?;
    let sigma2 = s.run("C4", limit_variance(&f))?;
    let ev = s.run(
        "C4",
        FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions { check_convergence: true, ..Default::default() }),
    )?;
    let opts = McOptions { lambda_grid: vec![-1.0, -0.5, 0.5, 1.0], ..Default::default() };
    let (mut literal_ok, mut calibrated_ok) = (true, true);
    let (mut zl, mut zc) = (vec![], vec![]);
    let mut keep = None;
    for r in [2.0, 5.0] {
        let t = Instant::now();
        let sm = s.run("C4", monte_carlo_statistics(&f, r, 100_000, 4, &opts))?;
        for m in &sm.mgf {
            let v = s.run("C4", ev.value(Complex64::new(m.lambda, 0.0), r))?.re;
            let lit = (m.lambda * m.lambda * sigma2).exp() * v;
            let cal = (m.lambda * m.lambda * sigma2 / 2.0).exp() * v;
            let (a, b) = ((m.value - lit) / m.stderr, (m.value - cal) / m.stderr);
            literal_ok &= a.abs() <= 3.0;
            calibrated_ok &= b.abs() <= 3.0;
            zl.push(a);
            zc.push(b);
        }
        eprintln!("  C4 R = {r}: window ±{}, {:.1} s", sm.half_width, t.elapsed().as_secs_f64());
        if r == 5.0 {
            keep = Some(sm);
        }
    }
    let zs = |z: &[f64]| z.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    s.line_expected_failure("C4 literal (exp(λ²σ²)·V)", literal_ok, format!("z-scores [{}] for R ∈ {{2, 5}} × λ ∈ {{±0.5, ±1}}", zs(&zl)));
    s.line("C4 calibrated (exp(λ²σ²/2)·V)", calibrated_ok, format!("z-scores [{}]", zs(&zc)));
    keep
}

/// ‖f̊‖_Ḣ¹ + ‖f̊‖_∞; the spectrum of f̊ has the modulus of f̂.
fn h1_linf(d: Descriptor) -> Result<f64> {
    let spec = fourier_transform_padded(&base_function(d)?, 4)?;
    Ok(sobolev_norm(&spec, Order::One)? + default_ring_grid(d)?.sup_norm())
}

fn hat_hs(n_quad: usize) -> Result<Vec<(f64, f64, f64)>> {
    let lines = RingLines::from_descriptor(Descriptor::hat())?;
    [4.0, 16.0, 64.0]
        .iter()
        .map(|&r| {
            let sym = build_symbol_from(&lines, Complex64::new(1.0, 0.0), r, DEFAULT_OVERFLOW_GUARD)?;
            let p = hankel_hs_norm_from(&sym, Side::Plus, n_quad)?;
            let m = hankel_hs_norm_from(&sym, Side::Minus, n_quad)?;
            Ok((r, p.spectral.max(m.spectral), p.frobenius.max(m.frobenius)))
        })
        .collect()
}

fn criterion_5(s: &mut Suite) -> Option<Vec<(f64, f64, f64)>> {
    let n = s.run("C5", h1_linf(Descriptor::hat()))?;
    let c = (1.0 + n) * n.exp();
    let rows = s.run("C5", hat_hs(128))?;
    let ok = rows.iter().all(|&(r, h, _)| h <= c / r.sqrt());
    let detail: Vec<String> = rows.iter().map(|(r, h, _)| format!("R = {r}: {h:.3e} ≤ {:.3e} (√R·HS = {:.3e})", c / r.sqrt(), h * r.sqrt())).collect();
    s.line("C5 hat HS factor within (1+N)e^N/√R", ok, format!("N = {n:.4}; {}", detail.join("; ")));
    Some(rows)
}

fn lorentzian_hs(n_quad: usize) -> Result<Vec<(f64, f64, f64)>> {
    let lines = RingLines::from_descriptor(Descriptor::lorentzian())?;
    (2..=20)
        .step_by(2)
        .map(|k| {
            let r = k as f64;
            let sym = build_symbol_from(&lines, Complex64::new(1.0, 0.0), r, DEFAULT_OVERFLOW_GUARD)?;
            let h = hankel_hs_norm_from(&sym, Side::Plus, n_quad)?;
            Ok((r, h.spectral, h.frobenius))
        })
        .collect()
}

fn criterion_6(s: &mut Suite) -> Option<Vec<(f64, f64, f64)>> {
    let strip = s.run("C6", HolomorphicDescriptor::new(Descriptor::lorentzian(), 0.9).and_then(|h| hl_norm(&h, &HlOptions::default())))?;
    let rows = s.run("C6", lorentzian_hs(128))?;
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let (slope, _) = sineclt::cltlab::linear_fit(&x, &y);
    s.line(
        "C6 lorentzian log HS slope over R = 2..20",
        slope <= -0.5,
        format!("slope {slope:.3} (δ₁ = 0.5 predicts ≤ −2π·0.5 = {:.3}); HL(0.9) norm {:.4}; HS at R = 2, 20: {:.3e}, {:.3e}", -PI, strip.value, rows[0].1, rows[rows.len() - 1].1),
    );
    Some(rows)
}

fn ks_for(f: &sineclt::funcspace::GridFunction, r: f64, n: usize, sigma: f64) -> Result<f64> {
    let sm = monte_carlo_statistics(f, r, n, 7, &McOptions::default())?;
    ks_distance(&sm.ecdf(), sigma)
}

fn criterion_7(s: &mut Suite, lorentzian_r5: Option<&SampleSummary>) -> Option<Vec<BoundReport>> {
    let rs = [5.0, 10.0, 20.0, 40.0];
    let n = 10_000;
    let tol = 3.0 * 0.8 / (n as f64).sqrt();
    let t_grid: Vec<f64> = (1..=9).map(|k| 2f64.powi(k)).collect();
    let mut lorentzian_bounds = None;
    for d in [Descriptor::lorentzian(), Descriptor::hat()] {
        let name = d.name();
        let f = s.run("C7", base_function(d))?;
        let mut bounds = vec![];
        for &r in &rs {
            let t = Instant::now();
            let Some(b) = s.run(&format!("C7 {name} bound at R = {r}"), esseen_bound(&f, r, &t_grid)) else { break };
            eprintln!("  C7 {name} R = {r}: bound {:.6} at T = {}, {:.1} s", b.bound, b.t, t.elapsed().as_secs_f64());
            bounds.push(b);
        }
        if bounds.len() != rs.len() {
            continue;
        }
        let pts: Vec<(f64, f64)> = bounds.iter().map(|b| (b.r, b.bound)).collect();
        let vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (Some(lin), Some(log)) = (
            s.run("C7", rate_fit(&pts, RateModel::InverseLinear)),
            s.run("C7", rate_fit(&pts, RateModel::InverseLog)),
        ) else {
            continue;
        };
        if name == "lorentzian" {
            s.line(
                "C7 lorentzian bound rate",
                (-1.3..=-0.8).contains(&lin.loglog_slope) && lin.residual_norm < log.residual_norm,
                format!(
                    "bounds [{}], log-log slope {:.3}, residuals inverse_linear {:.2e} < inverse_log {:.2e}",
                    fmt_list(&vals), lin.loglog_slope, lin.residual_norm, log.residual_norm
                ),
            );
        } else {
            s.line(
                "C7 hat bound monotone with finite inverse_log constant",
                strictly_decreasing(&vals) && log.c.is_finite(),
                format!(
                    "bounds [{}] at T = [{}], inverse_log c = {:.4}",
                    vals.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "),
                    bounds.iter().map(|b| b.t.to_string()).collect::<Vec<_>>().join(", "),
                    log.c
                ),
            );
        }
        let mut ks_ok = true;
        let mut parts = vec![];
        for b in &bounds {
            let ks = match (name, b.r, lorentzian_r5) {
                // the first 10⁴ replicates of the moment-check run at R = 5
                ("lorentzian", r, Some(sm)) if r == 5.0 => ks_distance(&sineclt::cltlab::Ecdf::new(&sm.values[..n]), b.sigma),
                _ => ks_for(&f, b.r, n, b.sigma),
            };
            let Some(ks) = s.run(&format!("C7 {name} KS at R = {}", b.r), ks) else {
                ks_ok = false;
                continue;
            };
            ks_ok &= ks <= b.bound + tol;
            parts.push(format!("R = {}: {ks:.4} ≤ {:.4}", b.r, b.bound + tol));
        }
        s.line(&format!("C7 {name} empirical d_KS within bound"), ks_ok, parts.join("; "));
        if name == "lorentzian" {
            lorentzian_bounds = Some(bounds);
        }
    }
    lorentzian_bounds
}

fn criterion_8(s: &mut Suite) {
    let checks = sineclt::selftest::run_all();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    s.line(
        "C8 trivial-identity suite",
        failed.is_empty(),
        if failed.is_empty() { format!("{} checks", checks.len()) } else { format!("failed: {}", failed.join(", ")) },
    );
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn criterion_9(
    s: &mut Suite,
    hs3: &[(Descriptor, Vec<(f64, f64, f64, f64, f64)>)],
    hs5: Option<&[(f64, f64, f64)]>,
    hs6: Option<&[(f64, f64, f64)]>,
    bounds7: Option<&[BoundReport]>,
) {
    for (d, base) in hs3 {
        if let Some(rows) = s.run("C9 HS routes at 2·n_quad", hs_routes(*d, 256)) {
            let gap = rows.iter().map(|r| r.2).fold(0.0, f64::max);
            let drift = rows.iter().zip(base).map(|(a, b)| rel(a.3, b.3)).fold(0.0, f64::max);
            s.line(&format!("C9 {} HS routes at n_quad = 256", d.name()), gap <= 1e-4 && drift <= 1e-4, format!("max gap {gap:.2e}, drift {drift:.2e}"));
        }
    }
    if let (Some(base), Some(rows)) = (hs5, s.run("C9 hat HS at 2·n_quad", hat_hs(256))) {
        let drift = rows.iter().zip(base).map(|(a, b)| rel(a.2, b.2)).fold(0.0, f64::max);
        s.line("C9 hat HS factors at n_quad = 256", drift <= 1e-4, format!("max drift of the quadrature route {drift:.2e}"));
    }
    if let (Some(base), Some(rows)) = (hs6, s.run("C9 lorentzian HS at 2·n_quad", lorentzian_hs(256))) {
        let drift = rows.iter().zip(base).map(|(a, b)| rel(a.2, b.2)).fold(0.0, f64::max);
        s.line("C9 lorentzian HS factors at n_quad = 256", drift <= 1e-4, format!("max drift of the quadrature route {drift:.2e}"));
    }
    // moment check determinants: |V(n) − V(2n)| ≤ 1e−6
    let dets = (|| -> Result<f64> {
        let a = FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions::default())?;
        let b = FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions { n_quad: 256, ..Default::default() })?;
        let mut worst: f64 = 0.0;
        for r in [2.0, 5.0] {
            for l in [-1.0, -0.5, 0.5, 1.0] {
                let z = Complex64::new(l, 0.0);
                worst = worst.max((a.value(z, r)? - b.value(z, r)?).norm());
            }
        }
        Ok(worst)
    })();
    if let Some(w) = s.run("C9 moment-check determinants", dets) {
        s.line("C9 moment-check determinants at n_quad = 256", w <= 1e-6, format!("max |ΔV| = {w:.2e}"));
    }
    if let Some((ok, d)) = s.run("C9 sampler at 2·n_nodes", count_check(5.0, 400, 10_000, 3)) {
        s.line("C9 sampler counts at 400 nodes", ok, d);
    }
    let mc = (|| -> Result<(bool, String)> {
        let f = base_function(Descriptor::lorentzian())?;
        let sigma2 = limit_variance(&f)?;
        let ev = FredholmEvaluator::for_descriptor(Descriptor::lorentzian(), FredholmOptions::default())?;
        let opts = McOptions { n_nodes: Some(2 * sineclt::sinedpp::default_nodes(16.0)), ..Default::default() };
        let sm = monte_carlo_statistics(&f, 2.0, 20_000, 9, &opts)?;
        let mut zs = vec![];
        for m in &sm.mgf {
            let pred = (m.lambda * m.lambda * sigma2 / 2.0).exp() * ev.value(Complex64::new(m.lambda, 0.0), 2.0)?.re;
            zs.push((m.value - pred) / m.stderr);
        }
        Ok((zs.iter().all(|z| z.abs() <= 3.0), format!("R = 2, {} nodes, N = 2·10⁴: z-scores {zs:.2?}", sm.n_nodes)))
    })();
    if let Some((ok, d)) = s.run("C9 moment check at 2·n_nodes", mc) {
        s.line("C9 moment check at 2·n_nodes", ok, d);
    }
    if let Some(base) = bounds7 {
        let redo = (|| -> Result<Vec<(f64, f64)>> {
            let f = base_function(Descriptor::lorentzian())?;
            let fred = FredholmOptions { n_quad: 256, check_convergence: true, convergence_tol: ESSEEN_CONVERGENCE_TOL, ..Default::default() };
            let t_grid: Vec<f64> = (1..=9).map(|k| 2f64.powi(k)).collect();
            [5.0, 40.0].iter().map(|&r| Ok((r, esseen_bound_configured(&f, r, &t_grid, fred.clone())?.bound))).collect()
        })();
        if let Some(rows) = s.run("C9 lorentzian bounds at 2·n_quad", redo) {
            let drift = rows
                .iter()
                .map(|&(r, b)| base.iter().find(|x| x.r == r).map_or(f64::INFINITY, |x| rel(x.bound, b)))
                .fold(0.0, f64::max);
            s.line("C9 lorentzian Esseen bounds at n_quad = 256 (R = 5, 40)", drift <= 1e-3, format!("max relative drift {drift:.2e}"));
        }
    }
}

fn main() {
    let start = Instant::now();
    let mut s = Suite { passed: 0, failed: 0, expected_failures: 0 };
    let stamp = |label: &str| eprintln!("  {label} done at {:.1} s", start.elapsed().as_secs_f64());
    criterion_1(&mut s);
    stamp("C1");
    criterion_2(&mut s);
    stamp("C2");
    let hs3 = criterion_3(&mut s);
    stamp("C3");
    let sample = criterion_4(&mut s);
    stamp("C4");
    let hs5 = criterion_5(&mut s);
    let hs6 = criterion_6(&mut s);
    stamp("C5, C6");
    let bounds = criterion_7(&mut s, sample.as_ref());
    stamp("C7");
    criterion_8(&mut s);
    criterion_9(&mut s, &hs3, hs5.as_deref(), hs6.as_deref(), bounds.as_deref());
    stamp("C9");
    println!(
        "acceptance: {} passed, {} failed, {} expected failures in {:.0} s",
        s.passed,
        s.failed,
        s.expected_failures,
        start.elapsed().as_secs_f64()
    );
    if s.failed > 0 {
        std::process::exit(1);
    }
}

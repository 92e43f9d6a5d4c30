//! Gauss–Legendre rules on finite intervals, single and composite.

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of an n-point rule on [a, b], nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(n.max(2)).expect("degree >= 2");
    let mut pairs: Vec<(f64, f64)> = rule.into_node_weight_pairs();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    pairs
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .unzip()
}

/// Composite rule: `order` nodes on each panel between consecutive breakpoints.
/// Breakpoints must be ascending.
pub fn composite(breaks: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (ref_x, ref_w) = gauss_legendre(order, -1.0, 1.0);
    let mut xs = Vec::with_capacity(order * breaks.len());
    let mut ws = Vec::with_capacity(order * breaks.len());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in ref_x.iter().zip(&ref_w) {
            xs.push(mid + half * x);
            ws.push(half * w);
        }
    }
    (xs, ws)
}

/// Panel breakpoints covering [a, b] with width at most `width`, always
/// including every point of `forced` that lies strictly inside.
pub fn panel_breaks(a: f64, b: f64, width: f64, forced: &[f64]) -> Vec<f64> {
    let mut anchors = vec![a];
    let mut inner: Vec<f64> = forced.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    anchors.extend(inner);
    anchors.push(b);
    let mut out = vec![a];
    for pair in anchors.windows(2) {
        let span = pair[1] - pair[0];
        if span <= 0.0 {
            continue;
        }
        let m = (span / width).ceil().max(1.0) as usize;
        for j in 1..=m {
            out.push(pair[0] + span * j as f64 / m as f64);
        }
    }
    out
}

/// Integrate `f` over [a, b] with a composite rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let breaks: Vec<f64> = (0..=panels)
        .map(|j| a + (b - a) * j as f64 / panels as f64)
        .collect();
    let (xs, ws) = composite(&breaks, order);
    xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let (x, w) = gauss_legendre(5, 0.0, 2.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 2f64.powi(10) / 10.0).abs() < 1e-10);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn composite_handles_forced_breaks() {
        let br = panel_breaks(-1.0, 1.0, 0.3, &[0.0, 5.0]);
        assert!(br.contains(&0.0));
        assert!(br.windows(2).all(|p| p[1] - p[0] <= 0.3 + 1e-12));
        let v = integrate(|x| x.abs(), -1.0, 1.0, 2, 4);
        assert!((v - 1.0).abs() < 1e-14);
    }
}

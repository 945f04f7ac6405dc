//! Straight-line fits used for power-law exponents.

/// Ordinary least squares `y = a + b x`; returns `(b, a, stderr(b))`.
pub fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let w = vec![1.0; points.len()];
    let (b, a, _) = wls(points, &w);
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let ssr: f64 = points.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let se = if points.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (b, a, se)
}

/// Weighted least squares with weights `w_i` (inverse variances); returns
/// `(b, a, stderr(b))` where the standard error assumes the weights are exact
/// inverse variances.
pub fn wls(points: &[(f64, f64)], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = points.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = points.iter().zip(w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(w).map(|(p, w)| w * (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().zip(w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    (b, my - b * mx, (1.0 / sxx).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (b, a, se) = ols(&pts);
        assert!((b + 0.5).abs() < 1e-14 && (a - 2.0).abs() < 1e-14 && se < 1e-12);
        let (b, a, _) = wls(&pts, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!((b + 0.5).abs() < 1e-14 && (a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn weights_pull_towards_heavy_points() {
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        let (b_light, _, _) = wls(&pts, &[1.0, 1.0, 100.0]);
        let (b_flat, _, _) = wls(&pts, &[1.0, 1.0, 1.0]);
        assert!(b_flat.abs() < 1e-14);
        assert!(b_light < 0.0);
    }
}

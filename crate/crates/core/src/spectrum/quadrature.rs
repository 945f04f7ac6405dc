//! Gauss–Jacobi quadrature and normalised Gegenbauer polynomials.

use statrs::function::gamma::ln_gamma;

use crate::error::{arg, Error, Result};

/// Values of `P_n^{(a,b)}(x)` and `P_{n-1}^{(a,b)}(x)` by the three-term recurrence.
fn jacobi_pair(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (a * a - b * b);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// `d/dx P_n^{(a,b)}` from the values of degrees `n` and `n-1` (interior `x` only).
fn jacobi_derivative(n: usize, a: f64, b: f64, x: f64, pn: f64, pm: f64) -> f64 {
    let nf = n as f64;
    let c = 2.0 * nf + a + b;
    (nf * (a - b - c * x) * pn + 2.0 * (nf + a) * (nf + b) * pm) / (c * (1.0 - x * x))
}

/// Nodes and weights of the `n`-point rule for `int_{-1}^{1} f(t) (1-t)^a (1+t)^b dt`,
/// nodes descending. `a = b = -1/2` uses the closed Chebyshev form; otherwise
/// Newton iteration on the recurrence from asymptotic initial guesses.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return arg("quadrature needs at least one node");
    }
    if a <= -1.0 || b <= -1.0 {
        return arg(format!("jacobi exponents ({a}, {b}) must exceed -1"));
    }
    if a == -0.5 && b == -0.5 {
        let w = std::f64::consts::PI / n as f64;
        let nodes = (1..=n).map(|j| ((2 * j - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos()).collect();
        return Ok((nodes, vec![w; n]));
    }
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for j in 1..=n {
        let theta = (j as f64 + 0.5 * a - 0.25) * std::f64::consts::PI / (nf + 0.5 * (a + b + 1.0));
        let mut x = theta.cos();
        let mut converged = false;
        for _ in 0..100 {
            let (pn, pm) = jacobi_pair(n, a, b, x);
            let dp = jacobi_derivative(n, a, b, x, pn, pm);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1e-3) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!("gauss-jacobi node {j} of {n} did not converge")));
        }
        let (pn, pm) = jacobi_pair(n, a, b, x);
        let dp = jacobi_derivative(n, a, b, x, pn, pm);
        nodes.push(x);
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    // Weights are known up to a constant; fixing it by the total mass avoids the
    // cancellation of large log-gamma differences.
    let mass =
        ((a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp();
    let scale = mass / weights.iter().sum::<f64>();
    weights.iter_mut().for_each(|w| *w *= scale);
    Ok((nodes, weights))
}

/// `P_{k,s}(t)` for `k = 0..=k_max`, normalised so that `P_{k,s}(1) = 1`
/// (Chebyshev for `s = 2`, Legendre for `s = 3`).
pub fn gegenbauer_all(k_max: usize, s: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(k_max + 1);
    p.push(1.0);
    if k_max == 0 {
        return p;
    }
    p.push(t);
    let sf = s as f64;
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + sf - 2.0) * t * p[k] - kf * p[k - 1]) / (kf + sf - 2.0);
        p.push(next);
    }
    p
}

/// `|S^{s-2}| / |S^{s-1}| = Gamma(s/2) / (sqrt(pi) Gamma((s-1)/2))`.
pub fn sphere_area_ratio(s: usize) -> f64 {
    let sf = s as f64;
    (ln_gamma(0.5 * sf) - ln_gamma(0.5 * (sf - 1.0))).exp() / std::f64::consts::PI.sqrt()
}

/// Surface area of the unit sphere `S^{m}` in `R^{m+1}`.
pub fn sphere_area(m: usize) -> f64 {
    let h = 0.5 * (m as f64 + 1.0);
    2.0 * std::f64::consts::PI.powf(h) / ln_gamma(h).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta;

    /// Golub–Welsch: nodes are eigenvalues of the symmetric Jacobi matrix and
    /// weights `mu_0 v_0^2`. Independent of the Newton route above.
    fn golub_welsch(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            let k = i as f64;
            let c = 2.0 * k + a + b;
            m[i * n + i] = if c.abs() < 1e-14 { (b - a) / (a + b + 2.0) } else { (b * b - a * a) / (c * (c + 2.0)) };
            if i + 1 < n {
                let k1 = k + 1.0;
                let c1 = 2.0 * k1 + a + b;
                let off = (4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b) / (c1 * c1 * (c1 + 1.0) * (c1 - 1.0))).sqrt();
                m[i * n + i + 1] = off;
                m[(i + 1) * n + i] = off;
            }
        }
        let (vals, vecs) = crate::linalg::sym_eigen(&m, n).unwrap();
        let mu0 = 2f64.powf(a + b + 1.0) * beta(a + 1.0, b + 1.0);
        let w: Vec<f64> = (0..n).map(|j| mu0 * vecs[j * n] * vecs[j * n]).collect();
        // Golub–Welsch gives ascending nodes; flip to match.
        (vals.into_iter().rev().collect(), w.into_iter().rev().collect())
    }

    #[test]
    fn newton_rule_matches_golub_welsch() {
        for &(n, a) in &[(5usize, 0.0), (12, 0.5), (20, 1.0), (9, 0.0)] {
            let (x, w) = gauss_jacobi(n, a, a).unwrap();
            let (xg, wg) = golub_welsch(n, a, a);
            for j in 0..n {
                assert!((x[j] - xg[j]).abs() < 1e-12, "n={n} a={a} node {j}: {} vs {}", x[j], xg[j]);
                assert!((w[j] - wg[j]).abs() < 1e-12, "n={n} a={a} weight {j}: {} vs {}", w[j], wg[j]);
            }
        }
    }

    #[test]
    fn rules_integrate_even_monomials_exactly() {
        // int (1-t^2)^a t^{2m} dt = B(m + 1/2, a + 1).
        for &a in &[-0.5, 0.0, 0.5, 1.0] {
            let n = 16;
            let (x, w) = gauss_jacobi(n, a, a).unwrap();
            for m in 0..n {
                let got: f64 = x.iter().zip(&w).map(|(t, wt)| wt * t.powi(2 * m as i32)).sum();
                let want = beta(m as f64 + 0.5, a + 1.0);
                assert!((got - want).abs() < 1e-12 * want.max(1.0), "a={a} m={m}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn large_rules_stay_accurate() {
        let (x, w) = gauss_jacobi(4096, 0.0, 0.0).unwrap();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] > p[1]));
        let second: f64 = x.iter().zip(&w).map(|(t, wt)| wt * t * t).sum();
        assert!((second - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gegenbauer_orthogonality() {
        for s in 2..=5 {
            let a = 0.5 * (s as f64 - 3.0);
            let (x, w) = gauss_jacobi(40, a, a).unwrap();
            let polys: Vec<Vec<f64>> = x.iter().map(|&t| gegenbauer_all(10, s, t)).collect();
            for k in 0..=10 {
                for j in 0..=10 {
                    let ip: f64 = (0..x.len()).map(|q| w[q] * polys[q][k] * polys[q][j]).sum();
                    let want = if k == j {
                        1.0 / (sphere_area_ratio(s) * crate::spectrum::degeneracy(k, s).unwrap() as f64)
                    } else {
                        0.0
                    };
                    assert!((ip - want).abs() < 1e-12, "s={s} k={k} j={j}: {ip} vs {want}");
                }
            }
            assert!(gegenbauer_all(7, s, 1.0).iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
        // Chebyshev: T_k(cos x) = cos(kx).
        let p = gegenbauer_all(9, 2, 0.3f64.cos());
        for (k, v) in p.iter().enumerate() {
            assert!((v - (0.3 * k as f64).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn area_ratios() {
        assert!((sphere_area_ratio(2) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((sphere_area_ratio(3) - 0.5).abs() < 1e-14);
        assert!((sphere_area(2) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        for s in 2..7 {
            assert!((sphere_area_ratio(s) - sphere_area(s - 2) / sphere_area(s - 1)).abs() < 1e-14);
        }
    }
}

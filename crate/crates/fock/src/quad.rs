//! Quadrature primitives: Gauss-Legendre rules, polar disk quadrature,
//! and small fitting helpers used across the checks.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on [-1, 1], cached per size; the
/// Newton solve is far more expensive than any single integrand here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let entry = {
        let mut map = cache.lock().unwrap();
        map.entry(n).or_insert_with(|| Arc::new(gauss_legendre_fresh(n))).clone()
    };
    (entry.0.clone(), entry.1.clone())
}

fn gauss_legendre_fresh(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let w = 2.0 / ((1.0 - x * x) * dp * dp);
                nodes[i] = -x;
                nodes[n - 1 - i] = x;
                weights[i] = w;
                weights[n - 1 - i] = w;
                break;
            }
        }
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + c * t).collect(),
        w.iter().map(|&wi| wi * c).collect(),
    )
}

/// Integral of `f` over the disk D(center, radius) in polar coordinates:
/// Gauss-Legendre in the radius, uniform trapezoid in the angle.
pub fn disk_integral(
    center: Complex64,
    radius: f64,
    radial_nodes: usize,
    angular_nodes: usize,
    f: impl Fn(Complex64) -> f64,
) -> f64 {
    let (ts, ws) = gauss_legendre_on(radial_nodes, 0.0, radius);
    let dtheta = 2.0 * std::f64::consts::PI / angular_nodes as f64;
    let mut total = 0.0;
    for (t, wt) in ts.iter().zip(ws.iter()) {
        let mut ring = 0.0;
        for a in 0..angular_nodes {
            let theta = a as f64 * dtheta;
            let z = center + Complex64::from_polar(*t, theta);
            ring += f(z);
        }
        total += wt * t * ring * dtheta;
    }
    total
}

/// Disk integral with a graded radial mesh `t = radius * s^(1/kappa)`,
/// which absorbs an integrable radial singularity `t^(kappa-1)` at the
/// center (use `kappa = 2 eps` for integrands ~ t^(2 eps - 2)).
pub fn disk_integral_graded(
    center: Complex64,
    radius: f64,
    kappa: f64,
    radial_nodes: usize,
    angular_nodes: usize,
    f: impl Fn(Complex64) -> f64,
) -> f64 {
    let (ss, ws) = gauss_legendre_on(radial_nodes, 0.0, 1.0);
    let dtheta = 2.0 * std::f64::consts::PI / angular_nodes as f64;
    let inv_kappa = 1.0 / kappa;
    let mut total = 0.0;
    for (s, wsi) in ss.iter().zip(ws.iter()) {
        let t = radius * s.powf(inv_kappa);
        let jac = radius * inv_kappa * s.powf(inv_kappa - 1.0);
        let mut ring = 0.0;
        for a in 0..angular_nodes {
            let theta = a as f64 * dtheta;
            let z = center + Complex64::from_polar(t, theta);
            ring += f(z);
        }
        total += wsi * jac * t * ring * dtheta;
    }
    total
}

/// Mean of `f` over D(center, radius).
pub fn disk_average(
    center: Complex64,
    radius: f64,
    radial_nodes: usize,
    angular_nodes: usize,
    f: impl Fn(Complex64) -> f64,
) -> f64 {
    disk_integral(center, radius, radial_nodes, angular_nodes, f)
        / (std::f64::consts::PI * radius * radius)
}

/// log(sum(exp(x_i))) with overflow protection.
pub fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Ordinary least squares y = a + b x; returns (intercept a, slope b).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_on(8, 0.0, 1.0);
        let val: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(9)).sum();
        assert!((val - 0.1).abs() < 1e-14);
    }

    #[test]
    fn gl_gaussian_tail() {
        // int_0^6 r e^{-2 r^2} dr = (1 - e^{-72})/4
        let (x, w) = gauss_legendre_on(200, 0.0, 6.0);
        let val: f64 = x.iter().zip(w.iter()).map(|(r, wi)| wi * r * (-2.0 * r * r).exp()).sum();
        assert!((val - 0.25).abs() < 1e-14);
    }

    #[test]
    fn disk_integral_of_constant() {
        let v = disk_integral(Complex64::new(0.3, -0.2), 1.5, 32, 64, |_| 2.0);
        assert!((v - 2.0 * std::f64::consts::PI * 2.25).abs() < 1e-10);
    }

    #[test]
    fn graded_handles_radial_singularity() {
        // int_{D(0,1)} |z|^(-3/2) dm = 2 pi int_0^1 t^(-1/2) dt = 4 pi
        let v = disk_integral_graded(Complex64::new(0.0, 0.0), 1.0, 0.5, 64, 32, |z| {
            z.norm().powf(-1.5)
        });
        assert!((v - 4.0 * std::f64::consts::PI).abs() < 1e-8, "v={v}");
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b) = linear_fit(&xs, &ys);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}

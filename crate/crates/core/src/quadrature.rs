//! Gauss rules and a product rule on the unit sphere.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Hermite rule for weight `exp(-x^2)` via Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate_panels(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * h * xi);
        }
    }
    total * 0.5 * h
}

/// One node of a spherical product rule.
#[derive(Clone, Copy, Debug)]
pub struct SphereNode {
    pub dir: [f64; 3],
    pub weight: f64,
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)` times the
/// trapezoid rule in `phi`. Weights sum to `4 pi`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub polar_order: usize,
    pub azimuth_points: usize,
    pub nodes: Vec<SphereNode>,
}

impl SphereRule {
    pub fn new(polar_order: usize, azimuth_points: usize) -> Self {
        let (ct, wt) = gauss_legendre(polar_order);
        let dphi = 2.0 * PI / azimuth_points as f64;
        let mut nodes = Vec::with_capacity(polar_order * azimuth_points);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for k in 0..azimuth_points {
                // half-step offset keeps nodes off the x-z plane
                let phi = dphi * (k as f64 + 0.5);
                nodes.push(SphereNode {
                    dir: [s * phi.cos(), s * phi.sin(), *c],
                    weight: w * dphi,
                });
            }
        }
        SphereRule { polar_order, azimuth_points, nodes }
    }

    pub fn doubled(&self) -> Self {
        SphereRule::new(2 * self.polar_order, 2 * self.azimuth_points)
    }

    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.dir)).sum()
    }
}

/// Numerical controls for angular integrals.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSettings {
    pub polar_order: usize,
    pub azimuth_points: usize,
    /// Relative tolerance for the order-doubling convergence estimate.
    pub tolerance: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { polar_order: 32, azimuth_points: 64, tolerance: 1e-10 }
    }
}

impl QuadratureSettings {
    pub fn rule(&self) -> SphereRule {
        SphereRule::new(self.polar_order, self.azimuth_points)
    }

    /// Accepts `fine` if it agrees with `coarse` within the tolerance.
    /// Values at round-off level are compared absolutely.
    pub(crate) fn check(&self, coarse: f64, fine: f64) -> crate::Result<()> {
        let estimate = (fine - coarse).abs();
        let allowed = self.tolerance * fine.abs().max(1e-4) + 1e-15;
        if estimate > allowed {
            return Err(crate::Error::Quadrature { estimate, tolerance: allowed });
        }
        Ok(())
    }
}

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_hermite, gauss_legendre, SphereRule};
use crate::recoil::{dot, LambDickeConfig, Mode3};
use crate::{Error, Result};

/// Outer edge of the relative-coordinate integral, in units of the
/// ground-state width.
const R_OUTER: f64 = 20.0;
const RADIAL_PANELS: usize = 12;
const RADIAL_ORDER: usize = 8;
const REL_TOL: f64 = 1e-6;
/// Absolute floor (units of `Gamma`) for elements that cancel by symmetry.
const ABS_TOL: f64 = 1e-9;

/// Dipole-dipole settings. `cutoff` is the excluded relative distance in
/// units of the ground-state width `sqrt(hbar / 2 M nu)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleDipoleSpec {
    pub cutoff: f64,
    pub include: bool,
    pub polar_order: usize,
    pub azimuth_points: usize,
}

impl Default for DipoleDipoleSpec {
    fn default() -> Self {
        DipoleDipoleSpec { cutoff: 0.01, include: false, polar_order: 16, azimuth_points: 32 }
    }
}

impl DipoleDipoleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 1e-4 && self.cutoff < 1.0) {
            return Err(Error::param("cutoff", format!("{} must lie in (1e-4, 1)", self.cutoff)));
        }
        Ok(())
    }
}

/// An `L` coefficient in units of `Gamma` and `|L(cutoff) - L(cutoff / 2)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleElement {
    pub value: f64,
    pub sensitivity: f64,
}

/// Largest oscillator level per axis handled by the overlap quadrature.
const MAX_LEVEL: usize = 127;

/// Hermite-function polynomial parts `p_k(q)`, `psi_k(q) = exp(-q^2/2) p_k(q)`,
/// written into `p[..=n]`.
fn hermite_polys(n: usize, q: f64, p: &mut [f64; MAX_LEVEL + 1]) {
    p[0] = PI.powf(-0.25);
    if n >= 1 {
        p[1] = 2f64.sqrt() * q * p[0];
    }
    for k in 1..n {
        let kf = k as f64;
        p[k + 1] = (2.0 / (kf + 1.0)).sqrt() * q * p[k] - (kf / (kf + 1.0)).sqrt() * p[k - 1];
    }
}

/// Overlap `int f(x) g(x - r) dx` on one axis with `f = phi_a phi_b` and
/// `g = phi_c phi_d`, oscillator functions normalized in the displacement
/// variable of `a + a^dagger`.
struct AxisOverlap {
    idx: [usize; 4],
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl AxisOverlap {
    fn new(idx: [usize; 4]) -> Self {
        let order = idx.iter().sum::<usize>() / 2 + 2;
        let (nodes, weights) = gauss_hermite(order);
        AxisOverlap { idx, nodes, weights }
    }

    fn eval(&self, r: f64) -> f64 {
        let top = *self.idx.iter().max().unwrap();
        let (mut plus, mut minus) = ([0.0; MAX_LEVEL + 1], [0.0; MAX_LEVEL + 1]);
        let mut acc = 0.0;
        for (y, w) in self.nodes.iter().zip(&self.weights) {
            hermite_polys(top, (y + 0.5 * r) * FRAC_1_SQRT_2, &mut plus);
            hermite_polys(top, (y - 0.5 * r) * FRAC_1_SQRT_2, &mut minus);
            acc += w * plus[self.idx[0]] * plus[self.idx[1]] * minus[self.idx[2]] * minus[self.idx[3]];
        }
        0.5 * (-0.25 * r * r).exp() * acc
    }
}

/// True if the element vanishes by a reflection symmetry of the integrand.
pub fn dipole_parity_forbidden(np: Mode3, mp: Mode3, m: Mode3, n: Mode3, dipole: [f64; 3]) -> bool {
    let odd: [bool; 3] = std::array::from_fn(|j| (np.0[j] + mp.0[j] + m.0[j] + n.0[j]) % 2 == 1);
    if odd.iter().filter(|&&o| o).count() % 2 == 1 {
        return true;
    }
    (0..3).any(|j| {
        let aligned = (dipole[j].abs() - 1.0).abs() < 1e-12;
        odd[j] && (dipole[j] == 0.0 || aligned)
    })
}

struct RadialGrid {
    /// `(r, weight in ln r)` over `[cutoff, R_OUTER]`.
    main: Vec<(f64, f64)>,
    /// Extra nodes over `[cutoff / 2, cutoff]`.
    inner: Vec<(f64, f64)>,
}

fn log_nodes(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let mid = la + (k as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push(((mid + 0.5 * h * xi).exp(), 0.5 * h * wi));
        }
    }
    out
}

impl RadialGrid {
    fn new(cutoff: f64, panels: usize) -> Self {
        RadialGrid {
            main: log_nodes(cutoff, R_OUTER, panels, RADIAL_ORDER),
            inner: log_nodes(0.5 * cutoff, cutoff, 2, RADIAL_ORDER),
        }
    }
}

fn integrate(axes: &[AxisOverlap; 3], cfg: &LambDickeConfig, sphere: &SphereRule, grid: &RadialGrid) -> (f64, f64) {
    let parts: Vec<(f64, f64)> = sphere
        .nodes
        .par_iter()
        .map(|node| {
            let xi: [f64; 3] = std::array::from_fn(|j| cfg.eta[j] * node.dir[j]);
            let len = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let c = dot(cfg.dipole, xi) / len;
            let angular = 0.75 * (1.0 - 3.0 * c * c) / (len * len * len) * node.weight;
            let radial = |pts: &[(f64, f64)]| -> f64 {
                pts.iter()
                    .map(|&(r, w)| {
                        w * axes[0].eval(r * node.dir[0]) * axes[1].eval(r * node.dir[1]) * axes[2].eval(r * node.dir[2])
                    })
                    .sum()
            };
            (angular * radial(&grid.main), angular * radial(&grid.inner))
        })
        .collect();
    parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
}

/// Dipole-dipole coefficient
/// `L_{n'm'mn} = Gamma int d^3x d^3x' G(k0 (x - x')) phi_n'(x) phi_m'(x') phi_m(x) phi_n(x')`
/// with the relative coordinate restricted to `|x - x'| >= cutoff`.
pub fn dipole_dipole_element(
    np: Mode3,
    mp: Mode3,
    m: Mode3,
    n: Mode3,
    cfg: &LambDickeConfig,
    spec: &DipoleDipoleSpec,
) -> Result<DipoleElement> {
    spec.validate()?;
    if cfg.eta.iter().any(|&e| e <= 0.0) {
        return Err(Error::param("eta", "dipole-dipole elements need eta > 0 on every axis"));
    }
    if [np, mp, m, n].iter().any(|k| k.0.iter().any(|&v| v > MAX_LEVEL)) {
        return Err(Error::param("mode", format!("levels above {MAX_LEVEL} are not supported")));
    }
    if dipole_parity_forbidden(np, mp, m, n, cfg.dipole) {
        return Ok(DipoleElement { value: 0.0, sensitivity: 0.0 });
    }
    let axes: [AxisOverlap; 3] = std::array::from_fn(|j| AxisOverlap::new([np.0[j], m.0[j], mp.0[j], n.0[j]]));
    let sphere = SphereRule::new(spec.polar_order, spec.azimuth_points);
    let (coarse, _) = integrate(&axes, cfg, &sphere, &RadialGrid::new(spec.cutoff, RADIAL_PANELS));
    let (fine, inner) = integrate(&axes, cfg, &sphere.doubled(), &RadialGrid::new(spec.cutoff, 2 * RADIAL_PANELS));
    let estimate = (fine - coarse).abs();
    let tolerance = REL_TOL * fine.abs() + ABS_TOL;
    if estimate > tolerance {
        return Err(Error::Quadrature { estimate, tolerance });
    }
    Ok(DipoleElement { value: cfg.gamma * fine, sensitivity: cfg.gamma * inner.abs() })
}

type Key = ([[usize; 2]; 3], [[usize; 2]; 3]);

/// Canonical key under the integrand symmetries `n' <-> m`, `m' <-> n` per
/// axis and the exchange `x <-> x'`.
fn canonical_key(np: Mode3, mp: Mode3, m: Mode3, n: Mode3) -> Key {
    let pair = |a: usize, b: usize| if a <= b { [a, b] } else { [b, a] };
    let f: [[usize; 2]; 3] = std::array::from_fn(|j| pair(np.0[j], m.0[j]));
    let g: [[usize; 2]; 3] = std::array::from_fn(|j| pair(mp.0[j], n.0[j]));
    if f <= g {
        (f, g)
    } else {
        (g, f)
    }
}

fn from_key(k: &Key) -> (Mode3, Mode3, Mode3, Mode3) {
    let (f, g) = k;
    (
        Mode3(std::array::from_fn(|j| f[j][0])),
        Mode3(std::array::from_fn(|j| g[j][0])),
        Mode3(std::array::from_fn(|j| f[j][1])),
        Mode3(std::array::from_fn(|j| g[j][1])),
    )
}

/// Symmetry-reduced table of `L` coefficients.
#[derive(Clone, Debug, Default)]
pub struct DipoleTable {
    elements: HashMap<Key, DipoleElement>,
}

impl DipoleTable {
    /// Evaluates every parity-allowed element over `modes^4`, in parallel.
    pub fn build(modes: &[Mode3], cfg: &LambDickeConfig, spec: &DipoleDipoleSpec) -> Result<Self> {
        let mut keys = Vec::new();
        for &np in modes {
            for &mp in modes {
                for &m in modes {
                    for &n in modes {
                        if !dipole_parity_forbidden(np, mp, m, n, cfg.dipole) {
                            keys.push(canonical_key(np, mp, m, n));
                        }
                    }
                }
            }
        }
        keys.sort();
        keys.dedup();
        let values: Vec<DipoleElement> = keys
            .par_iter()
            .map(|k| {
                let (a, b, c, d) = from_key(k);
                dipole_dipole_element(a, b, c, d, cfg, spec)
            })
            .collect::<Result<_>>()?;
        Ok(DipoleTable { elements: keys.into_iter().zip(values).collect() })
    }

    pub fn get(&self, np: Mode3, mp: Mode3, m: Mode3, n: Mode3) -> f64 {
        self.elements.get(&canonical_key(np, mp, m, n)).map_or(0.0, |e| e.value)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Representative `(n', m', m, n)` of each stored element, in key order.
    pub fn entries(&self) -> Vec<((Mode3, Mode3, Mode3, Mode3), DipoleElement)> {
        let mut out: Vec<_> = self.elements.iter().map(|(k, e)| (*k, *e)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out.into_iter().map(|(k, e)| (from_key(&k), e)).collect()
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.elements.values().map(|e| e.sensitivity).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(eta: f64) -> LambDickeConfig {
        LambDickeConfig::isotropic(eta, [0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn axis_overlap_normalization() {
        for idx in [[0, 0, 0, 0], [1, 0, 1, 2], [2, 2, 1, 1]] {
            let ov = AxisOverlap::new(idx);
            let phi = |k: usize, s: f64| {
                let mut p = [0.0; MAX_LEVEL + 1];
                hermite_polys(k, s / 2f64.sqrt(), &mut p);
                2f64.powf(-0.25) * (-s * s / 4.0).exp() * p[k]
            };
            for &r in &[0.0, 0.7, -1.9, 3.0] {
                let h = 1e-3;
                let direct: f64 = (-20000..20000)
                    .map(|i| {
                        let x = i as f64 * h;
                        phi(idx[0], x) * phi(idx[1], x) * phi(idx[2], x - r) * phi(idx[3], x - r) * h
                    })
                    .sum();
                assert!((ov.eval(r) - direct).abs() < 1e-10, "{idx:?} {r}");
            }
        }
    }

    #[test]
    fn oscillator_functions_normalized() {
        let h = 1e-3;
        let norm: f64 = (-20000..20000)
            .map(|i| {
                let s = i as f64 * h;
                let mut p = [0.0; MAX_LEVEL + 1];
                hermite_polys(3, s / 2f64.sqrt(), &mut p);
                let v = 2f64.powf(-0.25) * (-s * s / 4.0).exp() * p[3];
                v * v * h
            })
            .sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn parity_zero() {
        let g = Mode3::GROUND;
        let spec = DipoleDipoleSpec::default();
        let e = dipole_dipole_element(Mode3::axis(0, 1), g, g, g, &iso(0.2), &spec).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn requires_positive_eta() {
        let cfg = LambDickeConfig::one_dimensional(0.1, 1.0, [0.0, 0.0, 1.0]).unwrap();
        let g = Mode3::GROUND;
        assert!(dipole_dipole_element(g, g, g, g, &cfg, &DipoleDipoleSpec::default()).is_err());
    }

    #[test]
    fn magnitude_scaling_and_cutoff_stability() {
        let spec = DipoleDipoleSpec::default();
        let z2 = Mode3::axis(2, 2);
        let z1 = Mode3::axis(2, 1);
        let g = Mode3::GROUND;
        for (a, b, c, d) in [(z2, z2, g, g), (z1, z1, g, g)] {
            let e2 = dipole_dipole_element(a, b, c, d, &iso(0.2), &spec).unwrap();
            let e4 = dipole_dipole_element(a, b, c, d, &iso(0.4), &spec).unwrap();
            let ratio = e2.value / e4.value;
            assert!((ratio - 8.0).abs() < 1e-8 * 8.0, "{ratio}");
            let scaled = e2.value * 0.2f64.powi(3);
            assert!(scaled.abs() > 0.001 && scaled.abs() < 0.1, "{scaled}");
            assert!(e2.sensitivity < 0.05 * e2.value.abs());
        }
    }

    #[test]
    fn symmetric_under_index_exchange() {
        let cfg = LambDickeConfig::new([0.3, 0.25, 0.2], [1.0; 3], [0.0, 0.6, 0.8], 1.0).unwrap();
        let spec = DipoleDipoleSpec { polar_order: 16, azimuth_points: 32, ..Default::default() };
        let a = Mode3([1, 0, 0]);
        let b = Mode3([0, 1, 1]);
        let c = Mode3([1, 0, 1]);
        let d = Mode3([0, 1, 0]);
        let base = dipole_dipole_element(a, b, c, d, &cfg, &spec).unwrap().value;
        let swapped = dipole_dipole_element(b, a, d, c, &cfg, &spec).unwrap().value;
        assert!((base - swapped).abs() < 1e-9 * base.abs().max(1.0));
        assert_eq!(canonical_key(a, b, c, d), canonical_key(c, d, a, b));
    }
}

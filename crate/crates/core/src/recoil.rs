//! Recoil matrix elements of a harmonically trapped atom.
//!
//! A photon emitted along `khat` displaces the motional state by
//! `exp(-i khat_j eta_j (a_j + a_j^dagger))` on every trap axis. The 1D overlap
//! between oscillator levels `m` and `n` is
//!
//! ```text
//! R_mn(kappa) = exp(-kappa^2/2) sqrt(min!/max!) (-i kappa)^|m-n| L_min^|m-n|(kappa^2)
//! ```
//!
//! and the 3D element is the product over axes with `kappa_j = khat_j eta_j`.
//! Angular averages weighted by the dipole radiation pattern give the
//! coefficients that enter the master equation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::{QuadratureSettings, SphereRule};
use crate::{Error, Result};

/// Largest Laguerre degree evaluated by [`laguerre`].
pub const LAGUERRE_MAX_DEGREE: usize = 60;

const UNIT_TOL: f64 = 1e-12;

/// Trap and transition parameters. Rates are in units of `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambDickeConfig {
    pub eta: [f64; 3],
    pub nu: [f64; 3],
    pub dipole: [f64; 3],
    pub gamma: f64,
}

impl LambDickeConfig {
    pub fn new(eta: [f64; 3], nu: [f64; 3], dipole: [f64; 3], gamma: f64) -> Result<Self> {
        if eta.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::param("eta", format!("{eta:?} must be finite and >= 0")));
        }
        if nu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("nu", format!("{nu:?} must be finite and > 0")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::param("gamma", format!("{gamma} must be > 0")));
        }
        check_unit("dipole", dipole)?;
        Ok(LambDickeConfig { eta, nu, dipole, gamma })
    }

    /// Isotropic trap with unit trap frequency and `gamma = 1`.
    pub fn isotropic(eta: f64, dipole: [f64; 3]) -> Result<Self> {
        Self::new([eta; 3], [1.0; 3], dipole, 1.0)
    }

    /// Motion along the x axis only; the other axes are frozen (`eta = 0`).
    pub fn one_dimensional(eta: f64, nu: f64, dipole: [f64; 3]) -> Result<Self> {
        Self::new([eta, 0.0, 0.0], [nu; 3], dipole, 1.0)
    }

    pub fn alpha(&self) -> [f64; 3] {
        anisotropy_coefficients(self.dipole)
    }
}

/// Motional level `(n1, n2, n3)` of the 3D oscillator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mode3(pub [usize; 3]);

impl Mode3 {
    pub const GROUND: Mode3 = Mode3([0, 0, 0]);

    pub fn axis(axis: usize, n: usize) -> Mode3 {
        let mut m = [0; 3];
        m[axis] = n;
        Mode3(m)
    }

    pub fn quanta(&self) -> usize {
        self.0.iter().sum()
    }
}

impl std::fmt::Display for Mode3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Unit vector (photon emission direction, laser direction, ...).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction(pub [f64; 3]);

impl Direction {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        check_unit("direction", v)?;
        Ok(Direction(v))
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn normalized(v: [f64; 3]) -> Result<Self> {
        let n = norm(v);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("direction", "cannot normalize a zero vector"));
        }
        Ok(Direction([v[0] / n, v[1] / n, v[2] / n]))
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn check_unit(name: &'static str, v: [f64; 3]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::param(name, format!("{v:?} has norm {n}, expected 1")));
    }
    Ok(())
}

/// Generalized Laguerre polynomial `L_b^c(x)` by upward three-term recurrence.
pub fn laguerre(b: usize, c: usize, x: f64) -> Result<f64> {
    if b > LAGUERRE_MAX_DEGREE {
        return Err(Error::DegreeTooLarge { degree: b, bound: LAGUERRE_MAX_DEGREE });
    }
    let c = c as f64;
    let mut prev = 1.0;
    if b == 0 {
        return Ok(prev);
    }
    let mut cur = 1.0 + c - x;
    for k in 1..b {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + c - x) * cur - (kf + c) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `ln(n!)`
pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `(-i)^k`
fn minus_i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Exact 1D recoil element `<m| exp(-i kappa (a + a^dagger)) |n>`.
pub fn recoil_element_1d(m: usize, n: usize, kappa: f64) -> Result<Complex64> {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    let d = hi - lo;
    let lag = laguerre(lo, d, kappa * kappa)?;
    if d == 0 {
        return Ok(Complex64::new((-0.5 * kappa * kappa).exp() * lag, 0.0));
    }
    if kappa == 0.0 || lag == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // log-domain magnitude keeps sqrt(lo!/hi!) kappa^d finite for large d
    let log_mag = -0.5 * kappa * kappa
        + 0.5 * (ln_factorial(lo) - ln_factorial(hi))
        + d as f64 * kappa.abs().ln();
    let sign = if kappa < 0.0 && d % 2 == 1 { -1.0 } else { 1.0 };
    Ok(minus_i_pow(d) * (sign * lag * log_mag.exp()))
}

/// Product of the three axis elements with `kappa_j = khat_j eta_j`.
pub fn recoil_element_3d(m: Mode3, n: Mode3, dir: Direction, cfg: &LambDickeConfig) -> Result<Complex64> {
    let mut out = Complex64::new(1.0, 0.0);
    for j in 0..3 {
        out *= recoil_element_1d(m.0[j], n.0[j], dir.0[j] * cfg.eta[j])?;
    }
    Ok(out)
}

/// Second-order Lamb-Dicke expansion of [`recoil_element_1d`].
pub fn recoil_element_ld(m: usize, n: usize, kappa: f64) -> Result<Complex64> {
    let hi = m.max(n) as f64;
    let k2 = kappa * kappa;
    match m.abs_diff(n) {
        0 => Ok(Complex64::new(1.0 - (hi + 0.5) * k2, 0.0)),
        1 => Ok(Complex64::new(0.0, -kappa * hi.sqrt())),
        2 => Ok(Complex64::new(-0.5 * k2 * (hi * (hi - 1.0)).sqrt(), 0.0)),
        _ => Err(Error::ExpansionOrder { m, n }),
    }
}

/// Dipole radiation pattern `N(khat) = 3/(8 pi) (1 - |d.khat|^2)`.
pub fn dipole_pattern(dir: Direction, dipole: [f64; 3]) -> f64 {
    let c = dot(dir.0, dipole);
    3.0 / (8.0 * PI) * (1.0 - c * c)
}

/// Azimuthal marginal of the dipole pattern at fixed `u = khat.chi`, where
/// `cos_axis = d.chi`. Integrates to one over `u in [-1, 1]`.
pub fn projected_pattern(u: f64, cos_axis: f64) -> f64 {
    let c2 = cos_axis * cos_axis;
    let u2 = u * u;
    0.75 * (1.0 - 0.5 * (1.0 - c2) * (1.0 - u2) - c2 * u2)
}

/// Closed-form `alpha_j = (2 - d_j^2) / 5`.
pub fn anisotropy_coefficients(dipole: [f64; 3]) -> [f64; 3] {
    dipole.map(|d| (2.0 - d * d) / 5.0)
}

/// `alpha_j = int dOmega N(khat) khat_j^2`, by quadrature.
pub fn anisotropy_coefficients_quadrature(dipole: [f64; 3], rule: &SphereRule) -> [f64; 3] {
    let mut out = [0.0; 3];
    for node in &rule.nodes {
        let w = node.weight * dipole_pattern(Direction(node.dir), dipole);
        for j in 0..3 {
            out[j] += w * node.dir[j] * node.dir[j];
        }
    }
    out
}

/// True when some axis of `a + b + c + d` is odd; those coefficients vanish.
pub fn parity_forbidden(a: Mode3, b: Mode3, c: Mode3, d: Mode3) -> bool {
    (0..3).any(|j| (a.0[j] + b.0[j] + c.0[j] + d.0[j]) % 2 == 1)
}

/// Per-axis tables of `R_ab(kappa)` for `a, b <= n_max[j]` at one direction.
pub(crate) fn axis_tables(dir: [f64; 3], eta: [f64; 3], n_max: [usize; 3]) -> Result<[Vec<Vec<Complex64>>; 3]> {
    let mut tables: [Vec<Vec<Complex64>>; 3] = Default::default();
    for j in 0..3 {
        let kappa = dir[j] * eta[j];
        let size = n_max[j] + 1;
        let mut t = vec![vec![Complex64::new(0.0, 0.0); size]; size];
        for a in 0..size {
            for b in a..size {
                let v = recoil_element_1d(a, b, kappa)?;
                t[a][b] = v;
                t[b][a] = v;
            }
        }
        tables[j] = t;
    }
    Ok(tables)
}

fn rtilde_with_rule(np: Mode3, mp: Mode3, m: Mode3, n: Mode3, cfg: &LambDickeConfig, rule: &SphereRule) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for node in &rule.nodes {
        let dir = Direction(node.dir);
        let w = node.weight * dipole_pattern(dir, cfg.dipole);
        let left = recoil_element_3d(np, mp, dir, cfg)?;
        let right = recoil_element_3d(m, n, dir, cfg)?;
        acc += left.conj() * right * w;
    }
    Ok(acc)
}

/// Angular-averaged coefficient
/// `R~_{n'm'mn} = int dOmega N(khat) conj(R_{n'm'}(khat)) R_{mn}(khat)`.
///
/// The imaginary residue is checked against `1e-10` and dropped.
pub fn rtilde(
    np: Mode3,
    mp: Mode3,
    m: Mode3,
    n: Mode3,
    cfg: &LambDickeConfig,
    settings: &QuadratureSettings,
) -> Result<f64> {
    if parity_forbidden(np, mp, m, n) {
        return Ok(0.0);
    }
    let rule = settings.rule();
    let coarse = rtilde_with_rule(np, mp, m, n, cfg, &rule)?;
    let fine = rtilde_with_rule(np, mp, m, n, cfg, &rule.doubled())?;
    settings.check(coarse.re, fine.re)?;
    if fine.im.abs() > 1e-10 {
        return Err(Error::Quadrature { estimate: fine.im.abs(), tolerance: 1e-10 });
    }
    Ok(fine.re)
}

/// Which closed-form Lamb-Dicke case produced a coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LdCase {
    /// Both pairs diagonal.
    Diagonal,
    /// One quantum exchanged on a single axis in both pairs.
    SingleQuantum { axis: usize },
    /// Two quanta on a single axis in one pair, the other pair diagonal.
    DoubleQuantum { axis: usize },
}

/// Lamb-Dicke value of [`rtilde`]. `case == None` flags an index pattern
/// whose first contribution is beyond second order (value reported as 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdCoefficient {
    pub value: f64,
    pub case: Option<LdCase>,
}

pub fn rtilde_ld(np: Mode3, mp: Mode3, m: Mode3, n: Mode3, cfg: &LambDickeConfig) -> LdCoefficient {
    let alpha = cfg.alpha();
    let diff_left: [usize; 3] = std::array::from_fn(|j| np.0[j].abs_diff(mp.0[j]));
    let diff_right: [usize; 3] = std::array::from_fn(|j| m.0[j].abs_diff(n.0[j]));
    let hi_left: [f64; 3] = std::array::from_fn(|j| np.0[j].max(mp.0[j]) as f64);
    let hi_right: [f64; 3] = std::array::from_fn(|j| m.0[j].max(n.0[j]) as f64);
    let none = LdCoefficient { value: 0.0, case: None };

    if diff_left == [0; 3] && diff_right == [0; 3] {
        let shift: f64 = (0..3)
            .map(|j| (mp.0[j] + m.0[j] + 1) as f64 * alpha[j] * cfg.eta[j] * cfg.eta[j])
            .sum();
        return LdCoefficient { value: 1.0 - shift, case: Some(LdCase::Diagonal) };
    }
    let single_axis = |d: &[usize; 3], order: usize| -> Option<usize> {
        let axes: Vec<usize> = (0..3).filter(|&j| d[j] != 0).collect();
        (axes.len() == 1 && d[axes[0]] == order).then(|| axes[0])
    };
    if let (Some(i), Some(k)) = (single_axis(&diff_left, 1), single_axis(&diff_right, 1)) {
        if i != k {
            return none;
        }
        let value = alpha[i] * cfg.eta[i] * cfg.eta[i] * (hi_left[i] * hi_right[i]).sqrt();
        return LdCoefficient { value, case: Some(LdCase::SingleQuantum { axis: i }) };
    }
    let double = |d: &[usize; 3], other: &[usize; 3], hi: &[f64; 3]| {
        if *other != [0; 3] {
            return None;
        }
        single_axis(d, 2).map(|i| {
            let v = -0.5 * alpha[i] * cfg.eta[i] * cfg.eta[i] * (hi[i] * (hi[i] - 1.0)).sqrt();
            LdCoefficient { value: v, case: Some(LdCase::DoubleQuantum { axis: i }) }
        })
    };
    double(&diff_left, &diff_right, &hi_left)
        .or_else(|| double(&diff_right, &diff_left, &hi_right))
        .unwrap_or(none)
}

/// Smallest `n` such that the displacement completeness deficit
/// `1 - sum_{m <= n} |R_{m k}(kappa)|^2` is below `tol`, starting from level `k`.
pub fn truncation_for_deficit(kappa: f64, from: usize, tol: f64) -> Result<usize> {
    let mut sum = 0.0;
    for n in 0..=LAGUERRE_MAX_DEGREE {
        sum += recoil_element_1d(n, from, kappa)?.norm_sqr();
        if n >= from && 1.0 - sum < tol {
            return Ok(n);
        }
    }
    Err(Error::DegreeTooLarge { degree: LAGUERRE_MAX_DEGREE + 1, bound: LAGUERRE_MAX_DEGREE })
}

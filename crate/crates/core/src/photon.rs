//! Single-photon wavepacket emitted by the excited atom while the partner sits
//! in a superposition of the two lowest trap levels.
//!
//! Geometry is fixed: dipole along `z`, trap axis `chi` along `x`. Internal
//! units are `Gamma = 1`, `c = 1`, so positions are in `c/Gamma`.
//!
//! The exported intensity is the dimensionless bracket
//! `I_hat = I (4 pi eps0)^2 c^2 r^2 / (d_eg^2 omega0^4)`, the same prefactor for
//! every term. Detection probability per `dOmega dtau` is `(3 / 8 pi) Gamma I_hat`.
//!
//! Recoil factors follow the coupling `b_k exp(+i k.x)` of the emission
//! Hamiltonian, i.e. `R(u)` here is [`recoil_element_1d`] at `kappa = -eta u`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_legendre, SphereRule};
use crate::rates::gamma_eff_1d;
use crate::recoil::{projected_pattern, recoil_element_1d, Direction};
use crate::{Error, Result};

/// Blocking-atom amplitudes on trap levels `|0>` and `|1>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperpositionInit {
    pub mu0: Complex64,
    pub mu1: Complex64,
}

impl SuperpositionInit {
    pub fn new(mu0: Complex64, mu1: Complex64) -> Result<Self> {
        let norm = mu0.norm_sqr() + mu1.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(SuperpositionInit { mu0, mu1 })
    }

    pub fn ground() -> Self {
        SuperpositionInit { mu0: Complex64::new(1.0, 0.0), mu1: Complex64::new(0.0, 0.0) }
    }

    pub fn first_excited() -> Self {
        SuperpositionInit { mu0: Complex64::new(0.0, 0.0), mu1: Complex64::new(1.0, 0.0) }
    }

    /// `mu0 = 1 - eta^2/2`, `mu1 = i sqrt(1 - mu0^2)`: the level the excited
    /// atom would reach by emitting along `-x`.
    pub fn shaped(eta: f64) -> Result<Self> {
        let mu0 = 1.0 - 0.5 * eta * eta;
        if !(0.0..=1.0).contains(&mu0) {
            return Err(Error::param("eta", format!("{eta} gives mu0 = {mu0} outside [0, 1]")));
        }
        Self::new(Complex64::new(mu0, 0.0), Complex64::new(0.0, (1.0 - mu0 * mu0).sqrt()))
    }
}

/// How the two effective rates are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `1 - int N |R_00|^2` and `1 - int N |R_01|^2`.
    #[default]
    Exact,
    /// `alpha eta^2` and `1 - alpha eta^2`.
    LambDicke,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhotonScenario {
    eta: f64,
    nu: f64,
    alpha: f64,
    gamma: f64,
    model: RateModel,
    gamma0: f64,
    gamma1: f64,
}

impl PhotonScenario {
    /// `alpha` is the orientation coefficient of the trap axis; with the fixed
    /// geometry it is 2/5, and only the Lamb-Dicke rate model reads it.
    pub fn new(eta: f64, nu: f64, alpha: f64, gamma: f64, model: RateModel) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::param("eta", format!("{eta} must be > 0")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::param("nu", format!("{nu} must be > 0")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("{alpha} must lie in (0, 1)")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::param("gamma", format!("{gamma} must be > 0")));
        }
        let (g0, g1) = match model {
            RateModel::Exact => (gamma_eff_1d(eta, 0.0, true)?, 1.0 - first_level_survival(eta)),
            RateModel::LambDicke => (alpha * eta * eta, 1.0 - alpha * eta * eta),
        };
        if g0 >= g1 {
            return Err(Error::param("eta", format!("blocked rate {g0} is not below the unblocked rate {g1}")));
        }
        Ok(PhotonScenario { eta, nu, alpha, gamma, model, gamma0: gamma * g0, gamma1: gamma * g1 })
    }

    /// Exact rates, `alpha = 2/5`, `Gamma = 1`.
    pub fn with_defaults(eta: f64, nu: f64) -> Result<Self> {
        Self::new(eta, nu, 0.4, 1.0, RateModel::Exact)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn model(&self) -> RateModel {
        self.model
    }

    /// `(Gamma_eff^(0), Gamma_eff^(1))`.
    pub fn rates(&self) -> (f64, f64) {
        (self.gamma0, self.gamma1)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.nu <= self.gamma {
            out.push(format!("nu = {} is not above Gamma = {}; the asymptotic forms assume Gamma << nu", self.nu, self.gamma));
        }
        out
    }

    /// Earliest time at which the asymptotic amplitudes are used.
    pub fn regime_start(&self, init: &SuperpositionInit) -> f64 {
        let rate = if init.mu0.norm_sqr() > 0.0 { self.gamma0 } else { self.gamma1 };
        10.0 / rate
    }

    fn check_regime(&self, init: &SuperpositionInit, t: f64) -> Result<()> {
        let required = self.regime_start(init);
        if t < required {
            return Err(Error::Regime { t, required });
        }
        Ok(())
    }

    fn r0n(&self, n: usize, u: f64) -> Complex64 {
        recoil_element_1d(0, n, -self.eta * u).expect("R_0n needs only the degree-0 Laguerre polynomial")
    }
}

// int N |R_01(u)|^2 for d perpendicular to chi
fn first_level_survival(eta: f64) -> f64 {
    let (x, w) = gauss_legendre(48);
    x.iter()
        .zip(&w)
        .map(|(&u, &wi)| wi * projected_pattern(u, 0.0) * recoil_element_1d(0, 1, eta * u).unwrap().norm_sqr())
        .sum()
}

/// Photon mode: detuning `omega_k - omega0` (units of `Gamma`) and direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonMode {
    pub detuning: f64,
    pub dir: Direction,
}

/// Amplitude `a_{mn,k}(t)` of `|g m; g n; 1_k>` in the frame rotating at
/// `omega0`, with the coupling `E_k^* d.e_k / hbar` divided out.
pub fn ww_amplitudes(s: &PhotonScenario, init: &SuperpositionInit, mode: (usize, usize), k: PhotonMode, t: f64) -> Result<Complex64> {
    s.check_regime(init, t)?;
    let (m, n) = mode;
    let u = k.dir.0[0];
    let d = k.detuning;
    let lorentz = |shift: f64, rate: f64| Complex64::new(d + shift, 0.5 * rate).inv();
    let phase = |shift: f64| Complex64::from_polar(1.0, -(d + shift) * t);
    let (g0, g1) = s.rates();
    Ok(match (m, n) {
        (0, 1) => {
            phase(s.nu)
                * (init.mu0 * s.r0n(1, u).conj() * lorentz(s.nu, g0) - init.mu1 * s.r0n(0, u).conj() * lorentz(0.0, g1))
        }
        (0, n) if n > 1 => {
            let shift = n as f64 * s.nu;
            phase(shift) * init.mu0 * s.r0n(n, u).conj() * lorentz(shift, g0)
        }
        (1, n) if n > 1 => {
            let shift = (n + 1) as f64 * s.nu;
            phase(shift) * init.mu1 * s.r0n(n, u).conj() * lorentz(shift, g1)
        }
        _ => Complex64::new(0.0, 0.0),
    })
}

/// Per-term breakdown of `I_hat`. `psi1` already contains `cross`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IntensityComponents {
    pub psi1: f64,
    pub sum0: f64,
    pub sum1: f64,
    pub cross: f64,
}

impl IntensityComponents {
    pub fn total(&self) -> f64 {
        self.psi1 + self.sum0 + self.sum1
    }
}

/// `sum_{n>1} |R_0n(u)|^2`, stopped once a term falls below `1e-12` of the
/// running total past the peak of the distribution.
fn higher_level_weight(s: &PhotonScenario, u: f64) -> f64 {
    let mut total = s.r0n(0, u).norm_sqr() + s.r0n(1, u).norm_sqr();
    let mut sum = 0.0;
    let peak = (s.eta * u).powi(2);
    for n in 2..=400 {
        let term = s.r0n(n, u).norm_sqr();
        sum += term;
        total += term;
        if n as f64 > peak && term < 1e-12 * total {
            break;
        }
    }
    sum
}

/// Intensity components at direction cosine `u = rhat.x`, dipole factor
/// `sin^2 theta` and retarded time `tau = t - r/c`.
pub fn components_at(s: &PhotonScenario, init: &SuperpositionInit, u: f64, sin2: f64, tau: f64) -> IntensityComponents {
    if tau < 0.0 {
        return IntensityComponents::default();
    }
    let (g0, g1) = s.rates();
    let (p0, p1) = (init.mu0.norm_sqr(), init.mu1.norm_sqr());
    let (r00, r01) = (s.r0n(0, u), s.r0n(1, u));
    let (e0, e1) = ((-g0 * tau).exp(), (-g1 * tau).exp());
    let beat = Complex64::from_polar((-0.5 * (g0 + g1) * tau).exp(), s.nu * tau);
    let cross = -2.0 * (init.mu0 * r01.conj() * init.mu1.conj() * r00 * beat).re;
    let psi1 = p0 * r01.norm_sqr() * e0 + p1 * r00.norm_sqr() * e1 + cross;
    let higher = higher_level_weight(s, u);
    IntensityComponents {
        psi1: sin2 * psi1,
        sum0: sin2 * p0 * higher * e0,
        sum1: sin2 * p1 * higher * e1,
        cross: sin2 * cross,
    }
}

/// `I_hat` at spherical position `(r, theta, phi)`, `theta` measured from
/// the dipole axis `z` and `phi` from `x`.
pub fn intensity(s: &PhotonScenario, init: &SuperpositionInit, r: f64, theta: f64, phi: f64, t: f64) -> f64 {
    let sin_t = theta.sin();
    components_at(s, init, sin_t * phi.cos(), sin_t * sin_t, t - r).total()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileSample {
    pub x: f64,
    pub intensity: f64,
    pub components: IntensityComponents,
}

/// `I_t(x)` along the trap axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WavepacketProfile {
    pub t: f64,
    pub samples: Vec<ProfileSample>,
}

/// Samples `I_t(x)` at `points` equally spaced `x in [-ct, ct]`.
pub fn profile_along_axis(s: &PhotonScenario, init: &SuperpositionInit, t: f64, points: usize) -> Result<WavepacketProfile> {
    s.check_regime(init, t)?;
    if points < 2 {
        return Err(Error::param("points", "need at least two grid points"));
    }
    let last = (points - 1) as f64;
    let samples = (0..points)
        .into_par_iter()
        .map(|i| {
            let x = t * (2.0 * i as f64 - last) / last;
            let u = if x < 0.0 { -1.0 } else { 1.0 };
            let c = components_at(s, init, u, 1.0, t - x.abs());
            ProfileSample { x, intensity: c.total(), components: c }
        })
        .collect();
    Ok(WavepacketProfile { t, samples })
}

/// `int_0^t dtau I_hat` along one direction, in closed form.
fn time_integrated(s: &PhotonScenario, init: &SuperpositionInit, u: f64, sin2: f64, t: f64) -> f64 {
    let (g0, g1) = s.rates();
    let decay = |g: f64| (1.0 - (-g * t).exp()) / g;
    let z = Complex64::new(-0.5 * (g0 + g1), s.nu);
    let beat = ((z * t).exp() - 1.0) / z;
    let (p0, p1) = (init.mu0.norm_sqr(), init.mu1.norm_sqr());
    let (r00, r01) = (s.r0n(0, u), s.r0n(1, u));
    let higher = higher_level_weight(s, u);
    let cross = -2.0 * (init.mu0 * r01.conj() * init.mu1.conj() * r00 * beat).re;
    sin2 * (p0 * (r01.norm_sqr() + higher) * decay(g0) + p1 * (r00.norm_sqr() + higher) * decay(g1) + cross)
}

/// Total emission probability up to time `t`: the sphere integral of
/// `(3 / 8 pi) Gamma int dtau I_hat`. Only meaningful once
/// `t >= s.regime_start(init)`.
pub fn emitted_norm(s: &PhotonScenario, init: &SuperpositionInit, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let sphere = SphereRule::new(48, 96).integrate(|dir| time_integrated(s, init, dir[0], 1.0 - dir[2] * dir[2], t));
    3.0 / (8.0 * PI) * s.gamma * sphere
}

/// Least-squares slope of `ln I_t(x)` over samples with `x in [lo, hi]`.
/// On the `x > 0` tail this is the decay rate of the wavepacket.
pub fn tail_decay_rate(profile: &WavepacketProfile, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = profile
        .samples
        .iter()
        .filter(|p| p.x >= lo && p.x <= hi && p.intensity > 0.0)
        .map(|p| (p.x, p.intensity.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::param("window", "fewer than two positive samples in the fit window"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_panels;
    use proptest::prelude::*;

    fn shaped(eta: f64, nu: f64) -> (PhotonScenario, SuperpositionInit) {
        (PhotonScenario::with_defaults(eta, nu).unwrap(), SuperpositionInit::shaped(eta).unwrap())
    }

    #[test]
    fn init_normalization() {
        assert!(SuperpositionInit::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).is_ok());
        assert!(SuperpositionInit::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.7)).is_err());
        let s = SuperpositionInit::shaped(0.28).unwrap();
        assert!((s.mu0.norm_sqr() + s.mu1.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rates_match_lamb_dicke_to_second_order() {
        for eta in [0.02, 0.05, 0.1] {
            let s = PhotonScenario::with_defaults(eta, 10.0).unwrap();
            let (g0, g1) = s.rates();
            assert!((g0 - 0.4 * eta * eta).abs() < eta.powi(4), "{g0}");
            assert!((g1 - (1.0 - 0.4 * eta * eta)).abs() < eta.powi(4), "{g1}");
        }
        let ld = PhotonScenario::new(0.1, 10.0, 0.4, 1.0, RateModel::LambDicke).unwrap();
        assert!((ld.rates().0 - 0.004).abs() < 1e-15 && (ld.rates().1 - 0.996).abs() < 1e-15);
        assert!(PhotonScenario::new(1.2, 10.0, 0.4, 1.0, RateModel::LambDicke).is_err());
        assert!(!PhotonScenario::with_defaults(0.1, 0.5).unwrap().warnings().is_empty());
    }

    #[test]
    fn regime_gate() {
        let (s, init) = shaped(0.28, 10.0);
        let k = PhotonMode { detuning: 0.0, dir: Direction([1.0, 0.0, 0.0]) };
        let start = s.regime_start(&init);
        assert!(matches!(ww_amplitudes(&s, &init, (0, 1), k, 0.5 * start), Err(Error::Regime { .. })));
        assert!(ww_amplitudes(&s, &init, (0, 1), k, start).is_ok());
        let excited = SuperpositionInit::first_excited();
        assert!((s.regime_start(&excited) - 10.0 / s.rates().1).abs() < 1e-12);
        assert!(profile_along_axis(&s, &init, 1.0, 11).is_err());
    }

    #[test]
    fn amplitude_support() {
        let s = PhotonScenario::with_defaults(0.2, 10.0).unwrap();
        let t = 1e4;
        let k = PhotonMode { detuning: -20.0, dir: Direction::normalized([1.0, 0.3, 0.2]).unwrap() };
        let g = SuperpositionInit::ground();
        let e = SuperpositionInit::first_excited();
        assert_eq!(ww_amplitudes(&s, &g, (1, 3), k, t).unwrap(), Complex64::new(0.0, 0.0));
        assert_ne!(ww_amplitudes(&s, &g, (0, 3), k, t).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(ww_amplitudes(&s, &e, (0, 3), k, t).unwrap(), Complex64::new(0.0, 0.0));
        assert_ne!(ww_amplitudes(&s, &e, (1, 3), k, t).unwrap(), Complex64::new(0.0, 0.0));
        for mode in [(0, 0), (1, 1), (1, 0), (2, 3)] {
            assert_eq!(ww_amplitudes(&s, &g, mode, k, t).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn spectrum_centered_below_resonance() {
        let s = PhotonScenario::with_defaults(0.2, 10.0).unwrap();
        let g = SuperpositionInit::ground();
        let dir = Direction([1.0, 0.0, 0.0]);
        let (g0, _) = s.rates();
        let at = |d: f64| ww_amplitudes(&s, &g, (0, 2), PhotonMode { detuning: d, dir }, 1e4).unwrap().norm_sqr();
        let peak = at(-20.0);
        assert!(peak > at(-20.0 + 0.01 * g0) && peak > at(-20.0 - 0.01 * g0));
        // half maximum at half-width Gamma_eff / 2
        assert!((at(-20.0 + 0.5 * g0) / peak - 0.5).abs() < 1e-12);
    }

    // sum over (m, n) and k of |a|^2 with the continuum replacement
    // sum_k |g_k|^2 -> (Gamma / 2 pi) int d(delta) int dOmega N
    fn spectral_norm(s: &PhotonScenario, init: &SuperpositionInit) -> f64 {
        let t = s.regime_start(init);
        let rule = SphereRule::new(24, 48);
        let mut total = 0.0;
        for node in &rule.nodes {
            let dir = Direction(node.dir);
            let weight = node.weight * 3.0 / (8.0 * PI) * (1.0 - node.dir[2] * node.dir[2]) / (2.0 * PI);
            let mut modes = vec![(0, 1)];
            for n in 2..30 {
                modes.push((0, n));
                modes.push((1, n));
            }
            for mode in modes {
                let (center, width) = match (mode, init.mu0.norm_sqr() > 0.0) {
                    ((0, n), true) => (-(n as f64) * s.nu(), s.rates().0),
                    ((0, _), false) => (0.0, s.rates().1),
                    ((_, n), _) => (-((n + 1) as f64) * s.nu(), s.rates().1),
                };
                // Lorentzian mapped onto a finite interval around its center
                let f = |phi: f64| {
                    let d = center + 0.5 * width * phi.tan();
                    let a = ww_amplitudes(s, init, mode, PhotonMode { detuning: d, dir }, t).unwrap();
                    0.5 * width * a.norm_sqr() / phi.cos().powi(2)
                };
                total += weight * integrate_panels(f, -0.5 * PI, 0.5 * PI, 64, 8);
            }
        }
        total
    }

    #[test]
    fn spectral_norm_is_one() {
        let s = PhotonScenario::with_defaults(0.3, 10.0).unwrap();
        for init in [SuperpositionInit::ground(), SuperpositionInit::first_excited()] {
            let n = spectral_norm(&s, &init);
            assert!((n - 1.0).abs() < 1e-4, "{n}");
        }
    }

    #[test]
    fn causality_and_dipole_zero() {
        let (s, init) = shaped(0.28, 10.0);
        let t = 50.0;
        assert_eq!(intensity(&s, &init, 50.0 + 1e-9, 1.2, 0.3, t), 0.0);
        assert_eq!(intensity(&s, &init, 20.0, 0.0, 0.3, t), 0.0);
        assert!(intensity(&s, &init, 49.0, 0.5 * PI, 0.0, t) > 0.0);
        let p = profile_along_axis(&s, &init, 400.0, 201).unwrap();
        assert_eq!(p.samples.first().unwrap().x, -400.0);
        assert_eq!(p.samples.last().unwrap().x, 400.0);
        assert!(p.samples.iter().all(|q| q.intensity >= -1e-12));
    }

    #[test]
    fn sin2_dipole_factor() {
        let (s, init) = shaped(0.28, 10.0);
        // at phi = pi/2, u = 0 for every theta; only sin^2 theta varies
        let base = intensity(&s, &init, 5.0, 0.5 * PI, 0.5 * PI, 8.0);
        for theta in [0.2, 0.7, 1.3, 2.5] {
            let v = intensity(&s, &init, 5.0, theta, 0.5 * PI, 8.0);
            assert!((v - base * theta.sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn shaped_state_dark_at_minus_front() {
        let (s, init) = shaped(0.28, 10.0);
        let t = s.regime_start(&init);
        let p = profile_along_axis(&s, &init, t, 1001).unwrap();
        let minus = p.samples.first().unwrap();
        let plus = p.samples.last().unwrap();
        assert!(plus.intensity > 10.0 * minus.intensity);
        // single-quantum part cancels to 9 eta^4 / 256 of the bright front
        assert!(minus.components.psi1 < 1e-3 * plus.components.psi1);
        // what is left is mostly the two-quantum sum, which the superposition cannot cancel
        assert!(minus.components.psi1 < 0.05 * (minus.components.sum0 + minus.components.sum1));
    }

    #[test]
    fn phase_flip_mirrors_profile() {
        let (s, init) = shaped(0.28, 10.0);
        let flipped = SuperpositionInit::new(init.mu0, -init.mu1).unwrap();
        let t = s.regime_start(&init);
        let a = profile_along_axis(&s, &init, t, 401).unwrap();
        let b = profile_along_axis(&s, &flipped, t, 401).unwrap();
        let n = a.samples.len();
        for i in 0..n {
            let (x, y) = (&a.samples[i], &b.samples[n - 1 - i]);
            assert_eq!(x.x, -y.x);
            assert!((x.intensity - y.intensity).abs() < 1e-12 * (1.0 + x.intensity));
        }
        assert!(a.samples[n - 1].intensity > a.samples[0].intensity);
        assert!(b.samples[0].intensity > b.samples[n - 1].intensity);
    }

    #[test]
    fn tail_fits_recover_rates() {
        let s = PhotonScenario::with_defaults(0.28, 10.0).unwrap();
        let (g0, g1) = s.rates();
        for (init, rate) in [(SuperpositionInit::ground(), g0), (SuperpositionInit::first_excited(), g1)] {
            let t = s.regime_start(&init);
            let p = profile_along_axis(&s, &init, t, 2001).unwrap();
            let fit = tail_decay_rate(&p, 0.5 * t, t).unwrap();
            assert!((fit / rate - 1.0).abs() < 1e-10, "{fit} vs {rate}");
        }
    }

    #[test]
    fn beat_period_from_dft() {
        use rustfft::{num_complex::Complex, FftPlanner};
        let nu = 10.0;
        let (s, init) = shaped(0.28, nu);
        let t = s.regime_start(&init);
        let p = profile_along_axis(&s, &init, t, 40001).unwrap();
        let half: Vec<f64> = p.samples.iter().filter(|q| q.x >= 0.0).map(|q| q.components.cross).collect();
        let mut buf: Vec<Complex<f64>> = half.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let mag: Vec<f64> = buf.iter().take(buf.len() / 2).map(|c| c.norm()).collect();
        let k = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
        let dx = p.samples[1].x - p.samples[0].x;
        let bin = 1.0 / (half.len() as f64 * dx);
        assert!((k as f64 * bin - nu / (2.0 * PI)).abs() <= bin, "{} vs {}", k as f64 * bin, nu / (2.0 * PI));
    }

    #[test]
    fn emitted_norm_limits() {
        let (s, init) = shaped(0.28, 10.0);
        assert_eq!(emitted_norm(&s, &init, 0.0), 0.0);
        let g = SuperpositionInit::ground();
        let (g0, _) = s.rates();
        for t in [5.0, 50.0, 500.0] {
            assert!((emitted_norm(&s, &g, t) - (1.0 - (-g0 * t).exp())).abs() < 1e-10);
        }
        assert!((emitted_norm(&s, &g, 1e4) - 1.0).abs() < 1e-3);
        let v = emitted_norm(&s, &init, 1e4);
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn closed_form_time_integral_matches_radial_quadrature() {
        let (s, init) = shaped(0.28, 10.0);
        let t = 60.0;
        for (theta, phi) in [(1.1f64, 0.4f64), (0.5, 2.9), (1.5, 0.0)] {
            let numeric = integrate_panels(|r| intensity(&s, &init, r, theta, phi, t), 0.0, t, 600, 8);
            let closed = time_integrated(&s, &init, theta.sin() * phi.cos(), theta.sin().powi(2), t);
            assert!((numeric - closed).abs() < 1e-10 * closed, "{numeric} {closed}");
        }
    }

    proptest! {
        #[test]
        fn intensity_nonnegative(eta in 0.05f64..0.5, nu in 2.0f64..30.0, a in 0.0f64..1.0, ph in 0.0f64..6.3, tau in 0.0f64..40.0, u in -1.0f64..1.0) {
            let s = PhotonScenario::with_defaults(eta, nu).unwrap();
            let init = SuperpositionInit::new(Complex64::new(a.sqrt(), 0.0), Complex64::from_polar((1.0 - a).sqrt(), ph)).unwrap();
            let c = components_at(&s, &init, u, 1.0, tau);
            prop_assert!(c.sum0 >= 0.0 && c.sum1 >= 0.0);
            prop_assert!(c.psi1 - c.cross >= 0.0);
            prop_assert!(c.total() >= -1e-12);
        }

        #[test]
        fn emitted_norm_is_a_probability(eta in 0.1f64..0.4, a in 0.0f64..1.0, ph in 0.0f64..6.3, t in 0.0f64..2000.0) {
            let s = PhotonScenario::with_defaults(eta, 10.0).unwrap();
            let init = SuperpositionInit::new(Complex64::new(a.sqrt(), 0.0), Complex64::from_polar((1.0 - a).sqrt(), ph)).unwrap();
            let v = emitted_norm(&s, &init, t);
            prop_assert!((-1e-12..=1.0 + 1e-3).contains(&v), "{}", v);
        }
    }
}

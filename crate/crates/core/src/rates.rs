//! Effective decay rates of a Pauli-blocked excited atom, the quench rate of
//! a dressed metastable state, and the resulting rate equations.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_legendre, QuadratureSettings, SphereRule};
use crate::recoil::{
    axis_tables, dipole_pattern, projected_pattern, recoil_element_1d, Direction, LambDickeConfig, Mode3,
    LAGUERRE_MAX_DEGREE,
};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-10;

/// Motional amplitudes of the excited atom and the level held by the
/// ground-state atom.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialMotionalState {
    pub amplitudes: BTreeMap<Mode3, Complex64>,
    pub blocking_mode: Mode3,
    pub blocking_present: bool,
}

impl InitialMotionalState {
    pub fn new(amplitudes: BTreeMap<Mode3, Complex64>, blocking_mode: Mode3, blocking_present: bool) -> Result<Self> {
        let state = InitialMotionalState { amplitudes, blocking_mode, blocking_present };
        state.validate()?;
        Ok(state)
    }

    /// Excited atom in the motional ground state, blocked at `0`.
    pub fn ground() -> Self {
        InitialMotionalState {
            amplitudes: BTreeMap::from([(Mode3::GROUND, Complex64::new(1.0, 0.0))]),
            blocking_mode: Mode3::GROUND,
            blocking_present: true,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|r| r.norm_sqr()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(())
    }

    fn n_max(&self) -> [usize; 3] {
        let mut out = self.blocking_mode.0;
        for m in self.amplitudes.keys() {
            for j in 0..3 {
                out[j] = out[j].max(m.0[j]);
            }
        }
        out
    }
}

fn mode_integral_1d(n: usize, eta: f64, cos_axis: f64, nodes: &[(f64, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for &(u, w) in nodes {
        acc += w * projected_pattern(u, cos_axis) * recoil_element_1d(n, 0, u * eta)?.norm_sqr();
    }
    Ok(acc)
}

/// 1D effective rate in units of `Gamma` for an excited atom in `|0>` whose
/// partner blocks the `|0>` ground level. `cos_axis` is `d.chi`.
pub fn gamma_eff_1d(eta: f64, cos_axis: f64, blocked: bool) -> Result<f64> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::param("eta", format!("{eta} must be >= 0")));
    }
    if !blocked {
        return Ok(1.0);
    }
    let (x, w) = gauss_legendre(48);
    let nodes: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    let mut sum = 0.0;
    let mut small_run = 0;
    for n in 1..=LAGUERRE_MAX_DEGREE {
        let term = mode_integral_1d(n, eta, cos_axis, &nodes)?;
        sum += term;
        small_run = if term <= 1e-14 * sum { small_run + 1 } else { 0 };
        if small_run == 3 {
            return Ok(sum);
        }
    }
    Err(Error::Quadrature { estimate: sum, tolerance: 1e-14 })
}

fn survival_with_rule(init: &InitialMotionalState, cfg: &LambDickeConfig, rule: &SphereRule) -> Result<f64> {
    let n_max = init.n_max();
    let b = init.blocking_mode.0;
    let mut acc = 0.0;
    for node in &rule.nodes {
        let tables = axis_tables(node.dir, cfg.eta, n_max)?;
        let mut amp = Complex64::new(0.0, 0.0);
        for (n, r) in &init.amplitudes {
            amp += r * tables[0][b[0]][n.0[0]] * tables[1][b[1]][n.0[1]] * tables[2][b[2]][n.0[2]];
        }
        acc += node.weight * dipole_pattern(Direction(node.dir), cfg.dipole) * amp.norm_sqr();
    }
    Ok(acc)
}

/// Effective decay rate `Gamma (1 - sum r*_{n'} r_n R~_{n' b b n})`, evaluated
/// as `Gamma (1 - int dOmega N |sum_n R_{bn} r_n|^2)`.
pub fn gamma_eff_general(init: &InitialMotionalState, cfg: &LambDickeConfig, settings: &QuadratureSettings) -> Result<f64> {
    init.validate()?;
    if !init.blocking_present {
        return Ok(cfg.gamma);
    }
    let rule = settings.rule();
    let coarse = survival_with_rule(init, cfg, &rule)?;
    let fine = survival_with_rule(init, cfg, &rule.doubled())?;
    settings.check(coarse, fine)?;
    Ok(cfg.gamma * (1.0 - fine))
}

/// Amplitudes `r_n = <n| exp(i k_L . X) |0>` after absorbing a laser photon
/// along `k_hat`. `n_max` is the starting per-axis cutoff and grows until the
/// captured norm exceeds `1 - 1e-12`.
pub fn laser_recoil(k_hat: Direction, cfg: &LambDickeConfig, n_max: usize) -> Result<InitialMotionalState> {
    let kappa: [f64; 3] = std::array::from_fn(|j| -k_hat.0[j] * cfg.eta[j]);
    let mut n = n_max.max(1);
    loop {
        let mut axes: [Vec<Complex64>; 3] = Default::default();
        for j in 0..3 {
            axes[j] = (0..=n).map(|a| recoil_element_1d(a, 0, kappa[j])).collect::<Result<_>>()?;
        }
        let captured: f64 = axes.iter().map(|v| v.iter().map(|r| r.norm_sqr()).sum::<f64>()).product();
        if 1.0 - captured < 1e-12 {
            let mut amplitudes = BTreeMap::new();
            for (a, ra) in axes[0].iter().enumerate() {
                for (b, rb) in axes[1].iter().enumerate() {
                    for (c, rc) in axes[2].iter().enumerate() {
                        let r = ra * rb * rc;
                        if r.norm_sqr() > 0.0 {
                            amplitudes.insert(Mode3([a, b, c]), r);
                        }
                    }
                }
            }
            return InitialMotionalState::new(amplitudes, Mode3::GROUND, true);
        }
        if n >= LAGUERRE_MAX_DEGREE {
            return Err(Error::NotNormalized { norm: captured });
        }
        n += 1;
    }
}

/// Parameters of a metastable state dressed off-resonantly to a fast
/// transition. Frequencies are angular, in s^-1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchConfig {
    pub omega_dr: f64,
    pub delta_dr: f64,
    pub gamma_1p: f64,
    pub eta: f64,
    pub eta_dr: f64,
    pub c_up_sq: f64,
    pub c_dn_sq: f64,
}

impl QuenchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_dr", self.omega_dr), ("delta_dr", self.delta_dr), ("gamma_1p", self.gamma_1p)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("{v} must be finite and >= 0")));
            }
        }
        if self.delta_dr == 0.0 || self.gamma_1p == 0.0 {
            return Err(Error::param("delta_dr", "detuning and linewidth must be > 0"));
        }
        for (name, v) in [("eta", self.eta), ("eta_dr", self.eta_dr)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("{v} must be >= 0")));
            }
        }
        for (name, v) in [("c_up_sq", self.c_up_sq), ("c_dn_sq", self.c_dn_sq)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} must lie in [0, 1]")));
            }
        }
        if (self.c_up_sq + self.c_dn_sq - 1.0).abs() > 1e-10 {
            return Err(Error::param("c_up_sq", "c_up_sq + c_dn_sq must equal 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchRate {
    /// Effective decay rate in s^-1.
    pub rate: f64,
    /// Set when `delta_dr / gamma_1p < 5`.
    pub adiabatic_warning: bool,
}

/// `Omega_dr^2 Gamma_1P / (4 Delta_dr^2)`.
pub fn quench_rate(q: &QuenchConfig) -> Result<QuenchRate> {
    q.validate()?;
    let rate = q.omega_dr * q.omega_dr * q.gamma_1p / (4.0 * q.delta_dr * q.delta_dr);
    Ok(QuenchRate { rate, adiabatic_warning: q.delta_dr / q.gamma_1p < 5.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p_e_up: f64,
    pub p_g_up: f64,
    pub p_g_dn: f64,
}

/// Total loss rate of `|e, up>` relative to the quench rate.
pub fn total_branch_factor(q: &QuenchConfig) -> f64 {
    q.c_up_sq * (q.eta * q.eta + q.eta_dr * q.eta_dr) + q.c_dn_sq
}

/// Solution of the three rate equations starting from `P_e_up = 1`.
pub fn rate_equation_solution(q: &QuenchConfig, t: f64) -> Result<Populations> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("t", format!("{t} must be >= 0")));
    }
    let gamma = quench_rate(q)?.rate;
    let up = q.c_up_sq * (q.eta * q.eta + q.eta_dr * q.eta_dr);
    let total = up + q.c_dn_sq;
    if total == 0.0 || gamma == 0.0 {
        return Ok(Populations { p_e_up: 1.0, p_g_up: 0.0, p_g_dn: 0.0 });
    }
    let p_e_up = (-total * gamma * t).exp();
    let decayed = -(-total * gamma * t).exp_m1();
    Ok(Populations { p_e_up, p_g_up: up / total * decayed, p_g_dn: q.c_dn_sq / total * decayed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn s() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    #[test]
    fn gamma_1d_examples() {
        assert_eq!(gamma_eff_1d(0.0, 0.0, true).unwrap(), 0.0);
        assert_eq!(gamma_eff_1d(0.7, 0.0, false).unwrap(), 1.0);
        let g = gamma_eff_1d(0.28, 0.0, true).unwrap();
        // oracle: int (3/8)(1+u^2)(1 - exp(-u^2 eta^2)) du by adaptive quadrature
        assert!((g - 0.030584790666088952).abs() < 1e-13, "{g}");
    }

    #[test]
    fn gamma_1d_matches_closed_sum() {
        // sum_{n != 0} |R_n0|^2 = 1 - exp(-kappa^2), checked at a tilted dipole
        let c: f64 = 0.6;
        for &eta in &[0.05, 0.3, 0.9] {
            let direct = crate::quadrature::integrate_panels(
                |u| projected_pattern(u, c) * (1.0 - (-u * u * eta * eta).exp()),
                -1.0,
                1.0,
                4,
                16,
            );
            assert!((gamma_eff_1d(eta, c, true).unwrap() - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn general_examples() {
        let cfg = LambDickeConfig::isotropic(0.1, [0.0, 0.0, 1.0]).unwrap();
        let g = gamma_eff_general(&InitialMotionalState::ground(), &cfg, &s()).unwrap();
        assert!((g - (1.0 - (-0.01f64).exp())).abs() < 1e-12);
        assert!((g - 0.01).abs() < 2e-4);

        let cfg = LambDickeConfig::new([0.05, 0.08, 0.03], [1.0; 3], [0.0, 0.0, 1.0], 1.0).unwrap();
        let g = gamma_eff_general(&InitialMotionalState::ground(), &cfg, &s()).unwrap();
        let ld = 0.4 * 0.0025 + 0.4 * 0.0064 + 0.2 * 0.0009;
        assert!((g - ld).abs() < 1e-5, "{g} vs {ld}");
    }

    #[test]
    fn unblocked_is_gamma() {
        let mut init = InitialMotionalState::ground();
        init.blocking_present = false;
        let cfg = LambDickeConfig::new([0.3; 3], [1.0; 3], [0.0, 0.0, 1.0], 2.5).unwrap();
        assert_eq!(gamma_eff_general(&init, &cfg, &s()).unwrap(), 2.5);
    }

    #[test]
    fn rejects_unnormalized() {
        let init = InitialMotionalState {
            amplitudes: BTreeMap::from([(Mode3::GROUND, Complex64::new(0.9, 0.0))]),
            blocking_mode: Mode3::GROUND,
            blocking_present: true,
        };
        let cfg = LambDickeConfig::isotropic(0.1, [0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(gamma_eff_general(&init, &cfg, &s()), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn general_matches_explicit_rtilde_sum() {
        let cfg = LambDickeConfig::new([0.3, 0.2, 0.25], [1.0; 3], [0.0, 0.6, 0.8], 1.0).unwrap();
        let amps = [
            (Mode3::GROUND, Complex64::new(0.8, 0.1)),
            (Mode3([1, 0, 0]), Complex64::new(0.0, 0.4)),
            (Mode3([0, 2, 0]), Complex64::new(-0.2, 0.3)),
            (Mode3([1, 1, 1]), Complex64::new(0.1, 0.0)),
        ];
        let norm: f64 = amps.iter().map(|(_, r)| r.norm_sqr()).sum::<f64>().sqrt();
        let amplitudes: BTreeMap<_, _> = amps.iter().map(|(m, r)| (*m, r / norm)).collect();
        let b = Mode3([0, 1, 0]);
        let init = InitialMotionalState::new(amplitudes.clone(), b, true).unwrap();
        let mut explicit = Complex64::new(0.0, 0.0);
        for (np, rp) in &amplitudes {
            for (n, r) in &amplitudes {
                explicit += rp.conj() * r * crate::recoil::rtilde(*np, b, b, *n, &cfg, &s()).unwrap();
            }
        }
        let g = gamma_eff_general(&init, &cfg, &s()).unwrap();
        assert!((g - (1.0 - explicit.re)).abs() < 1e-11);
    }

    #[test]
    fn laser_recoil_examples() {
        let x = Direction::new([1.0, 0.0, 0.0]).unwrap();
        let cfg0 = LambDickeConfig::isotropic(0.0, [0.0, 0.0, 1.0]).unwrap();
        let r = laser_recoil(x, &cfg0, 2).unwrap();
        assert_eq!(r.amplitudes.len(), 1);
        assert_eq!(r.amplitudes[&Mode3::GROUND], Complex64::new(1.0, 0.0));

        let cfg = LambDickeConfig::isotropic(0.28, [0.0, 0.0, 1.0]).unwrap();
        let r = laser_recoil(x, &cfg, 2).unwrap();
        let p0 = r.amplitudes[&Mode3::GROUND].norm_sqr();
        assert!((p0 - (-0.0784f64).exp()).abs() < 1e-14 && (p0 - 0.9246).abs() < 1e-4);
        assert!((r.norm_sqr() - 1.0).abs() < 1e-12);

        let cfg = LambDickeConfig::isotropic(0.1, [0.0, 0.0, 1.0]).unwrap();
        let r = laser_recoil(x, &cfg, 2).unwrap();
        let ratio = r.amplitudes[&Mode3([1, 0, 0])].norm_sqr() / r.amplitudes[&Mode3::GROUND].norm_sqr();
        assert!((ratio - 0.01).abs() < 1e-14);
        // +i k_L X convention: <1| exp(i eta (a + a^dag)) |0> = +i eta exp(-eta^2/2)
        assert!(r.amplitudes[&Mode3([1, 0, 0])].im > 0.0);
    }

    #[test]
    fn laser_recoil_factor_two() {
        let k = Direction::normalized([1.0, 1.0, 1.0]).unwrap();
        for &eta in &[0.05, 0.1, 0.2] {
            let cfg = LambDickeConfig::isotropic(eta, [0.0, 0.0, 1.0]).unwrap();
            let init = laser_recoil(k, &cfg, 2).unwrap();
            let g = gamma_eff_general(&init, &cfg, &s()).unwrap();
            assert!((g - 2.0 * eta * eta).abs() <= 4.0 * eta.powi(4), "eta {eta}: {g}");
        }
    }

    fn paper_quench() -> QuenchConfig {
        let gamma_1p = 2.0 * PI * 29e6;
        QuenchConfig {
            omega_dr: 4e6,
            delta_dr: 10.0 * gamma_1p,
            gamma_1p,
            eta: 0.28,
            eta_dr: 0.09,
            c_up_sq: 1.0,
            c_dn_sq: 0.0,
        }
    }

    #[test]
    fn quench_examples() {
        let q = paper_quench();
        let r = quench_rate(&q).unwrap();
        assert!((r.rate - 219.5).abs() < 0.2, "{}", r.rate);
        assert!(!r.adiabatic_warning);

        let mut zero = q.clone();
        zero.omega_dr = 0.0;
        assert_eq!(quench_rate(&zero).unwrap().rate, 0.0);

        let mut far = q.clone();
        far.delta_dr *= 2.0;
        assert!((quench_rate(&far).unwrap().rate * 4.0 - r.rate).abs() < 1e-12);

        let mut near = q.clone();
        near.delta_dr = 2.0 * q.gamma_1p;
        assert!(quench_rate(&near).unwrap().adiabatic_warning);
    }

    #[test]
    fn rate_equation_examples() {
        let q = paper_quench();
        let p = rate_equation_solution(&q, 0.0).unwrap();
        assert_eq!((p.p_e_up, p.p_g_up, p.p_g_dn), (1.0, 0.0, 0.0));
        assert!((total_branch_factor(&q) - 0.0865).abs() < 1e-15);
        let p = rate_equation_solution(&q, 1e3).unwrap();
        assert!(p.p_e_up < 1e-8 && (p.p_g_up - 1.0).abs() < 1e-8 && p.p_g_dn == 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn populations_conserved(c_up in 0.0f64..1.0, eta in 0.0f64..0.5, eta_dr in 0.0f64..0.5, t in 0.0f64..0.1) {
            let mut q = paper_quench();
            q.c_up_sq = c_up;
            q.c_dn_sq = 1.0 - c_up;
            q.eta = eta;
            q.eta_dr = eta_dr;
            let p = rate_equation_solution(&q, t).unwrap();
            prop_assert!((p.p_e_up + p.p_g_up + p.p_g_dn - 1.0).abs() < 1e-12);
            for v in [p.p_e_up, p.p_g_up, p.p_g_dn] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if q.c_dn_sq > 0.0 && t > 0.0 {
                let frac = p.p_g_dn / (p.p_g_up + p.p_g_dn);
                prop_assert!((frac - q.c_dn_sq / total_branch_factor(&q)).abs() < 1e-10);
            }
        }

        #[test]
        fn general_rate_bounds(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, e3 in 0.0f64..1.0) {
            let cfg = LambDickeConfig::new([e1, e2, e3], [1.0; 3], [0.0, 0.0, 1.0], 1.0).unwrap();
            let st = QuadratureSettings { polar_order: 16, azimuth_points: 32, tolerance: 1e-8 };
            let g = gamma_eff_general(&InitialMotionalState::ground(), &cfg, &st).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g));
        }
    }

    #[test]
    fn ground_rate_monotone_in_eta() {
        let mut prev = -1.0;
        for k in 0..=20 {
            let eta = k as f64 / 20.0;
            let cfg = LambDickeConfig::new([eta, 0.3, 0.2], [1.0; 3], [0.0, 0.0, 1.0], 1.0).unwrap();
            let g = gamma_eff_general(&InitialMotionalState::ground(), &cfg, &s()).unwrap();
            assert!(g >= prev - 1e-14);
            prev = g;
        }
    }
}

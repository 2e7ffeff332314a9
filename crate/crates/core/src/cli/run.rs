//! Evaluation of one parameter point per scenario.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{
    DipoleDipoleParams, ElementSet, EvolveParams, NMax, Params, PhotonParams, QuenchParams, RatesGeometry, RatesInitial,
    RatesParams, ZeemanField, ZeemanParams,
};
use crate::master_eq::{
    assemble, build_basis, choose_n_max, dipole_dipole_element, evolve, excited_decay_rate, observables, AssembleOptions,
    DensityMatrix, DipoleTable, Internal,
};
use crate::photon::{emitted_norm, profile_along_axis, PhotonScenario, SuperpositionInit};
use crate::rates::{gamma_eff_1d, gamma_eff_general, laser_recoil, quench_rate, rate_equation_solution, total_branch_factor, InitialMotionalState};
use crate::recoil::{Direction, LambDickeConfig, Mode3};
use crate::zeeman::{eigensystem, mixing_coefficients_signed, no_flip_crossing, Branch, HyperfineParams};
use crate::Result;

/// Trace loss above which an evolve run is flagged.
pub const TRACE_LOSS_WARN: f64 = 1e-4;
/// Dipole-dipole cutoff sensitivity (units of `Gamma`) above which a run is flagged.
pub const DIPOLE_SENSITIVITY_WARN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: Vec<String>) -> Self {
        Table { name: name.to_string(), columns, rows: Vec::new() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PointResult {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub warnings: Vec<String>,
}

pub fn run_point(params: &Params) -> Result<PointResult> {
    match params {
        Params::Rates(p) => run_rates(p),
        Params::Zeeman(p) => run_zeeman(p),
        Params::Evolve(p) => run_evolve(p),
        Params::Photon(p) => run_photon(p),
        Params::DipoleDipole(p) => run_dipole_dipole(p),
        Params::Quench(p) => run_quench(p),
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / b.abs()
    }
}

fn run_rates(p: &RatesParams) -> Result<PointResult> {
    let mut out = PointResult::default();
    match &p.geometry {
        RatesGeometry::OneD { eta, cos_axis } => {
            let exact = gamma_eff_1d(*eta, *cos_axis, p.blocked)?;
            let ld = if p.blocked { (2.0 - cos_axis * cos_axis) / 5.0 * eta * eta } else { 1.0 };
            let mut t = Table::new("rates", cols(&["eta", "gamma_eff", "gamma_lamb_dicke", "rel_diff"]));
            t.rows.push(vec![*eta, exact, ld, rel_diff(exact, ld)]);
            out.tables.push(t);
            if *eta > 0.5 {
                out.warnings.push(format!("eta = {eta}: the Lamb-Dicke column is outside its range of validity"));
            }
        }
        RatesGeometry::ThreeD { eta, dipole } => {
            let cfg = LambDickeConfig::new(*eta, [1.0; 3], *dipole, 1.0)?;
            let alpha = cfg.alpha();
            let (init, kick) = match &p.initial {
                RatesInitial::Ground => (InitialMotionalState::ground(), [0.0; 3]),
                RatesInitial::LaserRecoil { direction } => {
                    let k = Direction::normalized(*direction)?;
                    (laser_recoil(k, &cfg, 4)?, k.0.map(|c| c * c))
                }
            };
            let exact = gamma_eff_general(&init, &cfg, &p.quadrature)?;
            let ld = if p.blocked { (0..3).map(|j| (alpha[j] + kick[j]) * eta[j] * eta[j]).sum() } else { 1.0 };
            let mut t = Table::new("rates", cols(&["eta_x", "eta_y", "eta_z", "gamma_eff", "gamma_lamb_dicke", "rel_diff"]));
            t.rows.push(vec![eta[0], eta[1], eta[2], exact, ld, rel_diff(exact, ld)]);
            out.tables.push(t);
            out.summary.insert("alpha".into(), json!(alpha));
            if eta.iter().any(|&e| e > 0.5) {
                out.warnings.push(format!("eta = {eta:?}: the Lamb-Dicke column is outside its range of validity"));
            }
        }
    }
    out.summary.insert("rate_unit".into(), json!("Gamma"));
    Ok(out)
}

fn state_label(two_m_f: i32, branch: Branch) -> String {
    let b = match branch {
        Branch::Plus => "p",
        Branch::Minus => "m",
    };
    format!("e_{two_m_f}/2_{b}")
}

fn run_zeeman(p: &ZeemanParams) -> Result<PointResult> {
    let (hp, a_sign, unit) = match &p.field {
        ZeemanField::Dimensionless { x, a_sign } => (HyperfineParams::dimensionless(*a_sign, *x)?, *a_sign, "|A|"),
        ZeemanField::Physical { b_field, species, .. } => (
            HyperfineParams::physical(species.a_hfs_mhz, species.g_j, species.g_i, *b_field)?,
            species.a_hfs_mhz.signum(),
            "MHz",
        ),
    };
    let x = hp.x();
    let states = eigensystem(&hp);
    let mut columns = vec!["x".to_string()];
    columns.extend(states.iter().map(|s| state_label(s.two_m_f, s.branch)));
    let mut eig = Table::new("eigenvalues", columns);
    let mut row = vec![x];
    row.extend(states.iter().map(|s| s.energy));
    eig.rows.push(row);

    let mut noflip = Table::new(
        "noflip",
        cols(&["x", "noflip_1/2", "noflip_-1/2", "noflip_1/2_closed_form", "noflip_-1/2_closed_form"]),
    );
    let plus = |two_m_f: i32| states.iter().find(|s| s.two_m_f == two_m_f && s.branch == Branch::Plus).unwrap();
    let closed = |two_m_f: i32| -> Result<f64> {
        let (up, _) = mixing_coefficients_signed(two_m_f, x, a_sign)?;
        Ok(up * up)
    };
    noflip.rows.push(vec![x, plus(1).c_up.powi(2), plus(-1).c_up.powi(2), closed(1)?, closed(-1)?]);

    let mut out = PointResult { tables: vec![eig, noflip], ..Default::default() };
    out.summary.insert("x".into(), json!(x));
    out.summary.insert("energy_unit".into(), json!(unit));
    out.summary.insert("a_sign".into(), json!(a_sign));
    for (level, key) in [(0.9, "x_noflip_0.9"), (0.99, "x_noflip_0.99")] {
        out.summary.insert(
            key.into(),
            json!({ "1/2": no_flip_crossing(1, level, a_sign)?, "-1/2": no_flip_crossing(-1, level, a_sign)? }),
        );
    }
    Ok(out)
}

fn mode_label(m: Mode3) -> String {
    format!("{}_{}_{}", m.0[0], m.0[1], m.0[2])
}

fn run_evolve(p: &EvolveParams) -> Result<PointResult> {
    // 1d configs already carry eta = 0 on y and z
    let cfg = LambDickeConfig::new(p.eta, p.nu, p.dipole, 1.0)?;
    let n_max = match p.n_max {
        NMax::Fixed(n) => n,
        NMax::Auto { tolerance } => choose_n_max(&cfg, tolerance)?,
    };
    let basis = build_basis(n_max, p.particles, &[0, 1])?;
    let options = AssembleOptions { quadrature: p.quadrature, dipole: p.dipole_dipole.clone(), excited_dispersion: Vec::new() };
    let bundle = assemble(&cfg, &basis, &options)?;
    let rho0 = if p.particles == 2 {
        DensityMatrix::blocked_pair(&basis)?
    } else {
        DensityMatrix::pure(&basis, &[(vec![(Internal::E, Mode3::GROUND)], Complex64::new(1.0, 0.0))])?
    };
    let initial_rate = excited_decay_rate(&rho0, &bundle, &basis);
    let times: Vec<f64> = (0..=p.snapshots).map(|k| p.t_final * k as f64 / p.snapshots as f64).collect();
    let traj = evolve(&rho0, &bundle, &times, &p.step_control)?;

    let modes = basis.motional_modes().to_vec();
    let mut columns = cols(&["t", "trace", "p_excited", "min_eigenvalue", "sector_0", "sector_1"]);
    columns.extend(modes.iter().map(|&m| format!("g_{}", mode_label(m))));
    let mut table = Table::new("trajectory", columns);
    for (rho, min_eig) in traj.snapshots.iter().zip(&traj.min_eigenvalues) {
        let obs = observables(rho, &basis);
        let mut row = vec![
            obs.time,
            obs.trace,
            obs.p_excited,
            *min_eig,
            obs.sector_populations.get(&0).copied().unwrap_or(0.0),
            obs.sector_populations.get(&1).copied().unwrap_or(0.0),
        ];
        row.extend(modes.iter().map(|&m| obs.motional_distribution.get(&(Internal::G, m)).copied().unwrap_or(0.0)));
        table.rows.push(row);
    }

    let mut out = PointResult { tables: vec![table], ..Default::default() };
    let final_trace = traj.snapshots.last().map(|r| r.trace()).unwrap_or(1.0);
    let md = &bundle.metadata;
    out.summary.insert("n_max".into(), json!(n_max));
    out.summary.insert("initial_decay_rate".into(), json!(initial_rate));
    out.summary.insert("final_trace".into(), json!(final_trace));
    out.summary.insert("accepted_steps".into(), json!(traj.accepted_steps));
    out.summary.insert("rejected_steps".into(), json!(traj.rejected_steps));
    out.summary.insert("bundle".into(), serde_json::to_value(md)?);
    if 1.0 - final_trace > TRACE_LOSS_WARN {
        out.warnings.push(format!(
            "trace fell to {final_trace} (loss above {TRACE_LOSS_WARN:e}); raise n_max, current truncation deficit {:e}",
            md.truncation_deficit
        ));
    }
    if let Some(s) = md.dipole_sensitivity.filter(|&s| s > DIPOLE_SENSITIVITY_WARN) {
        out.warnings.push(format!("dipole-dipole cutoff sensitivity {s} Gamma exceeds {DIPOLE_SENSITIVITY_WARN} Gamma"));
    }
    Ok(out)
}

fn run_photon(p: &PhotonParams) -> Result<PointResult> {
    let s = PhotonScenario::new(p.eta, p.nu, p.alpha, 1.0, p.rate_model)?;
    let init = SuperpositionInit::new(p.mu0, p.mu1)?;
    let start = s.regime_start(&init);
    let t = p.t.unwrap_or(start);
    let per_beat = |n: usize| (n - 1) as f64 * std::f64::consts::PI / (p.nu * t);
    let points = p.points.unwrap_or_else(|| ((16.0 * p.nu * t / std::f64::consts::PI).ceil() as usize + 1).max(2001));
    let profile = profile_along_axis(&s, &init, t, points)?;
    let mut table = Table::new("profile", cols(&["x", "I_total", "I_psi1", "I_sum0", "I_sum1", "I_cross"]));
    for smp in &profile.samples {
        let c = smp.components;
        table.rows.push(vec![smp.x, smp.intensity, c.psi1, c.sum0, c.sum1, c.cross]);
    }
    let (g0, g1) = s.rates();
    let back = profile.samples.first().map(|s| s.intensity).unwrap_or(0.0);
    let front = profile.samples.last().map(|s| s.intensity).unwrap_or(0.0);
    let mut out = PointResult { tables: vec![table], warnings: s.warnings(), ..Default::default() };
    if per_beat(points) < 8.0 {
        out.warnings.push(format!(
            "{points} points give {:.1} samples per trap-frequency beat; the profile is aliased",
            per_beat(points)
        ));
    }
    out.summary.insert("gamma0".into(), json!(g0));
    out.summary.insert("gamma1".into(), json!(g1));
    out.summary.insert("t".into(), json!(t));
    out.summary.insert("regime_start".into(), json!(start));
    out.summary.insert("emitted_norm".into(), json!(emitted_norm(&s, &init, t)));
    out.summary.insert("front_minus_ct".into(), json!(back));
    out.summary.insert("front_plus_ct".into(), json!(front));
    out.summary.insert("front_ratio".into(), json!(if front > 0.0 { back / front } else { f64::NAN }));
    Ok(out)
}

fn run_dipole_dipole(p: &DipoleDipoleParams) -> Result<PointResult> {
    let cfg = LambDickeConfig::new(p.eta, p.nu, p.dipole, 1.0)?;
    let entries: Vec<([Mode3; 4], f64, f64)> = match &p.elements {
        ElementSet::List(list) => list
            .iter()
            .map(|q| dipole_dipole_element(q[0], q[1], q[2], q[3], &cfg, &p.spec).map(|e| (*q, e.value, e.sensitivity)))
            .collect::<Result<_>>()?,
        ElementSet::AllUpTo(n_max) => {
            let basis = build_basis(*n_max, 1, &[0])?;
            let table = DipoleTable::build(basis.motional_modes(), &cfg, &p.spec)?;
            table.entries().into_iter().map(|(k, e)| ([k.0, k.1, k.2, k.3], e.value, e.sensitivity)).collect()
        }
    };
    let mut columns = Vec::new();
    for name in ["np", "mp", "m", "n"] {
        for axis in ["x", "y", "z"] {
            columns.push(format!("{name}_{axis}"));
        }
    }
    columns.extend(cols(&["value", "sensitivity"]));
    let mut table = Table::new("elements", columns);
    let mut worst: f64 = 0.0;
    for (q, value, sens) in &entries {
        let mut row: Vec<f64> = q.iter().flat_map(|m| m.0.map(|v| v as f64)).collect();
        row.extend([*value, *sens]);
        table.rows.push(row);
        worst = worst.max(*sens);
    }
    let mut out = PointResult { tables: vec![table], ..Default::default() };
    out.summary.insert("elements".into(), json!(entries.len()));
    out.summary.insert("max_sensitivity".into(), json!(worst));
    out.summary.insert("value_unit".into(), json!("Gamma"));
    if worst > DIPOLE_SENSITIVITY_WARN {
        out.warnings.push(format!("cutoff sensitivity {worst} Gamma exceeds {DIPOLE_SENSITIVITY_WARN} Gamma"));
    }
    Ok(out)
}

fn run_quench(p: &QuenchParams) -> Result<PointResult> {
    let q = p.to_config();
    let rate = quench_rate(&q)?;
    let factor = total_branch_factor(&q);
    let t_final = p.t_final.unwrap_or(if rate.rate * factor > 0.0 { 5.0 / (rate.rate * factor) } else { 1.0 });
    let mut table = Table::new("populations", cols(&["t", "p_e_up", "p_g_up", "p_g_dn"]));
    for k in 0..p.points {
        let t = t_final * k as f64 / (p.points - 1) as f64;
        let pop = rate_equation_solution(&q, t)?;
        table.rows.push(vec![t, pop.p_e_up, pop.p_g_up, pop.p_g_dn]);
    }
    let mut out = PointResult { tables: vec![table], ..Default::default() };
    out.summary.insert("quench_rate_per_s".into(), json!(rate.rate));
    out.summary.insert("branch_factor".into(), json!(factor));
    out.summary.insert("loss_rate_per_s".into(), json!(rate.rate * factor));
    out.summary.insert("t_final_s".into(), json!(t_final));
    if rate.adiabatic_warning {
        out.warnings.push(format!(
            "delta_dr / gamma_1p = {} < 5: adiabatic elimination is not reliable",
            q.delta_dr / q.gamma_1p
        ));
    }
    Ok(out)
}

/// Numerical controls of a parameter point, as recorded in the manifest.
pub fn numerical_controls(params: &Params) -> Value {
    match params {
        Params::Rates(p) => json!({ "quadrature": p.quadrature }),
        Params::Zeeman(_) => json!({ "diagonalization": "2x2 symmetric blocks" }),
        Params::Evolve(p) => json!({
            "n_max": p.n_max,
            "step_control": p.step_control,
            "quadrature": p.quadrature,
            "dipole_dipole": p.dipole_dipole,
        }),
        Params::Photon(p) => json!({ "rate_model": p.rate_model, "points": p.points, "emitted_norm_rule": [48, 96] }),
        Params::DipoleDipole(p) => json!({ "dipole_dipole": p.spec }),
        Params::Quench(p) => json!({ "points": p.points }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    fn run(text: &str) -> PointResult {
        let c = parse_config(text).unwrap();
        run_point(&c.params_at(None).unwrap()).unwrap()
    }

    #[test]
    fn quench_rate_value() {
        let r = run(
            r#"{"schema_version": 1, "scenario": "quench",
                "parameters": {"omega_dr": "4e6 rad/s", "delta_dr": "290 MHz", "gamma_1p": "29 MHz", "eta": 0.28, "eta_dr": 0.09},
                "output": {"format": "csv", "path": "q"}}"#,
        );
        let rate = r.summary["quench_rate_per_s"].as_f64().unwrap();
        assert!((rate - 219.52).abs() < 0.01, "{rate}");
        let pops = &r.tables[0];
        let last = pops.rows.last().unwrap();
        assert!((last[1] + last[2] + last[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates_1d_row() {
        let r = run(
            r#"{"schema_version": 1, "scenario": "rates", "parameters": {"eta": 0.1},
                "output": {"format": "csv", "path": "r"}}"#,
        );
        let row = &r.tables[0].rows[0];
        assert!((row[2] - 0.004).abs() < 1e-15);
        assert!(row[3] < 0.02, "{row:?}");
    }

    #[test]
    fn zeeman_columns_and_closed_form() {
        let r = run(
            r#"{"schema_version": 1, "scenario": "zeeman", "parameters": {"x": 0.7},
                "output": {"format": "csv", "path": "z"}}"#,
        );
        assert_eq!(r.tables[0].columns.len(), 7);
        let row = &r.tables[1].rows[0];
        assert!((row[1] - row[3]).abs() < 1e-12 && (row[2] - row[4]).abs() < 1e-12, "{row:?}");
    }

    #[test]
    fn quench_adiabatic_warning() {
        let r = run(
            r#"{"schema_version": 1, "scenario": "quench",
                "parameters": {"omega_dr": "4e6 rad/s", "delta_dr": "29 MHz", "gamma_1p": "29 MHz", "eta": 0.28, "eta_dr": 0.09},
                "output": {"format": "csv", "path": "q"}}"#,
        );
        assert_eq!(r.warnings.len(), 1);
    }
}

//! Hyperfine and Zeeman structure of a `J = 1`, `I = 1/2` manifold.
//!
//! The basis is `|m_J, m_I>` ordered as
//! `(1,+), (1,-), (0,+), (0,-), (-1,+), (-1,-)`. The Hamiltonian is
//! `A I.J + g_J mu_B B J_z - g_I mu_N B I_z`, block diagonal in
//! `m_F = m_J + m_I`. Inside each mixed block the "up" component is
//! `|m_F - 1/2, +1/2>` and the "down" component is `|m_F + 1/2, -1/2>`.

use nalgebra::{Matrix2, Matrix6};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bohr magneton over Planck's constant, MHz/T.
pub const MU_B_MHZ_PER_T: f64 = 13996.24493;
/// Nuclear magneton over Planck's constant, MHz/T.
pub const MU_N_MHZ_PER_T: f64 = 7.6225932;

/// `(m_J, 2 m_I)` for each basis index.
pub const BASIS: [(i32, i32); 6] = [(1, 1), (1, -1), (0, 1), (0, -1), (-1, 1), (-1, -1)];

/// Magnetic field, either physical or as the dimensionless `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    /// `b_field` in tesla; `a_hfs` is then in MHz.
    Physical { g_j: f64, g_i: f64, b_field: f64 },
    /// `x = 2 (g_J mu_B + g_I mu_N) B / (3 |A|)`. The field is carried by
    /// the electronic term alone.
    Dimensionless { x: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperfineParams {
    pub a_hfs: f64,
    pub field: Field,
}

impl HyperfineParams {
    pub fn dimensionless(a_hfs: f64, x: f64) -> Result<Self> {
        let p = HyperfineParams { a_hfs, field: Field::Dimensionless { x } };
        p.validate()?;
        Ok(p)
    }

    pub fn physical(a_hfs_mhz: f64, g_j: f64, g_i: f64, b_field: f64) -> Result<Self> {
        let p = HyperfineParams { a_hfs: a_hfs_mhz, field: Field::Physical { g_j, g_i, b_field } };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_hfs.is_finite() && self.a_hfs != 0.0) {
            return Err(Error::param("a_hfs", "must be finite and nonzero"));
        }
        match self.field {
            Field::Physical { g_j, g_i, b_field } => {
                if !(g_j.is_finite() && g_i.is_finite()) {
                    return Err(Error::param("g_factor", "must be finite"));
                }
                if !(b_field.is_finite() && b_field >= 0.0) {
                    return Err(Error::param("b_field", format!("{b_field} must be >= 0")));
                }
            }
            Field::Dimensionless { x } => {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::param("x", format!("{x} must be >= 0")));
                }
            }
        }
        Ok(())
    }

    pub fn x(&self) -> f64 {
        match self.field {
            Field::Physical { g_j, g_i, b_field } => {
                2.0 * (g_j * MU_B_MHZ_PER_T + g_i * MU_N_MHZ_PER_T) * b_field / (3.0 * self.a_hfs.abs())
            }
            Field::Dimensionless { x } => x,
        }
    }

    /// Electronic and nuclear Zeeman energies `(g_J mu_B B, g_I mu_N B)`.
    fn zeeman_energies(&self) -> (f64, f64) {
        match self.field {
            Field::Physical { g_j, g_i, b_field } => (g_j * MU_B_MHZ_PER_T * b_field, g_i * MU_N_MHZ_PER_T * b_field),
            Field::Dimensionless { x } => (1.5 * x * self.a_hfs.abs(), 0.0),
        }
    }
}

/// Species constants for physical-field runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConstants {
    pub name: String,
    pub a_hfs_mhz: f64,
    pub g_j: f64,
    pub g_i: f64,
    pub source: String,
}

pub fn build_hamiltonian(p: &HyperfineParams) -> Matrix6<f64> {
    let a = p.a_hfs;
    let (ej, en) = p.zeeman_energies();
    let mut h = Matrix6::zeros();
    for (i, &(mj, mi2)) in BASIS.iter().enumerate() {
        let mi = mi2 as f64 / 2.0;
        let mjf = mj as f64;
        h[(i, i)] = a * mjf * mi + ej * mjf - en * mi;
    }
    // (I+ J- + I- J+)/2 couples |m_J, -1/2> and |m_J - 1, +1/2>
    for (i, &(mj, mi2)) in BASIS.iter().enumerate() {
        if mi2 == -1 && mj > -1 {
            let jm = (2.0 - (mj * (mj - 1)) as f64).sqrt();
            let k = BASIS.iter().position(|&s| s == (mj - 1, 1)).unwrap();
            h[(i, k)] = 0.5 * a * jm;
            h[(k, i)] = 0.5 * a * jm;
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Connects to the nuclear-spin-up product state at large field.
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeemanState {
    /// Twice `m_F`.
    pub two_m_f: i32,
    pub branch: Branch,
    pub energy: f64,
    pub c_up: f64,
    pub c_dn: f64,
}

impl ZeemanState {
    pub fn m_f(&self) -> f64 {
        self.two_m_f as f64 / 2.0
    }
}

fn index_of(mj: i32, mi2: i32) -> usize {
    BASIS.iter().position(|&s| s == (mj, mi2)).expect("basis state")
}

/// Eigenstates ordered by `m_F = 3/2, 1/2, -1/2, -3/2`, `+` before `-`.
///
/// Each mixed block is diagonalized numerically. The lower eigenvalue of a
/// block carries the `+` label for either sign of `A`: blocks never cross
/// internally, so this is the adiabatic continuation of the large-field
/// product state with nuclear spin up.
pub fn eigensystem(p: &HyperfineParams) -> Vec<ZeemanState> {
    let h = build_hamiltonian(p);
    let mut out = Vec::with_capacity(6);
    let top = index_of(1, 1);
    out.push(ZeemanState { two_m_f: 3, branch: Branch::Plus, energy: h[(top, top)], c_up: 1.0, c_dn: 0.0 });
    for two_m_f in [1, -1] {
        let up = index_of((two_m_f - 1) / 2, 1);
        let dn = index_of((two_m_f + 1) / 2, -1);
        let block = Matrix2::new(h[(up, up)], h[(up, dn)], h[(dn, up)], h[(dn, dn)]);
        let eig = block.symmetric_eigen();
        let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        for (col, branch) in [(lo, Branch::Plus), (hi, Branch::Minus)] {
            let v = eig.eigenvectors.column(col);
            let norm = v.norm();
            out.push(ZeemanState {
                two_m_f,
                branch,
                energy: eig.eigenvalues[col],
                c_up: (v[0] / norm).abs(),
                c_dn: (v[1] / norm).abs(),
            });
        }
    }
    let bottom = index_of(-1, -1);
    out.push(ZeemanState { two_m_f: -3, branch: Branch::Minus, energy: h[(bottom, bottom)], c_up: 0.0, c_dn: 1.0 });
    out
}

/// Closed-form `(c_up, c_dn)` of the `+` state in block `two_m_f / 2` for
/// negative `A`:
///
/// `c_up^2 = (1 + (x + 2 m_F / 3) / sqrt(x^2 + 4 m_F x / 3 + 1)) / 2`.
///
/// The pure blocks give `(1, 0)` for `m_F = 3/2` and `(0, 1)` for
/// `m_F = -3/2`.
pub fn mixing_coefficients(two_m_f: i32, x: f64) -> Result<(f64, f64)> {
    mixing_coefficients_signed(two_m_f, x, -1.0)
}

/// As [`mixing_coefficients`] for either sign of `A`; positive `A` flips
/// `m_F -> -m_F` inside the closed form.
pub fn mixing_coefficients_signed(two_m_f: i32, x: f64, a_sign: f64) -> Result<(f64, f64)> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::param("x", format!("{x} must be >= 0")));
    }
    match two_m_f {
        3 => Ok((1.0, 0.0)),
        -3 => Ok((0.0, 1.0)),
        1 | -1 => {
            let m = if a_sign < 0.0 { two_m_f as f64 / 2.0 } else { -(two_m_f as f64) / 2.0 };
            let root = (x * x + 4.0 / 3.0 * m * x + 1.0).sqrt();
            let ratio = (x + 2.0 / 3.0 * m) / root;
            let up_sq = 0.5 * (1.0 + ratio);
            let dn_sq = 0.5 * (1.0 - ratio);
            Ok((up_sq.sqrt(), dn_sq.sqrt()))
        }
        _ => Err(Error::param("m_f", format!("2 m_F = {two_m_f} is not in {{-3, -1, 1, 3}}"))),
    }
}

/// `|c_dn|^2` of the `+` state: probability that the decay flips the nuclear
/// spin. `1 - spin_flip_probability` is the no-flip curve.
pub fn spin_flip_probability(two_m_f: i32, x: f64) -> Result<f64> {
    let (_, dn) = mixing_coefficients(two_m_f, x)?;
    Ok(dn * dn)
}

/// Field `x` at which the no-flip probability of a mixed block reaches
/// `level`, by bisection on `[0, x_max]`.
pub fn no_flip_crossing(two_m_f: i32, level: f64, a_sign: f64) -> Result<f64> {
    let no_flip = |x: f64| -> Result<f64> {
        let (up, _) = mixing_coefficients_signed(two_m_f, x, a_sign)?;
        Ok(up * up)
    };
    let (mut lo, mut hi) = (0.0, 1e6);
    if no_flip(lo)? >= level {
        return Ok(0.0);
    }
    if no_flip(hi)? < level {
        return Err(Error::param("level", format!("{level} is not reached for x <= {hi}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if no_flip(mid)? >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn zero_field_hyperfine_levels() {
        for a in [-1.0, 0.7] {
            let p = HyperfineParams::dimensionless(a, 0.0).unwrap();
            let mut ev: Vec<f64> = build_hamiltonian(&p).symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let mut expect = vec![-a, -a, a / 2.0, a / 2.0, a / 2.0, a / 2.0];
            expect.sort_by(f64::total_cmp);
            for (x, e) in ev.iter().zip(expect) {
                assert!((x - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_elements() {
        let p = HyperfineParams::physical(-213.0, 1.035, 0.987, 0.01).unwrap();
        let h = build_hamiltonian(&p);
        let off = h[(index_of(1, -1), index_of(0, 1))];
        assert!((off - (-213.0) / 2f64.sqrt()).abs() < 1e-12);
        let expect = -213.0 / 2.0 + 1.035 * MU_B_MHZ_PER_T * 0.01 - 0.987 * MU_N_MHZ_PER_T * 0.01 / 2.0;
        assert!((h[(0, 0)] - expect).abs() < 1e-12);
        assert!((h - h.transpose()).norm() == 0.0);
    }

    #[test]
    fn block_structure() {
        let p = HyperfineParams::dimensionless(-1.0, 0.8).unwrap();
        let h = build_hamiltonian(&p);
        for i in 0..6 {
            for k in 0..6 {
                let mf_i = 2 * BASIS[i].0 + BASIS[i].1;
                let mf_k = 2 * BASIS[k].0 + BASIS[k].1;
                if mf_i != mf_k {
                    assert_eq!(h[(i, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_numeric() {
        for a in [-1.0, 2.5] {
            for x in log_grid(121) {
                let p = HyperfineParams::dimensionless(a, x).unwrap();
                for s in eigensystem(&p) {
                    assert!((s.c_up * s.c_up + s.c_dn * s.c_dn - 1.0).abs() < 1e-12);
                    if s.branch == Branch::Plus {
                        let (up, dn) = mixing_coefficients_signed(s.two_m_f, x, a).unwrap();
                        assert!((up - s.c_up).abs() < 1e-10 && (dn - s.c_dn).abs() < 1e-10, "a={a} x={x} {s:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let (up, _) = mixing_coefficients(1, 0.0).unwrap();
        assert!((up - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((spin_flip_probability(1, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(spin_flip_probability(3, 17.0).unwrap(), 0.0);
        let (up, _) = mixing_coefficients(-1, 2.3).unwrap();
        assert!((up * up - 0.95087).abs() < 1e-5);
        let (up, _) = mixing_coefficients(-1, 1e6).unwrap();
        assert!(1.0 - up * up < 1e-6);
    }

    #[test]
    fn crossing_near_2_3() {
        let x = no_flip_crossing(-1, 0.95, -1.0).unwrap();
        assert!((x - 2.3).abs() < 0.05, "{x}");
        // m_F = +1/2 starts at 2/3 and crosses earlier
        assert!(no_flip_crossing(1, 0.95, -1.0).unwrap() < x);
    }

    #[test]
    fn trace_invariance_and_continuity() {
        let mut prev: Option<Vec<ZeemanState>> = None;
        for x in log_grid(400) {
            let p = HyperfineParams::dimensionless(-1.0, x).unwrap();
            let h = build_hamiltonian(&p);
            let states = eigensystem(&p);
            let sum: f64 = states.iter().map(|s| s.energy).sum();
            assert!((sum - h.trace()).abs() < 1e-12 * h.abs().max().max(1.0));
            if let Some(prev) = &prev {
                for (a, b) in prev.iter().zip(&states) {
                    assert_eq!((a.two_m_f, a.branch), (b.two_m_f, b.branch));
                    assert!((a.c_up - b.c_up).abs() < 0.05);
                }
            }
            prev = Some(states);
        }
    }

    #[test]
    fn labels_stable_under_step_halving() {
        // the + state is the lower one in each block at every field
        for x in log_grid(200) {
            for dx in [0.0, 1e-3, 5e-4] {
                let s = eigensystem(&HyperfineParams::dimensionless(-1.0, x + dx).unwrap());
                assert!(s[1].energy < s[2].energy && s[3].energy < s[4].energy);
            }
        }
    }

    #[test]
    fn physical_matches_dimensionless() {
        let p = HyperfineParams::physical(-213.2, 1.035, 0.987, 0.05).unwrap();
        let x = p.x();
        let phys = eigensystem(&p);
        let dimless = eigensystem(&HyperfineParams::dimensionless(-1.0, x).unwrap());
        for (a, b) in phys.iter().zip(&dimless) {
            assert!((a.c_up - b.c_up).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn no_flip_monotone(x in 0.0f64..50.0, dx in 0.0f64..5.0) {
            for m in [1, -1] {
                let a = 1.0 - spin_flip_probability(m, x).unwrap();
                let b = 1.0 - spin_flip_probability(m, x + dx).unwrap();
                prop_assert!(b >= a - 1e-15);
            }
        }
    }
}

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::assemble::SuperoperatorBundle;
use super::basis::{Internal, TwoFermionBasis};
use crate::recoil::Mode3;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub data: DMatrix<Complex64>,
    pub time: f64,
}

impl DensityMatrix {
    /// Pure state `sum_k a_k prod c^dagger |vac>` from lists of occupied
    /// `(internal, level)` pairs, normalized on construction.
    pub fn pure(basis: &TwoFermionBasis, components: &[(Vec<(Internal, Mode3)>, Complex64)]) -> Result<Self> {
        let mut psi = nalgebra::DVector::<Complex64>::zeros(basis.len());
        for (occupied, amp) in components {
            let creators: Vec<usize> = occupied
                .iter()
                .map(|&(b, n)| basis.mode(b, n).ok_or_else(|| Error::param("state", format!("level {n} outside the basis"))))
                .collect::<Result<_>>()?;
            let (i, sign) = basis
                .from_creators(&creators)
                .ok_or_else(|| Error::param("state", "occupation not in the basis or doubly occupied"))?;
            psi[i] += amp * sign;
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        psi /= Complex64::new(norm, 0.0);
        Ok(DensityMatrix { data: &psi * psi.adjoint(), time: 0.0 })
    }

    /// `c_{g0}^dagger c_{e0}^dagger |vac>`.
    pub fn blocked_pair(basis: &TwoFermionBasis) -> Result<Self> {
        Self::pure(basis, &[(vec![(Internal::G, Mode3::GROUND), (Internal::E, Mode3::GROUND)], Complex64::new(1.0, 0.0))])
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Adaptive step control for [`evolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Abort when a snapshot eigenvalue falls below `-positivity_tol`.
    pub positivity_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-8, atol: 1e-10, dt_initial: 1e-2, dt_min: 1e-12, dt_max: 10.0, positivity_tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<DensityMatrix>,
    pub min_eigenvalues: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

fn hermitize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for k in i + 1..n {
            let v = (m[(i, k)] + m[(k, i)].conj()) * 0.5;
            m[(i, k)] = v;
            m[(k, i)] = v.conj();
        }
    }
}

/// Integrates the master equation and returns snapshots at `times`
/// (ascending, not before `rho0.time`).
pub fn evolve(rho0: &DensityMatrix, bundle: &SuperoperatorBundle, times: &[f64], ctrl: &StepControl) -> Result<Trajectory> {
    if rho0.data.nrows() != bundle.dim {
        return Err(Error::param("rho0", "dimension does not match the bundle"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < rho0.time) {
        return Err(Error::param("times", "snapshot times must be ascending and >= the initial time"));
    }
    let mut t = rho0.time;
    let mut y = rho0.data.clone();
    let mut dt = ctrl.dt_initial.min(ctrl.dt_max);
    let mut k1 = bundle.rhs(&y);
    let mut out = Trajectory { snapshots: Vec::new(), min_eigenvalues: Vec::new(), accepted_steps: 0, rejected_steps: 0 };

    for &target in times {
        while t < target {
            let h = dt.min(target - t);
            let last = h >= target - t;
            let mut k = Vec::with_capacity(7);
            k.push(k1.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (r, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        ys += &k[r] * Complex64::new(h * a, 0.0);
                    }
                }
                k.push(bundle.rhs(&ys));
            }
            let mut y5 = y.clone();
            let mut err = DMatrix::<Complex64>::zeros(bundle.dim, bundle.dim);
            for s in 0..7 {
                let b5 = A[6].get(s).copied().unwrap_or(0.0);
                if b5 != 0.0 {
                    y5 += &k[s] * Complex64::new(h * b5, 0.0);
                }
                let diff = b5 - B4[s];
                if diff != 0.0 {
                    err += &k[s] * Complex64::new(h * diff, 0.0);
                }
            }
            let scale = ctrl.atol + ctrl.rtol * y.norm().max(y5.norm());
            let e = err.norm() / scale;
            if e <= 1.0 {
                t = if last { target } else { t + h };
                y = y5;
                hermitize(&mut y);
                k1 = k.swap_remove(6);
                out.accepted_steps += 1;
            } else {
                out.rejected_steps += 1;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            if e <= 1.0 && last {
                dt = dt.max(h * factor).min(ctrl.dt_max);
            } else {
                dt = (h * factor).min(ctrl.dt_max);
            }
            if dt < ctrl.dt_min {
                return Err(Error::StepUnderflow { time: t, dt });
            }
        }
        let snap = DensityMatrix { data: y.clone(), time: target };
        let min_eig = snap.min_eigenvalue();
        if min_eig < -ctrl.positivity_tol {
            return Err(Error::Positivity { time: target, min_eigenvalue: min_eig });
        }
        out.min_eigenvalues.push(min_eig);
        out.snapshots.push(snap);
    }
    Ok(out)
}

use std::collections::BTreeMap;

use super::basis::{Internal, TwoFermionBasis};
use super::evolve::DensityMatrix;
use crate::recoil::Mode3;

#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub time: f64,
    pub trace: f64,
    /// `sum_n <c_{en}^dagger c_{en}>`
    pub p_excited: f64,
    /// `<c_{bn}^dagger c_{bn}>` for every occupied `(b, n)`.
    pub motional_distribution: BTreeMap<(Internal, Mode3), f64>,
    /// Trace restricted to states with the given number of excited atoms.
    pub sector_populations: BTreeMap<usize, f64>,
}

pub fn observables(rho: &DensityMatrix, basis: &TwoFermionBasis) -> Observables {
    let mut p_excited = 0.0;
    let mut motional_distribution = BTreeMap::new();
    let mut sector_populations = BTreeMap::new();
    for i in 0..basis.len() {
        let p = rho.data[(i, i)].re;
        p_excited += p * basis.excitation(i) as f64;
        *sector_populations.entry(basis.excitation(i)).or_insert(0.0) += p;
        if p != 0.0 {
            for &mode in basis.state(i) {
                *motional_distribution.entry(basis.describe(mode)).or_insert(0.0) += p;
            }
        }
    }
    Observables { time: rho.time, trace: rho.trace(), p_excited, motional_distribution, sector_populations }
}

/// Ground-state occupation of level `n`.
pub fn ground_occupation(obs: &Observables, n: Mode3) -> f64 {
    obs.motional_distribution.get(&(Internal::G, n)).copied().unwrap_or(0.0)
}

//! Master equation of two identical fermions sharing one trap, one of them
//! electronically excited.
//!
//! ```text
//! d rho / dt = -i (H_eff rho - rho H_eff^dagger) + Gamma sum_{cc'} K_{cc'} A_c rho A_c'^dagger
//! ```
//!
//! with decay channels `A_c = c_{g m}^dagger c_{e n}` and the recoil kernel
//! `K_{(mn),(m'n')} = int dOmega N(k) R_{mn}(k) conj(R_{m'n'}(k))`.

mod assemble;
mod basis;
mod dipole;
mod evolve;
mod observables;

pub use assemble::{
    assemble, choose_n_max, completeness_deficit, recycling_kernel, AssembleOptions, BundleMetadata, SparseMatrix,
    SuperoperatorBundle, MAX_RECYCLING_ENTRIES,
};
pub use basis::{build_basis, Internal, TwoFermionBasis, MAX_SINGLE_PARTICLE_MODES};
pub use dipole::{dipole_dipole_element, dipole_parity_forbidden, DipoleDipoleSpec, DipoleElement, DipoleTable};
pub use evolve::{evolve, DensityMatrix, StepControl, Trajectory};
pub use observables::{ground_occupation, observables, Observables};

/// `-d P_e / dt` at the current state.
pub fn excited_decay_rate(rho: &DensityMatrix, bundle: &SuperoperatorBundle, basis: &TwoFermionBasis) -> f64 {
    let d = bundle.rhs(&rho.data);
    -(0..basis.len()).map(|i| d[(i, i)].re * basis.excitation(i) as f64).sum::<f64>()
}

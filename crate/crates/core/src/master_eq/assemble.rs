use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::{Internal, TwoFermionBasis};
use super::dipole::{DipoleDipoleSpec, DipoleTable};
use crate::quadrature::{QuadratureSettings, SphereRule};
use crate::recoil::{axis_tables, dipole_pattern, recoil_element_1d, Direction, LambDickeConfig, Mode3};
use crate::{Error, Result};

/// Refuse to build recycling maps with more entries than this.
pub const MAX_RECYCLING_ENTRIES: usize = 50_000_000;

const PSD_TOL: f64 = 1e-10;

/// Coordinate-format complex matrix with merged, row-major sorted entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseMatrix {
    fn from_map(dim: usize, map: BTreeMap<(usize, usize), Complex64>) -> Self {
        let entries = map.into_iter().filter(|(_, v)| *v != Complex64::new(0.0, 0.0)).map(|((i, j), v)| (i, j, v)).collect();
        SparseMatrix { dim, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries
            .binary_search_by(|(a, b, _)| (*a, *b).cmp(&(i, j)))
            .map_or(Complex64::new(0.0, 0.0), |k| self.entries[k].2)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries.iter().all(|&(i, j, v)| (v - self.get(j, i).conj()).norm() <= tol)
    }

    fn add(&self, other: &SparseMatrix) -> SparseMatrix {
        let mut map = BTreeMap::new();
        for &(i, j, v) in self.entries.iter().chain(&other.entries) {
            *map.entry((i, j)).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
        SparseMatrix::from_map(self.dim, map)
    }

    /// `out += rho * self^dagger`
    pub(crate) fn right_adjoint_into(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        for &(k, j, h) in &self.entries {
            let hc = h.conj();
            for i in 0..self.dim {
                out[(i, k)] += rho[(i, j)] * hc;
            }
        }
    }
}

/// `A_c = c_{g m}^dagger c_{e n}` stored as one optional `(column, sign)`
/// per row.
#[derive(Clone, Debug)]
struct ChannelOp {
    by_row: Vec<Option<(usize, f64)>>,
}

impl ChannelOp {
    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.by_row.iter().enumerate().filter_map(|(i, e)| e.map(|(j, s)| (i, j, s)))
    }
}

/// Numerical settings recorded next to every master-equation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub n_max: [usize; 3],
    pub basis_size: usize,
    pub channels: usize,
    pub quadrature: QuadratureSettings,
    /// `1 - sum_{m <= n_max} |R_{m0}(eta_j)|^2` combined over axes.
    pub truncation_deficit: f64,
    /// Largest angular-averaged probability that a decay from a kept
    /// excited level leaves the truncated space.
    pub max_level_loss: f64,
    pub kernel_min_eigenvalue: f64,
    pub dipole_cutoff: Option<f64>,
    pub dipole_sensitivity: Option<f64>,
    pub dipole_elements: usize,
}

/// Effective Hamiltonian and recycling map of the two-fermion master
/// equation, in units of `Gamma`.
#[derive(Clone, Debug)]
pub struct SuperoperatorBundle {
    pub dim: usize,
    /// Hermitian part: trap energy, optional excited-level block and the
    /// dipole-dipole interaction.
    pub h_eff0: SparseMatrix,
    /// Anti-hermitian part `-(i/2) Gamma (...)`.
    pub h_eff1: SparseMatrix,
    /// Orthogonal jump operators and their rates.
    pub jump_channels: Vec<(SparseMatrix, f64)>,
    pub metadata: BundleMetadata,
    h_eff: SparseMatrix,
    /// `(row-major output index, row-major input index, coefficient)`.
    recycling: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub quadrature: QuadratureSettings,
    pub dipole: Option<DipoleDipoleSpec>,
    /// Optional hermitian block `T_{n'n} c_{e n'}^dagger c_{e n}` (units of `Gamma`).
    pub excited_dispersion: Vec<(Mode3, Mode3, f64)>,
}

/// Kernel `K_{(mn),(m'n')} = int dOmega N R_{mn} conj(R_{m'n'})` over the
/// channels `(m, n)` of the motional truncation, ordered `m * M + n`.
pub fn recycling_kernel(modes: &[Mode3], n_max: [usize; 3], cfg: &LambDickeConfig, settings: &QuadratureSettings) -> Result<DMatrix<f64>> {
    let with_rule = |rule: &SphereRule| -> Result<DMatrix<Complex64>> {
        let m = modes.len();
        let mut v = DMatrix::<Complex64>::zeros(m * m, rule.nodes.len());
        for (k, node) in rule.nodes.iter().enumerate() {
            let t = axis_tables(node.dir, cfg.eta, n_max)?;
            let w = (node.weight * dipole_pattern(Direction(node.dir), cfg.dipole)).sqrt();
            for (a, ma) in modes.iter().enumerate() {
                for (b, nb) in modes.iter().enumerate() {
                    let r = t[0][ma.0[0]][nb.0[0]] * t[1][ma.0[1]][nb.0[1]] * t[2][ma.0[2]][nb.0[2]];
                    v[(a * m + b, k)] = r * w;
                }
            }
        }
        Ok(&v * v.adjoint())
    };
    let rule = settings.rule();
    let coarse = with_rule(&rule)?;
    let fine = with_rule(&rule.doubled())?;
    let scale = fine.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-4);
    let est = (&fine - &coarse).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let imag = fine.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if est > settings.tolerance * scale + 1e-15 {
        return Err(Error::Quadrature { estimate: est, tolerance: settings.tolerance * scale });
    }
    if imag > 1e-10 {
        return Err(Error::Quadrature { estimate: imag, tolerance: 1e-10 });
    }
    Ok(fine.map(|z| z.re))
}

/// `1 - prod_j sum_{m <= n_max_j} |R_{m0}(eta_j)|^2`.
pub fn completeness_deficit(cfg: &LambDickeConfig, n_max: [usize; 3]) -> Result<f64> {
    let mut kept = 1.0;
    for j in 0..3 {
        let mut s = 0.0;
        for m in 0..=n_max[j] {
            s += recoil_element_1d(m, 0, cfg.eta[j])?.norm_sqr();
        }
        kept *= s;
    }
    Ok((1.0 - kept).max(0.0))
}

/// Smallest isotropic-per-active-axis cutoff whose completeness deficit is
/// below `tol`. Axes with `eta = 0` keep cutoff 0.
pub fn choose_n_max(cfg: &LambDickeConfig, tol: f64) -> Result<[usize; 3]> {
    for n in 1..=crate::recoil::LAGUERRE_MAX_DEGREE {
        let n_max: [usize; 3] = std::array::from_fn(|j| if cfg.eta[j] > 0.0 { n } else { 0 });
        if completeness_deficit(cfg, n_max)? < tol {
            return Ok(n_max);
        }
    }
    Err(Error::param("tolerance", format!("{tol} not reachable")))
}

fn channel_ops(basis: &TwoFermionBasis) -> Vec<ChannelOp> {
    let modes = basis.motional_modes();
    let mut ops = Vec::with_capacity(modes.len() * modes.len());
    for &m in modes {
        for &n in modes {
            let g = basis.mode(Internal::G, m).unwrap();
            let e = basis.mode(Internal::E, n).unwrap();
            let mut by_row = vec![None; basis.len()];
            for j in 0..basis.len() {
                if let Some((i, s)) = basis.hop(g, e, j) {
                    by_row[i] = Some((j, s));
                }
            }
            ops.push(ChannelOp { by_row });
        }
    }
    ops
}

fn one_body(basis: &TwoFermionBasis, terms: &[(usize, usize, Complex64)]) -> BTreeMap<(usize, usize), Complex64> {
    let mut map = BTreeMap::new();
    for &(a, b, coef) in terms {
        for j in 0..basis.len() {
            if let Some((i, s)) = basis.hop(a, b, j) {
                *map.entry((i, j)).or_insert(Complex64::new(0.0, 0.0)) += coef * s;
            }
        }
    }
    map
}

/// Builds the effective Hamiltonian and recycling map.
///
/// The loss part is
/// `-(i/2) Gamma [sum_{cc'} K_{cc'} A_c^dagger A_c' + sum_{nn'} (delta - D)_{n n'} c_{en}^dagger c_{en'}]`
/// with `D_{nn'} = sum_m K_{(m n'),(m n)}`. The first term is exactly the
/// trace partner of the recycling term `Gamma sum K_{cc'} A_c rho A_c'^dagger`,
/// so the total decay out of an excited level is `Gamma` and the trace only
/// drifts by the part of the recoil spectrum that falls outside the basis.
pub fn assemble(cfg: &LambDickeConfig, basis: &TwoFermionBasis, options: &AssembleOptions) -> Result<SuperoperatorBundle> {
    let dim = basis.len();
    let modes = basis.motional_modes().to_vec();
    let mm = modes.len();
    let gamma = cfg.gamma;
    let kernel = recycling_kernel(&modes, basis.n_max, cfg, &options.quadrature)?;

    let eig = SymmetricEigen::new(kernel.clone());
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_TOL {
        return Err(Error::KernelNotPsd { eigenvalue: min_eig });
    }

    let ops = channel_ops(basis);
    let nonzero: Vec<(usize, usize, f64)> = (0..mm * mm)
        .flat_map(|c| (0..mm * mm).map(move |d| (c, d)))
        .filter_map(|(c, d)| {
            let k = kernel[(c, d)];
            (k != 0.0 && k.abs() > 1e-300).then_some((c, d, k))
        })
        .collect();

    // Q = sum K_{cc'} A_c^dagger A_c'
    let mut q = BTreeMap::new();
    for &(c, d, k) in &nonzero {
        for (i, j, s2) in ops[d].entries() {
            if let Some((col, s1)) = ops[c].by_row[i] {
                *q.entry((col, j)).or_insert(Complex64::new(0.0, 0.0)) += Complex64::new(k * s1 * s2, 0.0);
            }
        }
    }
    // (delta - D) c_{en}^dagger c_{en'}
    let mut terms = Vec::new();
    let mut max_level_loss: f64 = 0.0;
    for (a, &n) in modes.iter().enumerate() {
        for (b, &np) in modes.iter().enumerate() {
            let d: f64 = (0..mm).map(|m| kernel[(m * mm + b, m * mm + a)]).sum();
            let coef = if a == b { 1.0 - d } else { -d };
            if a == b {
                max_level_loss = max_level_loss.max(coef);
            }
            if coef != 0.0 {
                terms.push((basis.mode(Internal::E, n).unwrap(), basis.mode(Internal::E, np).unwrap(), Complex64::new(coef, 0.0)));
            }
        }
    }
    for (key, v) in one_body(basis, &terms) {
        *q.entry(key).or_insert(Complex64::new(0.0, 0.0)) += v;
    }
    let scale = Complex64::new(0.0, -0.5 * gamma);
    let h_eff1 = SparseMatrix::from_map(dim, q.into_iter().map(|(k, v)| (k, v * scale)).collect());

    // hermitian part
    let mut h0_terms = Vec::new();
    for &n in &modes {
        let energy: f64 = (0..3).map(|j| cfg.nu[j] * n.0[j] as f64).sum();
        if energy != 0.0 {
            for internal in [Internal::G, Internal::E] {
                let p = basis.mode(internal, n).unwrap();
                h0_terms.push((p, p, Complex64::new(energy, 0.0)));
            }
        }
    }
    for &(np, n, t) in &options.excited_dispersion {
        let partner = options.excited_dispersion.iter().find(|(a, b, _)| *a == n && *b == np).map(|x| x.2);
        if partner.map_or(true, |v| (v - t).abs() > 1e-12) {
            return Err(Error::param("excited_dispersion", format!("block is not hermitian at ({np}, {n})")));
        }
        let (Some(a), Some(b)) = (basis.mode(Internal::E, np), basis.mode(Internal::E, n)) else {
            return Err(Error::param("excited_dispersion", format!("level ({np}, {n}) outside the basis")));
        };
        h0_terms.push((a, b, Complex64::new(t, 0.0)));
    }
    let mut h0 = one_body(basis, &h0_terms);
    let mut dipole_meta = (None, None, 0);
    if let Some(spec) = options.dipole.as_ref().filter(|s| s.include) {
        let table = DipoleTable::build(&modes, cfg, spec)?;
        for &np in &modes {
            for &mp in &modes {
                for &m in &modes {
                    for &n in &modes {
                        let l = table.get(np, mp, m, n);
                        if l == 0.0 {
                            continue;
                        }
                        let a = basis.mode(Internal::E, np).unwrap();
                        let b = basis.mode(Internal::G, mp).unwrap();
                        let c = basis.mode(Internal::G, m).unwrap();
                        let d = basis.mode(Internal::E, n).unwrap();
                        for j in 0..dim {
                            if let Some((i, s)) = basis.two_body(a, b, c, d, j) {
                                *h0.entry((i, j)).or_insert(Complex64::new(0.0, 0.0)) -= Complex64::new(l * s, 0.0);
                            }
                        }
                    }
                }
            }
        }
        dipole_meta = (Some(spec.cutoff), Some(table.max_sensitivity()), table.len());
    }
    let h_eff0 = SparseMatrix::from_map(dim, h0);

    // recycling map
    let mut budget = 0usize;
    for &(c, d, _) in &nonzero {
        budget += ops[c].entries().count() * ops[d].entries().count();
    }
    if budget > MAX_RECYCLING_ENTRIES {
        return Err(Error::BasisTooLarge { modes: basis.single_particle_modes(), limit: crate::master_eq::MAX_SINGLE_PARTICLE_MODES });
    }
    let mut rec: HashMap<(usize, usize), f64> = HashMap::new();
    for &(c, d, k) in &nonzero {
        let left: Vec<_> = ops[c].entries().collect();
        let right: Vec<_> = ops[d].entries().collect();
        for &(i, j, s1) in &left {
            for &(kk, l, s2) in &right {
                *rec.entry((i * dim + kk, j * dim + l)).or_insert(0.0) += gamma * k * s1 * s2;
            }
        }
    }
    let mut recycling: Vec<(usize, usize, f64)> = rec.into_iter().filter(|(_, v)| *v != 0.0).map(|((a, b), v)| (a, b, v)).collect();
    recycling.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    // jump operators from the kernel eigenvectors
    let mut jump_channels = Vec::new();
    for (a, &w) in eig.eigenvalues.iter().enumerate() {
        if w <= PSD_TOL {
            continue;
        }
        let mut map = BTreeMap::new();
        for c in 0..mm * mm {
            let coef = eig.eigenvectors[(c, a)];
            if coef == 0.0 {
                continue;
            }
            for (i, j, s) in ops[c].entries() {
                *map.entry((i, j)).or_insert(Complex64::new(0.0, 0.0)) += Complex64::new(coef * s, 0.0);
            }
        }
        jump_channels.push((SparseMatrix::from_map(dim, map), w * gamma));
    }

    let metadata = BundleMetadata {
        n_max: basis.n_max,
        basis_size: dim,
        channels: mm * mm,
        quadrature: options.quadrature.clone(),
        truncation_deficit: completeness_deficit(cfg, basis.n_max)?,
        max_level_loss,
        kernel_min_eigenvalue: min_eig,
        dipole_cutoff: dipole_meta.0,
        dipole_sensitivity: dipole_meta.1,
        dipole_elements: dipole_meta.2,
    };
    let h_eff = h_eff0.add(&h_eff1);
    Ok(SuperoperatorBundle { dim, h_eff0, h_eff1, jump_channels, metadata, h_eff, recycling })
}

impl SuperoperatorBundle {
    /// `d rho / dt = -i (H rho - rho H^dagger) + recycling(rho)`.
    pub fn rhs(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let dim = self.dim;
        let mut y = DMatrix::zeros(dim, dim);
        self.h_eff.right_adjoint_into(rho, &mut y);
        // for hermitian rho, H rho = (rho H^dagger)^dagger
        let mut out = DMatrix::from_fn(dim, dim, |i, k| Complex64::new(0.0, -1.0) * (y[(k, i)].conj() - y[(i, k)]));
        for &(o, i, c) in &self.recycling {
            let v = rho[(i / dim, i % dim)] * c;
            out[(o / dim, o % dim)] += v;
        }
        out
    }

    /// Recycling term written with the jump operators.
    pub fn recycling_from_jumps(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (j, w) in &self.jump_channels {
            let jd = j.to_dense();
            out += (&jd * rho * jd.adjoint()) * Complex64::new(*w, 0.0);
        }
        out
    }

    /// Recycling term from the kernel form.
    pub fn recycling_term(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let dim = self.dim;
        let mut out = DMatrix::zeros(dim, dim);
        for &(o, i, c) in &self.recycling {
            out[(o / dim, o % dim)] += rho[(i / dim, i % dim)] * c;
        }
        out
    }

    /// Largest `|element|` of the effective Hamiltonian, a stiffness scale.
    pub fn max_rate(&self) -> f64 {
        self.h_eff.entries.iter().map(|e| e.2.norm()).fold(1.0, f64::max)
    }
}

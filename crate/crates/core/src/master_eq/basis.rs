use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::recoil::Mode3;
use crate::{Error, Result};

/// Largest number of single-particle modes accepted by [`build_basis`].
pub const MAX_SINGLE_PARTICLE_MODES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Internal {
    G,
    E,
}

/// Occupation-number basis of one or two fermions over `{g, e} x` motional
/// levels.
///
/// Single-particle modes are indexed `internal * M + motional`, with `g`
/// before `e`. A state is the ascending list of occupied modes `p1 < p2`
/// and stands for `c_{p1}^dagger c_{p2}^dagger |vac>`.
#[derive(Clone, Debug)]
pub struct TwoFermionBasis {
    pub n_max: [usize; 3],
    pub particles: usize,
    motional: Vec<Mode3>,
    motional_index: HashMap<Mode3, usize>,
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    excitations: Vec<usize>,
}

/// Enumerates the basis. `n_max` is the per-axis cutoff, `particles` is 1 or
/// 2 and `sectors` lists the allowed numbers of excited atoms.
pub fn build_basis(n_max: [usize; 3], particles: usize, sectors: &[usize]) -> Result<TwoFermionBasis> {
    if !(particles == 1 || particles == 2) {
        return Err(Error::param("particles", format!("{particles} must be 1 or 2")));
    }
    let mut motional = Vec::new();
    for a in 0..=n_max[0] {
        for b in 0..=n_max[1] {
            for c in 0..=n_max[2] {
                motional.push(Mode3([a, b, c]));
            }
        }
    }
    let m = motional.len();
    if 2 * m > MAX_SINGLE_PARTICLE_MODES {
        return Err(Error::BasisTooLarge { modes: 2 * m, limit: MAX_SINGLE_PARTICLE_MODES });
    }
    if 2 * m < particles {
        return Err(Error::param("n_max", "not enough single-particle modes"));
    }
    let mut states = Vec::new();
    let mut excitations = Vec::new();
    let count_e = |s: &[usize]| s.iter().filter(|&&p| p >= m).count();
    if particles == 1 {
        for p in 0..2 * m {
            let s = vec![p];
            if sectors.contains(&count_e(&s)) {
                excitations.push(count_e(&s));
                states.push(s);
            }
        }
    } else {
        for p in 0..2 * m {
            for q in p + 1..2 * m {
                let s = vec![p, q];
                if sectors.contains(&count_e(&s)) {
                    excitations.push(count_e(&s));
                    states.push(s);
                }
            }
        }
    }
    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let motional_index = motional.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    Ok(TwoFermionBasis { n_max, particles, motional, motional_index, states, index, excitations })
}

impl TwoFermionBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn motional_modes(&self) -> &[Mode3] {
        &self.motional
    }

    pub fn single_particle_modes(&self) -> usize {
        2 * self.motional.len()
    }

    pub fn mode(&self, internal: Internal, n: Mode3) -> Option<usize> {
        let k = *self.motional_index.get(&n)?;
        Some(match internal {
            Internal::G => k,
            Internal::E => self.motional.len() + k,
        })
    }

    /// `(internal, motional level)` of a single-particle mode index.
    pub fn describe(&self, p: usize) -> (Internal, Mode3) {
        let m = self.motional.len();
        if p < m {
            (Internal::G, self.motional[p])
        } else {
            (Internal::E, self.motional[p - m])
        }
    }

    pub fn state(&self, i: usize) -> &[usize] {
        &self.states[i]
    }

    pub fn index_of(&self, occupied: &[usize]) -> Option<usize> {
        self.index.get(occupied).copied()
    }

    /// Number of excited atoms in state `i`.
    pub fn excitation(&self, i: usize) -> usize {
        self.excitations[i]
    }

    /// State index and sign of `c_{p_1}^dagger ... c_{p_k}^dagger |vac>`.
    pub fn from_creators(&self, creators: &[usize]) -> Option<(usize, f64)> {
        let mut occ: Vec<usize> = Vec::new();
        let mut sign = 1.0;
        for &p in creators.iter().rev() {
            let (s, next) = create(&occ, p)?;
            sign *= s;
            occ = next;
        }
        Some((self.index_of(&occ)?, sign))
    }

    /// `c_a^dagger c_b` applied to basis state `i`.
    pub fn hop(&self, a: usize, b: usize, i: usize) -> Option<(usize, f64)> {
        let (s1, occ) = annihilate(&self.states[i], b)?;
        let (s2, occ) = create(&occ, a)?;
        Some((self.index_of(&occ)?, s1 * s2))
    }

    /// `c_a^dagger c_b^dagger c_c c_d` applied to basis state `i`.
    pub fn two_body(&self, a: usize, b: usize, c: usize, d: usize, i: usize) -> Option<(usize, f64)> {
        let (s1, occ) = annihilate(&self.states[i], d)?;
        let (s2, occ) = annihilate(&occ, c)?;
        let (s3, occ) = create(&occ, b)?;
        let (s4, occ) = create(&occ, a)?;
        Some((self.index_of(&occ)?, s1 * s2 * s3 * s4))
    }
}

fn parity_below(occ: &[usize], p: usize) -> f64 {
    if occ.iter().filter(|&&q| q < p).count() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn create(occ: &[usize], p: usize) -> Option<(f64, Vec<usize>)> {
    if occ.contains(&p) {
        return None;
    }
    let sign = parity_below(occ, p);
    let mut next = occ.to_vec();
    let pos = next.partition_point(|&q| q < p);
    next.insert(pos, p);
    Some((sign, next))
}

pub(crate) fn annihilate(occ: &[usize], p: usize) -> Option<(f64, Vec<usize>)> {
    let pos = occ.iter().position(|&q| q == p)?;
    let sign = parity_below(occ, p);
    let mut next = occ.to_vec();
    next.remove(pos);
    Some((sign, next))
}

//! Truncated spin ⊗ phonon Hilbert space and state vectors.
//!
//! Flat index layout: the spin configuration occupies the low `L` bits (site
//! `j` ↔ bit `j`, 0-based; bit value 0 = ↑, 1 = ↓) and the phonon occupations
//! form the high part as base-`(n_max + 1)` digits (site `j` ↔ digit `j`).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    /// σᶻ = +1, bit 0.
    Up,
    /// σᶻ = -1, bit 1.
    Down,
}

impl Spin {
    pub fn sigma_z(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }
}

/// Largest dimension [`HilbertSpace::new`] accepts (2^34 amplitudes = 256 GiB).
pub const MAX_DIM: usize = 1 << 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertSpace {
    sites: usize,
    n_max: usize,
    dim_spin: usize,
    dim_phonon: usize,
}

impl HilbertSpace {
    pub fn new(sites: usize, n_max: usize) -> Result<Self> {
        if sites == 0 || sites > 40 {
            return Err(Error::domain(format!("site count {sites} outside 1..=40")));
        }
        let dim_spin = 1usize << sites;
        let dim_phonon = (n_max + 1)
            .checked_pow(sites as u32)
            .filter(|&d| d.checked_mul(dim_spin).is_some_and(|t| t <= MAX_DIM))
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "Hilbert space for L = {sites}, n_max = {n_max} exceeds {MAX_DIM} states"
                ))
            })?;
        Ok(HilbertSpace {
            sites,
            n_max,
            dim_spin,
            dim_phonon,
        })
    }

    pub fn for_params(params: &SystemParams) -> Result<Self> {
        Self::new(params.sites, params.n_max)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Local phonon dimension `n_max + 1`.
    pub fn local_phonon_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim_spin(&self) -> usize {
        self.dim_spin
    }

    pub fn dim_phonon(&self) -> usize {
        self.dim_phonon
    }

    pub fn dim(&self) -> usize {
        self.dim_spin * self.dim_phonon
    }

    /// Stride of site `j`'s phonon digit in the flat index.
    pub fn phonon_stride(&self, site: usize) -> usize {
        self.dim_spin * self.local_phonon_dim().pow(site as u32)
    }

    pub fn encode(&self, spins: &[Spin], phonons: &[usize]) -> Result<usize> {
        if spins.len() != self.sites || phonons.len() != self.sites {
            return Err(Error::domain(format!(
                "expected {} spins and occupations, got {} and {}",
                self.sites,
                spins.len(),
                phonons.len()
            )));
        }
        let mut spin_part = 0usize;
        for (j, s) in spins.iter().enumerate() {
            if *s == Spin::Down {
                spin_part |= 1 << j;
            }
        }
        let base = self.local_phonon_dim();
        let mut phonon_part = 0usize;
        for (j, &n) in phonons.iter().enumerate().rev() {
            if n > self.n_max {
                return Err(Error::domain(format!(
                    "occupation {n} at site {} exceeds n_max = {}",
                    j + 1,
                    self.n_max
                )));
            }
            phonon_part = phonon_part * base + n;
        }
        Ok(spin_part + self.dim_spin * phonon_part)
    }

    pub fn decode(&self, index: usize) -> Result<(Vec<Spin>, Vec<usize>)> {
        if index >= self.dim() {
            return Err(Error::domain(format!(
                "index {index} outside [0, {})",
                self.dim()
            )));
        }
        let spin_part = index % self.dim_spin;
        let spins = (0..self.sites)
            .map(|j| {
                if spin_part >> j & 1 == 0 {
                    Spin::Up
                } else {
                    Spin::Down
                }
            })
            .collect();
        Ok((spins, self.phonon_digits(index / self.dim_spin)))
    }

    /// Per-site occupations of a phonon block index.
    pub fn phonon_digits(&self, mut phonon_part: usize) -> Vec<usize> {
        let base = self.local_phonon_dim();
        (0..self.sites)
            .map(|_| {
                let d = phonon_part % base;
                phonon_part /= base;
                d
            })
            .collect()
    }
}

/// Complex amplitudes over a [`HilbertSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(space: HilbertSpace) -> Self {
        StateVector {
            space,
            amps: vec![Complex64::new(0.0, 0.0); space.dim()],
        }
    }

    pub fn basis(space: HilbertSpace, index: usize) -> Result<Self> {
        if index >= space.dim() {
            return Err(Error::domain(format!("basis index {index} out of range")));
        }
        let mut psi = Self::zeros(space);
        psi.amps[index] = Complex64::new(1.0, 0.0);
        Ok(psi)
    }

    pub fn from_amplitudes(space: HilbertSpace, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::domain(format!(
                "amplitude vector has length {}, space dimension is {}",
                amps.len(),
                space.dim()
            )));
        }
        Ok(StateVector { space, amps })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.space != other.space {
            return Err(Error::domain("inner product between different spaces"));
        }
        Ok(inner(&self.amps, &other.amps))
    }

    /// Scales to unit norm; fails on the zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::domain("cannot normalize a zero or non-finite vector"));
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Initial phonon configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhononInit {
    Vacuum,
    Occupations(Vec<usize>),
}

/// Spin pattern of the string state: `l` up, `w` down, rest up.
pub fn string_spins(sites: usize, left: usize, width: usize) -> Result<Vec<Spin>> {
    if left + width > sites {
        return Err(Error::domain(format!(
            "string l + w = {} does not fit in L = {sites}",
            left + width
        )));
    }
    Ok((0..sites)
        .map(|j| {
            if (left..left + width).contains(&j) {
                Spin::Down
            } else {
                Spin::Up
            }
        })
        .collect())
}

/// The product string state with the requested phonon occupations.
pub fn build_initial_state(params: &SystemParams, phonons: &PhononInit) -> Result<StateVector> {
    let spins = string_spins(params.sites, params.left, params.width)?;
    let space = HilbertSpace::for_params(params)?;
    let occ = match phonons {
        PhononInit::Vacuum => vec![0; params.sites],
        PhononInit::Occupations(occ) => occ.clone(),
    };
    let index = space.encode(&spins, &occ)?;
    StateVector::basis(space, index)
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Spin::{Down, Up};

    #[test]
    fn encode_examples() {
        let s = HilbertSpace::new(2, 1).unwrap();
        assert_eq!(s.encode(&[Up, Up], &[0, 0]).unwrap(), 0);
        assert_eq!(s.encode(&[Up, Down], &[0, 0]).unwrap(), 2);
        assert_eq!(s.encode(&[Up, Up], &[1, 0]).unwrap(), 4);
        assert!(s.encode(&[Up, Up], &[2, 0]).is_err());
        assert!(s.encode(&[Up], &[0]).is_err());
    }

    #[test]
    fn exhaustive_round_trip() {
        for (sites, n_max) in [(1, 0), (2, 1), (3, 2), (5, 3), (6, 2)] {
            let s = HilbertSpace::new(sites, n_max).unwrap();
            assert!(s.dim() <= 100_000);
            for i in 0..s.dim() {
                let (spins, occ) = s.decode(i).unwrap();
                assert_eq!(s.encode(&spins, &occ).unwrap(), i);
            }
        }
    }

    #[test]
    fn strides_match_encoding() {
        let s = HilbertSpace::new(3, 2).unwrap();
        let up = [Up, Up, Up];
        for j in 0..3 {
            let mut occ = [0; 3];
            occ[j] = 1;
            assert_eq!(s.encode(&up, &occ).unwrap(), s.phonon_stride(j));
        }
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(HilbertSpace::new(30, 20), Err(Error::Capacity(_))));
    }

    #[test]
    fn initial_state_l24_centered() {
        let p = SystemParams::default();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let nonzero: Vec<usize> = (0..psi.space().dim())
            .filter(|&i| psi.amplitudes()[i].norm() > 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        let (spins, occ) = psi.space().decode(nonzero[0]).unwrap();
        let down: Vec<usize> = (0..24).filter(|&j| spins[j] == Down).map(|j| j + 1).collect();
        assert_eq!(down, vec![11, 12, 13, 14]);
        assert!(occ.iter().all(|&n| n == 0));
        assert_eq!(psi.norm(), 1.0);
    }

    #[test]
    fn initial_state_all_down() {
        let mut p = SystemParams::centered(5, 5);
        p.left = 0;
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        assert_eq!(psi.amplitudes()[0b11111], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn initial_state_with_phonons() {
        let mut p = SystemParams::centered(4, 2);
        p.left = 1;
        p.n_max = 1;
        let psi = build_initial_state(&p, &PhononInit::Occupations(vec![0, 1, 0, 0])).unwrap();
        let idx = psi
            .space()
            .encode(&[Up, Down, Down, Up], &[0, 1, 0, 0])
            .unwrap();
        assert_eq!(psi.amplitudes()[idx], Complex64::new(1.0, 0.0));
        assert_eq!(psi.norm(), 1.0);
        assert!(build_initial_state(&p, &PhononInit::Occupations(vec![0, 2, 0, 0])).is_err());
    }

    #[test]
    fn initial_state_rejects_overflowing_string() {
        let mut p = SystemParams::centered(4, 2);
        p.left = 3;
        assert!(matches!(
            build_initial_state(&p, &PhononInit::Vacuum),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #[test]
        fn decode_encode_inverse(sites in 1usize..8, n_max in 0usize..4, seed in any::<u64>()) {
            let s = HilbertSpace::new(sites, n_max).unwrap();
            let i = (seed % s.dim() as u64) as usize;
            let (spins, occ) = s.decode(i).unwrap();
            prop_assert_eq!(s.encode(&spins, &occ).unwrap(), i);
        }
    }
}

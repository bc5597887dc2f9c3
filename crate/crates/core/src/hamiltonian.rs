//! Matrix-free Ising-Holstein Hamiltonian
//!
//! ```text
//! H = -Σ σᶻ_j σᶻ_{j+1} - hˣ Σ σˣ_j - hᶻ Σ σᶻ_j + ω₀ Σ a†_j a_j + g Σ (a†_j + a_j) σᶻ_j
//! ```
//!
//! and its Lang-Firsov image
//!
//! ```text
//! H_LF = -Σ σᶻσᶻ - hᶻ Σ σᶻ + ω₀ Σ a†a - hˣ Σ (σ⁺_j e^{-2γ(a†_j - a_j)} + σ⁻_j e^{2γ(a†_j - a_j)}) - L g²/ω₀
//! ```
//!
//! with `γ = -g/ω₀`. Ladder operators are truncated at `n_max` (`a†|n_max⟩ = 0`);
//! the dressing factors are exponentials of the truncated generator.
//!
//! Both variants are applied as gathers: every output amplitude is computed
//! from the input independently, so a parallel split over output chunks gives
//! results identical to a serial sweep.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{Boundary, SystemParams};
use crate::space::{HilbertSpace, Spin, StateVector};

/// A Hermitian operator applied without a stored matrix.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `out = A · input`; both slices have length `dim()`.
    fn apply_into(&self, input: &[Complex64], out: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bare,
    LangFirsov,
}

#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    params: SystemParams,
    space: HilbertSpace,
    variant: Variant,
    strides: Vec<usize>,
    /// `sqrt(n)` for `n = 0..=n_max`.
    sqrt_n: Vec<f64>,
    /// `e^{-2γ(a† - a)}` row-major, dressing `σ⁺`.
    dress_raise: Vec<f64>,
    /// `e^{+2γ(a† - a)}` row-major, dressing `σ⁻`.
    dress_lower: Vec<f64>,
}

const CHUNK: usize = 1 << 12;

impl HamiltonianOperator {
    pub fn new(params: &SystemParams, variant: Variant) -> Result<Self> {
        params.validate()?;
        let space = HilbertSpace::for_params(params)?;
        let d = space.local_phonon_dim();
        let strides = (0..params.sites).map(|j| space.phonon_stride(j)).collect();
        let sqrt_n = (0..d).map(|n| (n as f64).sqrt()).collect();
        let (dress_raise, dress_lower) = match variant {
            Variant::Bare => (Vec::new(), Vec::new()),
            Variant::LangFirsov => {
                let gamma = params.gamma();
                (
                    displacement_matrix(params.n_max, -2.0 * gamma),
                    displacement_matrix(params.n_max, 2.0 * gamma),
                )
            }
        };
        Ok(HamiltonianOperator {
            params: params.clone(),
            space,
            variant,
            strides,
            sqrt_n,
            dress_raise,
            dress_lower,
        })
    }

    pub fn bare(params: &SystemParams) -> Result<Self> {
        Self::new(params, Variant::Bare)
    }

    pub fn lang_firsov(params: &SystemParams) -> Result<Self> {
        Self::new(params, Variant::LangFirsov)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// `Hψ` for whichever variant this operator was built as.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.space() != &self.space {
            return Err(Error::domain(format!(
                "state of dimension {} does not belong to the operator's space (dimension {})",
                psi.space().dim(),
                self.space.dim()
            )));
        }
        let mut out = StateVector::zeros(self.space);
        self.apply_into(psi.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }

    /// `H_LF ψ`; the operator must have been built as [`Variant::LangFirsov`].
    pub fn apply_lf(&self, psi: &StateVector) -> Result<StateVector> {
        if self.variant != Variant::LangFirsov {
            return Err(Error::domain("apply_lf called on a bare Hamiltonian"));
        }
        self.apply(psi)
    }

    /// `Re⟨ψ|H|ψ⟩`, checking that the imaginary part vanishes.
    pub fn energy_expectation(&self, psi: &StateVector) -> Result<f64> {
        let hpsi = self.apply(psi)?;
        let e = psi.inner(&hpsi)?;
        if e.im.abs() > 1e-10 * e.re.abs().max(1.0) {
            return Err(Error::domain(format!(
                "energy expectation has imaginary part {:e}",
                e.im
            )));
        }
        Ok(e.re)
    }

    /// Spin-diagonal energy (Ising bonds plus longitudinal field) of the
    /// spin configuration encoded in the low bits of `spin_bits`.
    pub fn spin_diagonal(&self, spin_bits: usize) -> f64 {
        spin_diagonal(&self.params, spin_bits)
    }

    fn kernel(&self, input: &[Complex64], out: &mut [Complex64], start: usize) {
        let p = &self.params;
        let dim_spin = self.space.dim_spin();
        let n_max = p.n_max;
        let d = n_max + 1;
        let phonon_block = start / dim_spin;
        let digits = self.space.phonon_digits(phonon_block);
        let phonon_energy = p.omega0 * digits.iter().sum::<usize>() as f64;
        let lf = self.variant == Variant::LangFirsov;
        let constant = if lf {
            phonon_energy - p.polaron_shift()
        } else {
            phonon_energy
        };
        let coupled = !lf && n_max > 0 && p.g != 0.0;
        let dressed = lf && n_max > 0;

        for (k, slot) in out.iter_mut().enumerate() {
            let i = start + k;
            let s = i & (dim_spin - 1);
            let mut acc = input[i] * (spin_diagonal(p, s) + constant);

            for j in 0..p.sites {
                let flipped = i ^ (1 << j);
                if dressed {
                    let n = digits[j];
                    let stride = self.strides[j];
                    let dress = if s >> j & 1 == 0 {
                        &self.dress_raise
                    } else {
                        &self.dress_lower
                    };
                    let row = &dress[n * d..(n + 1) * d];
                    let base = flipped - n * stride;
                    let mut hop = Complex64::new(0.0, 0.0);
                    for (m, &c) in row.iter().enumerate() {
                        hop += input[base + m * stride] * c;
                    }
                    acc -= hop * p.h_x;
                } else {
                    acc -= input[flipped] * p.h_x;
                }
            }

            if coupled {
                for j in 0..p.sites {
                    let n = digits[j];
                    let stride = self.strides[j];
                    let mut disp = Complex64::new(0.0, 0.0);
                    if n > 0 {
                        disp += input[i - stride] * self.sqrt_n[n];
                    }
                    if n < n_max {
                        disp += input[i + stride] * self.sqrt_n[n + 1];
                    }
                    let z = if s >> j & 1 == 0 { p.g } else { -p.g };
                    acc += disp * z;
                }
            }
            *slot = acc;
        }
    }
}

impl LinearOperator for HamiltonianOperator {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn apply_into(&self, input: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(input.len(), self.space.dim());
        assert_eq!(out.len(), self.space.dim());
        let chunk = CHUNK.min(self.space.dim_spin());
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, block)| self.kernel(input, block, c * chunk));
    }
}

/// `-Σ σᶻσᶻ - hᶻ Σ σᶻ` for the spin configuration in the low bits of `s`.
pub fn spin_diagonal(p: &SystemParams, s: usize) -> f64 {
    let sites = p.sites;
    let mask = (1usize << sites) - 1;
    let s = s & mask;
    let mut bonds = sites - 1;
    let mut walls = ((s ^ (s >> 1)) & (mask >> 1)).count_ones() as usize;
    if p.boundary == Boundary::Closed {
        bonds += 1;
        walls += (s ^ (s >> (sites - 1))) & 1;
    }
    let ising = -(bonds as f64 - 2.0 * walls as f64);
    let down = s.count_ones() as f64;
    ising - p.h_z * (sites as f64 - 2.0 * down)
}

/// `⟨H₀⟩` on a z-basis product spin state (the transverse term averages to 0).
pub fn product_state_energy(p: &SystemParams, spins: &[Spin]) -> f64 {
    let bits = spins
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Spin::Down)
        .fold(0usize, |acc, (j, _)| acc | 1 << j);
    spin_diagonal(p, bits)
}

/// `exp(x (a† - a))` on the `(n_max + 1)`-dimensional truncated Fock space,
/// row-major. The generator is real antisymmetric, so the result is orthogonal.
pub fn displacement_matrix(n_max: usize, x: f64) -> Vec<f64> {
    let d = n_max + 1;
    let mut gen = DMatrix::<f64>::zeros(d, d);
    for n in 1..d {
        let s = (n as f64).sqrt();
        gen[(n, n - 1)] = x * s;
        gen[(n - 1, n)] = -x * s;
    }
    let e = gen.exp();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(e[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_initial_state, string_spins, PhononInit};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_state(space: HilbertSpace, rng: &mut StdRng) -> StateVector {
        let amps = (0..space.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut psi = StateVector::from_amplitudes(space, amps).unwrap();
        psi.normalize().unwrap();
        psi
    }

    fn generic(sites: usize, n_max: usize) -> SystemParams {
        let mut p = SystemParams::centered(sites, 1);
        p.h_x = 0.37;
        p.h_z = 0.81;
        p.omega0 = 0.6;
        p.g = 0.27;
        p.n_max = n_max;
        p
    }

    #[test]
    fn hermitian_and_linear_on_random_vectors() {
        let mut rng = StdRng::seed_from_u64(7);
        for (sites, n_max, boundary, variant) in [
            (3, 2, Boundary::Open, Variant::Bare),
            (4, 1, Boundary::Closed, Variant::Bare),
            (3, 3, Boundary::Open, Variant::LangFirsov),
            (5, 0, Boundary::Closed, Variant::Bare),
        ] {
            let mut p = generic(sites, n_max);
            p.boundary = boundary;
            let h = HamiltonianOperator::new(&p, variant).unwrap();
            for _ in 0..10 {
                let phi = random_state(*h.space(), &mut rng);
                let psi = random_state(*h.space(), &mut rng);
                let lhs = phi.inner(&h.apply(&psi).unwrap()).unwrap();
                let rhs = psi.inner(&h.apply(&phi).unwrap()).unwrap().conj();
                assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");

                let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
                let combo: Vec<Complex64> = psi
                    .amplitudes()
                    .iter()
                    .zip(phi.amplitudes())
                    .map(|(x, y)| a * x + b * y)
                    .collect();
                let combo = StateVector::from_amplitudes(*h.space(), combo).unwrap();
                let h_combo = h.apply(&combo).unwrap();
                let (hp, hf) = (h.apply(&psi).unwrap(), h.apply(&phi).unwrap());
                for k in 0..h.space().dim() {
                    let expect = a * hp.amplitudes()[k] + b * hf.amplitudes()[k];
                    assert!((h_combo.amplitudes()[k] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_without_transverse_field() {
        let mut p = generic(4, 1);
        p.h_x = 0.0;
        p.g = 0.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        for idx in [0, 5, 11, 16 + 6, h.space().dim() - 1] {
            let e = StateVector::basis(*h.space(), idx).unwrap();
            let he = h.apply(&e).unwrap();
            let phonons: usize = h.space().phonon_digits(idx / 16).iter().sum();
            let expect = spin_diagonal(&p, idx % 16) + p.omega0 * phonons as f64;
            for (k, a) in he.amplitudes().iter().enumerate() {
                let want = if k == idx { expect } else { 0.0 };
                assert!((a - Complex64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn string_state_energy_l24() {
        let p = SystemParams::default();
        let spins = string_spins(24, 10, 4).unwrap();
        assert_eq!(product_state_energy(&p, &spins), -35.0);
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let h = HamiltonianOperator::bare(&p).unwrap();
        assert!((h.energy_expectation(&psi).unwrap() + 35.0).abs() < 1e-12);
    }

    #[test]
    fn broken_string_is_resonant_at_unit_field() {
        let mut p = SystemParams::default();
        let initial = string_spins(24, 10, 4).unwrap();
        let mut broken = initial.clone();
        broken[11] = Spin::Up;
        broken[12] = Spin::Up;
        assert_eq!(product_state_energy(&p, &initial), product_state_energy(&p, &broken));
        p.h_z = 0.9;
        assert_ne!(product_state_energy(&p, &initial), product_state_energy(&p, &broken));
    }

    #[test]
    fn phonon_energy_vanishes_on_vacuum() {
        let mut p = generic(3, 2);
        p.h_x = 0.0;
        p.h_z = 0.0;
        p.g = 0.0;
        let spins = [Spin::Up, Spin::Down, Spin::Up];
        let h = HamiltonianOperator::bare(&p).unwrap();
        let e = StateVector::basis(*h.space(), h.space().encode(&spins, &[0, 0, 0]).unwrap()).unwrap();
        let ising = product_state_energy(&p, &spins);
        assert!((h.energy_expectation(&e).unwrap() - ising).abs() < 1e-14);
    }

    #[test]
    fn g_zero_keeps_phonon_vacuum() {
        let mut p = generic(4, 2);
        p.g = 0.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let mut amps = vec![Complex64::new(0.0, 0.0); h.space().dim()];
        for a in amps.iter_mut().take(h.space().dim_spin()) {
            *a = Complex64::new(rng.gen(), rng.gen());
        }
        let psi = StateVector::from_amplitudes(*h.space(), amps).unwrap();
        let out = h.apply(&psi).unwrap();
        assert!(out.amplitudes()[h.space().dim_spin()..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn lf_equals_bare_without_coupling() {
        let mut p = generic(3, 3);
        p.g = 0.0;
        let bare = HamiltonianOperator::bare(&p).unwrap();
        let lf = HamiltonianOperator::lang_firsov(&p).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let psi = random_state(*bare.space(), &mut rng);
        let d = bare.apply(&psi).unwrap().max_abs_diff(&lf.apply_lf(&psi).unwrap());
        assert!(d < 1e-15, "{d}");
    }

    #[test]
    fn apply_lf_rejects_bare_operator() {
        let h = HamiltonianOperator::bare(&generic(2, 1)).unwrap();
        let psi = StateVector::basis(*h.space(), 0).unwrap();
        assert!(h.apply_lf(&psi).is_err());
    }

    #[test]
    fn space_mismatch_is_domain_error() {
        let h = HamiltonianOperator::bare(&generic(2, 1)).unwrap();
        let other = StateVector::basis(HilbertSpace::new(2, 2).unwrap(), 0).unwrap();
        assert!(matches!(h.apply(&other), Err(Error::Domain(_))));
    }

    #[test]
    fn displacement_is_orthogonal() {
        for (n_max, x) in [(0, 0.5), (3, 0.4), (8, -1.3)] {
            let d = n_max + 1;
            let m = displacement_matrix(n_max, x);
            let minv = displacement_matrix(n_max, -x);
            for r in 0..d {
                for c in 0..d {
                    let mt = m[c * d + r];
                    assert!((mt - minv[r * d + c]).abs() < 1e-12);
                    let prod: f64 = (0..d).map(|k| m[r * d + k] * minv[k * d + c]).sum();
                    let id = if r == c { 1.0 } else { 0.0 };
                    assert!((prod - id).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn partitioning_does_not_change_results() {
        let p = generic(6, 1);
        let h = HamiltonianOperator::bare(&p).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        let psi = random_state(*h.space(), &mut rng);
        let par = h.apply(&psi).unwrap();
        let mut serial = vec![Complex64::new(0.0, 0.0); h.space().dim()];
        for start in (0..h.space().dim()).step_by(16) {
            h.kernel(psi.amplitudes(), &mut serial[start..start + 16], start);
        }
        let serial = StateVector::from_amplitudes(*h.space(), serial).unwrap();
        assert!(par.max_abs_diff(&serial) < 1e-13);
    }
}

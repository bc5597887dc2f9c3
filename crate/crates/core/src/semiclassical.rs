//! Davydov-type product ansatz `|ψ⟩ ⊗ ∏ |α_j⟩` in the Lang-Firsov frame.
//!
//! The spin state evolves under
//!
//! ```text
//! H_eff[α] = -Σ σᶻσᶻ - hᶻ Σ σᶻ + ω₀ Σ |α_j|² - e^{-2γ²} hˣ Σ (σ⁺_j e^{-iθ_j} + σ⁻_j e^{iθ_j}) - L g²/ω₀
//! ```
//!
//! with `θ_j = -4γ Im α_j`, while each coherent amplitude follows
//!
//! ```text
//! i α̇_j = ω₀ α_j + 2γ hˣ e^{-2γ²} (⟨σ⁺_j⟩ e^{-iθ_j} - ⟨σ⁻_j⟩ e^{iθ_j})
//! ```
//!
//! which is `i α̇_j = ∂E/∂α_j*` for `E = ⟨ψ|H_eff[α]|ψ⟩`, so `E` is a constant
//! of motion of the exact flow. Both are advanced together with classical RK4.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::spin_diagonal;
use crate::observables::{measure_frame, ObservableFrame};
use crate::params::SystemParams;
use crate::space::{norm, HilbertSpace, Spin, StateVector};

/// Largest chain handled with dense spin amplitudes.
pub const MAX_SITES: usize = 20;
pub const DEFAULT_DT: f64 = 0.01;
/// Per-step norm drift above which a step is rejected.
pub const NORM_FAIL_LIMIT: f64 = 1e-6;

const CHUNK: usize = 1 << 12;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct SemiclassicalState {
    pub psi_spin: Vec<Complex64>,
    pub alpha: Vec<Complex64>,
    pub t: f64,
}

impl SemiclassicalState {
    /// z-basis product spin state with the given coherent amplitudes.
    pub fn product(spins: &[Spin], alpha: Vec<Complex64>) -> Result<Self> {
        if spins.len() != alpha.len() {
            return Err(Error::domain(format!(
                "{} spins but {} coherent amplitudes",
                spins.len(),
                alpha.len()
            )));
        }
        if spins.len() > MAX_SITES {
            return Err(Error::Capacity(format!(
                "dense spin state of 2^{} amplitudes exceeds 2^{MAX_SITES}",
                spins.len()
            )));
        }
        let space = HilbertSpace::new(spins.len(), 0)?;
        let index = space.encode(spins, &vec![0; spins.len()])?;
        let mut psi_spin = vec![Complex64::new(0.0, 0.0); space.dim()];
        psi_spin[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            psi_spin,
            alpha,
            t: 0.0,
        })
    }

    pub fn sites(&self) -> usize {
        self.alpha.len()
    }

    fn check(&self, p: &SystemParams) -> Result<()> {
        if self.alpha.len() != p.sites || self.psi_spin.len() != 1usize << p.sites {
            return Err(Error::domain(format!(
                "state with {} amplitudes and {} modes does not match L = {}",
                self.psi_spin.len(),
                self.alpha.len(),
                p.sites
            )));
        }
        if self.alpha.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::domain("coherent amplitudes must be finite"));
        }
        Ok(())
    }
}

/// `e^{-2γ²}`, the polaronic suppression of the transverse field.
pub fn renormalization_factor(p: &SystemParams) -> f64 {
    let gamma = p.gamma();
    (-2.0 * gamma * gamma).exp()
}

/// `θ_j = -4γ Im α_j`.
pub fn phases(alpha: &[Complex64], gamma: f64) -> Vec<f64> {
    alpha.iter().map(|a| -4.0 * gamma * a.im).collect()
}

/// `⟨σ⁺_j⟩ = ⟨ψ|↑⟩⟨↓|_j|ψ⟩` per site; `⟨σ⁻_j⟩` is its conjugate.
pub fn sigma_plus(psi: &[Complex64], sites: usize) -> Vec<Complex64> {
    (0..sites)
        .map(|j| {
            let bit = 1usize << j;
            (0..psi.len())
                .filter(|i| i & bit == 0)
                .map(|i| psi[i].conj() * psi[i | bit])
                .sum()
        })
        .collect()
}

/// `H_eff[α]` applied to a dense spin vector.
pub fn effective_spin_hamiltonian_apply(
    psi_spin: &[Complex64],
    alpha: &[Complex64],
    params: &SystemParams,
) -> Result<Vec<Complex64>> {
    if alpha.len() != params.sites || psi_spin.len() != 1usize << params.sites {
        return Err(Error::domain("spin vector and coherent amplitudes do not match L"));
    }
    let op = EffectiveOperator::new(params, alpha, 0.0);
    let mut out = vec![Complex64::new(0.0, 0.0); psi_spin.len()];
    op.apply(psi_spin, &mut out);
    Ok(out)
}

/// `⟨ψ|H_eff[α]|ψ⟩`, the conserved energy of the ansatz.
pub fn energy(state: &SemiclassicalState, params: &SystemParams) -> Result<f64> {
    state.check(params)?;
    let h_psi = effective_spin_hamiltonian_apply(&state.psi_spin, &state.alpha, params)?;
    Ok(crate::space::inner(&state.psi_spin, &h_psi).re)
}

/// `H_eff[α] - shift` for one set of coherent amplitudes.
struct EffectiveOperator<'a> {
    params: &'a SystemParams,
    /// `e^{-2γ²} hˣ e^{-iθ_j}`, the amplitude of `σ⁺_j`.
    raise: Vec<Complex64>,
    constant: f64,
}

impl<'a> EffectiveOperator<'a> {
    fn new(params: &'a SystemParams, alpha: &[Complex64], shift: f64) -> Self {
        let hx = renormalization_factor(params) * params.h_x;
        let raise = phases(alpha, params.gamma())
            .into_iter()
            .map(|th| Complex64::from_polar(hx, -th))
            .collect();
        let phonons: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        let constant = params.omega0 * phonons - params.polaron_shift() - shift;
        Self {
            params,
            raise,
            constant,
        }
    }

    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        let chunk = CHUNK.min(input.len());
        out.par_chunks_mut(chunk).enumerate().for_each(|(c, block)| {
            let start = c * chunk;
            for (k, slot) in block.iter_mut().enumerate() {
                let i = start + k;
                let mut acc = input[i] * (spin_diagonal(self.params, i) + self.constant);
                for (j, r) in self.raise.iter().enumerate() {
                    let flipped = input[i ^ (1 << j)];
                    // an up spin at j receives σ⁺ from the down partner
                    acc -= if i >> j & 1 == 0 { flipped * r } else { flipped * r.conj() };
                }
                *slot = acc;
            }
        });
    }
}

/// RK4 integrator for the coupled equations.
///
/// The spin equation is integrated with `H_eff - shift`; a constant shift only
/// changes the global phase of `psi_spin` and keeps the stage increments
/// small. [`SemiclassicalIntegrator::new`] uses the initial energy.
#[derive(Debug, Clone)]
pub struct SemiclassicalIntegrator {
    params: SystemParams,
    shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `|‖ψ‖ - 1|` after the raw RK4 update.
    pub norm_drift: f64,
}

impl SemiclassicalIntegrator {
    pub fn new(params: &SystemParams, state: &SemiclassicalState) -> Result<Self> {
        let shift = energy(state, params)?;
        Self::with_shift(params, shift)
    }

    pub fn with_shift(params: &SystemParams, shift: f64) -> Result<Self> {
        params.validate()?;
        if params.sites > MAX_SITES {
            return Err(Error::Capacity(format!(
                "semiclassical backend holds 2^L spin amplitudes; L = {} exceeds {MAX_SITES}",
                params.sites
            )));
        }
        Ok(Self {
            params: params.clone(),
            shift,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn derivative(&self, psi: &[Complex64], alpha: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let p = &self.params;
        let op = EffectiveOperator::new(p, alpha, self.shift);
        let mut dpsi = vec![Complex64::new(0.0, 0.0); psi.len()];
        op.apply(psi, &mut dpsi);
        dpsi.iter_mut().for_each(|v| *v *= -I);

        let drive = 2.0 * p.gamma() * renormalization_factor(p) * p.h_x;
        let sp = sigma_plus(psi, p.sites);
        let theta = phases(alpha, p.gamma());
        let dalpha = alpha
            .iter()
            .zip(sp.iter().zip(&theta))
            .map(|(a, (s, &th))| {
                let e = Complex64::from_polar(1.0, -th);
                let force = s * e - s.conj() * e.conj();
                -I * (*a * p.omega0 + force * drive)
            })
            .collect();
        (dpsi, dalpha)
    }

    /// One RK4 step without any norm repair.
    pub fn rk4(&self, state: &SemiclassicalState, dt: f64) -> Result<SemiclassicalState> {
        state.check(&self.params)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {dt}")));
        }
        let axpy = |x: &[Complex64], k: &[Complex64], h: f64| -> Vec<Complex64> {
            x.iter().zip(k).map(|(a, b)| a + b * h).collect()
        };
        let (psi, alpha) = (&state.psi_spin, &state.alpha);
        let (k1p, k1a) = self.derivative(psi, alpha);
        let (k2p, k2a) = self.derivative(&axpy(psi, &k1p, dt / 2.0), &axpy(alpha, &k1a, dt / 2.0));
        let (k3p, k3a) = self.derivative(&axpy(psi, &k2p, dt / 2.0), &axpy(alpha, &k2a, dt / 2.0));
        let (k4p, k4a) = self.derivative(&axpy(psi, &k3p, dt), &axpy(alpha, &k3a, dt));
        let combine = |x: &[Complex64], k: [&[Complex64]; 4]| -> Vec<Complex64> {
            (0..x.len())
                .map(|n| x[n] + (k[0][n] + (k[1][n] + k[2][n]) * 2.0 + k[3][n]) * (dt / 6.0))
                .collect()
        };
        Ok(SemiclassicalState {
            psi_spin: combine(psi, [&k1p, &k2p, &k3p, &k4p]),
            alpha: combine(alpha, [&k1a, &k2a, &k3a, &k4a]),
            t: state.t + dt,
        })
    }

    /// RK4 step followed by spin renormalization; fails if the norm moved
    /// by more than [`NORM_FAIL_LIMIT`].
    pub fn step(&self, state: &mut SemiclassicalState, dt: f64) -> Result<StepReport> {
        let mut next = self.rk4(state, dt)?;
        let n = norm(&next.psi_spin);
        let drift = (n - 1.0).abs();
        if !(drift <= NORM_FAIL_LIMIT) {
            return Err(Error::StepTooLarge {
                estimate: drift,
                tolerance: NORM_FAIL_LIMIT,
                iterations: 4,
            });
        }
        next.psi_spin.iter_mut().for_each(|v| *v /= n);
        *state = next;
        Ok(StepReport { norm_drift: drift })
    }
}

/// Single step with the shift set to the state's own energy.
pub fn eom_step(state: &SemiclassicalState, params: &SystemParams, dt: f64) -> Result<SemiclassicalState> {
    let mut next = state.clone();
    SemiclassicalIntegrator::new(params, state)?.step(&mut next, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiclassicalReport {
    pub dt: f64,
    pub steps: usize,
    pub energy0: f64,
    pub max_norm_drift: f64,
    pub max_rel_energy_drift: f64,
}

#[derive(Debug, Clone)]
pub struct SemiclassicalRun {
    pub frames: Vec<ObservableFrame>,
    pub report: SemiclassicalReport,
    pub final_state: SemiclassicalState,
}

/// Frame of a semiclassical state: spin observables from `psi_spin`,
/// `n_j = |α_j|²` and the Poisson width `|α_j|`.
pub fn semiclassical_frame(state: &SemiclassicalState, params: &SystemParams) -> Result<ObservableFrame> {
    state.check(params)?;
    let space = HilbertSpace::new(params.sites, 0)?;
    let psi = StateVector::from_amplitudes(space, state.psi_spin.clone())?;
    let mut frame = measure_frame(&psi, params, state.t, energy(state, params)?)?;
    frame.n_mean = state.alpha.iter().map(|a| a.norm_sqr()).collect();
    frame.n_std = state.alpha.iter().map(|a| a.norm()).collect();
    Ok(frame)
}

/// Integrates from a z-basis product state up to `params.t_max`, sampling every
/// `params.dt_sample`, which must be a whole number of steps `dt`.
pub fn run_semiclassical(
    params: &SystemParams,
    spins: &[Spin],
    alpha0: &[Complex64],
    dt: f64,
) -> Result<SemiclassicalRun> {
    params.validate()?;
    if spins.len() != params.sites {
        return Err(Error::domain(format!(
            "{} initial spins for L = {}",
            spins.len(),
            params.sites
        )));
    }
    let mut state = SemiclassicalState::product(spins, alpha0.to_vec())?;
    let integrator = SemiclassicalIntegrator::new(params, &state)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("sc_dt", format!("must be positive, got {dt}")));
    }
    let ratio = params.dt_sample / dt;
    let per_sample = ratio.round();
    if per_sample < 1.0 || (ratio - per_sample).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config(
            "sc_dt",
            format!("dt_sample = {} is not a multiple of {dt}", params.dt_sample),
        ));
    }
    let per_sample = per_sample as usize;
    let samples = (params.t_max / params.dt_sample + 1e-9).floor() as usize + 1;

    let mut frames = Vec::with_capacity(samples);
    let mut report = SemiclassicalReport {
        dt,
        steps: 0,
        energy0: 0.0,
        max_norm_drift: 0.0,
        max_rel_energy_drift: 0.0,
    };
    let mut last_good_t = 0.0;
    for k in 0..samples {
        if k > 0 {
            for _ in 0..per_sample {
                let r = integrator.step(&mut state, dt).map_err(|e| Error::Propagation {
                    last_good_t,
                    source: Box::new(e),
                })?;
                report.steps += 1;
                report.max_norm_drift = report.max_norm_drift.max(r.norm_drift);
            }
            // keep sample times exact multiples of dt_sample
            state.t = k as f64 * params.dt_sample;
        }
        let frame = semiclassical_frame(&state, params)?;
        if k == 0 {
            report.energy0 = frame.energy;
        }
        let rel = (frame.energy - report.energy0).abs() / report.energy0.abs().max(1.0);
        report.max_rel_energy_drift = report.max_rel_energy_drift.max(rel);
        last_good_t = frame.t;
        frames.push(frame);
    }
    Ok(SemiclassicalRun {
        frames,
        report,
        final_state: state,
    })
}

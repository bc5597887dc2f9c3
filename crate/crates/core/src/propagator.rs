//! Krylov (Lanczos) propagation `ψ(t + δ) = e^{-iHδ} ψ(t)` and the sampling loop.
//!
//! Each step builds an orthonormal Krylov basis with full reorthogonalization,
//! exponentiates the small tridiagonal projection exactly, and stops as soon
//! as the a-posteriori estimate `β_m |[e^{-iT_m δ} e₁]_m|` falls below the
//! tolerance. A vanishing `β` means the basis spans an invariant subspace and
//! the result is exact.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianOperator, LinearOperator};
use crate::params::SystemParams;
use crate::space::{inner, norm, StateVector};

/// Largest norm drift a step may repair by renormalizing.
pub const NORM_REPAIR_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPlan {
    pub dt_step: f64,
    /// Integer multiple of `dt_step`.
    pub dt_sample: f64,
    pub t_max: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
}

impl PropagationPlan {
    pub fn from_params(p: &SystemParams) -> Self {
        PropagationPlan {
            dt_step: p.dt_step,
            dt_sample: p.dt_sample,
            t_max: p.t_max,
            krylov_dim: p.krylov_dim,
            krylov_tol: p.krylov_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.dt_step, self.dt_sample, self.krylov_tol]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.t_max >= 0.0) || self.krylov_dim < 2 {
            return Err(Error::domain(format!("invalid propagation plan {self:?}")));
        }
        let ratio = self.dt_sample / self.dt_step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::domain(format!(
                "dt_sample = {} is not a multiple of dt_step = {}",
                self.dt_sample, self.dt_step
            )));
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.dt_sample / self.dt_step).round() as usize
    }

    /// Number of sampled times `0, dt_sample, …` not exceeding `t_max`.
    pub fn sample_count(&self) -> usize {
        (self.t_max / self.dt_sample + 1e-9).floor() as usize + 1
    }
}

/// Diagnostics of one Krylov step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub error_estimate: f64,
    /// The Krylov space became invariant; the step is exact.
    pub breakdown: bool,
    /// `|‖ψ‖ - 1|` before renormalization.
    pub norm_drift: f64,
}

/// Reusable Lanczos workspace.
#[derive(Debug)]
pub struct KrylovPropagator {
    krylov_dim: usize,
    tol: f64,
    basis: Vec<Vec<Complex64>>,
}

impl KrylovPropagator {
    pub fn new(krylov_dim: usize, tol: f64) -> Self {
        KrylovPropagator {
            krylov_dim,
            tol,
            basis: Vec::new(),
        }
    }

    fn ensure_basis(&mut self, count: usize, dim: usize) {
        while self.basis.len() < count {
            self.basis.push(vec![Complex64::new(0.0, 0.0); dim]);
        }
        for v in &mut self.basis {
            if v.len() != dim {
                v.resize(dim, Complex64::new(0.0, 0.0));
            }
        }
    }

    /// Replaces `psi` by `e^{-iH dt} psi`.
    pub fn step<H: LinearOperator + ?Sized>(
        &mut self,
        h: &H,
        psi: &mut [Complex64],
        dt: f64,
    ) -> Result<StepStats> {
        let dim = h.dim();
        assert_eq!(psi.len(), dim);
        let beta0 = norm(psi);
        if beta0 == 0.0 || !beta0.is_finite() {
            return Err(Error::domain("cannot propagate a zero or non-finite state"));
        }
        if dt == 0.0 {
            return Ok(StepStats {
                iterations: 0,
                error_estimate: 0.0,
                breakdown: false,
                norm_drift: (beta0 - 1.0).abs(),
            });
        }
        let m = self.krylov_dim.min(dim);
        self.ensure_basis(1, dim);
        for (v, a) in self.basis[0].iter_mut().zip(psi.iter()) {
            *v = a / beta0;
        }

        let mut alphas: Vec<f64> = Vec::with_capacity(m);
        let mut betas: Vec<f64> = Vec::with_capacity(m);
        let mut coeffs;
        let mut estimate;
        let mut breakdown = false;
        let mut j = 0;
        loop {
            self.ensure_basis(j + 2, dim);
            let (done, rest) = self.basis.split_at_mut(j + 1);
            let w = &mut rest[0];
            h.apply_into(&done[j], w);

            let alpha = inner(&done[j], w).re;
            for (x, v) in w.iter_mut().zip(&done[j]) {
                *x -= v * alpha;
            }
            if j > 0 {
                let b = betas[j - 1];
                for (x, v) in w.iter_mut().zip(&done[j - 1]) {
                    *x -= v * b;
                }
            }
            for v in done.iter() {
                let c = inner(v, w);
                for (x, y) in w.iter_mut().zip(v) {
                    *x -= y * c;
                }
            }
            alphas.push(alpha);
            let beta = norm(w);

            coeffs = tridiagonal_exp(&alphas, &betas, dt);
            estimate = beta0 * beta * coeffs[j].norm();
            let scale = alphas.iter().map(|a| a.abs()).fold(1.0, f64::max);
            if beta <= 1e-13 * scale {
                breakdown = true;
                break;
            }
            if estimate <= self.tol {
                break;
            }
            if j + 1 >= m {
                return Err(Error::StepTooLarge {
                    estimate,
                    tolerance: self.tol,
                    iterations: j + 1,
                });
            }
            let inv = 1.0 / beta;
            w.iter_mut().for_each(|x| *x *= inv);
            betas.push(beta);
            j += 1;
        }

        psi.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for (c, v) in coeffs.iter().zip(&self.basis) {
            let c = c * beta0;
            for (a, x) in psi.iter_mut().zip(v) {
                *a += x * c;
            }
        }
        let n = norm(psi);
        let drift = (n - 1.0).abs();
        if drift >= NORM_REPAIR_LIMIT {
            return Err(Error::NormDrift {
                drift,
                limit: NORM_REPAIR_LIMIT,
            });
        }
        let inv = 1.0 / n;
        psi.iter_mut().for_each(|a| *a *= inv);
        Ok(StepStats {
            iterations: alphas.len(),
            error_estimate: estimate,
            breakdown,
            norm_drift: drift,
        })
    }
}

/// `e^{-iT dt} e₁` for the symmetric tridiagonal `T` with diagonal `alphas`
/// and off-diagonal `betas` (`betas.len() == alphas.len() - 1`).
fn tridiagonal_exp(alphas: &[f64], betas: &[f64], dt: f64) -> Vec<Complex64> {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let v = &eig.eigenvectors;
    (0..k)
        .map(|r| {
            (0..k)
                .map(|l| {
                    Complex64::from_polar(v[(r, l)] * v[(0, l)], -eig.eigenvalues[l] * dt)
                })
                .sum()
        })
        .collect()
}

/// One Krylov step on a [`StateVector`].
pub fn krylov_step(
    h: &HamiltonianOperator,
    psi: &StateVector,
    dt: f64,
    krylov_dim: usize,
    krylov_tol: f64,
) -> Result<StateVector> {
    if psi.space() != h.space() {
        return Err(Error::domain("state does not belong to the Hamiltonian's space"));
    }
    let mut out = psi.clone();
    KrylovPropagator::new(krylov_dim, krylov_tol).step(h, out.amplitudes_mut(), dt)?;
    Ok(out)
}

/// What the observer sees at each sampled time.
#[derive(Debug)]
pub struct Sample<'a> {
    pub t: f64,
    pub state: &'a StateVector,
    pub energy: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    pub samples: usize,
    pub final_t: f64,
    pub energy0: f64,
    /// Largest `|‖ψ‖ - 1|`, before any renormalization.
    pub max_norm_drift: f64,
    /// Largest `|E(t) - E(0)| / max(1, |E(0)|)` over samples.
    pub max_rel_energy_drift: f64,
    pub steps: usize,
    pub matvecs: usize,
}

/// Propagates `psi0` to `plan.t_max`, calling `observer` at `t = k · dt_sample`.
/// Returns the report and the final state. On failure the error carries the
/// last sampled time.
pub fn evolve_and_sample<F>(
    h: &HamiltonianOperator,
    psi0: StateVector,
    plan: &PropagationPlan,
    mut observer: F,
) -> Result<(EvolutionReport, StateVector)>
where
    F: FnMut(&Sample<'_>) -> Result<()>,
{
    plan.validate()?;
    if psi0.space() != h.space() {
        return Err(Error::domain("initial state does not belong to the Hamiltonian's space"));
    }
    let mut psi = psi0;
    let mut prop = KrylovPropagator::new(plan.krylov_dim, plan.krylov_tol);
    let steps = plan.steps_per_sample();
    let samples = plan.sample_count();
    let mut report = EvolutionReport {
        samples: 0,
        final_t: 0.0,
        energy0: 0.0,
        max_norm_drift: 0.0,
        max_rel_energy_drift: 0.0,
        steps: 0,
        matvecs: 0,
    };
    let mut last_good_t = 0.0;
    let fail = |t: f64, e: Error| Error::Propagation {
        last_good_t: t,
        source: Box::new(e),
    };

    for k in 0..samples {
        let t = k as f64 * plan.dt_sample;
        if k > 0 {
            for _ in 0..steps {
                let stats = prop
                    .step(h, psi.amplitudes_mut(), plan.dt_step)
                    .map_err(|e| fail(last_good_t, e))?;
                report.steps += 1;
                report.matvecs += stats.iterations;
                report.max_norm_drift = report.max_norm_drift.max(stats.norm_drift);
            }
        }
        let energy = h.energy_expectation(&psi).map_err(|e| fail(last_good_t, e))?;
        report.matvecs += 1;
        let norm = psi.norm();
        report.max_norm_drift = report.max_norm_drift.max((norm - 1.0).abs());
        if k == 0 {
            report.energy0 = energy;
        }
        let drift = (energy - report.energy0).abs() / report.energy0.abs().max(1.0);
        report.max_rel_energy_drift = report.max_rel_energy_drift.max(drift);
        observer(&Sample {
            t,
            state: &psi,
            energy,
            norm,
        })
        .map_err(|e| fail(last_good_t, e))?;
        last_good_t = t;
        report.samples += 1;
        report.final_t = t;
    }
    Ok((report, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_assemble;
    use crate::space::{build_initial_state, HilbertSpace, PhononInit};

    fn rabi_params() -> SystemParams {
        let mut p = SystemParams::centered(1, 1);
        p.left = 0;
        p.h_x = 0.2;
        p.h_z = 0.0;
        p
    }

    #[test]
    fn stationary_basis_state_only_gains_phase() {
        let mut p = SystemParams::centered(5, 2);
        p.h_x = 0.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let idx = psi.amplitudes().iter().position(|a| a.norm() > 0.0).unwrap();
        let e = h.spin_diagonal(idx);
        let out = krylov_step(&h, &psi, 0.7, 10, 1e-12).unwrap();
        assert!((out.amplitudes()[idx] - Complex64::from_polar(1.0, -e * 0.7)).norm() < 1e-13);
        for (k, a) in out.amplitudes().iter().enumerate() {
            assert_eq!(a.norm() == 0.0, k != idx);
        }
    }

    #[test]
    fn rabi_oscillation() {
        let p = rabi_params();
        let h = HamiltonianOperator::bare(&p).unwrap();
        let mut psi = StateVector::basis(*h.space(), 0).unwrap();
        let mut prop = KrylovPropagator::new(10, 1e-12);
        for k in 1..=100 {
            prop.step(&h, psi.amplitudes_mut(), 0.1).unwrap();
            let t = 0.1 * k as f64;
            let sz = psi.amplitudes()[0].norm_sqr() - psi.amplitudes()[1].norm_sqr();
            assert!((sz - (2.0 * 0.2 * t).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let mut p = SystemParams::centered(4, 2);
        p.n_max = 1;
        p.omega0 = 0.7;
        p.g = 0.3;
        p.h_x = 0.45;
        p.h_z = 0.6;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi0 = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let exact = dense_assemble(&h).unwrap().dense_evolve(&psi0, 10.0).unwrap();
        let mut psi = psi0.clone();
        let mut prop = KrylovPropagator::new(30, 1e-12);
        for _ in 0..100 {
            prop.step(&h, psi.amplitudes_mut(), 0.1).unwrap();
        }
        let d = psi.max_abs_diff(&exact);
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn invariant_subspace_breakdown_is_exact() {
        let p = rabi_params();
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = StateVector::basis(*h.space(), 0).unwrap();
        let mut out = psi.clone();
        let stats = KrylovPropagator::new(10, 1e-300)
            .step(&h, out.amplitudes_mut(), 2.0)
            .unwrap();
        assert!(stats.breakdown);
        assert_eq!(stats.iterations, 2);
        let sz = out.amplitudes()[0].norm_sqr() - out.amplitudes()[1].norm_sqr();
        assert!((sz - (0.8f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn too_large_step_is_reported() {
        let mut p = SystemParams::centered(8, 2);
        p.h_x = 0.8;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let err = krylov_step(&h, &psi, 20.0, 4, 1e-9).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { iterations: 4, .. }), "{err}");
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let mut p = SystemParams::centered(6, 2);
        p.n_max = 2;
        p.g = 0.2;
        p.omega0 = 0.5;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi0 = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let mut psi = psi0.clone();
        let mut prop = KrylovPropagator::new(30, 1e-10);
        for _ in 0..20 {
            prop.step(&h, psi.amplitudes_mut(), 0.25).unwrap();
        }
        for _ in 0..20 {
            prop.step(&h, psi.amplitudes_mut(), -0.25).unwrap();
        }
        let diff: f64 = psi
            .amplitudes()
            .iter()
            .zip(psi0.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn zero_duration_emits_one_frame() {
        let mut p = SystemParams::centered(4, 2);
        p.t_max = 0.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let mut times = Vec::new();
        let (report, _) = evolve_and_sample(&h, psi, &PropagationPlan::from_params(&p), |s| {
            times.push(s.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(times, vec![0.0]);
        assert_eq!(report.samples, 1);
    }

    #[test]
    fn energy_conserved_over_long_run() {
        let mut p = SystemParams::centered(8, 4);
        p.t_max = 100.0;
        p.dt_step = 0.25;
        p.dt_sample = 2.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let mut times = Vec::new();
        let (report, _) = evolve_and_sample(&h, psi, &PropagationPlan::from_params(&p), |s| {
            times.push(s.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(times.len(), 51);
        assert_eq!(*times.last().unwrap(), 100.0);
        assert!(report.max_rel_energy_drift < 1e-9, "{report:?}");
        assert!(report.max_norm_drift < 1e-8);
    }

    #[test]
    fn failure_reports_last_good_time() {
        let mut p = SystemParams::centered(6, 2);
        p.h_x = 0.8;
        p.dt_step = 2.0;
        p.dt_sample = 2.0;
        p.krylov_dim = 3;
        p.t_max = 10.0;
        let h = HamiltonianOperator::bare(&p).unwrap();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let err = evolve_and_sample(&h, psi, &PropagationPlan::from_params(&p), |_| Ok(()))
            .unwrap_err();
        assert!(matches!(err, Error::Propagation { last_good_t, .. } if last_good_t == 0.0));
    }

    #[test]
    fn space_mismatch_rejected() {
        let p = SystemParams::centered(4, 2);
        let h = HamiltonianOperator::bare(&p).unwrap();
        let other = StateVector::basis(HilbertSpace::new(3, 0).unwrap(), 0).unwrap();
        assert!(krylov_step(&h, &other, 0.1, 10, 1e-9).is_err());
    }

    #[test]
    fn plan_validation() {
        let p = SystemParams::centered(4, 2);
        let mut plan = PropagationPlan::from_params(&p);
        assert_eq!(plan.steps_per_sample(), 10);
        assert_eq!(plan.sample_count(), 201);
        plan.dt_sample = 0.07;
        assert!(plan.validate().is_err());
    }
}

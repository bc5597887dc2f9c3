//! Brute-force reference backend for small spaces: dense assembly, dense
//! exponentials by Hermitian eigendecomposition, and observables by full
//! enumeration of the basis using the correlator formulas directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianOperator, LinearOperator, Variant};
use crate::params::{Boundary, SystemParams};
use crate::space::{HilbertSpace, Spin, StateVector};

/// Largest dimension the dense backend accepts.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<Complex64>,
    space: HilbertSpace,
}

/// Eigenpairs of a [`DenseOperator`], eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    vectors: DMatrix<Complex64>,
    space: HilbertSpace,
}

fn check_limit(dim: usize) -> Result<()> {
    if dim > DENSE_LIMIT {
        return Err(Error::Capacity(format!(
            "dense backend limited to dimension {DENSE_LIMIT}, got {dim}"
        )));
    }
    Ok(())
}

/// Column `k` is `H e_k`.
pub fn dense_assemble(h: &HamiltonianOperator) -> Result<DenseOperator> {
    let space = *h.space();
    let dim = space.dim();
    check_limit(dim)?;
    let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
    let mut e = vec![Complex64::new(0.0, 0.0); dim];
    let mut col = vec![Complex64::new(0.0, 0.0); dim];
    for k in 0..dim {
        e[k] = Complex64::new(1.0, 0.0);
        h.apply_into(&e, &mut col);
        e[k] = Complex64::new(0.0, 0.0);
        matrix.column_mut(k).copy_from_slice(&col);
    }
    Ok(DenseOperator { matrix, space })
}

/// Builds the Hamiltonian from Kronecker products of single-site matrices,
/// independently of the matrix-free kernel. Site ordering follows the flat
/// index layout: spins are the fastest factors, phonons the slowest.
pub fn kron_assemble(params: &SystemParams, variant: Variant) -> Result<DenseOperator> {
    params.validate()?;
    let space = HilbertSpace::for_params(params)?;
    check_limit(space.dim())?;
    let sites = params.sites;
    let d = params.n_max + 1;
    let c = |re: f64| Complex64::new(re, 0.0);

    let sz = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
    let sx = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
    // |↑⟩ = e_0, |↓⟩ = e_1, σ⁺ = |↑⟩⟨↓|
    let sp = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    let sm = sp.transpose();
    let mut a = DMatrix::<Complex64>::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    let ad = a.transpose();
    let num = &ad * &a;
    let id2 = DMatrix::<Complex64>::identity(2, 2);
    let idp = DMatrix::<Complex64>::identity(d, d);

    // Operator acting as `spin_ops[j]` on spin j and `ph_ops[j]` on phonon j.
    let embed = |spin_ops: &[(usize, &DMatrix<Complex64>)],
                 ph_ops: &[(usize, &DMatrix<Complex64>)]|
     -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::identity(1, 1);
        for j in (0..sites).rev() {
            let f = ph_ops.iter().find(|(s, _)| *s == j).map_or(&idp, |(_, o)| *o);
            m = m.kronecker(f);
        }
        for j in (0..sites).rev() {
            let f = spin_ops.iter().find(|(s, _)| *s == j).map_or(&id2, |(_, o)| *o);
            m = m.kronecker(f);
        }
        m
    };

    let dim = space.dim();
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let mut bonds: Vec<(usize, usize)> = (0..sites.saturating_sub(1)).map(|j| (j, j + 1)).collect();
    if params.boundary == Boundary::Closed {
        bonds.push((sites - 1, 0));
    }
    for (i, j) in bonds {
        h -= embed(&[(i, &sz), (j, &sz)], &[]);
    }
    for j in 0..sites {
        h -= embed(&[(j, &sz)], &[]) * c(params.h_z);
        h += embed(&[], &[(j, &num)]) * c(params.omega0);
    }
    match variant {
        Variant::Bare => {
            let disp = &a + &ad;
            for j in 0..sites {
                h -= embed(&[(j, &sx)], &[]) * c(params.h_x);
                h += embed(&[(j, &sz)], &[(j, &disp)]) * c(params.g);
            }
        }
        Variant::LangFirsov => {
            let gamma = params.gamma();
            let gen = &ad - &a;
            let raise = (&gen * c(-2.0 * gamma)).exp();
            let lower = (&gen * c(2.0 * gamma)).exp();
            for j in 0..sites {
                h -= embed(&[(j, &sp)], &[(j, &raise)]) * c(params.h_x);
                h -= embed(&[(j, &sm)], &[(j, &lower)]) * c(params.h_x);
            }
            h -= DMatrix::<Complex64>::identity(dim, dim) * c(params.sites as f64 * params.g * params.g / params.omega0);
        }
    }
    Ok(DenseOperator { matrix: h, space })
}

impl DenseOperator {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// Largest `|H_ij - conj(H_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.matrix;
        (&m.adjoint() - m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        (&self.matrix - &other.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn spectrum(&self) -> DenseSpectrum {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.matrix.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        DenseSpectrum {
            values,
            vectors,
            space: self.space,
        }
    }

    /// `e^{-iHt} ψ₀` through the eigendecomposition.
    pub fn dense_evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        self.spectrum().evolve(psi0, t)
    }
}

impl DenseSpectrum {
    pub fn evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        if psi0.space() != &self.space {
            return Err(Error::domain("state does not belong to the dense operator's space"));
        }
        let psi = DVector::from_column_slice(psi0.amplitudes());
        let mut coeffs = self.vectors.adjoint() * psi;
        for (c, &e) in coeffs.iter_mut().zip(&self.values) {
            *c *= Complex64::from_polar(1.0, -e * t);
        }
        let out = &self.vectors * coeffs;
        StateVector::from_amplitudes(self.space, out.as_slice().to_vec())
    }

    /// Largest `‖H v - λ v‖` over all eigenpairs.
    pub fn max_residual(&self, h: &DenseOperator) -> f64 {
        let hv = &h.matrix * &self.vectors;
        (0..self.values.len())
            .map(|k| {
                let r = hv.column(k) - self.vectors.column(k) * Complex64::new(self.values[k], 0.0);
                r.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Observables evaluated by enumerating every basis state, decoding it, and
/// summing the correlator expressions term by term.
#[derive(Debug, Clone)]
pub struct EnumeratedObservables {
    pub sigma_z: Vec<f64>,
    pub d_bond: Vec<f64>,
    pub d_in: f64,
    pub d_bd: f64,
    pub delta_in: f64,
    pub delta_bd: f64,
    pub s_cr: f64,
    pub s_ed: f64,
    pub n_mean: Vec<f64>,
    pub n_std: Vec<f64>,
}

/// `left`/`width` are the string geometry; 1 ≤ left and left + width ≤ L - 1.
pub fn enumerate_observables(
    psi: &StateVector,
    boundary: Boundary,
    left: usize,
    width: usize,
) -> Result<EnumeratedObservables> {
    let space = *psi.space();
    let sites = space.sites();
    let mut z1 = vec![0.0; sites];
    let mut z2 = vec![vec![0.0; sites]; sites];
    let mut z4 = std::collections::HashMap::<[usize; 4], f64>::new();
    let mut n1 = vec![0.0; sites];
    let mut n2 = vec![0.0; sites];

    // 1-based bond j couples sites j and j+1; work 0-based below.
    let mut bonds: Vec<(usize, usize)> = (0..sites - 1).map(|j| (j, j + 1)).collect();
    if boundary == Boundary::Closed {
        bonds.push((sites - 1, 0));
    }
    let interior: Vec<(usize, usize)> = (left..left + width - 1).map(|j| (j, j + 1)).collect();
    let outer = [(left - 1, left), (left + width - 1, left + width)];
    let mut quads = Vec::new();
    for a in interior.iter().chain(&outer) {
        for b in interior.iter().chain(&outer) {
            quads.push([a.0, a.1, b.0, b.1]);
        }
    }

    for idx in 0..space.dim() {
        let p = psi.amplitudes()[idx].norm_sqr();
        if p == 0.0 {
            continue;
        }
        let (spins, occ) = space.decode(idx)?;
        let z: Vec<f64> = spins.iter().map(|s: &Spin| s.sigma_z()).collect();
        for i in 0..sites {
            z1[i] += p * z[i];
            for j in 0..sites {
                z2[i][j] += p * z[i] * z[j];
            }
            n1[i] += p * occ[i] as f64;
            n2[i] += p * (occ[i] * occ[i]) as f64;
        }
        for q in &quads {
            *z4.entry(*q).or_default() += p * z[q[0]] * z[q[1]] * z[q[2]] * z[q[3]];
        }
    }

    let d_bond: Vec<f64> = bonds.iter().map(|&(i, j)| 0.5 - 0.5 * z2[i][j]).collect();
    let d_in = interior.iter().map(|&(i, j)| 0.5 - 0.5 * z2[i][j]).sum();
    let d_bd = outer.iter().map(|&(i, j)| 0.5 - 0.5 * z2[i][j]).sum();

    // Δ_in = ½ [Σ_{i,j} ⟨zᵢzᵢ₊₁zⱼzⱼ₊₁⟩ - ⟨zᵢzᵢ₊₁⟩⟨zⱼzⱼ₊₁⟩]^½
    let mut var_in = 0.0;
    for a in &interior {
        for b in &interior {
            var_in += z4[&[a.0, a.1, b.0, b.1]] - z2[a.0][a.1] * z2[b.0][b.1];
        }
    }
    let delta_in = 0.5 * var_in.max(0.0).sqrt();

    // Δ_bd = ½ [2 + 2⟨AB⟩ - ⟨A⟩² - 2⟨A⟩⟨B⟩ - ⟨B⟩²]^½ with A, B the two boundary bonds.
    let (a, b) = (outer[0], outer[1]);
    let za = z2[a.0][a.1];
    let zb = z2[b.0][b.1];
    let zab = z4[&[a.0, a.1, b.0, b.1]];
    let var_bd = 2.0 + 2.0 * zab - za * za - 2.0 * za * zb - zb * zb;
    let delta_bd = 0.5 * var_bd.max(0.0).sqrt();

    let s_ed = z1[left] + z1[left + width - 1];
    let s_cr = (left + 1..left + width - 1).map(|j| z1[j]).sum();
    let n_std = n1
        .iter()
        .zip(&n2)
        .map(|(m, s)| (s - m * m).max(0.0).sqrt())
        .collect();
    Ok(EnumeratedObservables {
        sigma_z: z1,
        d_bond,
        d_in,
        d_bd,
        delta_in,
        delta_bd,
        s_cr,
        s_ed,
        n_mean: n1,
        n_std,
    })
}

//! Domain-wall, magnetization and phonon observables.
//!
//! Every operator measured here is diagonal in the `(σᶻ, n)` product basis,
//! so a state is first reduced to its spin-configuration distribution and its
//! per-site phonon marginals; every observable follows from those.
//!
//! Bonds are numbered from 1: bond `j` joins sites `j` and `j + 1`, and for
//! closed chains bond `L` joins site `L` and site 1. With `l` up spins left of
//! a width-`w` string, the interior bonds are `l+1 ..= l+w-1` and the two
//! boundary bonds are `l` and `l+w`.

use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{Boundary, SystemParams};
use crate::space::StateVector;

/// Roundoff allowance below zero for computed variances.
pub const VARIANCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableFrame {
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
    pub d_in: f64,
    pub d_bd: f64,
    pub delta_in: f64,
    pub delta_bd: f64,
    pub s_cr: f64,
    pub s_ed: f64,
    /// `D_j` for every physical bond.
    pub d_bond: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub n_mean: Vec<f64>,
    pub n_std: Vec<f64>,
}

/// Probability of each spin configuration and each per-site occupation.
#[derive(Debug, Clone)]
pub struct Distributions {
    pub sites: usize,
    /// Indexed by the spin bits of the flat index.
    pub spin: Vec<f64>,
    /// `phonon[j][n]` = probability of `n` phonons on site `j`.
    pub phonon: Vec<Vec<f64>>,
}

impl Distributions {
    pub fn of(psi: &StateVector) -> Self {
        let space = psi.space();
        let ds = space.dim_spin();
        let amps = psi.amplitudes();
        let mut spin = vec![0.0; ds];
        let mut phonon = vec![vec![0.0; space.local_phonon_dim()]; space.sites()];
        for (p, block) in amps.chunks(ds).enumerate() {
            let mut weight = 0.0;
            for (acc, a) in spin.iter_mut().zip(block) {
                let w = a.norm_sqr();
                *acc += w;
                weight += w;
            }
            for (j, n) in space.phonon_digits(p).into_iter().enumerate() {
                phonon[j][n] += weight;
            }
        }
        Distributions {
            sites: space.sites(),
            spin,
            phonon,
        }
    }

    fn bonds(&self, boundary: Boundary) -> usize {
        match boundary {
            Boundary::Open => self.sites - 1,
            Boundary::Closed => self.sites,
        }
    }

    /// Bitmask of domain walls: bit `b` set when bond `b + 1` is a wall.
    fn walls(&self, s: usize, boundary: Boundary) -> usize {
        let l = self.sites;
        let mut dw = (s ^ (s >> 1)) & ((1usize << (l - 1)) - 1);
        if boundary == Boundary::Closed {
            dw |= ((s ^ (s >> (l - 1))) & 1) << (l - 1);
        }
        dw
    }

    pub fn domain_walls(&self, boundary: Boundary) -> Vec<f64> {
        let mut d = vec![0.0; self.bonds(boundary)];
        for (s, &p) in self.spin.iter().enumerate() {
            let mut dw = self.walls(s, boundary);
            while dw != 0 {
                d[dw.trailing_zeros() as usize] += p;
                dw &= dw - 1;
            }
        }
        d
    }

    pub fn sigma_z(&self) -> Vec<f64> {
        let mut down = vec![0.0; self.sites];
        let mut total = 0.0;
        for (s, &p) in self.spin.iter().enumerate() {
            total += p;
            let mut bits = s;
            while bits != 0 {
                down[bits.trailing_zeros() as usize] += p;
                bits &= bits - 1;
            }
        }
        down.into_iter().map(|d| total - 2.0 * d).collect()
    }

    /// Mean and standard deviation of the wall count on the bonds in `mask`.
    fn wall_count_moments(&self, mask: usize) -> Result<(f64, f64)> {
        let mut hist = vec![0.0; mask.count_ones() as usize + 1];
        for (s, &p) in self.spin.iter().enumerate() {
            hist[(self.walls(s, Boundary::Open) & mask).count_ones() as usize] += p;
        }
        let mean: f64 = hist.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
        Ok((mean, clamped_sqrt(centered_variance(&hist))?))
    }

    pub fn string_aggregates(&self, left: usize, width: usize) -> Result<(f64, f64)> {
        let g = Geometry::new(self.sites, left, width)?;
        let (d_in, _) = self.wall_count_moments(g.interior_mask)?;
        let (d_bd, _) = self.wall_count_moments(g.boundary_mask)?;
        Ok((d_in, d_bd))
    }

    pub fn string_variances(&self, left: usize, width: usize) -> Result<(f64, f64)> {
        let g = Geometry::new(self.sites, left, width)?;
        let (_, delta_in) = self.wall_count_moments(g.interior_mask)?;
        let (_, delta_bd) = self.wall_count_moments(g.boundary_mask)?;
        Ok((delta_in, delta_bd))
    }

    pub fn phonon_statistics(&self) -> (Vec<f64>, Vec<f64>) {
        let mut mean = Vec::with_capacity(self.sites);
        let mut std = Vec::with_capacity(self.sites);
        for dist in &self.phonon {
            mean.push(dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum());
            std.push(centered_variance(dist).max(0.0).sqrt());
        }
        (mean, std)
    }
}

/// Variance of the integer-valued distribution `hist[k] = P(k)`, taken about
/// the normalized mean. `⟨k²⟩ - ⟨k⟩²` would leave `sqrt(ε)` residues on sharp
/// distributions.
fn centered_variance(hist: &[f64]) -> f64 {
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean = hist.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() / total;
    hist.iter()
        .enumerate()
        .map(|(k, p)| p * (k as f64 - mean).powi(2))
        .sum::<f64>()
        / total
}

fn clamped_sqrt(var: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var.sqrt())
    } else if var >= -VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::domain(format!("negative variance {var:e}")))
    }
}

/// String placement with both boundary bonds inside the chain.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    interior_mask: usize,
    boundary_mask: usize,
}

impl Geometry {
    fn new(sites: usize, left: usize, width: usize) -> Result<Self> {
        if width < 1 || left < 1 || left + width > sites.saturating_sub(1) {
            return Err(Error::domain(format!(
                "string l = {left}, w = {width} must satisfy 1 <= l and l + w <= L - 1 = {}",
                sites.saturating_sub(1)
            )));
        }
        // 0-based bit b is bond b + 1; interior bonds l+1..=l+w-1 → bits l..l+w-1
        let interior_mask = ((1usize << (width - 1)) - 1) << left;
        let boundary_mask = (1usize << (left - 1)) | (1usize << (left + width - 1));
        Ok(Geometry {
            interior_mask,
            boundary_mask,
        })
    }
}

/// `D_j = ⟨½ - ½ σᶻ_j σᶻ_{j+1}⟩` for every physical bond.
pub fn domain_wall_profile(psi: &StateVector, boundary: Boundary) -> Vec<f64> {
    Distributions::of(psi).domain_walls(boundary)
}

/// `(D_in, D_bd)` for a string of width `w` after `l` up spins.
pub fn string_aggregates(psi: &StateVector, left: usize, width: usize) -> Result<(f64, f64)> {
    Distributions::of(psi).string_aggregates(left, width)
}

/// `(Δ_in, Δ_bd)`, the standard deviations of the interior and boundary wall counts.
pub fn string_variances(psi: &StateVector, left: usize, width: usize) -> Result<(f64, f64)> {
    Distributions::of(psi).string_variances(left, width)
}

/// `(⟨σᶻ_j⟩, S_cr, S_ed)` with `S_ed = ⟨σᶻ_{l+1}⟩ + ⟨σᶻ_{l+w}⟩` and
/// `S_cr = Σ_{j=l+2}^{l+w-1} ⟨σᶻ_j⟩`.
pub fn magnetization_measures(
    psi: &StateVector,
    left: usize,
    width: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let z = Distributions::of(psi).sigma_z();
    let (s_cr, s_ed) = core_and_edges(&z, left, width)?;
    Ok((z, s_cr, s_ed))
}

fn core_and_edges(z: &[f64], left: usize, width: usize) -> Result<(f64, f64)> {
    if width < 2 || left + width > z.len() {
        return Err(Error::domain(format!(
            "magnetization measures need w >= 2 inside the chain, got l = {left}, w = {width}"
        )));
    }
    let s_ed = z[left] + z[left + width - 1];
    let s_cr = z[left + 1..left + width - 1].iter().sum();
    Ok((s_cr, s_ed))
}

/// Per-site `⟨n_j⟩` and `sqrt(⟨n_j²⟩ - ⟨n_j⟩²)`.
pub fn phonon_statistics(psi: &StateVector) -> (Vec<f64>, Vec<f64>) {
    Distributions::of(psi).phonon_statistics()
}

/// All observables of one sample.
pub fn measure_frame(
    psi: &StateVector,
    params: &SystemParams,
    t: f64,
    energy: f64,
) -> Result<ObservableFrame> {
    let dist = Distributions::of(psi);
    frame_from_distributions(&dist, params, t, energy, psi.norm())
}

pub(crate) fn frame_from_distributions(
    dist: &Distributions,
    params: &SystemParams,
    t: f64,
    energy: f64,
    norm: f64,
) -> Result<ObservableFrame> {
    let (left, width) = (params.left, params.width);
    let g = Geometry::new(dist.sites, left, width)?;
    let (d_in, delta_in) = dist.wall_count_moments(g.interior_mask)?;
    let (d_bd, delta_bd) = dist.wall_count_moments(g.boundary_mask)?;
    let sigma_z = dist.sigma_z();
    let (s_cr, s_ed) = core_and_edges(&sigma_z, left, width)?;
    let (n_mean, n_std) = dist.phonon_statistics();
    Ok(ObservableFrame {
        t,
        norm,
        energy,
        d_in,
        d_bd,
        delta_in,
        delta_bd,
        s_cr,
        s_ed,
        d_bond: dist.domain_walls(params.boundary),
        sigma_z,
        n_mean,
        n_std,
    })
}

/// Qualitative outcome of the string dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fate {
    Breaking,
    Contraction,
    Ambiguous,
}

impl fmt::Display for Fate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fate::Breaking => "breaking",
            Fate::Contraction => "contraction",
            Fate::Ambiguous => "ambiguous",
        })
    }
}

/// Minimum rise of `S_cr` (core) and `S_ed` (edges) that counts as a change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FateThresholds {
    pub core: f64,
    pub edge: f64,
}

impl Default for FateThresholds {
    fn default() -> Self {
        FateThresholds {
            core: 1.0,
            edge: 1.0,
        }
    }
}

/// Labels `(S_cr, S_ed)` relative to the string state's `(-(w-2), -2)`.
pub fn classify_string_fate(s_cr: f64, s_ed: f64, width: usize) -> Fate {
    classify_string_fate_with(s_cr, s_ed, width, FateThresholds::default())
}

pub fn classify_string_fate_with(s_cr: f64, s_ed: f64, width: usize, th: FateThresholds) -> Fate {
    let core_rise = s_cr + width.saturating_sub(2) as f64;
    let edge_rise = s_ed + 2.0;
    if core_rise > th.core && edge_rise <= th.edge {
        Fate::Breaking
    } else if edge_rise > th.edge && core_rise <= th.core {
        Fate::Contraction
    } else {
        Fate::Ambiguous
    }
}

/// CSV header for frames over `bonds` bonds and `sites` sites.
pub fn csv_header(bonds: usize, sites: usize) -> String {
    let mut h = String::from("t,norm,energy,D_in,D_bd,Delta_in,Delta_bd,S_cr,S_ed");
    for (name, count) in [("D", bonds), ("sigma_z", sites), ("n_mean", sites), ("n_std", sites)] {
        for j in 1..=count {
            let _ = write!(h, ",{name}_{j}");
        }
    }
    h.push_str(",backend");
    h
}

/// One CSV row; floats use 17 significant digits.
pub fn csv_row(frame: &ObservableFrame, backend: &str) -> String {
    let mut row = String::new();
    let scalars = [
        frame.t,
        frame.norm,
        frame.energy,
        frame.d_in,
        frame.d_bd,
        frame.delta_in,
        frame.delta_bd,
        frame.s_cr,
        frame.s_ed,
    ];
    let vectors = [&frame.d_bond, &frame.sigma_z, &frame.n_mean, &frame.n_std];
    for v in scalars.iter().chain(vectors.into_iter().flatten()) {
        if !row.is_empty() {
            row.push(',');
        }
        let _ = write!(row, "{v:.16e}");
    }
    row.push(',');
    row.push_str(backend);
    row
}

/// Whole frames table with header and trailing newline.
pub fn frames_to_csv(frames: &[ObservableFrame], backend: &str) -> String {
    let Some(first) = frames.first() else {
        return String::new();
    };
    let mut out = csv_header(first.d_bond.len(), first.sigma_z.len());
    out.push('\n');
    for f in frames {
        out.push_str(&csv_row(f, backend));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_observables;
    use crate::space::{build_initial_state, HilbertSpace, PhononInit, Spin};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use Spin::{Down, Up};

    fn product(spins: &[Spin]) -> StateVector {
        let space = HilbertSpace::new(spins.len(), 0).unwrap();
        StateVector::basis(space, space.encode(spins, &vec![0; spins.len()]).unwrap()).unwrap()
    }

    fn superpose(a: &StateVector, b: &StateVector) -> StateVector {
        let amps = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x + y) / 2f64.sqrt())
            .collect();
        StateVector::from_amplitudes(*a.space(), amps).unwrap()
    }

    // l = 1, w = 4 in L = 6: sites 2..=5 form the string.
    fn chain(core: [Spin; 4]) -> StateVector {
        product(&[Up, core[0], core[1], core[2], core[3], Up])
    }

    #[test]
    fn single_bonds() {
        assert_eq!(domain_wall_profile(&product(&[Up, Up]), Boundary::Open), vec![0.0]);
        assert_eq!(domain_wall_profile(&product(&[Up, Down]), Boundary::Open), vec![1.0]);
        let mix = superpose(&product(&[Up, Up]), &product(&[Down, Down]));
        let d = domain_wall_profile(&mix, Boundary::Open);
        assert!(d[0].abs() < 1e-15);
    }

    #[test]
    fn closed_boundary_adds_seam_bond() {
        let d = domain_wall_profile(&product(&[Down, Up, Up, Up]), Boundary::Closed);
        assert_eq!(d, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn initial_string_l24() {
        let p = SystemParams::default();
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let d = domain_wall_profile(&psi, p.boundary);
        let walls: Vec<usize> = (0..d.len()).filter(|&b| d[b] == 1.0).map(|b| b + 1).collect();
        assert_eq!(walls, vec![10, 14]);
        let f = measure_frame(&psi, &p, 0.0, 0.0).unwrap();
        assert_eq!((f.d_in, f.d_bd), (0.0, 2.0));
        assert_eq!((f.delta_in, f.delta_bd), (0.0, 0.0));
        assert_eq!((f.s_cr, f.s_ed), (-2.0, -2.0));
        assert!(f.n_mean.iter().chain(&f.n_std).all(|&x| x == 0.0));
    }

    #[test]
    fn aggregates_of_reference_configurations() {
        assert_eq!(string_aggregates(&chain([Down, Up, Up, Down]), 1, 4).unwrap(), (2.0, 2.0));
        assert_eq!(string_aggregates(&chain([Up, Down, Down, Up]), 1, 4).unwrap(), (2.0, 0.0));
        assert_eq!(string_aggregates(&chain([Down; 4]), 1, 4).unwrap(), (0.0, 2.0));
    }

    #[test]
    fn magnetizations_of_reference_configurations() {
        let m = |c| {
            let (_, cr, ed) = magnetization_measures(&chain(c), 1, 4).unwrap();
            (cr, ed)
        };
        assert_eq!(m([Down; 4]), (-2.0, -2.0));
        assert_eq!(m([Down, Up, Up, Down]), (2.0, -2.0));
        assert_eq!(m([Up, Down, Down, Up]), (-2.0, 2.0));
        assert!(magnetization_measures(&chain([Down; 4]), 1, 1).is_err());
    }

    #[test]
    fn string_touching_edge_is_rejected() {
        let psi = chain([Down; 4]);
        assert!(string_aggregates(&psi, 0, 4).is_err());
        assert!(string_variances(&psi, 2, 4).is_err());
    }

    #[test]
    fn variance_of_half_broken_string() {
        let psi = superpose(&chain([Down; 4]), &chain([Down, Up, Up, Down]));
        let (din, dbd) = string_variances(&psi, 1, 4).unwrap();
        assert!((din - 1.0).abs() < 1e-12);
        assert!(dbd.abs() < 1e-12);
        for c in [[Down; 4], [Up, Down, Up, Down]] {
            assert_eq!(string_variances(&chain(c), 1, 4).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn phonon_superposition_statistics() {
        let space = HilbertSpace::new(1, 1).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let amps = vec![Complex64::new(r, 0.0), Complex64::new(0.0, 0.0), Complex64::new(r, 0.0), Complex64::new(0.0, 0.0)];
        let psi = StateVector::from_amplitudes(space, amps).unwrap();
        let (m, s) = phonon_statistics(&psi);
        assert!((m[0] - 0.5).abs() < 1e-15 && (s[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fate_labels() {
        assert_eq!(classify_string_fate(2.0, -2.0, 4), Fate::Breaking);
        assert_eq!(classify_string_fate(-2.0, 2.0, 4), Fate::Contraction);
        assert_eq!(classify_string_fate(-1.5, -1.5, 4), Fate::Ambiguous);
        assert_eq!(classify_string_fate(0.0, -2.0, 4), Fate::Breaking);
        assert_eq!(classify_string_fate(2.0, 2.0, 4), Fate::Ambiguous);
    }

    #[test]
    fn csv_layout() {
        let p = SystemParams::centered(4, 2);
        let psi = build_initial_state(&p, &PhononInit::Vacuum).unwrap();
        let f = measure_frame(&psi, &p, 0.5, -3.0).unwrap();
        let csv = frames_to_csv(&[f], "full");
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,norm,energy,D_in,D_bd,Delta_in,Delta_bd,S_cr,S_ed,D_1,D_2,D_3,sigma_z_1"));
        assert!(header.ends_with("n_std_4,backend"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("5.0000000000000000e-1,1.0000000000000000e0,-3.0000000000000000e0,"));
        assert_eq!(row.split(',').count(), header.split(',').count());
    }

    fn random_state(sites: usize, n_max: usize, seed: u64) -> StateVector {
        let mut rng = StdRng::seed_from_u64(seed);
        let space = HilbertSpace::new(sites, n_max).unwrap();
        let amps = (0..space.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut psi = StateVector::from_amplitudes(space, amps).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn matches_full_enumeration() {
        for (sites, n_max, left, width, boundary) in [
            (6, 1, 1, 4, Boundary::Open),
            (7, 2, 2, 3, Boundary::Closed),
            (5, 3, 1, 2, Boundary::Open),
            (8, 0, 2, 4, Boundary::Closed),
        ] {
            let psi = random_state(sites, n_max, (sites * 31 + n_max) as u64);
            let mut p = SystemParams::centered(sites, width);
            p.left = left;
            p.n_max = n_max;
            p.boundary = boundary;
            let f = measure_frame(&psi, &p, 0.0, 0.0).unwrap();
            let o = enumerate_observables(&psi, boundary, left, width).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
            let all_close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| close(*x, *y));
            assert!(close(f.d_in, o.d_in) && close(f.d_bd, o.d_bd));
            assert!(close(f.delta_in, o.delta_in), "{} vs {}", f.delta_in, o.delta_in);
            assert!(close(f.delta_bd, o.delta_bd), "{} vs {}", f.delta_bd, o.delta_bd);
            assert!(close(f.s_cr, o.s_cr) && close(f.s_ed, o.s_ed));
            assert!(all_close(&f.d_bond, &o.d_bond) && all_close(&f.sigma_z, &o.sigma_z));
            assert!(all_close(&f.n_mean, &o.n_mean) && all_close(&f.n_std, &o.n_std));
        }
    }

    proptest! {
        #[test]
        fn frame_invariants_and_sum_rule(seed in any::<u64>(), phase in 0.0f64..6.28) {
            let psi = random_state(6, 1, seed);
            let mut p = SystemParams::centered(6, 3);
            p.n_max = 1;
            let f = measure_frame(&psi, &p, 0.0, 0.0).unwrap();
            prop_assert!(f.d_bond.iter().all(|&d| (-1e-15..=1.0 + 1e-15).contains(&d)));
            prop_assert!(f.d_in <= 2.0 + 1e-12 && f.d_in >= 0.0);
            prop_assert!(f.d_bd <= 2.0 + 1e-12 && f.d_bd >= 0.0);
            prop_assert!(f.s_cr.abs() <= 1.0 + 1e-12 && f.s_ed.abs() <= 2.0 + 1e-12);
            prop_assert!(f.delta_in >= 0.0 && f.delta_bd >= 0.0);
            // l = 1, w = 3: interior bonds 2,3; boundary bonds 1,4; outside bond 5
            let total: f64 = f.d_bond.iter().sum();
            prop_assert!((f.d_in + f.d_bd + f.d_bond[4] - total).abs() < 1e-10);

            let rot = Complex64::from_polar(1.0, phase);
            let amps = psi.amplitudes().iter().map(|a| a * rot).collect();
            let rotated = StateVector::from_amplitudes(*psi.space(), amps).unwrap();
            let g = measure_frame(&rotated, &p, 0.0, 0.0).unwrap();
            prop_assert!((f.delta_in - g.delta_in).abs() < 1e-12);
            prop_assert!(f.sigma_z.iter().zip(&g.sigma_z).all(|(a, b)| (a - b).abs() < 1e-12));
        }

        #[test]
        fn product_states_have_sharp_walls(bits in 0usize..256) {
            let spins: Vec<Spin> = (0..8).map(|j| if bits >> j & 1 == 1 { Down } else { Up }).collect();
            let psi = product(&spins);
            let d = domain_wall_profile(&psi, Boundary::Closed);
            prop_assert!(d.iter().all(|&x| x == 0.0 || x == 1.0));
            prop_assert_eq!(string_variances(&psi, 2, 4).unwrap(), (0.0, 0.0));
        }
    }
}

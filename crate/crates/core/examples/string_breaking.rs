//! Pure-spin string breaking (g = 0, n_max = 0): prints D_in, D_bd, their
//! deviations and the core/edge magnetizations, then the detected breaking
//! times for λ = 0 and λ = 0.25.
//!
//! Run:
//!   cargo run --release --example string_breaking -p stringbreak-core -- [L] [krylov_dim] [dt_step]

use std::time::Instant;

use stringbreak_core::observables::measure_frame;
use stringbreak_core::propagator::{evolve_and_sample, PropagationPlan};
use stringbreak_core::sbt::{detect_sbt, fate_at_tau};
use stringbreak_core::{build_initial_state, HamiltonianOperator, PhononInit, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let sites = args.get(1).map_or(Ok(18), |s| s.parse())?;
    let mut p = SystemParams::centered(sites, 4);
    if let Some(m) = args.get(2) {
        p.krylov_dim = m.parse()?;
    }
    if let Some(dt) = args.get(3) {
        p.dt_step = dt.parse()?;
    }
    eprintln!("L = {sites}, l = {}, dim = 2^{sites}, krylov_dim = {}, dt_step = {}", p.left, p.krylov_dim, p.dt_step);

    let h = HamiltonianOperator::bare(&p)?;
    let psi = build_initial_state(&p, &PhononInit::Vacuum)?;
    let start = Instant::now();
    let mut frames = Vec::new();
    println!("t\tD_in\tD_bd\tDelta_in\tDelta_bd\tS_cr\tS_ed");
    let (report, _) = evolve_and_sample(&h, psi, &PropagationPlan::from_params(&p), |s| {
        let f = measure_frame(s.state, &p, s.t, s.energy)?;
        println!(
            "{:.1}\t{:.5}\t{:.5}\t{:.5}\t{:.5}\t{:.5}\t{:.5}",
            f.t, f.d_in, f.d_bd, f.delta_in, f.delta_bd, f.s_cr, f.s_ed
        );
        frames.push(f);
        Ok(())
    })?;
    eprintln!("{report:?}\nelapsed {:.1?}", start.elapsed());
    for lambda in [0.0, 0.2, 0.25, 0.3] {
        let r = detect_sbt(&frames, lambda)?;
        eprintln!(
            "lambda = {lambda}: tau = {:?}, fate = {:?}",
            r.tau,
            fate_at_tau(&r, &frames, p.width)
        );
    }
    Ok(())
}

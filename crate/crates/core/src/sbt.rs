//! String-breaking time detection.
//!
//! With `D±_in = D_in ± λΔ_in` and `D±_bd = D_bd ± λΔ_bd`, the string-breaking
//! time τ is the first time at which `D+_in(τ) >= D-_bd(τ)`, while
//! `D+_in < D-_bd` holds on the whole interval before it. Later separations
//! and re-crossings are ignored.
//!
//! Between samples the band gap `D-_bd - D+_in` is interpolated linearly; τ is
//! the first point where the interpolant drops to [`TANGENCY_TOL`], so a touch
//! without a sign change still counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::observables::{classify_string_fate, Fate, ObservableFrame};

pub const TANGENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SbtKind {
    CrossingDetected,
    NoneInWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbtResult {
    pub tau: Option<f64>,
    pub kind: SbtKind,
    /// Smallest sampled `D-_bd - D+_in` before τ (over all samples if none).
    pub band_margin: f64,
}

/// Band gap `D-_bd - D+_in` of one frame.
pub fn band_gap(frame: &ObservableFrame, lambda: f64) -> f64 {
    (frame.d_bd - lambda * frame.delta_bd) - (frame.d_in + lambda * frame.delta_in)
}

pub fn detect_sbt(frames: &[ObservableFrame], lambda: f64) -> Result<SbtResult> {
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let gaps: Vec<f64> = frames.iter().map(|f| band_gap(f, lambda)).collect();
    detect_crossing(&times, &gaps)
}

/// First time the linear interpolant of `gaps` reaches [`TANGENCY_TOL`].
pub fn detect_crossing(times: &[f64], gaps: &[f64]) -> Result<SbtResult> {
    if times.is_empty() || times.len() != gaps.len() {
        return Err(Error::domain("detector needs equally long, non-empty series"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("frame times must be strictly increasing"));
    }
    if gaps.iter().any(|g| !g.is_finite()) {
        return Err(Error::domain("band gap series contains non-finite values"));
    }
    if gaps[0] <= TANGENCY_TOL {
        return Err(Error::DegenerateStart { gap: gaps[0] });
    }
    let mut margin = gaps[0];
    for k in 1..gaps.len() {
        if gaps[k] <= TANGENCY_TOL {
            let (g0, g1) = (gaps[k - 1], gaps[k]);
            let frac = (g0 - TANGENCY_TOL) / (g0 - g1);
            let tau = times[k - 1] + frac * (times[k] - times[k - 1]);
            return Ok(SbtResult {
                tau: Some(tau),
                kind: SbtKind::CrossingDetected,
                band_margin: margin,
            });
        }
        margin = margin.min(gaps[k]);
    }
    Ok(SbtResult {
        tau: None,
        kind: SbtKind::NoneInWindow,
        band_margin: margin,
    })
}

/// `(S_cr, S_ed)` linearly interpolated at time `t`.
pub fn magnetization_at(frames: &[ObservableFrame], t: f64) -> Option<(f64, f64)> {
    let k = frames.iter().position(|f| f.t >= t)?;
    if k == 0 || frames[k].t == t {
        return Some((frames[k].s_cr, frames[k].s_ed));
    }
    let (a, b) = (&frames[k - 1], &frames[k]);
    let u = (t - a.t) / (b.t - a.t);
    Some((
        a.s_cr + u * (b.s_cr - a.s_cr),
        a.s_ed + u * (b.s_ed - a.s_ed),
    ))
}

/// Classifier label at τ, if a crossing was found.
pub fn fate_at_tau(result: &SbtResult, frames: &[ObservableFrame], width: usize) -> Option<Fate> {
    let (s_cr, s_ed) = magnetization_at(frames, result.tau?)?;
    Some(classify_string_fate(s_cr, s_ed, width))
}

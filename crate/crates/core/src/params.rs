//! Physical and numerical parameters, and the flat `key = value` config format.
//!
//! Config files hold one `key = value` pair per line; `#` starts a comment.
//! Keys are exactly the names listed in [`SystemParams::KEYS`]. When `l` is not
//! given, the string is centered: `l = (L - w) / 2` rounded down.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Chain boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    /// Adds the bond between the last and first site.
    Closed,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Open => f.write_str("open"),
            Boundary::Closed => f.write_str("closed"),
        }
    }
}

impl FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "open" => Ok(Boundary::Open),
            "closed" => Ok(Boundary::Closed),
            other => Err(format!("expected `open` or `closed`, got `{other}`")),
        }
    }
}

/// Every parameter of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    /// Number of sites `L`.
    pub sites: usize,
    /// Length `l` of the spin-up block left of the string.
    pub left: usize,
    /// String width `w` (number of down spins).
    pub width: usize,
    pub h_x: f64,
    pub h_z: f64,
    pub omega0: f64,
    pub g: f64,
    /// Largest phonon occupation kept per site; 0 freezes the phonons out.
    pub n_max: usize,
    pub boundary: Boundary,
    pub t_max: f64,
    pub dt_sample: f64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub dt_step: f64,
    /// Band width multiplier for string-breaking time detection.
    pub lambda: f64,
}

impl Default for SystemParams {
    /// The pure-spin string setup: `L = 24`, centered `w = 4`, `h^z = 1`, `h^x = 0.2`.
    fn default() -> Self {
        SystemParams::centered(24, 4)
    }
}

impl SystemParams {
    /// Config keys, in echo order.
    pub const KEYS: [&'static str; 15] = [
        "L",
        "l",
        "w",
        "h_x",
        "h_z",
        "omega0",
        "g",
        "n_max",
        "boundary",
        "t_max",
        "dt_sample",
        "krylov_dim",
        "krylov_tol",
        "dt_step",
        "lambda",
    ];

    /// Defaults with a string of width `width` centered in a chain of `sites`.
    pub fn centered(sites: usize, width: usize) -> Self {
        SystemParams {
            sites,
            left: sites.saturating_sub(width) / 2,
            width,
            h_x: 0.2,
            h_z: 1.0,
            omega0: 0.2,
            g: 0.0,
            n_max: 0,
            boundary: Boundary::Open,
            t_max: 100.0,
            dt_sample: 0.5,
            krylov_dim: 30,
            krylov_tol: 1e-9,
            dt_step: 0.05,
            lambda: 0.25,
        }
    }

    /// `γ = -g / ω₀`, the Lang-Firsov displacement.
    pub fn gamma(&self) -> f64 {
        -self.g / self.omega0
    }

    /// Checks every invariant; returns the first violation.
    /// `L g²/ω₀`, the constant energy lowered by the Lang-Firsov shift.
    pub fn polaron_shift(&self) -> f64 {
        self.sites as f64 * self.g * self.g / self.omega0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 1 || self.sites > 62 {
            return Err(Error::config("L", format!("must lie in 1..=62, got {}", self.sites)));
        }
        if self.width < 1 {
            return Err(Error::config("w", "string width must be at least 1"));
        }
        if self.left + self.width > self.sites {
            return Err(Error::config(
                "l",
                format!("l + w = {} exceeds L = {}", self.left + self.width, self.sites),
            ));
        }
        if self.boundary == Boundary::Closed && self.sites < 3 {
            return Err(Error::config("boundary", "closed chains need L >= 3"));
        }
        for (key, v) in [("h_x", self.h_x), ("h_z", self.h_z)] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::config("omega0", "must be positive"));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::config("g", "must be non-negative"));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::config("t_max", "must be non-negative"));
        }
        for (key, v) in [
            ("dt_sample", self.dt_sample),
            ("dt_step", self.dt_step),
            ("krylov_tol", self.krylov_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.krylov_dim < 2 {
            return Err(Error::config("krylov_dim", "must be at least 2"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be non-negative"));
        }
        let ratio = self.dt_sample / self.dt_step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::config(
                "dt_sample",
                format!(
                    "must be an integer multiple of dt_step = {}, got {}",
                    self.dt_step, self.dt_sample
                ),
            ));
        }
        Ok(())
    }

    /// Sets one field from its config key. Returns `Ok(false)` for keys that
    /// are not parameter keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let value = value.trim();
        match key {
            "L" => self.sites = parse_value(key, value)?,
            "l" => self.left = parse_value(key, value)?,
            "w" => self.width = parse_value(key, value)?,
            "h_x" => self.h_x = parse_value(key, value)?,
            "h_z" => self.h_z = parse_value(key, value)?,
            "omega0" => self.omega0 = parse_value(key, value)?,
            "g" => self.g = parse_value(key, value)?,
            "n_max" => self.n_max = parse_value(key, value)?,
            "boundary" => self.boundary = parse_value(key, value)?,
            "t_max" => self.t_max = parse_value(key, value)?,
            "dt_sample" => self.dt_sample = parse_value(key, value)?,
            "krylov_dim" => self.krylov_dim = parse_value(key, value)?,
            "krylov_tol" => self.krylov_tol = parse_value(key, value)?,
            "dt_step" => self.dt_step = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Builds parameters from ordered `(key, value)` pairs on top of the
    /// defaults. Later pairs win. Unknown keys are rejected.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut params = SystemParams::default();
        let mut left_given = false;
        for (k, v) in pairs {
            let k = k.as_ref();
            if !params.set(k, v.as_ref())? {
                return Err(Error::config(k, "unknown key"));
            }
            left_given |= k == "l";
        }
        if !left_given {
            params.left = params.sites.saturating_sub(params.width) / 2;
        }
        params.validate()?;
        Ok(params)
    }

    /// Parses a config file body.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Effective parameters as `(key, value)` pairs; `Display` for floats is
    /// the shortest representation that parses back to the same value.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("L", self.sites.to_string()),
            ("l", self.left.to_string()),
            ("w", self.width.to_string()),
            ("h_x", self.h_x.to_string()),
            ("h_z", self.h_z.to_string()),
            ("omega0", self.omega0.to_string()),
            ("g", self.g.to_string()),
            ("n_max", self.n_max.to_string()),
            ("boundary", self.boundary.to_string()),
            ("t_max", self.t_max.to_string()),
            ("dt_sample", self.dt_sample.to_string()),
            ("krylov_dim", self.krylov_dim.to_string()),
            ("krylov_tol", self.krylov_tol.to_string()),
            ("dt_step", self.dt_step.to_string()),
            ("lambda", self.lambda.to_string()),
        ]
    }
}

/// Splits a config body into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(
                line,
                format!("line {} is not of the form `key = value`", lineno + 1),
            ));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config("", format!("line {} has an empty key", lineno + 1)));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses a `KEY=VALUE` override.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::config(arg, "override must be KEY=VALUE")),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_center_the_string() {
        let p = SystemParams::default();
        assert_eq!((p.sites, p.left, p.width), (24, 10, 4));
        p.validate().unwrap();
    }

    #[test]
    fn parse_centers_when_l_absent() {
        let p = SystemParams::parse("L = 8\nw = 3 # comment\n\n# full line\n").unwrap();
        assert_eq!(p.left, 2);
        let p = SystemParams::parse("L = 8\nw = 3\nl = 0").unwrap();
        assert_eq!(p.left, 0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = SystemParams::parse("L = 8\nfoo = 1").unwrap_err();
        assert!(err.to_string().contains("`foo`"), "{err}");
    }

    #[test]
    fn bad_value_is_named() {
        let err = SystemParams::parse("g = abc").unwrap_err();
        assert!(err.to_string().contains("`g`"), "{err}");
        let err = SystemParams::parse("boundary = periodic").unwrap_err();
        assert!(err.to_string().contains("boundary"), "{err}");
    }

    #[test]
    fn invariants_enforced() {
        assert!(SystemParams::parse("L = 4\nw = 3\nl = 2").is_err());
        assert!(SystemParams::parse("krylov_dim = 1").is_err());
        assert!(SystemParams::parse("dt_sample = 0.12\ndt_step = 0.05").is_err());
        assert!(SystemParams::parse("omega0 = 0").is_err());
        assert!(SystemParams::parse("L = 2\nw = 1\nboundary = closed").is_err());
        assert!(SystemParams::parse("dt_sample = 0.15\ndt_step = 0.05").is_ok());
    }

    #[test]
    fn echo_round_trip_is_exact() {
        let mut p = SystemParams::centered(7, 3);
        p.g = 0.1 + 0.2;
        p.h_x = 1.0 / 3.0;
        p.krylov_tol = 1e-11;
        p.boundary = Boundary::Closed;
        let text: String = p
            .to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(SystemParams::parse(&text).unwrap(), p);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(parse_pairs("L 8").is_err());
        assert!(parse_pairs(" = 8").is_err());
        assert!(parse_override("g").is_err());
        assert_eq!(parse_override("g=0.08").unwrap(), ("g".into(), "0.08".into()));
    }
}

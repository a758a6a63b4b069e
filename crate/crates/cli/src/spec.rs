//! Problem definitions from a `key = value` config file and command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qpz_core::{QuasiPolynomial, RealPolynomial, Region, TraceConfig};
use serde::Serialize;

use crate::error::CliError;

pub const DEFAULT_SIGMA0: f64 = 0.0;
pub const DEFAULT_OUTPUT_DIR: &str = ".";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    /// Ascending coefficients of `a`.
    pub a_coeffs: Vec<f64>,
    /// Ascending coefficients of `b`. All zeros means no delay term.
    pub b_coeffs: Vec<f64>,
    pub sigma0: f64,
    pub h_final: f64,
    pub eps_tz: f64,
    pub omega_max: Option<f64>,
    pub output_dir: PathBuf,
}

/// Field values that may be missing; flags are layered over a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialSpec {
    pub a_coeffs: Option<Vec<f64>>,
    pub b_coeffs: Option<Vec<f64>>,
    pub sigma0: Option<f64>,
    pub h_final: Option<f64>,
    pub eps_tz: Option<f64>,
    pub omega_max: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl PartialSpec {
    /// Values set in `other` replace values in `self`.
    pub fn overridden_by(self, other: PartialSpec) -> PartialSpec {
        PartialSpec {
            a_coeffs: other.a_coeffs.or(self.a_coeffs),
            b_coeffs: other.b_coeffs.or(self.b_coeffs),
            sigma0: other.sigma0.or(self.sigma0),
            h_final: other.h_final.or(self.h_final),
            eps_tz: other.eps_tz.or(self.eps_tz),
            omega_max: other.omega_max.or(self.omega_max),
            output_dir: other.output_dir.or(self.output_dir),
        }
    }

    pub fn from_config_file(path: &Path) -> Result<PartialSpec, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        PartialSpec::from_config_str(&text).map_err(|e| match e {
            CliError::Invalid(msg) => CliError::Invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped. Keys are the [`ProblemSpec`] field names.
    pub fn from_config_str(text: &str) -> Result<PartialSpec, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if entries.insert(key.to_string(), (n + 1, value.trim().to_string())).is_some() {
                return Err(CliError::Invalid(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }

        let mut spec = PartialSpec::default();
        for (key, (line, value)) in entries {
            let ctx = |e: CliError| match e {
                CliError::Invalid(msg) => CliError::Invalid(format!("line {line}: {msg}")),
                other => other,
            };
            match key.as_str() {
                "a_coeffs" => spec.a_coeffs = Some(parse_coeffs(&key, &value).map_err(ctx)?),
                "b_coeffs" => spec.b_coeffs = Some(parse_coeffs(&key, &value).map_err(ctx)?),
                "sigma0" => spec.sigma0 = Some(parse_real(&key, &value).map_err(ctx)?),
                "h_final" => spec.h_final = Some(parse_real(&key, &value).map_err(ctx)?),
                "eps_tz" => spec.eps_tz = Some(parse_real(&key, &value).map_err(ctx)?),
                "omega_max" => spec.omega_max = Some(parse_real(&key, &value).map_err(ctx)?),
                "output_dir" => spec.output_dir = Some(PathBuf::from(value)),
                _ => return Err(CliError::Invalid(format!("line {line}: unknown key `{key}`"))),
            }
        }
        Ok(spec)
    }

    pub fn resolve(self) -> Result<ProblemSpec, CliError> {
        let spec = ProblemSpec {
            a_coeffs: self.a_coeffs.ok_or_else(|| missing("a_coeffs", "--a"))?,
            b_coeffs: self.b_coeffs.ok_or_else(|| missing("b_coeffs", "--b"))?,
            sigma0: self.sigma0.unwrap_or(DEFAULT_SIGMA0),
            h_final: self.h_final.ok_or_else(|| missing("h_final", "--h-final"))?,
            eps_tz: self.eps_tz.unwrap_or(TraceConfig::default().eps_tz),
            omega_max: self.omega_max,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn missing(key: &str, flag: &str) -> CliError {
    CliError::Invalid(format!("missing `{key}` (config key) or `{flag}` (flag)"))
}

/// Comma-separated reals, e.g. `1, 0.5, -2`.
pub fn parse_coeffs(name: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|t| parse_real(name, t.trim()))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(CliError::Invalid(format!("`{name}` has no coefficients")))
            } else {
                Ok(v)
            }
        })
}

/// Comma-separated delays; an empty string is an empty list.
pub fn parse_delays(value: &str) -> Result<Vec<f64>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_coeffs("delays", value)
}

pub fn parse_real(name: &str, value: &str) -> Result<f64, CliError> {
    let x: f64 = value
        .parse()
        .map_err(|_| CliError::Invalid(format!("`{name}`: `{value}` is not a real number")))?;
    if !x.is_finite() {
        return Err(CliError::Invalid(format!("`{name}` must be finite, got {value}")));
    }
    Ok(x)
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        self.quasi_polynomial()?;
        if !(self.h_final > 0.0) {
            return Err(CliError::Invalid(format!("h_final must be positive, got {}", self.h_final)));
        }
        if !(self.eps_tz > 0.0) {
            return Err(CliError::Invalid(format!("eps_tz must be positive, got {}", self.eps_tz)));
        }
        if let Some(w) = self.omega_max {
            if !(w > 0.0) {
                return Err(CliError::Invalid(format!("omega_max must be positive, got {w}")));
            }
        }
        Ok(())
    }

    pub fn quasi_polynomial(&self) -> Result<QuasiPolynomial, CliError> {
        let a = RealPolynomial::new(self.a_coeffs.clone())?;
        let b = RealPolynomial::new(self.b_coeffs.clone())?;
        let q = if b.is_zero() {
            QuasiPolynomial::delay_free(a)?
        } else {
            QuasiPolynomial::new(a, b)?
        };
        Ok(q)
    }

    pub fn region(&self, q: &QuasiPolynomial) -> Result<Region, CliError> {
        let region = match self.omega_max {
            Some(w) => Region::new(self.sigma0, w)?,
            None => Region::with_default_window(q, self.sigma0, self.h_final)?,
        };
        Ok(region)
    }

    pub fn trace_config(&self) -> Result<TraceConfig, CliError> {
        let cfg = TraceConfig::with_eps_tz(self.eps_tz);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses() {
        let text = "# fixture\na_coeffs = 1, 1, 1\nb_coeffs = 0,1\n\nsigma0 = -1\nh_final = 3.14\n";
        let p = PartialSpec::from_config_str(text).unwrap();
        assert_eq!(p.a_coeffs, Some(vec![1.0, 1.0, 1.0]));
        assert_eq!(p.b_coeffs, Some(vec![0.0, 1.0]));
        assert_eq!(p.sigma0, Some(-1.0));
        assert_eq!(p.eps_tz, None);
    }

    #[test]
    fn flags_override_file() {
        let file = PartialSpec { sigma0: Some(-1.0), h_final: Some(1.0), ..Default::default() };
        let flags = PartialSpec { h_final: Some(2.0), ..Default::default() };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.sigma0, Some(-1.0));
        assert_eq!(merged.h_final, Some(2.0));
    }

    #[test]
    fn bad_config_lines() {
        for text in ["a_coeffs 1,2", "colour = red", "sigma0 = x", "sigma0 = 1\nsigma0 = 2", "h_final = inf"] {
            assert!(matches!(PartialSpec::from_config_str(text), Err(CliError::Invalid(_))), "{text}");
        }
    }

    #[test]
    fn retardedness_is_checked() {
        let p = PartialSpec {
            a_coeffs: Some(vec![1.0, 1.0]),
            b_coeffs: Some(vec![0.0, 0.0, 1.0]),
            h_final: Some(1.0),
            ..Default::default()
        };
        let err = p.resolve().unwrap_err().to_string();
        assert!(err.contains("retarded"), "{err}");
    }

    #[test]
    fn zero_b_is_delay_free() {
        let p = PartialSpec {
            a_coeffs: Some(vec![1.0, 1.0]),
            b_coeffs: Some(vec![0.0]),
            h_final: Some(1.0),
            ..Default::default()
        };
        assert!(p.resolve().unwrap().quasi_polynomial().unwrap().is_delay_free());
    }

    #[test]
    fn delays_list() {
        assert_eq!(parse_delays("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_delays("0.5, 1").unwrap(), vec![0.5, 1.0]);
        assert!(parse_delays("0.5,,1").is_err());
    }
}

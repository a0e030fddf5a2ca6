//! Parameters shared by the command line and JSON config files.
//!
//! Every field is optional so that flags given on the command line can be
//! layered over a config file, which in turn is layered over the built-in
//! defaults of each command.

use std::path::PathBuf;

use amo_core::arithmetic::{Frequency, Rational};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum IdsSourceArg {
    Rotation,
    Eigen,
    Periodic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Command name; only meaningful in config files, where it must match.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,

    /// JSON config file; command-line flags take precedence over it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Frequency: a decimal, `p/q`, `golden` or `silver`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Rational frequency `p/q` for band computations.
    #[arg(long)]
    pub pq: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Real part of the energy.
    #[arg(long = "E", visible_alias = "energy", allow_hyphen_values = true)]
    #[serde(rename = "E", alias = "energy")]
    pub energy: Option<f64>,
    /// Imaginary part of the energy.
    #[arg(long, allow_hyphen_values = true)]
    pub e_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub e_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub e_max: Option<f64>,
    /// Number of energies in a sweep.
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of cocycle steps.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of phases averaged over.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Smallest scale of a Hölder probe.
    #[arg(long)]
    pub eps_min: Option<f64>,
    /// Largest scale of a Hölder probe.
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub qmax: Option<u64>,
    #[arg(long, value_enum)]
    pub source: Option<IdsSourceArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Maximal IDS grid spacing.
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub bound: Option<i64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub max_s: Option<u64>,
    /// Number of periods `b` followed along the orbit.
    #[arg(long)]
    pub b: Option<usize>,
    /// `dev = e^{-dev_exponent}`; omit for an exact rational frequency.
    #[arg(long)]
    pub dev_exponent: Option<f64>,
    #[arg(long)]
    pub phi_factor: Option<f64>,
    #[arg(long)]
    pub slack: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads (default: logical cores).
    #[arg(long, env = "AMO_LAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Suppress the timestamped header.
    #[arg(long, default_missing_value = "true", num_args = 0..=1)]
    pub no_header: Option<bool>,
}

/// Keys every command accepts.
const GLOBAL_KEYS: &[&str] = &["command", "threads", "out", "format", "no_header"];

macro_rules! overlay {
    ($top:expr, $base:expr, $($f:ident),*) => {
        Params { command: $top.command.or($base.command), config: $top.config, $($f: $top.$f.or($base.$f)),* }
    };
}

impl Params {
    /// Fields set in `self` win over those in `base`.
    pub fn overlay(self, base: Params) -> Params {
        overlay!(
            self,
            base,
            lambda,
            alpha,
            pq,
            theta,
            energy,
            e_im,
            e_min,
            e_max,
            points,
            n,
            grid,
            eps,
            eps_min,
            eps_max,
            depth,
            tol,
            qmax,
            source,
            samples,
            spacing,
            eps0,
            bound,
            trials,
            max_s,
            b,
            dev_exponent,
            phi_factor,
            slack,
            nodes,
            seed,
            threads,
            out,
            format,
            no_header
        )
    }

    /// Names of the fields that are set, as spelled in config files.
    pub fn set_keys(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, _)| k).collect(),
            _ => Vec::new(),
        }
    }

    /// Reject keys outside `allowed` (plus the global ones).
    pub fn check_keys(&self, command: &str, allowed: &[&str]) -> Result<(), String> {
        let bad: Vec<String> = self
            .set_keys()
            .into_iter()
            .filter(|k| !allowed.contains(&k.as_str()) && !GLOBAL_KEYS.contains(&k.as_str()))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(format!("{command} does not accept: {}", bad.join(", ")))
        }
    }
}

pub fn parse_alpha(s: &str) -> Result<Frequency, String> {
    Frequency::parse(s).map_err(|e| e.to_string())
}

pub fn parse_pq(s: &str) -> Result<Rational, String> {
    s.parse::<Rational>().map_err(|e| e.to_string())
}

pub fn load_config(path: &std::path::Path) -> Result<Params, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_wins_over_config() {
        let cli = Params {
            lambda: Some(2.0),
            ..Default::default()
        };
        let cfg = Params {
            lambda: Some(0.5),
            theta: Some(0.1),
            ..Default::default()
        };
        let p = cli.overlay(cfg);
        assert_eq!(p.lambda, Some(2.0));
        assert_eq!(p.theta, Some(0.1));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<Params>(r#"{"lambda": 0.5, "lamda": 1}"#).is_err());
        let p: Params = serde_json::from_str(r#"{"lambda": 0.5, "E": 0.1}"#).unwrap();
        assert_eq!(p.energy, Some(0.1));
    }

    #[test]
    fn keys_are_checked_per_command() {
        let p = Params {
            eps: Some(0.1),
            out: Some("x".into()),
            ..Default::default()
        };
        assert!(p.check_keys("butterfly", &["lambda", "qmax"]).is_err());
        assert!(p.check_keys("density", &["eps"]).is_ok());
    }
}

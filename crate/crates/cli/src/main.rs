//! `amo-lab`: sweeps, probes and experiment reports for the almost Mathieu operator.

mod commands;
mod output;
mod params;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::Failure;
use output::Header;
use params::{load_config, Params};

#[derive(Parser)]
#[command(name = "amo-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bands of every coprime p/q with q <= qmax.
    Butterfly(Params),
    /// Bands, orientation, mass and X set of one periodic approximant.
    Bands(Params),
    /// Lyapunov exponent, rotation number and sup norm of the cocycle.
    Lyapunov(Params),
    /// Integrated density of states.
    Ids(Params),
    /// Poisson-smoothed spectral density (1/π) Im M(E + iε).
    Density(Params),
    /// Half-line m-functions and the Borel transform M.
    Mfunc(Params),
    /// Thouless formula against the cocycle exponent.
    Thouless(Params),
    /// Local moduli of continuity of the IDS.
    Holder(Params),
    /// Phase resonances 2θ ≈ kα.
    Resonances(Params),
    /// Random sweep of the rotation-average cancellation identity.
    CancelTest(Params),
    /// Shadowing of the periodic conjugacy and dynamical cancellation.
    Shadow(Params),
    /// Integrated cancellation along the orbit.
    Integrated(Params),
}

impl Command {
    fn split(self) -> (&'static str, Params) {
        match self {
            Command::Butterfly(p) => ("butterfly", p),
            Command::Bands(p) => ("bands", p),
            Command::Lyapunov(p) => ("lyapunov", p),
            Command::Ids(p) => ("ids", p),
            Command::Density(p) => ("density", p),
            Command::Mfunc(p) => ("mfunc", p),
            Command::Thouless(p) => ("thouless", p),
            Command::Holder(p) => ("holder", p),
            Command::Resonances(p) => ("resonances", p),
            Command::CancelTest(p) => ("cancel-test", p),
            Command::Shadow(p) => ("shadow", p),
            Command::Integrated(p) => ("integrated", p),
        }
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn error_name(e: &amo_core::Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or_default()
        .to_string()
}

/// The resolved parameters as echoed in JSON output; execution-only keys are left out.
fn echoed(p: &Params) -> Value {
    let mut v = serde_json::to_value(p).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.retain(|k, v| !v.is_null() && !matches!(k.as_str(), "command" | "threads" | "out" | "format" | "no_header"));
    }
    v
}

fn main() -> ExitCode {
    let (name, cli) = Cli::parse().command.split();
    let spec = commands::lookup(name);

    let params = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(cfg) => {
                if cfg.command.as_deref().is_some_and(|c| c != name) {
                    return usage_error(&format!(
                        "config is for `{}`, not `{name}`",
                        cfg.command.as_deref().unwrap_or_default()
                    ));
                }
                cli.overlay(cfg)
            }
            Err(e) => return usage_error(&e),
        },
        None => cli,
    };
    if let Err(e) = params.check_keys(name, spec.keys) {
        return usage_error(&e);
    }

    if let Some(t) = params.threads {
        if t == 0 {
            return usage_error("--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return usage_error(&e.to_string());
        }
    }

    let artifact = match (spec.run)(&params) {
        Ok(a) => a,
        Err(Failure::Usage(msg)) => return usage_error(&msg),
        Err(Failure::Numerical(e)) => {
            eprintln!("{}", json!({ "error": error_name(&e), "message": e.to_string() }));
            return ExitCode::from(3);
        }
    };

    let header = Header {
        command: name,
        timestamp: (!params.no_header.unwrap_or(false))
            .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    let text = match output::render(
        &artifact,
        params.format.unwrap_or(spec.format),
        &header,
        &echoed(&params),
    ) {
        Ok(t) => t,
        Err(e) => return usage_error(&e),
    };
    if let Err(e) = output::emit(&text, params.out.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

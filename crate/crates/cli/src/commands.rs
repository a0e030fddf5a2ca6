//! The subcommands, each a pure function from resolved parameters to an artifact.

use amo_core::arithmetic::{find_resonances, gcd, Frequency, NearRational, Rational, DEFAULT_RESONANCE_BOUND};
use amo_core::bloch::EigenCountIds;
use amo_core::cocycle::SchrodingerCocycle;
use amo_core::periodic::{bands, ids_periodic, x_set};
use amo_core::regime::{
    build_shadowing, cancellation_sweep, dynamical_cancellation, integrated_cancellation, point_with_phi_ratio,
    DEFAULT_SEED,
};
use amo_core::spectral::{density_estimate, dyadic_scales, holder_probe, m_sample, thouless_l, IdsTable, MParams};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use crate::output::{Artifact, Cell, Table};
use crate::params::{parse_alpha, parse_pq, Format, IdsSourceArg, Params};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(amo_core::Error),
}

impl From<amo_core::Error> for Failure {
    fn from(e: amo_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e)
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type Res<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

pub struct Spec {
    pub name: &'static str,
    pub keys: &'static [&'static str],
    pub format: Format,
    pub run: fn(&Params) -> Res<Artifact>,
}

pub const COMMANDS: &[Spec] = &[
    Spec {
        name: "butterfly",
        keys: &["lambda", "qmax", "theta"],
        format: Format::Csv,
        run: butterfly,
    },
    Spec {
        name: "bands",
        keys: &["lambda", "pq", "theta"],
        format: Format::Csv,
        run: band_table,
    },
    Spec {
        name: "lyapunov",
        keys: &[
            "lambda", "alpha", "theta", "E", "e_im", "e_min", "e_max", "points", "n", "grid",
        ],
        format: Format::Csv,
        run: lyapunov,
    },
    Spec {
        name: "ids",
        keys: &[
            "lambda", "alpha", "pq", "theta", "E", "e_min", "e_max", "points", "n", "source", "spacing",
        ],
        format: Format::Csv,
        run: ids,
    },
    Spec {
        name: "density",
        keys: &[
            "lambda", "alpha", "theta", "E", "e_min", "e_max", "points", "eps", "depth", "tol",
        ],
        format: Format::Csv,
        run: density,
    },
    Spec {
        name: "mfunc",
        keys: &[
            "lambda", "alpha", "theta", "E", "e_min", "e_max", "points", "eps", "depth", "tol",
        ],
        format: Format::Csv,
        run: mfunc,
    },
    Spec {
        name: "thouless",
        keys: &[
            "lambda", "alpha", "pq", "theta", "E", "e_im", "e_min", "e_max", "points", "spacing", "n", "grid",
        ],
        format: Format::Csv,
        run: thouless,
    },
    Spec {
        name: "holder",
        keys: &["lambda", "pq", "theta", "spacing", "samples", "eps_min", "eps_max"],
        format: Format::Json,
        run: holder,
    },
    Spec {
        name: "resonances",
        keys: &["alpha", "theta", "eps0", "bound"],
        format: Format::Json,
        run: resonances,
    },
    Spec {
        name: "cancel-test",
        keys: &["trials", "seed", "max_s"],
        format: Format::Json,
        run: cancel_test,
    },
    Spec {
        name: "shadow",
        keys: &["lambda", "pq", "dev_exponent", "theta", "E", "b", "phi_factor", "slack"],
        format: Format::Json,
        run: shadow,
    },
    Spec {
        name: "integrated",
        keys: &["lambda", "pq", "dev_exponent", "theta", "b", "nodes", "eps"],
        format: Format::Json,
        run: integrated,
    },
];

pub fn lookup(name: &str) -> &'static Spec {
    COMMANDS
        .iter()
        .find(|c| c.name == name)
        .expect("every subcommand has a spec")
}

fn lambda(p: &Params) -> Res<f64> {
    match p.lambda {
        Some(l) => Ok(l),
        None => usage("--lambda is required"),
    }
}

fn pq(p: &Params) -> Res<Rational> {
    match &p.pq {
        Some(s) => parse_pq(s).map_err(Failure::Usage),
        None => usage("--pq is required"),
    }
}

/// `--alpha`, falling back to `--pq` as an exact rational frequency.
fn frequency(p: &Params) -> Res<Frequency> {
    match (&p.alpha, &p.pq) {
        (Some(a), _) => parse_alpha(a).map_err(Failure::Usage),
        (None, Some(_)) => Ok(Frequency::Rational(pq(p)?)),
        (None, None) => usage("--alpha is required"),
    }
}

fn energies(p: &Params) -> Res<Vec<f64>> {
    match (p.energy, p.e_min, p.e_max) {
        (Some(e), None, None) => Ok(vec![e]),
        (None, Some(lo), Some(hi)) => {
            let n = p.points.unwrap_or(101);
            if n == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
                return usage("an energy sweep needs e_min <= e_max and points >= 1");
            }
            if n == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect())
        }
        _ => usage("give either --E or both --e-min and --e-max"),
    }
}

fn m_params(p: &Params) -> MParams {
    let d = MParams::default();
    MParams {
        depth: p.depth.unwrap_or(d.depth),
        tol: p.tol.unwrap_or(d.tol),
    }
}

fn dev(p: &Params) -> f64 {
    p.dev_exponent.map_or(0.0, |x| (-x).exp())
}

fn report<T: serde::Serialize>(v: &T) -> Res<Artifact> {
    serde_json::to_value(v)
        .map(Artifact::Report)
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn butterfly(p: &Params) -> Res<Artifact> {
    let lambda = p.lambda.unwrap_or(0.5);
    let qmax = p.qmax.unwrap_or(30);
    let theta = p.theta.unwrap_or(0.0);
    if qmax == 0 {
        return usage("--qmax must be at least 1");
    }
    let fractions: Vec<Rational> = (1..=qmax)
        .flat_map(|q| {
            (0..q)
                .filter(move |&pp| gcd(pp as u128, q as u128) == 1)
                .map(move |pp| (pp, q))
        })
        .map(|(pp, q)| Rational::new(pp, q))
        .collect::<amo_core::Result<_>>()?;
    let spectra = fractions
        .par_iter()
        .map(|&r| bands(lambda, r, theta))
        .collect::<amo_core::Result<Vec<_>>>()?;
    let rows = spectra
        .iter()
        .flat_map(|bs| {
            bs.bands.iter().enumerate().map(move |(j, b)| {
                vec![
                    Cell::from(bs.p_over_q.p),
                    Cell::from(bs.p_over_q.q),
                    Cell::from(j + 1),
                    Cell::from(b.lo),
                    Cell::from(b.hi),
                ]
            })
        })
        .collect();
    Ok(Artifact::Table(Table {
        columns: vec!["p", "q", "band", "E_lo", "E_hi"],
        rows,
    }))
}

fn band_table(p: &Params) -> Res<Artifact> {
    let bs = bands(p.lambda.unwrap_or(0.5), pq(p)?, p.theta.unwrap_or(0.0))?;
    let xs = x_set(&bs);
    let mut rows = Vec::new();
    for (j, b) in bs.bands.iter().enumerate() {
        let x = xs.intervals.iter().find(|x| b.lo <= x.lo && x.hi <= b.hi);
        rows.push(vec![
            Cell::from(j + 1),
            Cell::from(b.lo),
            Cell::from(b.hi),
            Cell::from(if bs.increasing[j] { "increasing" } else { "decreasing" }),
            Cell::from(bs.band_mass(j)?),
            Cell::from(x.map_or(f64::NAN, |x| x.lo)),
            Cell::from(x.map_or(f64::NAN, |x| x.hi)),
        ]);
    }
    Ok(Artifact::Table(Table {
        columns: vec!["band", "E_lo", "E_hi", "orientation", "mass", "X_lo", "X_hi"],
        rows,
    }))
}

fn lyapunov(p: &Params) -> Res<Artifact> {
    let lambda = lambda(p)?;
    let alpha = frequency(p)?;
    let e_im = p.e_im.unwrap_or(0.0);
    let n = p.n.unwrap_or(100_000);
    let grid = p.grid.unwrap_or(64);
    let mut rows = Vec::new();
    for e in energies(p)? {
        let c = SchrodingerCocycle::new(lambda, alpha, Complex64::new(e, e_im))?;
        let stats = c.boundedness_probe(n, grid);
        rows.push(vec![
            Cell::from(lambda),
            Cell::from(alpha.value()),
            Cell::from(e),
            Cell::from(e_im),
            Cell::from(n),
            Cell::from(stats.lyap),
            Cell::from(stats.rotation.unwrap_or(f64::NAN)),
            Cell::from(stats.sup_norm),
        ]);
    }
    Ok(Artifact::Table(Table {
        columns: vec!["lambda", "alpha", "E_re", "E_im", "n", "lyap", "rotation", "sup_norm"],
        rows,
    }))
}

fn ids(p: &Params) -> Res<Artifact> {
    let lambda = lambda(p)?;
    let theta = p.theta.unwrap_or(0.0);
    let es = energies(p)?;
    let source = p.source.unwrap_or(if p.alpha.is_some() {
        IdsSourceArg::Rotation
    } else {
        IdsSourceArg::Periodic
    });
    let values: Vec<f64> = match source {
        IdsSourceArg::Rotation => {
            let t = IdsTable::from_rotation(lambda, frequency(p)?, &es, p.n.unwrap_or(100_000), theta)?;
            es.iter().map(|&e| t.eval(e)).collect()
        }
        IdsSourceArg::Eigen => {
            let oracle = EigenCountIds::new(lambda, pq(p)?, theta);
            es.iter().map(|&e| oracle.ids(e)).collect()
        }
        IdsSourceArg::Periodic => {
            let bs = bands(lambda, pq(p)?, theta)?;
            es.iter().map(|&e| ids_periodic(&bs, e)).collect()
        }
    };
    Ok(Artifact::Table(Table {
        columns: vec!["E", "N"],
        rows: es
            .iter()
            .zip(values)
            .map(|(&e, n)| vec![Cell::from(e), Cell::from(n)])
            .collect(),
    }))
}

fn density(p: &Params) -> Res<Artifact> {
    let (lambda, alpha, mp) = (lambda(p)?, frequency(p)?, m_params(p));
    let (theta, eps) = (p.theta.unwrap_or(0.0), p.eps.unwrap_or(1e-3));
    let rows = energies(p)?
        .par_iter()
        .map(|&e| {
            let d = density_estimate(lambda, alpha, theta, e, eps, mp)?;
            Ok(vec![Cell::from(e), Cell::from(eps), Cell::from(d)])
        })
        .collect::<amo_core::Result<Vec<_>>>()?;
    Ok(Artifact::Table(Table {
        columns: vec!["E", "eps", "density"],
        rows,
    }))
}

fn mfunc(p: &Params) -> Res<Artifact> {
    let (lambda, alpha, mp) = (lambda(p)?, frequency(p)?, m_params(p));
    let (theta, eps) = (p.theta.unwrap_or(0.0), p.eps.unwrap_or(1e-3));
    let rows = energies(p)?
        .par_iter()
        .map(|&e| {
            let s = m_sample(lambda, alpha, theta, e, eps, mp)?;
            Ok([
                e,
                eps,
                s.m_plus.re,
                s.m_plus.im,
                s.m_minus.re,
                s.m_minus.im,
                s.big_m.re,
                s.big_m.im,
            ]
            .into_iter()
            .map(Cell::from)
            .collect())
        })
        .collect::<amo_core::Result<Vec<_>>>()?;
    Ok(Artifact::Table(Table {
        columns: vec![
            "E",
            "eps",
            "m_plus_re",
            "m_plus_im",
            "m_minus_re",
            "m_minus_im",
            "M_re",
            "M_im",
        ],
        rows,
    }))
}

/// Thouless formula from a periodic IDS table next to the cocycle exponent.
fn thouless(p: &Params) -> Res<Artifact> {
    let lambda = lambda(p)?;
    let r = pq(p)?;
    let alpha = frequency(p)?;
    let theta = p.theta.unwrap_or(0.0);
    let e_im = p.e_im.unwrap_or(0.05);
    let table = IdsTable::from_bands(&bands(lambda, r, theta)?, p.spacing.unwrap_or(1e-3))?;
    let (n, grid) = (p.n.unwrap_or(20_000), p.grid.unwrap_or(8));
    let rows = energies(p)?
        .par_iter()
        .map(|&e| {
            let z = Complex64::new(e, e_im);
            let th = thouless_l(&table, z);
            let l = SchrodingerCocycle::new(lambda, alpha, z)?.lyapunov(n, grid);
            Ok(vec![
                Cell::from(e),
                Cell::from(e_im),
                Cell::from(th),
                Cell::from(l),
                Cell::from((th - l).abs()),
            ])
        })
        .collect::<amo_core::Result<Vec<_>>>()?;
    Ok(Artifact::Table(Table {
        columns: vec!["E_re", "E_im", "thouless", "lyap", "diff"],
        rows,
    }))
}

fn holder(p: &Params) -> Res<Artifact> {
    let bs = bands(lambda(p)?, pq(p)?, p.theta.unwrap_or(0.0))?;
    let (lo, hi) = (p.eps_min.unwrap_or(1e-5), p.eps_max.unwrap_or(1e-2));
    if !(0.0 < lo && lo < hi) {
        return usage("holder needs 0 < eps_min < eps_max");
    }
    let table = IdsTable::from_bands(&bs, p.spacing.unwrap_or(0.4 * lo))?;
    report(&holder_probe(&table, &dyadic_scales(lo, hi), p.samples.unwrap_or(50))?)
}

fn resonances(p: &Params) -> Res<Artifact> {
    let alpha = frequency(p)?.value();
    let rep = find_resonances(
        p.theta.unwrap_or(0.0),
        alpha,
        p.eps0.unwrap_or(0.1),
        p.bound.unwrap_or(DEFAULT_RESONANCE_BOUND),
    )?;
    let verified = rep.verify();
    let mut v = serde_json::to_value(&rep).map_err(|e| Failure::Usage(e.to_string()))?;
    v["verified"] = json!(verified);
    Ok(Artifact::Report(v))
}

fn cancel_test(p: &Params) -> Res<Artifact> {
    report(&cancellation_sweep(
        p.trials.unwrap_or(1000),
        p.seed.unwrap_or(DEFAULT_SEED),
        p.max_s.unwrap_or(97),
    )?)
}

fn shadow(p: &Params) -> Res<Artifact> {
    let lambda = p.lambda.unwrap_or(0.5);
    let r = pq(p)?;
    let theta = p.theta.unwrap_or(0.0);
    let dev = dev(p);
    let bs = bands(lambda, r, theta)?;
    let e = match p.energy {
        Some(e) => e,
        None => match x_set(&bs).intervals.iter().max_by(|a, b| a.len().total_cmp(&b.len())) {
            Some(x) => x.mid(),
            None => return usage(format!("the X set of {r} is empty; pass --E")),
        },
    };
    let b = p.b.unwrap_or(50);
    let shadowing = build_shadowing(lambda, r, dev, theta, e, b)?;
    let m = bs.fixed_point(e)?;
    let z = point_with_phi_ratio(m, p.phi_factor.unwrap_or(2.0))?;
    let dynamical = dynamical_cancellation(lambda, r, dev, theta, e, z, b, p.slack.unwrap_or(0.1))?;
    Ok(Artifact::Report(json!({
        "alpha": NearRational::new(r, dev).value(),
        "shadowing": shadowing,
        "dynamical": dynamical,
    })))
}

fn integrated(p: &Params) -> Res<Artifact> {
    report(&integrated_cancellation(
        p.lambda.unwrap_or(0.5),
        pq(p)?,
        dev(p),
        p.theta.unwrap_or(0.0),
        p.b.unwrap_or(8),
        p.nodes.unwrap_or(16),
        p.eps.unwrap_or(1e-3),
    )?)
}

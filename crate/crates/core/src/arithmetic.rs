//! Continued fractions, `β(α)` estimates, torus norms and ε₀-resonances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A remainder `|q α - p|` below this is treated as exact rationality.
pub const RATIONAL_EPS: f64 = 1e-15;

/// Default resonance search bound.
pub const DEFAULT_RESONANCE_BOUND: i64 = 10_000;

pub fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Distance from `x` to the nearest integer.
pub fn torus_norm(x: f64) -> f64 {
    let f = x - x.round();
    f.abs()
}

pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

pub fn silver_mean() -> f64 {
    2f64.sqrt() - 1.0
}

/// A reduced fraction `p/q` with `q ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rational {
    pub p: u64,
    pub q: u64,
}

impl Rational {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("denominator must be positive".into()));
        }
        if gcd(p as u128, q as u128) != 1 {
            return Err(Error::InvalidParameter(format!("{p}/{q} is not in lowest terms")));
        }
        Ok(Rational { p, q })
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// `(n p mod q) / q`, the exact fractional part of `n · p/q`.
    pub fn multiple(&self, n: i64) -> f64 {
        let q = self.q as i128;
        let r = ((n as i128 * self.p as i128) % q + q) % q;
        r as f64 / q as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("expected p/q, got {s:?}"));
        let (p, q) = s.split_once('/').ok_or_else(bad)?;
        let p = p.trim().parse().map_err(|_| bad())?;
        let q = q.trim().parse().map_err(|_| bad())?;
        Rational::new(p, q)
    }
}

/// A frequency `α = p/q + dev` with an exactly known rational part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearRational {
    pub p_over_q: Rational,
    pub dev: f64,
}

impl NearRational {
    pub fn new(p_over_q: Rational, dev: f64) -> Self {
        NearRational { p_over_q, dev }
    }

    pub fn value(&self) -> f64 {
        self.p_over_q.value() + self.dev
    }
}

/// The rotation frequency of a cocycle. The rational variants keep the
/// orbit `θ + nα` exact in its rational part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Real(f64),
    Rational(Rational),
    NearRational(NearRational),
}

impl Frequency {
    pub fn value(&self) -> f64 {
        match self {
            Frequency::Real(a) => *a,
            Frequency::Rational(r) => r.value(),
            Frequency::NearRational(n) => n.value(),
        }
    }

    /// `θ + n α`, not reduced modulo one.
    #[inline]
    pub fn phase(&self, theta: f64, n: i64) -> f64 {
        match self {
            Frequency::Real(a) => theta + n as f64 * a,
            Frequency::Rational(r) => theta + r.multiple(n),
            Frequency::NearRational(nr) => theta + nr.p_over_q.multiple(n) + n as f64 * nr.dev,
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Frequency::Rational(r) => Some(*r),
            _ => None,
        }
    }

    /// Parse `golden`, `silver`, `p/q` or a decimal.
    ///
    /// The named aliases expand to the 30th convergent of the corresponding
    /// quadratic irrational.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "golden" => Ok(Frequency::Real(alias_value(1))),
            "silver" => Ok(Frequency::Real(alias_value(2))),
            _ if s.contains('/') => Ok(Frequency::Rational(s.parse()?)),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .map(Frequency::Real)
                .ok_or_else(|| Error::InvalidParameter(format!("bad frequency {s:?}"))),
        }
    }
}

// 30th convergent of the constant-quotient expansion [0; a, a, a, ...].
fn alias_value(a: u128) -> f64 {
    ContinuedFraction::from_quotients(&[a; 30])
        .expect("30 quotients fit")
        .alpha
}

/// Partial quotients and convergents of `α ∈ (0, 1)`.
///
/// `convergents[k]` is `p_{k+1}/q_{k+1}`; the list starts at `p_1/q_1 = 1/a_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    pub alpha: f64,
    pub quotients: Vec<u128>,
    pub convergents: Vec<(u128, u128)>,
    /// Set when the expansion stopped because `α` is rational to machine
    /// resolution.
    pub exact: bool,
}

/// Gauss-map expansion of `alpha`, stopping after `max_terms` quotients, at
/// the first `q_k > q_cap`, or when the remainder reaches machine resolution.
///
/// Quotients come from the remainders `d_k = |q_k α - p_k|` (computed with a
/// fused multiply-add) as `a_{k+1} = ⌊d_{k-1} / d_k⌋`, which avoids the error
/// amplification of iterating `x ↦ {1/x}`.
pub fn expand(alpha: f64, max_terms: usize, q_cap: u128) -> Result<ContinuedFraction> {
    if !(alpha > 0.0 && alpha < 1.0) || max_terms == 0 {
        return Err(Error::InvalidParameter(format!(
            "expand needs alpha in (0,1) and max_terms >= 1, got {alpha}, {max_terms}"
        )));
    }
    let remainder = |p: u128, q: u128| alpha.mul_add(q as f64, -(p as f64)).abs();
    let (mut p0, mut q0) = (1u128, 0u128);
    let (mut p1, mut q1) = (0u128, 1u128);
    let mut d0 = 1.0;
    let mut d1 = alpha;
    let mut cf = ContinuedFraction {
        alpha,
        quotients: Vec::new(),
        convergents: Vec::new(),
        exact: false,
    };
    while cf.quotients.len() < max_terms {
        let ratio = (d0 / d1).floor();
        if !(ratio >= 1.0) || ratio > 1e30 {
            cf.exact = true;
            break;
        }
        let a = ratio as u128;
        let (Some(p), Some(q)) = (
            a.checked_mul(p1).and_then(|x| x.checked_add(p0)),
            a.checked_mul(q1).and_then(|x| x.checked_add(q0)),
        ) else {
            break;
        };
        if q > q_cap {
            break;
        }
        cf.quotients.push(a);
        cf.convergents.push((p, q));
        (p0, q0, p1, q1) = (p1, q1, p, q);
        d0 = d1;
        d1 = remainder(p, q);
        // Below the resolution of the stored double, the remaining quotients
        // describe rounding error rather than α.
        if d1 < RATIONAL_EPS || d1 < 4.0 * f64::EPSILON * alpha * q as f64 {
            cf.exact = true;
            break;
        }
    }
    Ok(cf)
}

impl ContinuedFraction {
    /// Build from prescribed partial quotients; `alpha` is the deepest
    /// convergent ratio.
    pub fn from_quotients(quotients: &[u128]) -> Result<Self> {
        if quotients.is_empty() || quotients.contains(&0) {
            return Err(Error::InvalidParameter("partial quotients must be positive".into()));
        }
        let (mut p0, mut q0) = (1u128, 0u128);
        let (mut p1, mut q1) = (0u128, 1u128);
        let mut convergents = Vec::with_capacity(quotients.len());
        for &a in quotients {
            let p = a
                .checked_mul(p1)
                .and_then(|x| x.checked_add(p0))
                .ok_or_else(|| Error::InvalidParameter("convergent overflow".into()))?;
            let q = a
                .checked_mul(q1)
                .and_then(|x| x.checked_add(q0))
                .ok_or_else(|| Error::InvalidParameter("convergent overflow".into()))?;
            convergents.push((p, q));
            (p0, q0, p1, q1) = (p1, q1, p, q);
        }
        let (p, q) = *convergents.last().unwrap();
        Ok(ContinuedFraction {
            alpha: p as f64 / q as f64,
            quotients: quotients.to_vec(),
            convergents,
            exact: false,
        })
    }

    /// A Liouville-type frequency with `a_{k+1} = ⌈e^{q_k} / q_k⌉`, so that
    /// `ln q_{k+1} ≈ q_k`. Only a handful of levels fit in 128 bits.
    pub fn synthetic_liouville(levels: usize) -> Result<Self> {
        let mut quotients: Vec<u128> = vec![1];
        let mut q_prev = 1u128;
        let mut q = 1u128;
        while quotients.len() < levels {
            let a = ((q as f64).exp() / q as f64).ceil();
            if a > u128::MAX as f64 / (2.0 * q as f64) {
                return Err(Error::InvalidParameter(format!(
                    "at most {} Liouville levels fit in 128 bits",
                    quotients.len()
                )));
            }
            let a = a as u128;
            quotients.push(a);
            (q_prev, q) = (q, a * q + q_prev);
        }
        ContinuedFraction::from_quotients(&quotients)
    }

    pub fn denominators(&self) -> impl Iterator<Item = u128> + '_ {
        self.convergents.iter().map(|&(_, q)| q)
    }

    /// The convergent with denominator `q`, if any.
    pub fn convergent_with_denominator(&self, q: u128) -> Option<(u128, u128)> {
        self.convergents.iter().copied().find(|&(_, d)| d == q)
    }
}

/// Finite-depth proxy for `β(α) = limsup ln q_{n+1} / q_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub depth: usize,
    pub ratios: Vec<f64>,
    pub beta_hat: f64,
}

pub fn beta_estimate(cf: &ContinuedFraction, tail: usize) -> Result<BetaEstimate> {
    let n = cf.convergents.len();
    if n < 2 || tail == 0 {
        return Err(Error::InvalidParameter(
            "beta_estimate needs two convergents and a positive tail".into(),
        ));
    }
    let ratios: Vec<f64> = cf
        .convergents
        .windows(2)
        .map(|w| (w[1].1 as f64).ln() / w[0].1 as f64)
        .collect();
    let start = ratios.len().saturating_sub(tail);
    let beta_hat = ratios[start..].iter().copied().fold(0.0, f64::max);
    Ok(BetaEstimate {
        depth: n,
        ratios,
        beta_hat,
    })
}

/// Result of an exhaustive ε₀-resonance scan over `|k| ≤ search_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub theta: f64,
    pub alpha: f64,
    pub epsilon0: f64,
    pub resonances: Vec<i64>,
    pub search_bound: i64,
    /// Resonances whose distance ties with another index of no larger modulus.
    pub ties: Vec<i64>,
}

fn resonance_distance(theta: f64, alpha: f64, k: i64) -> f64 {
    torus_norm(2.0 * theta - k as f64 * alpha)
}

/// All `k` with `‖2θ - kα‖ ≤ e^{-|k| ε₀}` and `‖2θ - kα‖ = min_{|j| ≤ |k|} ‖2θ - jα‖`,
/// ordered by `(|k|, k)`. Ties in the minimum are accepted and reported.
pub fn find_resonances(theta: f64, alpha: f64, epsilon0: f64, bound: i64) -> Result<ResonanceReport> {
    if !(epsilon0 > 0.0) || bound < 1 {
        return Err(Error::InvalidParameter(
            "find_resonances needs epsilon0 > 0 and K >= 1".into(),
        ));
    }
    let mut resonances = vec![0];
    let mut ties = Vec::new();
    let mut best = resonance_distance(theta, alpha, 0);
    for m in 1..=bound {
        let lo = resonance_distance(theta, alpha, -m);
        let hi = resonance_distance(theta, alpha, m);
        let prev = best;
        best = best.min(lo).min(hi);
        let threshold = (-(m as f64) * epsilon0).exp();
        for (k, v) in [(-m, lo), (m, hi)] {
            if v <= threshold && v == best {
                resonances.push(k);
                if v == prev || lo == hi {
                    ties.push(k);
                }
            }
        }
    }
    Ok(ResonanceReport {
        theta,
        alpha,
        epsilon0,
        resonances,
        search_bound: bound,
        ties,
    })
}

impl ResonanceReport {
    /// Re-check every listed index against the definition by brute force.
    pub fn verify(&self) -> bool {
        self.resonances.iter().all(|&k| {
            let v = resonance_distance(self.theta, self.alpha, k);
            let m = k.abs();
            let small = v <= (-(m as f64) * self.epsilon0).exp() || k == 0;
            let minimal = (-m..=m).all(|j| resonance_distance(self.theta, self.alpha, j) >= v);
            small && minimal
        })
    }
}

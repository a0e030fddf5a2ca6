//! Regime experiments: trigonometric-polynomial sampling along orbits for
//! Diophantine frequencies, and the rotation-average cancellation chain for
//! frequencies exponentially close to a rational.
//!
//! The exponential regime is realised synthetically: `α = p/q + dev` with an
//! explicit small `dev`, so both `p/q` and `α - p/q` are known exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{gcd, Frequency, NearRational, Rational};
use crate::cocycle::SchrodingerCocycle;
use crate::linalg::{mobius_act, phi, rotation, HPoint, Mat2};
use crate::periodic::{bands, density_periodic, x_set, BandSpectrum, XSet};
use crate::quad::Rule;
use crate::spectral::{density_estimate, MParams};
use crate::{Error, Result};

/// Default seed for randomised sweeps.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Inclusive integer range `lo..=hi`; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: i64,
    pub hi: i64,
}

impl IntRange {
    pub const EMPTY: IntRange = IntRange { lo: 1, hi: 0 };

    pub fn new(lo: i64, hi: i64) -> Self {
        IntRange { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, k: i64) -> bool {
        self.lo <= k && k <= self.hi
    }

    /// `hi - lo`, the essential degree of a polynomial supported here.
    pub fn degree(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo) as usize
        }
    }
}

/// A finite Fourier series `Σ_k c_k e^{2πikx}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub coeffs: BTreeMap<i64, Complex64>,
    pub essential_interval: IntRange,
}

impl TrigPoly {
    /// Drops zero coefficients and takes the support hull as the essential
    /// interval.
    pub fn new(coeffs: BTreeMap<i64, Complex64>) -> Self {
        let coeffs: BTreeMap<i64, Complex64> = coeffs
            .into_iter()
            .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
            .collect();
        let essential_interval = match (coeffs.keys().next(), coeffs.keys().next_back()) {
            (Some(&lo), Some(&hi)) => IntRange::new(lo, hi),
            _ => IntRange::EMPTY,
        };
        TrigPoly {
            coeffs,
            essential_interval,
        }
    }

    pub fn zero() -> Self {
        TrigPoly::new(BTreeMap::new())
    }

    pub fn constant(c: Complex64) -> Self {
        TrigPoly::new(BTreeMap::from([(0, c)]))
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(&k, &c)| c * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x))
            .sum()
    }

    pub fn essential_degree(&self) -> usize {
        self.essential_interval.degree()
    }

    /// `Σ |c_k|`, an upper bound for the sup norm.
    pub fn l1(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// `sup |p|` over `n` equally spaced points of the circle.
    pub fn grid_sup(&self, n: usize) -> f64 {
        (0..n)
            .map(|j| self.eval(j as f64 / n as f64).norm())
            .fold(0.0, f64::max)
    }

    /// Gaussian coefficients on `range`.
    pub fn random(rng: &mut impl Rng, range: IntRange) -> Self {
        let mut coeffs = BTreeMap::new();
        if !range.is_empty() {
            for k in range.lo..=range.hi {
                let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                coeffs.insert(k, Complex64::new(a, b));
            }
        }
        TrigPoly::new(coeffs)
    }
}

/// The coefficients of `series` with index in `range`.
pub fn truncate(series: &TrigPoly, range: IntRange) -> TrigPoly {
    TrigPoly::new(
        series
            .coeffs
            .iter()
            .filter(|(k, _)| range.contains(**k))
            .map(|(&k, &c)| (k, c))
            .collect(),
    )
}

/// `‖p‖₀ / sup_{0 ≤ j ≤ k} |p(x₀ + jα)|`, with `‖p‖₀` taken over a grid of
/// `16 (k + 1)` points.
pub fn orbit_sampling_ratio(p: &TrigPoly, alpha: f64, x0: f64, k: usize) -> Result<f64> {
    if p.essential_degree() > k {
        return Err(Error::InvalidParameter(format!(
            "essential degree {} exceeds k = {k}",
            p.essential_degree()
        )));
    }
    let on_orbit = (0..=k)
        .map(|j| p.eval(x0 + j as f64 * alpha).norm())
        .fold(0.0, f64::max);
    if on_orbit < 1e-300 {
        return Err(Error::DegenerateSample);
    }
    Ok(p.grid_sup(16 * (k + 1)) / on_orbit)
}

/// Both sides of `(1/s) Σ_{k<s} φ(B₀ R_{rk/s} z₀) = φ(z₀) φ(B₀ · i)`.
pub fn cancellation_identity(b0: &Mat2, z0: HPoint, r_over_s: Rational) -> Result<(f64, f64)> {
    let s = r_over_s.q;
    if s <= 2 {
        return Err(Error::InvalidParameter(format!("{r_over_s} is a multiple of 1/2")));
    }
    let mut lhs = 0.0;
    for k in 0..s {
        let w = mobius_act(b0, mobius_act(&rotation(r_over_s.multiple(k as i64)), z0)?)?;
        lhs += phi(w);
    }
    lhs /= s as f64;
    let rhs = phi(z0) * phi(mobius_act(b0, HPoint::I)?);
    Ok((lhs, rhs))
}

/// `(1/b₀) Σ_{k<b₀} φ(B₀ R_{kρ} z₀)` and `φ(z₀) φ(B₀ · i)`. A negative `rho`
/// gives the other orientation.
pub fn elliptic_average_experiment(b0: &Mat2, rho: f64, z0: HPoint, count: usize) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    for k in 0..count {
        // Reduce kρ before forming the angle to keep it exact-ish for large k.
        let t = (k as f64 * rho).rem_euclid(1.0);
        sum += phi(mobius_act(b0, mobius_act(&rotation(t), z0)?)?);
    }
    let bound = phi(z0) * phi(mobius_act(b0, HPoint::I)?);
    Ok((sum / count as f64, bound))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationSweep {
    pub trials: usize,
    pub seed: u64,
    pub max_s: u64,
    pub max_rel_dev: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// A random real unimodular matrix with entries drawn from `[-5, 5]`.
pub fn random_unimodular(rng: &mut impl Rng) -> Mat2 {
    loop {
        let m = Mat2::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let det: f64 = m.det();
        if det.abs() < 0.1 {
            continue;
        }
        let m = if det < 0.0 { Mat2::new(-m.a, m.b, -m.c, m.d) } else { m };
        return m.scale(1.0 / det.abs().sqrt());
    }
}

/// A random point with `φ ≤ phi_max`.
pub fn random_hpoint(rng: &mut impl Rng, phi_max: f64) -> HPoint {
    loop {
        let y = rng.gen_range(-3.0f64..3.0).exp();
        let room = 2.0 * phi_max * y - 1.0 - y * y;
        if room <= 0.0 {
            continue;
        }
        let xm = room.sqrt();
        let x = rng.gen_range(-xm..=xm);
        if let Ok(z) = HPoint::new(x, y) {
            return z;
        }
    }
}

/// The cancellation identity on `trials` random instances with `s ≤ max_s`.
pub fn cancellation_sweep(trials: usize, seed: u64, max_s: u64) -> Result<CancellationSweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_dev: f64 = 0.0;
    for _ in 0..trials {
        let b0 = random_unimodular(&mut rng);
        let z0 = random_hpoint(&mut rng, 100.0);
        let s = rng.gen_range(3..=max_s.max(3));
        let r = loop {
            let r = rng.gen_range(1..s);
            if gcd(r as u128, s as u128) == 1 {
                break r;
            }
        };
        let (lhs, rhs) = cancellation_identity(&b0, z0, Rational::new(r, s)?)?;
        max_rel_dev = max_rel_dev.max((lhs - rhs).abs() / rhs);
    }
    let threshold = 1e-9;
    Ok(CancellationSweep {
        trials,
        seed,
        max_s,
        max_rel_dev,
        threshold,
        pass: max_rel_dev <= threshold,
    })
}

/// Everything the shadowing experiments need about one `(λ, p/q, θ, E)`.
#[derive(Debug, Clone)]
pub struct ShadowSetup {
    pub bands: BandSpectrum,
    pub x_set: XSet,
    pub alpha: Frequency,
    pub theta: f64,
    pub energy: f64,
    /// `m(θ, E)`, the fixed point of `A_q(θ)`.
    pub m: HPoint,
    /// `B(θ)`, upper triangular with `B · i = m`.
    pub b: Mat2,
    pub rho: f64,
}

impl ShadowSetup {
    pub fn new(lambda: f64, pq: Rational, dev: f64, theta: f64, e: f64) -> Result<Self> {
        let q = pq.q as f64;
        if dev.abs() > (-0.5 * q).exp() {
            return Err(Error::InvalidParameter(format!(
                "|dev| = {dev:e} exceeds e^(-q/2) for q = {q}"
            )));
        }
        let bs = bands(lambda, pq, theta)?;
        let xs = x_set(&bs);
        if !xs.contains(e) {
            return Err(Error::OutsideXSet(e));
        }
        let m = bs.fixed_point(e)?;
        let rho = bs.rho(e).ok_or(Error::OutsideBands(e))?;
        let alpha = if dev == 0.0 {
            Frequency::Rational(pq)
        } else {
            Frequency::NearRational(NearRational::new(pq, dev))
        };
        Ok(ShadowSetup {
            bands: bs,
            x_set: xs,
            alpha,
            theta,
            energy: e,
            m,
            b: Mat2::sending_i_to(m),
            rho,
        })
    }

    pub fn q(&self) -> usize {
        self.bands.q()
    }

    /// `Ã_{kq}(θ)` for `k = 0..count`, under the true frequency.
    pub fn orbit_products(&self, count: usize) -> Result<Vec<Mat2>> {
        let c = SchrodingerCocycle::real(self.bands.lambda, self.alpha, self.energy)?;
        let q = self.q();
        let mut out = Vec::with_capacity(count);
        let mut a = Mat2::identity();
        out.push(a);
        for k in 1..count {
            for i in 0..q {
                let n = ((k - 1) * q + i) as i64;
                a = c.step_real(self.alpha.phase(self.theta, n)) * a;
            }
            out.push(a);
        }
        Ok(out)
    }
}

/// `‖B(θ)⁻¹ Ã_{kq}(θ) B(θ) - R_{±kρ(θ)}‖` for `k < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowReport {
    pub q: usize,
    pub b: usize,
    pub dev: f64,
    pub energy: f64,
    pub rho: f64,
    /// `+1` or `-1`, the orientation of the rotation.
    pub sign: f64,
    pub deviations: Vec<f64>,
    pub max_dev: f64,
}

pub fn build_shadowing(lambda: f64, pq: Rational, dev: f64, theta: f64, e: f64, b: usize) -> Result<ShadowReport> {
    if b == 0 || b > 10_000 {
        return Err(Error::InvalidParameter("b must lie in 1..=10000".into()));
    }
    let setup = ShadowSetup::new(lambda, pq, dev, theta, e)?;
    let binv = setup.b.inverse_unimodular();
    let conj: Vec<Mat2> = setup
        .orbit_products(b)?
        .into_iter()
        .map(|a| binv * a * setup.b)
        .collect();
    let dev_at = |k: usize, sign: f64| (conj[k] - rotation(sign * k as f64 * setup.rho)).op_norm();
    // The orientation is read off the first step.
    let sign = if b < 2 || dev_at(1, 1.0) <= dev_at(1, -1.0) {
        1.0
    } else {
        -1.0
    };
    let deviations: Vec<f64> = (0..b).map(|k| dev_at(k, sign)).collect();
    let max_dev = deviations.iter().copied().fold(0.0, f64::max);
    Ok(ShadowReport {
        q: setup.q(),
        b,
        dev,
        energy: e,
        rho: setup.rho,
        sign,
        deviations,
        max_dev,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicalReport {
    pub q: usize,
    pub b: usize,
    pub dev: f64,
    pub energy: f64,
    pub z: HPoint,
    pub phi_m: f64,
    pub phi_z: f64,
    pub kappa: f64,
    pub avg: f64,
    pub floor: f64,
    pub ratio: f64,
    pub slack: f64,
    pub per_k: Vec<f64>,
    pub pass: bool,
}

/// `(1 + κ²) / 2κ`.
pub fn kappa_factor(kappa: f64) -> f64 {
    (1.0 + kappa * kappa) / (2.0 * kappa)
}

/// A point on the vertical line through `m` with `φ(z) = factor · φ(m)`,
/// above `m`.
pub fn point_with_phi_ratio(m: HPoint, factor: f64) -> Result<HPoint> {
    let f = factor * phi(m);
    let x = m.re;
    let disc = f * f - (1.0 + x * x);
    if disc < 0.0 {
        return Err(Error::InvalidParameter("factor too small for this m".into()));
    }
    HPoint::new(x, f + disc.sqrt())
}

/// `(1/b) Σ_{k<b} φ(Ã_{kq}(θ) · z)` against `(1 + κ²)/(2κ) · φ(m(θ, E))`,
/// with `κ = min(2, exp |ln φ(z) - ln φ(m)|)`.
pub fn dynamical_cancellation(
    lambda: f64,
    pq: Rational,
    dev: f64,
    theta: f64,
    e: f64,
    z: HPoint,
    b: usize,
    slack: f64,
) -> Result<DynamicalReport> {
    if b == 0 {
        return Err(Error::InvalidParameter("b must be positive".into()));
    }
    let setup = ShadowSetup::new(lambda, pq, dev, theta, e)?;
    let phi_m = phi(setup.m);
    let phi_z = phi(z);
    let kappa = (phi_z.ln() - phi_m.ln()).abs().exp().clamp(1.0, 2.0);
    let floor = kappa_factor(kappa) * phi_m;
    let per_k: Vec<f64> = setup
        .orbit_products(b)?
        .iter()
        .map(|a| mobius_act(a, z).map(phi))
        .collect::<Result<_>>()?;
    let avg = per_k.iter().sum::<f64>() / b as f64;
    let ratio = avg / floor;
    // The floor never drops below φ(m), since (1 + κ²)/2κ ≥ 1.
    debug_assert!(floor >= phi_m * (1.0 - 1e-12));
    Ok(DynamicalReport {
        q: setup.q(),
        b,
        dev,
        energy: e,
        z,
        phi_m,
        phi_z,
        kappa,
        avg,
        floor,
        ratio,
        slack,
        per_k,
        pass: ratio >= 1.0 - slack && floor >= phi_m * (1.0 - 1e-12),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedReport {
    pub q: usize,
    pub b: usize,
    pub dev: f64,
    pub theta: f64,
    pub eps: f64,
    pub nodes_per_interval: usize,
    /// `(1/2π) ∫_X π · density(θ + kα, E) dE` for each `k < b`.
    pub mass_per_k: Vec<f64>,
    pub k0_mass: f64,
    pub b_average: f64,
    /// The same integral for the periodic model at `θ` with `ε = 0`.
    pub periodic_x_mass: f64,
    pub ceiling: f64,
    pub pass: bool,
}

/// Orbit-averaged spectral mass over the X set of the `p/q` model at `θ`.
///
/// `φ(m̃(θ, E))` is replaced by `π` times the Poisson-smoothed density at
/// `E + iε` under the true frequency, its only computable stand-in; the
/// periodic mass over the same set is reported alongside so the bias from
/// `ε` and from `dev` stays visible.
pub fn integrated_cancellation(
    lambda: f64,
    pq: Rational,
    dev: f64,
    theta: f64,
    b: usize,
    nodes_per_interval: usize,
    eps: f64,
) -> Result<IntegratedReport> {
    if b == 0 || nodes_per_interval == 0 {
        return Err(Error::InvalidParameter("b and node count must be positive".into()));
    }
    let bs = bands(lambda, pq, theta)?;
    let xs = x_set(&bs);
    if xs.intervals.is_empty() {
        return Err(Error::InvalidParameter(format!("empty X set for q = {}", pq.q)));
    }
    let alpha = if dev == 0.0 {
        Frequency::Rational(pq)
    } else {
        Frequency::NearRational(NearRational::new(pq, dev))
    };
    let rule = Rule::new(nodes_per_interval);
    // X intervals keep a positive distance from the band edges, so plain
    // Gauss-Legendre panels suffice for the periodic density there.
    let mut periodic_x_mass = 0.0;
    for iv in &xs.intervals {
        periodic_x_mass += 0.5 * rule.integrate(iv.lo, iv.hi, 1, |e| density_periodic(&bs, e))?;
    }
    let p = MParams::default();
    let mass_per_k: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|k| {
            let th = alpha.phase(theta, k as i64);
            let mut total = 0.0;
            for iv in &xs.intervals {
                total += 0.5 * rule.integrate(iv.lo, iv.hi, 1, |e| density_estimate(lambda, alpha, th, e, eps, p))?;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let b_average = mass_per_k.iter().sum::<f64>() / b as f64;
    let ceiling = 1.05;
    Ok(IntegratedReport {
        q: pq.q as usize,
        b,
        dev,
        theta,
        eps,
        nodes_per_interval,
        k0_mass: mass_per_k[0],
        mass_per_k,
        b_average,
        periodic_x_mass,
        ceiling,
        pass: b_average <= ceiling,
    })
}

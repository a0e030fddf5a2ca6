//! Weyl m-functions, the Borel transform `M` of the spectral measure,
//! integrated density of states tables and the Thouless formula.
//!
//! Sign conventions: `m⁺(θ) = -u₀/u₋₁` for the solution decaying at `+∞` and
//! `m⁻(θ) = u₀/u₋₁` for the one decaying at `-∞`, so that both lie in the
//! upper half-plane when `Im z > 0` and
//!
//! ```text
//! m⁺(θ) = -1 / (z - v(θ) + m⁺(θ + α)),    m⁻(θ + α) = z - v(θ) - 1 / m⁻(θ).
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::Frequency;
use crate::cocycle::{potential, SchrodingerCocycle};
use crate::linalg::{hyp_dist, HPoint, Mat2};
use crate::periodic::{ids_periodic, BandSpectrum};
use crate::{Error, Result};

/// Largest pullback depth tried before giving up.
pub const MAX_DEPTH: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

fn to_h(w: Complex64) -> Result<HPoint> {
    HPoint::new(w.re, w.im).map_err(|_| Error::NotInUpperHalfPlane(w.im))
}

/// `z - v(x)`.
#[inline]
fn t_at(c: &SchrodingerCocycle, x: f64) -> Complex64 {
    c.energy - potential(c.lambda, x)
}

fn pull_plus(c: &SchrodingerCocycle, theta: f64, depth: usize) -> Complex64 {
    let mut w = Complex64::new(0.0, 1.0);
    for n in (0..depth).rev() {
        w = -1.0 / (t_at(c, c.alpha.phase(theta, n as i64)) + w);
    }
    w
}

fn push_minus(c: &SchrodingerCocycle, theta: f64, depth: usize) -> Complex64 {
    let mut w = Complex64::new(0.0, 1.0);
    for n in (1..=depth).rev() {
        w = t_at(c, c.alpha.phase(theta, -(n as i64))) - 1.0 / w;
    }
    w
}

/// The fixed point in `H` of a complex Möbius map that maps `H` into itself.
fn attracting_fixed_point(m: &Mat2<Complex64>) -> Result<Complex64> {
    // c w² + (d - a) w - b = 0.
    let (a, b, c, d) = (m.a, m.b, m.c, m.d);
    if c.norm() < 1e-300 {
        return Err(Error::BoundaryBlowup);
    }
    let disc = ((d - a) * (d - a) + 4.0 * b * c).sqrt();
    let r1 = (a - d + disc) / (2.0 * c);
    let r2 = (a - d - disc) / (2.0 * c);
    // The attracting point has |derivative| = 1 / |c w + d|² < 1.
    let gain = |w: Complex64| (c * w + d).norm();
    let best = match (r1.im > 0.0, r2.im > 0.0) {
        (true, false) => r1,
        (false, true) => r2,
        _ => {
            if gain(r1) >= gain(r2) {
                r1
            } else {
                r2
            }
        }
    };
    if best.im > 0.0 {
        Ok(best)
    } else {
        Err(Error::NotInUpperHalfPlane(best.im))
    }
}

/// One-period maps for rational frequencies: the `m⁺` map
/// `f_0 ∘ ⋯ ∘ f_{q-1}` with `f_k = [[0, -1], [1, t_k]]` and the `m⁻` map
/// `S_{-1} ⋯ S_{-q}`.
fn period_map(c: &SchrodingerCocycle, theta: f64, q: usize, side: Side) -> Mat2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut m = Mat2::<Complex64>::identity();
    for k in 0..q {
        let step = match side {
            Side::Plus => {
                let t = t_at(c, c.alpha.phase(theta, k as i64));
                Mat2::new(zero, -one, one, t)
            }
            Side::Minus => {
                let t = t_at(c, c.alpha.phase(theta, -(k as i64) - 1));
                Mat2::new(t, -one, one, zero)
            }
        };
        m = m * step;
        let s = m.max_abs();
        if s > 1e100 {
            m = m.scale(1.0 / s);
        }
    }
    m
}

/// `m^±(θ)` at the cocycle's complex energy.
///
/// For a rational frequency the m-function is the attracting fixed point of
/// the one-period Möbius map. Otherwise a seed `i` placed `depth` steps
/// along the half-line is pulled back, doubling the depth until two
/// consecutive results are within `tol` in hyperbolic distance.
pub fn m_function(c: &SchrodingerCocycle, theta: f64, side: Side, depth: usize, tol: f64) -> Result<HPoint> {
    if !(c.energy.im > 0.0) {
        return Err(Error::InvalidParameter("m-functions need Im E > 0".into()));
    }
    if let Frequency::Rational(r) = c.alpha {
        let w = attracting_fixed_point(&period_map(c, theta, r.q as usize, side))?;
        return to_h(w);
    }
    let eval = |d: usize| match side {
        Side::Plus => pull_plus(c, theta, d),
        Side::Minus => push_minus(c, theta, d),
    };
    let mut d = depth.max(16);
    let mut prev = to_h(eval(d))?;
    while d < MAX_DEPTH {
        d *= 2;
        let next = to_h(eval(d))?;
        if hyp_dist(prev, next) < tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::ContractionFailure(d))
}

/// Hyperbolic distance between `m^±(θ + α)` and the one-step transport of
/// `m^±(θ)`.
pub fn equivariance_residual(c: &SchrodingerCocycle, theta: f64, side: Side, depth: usize, tol: f64) -> Result<f64> {
    let here = m_function(c, theta, side, depth, tol)?.to_complex();
    let next = m_function(c, c.alpha.phase(theta, 1), side, depth, tol)?;
    let t = t_at(c, theta);
    let moved = match side {
        Side::Plus => -1.0 / here - t,
        Side::Minus => t - 1.0 / here,
    };
    Ok(hyp_dist(to_h(moved)?, next))
}

/// `M = (m⁺ m⁻ - 1) / (m⁺ + m⁻)`.
pub fn borel_m(m_plus: HPoint, m_minus: HPoint) -> Result<Complex64> {
    let (a, b) = (m_plus.to_complex(), m_minus.to_complex());
    let s = a + b;
    if s.norm() < 1e-14 {
        return Err(Error::DegeneratePair);
    }
    Ok((a * b - 1.0) / s)
}

/// `(E, ε, m⁺, m⁻, M)` at `E + iε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MFunctionSample {
    pub energy: f64,
    pub eps: f64,
    pub m_plus: HPoint,
    pub m_minus: HPoint,
    #[serde(rename = "M")]
    pub big_m: Complex64,
}

/// Parameters of the m-function computation shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MParams {
    pub depth: usize,
    pub tol: f64,
}

impl Default for MParams {
    fn default() -> Self {
        MParams {
            depth: 1024,
            tol: 1e-10,
        }
    }
}

pub fn m_sample(lambda: f64, alpha: Frequency, theta: f64, e: f64, eps: f64, p: MParams) -> Result<MFunctionSample> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let c = SchrodingerCocycle::new(lambda, alpha, Complex64::new(e, eps))?;
    let m_plus = m_function(&c, theta, Side::Plus, p.depth, p.tol)?;
    let m_minus = m_function(&c, theta, Side::Minus, p.depth, p.tol)?;
    let big_m = borel_m(m_plus, m_minus)?;
    Ok(MFunctionSample {
        energy: e,
        eps,
        m_plus,
        m_minus,
        big_m,
    })
}

/// `(1/π) Im M(E + iε)`, the Poisson-smoothed density of the spectral measure.
pub fn density_estimate(lambda: f64, alpha: Frequency, theta: f64, e: f64, eps: f64, p: MParams) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "density_estimate needs 0 < eps <= 0.1, got {eps}"
        )));
    }
    Ok(m_sample(lambda, alpha, theta, e, eps, p)?.big_m.im / PI)
}

/// `dist(m⁺(E + iε), -conj m⁻(E + iε))` for decreasing `ε`: the reflection
/// symmetry that holds almost everywhere on the a.c. spectrum in the limit.
pub fn kotani_probe(
    lambda: f64,
    alpha: Frequency,
    theta: f64,
    e: f64,
    eps: &[f64],
    p: MParams,
) -> Result<Vec<(f64, f64)>> {
    eps.iter()
        .map(|&ep| {
            let s = m_sample(lambda, alpha, theta, e, ep, p)?;
            Ok((ep, hyp_dist(s.m_plus, s.m_minus.reflect())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2000Report {
    pub energy: f64,
    pub eps: f64,
    /// `2ε Im M(E + iε)`, an upper bound for `μ(E - ε, E + ε)`.
    pub mu_side: f64,
    /// `ε sup_{s ≤ C/ε} ‖A_s‖₀²`.
    pub norm_side: f64,
    pub horizon: usize,
    pub ratio: f64,
    pub safety_c: f64,
    pub pass: bool,
}

/// Compare `μ(E - ε, E + ε)` against `ε sup_{s ≤ C/ε} ‖A_s‖₀²`.
///
/// The measure side uses `μ(E - ε, E + ε) ≤ 2ε Im M(E + iε)`, which holds
/// for every positive measure, so the reported ratio bounds the true one.
pub fn lemma2000_check(
    lambda: f64,
    alpha: Frequency,
    theta: f64,
    e: f64,
    eps: f64,
    safety_c: f64,
    p: MParams,
) -> Result<Lemma2000Report> {
    if !(eps > 0.0 && eps <= 0.1) || !(safety_c > 0.0) {
        return Err(Error::InvalidParameter(
            "lemma2000_check needs eps in (0, 0.1] and C > 0".into(),
        ));
    }
    let s = m_sample(lambda, alpha, theta, e, eps, p)?;
    let mu_side = 2.0 * eps * s.big_m.im;
    let horizon = (safety_c / eps).ceil() as usize;
    let stats = SchrodingerCocycle::real(lambda, alpha, e)?.boundedness_probe(horizon, 64);
    let norm_side = eps * (2.0 * stats.log_sup_norm).exp();
    let ratio = mu_side / norm_side;
    Ok(Lemma2000Report {
        energy: e,
        eps,
        mu_side,
        norm_side,
        horizon,
        ratio,
        safety_c,
        pass: ratio <= safety_c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdsSource {
    RotationNumber,
    EigenvalueCount,
    PeriodicFormula,
}

/// A monotone piecewise-linear integrated density of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsTable {
    pub lambda: f64,
    pub alpha: f64,
    pub grid: Vec<(f64, f64)>,
    pub source: IdsSource,
}

impl IdsTable {
    /// Build from samples, sorting and enforcing monotonicity and `[0, 1]`.
    pub fn new(lambda: f64, alpha: f64, mut grid: Vec<(f64, f64)>, source: IdsSource) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidParameter("IDS table needs two points".into()));
        }
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut run = 0.0f64;
        for g in grid.iter_mut() {
            run = run.max(g.1.clamp(0.0, 1.0));
            g.1 = run;
        }
        Ok(IdsTable {
            lambda,
            alpha,
            grid,
            source,
        })
    }

    /// The IDS of a periodic operator from its band formula, with each band
    /// sampled at Chebyshev points spaced at most `max_spacing` apart.
    pub fn from_bands(bs: &BandSpectrum, max_spacing: f64) -> Result<Self> {
        let mut grid = Vec::new();
        for b in &bs.bands {
            let n = ((b.len() * PI / 2.0 / max_spacing).ceil() as usize).max(16);
            let c = b.mid();
            let r = 0.5 * b.len();
            grid.push((b.lo, ids_periodic(bs, b.lo)));
            for i in 1..n {
                let e = c - r * (PI * i as f64 / n as f64).cos();
                grid.push((e, ids_periodic(bs, e)));
            }
            grid.push((b.hi, ids_periodic(bs, b.hi)));
        }
        IdsTable::new(bs.lambda, bs.p_over_q.value(), grid, IdsSource::PeriodicFormula)
    }

    /// `N = 1 - 2ρ` from rotation numbers at the given energies.
    pub fn from_rotation(lambda: f64, alpha: Frequency, energies: &[f64], n: usize, x0: f64) -> Result<Self> {
        let grid: Vec<(f64, f64)> = energies
            .par_iter()
            .map(|&e| SchrodingerCocycle::real(lambda, alpha, e).map(|c| (e, 1.0 - 2.0 * c.rotation_number(n, x0))))
            .collect::<Result<_>>()?;
        IdsTable::new(lambda, alpha.value(), grid, IdsSource::RotationNumber)
    }

    /// Rescale energies by `s > 0`, as in `Σ_λ = λ Σ_{1/λ}`.
    pub fn scaled(&self, s: f64, lambda: f64) -> IdsTable {
        IdsTable {
            lambda,
            alpha: self.alpha,
            grid: self.grid.iter().map(|&(e, n)| (s * e, n)).collect(),
            source: self.source,
        }
    }

    /// Linear interpolation; 0 below and the last value above the table.
    pub fn eval(&self, e: f64) -> f64 {
        let g = &self.grid;
        if e <= g[0].0 {
            return if e < g[0].0 { 0.0 } else { g[0].1 };
        }
        if e >= g[g.len() - 1].0 {
            return g[g.len() - 1].1;
        }
        let j = g.partition_point(|p| p.0 <= e);
        let (a, b) = (g[j - 1], g[j]);
        if b.0 == a.0 {
            return b.1;
        }
        a.1 + (b.1 - a.1) * (e - a.0) / (b.0 - a.0)
    }

    /// Width of the table cell containing `e`, if `N` increases across it.
    fn active_cell_width(&self, e: f64) -> Option<f64> {
        let g = &self.grid;
        let j = g.partition_point(|p| p.0 <= e);
        if j == 0 || j == g.len() {
            return None;
        }
        let (a, b) = (g[j - 1], g[j]);
        (b.1 > a.1).then_some(b.0 - a.0)
    }

    /// The energy where the table first reaches level `n`.
    pub fn quantile(&self, n: f64) -> f64 {
        let g = &self.grid;
        let j = g.partition_point(|p| p.1 < n);
        if j == 0 {
            return g[0].0;
        }
        if j == g.len() {
            return g[g.len() - 1].0;
        }
        let (a, b) = (g[j - 1], g[j]);
        if b.1 == a.1 {
            return a.0;
        }
        a.0 + (b.0 - a.0) * (n - a.1) / (b.1 - a.1)
    }
}

/// `Re[(x - E) ln(x - E) - (x - E)]`, an antiderivative of `ln|x - E|` in x.
fn log_antiderivative(x: f64, e: Complex64) -> f64 {
    let d = Complex64::new(x, 0.0) - e;
    if d.norm() == 0.0 {
        return 0.0;
    }
    (d * d.ln() - d).re
}

/// `L(E) = ∫ ln|E' - E| dN(E')`.
///
/// On each cell of the table `dN` is a constant density, whose integral
/// against the logarithm is exact through the antiderivative; this also
/// covers the logarithmic singularity when `E` is real. A jump (a cell of
/// zero width) at `E` itself is smeared over two neighbouring cell widths.
pub fn thouless_l(ids: &IdsTable, e: Complex64) -> f64 {
    let g = &ids.grid;
    let mut total = 0.0;
    // Mass below the table start enters as a point mass at its first energy.
    let mut jumps = vec![(g[0].0, g[0].1)];
    for w in g.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dn = b.1 - a.1;
        if dn <= 0.0 {
            continue;
        }
        if b.0 > a.0 {
            let s = dn / (b.0 - a.0);
            total += s * (log_antiderivative(b.0, e) - log_antiderivative(a.0, e));
        } else {
            jumps.push((a.0, dn));
        }
    }
    let h = 2.0
        * g.windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(f64::INFINITY, |m, d| if d > 0.0 { m.min(d) } else { m });
    for (x, dn) in jumps {
        if dn <= 0.0 {
            continue;
        }
        let d = Complex64::new(x, 0.0) - e;
        if d.norm() > 0.0 {
            total += dn * d.norm().ln();
        } else if h.is_finite() {
            let s = dn / h;
            total += s * (log_antiderivative(x + h / 2.0, e) - log_antiderivative(x - h / 2.0, e));
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub energies: Vec<f64>,
    pub scales: Vec<f64>,
    /// `ln(N(E + ε) - N(E - ε)) / ln ε` per energy and scale.
    pub exponents: Vec<Vec<f64>>,
    pub min_exponent: f64,
    pub max_exponent: f64,
    /// Slope of `ln sup_E (N(E + ε) - N(E - ε))` against `ln ε`.
    pub upper_exponent: f64,
    /// `min (N(E + ε) - N(E - ε)) / ε^{3/2}` over all samples.
    pub lower_c: f64,
    pub pass: bool,
}

/// Local moduli of continuity of the IDS at `samples` quantile energies.
pub fn holder_probe(ids: &IdsTable, scales: &[f64], samples: usize) -> Result<HolderReport> {
    if scales.len() < 2 || samples == 0 {
        return Err(Error::InvalidParameter(
            "holder_probe needs two scales and one sample".into(),
        ));
    }
    let energies: Vec<f64> = (0..samples)
        .map(|i| ids.quantile((i as f64 + 0.5) / samples as f64))
        .collect();
    let mut exponents = Vec::with_capacity(samples);
    let mut lower_c = f64::INFINITY;
    let mut sup_by_scale = vec![0.0f64; scales.len()];
    for &e in &energies {
        let mut row = Vec::with_capacity(scales.len());
        for (k, &eps) in scales.iter().enumerate() {
            for x in [e - eps, e + eps] {
                if let Some(w) = ids.active_cell_width(x) {
                    if w > eps {
                        return Err(Error::Resolution(format!(
                            "IDS cell of width {w:.3e} near E = {x} exceeds eps = {eps:.3e}"
                        )));
                    }
                }
            }
            let w = ids.eval(e + eps) - ids.eval(e - eps);
            row.push(w.ln() / eps.ln());
            lower_c = lower_c.min(w / eps.powf(1.5));
            sup_by_scale[k] = sup_by_scale[k].max(w);
        }
        exponents.push(row);
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = sup_by_scale.iter().map(|s| s.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let upper_exponent = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let flat = exponents.iter().flatten();
    let min_exponent = flat.clone().copied().fold(f64::INFINITY, f64::min);
    let max_exponent = flat.copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = upper_exponent >= 0.45 && max_exponent <= 1.6 && lower_c > 0.0;
    Ok(HolderReport {
        energies,
        scales: scales.to_vec(),
        exponents,
        min_exponent,
        max_exponent,
        upper_exponent,
        lower_c,
        pass,
    })
}

/// Dyadic scales `2^{-k}` covering `[lo, hi]`.
pub fn dyadic_scales(lo: f64, hi: f64) -> Vec<f64> {
    let mut s = Vec::new();
    let mut x = 2f64.powi(hi.log2().floor() as i32);
    while x >= lo {
        s.push(x);
        x /= 2.0;
    }
    s.reverse();
    s
}

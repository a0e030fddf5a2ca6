//! Band theory for rational frequencies `α = p/q`.
//!
//! The discriminant `Δ(E) = tr A_q(θ)` is evaluated by multiplying step
//! matrices (never through polynomial coefficients, which are hopelessly
//! ill-conditioned beyond q ≈ 30). Between consecutive critical points of
//! `Δ` it is monotone, which reduces band edges to bisection.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::Rational;
use crate::cocycle::potential;
use crate::dd::DD;
use crate::linalg::{elliptic_fixed_point, measure_difference, merge_intervals, HPoint, Interval, Mat2};
use crate::quad::Rule;
use crate::{Error, Result};

/// Gaps narrower than this are always reported as collapsed; wider ones up
/// to 1e-6 are tested against a double-double discriminant.
pub const COLLAPSE_WIDTH: f64 = 1e-12;

/// Distance of `|tr|` from 2 treated as a band edge by the density.
pub const EDGE_TOL: f64 = 1e-13;

const MAX_GRID: usize = 1 << 22;

#[inline]
fn site_phase(pq: Rational, theta: f64, k: usize) -> f64 {
    theta + pq.multiple(k as i64)
}

/// Multiply by `2^e` without intermediate overflow of the power.
fn ldexp(x: f64, e: i32) -> f64 {
    let h = e / 2;
    x * 2f64.powi(h) * 2f64.powi(e - h)
}

/// The potential `2λ cos 2π(θ + k p/q)` at the sites `k = 0..q`.
pub fn site_potentials(lambda: f64, pq: Rational, theta: f64) -> Vec<f64> {
    (0..pq.q as usize)
        .map(|k| potential(lambda, site_phase(pq, theta, k)))
        .collect()
}

/// `A_q(θ)` at real energy `E`. Entries overflow for energies far outside
/// the spectrum when `q` is large.
pub fn transfer_matrix(lambda: f64, pq: Rational, theta: f64, e: f64) -> Mat2 {
    transfer_matrix_at(&site_potentials(lambda, pq, theta), e)
}

/// `A_q` for precomputed site potentials, recomputed in double-double when
/// the f64 product is not accurate to `1e-8` relative to its largest entry.
pub fn transfer_matrix_at(sites: &[f64], e: f64) -> Mat2 {
    let mut m = Mat2::identity();
    for &v in sites {
        let t = e - v;
        m = Mat2::new(t * m.a - m.c, t * m.b - m.d, m.a, m.b);
    }
    let scale = m.max_abs().max(1.0).log2();
    if rounding_bound_log2(sites, e) > scale + ACCURACY_LOG2 {
        let dd = transfer_matrix_dd_at(sites, e);
        if [dd.a, dd.b, dd.c, dd.d].iter().all(|x| x.is_finite()) {
            return dd;
        }
    }
    m
}

pub fn discriminant(lambda: f64, pq: Rational, theta: f64, e: f64) -> f64 {
    slope_at(&site_potentials(lambda, pq, theta), e).0
}

/// `(Δ(E), Δ'(E))`.
pub fn disc_and_slope(lambda: f64, pq: Rational, theta: f64, e: f64) -> (f64, f64) {
    slope_at(&site_potentials(lambda, pq, theta), e)
}

/// `log2(1e-8)`: the accuracy asked of f64 products before falling back to
/// double-double.
const ACCURACY_LOG2: f64 = -26.6;

fn max_abs(m: &[f64; 4]) -> f64 {
    m[0].abs().max(m[1].abs()).max(m[2].abs()).max(m[3].abs())
}

/// `log2` of the first-order rounding bound `q u max_k ‖R_k‖ ‖S_k‖ ‖P_{k-1}‖`
/// on the entries of `A_q = S_q ⋯ S_1`, with prefixes `P_k = S_k ⋯ S_1` and
/// suffixes `R_k = S_q ⋯ S_{k+1}`. Cancellation inside the product (a
/// trace near ±2 from entries near `1e16`, say) shows up here even though
/// the computed entries look harmless.
pub fn rounding_bound_log2(sites: &[f64], e: f64) -> f64 {
    const BIG: f64 = 1e100;
    let q = sites.len();
    let mut prefix = Vec::with_capacity(q);
    let mut m = [1.0, 0.0, 0.0, 1.0];
    for &v in sites {
        let n = max_abs(&m);
        if n > BIG {
            return rounding_bound_log2_wide(sites, e);
        }
        prefix.push(n);
        let t = e - v;
        m = [t * m[0] - m[2], t * m[1] - m[3], m[0], m[1]];
    }
    let mut r = [1.0, 0.0, 0.0, 1.0];
    let mut worst = 0.0f64;
    for k in (0..q).rev() {
        let n = max_abs(&r);
        if n > BIG {
            return rounding_bound_log2_wide(sites, e);
        }
        let t = e - sites[k];
        worst = worst.max(n * (t.abs() + 1.0) * prefix[k]);
        // R ← R S_k with S_k = [[t, -1], [1, 0]].
        r = [r[0] * t + r[1], -r[0], r[2] * t + r[3], -r[2]];
    }
    (worst * q as f64 * f64::EPSILON).log2()
}

/// [`rounding_bound_log2`] with power-of-two rescaling, for products whose
/// entries leave the comfortable f64 range.
fn rounding_bound_log2_wide(sites: &[f64], e: f64) -> f64 {
    fn rescale(m: &mut [f64; 4], exp: &mut i32) {
        let big = max_abs(m);
        if big > 1e150 {
            let s = big.log2().floor() as i32;
            let f = 2f64.powi(-s);
            m.iter_mut().for_each(|x| *x *= f);
            *exp += s;
        }
    }
    let log2_norm = |m: &[f64; 4], exp: i32| max_abs(m).log2() + exp as f64;
    let q = sites.len();
    let mut prefix = Vec::with_capacity(q);
    let (mut m, mut exp) = ([1.0, 0.0, 0.0, 1.0], 0i32);
    for &v in sites {
        prefix.push(log2_norm(&m, exp));
        let t = e - v;
        m = [t * m[0] - m[2], t * m[1] - m[3], m[0], m[1]];
        rescale(&mut m, &mut exp);
    }
    let (mut r, mut exp) = ([1.0, 0.0, 0.0, 1.0], 0i32);
    let mut worst = f64::NEG_INFINITY;
    for k in (0..q).rev() {
        let t = e - sites[k];
        worst = worst.max(log2_norm(&r, exp) + (t.abs() + 1.0).log2() + prefix[k]);
        r = [r[0] * t + r[1], -r[0], r[2] * t + r[3], -r[2]];
        rescale(&mut r, &mut exp);
    }
    worst + (q as f64 * f64::EPSILON).log2()
}

/// `(Δ(E), Δ'(E))` by forward-mode differentiation of the product, with
/// power-of-two rescaling so large `q` cannot overflow the intermediates.
/// Falls back to double-double when rounding could exceed `1e-8 max(1, |Δ|)`.
pub fn slope_at(sites: &[f64], e: f64) -> (f64, f64) {
    let mut m = [1.0, 0.0, 0.0, 1.0];
    let mut dm = [0.0; 4];
    let mut exp = 0i32;
    for &v in sites {
        let t = e - v;
        // S = [[t, -1], [1, 0]], dS/dE = [[1, 0], [0, 0]].
        let nm = [t * m[0] - m[2], t * m[1] - m[3], m[0], m[1]];
        let ndm = [t * dm[0] - dm[2] + m[0], t * dm[1] - dm[3] + m[1], dm[0], dm[1]];
        m = nm;
        dm = ndm;
        let big = m.iter().chain(dm.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
        if big > 1e150 {
            let s = big.log2().floor() as i32;
            let f = 2f64.powi(-s);
            for x in m.iter_mut().chain(dm.iter_mut()) {
                *x *= f;
            }
            exp += s;
        }
    }
    let disc = ldexp(m[0] + m[3], exp);
    let tr = (m[0] + m[3]).abs();
    let scale = if tr > 0.0 {
        (tr.log2() + exp as f64).max(0.0)
    } else {
        0.0
    };
    if rounding_bound_log2(sites, e) > scale + ACCURACY_LOG2 {
        let (d, s) = slope_dd_at(sites, e);
        if d.is_finite() && s.is_finite() {
            return (d, s);
        }
    }
    (disc, ldexp(dm[0] + dm[3], exp))
}

/// `(Δ, Δ')` in double-double arithmetic.
pub fn slope_dd_at(sites: &[f64], e: f64) -> (f64, f64) {
    let mut m = [DD::ONE, DD::ZERO, DD::ZERO, DD::ONE];
    let mut dm = [DD::ZERO; 4];
    let e = DD::from_f64(e);
    for &v in sites {
        let t = e - DD::from_f64(v);
        let nm = [t * m[0] - m[2], t * m[1] - m[3], m[0], m[1]];
        dm = [t * dm[0] - dm[2] + m[0], t * dm[1] - dm[3] + m[1], dm[0], dm[1]];
        m = nm;
    }
    ((m[0] + m[3]).to_f64(), (dm[0] + dm[3]).to_f64())
}

/// `A_q` in double-double arithmetic, rounded to f64.
pub fn transfer_matrix_dd_at(sites: &[f64], e: f64) -> Mat2 {
    let (mut a, mut b, mut c, mut d) = (DD::ONE, DD::ZERO, DD::ZERO, DD::ONE);
    let e = DD::from_f64(e);
    for &v in sites {
        let t = e - DD::from_f64(v);
        (a, b, c, d) = (t * a - c, t * b - d, a, b);
    }
    Mat2::new(a.to_f64(), b.to_f64(), c.to_f64(), d.to_f64())
}

/// Discriminant in double-double arithmetic, for cross-checks.
pub fn discriminant_dd(lambda: f64, pq: Rational, theta: f64, e: f64) -> f64 {
    let (mut a, mut b, mut c, mut d) = (DD::ONE, DD::ZERO, DD::ZERO, DD::ONE);
    let two_lambda = DD::from_f64(2.0 * lambda);
    for k in 0..pq.q as usize {
        let x = DD::from_f64(theta) + DD::from_f64(pq.multiple(k as i64));
        let t = DD::from_f64(e) - two_lambda * DD::cos_2pi(x);
        (a, b, c, d) = (t * a - c, t * b - d, a, b);
    }
    (a + d).to_f64()
}

/// Discriminant in double-double arithmetic over given site potentials.
pub fn discriminant_dd_at(sites: &[f64], e: f64) -> f64 {
    let (mut a, mut b, mut c, mut d) = (DD::ONE, DD::ZERO, DD::ZERO, DD::ONE);
    let e = DD::from_f64(e);
    for &v in sites {
        let t = e - DD::from_f64(v);
        (a, b, c, d) = (t * a - c, t * b - d, a, b);
    }
    (a + d).to_f64()
}

/// Whether the numerical gap `[lo, hi]` around the critical point `crit` is
/// rounding noise around a double root of `Δ ∓ 2`.
///
/// An open gap of width `g` has `|Δ(crit)| - 2 ≈ |Δ''| g² / 8`; an artifact
/// has a double-double excess many orders of magnitude below that.
fn gap_is_artifact(sites: &[f64], lo: f64, hi: f64, crit: f64) -> bool {
    let g = hi - lo;
    if g < COLLAPSE_WIDTH {
        return true;
    }
    if g > 1e-6 {
        return false;
    }
    let curv = ((slope_at(sites, crit + g).1 - slope_at(sites, crit - g).1) / (2.0 * g)).abs();
    let predicted = curv * g * g / 8.0;
    let excess = discriminant_dd_at(sites, crit).abs() - 2.0;
    excess < 1e-3 * predicted
}

/// The `q` bands of the operator with frequency `p/q` at phase `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpectrum {
    pub lambda: f64,
    pub p_over_q: Rational,
    pub theta: f64,
    /// Left to right.
    pub bands: Vec<Interval>,
    /// Whether `Δ` increases across each band.
    pub increasing: Vec<bool>,
    /// The `q - 1` critical points of `Δ`, one in each (possibly collapsed) gap.
    pub critical_points: Vec<f64>,
    /// Indices `j` of collapsed gaps between bands `j` and `j + 1` (0-based).
    pub collapsed_gaps: Vec<usize>,
    /// Site potentials `2λ cos 2π(θ + k p/q)`.
    pub sites: Vec<f64>,
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Locate the `q - 1` sign changes of `Δ'` on a uniform grid over the hull,
/// doubling the grid until all are resolved.
fn critical_points(sites: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let q = sites.len();
    let expected = q - 1;
    if expected == 0 {
        return Ok(Vec::new());
    }
    let mut n = 32 * q + 1;
    let mut found = 0;
    let mut suspect = 0.5 * (lo + hi);
    while n <= MAX_GRID {
        let h = (hi - lo) / (n - 1) as f64;
        let slope = |i: usize| slope_at(sites, lo + i as f64 * h).1;
        let slopes: Vec<f64> = if n * q > 200_000 {
            (0..n).into_par_iter().map(slope).collect()
        } else {
            (0..n).map(slope).collect()
        };
        let brackets: Vec<usize> = (0..n - 1)
            .filter(|&i| (slopes[i] > 0.0) != (slopes[i + 1] > 0.0))
            .collect();
        found = brackets.len();
        if found == expected {
            return Ok(brackets
                .into_iter()
                .map(|i| {
                    let a = lo + i as f64 * h;
                    bisect(a, a + h, |e| slope_at(sites, e).1)
                })
                .collect());
        }
        // Report the widest bracket spacing mismatch as the suspect location.
        if let Some(w) = brackets.windows(2).max_by_key(|w| w[1] - w[0]) {
            suspect = lo + (w[0] + w[1]) as f64 * 0.5 * h;
        }
        n = 2 * (n - 1) + 1;
    }
    Err(Error::BandResolution {
        expected,
        found,
        suspect,
    })
}

/// Bands of `H_{λ, p/q, θ}`.
pub fn bands(lambda: f64, pq: Rational, theta: f64) -> Result<BandSpectrum> {
    if lambda == 0.0 || !lambda.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidParameter(
            "bands needs finite nonzero coupling and finite phase".into(),
        ));
    }
    let q = pq.q as usize;
    let hull = 2.0 + 2.0 * lambda.abs();
    // A little slack so the outermost edges are strictly inside.
    let (lo, hi) = (-hull - 1e-3, hull + 1e-3);
    let sites = site_potentials(lambda, pq, theta);
    let crit = critical_points(&sites, lo, hi)?;
    let disc = |e: f64| slope_at(&sites, e).0;

    let mut seg = Vec::with_capacity(q + 1);
    seg.push(lo);
    seg.extend_from_slice(&crit);
    seg.push(hi);
    let vals: Vec<f64> = seg.iter().map(|&e| disc(e)).collect();

    let mut bands = Vec::with_capacity(q);
    let mut increasing = Vec::with_capacity(q);
    for j in 0..q {
        let (a, b) = (seg[j], seg[j + 1]);
        let (va, vb) = (vals[j], vals[j + 1]);
        let inc = vb > va;
        if (va.abs() > 2.0 && vb.abs() > 2.0 && va.signum() == vb.signum()) || va == vb {
            return Err(Error::BandResolution {
                expected: q,
                found: j,
                suspect: 0.5 * (a + b),
            });
        }
        let left = if va.abs() <= 2.0 {
            a
        } else {
            let target = 2.0 * va.signum();
            bisect(a, b, |e| disc(e) - target)
        };
        let right = if vb.abs() <= 2.0 {
            b
        } else {
            let target = 2.0 * vb.signum();
            bisect(a, b, |e| disc(e) - target)
        };
        bands.push(Interval {
            lo: left.min(right),
            hi: right.max(left),
        });
        increasing.push(inc);
    }

    let mut collapsed_gaps = Vec::new();
    for j in 0..q.saturating_sub(1) {
        if gap_is_artifact(&sites, bands[j].hi, bands[j + 1].lo, crit[j]) {
            let m = 0.5 * (bands[j].hi + bands[j + 1].lo);
            bands[j].hi = m;
            bands[j + 1].lo = m;
            collapsed_gaps.push(j);
        }
    }

    Ok(BandSpectrum {
        lambda,
        p_over_q: pq,
        theta,
        bands,
        increasing,
        critical_points: crit,
        collapsed_gaps,
        sites,
    })
}

impl BandSpectrum {
    pub fn q(&self) -> usize {
        self.p_over_q.q as usize
    }

    pub fn discriminant(&self, e: f64) -> f64 {
        slope_at(&self.sites, e).0
    }

    pub fn transfer_matrix(&self, e: f64) -> Mat2 {
        transfer_matrix_at(&self.sites, e)
    }

    /// Index of the band containing `E`, if any.
    pub fn band_of(&self, e: f64) -> Option<usize> {
        let j = self.bands.partition_point(|b| b.hi < e);
        (j < self.bands.len() && self.bands[j].contains(e)).then_some(j)
    }

    /// `ρ(θ, E) ∈ [0, 1/2]` with `Δ = 2 cos 2πρ`, inside a band.
    pub fn rho(&self, e: f64) -> Option<f64> {
        self.band_of(e)?;
        let d = (0.5 * self.discriminant(e)).clamp(-1.0, 1.0);
        Some(d.acos() / (2.0 * PI))
    }

    pub fn measure(&self) -> f64 {
        self.bands.iter().map(Interval::len).sum()
    }

    /// `m(θ, E)`, the fixed point of `A_q(θ)` in the upper half-plane.
    pub fn fixed_point(&self, e: f64) -> Result<HPoint> {
        elliptic_fixed_point(&self.transfer_matrix(e))
    }

    /// The μ-mass of band `j` (0-based), by quadrature of the density.
    pub fn band_mass(&self, j: usize) -> Result<f64> {
        let b = self.bands[j];
        Rule::new(32).integrate_band(b.lo, b.hi, 4, |e| density_periodic(self, e))
    }

    pub fn total_mass(&self) -> Result<f64> {
        (0..self.q()).map(|j| self.band_mass(j)).sum()
    }

    /// Sorted band edges.
    pub fn edges(&self) -> Vec<f64> {
        self.bands.iter().flat_map(|b| [b.lo, b.hi]).collect()
    }
}

/// Integrated density of states of the periodic operator at phase `θ`:
/// inside band `k` (1-based) `q N = k - 1 + (-1)^{q+k-1} 2ρ + (1 - (-1)^{q+k-1}) / 2`,
/// and `k/q` on the gap after band `k`.
pub fn ids_periodic(bs: &BandSpectrum, e: f64) -> f64 {
    let q = bs.q();
    let j = bs.bands.partition_point(|b| b.hi < e);
    if j == q {
        return 1.0;
    }
    let band = bs.bands[j];
    if e < band.lo {
        return j as f64 / q as f64;
    }
    let k = j + 1;
    let decreasing = (q + k - 1).is_multiple_of(2);
    // The computed edges are the roots of Δ = ±2, where ρ is exactly 0 or 1/2.
    let rho = if e == band.lo {
        if decreasing {
            0.0
        } else {
            0.5
        }
    } else if e == band.hi {
        if decreasing {
            0.5
        } else {
            0.0
        }
    } else {
        (0.5 * bs.discriminant(e)).clamp(-1.0, 1.0).acos() / (2.0 * PI)
    };
    let n = if decreasing {
        (k - 1) as f64 + 2.0 * rho
    } else {
        k as f64 - 2.0 * rho
    };
    n / q as f64
}

/// The density `(1/π) φ(m(θ, E))` of the spectral measure inside a band.
///
/// With `A_q(θ) = [[a, b], [c, d]]` elliptic, `φ(m) = |b - c| / sqrt(4 - tr²)`,
/// which avoids forming the fixed point.
pub fn density_periodic(bs: &BandSpectrum, e: f64) -> Result<f64> {
    if bs.band_of(e).is_none() {
        return Err(Error::OutsideBands(e));
    }
    let m = bs.transfer_matrix(e);
    let tr = m.trace();
    if tr.abs() >= 2.0 - EDGE_TOL {
        return Err(Error::EdgeSingularity(e));
    }
    Ok((m.b - m.c).abs() / (PI * ((2.0 - tr) * (2.0 + tr)).sqrt()))
}

fn union_phases(pq: Rational, theta_samples: usize) -> Vec<f64> {
    let q = pq.q as f64;
    let mut phases = vec![0.0, 0.5 / q];
    // Δ depends on θ only modulo 1/q, so the samples cover one period.
    phases.extend((0..theta_samples).map(|j| j as f64 / (theta_samples as f64 * q)));
    phases
}

/// `∪_θ Σ_{λ, p/q, θ}` over a phase grid, merged into maximal intervals.
pub fn spectrum_union(lambda: f64, pq: Rational, theta_samples: usize) -> Result<Vec<Interval>> {
    let phases = union_phases(pq, theta_samples);
    let all: Vec<Vec<Interval>> = phases
        .par_iter()
        .map(|&t| bands(lambda, pq, t).map(|b| b.bands))
        .collect::<Result<_>>()?;
    // Band j moves continuously with θ, so its union over the circle is one
    // interval: the hull of its sampled positions.
    let mut hull = all[0].clone();
    for bs in &all[1..] {
        for (h, b) in hull.iter_mut().zip(bs) {
            h.lo = h.lo.min(b.lo);
            h.hi = h.hi.max(b.hi);
        }
    }
    Ok(merge_intervals(hull))
}

/// Energies in the bands where `1/q² < ρ(θ) < 1/2 - 1/q²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XSet {
    pub lambda: f64,
    pub p_over_q: Rational,
    pub theta: f64,
    pub intervals: Vec<Interval>,
}

impl XSet {
    pub fn contains(&self, e: f64) -> bool {
        self.intervals.iter().any(|i| i.lo < e && e < i.hi)
    }
}

/// The X set of a band spectrum. Empty for `q ≤ 2`, where the defining
/// window for `ρ` is empty.
pub fn x_set(bs: &BandSpectrum) -> XSet {
    let q = bs.q() as f64;
    let r = 1.0 / (q * q);
    let mut intervals = Vec::new();
    if r < 0.25 {
        // ρ ∈ (r, 1/2 - r)  ⇔  |Δ| < 2 cos 2πr.
        let level = 2.0 * (2.0 * PI * r).cos();
        for (b, &inc) in bs.bands.iter().zip(&bs.increasing) {
            let (lo_t, hi_t) = if inc { (-level, level) } else { (level, -level) };
            let f = |e: f64| bs.discriminant(e);
            let x0 = bisect(b.lo, b.hi, |e| f(e) - lo_t);
            let x1 = bisect(b.lo, b.hi, |e| f(e) - hi_t);
            if x0 < x1 {
                intervals.push(Interval { lo: x0, hi: x1 });
            }
        }
    }
    XSet {
        lambda: bs.lambda,
        p_over_q: bs.p_over_q,
        theta: bs.theta,
        intervals,
    }
}

/// μ-mass of the bands outside the X set.
pub fn x_complement_mass(bs: &BandSpectrum, xs: &XSet) -> Result<f64> {
    let rule = Rule::new(32);
    if xs.intervals.is_empty() {
        return bs.total_mass();
    }
    let mut total = 0.0;
    for (j, b) in bs.bands.iter().enumerate() {
        match xs.intervals.iter().find(|x| b.lo <= x.lo && x.hi <= b.hi) {
            Some(x) => {
                total += rule.integrate_edge(b.lo, x.lo, 4, |e| density_periodic(bs, e))?;
                total += rule.integrate_edge(b.hi, x.hi, 4, |e| density_periodic(bs, e))?;
            }
            None => total += bs.band_mass(j)?,
        }
    }
    Ok(total)
}

/// Lebesgue measure of `Σ_{p/q} \ Σ_{p'/q'}`.
///
/// Both unions use the two extremal phases `0` and `1/(2q)` plus `4q` grid
/// phases for the coarse approximant; the fine approximant uses its extremal
/// phases only, which already attain the union.
pub fn spectra_gap_measure(lambda: f64, pq: Rational, fine: Rational) -> Result<f64> {
    if pq == fine {
        return Ok(0.0);
    }
    let coarse = spectrum_union(lambda, pq, 4 * pq.q as usize)?;
    let fine = spectrum_union(lambda, fine, 0)?;
    Ok(measure_difference(&coarse, &fine))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSupReport {
    pub q: u64,
    pub sup_log: f64,
    /// `sup_log / q`.
    pub ratio: f64,
    pub samples: usize,
}

/// `sup ln φ(m(x, E))` over 64 energies per X-set interval and the phases
/// `x = θ + j/(4q)`. Pairs where `A_q(x)` is not elliptic are skipped.
pub fn phi_m_sup_log(bs: &BandSpectrum) -> Result<PhiSupReport> {
    let xs = x_set(bs);
    let q = bs.q();
    let energies: Vec<f64> = xs
        .intervals
        .iter()
        .flat_map(|i| (0..64).map(move |s| i.lo + (s as f64 + 0.5) / 64.0 * i.len()))
        .collect();
    let results: Vec<(f64, usize)> = (0..4 * q)
        .into_par_iter()
        .map(|j| {
            let x = bs.theta + j as f64 / (4 * q) as f64;
            let sites = site_potentials(bs.lambda, bs.p_over_q, x);
            let mut sup = 0.0f64;
            let mut count = 0;
            for &e in &energies {
                let m = transfer_matrix_at(&sites, e);
                if let Ok(z) = elliptic_fixed_point(&m) {
                    sup = sup.max(z.phi().ln());
                    count += 1;
                }
            }
            (sup, count)
        })
        .collect();
    let samples: usize = results.iter().map(|r| r.1).sum();
    if samples == 0 {
        return Err(Error::Resolution("no elliptic samples in the X set".into()));
    }
    let sup_log = results.iter().map(|r| r.0).fold(0.0, f64::max);
    Ok(PhiSupReport {
        q: q as u64,
        sup_log,
        ratio: sup_log / q as f64,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mobius_act, phi};
    use approx::assert_relative_eq;

    fn r(p: u64, q: u64) -> Rational {
        Rational::new(p, q).unwrap()
    }

    #[test]
    fn discriminant_small_cases() {
        let (l, t, e) = (0.7, 0.3, 0.45);
        assert_relative_eq!(
            discriminant(l, r(0, 1), t, e),
            e - 2.0 * l * (2.0 * PI * t).cos(),
            max_relative = 1e-15
        );
        // q = 2, θ = 0: (E + 2λ)(E - 2λ) - 2.
        let want = (e + 2.0 * l) * (e - 2.0 * l) - 2.0;
        assert_relative_eq!(discriminant(l, r(1, 2), 0.0, e), want, max_relative = 1e-14);
    }

    #[test]
    fn discriminant_is_degree_q() {
        // The (q+1)-th finite difference of a degree-q polynomial vanishes.
        let pq = r(2, 5);
        let h = 0.3;
        let vals: Vec<f64> = (0..7)
            .map(|i| discriminant(0.5, pq, 0.1, -1.0 + i as f64 * h))
            .collect();
        let mut diff = vals.clone();
        for _ in 0..6 {
            diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        }
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 64.0;
        assert!(diff[0].abs() < 1e-6 * scale, "{}", diff[0]);
        // Leading coefficient 1: the q-th difference is q! h^q.
        let mut d5 = vals[..6].to_vec();
        for _ in 0..5 {
            d5 = d5.windows(2).map(|w| w[1] - w[0]).collect();
        }
        assert_relative_eq!(d5[0], 120.0 * h.powi(5), max_relative = 1e-8);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let pq = r(5, 13);
        for &e in &[-2.1, -0.3, 0.77, 1.9] {
            let (_, s) = disc_and_slope(0.5, pq, 0.2, e);
            let h = 1e-6;
            let fd = (discriminant(0.5, pq, 0.2, e + h) - discriminant(0.5, pq, 0.2, e - h)) / (2.0 * h);
            assert!((s - fd).abs() < 1e-5 * (1.0 + s.abs()), "{s} vs {fd}");
        }
    }

    #[test]
    fn double_double_agrees() {
        let pq = r(21, 34);
        for &e in &[-2.5, -1.0, 0.1, 2.2] {
            let a = discriminant(0.5, pq, 0.17, e);
            let b = discriminant_dd(0.5, pq, 0.17, e);
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn large_q_does_not_overflow() {
        let (d, s) = disc_and_slope(0.5, r(610, 987), 0.0, 4.0);
        assert!(d.is_infinite() || d > 2.0);
        assert!(s.is_finite() || s.is_infinite());
        assert!(!d.is_nan() && !s.is_nan());
    }

    #[test]
    fn single_band() {
        let (l, t) = (0.5, 0.1);
        let bs = bands(l, r(0, 1), t).unwrap();
        let v = 2.0 * l * (2.0 * PI * t).cos();
        assert_eq!(bs.bands.len(), 1);
        assert!((bs.bands[0].lo - (v - 2.0)).abs() < 1e-12);
        assert!((bs.bands[0].hi - (v + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn two_bands_by_hand() {
        // λ = 1/2, θ = 0: Δ = E² - 3, bands where E² ∈ [1, 5].
        let bs = bands(0.5, r(1, 2), 0.0).unwrap();
        let s5 = 5f64.sqrt();
        let want = [(-s5, -1.0), (1.0, s5)];
        for (b, w) in bs.bands.iter().zip(want) {
            assert!((b.lo - w.0).abs() < 1e-12 && (b.hi - w.1).abs() < 1e-12, "{b:?}");
        }
        assert_eq!(bs.increasing, vec![false, true]);
    }

    #[test]
    fn orientation_parity() {
        let bs = bands(0.5, r(5, 13), 0.2).unwrap();
        assert_eq!(bs.bands.len(), 13);
        for (k, &inc) in bs.increasing.iter().enumerate() {
            assert_eq!(inc, (13 - (k + 1)) % 2 == 0);
        }
    }

    #[test]
    fn ids_limits_and_jumps() {
        let bs = bands(0.5, r(3, 8), 0.05).unwrap();
        assert_eq!(ids_periodic(&bs, -10.0), 0.0);
        assert_eq!(ids_periodic(&bs, 10.0), 1.0);
        for (j, b) in bs.bands.iter().enumerate() {
            assert!((ids_periodic(&bs, b.lo) - j as f64 / 8.0).abs() < 1e-9);
            assert!((ids_periodic(&bs, b.hi) - (j + 1) as f64 / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn q1_density_is_twice_ids_slope() {
        let (l, t) = (0.5, 0.3);
        let bs = bands(l, r(0, 1), t).unwrap();
        let v = 2.0 * l * (2.0 * PI * t).cos();
        for &e in &[-1.2, -0.1, 0.5, 1.4] {
            let x = e - v;
            // N = 1 - 2ρ with ρ = arccos(x/2)/2π, so dN/dE = 1 / (π sqrt(4 - x²)).
            let dn = 1.0 / (PI * (4.0 - x * x).sqrt());
            let d = density_periodic(&bs, e).unwrap();
            assert_relative_eq!(d, 2.0 * dn, max_relative = 1e-8);
        }
    }

    #[test]
    fn density_matches_fixed_point_form() {
        let bs = bands(0.5, r(2, 5), 0.11).unwrap();
        for b in &bs.bands {
            for s in 1..10 {
                let e = b.lo + b.len() * s as f64 / 10.0;
                let z = bs.fixed_point(e).unwrap();
                let w = mobius_act(&bs.transfer_matrix(e), z).unwrap();
                assert!((w.re - z.re).abs() + (w.im - z.im).abs() < 1e-10);
                let d = density_periodic(&bs, e).unwrap();
                assert_relative_eq!(d, phi(z) / PI, max_relative = 1e-9);
                assert!(d >= 1.0 / PI - 1e-9);
            }
        }
    }

    #[test]
    fn density_errors() {
        let bs = bands(0.5, r(1, 2), 0.0).unwrap();
        assert!(matches!(density_periodic(&bs, 0.0), Err(Error::OutsideBands(_))));
        assert!(matches!(density_periodic(&bs, 1.0), Err(Error::EdgeSingularity(_))));
    }

    #[test]
    fn total_mass_is_two() {
        let bs = bands(0.5, r(2, 5), 0.11).unwrap();
        assert!((bs.total_mass().unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn union_for_q1() {
        let u = spectrum_union(0.5, r(0, 1), 8).unwrap();
        assert_eq!(u.len(), 1);
        assert!((u[0].lo + 3.0).abs() < 1e-12 && (u[0].hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn x_set_is_inside_bands_and_empty_for_small_q() {
        assert!(x_set(&bands(0.5, r(0, 1), 0.0).unwrap()).intervals.is_empty());
        assert!(x_set(&bands(0.5, r(1, 2), 0.0).unwrap()).intervals.is_empty());
        let bs = bands(0.5, r(5, 13), 0.2).unwrap();
        let xs = x_set(&bs);
        assert_eq!(xs.intervals.len(), 13);
        for (x, b) in xs.intervals.iter().zip(&bs.bands) {
            assert!(b.lo < x.lo && x.hi < b.hi);
            let q2 = 1.0 / 169.0;
            let rho = bs.rho(x.mid()).unwrap();
            assert!(rho > q2 && rho < 0.5 - q2);
        }
    }

    #[test]
    fn phi_sup_at_q1_matches_hand_value() {
        // θ = 0, E = 0, λ = 1/2: A = [[-1, -1], [1, 0]], fixed point (-1 + i√3)/2.
        let m = transfer_matrix(0.5, r(0, 1), 0.0, 0.0);
        let z = elliptic_fixed_point(&m).unwrap();
        assert_relative_eq!(z.re, -0.5, max_relative = 1e-14);
        assert_relative_eq!(z.im, 3f64.sqrt() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(phi(z), 2.0 / 3f64.sqrt(), max_relative = 1e-14);
    }
}

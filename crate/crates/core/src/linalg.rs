//! Unimodular 2×2 matrices and their action on the upper half-plane.
//!
//! Everything the cocycle and periodic modules need is here: products with
//! determinant renormalisation, exact 2×2 singular values, the Möbius action,
//! `φ(z) = (1 + |z|²) / (2 Im z)` and the hyperbolic metric normalised so
//! that `dist(a·i, i) = |ln a|`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Drift of `det` beyond which products are renormalised.
pub const DET_DRIFT: f64 = 1e-12;

/// Denominator magnitude treated as a pole of the Möbius action.
pub const POLE_EPS: f64 = 1e-300;

/// Scalars a [`Mat2`] can hold: `f64` for real cocycles, `Complex64` for
/// complex energies.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_complex(self) -> Complex64;
    fn norm_sqr(self) -> f64;
    fn conj(self) -> Self;
    fn sqrt(self) -> Self;

    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn conj(self) -> Self {
        self
    }
    // Real matrices are renormalised with sqrt(|det|); a negative det never
    // arises from products of unimodular factors.
    fn sqrt(self) -> Self {
        self.abs().sqrt()
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn to_complex(self) -> Complex64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
}

/// A 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

pub type CMat2 = Mat2<Complex64>;

impl<T: Scalar> Mat2<T> {
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn identity() -> Self {
        Mat2::new(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn det(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> T {
        self.a + self.d
    }

    /// Inverse via the adjugate.
    pub fn inverse(&self) -> Self {
        let det = self.det();
        Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    /// Inverse assuming `det = 1`.
    pub fn inverse_unimodular(&self) -> Self {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn scale(&self, s: f64) -> Self {
        let s = T::from_f64(s);
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Squared Hilbert–Schmidt norm `|a|² + |b|² + |c|² + |d|²`.
    pub fn hs_norm_sq(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()
    }

    /// Singular values `(σ₁, σ₂)` with `σ₁ ≥ σ₂`.
    ///
    /// After multiplying by a unit scalar that makes the determinant real and
    /// positive, `σ₁ ± σ₂ = sqrt(|a ± conj d|² + |b ∓ conj c|²)`, which has no
    /// cancellation for the real matrices that dominate use.
    pub fn singular_values(&self) -> (f64, f64) {
        let det = self.det();
        let m = if det.abs() > 0.0 {
            let s = det.sqrt();
            let u = T::from_f64(s.abs()) / s;
            Mat2::new(self.a * u, self.b * u, self.c * u, self.d * u)
        } else {
            *self
        };
        let sum = ((m.a + m.d.conj()).norm_sqr() + (m.b - m.c.conj()).norm_sqr()).sqrt();
        let diff = ((m.a - m.d.conj()).norm_sqr() + (m.b + m.c.conj()).norm_sqr()).sqrt();
        (0.5 * (sum + diff), 0.5 * (sum - diff).abs())
    }

    /// Operator 2-norm.
    pub fn op_norm(&self) -> f64 {
        self.singular_values().0
    }

    /// Divide by `sqrt(det)` when the determinant has drifted more than
    /// [`DET_DRIFT`] away from one.
    pub fn renormalized(&self) -> Self {
        let det = self.det();
        if (det - T::one()).abs() > DET_DRIFT {
            let s = det.sqrt();
            Mat2::new(self.a / s, self.b / s, self.c / s, self.d / s)
        } else {
            *self
        }
    }

    /// Möbius action on the extended plane, `(a z + b) / (c z + d)`.
    pub fn act_complex(&self, z: Complex64) -> Result<Complex64> {
        let num = self.a.to_complex() * z + self.b.to_complex();
        let den = self.c.to_complex() * z + self.d.to_complex();
        if den.norm() < POLE_EPS {
            return Err(Error::BoundaryBlowup);
        }
        Ok(num / den)
    }

    pub fn to_complex(&self) -> CMat2 {
        Mat2::new(
            self.a.to_complex(),
            self.b.to_complex(),
            self.c.to_complex(),
            self.d.to_complex(),
        )
    }

    /// Largest entrywise difference to `other`.
    pub fn max_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Mat2<T>;

    fn mul(self, o: Mat2<T>) -> Mat2<T> {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Mat2<T>;

    fn sub(self, o: Mat2<T>) -> Mat2<T> {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Mat2<T>;

    fn add(self, o: Mat2<T>) -> Mat2<T> {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Mat2<f64> {
    pub fn diag(x: f64, y: f64) -> Self {
        Mat2::new(x, 0.0, 0.0, y)
    }

    /// The unimodular upper-triangular matrix `[[√y, x/√y], [0, 1/√y]]`
    /// sending `i` to `m = x + iy`.
    pub fn sending_i_to(m: HPoint) -> Self {
        let s = m.im.sqrt();
        Mat2::new(s, m.re / s, 0.0, 1.0 / s)
    }

    /// Product of `factors` applied right to left (`factors[0]` acts first),
    /// renormalising the determinant along the way.
    pub fn chain(factors: &[Mat2<f64>]) -> Self {
        let mut acc = Mat2::identity();
        for (k, f) in factors.iter().enumerate() {
            acc = *f * acc;
            if k % 32 == 31 {
                acc = acc.renormalized();
            }
        }
        acc.renormalized()
    }
}

/// A point of the upper half-plane `{Im z > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub re: f64,
    pub im: f64,
}

impl HPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if im > 0.0 && im.is_finite() && re.is_finite() {
            Ok(HPoint { re, im })
        } else {
            Err(Error::NotInUpperHalfPlane(im))
        }
    }

    pub const I: HPoint = HPoint { re: 0.0, im: 1.0 };

    pub fn from_complex(z: Complex64) -> Result<Self> {
        HPoint::new(z.re, z.im)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn phi(self) -> f64 {
        phi(self)
    }

    /// `-conj(z)`, the reflection across the imaginary axis.
    pub fn reflect(self) -> HPoint {
        HPoint {
            re: -self.re,
            im: self.im,
        }
    }
}

/// A closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::InvalidParameter(format!(
                "interval bounds out of order: [{lo}, {hi}]"
            )))
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn scaled(&self, s: f64) -> Interval {
        if s >= 0.0 {
            Interval {
                lo: s * self.lo,
                hi: s * self.hi,
            }
        } else {
            Interval {
                lo: s * self.hi,
                hi: s * self.lo,
            }
        }
    }
}

/// Merge overlapping (or touching) intervals into sorted maximal intervals.
pub fn merge_intervals(mut v: Vec<Interval>) -> Vec<Interval> {
    v.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

pub fn total_length(v: &[Interval]) -> f64 {
    v.iter().map(Interval::len).sum()
}

/// Lebesgue measure of `a \ b` for sorted, disjoint interval lists.
pub fn measure_difference(a: &[Interval], b: &[Interval]) -> f64 {
    let mut overlap = 0.0;
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j].hi <= x.lo {
            j += 1;
        }
        let mut k = j;
        while k < b.len() && b[k].lo < x.hi {
            let lo = x.lo.max(b[k].lo);
            let hi = x.hi.min(b[k].hi);
            if hi > lo {
                overlap += hi - lo;
            }
            k += 1;
        }
    }
    (total_length(a) - overlap).max(0.0)
}

/// Möbius action of a real matrix on the upper half-plane.
pub fn mobius_act(m: &Mat2<f64>, z: HPoint) -> Result<HPoint> {
    let w = m.act_complex(z.to_complex())?;
    HPoint::new(w.re, w.im).map_err(|_| Error::BoundaryBlowup)
}

/// `φ(z) = (1 + |z|²) / (2 Im z)`; `φ ≥ 1` with equality only at `i`.
pub fn phi(z: HPoint) -> f64 {
    (1.0 + z.re * z.re + z.im * z.im) / (2.0 * z.im)
}

pub fn hs_norm_sq(m: &Mat2<f64>) -> f64 {
    m.hs_norm_sq()
}

/// Hyperbolic distance with `dist(a·i, i) = |ln a|`.
///
/// Evaluated as `2 asinh(|z - w| / (2 sqrt(Im z Im w)))`, which equals
/// `acosh(1 + |z - w|² / (2 Im z Im w))` but keeps full precision near the
/// diagonal.
pub fn hyp_dist(z: HPoint, w: HPoint) -> f64 {
    let dr = z.re - w.re;
    let di = z.im - w.im;
    let chord = (dr * dr + di * di).sqrt();
    2.0 * (chord / (2.0 * (z.im * w.im).sqrt())).asinh()
}

/// Rotation by the angle `2πθ`.
pub fn rotation(theta: f64) -> Mat2<f64> {
    let (s, c) = (2.0 * std::f64::consts::PI * theta).sin_cos();
    Mat2::new(c, -s, s, c)
}

/// The fixed point in `H` of an elliptic real matrix: the root of
/// `c z² + (d - a) z - b = 0` with positive imaginary part.
pub fn elliptic_fixed_point(m: &Mat2<f64>) -> Result<HPoint> {
    let tr = m.trace();
    if tr.abs() >= 2.0 || m.c == 0.0 {
        return Err(Error::NotElliptic(tr.abs()));
    }
    // (a - d)² + 4bc = tr² - 4 det; with det normalised out this is tr² - 4.
    let det = m.det();
    let disc = 4.0 * det - tr * tr;
    if disc <= 0.0 {
        return Err(Error::NotElliptic(tr.abs()));
    }
    let re = (m.a - m.d) / (2.0 * m.c);
    let im = disc.sqrt() / (2.0 * m.c.abs());
    HPoint::new(re, im).map_err(|_| Error::NotElliptic(tr.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unimodular(a: f64, b: f64, c: f64, d: f64) -> Option<Mat2> {
        let m = Mat2::new(a, b, c, d);
        let det = m.det();
        if det.abs() < 0.05 {
            return None;
        }
        let m = if det < 0.0 { Mat2::new(-a, b, -c, d) } else { m };
        Some(m.scale(1.0 / m.det().sqrt()))
    }

    fn hpoint() -> impl Strategy<Value = HPoint> {
        (-5.0..5.0f64, 0.05..5.0f64).prop_map(|(x, y)| HPoint::new(x, y).unwrap())
    }

    #[test]
    fn mobius_examples() {
        let z = mobius_act(&Mat2::identity(), HPoint::I).unwrap();
        assert_eq!(z, HPoint::I);
        let z = mobius_act(&rotation(0.25), HPoint::I).unwrap();
        assert_relative_eq!(z.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(z.im, 1.0, epsilon = 1e-15);
        let z = mobius_act(&Mat2::diag(2.0, 0.5), HPoint::I).unwrap();
        assert_eq!(z, HPoint::new(0.0, 4.0).unwrap());
    }

    #[test]
    fn pole_is_reported() {
        let m = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(m.act_complex(z), Err(Error::BoundaryBlowup));
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(HPoint::new(0.0, 0.0).is_err());
        assert!(HPoint::new(1.0, -1.0).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(HPoint::I), 1.0);
        assert_eq!(phi(HPoint::new(0.0, 2.0).unwrap()), 1.25);
        assert_eq!(phi(HPoint::new(1.0, 1.0).unwrap()), 1.5);
    }

    #[test]
    fn hs_examples() {
        assert_eq!(hs_norm_sq(&Mat2::identity()), 2.0);
        assert_eq!(2.0 * phi(HPoint::I), 2.0);
        let d = Mat2::diag(2.0, 0.5);
        assert_eq!(hs_norm_sq(&d), 17.0 / 4.0);
        let w = mobius_act(&d, HPoint::I).unwrap();
        assert_relative_eq!(2.0 * phi(w), 17.0 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn hyp_dist_examples() {
        assert_eq!(hyp_dist(HPoint::I, HPoint::I), 0.0);
        let three_i = HPoint::new(0.0, 3.0).unwrap();
        assert_relative_eq!(hyp_dist(three_i, HPoint::I), 3f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), Mat2::identity());
        let r = rotation(0.25);
        assert!(r.max_diff(&Mat2::new(0.0, -1.0, 1.0, 0.0)) < 1e-15);
        let r3 = rotation(1.0 / 3.0);
        assert!((r3 * r3 * r3).max_diff(&Mat2::identity()) < 1e-12);
    }

    #[test]
    fn fixed_point_examples() {
        let z = elliptic_fixed_point(&rotation(0.1)).unwrap();
        assert_relative_eq!(z.re, 0.0, epsilon = 1e-14);
        assert_relative_eq!(z.im, 1.0, max_relative = 1e-14);
        let z = elliptic_fixed_point(&Mat2::new(1.0, -1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(z.re, 0.5, max_relative = 1e-15);
        assert_relative_eq!(z.im, 3f64.sqrt() / 2.0, max_relative = 1e-15);
        assert!(matches!(
            elliptic_fixed_point(&Mat2::diag(2.0, 0.5)),
            Err(Error::NotElliptic(_))
        ));
        assert!(elliptic_fixed_point(&Mat2::identity()).is_err());
    }

    #[test]
    fn singular_values_of_complex_matrix() {
        let m = Mat2::new(
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.3),
            Complex64::new(0.2, -1.0),
            Complex64::new(3.0, 0.1),
        );
        let (s1, s2) = m.singular_values();
        assert_relative_eq!(s1 * s1 + s2 * s2, m.hs_norm_sq(), max_relative = 1e-13);
        assert_relative_eq!(s1 * s2, m.det().norm(), max_relative = 1e-13);
    }

    #[test]
    fn interval_difference() {
        let a = vec![Interval::new(0.0, 2.0).unwrap(), Interval::new(3.0, 4.0).unwrap()];
        let b = vec![Interval::new(1.0, 3.5).unwrap()];
        assert_relative_eq!(measure_difference(&a, &b), 1.5);
        assert_eq!(measure_difference(&a, &a), 0.0);
        let m = merge_intervals(vec![
            Interval::new(2.0, 3.0).unwrap(),
            Interval::new(0.0, 1.0).unwrap(),
            Interval::new(0.5, 2.0).unwrap(),
        ]);
        assert_eq!(m, vec![Interval::new(0.0, 3.0).unwrap()]);
    }

    proptest! {
        #[test]
        fn hs_equals_twice_phi(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64) {
            if let Some(m) = unimodular(a, b, c, d) {
                let lhs = hs_norm_sq(&m);
                let rhs = 2.0 * phi(mobius_act(&m, HPoint::I).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs);
            }
        }

        #[test]
        fn rotations_preserve_phi_and_hs(t in -2.0..2.0f64, z in hpoint(), a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64) {
            let r = rotation(t);
            let p = phi(mobius_act(&r, z).unwrap());
            prop_assert!((p - phi(z)).abs() <= 1e-10 * phi(z));
            if let Some(m) = unimodular(a, b, c, d) {
                let h = hs_norm_sq(&m);
                prop_assert!((hs_norm_sq(&(r * m)) - h).abs() <= 1e-10 * h);
                prop_assert!((hs_norm_sq(&(m * r)) - h).abs() <= 1e-10 * h);
            }
        }

        #[test]
        fn ln_phi_is_lipschitz(z in hpoint(), w in hpoint()) {
            let lhs = (phi(z).ln() - phi(w).ln()).abs();
            prop_assert!(lhs <= hyp_dist(z, w) + 1e-9);
        }

        #[test]
        fn hyp_dist_is_a_metric(z in hpoint(), w in hpoint(), u in hpoint()) {
            let d = hyp_dist(z, w);
            prop_assert!(d >= 0.0);
            prop_assert!((d - hyp_dist(w, z)).abs() <= 1e-12 * (1.0 + d));
            prop_assert!(hyp_dist(z, u) <= hyp_dist(z, w) + hyp_dist(w, u) + 1e-9);
        }

        #[test]
        fn fixed_point_is_fixed_and_conjugation_covariant(
            t in 0.01..0.49f64, s in 0.2..5.0f64,
            a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64,
        ) {
            // A random elliptic matrix: a conjugated rotation.
            let g = Mat2::sending_i_to(HPoint::new(t - 0.2, s).unwrap());
            let m = g * rotation(t) * g.inverse_unimodular();
            let z = elliptic_fixed_point(&m).unwrap();
            let w = mobius_act(&m, z).unwrap();
            prop_assert!(hyp_dist(z, w) < 1e-9);
            prop_assert!((w.re - z.re).abs() < 1e-12 * (1.0 + z.re.abs()) && (w.im - z.im).abs() < 1e-12 * (1.0 + z.im));
            if let Some(bm) = unimodular(a, b, c, d) {
                let conj = bm * m * bm.inverse_unimodular();
                let lhs = elliptic_fixed_point(&conj).unwrap();
                let rhs = mobius_act(&bm, z).unwrap();
                prop_assert!(hyp_dist(lhs, rhs) <= 1e-9);
            }
        }
    }
}

//! Schrödinger cocycles `S_{λ,E}(x) = [[E - 2λ cos 2πx, -1], [1, 0]]` over
//! the rotation `x ↦ x + α`: transfer matrices, Lyapunov exponents, fibered
//! rotation numbers and boundedness/hyperbolicity probes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::Frequency;
use crate::linalg::{Mat2, Scalar};
use crate::{Error, Result};

/// Steps between overflow checks and determinant renormalisation.
pub const RESCALE_PERIOD: usize = 32;

/// Offset of the equidistributed phase grid `x_j = j / grid + offset`.
pub const GRID_OFFSET: f64 = 0.123;

/// `2λ cos(2πx)`.
#[inline]
pub fn potential(lambda: f64, x: f64) -> f64 {
    2.0 * lambda * (2.0 * PI * x).cos()
}

pub fn phase_grid(grid: usize) -> impl Iterator<Item = f64> {
    (0..grid).map(move |j| j as f64 / grid as f64 + GRID_OFFSET)
}

/// A matrix together with a logarithmic scale: the represented value is
/// `mat · e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledMat<T = f64> {
    pub mat: Mat2<T>,
    pub log_scale: f64,
}

impl<T: Scalar> ScaledMat<T> {
    pub fn identity() -> Self {
        ScaledMat {
            mat: Mat2::identity(),
            log_scale: 0.0,
        }
    }

    pub fn log_op_norm(&self) -> f64 {
        self.mat.op_norm().ln() + self.log_scale
    }

    pub fn log_hs_norm(&self) -> f64 {
        0.5 * self.mat.hs_norm_sq().ln() + self.log_scale
    }

    /// The unscaled matrix; entries overflow to infinity for large scales.
    pub fn to_mat(&self) -> Mat2<T> {
        if self.log_scale == 0.0 {
            self.mat
        } else {
            self.mat.scale(self.log_scale.exp())
        }
    }

    /// Move the entry magnitude into the log scale once it gets large.
    fn rescale(&mut self) {
        let m = self.mat.max_abs();
        if m > 1e16 && m.is_finite() {
            self.mat = self.mat.scale(1.0 / m);
            self.log_scale += m.ln();
        }
    }

    /// Restore `det = 1`. The determinant of a matrix with large entries is
    /// dominated by cancellation error, so this only acts on small products
    /// that have not been rescaled.
    fn renormalize_det(&mut self) {
        if self.log_scale == 0.0 && self.mat.max_abs() <= 1e3 {
            self.mat = self.mat.renormalized();
        }
    }

    pub fn left_mul(&mut self, m: &Mat2<T>) {
        self.mat = *m * self.mat;
    }
}

/// `step(n-1) ⋯ step(1) step(0)` in log-scaled form.
pub fn product<T: Scalar>(n: usize, mut step: impl FnMut(usize) -> Mat2<T>) -> ScaledMat<T> {
    let mut acc = ScaledMat::identity();
    for k in 0..n {
        acc.left_mul(&step(k));
        if k % RESCALE_PERIOD == RESCALE_PERIOD - 1 {
            acc.rescale();
            acc.renormalize_det();
        }
    }
    acc.rescale();
    acc.renormalize_det();
    acc
}

/// `(1/grid) Σ_j ln‖A_n(x_j)‖ / n` for the cocycle `x ↦ step(x)` over `alpha`,
/// using the operator 2-norm.
pub fn lyapunov_of<T, F>(alpha: &Frequency, n: usize, grid: usize, step: F) -> f64
where
    T: Scalar,
    F: Fn(f64) -> Mat2<T> + Sync,
{
    let phases: Vec<f64> = phase_grid(grid).collect();
    let logs: Vec<f64> = phases
        .par_iter()
        .map(|&x| {
            let a = product(n, |k| step(alpha.phase(x, k as i64)));
            a.log_op_norm() / n as f64
        })
        .collect();
    logs.iter().sum::<f64>() / grid as f64
}

/// The Schrödinger cocycle of the almost Mathieu operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerCocycle {
    pub lambda: f64,
    pub alpha: Frequency,
    pub energy: Complex64,
}

/// Finite-horizon orbit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitStats {
    pub n: usize,
    pub phases: usize,
    /// Nats per step.
    pub lyap: f64,
    /// `sup_{s ≤ n, x} ‖A_s(x)‖_HS`; infinite when it overflows.
    pub sup_norm: f64,
    pub log_sup_norm: f64,
    /// `(s, ln sup_{s' ≤ s} ‖A_{s'}‖)` at dyadic `s`.
    pub growth: Vec<(usize, f64)>,
    /// Least-squares slope of `ln sup‖A_s‖` against `ln s`.
    pub poly_exponent: f64,
    /// Least-squares slope of `ln sup‖A_s‖` against `s`.
    pub exp_rate: f64,
    /// Present for real energies.
    pub rotation: Option<f64>,
}

impl SchrodingerCocycle {
    pub fn new(lambda: f64, alpha: Frequency, energy: Complex64) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidParameter("coupling must be nonzero".into()));
        }
        if energy.im < 0.0 || !energy.re.is_finite() || !energy.im.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "energy must satisfy Im E >= 0, got {energy}"
            )));
        }
        Ok(SchrodingerCocycle { lambda, alpha, energy })
    }

    pub fn real(lambda: f64, alpha: Frequency, energy: f64) -> Result<Self> {
        SchrodingerCocycle::new(lambda, alpha, Complex64::new(energy, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.energy.im == 0.0
    }

    pub fn with_energy(&self, energy: Complex64) -> Self {
        SchrodingerCocycle { energy, ..*self }
    }

    pub fn step_matrix(&self, x: f64) -> Mat2<Complex64> {
        let t = self.energy - potential(self.lambda, x);
        Mat2::new(
            t,
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        )
    }

    /// The step matrix at `Re E`.
    pub fn step_real(&self, x: f64) -> Mat2 {
        Mat2::new(self.energy.re - potential(self.lambda, x), -1.0, 1.0, 0.0)
    }

    pub fn iterate(&self, x: f64, n: usize) -> ScaledMat<Complex64> {
        product(n, |k| self.step_matrix(self.alpha.phase(x, k as i64)))
    }

    pub fn iterate_real(&self, x: f64, n: usize) -> ScaledMat<f64> {
        product(n, |k| self.step_real(self.alpha.phase(x, k as i64)))
    }

    /// Lyapunov exponent estimate; handles complex energies.
    pub fn lyapunov(&self, n: usize, grid: usize) -> f64 {
        if self.is_real() {
            lyapunov_of(&self.alpha, n, grid, |x| self.step_real(x))
        } else {
            lyapunov_of(&self.alpha, n, grid, |x| self.step_matrix(x))
        }
    }

    /// Fibered rotation number in `[0, 1/2]` from the Prüfer angle of the
    /// orbit of `(1, 0)` started at phase `x0`.
    ///
    /// The projective action of `S` has the continuous lift
    /// `ω ↦ kπ + (arg(S v) mod π)` on `(kπ - π/2, kπ + π/2)`, so the angle
    /// increment per step lies in `[0, π]`.
    pub fn rotation_number(&self, n: usize, x0: f64) -> f64 {
        let mut v = (1.0f64, 0.0f64);
        let mut omega = 0.0f64;
        for k in 0..n {
            let t = self.energy.re - potential(self.lambda, self.alpha.phase(x0, k as i64));
            let w = (t * v.0 - v.1, v.0);
            let branch = ((omega + PI / 2.0) / PI).floor();
            omega = branch * PI + w.1.atan2(w.0).rem_euclid(PI);
            let r = w.0.hypot(w.1);
            v = (w.0 / r, w.1 / r);
        }
        (omega / (2.0 * PI * n as f64)).clamp(0.0, 0.5)
    }

    /// Finite-horizon growth of `‖A_s(x)‖` over `s ≤ n_max` and the phase grid.
    pub fn boundedness_probe(&self, n_max: usize, grid: usize) -> OrbitStats {
        let phases: Vec<f64> = phase_grid(grid.max(1)).collect();
        let mut marks: Vec<usize> = std::iter::successors(Some(1usize), |s| Some(s * 2))
            .take_while(|&s| s <= n_max)
            .collect();
        if n_max > 0 && marks.last() != Some(&n_max) {
            marks.push(n_max);
        }
        let per_phase: Vec<(Vec<f64>, f64)> = phases
            .par_iter()
            .map(|&x| {
                let mut acc = ScaledMat::<Complex64>::identity();
                let mut running = acc.log_hs_norm();
                let mut sups = Vec::with_capacity(marks.len());
                for s in 1..=n_max {
                    acc.left_mul(&self.step_matrix(self.alpha.phase(x, s as i64 - 1)));
                    if s % RESCALE_PERIOD == 0 {
                        acc.rescale();
                        acc.renormalize_det();
                    }
                    running = running.max(acc.log_hs_norm());
                    if marks.get(sups.len()) == Some(&s) {
                        sups.push(running);
                    }
                }
                (sups, acc.log_op_norm())
            })
            .collect();
        let growth: Vec<(usize, f64)> = marks
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let sup = per_phase.iter().map(|(m, _)| m[i]).fold(f64::MIN, f64::max);
                (s, sup)
            })
            .collect();
        let log_sup = growth.iter().map(|g| g.1).fold(0.5 * 2f64.ln(), f64::max);
        let lyap = if n_max == 0 {
            0.0
        } else {
            per_phase.iter().map(|(_, l)| l).sum::<f64>() / (phases.len() * n_max) as f64
        };
        let fit = |xs: Vec<f64>, ys: Vec<f64>| -> f64 {
            if xs.len() < 2 {
                return 0.0;
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            sxy / sxx
        };
        let poly_exponent = fit(
            growth.iter().map(|g| (g.0 as f64).ln()).collect(),
            growth.iter().map(|g| g.1).collect(),
        );
        let exp_rate = fit(
            growth.iter().map(|g| g.0 as f64).collect(),
            growth.iter().map(|g| g.1).collect(),
        );
        OrbitStats {
            n: n_max,
            phases: phases.len(),
            lyap,
            sup_norm: log_sup.exp(),
            log_sup_norm: log_sup,
            growth,
            poly_exponent,
            exp_rate,
            rotation: if self.is_real() && n_max > 0 {
                Some(self.rotation_number(n_max, phases[0]))
            } else {
                None
            },
        }
    }

    /// Sufficient-condition probe for uniform hyperbolicity: at every grid
    /// phase `σ₁/σ₂ ≥ e^{n·tol}`, and the most contracted direction of
    /// `A_n` varies by less than `π/4` between neighbouring phases.
    pub fn uniform_hyperbolicity_test(&self, n: usize, grid: usize, tol: f64) -> bool {
        let phases: Vec<f64> = phase_grid(grid.max(1)).collect();
        let data: Vec<(f64, f64)> = phases
            .par_iter()
            .map(|&x| {
                let a = self.iterate_real(x, n);
                // σ₁σ₂ = det = 1, so ln(σ₁/σ₂) = 2 ln σ₁.
                (2.0 * a.log_op_norm(), contracted_direction(&a.mat))
            })
            .collect();
        if data.iter().any(|&(gap, _)| !(gap >= n as f64 * tol)) {
            return false;
        }
        let m = data.len();
        (0..m).all(|j| {
            let d = (data[(j + 1) % m].1 - data[j].1).rem_euclid(PI);
            d.min(PI - d) < PI / 4.0
        })
    }
}

/// Angle (mod π) of the right singular vector for the smallest singular value.
fn contracted_direction(m: &Mat2) -> f64 {
    let p = m.a * m.a + m.c * m.c;
    let r = m.b * m.b + m.d * m.d;
    let s = m.a * m.b + m.c * m.d;
    0.5 * (2.0 * s).atan2(p - r) + PI / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{golden_mean, Rational};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn golden() -> Frequency {
        Frequency::Real(golden_mean())
    }

    #[test]
    fn step_matrix_examples() {
        let c = SchrodingerCocycle::real(0.5, golden(), 0.0).unwrap();
        assert_eq!(c.step_real(0.0), Mat2::new(-1.0, -1.0, 1.0, 0.0));
        let c = SchrodingerCocycle::real(3.7, golden(), 1.25).unwrap();
        assert!(c.step_real(0.25).max_diff(&Mat2::new(1.25, -1.0, 1.0, 0.0)) < 1e-15);
        assert_eq!(c.step_real(0.61).det(), 1.0);
    }

    #[test]
    fn rejects_zero_coupling_and_lower_energies() {
        assert!(SchrodingerCocycle::real(0.0, golden(), 0.0).is_err());
        assert!(SchrodingerCocycle::new(1.0, golden(), Complex64::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn iterate_small_cases() {
        let c = SchrodingerCocycle::new(0.7, golden(), Complex64::new(0.3, 0.2)).unwrap();
        assert_eq!(c.iterate(0.1, 0).to_mat(), Mat2::identity());
        let one = c.iterate(0.1, 1).to_mat();
        assert!(one.max_diff(&c.step_matrix(0.1)) < 1e-15);
    }

    #[test]
    fn large_iterates_stay_finite() {
        let c = SchrodingerCocycle::real(2.0, golden(), 0.0).unwrap();
        let a = c.iterate_real(0.0, 5000);
        assert!(a.mat.max_abs().is_finite());
        assert!(a.log_scale > 1000.0);
        assert!((a.log_op_norm() / 5000.0 - 2f64.ln()).abs() < 0.05);
    }

    #[test]
    fn far_outside_spectrum_is_hyperbolic() {
        let c = SchrodingerCocycle::real(0.5, golden(), 5.0).unwrap();
        let l = c.lyapunov(2000, 32);
        assert!(l > 0.5, "{l}");
        // Direct comparison: the constant cocycle [[5,-1],[1,0]] bounds the
        // growth between the extreme potentials 4 and 6.
        let rate = |t: f64| ((t + (t * t - 4.0).sqrt()) / 2.0).ln();
        assert!(l > rate(4.0) && l < rate(6.0));
        assert!(c.uniform_hyperbolicity_test(500, 64, 0.5));
        let stats = c.boundedness_probe(1024, 8);
        assert!((stats.exp_rate - l).abs() < 0.05);
    }

    #[test]
    fn trivial_probe() {
        let c = SchrodingerCocycle::real(0.5, golden(), 0.0).unwrap();
        let stats = c.boundedness_probe(0, 4);
        assert_relative_eq!(stats.sup_norm, 2f64.sqrt(), max_relative = 1e-12);
        assert!(!c.uniform_hyperbolicity_test(1, 16, 10.0));
    }

    #[test]
    fn rotation_number_limits() {
        let lambda = 0.5;
        let n = 4000;
        let below = SchrodingerCocycle::real(lambda, golden(), -2.0 - 2.0 * lambda - 1.0).unwrap();
        assert!((below.rotation_number(n, 0.0) - 0.5).abs() <= 2.0 / n as f64);
        let above = SchrodingerCocycle::real(lambda, golden(), 2.0 + 2.0 * lambda + 1.0).unwrap();
        assert!(above.rotation_number(n, 0.0) <= 2.0 / n as f64);
    }

    #[test]
    fn rotation_number_of_free_operator() {
        // λ → 0 with rational α: ρ = arccos(E/2) / (2π).
        let c = SchrodingerCocycle::real(1e-12, Frequency::Rational(Rational::new(0, 1).unwrap()), 0.7).unwrap();
        let rho = c.rotation_number(200_000, 0.0);
        assert!((rho - (0.35f64).acos() / (2.0 * PI)).abs() < 1e-4);
    }

    #[test]
    fn complex_energy_reduces_to_real() {
        let c = SchrodingerCocycle::real(0.5, golden(), 0.3).unwrap();
        let lr = c.lyapunov(2000, 32);
        let lc = lyapunov_of(&c.alpha, 2000, 32, |x| c.step_matrix(x));
        assert_relative_eq!(lr, lc, max_relative = 1e-9);
    }

    #[test]
    fn conjugacy_invariance() {
        let c = SchrodingerCocycle::real(0.5, golden(), 0.4).unwrap();
        let n = 1000;
        let b = Mat2::diag(2.0, 0.5);
        let bi = b.inverse();
        let plain = c.lyapunov(n, 32);
        let conj = lyapunov_of(&c.alpha, n, 32, |x| b * c.step_real(x) * bi);
        assert!((plain - conj).abs() <= 2.0 / n as f64 * b.op_norm().ln() + 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cocycle_law(lambda in 0.1..3.0f64, alpha in 0.05..0.95f64, e in -4.0..4.0f64, eta in 0.0..0.5f64, x in 0.0..1.0f64) {
            let c = SchrodingerCocycle::new(lambda, Frequency::Real(alpha), Complex64::new(e, eta)).unwrap();
            let (m, n) = (50, 50);
            let whole = c.iterate(x, m + n).to_mat();
            let tail = c.iterate(x + n as f64 * alpha, m).to_mat();
            let split = tail * c.iterate(x, n).to_mat();
            let scale = whole.max_abs();
            prop_assert!(whole.max_diff(&split) <= 1e-8 * scale);
            prop_assert!((whole.det() - Complex64::new(1.0, 0.0)).norm() <= 1e-9 * scale * scale);
        }

        #[test]
        fn rotation_number_is_monotone(lambda in 0.1..0.9f64, x0 in 0.0..1.0f64) {
            let n = 2000;
            let mut prev = 0.5;
            for j in 0..100 {
                let e = -3.0 + 6.0 * j as f64 / 99.0;
                let c = SchrodingerCocycle::real(lambda, golden(), e).unwrap();
                let rho = c.rotation_number(n, x0);
                prop_assert!(rho <= prev + 2.0 / n as f64);
                prev = rho;
            }
        }

        #[test]
        fn lyapunov_is_nonnegative(lambda in 0.1..3.0f64, e in -5.0..5.0f64) {
            let c = SchrodingerCocycle::real(lambda, golden(), e).unwrap();
            prop_assert!(c.lyapunov(1000, 32) >= -1e-3);
        }
    }
}

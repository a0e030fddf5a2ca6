//! Bloch matrices of the periodic operator and the eigenvalue-counting IDS.
//!
//! For `α = p/q` the restriction of `H` to solutions with
//! `u_{n+q} = e^{2πik} u_n` is a `q × q` Hermitian matrix `H(k)` with
//! `det(E - H(k)) = Δ(E) - 2 cos 2πk`. The periodic (`k = 0`) and
//! antiperiodic (`k = 1/2`) matrices are real symmetric; their eigenvalues
//! are the band edges, and `Δ` itself is recovered as a product over them.
//! None of this touches transfer matrices, which makes it an independent
//! check on the band code.

use std::f64::consts::PI;

use crate::arithmetic::Rational;
use crate::cocycle::potential;
use crate::eigen::{symmetric_eigenvalues, SymMatrix};
use crate::linalg::Interval;

fn diagonal(lambda: f64, pq: Rational, theta: f64) -> Vec<f64> {
    (0..pq.q as usize)
        .map(|i| potential(lambda, theta + pq.multiple(i as i64)))
        .collect()
}

/// `H(k)` for `k = 0` (`antiperiodic = false`) or `k = 1/2`.
pub fn bloch_matrix(lambda: f64, pq: Rational, theta: f64, antiperiodic: bool) -> SymMatrix {
    let q = pq.q as usize;
    let sign = if antiperiodic { -1.0 } else { 1.0 };
    let mut m = SymMatrix::zeros(q);
    for (i, v) in diagonal(lambda, pq, theta).into_iter().enumerate() {
        m.set(i, i, v);
    }
    if q == 1 {
        m.add_sym(0, 0, 2.0 * sign);
        return m;
    }
    for i in 0..q - 1 {
        m.add_sym(i, i + 1, 1.0);
    }
    m.add_sym(0, q - 1, sign);
    m
}

/// The complex Hermitian `H(k)` embedded as the real symmetric `2q × 2q`
/// matrix `[[A, -B], [B, A]]`; every eigenvalue appears twice.
pub fn bloch_matrix_embedded(lambda: f64, pq: Rational, theta: f64, k: f64) -> SymMatrix {
    let q = pq.q as usize;
    let mut re = vec![0.0; q * q];
    let mut im = vec![0.0; q * q];
    for (i, v) in diagonal(lambda, pq, theta).into_iter().enumerate() {
        re[i * q + i] += v;
    }
    let (s, c) = (2.0 * PI * k).sin_cos();
    // Hopping u_{n+1} + u_{n-1}; crossing the cell boundary picks up e^{±2πik}.
    for i in 0..q {
        let j = (i + 1) % q;
        let (hr, hi) = if j == 0 { (c, s) } else { (1.0, 0.0) };
        // Entry (i, j) couples u_i to u_{i+1}.
        re[i * q + j] += hr;
        im[i * q + j] += hi;
        re[j * q + i] += hr;
        im[j * q + i] -= hi;
    }
    let mut m = SymMatrix::zeros(2 * q);
    for i in 0..q {
        for j in 0..q {
            let (a, b) = (re[i * q + j], im[i * q + j]);
            m.set(i, j, a);
            m.set(i + q, j + q, a);
            m.set(i, j + q, -b);
            m.set(i + q, j, b);
        }
    }
    m
}

/// IDS by eigenvalue counting over the Bloch phases.
#[derive(Debug, Clone)]
pub struct EigenCountIds {
    pub q: usize,
    pub periodic: Vec<f64>,
    pub antiperiodic: Vec<f64>,
    bands: Vec<Interval>,
    left_is_periodic: Vec<bool>,
}

/// Sign-aware `ln|Π (E - μ_i)|`.
fn log_char_poly(eigs: &[f64], e: f64) -> (f64, f64) {
    let mut log = 0.0;
    let mut sign = 1.0;
    for &m in eigs {
        let d = e - m;
        if d == 0.0 {
            return (f64::NEG_INFINITY, 1.0);
        }
        log += d.abs().ln();
        if d < 0.0 {
            sign = -sign;
        }
    }
    (log, sign)
}

impl EigenCountIds {
    pub fn new(lambda: f64, pq: Rational, theta: f64) -> Self {
        let periodic = symmetric_eigenvalues(&bloch_matrix(lambda, pq, theta, false));
        let antiperiodic = symmetric_eigenvalues(&bloch_matrix(lambda, pq, theta, true));
        let mut tagged: Vec<(f64, bool)> = periodic
            .iter()
            .map(|&e| (e, true))
            .chain(antiperiodic.iter().map(|&e| (e, false)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let q = pq.q as usize;
        let mut bands = Vec::with_capacity(q);
        let mut left_is_periodic = Vec::with_capacity(q);
        for j in 0..q {
            let (l, r) = (tagged[2 * j], tagged[2 * j + 1]);
            bands.push(Interval { lo: l.0, hi: r.0 });
            left_is_periodic.push(l.1);
        }
        EigenCountIds {
            q,
            periodic,
            antiperiodic,
            bands,
            left_is_periodic,
        }
    }

    pub fn bands(&self) -> &[Interval] {
        &self.bands
    }

    /// `Δ(E)` from the characteristic polynomials,
    /// `Δ = det(E - H(0)) + 2 = det(E - H(1/2)) - 2`, taking whichever
    /// determinant is smaller in magnitude.
    pub fn discriminant(&self, e: f64) -> f64 {
        let (lp, sp) = log_char_poly(&self.periodic, e);
        let (la, sa) = log_char_poly(&self.antiperiodic, e);
        if lp <= la {
            sp * lp.exp() + 2.0
        } else {
            sa * la.exp() - 2.0
        }
    }

    /// Bloch phase `k* ∈ [0, 1/2]` with `Δ(E) = 2 cos 2πk*`, via
    /// `det(E - H(0)) = -4 sin² πk*` or `det(E - H(1/2)) = 4 cos² πk*`.
    fn bloch_phase(&self, e: f64) -> f64 {
        let (lp, sp) = log_char_poly(&self.periodic, e);
        let (la, sa) = log_char_poly(&self.antiperiodic, e);
        if lp <= la {
            let x = (-sp * lp.exp() / 4.0).clamp(0.0, 1.0);
            x.sqrt().asin() / PI
        } else {
            let x = (sa * la.exp() / 4.0).clamp(0.0, 1.0);
            0.5 - x.sqrt().asin() / PI
        }
    }

    /// Fraction of (eigenvalue, Bloch phase) pairs at or below `E`.
    pub fn ids(&self, e: f64) -> f64 {
        let j = self.bands.partition_point(|b| b.hi < e);
        if j == self.q {
            return 1.0;
        }
        let band = self.bands[j];
        if e < band.lo {
            return j as f64 / self.q as f64;
        }
        let k = self.bloch_phase(e);
        let frac = if self.left_is_periodic[j] {
            2.0 * k
        } else {
            1.0 - 2.0 * k
        };
        (j as f64 + frac.clamp(0.0, 1.0)) / self.q as f64
    }
}

/// Brute-force IDS: the fraction of eigenvalues of `H(k)` at or below `E`
/// over `samples` midpoint Bloch phases.
pub fn ids_by_phase_sampling(lambda: f64, pq: Rational, theta: f64, e: f64, samples: usize) -> f64 {
    let q = pq.q as usize;
    let mut count = 0usize;
    for s in 0..samples {
        let k = (s as f64 + 0.5) / samples as f64;
        let ev = symmetric_eigenvalues(&bloch_matrix_embedded(lambda, pq, theta, k));
        count += ev.iter().filter(|&&x| x <= e).count();
    }
    count as f64 / (2 * q * samples) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::discriminant;

    fn r(p: u64, q: u64) -> Rational {
        Rational::new(p, q).unwrap()
    }

    #[test]
    fn small_bloch_matrices() {
        let m = bloch_matrix(0.5, r(0, 1), 0.0, false);
        assert_eq!(m.get(0, 0), 1.0 + 2.0);
        let m = bloch_matrix(0.5, r(0, 1), 0.0, true);
        assert_eq!(m.get(0, 0), 1.0 - 2.0);
        let m = bloch_matrix(0.5, r(1, 2), 0.0, false);
        assert_eq!(m.get(0, 1), 2.0);
        let m = bloch_matrix(0.5, r(1, 2), 0.0, true);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn characteristic_polynomial_identity() {
        // det(E - H(k)) = Δ(E) - 2 cos 2πk at an arbitrary Bloch phase.
        let (l, pq, t) = (0.6, r(3, 7), 0.21);
        for &k in &[0.0, 0.13, 0.37, 0.5] {
            let ev = symmetric_eigenvalues(&bloch_matrix_embedded(l, pq, t, k));
            for &e in &[-2.9, -0.4, 1.3] {
                // Every eigenvalue is doubled by the embedding.
                let det: f64 = ev.iter().map(|m| e - m).product::<f64>().abs().sqrt();
                let sign: f64 = ev.iter().step_by(2).map(|m| (e - m).signum()).product();
                let want = discriminant(l, pq, t, e) - 2.0 * (2.0 * PI * k).cos();
                assert!((sign * det - want).abs() < 1e-9 * (1.0 + want.abs()), "k={k} e={e}");
            }
        }
    }

    #[test]
    fn discriminant_from_eigenvalues() {
        let (l, pq, t) = (0.5, r(5, 13), 0.2);
        let ids = EigenCountIds::new(l, pq, t);
        for &e in &[-2.0, -0.7, 0.3, 1.9] {
            let a = ids.discriminant(e);
            let b = discriminant(l, pq, t, e);
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn counting_matches_phase_sampling() {
        let (l, pq, t) = (0.5, r(1, 3), 0.1);
        let ids = EigenCountIds::new(l, pq, t);
        for &e in &[-2.2, -1.0, 0.1, 0.9, 2.4] {
            let brute = ids_by_phase_sampling(l, pq, t, e, 4000);
            assert!((ids.ids(e) - brute).abs() < 2e-3, "{} vs {brute}", ids.ids(e));
        }
    }
}

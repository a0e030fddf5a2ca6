//! Gauss–Legendre quadrature and the substitutions used for band integrals
//! with inverse-square-root edge behaviour.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A reusable quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Rule { nodes, weights }
    }

    /// `∫_a^b f` split into `panels` equal panels.
    pub fn integrate<E>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let mut s = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                s += w * f(mid + 0.5 * h * x)?;
            }
            total += 0.5 * h * s;
        }
        Ok(total)
    }

    /// `∫_a^b f` for `f` with `1/sqrt` singularities at both ends, through
    /// `E = (a+b)/2 + (b-a)/2 · sin u`.
    pub fn integrate_band<E>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.integrate(-PI / 2.0, PI / 2.0, panels, |u| {
            let (s, co) = u.sin_cos();
            Ok(f(c + r * s)? * r * co)
        })
    }

    /// `∫ f` between `edge` and `other` for `f` with a `1/sqrt` singularity at
    /// `edge` only, through `E = edge ± s²`.
    pub fn integrate_edge<E>(
        &self,
        edge: f64,
        other: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<f64, E> {
        let sign = if other >= edge { 1.0 } else { -1.0 };
        let len = (other - edge).abs().sqrt();
        let v = self.integrate(0.0, len, panels, |s| Ok(f(edge + sign * s * s)? * 2.0 * s))?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type R = Result<f64, ()>;

    #[test]
    fn polynomials_are_exact() {
        let rule = Rule::new(8);
        let v = rule.integrate(0.0, 2.0, 1, |x| -> R { Ok(x.powi(15)) }).unwrap();
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-10);
        let (_, w) = gauss_legendre(17);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn arcsine_density() {
        // ∫_{-2}^{2} dE / (π sqrt(4 - E²)) = 1.
        let rule = Rule::new(16);
        let v = rule
            .integrate_band(-2.0, 2.0, 2, |e| -> R { Ok(1.0 / (PI * (4.0 - e * e).sqrt())) })
            .unwrap();
        assert!((v - 1.0).abs() < 1e-13, "{v}");
        let half = rule
            .integrate_edge(2.0, 0.0, 4, |e| -> R {
                Ok(1.0 / (PI * ((2.0 - e) * (2.0 + e)).sqrt()))
            })
            .unwrap();
        assert!((half - 0.5).abs() < 1e-12, "{half}");
    }
}

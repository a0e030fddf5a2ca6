//! Regime experiments on the fixture instances.

use std::path::PathBuf;

use amo_core::arithmetic::{expand, golden_mean, Rational};
use amo_core::linalg::{phi, HPoint, Mat2};
use amo_core::periodic::bands;
use amo_core::regime::{
    build_shadowing, cancellation_identity, cancellation_sweep, dynamical_cancellation, elliptic_average_experiment,
    integrated_cancellation, orbit_sampling_ratio, point_with_phi_ratio, IntRange, TrigPoly, DEFAULT_SEED,
};
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rat(v: &Value) -> Rational {
    Rational::new(v["p"].as_u64().unwrap(), v["q"].as_u64().unwrap()).unwrap()
}

fn dev_of(v: &Value) -> f64 {
    v["dev_exponent"].as_f64().map_or(0.0, |x| (-x).exp())
}

#[test]
fn cancellation_sweep_is_exact() {
    let s = cancellation_sweep(1000, DEFAULT_SEED, 97).unwrap();
    assert!(s.max_rel_dev <= 1e-9, "{}", s.max_rel_dev);
}

#[test]
fn rotation_average_reduces_to_identity() {
    let b0 = Mat2::new(1.5, 0.4, -0.7, 0.48);
    let b0 = b0.scale(1.0 / b0.det().sqrt());
    let z0 = HPoint::new(0.3, 0.8).unwrap();
    for (r, s) in [(1u64, 3u64), (2, 5), (3, 7)] {
        let (lhs, rhs) = cancellation_identity(&b0, z0, Rational::new(r, s).unwrap()).unwrap();
        let (avg, bound) = elliptic_average_experiment(&b0, r as f64 / s as f64, z0, 4 * s as usize).unwrap();
        assert!((avg - lhs).abs() < 1e-12 * lhs && (bound - rhs).abs() < 1e-12 * rhs);
    }
}

#[test]
fn rotation_average_tends_to_the_bound() {
    let b0 = Mat2::diag(3.0, 1.0 / 3.0);
    let rho = golden_mean() / 2.0;
    let (a, b) = elliptic_average_experiment(&b0, rho, HPoint::I, 1000).unwrap();
    assert!((a / b - 1.0).abs() < 1e-12);
    let z0 = HPoint::new(0.4, 0.6).unwrap();
    let gaps: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| {
            let (a, b) = elliptic_average_experiment(&b0, rho, z0, n).unwrap();
            (a / b - 1.0).abs()
        })
        .collect();
    assert!(gaps[1] <= gaps[0] + 1e-3 && gaps[2] <= gaps[1] + 1e-3, "{gaps:?}");
    assert!(gaps[2] < 1e-2);
}

#[test]
fn orbit_sampling_constant() {
    let f = fixture("orbit_sampling.json");
    let cf = expand(golden_mean(), 20, 1 << 40).unwrap();
    let qn = f["convergent_denominator"].as_u64().unwrap() as u128;
    assert!(cf.denominators().any(|q| q == qn));
    let k = f["k"].as_u64().unwrap() as usize;
    assert_eq!(k as u128, qn - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(f["seed"].as_u64().unwrap());
    let threshold = f["threshold"].as_f64().unwrap();
    for _ in 0..f["trials"].as_u64().unwrap() {
        let p = TrigPoly::random(&mut rng, IntRange::new(0, k as i64));
        let ratio = orbit_sampling_ratio(&p, golden_mean(), f["x0"].as_f64().unwrap(), k).unwrap();
        assert!(ratio > 0.0 && ratio < threshold, "{ratio}");
    }
}

#[test]
fn adversarial_polynomial_is_finite() {
    let cf = expand(golden_mean(), 20, 1 << 40).unwrap();
    let mut prev = 0.0;
    for &(_, q) in &cf.convergents[4..10] {
        let q = q as i64;
        // 1 - e^{2πiq(x - x0)} nearly vanishes along the orbit.
        let p = TrigPoly::new(
            [(0, Complex64::new(1.0, 0.0)), (q, Complex64::new(-1.0, 0.0))]
                .into_iter()
                .collect(),
        );
        let ratio = orbit_sampling_ratio(&p, golden_mean(), 0.0, q as usize).unwrap();
        assert!(ratio.is_finite() && ratio > 1.0);
        prev = ratio;
    }
    assert!(prev > 1.0);
}

#[test]
fn periodic_shadowing_is_exact() {
    let g = &fixture("regime_instances.json")["golden"];
    let rep = build_shadowing(
        0.5,
        rat(g),
        0.0,
        g["theta"].as_f64().unwrap(),
        g["energy"].as_f64().unwrap(),
        200,
    )
    .unwrap();
    assert_eq!(rep.deviations.len(), 200);
    assert!(rep.max_dev <= 1e-9, "{}", rep.max_dev);
}

#[test]
fn shadowing_responds_monotonically_to_dev() {
    let g = &fixture("regime_instances.json")["golden"];
    let (pq, theta) = (rat(g), g["theta"].as_f64().unwrap());
    let bs = bands(0.5, pq, theta).unwrap();
    let xs = amo_core::periodic::x_set(&bs);
    let mut checked = 0;
    for iv in xs.intervals.iter().take(10) {
        let e = iv.mid();
        let mut prev = 0.0;
        for dev in [1e-6, 2e-6, 4e-6, 8e-6] {
            let rep = build_shadowing(0.5, pq, dev, theta, e, 50).unwrap();
            assert!(rep.max_dev >= prev, "E={e} dev={dev}: {} < {prev}", rep.max_dev);
            prev = rep.max_dev;
        }
        checked += 1;
    }
    assert_eq!(checked, 10);
}

#[test]
fn shadowing_improves_along_convergents() {
    let f = fixture("regime_instances.json");
    let mut devs = Vec::new();
    for inst in f["shadow_pair"].as_array().unwrap() {
        let (pq, theta) = (rat(inst), inst["theta"].as_f64().unwrap());
        let bs = bands(0.5, pq, theta).unwrap();
        let xs = amo_core::periodic::x_set(&bs);
        let e = xs
            .intervals
            .iter()
            .max_by(|a, b| a.len().total_cmp(&b.len()))
            .unwrap()
            .mid();
        devs.push(build_shadowing(0.5, pq, dev_of(inst), theta, e, 50).unwrap().max_dev);
    }
    assert!(devs[1] < devs[0], "{devs:?}");
}

#[test]
fn dynamical_cancellation_on_golden_instance() {
    let g = &fixture("regime_instances.json")["golden"];
    let (pq, theta, e) = (rat(g), g["theta"].as_f64().unwrap(), g["energy"].as_f64().unwrap());
    let b = g["b"].as_u64().unwrap() as usize;
    let slack = g["slack"].as_f64().unwrap();
    let m = bands(0.5, pq, theta).unwrap().fixed_point(e).unwrap();

    // κ = 1 at the fixed point, where the orbit is stationary.
    let fixed = dynamical_cancellation(0.5, pq, 0.0, theta, e, m, b, slack).unwrap();
    assert!((fixed.avg - phi(m)).abs() < 1e-9 * phi(m));
    assert_eq!(fixed.kappa, 1.0);

    let z = point_with_phi_ratio(m, g["phi_factor"].as_f64().unwrap()).unwrap();
    let rep = dynamical_cancellation(0.5, pq, dev_of(g), theta, e, z, b, slack).unwrap();
    assert_eq!(rep.kappa, 2.0);
    assert!((rep.floor - 1.25 * rep.phi_m).abs() < 1e-12);
    assert!(rep.ratio >= 0.9, "{}", rep.ratio);
    assert!(rep.floor >= rep.phi_m);

    // φ(z) = e^q is far from e^{o(q)}: the average clears 2φ(m).
    let far = point_with_phi_ratio(m, (pq.q as f64).exp()).unwrap();
    let rep = dynamical_cancellation(0.5, pq, dev_of(g), theta, e, far, b, slack).unwrap();
    assert!(rep.avg >= 2.0 * rep.phi_m);
}

#[test]
fn per_phase_band_mass_is_one() {
    for theta in [0.0, 0.2, 0.37] {
        let bs = bands(0.5, Rational::new(8, 13).unwrap(), theta).unwrap();
        assert!((0.5 * bs.total_mass().unwrap() - 1.0).abs() < 0.01);
    }
}

#[test]
fn integrated_cancellation_stays_below_ceiling() {
    let f = fixture("regime_instances.json");
    let ceiling = f["integrated_ceiling"].as_f64().unwrap();
    let window: Vec<f64> = f["k0_window"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for inst in f["integrated"].as_array().unwrap() {
        let rep = integrated_cancellation(
            inst["lambda"].as_f64().unwrap(),
            rat(inst),
            dev_of(inst),
            inst["theta"].as_f64().unwrap(),
            inst["b"].as_u64().unwrap() as usize,
            inst["nodes"].as_u64().unwrap() as usize,
            inst["eps"].as_f64().unwrap(),
        )
        .unwrap();
        assert!(rep.b_average <= ceiling, "{inst}: {}", rep.b_average);
        assert!(
            rep.k0_mass >= window[0] && rep.k0_mass <= window[1],
            "{inst}: {}",
            rep.k0_mass
        );
    }
}

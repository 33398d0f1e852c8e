//! Exact ellipsoid moments against a plain Monte-Carlo estimate.
//!
//! Points are drawn uniformly in the bounding box and kept when inside the
//! ellipsoid; nothing here uses the closed-form moment formula. Each sample
//! is averaged over its reflections `x -> -x`, `y -> -y`, `z -> -z` (only
//! `x` and `y` for the northern half), which maps the domain to itself: a
//! monomial with an odd reflected exponent averages to exactly zero.

use ellipflow::geometry::{Domain, Hemisphere};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SAMPLES: usize = 10_000_000;
const MAX_DEGREE: usize = 8;
const CHUNKS: usize = 40;

fn exponents() -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for p in 0..=MAX_DEGREE {
        for q in 0..=MAX_DEGREE - p {
            for r in 0..=MAX_DEGREE - p - q {
                out.push([p, q, r]);
            }
        }
    }
    out
}

/// Running sums of `f` and `f^2` per exponent, over the whole box.
struct Sums {
    s1: Vec<f64>,
    s2: Vec<f64>,
    north1: Vec<f64>,
    north2: Vec<f64>,
}

fn sample(axes: [f64; 3], exps: &[[usize; 3]], seed: u64, n: usize) -> Sums {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = exps.len();
    let mut sums = Sums {
        s1: vec![0.0; k],
        s2: vec![0.0; k],
        north1: vec![0.0; k],
        north2: vec![0.0; k],
    };
    let mut pw = [[1.0f64; MAX_DEGREE + 1]; 3];
    for _ in 0..n {
        let x: [f64; 3] = std::array::from_fn(|i| rng.gen_range(-axes[i]..axes[i]));
        let rho = (0..3).map(|i| (x[i] / axes[i]).powi(2)).sum::<f64>();
        if rho >= 1.0 {
            continue;
        }
        for i in 0..3 {
            for d in 1..=MAX_DEGREE {
                pw[i][d] = pw[i][d - 1] * x[i];
            }
        }
        // The northern half uses the reflected point when z < 0.
        let zsign = if x[2] > 0.0 { 1.0 } else { -1.0 };
        for (j, e) in exps.iter().enumerate() {
            if e[0] % 2 == 1 || e[1] % 2 == 1 {
                continue;
            }
            let f = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
            // Half of each sample lands in each hemisphere after reflection in z.
            let fz = f * if e[2] % 2 == 1 { zsign } else { 1.0 };
            sums.north1[j] += 0.5 * fz;
            sums.north2[j] += 0.25 * fz * fz;
            if e[2] % 2 == 0 {
                sums.s1[j] += f;
                sums.s2[j] += f * f;
            }
        }
    }
    sums
}

fn estimate(axes: [f64; 3]) -> (Vec<[usize; 3]>, Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let exps = exponents();
    let per = SAMPLES / CHUNKS;
    let parts: Vec<Sums> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| sample(axes, &exps, 1000 + c as u64, per))
        .collect();
    let n = (per * CHUNKS) as f64;
    let box_volume = 8.0 * axes[0] * axes[1] * axes[2];
    let stat = |s1: f64, s2: f64| {
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        (box_volume * mean, box_volume * (var / n).sqrt())
    };
    let mut full = Vec::new();
    let mut north = Vec::new();
    for j in 0..exps.len() {
        let (s1, s2, n1, n2) = parts.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, p| {
            (
                acc.0 + p.s1[j],
                acc.1 + p.s2[j],
                acc.2 + p.north1[j],
                acc.3 + p.north2[j],
            )
        });
        full.push(stat(s1, s2));
        north.push(stat(n1, n2));
    }
    (exps, full, north)
}

fn check_domain(name: &str, d: &Domain) {
    let axes = d.axes();
    let (exps, full, north) = estimate(axes);
    let mut worst: f64 = 0.0;
    for (j, e) in exps.iter().enumerate() {
        let (p, q, r) = (e[0] as u32, e[1] as u32, e[2] as u32);
        let exact = d.monomial_integral(p, q, r);
        let exact_n = d.half_monomial_integral(p, q, r, Hemisphere::North);
        for (label, exact, (mc, sigma)) in [("full", exact, full[j]), ("north", exact_n, north[j])]
        {
            if sigma == 0.0 {
                // Odd under a reflection: the symmetrized estimate is exactly 0.
                assert_eq!(mc, 0.0);
                assert_eq!(exact, 0.0, "{name} {label} x^{p} y^{q} z^{r}");
                continue;
            }
            let z = (exact - mc).abs() / sigma;
            worst = worst.max(z);
            assert!(
                z < 3.0,
                "{name} {label} x^{p} y^{q} z^{r}: exact {exact} mc {mc} +- {sigma}"
            );
        }
    }
    println!(
        "{name}: {} exponents, worst deviation {worst:.2} sigma",
        exps.len()
    );
}

#[test]
fn sphere_moments_match_monte_carlo() {
    check_domain("sphere", &Domain::unit_sphere());
}

#[test]
fn spheroid_moments_match_monte_carlo() {
    check_domain("spheroid", &Domain::spheroid(0.5625).unwrap());
}

#[test]
fn triaxial_moments_match_monte_carlo() {
    check_domain("triaxial", &Domain::new(1.0, 0.9, 0.8).unwrap());
}

#[test]
fn rotation_momentum_matches_monte_carlo() {
    // int (x^2 + y^2) on the c = 0.8 spheroid, the angular momentum of e_z x x.
    let d = Domain::new(1.0, 1.0, 0.8).unwrap();
    let (exps, full, _) = estimate(d.axes());
    let idx = |e: [usize; 3]| exps.iter().position(|x| *x == e).unwrap();
    let (a, sa) = full[idx([2, 0, 0])];
    let (b, sb) = full[idx([0, 2, 0])];
    let mc = a + b;
    let sigma = sa + sb;
    assert!((mc - 1.340413).abs() < 3.0 * sigma, "{mc} +- {sigma}");
}

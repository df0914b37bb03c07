//! Independent numerical oracles for constants and exact solvers.

use bvm_core::exact::exact_range_functional_1d;
use bvm_core::harness::fit_stretch_exponent;
use bvm_core::kernel::Kernel;
use bvm_core::range::{lambda_nn, mc_range_functional};
use bvm_core::rng::{self, Domain};
use rand_distr::{Distribution, StandardNormal};

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `a` and off-diagonal `b`, by Sturm sequence.
fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..a.len() {
        let off = if i == 0 { 0.0 } else { b[i - 1] * b[i - 1] };
        d = a[i] - x - if i == 0 { 0.0 } else { off / d };
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn smallest_eigenvalue(a: &[f64], b: &[f64]) -> f64 {
    let hi0 = a.iter().zip(0..).map(|(d, i)| {
        d + if i > 0 { b[i - 1].abs() } else { 0.0 } + b.get(i).map_or(0.0, |v| v.abs())
    });
    let (mut lo, mut hi) = (0.0, hi0.fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(a, b, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `-v'' = μ v` on `(0, r)` with Dirichlet ends, `n` interior nodes.
fn interval_eigenvalue(r: f64, n: usize) -> f64 {
    let h = r / (n + 1) as f64;
    smallest_eigenvalue(&vec![2.0 / (h * h); n], &vec![-1.0 / (h * h); n - 1])
}

/// `-(r u')'/r = μ u` on the disc of radius `r`, `n` finite-volume cells,
/// symmetrized by the cell volumes.
fn disc_eigenvalue(r: f64, n: usize) -> f64 {
    let h = r / n as f64;
    let vol: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h * h).collect();
    let flux: Vec<f64> = (1..n).map(|i| i as f64).collect();
    let mut a = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { flux[i - 1] } else { 0.0 };
        let right = if i + 1 < n { flux[i] } else { 2.0 * n as f64 };
        a[i] = (left + right) / vol[i];
    }
    let b: Vec<f64> = (0..n - 1).map(|i| -flux[i] / (vol[i] * vol[i + 1]).sqrt()).collect();
    smallest_eigenvalue(&a, &b)
}

fn richardson(f: impl Fn(usize) -> f64, n: usize) -> f64 {
    (4.0 * f(2 * n) - f(n)) / 3.0
}

#[test]
fn lambda_matches_finite_difference_d1() {
    let mu = richardson(|n| interval_eigenvalue(1.0, n), 400);
    assert!((mu / 2.0 - lambda_nn(1).unwrap()).abs() < 1e-6, "{mu}");
}

#[test]
fn lambda_matches_finite_difference_d3() {
    // u = v/r turns the radial problem into the interval one.
    let r = (3.0 / (4.0 * std::f64::consts::PI)).cbrt();
    let mu = richardson(|n| interval_eigenvalue(r, n), 400);
    assert!((mu / 6.0 - lambda_nn(3).unwrap()).abs() < 1e-6, "{mu}");
}

#[test]
fn lambda_matches_finite_volume_d2() {
    let r = 1.0 / std::f64::consts::PI.sqrt();
    let mu = richardson(|n| disc_eigenvalue(r, n), 800);
    let lam = lambda_nn(2).unwrap();
    assert!((mu / 4.0 - lam).abs() / lam < 1e-5, "{} vs {lam}", mu / 4.0);
}

#[test]
fn power_tail_constant_matches_direct_summation() {
    let (alpha, cutoff) = (1.0, 1000);
    let k = Kernel::power_law(alpha, cutoff).unwrap();
    let raw: Vec<f64> = (1..=cutoff).map(|x| (x as f64).powf(-1.0 - alpha)).collect();
    let z = 2.0 * raw.iter().sum::<f64>();
    let one_minus_phat = |q: f64| -> f64 {
        raw.iter().enumerate().map(|(i, w)| 2.0 * w / z * (1.0 - (q * (i + 1) as f64).cos())).sum()
    };
    let grid: Vec<f64> = (0..46).map(|i| 0.01 + 0.09 * i as f64 / 45.0).collect();
    let (num, den) = grid.iter().fold((0.0, 0.0), |(n, d), &q| {
        let qa = q.powf(alpha);
        (n + one_minus_phat(q) * qa, d + qa * qa)
    });
    let c = num / den;
    assert!((k.tail_constant() - c).abs() / c < 1e-10);
    let residual = grid
        .iter()
        .map(|&q| (one_minus_phat(q) - c * q.powf(alpha)).abs() / (c * q.powf(alpha)))
        .fold(0.0, f64::max);
    assert!(residual < 0.05, "residual {residual}");
}

/// `E exp(-ν|R_n|)` for the discrete walk by enumerating all `2^n` paths.
fn enumerate_range(nu: f64, n: usize) -> f64 {
    let mut total = 0.0;
    for path in 0u32..1 << n {
        let (mut x, mut lo, mut hi) = (0i32, 0i32, 0i32);
        for s in 0..n {
            x += if path >> s & 1 == 1 { 1 } else { -1 };
            lo = lo.min(x);
            hi = hi.max(x);
        }
        total += (-nu * (hi - lo + 1) as f64).exp();
    }
    total / (1u64 << n) as f64
}

#[test]
fn exact_range_matches_path_enumeration() {
    let nmax = 20;
    for nu in [0.3, 1.0] {
        let g: Vec<f64> = (0..=nmax).map(|n| enumerate_range(nu, n)).collect();
        for t in [0.5, 1.0, 2.0] {
            let mut w = (-t as f64).exp();
            let mut f = 0.0;
            for (n, gn) in g.iter().enumerate() {
                if n > 0 {
                    w *= t / n as f64;
                }
                f += w * gn;
            }
            let exact = exact_range_functional_1d(nu, t, 400).unwrap();
            assert!((exact - f).abs() < 1e-12, "ν={nu} t={t}: {exact} vs {f}");
        }
    }
}

#[test]
fn mc_range_matches_exact_at_short_times() {
    let kernel = Kernel::nearest_neighbor(1).unwrap();
    let grid = [1.0, 5.0, 20.0];
    let mc = mc_range_functional(&kernel, 0.7, &grid, 100_000, 5).unwrap();
    for p in &mc {
        let exact = exact_range_functional_1d(0.7, p.t, 400).unwrap();
        assert!(p.estimate.agrees_with(exact, 4.0), "t={}: {:?} vs {exact}", p.t, p.estimate);
    }
}

#[test]
fn mean_range_d1_matches_enumeration_at_short_time() {
    // E|R_t| = Σ Pois(t; n) E|R_n|, with E|R_n| by enumeration.
    let t: f64 = 1.5;
    let mut w = (-t).exp();
    let mut mean = 0.0;
    for n in 0..=20usize {
        if n > 0 {
            w *= t / n as f64;
        }
        let mut s = 0.0;
        for path in 0u32..1 << n {
            let (mut x, mut lo, mut hi) = (0i32, 0i32, 0i32);
            for k in 0..n {
                x += if path >> k & 1 == 1 { 1 } else { -1 };
                lo = lo.min(x);
                hi = hi.max(x);
            }
            s += (hi - lo + 1) as f64;
        }
        mean += w * s / (1u64 << n) as f64;
    }
    let kernel = Kernel::nearest_neighbor(1).unwrap();
    let mc = mc_range_functional(&kernel, 0.0, &[t], 200_000, 6).unwrap();
    // Range variance at t = 1.5 is below 2, so 4σ is under 0.013.
    assert!((mc[0].mean_range - mean).abs() < 0.013, "{} vs {mean}", mc[0].mean_range);
}

#[test]
fn fit_interval_coverage_under_noise() {
    let grid: Vec<f64> = (0..20).map(|i| 10.0 * 100f64.powf(i as f64 / 19.0)).collect();
    let mut covered = 0;
    for seed in 0..1000 {
        let mut r = rng::stream(seed, Domain::Harness, 0);
        let curve: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| {
                let e: f64 = StandardNormal.sample(&mut r);
                (t, (-0.5 * t.powf(0.4)).exp() * (1.0 + 0.01 * e))
            })
            .collect();
        let fit = fit_stretch_exponent(&curve, (10.0, 1000.0)).unwrap();
        covered += fit.covers(0.4) as usize;
    }
    println!("interval covers 0.4 for {covered}/1000 seeds");
    assert!(covered >= 950, "covered {covered}/1000");
}

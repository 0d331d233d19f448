mod common;

use std::f64::consts::PI;

use cdbench::model_space::{Potential, SpaceSpec};
use cdbench::semigroup::{sphere_kernel_series, SemigroupCache};
use common::*;
use ndarray::Array1;
use proptest::prelude::*;

fn check_cache_invariants(cache: &SemigroupCache) {
    assert!(cache.eigenvalues[0].abs() <= 1e-10);
    let mass = cache.gen.space.weights.sum();
    let phi0 = cache.eigenfunction(0);
    for &v in phi0.iter() {
        assert!((v.abs() - mass.powf(-0.5)).abs() < 1e-9);
    }
    let gram = cache.eigenvectors.t().dot(&(&cache.eigenvectors * &cache.gen.space.weights.view().insert_axis(ndarray::Axis(1))));
    for i in 0..cache.len() {
        for j in 0..cache.len() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((gram[[i, j]] - want).abs() < 1e-10, "gram[{i},{j}] = {}", gram[[i, j]]);
        }
    }
    assert!(cache.residual() <= 1e-8, "residual {}", cache.residual());
}

#[test]
fn decompositions_satisfy_cache_invariants() {
    check_cache_invariants(&circle_fourier());
    check_cache_invariants(&ou400());
    check_cache_invariants(&sphere_cotangent2());
    check_cache_invariants(&sphere_harmonic3());
}

#[test]
fn spectral_gaps_match_analytic_values() {
    assert!((circle_central().spectral_gap() - 1.0).abs() < 1e-3);
    assert!((circle_fourier().spectral_gap() - 1.0).abs() < 1e-10);
    let flat = build(SpaceSpec::interval(400, -1.0, 1.0, Potential::Zero));
    assert!((flat.spectral_gap() - PI * PI / 4.0).abs() < 1e-3);
    let sphere = sphere_harmonic4();
    assert!((sphere.spectral_gap() - 2.0).abs() < 0.04);
    let cluster = sphere.eigenvalues.iter().filter(|&&l| (l - 2.0).abs() < 0.04).count();
    assert_eq!(cluster, 3);
    let cot = sphere_cotangent2();
    assert!((cot.spectral_gap() - 2.0).abs() < 0.04);
}

#[test]
fn semigroup_trivial_cases() {
    let cache = circle_fourier();
    let f = band_function(&cache, 1, 5);
    let p0 = cache.apply_semigroup(&f, 0.0).unwrap();
    assert!(sup(&(&p0 - &f)) <= 1e-12);
    let c = Array1::from_elem(cache.len(), 2.5);
    for t in [0.01, 0.3, 5.0] {
        assert!(sup(&(cache.apply_semigroup(&c, t).unwrap() - 2.5)) < 1e-10);
    }
    assert!(cache.apply_semigroup(&f, -0.1).is_err());
    let cos = grid(&cache, |p| p[0].cos());
    let pt = cache.apply_semigroup(&cos, 0.3).unwrap();
    assert!(sup(&(pt - (-0.3f64).exp() * &cos)) < 1e-9);
}

#[test]
fn heat_kernel_properties() {
    for cache in [circle_central(), ou400(), sphere_cotangent2()] {
        let w = &cache.gen.space.weights;
        let n = cache.len();
        for &(t, x, y) in &[(0.05, 0usize, n / 3), (0.5, n / 2, n - 1)] {
            let row = cache.heat_kernel_row(t, x).unwrap();
            let mass = cache.gen.space.total_mass;
            assert!(((w * &row).sum() * 1.0 - 1.0 * (mass / mass)).abs() < 1e-8);
            assert_eq!(cache.heat_kernel(t, x, y).unwrap(), cache.heat_kernel(t, y, x).unwrap());
            // Chapman–Kolmogorov
            let a = cache.heat_kernel_row(t, x).unwrap();
            let b = cache.heat_kernel_row(0.7 * t, y).unwrap();
            let ck = (w * &a * &b).sum();
            assert!((ck - cache.heat_kernel(1.7 * t, x, y).unwrap()).abs() < 1e-8 * (1.0 + ck.abs()));
        }
        assert!(cache.heat_kernel(0.0, 0, 0).is_err());
        assert!(cache.heat_kernel(0.1, 0, n).is_err());
    }
}

#[test]
fn legendre_series_oracle() {
    let big = sphere_kernel_series(40.0, 1.0, None).unwrap();
    assert!((big.value - 1.0).abs() < 1e-12);
    for t in [0.05, 0.2, 1.0] {
        let s = sphere_kernel_series(t, 0.0, None).unwrap();
        assert!(s.value >= 1.0 && !s.truncation_warning);
    }
    assert!(sphere_kernel_series(1e-6, 0.0, None).is_err());
    assert!(sphere_kernel_series(0.01, 0.0, Some(3)).unwrap().truncation_warning);

    // Discrete kernels against the series (normalised measure).
    let series_pi = sphere_kernel_series(0.5, PI, None).unwrap().value;
    let want: f64 = (0..60).map(|l| (2 * l + 1) as f64 * if l % 2 == 0 { 1.0 } else { -1.0 } * (-(l * (l + 1)) as f64 * 0.5).exp()).sum();
    assert!((series_pi - want).abs() < 1e-14);
    for cache in [sphere_harmonic4(), sphere_cotangent3()] {
        let space = &cache.gen.space;
        let x = 0;
        let p = space.coords[x];
        for theta in [PI / 2.0, PI] {
            // Rotate p by θ about an orthogonal axis to get the target point.
            let axis = [-p[1], p[0], 0.0];
            let r = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
            let a = [axis[0] / r, axis[1] / r, 0.0];
            let cross = [a[1] * p[2] - a[2] * p[1], a[2] * p[0] - a[0] * p[2], a[0] * p[1] - a[1] * p[0]];
            let q = [0, 1, 2].map(|k| p[k] * theta.cos() + cross[k] * theta.sin());
            let y = space.nearest_node(q);
            let got = cache.heat_kernel(0.5, x, y).unwrap();
            let want = sphere_kernel_series(0.5, space.dist(x, y), None).unwrap().value;
            assert!((got - want).abs() <= 0.02 * want.abs(), "{:?} θ={theta}: {got} vs {want}", space.spec.stencil());
        }
    }
}

#[test]
fn cache_dump_round_trips() {
    let cache = ou400();
    let dir = tempfile::tempdir().unwrap();
    let spec_json = serde_json::to_string(&cache.gen.space.spec).unwrap();
    let path = cdbench::semigroup::cache_path(dir.path(), &spec_json);
    cache.dump(&path, &spec_json).unwrap();
    let back = SemigroupCache::load(&path, &spec_json, cache.gen.clone()).unwrap();
    assert_eq!(back.eigenvalues, cache.eigenvalues);
    assert_eq!(back.eigenvectors, cache.eigenvectors);
    assert!(SemigroupCache::load(&path, "{}", cache.gen.clone()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn semigroup_invariants_on_markov_stencils(seed in 0u64..10_000, t in 0.0f64..2.0, s in 0.0f64..2.0) {
        for cache in [circle_central(), ou400()] {
            let f = band_function(&cache, seed, 8);
            let pts = cache.apply_semigroup(&f, t + s).unwrap();
            let comp = cache.apply_semigroup(&cache.apply_semigroup(&f, s).unwrap(), t).unwrap();
            prop_assert!(sup(&(&pts - &comp)) <= 1e-10 * (1.0 + sup(&f)));
            let pt = cache.apply_semigroup(&f, t).unwrap();
            prop_assert!(sup(&pt) <= sup(&f) + 1e-10);
            let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let pos = f.mapv(|v| v - fmin);
            prop_assert!(cache.apply_semigroup(&pos, t).unwrap().iter().all(|&v| v >= -1e-10));
            let w = &cache.gen.space.weights;
            prop_assert!(((w * &pt).sum() - (w * &f).sum()).abs() <= 1e-10 * (1.0 + sup(&f)));
            if t > 0.0 {
                let x = (seed as usize) % cache.len();
                let row = cache.heat_kernel_row(t, x).unwrap();
                prop_assert!((pt[x] - (w * &row * &f).sum()).abs() <= 1e-10 * (1.0 + sup(&f)));
            }
        }
    }

    #[test]
    fn spectral_stencils_keep_invariants_away_from_zero(seed in 0u64..10_000, t in 0.01f64..2.0) {
        let cache = circle_fourier();
        let f = band_function(&cache, seed, 5);
        let pos = f.mapv(|v| v * v);
        let pt = cache.apply_semigroup(&pos, t).unwrap();
        prop_assert!(pt.iter().all(|&v| v >= -1e-10));
        prop_assert!(sup(&pt) <= sup(&pos) + 1e-10);
    }
}

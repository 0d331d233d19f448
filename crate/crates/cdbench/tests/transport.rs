mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use cdbench::model_space::{build_model_space, ModelSpace, Potential, SpaceSpec, Stencil};
use cdbench::transport::*;
use common::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(spec: SpaceSpec) -> Arc<ModelSpace> {
    Arc::new(build_model_space(&spec).unwrap())
}

fn unit_interval(n: usize) -> Arc<ModelSpace> {
    space(SpaceSpec::interval(n, 0.0, 1.0, Potential::Zero))
}

/// Random probability measure on `k` random nodes.
fn random_measure(space: &Arc<ModelSpace>, rng: &mut ChaCha8Rng, k: usize) -> DiscreteMeasure {
    let mut m = Array1::zeros(space.len());
    for _ in 0..k {
        let i = rng.random_range(0..space.len());
        m[i] += rng.random_range(0.05..1.0);
    }
    DiscreteMeasure::new(space.clone(), m).unwrap().normalized().unwrap()
}

fn exact(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, p: f64, cost: TransportCost) -> (f64, TransportPlan) {
    let c = cost_matrix(&nu1.space, cost).unwrap();
    wasserstein_exact(c.view(), nu1, nu2, p).unwrap()
}

#[test]
fn rho_tilde_examples_and_errors() {
    assert!((rho_tilde(-1.0, 2.0, PI).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(rho_tilde(0.0, 3.0, 0.7).unwrap(), 0.7);
    assert!((rho_tilde(1.0, 2.0, 1.0).unwrap() - 2.0 * 0.5f64.sinh()).abs() < 1e-15);
    assert!((rho_tilde(1.0, 2.0, 1.0).unwrap() - 1.042_190_610_987_494_8).abs() < 1e-12);
    assert_eq!(rho_tilde(-1.0, 2.0, 0.0).unwrap(), 0.0);
    assert!(rho_tilde(-1.0, 2.0, PI + 1e-6).is_err());
    assert!(rho_tilde(-1.0, 1.0, 0.5).is_err());
    assert!(rho_tilde(0.5, 0.5, 0.5).is_err());
}

#[test]
fn rho_tilde_is_continuous_at_flat_curvature() {
    for r in [1e-3, 0.1, 1.0, 3.0] {
        for k in [1e-9, -1e-9] {
            let v = rho_tilde(k, 2.0, r).unwrap();
            assert!((v - r).abs() <= 1e-8 * r, "K={k}, r={r}: {v}");
        }
        // Just across the Taylor switch the branches agree.
        let k = 1e-8 / (r * r);
        let below = rho_tilde(k * 0.999_999, 2.0, r).unwrap();
        let above = rho_tilde(k * 1.000_001, 2.0, r).unwrap();
        assert!((below - above).abs() <= 1e-13 * r);
    }
}

#[test]
fn one_dimensional_trivial_cases() {
    for sp in [space(SpaceSpec::circle(32)), unit_interval(32)] {
        let a = DiscreteMeasure::dirac(sp.clone(), 3).unwrap();
        let b = DiscreteMeasure::dirac(sp.clone(), 20).unwrap();
        for p in [1.0, 2.0] {
            assert_eq!(wasserstein_1d(&a, &a, p, TransportCost::Rho).unwrap(), 0.0);
            let w = wasserstein_1d(&a, &b, p, TransportCost::Rho).unwrap();
            assert!((w - sp.dist(3, 20)).abs() < 1e-14, "{w} vs {}", sp.dist(3, 20));
        }
    }
    let sphere = space(SpaceSpec::sphere(0));
    let mu = DiscreteMeasure::reference(sphere);
    assert!(wasserstein_1d(&mu, &mu, 1.0, TransportCost::Rho).is_err());
    let sp = unit_interval(16);
    let half = DiscreteMeasure::new(sp.clone(), Array1::from_elem(16, 0.5 / 16.0)).unwrap();
    assert!(wasserstein_1d(&half, &half, 1.0, TransportCost::Rho).is_err());
    assert!(wasserstein_1d(&half.normalized().unwrap(), &half.normalized().unwrap(), 0.5, TransportCost::Rho).is_err());
}

#[test]
fn interval_quantile_integral() {
    // Uniform on [0,1] against uniform on [0,1/2], p = 2: 1/(2√3).
    let want = 1.0 / (2.0 * 3f64.sqrt());
    let n = 4096;
    let sp = unit_interval(n);
    let u = DiscreteMeasure::reference(sp.clone());
    let mut m = Array1::zeros(n);
    m.slice_mut(ndarray::s![..n / 2]).fill(2.0 / n as f64);
    let v = DiscreteMeasure::new(sp, m).unwrap();
    let w = wasserstein_1d(&u, &v, 2.0, TransportCost::Rho).unwrap();
    assert!((w - want).abs() < 1.0 / n as f64, "{w} vs {want}");

    // Same instance on a coarser grid through the exact solver.
    let n = 64;
    let sp = unit_interval(n);
    let u = DiscreteMeasure::reference(sp.clone());
    let mut m = Array1::zeros(n);
    m.slice_mut(ndarray::s![..n / 2]).fill(2.0 / n as f64);
    let v = DiscreteMeasure::new(sp, m).unwrap();
    let fast = wasserstein_1d(&u, &v, 2.0, TransportCost::Rho).unwrap();
    let (slow, _) = exact(&u, &v, 2.0, TransportCost::Rho);
    assert!((fast - slow).abs() <= 1e-10 * slow);
}

#[test]
fn circle_shift_is_found() {
    // Two uniform-ish measures rotated by a quarter turn.
    let n = 64;
    let sp = space(SpaceSpec::circle(n));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
    let a = Array1::from_iter(base.iter().copied());
    let b = Array1::from_iter((0..n).map(|i| base[(i + n - n / 4) % n]));
    let a = DiscreteMeasure::new(sp.clone(), a).unwrap().normalized().unwrap();
    let b = DiscreteMeasure::new(sp.clone(), b).unwrap().normalized().unwrap();
    for p in [1.0, 2.0] {
        let w = wasserstein_1d(&a, &b, p, TransportCost::Rho).unwrap();
        let (e, _) = exact(&a, &b, p, TransportCost::Rho);
        assert!((w - e).abs() <= 1e-8 * e, "p={p}: {w} vs {e}");
        assert!(w <= PI / 2.0 + 1e-12);
    }
}

#[test]
fn exact_solver_examples() {
    let sp = space(SpaceSpec::sphere(1));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nu = random_measure(&sp, &mut rng, 20);
    let (w, plan) = exact(&nu, &nu, 1.0, TransportCost::Rho);
    assert!(w.abs() < 1e-12);
    assert!(plan.entries.iter().all(|&(i, j, _)| i == j));

    // Forced plan: (½, ½) on {A, B} against δ_A.
    let (a, b) = (0, 5);
    let mut m = Array1::zeros(sp.len());
    m[a] = 0.5;
    m[b] = 0.5;
    let nu1 = DiscreteMeasure::new(sp.clone(), m).unwrap();
    let nu2 = DiscreteMeasure::dirac(sp.clone(), a).unwrap();
    let (w, _) = exact(&nu1, &nu2, 1.0, TransportCost::Rho);
    assert!((w - 0.5 * sp.dist(b, a)).abs() < 1e-15);

    // Infeasible totals and oversized supports.
    let c = cost_matrix(&sp, TransportCost::Rho).unwrap();
    let light = DiscreteMeasure::new(sp.clone(), &nu.masses * 0.9).unwrap();
    assert!(wasserstein_exact(c.view(), &nu, &light, 1.0).is_err());
    let big = space(SpaceSpec::sphere(3));
    let mu = DiscreteMeasure::reference(big.clone());
    let cb = cost_matrix(&big, TransportCost::Rho).unwrap();
    assert!(matches!(wasserstein_exact(cb.view(), &mu, &mu, 1.0), Err(cdbench::BenchError::SupportCap { .. })));
    let (trimmed, removed) = mu.top_mass(MAX_SUPPORT).unwrap();
    assert_eq!(trimmed.support().len(), MAX_SUPPORT);
    assert!((trimmed.total - 1.0).abs() < 1e-12 && removed > 0.0);
    let (w, _) = wasserstein_exact(cb.view(), &mu.top_mass(MAX_SUPPORT).unwrap().0, &trimmed, 1.0).unwrap();
    assert!(w.abs() < 1e-12);
    assert!(subsample_slack(removed, PI, 1.0) > 0.0);
}

#[test]
fn exact_solver_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..12 {
        let m = 2 + case % 3;
        let n = 2 + (case / 3) % 3;
        let mut a: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        a.iter_mut().for_each(|x| *x /= sa);
        b.iter_mut().for_each(|x| *x /= sb);
        let costs = Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..3.0));
        // Embed as measures on a space with m + n nodes, sources first.
        let sp = unit_interval(16);
        let mut full = Array2::zeros((16, 16));
        for i in 0..m {
            for j in 0..n {
                full[[i, m + j]] = costs[[i, j]];
                full[[m + j, i]] = costs[[i, j]];
            }
        }
        let mut ma = Array1::zeros(16);
        let mut mb = Array1::zeros(16);
        for i in 0..m {
            ma[i] = a[i];
        }
        for j in 0..n {
            mb[m + j] = b[j];
        }
        let nu1 = DiscreteMeasure::new(sp.clone(), ma).unwrap();
        let nu2 = DiscreteMeasure::new(sp, mb).unwrap();
        for p in [1.0, 2.0] {
            let brute = transport_bruteforce(costs.view(), &a, &b, p).unwrap();
            let (w, plan) = wasserstein_exact(full.view(), &nu1, &nu2, p).unwrap();
            assert!((w.powf(p) - brute).abs() < 1e-10, "case {case}: {} vs {brute}", w.powf(p));
            assert!((plan.cost - brute).abs() < 1e-10);
        }
    }
    assert!(transport_bruteforce(Array2::zeros((5, 4)).view(), &[0.2; 5], &[0.25; 4], 1.0).is_err());
}

#[test]
fn plans_reproduce_marginals_and_dump() {
    let sp = space(SpaceSpec::sphere(2));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let nu1 = random_measure(&sp, &mut rng, 60);
    let nu2 = random_measure(&sp, &mut rng, 90);
    let (_, plan) = exact(&nu1, &nu2, 2.0, TransportCost::RhoTilde { k: -1.0, n: 2.0 });
    let (rows, cols) = plan.marginals(sp.len());
    assert!(sup(&(&rows - &nu1.masses)) <= 1e-9);
    assert!(sup(&(&cols - &nu2.masses)) <= 1e-9);
    assert!(plan.entries.iter().all(|e| e.2 >= 0.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.csv");
    plan.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), plan.entries.len() + 1);
    assert_eq!(text.lines().next(), Some("i,j,mass"));
}

#[test]
fn relative_entropy_examples() {
    let sp = space(SpaceSpec::circle(8));
    let mu = DiscreteMeasure::reference(sp.clone());
    assert_eq!(relative_entropy(&mu, &mu).unwrap(), 0.0);
    let mut m = Array1::zeros(8);
    m[0] = 0.5;
    m[1] = 0.5;
    let half = DiscreteMeasure::new(sp.clone(), m).unwrap();
    assert!((relative_entropy(&half, &mu).unwrap() - 4f64.ln()).abs() < 1e-15);
    assert!(relative_entropy(&mu, &half).is_err());

    // Two-point: ν = (1, 0), μ = (½, ½) on a space with two nodes of mass ½.
    let mut a = Array1::zeros(8);
    a[0] = 1.0;
    let mut b = Array1::zeros(8);
    b[0] = 0.5;
    b[1] = 0.5;
    let nu = DiscreteMeasure::new(sp.clone(), a).unwrap();
    let mu2 = DiscreteMeasure::new(sp.clone(), b).unwrap();
    assert!((relative_entropy(&nu, &mu2).unwrap() - 2f64.ln()).abs() < 1e-15);

    // ν = f²μ gives μ(f² log f²).
    let cache = circle_fourier();
    let space = cache.gen.space.clone();
    let f = grid(&cache, |p| 1.0 + 0.4 * p[0].sin());
    let f2 = f.mapv(|v| v * v);
    let z = space.integrate(&f2);
    let f2 = f2 / z;
    let nu = DiscreteMeasure::from_density(space.clone(), &f2).unwrap();
    let direct = space.integrate(&f2.mapv(|v| v * v.ln()));
    let via = relative_entropy(&nu, &DiscreteMeasure::reference(space)).unwrap();
    assert!((direct - via).abs() < 1e-12);
}

#[test]
fn fisher_information_examples() {
    let cache = circle_central();
    let gen = &cache.gen;
    let c = Array1::from_elem(gen.len(), 3.0);
    assert!(fisher_information(gen, &c).unwrap().abs() < 1e-12);
    let cos = grid(&cache, |p| p[0].cos());
    let i = fisher_information(gen, &cos).unwrap();
    let h = gen.space.h;
    assert!((i - PI).abs() <= h * h, "{i}");
    let i3 = fisher_information(gen, &(&cos * 2.5)).unwrap();
    assert!((i3 - 6.25 * i).abs() <= 1e-12 * i3);

    let fourier = build(SpaceSpec::circle(64).with_stencil(Stencil::Fourier));
    let cos = grid(&fourier, |p| p[0].cos());
    assert!((fisher_information(&fourier.gen, &cos).unwrap() - PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn one_dimensional_solver_agrees_with_exact(seed in 0u64..1_000_000, circle in any::<bool>(), p2 in any::<bool>(), tilde in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = if circle { space(SpaceSpec::circle(48)) } else { space(SpaceSpec::interval(48, -1.0, 1.0, Potential::Zero)) };
        let p = if p2 { 2.0 } else { 1.0 };
        let cost = if tilde { TransportCost::RhoTilde { k: 0.5, n: 3.0 } } else { TransportCost::Rho };
        let k1 = rng.random_range(1..30);
        let k2 = rng.random_range(1..30);
        let a = random_measure(&sp, &mut rng, k1);
        let b = random_measure(&sp, &mut rng, k2);
        let fast = wasserstein_1d(&a, &b, p, cost).unwrap();
        let (slow, _) = exact(&a, &b, p, cost);
        prop_assert!((fast - slow).abs() <= 1e-8 * slow.max(1e-12), "{} vs {}", fast, slow);
    }

    #[test]
    fn exact_distance_is_a_metric_and_monotone_in_p(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = space(SpaceSpec::sphere(1));
        let c = cost_matrix(&sp, TransportCost::Rho).unwrap();
        let ms: Vec<DiscreteMeasure> = (0..3).map(|_| {
            let k = rng.random_range(1..20);
            random_measure(&sp, &mut rng, k)
        }).collect();
        let w = |a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64| wasserstein_exact(c.view(), a, b, p).unwrap().0;
        for p in [1.0, 2.0] {
            prop_assert!(w(&ms[0], &ms[1], p) <= w(&ms[0], &ms[2], p) + w(&ms[2], &ms[1], p) + 1e-9);
            prop_assert!((w(&ms[0], &ms[1], p) - w(&ms[1], &ms[0], p)).abs() <= 1e-9);
        }
        prop_assert!(w(&ms[0], &ms[1], 1.0) <= w(&ms[0], &ms[1], 2.0) + 1e-9);
        prop_assert!(w(&ms[0], &ms[1], 2.0) <= w(&ms[0], &ms[1], 3.0) + 1e-9);
    }

    #[test]
    fn rho_tilde_orders_against_rho(r in 0.0f64..3.0, k in 0.01f64..1.0, n in 1.5f64..6.0) {
        let neg = rho_tilde(-k * (n - 1.0).min(1.0), n, r.min(PI)).unwrap();
        prop_assert!(neg <= r.min(PI) + 1e-15);
        let pos = rho_tilde(k, n, r).unwrap();
        prop_assert!(pos >= r - 1e-15);
        let eps = 1e-3;
        prop_assert!(rho_tilde(k, n, r + eps).unwrap() > pos);
    }

    #[test]
    fn relative_entropy_vanishes_only_at_equality(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = space(SpaceSpec::circle(16));
        let mu = DiscreteMeasure::reference(sp.clone());
        let dens = Array1::from_iter((0..16).map(|_| rng.random_range(0.5..1.5)));
        let nu = DiscreteMeasure::from_density(sp, &dens).unwrap().normalized().unwrap();
        let h = relative_entropy(&nu, &mu).unwrap();
        prop_assert!(h > 1e-12);
    }
}

#[test]
fn evolve_rejects_non_positive_semigroups() {
    // Spectral truncation of a Dirac rings below zero on the collocation
    // stencil; the cotangent stencil is an M-matrix and stays nonnegative.
    let harmonic = build(SpaceSpec::sphere(2).normalized().with_stencil(Stencil::Harmonic { lmax: 4 }));
    let nu = DiscreteMeasure::dirac(harmonic.gen.space.clone(), 0).unwrap();
    assert!(matches!(nu.evolve(&harmonic, 0.05), Err(cdbench::BenchError::Precondition(_))));
    let cotangent = sphere_cotangent2();
    let nu = DiscreteMeasure::dirac(cotangent.gen.space.clone(), 0).unwrap();
    let out = nu.evolve(&cotangent, 0.05).unwrap();
    assert!(out.is_probability() && out.masses.iter().all(|&m| m >= 0.0));
}

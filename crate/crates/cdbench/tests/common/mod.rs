#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use cdbench::generator::{assemble_generator, Generator};
use cdbench::model_space::{build_model_space, Potential, SpaceSpec, Stencil};
use cdbench::semigroup::{spectral_decompose, SemigroupCache};
use ndarray::Array1;

pub fn build(spec: SpaceSpec) -> Arc<SemigroupCache> {
    let space = Arc::new(build_model_space(&spec).unwrap());
    let gen = Arc::new(assemble_generator(space).unwrap());
    Arc::new(spectral_decompose(gen).unwrap())
}

pub fn generator(spec: SpaceSpec) -> Generator {
    assemble_generator(Arc::new(build_model_space(&spec).unwrap())).unwrap()
}

pub fn ou_spec(n: usize) -> SpaceSpec {
    SpaceSpec::interval(n, -1.0, 1.0, Potential::Quadratic { coeff: 1.0 }).normalized()
}

macro_rules! shared {
    ($name:ident, $spec:expr) => {
        pub fn $name() -> Arc<SemigroupCache> {
            static CELL: OnceLock<Arc<SemigroupCache>> = OnceLock::new();
            CELL.get_or_init(|| build($spec)).clone()
        }
    };
}

shared!(circle_fourier, SpaceSpec::circle(256).normalized().with_stencil(Stencil::Fourier));
shared!(circle_central, SpaceSpec::circle(256).with_stencil(Stencil::Central));
shared!(ou400, ou_spec(400));
shared!(sphere_harmonic3, SpaceSpec::sphere(3).normalized().with_stencil(Stencil::Harmonic { lmax: 8 }));
shared!(sphere_harmonic4, SpaceSpec::sphere(4).normalized().with_stencil(Stencil::Harmonic { lmax: 20 }));
shared!(sphere_cotangent2, SpaceSpec::sphere(2).normalized());
shared!(sphere_cotangent3, SpaceSpec::sphere(3).normalized());

/// Grid function from a closure of the node coordinates.
pub fn grid(cache: &SemigroupCache, f: impl Fn([f64; 3]) -> f64) -> Array1<f64> {
    Array1::from_iter(cache.gen.space.coords.iter().map(|&p| f(p)))
}

pub fn sup(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Random combination of the eigenfunctions `1..=band` with standard normal
/// coefficients.
pub fn band_function(cache: &SemigroupCache, seed: u64, band: usize) -> Array1<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = Array1::zeros(cache.len());
    for k in 1..=band {
        let c: f64 = StandardNormal.sample(&mut rng);
        f = f + c * &cache.eigenfunction(k);
    }
    f
}

/// A node near the north pole and the node closest to angle `theta` from it
/// along a meridian.
pub fn sphere_pair(cache: &SemigroupCache, theta: f64) -> (usize, usize) {
    let space = &cache.gen.space;
    let x = space.nearest_node([0.0, 0.0, 1.0]);
    let p = space.coords[x];
    let (s, c) = theta.sin_cos();
    let y = space.nearest_node([s, 0.0, c * p[2].signum()]);
    (x, y)
}

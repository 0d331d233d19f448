//! Admissible test functions: random band-limited combinations of
//! eigenfunctions, plus curvature-extremal "jets" that make sharp or
//! inadmissible constants visible at short times.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::model_space::{ModelSpace, SpaceKind};
use crate::semigroup::SemigroupCache;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Sup-normalised combination as drawn.
    #[default]
    Raw,
    /// `exp(g)` for the sup-normalised draw `g`, so `e⁻¹ ≤ f ≤ e`.
    PositiveExp,
    /// The draw shifted so that its minimum is `delta`.
    PositiveFloor { delta: f64 },
    /// [`Transform::PositiveExp`] rescaled to `μ(f²) = 1`.
    NormalizedDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub seed: u64,
    /// Number of band-limited draws.
    pub count: usize,
    /// Draws combine the eigenfunctions `1..=band`.
    pub band: usize,
    /// Default transform for checks that take signed functions.
    #[serde(default)]
    pub transform: Transform,
    /// Number of extra curvature-extremal witnesses.
    #[serde(default)]
    pub jets: usize,
}

impl SamplerSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.count == 0 {
            return Err("sampler count must be at least 1".into());
        }
        if self.band == 0 {
            return Err("sampler band must be at least 1".into());
        }
        if let Transform::PositiveFloor { delta } = self.transform {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(format!("positive_floor needs delta > 0, got {delta}"));
            }
        }
        Ok(())
    }
}

/// A sampled grid function with a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub values: Array1<f64>,
}

fn sup_normalize(f: Array1<f64>) -> Result<Array1<f64>> {
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sup > 0.0) || !sup.is_finite() {
        return Err(BenchError::InvalidArgument("sampled function vanishes identically".into()));
    }
    Ok(f / sup)
}

/// Band-limited draws followed by jets, all sup-normalised.
///
/// Each function draws from its own ChaCha stream of `seed`, so a sample
/// does not depend on how many others are requested.
pub fn raw_functions(cache: &SemigroupCache, spec: &SamplerSpec, n: f64) -> Result<Vec<Sample>> {
    spec.validate().map_err(BenchError::InvalidArgument)?;
    if spec.band >= cache.len() {
        return Err(BenchError::InvalidArgument(format!(
            "band {} exceeds the {} available non-constant eigenfunctions",
            spec.band,
            cache.len() - 1
        )));
    }
    let mut out = Vec::with_capacity(spec.count + spec.jets);
    for i in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let coeffs: Vec<f64> = (0..spec.band).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut f = Array1::zeros(cache.len());
        for (k, c) in coeffs.iter().enumerate() {
            f.scaled_add(*c, &cache.eigenfunction(k + 1));
        }
        out.push(Sample { id: format!("band#{i}"), values: sup_normalize(f)? });
    }
    for i in 0..spec.jets {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream((1u64 << 32) + i as u64);
        let (id, f) = jet(&cache.gen.space, &mut rng, n, i);
        out.push(Sample { id, values: sup_normalize(f)? });
    }
    Ok(out)
}

/// A function whose 2-jet at a random point nearly saturates the CD
/// inequality for the given `n`.
///
/// In 1D, Γ₂ = f″² − V″f′² and Lf = f″ + V′f′, so with f′ = 1 the slack
/// `f″² − (Lf)²/n` is smallest at f″ = V′/(n−1), where it equals
/// `κ(x) = −V″ − V′²/(n−1)`. The base point is drawn among the interior
/// nodes whose κ lies within 10% of its range above the minimum, so the jet
/// probes the most curved part of the space. On the circle every function
/// is extremal for (0, 1); on the round sphere the first harmonics are.
fn jet(space: &ModelSpace, rng: &mut ChaCha8Rng, n: f64, i: usize) -> (String, Array1<f64>) {
    match space.kind {
        SpaceKind::Interval => {
            let len = space.len();
            let damp = if n.is_finite() && n > 1.0 { 1.0 / (n - 1.0) } else { 0.0 };
            let kappa: Vec<f64> = (2..len - 2)
                .map(|j| {
                    let v2 = (space.drift[j + 1] - space.drift[j - 1]) / (space.x(j + 1) - space.x(j - 1));
                    -v2 - damp * space.drift[j] * space.drift[j]
                })
                .collect();
            let (lo, hi) = kappa.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &k| (l.min(k), h.max(k)));
            let cut = lo + 0.1 * (hi - lo);
            let candidates: Vec<usize> = (2..len - 2).filter(|&j| kappa[j - 2] <= cut).collect();
            let node = candidates[rng.random_range(0..candidates.len())];
            let x0 = space.x(node) + space.h * rng.random_range(-0.5..0.5);
            let curv = damp * space.drift[node];
            let f = Array1::from_iter((0..space.len()).map(|j| {
                let u = space.x(j) - x0;
                u + 0.5 * curv * u * u
            }));
            (format!("jet#{i}(x0={x0:.6})"), f)
        }
        SpaceKind::Circle => {
            let th0 = rng.random_range(0.0..std::f64::consts::TAU);
            let f = Array1::from_iter((0..space.len()).map(|j| (space.x(j) - th0).sin()));
            (format!("jet#{i}(theta0={th0:.6})"), f)
        }
        SpaceKind::Sphere2 => {
            let mut v = [0.0; 3];
            loop {
                for c in v.iter_mut() {
                    *c = StandardNormal.sample(rng);
                }
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    v.iter_mut().for_each(|c| *c /= norm);
                    break;
                }
            }
            let f = Array1::from_iter(space.coords.iter().map(|p| p[0] * v[0] + p[1] * v[1] + p[2] * v[2]));
            (format!("jet#{i}(axis={:.4},{:.4},{:.4})", v[0], v[1], v[2]), f)
        }
    }
}

/// Applies `transform` to sup-normalised draws.
pub fn apply_transform(space: &ModelSpace, raw: &[Sample], transform: Transform) -> Result<Vec<Sample>> {
    raw.iter()
        .map(|s| {
            let values = match transform {
                Transform::Raw => s.values.clone(),
                Transform::PositiveExp => s.values.mapv(f64::exp),
                Transform::PositiveFloor { delta } => {
                    let min = s.values.iter().copied().fold(f64::INFINITY, f64::min);
                    s.values.mapv(|v| v - min + delta)
                }
                Transform::NormalizedDensity => {
                    let f = s.values.mapv(f64::exp);
                    let mass = space.integrate(&(&f * &f));
                    f / mass.sqrt()
                }
            };
            Ok(Sample { id: s.id.clone(), values })
        })
        .collect()
}

/// Draws the sampler's functions and applies `transform`.
pub fn sample_functions(cache: &SemigroupCache, spec: &SamplerSpec, transform: Transform, n: f64) -> Result<Vec<Sample>> {
    let raw = raw_functions(cache, spec, n)?;
    apply_transform(&cache.gen.space, &raw, transform)
}

//! Model geometries: the weighted circle, the weighted interval with a
//! reflecting boundary, and the unit 2-sphere.
//!
//! A [`ModelSpace`] carries everything a generator needs to know about the
//! geometry: node coordinates, quadrature weights of the reference measure
//! μ = e^V dx (the weights already include e^V), the potential V and its
//! drift Z = ∇V, geodesic distances, the mesh scale h and the diameter.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Largest node count accepted for one-dimensional spaces.
pub const MAX_NODES_1D: usize = 4096;
/// Largest icosphere refinement level (10·4⁵ + 2 = 10242 nodes).
pub const MAX_SPHERE_LEVEL: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Circle,
    Interval,
    Sphere2,
}

/// Potential V defining the reference measure e^V dx and the drift ∇V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Potential {
    #[default]
    Zero,
    /// V(x) = −coeff·x²/2 (Ornstein–Uhlenbeck type confinement).
    Quadratic { coeff: f64 },
    /// Node values of V; `derivative` (V′ at the nodes) is needed for drift terms.
    Table {
        values: Vec<f64>,
        #[serde(default)]
        derivative: Option<Vec<f64>>,
    },
}

impl Potential {
    pub fn is_analytic(&self) -> bool {
        !matches!(self, Potential::Table { .. })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Quadratic { coeff } => *coeff == 0.0,
            Potential::Table { values, .. } => values.iter().all(|&v| v == values[0]),
        }
    }

    /// V(x); `None` for tabulated potentials.
    pub fn value(&self, x: f64) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::Quadratic { coeff } => Some(-0.5 * coeff * x * x),
            Potential::Table { .. } => None,
        }
    }

    /// V′(x); `None` for tabulated potentials.
    pub fn first(&self, x: f64) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::Quadratic { coeff } => Some(-coeff * x),
            Potential::Table { .. } => None,
        }
    }

    /// V″(x); `None` for tabulated potentials.
    pub fn second(&self, _x: f64) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::Quadratic { coeff } => Some(-coeff),
            Potential::Table { .. } => None,
        }
    }
}

/// Discretisation scheme shared by the space (quadrature) and the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Stencil {
    /// Second-order central differences in divergence form (circle, interval).
    Central,
    /// Spectrally exact Fourier differentiation matrix (driftless circle).
    Fourier,
    /// Cotangent-weight Laplacian over dual areas (sphere).
    Cotangent,
    /// Spherical-harmonic collocation up to degree `lmax` with
    /// moment-corrected quadrature weights (sphere).
    Harmonic { lmax: usize },
}

/// Construction parameters of a model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    /// Node count for circle and interval.
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Icosphere refinement level for the sphere.
    #[serde(default)]
    pub level: Option<u32>,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub normalize_measure: bool,
    #[serde(default)]
    pub stencil: Option<Stencil>,
}

fn default_a() -> f64 {
    -1.0
}
fn default_b() -> f64 {
    1.0
}

impl SpaceSpec {
    pub fn circle(nodes: usize) -> Self {
        SpaceSpec {
            kind: SpaceKind::Circle,
            nodes: Some(nodes),
            level: None,
            a: default_a(),
            b: default_b(),
            potential: Potential::Zero,
            normalize_measure: false,
            stencil: None,
        }
    }

    pub fn interval(nodes: usize, a: f64, b: f64, potential: Potential) -> Self {
        SpaceSpec {
            kind: SpaceKind::Interval,
            nodes: Some(nodes),
            level: None,
            a,
            b,
            potential,
            normalize_measure: false,
            stencil: None,
        }
    }

    pub fn sphere(level: u32) -> Self {
        SpaceSpec {
            kind: SpaceKind::Sphere2,
            nodes: None,
            level: Some(level),
            a: default_a(),
            b: default_b(),
            potential: Potential::Zero,
            normalize_measure: false,
            stencil: None,
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize_measure = true;
        self
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = Some(stencil);
        self
    }

    /// Effective stencil, falling back to the per-kind default.
    pub fn stencil(&self) -> Stencil {
        self.stencil.unwrap_or(match self.kind {
            SpaceKind::Circle | SpaceKind::Interval => Stencil::Central,
            SpaceKind::Sphere2 => Stencil::Cotangent,
        })
    }

    /// Number of nodes the spec will produce, without building anything.
    pub fn node_count(&self) -> Result<usize> {
        match self.kind {
            SpaceKind::Circle | SpaceKind::Interval => self
                .nodes
                .ok_or_else(|| BenchError::InvalidSpace("`nodes` is required for 1D spaces".into())),
            SpaceKind::Sphere2 => {
                let level = self
                    .level
                    .ok_or_else(|| BenchError::InvalidSpace("`level` is required for the sphere".into()))?;
                Ok(10 * 4usize.pow(level.min(16)) + 2)
            }
        }
    }

    /// Checks every invariant that can be checked without building the space.
    pub fn validate(&self) -> Result<()> {
        let stencil = self.stencil();
        match self.kind {
            SpaceKind::Circle | SpaceKind::Interval => {
                let n = self.node_count()?;
                if n < 8 {
                    return Err(BenchError::InvalidSpace(format!("node_count {n} < 8")));
                }
                if n > MAX_NODES_1D {
                    return Err(BenchError::NodeCap { requested: n, cap: MAX_NODES_1D });
                }
                if !matches!(stencil, Stencil::Central | Stencil::Fourier) {
                    return Err(BenchError::InvalidSpace(format!("stencil {stencil:?} is not available in 1D")));
                }
                if self.kind == SpaceKind::Interval && stencil == Stencil::Fourier {
                    return Err(BenchError::InvalidSpace("the Fourier stencil requires a periodic space".into()));
                }
            }
            SpaceKind::Sphere2 => {
                let level = self.level.unwrap_or(0);
                if self.level.is_none() {
                    return Err(BenchError::InvalidSpace("`level` is required for the sphere".into()));
                }
                if level > MAX_SPHERE_LEVEL {
                    return Err(BenchError::NodeCap {
                        requested: 10 * 4usize.pow(level.min(16)) + 2,
                        cap: 10 * 4usize.pow(MAX_SPHERE_LEVEL) + 2,
                    });
                }
                if !matches!(stencil, Stencil::Cotangent | Stencil::Harmonic { .. }) {
                    return Err(BenchError::InvalidSpace(format!("stencil {stencil:?} is not available on the sphere")));
                }
                if !self.potential.is_zero() {
                    return Err(BenchError::InvalidSpace("only the zero potential is supported on the sphere".into()));
                }
            }
        }
        if self.kind == SpaceKind::Interval && !(self.a < self.b && self.a.is_finite() && self.b.is_finite()) {
            return Err(BenchError::InvalidSpace(format!("interval endpoints must satisfy a < b (got {}, {})", self.a, self.b)));
        }
        if self.kind == SpaceKind::Circle && matches!(self.potential, Potential::Quadratic { coeff } if coeff != 0.0) {
            return Err(BenchError::InvalidSpace("a quadratic potential is not periodic".into()));
        }
        if stencil == Stencil::Fourier && !self.potential.is_zero() {
            return Err(BenchError::InvalidSpace("the Fourier stencil supports only V = 0".into()));
        }
        if let Potential::Table { values, derivative } = &self.potential {
            let n = self.node_count()?;
            if values.len() != n {
                return Err(BenchError::ShapeMismatch { expected: n, got: values.len() });
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(BenchError::NonFinitePotential(i));
            }
            if let Some(d) = derivative {
                if d.len() != n {
                    return Err(BenchError::ShapeMismatch { expected: n, got: d.len() });
                }
            }
        }
        if let Stencil::Harmonic { lmax } = stencil {
            let n = self.node_count()?;
            if (2 * lmax + 1).pow(2) > n {
                return Err(BenchError::InvalidSpace(format!(
                    "harmonic degree {lmax} needs (2·lmax+1)² = {} ≤ node count {n}",
                    (2 * lmax + 1).pow(2)
                )));
            }
        }
        Ok(())
    }
}

/// A built, immutable model geometry.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    pub spec: SpaceSpec,
    pub kind: SpaceKind,
    /// Intrinsic dimension (1 or 2).
    pub d: usize,
    /// Node coordinates: angle θ (circle), abscissa x (interval) in slot 0,
    /// or the unit vector (sphere).
    pub coords: Vec<[f64; 3]>,
    /// Quadrature weights of μ, e^V already included, all strictly positive.
    pub weights: Array1<f64>,
    /// Potential values V_i.
    pub potential: Array1<f64>,
    /// Drift Z_i = V′(x_i) in the local coordinate (zero on the sphere).
    pub drift: Array1<f64>,
    pub h: f64,
    pub total_mass: f64,
    /// Factor converting stored weights back to volume (pre-normalisation) weights.
    pub mass_scale: f64,
    pub diameter: f64,
    /// Icosphere faces (sphere only).
    pub triangles: Vec<[usize; 3]>,
}

/// Builds the model space described by `spec`.
pub fn build_model_space(spec: &SpaceSpec) -> Result<ModelSpace> {
    spec.validate()?;
    let mut space = match spec.kind {
        SpaceKind::Circle => build_circle(spec)?,
        SpaceKind::Interval => build_interval(spec)?,
        SpaceKind::Sphere2 => build_sphere(spec)?,
    };
    if let Some(i) = space.potential.iter().position(|v| !v.is_finite()) {
        return Err(BenchError::NonFinitePotential(i));
    }
    if let Stencil::Harmonic { lmax } = spec.stencil() {
        space.weights = crate::generator::harmonic::corrected_weights(&space.coords, &space.weights, lmax)?;
    }
    if let Some(i) = space.weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(BenchError::InvalidSpace(format!("non-positive quadrature weight at node {i}")));
    }
    if spec.normalize_measure {
        let total: f64 = space.weights.sum();
        space.weights.mapv_inplace(|w| w / total);
        space.mass_scale = total;
    }
    space.total_mass = space.weights.sum();
    Ok(space)
}

fn table_derivative(spec: &SpaceSpec) -> Option<Vec<f64>> {
    match &spec.potential {
        Potential::Table { derivative, .. } => derivative.clone(),
        _ => None,
    }
}

fn build_circle(spec: &SpaceSpec) -> Result<ModelSpace> {
    let n = spec.node_count()?;
    let h = 2.0 * PI / n as f64;
    let coords: Vec<[f64; 3]> = (0..n).map(|i| [i as f64 * h, 0.0, 0.0]).collect();
    let potential: Array1<f64> = match &spec.potential {
        Potential::Table { values, .. } => Array1::from(values.clone()),
        _ => Array1::zeros(n),
    };
    let drift = match table_derivative(spec) {
        Some(d) => Array1::from(d),
        None => Array1::zeros(n),
    };
    let weights = potential.mapv(|v| h * v.exp());
    Ok(ModelSpace {
        spec: spec.clone(),
        kind: SpaceKind::Circle,
        d: 1,
        coords,
        total_mass: weights.sum(),
        weights,
        potential,
        drift,
        h,
        mass_scale: 1.0,
        diameter: PI,
        triangles: Vec::new(),
    })
}

/// Eight-point Gauss–Legendre rule on [−1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn build_interval(spec: &SpaceSpec) -> Result<ModelSpace> {
    let n = spec.node_count()?;
    let (a, b) = (spec.a, spec.b);
    let h = (b - a) / n as f64;
    // Cell-centred nodes: the reflecting boundary sits on cell faces.
    let xs: Vec<f64> = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
    let coords = xs.iter().map(|&x| [x, 0.0, 0.0]).collect();
    let (potential, drift, weights) = match &spec.potential {
        Potential::Table { values, derivative } => {
            let v = Array1::from(values.clone());
            let z = derivative.clone().map(Array1::from).unwrap_or_else(|| Array1::zeros(n));
            let w = v.mapv(|v| h * v.exp());
            (v, z, w)
        }
        pot => {
            let v = Array1::from_iter(xs.iter().map(|&x| pot.value(x).unwrap()));
            let z = Array1::from_iter(xs.iter().map(|&x| pot.first(x).unwrap()));
            // Exact cell integrals of e^V so that Σw reproduces ∫e^V to round-off.
            let w = Array1::from_iter(xs.iter().map(|&x| {
                GL8.iter()
                    .map(|&(g, gw)| 0.5 * h * gw * pot.value(x + 0.5 * h * g).unwrap().exp())
                    .sum::<f64>()
            }));
            (v, z, w)
        }
    };
    Ok(ModelSpace {
        spec: spec.clone(),
        kind: SpaceKind::Interval,
        d: 1,
        coords,
        total_mass: weights.sum(),
        weights,
        potential,
        drift,
        h,
        mass_scale: 1.0,
        diameter: b - a,
        triangles: Vec::new(),
    })
}

fn build_sphere(spec: &SpaceSpec) -> Result<ModelSpace> {
    let level = spec.level.unwrap_or(0);
    let (verts, tris) = icosphere(level);
    let n = verts.len();
    let mut weights = Array1::<f64>::zeros(n);
    let mut edge_sum = 0.0;
    for t in &tris {
        let area = spherical_triangle_area(verts[t[0]], verts[t[1]], verts[t[2]]);
        for &i in t {
            weights[i] += area / 3.0;
        }
        for k in 0..3 {
            edge_sum += sphere_distance(verts[t[k]], verts[t[(k + 1) % 3]]);
        }
    }
    let h = edge_sum / (3 * tris.len()) as f64;
    Ok(ModelSpace {
        spec: spec.clone(),
        kind: SpaceKind::Sphere2,
        d: 2,
        coords: verts,
        total_mass: weights.sum(),
        weights,
        potential: Array1::zeros(n),
        drift: Array1::zeros(n),
        h,
        mass_scale: 1.0,
        diameter: PI,
        triangles: tris,
    })
}

/// Icosahedron refined `level` times by edge-midpoint subdivision, vertices
/// projected to the unit sphere. Node count is 10·4^level + 2.
pub fn icosphere(level: u32) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, p, 0.0], [1.0, p, 0.0], [-1.0, -p, 0.0], [1.0, -p, 0.0],
        [0.0, -1.0, p], [0.0, 1.0, p], [0.0, -1.0, -p], [0.0, 1.0, -p],
        [p, 0.0, -1.0], [p, 0.0, 1.0], [-p, 0.0, -1.0], [-p, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = raw.iter().map(|&v| normalize(v)).collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |i: usize, j: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (i.min(j), i.max(j));
            *cache.entry(key).or_insert_with(|| {
                let (a, b) = (verts[i], verts[j]);
                verts.push(normalize([a[0] + b[0], a[1] + b[1], a[2] + b[2]]));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (verts, tris)
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Great-circle distance between unit vectors, stable at both 0 and π.
pub fn sphere_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = cross3(a, b);
    dot3(c, c).sqrt().atan2(dot3(a, b))
}

/// Area of the geodesic triangle with unit-vector corners
/// (Van Oosterom–Strackee solid-angle formula).
pub fn spherical_triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let num = dot3(a, cross3(b, c)).abs();
    let den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    2.0 * num.atan2(den)
}

impl ModelSpace {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Scalar coordinate of a 1D node (angle or abscissa).
    pub fn x(&self, i: usize) -> f64 {
        self.coords[i][0]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(BenchError::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }

    /// Geodesic distance between nodes `i` and `j`.
    pub fn geodesic_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.dist(i, j))
    }

    /// Unchecked geodesic distance (indices must be valid).
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            SpaceKind::Circle => circle_distance(self.coords[i][0], self.coords[j][0]),
            SpaceKind::Interval => (self.coords[i][0] - self.coords[j][0]).abs(),
            SpaceKind::Sphere2 => sphere_distance(self.coords[i], self.coords[j]),
        }
    }

    /// Node closest to a point given in the space's own coordinates
    /// (angle/abscissa for 1D, unit vector for the sphere).
    pub fn nearest_node(&self, p: [f64; 3]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.coords.iter().enumerate() {
            let d = match self.kind {
                SpaceKind::Circle => circle_distance(c[0], p[0]),
                SpaceKind::Interval => (c[0] - p[0]).abs(),
                SpaceKind::Sphere2 => sphere_distance(*c, normalize(p)),
            };
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Volume weight of node `i` (the stored weight before normalisation).
    pub fn volume_weight(&self, i: usize) -> f64 {
        self.weights[i] * self.mass_scale
    }

    /// Integral Σ w_i f_i against the stored measure.
    pub fn integrate(&self, f: &Array1<f64>) -> f64 {
        self.weights.iter().zip(f.iter()).map(|(w, v)| w * v).sum()
    }
}

/// Arc distance on the unit circle between two angles.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * PI);
    d.min(2.0 * PI - d)
}

//! Almost-periodic zero-order coefficients and their torus hulls.
//!
//! A field has the form
//!
//! ```text
//! a0(t, x) = g0(x) + Σⱼ sin(2π ωⱼ t) gⱼ(x),   j = 1..m,  m ≤ 3.
//! ```
//!
//! Its hull is the torus of phases `θ ∈ [0,1)^m`; the hull element with
//! phase `θ` is `(t, x) ↦ g0(x) + Σⱼ sin(2π(θⱼ + ωⱼ t)) gⱼ(x)` and the
//! translation flow rotates the phase by `t·ω`.

use crate::mesh::SpatialMesh;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Built-in spatial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Const { value: f64 },
    /// `amplitude · cos(k · x_axis)`.
    CosKx { amplitude: f64, k: f64, axis: usize },
    /// `amplitude · exp(-|x - center|² / (2 width²))`.
    GaussianBump {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Const { value }
    }

    pub fn cos_kx(amplitude: f64, k: f64) -> Self {
        Profile::CosKx {
            amplitude,
            k,
            axis: 0,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            Profile::Const { value } => value,
            Profile::CosKx { amplitude, k, axis } => amplitude * (k * p[axis.min(1)]).cos(),
            Profile::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn sample(&self, mesh: &SpatialMesh) -> Vec<f64> {
        mesh.sample(|p| self.eval(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Constant,
    Periodic,
    QuasiPeriodic,
}

impl FieldKind {
    fn mode_range(self) -> std::ops::RangeInclusive<usize> {
        match self {
            FieldKind::Constant => 0..=0,
            FieldKind::Periodic => 1..=1,
            FieldKind::QuasiPeriodic => 2..=3,
        }
    }
}

/// A point of the hull: torus phase `θ ∈ [0,1)^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint {
    phase: Vec<f64>,
}

impl HullPoint {
    /// Phase coordinates are reduced into `[0, 1)`.
    pub fn new(phase: Vec<f64>) -> Self {
        Self {
            phase: phase.into_iter().map(wrap).collect(),
        }
    }

    /// The reference coefficient itself (`θ = 0`).
    pub fn origin(modes: usize) -> Self {
        Self {
            phase: vec![0.0; modes],
        }
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }
}

fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid may round up to exactly 1 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Uniform grid for one frequency, Kronecker low-discrepancy points
    /// for several; always starts at `θ = 0`.
    Grid,
    /// Independent uniform phases from a seeded stream.
    Random,
}

#[derive(Debug, Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    offset: Vec<f64>,
    modes: Vec<Vec<f64>>,
    frequencies: Vec<f64>,
    bound: f64,
}

impl CoefficientField {
    /// Field from node samples of `g0` and `g1..gm` with frequencies
    /// `ω1..ωm` (cycles per unit time).
    pub fn new(
        kind: FieldKind,
        offset: Vec<f64>,
        modes: Vec<Vec<f64>>,
        frequencies: Vec<f64>,
    ) -> Result<Self> {
        if modes.len() != frequencies.len() {
            return Err(Error::invalid(
                "coefficient field",
                format!(
                    "{} profiles for {} frequencies",
                    modes.len(),
                    frequencies.len()
                ),
            ));
        }
        if !kind.mode_range().contains(&modes.len()) {
            return Err(Error::invalid(
                "coefficient field",
                format!("{kind:?} field cannot have {} frequencies", modes.len()),
            ));
        }
        if let Some(w) = frequencies.iter().find(|w| !(w.is_finite() && **w != 0.0)) {
            return Err(Error::invalid(
                "coefficient field",
                format!("frequency {w} must be finite and nonzero"),
            ));
        }
        if modes.iter().any(|g| g.len() != offset.len()) {
            return Err(Error::invalid(
                "coefficient field",
                "profiles sampled on different meshes",
            ));
        }
        if offset.iter().chain(modes.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "coefficient field",
                "non-finite profile sample",
            ));
        }
        // sup over the whole torus: the phases of distinct modes are
        // independent coordinates, so every sign pattern is attained
        let bound = (0..offset.len())
            .map(|i| offset[i].abs() + modes.iter().map(|g| g[i].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            kind,
            offset,
            modes,
            frequencies,
            bound,
        })
    }

    pub fn from_profiles(
        mesh: &SpatialMesh,
        kind: FieldKind,
        offset: &Profile,
        modes: &[Profile],
        frequencies: &[f64],
    ) -> Result<Self> {
        Self::new(
            kind,
            offset.sample(mesh),
            modes.iter().map(|p| p.sample(mesh)).collect(),
            frequencies.to_vec(),
        )
    }

    /// `a0 ≡ value`.
    pub fn constant(mesh: &SpatialMesh, value: f64) -> Self {
        Self::new(FieldKind::Constant, vec![value; mesh.len()], vec![], vec![])
            .expect("constant field is always valid")
    }

    /// `a0(t, x) = sin(2π ω t)·g(x)`.
    pub fn periodic(mesh: &SpatialMesh, profile: &Profile, frequency: f64) -> Result<Self> {
        Self::from_profiles(
            mesh,
            FieldKind::Periodic,
            &Profile::constant(0.0),
            std::slice::from_ref(profile),
            &[frequency],
        )
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Number of torus coordinates.
    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }

    /// `R = sup |a0|` over the hull and the mesh.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// True when every hull element is 1-periodic in time.
    pub fn is_unit_periodic(&self) -> bool {
        self.frequencies.iter().all(|w| w.fract() == 0.0)
    }

    pub fn origin(&self) -> HullPoint {
        HullPoint::origin(self.modes())
    }

    /// `φ_t b`: rotation of the phase by `t·ω`.
    pub fn translate(&self, b: &HullPoint, t: f64) -> HullPoint {
        debug_assert_eq!(b.phase.len(), self.modes());
        HullPoint {
            phase: b
                .phase
                .iter()
                .zip(&self.frequencies)
                .map(|(th, w)| wrap(th + t * w))
                .collect(),
        }
    }

    fn weights_at(&self, b: &HullPoint, t: f64) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (j, (th, w)) in b.phase.iter().zip(&self.frequencies).enumerate() {
            s[j] = (TAU * (th + w * t)).sin();
        }
        s
    }

    /// Value of the hull element `b` at time `t` and node `node`.
    pub fn evaluate(&self, b: &HullPoint, t: f64, node: usize) -> f64 {
        let s = self.weights_at(b, t);
        self.offset[node]
            + self
                .modes
                .iter()
                .zip(s)
                .map(|(g, sj)| sj * g[node])
                .sum::<f64>()
    }

    /// All node values of the hull element `b` at time `t`.
    pub fn fill(&self, b: &HullPoint, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.offset);
        let s = self.weights_at(b, t);
        for (g, sj) in self.modes.iter().zip(s) {
            for (o, gi) in out.iter_mut().zip(g) {
                *o += sj * gi;
            }
        }
    }

    /// Whether `a0(b·t, ·)` is the same at every node for all `t`.
    pub fn is_space_independent(&self) -> bool {
        let same = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        same(&self.offset) && self.modes.iter().all(|g| same(g))
    }

    /// Pointwise product `a0(b·t, x)·u(x)`.
    pub fn multiply_state(&self, b: &HullPoint, t: f64, u: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.len()];
        self.fill(b, t, &mut a);
        a.iter().zip(u).map(|(a, u)| a * u).collect()
    }

    /// `count` hull points. The constant hull is a single point and always
    /// yields exactly one.
    pub fn hull_sample(&self, count: usize, mode: SampleMode, seed: u64) -> Vec<HullPoint> {
        let m = self.modes();
        if m == 0 || count == 0 {
            return vec![self.origin(); count.min(1)];
        }
        match mode {
            SampleMode::Grid if m == 1 => (0..count)
                .map(|k| HullPoint::new(vec![k as f64 / count as f64]))
                .collect(),
            SampleMode::Grid => {
                let alpha = kronecker_steps(m);
                (0..count)
                    .map(|k| HullPoint::new(alpha.iter().map(|a| k as f64 * a).collect()))
                    .collect()
            }
            SampleMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| HullPoint::new((0..m).map(|_| rng.random::<f64>()).collect()))
                    .collect()
            }
        }
    }
}

/// `1/φ_m^j` for the generalized golden ratio `φ_m` (root of
/// `x^{m+1} = x + 1`).
fn kronecker_steps(m: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (m as f64 + 1.0));
    }
    (1..=m).map(|j| phi.powi(-(j as i32)).fract()).collect()
}

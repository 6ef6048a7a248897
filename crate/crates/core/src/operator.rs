//! Conservative finite-difference discretization of `div(a grad u)` with
//! Robin boundary rows `∂u/∂n + c u = 0`.
//!
//! Diffusion samples live on the half grid (between neighbouring nodes
//! along an axis); the Robin condition is eliminated through a ghost node
//! on each boundary face. The assembled matrix `L` approximates `-𝒜`:
//! nonnegative off-diagonals, nonpositive diagonal, and `W·L` symmetric
//! where `W` is the diagonal of quadrature weights.

use crate::banded::BandMatrix;
use crate::mesh::SpatialMesh;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EllipticOperator {
    mesh: SpatialMesh,
    diffusion: Vec<Vec<f64>>,
    robin: Vec<f64>,
    matrix: BandMatrix,
}

impl EllipticOperator {
    /// Assembles the operator from half-grid diffusion samples and Robin
    /// coefficients at the boundary nodes.
    ///
    /// `diffusion[d]` holds `aₐₐ` on the edges along axis `d`. In 1-D that
    /// is `n - 1` values, edge `i` joining nodes `i` and `i + 1`. In 2-D the
    /// x-edges are indexed `j·(nx-1) + i` and the y-edges `j·nx + i`
    /// (edge joining `(i, j)` and `(i, j+1)`). `robin[k]` belongs to
    /// `mesh.boundary_nodes()[k]`.
    pub fn new(mesh: SpatialMesh, diffusion: Vec<Vec<f64>>, robin: Vec<f64>) -> Result<Self> {
        let dim = mesh.dimension();
        if diffusion.len() != dim {
            return Err(Error::invalid(
                "diffusion samples",
                format!("{} axes given for a {dim}-D mesh", diffusion.len()),
            ));
        }
        for (d, samples) in diffusion.iter().enumerate() {
            let expected = edge_count(&mesh, d);
            if samples.len() != expected {
                return Err(Error::invalid(
                    "diffusion samples",
                    format!("axis {d}: {} samples, expected {expected}", samples.len()),
                ));
            }
            if let Some(bad) = samples.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                return Err(Error::invalid(
                    "diffusion samples",
                    format!("axis {d}: a = {bad} is not positive"),
                ));
            }
        }
        if robin.len() != mesh.boundary_nodes().len() {
            return Err(Error::invalid(
                "robin coefficient",
                format!(
                    "{} samples for {} boundary nodes",
                    robin.len(),
                    mesh.boundary_nodes().len()
                ),
            ));
        }
        if let Some(bad) = robin.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::invalid(
                "robin coefficient",
                format!("c = {bad} is negative"),
            ));
        }

        let matrix = assemble(&mesh, &diffusion, &robin);
        Ok(Self {
            mesh,
            diffusion,
            robin,
            matrix,
        })
    }

    /// Samples an isotropic diffusion profile at the edge midpoints and a
    /// Robin profile at the boundary nodes.
    pub fn from_profiles(
        mesh: SpatialMesh,
        a: impl Fn([f64; 2]) -> f64,
        c: impl Fn([f64; 2]) -> f64,
    ) -> Result<Self> {
        let diffusion = (0..mesh.dimension())
            .map(|d| edge_midpoints(&mesh, d).into_iter().map(&a).collect())
            .collect();
        let robin = mesh
            .boundary_nodes()
            .iter()
            .map(|&k| c(mesh.point(k)))
            .collect();
        Self::new(mesh, diffusion, robin)
    }

    /// `a ≡ a0`, `c ≡ c0`.
    pub fn uniform(mesh: SpatialMesh, a0: f64, c0: f64) -> Result<Self> {
        Self::from_profiles(mesh, |_| a0, |_| c0)
    }

    pub fn mesh(&self) -> &SpatialMesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn diffusion(&self) -> &[Vec<f64>] {
        &self.diffusion
    }

    pub fn robin(&self) -> &[f64] {
        &self.robin
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    /// Entrywise M-matrix sign pattern of `I - dt·L` for every `dt > 0`.
    pub fn has_m_matrix_signs(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            self.matrix.row_span(i).all(|j| {
                let v = self.matrix.get(i, j);
                if i == j {
                    v <= 0.0
                } else {
                    v >= 0.0
                }
            })
        })
    }

    /// `max |(WL)ᵢⱼ - (WL)ⱼᵢ| / max |(WL)ᵢⱼ|`.
    pub fn weighted_asymmetry(&self) -> f64 {
        let w = self.mesh.weights();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..self.len() {
            for j in self.matrix.row_span(i) {
                let a = w[i] * self.matrix.get(i, j);
                let b = w[j] * self.matrix.get(j, i);
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.len()])
    }

    /// Dense copy of `L`.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }
}

fn edge_count(mesh: &SpatialMesh, d: usize) -> usize {
    let c = mesh.counts();
    match (mesh.dimension(), d) {
        (1, _) => c[0] - 1,
        (_, 0) => (c[0] - 1) * c[1],
        _ => c[0] * (c[1] - 1),
    }
}

/// Edge midpoints along axis `d` in the order expected by
/// [`EllipticOperator::new`].
pub fn edge_midpoints(mesh: &SpatialMesh, d: usize) -> Vec<[f64; 2]> {
    let c = mesh.counts();
    let h = mesh.spacing();
    let (nx, ny) = (c[0], if mesh.dimension() == 2 { c[1] } else { 1 });
    let mut out = Vec::with_capacity(edge_count(mesh, d));
    if d == 0 {
        for j in 0..ny {
            for i in 0..nx - 1 {
                let y = if mesh.dimension() == 2 { j as f64 * h[1] } else { 0.0 };
                out.push([(i as f64 + 0.5) * h[0], y]);
            }
        }
    } else {
        for j in 0..ny - 1 {
            for i in 0..nx {
                out.push([i as f64 * h[0], (j as f64 + 0.5) * h[1]]);
            }
        }
    }
    out
}

fn edge_index(mesh: &SpatialMesh, d: usize, i: usize, j: usize) -> usize {
    let nx = mesh.counts()[0];
    if d == 0 {
        j * (nx - 1) + i
    } else {
        j * nx + i
    }
}

fn assemble(mesh: &SpatialMesh, diffusion: &[Vec<f64>], robin: &[f64]) -> BandMatrix {
    let n = mesh.len();
    let band = if mesh.dimension() == 2 { mesh.counts()[0] } else { 1 };
    let mut m = BandMatrix::zeros(n, band, band);

    let mut robin_at = vec![0.0; n];
    for (&k, &c) in mesh.boundary_nodes().iter().zip(robin) {
        robin_at[k] = c;
    }

    for p in 0..n {
        let (i, j) = mesh.axis_index(p);
        for d in 0..mesh.dimension() {
            let idx = if d == 0 { i } else { j };
            let count = mesh.counts()[d];
            let h = mesh.spacing()[d];
            let s = mesh.stride(d);
            let h2 = h * h;
            // a on the edge starting at axis position `k`
            let edge = |k: usize| {
                let (ei, ej) = if d == 0 { (k, j) } else { (i, k) };
                diffusion[d][edge_index(mesh, d, ei, ej)]
            };
            if idx > 0 && idx + 1 < count {
                let am = edge(idx - 1);
                let ap = edge(idx);
                m.add(p, p - s, am / h2);
                m.add(p, p + s, ap / h2);
                m.add(p, p, -(am + ap) / h2);
            } else {
                // Ghost node u_{-1} = u_1 - 2h·c·u_0 (mirrored at the far
                // end); the face flux uses the adjacent half-grid sample.
                let (a, q) = if idx == 0 {
                    (edge(0), p + s)
                } else {
                    (edge(idx - 1), p - s)
                };
                m.add(p, q, 2.0 * a / h2);
                m.add(p, p, -2.0 * a / h2 - 2.0 * robin_at[p] * a / h);
            }
        }
    }
    m
}

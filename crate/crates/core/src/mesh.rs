//! Tensor-product node grids on an interval or a rectangle.
//!
//! Nodes are numbered with the first axis running fastest. Every node
//! carries a trapezoid-rule quadrature weight; the weights define the
//! discrete L¹ norm and the dual pairing used throughout the crate.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    extent: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    points: Vec<[f64; 2]>,
    boundary: Vec<usize>,
    weights: Vec<f64>,
}

impl SpatialMesh {
    /// Grid on `[0, extent[0]]` (1-D) or `[0, extent[0]] × [0, extent[1]]`
    /// (2-D) with `counts[d]` nodes along axis `d`.
    pub fn new(extent: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(
                "mesh dimension",
                format!("expected 1 or 2 axes, got {dim}"),
            ));
        }
        if counts.len() != dim {
            return Err(Error::invalid(
                "mesh counts",
                format!("{} counts for {dim} axes", counts.len()),
            ));
        }
        for (d, (&l, &n)) in extent.iter().zip(counts).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(
                    "mesh extent",
                    format!("axis {d}: extent {l} must be positive"),
                ));
            }
            if n < 3 {
                return Err(Error::invalid(
                    "mesh counts",
                    format!("axis {d}: {n} nodes, need at least 3"),
                ));
            }
        }

        let spacing: Vec<f64> = extent
            .iter()
            .zip(counts)
            .map(|(&l, &n)| l / (n - 1) as f64)
            .collect();
        let axis_weights: Vec<Vec<f64>> = counts
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| {
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect()
            })
            .collect();

        let nx = counts[0];
        let ny = if dim == 2 { counts[1] } else { 1 };
        let mut points = Vec::with_capacity(nx * ny);
        let mut weights = Vec::with_capacity(nx * ny);
        let mut boundary = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let x = i as f64 * spacing[0];
                let (y, wy, on_y_edge) = if dim == 2 {
                    (j as f64 * spacing[1], axis_weights[1][j], j == 0 || j == ny - 1)
                } else {
                    (0.0, 1.0, false)
                };
                if i == 0 || i == nx - 1 || on_y_edge {
                    boundary.push(points.len());
                }
                points.push([x, y]);
                weights.push(axis_weights[0][i] * wy);
            }
        }

        Ok(Self {
            extent: extent.to_vec(),
            counts: counts.to_vec(),
            spacing,
            points,
            boundary,
            weights,
        })
    }

    pub fn interval(length: f64, nodes: usize) -> Result<Self> {
        Self::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinates of a node; the second entry is 0 in 1-D.
    pub fn point(&self, node: usize) -> [f64; 2] {
        self.points[node]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Boundary node indices in increasing order.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        self.extent.iter().product()
    }

    /// Axis indices `(i, j)` of a node (`j = 0` in 1-D).
    pub fn axis_index(&self, node: usize) -> (usize, usize) {
        let nx = self.counts[0];
        (node % nx, node / nx)
    }

    /// Index offset between neighbours along axis `d`.
    pub fn stride(&self, d: usize) -> usize {
        if d == 0 {
            1
        } else {
            self.counts[0]
        }
    }

    /// Discrete L¹ norm `Σ wᵢ |uᵢ|`.
    pub fn l1_norm(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, x)| w * x.abs()).sum()
    }

    /// Dual pairing `⟨w, u⟩ = Σ wᵢ·(weight)ᵢ·uᵢ`.
    pub fn pairing(&self, w: &[f64], u: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(w)
            .zip(u)
            .map(|((q, a), b)| q * a * b)
            .sum()
    }

    /// Rescales `u` to unit L¹ norm and returns the old norm.
    pub fn normalize_l1(&self, u: &mut [f64]) -> f64 {
        let norm = self.l1_norm(u);
        if norm > 0.0 {
            u.iter_mut().for_each(|x| *x /= norm);
        }
        norm
    }

    /// Samples a function of the node coordinates.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.points.iter().map(|&p| f(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_five_nodes() {
        let mesh = SpatialMesh::interval(1.0, 5).unwrap();
        let xs: Vec<f64> = mesh.points().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(mesh.weights(), &[0.125, 0.25, 0.25, 0.25, 0.125]);
        assert_eq!(mesh.boundary_nodes(), &[0, 4]);
        assert_eq!(mesh.spacing(), &[0.25]);
    }

    #[test]
    fn weights_partition_the_measure() {
        for n in [3, 4, 17, 101, 400] {
            let mesh = SpatialMesh::interval(1.0, n).unwrap();
            let total: f64 = mesh.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "n = {n}: {total}");
        }
        let mesh = SpatialMesh::interval(2.5, 31).unwrap();
        assert!((mesh.weights().iter().sum::<f64>() - 2.5).abs() < 1e-13);
    }

    #[test]
    fn square_grid() {
        let mesh = SpatialMesh::rectangle(1.0, 1.0, 5, 5).unwrap();
        assert_eq!(mesh.len(), 25);
        assert!((mesh.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(mesh.boundary_nodes().len(), 16);
        assert_eq!(mesh.weights()[0], 0.125 * 0.125);
        assert_eq!(mesh.point(7), [0.5, 0.25]);
        assert_eq!(mesh.axis_index(7), (2, 1));

        let mesh = SpatialMesh::rectangle(2.0, 0.5, 7, 4).unwrap();
        assert!((mesh.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(mesh.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SpatialMesh::interval(1.0, 2).is_err());
        assert!(SpatialMesh::interval(0.0, 10).is_err());
        assert!(SpatialMesh::interval(-1.0, 10).is_err());
        assert!(SpatialMesh::new(&[1.0, 1.0, 1.0], &[3, 3, 3]).is_err());
        assert!(SpatialMesh::new(&[1.0, 1.0], &[3]).is_err());
        let err = SpatialMesh::rectangle(1.0, 1.0, 5, 2).unwrap_err();
        assert!(err.is_invalid_input());
    }

    #[test]
    fn pairing_and_norm() {
        let mesh = SpatialMesh::interval(1.0, 5).unwrap();
        let u = [1.0, -2.0, 3.0, -4.0, 5.0];
        assert!((mesh.l1_norm(&u) - (0.125 + 0.5 + 0.75 + 1.0 + 0.625)).abs() < 1e-15);
        let ones = [1.0; 5];
        assert!((mesh.pairing(&ones, &ones) - 1.0).abs() < 1e-15);
    }
}

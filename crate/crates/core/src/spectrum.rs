//! Eigenvalues of `-L` for oracle checks.
//!
//! `-L` is self-adjoint in the quadrature-weighted pairing, so
//! `W^{1/2}(-L)W^{-1/2}` is symmetric and a dense symmetric eigensolver
//! gives a real, ascending spectrum. The bottom eigenpair is then refined
//! by power iteration on `(I - L)^{-1}`: that inverse is entrywise
//! positive and is evaluated without cancellation, so the Collatz–Wielandt
//! quotients bracket `1 + λ_min` to relative rounding accuracy.

use crate::banded::BandMatrix;
use crate::operator::EllipticOperator;
use crate::{Error, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending eigenvalues of `-L`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors with unit discrete L¹ norm; the first is positive.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `‖(-L)v - λv‖₁` for each pair.
    pub residuals: Vec<f64>,
    /// Certified lower bound on the smallest eigenvalue of `-L + I`.
    pub half_plane_bound: f64,
}

impl Spectrum {
    pub fn gap(&self) -> Option<f64> {
        (self.eigenvalues.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }
}

/// Perron data of `(I - L)^{-1}`.
#[derive(Debug, Clone)]
pub struct PerronBracket {
    /// Lower and upper bounds on `1 + λ_min(-L)`.
    pub lower: f64,
    pub upper: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// The `k` smallest eigenvalues of `-L` with eigenvectors.
pub fn spectrum(op: &EllipticOperator, k: usize) -> Result<Spectrum> {
    let n = op.len();
    let k = k.clamp(1, n);
    let mesh = op.mesh();
    let sqrt_w: Vec<f64> = mesh.weights().iter().map(|w| w.sqrt()).collect();
    let l = op.matrix();

    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in l.row_span(i) {
            s[(i, j)] = -sqrt_w[i] * l.get(i, j) / sqrt_w[j];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.clone().try_symmetric_eigen(1e-15, 100_000).ok_or_else(|| {
        let diag_dominance = (0..n)
            .map(|i| s.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Error::Eigen {
            residual: diag_dominance,
        }
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let y = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = (0..n).map(|i| y[i] / sqrt_w[i]).collect();
        let mass: f64 = mesh.pairing(&vec![1.0; n], &v);
        if mass < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        mesh.normalize_l1(&mut v);
        eigenvalues.push(eig.eigenvalues[idx]);
        eigenvectors.push(v);
    }

    let start: Vec<f64> = eigenvectors[0].iter().map(|x| x.abs().max(1e-300)).collect();
    let bracket = perron_bracket(l, Some(start), 1e-13, 10_000)?;
    let mut v0 = bracket.vector.clone();
    mesh.normalize_l1(&mut v0);
    eigenvalues[0] = 0.5 * (bracket.lower + bracket.upper) - 1.0;
    eigenvectors[0] = v0;

    let residuals = eigenvalues
        .iter()
        .zip(&eigenvectors)
        .map(|(&lam, v)| {
            let lv = op.apply(v);
            let r: Vec<f64> = lv.iter().zip(v).map(|(a, b)| -a - lam * b).collect();
            mesh.l1_norm(&r)
        })
        .collect();

    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        half_plane_bound: bracket.lower,
    })
}

/// Power iteration on `(I - L)^{-1}` with Collatz–Wielandt bounds, stopped
/// when the bracket on `1 + λ_min` is relatively tighter than `tol`.
pub fn perron_bracket(
    l: &BandMatrix,
    start: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<PerronBracket> {
    let n = l.dim();
    let lu = l.shifted(1.0, -1.0).factor(1e-14)?;
    let mut x = start.unwrap_or_else(|| vec![1.0; n]);
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    for it in 1..=max_iter {
        let mut y = x.clone();
        lu.solve_in_place(&mut y);
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for (a, b) in y.iter().zip(&x) {
            let r = a / b;
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        // ρ((I-L)^{-1}) ∈ [rmin, rmax]  ⇒  1 + λ_min ∈ [1/rmax, 1/rmin]
        lower = lower.max(1.0 / rmax);
        upper = upper.min(1.0 / rmin);
        let norm = y.iter().cloned().fold(0.0, f64::max);
        x = y.into_iter().map(|v| v / norm).collect();
        if upper - lower <= tol * lower {
            return Ok(PerronBracket {
                lower,
                upper,
                vector: x,
                iterations: it,
            });
        }
    }
    Err(Error::Eigen {
        residual: (upper - lower) / lower,
    })
}

/// Eigenvalue moduli of a general dense matrix, descending.
pub fn moduli_descending(m: &DMatrix<f64>) -> Vec<f64> {
    let mut mods: Vec<f64> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    mods
}

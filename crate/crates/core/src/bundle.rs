//! The principal Floquet bundle: for each hull point `b` the positive ray
//! `v(b)` spanning the one-dimensional invariant subbundle, and the
//! uniformly positive dual vector `v*(b)` whose kernel is the
//! complementary subbundle.
//!
//! Both are obtained by pullback power iteration. `v(b)` is the limit ray
//! of `ψ(T, φ_{-T} b)·1` as `T → ∞`; `v*(b)` is the limit ray of the
//! adjoint cocycle applied to the constant dual vector placed at `φ_T b`.
//! `T` grows until successive rays are closer than the tolerance in the
//! Hilbert metric.

use crate::hilbert::hilbert_metric;
use crate::hull::HullPoint;
use crate::mesh::SpatialMesh;
use crate::propagation::Propagator;
use crate::{Error, Result};

/// Default Hilbert-metric stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default cap on the pullback horizon.
pub const DEFAULT_MAX_T: usize = 512;

#[derive(Debug, Clone)]
pub struct PrincipalVector {
    /// Positive, unit L¹ norm.
    pub v: Vec<f64>,
    /// `log ‖ψ(1, b) v‖₁`.
    pub growth: f64,
    /// Pullback horizon at which the iteration stopped.
    pub horizon: usize,
    /// Hilbert distance between the last two pullback rays.
    pub increment: f64,
}

#[derive(Debug, Clone)]
pub struct DualVector {
    /// Positive, unit maximum entry.
    pub vstar: Vec<f64>,
    pub horizon: usize,
    pub increment: f64,
}

/// `(v(b), v*(b))` with `‖v‖₁ = 1` and `⟨v*, v⟩ = 1`.
#[derive(Debug, Clone)]
pub struct PrincipalFiber {
    pub b: HullPoint,
    pub v: Vec<f64>,
    pub vstar: Vec<f64>,
    /// Log of the ray stretch over one time unit.
    pub growth: f64,
}

impl PrincipalFiber {
    /// Pairs the two rays with the normalizations `‖v‖₁ = 1`,
    /// `⟨v*, v⟩ = 1`.
    pub fn new(mesh: &SpatialMesh, b: HullPoint, mut v: Vec<f64>, mut vstar: Vec<f64>, growth: f64) -> Result<Self> {
        if v.iter().chain(&vstar).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Degenerate(
                "principal or dual vector is not entrywise positive".into(),
            ));
        }
        mesh.normalize_l1(&mut v);
        let c = mesh.pairing(&vstar, &v);
        vstar.iter_mut().for_each(|x| *x /= c);
        Ok(Self { b, v, vstar, growth })
    }

    /// `⟨v*(b), u⟩`, the coordinate of `u` along `v(b)`.
    pub fn coordinate(&self, mesh: &SpatialMesh, u: &[f64]) -> f64 {
        mesh.pairing(&self.vstar, u)
    }

    /// `(u₁, u₂)` with `u₂ = P(b)u = ⟨v*, u⟩ v` and `u₁ = u - u₂`.
    pub fn project(&self, mesh: &SpatialMesh, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.coordinate(mesh, u);
        let u2: Vec<f64> = self.v.iter().map(|x| c * x).collect();
        let u1 = u.iter().zip(&u2).map(|(a, b)| a - b).collect();
        (u1, u2)
    }

    /// Removes the component along `v(b)` in place.
    pub fn deflate(&self, mesh: &SpatialMesh, u: &mut [f64]) {
        let c = self.coordinate(mesh, u);
        u.iter_mut().zip(&self.v).for_each(|(a, b)| *a -= c * b);
    }

    pub fn min_v(&self) -> f64 {
        self.v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_vstar(&self) -> f64 {
        self.vstar.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_vstar(&self) -> f64 {
        self.vstar.iter().cloned().fold(0.0, f64::max)
    }

    /// `min v* / max v*`: the uniform-positivity constant of the dual
    /// vector normalized to unit dual (sup) norm.
    pub fn uniform_positivity(&self) -> f64 {
        self.min_vstar() / self.max_vstar()
    }
}

fn normalize_max(u: &mut [f64]) {
    let m = u.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        u.iter_mut().for_each(|x| *x /= m);
    }
}

/// Pullback iteration anchored at time `t` of the hull element `b`.
///
/// For horizons `T = 4, 8, 16, …` the rays started `T` and `T - 1` units
/// away are evolved together; the first horizon at which they are closer
/// than `tol` in the Hilbert metric is accepted. Returns the ray, the
/// horizon and the last increment.
fn pullback(
    prop: &Propagator,
    b: &HullPoint,
    t: f64,
    tol: f64,
    max_t: usize,
    adjoint: bool,
) -> Result<(Vec<f64>, usize, f64)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance", format!("tol = {tol}")));
    }
    let max_t = max_t.max(2);
    let n = prop.len();
    let mesh = prop.mesh();
    let mut horizon = 4.min(max_t);
    let mut previous: Option<(usize, f64)> = None;
    loop {
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(2);
        for s in (1..=horizon).rev() {
            if s + 1 >= horizon {
                states.push(vec![1.0; n]);
            }
            let s = s as f64;
            if adjoint {
                prop.evolve_adjoint_batch(b, t + s - 1.0, t + s, &mut states)?;
                states.iter_mut().for_each(|w| normalize_max(w));
            } else {
                prop.evolve_batch(b, t - s, t - s + 1.0, &mut states)?;
                states.iter_mut().for_each(|u| {
                    mesh.normalize_l1(u);
                });
            }
        }
        let increment = hilbert_metric(&states[0], &states[1]);
        if increment < tol {
            return Ok((states.swap_remove(0), horizon, increment));
        }
        if horizon >= max_t {
            let contraction = match previous {
                Some((h, d)) if d > 0.0 && horizon > h => (increment / d).powf(1.0 / (horizon - h) as f64),
                _ => f64::NAN,
            };
            return Err(Error::NoConvergence {
                max_t,
                increment,
                contraction,
            });
        }
        previous = Some((horizon, increment));
        horizon = (2 * horizon).min(max_t);
    }
}

/// `v(φ_t b)` by pullback from the past.
pub fn principal_vector_at(prop: &Propagator, b: &HullPoint, t: f64, tol: f64, max_t: usize) -> Result<PrincipalVector> {
    let (v, horizon, increment) = pullback(prop, b, t, tol, max_t, false)?;
    let mut next = v.clone();
    prop.evolve(b, t, t + 1.0, &mut next)?;
    let growth = prop.mesh().l1_norm(&next).ln();
    Ok(PrincipalVector {
        v,
        growth,
        horizon,
        increment,
    })
}

pub fn principal_vector(prop: &Propagator, b: &HullPoint, tol: f64, max_t: usize) -> Result<PrincipalVector> {
    principal_vector_at(prop, b, 0.0, tol, max_t)
}

/// `v*(φ_t b)` by pullback of the adjoint cocycle from the future.
pub fn dual_vector_at(prop: &Propagator, b: &HullPoint, t: f64, tol: f64, max_t: usize) -> Result<DualVector> {
    let (vstar, horizon, increment) = pullback(prop, b, t, tol, max_t, true)?;
    Ok(DualVector {
        vstar,
        horizon,
        increment,
    })
}

pub fn dual_vector(prop: &Propagator, b: &HullPoint, tol: f64, max_t: usize) -> Result<DualVector> {
    dual_vector_at(prop, b, 0.0, tol, max_t)
}

/// Both rays at `b`, paired.
pub fn principal_fiber(prop: &Propagator, b: &HullPoint, tol: f64, max_t: usize) -> Result<PrincipalFiber> {
    let pv = principal_vector(prop, b, tol, max_t)?;
    let dv = dual_vector(prop, b, tol, max_t)?;
    PrincipalFiber::new(prop.mesh(), b.clone(), pv.v, dv.vstar, pv.growth)
}

/// Fibers at `φ_{kτ} b`, `k = 0..=count`, obtained by transporting `v(b)`
/// forward and `v*(φ_{count·τ} b)` backward along the orbit.
#[derive(Debug, Clone)]
pub struct OrbitFibers {
    pub step: f64,
    pub fibers: Vec<PrincipalFiber>,
    /// `log ‖ψ(τ, φ_{kτ} b) v(φ_{kτ} b)‖₁` for `k = 0..count`.
    pub step_growth: Vec<f64>,
}

impl OrbitFibers {
    pub fn compute(prop: &Propagator, b: &HullPoint, step: f64, count: usize, tol: f64, max_t: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid("orbit step", format!("{step}")));
        }
        let mesh = prop.mesh();
        let field = prop.field();
        let t_end = count as f64 * step;

        let start = principal_vector(prop, b, tol, max_t)?;
        let mut vs = Vec::with_capacity(count + 1);
        let mut step_growth = Vec::with_capacity(count);
        let mut v = start.v;
        vs.push(v.clone());
        for k in 0..count {
            prop.evolve(b, k as f64 * step, (k + 1) as f64 * step, &mut v)?;
            step_growth.push(mesh.normalize_l1(&mut v).ln());
            vs.push(v.clone());
        }

        let end = dual_vector_at(prop, b, t_end, tol, max_t)?;
        let mut ws = vec![Vec::new(); count + 1];
        let mut w = end.vstar;
        ws[count] = w.clone();
        for k in (0..count).rev() {
            prop.evolve_adjoint(b, k as f64 * step, (k + 1) as f64 * step, &mut w)?;
            normalize_max(&mut w);
            ws[k] = w.clone();
        }

        let mut fibers = Vec::with_capacity(count + 1);
        for (k, (v, w)) in vs.into_iter().zip(ws).enumerate() {
            let t = k as f64 * step;
            let growth = if step == 1.0 && k < count {
                step_growth[k]
            } else if k == 0 {
                start.growth
            } else {
                let mut next = v.clone();
                prop.evolve(b, t, t + 1.0, &mut next)?;
                mesh.l1_norm(&next).ln()
            };
            fibers.push(PrincipalFiber::new(mesh, field.translate(b, t), v, w, growth)?);
        }
        Ok(Self {
            step,
            fibers,
            step_growth,
        })
    }
}

/// Colinearity defects of the invariance relations between the fibers at
/// `b` and at `φ_t b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceDefect {
    /// `ψ(t, b) v(b)` against `v(φ_t b)`.
    pub forward: f64,
    /// `ψ(t, b)* v*(φ_t b)` against `v*(b)`.
    pub adjoint: f64,
}

/// L¹ distance between the unit-L¹ rays through `u` and `w`.
pub fn ray_distance(mesh: &SpatialMesh, u: &[f64], w: &[f64]) -> f64 {
    let nu = mesh.l1_norm(u);
    let nw = mesh.l1_norm(w);
    let diff: Vec<f64> = u.iter().zip(w).map(|(a, b)| a / nu - b / nw).collect();
    mesh.l1_norm(&diff)
}

pub fn verify_invariance(
    prop: &Propagator,
    at_b: &PrincipalFiber,
    t: f64,
    at_phi_t_b: &PrincipalFiber,
) -> Result<InvarianceDefect> {
    let mesh = prop.mesh();
    let mut fwd = at_b.v.clone();
    prop.evolve(&at_b.b, 0.0, t, &mut fwd)?;
    let mut adj = at_phi_t_b.vstar.clone();
    prop.evolve_adjoint(&at_b.b, 0.0, t, &mut adj)?;
    Ok(InvarianceDefect {
        forward: ray_distance(mesh, &fwd, &at_phi_t_b.v),
        adjoint: ray_distance(mesh, &adj, &at_b.vstar),
    })
}

/// Largest invariance defect over a grid of times, with each fiber
/// computed independently by pullback.
pub fn max_invariance_defect(
    prop: &Propagator,
    b: &HullPoint,
    times: &[f64],
    tol: f64,
    max_t: usize,
) -> Result<InvarianceDefect> {
    let base = principal_fiber(prop, b, tol, max_t)?;
    let mut worst = InvarianceDefect {
        forward: 0.0,
        adjoint: 0.0,
    };
    for &t in times {
        let moved = principal_fiber(prop, &prop.field().translate(b, t), tol, max_t)?;
        let d = verify_invariance(prop, &base, t, &moved)?;
        worst.forward = worst.forward.max(d.forward);
        worst.adjoint = worst.adjoint.max(d.adjoint);
    }
    Ok(worst)
}

//! The solution operator `ψ(t, b)` of the mild-solution equation, realized
//! as a Strang splitting between the reaction `u_t = a0 u` and the
//! diffusion `u_t = L u`:
//!
//! ```text
//! u ← exp(dt/2 · a0(t + dt/4)) u
//! u ← (I - dt·L)^{-1} u
//! u ← exp(dt/2 · a0(t + 3dt/4)) u
//! ```
//!
//! Each half-step reaction factor is sampled at the midpoint of its
//! half-interval. The reaction factor is entrywise positive and the
//! implicit-Euler resolvent of an M-matrix is entrywise nonnegative
//! (positive on a connected mesh), so positivity holds for every `dt`.
//! A Crank–Nicolson diffusion step is available for diagnostics only; it
//! loses positivity once `dt/h²` is large.
//!
//! Hull convention: `evolve(b, t0, t1, u)` integrates with coefficient
//! `a0 = b(s, ·)` for `s ∈ [t0, t1]`, so `ψ(t, b) = evolve(b, 0, t)` and
//! `ψ(1, φ_k b) = evolve(b, k, k + 1)`.
//!
//! The adjoint is taken in the quadrature-weighted pairing
//! `⟨w, u⟩ = Σ weightᵢ wᵢ uᵢ`: the step sequence is reversed and each
//! factor transposed, `D* = W^{-1} Dᵀ W` for the diffusion solve while the
//! reaction factors are self-adjoint.

use crate::banded::{BandLu, BandMatrix};
use crate::hull::{CoefficientField, HullPoint};
use crate::operator::EllipticOperator;
use crate::par::Execution;
use crate::{Error, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Strang splitting with implicit-Euler diffusion.
    #[default]
    StrangImplicit,
    /// Strang splitting with Crank–Nicolson diffusion. Not positivity
    /// preserving.
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorConfig {
    steps_per_unit: usize,
    pub scheme: Scheme,
    /// Smallest admissible pivot relative to the matrix diagonal.
    pub min_pivot: f64,
    /// Upper bound on the number of steps of a single evolution call.
    pub max_steps: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            steps_per_unit: 1000,
            scheme: Scheme::StrangImplicit,
            min_pivot: 1e-12,
            max_steps: 100_000_000,
        }
    }
}

impl PropagatorConfig {
    /// `dt` must be `1/q` for an integer `q` so that time-1 maps are
    /// unions of whole steps.
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && dt <= 1.0) {
            return Err(Error::invalid("time step", format!("dt = {dt} not in (0, 1]")));
        }
        let q = (1.0 / dt).round();
        if ((q * dt) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "time step",
                format!("dt = {dt} does not divide 1 (1/dt = {})", 1.0 / dt),
            ));
        }
        Ok(Self::with_steps_per_unit(q as usize))
    }

    pub fn with_steps_per_unit(steps: usize) -> Self {
        Self {
            steps_per_unit: steps.max(1),
            ..Self::default()
        }
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    pub fn steps_per_unit(&self) -> usize {
        self.steps_per_unit
    }
}

/// One diffusion factor `D_h` of a fixed size.
#[derive(Debug, Clone)]
struct DiffusionStep {
    h: f64,
    implicit: BandLu,
    explicit: Option<BandMatrix>,
}

impl DiffusionStep {
    fn new(l: &BandMatrix, h: f64, scheme: Scheme, min_pivot: f64) -> Result<Self> {
        match scheme {
            Scheme::StrangImplicit => Ok(Self {
                h,
                implicit: l.shifted(1.0, -h).factor(min_pivot)?,
                explicit: None,
            }),
            Scheme::CrankNicolson => Ok(Self {
                h,
                implicit: l.shifted(1.0, -0.5 * h).factor(min_pivot)?,
                explicit: Some(l.shifted(1.0, 0.5 * h)),
            }),
        }
    }

    fn apply(&self, u: &mut [f64], scratch: &mut [f64]) {
        if let Some(b) = &self.explicit {
            b.mul_vec_into(u, scratch);
            u.copy_from_slice(scratch);
        }
        self.implicit.solve_in_place(u);
    }

    fn apply_adjoint(&self, w: &mut [f64], weights: &[f64]) {
        w.iter_mut().zip(weights).for_each(|(x, q)| *x *= q);
        self.implicit.solve_transpose_in_place(w);
        if let Some(b) = &self.explicit {
            let t = b.mul_vec_transpose(w);
            w.copy_from_slice(&t);
        }
        w.iter_mut().zip(weights).for_each(|(x, q)| *x /= q);
    }
}

/// Recorded states of a forward evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub start: HullPoint,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Every `stride`-th record, always keeping the last one.
    pub fn downsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        let keep: Vec<usize> = (0..=last)
            .filter(|&k| k % stride == 0 || k == last)
            .collect();
        Trajectory {
            start: self.start.clone(),
            times: keep.iter().map(|&k| self.times[k]).collect(),
            states: keep.iter().map(|&k| self.states[k].clone()).collect(),
        }
    }
}

/// Step plan between two times: `full` steps of the base size then an
/// optional shorter remainder.
#[derive(Debug, Clone, Copy)]
struct Plan {
    full: usize,
    remainder: f64,
}

#[derive(Debug, Clone)]
pub struct Propagator {
    op: EllipticOperator,
    field: CoefficientField,
    config: PropagatorConfig,
    diffusion: DiffusionStep,
}

impl Propagator {
    pub fn new(
        op: EllipticOperator,
        field: CoefficientField,
        config: PropagatorConfig,
    ) -> Result<Self> {
        if field.len() != op.len() {
            return Err(Error::invalid(
                "coefficient field",
                format!("{} samples for {} nodes", field.len(), op.len()),
            ));
        }
        let diffusion = DiffusionStep::new(op.matrix(), config.dt(), config.scheme, config.min_pivot)?;
        Ok(Self {
            op,
            field,
            config,
            diffusion,
        })
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.config
    }

    pub fn mesh(&self) -> &crate::mesh::SpatialMesh {
        self.op.mesh()
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    fn plan(&self, t0: f64, t1: f64) -> Result<Plan> {
        if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
            return Err(Error::invalid(
                "time interval",
                format!("[{t0}, {t1}] is not a forward interval"),
            ));
        }
        let dt = self.dt();
        let x = (t1 - t0) / dt;
        let full = if (x - x.round()).abs() < 1e-9 {
            x.round()
        } else {
            x.floor()
        };
        let remainder = (t1 - t0) - full * dt;
        let remainder = if remainder > 1e-12 * dt { remainder } else { 0.0 };
        let steps = full as usize + usize::from(remainder > 0.0);
        if steps > self.config.max_steps {
            return Err(Error::StepBudget {
                steps,
                max: self.config.max_steps,
            });
        }
        Ok(Plan {
            full: full as usize,
            remainder,
        })
    }

    fn diffusion_for(&self, h: f64) -> Result<std::borrow::Cow<'_, DiffusionStep>> {
        if h == self.diffusion.h {
            Ok(std::borrow::Cow::Borrowed(&self.diffusion))
        } else {
            Ok(std::borrow::Cow::Owned(DiffusionStep::new(
                self.op.matrix(),
                h,
                self.config.scheme,
                self.config.min_pivot,
            )?))
        }
    }

    /// Reaction factor `exp(h/2 · a0(b, t))` at every node.
    fn reaction(&self, b: &HullPoint, t: f64, h: f64, out: &mut [f64]) {
        self.field.fill(b, t, out);
        out.iter_mut().for_each(|a| *a = (0.5 * h * *a).exp());
    }

    fn check_finite(states: &[Vec<f64>], t: f64) -> Result<()> {
        if states.iter().flatten().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { t })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_step(
        &self,
        diff: &DiffusionStep,
        b: &HullPoint,
        t: f64,
        states: &mut [Vec<f64>],
        e: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        let h = diff.h;
        self.reaction(b, t + 0.25 * h, h, e);
        for u in states.iter_mut() {
            u.iter_mut().zip(e.iter()).for_each(|(x, f)| *x *= f);
            diff.apply(u, scratch);
        }
        self.reaction(b, t + 0.75 * h, h, e);
        for u in states.iter_mut() {
            u.iter_mut().zip(e.iter()).for_each(|(x, f)| *x *= f);
        }
        Self::check_finite(states, t + h)
    }

    fn adjoint_step(
        &self,
        diff: &DiffusionStep,
        b: &HullPoint,
        t: f64,
        states: &mut [Vec<f64>],
        e: &mut [f64],
    ) -> Result<()> {
        let h = diff.h;
        let weights = self.mesh().weights();
        self.reaction(b, t + 0.75 * h, h, e);
        for w in states.iter_mut() {
            w.iter_mut().zip(e.iter()).for_each(|(x, f)| *x *= f);
            diff.apply_adjoint(w, weights);
        }
        self.reaction(b, t + 0.25 * h, h, e);
        for w in states.iter_mut() {
            w.iter_mut().zip(e.iter()).for_each(|(x, f)| *x *= f);
        }
        Self::check_finite(states, t)
    }

    /// One step of size `h` from time `t`.
    pub fn step(&self, u: &[f64], b: &HullPoint, t: f64, h: f64) -> Result<Vec<f64>> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid("time step", format!("h = {h}")));
        }
        let diff = self.diffusion_for(h)?;
        let n = self.len();
        let mut states = vec![u.to_vec()];
        self.forward_step(&diff, b, t, &mut states, &mut vec![0.0; n], &mut vec![0.0; n])?;
        Ok(states.pop().unwrap())
    }

    /// Advances every state in `states` from `t0` to `t1` in place,
    /// calling `observe(k, t)` after step `k`.
    fn run_forward(
        &self,
        b: &HullPoint,
        t0: f64,
        t1: f64,
        states: &mut [Vec<f64>],
        mut observe: impl FnMut(usize, f64, &[Vec<f64>]),
    ) -> Result<()> {
        let plan = self.plan(t0, t1)?;
        let n = self.len();
        let (mut e, mut scratch) = (vec![0.0; n], vec![0.0; n]);
        let dt = self.dt();
        for k in 0..plan.full {
            let t = t0 + k as f64 * dt;
            self.forward_step(&self.diffusion, b, t, states, &mut e, &mut scratch)?;
            observe(k + 1, t0 + (k + 1) as f64 * dt, states);
        }
        if plan.remainder > 0.0 {
            let diff = self.diffusion_for(plan.remainder)?;
            let t = t0 + plan.full as f64 * dt;
            self.forward_step(&diff, b, t, states, &mut e, &mut scratch)?;
            observe(plan.full + 1, t1, states);
        }
        Ok(())
    }

    /// `u ← ψ(t1 - t0, φ_{t0} b) u`.
    pub fn evolve(&self, b: &HullPoint, t0: f64, t1: f64, u: &mut [f64]) -> Result<()> {
        let mut states = vec![u.to_vec()];
        self.run_forward(b, t0, t1, &mut states, |_, _, _| {})?;
        u.copy_from_slice(&states[0]);
        Ok(())
    }

    /// [`Propagator::evolve`] on several states sharing the reaction
    /// factors.
    pub fn evolve_batch(&self, b: &HullPoint, t0: f64, t1: f64, states: &mut [Vec<f64>]) -> Result<()> {
        self.run_forward(b, t0, t1, states, |_, _, _| {})
    }

    /// `w ← ψ(t1 - t0, φ_{t0} b)* w`.
    pub fn evolve_adjoint(&self, b: &HullPoint, t0: f64, t1: f64, w: &mut [f64]) -> Result<()> {
        let mut states = vec![w.to_vec()];
        self.evolve_adjoint_batch(b, t0, t1, &mut states)?;
        w.copy_from_slice(&states[0]);
        Ok(())
    }

    pub fn evolve_adjoint_batch(
        &self,
        b: &HullPoint,
        t0: f64,
        t1: f64,
        states: &mut [Vec<f64>],
    ) -> Result<()> {
        let plan = self.plan(t0, t1)?;
        let mut e = vec![0.0; self.len()];
        let dt = self.dt();
        if plan.remainder > 0.0 {
            let diff = self.diffusion_for(plan.remainder)?;
            let t = t0 + plan.full as f64 * dt;
            self.adjoint_step(&diff, b, t, states, &mut e)?;
        }
        for k in (0..plan.full).rev() {
            let t = t0 + k as f64 * dt;
            self.adjoint_step(&self.diffusion, b, t, states, &mut e)?;
        }
        Ok(())
    }

    /// Forward evolution recording every `stride`-th step (and the end).
    pub fn propagate(
        &self,
        b: &HullPoint,
        t0: f64,
        t1: f64,
        u0: &[f64],
        stride: usize,
    ) -> Result<Trajectory> {
        let stride = stride.max(1);
        let plan = self.plan(t0, t1)?;
        let last = plan.full + usize::from(plan.remainder > 0.0);
        let mut traj = Trajectory {
            start: b.clone(),
            times: vec![t0],
            states: vec![u0.to_vec()],
        };
        let mut states = vec![u0.to_vec()];
        self.run_forward(b, t0, t1, &mut states, |k, t, s| {
            if k % stride == 0 || k == last {
                traj.times.push(t);
                traj.states.push(s[0].clone());
            }
        })?;
        Ok(traj)
    }

    pub fn propagate_adjoint(&self, b: &HullPoint, t0: f64, t1: f64, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = w.to_vec();
        self.evolve_adjoint(b, t0, t1, &mut out)?;
        Ok(out)
    }

    /// `ψ(1, b) u`.
    pub fn apply_time_one(&self, b: &HullPoint, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = u.to_vec();
        self.evolve(b, 0.0, 1.0, &mut out)?;
        Ok(out)
    }

    /// Dense matrix of `u ↦ evolve(b, t0, t1, u)`, assembled column by
    /// column from the basis vectors.
    pub fn transfer_matrix(&self, b: &HullPoint, t0: f64, t1: f64, exec: Execution) -> Result<DMatrix<f64>> {
        let n = self.len();
        let chunks = exec.chunks(n);
        let per = n.div_ceil(chunks);
        let blocks = exec.try_map(chunks, |c| {
            let cols: Vec<Vec<f64>> = (c * per..((c + 1) * per).min(n))
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    e
                })
                .collect();
            let mut cols = cols;
            self.evolve_batch(b, t0, t1, &mut cols)?;
            Ok::<_, Error>(cols)
        })?;
        let mut m = DMatrix::zeros(n, n);
        for (j, col) in blocks.into_iter().flatten().enumerate() {
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        Ok(m)
    }

    /// The discrete time-1 map `ψ(1, b)` as a dense matrix.
    pub fn time_one_map(&self, b: &HullPoint) -> Result<DMatrix<f64>> {
        self.transfer_matrix(b, 0.0, 1.0, Execution::default())
    }

    /// Relative defect `max|ψ(t1+t2, b)u - ψ(t1, φ_{t2}b)ψ(t2, b)u| / max|ψ(t1+t2, b)u|`.
    pub fn verify_cocycle(&self, b: &HullPoint, t1: f64, t2: f64, u0: &[f64]) -> Result<f64> {
        let mut one_shot = u0.to_vec();
        self.evolve(b, 0.0, t1 + t2, &mut one_shot)?;
        let mut composed = u0.to_vec();
        self.evolve(b, 0.0, t2, &mut composed)?;
        let shifted = self.field.translate(b, t2);
        self.evolve(&shifted, 0.0, t1, &mut composed)?;
        let scale = one_shot.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let defect = one_shot
            .iter()
            .zip(&composed)
            .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        Ok(if scale > 0.0 { defect / scale } else { defect })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::Profile;
    use crate::mesh::SpatialMesh;

    fn neumann(n: usize, field: impl Fn(&SpatialMesh) -> CoefficientField, q: usize) -> Propagator {
        let mesh = SpatialMesh::interval(1.0, n).unwrap();
        let f = field(&mesh);
        let op = EllipticOperator::uniform(mesh, 1.0, 0.0).unwrap();
        Propagator::new(op, f, PropagatorConfig::with_steps_per_unit(q)).unwrap()
    }

    #[test]
    fn config_requires_unit_divisor() {
        assert_eq!(PropagatorConfig::new(1e-3).unwrap().steps_per_unit(), 1000);
        assert_eq!(PropagatorConfig::new(0.25).unwrap().steps_per_unit(), 4);
        assert!(PropagatorConfig::new(0.3).is_err());
        assert!(PropagatorConfig::new(0.0).is_err());
        assert!(PropagatorConfig::new(-0.1).is_err());
    }

    #[test]
    fn constants_grow_exactly() {
        let p = neumann(21, |m| CoefficientField::constant(m, 0.7), 100);
        let b = p.field().origin();
        let u = p.step(&[1.0; 21], &b, 0.0, 0.01).unwrap();
        let expected = (0.7f64 * 0.01).exp();
        let err = u.iter().fold(0.0f64, |e, x| e.max((x - expected).abs()));
        assert!(err < 1e-14, "{err:e}");
    }

    #[test]
    fn mass_is_conserved_without_reaction() {
        let p = neumann(31, |m| CoefficientField::constant(m, 0.0), 50);
        let mesh = p.mesh().clone();
        let u: Vec<f64> = (0..31).map(|i| ((i * 7 % 11) as f64).powi(2)).collect();
        let v = p.step(&u, &p.field().origin(), 0.0, 0.02).unwrap();
        assert!((mesh.l1_norm(&v) - mesh.l1_norm(&u)).abs() < 1e-12 * mesh.l1_norm(&u));
    }

    #[test]
    fn robin_diffusion_is_l1_contractive() {
        let mesh = SpatialMesh::interval(1.0, 31).unwrap();
        let f = CoefficientField::constant(&mesh, 0.0);
        let op = EllipticOperator::uniform(mesh.clone(), 1.0, 3.0).unwrap();
        let p = Propagator::new(op, f, PropagatorConfig::with_steps_per_unit(50)).unwrap();
        let u: Vec<f64> = (0..31).map(|i| 1.0 + (i as f64).sin()).collect();
        let v = p.step(&u, &p.field().origin(), 0.0, 0.02).unwrap();
        assert!(mesh.l1_norm(&v) < mesh.l1_norm(&u));
    }

    #[test]
    fn zero_interval_is_identity() {
        let p = neumann(11, |m| CoefficientField::periodic(m, &Profile::constant(1.0), 1.0).unwrap(), 10);
        let u: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let traj = p.propagate(&p.field().origin(), 0.3, 0.3, &u, 1).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.final_state(), &u[..]);
        assert!(p.plan(1.0, 0.5).is_err());
    }

    #[test]
    fn trajectory_records_and_downsamples() {
        let p = neumann(11, |m| CoefficientField::constant(m, 0.0), 10);
        let traj = p.propagate(&p.field().origin(), 0.0, 1.05, &[1.0; 11], 1).unwrap();
        // ten full steps and one partial step
        assert_eq!(traj.len(), 12);
        assert!((traj.times[11] - 1.05).abs() < 1e-15);
        let thin = traj.downsample(4);
        assert_eq!(thin.times.len(), 4);
        assert_eq!(thin.times.last(), traj.times.last());
        let sparse = p.propagate(&p.field().origin(), 0.0, 1.0, &[1.0; 11], 3).unwrap();
        assert_eq!(sparse.times.len(), 5);
    }

    #[test]
    fn step_budget_is_enforced() {
        let mesh = SpatialMesh::interval(1.0, 5).unwrap();
        let f = CoefficientField::constant(&mesh, 0.0);
        let op = EllipticOperator::uniform(mesh, 1.0, 0.0).unwrap();
        let mut cfg = PropagatorConfig::with_steps_per_unit(10);
        cfg.max_steps = 15;
        let p = Propagator::new(op, f, cfg).unwrap();
        let mut u = vec![1.0; 5];
        assert!(p.evolve(&p.field().origin(), 0.0, 1.0, &mut u).is_ok());
        assert!(matches!(
            p.evolve(&p.field().origin(), 0.0, 2.0, &mut u),
            Err(Error::StepBudget { steps: 20, max: 15 })
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let mesh = SpatialMesh::interval(1.0, 5).unwrap();
        let f = CoefficientField::constant(&mesh, 800.0);
        let op = EllipticOperator::uniform(mesh, 1.0, 0.0).unwrap();
        let p = Propagator::new(op, f, PropagatorConfig::with_steps_per_unit(10)).unwrap();
        let mut u = vec![1.0; 5];
        assert!(matches!(
            p.evolve(&p.field().origin(), 0.0, 2.0, &mut u),
            Err(Error::NonFinite { .. })
        ));
    }
}

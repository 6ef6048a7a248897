//! Pullback approximations of globally positive solutions, the uniqueness
//! test up to a positive factor, and the membership test in the principal
//! bundle.

use crate::bundle::{OrbitFibers, PrincipalFiber};
use crate::hilbert::ratio_oscillation;
use crate::hull::HullPoint;
use crate::par::Execution;
use crate::propagation::{Propagator, Trajectory};
use crate::separation::fit_common_slope;
use crate::{Error, Result};

/// A positive solution started from `u_seed` at time `-t_back`, kept on
/// `[0, t_fwd]` and rescaled to `‖ũ(0)‖₁ = 1`.
#[derive(Debug, Clone)]
pub struct GlobalSolutionApprox {
    pub t_back: f64,
    pub b: HullPoint,
    /// `ũ(t) = u(t) / ‖u(0)‖₁` on `[0, t_fwd]`.
    pub trajectory: Trajectory,
    /// `log ‖u(0)‖₁` of the unscaled solution.
    pub log_scale: f64,
    /// Log norms removed by the per-unit renormalization on `[-t_back, 0]`.
    pub renormalizations: Vec<f64>,
}

impl GlobalSolutionApprox {
    pub fn initial(&self) -> &[f64] {
        &self.trajectory.states[0]
    }

    pub fn t_fwd(&self) -> f64 {
        *self.trajectory.times.last().unwrap()
    }

    /// `ũ(t)` at a recorded time, matched to within `1e-9`.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        self.trajectory
            .times
            .iter()
            .position(|&s| (s - t).abs() < 1e-9)
            .map(|i| self.trajectory.states[i].as_slice())
    }
}

fn check_seed(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::invalid("seed", format!("length {} for {} nodes", u.len(), n)));
    }
    if u.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || u.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("seed", "must be nonnegative and nonzero"));
    }
    Ok(())
}

/// Propagates `u_seed` from `φ_{-t_back} b` to `φ_{t_fwd} b`, recording
/// every `stride`-th step on `[0, t_fwd]`.
pub fn approximate_global_positive(
    prop: &Propagator,
    b: &HullPoint,
    t_back: f64,
    u_seed: &[f64],
    t_fwd: f64,
    stride: usize,
) -> Result<GlobalSolutionApprox> {
    check_seed(u_seed, prop.len())?;
    if !(t_back >= 0.0 && t_fwd >= 0.0) {
        return Err(Error::invalid("time span", format!("t_back = {t_back}, t_fwd = {t_fwd}")));
    }
    let mesh = prop.mesh();
    let mut u = u_seed.to_vec();
    let mut renormalizations = Vec::new();
    let mut t = -t_back;
    while t < 0.0 {
        let next = (t + 1.0).min(0.0);
        prop.evolve(b, t, next, &mut u)?;
        let norm = mesh.normalize_l1(&mut u);
        if !(norm > 0.0) {
            return Err(Error::Degenerate("positive solution vanished".into()));
        }
        renormalizations.push(norm.ln());
        t = next;
    }
    let last = mesh.normalize_l1(&mut u);
    let log_scale = renormalizations.iter().sum::<f64>() + last.ln();
    let trajectory = prop.propagate(b, 0.0, t_fwd, &u, stride)?;
    Ok(GlobalSolutionApprox {
        t_back,
        b: b.clone(),
        trajectory,
        log_scale,
        renormalizations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessRow {
    pub t_back: f64,
    pub osc_t0: f64,
    pub osc_tfwd: f64,
    /// `⟨v*(b), u_a(0)⟩ / ⟨v*(b), u_b(0)⟩` for the unscaled solutions.
    pub kappa: f64,
    /// Median over nodes of `u_a(0) / u_b(0)`.
    pub median_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub rows: Vec<UniquenessRow>,
    /// Per-unit geometric decay rate of `osc_t0` in `t_back`, from the
    /// rows above the rounding floor.
    pub decay_rate: Option<f64>,
    pub kappa: f64,
    /// Set when `osc_t0` fails to decrease along the ladder.
    pub flagged: bool,
}

/// Oscillations below this are treated as rounding noise in the rate fit.
pub const OSC_FLOOR: f64 = 1e-12;

impl UniquenessReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].osc_t0 < w[0].osc_t0)
    }
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Builds both approximations for every rung of the `t_back` ladder and
/// compares them. `fiber` must be the principal fiber at `b`.
pub fn uniqueness_test(
    prop: &Propagator,
    fiber: &PrincipalFiber,
    seed_a: &[f64],
    seed_b: &[f64],
    ladder: &[f64],
    t_fwd: f64,
    exec: Execution,
) -> Result<UniquenessReport> {
    check_seed(seed_a, prop.len())?;
    check_seed(seed_b, prop.len())?;
    if ladder.is_empty() {
        return Err(Error::invalid("t_back ladder", "empty"));
    }
    let mesh = prop.mesh();
    let b = &fiber.b;
    let stride = usize::MAX;
    let cells = exec.try_map(2 * ladder.len(), |i| {
        let seed = if i % 2 == 0 { seed_a } else { seed_b };
        approximate_global_positive(prop, b, ladder[i / 2], seed, t_fwd, stride)
    })?;

    let rows: Vec<UniquenessRow> = cells
        .chunks(2)
        .zip(ladder)
        .map(|(pair, &t_back)| {
            let (ga, gb) = (&pair[0], &pair[1]);
            let scale = (ga.log_scale - gb.log_scale).exp();
            let ratios = ga.initial().iter().zip(gb.initial()).map(|(x, y)| scale * x / y).collect();
            UniquenessRow {
                t_back,
                osc_t0: ratio_oscillation(ga.initial(), gb.initial()),
                osc_tfwd: ratio_oscillation(ga.trajectory.final_state(), gb.trajectory.final_state()),
                kappa: scale * fiber.coordinate(mesh, ga.initial()) / fiber.coordinate(mesh, gb.initial()),
                median_ratio: median(ratios),
            }
        })
        .collect();

    let usable: Vec<&UniquenessRow> = rows.iter().filter(|r| r.osc_t0 > OSC_FLOOR).collect();
    let decay_rate = (usable.len() >= 2)
        .then(|| {
            let t = usable.iter().map(|r| r.t_back).collect();
            let y = usable.iter().map(|r| r.osc_t0.ln()).collect();
            fit_common_slope(&[(t, y)]).map(|(slope, _, _)| slope.exp())
        })
        .flatten();
    let mut report = UniquenessReport {
        kappa: rows.last().unwrap().kappa,
        rows,
        decay_rate,
        flagged: false,
    };
    let floor_reached = |r: &UniquenessRow| r.osc_t0 <= OSC_FLOOR;
    report.flagged = !report
        .rows
        .windows(2)
        .all(|w| w[1].osc_t0 < w[0].osc_t0 || (floor_reached(&w[0]) && floor_reached(&w[1])));
    Ok(report)
}

/// Rows `(t, ‖(I - P(φ_t b)) ũ(t)‖₁ / ‖ũ(t)‖₁)` at the orbit fiber times
/// inside the recorded window of `gsol`.
pub fn bundle_membership_test(
    prop: &Propagator,
    gsol: &GlobalSolutionApprox,
    orbit: &OrbitFibers,
) -> Result<Vec<(f64, f64)>> {
    let mesh = prop.mesh();
    let mut rows = Vec::new();
    for (k, fiber) in orbit.fibers.iter().enumerate() {
        let t = k as f64 * orbit.step;
        if t > gsol.t_fwd() + 1e-9 {
            break;
        }
        let u = gsol.state_at(t).ok_or_else(|| {
            Error::invalid("membership grid", format!("trajectory has no record at t = {t}"))
        })?;
        let (u1, _) = fiber.project(mesh, u);
        rows.push((t, mesh.l1_norm(&u1) / mesh.l1_norm(u)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn seeds_are_checked() {
        assert!(check_seed(&[0.0, 0.0], 2).is_err());
        assert!(check_seed(&[1.0, -1e-9], 2).is_err());
        assert!(check_seed(&[1.0], 2).is_err());
        assert!(check_seed(&[0.0, 1.0], 2).is_ok());
    }
}

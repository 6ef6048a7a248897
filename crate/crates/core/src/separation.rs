//! Exponential-separation constants of the principal bundle.
//!
//! For each sampled hull point a random vector in `ker v*(b)` and the
//! principal ray are transported side by side along the orbit. The
//! complementary iterate is re-projected onto `ker v*` after every step
//! with the transported dual vector, which keeps rounding from feeding the
//! principal direction back in when the ratio falls far below `ε`. The log
//! ratio series from all samples are fitted jointly with a common slope
//! and a per-sample intercept.

use crate::bundle::{OrbitFibers, PrincipalFiber};
use crate::hilbert::hilbert_metric;
use crate::hull::{FieldKind, HullPoint};
use crate::par::Execution;
use crate::propagation::Propagator;
use crate::spectrum::moduli_descending;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeparationOptions {
    /// Number of time units the ratios are followed for.
    pub k_max: usize,
    /// First time unit entering the fit.
    pub k_min: usize,
    /// Complementary test vectors per hull sample.
    pub trials: usize,
    /// Sub-steps per unit time; 1 gives the discrete estimate, larger values
    /// the continuous-time one on the grid `t = j / substeps`.
    pub substeps: usize,
    /// Random positive pairs per hull sample for the Hilbert contraction.
    pub contraction_pairs: usize,
    /// Fit residual above this fraction of `|slope|` is flagged.
    pub residual_threshold: f64,
    pub tol: f64,
    pub max_t: usize,
    pub exec: Execution,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        Self {
            k_max: 12,
            k_min: 2,
            trials: 4,
            substeps: 1,
            contraction_pairs: 8,
            residual_threshold: 0.05,
            tol: crate::bundle::DEFAULT_TOL,
            max_t: crate::bundle::DEFAULT_MAX_T,
            exec: Execution::default(),
        }
    }
}

/// Ratio series of one complementary test vector.
#[derive(Debug, Clone)]
pub struct RatioSeries {
    pub sample: usize,
    /// Times `t_j = j / substeps`, `j = 0..=k_max·substeps`.
    pub times: Vec<f64>,
    /// `log r(t_j)`, with `log r(0) = 0`.
    pub log_ratio: Vec<f64>,
}

impl RatioSeries {
    /// Whether `r` is nonincreasing up to a relative slack.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_ratio.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

#[derive(Debug, Clone)]
pub struct SeparationEstimate {
    /// Per-unit-time contraction factor `exp(slope)`.
    pub lambda: f64,
    pub mu: f64,
    pub dprime: f64,
    /// `min_b min v*(b) / max v*(b)`.
    pub k_const: f64,
    /// `min ⟨v*, w⟩ / ‖w‖₁` over random nonnegative `w`.
    pub l_const: f64,
    /// `max_b ‖P(b)‖` in L¹, which equals `max_b max v*(b)`.
    pub n_const: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub flagged: bool,
    /// Largest measured Hilbert contraction ratio of the time-1 map.
    pub contraction: f64,
    pub samples: usize,
    pub trials: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub substeps: usize,
    pub series: Vec<RatioSeries>,
    pub fibers: Vec<PrincipalFiber>,
}

impl SeparationEstimate {
    pub fn residual_ratio(&self) -> f64 {
        self.residual / self.mu.abs()
    }

    /// Geometric mean of `r` over all series at each grid time.
    pub fn mean_ratio(&self) -> Vec<(f64, f64)> {
        let Some(first) = self.series.first() else {
            return Vec::new();
        };
        let m = self.series.len() as f64;
        first
            .times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let s: f64 = self.series.iter().map(|s| s.log_ratio[j]).sum();
                (t, (s / m).exp())
            })
            .collect()
    }

    pub fn all_monotone(&self, slack: f64) -> bool {
        self.series.iter().all(|s| s.is_monotone(slack))
    }
}

/// Fixed-effects least squares: common slope, one intercept per series.
/// Returns `(slope, intercepts, rms residual)`.
pub fn fit_common_slope(series: &[(Vec<f64>, Vec<f64>)]) -> Option<(f64, Vec<f64>, f64)> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut means = Vec::with_capacity(series.len());
    for (t, y) in series {
        if t.is_empty() {
            return None;
        }
        let n = t.len() as f64;
        let tm = t.iter().sum::<f64>() / n;
        let ym = y.iter().sum::<f64>() / n;
        for (a, b) in t.iter().zip(y) {
            sxy += (a - tm) * (b - ym);
            sxx += (a - tm) * (a - tm);
        }
        means.push((tm, ym));
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercepts: Vec<f64> = means.iter().map(|(tm, ym)| ym - slope * tm).collect();
    let mut ss = 0.0;
    let mut count = 0usize;
    for ((t, y), c) in series.iter().zip(&intercepts) {
        for (a, b) in t.iter().zip(y) {
            let r = b - c - slope * a;
            ss += r * r;
            count += 1;
        }
    }
    Some((slope, intercepts, (ss / count as f64).sqrt()))
}

struct SampleResult {
    series: Vec<RatioSeries>,
    fiber: PrincipalFiber,
    l_min: f64,
    contraction: f64,
}

struct SampleDraws {
    complement: Vec<Vec<f64>>,
    nonnegative: Vec<Vec<f64>>,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

fn draw(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn run_sample(
    prop: &Propagator,
    index: usize,
    b: &HullPoint,
    draws: &SampleDraws,
    opts: &SeparationOptions,
) -> Result<SampleResult> {
    let mesh = prop.mesh();
    let s = opts.substeps;
    let tau = 1.0 / s as f64;
    let steps = opts.k_max * s;
    let orbit = OrbitFibers::compute(prop, b, tau, steps, opts.tol, opts.max_t)?;
    let f0 = &orbit.fibers[0];

    let mut states: Vec<Vec<f64>> = draws.complement.clone();
    let mut logs = vec![0.0; states.len()];
    for u in states.iter_mut() {
        f0.deflate(mesh, u);
        mesh.normalize_l1(u);
    }
    let mut log_ratio: Vec<Vec<f64>> = vec![vec![0.0]; states.len()];
    let mut log_principal = 0.0;
    for j in 0..steps {
        prop.evolve_batch(b, j as f64 * tau, (j + 1) as f64 * tau, &mut states)?;
        log_principal += orbit.step_growth[j];
        let next = &orbit.fibers[j + 1];
        for (i, u) in states.iter_mut().enumerate() {
            next.deflate(mesh, u);
            let norm = mesh.normalize_l1(u);
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "complementary iterate vanished at t = {}",
                    (j + 1) as f64 * tau
                )));
            }
            logs[i] += norm.ln();
            log_ratio[i].push(logs[i] - log_principal);
        }
    }
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * tau).collect();
    let series = log_ratio
        .into_iter()
        .map(|log_ratio| RatioSeries {
            sample: index,
            times: times.clone(),
            log_ratio,
        })
        .collect();

    let l_min = draws
        .nonnegative
        .iter()
        .map(|w| f0.coordinate(mesh, w) / mesh.l1_norm(w))
        .fold(f64::INFINITY, f64::min);

    let mut contraction = 0.0f64;
    for (u, w) in &draws.pairs {
        let before = hilbert_metric(u, w);
        let mut pair = vec![u.clone(), w.clone()];
        prop.evolve_batch(b, 0.0, 1.0, &mut pair)?;
        let after = hilbert_metric(&pair[0], &pair[1]);
        if before > 0.0 {
            contraction = contraction.max(after / before);
        }
    }

    Ok(SampleResult {
        series,
        fiber: orbit.fibers.into_iter().next().unwrap(),
        l_min,
        contraction,
    })
}

/// Separation constants over the given hull samples. All random vectors are
/// drawn up front from one stream seeded with `seed`, so the result does
/// not depend on the execution mode.
/// Relative gap below which the two leading moduli of an autonomous time-1
/// map count as tied.
pub const MODULUS_TIE: f64 = 1e-12;

/// Rejects an autonomous problem whose time-1 map has two leading
/// eigenvalue moduli within [`MODULUS_TIE`] of each other. Perron theory
/// rules this out for positive maps; the check guards the fit against a
/// broken discretization. Returns the two moduli.
pub fn check_autonomous_gap(prop: &Propagator) -> Result<(f64, f64)> {
    let m = prop.time_one_map(&prop.field().origin())?;
    let mods = moduli_descending(&m);
    let (first, second) = (mods[0], mods.get(1).copied().unwrap_or(0.0));
    if first - second < MODULUS_TIE * first {
        return Err(Error::Degenerate(format!(
            "leading moduli {first:e} and {second:e} of the time-1 map are tied"
        )));
    }
    Ok((first, second))
}

pub fn estimate_separation(
    prop: &Propagator,
    hull_samples: &[HullPoint],
    seed: u64,
    opts: &SeparationOptions,
) -> Result<SeparationEstimate> {
    if hull_samples.is_empty() {
        return Err(Error::invalid("hull samples", "none given"));
    }
    if opts.trials == 0 || opts.substeps == 0 {
        return Err(Error::invalid("separation options", "trials and substeps must be positive"));
    }
    if opts.k_max <= opts.k_min {
        return Err(Error::invalid(
            "separation options",
            format!("k_max = {} must exceed k_min = {}", opts.k_max, opts.k_min),
        ));
    }
    if prop.field().kind() == FieldKind::Constant {
        check_autonomous_gap(prop)?;
    }
    let n = prop.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<SampleDraws> = hull_samples
        .iter()
        .map(|_| SampleDraws {
            complement: (0..opts.trials).map(|_| draw(&mut rng, n, -1.0, 1.0)).collect(),
            nonnegative: (0..opts.trials).map(|_| draw(&mut rng, n, 0.0, 1.0)).collect(),
            pairs: (0..opts.contraction_pairs)
                .map(|_| (draw(&mut rng, n, 0.5, 1.5), draw(&mut rng, n, 0.5, 1.5)))
                .collect(),
        })
        .collect();

    let results = opts.exec.try_map(hull_samples.len(), |i| {
        run_sample(prop, i, &hull_samples[i], &draws[i], opts)
    })?;

    let mut series = Vec::new();
    let mut fibers = Vec::new();
    let mut l_const = f64::INFINITY;
    let mut contraction = 0.0f64;
    for r in results {
        series.extend(r.series);
        fibers.push(r.fiber);
        l_const = l_const.min(r.l_min);
        contraction = contraction.max(r.contraction);
    }

    let first = opts.k_min * opts.substeps;
    let data: Vec<(Vec<f64>, Vec<f64>)> = series
        .iter()
        .map(|s| (s.times[first..].to_vec(), s.log_ratio[first..].to_vec()))
        .collect();
    let (slope, _, residual) = fit_common_slope(&data)
        .ok_or_else(|| Error::Degenerate("separation fit has no spread in t".into()))?;
    if !slope.is_finite() {
        return Err(Error::Degenerate(format!("separation slope {slope}")));
    }
    let dprime = series
        .iter()
        .flat_map(|s| s.times.iter().zip(&s.log_ratio).map(|(t, y)| y - slope * t))
        .fold(f64::NEG_INFINITY, f64::max)
        .exp();
    let k_const = fibers
        .iter()
        .map(PrincipalFiber::uniform_positivity)
        .fold(f64::INFINITY, f64::min);
    let n_const = fibers.iter().map(PrincipalFiber::max_vstar).fold(0.0, f64::max);

    Ok(SeparationEstimate {
        lambda: slope.exp(),
        mu: -slope,
        dprime,
        k_const,
        l_const,
        n_const,
        residual,
        flagged: residual > opts.residual_threshold * slope.abs() || slope >= 0.0,
        contraction,
        samples: hull_samples.len(),
        trials: opts.trials,
        k_min: opts.k_min,
        k_max: opts.k_max,
        substeps: opts.substeps,
        series,
        fibers,
    })
}

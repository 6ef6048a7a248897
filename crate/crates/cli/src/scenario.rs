//! Scenario orchestration: dependency closure, deterministic seeding,
//! report files and the run manifest.

use crate::config::{Experiment, ScenarioConfig};
use crate::report::{Cell, Csv, OutputFile, Outputs};
use floquet_core::bundle::{max_invariance_defect, principal_fiber};
use floquet_core::positivity::{approximate_global_positive, bundle_membership_test, uniqueness_test};
use floquet_core::separation::{estimate_separation, SeparationEstimate, SeparationOptions};
use floquet_core::spectrum::spectrum;
use floquet_core::{Execution, HullPoint, OrbitFibers, PrincipalFiber, Propagator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigErrors),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Io { .. } => EXIT_IO,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub experiment: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiments: Vec<String>,
    pub seed: u64,
    pub config: Value,
    pub started: String,
    pub finished: String,
    /// `"ok"` or `"failed"`.
    pub status: String,
    pub diagnostic: Option<Diagnostic>,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub summary: Map<String, Value>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        if self.status == "ok" {
            EXIT_OK
        } else {
            EXIT_NUMERICAL
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub exec: Execution,
}

/// The requested experiments plus everything they depend on, in execution
/// order.
pub fn closure(requested: &[Experiment]) -> Vec<Experiment> {
    let mut out: Vec<Experiment> = Vec::new();
    for &e in requested {
        let deps: &[Experiment] = match e {
            Experiment::Separation => &[Experiment::Bundle],
            Experiment::Uniqueness | Experiment::Membership => &[Experiment::Bundle, Experiment::Separation],
            _ => &[],
        };
        out.extend(deps);
        out.push(e);
    }
    out.sort();
    out.dedup();
    out
}

/// Independent sub-seeds drawn in a fixed order from the scenario seed, so
/// every experiment sees the same randomness whichever subset runs.
struct Seeds {
    hull: u64,
    separation: u64,
    uniqueness: u64,
    membership: u64,
}

impl Seeds {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            hull: rng.random(),
            separation: rng.random(),
            uniqueness: rng.random(),
            membership: rng.random(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Shared results passed down the dependency chain.
#[derive(Default)]
struct State {
    fiber: Option<PrincipalFiber>,
    separation: Option<SeparationEstimate>,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    prop: Propagator,
    phase: HullPoint,
    seeds: Seeds,
    exec: Execution,
    outputs: Outputs,
    summary: Map<String, Value>,
    warnings: Vec<String>,
    state: State,
}

enum Failure {
    Numerical(floquet_core::Error),
    Flagged(String),
    Io(std::io::Error),
}

impl From<floquet_core::Error> for Failure {
    fn from(e: floquet_core::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn tag(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

impl Runner<'_> {
    fn record(&mut self, experiment: Experiment, value: Value) {
        self.summary.insert(experiment.name().to_string(), value);
    }

    fn spectrum(&mut self) -> Result<(), Failure> {
        let s = spectrum(self.prop.operator(), self.cfg.experiment.spectrum.count)?;
        let mut csv = Csv::new(&["index", "eigenvalue", "residual"]);
        for (i, (lam, res)) in s.eigenvalues.iter().zip(&s.residuals).enumerate() {
            csv.row(vec![i.into(), (*lam).into(), (*res).into()]);
        }
        self.outputs.write("spectrum.csv", &csv)?;
        self.record(
            Experiment::Spectrum,
            json!({
                "smallest": s.eigenvalues[0],
                "half_plane_bound": s.half_plane_bound,
                "gap": s.gap(),
            }),
        );
        Ok(())
    }

    fn simulate(&mut self) -> Result<(), Failure> {
        let p = &self.cfg.experiment.simulate;
        let u0 = p.initial.sample(self.prop.mesh());
        let traj = self.prop.propagate(&self.phase, p.t0, p.t1, &u0, p.stride)?;
        let n = self.prop.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("node-{i}")));
        let mut csv = Csv::new(&header);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let mut row: Vec<Cell> = vec![(*t).into()];
            row.extend(s.iter().map(|&x| Cell::Float(x)));
            csv.row(row);
        }
        self.outputs.write("trajectory.csv", &csv)?;
        let min_after_start = traj.states[1..]
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        self.record(
            Experiment::Simulate,
            json!({
                "records": traj.len(),
                "final_l1": self.prop.mesh().l1_norm(traj.final_state()),
                "min_state_after_start": if min_after_start.is_finite() { Some(min_after_start) } else { None },
            }),
        );
        Ok(())
    }

    fn bundle(&mut self) -> Result<(), Failure> {
        let p = &self.cfg.experiment.bundle;
        let prop = &self.prop;
        let base = principal_fiber(prop, &self.phase, p.tol, p.max_t)?;
        let mut csv = Csv::new(&["node", "v", "vstar"]);
        for (i, (v, w)) in base.v.iter().zip(&base.vstar).enumerate() {
            csv.row(vec![i.into(), (*v).into(), (*w).into()]);
        }
        self.outputs.write("fibers.csv", &csv)?;

        let p = &self.cfg.experiment.bundle;
        let samples = prop.field().hull_sample(p.samples, p.sampling, self.seeds.hull);
        let fibers = self
            .exec
            .try_map(samples.len(), |i| principal_fiber(prop, &samples[i], p.tol, p.max_t))?;
        let modes = prop.field().modes();
        let mut header = vec!["sample".to_string()];
        header.extend((0..modes).map(|j| format!("theta-{j}")));
        header.extend(["growth", "min_v", "min_vstar"].map(String::from));
        let mut csv = Csv::new(&header);
        for (i, f) in fibers.iter().enumerate() {
            let mut row: Vec<Cell> = vec![i.into()];
            row.extend(f.b.phase().iter().map(|&x| Cell::Float(x)));
            row.extend([f.growth.into(), f.min_v().into(), f.min_vstar().into()]);
            csv.row(row);
        }
        let defect = max_invariance_defect(prop, &self.phase, &p.invariance_times, p.tol, p.max_t)?;
        let min_v = fibers.iter().map(|f| f.min_v()).fold(base.min_v(), f64::min);
        let min_vstar = fibers.iter().map(|f| f.min_vstar()).fold(base.min_vstar(), f64::min);
        self.outputs.write("bundle_samples.csv", &csv)?;
        self.record(
            Experiment::Bundle,
            json!({
                "growth": base.growth,
                "min_v": min_v,
                "min_vstar": min_vstar,
                "invariance_defect_forward": defect.forward,
                "invariance_defect_adjoint": defect.adjoint,
                "samples": fibers.len(),
            }),
        );
        self.state.fiber = Some(base);
        Ok(())
    }

    fn separation(&mut self) -> Result<(), Failure> {
        let p = &self.cfg.experiment.separation;
        let b = &self.cfg.experiment.bundle;
        let samples = self.prop.field().hull_sample(p.samples, b.sampling, self.seeds.hull);
        let opts = SeparationOptions {
            k_max: p.k_max,
            k_min: p.k_min,
            trials: p.trials,
            substeps: p.substeps,
            contraction_pairs: p.pairs,
            residual_threshold: p.residual_threshold,
            tol: b.tol,
            max_t: b.max_t,
            exec: self.exec,
        };
        let est = estimate_separation(&self.prop, &samples, self.seeds.separation, &opts)?;
        let mut csv = Csv::new(&["k", "r_k"]);
        for (t, r) in est.mean_ratio() {
            let k = if p.substeps == 1 { Cell::Int(t as u64) } else { Cell::Float(t) };
            csv.row(vec![k, r.into()]);
        }
        self.outputs.write("separation.csv", &csv)?;
        let mut csv = Csv::new(&[
            "lambda", "mu", "Dprime", "K", "L", "N", "residual", "residual_ratio", "contraction", "samples", "trials",
            "flagged",
        ]);
        csv.row(vec![
            est.lambda.into(),
            est.mu.into(),
            est.dprime.into(),
            est.k_const.into(),
            est.l_const.into(),
            est.n_const.into(),
            est.residual.into(),
            est.residual_ratio().into(),
            est.contraction.into(),
            est.samples.into(),
            est.trials.into(),
            est.flagged.into(),
        ]);
        self.outputs.write("separation_summary.csv", &csv)?;
        if est.flagged {
            self.warnings.push(format!(
                "separation fit residual {:.3e} exceeds {} of the slope magnitude",
                est.residual, p.residual_threshold
            ));
        }
        self.record(
            Experiment::Separation,
            json!({
                "lambda": est.lambda,
                "mu": est.mu,
                "Dprime": est.dprime,
                "K": est.k_const,
                "L": est.l_const,
                "N": est.n_const,
                "residual_ratio": est.residual_ratio(),
                "contraction": est.contraction,
                "monotone": est.all_monotone(1e-9),
                "flagged": est.flagged,
            }),
        );
        self.state.separation = Some(est);
        Ok(())
    }

    fn uniqueness(&mut self) -> Result<(), Failure> {
        let p = &self.cfg.experiment.uniqueness;
        let fiber = self.state.fiber.as_ref().expect("bundle runs before uniqueness");
        let lambda = self.state.separation.as_ref().expect("separation runs before uniqueness").lambda;
        let n = self.prop.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.uniqueness);
        let seeds: Vec<(Vec<f64>, Vec<f64>)> = (0..p.pairs).map(|_| (uniform(&mut rng, n), uniform(&mut rng, n))).collect();

        let mut summary = Csv::new(&["pair", "decay_rate", "rate_over_lambda", "kappa", "osc_last", "strictly_decreasing", "flagged"]);
        let mut worst_rate: f64 = 0.0;
        let mut max_last: f64 = 0.0;
        let mut flagged = Vec::new();
        for (j, (sa, sb)) in seeds.iter().enumerate() {
            let rep = uniqueness_test(&self.prop, fiber, sa, sb, &p.ladder, p.t_fwd, self.exec)?;
            let mut csv = Csv::new(&["T_back", "osc_t0", "osc_tfwd", "kappa_estimate"]);
            for r in &rep.rows {
                csv.row(vec![r.t_back.into(), r.osc_t0.into(), r.osc_tfwd.into(), r.kappa.into()]);
            }
            self.outputs.write(&format!("uniqueness_p{}.csv", j + 1), &csv)?;
            let rate = rep.decay_rate.unwrap_or(f64::NAN);
            let last = rep.rows.last().unwrap().osc_t0;
            summary.row(vec![
                (j + 1).into(),
                rate.into(),
                (rate / lambda).into(),
                rep.kappa.into(),
                last.into(),
                rep.strictly_decreasing().into(),
                rep.flagged.into(),
            ]);
            worst_rate = worst_rate.max((rate / lambda - 1.0).abs());
            max_last = max_last.max(last);
            if rep.flagged {
                flagged.push(j + 1);
            }
        }
        self.outputs.write("uniqueness_summary.csv", &summary)?;
        self.record(
            Experiment::Uniqueness,
            json!({
                "pairs": p.pairs,
                "max_rate_deviation": worst_rate,
                "max_osc_last": max_last,
                "flagged_pairs": flagged,
            }),
        );
        if !flagged.is_empty() {
            return Err(Failure::Flagged(format!(
                "oscillation did not decay along the backstart ladder for pairs {flagged:?}"
            )));
        }
        Ok(())
    }

    fn membership(&mut self) -> Result<(), Failure> {
        let p = &self.cfg.experiment.membership;
        let b = &self.cfg.experiment.bundle;
        let lambda = self.state.separation.as_ref().expect("separation runs before membership").lambda;
        let orbit = OrbitFibers::compute(&self.prop, &self.phase, 1.0, p.t_fwd, b.tol, b.max_t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.membership);
        let seed = uniform(&mut rng, self.prop.len());
        let stride = self.prop.config().steps_per_unit();
        let tables = self.exec.try_map(p.t_back.len(), |i| {
            let g = approximate_global_positive(&self.prop, &self.phase, p.t_back[i], &seed, p.t_fwd as f64, stride)?;
            bundle_membership_test(&self.prop, &g, &orbit)
        })?;
        let mut initial = Vec::new();
        for (tb, rows) in p.t_back.iter().zip(&tables) {
            let mut csv = Csv::new(&["t", "defect"]);
            for &(t, d) in rows {
                csv.row(vec![t.into(), d.into()]);
            }
            self.outputs.write(&format!("membership_tb{}.csv", tag(*tb)), &csv)?;
            initial.push(json!({ "t_back": tb, "defect_t0": rows[0].1 }));
        }
        let ratios: Vec<Value> = p
            .t_back
            .windows(2)
            .zip(tables.windows(2))
            .map(|(tb, rows)| {
                json!({
                    "from": tb[0],
                    "to": tb[1],
                    "factor": rows[1][0].1 / rows[0][0].1,
                    "predicted": lambda.powf(tb[1] - tb[0]),
                })
            })
            .collect();
        self.record(Experiment::Membership, json!({ "initial_defects": initial, "ratios": ratios }));
        Ok(())
    }

    fn run(&mut self, e: Experiment) -> Result<(), Failure> {
        match e {
            Experiment::Spectrum => self.spectrum(),
            Experiment::Simulate => self.simulate(),
            Experiment::Bundle => self.bundle(),
            Experiment::Separation => self.separation(),
            Experiment::Uniqueness => self.uniqueness(),
            Experiment::Membership => self.membership(),
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn io_error(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs the closure of `requested` and writes the reports plus
/// `manifest.json`. Numerical failures are recorded in the manifest
/// (status `"failed"`) rather than returned as errors.
pub fn run_scenario(cfg: &ScenarioConfig, requested: &[Experiment], opts: &RunOptions) -> Result<RunManifest, RunError> {
    let started = now();
    let experiments = closure(requested);
    let seed = opts.seed.unwrap_or(cfg.experiment.seed);
    let dir = opts.out.clone().unwrap_or_else(|| cfg.experiment.output.clone());
    let outputs = Outputs::create(&dir).map_err(|e| io_error(&dir, e))?;
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiments: experiments.iter().map(|e| e.name().to_string()).collect(),
        seed,
        config: serde_json::to_value(&cfg.source).unwrap_or(Value::Null),
        started,
        finished: String::new(),
        status: "ok".into(),
        diagnostic: None,
        warnings: Vec::new(),
        outputs: Vec::new(),
        summary: Map::new(),
    };

    let mut outputs = Some(outputs);
    match cfg.build_propagator() {
        Err(e) => {
            manifest.status = "failed".into();
            manifest.diagnostic = Some(Diagnostic {
                experiment: "setup".into(),
                kind: "numerical".into(),
                message: e.to_string(),
            });
        }
        Ok(prop) => {
            let phase = cfg.phase(prop.field().modes());
            let mut runner = Runner {
                cfg,
                prop,
                phase,
                seeds: Seeds::new(seed),
                exec: opts.exec,
                outputs: outputs.take().unwrap(),
                summary: Map::new(),
                warnings: Vec::new(),
                state: State::default(),
            };
            for &e in &experiments {
                if let Err(f) = runner.run(e) {
                    let (kind, message) = match f {
                        Failure::Io(err) => return Err(io_error(runner.outputs.dir(), err)),
                        Failure::Numerical(err) => ("numerical", err.to_string()),
                        Failure::Flagged(msg) => ("flagged", msg),
                    };
                    manifest.status = "failed".into();
                    manifest.diagnostic = Some(Diagnostic {
                        experiment: e.name().into(),
                        kind: kind.into(),
                        message,
                    });
                    break;
                }
            }
            manifest.summary = runner.summary;
            manifest.warnings = runner.warnings;
            outputs = Some(runner.outputs);
        }
    }
    let outputs = outputs.unwrap();
    manifest.outputs = outputs.files.clone();
    manifest.finished = now();
    let path = outputs.dir().join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is serializable");
    std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
    Ok(manifest)
}

//! Scenario files and the pipelines they drive.
//!
//! A scenario is a JSON document naming a domain and one task. Running it
//! produces in-memory CSV tables plus a diagnostics object; writing them to
//! disk and building the manifest is left to [`crate::runner`].

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{argument, Error, Result};
use crate::flow::{
    flow_map, holder_exponent_estimate, lp_membership_ratio, modulus_violation_check, run_modulus_estimate, BiotSavart, FlowOptions,
    PairSet, TracerSpec, VorticityField, VorticitySpec,
};
use crate::geometry::{c64, Domain, DomainSpec, C64};
use crate::germ::{increments, iterated_log_identity_check, Germ, GermKind, Tower};
use crate::green::{GreenEvaluator, GreenOptions};
use crate::modulus::{dini_integral, loglog_bound, upsilon_sum, GammaFamily, Modulus, ModulusKind};
use crate::newton::{newton_potential, newton_second_derivatives, Density, NewtonOptions, Profile, Region};
use crate::taylor::{analyticity_estimate, taylor_coefficients, taylor_integrate};
use crate::vortex::{weak_residual, Method, TestFunction, TrajectoryEnd, VortexSystem, VortexTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Required by the vortex, jet, flow and green tasks and by `lp_ratio` studies.
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub green: GreenOptions,
    /// Integration or quadrature tolerance; each task has its own default.
    #[serde(default)]
    pub tol: Option<f64>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Vortices(VortexTask),
    Jets(JetTask),
    Flow(FlowTask),
    Germ(GermTask),
    Modulus(ModulusTask),
    Green(GreenTask),
    Potential(PotentialTask),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Vortices(_) => "vortices",
            Task::Jets(_) => "jets",
            Task::Flow(_) => "flow",
            Task::Germ(_) => "germ",
            Task::Modulus(_) => "modulus",
            Task::Green(_) => "green",
            Task::Potential(_) => "potential",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    #[default]
    Rk45,
    Taylor { order: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub t_a: f64,
    pub t_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexTask {
    pub positions: Vec<[f64; 2]>,
    pub strengths: Vec<f64>,
    #[serde(default)]
    pub circulations: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub method: MethodSpec,
    /// Number of uniform time intervals in the trajectory table.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetTask {
    pub positions: Vec<[f64; 2]>,
    pub strengths: Vec<f64>,
    #[serde(default)]
    pub circulations: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    /// When present, the jet integrator is compared against rk45 at this time.
    #[serde(default)]
    pub t_end: Option<f64>,
}

fn default_order() -> usize {
    16
}

/// One vorticity component or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(VorticitySpec),
    Many(Vec<VorticitySpec>),
}

impl OneOrMany {
    pub fn specs(&self) -> Vec<VorticitySpec> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Modulus of continuity: `kind` is one of `power {r}`, `hlog {c}`, `inv_log {exponent}`,
/// `from_germ {germ, c}`; `a` defaults to the largest admissible bound for the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusSpec {
    pub kind: ModulusName,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub germ: Option<Germ>,
    #[serde(default)]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusName {
    Power,
    Hlog,
    InvLog,
    FromGerm,
}

impl Default for ModulusSpec {
    fn default() -> Self {
        ModulusSpec { kind: ModulusName::Hlog, r: None, c: Some(1.0), exponent: None, germ: None, a: None }
    }
}

impl ModulusSpec {
    fn kind(&self) -> Result<ModulusKind> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Argument(format!("modulus {:?} needs `{name}`", self.kind)));
        Ok(match self.kind {
            ModulusName::Power => ModulusKind::Power { r: need(self.r, "r")? },
            ModulusName::Hlog => ModulusKind::HLog { c: need(self.c, "c")? },
            ModulusName::InvLog => ModulusKind::InvLog { exponent: need(self.exponent, "exponent")? },
            ModulusName::FromGerm => {
                let germ = self.germ.clone().ok_or_else(|| Error::Argument("modulus from_germ needs `germ`".into()))?;
                ModulusKind::FromGerm { germ: germ.validated()?, c: need(self.c, "c")? }
            }
        })
    }

    pub fn build(&self, diam: f64) -> Result<Modulus> {
        match self.a {
            Some(a) => Modulus::new(self.kind()?, a),
            None => Modulus::with_default_bound(self.kind()?, diam),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDiagnostics {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_k_min")]
    pub k_min: u32,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default)]
    pub modulus: ModulusSpec,
    /// Factor applied to the measured κ̂ before building Γ_t.
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

fn default_pairs() -> usize {
    256
}

fn default_k_min() -> u32 {
    2
}

fn default_k_max() -> u32 {
    21
}

fn default_inflation() -> f64 {
    1.1
}

impl Default for FlowDiagnostics {
    fn default() -> Self {
        FlowDiagnostics {
            pairs: default_pairs(),
            k_min: default_k_min(),
            k_max: default_k_max(),
            modulus: ModulusSpec::default(),
            inflation: default_inflation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowTask {
    pub vorticity: OneOrMany,
    #[serde(default)]
    pub circulations: Vec<f64>,
    #[serde(default = "default_tracers")]
    pub tracers: TracerSpec,
    pub t_end: f64,
    #[serde(default = "default_n_out")]
    pub n_out: usize,
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default)]
    pub markers: Option<usize>,
    /// Exponents p of the reported Lᵖ norms.
    #[serde(default = "default_lp")]
    pub lp: Vec<f64>,
    /// Flow-map modulus diagnostics; `null` disables them.
    #[serde(default = "default_flow_diagnostics")]
    pub diagnostics: Option<FlowDiagnostics>,
}

fn default_tracers() -> TracerSpec {
    TracerSpec::Grid(8)
}

fn default_n_out() -> usize {
    4
}

fn default_lp() -> Vec<f64> {
    vec![1.0, 2.0, 8.0]
}

fn default_flow_diagnostics() -> Option<FlowDiagnostics> {
    Some(FlowDiagnostics::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySpec {
    pub m: u32,
    pub p1: f64,
    pub p2: f64,
    /// Both endpoints stand for `exp^depth(value)`.
    #[serde(default)]
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpRatioSpec {
    pub vorticity: OneOrMany,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermTask {
    pub germ: Germ,
    /// Values of `log a` at which T_θ is tabulated.
    #[serde(default)]
    pub log_a: Vec<f64>,
    /// Admissibility checkpoints, given as `log A_k`.
    #[serde(default)]
    pub log_checkpoints: Vec<f64>,
    #[serde(default)]
    pub identities: Vec<IdentitySpec>,
    #[serde(default)]
    pub lp_ratio: Option<LpRatioSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonSpec {
    pub s_max: u32,
    pub m_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusTask {
    pub modulus: ModulusSpec,
    pub kappa: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    /// Γ_t is tabulated at `h = ã·2⁻ᵏ`, `k = 0..levels`.
    #[serde(default = "default_levels")]
    pub levels: u32,
    /// Compare Γ_t against the closed log-log bound (needs a `from_germ` modulus with θ_m).
    #[serde(default)]
    pub loglog: bool,
    #[serde(default)]
    pub upsilon: Option<UpsilonSpec>,
    /// Lower cut of the Dini integral.
    #[serde(default)]
    pub dini_h_min: Option<f64>,
}

fn default_levels() -> u32 {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenTask {
    /// Random interior pairs for the symmetry table.
    #[serde(default = "default_green_pairs")]
    pub pairs: usize,
    /// Compare against an MFS solve of the same domain.
    #[serde(default)]
    pub compare_mfs: bool,
}

fn default_green_pairs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant { value: f64 },
    Linear { c: f64, g: [f64; 2] },
    DiniRadial { x0: [f64; 2], amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTask {
    pub support: Region,
    pub profile: ProfileSpec,
    /// Evaluation points; defaults to a sunflower sample of the support.
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_potential_samples")]
    pub samples: usize,
}

fn default_potential_samples() -> usize {
    20
}

/// Result of a pipeline before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// `(file name, contents)` in emission order.
    pub files: Vec<(String, Vec<u8>)>,
    pub diagnostics: Value,
    /// Early-termination event, if any.
    pub event: Option<Value>,
}

/// Runtime overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> std::result::Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn seed(&self, o: &Overrides) -> u64 {
        o.seed.unwrap_or(self.seed)
    }

    fn tol(&self, o: &Overrides, default: f64) -> Result<f64> {
        let t = o.tol.or(self.tol).unwrap_or(default);
        if !(t > 0.0) || !t.is_finite() {
            return argument(format!("tolerance {t} must be positive"));
        }
        Ok(t)
    }

    fn domain(&self) -> Result<Domain> {
        match &self.domain {
            Some(d) => Domain::from_spec(d),
            None => argument(format!("task `{}` needs a domain", self.task.name())),
        }
    }

    fn green(&self) -> Result<Arc<GreenEvaluator>> {
        Ok(Arc::new(GreenEvaluator::build(self.domain()?, &self.green)?))
    }

    /// Runs the task. Argument and domain errors mean the scenario is invalid;
    /// the other error kinds are numerical failures.
    pub fn run(&self, o: &Overrides) -> Result<Outcome> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return argument("scenario name must be non-empty and contain no path separators");
        }
        match &self.task {
            Task::Vortices(t) => self.run_vortices(t, o),
            Task::Jets(t) => self.run_jets(t, o),
            Task::Flow(t) => self.run_flow(t, o),
            Task::Germ(t) => self.run_germ(t),
            Task::Modulus(t) => self.run_modulus(t),
            Task::Green(t) => self.run_green(t, o),
            Task::Potential(t) => self.run_potential(t, o),
        }
    }

    fn system(&self, positions: &[[f64; 2]], strengths: &[f64], circulations: &[f64]) -> Result<VortexSystem> {
        let z = positions.iter().map(|p| c64(p[0], p[1])).collect();
        VortexSystem::new(self.green()?, z, strengths.to_vec(), circulations.to_vec())
    }

    fn run_vortices(&self, task: &VortexTask, o: &Overrides) -> Result<Outcome> {
        let tol = self.tol(o, 1e-10)?;
        if task.samples == 0 {
            return argument("samples must be positive");
        }
        let sys = self.system(&task.positions, &task.strengths, &task.circulations)?;
        let tests: Vec<TestFunction> = task
            .test_functions
            .iter()
            .map(|s| TestFunction { center: c64(s.center[0], s.center[1]), radius: s.radius, t_a: s.t_a, t_b: s.t_b })
            .collect();
        let method = match task.method {
            MethodSpec::Rk45 => Method::Rk45,
            MethodSpec::Taylor { order } => Method::Taylor { order },
        };
        let traj = sys.integrate(task.t_end, tol, method)?;
        let t_stop = traj.t_end();
        let grid: Vec<f64> = (0..=task.samples).map(|k| t_stop * k as f64 / task.samples as f64).collect();
        let mut rows = vec![];
        for &t in &grid {
            for (i, z) in traj.dense.eval(t).iter().enumerate() {
                rows.push(vec![num(t), i.to_string(), num(z.re), num(z.im)]);
            }
        }
        let trajectory = csv_bytes(&["t", "vortex", "x", "y"], rows)?;
        let energy_rows = (0..traj.times.len())
            .map(|k| vec![num(traj.times[k]), num(traj.energy[k]), num(traj.min_pair_dist[k]), num(traj.dist_to_boundary[k])])
            .collect();
        let energy = csv_bytes(&["t", "W", "min_pair_dist", "dist_to_boundary"], energy_rows)?;
        let residuals = if matches!(traj.termination, TrajectoryEnd::Horizon) {
            tests.iter().map(|phi| weak_residual(&sys, &traj, phi)).collect::<Result<Vec<_>>>()?
        } else {
            vec![]
        };
        let radii: Vec<Vec<f64>> = grid.iter().map(|&t| traj.dense.eval(t).iter().map(|z| z.norm()).collect()).collect();
        let radius_spread: Vec<f64> = (0..sys.len())
            .map(|i| {
                let (lo, hi) = radii.iter().fold((f64::MAX, 0.0f64), |(l, h), r| (l.min(r[i]), h.max(r[i])));
                hi - lo
            })
            .collect();
        let revolutions: Vec<Option<f64>> = (0..sys.len()).map(|i| revolution_time(&traj, &grid, i)).collect();
        let diagnostics = json!({
            "tol": tol,
            "t_stop": t_stop,
            "accepted_steps": traj.steps.len(),
            "hamiltonian_drift": traj.hamiltonian_drift(),
            "energy_initial": traj.energy[0],
            "radius_spread": radius_spread,
            "first_revolution_time": revolutions,
            "weak_residuals": residuals,
            "termination": traj.termination,
        });
        let event = match traj.termination {
            TrajectoryEnd::Horizon => None,
            end => Some(serde_json::to_value(end).expect("serializable event")),
        };
        Ok(Outcome { files: vec![("trajectory.csv".into(), trajectory), ("energy.csv".into(), energy)], diagnostics, event })
    }

    fn run_jets(&self, task: &JetTask, o: &Overrides) -> Result<Outcome> {
        let sys = self.system(&task.positions, &task.strengths, &task.circulations)?;
        let kernel = sys.green.analytic().ok_or_else(|| Error::Unsupported("Taylor jets need a closed-form Green function".into()))?;
        let jets = taylor_coefficients(kernel, &sys.strengths, &sys.circulations, &sys.positions, task.order);
        let mut rows = vec![];
        for k in 0..=task.order {
            for (i, j) in jets.iter().enumerate() {
                rows.push(vec![k.to_string(), i.to_string(), "x".into(), num(j.c[k].re)]);
                rows.push(vec![k.to_string(), i.to_string(), "y".into(), num(j.c[k].im)]);
            }
        }
        let table = csv_bytes(&["k", "vortex", "coordinate", "a_k"], rows)?;
        let estimate = match analyticity_estimate(&[jets]) {
            Ok(e) => serde_json::to_value(e).expect("serializable estimate"),
            Err(Error::Singular(msg)) => json!({ "degenerate": msg }),
            Err(e) => return Err(e),
        };
        let mut diagnostics = json!({ "order": task.order, "analyticity": estimate });
        if let Some(t_end) = task.t_end {
            let tol = self.tol(o, 1e-13)?;
            let run = taylor_integrate(&sys, task.order, t_end, tol, None)?;
            let rk = sys.integrate(t_end, tol.max(1e-12), Method::Rk45)?;
            let (a, b) = (run.steps.eval(run.steps.t_end), rk.dense.eval(rk.t_end()));
            let gap = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            diagnostics["comparison"] = json!({
                "t_end": run.steps.t_end,
                "taylor_steps": run.steps.steps.len(),
                "termination": run.termination,
                "rk45_termination": rk.termination,
                "max_position_gap": gap,
            });
        }
        Ok(Outcome { files: vec![("jets.csv".into(), table)], diagnostics, event: None })
    }

    fn run_flow(&self, task: &FlowTask, o: &Overrides) -> Result<Outcome> {
        let green = self.green()?;
        let domain = &green.domain;
        let field = VorticityField::new(&task.vorticity.specs(), domain)?;
        let bs = BiotSavart::new(green.clone(), field.clone(), task.circulations.clone())?;
        let tracers = task.tracers.points(domain)?;
        let mut opts = FlowOptions { tol: self.tol(o, FlowOptions::default().tol)?, n_out: task.n_out, ..FlowOptions::default() };
        opts.cells = task.cells.unwrap_or(opts.cells);
        opts.markers = task.markers.unwrap_or(opts.markers);
        let pairs = match &task.diagnostics {
            Some(d) => {
                if !(task.t_end > 0.0) {
                    return argument("flow-map diagnostics need t_end > 0");
                }
                if !(d.inflation >= 1.0) {
                    return argument("κ̂ inflation must be at least 1");
                }
                Some(PairSet::sample(domain, d.pairs, d.k_min, d.k_max, self.seed(o))?)
            }
            None => None,
        };
        let n_tr = tracers.len();
        let mut all = tracers;
        if let Some(p) = &pairs {
            all.extend(&p.points);
        }
        let run = flow_map(&bs, &all, task.t_end, &opts)?;

        let mut rows = vec![];
        for (k, t) in run.times.iter().enumerate() {
            for (j, z) in run.tracers[k][..n_tr].iter().enumerate() {
                rows.push(vec![num(*t), j.to_string(), num(z.re), num(z.im)]);
            }
        }
        let mut files = vec![("tracers.csv".to_string(), csv_bytes(&["t", "tracer_id", "x", "y"], rows)?)];

        let lp0: Vec<f64> = task.lp.iter().map(|&p| field.lp_norm(domain, p)).collect::<Result<_>>()?;
        let norm_at = |k: usize, i: usize| {
            let p = task.lp[i];
            if run.stationary {
                lp0[i]
            } else if !run.markers[k].is_empty() {
                run.patch_lp_norm(k, p)
            } else {
                run.cloud_lp_norm(p).unwrap_or(lp0[i])
            }
        };
        let mut lp_rows = vec![];
        // drift of the transported norms relative to their own value at t = 0
        let mut lp_drift: f64 = 0.0;
        for (k, t) in run.times.iter().enumerate() {
            for (i, &p) in task.lp.iter().enumerate() {
                let (v, v0) = (norm_at(k, i), norm_at(0, i));
                if v0 > 0.0 {
                    lp_drift = lp_drift.max((v - v0).abs() / v0);
                }
                lp_rows.push(vec![num(*t), num(p), num(v)]);
            }
        }
        files.push(("lp_norms.csv".into(), csv_bytes(&["t", "p", "lp_norm"], lp_rows)?));

        let mut diagnostics = json!({
            "tol": opts.tol,
            "stationary": run.stationary,
            "steps": run.steps,
            "tracers": n_tr,
            "lp_initial": lp0,
            "lp_relative_drift": lp_drift,
        });
        if let (Some(d), Some(pairs)) = (&task.diagnostics, &pairs) {
            let diam = domain.diam();
            let mu = d.modulus.build(diam)?;
            let sub = restrict(&run, n_tr);
            let kappa = run_modulus_estimate(&bs, &sub, pairs, &mu)?;
            let family = GammaFamily::new(mu, d.inflation * kappa.max(1e-12), task.t_end)?;
            let stats = modulus_violation_check(&sub, pairs, &family)?;
            let fits: Vec<_> = (0..sub.times.len()).map(|k| holder_exponent_estimate(&sub, pairs, k)).collect::<Result<_>>()?;
            let rows = stats
                .iter()
                .zip(&fits)
                .map(|(s, f)| vec![num(s.t), num(f.r_hat), num(kappa), num(s.fraction()), s.checked.to_string(), num(f.width)])
                .collect();
            files.push((
                "diagnostics.csv".into(),
                csv_bytes(&["t", "r_hat", "kappa_hat", "violation_fraction", "checked", "r_hat_ci"], rows)?,
            ));
            let worst = stats.iter().map(|s| s.fraction()).fold(0.0, f64::max);
            let nonincreasing = fits.windows(2).all(|w| w[1].r_hat <= w[0].r_hat + w[0].width.max(w[1].width));
            diagnostics["modulus"] = json!({
                "kappa_hat": kappa,
                "inflation": d.inflation,
                "a_tilde": family.a_tilde,
                "max_violation_fraction": worst,
                "violations": stats,
                "holder": fits,
                "r_hat_nonincreasing": nonincreasing,
            });
        }
        Ok(Outcome { files, diagnostics, event: None })
    }

    fn run_germ(&self, task: &GermTask) -> Result<Outcome> {
        let germ = task.germ.clone().validated()?;
        let mut files = vec![];
        let mut tt_ok = true;
        if !task.log_a.is_empty() {
            let mut rows = vec![];
            for &la in &task.log_a {
                let (lt, eps) = germ.minimize(la)?;
                let bound = if la >= germ.p0 { Some(std::f64::consts::E * la * germ.eval(la)?) } else { None };
                if let Some(b) = bound {
                    tt_ok &= lt.exp() <= b * (1.0 + 1e-12);
                }
                rows.push(vec![num(la), num(lt.exp()), num(eps), bound.map(num).unwrap_or_default()]);
            }
            files.push(("t_theta.csv".into(), csv_bytes(&["log_a", "t_theta", "eps_star", "tt_bound"], rows)?));
        }
        let parts = germ.partial_integrals_log(&task.log_checkpoints)?;
        if !parts.is_empty() {
            let inc = increments(&parts);
            let rows = parts
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let d = if k == 0 { String::new() } else { num(inc[k - 1]) };
                    vec![num(p.log_upper), num(p.value), d, num(p.error), (p.converged as u8).to_string()]
                })
                .collect();
            files.push(("partial_integrals.csv".into(), csv_bytes(&["log_upper", "value", "increment", "error", "converged"], rows)?));
        }
        let mut identity_worst: f64 = 0.0;
        if !task.identities.is_empty() {
            let mut rows = vec![];
            for s in &task.identities {
                let c = iterated_log_identity_check(s.m, Tower::new(s.depth, s.p1), Tower::new(s.depth, s.p2))?;
                identity_worst = identity_worst.max(c.difference);
                rows.push(vec![s.m.to_string(), s.depth.to_string(), num(s.p1), num(s.p2), num(c.quadrature), num(c.closed_form), num(c.difference)]);
            }
            files.push(("identity.csv".into(), csv_bytes(&["m", "depth", "p1", "p2", "quadrature", "closed_form", "difference"], rows)?));
        }
        let mut diagnostics = json!({
            "p0": germ.p0,
            "tt_bound_holds": tt_ok,
            "partial_integrals_increasing": parts.windows(2).all(|w| w[1].value > w[0].value),
            "all_converged": parts.iter().all(|p| p.converged),
            "identity_max_difference": identity_worst,
        });
        if let Some(lp) = &task.lp_ratio {
            let domain = self.domain()?;
            let field = VorticityField::new(&lp.vorticity.specs(), &domain)?;
            let ratios = lp_membership_ratio(&field, &domain, &germ, &lp.p)?;
            let rows = lp.p.iter().zip(&ratios).map(|(p, r)| vec![num(*p), num(*r)]).collect();
            files.push(("lp_ratio.csv".into(), csv_bytes(&["p", "ratio"], rows)?));
            let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
            diagnostics["lp_ratio_variation"] = json!(if lo > 0.0 { hi / lo } else { f64::NAN });
        }
        Ok(Outcome { files, diagnostics, event: None })
    }

    fn run_modulus(&self, task: &ModulusTask) -> Result<Outcome> {
        let diam = self.domain.as_ref().map(|d| Domain::from_spec(d).map(|d| d.diam())).transpose()?.unwrap_or(2.0);
        let mu = task.modulus.build(diam)?;
        let loglog = if task.loglog {
            match (&task.modulus.germ, task.modulus.kind, task.modulus.c) {
                (Some(Germ { kind: GermKind::ThetaM { m }, .. }), ModulusName::FromGerm, Some(c)) => Some((*m, c)),
                _ => return argument("the log-log comparison needs a from_germ modulus built on theta_m"),
            }
        } else {
            None
        };
        let family = GammaFamily::new(mu.clone(), task.kappa, task.horizon)?;
        let mut rows = vec![];
        let mut dominated = true;
        for &t in &task.times {
            for k in 0..=task.levels {
                let h = family.a_tilde * 0.5f64.powi(k as i32);
                let g = family.gamma_any(t, h)?;
                let b = match loglog {
                    Some((m, c)) => {
                        let b = loglog_bound(m, c, task.kappa, t, h)?;
                        dominated &= g.value <= b;
                        num(b)
                    }
                    None => String::new(),
                };
                rows.push(vec![num(t), num(h), num(g.value), (g.saturated as u8).to_string(), b]);
            }
        }
        let mut files = vec![("gamma.csv".to_string(), csv_bytes(&["t", "h", "gamma", "saturated", "loglog_bound"], rows)?)];
        let mut diagnostics = json!({ "a": mu.a, "a_tilde": family.a_tilde });
        if loglog.is_some() {
            diagnostics["loglog_dominates"] = json!(dominated);
        }
        if let Some(u) = &task.upsilon {
            let mut rows = vec![];
            let mut below = true;
            for s in 1..=u.s_max {
                for m in 0..=u.m_max {
                    let r = upsilon_sum(s, m)?;
                    below &= r.sum <= r.bound;
                    rows.push(vec![s.to_string(), m.to_string(), num(r.sum), num(r.bound)]);
                }
            }
            files.push(("upsilon.csv".into(), csv_bytes(&["s", "m", "sum", "bound"], rows)?));
            diagnostics["upsilon_below_bound"] = json!(below);
        }
        if let Some(h_min) = task.dini_h_min {
            diagnostics["dini"] = serde_json::to_value(dini_integral(&mu, h_min)?).expect("serializable evidence");
        }
        Ok(Outcome { files, diagnostics, event: None })
    }

    fn run_green(&self, task: &GreenTask, o: &Overrides) -> Result<Outcome> {
        let ev = self.green()?;
        let pts = sample_interior(&ev.domain, 2 * task.pairs, self.seed(o))?;
        let mfs = if task.compare_mfs {
            Some(GreenEvaluator::build(ev.domain.clone(), &GreenOptions { force_mfs: true, ..self.green.clone() })?)
        } else {
            None
        };
        let rows: Vec<(Vec<String>, f64, f64)> = pts
            .par_chunks(2)
            .map(|p| {
                let (x, y) = (p[0], p[1]);
                let (gxy, gyx) = (ev.green(x, y), ev.green(y, x));
                let gap = mfs.as_ref().map(|m| (m.green(x, y) - gxy).abs()).unwrap_or(0.0);
                let mut row = vec![num(x.re), num(x.im), num(y.re), num(y.im), num(gxy), num(gyx)];
                if mfs.is_some() {
                    row.push(num(gap));
                }
                (row, (gxy - gyx).abs(), gap)
            })
            .collect();
        let asym = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let gap = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let mut header = vec!["x1", "x2", "y1", "y2", "G_xy", "G_yx"];
        if mfs.is_some() {
            header.push("mfs_gap");
        }
        let table = csv_bytes(&header, rows.into_iter().map(|r| r.0).collect())?;
        let mut diagnostics = json!({ "backend": ev.backend_name(), "max_asymmetry": asym });
        if mfs.is_some() {
            diagnostics["max_mfs_gap"] = json!(gap);
        }
        if ev.d() > 0 {
            let pm = ev.period_matrix()?;
            let d = ev.d();
            let mat = |m: &nalgebra::DMatrix<f64>| (0..d).map(|i| (0..d).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>();
            let mut basis = vec![vec![0.0; d]; d];
            for (i, row) in basis.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = ev.circulation(i + 1, |x| ev.harmonic_field(j + 1, x))?;
                }
            }
            diagnostics["period_matrix"] = json!({ "m": mat(&pm.m), "p": mat(&pm.p), "condition": pm.condition });
            diagnostics["harmonic_circulations"] = json!(basis);
        }
        Ok(Outcome { files: vec![("green.csv".into(), table)], diagnostics, event: None })
    }

    fn run_potential(&self, task: &PotentialTask, o: &Overrides) -> Result<Outcome> {
        let profile = match &task.profile {
            ProfileSpec::Constant { value } => Profile::Constant(*value),
            ProfileSpec::Linear { c, g } => Profile::Linear { c: *c, g: *g },
            ProfileSpec::DiniRadial { x0, amplitude } => Profile::DiniRadial { x0: *x0, amplitude: *amplitude },
        };
        let f = Density::new(task.support.clone(), profile, None)?;
        let points: Vec<C64> = match &task.points {
            Some(p) => p.iter().map(|q| c64(q[0], q[1])).collect(),
            None => {
                let (c, r) = task.support.circumdisk();
                (0..task.samples)
                    .map(|k| c + C64::from_polar(0.85 * r * (k as f64 / task.samples as f64).sqrt(), 2.4 * k as f64))
                    .filter(|p| task.support.contains(*p))
                    .collect()
            }
        };
        let rel = self.tol(o, NewtonOptions::default().rel_tol)?;
        let opts = NewtonOptions { rel_tol: rel, abs_tol: 0.1 * rel };
        let rows = points
            .par_iter()
            .map(|&x| {
                let psi = newton_potential(&f, x, &opts)?;
                let d = newton_second_derivatives(&f, x, &opts)?;
                Ok((x, psi, d))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut lap, mut asym): (f64, f64) = (0.0, 0.0);
        let table = rows
            .iter()
            .map(|(x, psi, d)| {
                lap = lap.max((d.trace() - d.f).abs());
                asym = asym.max((d.u[0][1] - d.u[1][0]).abs());
                vec![num(x.re), num(x.im), num(d.f), num(*psi), num(d.u[0][0]), num(d.u[0][1]), num(d.u[1][0]), num(d.u[1][1])]
            })
            .collect();
        let table = csv_bytes(&["x", "y", "f", "psi", "u11", "u12", "u21", "u22"], table)?;
        let diagnostics = json!({ "points": rows.len(), "max_trace_residual": lap, "max_mixed_asymmetry": asym, "rel_tol": rel });
        Ok(Outcome { files: vec![("potential.csv".into(), table)], diagnostics, event: None })
    }
}

/// The run restricted to the tracers from index `skip` on.
fn restrict(run: &crate::flow::FlowMapRun, skip: usize) -> crate::flow::FlowMapRun {
    let mut sub = run.clone();
    for z in &mut sub.tracers {
        z.drain(..skip);
    }
    sub
}

/// First time at which vortex `i` completes a full turn about the origin.
fn revolution_time(traj: &VortexTrajectory, grid: &[f64], i: usize) -> Option<f64> {
    let arg = |t: f64| traj.dense.eval(t)[i].arg();
    let start = arg(0.0);
    let mut acc = 0.0;
    let mut prev = start;
    for w in grid.windows(2) {
        let next = arg(w[1]);
        let step = (next - prev + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        if (acc + step).abs() >= TAU {
            // bisect on the unwrapped angle inside [w0, w1]
            let (base, dir) = (acc, step.signum());
            let turned = |t: f64| base + ((arg(t) - prev + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI);
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if dir * turned(mid) >= TAU {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        acc += step;
        prev = next;
    }
    None
}

/// `n` seeded points at least `0.02·diam` away from the boundary.
pub fn sample_interior(domain: &Domain, n: usize, seed: u64) -> Result<Vec<C64>> {
    let poly = domain.outer.polygon();
    let (lo, hi) = poly.iter().fold((c64(f64::MAX, f64::MAX), c64(f64::MIN, f64::MIN)), |(lo, hi), v| {
        (c64(lo.re.min(v.re), lo.im.min(v.im)), c64(hi.re.max(v.re), hi.im.max(v.im)))
    });
    let margin = 0.02 * domain.diam();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::Convergence("could not sample interior points".into()));
        }
        let p = c64(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
        if domain.contains(p) && domain.dist_to_boundary(p) > margin {
            out.push(p);
        }
    }
    Ok(out)
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(vec![]);
    let io = |e: csv::Error| Error::Argument(format!("csv encoding: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Argument(format!("csv encoding: {e}")))
}


//! JSON run configuration and the command runner behind the `delaylift` binary.
//!
//! Schema (every key except `command` and `system` may be omitted):
//!
//! ```json
//! {
//!   "command": "simulate",
//!   "system": { "family": "heat", "n": 64 },
//!   "delay": { "r": 1.0, "m": 32, "atoms": [{ "theta": -1.0, "weight": 1.0 }] },
//!   "run": { "horizon": 2.0, "n_paths": 4, "seed": 7, "output_dir": "out" }
//! }
//! ```
//!
//! Without `atoms` the delay is a dead time `δ_{-r}` (or `δ_0` with `"no_delay": true`).
//! Outputs are pure functions of the config bytes and the seed: paths are seeded
//! per index and every file is written by one writer after ordered aggregation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delay::{Atom, DelayMeasure, Density, HistorySegment, Profile};
use crate::exec::Exec;
use crate::lift::LiftedSystem;
use crate::report::{write_reports_csv, EstimateReport};
use crate::sde::{brownian_path, mean_half_width, simulate_mild, write_trajectory_csv};
use crate::signal::Signal;
use crate::systems::{Family, SystemSpec, DEFAULT_HORIZON, DEFAULT_M, DEFAULT_R};
use crate::verify::{
    admissibility_suite, block_semigroup_check, constant_conservation, delay_line_check, heat_exponent_check,
    l2_conservation, no_delay_check, oracle_equivalence_with, phi_w_check, regularity_suite, resolvent_block_check,
    run_cases, default_exponent_times, Scenario, VerificationResult, EQUIVALENCE_TOL,
};
use crate::{grid_steps, re, CMatrix, CVector, Error, Result, C64};

/// Bumped whenever an output layout changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Verify,
    Probe,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub system: SystemSpec,
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub run: RunSpec,
    /// SHA-256 of the config text, filled by the parser.
    #[serde(skip)]
    pub source_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub theta: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub profile: Profile,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub atoms: Option<Vec<AtomSpec>>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub no_delay: bool,
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self {
            r: DEFAULT_R,
            m: DEFAULT_M,
            atoms: None,
            density: None,
            no_delay: false,
        }
    }
}

impl DelaySpec {
    pub fn measure(&self) -> Result<DelayMeasure> {
        let scalar = |w: f64| CMatrix::from_element(1, 1, re(w));
        let atoms = match &self.atoms {
            Some(list) => list
                .iter()
                .map(|a| Atom {
                    theta: a.theta,
                    weight: scalar(a.weight),
                })
                .collect(),
            None if self.density.is_some() => Vec::new(),
            None => vec![Atom {
                theta: if self.no_delay { 0.0 } else { -self.r },
                weight: scalar(1.0),
            }],
        };
        let density = self.density.as_ref().map(|d| Density {
            profile: d.profile.clone(),
            weight: scalar(d.weight),
        });
        DelayMeasure::new(self.r, 1, atoms, density, self.no_delay)
    }

    pub fn dt(&self) -> f64 {
        self.r / self.m as f64
    }
}

/// Initial state profile on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateProfile {
    Zero,
    Const { value: f64 },
    /// `mean + amplitude · cos(π x)`.
    Cosine { mean: f64, amplitude: f64 },
}

impl StateProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            StateProfile::Zero => 0.0,
            StateProfile::Const { value } => *value,
            StateProfile::Cosine { mean, amplitude } => mean + amplitude * (std::f64::consts::PI * x).cos(),
        }
    }
}

/// Input profile, used both as initial history on `[-r, 0]` and as control on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputProfile {
    Zero,
    Const { value: f64 },
    /// `scale · exp(rate · t)`.
    Exp { scale: f64, rate: f64 },
    /// `amplitude · sin(2π frequency · t)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl InputProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            InputProfile::Zero => 0.0,
            InputProfile::Const { value } => *value,
            InputProfile::Exp { scale, rate } => scale * (rate * t).exp(),
            InputProfile::Sine { amplitude, frequency } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
        }
    }
}

/// Tolerances used by `verify`; omitted keys keep the built-in values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub equivalence: f64,
    /// Defaults to 1e-8 for the toy system and 1e-6 otherwise.
    pub no_delay: Option<f64>,
    pub semigroup: f64,
    pub resolvent: f64,
    pub delay_line: f64,
    pub picard: f64,
    pub conservation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            equivalence: EQUIVALENCE_TOL,
            no_delay: None,
            semigroup: 1e-6,
            resolvent: 1e-6,
            delay_line: 1e-12,
            picard: 1e-7,
            conservation: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_state")]
    pub state: StateProfile,
    #[serde(default = "default_input")]
    pub input: InputProfile,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            n_paths: default_paths(),
            seed: default_seed(),
            output_dir: default_output_dir(),
            state: default_state(),
            input: default_input(),
            tolerances: Tolerances::default(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_r() -> f64 {
    DEFAULT_R
}
fn default_m() -> usize {
    DEFAULT_M
}
fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}
fn default_paths() -> usize {
    4
}
fn default_seed() -> u64 {
    20_240_601
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("delaylift-out")
}
fn default_state() -> StateProfile {
    StateProfile::Cosine {
        mean: 1.0,
        amplitude: 0.5,
    }
}
fn default_input() -> InputProfile {
    InputProfile::Exp {
        scale: 0.5,
        rate: -0.5,
    }
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.into(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Syntax errors become [`Error::Parse`]; schema and constraint violations become
/// [`Error::Validation`] carrying the key path.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let syntax = |e: serde_json::Error| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let mut de = serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            invalid(&path, inner.to_string())
        } else {
            syntax(inner)
        }
    })?;
    de.end().map_err(syntax)?;
    cfg.validate()?;
    cfg.source_hash = sha256_hex(text.as_bytes());
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(|e| invalid("system", e.to_string()))?;
        let d = &self.delay;
        if !(d.r.is_finite() && d.r > 0.0) {
            return Err(invalid("delay.r", format!("delay length must be positive, got {}", d.r)));
        }
        if d.m == 0 {
            return Err(invalid("delay.m", "need at least one history cell"));
        }
        let nu = d.measure().map_err(|e| invalid("delay", e.to_string()))?;
        nu.stencil(d.m).map_err(|e| invalid("delay.atoms", e.to_string()))?;
        let run = &self.run;
        if !(run.horizon.is_finite() && run.horizon > 0.0) {
            return Err(invalid("run.horizon", format!("horizon must be positive, got {}", run.horizon)));
        }
        if grid_steps(run.horizon, d.dt()).is_none() {
            return Err(invalid(
                "run.horizon",
                format!("horizon {} is not a multiple of r/m = {}", run.horizon, d.dt()),
            ));
        }
        if run.n_paths == 0 {
            return Err(invalid("run.n_paths", "need at least one path"));
        }
        let t = &run.tolerances;
        let tols = [
            ("equivalence", t.equivalence),
            ("no_delay", t.no_delay.unwrap_or(1.0)),
            ("semigroup", t.semigroup),
            ("resolvent", t.resolvent),
            ("delay_line", t.delay_line),
            ("picard", t.picard),
            ("conservation", t.conservation),
        ];
        if let Some((k, v)) = tols.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(&format!("run.tolerances.{k}"), format!("tolerance must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<LiftedSystem> {
        self.system.build(self.delay.measure()?, self.delay.m)
    }

    pub fn n_steps(&self) -> usize {
        grid_steps(self.run.horizon, self.delay.dt()).expect("validated horizon")
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    format_version: u32,
    crate_version: &'a str,
    command: Command,
    config_sha256: &'a str,
    system_sha256: String,
    system: &'a str,
    seed: u64,
    r: f64,
    m: usize,
    dt: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    passed: bool,
    files: Vec<String>,
}

/// Runs the command and maps the outcome to the exit-code contract:
/// 0 success, 1 failed verification, 2 error.
pub fn run(cfg: &RunConfig, exec: Exec, quiet: bool) -> i32 {
    match execute(cfg, exec) {
        Ok(out) => {
            if !quiet {
                for line in &out.lines {
                    println!("{line}");
                }
            }
            if out.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Runs the command and writes its files plus `metadata.json` into the output directory.
pub fn execute(cfg: &RunConfig, exec: Exec) -> Result<Outcome> {
    cfg.validate()?;
    let ls = cfg.build()?;
    let dir = &cfg.run.output_dir;
    fs::create_dir_all(dir)?;
    let (mut out, files) = match cfg.command {
        Command::Simulate => simulate(cfg, &ls, exec)?,
        Command::Verify => verify(cfg, &ls, exec)?,
        Command::Probe => probe(cfg, &ls, exec)?,
    };
    let mut names = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(&name);
        fs::write(&path, bytes)?;
        out.files.push(path);
        names.push(name);
    }
    let meta = Metadata {
        format_version: FORMAT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        command: cfg.command,
        config_sha256: &cfg.source_hash,
        system_sha256: sha256_hex(serde_json::to_string(&cfg.system).expect("spec serializes").as_bytes()),
        system: &ls.label,
        seed: cfg.run.seed,
        r: ls.r(),
        m: ls.m(),
        dt: ls.dt(),
        horizon: cfg.run.horizon,
        n_steps: cfg.n_steps(),
        n_paths: cfg.run.n_paths,
        passed: out.passed,
        files: names,
    };
    let meta_path = dir.join("metadata.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")?;
    out.files.push(meta_path);
    Ok(out)
}

type Files = Vec<(String, Vec<u8>)>;

fn simulate(cfg: &RunConfig, ls: &LiftedSystem, exec: Exec) -> Result<(Outcome, Files)> {
    let n = cfg.n_steps();
    let dt = ls.dt();
    let (state, input) = (&cfg.run.state, &cfg.run.input);
    let xi = CVector::from_iterator(
        ls.bt().n(),
        ls.bt().geometry.free_positions.iter().map(|&x| re(state.eval(x))),
    );
    let vec = |t: f64| CVector::from_element(1, re(input.eval(t)));
    let phi = HistorySegment::from_fn(ls.r(), ls.m(), 1, vec);
    let u = Signal::from_fn(1, dt, n, vec);
    let per_path = exec.map_range(cfg.run.n_paths, |p| -> Result<(Vec<u8>, [f64; 3])> {
        let path = brownian_path(n, dt, cfg.run.seed, p as u64)?;
        let traj = simulate_mild(ls, &xi, &phi, &u, &path)?;
        let mut csv = Vec::new();
        write_trajectory_csv(ls, &traj, &mut csv)?;
        let last = ls.bt().metric().norm(&traj.states[n].x);
        Ok((csv, [last, traj.outputs.l2_norm(), traj.outputs.gaps() as f64]))
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let mut files = Files::new();
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["path", "final_state_norm", "output_l2_norm", "gaps"])?;
    for (p, (bytes, stats)) in per_path.iter().enumerate() {
        files.push((format!("trajectory_{p:04}.csv"), bytes.clone()));
        summary.write_record([
            p.to_string(),
            stats[0].to_string(),
            stats[1].to_string(),
            stats[2].to_string(),
        ])?;
    }
    files.push(("summary.csv".into(), summary.into_inner().map_err(|e| e.into_error())?));
    let energies: Vec<f64> = per_path.iter().map(|(_, s)| s[0] * s[0]).collect();
    let (mean, hw) = mean_half_width(&energies);
    let gaps: f64 = per_path.iter().map(|(_, s)| s[2]).sum();
    let lines = vec![format!(
        "simulated {} paths of {} on {} steps: E|X(T)|^2 = {mean:.6e} +/- {hw:.2e}, output gaps {gaps}",
        cfg.run.n_paths, ls.label, n
    )];
    files.push(("report.txt".into(), text(&lines)));
    Ok((
        Outcome {
            passed: true,
            lines,
            files: Vec::new(),
        },
        files,
    ))
}

type Case = Box<dyn Fn() -> Result<VerificationResult> + Sync + Send>;

fn verify(cfg: &RunConfig, ls: &LiftedSystem, exec: Exec) -> Result<(Outcome, Files)> {
    let tol = cfg.run.tolerances.clone();
    let seed = cfg.run.seed;
    let scenario = Scenario {
        horizon: cfg.run.horizon,
        seed,
        paths: cfg.run.n_paths,
        ..Scenario::default()
    };
    let mut cases: Vec<(String, Case)> = Vec::new();
    if ls.nu().is_no_delay() {
        let bound = tol.no_delay.unwrap_or(if cfg.system.family == Family::Toy { 1e-8 } else { 1e-6 });
        let l = ls.clone();
        cases.push(("equivalence".into(), Box::new(move || no_delay_check(&l, &scenario, bound))));
    } else {
        let fine_spec = match cfg.system.family {
            Family::Toy => cfg.system.clone(),
            _ => cfg.system.clone().with_cells(2 * cfg.system.n),
        };
        let fine = fine_spec.build(cfg.delay.measure()?, 2 * cfg.delay.m)?;
        let l = ls.clone();
        let t = tol.equivalence;
        cases.push((
            "equivalence".into(),
            Box::new(move || oracle_equivalence_with(&l, &fine, &scenario, t)),
        ));
    }
    let l = ls.clone();
    let t = tol.semigroup;
    cases.push(("semigroup".into(), Box::new(move || block_semigroup_check(&l, 8, seed, t))));
    let l = ls.clone();
    let t = tol.resolvent;
    cases.push((
        "resolvent".into(),
        Box::new(move || resolvent_block_check(&l, &[C64::new(2.0, 0.0), C64::new(3.0, 4.0)], 32, seed, t)),
    ));
    let l = ls.clone();
    let t = tol.delay_line;
    cases.push(("delay_line".into(), Box::new(move || delay_line_check(&l, seed, t))));
    let l = ls.clone();
    let t = tol.picard;
    cases.push(("phi_w".into(), Box::new(move || phi_w_check(&l, &scenario, t))));
    let l = ls.clone();
    cases.push(("regularity".into(), Box::new(move || regularity_suite(&l).map(|r| r.0))));
    let l = ls.clone();
    let (t, horizon) = (tol.conservation, cfg.run.horizon);
    match cfg.system.family {
        Family::Heat => cases.push((
            "conservation".into(),
            Box::new(move || constant_conservation(&l, horizon, t)),
        )),
        Family::Schrodinger => cases.push((
            "conservation".into(),
            Box::new(move || l2_conservation(&l, horizon, seed, t)),
        )),
        Family::Toy => {}
    }
    let results = run_cases(cases, exec);
    let mut lines = Vec::new();
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(["case", "check", "passed", "kind", "key", "value"])?;
    let mut passed = true;
    let mut first_error = None;
    for (case, res) in results {
        match res {
            Ok(v) => {
                passed &= v.passed;
                lines.push(v.summary());
                for (kind, list) in [("measured", &v.measured), ("threshold", &v.thresholds)] {
                    for (k, x) in list {
                        table.write_record([&case, &v.name, &v.passed.to_string(), kind, k, &x.to_string()])?;
                    }
                }
            }
            Err(e) => {
                lines.push(format!("ERROR {case}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    let files = vec![
        ("verification.csv".to_string(), table.into_inner().map_err(|e| e.into_error())?),
        ("report.txt".to_string(), text(&lines)),
    ];
    if let Some(e) = first_error {
        write_partial(cfg, &files)?;
        return Err(e);
    }
    Ok((
        Outcome {
            passed,
            lines,
            files: Vec::new(),
        },
        files,
    ))
}

/// Keeps the evidence of a run that ends in an error.
fn write_partial(cfg: &RunConfig, files: &Files) -> Result<()> {
    for (name, bytes) in files {
        fs::write(cfg.run.output_dir.join(name), bytes)?;
    }
    Ok(())
}

fn probe(cfg: &RunConfig, ls: &LiftedSystem, exec: Exec) -> Result<(Outcome, Files)> {
    let nu = cfg.delay.measure()?;
    let n = cfg.system.n;
    let family = match cfg.system.family {
        Family::Toy => vec![ls.clone()],
        _ => [n / 2, n, 2 * n]
            .into_iter()
            .map(|c| cfg.system.clone().with_cells(c).build(nu.clone(), cfg.delay.m))
            .collect::<Result<Vec<_>>>()?,
    };
    let (adm, mut reports): (VerificationResult, Vec<EstimateReport>) =
        admissibility_suite(&family, cfg.run.horizon, exec)?;
    let (reg, reg_reports) = regularity_suite(ls)?;
    reports.extend(reg_reports);
    let mut results = vec![adm, reg];
    if cfg.system.family == Family::Heat {
        results.push(heat_exponent_check(ls, &default_exponent_times())?);
    }
    let mut lines: Vec<String> = results.iter().map(VerificationResult::summary).collect();
    for rep in &reports {
        lines.push(format!("{}: {} (threshold {})", rep.quantity, rep.verdict, rep.threshold));
    }
    let mut csv = Vec::new();
    write_reports_csv(&reports, &mut csv)?;
    let files = vec![("estimates.csv".to_string(), csv), ("report.txt".to_string(), text(&lines))];
    Ok((
        Outcome {
            passed: results.iter().all(|r| r.passed),
            lines,
            files: Vec::new(),
        },
        files,
    ))
}

fn text(lines: &[String]) -> Vec<u8> {
    let mut s = lines.join("\n");
    s.push('\n');
    s.into_bytes()
}

//! Command-line front end: config resolution, experiment dispatch and
//! reproducible artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{self, CURVE_TOL, MOMENT_TABLE_TOL, SYMMETRY_TOL};
use crate::model::{ModelParams, SpinState};
use crate::simulator::{PulseSpec, SimConfig};

pub const TOOL_NAME: &str = "replica-lab";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const THREADS_ENV: &str = "REPLICA_LAB_THREADS";
/// Normalization slack accepted for states given on the command line.
pub const STATE_NORM_TOL: f64 = 1e-9;

/// Exit code for a run whose cross-checks failed.
pub const EXIT_CHECK_FAILED: i32 = 3;
/// Exit code for configuration or runtime errors.
pub const EXIT_ERROR: i32 = 1;

const SYMMETRY_PAIRS: [(usize, usize); 5] = [(1, 1), (2, 0), (2, 1), (1, 2), (2, 2)];
/// Symmetry check times in units of 1/max(Γ, Δ).
const SYMMETRY_TIMES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Parser)]
#[command(name = TOOL_NAME, version, about = "Replica moments and noise trajectories for a dephased two-level system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// P_LL(t) and the coherence from closed form, replica engine and Monte Carlo.
    Decay(DecayArgs),
    /// Stationary moment table and initial/final symmetry defects.
    Moments(MomentsArgs),
    /// Stationary distribution of P_LL: histogram, moments, KS test.
    Dist(DistArgs),
    /// Sensitivity of the final probability to the initial state.
    Sense(SenseArgs),
    /// Response to a phase pulse at t0.
    Pulse(PulseArgs),
    /// Re-run the experiment in a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Flat key=value file using the flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Number of grid points on [0, t_final].
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long = "max-order")]
    pub max_order: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SenseArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// a_re,a_im,b_re,b_im
    #[arg(long = "state-a", allow_hyphen_values = true)]
    pub state_a: Option<String>,
    /// a_re,a_im,b_re,b_im
    #[arg(long = "state-b", allow_hyphen_values = true)]
    pub state_b: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PulseArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    /// Initial state a_re,a_im,b_re,b_im (default: left well).
    #[arg(long = "state-a", allow_hyphen_values = true)]
    pub state_a: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Decay,
    Moments,
    Dist,
    Sense,
    Pulse,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Decay => "decay",
            Experiment::Moments => "moments",
            Experiment::Dist => "dist",
            Experiment::Sense => "sense",
            Experiment::Pulse => "pulse",
        }
    }

    /// Config keys that affect this experiment's output.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::Decay => &["gamma", "delta", "dt", "t-final", "trajectories", "seed", "points"],
            Experiment::Moments => &["gamma", "delta", "max-order"],
            Experiment::Dist => &["gamma", "delta", "dt", "t-final", "trajectories", "seed", "bins"],
            Experiment::Sense => &["gamma", "delta", "dt", "t-final", "trajectories", "seed", "state-a", "state-b"],
            Experiment::Pulse => &["gamma", "delta", "dt", "t-final", "trajectories", "seed", "phi", "t0", "state-a"],
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(Experiment::Decay),
            "moments" => Ok(Experiment::Moments),
            "dist" => Ok(Experiment::Dist),
            "sense" => Ok(Experiment::Sense),
            "pulse" => Ok(Experiment::Pulse),
            other => Err(Error::InvalidArgument(format!("unknown experiment '{other}'"))),
        }
    }
}

const KNOWN_KEYS: [&str; 14] = [
    "gamma",
    "delta",
    "dt",
    "t-final",
    "trajectories",
    "seed",
    "out-dir",
    "points",
    "max-order",
    "bins",
    "state-a",
    "state-b",
    "phi",
    "t0",
];

/// Parse the flat key=value config format. Blank lines and `#` comments are
/// skipped; underscores in keys are read as hyphens.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("config line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "config line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::InvalidArgument(format!(
                "config line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub points: usize,
    pub max_order: usize,
    pub bins: usize,
    pub state_a: SpinState,
    pub state_b: SpinState,
    pub pulse: PulseSpec,
    /// Resolved values as strings, exactly as recorded in the manifest.
    pub resolved: BTreeMap<String, String>,
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value for {key}: '{raw}'")))
}

/// Parse `a_re,a_im,b_re,b_im`; the norm must be 1 within [`STATE_NORM_TOL`].
pub fn parse_state(raw: &str) -> Result<SpinState> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|s| parse_value::<f64>("state", s))
        .collect::<Result<_>>()?;
    if parts.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "state needs four numbers a_re,a_im,b_re,b_im, got '{raw}'"
        )));
    }
    let a = Complex64::new(parts[0], parts[1]);
    let b = Complex64::new(parts[2], parts[3]);
    let norm = a.norm_sqr() + b.norm_sqr();
    if !norm.is_finite() || (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::InvalidArgument(format!(
            "state '{raw}' has norm² {norm}, expected 1 within {STATE_NORM_TOL:e}"
        )));
    }
    SpinState::normalized(a, b)
}

fn format_state(s: &SpinState) -> String {
    format!(
        "{},{},{},{}",
        s.amp_left.re, s.amp_left.im, s.amp_right.re, s.amp_right.im
    )
}

impl ExperimentConfig {
    /// Resolve from a merged key map; missing keys take defaults that may
    /// depend on Γ and Δ.
    pub fn from_map(experiment: Experiment, map: &BTreeMap<String, String>) -> Result<Self> {
        let mut resolved = BTreeMap::new();
        let mut take = |key: &str, default: &dyn Fn() -> String| -> String {
            let v = map.get(key).cloned().unwrap_or_else(default);
            resolved.insert(key.to_string(), v.clone());
            v
        };
        let gamma: f64 = parse_value("gamma", &take("gamma", &|| "1".into()))?;
        let delta: f64 = parse_value("delta", &take("delta", &|| "1".into()))?;
        let params = ModelParams::new(delta, gamma)?;
        let mut cfg = ExperimentConfig {
            experiment,
            params,
            dt: 0.0,
            t_final: 0.0,
            n_trajectories: 0,
            seed: 0,
            points: 0,
            max_order: 0,
            bins: 0,
            state_a: SpinState::left(),
            state_b: SpinState::left(),
            pulse: PulseSpec { delta_phi: 0.0, t0: 0.0 },
            resolved: BTreeMap::new(),
        };
        let keys = experiment.keys();
        let scale = params.rate_scale();
        if keys.contains(&"t0") {
            cfg.pulse = PulseSpec {
                delta_phi: parse_value("phi", &take("phi", &|| std::f64::consts::FRAC_PI_2.to_string()))?,
                t0: parse_value("t0", &take("t0", &|| "0".into()))?,
            };
        }
        if keys.contains(&"dt") {
            let t0 = cfg.pulse.t0;
            cfg.dt = parse_value(
                "dt",
                &take("dt", &|| {
                    SimConfig::max_dt(&params)
                        .unwrap_or(0.01 / scale)
                        .to_string()
                }),
            )?;
            cfg.t_final = parse_value(
                "t-final",
                &take("t-final", &|| (t0 + params.stationary_time()).to_string()),
            )?;
            cfg.n_trajectories = parse_value("trajectories", &take("trajectories", &|| "10000".into()))?;
            cfg.seed = parse_value("seed", &take("seed", &|| "1".into()))?;
        }
        if keys.contains(&"points") {
            cfg.points = parse_value("points", &take("points", &|| "50".into()))?;
        }
        if keys.contains(&"max-order") {
            cfg.max_order = parse_value("max-order", &take("max-order", &|| "6".into()))?;
        }
        if keys.contains(&"bins") {
            cfg.bins = parse_value("bins", &take("bins", &|| "50".into()))?;
        }
        if keys.contains(&"state-a") {
            let default_a = match experiment {
                Experiment::Pulse => SpinState::left(),
                _ => SpinState::symmetric(),
            };
            cfg.state_a = parse_state(&take("state-a", &|| format_state(&default_a)))?;
        }
        if keys.contains(&"state-b") {
            cfg.state_b = parse_state(&take("state-b", &|| format_state(&SpinState::antisymmetric())))?;
        }
        cfg.resolved = resolved;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.experiment != Experiment::Moments {
            self.sim_config()?;
        }
        if self.experiment == Experiment::Pulse {
            self.pulse.validate(self.t_final)?;
        }
        if self.experiment == Experiment::Decay && self.points < 2 {
            return Err(Error::InvalidArgument("points must be at least 2".into()));
        }
        if self.experiment == Experiment::Dist && self.bins == 0 {
            return Err(Error::InvalidArgument("bins must be positive".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        SimConfig::new(self.params, self.dt, self.t_final, self.seed, self.n_trajectories)
    }
}

/// Flags given explicitly on the command line, as config-map entries.
fn shared_overrides(shared: &SharedArgs) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("gamma", shared.gamma.map(|v| v.to_string()));
    put("delta", shared.delta.map(|v| v.to_string()));
    put("dt", shared.dt.map(|v| v.to_string()));
    put("t-final", shared.t_final.map(|v| v.to_string()));
    put("trajectories", shared.trajectories.map(|v| v.to_string()));
    put("seed", shared.seed.map(|v| v.to_string()));
    m
}

/// Resolve flags over the config file over defaults.
pub fn resolve(
    experiment: Experiment,
    shared: &SharedArgs,
    extra: BTreeMap<String, String>,
) -> Result<(ExperimentConfig, PathBuf)> {
    let mut map = match &shared.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    map.extend(shared_overrides(shared));
    map.extend(extra);
    let out_dir = shared
        .out_dir
        .clone()
        .or_else(|| map.get("out-dir").map(PathBuf::from))
        .ok_or_else(|| Error::InvalidArgument("--out-dir is required".into()))?;
    Ok((ExperimentConfig::from_map(experiment, &map)?, out_dir))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputDigest>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("malformed manifest {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("{}: {e}", path.display()))
}

/// Write via a temporary file and rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputDigest> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &dest).map_err(|e| io_err(&dest, e))?;
    Ok(OutputDigest {
        file: name.into(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    })
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

struct Artifacts {
    files: Vec<(String, String)>,
    checks: Vec<CheckResult>,
}

fn run_decay(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let sim = cfg.sim_config()?;
    let times = experiments::uniform_grid(cfg.t_final, cfg.points);
    let rows = experiments::decay_table(&sim, &times)?;
    if let Some(r) = rows.iter().find(|r| {
        ![r.p_ll_closed_form, r.p_ll_replica, r.re_offdiag, r.im_offdiag, r.p_ll_mc_mean, r.p_ll_mc_se]
            .iter()
            .all(|x| x.is_finite())
    }) {
        return Err(Error::Numerical(format!("non-finite value in decay row at t = {}", r.t)));
    }
    let gap = rows.iter().map(|r| r.max_engine_gap()).fold(0.0, f64::max);
    let body = csv(
        &["t", "p_ll_closed_form", "p_ll_replica", "re_offdiag", "im_offdiag", "p_ll_mc_mean", "p_ll_mc_se"],
        rows.iter().map(|r| {
            [r.t, r.p_ll_closed_form, r.p_ll_replica, r.re_offdiag, r.im_offdiag, r.p_ll_mc_mean, r.p_ll_mc_se]
                .iter()
                .map(|&x| fmt_float(x))
                .collect()
        }),
    );
    Ok(Artifacts {
        files: vec![("decay.csv".into(), body)],
        checks: vec![CheckResult::at_most("replica_vs_closed_form", gap, CURVE_TOL)],
    })
}

fn run_moments(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let scale = cfg.params.rate_scale();
    let times: Vec<f64> = SYMMETRY_TIMES.iter().map(|t| t / scale).collect();
    let table = experiments::moment_table(&cfg.params, cfg.max_order, &SYMMETRY_PAIRS, &times)?;
    Ok(Artifacts {
        checks: vec![
            CheckResult::at_most("moment_deviation", table.max_deviation, MOMENT_TABLE_TOL),
            CheckResult::at_most("symmetry_defect", table.max_symmetry_defect, SYMMETRY_TOL),
        ],
        files: vec![("moments.json".into(), json(&table)?)],
    })
}

fn z_check(name: &str, z: f64) -> CheckResult {
    CheckResult::at_most(name, z.abs(), experiments::SIGMA_THRESHOLD)
}

fn stat_check(name: &str, z: f64, passed: bool) -> CheckResult {
    CheckResult {
        passed,
        ..z_check(name, z)
    }
}

fn run_dist(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let report = experiments::run_distribution(&cfg.sim_config()?, cfg.bins)?;
    let h = &report.histogram;
    let hist = csv(
        &["bin_left", "bin_right", "count", "density"],
        (0..h.counts.len()).map(|i| {
            vec![
                fmt_float(h.edges[i]),
                fmt_float(h.edges[i + 1]),
                h.counts[i].to_string(),
                fmt_float(h.densities[i]),
            ]
        }),
    );
    let mut checks: Vec<CheckResult> = report
        .moments
        .iter()
        .map(|m| z_check(&format!("moment_{}", m.order), m.z_score))
        .collect();
    checks.extend(
        report
            .cross_moments
            .iter()
            .map(|m| z_check(&format!("cross_moment_{}_{}", m.order, m.complement_order), m.z_score)),
    );
    checks.push(CheckResult {
        name: "ks_p_value".into(),
        value: report.ks.p_value,
        tolerance: 0.001,
        passed: report.ks.p_value > 0.001,
    });
    Ok(Artifacts {
        files: vec![("histogram.csv".into(), hist), ("dist.json".into(), json(&report)?)],
        checks,
    })
}

fn run_sense(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let report = experiments::sensitivity(&cfg.sim_config()?, &cfg.state_a, &cfg.state_b)?;
    Ok(Artifacts {
        checks: vec![stat_check("sensitivity_z", report.z_score, report.passed())],
        files: vec![("sense.json".into(), json(&report)?)],
    })
}

fn run_pulse(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let report = experiments::pulse_response(&cfg.sim_config()?, &cfg.state_a, &cfg.pulse)?;
    Ok(Artifacts {
        checks: vec![stat_check("pulse_z", report.z_score, report.passed())],
        files: vec![("pulse.json".into(), json(&report)?)],
    })
}

fn create_out_dir(out_dir: &Path) -> Result<()> {
    if out_dir.exists() {
        return Err(Error::InvalidArgument(format!(
            "output directory {} already exists",
            out_dir.display()
        )));
    }
    if let Some(parent) = out_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::create_dir(out_dir).map_err(|e| io_err(out_dir, e))
}

/// Run one experiment, writing its data files and manifest into `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    create_out_dir(out_dir)?;
    let started = now_ms();
    let artifacts = match cfg.experiment {
        Experiment::Decay => run_decay(cfg),
        Experiment::Moments => run_moments(cfg),
        Experiment::Dist => run_dist(cfg),
        Experiment::Sense => run_sense(cfg),
        Experiment::Pulse => run_pulse(cfg),
    }?;
    let outputs = artifacts
        .files
        .iter()
        .map(|(name, body)| write_atomic(out_dir, name, body.as_bytes()))
        .collect::<Result<Vec<_>>>()?;
    let passed = artifacts.checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment,
        config: cfg.resolved.clone(),
        seed: (cfg.experiment != Experiment::Moments).then_some(cfg.seed),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
        checks: artifacts.checks,
        passed,
    };
    write_atomic(out_dir, MANIFEST_FILE, json(&manifest)?.as_bytes())?;
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
    })
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub run: RunOutcome,
    pub mismatched: Vec<String>,
}

impl ReplayOutcome {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-run a manifest's configuration into `out_dir` and compare digests.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<ReplayOutcome> {
    let original = RunManifest::load(manifest_path)?;
    let cfg = ExperimentConfig::from_map(original.experiment, &original.config)?;
    let run = execute(&cfg, out_dir)?;
    let mut mismatched: Vec<String> = original
        .outputs
        .iter()
        .filter(|o| !run.manifest.outputs.contains(o))
        .map(|o| o.file.clone())
        .collect();
    mismatched.extend(
        run.manifest
            .outputs
            .iter()
            .filter(|o| !original.outputs.iter().any(|p| p.file == o.file))
            .map(|o| o.file.clone()),
    );
    Ok(ReplayOutcome { run, mismatched })
}

/// Configure the global rayon pool from `REPLICA_LAB_THREADS` (0 or unset: automatic).
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = parse_value(THREADS_ENV, &raw)?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("{THREADS_ENV}: {e}")))?;
    }
    Ok(())
}

fn summarize(outcome: &RunOutcome) {
    for c in &outcome.manifest.checks {
        let status = if c.passed { "ok" } else { "FAILED" };
        eprintln!("  {:<28} {:>12.4e} (tol {:.1e}) {status}", c.name, c.value, c.tolerance);
    }
    eprintln!("wrote {}", outcome.out_dir.display());
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    init_threads()?;
    let (experiment, shared, extra) = match &cli.command {
        Command::Replay(args) => {
            let outcome = replay(&args.manifest, &args.out_dir)?;
            summarize(&outcome.run);
            if !outcome.identical() {
                eprintln!("replay differs in: {}", outcome.mismatched.join(", "));
                return Ok(EXIT_CHECK_FAILED);
            }
            eprintln!("replay reproduced all outputs byte for byte");
            return Ok(if outcome.run.passed() { 0 } else { EXIT_CHECK_FAILED });
        }
        Command::Decay(a) => (
            Experiment::Decay,
            &a.shared,
            opt_map([("points", a.points.map(|v| v.to_string()))]),
        ),
        Command::Moments(a) => (
            Experiment::Moments,
            &a.shared,
            opt_map([("max-order", a.max_order.map(|v| v.to_string()))]),
        ),
        Command::Dist(a) => (
            Experiment::Dist,
            &a.shared,
            opt_map([("bins", a.bins.map(|v| v.to_string()))]),
        ),
        Command::Sense(a) => (
            Experiment::Sense,
            &a.shared,
            opt_map([("state-a", a.state_a.clone()), ("state-b", a.state_b.clone())]),
        ),
        Command::Pulse(a) => (
            Experiment::Pulse,
            &a.shared,
            opt_map([
                ("phi", a.phi.map(|v| v.to_string())),
                ("t0", a.t0.map(|v| v.to_string())),
                ("state-a", a.state_a.clone()),
            ]),
        ),
    };
    let (cfg, out_dir) = resolve(experiment, shared, extra)?;
    let outcome = execute(&cfg, &out_dir)?;
    summarize(&outcome);
    Ok(if outcome.passed() { 0 } else { EXIT_CHECK_FAILED })
}

fn opt_map<const N: usize>(entries: [(&str, Option<String>); N]) -> BTreeMap<String, String> {
    entries
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
}

//! Single-realization dynamics under H(t) = −(Δ/2)σ_x + (φ(t)/2)σ_z.
//!
//! Each step is the Strang product of exact 2×2 unitaries
//!
//!   e^{+i(Δ/2)σ_x·dt/2} · e^{−iασ_z} · e^{+i(Δ/2)σ_x·dt/2},   α ~ N(0, Γ·dt/2),
//!
//! where α is half the field integrated over the step. Every trajectory owns a
//! ChaCha8 stream selected by `(seed, trajectory_id)`, so results do not depend
//! on how trajectories are scheduled across threads.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SpinState};
use crate::stats::mean_and_se;

/// Upper bound on dt·max(Γ, Δ).
pub const MAX_DT_RATE: f64 = 0.01;

/// Per-step norm drift allowance.
pub const NORM_DRIFT_PER_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub n_trajectories: usize,
    /// Times at which P_left is recorded; snapped to the nearest step boundary.
    pub record_grid: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(params: ModelParams, dt: f64, t_final: f64, seed: u64, n_trajectories: usize) -> Result<Self> {
        let cfg = Self {
            params,
            dt,
            t_final,
            seed,
            n_trajectories,
            record_grid: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        self.record_grid = Some(grid);
        self.validate()?;
        Ok(self)
    }

    /// Largest step allowed for these parameters.
    pub fn max_dt(params: &ModelParams) -> Option<f64> {
        if params.delta > 0.0 && params.gamma > 0.0 {
            Some(MAX_DT_RATE * (1.0 / params.delta).min(1.0 / params.gamma))
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(max) = Self::max_dt(&self.params) {
            if self.dt > max * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "dt = {} exceeds 0.01·min(1/Δ, 1/Γ) = {max}",
                    self.dt
                )));
            }
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "t_final must be finite and >= 0, got {}",
                self.t_final
            )));
        }
        if self.n_trajectories == 0 {
            return Err(Error::InvalidArgument("n_trajectories must be >= 1".into()));
        }
        if let Some(grid) = &self.record_grid {
            if let Some(bad) = grid.iter().find(|t| !(0.0..=self.t_final).contains(*t)) {
                return Err(Error::InvalidArgument(format!(
                    "record time {bad} outside [0, {}]",
                    self.t_final
                )));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    /// Actual step length, t_final / n_steps (never larger than `dt`).
    pub fn step_length(&self) -> f64 {
        match self.n_steps() {
            0 => self.dt,
            n => self.t_final / n as f64,
        }
    }

    /// Index of the step boundary nearest to `t`.
    pub fn boundary_index(&self, t: f64) -> usize {
        ((t / self.step_length()).round() as usize).min(self.n_steps())
    }

    /// Record times after snapping to step boundaries.
    pub fn snapped_grid(&self) -> Vec<f64> {
        let h = self.step_length();
        self.grid_indices()
            .into_iter()
            .map(|k| k as f64 * h)
            .collect()
    }

    fn grid_indices(&self) -> Vec<usize> {
        self.record_grid
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|&t| self.boundary_index(t))
            .collect()
    }
}

/// Deterministic standard-normal source for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    pub trajectory_id: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory_id);
        Self { trajectory_id, rng }
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Relative phase δΦ applied as (a, b) → (e^{iδΦ}a, e^{−iδΦ}b).
    pub delta_phi: f64,
    pub t0: f64,
}

impl PulseSpec {
    pub fn validate(&self, t_final: f64) -> Result<()> {
        if !self.delta_phi.is_finite() {
            return Err(Error::InvalidArgument("pulse phase must be finite".into()));
        }
        if !(0.0..=t_final).contains(&self.t0) {
            return Err(Error::InvalidArgument(format!(
                "pulse time {} outside [0, {t_final}]",
                self.t0
            )));
        }
        Ok(())
    }
}

/// Precomputed factors of one Strang step.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    half_cos: f64,
    half_sin: f64,
    kick_scale: f64,
}

impl Stepper {
    pub fn new(params: &ModelParams, dt: f64) -> Self {
        let (half_sin, half_cos) = (0.25 * params.delta * dt).sin_cos();
        Self {
            half_cos,
            half_sin,
            kick_scale: (0.5 * params.gamma * dt).sqrt(),
        }
    }

    /// e^{+iθσ_x} with θ = Δ·dt/4: (a, b) → (c·a + i s·b, i s·a + c·b)
    #[inline]
    fn half_rotation(&self, a: Complex64, b: Complex64) -> (Complex64, Complex64) {
        let is = Complex64::new(0.0, self.half_sin);
        (a * self.half_cos + is * b, is * a + b * self.half_cos)
    }

    #[inline]
    pub fn apply(&self, state: &SpinState, gauss: f64) -> SpinState {
        let (a, b) = self.half_rotation(state.amp_left, state.amp_right);
        // e^{−iασ_z}: the left well has σ_z = −1
        let (sin, cos) = (self.kick_scale * gauss).sin_cos();
        let kick = Complex64::new(cos, sin);
        let (a, b) = self.half_rotation(a * kick, b * kick.conj());
        SpinState {
            amp_left: a,
            amp_right: b,
        }
    }
}

/// One Strang step driven by the standard normal draw `gauss`.
pub fn step(state: &SpinState, params: &ModelParams, dt: f64, gauss: f64) -> SpinState {
    Stepper::new(params, dt).apply(state, gauss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub final_state: SpinState,
    pub p_left_series: Vec<f64>,
    pub norm_drift: f64,
}

struct Recorder {
    /// (step index, output slot), sorted by step index.
    events: Vec<(usize, usize)>,
    cursor: usize,
    values: Vec<f64>,
}

impl Recorder {
    fn new(cfg: &SimConfig) -> Self {
        let mut events: Vec<(usize, usize)> = cfg
            .grid_indices()
            .into_iter()
            .enumerate()
            .map(|(slot, k)| (k, slot))
            .collect();
        events.sort_unstable();
        Self {
            values: vec![0.0; events.len()],
            events,
            cursor: 0,
        }
    }

    #[inline]
    fn record(&mut self, k: usize, state: &SpinState) {
        while let Some(&(at, slot)) = self.events.get(self.cursor) {
            if at != k {
                break;
            }
            self.values[slot] = state.p_left();
            self.cursor += 1;
        }
    }
}

/// Steps one or more states through the same noise realization.
fn run_coupled(
    cfg: &SimConfig,
    stream: &mut NoiseStream,
    initials: &[SpinState],
    pulses: &[Option<PulseSpec>],
) -> Result<Vec<TrajectoryResult>> {
    let n_steps = cfg.n_steps();
    let stepper = Stepper::new(&cfg.params, cfg.step_length());
    let pulse_steps: Vec<Option<(usize, f64)>> = pulses
        .iter()
        .map(|p| p.map(|p| (cfg.boundary_index(p.t0), p.delta_phi)))
        .collect();

    let mut states = initials.to_vec();
    let mut recorders: Vec<Recorder> = initials.iter().map(|_| Recorder::new(cfg)).collect();
    let mut drifts = vec![0.0f64; initials.len()];

    for k in 0..=n_steps {
        for (j, state) in states.iter_mut().enumerate() {
            if let Some((at, phi)) = pulse_steps[j] {
                if at == k {
                    *state = state.with_phase_kick(phi);
                }
            }
            recorders[j].record(k, state);
        }
        if k == n_steps {
            break;
        }
        let gauss = stream.next_gaussian();
        for (state, drift) in states.iter_mut().zip(drifts.iter_mut()) {
            *state = stepper.apply(state, gauss);
            *drift = drift.max((state.norm_sqr() - 1.0).abs());
        }
    }

    let bound = NORM_DRIFT_PER_STEP * n_steps.max(1) as f64;
    states
        .into_iter()
        .zip(recorders)
        .zip(drifts)
        .map(|((final_state, rec), norm_drift)| {
            if norm_drift >= bound {
                return Err(Error::NormDrift {
                    drift: norm_drift,
                    bound,
                });
            }
            Ok(TrajectoryResult {
                final_state,
                p_left_series: rec.values,
                norm_drift,
            })
        })
        .collect()
}

pub fn run_trajectory(
    cfg: &SimConfig,
    stream: &mut NoiseStream,
    initial: &SpinState,
    pulse: Option<&PulseSpec>,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    if let Some(p) = pulse {
        p.validate(cfg.t_final)?;
    }
    let mut out = run_coupled(cfg, stream, &[*initial], &[pulse.copied()])?;
    Ok(out.remove(0))
}

/// Where an ensemble came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub dt: f64,
    pub step_length: f64,
    pub n_steps: usize,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub params: ModelParams,
}

impl Provenance {
    fn of(cfg: &SimConfig) -> Self {
        Self {
            seed: cfg.seed,
            dt: cfg.dt,
            step_length: cfg.step_length(),
            n_steps: cfg.n_steps(),
            t_final: cfg.t_final,
            n_trajectories: cfg.n_trajectories,
            params: cfg.params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// Final P_left of every trajectory, in trajectory-id order.
    pub final_p_left: Vec<f64>,
    pub final_states: Vec<SpinState>,
    /// Snapped record times.
    pub grid_times: Vec<f64>,
    pub grid_mean: Vec<f64>,
    /// Standard error of the grid means (0 for a single trajectory).
    pub grid_se: Vec<f64>,
    pub max_norm_drift: f64,
    pub provenance: Provenance,
}

fn check_ensemble_inputs(cfg: &SimConfig, pulse: Option<&PulseSpec>) -> Result<()> {
    cfg.validate()?;
    if let Some(p) = pulse {
        p.validate(cfg.t_final)?;
    }
    Ok(())
}

pub fn run_ensemble(cfg: &SimConfig, initial: &SpinState, pulse: Option<&PulseSpec>) -> Result<EnsembleResult> {
    check_ensemble_inputs(cfg, pulse)?;
    let pulse = pulse.copied();
    let runs: Vec<TrajectoryResult> = (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|id| {
            let mut stream = NoiseStream::new(cfg.seed, id);
            run_coupled(cfg, &mut stream, &[*initial], &[pulse]).map(|mut r| r.remove(0))
        })
        .collect::<Result<_>>()?;

    let grid_times = cfg.snapped_grid();
    let (grid_mean, grid_se) = (0..grid_times.len())
        .map(|g| {
            let (m, se) = mean_and_se(runs.iter().map(|r| r.p_left_series[g]));
            (m, se)
        })
        .unzip();
    Ok(EnsembleResult {
        final_p_left: runs.iter().map(|r| r.final_state.p_left()).collect(),
        final_states: runs.iter().map(|r| r.final_state).collect(),
        grid_times,
        grid_mean,
        grid_se,
        max_norm_drift: runs.iter().fold(0.0, |m, r| m.max(r.norm_drift)),
        provenance: Provenance::of(cfg),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEnsembleResult {
    pub final_p_left_a: Vec<f64>,
    pub final_p_left_b: Vec<f64>,
    /// P^A_left − P^B_left at t_final, per trajectory.
    pub differences: Vec<f64>,
    /// Sample mean of the squared differences.
    pub mean_sq_diff: f64,
    pub se_sq_diff: f64,
    pub max_norm_drift: f64,
    pub provenance: Provenance,
}

/// Runs both initial states through the same noise realization for every trajectory id.
pub fn run_paired_ensemble(
    cfg: &SimConfig,
    initial_a: &SpinState,
    initial_b: &SpinState,
    pulse_on_b: Option<&PulseSpec>,
) -> Result<PairedEnsembleResult> {
    check_ensemble_inputs(cfg, pulse_on_b)?;
    let pulses = [None, pulse_on_b.copied()];
    let runs: Vec<(TrajectoryResult, TrajectoryResult)> = (0..cfg.n_trajectories as u64)
        .into_par_iter()
        .map(|id| {
            let mut stream = NoiseStream::new(cfg.seed, id);
            let mut pair = run_coupled(cfg, &mut stream, &[*initial_a, *initial_b], &pulses)?;
            let b = pair.pop().expect("two results");
            let a = pair.pop().expect("two results");
            Ok((a, b))
        })
        .collect::<Result<_>>()?;

    let final_p_left_a: Vec<f64> = runs.iter().map(|(a, _)| a.final_state.p_left()).collect();
    let final_p_left_b: Vec<f64> = runs.iter().map(|(_, b)| b.final_state.p_left()).collect();
    let differences: Vec<f64> = final_p_left_a
        .iter()
        .zip(&final_p_left_b)
        .map(|(a, b)| a - b)
        .collect();
    let (mean_sq_diff, se_sq_diff) = mean_and_se(differences.iter().map(|d| d * d));
    let max_norm_drift = runs
        .iter()
        .fold(0.0f64, |m, (a, b)| m.max(a.norm_drift).max(b.norm_drift));
    Ok(PairedEnsembleResult {
        final_p_left_a,
        final_p_left_b,
        differences,
        mean_sq_diff,
        se_sq_diff,
        max_norm_drift,
        provenance: Provenance::of(cfg),
    })
}

//! Replica engine: noise-averaged dynamics of n (ket, bra) path pairs.
//!
//! The n-th moment of a quantum probability over noise realizations is a
//! linear functional of the averaged n-fold tensor product of the density
//! matrix. That object evolves under the generator G = D + S on a 4ⁿ space,
//! where D carries the Gaussian influence-functional weight −Γ(Σξ)² and S the
//! tunneling jumps (iΔ/2)·Λ on each pair.

mod generator;
mod propagate;
mod sector;

use nalgebra::{DMatrix, DVector};
use nalgebra::linalg::Schur;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SpinState, WellLabel};

pub use generator::{
    build_generator, build_single_pair_lambda, PairState, ReplicaBasisState, ReplicaGenerator,
    N_MAX,
};
pub use propagate::{evolve, evolve_grid};
pub use sector::{Counts, StationaryProjector, SymmetricSector, RESOLVENT_LAMBDA_REL, ZERO_EIGEN_REL};

/// Tolerance on the imaginary part and range of extracted moments.
pub const MOMENT_TOL: f64 = 1e-9;

/// Largest disagreement tolerated between the projector and resolvent routes.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-6;

/// Which product ⟨P_{S→L}ⁿ P_{S→R}ᵐ⟩ to extract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub initial_state: SpinState,
    pub n_left: usize,
    pub n_right: usize,
}

impl MomentSpec {
    pub fn new(initial_state: SpinState, n_left: usize, n_right: usize) -> Result<Self> {
        let spec = Self {
            initial_state,
            n_left,
            n_right,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ⟨P_{L→L}ⁿ P_{L→R}ᵐ⟩ for a particle released from the left well.
    pub fn from_left(n_left: usize, n_right: usize) -> Result<Self> {
        Self::new(SpinState::left(), n_left, n_right)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_left + self.n_right
    }

    pub fn validate(&self) -> Result<()> {
        generator::check_replica_count(self.n_pairs())?;
        SpinState::new(self.initial_state.amp_left, self.initial_state.amp_right)?;
        Ok(())
    }

    fn target(&self) -> Counts {
        [self.n_left as u8, 0, 0, self.n_right as u8]
    }
}

fn real_moment(z: Complex64, what: &str) -> Result<f64> {
    if !z.re.is_finite() || z.im.abs() > MOMENT_TOL {
        return Err(Error::Numerical(format!("{what}: moment is not real ({z})")));
    }
    if z.re < -MOMENT_TOL || z.re > 1.0 + MOMENT_TOL {
        return Err(Error::Numerical(format!("{what}: moment {} outside [0, 1]", z.re)));
    }
    Ok(z.re)
}

/// ⟨P_{S→L}ⁿ P_{S→R}ᵐ⟩ at time t.
pub fn finite_time_moment(spec: &MomentSpec, params: &ModelParams, t: f64) -> Result<f64> {
    spec.validate()?;
    let sector = SymmetricSector::new(spec.n_pairs(), params)?;
    let v0 = sector.tensor_power(&spec.initial_state.pair_vector());
    let v = sector.evolve(&v0, t)?;
    real_moment(sector.component(&v, &spec.target())?, "finite_time_moment")
}

/// Same moment on a time grid, reusing one sector construction.
pub fn finite_time_moment_grid(spec: &MomentSpec, params: &ModelParams, times: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    let sector = SymmetricSector::new(spec.n_pairs(), params)?;
    let v0 = sector.tensor_power(&spec.initial_state.pair_vector());
    let target = spec.target();
    times
        .iter()
        .map(|&t| {
            let v = sector.evolve(&v0, t)?;
            real_moment(sector.component(&v, &target)?, "finite_time_moment")
        })
        .collect()
}

/// Both routes to a t → ∞ moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMoment {
    /// Spectral projector onto the zero eigenspace.
    pub projector: f64,
    /// Richardson-extrapolated λ(λI − G)⁻¹ at λ → 0⁺.
    pub resolvent: f64,
    pub kernel_dim: usize,
}

/// Both stationary routes, failing if they disagree beyond [`ROUTE_AGREEMENT_TOL`].
pub fn infinite_time_moment_report(spec: &MomentSpec, params: &ModelParams) -> Result<StationaryMoment> {
    spec.validate()?;
    let sector = SymmetricSector::new(spec.n_pairs(), params)?;
    let v0 = sector.tensor_power(&spec.initial_state.pair_vector());
    let target = spec.target();
    let proj = sector.stationary_projector()?;
    let projector = real_moment(sector.component(&(&proj.matrix * &v0), &target)?, "projector route")?;
    let resolvent = real_moment(
        sector.component(&sector.resolvent_limit(&v0)?, &target)?,
        "resolvent route",
    )?;
    if (projector - resolvent).abs() > ROUTE_AGREEMENT_TOL {
        return Err(Error::Numerical(format!(
            "stationary routes disagree: projector {projector} vs resolvent {resolvent}"
        )));
    }
    Ok(StationaryMoment {
        projector,
        resolvent,
        kernel_dim: proj.kernel_dim,
    })
}

/// lim_{t→∞} ⟨P_{S→L}ⁿ P_{S→R}ᵐ⟩ via the zero-eigenvalue projector.
pub fn infinite_time_moment(spec: &MomentSpec, params: &ModelParams) -> Result<f64> {
    Ok(infinite_time_moment_report(spec, params)?.projector)
}

/// General replica amplitude in the full 4ⁿ space: replica k starts in
/// `initial[k]` and is projected on `finals[k]` at time t.
pub fn full_space_moment(
    params: &ModelParams,
    initial: &[SpinState],
    finals: &[WellLabel],
    t: f64,
) -> Result<f64> {
    if initial.len() != finals.len() {
        return Err(Error::DimensionMismatch {
            expected: initial.len(),
            got: finals.len(),
        });
    }
    let gen = build_generator(initial.len(), params)?;
    let factors: Vec<[Complex64; 4]> = initial.iter().map(|s| s.pair_vector()).collect();
    let v0 = gen.product_vector(&factors)?;
    let v = evolve(&gen, &v0, t)?;
    let pairs: Vec<PairState> = finals.iter().map(|w| PairState::diagonal(*w)).collect();
    real_moment(v[gen.index_of(&pairs)?], "full_space_moment")
}

/// |⟨P_{L→L}ⁿ P_{L→R}ᵐ⟩(t) − ⟨P_{L→L}ⁿ P_{R→L}ᵐ⟩(t)|.
///
/// The left side releases every replica from the left well and projects m of
/// them on the right well; the right side releases m replicas from the right
/// well and projects all of them on the left. Both are evaluated in the full
/// replica space, so their agreement exercises Gᵀ = G.
pub fn check_permutation_symmetry(n: usize, m: usize, params: &ModelParams, t: f64) -> Result<f64> {
    if n + m == 0 {
        return Ok(0.0);
    }
    generator::check_replica_count(n + m)?;
    let from_left = vec![SpinState::left(); n + m];
    let mut mixed_finals = vec![WellLabel::Left; n];
    mixed_finals.extend(std::iter::repeat_n(WellLabel::Right, m));
    let lhs = full_space_moment(params, &from_left, &mixed_finals, t)?;

    let mut mixed_initial = vec![SpinState::left(); n];
    mixed_initial.extend(std::iter::repeat_n(SpinState::right(), m));
    let all_left = vec![WellLabel::Left; n + m];
    let rhs = full_space_moment(params, &mixed_initial, &all_left, t)?;
    Ok((lhs - rhs).abs())
}

fn try_schur_eigenvalues(m: &DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let max_iter = 1000 * m.nrows().max(10);
    // nalgebra's shifted QR occasionally stalls for one convergence threshold
    // but not a neighbouring one
    [f64::EPSILON, 1e-14, 1e-13, 1e-12].iter().find_map(|&eps| {
        Schur::try_new(m.clone(), eps, max_iter)
            .and_then(|s| s.eigenvalues())
            .map(|e| e.iter().copied().collect())
    })
}

pub(crate) fn dense_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let dim = m.nrows();
    let mut out = try_schur_eigenvalues(m)
        .or_else(|| {
            // retry on Q·M·Q with a fixed Householder reflector Q = Qᵀ = Q⁻¹
            let w = DVector::from_fn(dim, |i, _| 1.0 + (i as f64 * 0.7548776662).fract());
            let w = w.normalize();
            let q = (DMatrix::<f64>::identity(dim, dim) - &w * w.transpose() * 2.0)
                .map(|x| Complex64::new(x, 0.0));
            try_schur_eigenvalues(&(&q * m * &q))
        })
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(out)
}

/// All eigenvalues of G, sorted by real part descending.
///
/// Dense O(dim³); practical up to four replicas.
pub fn spectrum(gen: &ReplicaGenerator) -> Result<Vec<Complex64>> {
    dense_eigenvalues(&gen.to_dense())
}

/// Decay rates −Re μ of the nonzero eigenvalues.
pub fn decay_rates(eigenvalues: &[Complex64], zero_cutoff: f64) -> Vec<f64> {
    eigenvalues
        .iter()
        .filter(|z| z.norm() >= zero_cutoff)
        .map(|z| -z.re)
        .collect()
}

/// Largest |v[s] − conj(v[s̄])|, where s̄ swaps ket and bra in every pair.
pub fn hermitian_defect(v: &DVector<Complex64>, n_pairs: usize) -> f64 {
    let conj_pair = |p: PairState| PairState::new(p.bra_well(), p.ket_well());
    (0..v.len())
        .map(|idx| {
            let mut s = ReplicaBasisState::from_index(idx, n_pairs);
            s.pairs.iter_mut().for_each(|p| *p = conj_pair(*p));
            (v[idx] - v[s.index()].conj()).norm()
        })
        .fold(0.0, f64::max)
}

//! Replica-permutation-symmetric subspace of the n-replica space.
//!
//! G commutes with any relabelling of the replicas, so a symmetric starting
//! vector (a tensor power) never leaves the span of the symmetrized basis
//! vectors q_M = k_M^{-1/2} Σ e_o, one per multiset M of pair states, where
//! the sum runs over the k_M distinct orderings o of M. In that orthonormal
//! real basis the restricted generator is still complex symmetric, with
//!
//!   diagonal  −Γ(c_C − c_B)²
//!   M → M − x + y   (iΔ/2)·Λ_yx·√(c_x·(c_y + 1))
//!
//! and the dimension drops from 4ⁿ to C(n+3, 3).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::generator::{check_replica_count, PairState};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Occupation numbers (c_A, c_B, c_C, c_D).
pub type Counts = [u8; 4];

#[derive(Debug, Clone)]
pub struct SymmetricSector {
    pub n_pairs: usize,
    pub params: ModelParams,
    states: Vec<Counts>,
    lookup: HashMap<Counts, usize>,
    generator: DMatrix<Complex64>,
}

fn multinomial(counts: &Counts) -> f64 {
    let n: u32 = counts.iter().map(|&c| c as u32).sum();
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    fact(n) / counts.iter().map(|&c| fact(c as u32)).product::<f64>()
}

impl SymmetricSector {
    pub fn new(n: usize, params: &ModelParams) -> Result<Self> {
        check_replica_count(n)?;
        params.validate()?;
        let mut states = Vec::new();
        let n8 = n as u8;
        for a in (0..=n8).rev() {
            for b in 0..=(n8 - a) {
                for c in 0..=(n8 - a - b) {
                    states.push([a, b, c, n8 - a - b - c]);
                }
            }
        }
        let lookup: HashMap<Counts, usize> =
            states.iter().enumerate().map(|(i, s)| (*s, i)).collect();

        let dim = states.len();
        let hop = Complex64::new(0.0, 0.5 * params.delta);
        let mut generator = DMatrix::zeros(dim, dim);
        for (col, counts) in states.iter().enumerate() {
            let xi = counts[2] as f64 - counts[1] as f64;
            generator[(col, col)] = Complex64::new(-params.gamma * xi * xi, 0.0);
            for from in PairState::ALL {
                let c_from = counts[from.index()];
                if c_from == 0 {
                    continue;
                }
                for (to, sign) in from.jumps() {
                    let mut target = *counts;
                    target[from.index()] -= 1;
                    target[to.index()] += 1;
                    let row = lookup[&target];
                    let weight = (c_from as f64 * target[to.index()] as f64).sqrt();
                    generator[(row, col)] += hop * (sign * weight);
                }
            }
        }
        Ok(Self {
            n_pairs: n,
            params: *params,
            states,
            lookup,
            generator,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Counts] {
        &self.states
    }

    pub fn generator(&self) -> &DMatrix<Complex64> {
        &self.generator
    }

    pub fn index_of(&self, counts: &Counts) -> Result<usize> {
        self.lookup.get(counts).copied().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "occupation {counts:?} is not in the {}-replica sector",
                self.n_pairs
            ))
        })
    }

    /// Number of distinct orderings of the multiset.
    pub fn orderings(counts: &Counts) -> f64 {
        multinomial(counts)
    }

    /// Coordinates of u^{⊗n} in the symmetric basis: √k_M · Π u_x^{c_x}.
    pub fn tensor_power(&self, single: &[Complex64; 4]) -> DVector<Complex64> {
        DVector::from_iterator(
            self.dim(),
            self.states.iter().map(|counts| {
                let prod = counts
                    .iter()
                    .zip(single)
                    .fold(Complex64::new(1.0, 0.0), |acc, (&c, u)| acc * u.powu(c as u32));
                prod * multinomial(counts).sqrt()
            }),
        )
    }

    /// Symmetrization of a single product basis vector e_o with occupation `counts`.
    pub fn symmetrized_basis(&self, counts: &Counts) -> Result<DVector<Complex64>> {
        let idx = self.index_of(counts)?;
        let mut v = DVector::zeros(self.dim());
        v[idx] = Complex64::new(1.0 / multinomial(counts).sqrt(), 0.0);
        Ok(v)
    }

    /// ⟨e_o | v⟩ for a product state o with the given occupation, v symmetric.
    pub fn component(&self, v: &DVector<Complex64>, counts: &Counts) -> Result<Complex64> {
        let idx = self.index_of(counts)?;
        Ok(v[idx] / multinomial(counts).sqrt())
    }

    pub fn propagator(&self, t: f64) -> Result<DMatrix<Complex64>> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(DMatrix::identity(self.dim(), self.dim()));
        }
        Ok((&self.generator * Complex64::new(t, 0.0)).exp())
    }

    pub fn evolve(&self, v0: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
        Ok(self.propagator(t)? * v0)
    }

    /// Eigenvalues of the restricted generator.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        super::dense_eigenvalues(&self.generator)
    }

    /// Spectral projector onto the kernel of the restricted generator.
    ///
    /// Fails with [`Error::NoStationaryLimit`] unless every eigenvalue outside
    /// the kernel has a strictly negative real part.
    pub fn stationary_projector(&self) -> Result<StationaryProjector> {
        let scale = self.params.rate_scale();
        if self.params.gamma == 0.0 || self.params.delta == 0.0 {
            return Err(Error::NoStationaryLimit(format!(
                "gamma={} delta={}: dynamics is oscillatory or frozen",
                self.params.gamma, self.params.delta
            )));
        }
        let cutoff = ZERO_EIGEN_REL * scale;
        let eig = self.eigenvalues()?;
        let kernel_dim = eig.iter().filter(|z| z.norm() < cutoff).count();
        if let Some(bad) = eig
            .iter()
            .find(|z| z.norm() >= cutoff && z.re > -cutoff)
        {
            return Err(Error::NoStationaryLimit(format!(
                "non-decaying eigenvalue {bad} outside the kernel"
            )));
        }
        if kernel_dim == 0 {
            return Err(Error::NoStationaryLimit("generator has no kernel".into()));
        }

        let dim = self.dim();
        let svd = self.generator.clone().svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numerical("SVD did not return right vectors".into()))?;
        let sv = &svd.singular_values;
        // singular values are sorted descending; the kernel is the tail
        let largest_kernel_sv = sv[dim - kernel_dim];
        if largest_kernel_sv > KERNEL_SV_REL * scale {
            return Err(Error::Numerical(format!(
                "zero eigenvalue of multiplicity {kernel_dim} is defective \
                 (singular value {largest_kernel_sv:e})"
            )));
        }
        let basis = DMatrix::from_fn(dim, kernel_dim, |i, j| v_t[(dim - kernel_dim + j, i)].conj());

        // G is complex symmetric, so left null vectors are plain transposes of right ones.
        let gram = basis.transpose() * &basis;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Numerical("kernel Gram matrix is singular".into()))?;
        let matrix = &basis * gram_inv * basis.transpose();
        Ok(StationaryProjector { matrix, kernel_dim })
    }

    /// λ(λI − G)⁻¹·v0 extrapolated to λ → 0⁺ (two-point Richardson).
    pub fn resolvent_limit(&self, v0: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if self.params.gamma == 0.0 || self.params.delta == 0.0 {
            return Err(Error::NoStationaryLimit(format!(
                "gamma={} delta={}: dynamics is oscillatory or frozen",
                self.params.gamma, self.params.delta
            )));
        }
        let lam = RESOLVENT_LAMBDA_REL * self.params.rate_scale();
        let coarse = self.scaled_resolvent(v0, lam)?;
        let fine = self.scaled_resolvent(v0, 0.5 * lam)?;
        Ok(fine * Complex64::new(2.0, 0.0) - coarse)
    }

    fn scaled_resolvent(&self, v0: &DVector<Complex64>, lam: f64) -> Result<DVector<Complex64>> {
        let dim = self.dim();
        let shifted = DMatrix::<Complex64>::identity(dim, dim) * Complex64::new(lam, 0.0)
            - &self.generator;
        let x = shifted
            .lu()
            .solve(v0)
            .ok_or_else(|| Error::Numerical(format!("λI − G singular at λ={lam:e}")))?;
        Ok(x * Complex64::new(lam, 0.0))
    }
}

/// Eigenvalues with |μ| below this fraction of max(Γ, Δ) count as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-10;
const KERNEL_SV_REL: f64 = 1e-8;
/// Laplace variable of the coarse resolvent evaluation, relative to max(Γ, Δ).
pub const RESOLVENT_LAMBDA_REL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct StationaryProjector {
    pub matrix: DMatrix<Complex64>,
    pub kernel_dim: usize,
}

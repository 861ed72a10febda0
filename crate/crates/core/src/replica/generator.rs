use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, WellLabel};

/// Largest supported replica count (dimension 4⁶ = 4096).
pub const N_MAX: usize = 6;

/// One (ket, bra) path pair at a fixed instant.
///
/// Ordered A = [−,−], B = [−,+], C = [+,−], D = [+,+] where − is the Left
/// well. The first sign is the ket path, the second the bra path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairState {
    A,
    B,
    C,
    D,
}

impl PairState {
    pub const ALL: [PairState; 4] = [PairState::A, PairState::B, PairState::C, PairState::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn new(ket_well: WellLabel, bra_well: WellLabel) -> Self {
        match (ket_well, bra_well) {
            (WellLabel::Left, WellLabel::Left) => PairState::A,
            (WellLabel::Left, WellLabel::Right) => PairState::B,
            (WellLabel::Right, WellLabel::Left) => PairState::C,
            (WellLabel::Right, WellLabel::Right) => PairState::D,
        }
    }

    /// The diagonal pair where both paths sit in `well`.
    pub fn diagonal(well: WellLabel) -> Self {
        Self::new(well, well)
    }

    pub fn ket_well(self) -> WellLabel {
        match self {
            PairState::A | PairState::B => WellLabel::Left,
            PairState::C | PairState::D => WellLabel::Right,
        }
    }

    pub fn bra_well(self) -> WellLabel {
        match self {
            PairState::A | PairState::C => WellLabel::Left,
            PairState::B | PairState::D => WellLabel::Right,
        }
    }

    /// Path separation (q_ket − q_bra)/q₀.
    pub fn xi(self) -> i32 {
        match self {
            PairState::A | PairState::D => 0,
            PairState::B => -1,
            PairState::C => 1,
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, PairState::A | PairState::D)
    }

    /// Nonzero entries of the jump-matrix row for this state: `(target, sign)`.
    pub(crate) fn jumps(self) -> [(PairState, f64); 2] {
        match self {
            PairState::A => [(PairState::B, -1.0), (PairState::C, 1.0)],
            PairState::B => [(PairState::A, -1.0), (PairState::D, 1.0)],
            PairState::C => [(PairState::A, 1.0), (PairState::D, -1.0)],
            PairState::D => [(PairState::B, 1.0), (PairState::C, -1.0)],
        }
    }
}

/// Product state of n path pairs, indexed little-endian in base 4.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReplicaBasisState {
    pub pairs: Vec<PairState>,
}

impl ReplicaBasisState {
    pub fn from_index(index: usize, n_pairs: usize) -> Self {
        let mut rest = index;
        let pairs = (0..n_pairs)
            .map(|_| {
                let p = PairState::from_index(rest % 4);
                rest /= 4;
                p
            })
            .collect();
        Self { pairs }
    }

    pub fn index(&self) -> usize {
        self.pairs
            .iter()
            .rev()
            .fold(0, |acc, p| acc * 4 + p.index())
    }

    pub fn total_xi(&self) -> i32 {
        self.pairs.iter().map(|p| p.xi()).sum()
    }
}

/// Jump matrix Λ for a single path pair, rows and columns in A, B, C, D order.
pub fn build_single_pair_lambda() -> [[f64; 4]; 4] {
    let mut lambda = [[0.0; 4]; 4];
    for from in PairState::ALL {
        for (to, sign) in from.jumps() {
            lambda[from.index()][to.index()] = sign;
        }
    }
    lambda
}

/// Generator G = D + S of the noise-averaged n-replica dynamics.
///
/// D is diagonal with entries −Γ(Σξ)². S = (iΔ/2)·Σ_k Λ_k is stored
/// implicitly: every row has exactly 2n entries ±iΔ/2, reached by flipping a
/// single pair through Λ.
#[derive(Debug, Clone)]
pub struct ReplicaGenerator {
    pub n_pairs: usize,
    pub dim: usize,
    pub params: ModelParams,
    pub dephasing_diag: Vec<f64>,
}

pub fn check_replica_count(n: usize) -> Result<()> {
    if n == 0 || n > N_MAX {
        return Err(Error::ReplicaCountOutOfRange { n, max: N_MAX });
    }
    Ok(())
}

pub fn build_generator(n: usize, params: &ModelParams) -> Result<ReplicaGenerator> {
    check_replica_count(n)?;
    params.validate()?;
    let dim = 4usize.pow(n as u32);
    let dephasing_diag = (0..dim)
        .map(|idx| {
            let xi = ReplicaBasisState::from_index(idx, n).total_xi() as f64;
            -params.gamma * xi * xi
        })
        .collect();
    Ok(ReplicaGenerator {
        n_pairs: n,
        dim,
        params: *params,
        dephasing_diag,
    })
}

impl ReplicaGenerator {
    /// Jump amplitude iΔ/2.
    pub fn hop(&self) -> Complex64 {
        Complex64::new(0.0, 0.5 * self.params.delta)
    }

    /// Real symmetric structure M of the jump part, S = (iΔ/2)·M.
    pub fn jump_structure(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for row in 0..self.dim {
            self.for_each_jump(row, |col, sign| m[(row, col)] += sign);
        }
        m
    }

    fn for_each_jump(&self, row: usize, mut f: impl FnMut(usize, f64)) {
        let mut stride = 1;
        for _ in 0..self.n_pairs {
            let digit = (row / stride) % 4;
            let base = row - digit * stride;
            for (to, sign) in PairState::from_index(digit).jumps() {
                f(base + to.index() * stride, sign);
            }
            stride *= 4;
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let hop = self.hop();
        let mut g = self.jump_structure().map(|x| hop * x);
        for (i, d) in self.dephasing_diag.iter().enumerate() {
            g[(i, i)] += Complex64::new(*d, 0.0);
        }
        g
    }

    /// out = G·v
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let hop = self.hop();
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            self.for_each_jump(row, |col, sign| acc += v[col] * sign);
            *o = v[row] * self.dephasing_diag[row] + hop * acc;
        }
    }

    /// Induced 1-norm bound: max |D_ii| + nΔ.
    pub fn norm_bound(&self) -> f64 {
        let max_diag = self
            .dephasing_diag
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        max_diag + self.n_pairs as f64 * self.params.delta
    }

    /// Index of the product state with the given per-replica pairs.
    pub fn index_of(&self, pairs: &[PairState]) -> Result<usize> {
        if pairs.len() != self.n_pairs {
            return Err(Error::DimensionMismatch {
                expected: self.n_pairs,
                got: pairs.len(),
            });
        }
        Ok(ReplicaBasisState {
            pairs: pairs.to_vec(),
        }
        .index())
    }

    /// Tensor product of per-replica single-pair vectors (replica 0 least significant).
    pub fn product_vector(&self, factors: &[[Complex64; 4]]) -> Result<DVector<Complex64>> {
        if factors.len() != self.n_pairs {
            return Err(Error::DimensionMismatch {
                expected: self.n_pairs,
                got: factors.len(),
            });
        }
        Ok(DVector::from_fn(self.dim, |idx, _| {
            let mut rest = idx;
            let mut acc = Complex64::new(1.0, 0.0);
            for f in factors {
                acc *= f[rest % 4];
                rest /= 4;
            }
            acc
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_matches_jump_table() {
        let l = build_single_pair_lambda();
        let expected = [
            [0.0, -1.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, -1.0],
            [0.0, 1.0, -1.0, 0.0],
        ];
        assert_eq!(l, expected);
        for (i, row) in l.iter().enumerate() {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, l[j][i]);
            }
        }
    }

    #[test]
    fn pair_labels() {
        assert_eq!(PairState::A.xi(), 0);
        assert_eq!(PairState::B.xi(), -1);
        assert_eq!(PairState::C.xi(), 1);
        assert_eq!(PairState::D.xi(), 0);
        for p in PairState::ALL {
            assert_eq!(PairState::new(p.ket_well(), p.bra_well()), p);
            // ξ = (q_ket − q_bra) with Left = −½, Right = +½
            let q = |w: WellLabel| 0.5 * w.sigma_z() as f64;
            assert_eq!((q(p.ket_well()) - q(p.bra_well())) as i32, p.xi());
        }
    }

    #[test]
    fn basis_index_roundtrip() {
        for n in 1..=4 {
            for idx in 0..4usize.pow(n as u32) {
                let s = ReplicaBasisState::from_index(idx, n);
                assert_eq!(s.index(), idx);
                assert!(s.total_xi().abs() <= n as i32);
            }
        }
        let s = ReplicaBasisState {
            pairs: vec![PairState::B, PairState::A],
        };
        assert_eq!(s.index(), 1);
    }

    #[test]
    fn single_pair_dephasing() {
        let params = ModelParams::new(1.0, 0.7).unwrap();
        let g = build_generator(1, &params).unwrap();
        assert_eq!(g.dephasing_diag, vec![0.0, -0.7, -0.7, 0.0]);
    }

    #[test]
    fn two_pair_dephasing() {
        let params = ModelParams::new(1.0, 0.7).unwrap();
        let g = build_generator(2, &params).unwrap();
        let idx = |a: PairState, b: PairState| g.index_of(&[a, b]).unwrap();
        assert_eq!(g.dephasing_diag[idx(PairState::B, PairState::B)], -4.0 * 0.7);
        assert_eq!(g.dephasing_diag[idx(PairState::C, PairState::C)], -4.0 * 0.7);
        assert_eq!(g.dephasing_diag[idx(PairState::B, PairState::C)], 0.0);
        assert_eq!(g.dephasing_diag[idx(PairState::C, PairState::B)], 0.0);
        assert_eq!(g.dephasing_diag[idx(PairState::A, PairState::C)], -0.7);
    }

    #[test]
    fn generator_structure() {
        let params = ModelParams::new(1.3, 0.4).unwrap();
        for n in 1..=4 {
            let g = build_generator(n, &params).unwrap();
            let m = g.jump_structure();
            assert_eq!(m, m.transpose());
            for row in 0..g.dim {
                let nz = (0..g.dim).filter(|&c| m[(row, c)] != 0.0).count();
                assert_eq!(nz, 2 * n);
                assert!(m.row(row).iter().all(|x| [-1.0, 0.0, 1.0].contains(x)));
                assert!(g.dephasing_diag[row] <= 0.0);
                let s = ReplicaBasisState::from_index(row, n);
                if s.pairs.iter().all(|p| p.is_diagonal()) {
                    assert_eq!(g.dephasing_diag[row], 0.0);
                }
            }
            // matrix-free action agrees with the dense matrix
            let dense = g.to_dense();
            let v = DVector::from_fn(g.dim, |i, _| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()));
            let mut out = vec![Complex64::new(0.0, 0.0); g.dim];
            g.apply(v.as_slice(), &mut out);
            let expected = &dense * &v;
            for i in 0..g.dim {
                assert!((out[i] - expected[i]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn replica_count_range() {
        let params = ModelParams::new(1.0, 1.0).unwrap();
        assert!(build_generator(0, &params).is_err());
        assert!(build_generator(N_MAX + 1, &params).is_err());
        assert_eq!(build_generator(N_MAX, &params).unwrap().dim, 4096);
    }
}

//! Physical parameters, basis conventions and the closed-form reference curves.
//!
//! Units are fixed to ħ = 1 and well separation q₀ = 1. The white-noise field
//! strength ⟨φ²⟩ = 2Γ follows from the dephasing rate and is never stored.
//!
//! Basis: the σ_z eigenvalue −1 is the Left well, +1 the Right well. A
//! [`SpinState`] holds the amplitudes `(a, b)` on `(Left, Right)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for switching to the analytic critical-damping limit.
pub const CRITICAL_EPS: f64 = 1e-9;

/// Largest imaginary residue tolerated when a complex evaluation should be real.
const REALNESS_TOL: f64 = 1e-12;

/// Norm tolerance for [`SpinState::new`].
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Tunneling angular frequency Δ.
    pub delta: f64,
    /// Dephasing rate Γ.
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        let p = Self { delta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !self.gamma.is_finite() {
            return Err(Error::InvalidParams(format!(
                "non-finite parameters (delta={}, gamma={})",
                self.delta, self.gamma
            )));
        }
        if self.delta < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!(
                "negative parameters (delta={}, gamma={})",
                self.delta, self.gamma
            )));
        }
        Ok(())
    }

    /// Variance rate of the white-noise field, ⟨φ²⟩ = 2Γ.
    pub fn field_variance(&self) -> f64 {
        2.0 * self.gamma
    }

    /// Fast relaxation time τ₁ = 1/Γ.
    pub fn tau_fast(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Slow relaxation time τ₂ = Γ/Δ².
    pub fn tau_slow(&self) -> f64 {
        self.gamma / (self.delta * self.delta)
    }

    /// Time after which both relaxation times have decayed by e⁻²⁰.
    pub fn stationary_time(&self) -> f64 {
        20.0 * self.tau_fast().max(self.tau_slow())
    }

    /// Largest rate in the problem, used as a scale for tolerances.
    pub fn rate_scale(&self) -> f64 {
        self.gamma.max(self.delta)
    }

    pub fn critical_branch(&self) -> CriticalBranch {
        CriticalBranch::classify(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WellLabel {
    Left,
    Right,
}

impl WellLabel {
    /// σ_z eigenvalue of the well.
    pub fn sigma_z(self) -> i32 {
        match self {
            WellLabel::Left => -1,
            WellLabel::Right => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            WellLabel::Left => WellLabel::Right,
            WellLabel::Right => WellLabel::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Overdamped,
    Underdamped,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalBranch {
    /// Γ² − 4Δ².
    pub discriminant: f64,
    pub branch: Branch,
}

impl CriticalBranch {
    pub fn classify(params: &ModelParams) -> Self {
        let g2 = params.gamma * params.gamma;
        let d2 = 4.0 * params.delta * params.delta;
        let discriminant = g2 - d2;
        let branch = if discriminant.abs() < CRITICAL_EPS * g2.max(d2).max(1.0) {
            Branch::Critical
        } else if discriminant > 0.0 {
            Branch::Overdamped
        } else {
            Branch::Underdamped
        };
        Self {
            discriminant,
            branch,
        }
    }
}

/// Pure state of one noise realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub amp_left: Complex64,
    pub amp_right: Complex64,
}

impl SpinState {
    /// Builds a state, rejecting amplitudes whose norm is off by more than [`NORM_TOL`].
    pub fn new(amp_left: Complex64, amp_right: Complex64) -> Result<Self> {
        let s = Self {
            amp_left,
            amp_right,
        };
        let drift = (s.norm_sqr() - 1.0).abs();
        if !drift.is_finite() || drift > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state not normalized: |a|^2+|b|^2-1 = {drift:e}"
            )));
        }
        Ok(s)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amp_left: Complex64, amp_right: Complex64) -> Result<Self> {
        let norm = (amp_left.norm_sqr() + amp_right.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero or non-finite state".into(),
            ));
        }
        Ok(Self {
            amp_left: amp_left / norm,
            amp_right: amp_right / norm,
        })
    }

    pub fn left() -> Self {
        Self {
            amp_left: Complex64::new(1.0, 0.0),
            amp_right: Complex64::new(0.0, 0.0),
        }
    }

    pub fn right() -> Self {
        Self {
            amp_left: Complex64::new(0.0, 0.0),
            amp_right: Complex64::new(1.0, 0.0),
        }
    }

    pub fn localized(well: WellLabel) -> Self {
        match well {
            WellLabel::Left => Self::left(),
            WellLabel::Right => Self::right(),
        }
    }

    /// (|L⟩ + |R⟩)/√2
    pub fn symmetric() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp_left: Complex64::new(h, 0.0),
            amp_right: Complex64::new(h, 0.0),
        }
    }

    /// (|L⟩ − |R⟩)/√2
    pub fn antisymmetric() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp_left: Complex64::new(h, 0.0),
            amp_right: Complex64::new(-h, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_left.norm_sqr() + self.amp_right.norm_sqr()
    }

    pub fn p_left(&self) -> f64 {
        self.amp_left.norm_sqr()
    }

    pub fn p_right(&self) -> f64 {
        self.amp_right.norm_sqr()
    }

    pub fn probability(&self, well: WellLabel) -> f64 {
        match well {
            WellLabel::Left => self.p_left(),
            WellLabel::Right => self.p_right(),
        }
    }

    /// Off-diagonal density-matrix element ρ_LR = a·b*.
    pub fn coherence(&self) -> Complex64 {
        self.amp_left * self.amp_right.conj()
    }

    /// Relative phase kick (a, b) → (e^{iφ}a, e^{−iφ}b).
    pub fn with_phase_kick(&self, delta_phi: f64) -> Self {
        let ph = Complex64::from_polar(1.0, delta_phi);
        Self {
            amp_left: self.amp_left * ph,
            amp_right: self.amp_right * ph.conj(),
        }
    }

    /// |a·b′ − a′·b|, the overlap measure controlling sensitivity to the initial state.
    pub fn wedge(&self, other: &SpinState) -> f64 {
        (self.amp_left * other.amp_right - other.amp_left * self.amp_right).norm()
    }

    /// Single-replica density vector (|a|², ab*, a*b, |b|²) in A, B, C, D order.
    pub fn pair_vector(&self) -> [Complex64; 4] {
        let a = self.amp_left;
        let b = self.amp_right;
        [a * a.conj(), a * b.conj(), a.conj() * b, b * b.conj()]
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Principal root √(Γ² − 4Δ²), as a complex number.
fn complex_root(params: &ModelParams) -> Complex64 {
    Complex64::new(params.gamma * params.gamma - 4.0 * params.delta * params.delta, 0.0).sqrt()
}

/// Noise-averaged ⟨P_{L→L}(t)⟩ for a particle released from the left well.
pub fn closed_form_p_ll(params: &ModelParams, t: f64) -> Result<f64> {
    params.validate()?;
    check_time(t)?;
    let g = params.gamma;
    let value = match params.critical_branch().branch {
        Branch::Critical => {
            Complex64::new(0.5 + (-0.5 * g * t).exp() * (0.5 + 0.25 * g * t), 0.0)
        }
        _ => {
            let s = complex_root(params);
            let slow = ((s - g) * (0.5 * t)).exp() * (s + g) / (s * 4.0);
            let fast = (-(s + g) * (0.5 * t)).exp() * (s - g) / (s * 4.0);
            slow + fast + 0.5
        }
    };
    if !value.re.is_finite() || value.im.abs() > REALNESS_TOL {
        return Err(Error::Numerical(format!(
            "closed-form probability not real: {value} at t={t}"
        )));
    }
    Ok(value.re.clamp(0.0, 1.0))
}

/// Noise-averaged coherence ⟨Ψ_L(t) Ψ_R*(t)⟩ for a particle released from the left well.
pub fn closed_form_offdiag(params: &ModelParams, t: f64) -> Result<Complex64> {
    params.validate()?;
    check_time(t)?;
    let g = params.gamma;
    let i_delta = Complex64::new(0.0, params.delta);
    let value = match params.critical_branch().branch {
        Branch::Critical => -i_delta * (0.5 * t * (-0.5 * g * t).exp()),
        _ => {
            let s = complex_root(params);
            let fast = (-(s + g) * (0.5 * t)).exp();
            let slow = ((s - g) * (0.5 * t)).exp();
            i_delta * (fast - slow) / (s * 2.0)
        }
    };
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::Numerical(format!("non-finite coherence at t={t}")));
    }
    Ok(value)
}

fn check_lambda(lam: f64) -> Result<()> {
    if !lam.is_finite() || lam <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Laplace variable must be finite and > 0, got {lam}"
        )));
    }
    Ok(())
}

/// Laplace transform of ⟨P_{L→L}(t)⟩.
pub fn laplace_p_ll(params: &ModelParams, lam: f64) -> Result<f64> {
    params.validate()?;
    check_lambda(lam)?;
    let (g, d2) = (params.gamma, params.delta * params.delta);
    Ok((2.0 * lam * lam + 2.0 * lam * g + d2) / (2.0 * lam * (lam * lam + g * lam + d2)))
}

/// Laplace transform of ⟨P_{L→L}(t)²⟩.
pub fn laplace_p_ll_sq(params: &ModelParams, lam: f64) -> Result<f64> {
    params.validate()?;
    check_lambda(lam)?;
    let (g, d2) = (params.gamma, params.delta * params.delta);
    let first = 1.0 / (3.0 * lam);
    let second = (g + lam) / (2.0 * (d2 + g * lam + lam * lam));
    let third = (d2 + (g + lam) * (4.0 * g + lam))
        / (6.0 * (4.0 * d2 * (3.0 * g + lam) + lam * (g + lam) * (4.0 * g + lam)));
    Ok(first + second + third)
}

/// Exact non-negative rational number, always stored reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u128,
    pub den: u128,
}

impl Rational {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn factorial(k: u32) -> u128 {
    (1..=k as u128).product()
}

/// Largest n + m accepted by [`beta_cross_moment`].
pub const MAX_CROSS_ORDER: u32 = 20;

/// n!·m!/(n+m+1)!, the uniform-distribution value of ⟨Pⁿ(1−P)ᵐ⟩.
pub fn beta_cross_moment(n: u32, m: u32) -> Result<Rational> {
    if n + m > MAX_CROSS_ORDER {
        return Err(Error::InvalidArgument(format!(
            "n + m = {} exceeds {MAX_CROSS_ORDER}",
            n + m
        )));
    }
    Ok(Rational::new(
        factorial(n) * factorial(m),
        factorial(n + m + 1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(delta: f64, gamma: f64) -> ModelParams {
        ModelParams::new(delta, gamma).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(-1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, f64::NAN).is_err());
        assert!(ModelParams::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn p_ll_starts_at_one_and_relaxes_to_half() {
        for &(d, g) in &[(1.0, 1.0), (1.0, 5.0), (1.0, 0.2), (1.0, 2.0), (0.0, 3.0)] {
            assert_abs_diff_eq!(closed_form_p_ll(&p(d, g), 0.0).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(closed_form_p_ll(&p(1.0, 1.0), 200.0).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn p_ll_without_noise_is_rabi() {
        let params = p(1.3, 0.0);
        for k in 0..40 {
            let t = 0.37 * k as f64;
            let rabi = (0.5 * 1.3 * t).cos().powi(2);
            assert_abs_diff_eq!(closed_form_p_ll(&params, t).unwrap(), rabi, epsilon = 1e-12);
        }
    }

    #[test]
    fn critical_limit_is_continuous() {
        let delta: f64 = 0.7;
        let crit = p(delta, 2.0 * delta);
        assert_eq!(crit.critical_branch().branch, Branch::Critical);
        for sign in [-1.0, 1.0] {
            let near = p(delta, 2.0 * delta * (1.0 + sign * 1e-7));
            assert_ne!(near.critical_branch().branch, Branch::Critical);
            for k in 0..=200 {
                let t = k as f64 * 20.0 / crit.gamma / 200.0;
                let a = closed_form_p_ll(&crit, t).unwrap();
                let b = closed_form_p_ll(&near, t).unwrap();
                assert!((a - b).abs() < 1e-6, "t={t}: {a} vs {b}");
                let ca = closed_form_offdiag(&crit, t).unwrap();
                let cb = closed_form_offdiag(&near, t).unwrap();
                assert!((ca - cb).norm() < 1e-6);
            }
        }
        // explicit formula at the 1e-6 offset as well
        let near = p(delta, 2.0 * delta * (1.0 + 1e-6));
        let t = 1.5;
        let g = crit.gamma;
        let limit = 0.5 + (-0.5 * g * t).exp() * (0.5 + 0.25 * g * t);
        assert!((closed_form_p_ll(&near, t).unwrap() - limit).abs() < 1e-5);
    }

    #[test]
    fn p_ll_grid_is_a_probability() {
        let vals = [0.0, 0.1, 1.0, 2.0, 10.0];
        for &g in &vals {
            for &d in &vals {
                let params = p(d, g);
                for k in 0..100 {
                    let t = 0.05 * k as f64 * k as f64;
                    let v = closed_form_p_ll(&params, t).unwrap();
                    assert!((0.0..=1.0).contains(&v));
                    assert!(closed_form_offdiag(&params, t).unwrap().norm() <= 0.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn offdiag_matches_rabi_and_vanishes() {
        let params = p(1.0, 0.0);
        let t = 0.8;
        // a = cos(Δt/2), b = i sin(Δt/2), so a·b* = −i sin(Δt)/2
        let c = closed_form_offdiag(&params, t).unwrap();
        assert_abs_diff_eq!(c.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.im, -0.5 * t.sin(), epsilon = 1e-14);
        assert_eq!(closed_form_offdiag(&p(1.0, 1.0), 0.0).unwrap().norm(), 0.0);
        assert!(closed_form_offdiag(&p(1.0, 1.0), 100.0).unwrap().norm() < 1e-20);
    }

    #[test]
    fn offdiag_peak_in_strong_noise() {
        let params = p(1.0, 50.0);
        let (mut best, mut t_best) = (0.0, 0.0);
        for k in 1..20000 {
            let t = k as f64 * 1e-4;
            let v = closed_form_offdiag(&params, t).unwrap().norm();
            if v > best {
                best = v;
                t_best = t;
            }
        }
        let expected = params.delta / (2.0 * params.gamma);
        assert!((best - expected).abs() / expected < 0.15, "{best} vs {expected}");
        assert!(t_best > 0.1 / params.gamma && t_best < 10.0 / params.gamma);
    }

    #[test]
    fn rejects_negative_time_and_lambda() {
        let params = p(1.0, 1.0);
        assert!(closed_form_p_ll(&params, -1.0).is_err());
        assert!(closed_form_offdiag(&params, f64::NAN).is_err());
        assert!(laplace_p_ll(&params, 0.0).is_err());
        assert!(laplace_p_ll_sq(&params, -0.1).is_err());
    }

    #[test]
    fn laplace_residues() {
        let params = p(1.0, 1.0);
        let lam = 1e-9;
        assert_abs_diff_eq!(lam * laplace_p_ll(&params, lam).unwrap(), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(lam * laplace_p_ll_sq(&params, lam).unwrap(), 1.0 / 3.0, epsilon = 1e-8);
        // large λ probes t = 0 where P = P² = 1
        let big = 1e9;
        assert_abs_diff_eq!(big * laplace_p_ll(&params, big).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(big * laplace_p_ll_sq(&params, big).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn laplace_without_tunneling() {
        for lam in [0.1, 1.0, 7.0] {
            let frozen = p(0.0, 2.5);
            assert_abs_diff_eq!(laplace_p_ll(&frozen, lam).unwrap(), 1.0 / lam, epsilon = 1e-14);
            assert_abs_diff_eq!(laplace_p_ll_sq(&frozen, lam).unwrap(), 1.0 / lam, epsilon = 1e-13);
            let tiny = p(1e-7, 2.5);
            assert!((laplace_p_ll_sq(&tiny, lam).unwrap() - 1.0 / lam).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_cross_moment(1, 0).unwrap(), Rational::new(1, 2));
        assert_eq!(beta_cross_moment(1, 1).unwrap(), Rational::new(1, 6));
        assert_eq!(beta_cross_moment(4, 0).unwrap(), Rational::new(1, 5));
        assert_eq!(beta_cross_moment(2, 1).unwrap(), Rational::new(1, 12));
        assert_eq!(beta_cross_moment(0, 0).unwrap(), Rational::new(1, 1));
        assert!(beta_cross_moment(10, 10).is_ok());
        assert!(beta_cross_moment(11, 10).is_err());
    }

    #[test]
    fn phase_kick_flips_symmetric_state() {
        let s = SpinState::symmetric().with_phase_kick(std::f64::consts::FRAC_PI_2);
        // global phase i factored out: (i, −i)/√2 = i·(1, −1)/√2
        let target = SpinState::antisymmetric();
        let ratio_l = s.amp_left / target.amp_left;
        let ratio_r = s.amp_right / target.amp_right;
        assert!((ratio_l - ratio_r).norm() < 1e-15);
        assert_abs_diff_eq!(ratio_l.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn state_construction() {
        assert!(SpinState::new(Complex64::new(1.0, 0.0), Complex64::new(0.1, 0.0)).is_err());
        assert!(SpinState::normalized(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).is_err());
        let s = SpinState::normalized(Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)).unwrap();
        assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(SpinState::left().wedge(&SpinState::symmetric()).powi(2), 0.5, epsilon = 1e-15);
    }
}

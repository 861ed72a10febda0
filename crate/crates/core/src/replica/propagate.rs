//! Matrix-free action of e^{Gt} on a vector.
//!
//! The interval is cut into substeps with ‖G‖₁·h ≤ 1/2 and each substep sums
//! the Taylor series until the terms fall below machine precision relative
//! to the running sum.

use nalgebra::DVector;
use num_complex::Complex64;

use super::generator::ReplicaGenerator;
use crate::error::{Error, Result};

const MAX_TERMS: usize = 60;
const STEP_NORM: f64 = 0.5;

fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Returns e^{G t}·v0.
pub fn evolve(gen: &ReplicaGenerator, v0: &DVector<Complex64>, t: f64) -> Result<DVector<Complex64>> {
    if v0.len() != gen.dim {
        return Err(Error::DimensionMismatch {
            expected: gen.dim,
            got: v0.len(),
        });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    let mut v = v0.clone();
    if t == 0.0 {
        return Ok(v);
    }
    let steps = ((gen.norm_bound() * t / STEP_NORM).ceil() as usize).max(1);
    let h = t / steps as f64;
    let mut scratch = Workspace::new(gen.dim);
    for _ in 0..steps {
        scratch.taylor_step(gen, v.as_mut_slice(), h);
    }
    Ok(v)
}

/// Evaluates e^{G t}·v0 at every time in `times`, which must be non-decreasing.
pub fn evolve_grid(
    gen: &ReplicaGenerator,
    v0: &DVector<Complex64>,
    times: &[f64],
) -> Result<Vec<DVector<Complex64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut current = v0.clone();
    let mut t_now = 0.0;
    for &t in times {
        if t.is_nan() || t < t_now {
            return Err(Error::InvalidArgument(format!(
                "time grid must be non-decreasing and >= 0 (got {t} after {t_now})"
            )));
        }
        current = evolve(gen, &current, t - t_now)?;
        t_now = t;
        out.push(current.clone());
    }
    Ok(out)
}

struct Workspace {
    term: Vec<Complex64>,
    next: Vec<Complex64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            term: vec![Complex64::new(0.0, 0.0); dim],
            next: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    fn taylor_step(&mut self, gen: &ReplicaGenerator, v: &mut [Complex64], h: f64) {
        self.term.copy_from_slice(v);
        for k in 1..=MAX_TERMS {
            gen.apply(&self.term, &mut self.next);
            let scale = h / k as f64;
            for (t, n) in self.term.iter_mut().zip(&self.next) {
                *t = n * scale;
            }
            for (x, t) in v.iter_mut().zip(&self.term) {
                *x += t;
            }
            if inf_norm(&self.term) <= f64::EPSILON * 0.25 * inf_norm(v) {
                break;
            }
        }
    }
}

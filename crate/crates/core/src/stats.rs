//! Distribution evidence for per-realization probabilities.
//!
//! Reference values are those of the uniform density on (0, 1):
//! ⟨Pⁿ⟩ = 1/(n+1) and ⟨Pⁿ(1−P)ᵐ⟩ = n!m!/(n+m+1)!.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::beta_cross_moment;

/// Values may stray outside [0, 1] by this much (rounding in |a|²).
pub const RANGE_TOL: f64 = 1e-9;
pub const MIN_MOMENT_SAMPLES: usize = 100;
pub const MIN_KS_SAMPLES: usize = 50;
pub const MAX_MOMENT_ORDER: usize = 10;
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleProvenance {
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    pub provenance: Option<SampleProvenance>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SampleTooSmall { got: 0, min: 1 });
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(*v))
        {
            return Err(Error::InvalidArgument(format!("sample {bad} is not a probability")));
        }
        Ok(Self {
            values,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: SampleProvenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The complementary probabilities 1 − P.
    pub fn mirrored(&self) -> Self {
        Self {
            values: self.values.iter().map(|p| 1.0 - p).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Power of P.
    pub order: usize,
    /// Power of 1 − P (0 for plain moments).
    pub complement_order: usize,
    pub sample_moment: f64,
    pub standard_error: f64,
    pub reference: f64,
    pub z_score: f64,
}

impl MomentReport {
    fn new(order: usize, complement_order: usize, sample_moment: f64, standard_error: f64, reference: f64) -> Self {
        let diff = sample_moment - reference;
        let z_score = if diff == 0.0 {
            0.0
        } else if standard_error > 0.0 {
            diff / standard_error
        } else {
            diff.signum() * f64::INFINITY
        };
        Self {
            order,
            complement_order,
            sample_moment,
            standard_error,
            reference,
            z_score,
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }
}

/// Mean and standard error of the mean, accumulated in iteration order.
pub fn mean_and_se<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    if n < 2 {
        return (mean, 0.0);
    }
    (mean, (m2 / (n - 1) as f64 / n as f64).sqrt())
}

/// Mean and standard error that do not depend on the order of `values`.
fn order_free_mean_and_se(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_unstable_by(f64::total_cmp);
    mean_and_se(values)
}

fn transformed(samples: &SampleSet, n: usize, m: usize) -> Vec<f64> {
    samples
        .values
        .iter()
        .map(|&p| {
            let p = p.clamp(0.0, 1.0);
            p.powi(n as i32) * (1.0 - p).powi(m as i32)
        })
        .collect()
}

fn check_moment_inputs(samples: &SampleSet, order: usize) -> Result<()> {
    if samples.len() < MIN_MOMENT_SAMPLES {
        return Err(Error::SampleTooSmall {
            got: samples.len(),
            min: MIN_MOMENT_SAMPLES,
        });
    }
    if order > MAX_MOMENT_ORDER {
        return Err(Error::InvalidArgument(format!(
            "moment order {order} exceeds {MAX_MOMENT_ORDER}"
        )));
    }
    Ok(())
}

/// ⟨Pⁿ⟩ for n = 1..=max_order against 1/(n+1).
pub fn moments(samples: &SampleSet, max_order: usize) -> Result<Vec<MomentReport>> {
    check_moment_inputs(samples, max_order)?;
    Ok((1..=max_order)
        .map(|n| {
            let (mean, se) = order_free_mean_and_se(transformed(samples, n, 0));
            MomentReport::new(n, 0, mean, se, 1.0 / (n as f64 + 1.0))
        })
        .collect())
}

/// ⟨Pⁿ(1−P)ᵐ⟩ against n!m!/(n+m+1)!.
pub fn cross_moment(samples: &SampleSet, n: usize, m: usize) -> Result<MomentReport> {
    check_moment_inputs(samples, n.max(m))?;
    let reference = beta_cross_moment(n as u32, m as u32)?.to_f64();
    let (mean, se) = order_free_mean_and_se(transformed(samples, n, m));
    Ok(MomentReport::new(n, m, mean, se, reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// bins + 1 edges from 0 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub densities: Vec<f64>,
}

/// Uniform bins on [0, 1]: left-closed, right-open, the last bin closed.
pub fn histogram(samples: &SampleSet, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; bins];
    for &p in &samples.values {
        let idx = ((p.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = samples.len() as f64;
    let densities = counts
        .iter()
        .map(|&c| c as f64 * bins as f64 / total)
        .collect();
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(Histogram {
        edges,
        counts,
        densities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution, P(K > λ).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let pi2 = std::f64::consts::PI.powi(2);
        let cdf: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let tail: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * tail).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
///
/// The p-value uses the asymptotic distribution with Stephens' finite-n
/// correction λ = (√n + 0.12 + 0.11/√n)·D.
pub fn ks_uniform(samples: &SampleSet) -> Result<KsResult> {
    let n = samples.len();
    if n < MIN_KS_SAMPLES {
        return Err(Error::SampleTooSmall {
            got: n,
            min: MIN_KS_SAMPLES,
        });
    }
    let mut sorted: Vec<f64> = samples.values.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / nf - x;
            let below = x - i as f64 / nf;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let root = nf.sqrt();
    let p_value = kolmogorov_survival((root + 0.12 + 0.11 / root) * statistic);
    Ok(KsResult {
        statistic,
        p_value,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(v: Vec<f64>) -> SampleSet {
        SampleSet::new(v).unwrap()
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(SampleSet::new(vec![]).is_err());
        assert!(SampleSet::new(vec![0.5, 1.1]).is_err());
        assert!(SampleSet::new(vec![-1e-10, 1.0 + 1e-10]).is_ok());
        assert!(moments(&set(vec![0.5; 99]), 2).is_err());
        assert!(moments(&set(vec![0.5; 100]), 11).is_err());
        assert!(ks_uniform(&set(vec![0.5; 49])).is_err());
    }

    #[test]
    fn all_ones() {
        let reports = moments(&set(vec![1.0; 200]), 6).unwrap();
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.order, i + 1);
            assert_eq!(r.sample_moment, 1.0);
            assert_eq!(r.standard_error, 0.0);
            assert!(!r.within(4.0));
        }
    }

    #[test]
    fn zero_order_cross_moment_is_one() {
        let r = cross_moment(&set((0..150).map(|i| i as f64 / 150.0).collect()), 0, 0).unwrap();
        assert_eq!(r.sample_moment, 1.0);
        assert_eq!(r.standard_error, 0.0);
        assert_eq!(r.reference, 1.0);
        assert_eq!(r.z_score, 0.0);
    }

    #[test]
    fn histogram_binning_rule() {
        let h = histogram(&set(vec![0.5; 10]), 2).unwrap();
        assert_eq!(h.counts, vec![0, 10]);
        let h = histogram(&set(vec![1.0; 10]), 50).unwrap();
        assert_eq!(h.counts[49], 10);
        let h = histogram(&set(vec![0.0, 0.02, 0.999]), 50).unwrap();
        assert_eq!((h.counts[0], h.counts[1], h.counts[49]), (1, 1, 1));
        assert!(histogram(&set(vec![0.5]), 1).is_err());
    }

    #[test]
    fn ks_equally_spaced() {
        let n = 1000;
        let s = set((1..=n).map(|k| k as f64 / (n + 1) as f64).collect());
        let r = ks_uniform(&s).unwrap();
        assert_abs_diff_eq!(r.statistic, 1.0 / (n + 1) as f64, epsilon = 1e-15);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn ks_point_mass() {
        let r = ks_uniform(&set(vec![0.5; 10_000])).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.5, epsilon = 1e-15);
        assert!(r.p_value < 1e-100);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are exact; they must meet at the switch point
        let lambda: f64 = 1.18;
        let theta = {
            let pi2 = std::f64::consts::PI.powi(2);
            1.0 - (1..=20)
                .map(|k| {
                    let odd = (2 * k - 1) as f64;
                    (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
                })
                .sum::<f64>()
                * (2.0 * std::f64::consts::PI).sqrt()
                / lambda
        };
        assert_abs_diff_eq!(theta, kolmogorov_survival(lambda), epsilon = 1e-14);
        // textbook value: P(K > 1.3581) ≈ 0.05
        assert_abs_diff_eq!(kolmogorov_survival(1.3581), 0.05, epsilon = 1e-4);
        assert_abs_diff_eq!(kolmogorov_survival(1.2238), 0.10, epsilon = 1e-4);
    }

    #[test]
    fn uniform_source_calibration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let s = set((0..100_000).map(|_| rng.random::<f64>()).collect());
        for r in moments(&s, 6).unwrap() {
            assert!(r.within(4.0), "{r:?}");
        }
        assert!(cross_moment(&s, 1, 1).unwrap().within(4.0));
        assert!(cross_moment(&s, 2, 1).unwrap().within(4.0));
        assert!(ks_uniform(&s).unwrap().p_value > 0.001);
        let h = histogram(&s, 50).unwrap();
        assert!(h.densities.iter().all(|d| (0.8..=1.2).contains(d)));
    }

    proptest! {
        #[test]
        fn moments_ignore_sample_order(
            mut v in prop::collection::vec(0.0f64..=1.0, 100..300),
            seed in any::<u64>(),
        ) {
            let before = moments(&set(v.clone()), 4).unwrap();
            let before_cross = cross_moment(&set(v.clone()), 2, 1).unwrap();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..v.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                v.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(before, moments(&set(v.clone()), 4).unwrap());
            prop_assert_eq!(before_cross, cross_moment(&set(v), 2, 1).unwrap());
        }

        #[test]
        fn cross_moment_mirrors(
            k in prop::collection::vec(0u32..=1024, 100..200),
            n in 0usize..4,
            m in 0usize..4,
        ) {
            // dyadic values make 1 − (1 − P) exact
            let s = set(k.iter().map(|&x| x as f64 / 1024.0).collect());
            let a = cross_moment(&s, n, m).unwrap();
            let b = cross_moment(&s.mirrored(), m, n).unwrap();
            prop_assert_eq!(a.sample_moment, b.sample_moment);
            prop_assert_eq!(a.standard_error, b.standard_error);
        }

        #[test]
        fn histogram_integrates_to_one(
            v in prop::collection::vec(0.0f64..=1.0, 1..500),
            bins in 2usize..80,
        ) {
            let h = histogram(&set(v.clone()), bins).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<u64>(), v.len() as u64);
            let integral: f64 = h.densities.iter().map(|d| d / bins as f64).sum();
            prop_assert!((integral - 1.0).abs() < 1e-12);
            prop_assert!(h.densities.iter().all(|d| *d >= 0.0));
        }

        #[test]
        fn ks_p_value_decreases_with_statistic(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(kolmogorov_survival(lo) >= kolmogorov_survival(hi));
        }
    }
}

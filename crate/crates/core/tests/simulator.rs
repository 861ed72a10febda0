use num_complex::Complex64;

use replica_lab::model::{closed_form_p_ll, ModelParams, SpinState};
use replica_lab::simulator::{run_ensemble, NoiseStream, SimConfig, Stepper};
use replica_lab::stats::mean_and_se;

/// Final P_left on one Brownian path at step `dt` and at `dt/2`; each coarse
/// increment is the normalized sum of the two fine ones.
fn coupled_pair(params: &ModelParams, dt: f64, t_final: f64, seed: u64, id: u64) -> (f64, f64) {
    let coarse = Stepper::new(params, dt);
    let fine = Stepper::new(params, dt / 2.0);
    let mut noise = NoiseStream::new(seed, id);
    let (mut c, mut f) = (SpinState::left(), SpinState::left());
    for _ in 0..(t_final / dt).round() as usize {
        let (g1, g2) = (noise.next_gaussian(), noise.next_gaussian());
        f = fine.apply(&fine.apply(&f, g1), g2);
        c = coarse.apply(&c, (g1 + g2) / std::f64::consts::SQRT_2);
    }
    (c.p_left(), f.p_left())
}

#[test]
fn pathwise_error_shrinks_with_step() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let errors: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            (0..200)
                .map(|id| {
                    let (c, f) = coupled_pair(&params, dt, 4.0, 11, id);
                    (c - f).abs()
                })
                .sum::<f64>()
                / 200.0
        })
        .collect();
    assert!(errors[0] < 0.05, "{errors:?}");
    assert!(errors[1] < 0.8 * errors[0], "{errors:?}");
    assert!(errors[2] < 0.8 * errors[1], "{errors:?}");
}

#[test]
fn ensemble_mean_converges_to_closed_form() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let grid = vec![0.5, 1.0, 2.0, 4.0];
    for dt in [0.01, 0.0025] {
        let cfg = SimConfig::new(params, dt, 4.0, 5, 20_000)
            .unwrap()
            .with_grid(grid.clone())
            .unwrap();
        let r = run_ensemble(&cfg, &SpinState::left(), None).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = closed_form_p_ll(&params, t).unwrap();
            assert!(
                (r.grid_mean[i] - exact).abs() < 4.0 * r.grid_se[i] + 1e-4,
                "dt={dt} t={t}: {} vs {exact}",
                r.grid_mean[i]
            );
        }
    }
}

/// With Δ = 0 populations freeze and the coherence of each path is a pure
/// phase, so ⟨a b*⟩ must decay as e^{−Γt}.
#[test]
fn dephasing_rate_calibration() {
    let gamma = 0.8;
    let params = ModelParams::new(0.0, gamma).unwrap();
    let dt = 0.01;
    let stepper = Stepper::new(&params, dt);
    let t_final = 1.5;
    let n = 40_000u64;
    let coherences: Vec<Complex64> = (0..n)
        .map(|id| {
            let mut noise = NoiseStream::new(3, id);
            let mut s = SpinState::symmetric();
            for _ in 0..(t_final / dt).round() as usize {
                s = stepper.apply(&s, noise.next_gaussian());
            }
            assert!((s.p_left() - 0.5).abs() < 1e-12);
            s.coherence()
        })
        .collect();
    let (re, se_re) = mean_and_se(coherences.iter().map(|z| z.re));
    let (im, se_im) = mean_and_se(coherences.iter().map(|z| z.im));
    let expected = 0.5 * (-gamma * t_final).exp();
    assert!((re - expected).abs() < 4.0 * se_re, "{re} vs {expected} ± {se_re}");
    assert!(im.abs() < 4.0 * se_im);
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let params = ModelParams::new(1.0, 1.0).unwrap();
    let cfg = SimConfig::new(params, 0.01, 3.0, 99, 500)
        .unwrap()
        .with_grid(vec![1.0, 2.0])
        .unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&cfg, &SpinState::left(), None).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.final_p_left, three.final_p_left);
    assert_eq!(one.grid_mean, three.grid_mean);
    assert_eq!(one.grid_se, three.grid_se);
}

use nalgebra::DVector;
use num_complex::Complex64;

use replica_lab::model::{closed_form_p_ll, laplace_p_ll, laplace_p_ll_sq, ModelParams, SpinState};
use replica_lab::replica::{
    build_generator, decay_rates, evolve_grid, finite_time_moment_grid, hermitian_defect, spectrum,
    MomentSpec, PairState, SymmetricSector,
};

fn params(delta: f64, gamma: f64) -> ModelParams {
    ModelParams::new(delta, gamma).unwrap()
}

/// ∫₀^∞ e^{−λt} f(t) dt by composite Simpson, truncated where e^{−λT} < 1e-14.
fn laplace_simpson(f: &[f64], lam: f64, t_max: f64) -> f64 {
    let n = f.len() - 1;
    let h = t_max / n as f64;
    let w = |i: usize| match i {
        0 => 1.0,
        i if i == n => 1.0,
        i if i % 2 == 1 => 4.0,
        _ => 2.0,
    };
    (0..=n)
        .map(|i| w(i) * (-lam * i as f64 * h).exp() * f[i])
        .sum::<f64>()
        * h
        / 3.0
}

#[test]
fn laplace_transforms_of_replica_curves() {
    for p in [params(1.0, 1.0), params(1.0, 3.0), params(2.0, 1.0)] {
        let scale = p.rate_scale();
        for lam in [0.5 * scale, scale, 2.0 * scale] {
            let t_max = 33.0 / lam;
            let times: Vec<f64> = (0..=4000).map(|i| t_max * i as f64 / 4000.0).collect();
            let first = finite_time_moment_grid(&MomentSpec::from_left(1, 0).unwrap(), &p, &times).unwrap();
            let second = finite_time_moment_grid(&MomentSpec::from_left(2, 0).unwrap(), &p, &times).unwrap();
            let l1 = laplace_simpson(&first, lam, t_max);
            let l2 = laplace_simpson(&second, lam, t_max);
            assert!((l1 - laplace_p_ll(&p, lam).unwrap()).abs() < 1e-6, "n=1 λ={lam}");
            assert!((l2 - laplace_p_ll_sq(&p, lam).unwrap()).abs() < 1e-6, "n=2 λ={lam}");
        }
    }
}

#[test]
fn evolved_vectors_stay_hermitian_with_unit_trace() {
    let p = params(1.0, 0.7);
    let state = SpinState::normalized(Complex64::new(0.6, 0.1), Complex64::new(0.2, -0.7)).unwrap();
    for n in 1..=3 {
        let gen = build_generator(n, &p).unwrap();
        let v0 = gen.product_vector(&vec![state.pair_vector(); n]).unwrap();
        let times = [0.0, 0.3, 1.7, 6.0];
        for v in evolve_grid(&gen, &v0, &times).unwrap() {
            assert!(hermitian_defect(&v, n) < 1e-12);
            // Σ over diagonal pairs of each replica gives the product of traces
            let trace: Complex64 = (0..v.len())
                .filter(|&idx| {
                    replica_lab::replica::ReplicaBasisState::from_index(idx, n)
                        .pairs
                        .iter()
                        .all(|q| q.is_diagonal())
                })
                .map(|idx| v[idx])
                .sum();
            assert!((trace - 1.0).norm() < 1e-12, "n={n} trace {trace}");
        }
    }
}

#[test]
fn single_pair_matches_closed_form_on_dense_grid() {
    for p in [params(1.0, 5.0), params(1.0, 0.2), params(1.0, 2.0)] {
        let gen = build_generator(1, &p).unwrap();
        let v0 = gen.product_vector(&[SpinState::left().pair_vector()]).unwrap();
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.15).collect();
        for (t, v) in times.iter().zip(evolve_grid(&gen, &v0, &times).unwrap()) {
            let a = v[PairState::A.index()];
            assert!((a.re - closed_form_p_ll(&p, *t).unwrap()).abs() < 1e-10);
            assert!(a.im.abs() < 1e-12);
        }
    }
}

#[test]
fn sector_and_full_space_agree_for_mixed_initial_state() {
    let p = params(1.3, 0.9);
    let state = SpinState::normalized(Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.6)).unwrap();
    let n = 3;
    let sector = SymmetricSector::new(n, &p).unwrap();
    let gen = build_generator(n, &p).unwrap();
    let single = state.pair_vector();
    let full = evolve_grid(&gen, &gen.product_vector(&vec![single; n]).unwrap(), &[2.5]).unwrap();
    let reduced = sector.evolve(&sector.tensor_power(&single), 2.5).unwrap();
    // ⟨P_L² P_R⟩: two replicas end in A, one in D
    let full_value = full[0][gen.index_of(&[PairState::A, PairState::A, PairState::D]).unwrap()].re;
    let sector_value = sector.component(&reduced, &[2, 0, 0, 1]).unwrap().re;
    assert!((full_value - sector_value).abs() < 1e-12);
}

fn distinct(mut rates: Vec<f64>, rel: f64) -> Vec<f64> {
    rates.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for r in rates {
        if out.last().is_none_or(|&l| (r - l).abs() > rel * l.abs().max(1e-300)) {
            out.push(r);
        }
    }
    out
}

#[test]
fn strong_noise_timescales() {
    let p = params(1.0, 100.0);
    let cutoff = 1e-10 * p.rate_scale();
    let one = distinct(decay_rates(&spectrum(&build_generator(1, &p).unwrap()).unwrap(), cutoff), 1e-3);
    assert_eq!(one.len(), 2, "{one:?}");
    assert!((one[0] / (1.0 / p.tau_slow()) - 1.0).abs() < 0.02);
    assert!((one[1] / p.gamma - 1.0).abs() < 0.02);

    let two = distinct(decay_rates(&spectrum(&build_generator(2, &p).unwrap()).unwrap(), cutoff), 1e-3);
    let expected = [0.01, 0.03, 100.0, 400.0];
    assert_eq!(two.len(), expected.len(), "{two:?}");
    for (got, want) in two.iter().zip(expected) {
        assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
    }
}

#[test]
fn zero_vector_stays_zero() {
    let p = params(1.0, 1.0);
    let gen = build_generator(2, &p).unwrap();
    let v = evolve_grid(&gen, &DVector::zeros(16), &[3.0]).unwrap();
    assert!(v[0].iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn engine_equivalence_over_relaxation_window() {
    for (gamma, delta) in [(1.0, 1.0), (5.0, 1.0), (0.1, 1.0)] {
        let p = params(delta, gamma);
        let t_end = 20.0 * p.tau_fast().max(p.tau_slow());
        let times: Vec<f64> = (0..50).map(|i| t_end * i as f64 / 49.0).collect();
        let curve = finite_time_moment_grid(&MomentSpec::from_left(1, 0).unwrap(), &p, &times).unwrap();
        for (t, v) in times.iter().zip(&curve) {
            assert!((v - closed_form_p_ll(&p, *t).unwrap()).abs() < 1e-8, "Γ={gamma} t={t}");
        }

        let lam = gamma;
        let t_max = 33.0 / lam;
        let n = 2 * ((t_max / 0.01) as usize / 2).max(2000);
        let grid: Vec<f64> = (0..=n).map(|i| t_max * i as f64 / n as f64).collect();
        let second = finite_time_moment_grid(&MomentSpec::from_left(2, 0).unwrap(), &p, &grid).unwrap();
        let got = laplace_simpson(&second, lam, t_max);
        assert!((got - laplace_p_ll_sq(&p, lam).unwrap()).abs() < 1e-6, "Γ={gamma}");
    }
}

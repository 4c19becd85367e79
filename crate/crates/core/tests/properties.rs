use ncsir::analysis::ensemble_ms;
use ncsir::integrate::{sde_simulate, IntegrationConfig, NoiseStream};
use ncsir::model::{self, diffusion, diffusion_directional_derivative, drift};
use ncsir::scenario::preset;
use ncsir::verify::Sampler;
use ncsir::{NoiseVariant, State};
use rayon::prelude::*;

fn scaled(x: &State, k: f64) -> State {
    State::from_array(x.to_array().map(|v| k * v))
}

#[test]
fn milstein_correction_matches_forward_difference() {
    let mut rng = Sampler::new(17);
    for k in 0..1000 {
        let variant = if k % 2 == 0 {
            NoiseVariant::Reduced
        } else {
            NoiseVariant::Full
        };
        let mut p = rng.params(variant);
        p = p
            .with(|v| {
                v.sigma_beta = v.sigma_beta.min(1.0);
                v.sigma_mu = v.sigma_mu.min(1.0);
            })
            .unwrap();
        let x = rng.state(1.0);
        let g = diffusion(&x, &p);
        let h = 1e-6;
        let moved = State::from_array(std::array::from_fn(|i| x.to_array()[i] + h * g[i]));
        let fd: Vec<f64> = diffusion(&moved, &p)
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b) / h)
            .collect();
        let exact = diffusion_directional_derivative(&x, &p);
        let err = fd
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-4, "state {k}: {err}");
    }
}

#[test]
fn diffusion_is_quadratic_and_drift_splits_by_degree() {
    let mut rng = Sampler::new(23);
    for k in 0..500 {
        let variant = if k % 2 == 0 {
            NoiseVariant::Reduced
        } else {
            NoiseVariant::Full
        };
        let p = rng.params(variant);
        let x = rng.state(1.0);
        let lambda = rng.uniform(0.1, 3.0);

        let g1 = diffusion(&x, &p);
        let g2 = diffusion(&scaled(&x, lambda), &p);
        for i in 0..6 {
            let tol = 1e-13 * (1.0 + g2[i].abs() + lambda * lambda * g1[i].abs());
            assert!((g2[i] - lambda * lambda * g1[i]).abs() < tol);
        }

        // f(x) = b·e + L x + Q(x): recover the constant, linear and quadratic
        // parts from three scalings and check f(λx) = b·e + λLx + λ²Q(x).
        let f0 = drift(&State::default(), &p);
        let f1 = drift(&x, &p);
        let f2 = drift(&scaled(&x, 2.0), &p);
        let fl = drift(&scaled(&x, lambda), &p);
        for i in 0..6 {
            let a = f1[i] - f0[i];
            let b = f2[i] - f0[i];
            let quad = (b - 2.0 * a) / 2.0;
            let lin = a - quad;
            let want = f0[i] + lambda * lin + lambda * lambda * quad;
            assert!(
                (fl[i] - want).abs() < 1e-12 * (1.0 + fl[i].abs() + f2[i].abs()),
                "{i}"
            );
        }
    }
}

#[test]
fn drift_total_is_births_minus_deaths() {
    let mut rng = Sampler::new(5);
    for _ in 0..1000 {
        let p = rng.params(NoiseVariant::Full);
        let x = rng.state(3.0);
        let total: f64 = drift(&x, &p).iter().sum();
        let want = p.b - p.delta * x.total();
        assert!((total - want).abs() < 1e-13 * (1.0 + want.abs() + 10.0 * x.total()));
    }
}

#[test]
fn derived_quantities() {
    let p = preset("fig1", false).unwrap().params;
    let x = State::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
    let d = model::derived(&x, &p);
    assert!((d.i_mixing - (0.75 * 0.2 + 0.5)).abs() < 1e-15);
    assert!((d.n_star - 1.5).abs() < 1e-15);
    assert!((d.n_total - 2.1).abs() < 1e-15);
}

#[test]
fn increments_have_standard_marginals() {
    let dt: f64 = 0.05;
    let n = 1_000_000usize;
    let dw: Vec<f64> = NoiseStream::new(8, 3)
        .normals()
        .take(n)
        .map(|z| z * dt.sqrt())
        .collect();
    let mean = dw.iter().sum::<f64>() / n as f64;
    let var = dw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(
        mean.abs() < 4.0 * dt.sqrt() / (n as f64).sqrt(),
        "mean {mean}"
    );
    assert!((var / dt - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn distinct_paths_are_uncorrelated() {
    let n = 200_000;
    let a: Vec<f64> = NoiseStream::new(8, 0).normals().take(n).collect();
    let b: Vec<f64> = NoiseStream::new(8, 1).normals().take(n).collect();
    let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

#[test]
fn standard_error_shrinks_with_root_n() {
    let sc = preset("fig1", false).unwrap();
    let cfg = IntegrationConfig {
        t_max: 5.0,
        ..sc.cfg
    };
    let target = sc.target();
    let small = ensemble_ms(&sc.params, &sc.x0, &target, &cfg, 11, 200).unwrap();
    let large = ensemble_ms(&sc.params, &sc.x0, &target, &cfg, 12, 800).unwrap();
    let k = small.times.len() - 1;
    let ratio = large.std_error[k] / small.std_error[k];
    assert!((0.4..=0.6).contains(&ratio), "{ratio}");
}

#[test]
fn fig1_ensemble_mean_reaches_compliant_equilibrium() {
    let sc = preset("fig1", false).unwrap();
    let finals: Vec<[f64; 6]> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            sde_simulate(&sc.params, &sc.x0, &sc.cfg, NoiseStream::new(3, k))
                .unwrap()
                .last()
                .to_array()
        })
        .collect();
    let target = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for i in 0..6 {
        let mean = finals.iter().map(|f| f[i]).sum::<f64>() / finals.len() as f64;
        assert!((mean - target[i]).abs() < 0.05, "component {i}: {mean}");
    }
}

#[test]
fn ensemble_reduction_is_order_independent_of_threads() {
    let sc = preset("fig2", false).unwrap();
    let cfg = IntegrationConfig {
        t_max: 10.0,
        ..sc.cfg
    };
    let target = sc.target();
    let a = ensemble_ms(&sc.params, &sc.x0, &target, &cfg, 4, 64).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let b = pool.install(|| ensemble_ms(&sc.params, &sc.x0, &target, &cfg, 4, 64).unwrap());
    assert_eq!(a, b);
}

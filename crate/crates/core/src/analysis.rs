//! Monte Carlo ensemble estimators for mean-square decay and long-run
//! time averages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{sde_simulate, IntegrateError, IntegrationConfig, NoiseStream, Trajectory};
use crate::model::{ModelParams, State};

/// Fraction of diverged paths above which an ensemble estimate is refused.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("ensemble needs at least 2 paths, got {0}")]
    TooFewPaths(u64),
    #[error("{failed} of {n_paths} paths diverged (limit 1%)")]
    TooManyFailures { failed: u64, n_paths: u64 },
    #[error("decay fit window holds {0} samples; at least 5 are needed")]
    WindowTooSmall(usize),
    #[error("burn-in {t_burn} must be below the final time {t_max}")]
    BurnInTooLong { t_burn: f64, t_max: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Per-time sample moments over an ensemble of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    /// Estimate of `E|X(t) - target|²`.
    pub ms_distance: Vec<f64>,
    /// `E[I²]`.
    pub ms_i: Vec<f64>,
    /// `E[(I*)²]`.
    pub ms_istar: Vec<f64>,
    /// `E[(S - target.S)² + (S* - target.S*)²]`.
    pub ms_susceptible: Vec<f64>,
    /// Standard error of `ms_distance`.
    pub std_error: Vec<f64>,
    pub n_paths: u64,
    /// Paths that diverged and are excluded from the moments.
    pub failed_paths: u64,
    pub min_component_seen: f64,
    pub clamped_mass_max: f64,
    pub population_residual_max: f64,
}

impl EnsembleSummary {
    /// CSV with header `t,ms_distance,ms_I,ms_Istar,std_error`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "ms_distance", "ms_I", "ms_Istar", "std_error"])?;
        for k in 0..self.times.len() {
            w.write_record(
                [
                    self.times[k],
                    self.ms_distance[k],
                    self.ms_i[k],
                    self.ms_istar[k],
                    self.std_error[k],
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-path squared quantities at each recorded time.
struct PathMoments {
    dist: Vec<f64>,
    i: Vec<f64>,
    istar: Vec<f64>,
    susceptible: Vec<f64>,
    min_component: f64,
    clamped: f64,
    residual: f64,
}

fn moments(traj: &Trajectory, target: &State) -> PathMoments {
    PathMoments {
        dist: traj.states.iter().map(|x| x.distance_sq(target)).collect(),
        i: traj.states.iter().map(|x| x.i * x.i).collect(),
        istar: traj.states.iter().map(|x| x.i_star * x.i_star).collect(),
        susceptible: traj
            .states
            .iter()
            .map(|x| (x.s - target.s).powi(2) + (x.s_star - target.s_star).powi(2))
            .collect(),
        min_component: traj.min_component_seen,
        clamped: traj.clamped_mass,
        residual: traj.population_residual_max,
    }
}

/// Simulates `n_paths` independent paths (`path_index = 0..n_paths` under
/// `seed`) and reduces them in path order.
pub fn ensemble_ms(
    p: &ModelParams,
    x0: &State,
    target: &State,
    cfg: &IntegrationConfig,
    seed: u64,
    n_paths: u64,
) -> Result<EnsembleSummary, AnalysisError> {
    if n_paths < 2 {
        return Err(AnalysisError::TooFewPaths(n_paths));
    }
    let results: Vec<Result<PathMoments, IntegrateError>> = (0..n_paths)
        .into_par_iter()
        .map(|k| sde_simulate(p, x0, cfg, NoiseStream::new(seed, k)).map(|t| moments(&t, target)))
        .collect();

    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0u64;
    for r in results {
        match r {
            Ok(m) => ok.push(m),
            Err(IntegrateError::Diverged { .. }) => failed += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if failed as f64 > MAX_FAILED_FRACTION * n_paths as f64 || ok.len() < 2 {
        return Err(AnalysisError::TooManyFailures { failed, n_paths });
    }

    let len = ok[0].dist.len();
    let n = ok.len() as f64;
    let mean_of = |pick: fn(&PathMoments) -> &Vec<f64>| -> Vec<f64> {
        (0..len)
            .map(|t| ok.iter().map(|m| pick(m)[t]).sum::<f64>() / n)
            .collect()
    };
    let ms_distance = mean_of(|m| &m.dist);
    let std_error = (0..len)
        .map(|t| {
            let mean = ms_distance[t];
            let var = ok.iter().map(|m| (m.dist[t] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();

    let times = {
        let stride = cfg.record_stride as f64;
        (0..len).map(|k| k as f64 * stride * cfg.dt).collect()
    };

    Ok(EnsembleSummary {
        times,
        ms_i: mean_of(|m| &m.i),
        ms_istar: mean_of(|m| &m.istar),
        ms_susceptible: mean_of(|m| &m.susceptible),
        ms_distance,
        std_error,
        n_paths,
        failed_paths: failed,
        min_component_seen: ok
            .iter()
            .map(|m| m.min_component)
            .fold(f64::INFINITY, f64::min),
        clamped_mass_max: ok.iter().map(|m| m.clamped).fold(0.0, f64::max),
        population_residual_max: ok.iter().map(|m| m.residual).fold(0.0, f64::max),
    })
}

/// Least-squares exponential fit `ms_distance ≈ e^{intercept + rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

pub fn fit_decay(summary: &EnsembleSummary, window: (f64, f64)) -> Result<DecayFit, AnalysisError> {
    fit_series(&summary.times, &summary.ms_distance, window)
}

/// Same fit on an arbitrary series.
pub fn fit_series(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<DecayFit, AnalysisError> {
    let eps = 1e-9 * (times.get(1).copied().unwrap_or(1.0) - times[0]).abs();
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - eps && **t <= window.1 + eps)
        .map(|(t, v)| (*t, v.max(1e-300).ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(AnalysisError::WindowTooSmall(xs.len()));
    }
    let (rate, intercept, r_squared) = crate::integrate::least_squares(&xs, &ys);
    Ok(DecayFit {
        rate,
        intercept,
        r_squared,
        window,
    })
}

/// Trapezoidal `(1/(T - t_burn)) ∫_{t_burn}^{T} |X(t) - target|² dt`.
pub fn time_average_distance(
    traj: &Trajectory,
    target: &State,
    t_burn: f64,
) -> Result<f64, AnalysisError> {
    let t_max = *traj.times.last().expect("trajectory is never empty");
    if !(t_burn < t_max) {
        return Err(AnalysisError::BurnInTooLong { t_burn, t_max });
    }
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let d = x.distance_sq(target);
        if let Some((t0, d0)) = prev {
            if *t > t_burn {
                // Clip the first panel at t_burn, interpolating linearly.
                let (start, d_start) = if t0 < t_burn {
                    let w = (t_burn - t0) / (t - t0);
                    (t_burn, d0 + w * (d - d0))
                } else {
                    (t0, d0)
                };
                integral += 0.5 * (d_start + d) * (t - start);
            }
        }
        prev = Some((*t, d));
    }
    Ok(integral / (t_max - t_burn))
}

/// Per-path time averages for `n_paths` paths, in path order.
pub fn ensemble_time_averages(
    p: &ModelParams,
    x0: &State,
    target: &State,
    cfg: &IntegrationConfig,
    seed: u64,
    n_paths: u64,
    t_burn: f64,
) -> Result<Vec<f64>, AnalysisError> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let traj = sde_simulate(p, x0, cfg, NoiseStream::new(seed, k))?;
            time_average_distance(&traj, target, t_burn)
        })
        .collect()
}

/// Envelope `2·max(I₀², (I₀*)²)·e^{-Ct}` with `C = 2(1 - ℛ₀^σ)/(γ+δ)` for
/// the infectious second moments in the all-noncompliant regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfectionEnvelope {
    pub amplitude: f64,
    pub rate: f64,
}

impl InfectionEnvelope {
    pub fn new(p: &ModelParams, x0: &State) -> Self {
        let r0s = crate::equilibria::r0_sigma_noncompliant(p);
        InfectionEnvelope {
            amplitude: 2.0 * (x0.i * x0.i).max(x0.i_star * x0.i_star),
            rate: 2.0 * (1.0 - r0s) / (p.gamma + p.delta),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (-self.rate * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamValues;

    fn fig1() -> ModelParams {
        ModelParams::new(ParamValues {
            b: 0.2,
            delta: 0.2,
            beta: 1.0,
            gamma: 0.5,
            alpha: 0.25,
            mu: 0.2,
            nu: 0.2,
            xi: 0.0,
            sigma_beta: 0.5,
            sigma_mu: 0.5,
            variant: Default::default(),
        })
        .unwrap()
    }

    fn synthetic(times: Vec<f64>, values: Vec<f64>) -> EnsembleSummary {
        let n = times.len();
        EnsembleSummary {
            times,
            ms_distance: values,
            ms_i: vec![0.0; n],
            ms_istar: vec![0.0; n],
            ms_susceptible: vec![0.0; n],
            std_error: vec![0.0; n],
            n_paths: 2,
            failed_paths: 0,
            min_component_seen: 0.0,
            clamped_mass_max: 0.0,
            population_residual_max: 0.0,
        }
    }

    #[test]
    fn fit_recovers_exponential() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let values = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_decay(&synthetic(times, values), (0.0, 10.0)).unwrap();
        assert!((fit.rate + 2.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_constant_is_flat() {
        let times: Vec<f64> = (0..20).map(f64::from).collect();
        let fit = fit_decay(&synthetic(times, vec![0.3; 20]), (0.0, 19.0)).unwrap();
        assert_eq!(fit.rate, 0.0);
    }

    #[test]
    fn fit_rejects_short_window() {
        let times: Vec<f64> = (0..20).map(f64::from).collect();
        assert!(matches!(
            fit_decay(&synthetic(times, vec![1.0; 20]), (0.0, 3.0)),
            Err(AnalysisError::WindowTooSmall(4))
        ));
    }

    #[test]
    fn zero_noise_at_equilibrium_has_zero_distance() {
        let p = fig1()
            .with(|v| {
                v.sigma_beta = 0.0;
                v.sigma_mu = 0.0;
            })
            .unwrap();
        let x1 = State::disease_free(1.0, 0.0);
        let s = ensemble_ms(&p, &x1, &x1, &IntegrationConfig::default(), 1, 4).unwrap();
        assert!(s.ms_distance.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn too_few_paths() {
        let x1 = State::disease_free(1.0, 0.0);
        assert!(matches!(
            ensemble_ms(&fig1(), &x1, &x1, &IntegrationConfig::default(), 1, 1),
            Err(AnalysisError::TooFewPaths(1))
        ));
    }

    #[test]
    fn time_average_of_constant_target_is_zero() {
        let x = State::disease_free(1.0, 0.0);
        let traj = Trajectory {
            times: (0..=10).map(f64::from).collect(),
            states: vec![x; 11],
            min_component_seen: 0.0,
            population_residual_max: 0.0,
            clamped_mass: 0.0,
        };
        assert_eq!(time_average_distance(&traj, &x, 2.5).unwrap(), 0.0);
        assert!(time_average_distance(&traj, &x, 10.0).is_err());
    }

    #[test]
    fn time_average_trapezoid_with_clipped_panel() {
        // d(t) = t on [0, 4]; average over [1, 4] is 2.5.
        let traj = Trajectory {
            times: (0..=4).map(f64::from).collect(),
            states: (0..=4)
                .map(|k| State::new((k as f64).sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0))
                .collect(),
            min_component_seen: 0.0,
            population_residual_max: 0.0,
            clamped_mass: 0.0,
        };
        let avg = time_average_distance(&traj, &State::default(), 1.5).unwrap();
        assert!((avg - 2.75).abs() < 1e-12, "{avg}");
    }

    #[test]
    fn ensemble_is_deterministic_in_seed() {
        let cfg = IntegrationConfig {
            t_max: 5.0,
            ..Default::default()
        };
        let x0 = State::new(0.25, 0.25 - 1e-8, 1e-8, 0.25, 0.25 - 1e-8, 1e-8);
        let x1 = State::disease_free(1.0, 0.0);
        let a = ensemble_ms(&fig1(), &x0, &x1, &cfg, 5, 16).unwrap();
        let b = ensemble_ms(&fig1(), &x0, &x1, &cfg, 5, 16).unwrap();
        assert_eq!(a, b);
    }
}

//! Fixed-step time integration: explicit Euler for the ODE, scalar-noise
//! Milstein for the SDE, and a strong-order probe on geometric Brownian
//! motion.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelParams, State, DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid integration config: {0}")]
    Config(&'static str),
    #[error("invalid initial state: {0}")]
    InitialState(&'static str),
    #[error("trajectory diverged at t = {t} (step {step})")]
    Diverged { step: u64, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityPolicy {
    /// Record the most negative component; never alter the state.
    #[default]
    Monitor,
    /// Set negative components to zero after each step and accumulate the
    /// removed mass.
    ClampToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Milstein,
    /// Milstein without the `½(DG·G)(ΔW² - Δt)` term.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: u64,
    #[serde(default)]
    pub positivity_policy: PositivityPolicy,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            dt: 0.05,
            t_max: 50.0,
            record_stride: 1,
            positivity_policy: PositivityPolicy::Monitor,
            scheme: Scheme::Milstein,
        }
    }
}

impl IntegrationConfig {
    /// Number of steps; `t_max` is rounded to the nearest multiple of `dt`.
    pub fn n_steps(&self) -> Result<u64, IntegrateError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrateError::Config("dt must be positive and finite"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(IntegrateError::Config("t_max must be positive and finite"));
        }
        if self.dt > self.t_max {
            return Err(IntegrateError::Config("dt must not exceed t_max"));
        }
        if self.record_stride == 0 {
            return Err(IntegrateError::Config("record_stride must be >= 1"));
        }
        let n = (self.t_max / self.dt).round();
        if n >= u64::MAX as f64 {
            return Err(IntegrateError::Config("t_max/dt does not fit in 64 bits"));
        }
        Ok(n as u64)
    }
}

/// Sampled solution of one integration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Most negative compartment value seen at any step (before clamping).
    pub min_component_seen: f64,
    /// Largest deviation of the total population from its closed form.
    pub population_residual_max: f64,
    /// Total mass removed by `ClampToZero` (zero under `Monitor`).
    pub clamped_mass: f64,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with header `t,S,I,R,S_star,I_star,R_star`; floats are written in
    /// shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "S", "I", "R", "S_star", "I_star", "R_star"])?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row = std::iter::once(*t).chain(x.to_array());
            w.write_record(row.map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact total population `b/δ + (N₀ - b/δ)e^{-δt}`.
pub fn total_population(p: &ModelParams, n0: f64, t: f64) -> f64 {
    let cap = p.capacity();
    cap + (n0 - cap) * (-p.delta * t).exp()
}

/// Source of Wiener increments for one sample path.
///
/// Increments come from ChaCha8 keyed by `seed`, with `path_index` as the
/// stream id and the step index fixing the word position, so any increment
/// can be regenerated independently of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub path_index: u64,
}

/// 32-bit words consumed per Gaussian draw (two u64 for Box–Muller).
const WORDS_PER_DRAW: u128 = 4;

impl NoiseStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        NoiseStream { seed, path_index }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path_index);
        rng
    }

    /// Standard normal draws in step order.
    pub fn normals(&self) -> Normals {
        Normals { rng: self.rng() }
    }

    /// The standard normal draw for `step` (random access).
    pub fn normal_at(&self, step: u64) -> f64 {
        let mut rng = self.rng();
        rng.set_word_pos(step as u128 * WORDS_PER_DRAW);
        box_muller(&mut rng)
    }
}

pub struct Normals {
    rng: ChaCha8Rng,
}

impl Iterator for Normals {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(box_muller(&mut self.rng))
    }
}

#[inline]
fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// An Itô SDE `dX = f(X)dt + g(X)dW` driven by one scalar Wiener process.
pub trait ScalarNoiseSystem<const N: usize> {
    fn drift(&self, x: &[f64; N]) -> [f64; N];
    fn diffusion(&self, x: &[f64; N]) -> [f64; N];
    /// `(Dg·g)(x)`.
    fn diffusion_along_itself(&self, x: &[f64; N]) -> [f64; N];
}

impl ScalarNoiseSystem<DIM> for ModelParams {
    fn drift(&self, x: &[f64; DIM]) -> [f64; DIM] {
        model::drift(&State::from_array(*x), self)
    }

    fn diffusion(&self, x: &[f64; DIM]) -> [f64; DIM] {
        model::diffusion(&State::from_array(*x), self)
    }

    fn diffusion_along_itself(&self, x: &[f64; DIM]) -> [f64; DIM] {
        model::diffusion_directional_derivative(&State::from_array(*x), self)
    }
}

/// One step of the scalar-noise Milstein (or Euler–Maruyama) scheme.
#[inline]
pub fn scheme_step<const N: usize, S: ScalarNoiseSystem<N>>(
    sys: &S,
    x: &[f64; N],
    dt: f64,
    dw: f64,
    scheme: Scheme,
) -> [f64; N] {
    let f = sys.drift(x);
    let g = sys.diffusion(x);
    let mut next: [f64; N] = std::array::from_fn(|k| x[k] + f[k] * dt + g[k] * dw);
    if scheme == Scheme::Milstein {
        let lg = sys.diffusion_along_itself(x);
        let c = 0.5 * (dw * dw - dt);
        for k in 0..N {
            next[k] += lg[k] * c;
        }
    }
    next
}

/// `x + f(x)dt + g(x)dW + ½(Dg·g)(x)(dW² - dt)`.
pub fn milstein_step(x: &State, p: &ModelParams, dt: f64, dw: f64) -> State {
    State::from_array(scheme_step(p, &x.to_array(), dt, dw, Scheme::Milstein))
}

pub fn euler_step(x: &State, p: &ModelParams, dt: f64) -> State {
    let f = model::drift(x, p);
    let a = x.to_array();
    State::from_array(std::array::from_fn(|k| a[k] + f[k] * dt))
}

fn check_initial(x0: &State) -> Result<(), IntegrateError> {
    if !x0.is_finite() {
        return Err(IntegrateError::InitialState("components must be finite"));
    }
    if x0.min_component() < 0.0 {
        return Err(IntegrateError::InitialState("components must be >= 0"));
    }
    Ok(())
}

/// Shared stepping loop; `increment(step)` yields `ΔW` or `None` for the ODE.
fn run(
    p: &ModelParams,
    x0: &State,
    cfg: &IntegrationConfig,
    mut increment: impl FnMut() -> Option<f64>,
) -> Result<Trajectory, IntegrateError> {
    check_initial(x0)?;
    let n_steps = cfg.n_steps()?;
    let n0 = x0.total();
    let blowup = 10.0 * p.capacity().max(n0);
    let capacity = (n_steps / cfg.record_stride + 1) as usize;

    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(*x0);

    let mut x = x0.to_array();
    let mut min_seen = x0.min_component();
    let mut residual_max: f64 = 0.0;
    let mut clamped = 0.0;

    for step in 1..=n_steps {
        x = match increment() {
            Some(dw) => scheme_step(p, &x, cfg.dt, dw, cfg.scheme),
            None => {
                let f = model::drift(&State::from_array(x), p);
                std::array::from_fn(|k| x[k] + f[k] * cfg.dt)
            }
        };
        let t = step as f64 * cfg.dt;
        if x.iter().any(|c| !c.is_finite() || *c > blowup) {
            return Err(IntegrateError::Diverged { step, t });
        }
        for c in x.iter_mut() {
            min_seen = min_seen.min(*c);
            if *c < 0.0 && cfg.positivity_policy == PositivityPolicy::ClampToZero {
                clamped -= *c;
                *c = 0.0;
            }
        }
        let total: f64 = x.iter().sum();
        residual_max = residual_max.max((total - total_population(p, n0, t)).abs());
        if step % cfg.record_stride == 0 {
            times.push(t);
            states.push(State::from_array(x));
        }
    }

    Ok(Trajectory {
        times,
        states,
        min_component_seen: min_seen,
        population_residual_max: residual_max,
        clamped_mass: clamped,
    })
}

/// Explicit Euler for the deterministic system.
pub fn euler_simulate(
    p: &ModelParams,
    x0: &State,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, IntegrateError> {
    run(p, x0, cfg, || None)
}

/// One sample path of the stochastic system.
pub fn sde_simulate(
    p: &ModelParams,
    x0: &State,
    cfg: &IntegrationConfig,
    noise: NoiseStream,
) -> Result<Trajectory, IntegrateError> {
    let sqrt_dt = cfg.dt.sqrt();
    let mut normals = noise.normals();
    run(p, x0, cfg, || normals.next().map(|z| z * sqrt_dt))
}

/// Geometric Brownian motion `dX = aX dt + bX dW`, used to measure strong
/// convergence against its exact solution.
#[derive(Debug, Clone, Copy)]
pub struct Gbm {
    pub a: f64,
    pub b: f64,
}

impl ScalarNoiseSystem<1> for Gbm {
    fn drift(&self, x: &[f64; 1]) -> [f64; 1] {
        [self.a * x[0]]
    }
    fn diffusion(&self, x: &[f64; 1]) -> [f64; 1] {
        [self.b * x[0]]
    }
    fn diffusion_along_itself(&self, x: &[f64; 1]) -> [f64; 1] {
        [self.b * self.b * x[0]]
    }
}

impl Gbm {
    pub fn exact(&self, x0: f64, t: f64, w: f64) -> f64 {
        x0 * ((self.a - 0.5 * self.b * self.b) * t + self.b * w).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderReport {
    pub dts: Vec<f64>,
    /// Mean absolute error at `T` for each step size.
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln(error)` against `ln(dt)`.
    pub slope: f64,
}

/// Strong-order estimate for GBM with `a = 1.5`, `b = 1`, `X₀ = 1`, `T = 1`
/// over `dt = 2⁻⁴ … 2⁻⁹`. Coarse increments are sums of fine ones.
pub fn strong_order_probe(noise: NoiseStream, n_paths: u64, scheme: Scheme) -> StrongOrderReport {
    strong_order_probe_for(Gbm { a: 1.5, b: 1.0 }, noise, n_paths, scheme)
}

pub fn strong_order_probe_for(
    gbm: Gbm,
    noise: NoiseStream,
    n_paths: u64,
    scheme: Scheme,
) -> StrongOrderReport {
    use rayon::prelude::*;

    const FINEST: u32 = 9;
    const LEVELS: [u32; 6] = [4, 5, 6, 7, 8, 9];
    let t_end = 1.0;
    let x0 = 1.0;
    let n_fine = 1usize << FINEST;
    let dt_fine = t_end / n_fine as f64;

    let per_path: Vec<[f64; LEVELS.len()]> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let stream = NoiseStream::new(noise.seed, noise.path_index.wrapping_add(k));
            let dw: Vec<f64> = stream
                .normals()
                .take(n_fine)
                .map(|z| z * dt_fine.sqrt())
                .collect();
            let w_end: f64 = dw.iter().sum();
            let exact = gbm.exact(x0, t_end, w_end);
            LEVELS.map(|level| {
                let block = 1usize << (FINEST - level);
                let dt = t_end / (1usize << level) as f64;
                let x = dw.chunks(block).fold([x0], |x, chunk| {
                    scheme_step(&gbm, &x, dt, chunk.iter().sum(), scheme)
                });
                (x[0] - exact).abs()
            })
        })
        .collect();

    let errors: Vec<f64> = (0..LEVELS.len())
        .map(|j| per_path.iter().map(|e| e[j]).sum::<f64>() / n_paths as f64)
        .collect();
    let dts: Vec<f64> = LEVELS
        .iter()
        .map(|&l| t_end / (1usize << l) as f64)
        .collect();
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let slope = least_squares(&xs, &ys).0;
    StrongOrderReport { dts, errors, slope }
}

/// Ordinary least squares `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, r²)`.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

//! Self-check suite: model invariants, linear-algebra residuals, equilibrium
//! cross-checks, integrator order and the ensemble stability checks.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    ensemble_ms, ensemble_time_averages, fit_decay, EnsembleSummary, InfectionEnvelope,
};
use crate::equilibria::{self, certificate, classify, solve_dfe, EquilibriaError};
use crate::integrate::{
    self, euler_simulate, strong_order_probe, IntegrationConfig, NoiseStream, PositivityPolicy,
    Scheme,
};
use crate::model::{self, ModelParams, NoiseVariant, ParamValues, State};
use crate::scenario::{preset, PRESET_NAMES};
use crate::smalllin::{self, Mat2};

/// Euler global-error constant for the total population, `|N - N_exact| <= K·dt`.
/// Measured 0.1315 on fig5 (the only preset with `N₀ ≠ b/δ`).
pub const POPULATION_K: f64 = 0.14;
/// Monte Carlo allowance on the infection envelope.
pub const ENVELOPE_SLACK: f64 = 1.2;
pub const ENSEMBLE_PATHS: u64 = 500;
pub const CERTIFICATE_PATHS: u64 = 200;
pub const BURN_IN: f64 = 10.0;
pub const STRONG_ORDER_PATHS: u64 = 2000;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Skip the Monte Carlo ensemble checks.
    pub quick: bool,
    /// Run the SDE checks with Euler–Maruyama in place of Milstein.
    pub disable_milstein_correction: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Uniform draws on `[lo, hi)`.
pub struct Sampler(ChaCha8Rng);

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn params(&mut self, variant: NoiseVariant) -> ModelParams {
        ModelParams::new(ParamValues {
            b: self.uniform(0.05, 2.0),
            delta: self.uniform(0.05, 2.0),
            beta: self.uniform(0.05, 3.0),
            gamma: self.uniform(0.05, 2.0),
            alpha: self.uniform(0.0, 1.0),
            mu: self.uniform(0.05, 5.0),
            nu: self.uniform(0.0, 2.0),
            xi: self.uniform(0.0, 1.0),
            sigma_beta: self.uniform(0.0, 2.0),
            sigma_mu: self.uniform(0.0, 2.0),
            variant,
        })
        .expect("sampled ranges are valid")
    }

    pub fn state(&mut self, scale: f64) -> State {
        State::from_array(std::array::from_fn(|_| self.uniform(0.0, scale)))
    }

    /// A point of the admissible simplex `s, s* >= 0, s + s* <= cap`.
    pub fn simplex_point(&mut self, cap: f64) -> (f64, f64) {
        let (mut u, mut v) = (self.uniform(0.0, 1.0), self.uniform(0.0, 1.0));
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        (u * cap, v * cap)
    }
}

fn closed_form_checks(out: &mut Vec<CheckResult>) {
    let mut rng = Sampler::new(0x5eed);

    let mut drift_err: f64 = 0.0;
    let mut diff_err: f64 = 0.0;
    let mut fd_err: f64 = 0.0;
    for k in 0..1000 {
        let variant = if k % 2 == 0 {
            NoiseVariant::Reduced
        } else {
            NoiseVariant::Full
        };
        let p = rng.params(variant);
        let x = rng.state(p.capacity().max(1.0) / 3.0);
        let f = model::drift(&x, &p);
        let scale = p.b + p.delta * x.total() + f.iter().map(|v| v.abs()).sum::<f64>();
        drift_err =
            drift_err.max((f.iter().sum::<f64>() - (p.b - p.delta * x.total())).abs() / scale);

        let g = model::diffusion(&x, &p);
        diff_err = diff_err.max(g.iter().sum::<f64>().abs());

        let h = 1e-6;
        let shift = |sign: f64| {
            model::diffusion(
                &State::from_array(std::array::from_fn(|i| x.to_array()[i] + sign * h * g[i])),
                &p,
            )
        };
        let (up, down) = (shift(1.0), shift(-1.0));
        let exact = model::diffusion_directional_derivative(&x, &p);
        let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (0..6)
            .map(|i| ((up[i] - down[i]) / (2.0 * h) - exact[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        fd_err = fd_err.max(err / norm.max(1.0));
    }
    out.push(check(
        "drift sum equals b - delta*N",
        drift_err < 1e-14,
        format!("max relative error {drift_err:.2e}"),
    ));
    out.push(check(
        "diffusion components sum to zero",
        diff_err == 0.0,
        format!("max |sum| = {diff_err:e}"),
    ));
    out.push(check(
        "Milstein correction matches finite differences",
        fd_err < 1e-4,
        format!("max scaled error {fd_err:.2e} (central, h = 1e-6)"),
    ));

    let mut lyap_err: f64 = 0.0;
    let mut lyap_spd = true;
    for _ in 0..1000 {
        let (l1, l2) = (rng.uniform(-5.0, -0.1), rng.uniform(-5.0, -0.1));
        let (p, r) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
        let t = Mat2::new(1.0, p, r, 2.0 + p * r);
        let m = t * Mat2::diag(l1, l2) * t.inverse().expect("det t = 2");
        match smalllin::solve_lyapunov(&m) {
            Ok(q) => {
                let res = (m.transpose() * q + q * m + Mat2::IDENTITY).frobenius_norm();
                lyap_err = lyap_err.max(res);
                lyap_spd &= q.a11 > 0.0 && q.det() > 0.0;
            }
            Err(_) => lyap_spd = false,
        }
    }
    out.push(check(
        "Lyapunov solve residual and SPD",
        lyap_err < 1e-10 && lyap_spd,
        format!("max residual {lyap_err:.2e}"),
    ));

    let mut r0_err: f64 = 0.0;
    let mut eig_worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.params(NoiseVariant::Reduced);
        let (s, s_star) = rng.simplex_point(p.capacity());
        let closed = equilibria::r0_det(&p, s, s_star).expect("admissible");
        let spectral = equilibria::next_gen(&p, s, s_star)
            .expect("admissible")
            .spectral_r0();
        r0_err = r0_err.max((closed - spectral).abs() / closed.max(1.0));
        let dv = equilibria::dv_matrix(&p, s, s_star);
        let scale = smalllin::row_sum_norm_6(&dv).powi(6);
        for l in equilibria::dv_eigenvalues(&p, s, s_star).expect("admissible") {
            eig_worst = eig_worst.max(smalllin::char_residual_6(&dv, l) / scale);
        }
    }
    out.push(check(
        "R0 closed form equals spectral radius",
        r0_err < 1e-10,
        format!("max relative gap {r0_err:.2e}"),
    ));
    out.push(check(
        "DV eigenvalues are characteristic roots",
        eig_worst < 1e-8,
        format!("max |det(DV - l I)|/|DV|^6 = {eig_worst:.2e}"),
    ));

    let mut dfe_err: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.params(NoiseVariant::Reduced);
        for d in solve_dfe(&p) {
            let f = equilibria::dfe_drift(&p, &d);
            let scale = p.b.max(p.mu * p.capacity().powi(2)).max(1.0);
            dfe_err = dfe_err.max(f.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale);
        }
    }
    out.push(check(
        "drift vanishes at every disease-free equilibrium",
        dfe_err < 1e-12,
        format!("max scaled residual {dfe_err:.2e}"),
    ));

    let mono = (0..20).all(|k| {
        let p = rng.params(NoiseVariant::Reduced);
        equilibria::r0_monotonicity_probe(&p, 1000, k)
    });
    out.push(check(
        "R0 nondecreasing, maximal at (0, b/delta)",
        mono,
        "20 parameter sets x 1000 samples".into(),
    ));

    let sc = |name| preset(name, false).expect("preset exists").params;
    let (f1, f2, f3, f4, f5) = (sc("fig1"), sc("fig2"), sc("fig3"), sc("fig4"), sc("fig5"));
    let table = [
        (
            "fig1 r0_sigma compliant",
            equilibria::r0_sigma_compliant(&f1),
            0.860,
            5e-3,
        ),
        (
            "fig2 r0_sigma compliant",
            equilibria::r0_sigma_compliant(&f2),
            1.708,
            5e-3,
        ),
        (
            "fig2 r0(b/delta, 0)",
            equilibria::r0_det(&f2, 1.0, 0.0).unwrap_or(f64::NAN),
            0.803,
            5e-3,
        ),
        (
            "fig3 r0_sigma noncompliant",
            equilibria::r0_sigma_noncompliant(&f3),
            0.971,
            5e-3,
        ),
        (
            "fig4 r0_sigma noncompliant",
            equilibria::r0_sigma_noncompliant(&f4),
            0.971,
            5e-3,
        ),
        (
            "fig1 noncompliance lhs",
            equilibria::noncompliance_threshold(&f1).lhs,
            1.625,
            1e-12,
        ),
        (
            "fig2 noncompliance lhs",
            equilibria::noncompliance_threshold(&f2).lhs,
            11.0,
            1e-12,
        ),
        (
            "fig5 r0(0.25, 0.05)",
            equilibria::r0_det(&f5, 0.25, 0.05).unwrap_or(f64::NAN),
            0.0772,
            5e-4,
        ),
    ];
    for (name, got, want, tol) in table {
        out.push(check(
            name,
            (got - want).abs() <= tol,
            format!("{got:.6} vs {want} +/- {tol:e}"),
        ));
    }

    let cert = certificate(&f5);
    let (cert_ok, detail) = match &cert {
        Ok(c) => {
            let res = (c.m.transpose() * c.q + c.q * c.m + Mat2::IDENTITY).frobenius_norm();
            (
                res < 1e-10 && c.q.a11 > 0.0 && c.q.det() > 0.0 && c.c > 0.0,
                format!(
                    "bound {:.4} (published 0.0171), |Q|_2 = {:.4}, residual {res:.1e}",
                    c.bound, c.norm_q
                ),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    let refuses_nu0 = matches!(
        certificate(&f5.with(|v| v.nu = 0.0).expect("valid")),
        Err(EquilibriaError::ZeroNu)
    );
    let refuses_hot = matches!(
        certificate(&f5.with(|v| v.beta = 20.0).expect("valid")),
        Err(EquilibriaError::NotSubcritical { .. })
    );
    out.push(check(
        "fig5 certificate",
        cert_ok && refuses_nu0 && refuses_hot,
        detail,
    ));

    let verdicts = classify(&f1);
    out.push(check(
        "fig1 compliant equilibrium stable (ODE and SDE)",
        verdicts[0].deterministic_verdict
            == equilibria::DeterministicVerdict::LocallyAsymptoticallyStable
            && verdicts[0].stochastic_verdict == equilibria::StochasticVerdict::ExpMeanSquareStable,
        format!(
            "{:?} / {:?}",
            verdicts[0].deterministic_verdict, verdicts[0].stochastic_verdict
        ),
    ));
}

fn strong_order_checks(opts: &VerifyOptions, out: &mut Vec<CheckResult>) {
    let scheme = if opts.disable_milstein_correction {
        Scheme::EulerMaruyama
    } else {
        Scheme::Milstein
    };
    let mil = strong_order_probe(NoiseStream::new(2024, 0), STRONG_ORDER_PATHS, scheme);
    out.push(check(
        "Milstein strong order ~ 1",
        (0.8..=1.2).contains(&mil.slope),
        format!("slope {:.3}", mil.slope),
    ));
    let em = strong_order_probe(
        NoiseStream::new(2024, 0),
        STRONG_ORDER_PATHS,
        Scheme::EulerMaruyama,
    );
    out.push(check(
        "Euler-Maruyama strong order ~ 1/2",
        (0.4..=0.6).contains(&em.slope),
        format!("slope {:.3}", em.slope),
    ));

    let mut rng = Sampler::new(77);
    let mut z = Vec::with_capacity(1_000_000);
    let stream = NoiseStream::new(rng.0.next_u64(), 0);
    z.extend(stream.normals().take(1_000_000));
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    out.push(check(
        "Gaussian increments: mean and variance",
        mean.abs() < 4.0 / n.sqrt() && (var - 1.0).abs() < 0.05,
        format!("mean {mean:.2e}, variance {var:.4}"),
    ));
}

fn ensemble_checks(opts: &VerifyOptions, out: &mut Vec<CheckResult>) {
    let scheme = if opts.disable_milstein_correction {
        Scheme::EulerMaruyama
    } else {
        Scheme::Milstein
    };
    let get = |name: &str| {
        let mut sc = preset(name, false).expect("preset exists");
        sc.cfg.scheme = scheme;
        sc
    };

    let fig1 = get("fig1");
    for seed in [1u64, 2, 3] {
        let result = ensemble_ms(
            &fig1.params,
            &fig1.x0,
            &fig1.target(),
            &fig1.cfg,
            seed,
            ENSEMBLE_PATHS,
        )
        .and_then(|s| fit_decay(&s, (5.0, 50.0)).map(|f| (s, f)));
        let (passed, detail) = match result {
            Ok((s, fit)) => {
                let ratio = s.ms_distance[s.ms_distance.len() - 1] / s.ms_distance[0];
                (
                    ratio < 1e-3 && fit.rate < 0.0,
                    format!("ratio {ratio:.2e}, rate {:.4}", fit.rate),
                )
            }
            Err(e) => (false, e.to_string()),
        };
        out.push(check(
            &format!("fig1 mean-square decay (seed {seed})"),
            passed,
            detail,
        ));
    }

    let mut susceptible = Vec::new();
    for name in ["fig3", "fig4"] {
        let sc = get(name);
        let env = InfectionEnvelope::new(&sc.params, &sc.x0);
        let (passed, detail) =
            match ensemble_ms(&sc.params, &sc.x0, &sc.target(), &sc.cfg, 1, ENSEMBLE_PATHS) {
                Ok(s) => {
                    let worst = s
                        .times
                        .iter()
                        .enumerate()
                        .map(|(k, t)| s.ms_i[k].max(s.ms_istar[k]) / (ENVELOPE_SLACK * env.at(*t)))
                        .fold(0.0, f64::max);
                    susceptible.push((s, env));
                    (worst <= 1.0, format!("max ms/envelope {worst:.3}"))
                }
                Err(e) => (false, e.to_string()),
            };
        out.push(check(&format!("{name} infection envelope"), passed, detail));
    }
    if let [(s3, _), (s4, env4)] = susceptible.as_slice() {
        let (passed, detail) = susceptible_unsettled(s3, s4, env4);
        out.push(check(
            "fig4 susceptibles outside infection envelope",
            passed,
            detail,
        ));
    }

    let fig5 = get("fig5");
    let (passed, detail) = match (
        certificate(&fig5.params),
        ensemble_time_averages(
            &fig5.params,
            &fig5.x0,
            &fig5.target(),
            &fig5.cfg,
            1,
            CERTIFICATE_PATHS,
            BURN_IN,
        ),
    ) {
        (Ok(cert), Ok(avgs)) => {
            let mean = avgs.iter().sum::<f64>() / avgs.len() as f64;
            let within =
                avgs.iter().filter(|a| **a <= cert.bound).count() as f64 / avgs.len() as f64;
            (
                mean <= cert.bound && within >= 0.95,
                format!(
                    "mean {mean:.2e}, {:.0}% within bound {:.4}",
                    100.0 * within,
                    cert.bound
                ),
            )
        }
        (Err(e), _) => (false, e.to_string()),
        (_, Err(e)) => (false, e.to_string()),
    };
    out.push(check(
        "fig5 time average within certificate",
        passed,
        detail,
    ));

    let mut min_seen = f64::INFINITY;
    let mut clamped: f64 = 0.0;
    let mut failure = None;
    for name in PRESET_NAMES {
        let sc = get(name);
        for policy in [PositivityPolicy::Monitor, PositivityPolicy::ClampToZero] {
            let cfg = IntegrationConfig {
                positivity_policy: policy,
                ..sc.cfg
            };
            match ensemble_ms(&sc.params, &sc.x0, &sc.target(), &cfg, 1, ENSEMBLE_PATHS) {
                Ok(s) => {
                    min_seen = min_seen.min(s.min_component_seen);
                    clamped = clamped.max(s.clamped_mass_max);
                }
                Err(e) => failure = Some(format!("{name}: {e}")),
            }
        }
    }
    out.push(check(
        "positivity across preset ensembles",
        failure.is_none() && min_seen > -1e-3 && clamped < 1e-3,
        failure.unwrap_or(format!(
            "min component {min_seen:.2e}, clamped mass {clamped:.2e}"
        )),
    ));
}

/// Time at which the strong-noise susceptible moment is compared with the
/// weak-noise one.
pub const SUSCEPTIBLE_PROBE_TIME: f64 = 10.0;

/// With strong noncompliance noise the susceptible classes obey no
/// infection-type envelope: their second moment rises above it after `t = 0`
/// and stays above the weak-noise run at [`SUSCEPTIBLE_PROBE_TIME`].
pub fn susceptible_unsettled(
    weak: &EnsembleSummary,
    strong: &EnsembleSummary,
    env: &InfectionEnvelope,
) -> (bool, String) {
    let above = strong
        .times
        .iter()
        .zip(&strong.ms_susceptible)
        .skip(1)
        .any(|(t, m)| *m > env.at(*t));
    let k = strong
        .times
        .iter()
        .position(|t| (t - SUSCEPTIBLE_PROBE_TIME).abs() < 1e-9)
        .unwrap_or(strong.times.len() - 1);
    let (m3, m4) = (weak.ms_susceptible[k], strong.ms_susceptible[k]);
    (
        above && m4 > m3,
        format!(
            "exceeds envelope: {above}; at t = {}: {m4:.4} vs weak-noise {m3:.4}",
            strong.times[k]
        ),
    )
}

fn conservation_checks(out: &mut Vec<CheckResult>) {
    let mut worst: f64 = 0.0;
    for name in PRESET_NAMES {
        let sc = preset(name, false).expect("preset exists");
        if let Ok(t) = euler_simulate(&sc.params, &sc.x0, &sc.cfg) {
            worst = worst.max(t.population_residual_max / sc.cfg.dt);
        } else {
            worst = f64::INFINITY;
        }
        for k in 0..10 {
            match integrate::sde_simulate(&sc.params, &sc.x0, &sc.cfg, NoiseStream::new(9, k)) {
                Ok(t) => worst = worst.max(t.population_residual_max / sc.cfg.dt),
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    out.push(check(
        "total population within K*dt of closed form",
        worst <= POPULATION_K,
        format!("max |N - N_exact|/dt = {worst:.4} (K = {POPULATION_K})"),
    ));
}

/// Runs the suite. With `quick`, the ensemble checks are skipped.
pub fn run(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    closed_form_checks(&mut out);
    conservation_checks(&mut out);
    strong_order_checks(opts, &mut out);
    if !opts.quick {
        ensemble_checks(opts, &mut out);
    }
    out
}

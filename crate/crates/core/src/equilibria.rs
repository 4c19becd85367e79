//! Disease-free equilibria, reproductive ratios, stochastic extinction
//! thresholds, stability classification, and the Lyapunov certificate that
//! bounds the long-run mean-square distance to a mixed equilibrium.
//!
//! The next-generation matrices use the infectious-first ordering `(I, I*)`;
//! everywhere else compartments keep model order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{drift, ModelParams, State};
use crate::smalllin::{self, LinalgError, Mat2, Mat6};

/// Width of the band around a threshold inside which no verdict is given.
pub const THRESHOLD_BAND: f64 = 1e-9;

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriaError {
    #[error(
        "(s, s*) = ({s}, {s_star}) is outside the admissible set s, s* >= 0, s + s* <= b/delta"
    )]
    Inadmissible { s: f64, s_star: f64 },
    #[error("certificate needs nu > 0 (the constant diverges as nu -> 0)")]
    ZeroNu,
    #[error("certificate needs a mixed disease-free equilibrium (s > 0 and s* > 0); none exists for these parameters")]
    NoMixedEquilibrium,
    #[error("certificate needs R0(s, s*) < 1 at the mixed equilibrium, got {r0}")]
    NotSubcritical { r0: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DfeKind {
    /// `x₁ = (b/δ, 0)`: everyone compliant (`ξ = 0`).
    FullyCompliant,
    /// `x₂ = ((δ+ν)/μ, b/δ - (δ+ν)/μ)` (`ξ = 0`).
    Mixed,
    /// `x₃`, the unique equilibrium when `ξ ∈ (0, 1]`.
    Xi3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiseaseFreePoint {
    pub s: f64,
    pub s_star: f64,
    pub kind: DfeKind,
    pub admissible: bool,
}

impl DiseaseFreePoint {
    pub fn state(&self) -> State {
        State::disease_free(self.s, self.s_star)
    }

    /// Both susceptible classes strictly positive.
    pub fn is_mixed(&self) -> bool {
        self.admissible && self.s > 0.0 && self.s_star > 0.0
    }
}

/// All disease-free equilibria for the given inflow split `ξ`.
///
/// For `ξ = 0` both `x₁` and `x₂` are returned; `x₂` is flagged inadmissible
/// when `b/δ <= (δ+ν)/μ`. For `ξ > 0` the single physical root is returned.
pub fn solve_dfe(p: &ModelParams) -> Vec<DiseaseFreePoint> {
    let cap = p.capacity();
    let switch = (p.delta + p.nu) / p.mu;
    if p.xi == 0.0 {
        vec![
            DiseaseFreePoint {
                s: cap,
                s_star: 0.0,
                kind: DfeKind::FullyCompliant,
                admissible: true,
            },
            DiseaseFreePoint {
                s: switch,
                s_star: cap - switch,
                kind: DfeKind::Mixed,
                admissible: cap > switch,
            },
        ]
    } else {
        // Smaller root of s² - (cap + switch)s + cap(ν + (1-ξ)δ)/μ, in the
        // cancellation-free form 2c / (B + √disc).
        let sum = cap + switch;
        let product = cap * (p.nu + (1.0 - p.xi) * p.delta) / p.mu;
        let diff = cap - switch;
        let disc = diff * diff + 4.0 * p.xi * p.b / p.mu;
        let s = 2.0 * product / (sum + disc.sqrt());
        vec![DiseaseFreePoint {
            s,
            s_star: cap - s,
            kind: DfeKind::Xi3,
            admissible: true,
        }]
    }
}

/// Residuals of the two steady-state equations for `(s, s*)` with no infection.
pub fn dfe_residual(p: &ModelParams, s: f64, s_star: f64) -> [f64; 2] {
    [
        (1.0 - p.xi) * p.b - p.mu * s * s_star + p.nu * s_star - p.delta * s,
        p.xi * p.b + p.mu * s * s_star - p.nu * s_star - p.delta * s_star,
    ]
}

/// New-infection (`f`) and transfer (`v`) linearizations in the infectious
/// block at a disease-free point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextGenPair {
    pub f: Mat2,
    pub v: Mat2,
}

impl NextGenPair {
    /// `F - V`, the infectious-block Jacobian.
    pub fn jacobian(&self) -> Mat2 {
        self.f - self.v
    }

    /// `ρ(F V⁻¹)`.
    pub fn spectral_r0(&self) -> f64 {
        // det V > 0 is guaranteed by the parameter ranges.
        smalllin::spectral_radius(&(self.f * self.v.inverse().expect("V is invertible")))
    }
}

fn check_admissible(p: &ModelParams, s: f64, s_star: f64) -> Result<(), EquilibriaError> {
    let cap = p.capacity();
    let ok = s.is_finite()
        && s_star.is_finite()
        && s >= 0.0
        && s_star >= 0.0
        && s + s_star <= cap * (1.0 + SIMPLEX_TOL);
    if ok {
        Ok(())
    } else {
        Err(EquilibriaError::Inadmissible { s, s_star })
    }
}

fn next_gen_unchecked(p: &ModelParams, s: f64, s_star: f64) -> NextGenPair {
    let keep = 1.0 - p.alpha;
    let clear = p.gamma + p.delta;
    NextGenPair {
        f: Mat2::new(
            p.beta * keep * keep * s,
            p.beta * keep * s,
            p.beta * keep * s_star,
            p.beta * s_star,
        ),
        v: Mat2::new(clear + p.mu * s_star, -p.nu, -p.mu * s_star, clear + p.nu),
    }
}

pub fn next_gen(p: &ModelParams, s: f64, s_star: f64) -> Result<NextGenPair, EquilibriaError> {
    check_admissible(p, s, s_star)?;
    Ok(next_gen_unchecked(p, s, s_star))
}

fn r0_closed_form(p: &ModelParams, s: f64, s_star: f64) -> f64 {
    let keep = 1.0 - p.alpha;
    let denom = p.gamma + p.delta + p.nu + p.mu * s_star;
    let compliant = s * (keep * keep + p.alpha * keep * p.mu * s_star / denom);
    let noncompliant = s_star * (1.0 - p.alpha * p.nu / denom);
    p.beta / (p.gamma + p.delta) * (compliant + noncompliant)
}

/// Reproductive ratio `ℛ₀(s, s*)` from its closed form.
pub fn r0_det(p: &ModelParams, s: f64, s_star: f64) -> Result<f64, EquilibriaError> {
    check_admissible(p, s, s_star)?;
    let r0 = r0_closed_form(p, s, s_star);
    debug_assert!(
        (r0 - next_gen_unchecked(p, s, s_star).spectral_r0()).abs() <= 1e-10 * r0.max(1.0),
        "closed-form R0 disagrees with spectral radius"
    );
    Ok(r0)
}

/// Extinction threshold at the fully compliant equilibrium.
pub fn r0_sigma_compliant(p: &ModelParams) -> f64 {
    let cap = p.capacity();
    let keep2 = (1.0 - p.alpha).powi(2);
    (p.beta * cap * keep2 + 0.5 * p.sigma_beta.powi(2) * cap * cap * keep2 * keep2)
        / (p.gamma + p.delta)
}

/// Extinction threshold at the fully noncompliant equilibrium.
pub fn r0_sigma_noncompliant(p: &ModelParams) -> f64 {
    let cap = p.capacity();
    (p.beta * cap + 0.5 * p.sigma_beta.powi(2) * cap * cap) / (p.gamma + p.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Condition keeping noncompliance from spreading near the compliant
/// equilibrium under noise: `b/δ + σμ²/(2μ)·(b/δ)² < (ν+δ)/μ`.
pub fn noncompliance_threshold(p: &ModelParams) -> ThresholdCheck {
    let cap = p.capacity();
    let lhs = cap + p.sigma_mu.powi(2) / (2.0 * p.mu) * cap * cap;
    let rhs = (p.nu + p.delta) / p.mu;
    ThresholdCheck {
        lhs,
        rhs,
        satisfied: lhs < rhs,
    }
}

/// Closed-form eigenvalues of the full transfer Jacobian `DV` at `(s, s*)`.
pub fn dv_eigenvalues(p: &ModelParams, s: f64, s_star: f64) -> Result<[f64; 6], EquilibriaError> {
    check_admissible(p, s, s_star)?;
    Ok(dv_eigenvalues_unchecked(p, s, s_star))
}

fn dv_eigenvalues_unchecked(p: &ModelParams, s: f64, s_star: f64) -> [f64; 6] {
    let (d, g, n, m) = (p.delta, p.gamma, p.nu, p.mu);
    [
        g + d,
        g + d + n + m * s_star,
        d,
        d,
        d + n + m * s_star,
        d + n + m * (s_star - s),
    ]
}

/// The 6×6 transfer Jacobian `DV = DV⁻ - DV⁺` at `(s, s*)`, in the ordering
/// `(I, I*, S, R, S*, R*)`.
pub fn dv_matrix(p: &ModelParams, s: f64, s_star: f64) -> Mat6 {
    let (b, g, d, m, n, a) = (p.beta, p.gamma, p.delta, p.mu, p.nu, p.alpha);
    let keep = 1.0 - a;
    [
        [g + d + m * s_star, -n, 0.0, 0.0, 0.0, 0.0],
        [-m * s_star, g + d + n, 0.0, 0.0, 0.0, 0.0],
        [
            b * keep * keep * s,
            (b * keep + m) * s,
            d + m * s_star,
            0.0,
            m * s - n,
            m * s,
        ],
        [-g, 0.0, 0.0, d + m * s_star, 0.0, -n],
        [
            b * keep * s_star,
            b * s_star - m * s,
            -m * s_star,
            0.0,
            d + n - m * s,
            -m * s,
        ],
        [0.0, -g, 0.0, -m * s_star, 0.0, d + n],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeterministicVerdict {
    LocallyAsymptoticallyStable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StochasticVerdict {
    ExpMeanSquareStable,
    InfectionsDieOut,
    NoGuarantee,
    /// A threshold quantity sits within [`THRESHOLD_BAND`] of its bound.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dfe: DiseaseFreePoint,
    pub r0: f64,
    pub r0_sigma: Option<f64>,
    pub eigenvalues_dv: [f64; 6],
    pub condition_a5: bool,
    pub deterministic_verdict: DeterministicVerdict,
    pub stochastic_verdict: StochasticVerdict,
    pub inputs_echo: ModelParams,
}

/// Strict comparison `value < bound` with an inconclusive band.
fn below(value: f64, bound: f64) -> Option<bool> {
    if (value - bound).abs() <= THRESHOLD_BAND {
        None
    } else {
        Some(value < bound)
    }
}

/// Deterministic and stochastic stability verdicts for every equilibrium.
pub fn classify(p: &ModelParams) -> Vec<StabilityReport> {
    solve_dfe(p)
        .into_iter()
        .map(|dfe| classify_point(p, dfe))
        .collect()
}

fn classify_point(p: &ModelParams, dfe: DiseaseFreePoint) -> StabilityReport {
    let (s, s_star) = (dfe.s, dfe.s_star);
    let r0 = r0_closed_form(p, s, s_star);
    let eigenvalues_dv = dv_eigenvalues_unchecked(p, s, s_star);
    let a5 = below(s - s_star, (p.delta + p.nu) / p.mu);
    let condition_a5 = a5 == Some(true);

    let deterministic_verdict = match (dfe.admissible, a5, below(r0, 1.0)) {
        (true, Some(true), Some(true)) => DeterministicVerdict::LocallyAsymptoticallyStable,
        (true, Some(true), Some(false)) => DeterministicVerdict::Unstable,
        _ => DeterministicVerdict::Inconclusive,
    };

    let (r0_sigma, stochastic_verdict) = match dfe.kind {
        DfeKind::FullyCompliant => {
            let r0s = r0_sigma_compliant(p);
            let th = noncompliance_threshold(p);
            let verdict = match (below(th.lhs, th.rhs), below(r0s, 1.0)) {
                (Some(true), Some(true)) => StochasticVerdict::ExpMeanSquareStable,
                (Some(false), _) | (_, Some(false)) => StochasticVerdict::NoGuarantee,
                _ => StochasticVerdict::Inconclusive,
            };
            (Some(r0s), verdict)
        }
        DfeKind::Xi3 if p.xi == 1.0 && p.nu == 0.0 => {
            let r0s = r0_sigma_noncompliant(p);
            let cap = p.capacity();
            let spread = 0.5 * p.sigma_mu.powi(2) * cap * cap;
            let verdict = match below(r0s, 1.0) {
                None => StochasticVerdict::Inconclusive,
                Some(false) => StochasticVerdict::NoGuarantee,
                Some(true) => match below(spread, p.delta) {
                    Some(true) => StochasticVerdict::ExpMeanSquareStable,
                    Some(false) => StochasticVerdict::InfectionsDieOut,
                    None => StochasticVerdict::Inconclusive,
                },
            };
            (Some(r0s), verdict)
        }
        _ => (None, StochasticVerdict::NoGuarantee),
    };

    StabilityReport {
        dfe,
        r0,
        r0_sigma,
        eigenvalues_dv,
        condition_a5,
        deterministic_verdict,
        stochastic_verdict,
        inputs_echo: *p,
    }
}

/// Bound on the long-run time-averaged squared distance to the mixed
/// equilibrium: `limsup (1/t)∫|X - X*|² ≤ C(σβ² + σμ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub dfe: DiseaseFreePoint,
    /// `F - V` at the equilibrium.
    pub m: Mat2,
    /// Solution of `MᵀQ + QM = -I`.
    pub q: Mat2,
    pub norm_q: f64,
    pub c: f64,
    pub bound: f64,
}

/// The mixed equilibrium the certificate is built around, if any.
pub fn mixed_equilibrium(p: &ModelParams) -> Option<DiseaseFreePoint> {
    solve_dfe(p)
        .into_iter()
        .find(|d| d.kind != DfeKind::FullyCompliant && d.is_mixed())
}

pub fn certificate(p: &ModelParams) -> Result<LyapunovCertificate, EquilibriaError> {
    if p.nu <= 0.0 {
        return Err(EquilibriaError::ZeroNu);
    }
    let dfe = mixed_equilibrium(p).ok_or(EquilibriaError::NoMixedEquilibrium)?;
    let r0 = r0_closed_form(p, dfe.s, dfe.s_star);
    if below(r0, 1.0) != Some(true) {
        return Err(EquilibriaError::NotSubcritical { r0 });
    }
    let m = next_gen_unchecked(p, dfe.s, dfe.s_star).jacobian();
    let q = smalllin::solve_lyapunov(&m)?;
    let norm_q = smalllin::spectral_norm(&q);

    let (b, g, d, mu, nu) = (p.beta, p.gamma, p.delta, p.mu, p.nu);
    let cap = p.capacity();
    let s = dfe.s;
    let first = (2.0 * mu * s * s + 4.0 * d) / nu;
    let second =
        48.0 * norm_q * (2.0 * g * g + 2.0 * (g + 2.0 * d).powi(2) + b * b * (2.0 * d / nu)) / d
            * (1.0 + 4.0 * norm_q * cap * cap * (b + mu) / (3.0 * mu));
    let c = (first + second) * cap.powi(4);
    let bound = c * (p.sigma_beta.powi(2) + p.sigma_mu.powi(2));
    Ok(LyapunovCertificate {
        dfe,
        m,
        q,
        norm_q,
        c,
        bound,
    })
}

/// Empirical check that `ℛ₀(s, s*)` is nondecreasing in `s` and `s*` and
/// peaks at `(0, b/δ)`.
///
/// Samples `n` random admissible points (plus a dense grid on the boundary
/// `s + s* = b/δ`) and compares forward differences.
pub fn r0_monotonicity_probe(p: &ModelParams, n: usize, seed: u64) -> bool {
    let cap = p.capacity();
    let h = 1e-6 * cap;
    let peak = r0_closed_form(p, 0.0, cap);
    let slack = 1e-12 * peak.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;

    let nondecreasing_at = |s: f64, s_star: f64| {
        let here = r0_closed_form(p, s, s_star);
        // Step back from the boundary when a forward step would leave the simplex.
        let (s0, s1) = if s + h + s_star <= cap {
            (s, s + h)
        } else {
            (s - h, s)
        };
        let (t0, t1) = if s + s_star + h <= cap {
            (s_star, s_star + h)
        } else {
            (s_star - h, s_star)
        };
        let ds = r0_closed_form(p, s1, s_star) - r0_closed_form(p, s0, s_star);
        let dt = r0_closed_form(p, s, t1) - r0_closed_form(p, s, t0);
        ds >= -slack && dt >= -slack && here <= peak + slack
    };

    for _ in 0..n {
        // Uniform on the triangle via folding.
        let (mut u, mut v) = (unit(), unit());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let (s, s_star) = ((u * cap).max(h), (v * cap).max(h));
        if s + s_star > cap {
            continue;
        }
        if !nondecreasing_at(s, s_star) {
            return false;
        }
    }
    let grid = n.max(1000);
    for k in 0..=grid {
        let theta = cap * k as f64 / grid as f64;
        if r0_closed_form(p, cap - theta, theta) > peak + slack {
            return false;
        }
    }
    true
}

/// Drift at the disease-free point, for residual checks.
pub fn dfe_drift(p: &ModelParams, dfe: &DiseaseFreePoint) -> [f64; 6] {
    drift(&dfe.state(), p)
}

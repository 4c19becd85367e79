//! Parameters, state, and the drift/diffusion fields of the six-compartment
//! compliant/noncompliant SIR system.
//!
//! Vectors are always in compartment order `(S, I, R, S*, I*, R*)`.
//!
//! Every noise coefficient is a quadratic form in the state, so the diffusion
//! field is written as `G(x) = B(x, x)` for a bilinear map `B`. Its derivative
//! along any direction `v` is then `B(x, v) + B(v, x)` with no approximation.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of compartments.
pub const DIM: usize = 6;

/// Which stochastic terms perturb the infection channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseVariant {
    /// `(1-α)²SI` and `S*I*` for the disease; `SS*`, `II*`, `RR*` for noncompliance.
    #[default]
    Reduced,
    /// `(1-α)S·I_M` and `S*·I_M` for the disease; `S·N*`, `I·N*`, `R·N*` for noncompliance.
    Full,
}

impl fmt::Display for NoiseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseVariant::Reduced => f.write_str("reduced"),
            NoiseVariant::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{field}` = {value}: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

/// Raw, unvalidated rate constants. Serializes as the flat JSON object used
/// by configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub b: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
    pub nu: f64,
    pub xi: f64,
    pub sigma_beta: f64,
    pub sigma_mu: f64,
    #[serde(default)]
    pub variant: NoiseVariant,
}

/// Validated model parameters.
///
/// Fields are read through `Deref` (`params.beta`); changes go through
/// [`ModelParams::with`], which re-validates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamValues", into = "ParamValues")]
pub struct ModelParams(ParamValues);

impl ModelParams {
    pub fn new(values: ParamValues) -> Result<Self, ParamError> {
        let check = |field, value: f64, ok: bool, reason| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(ParamError {
                    field,
                    value,
                    reason,
                })
            }
        };
        let v = &values;
        check("b", v.b, v.b > 0.0, "must be > 0")?;
        check("delta", v.delta, v.delta > 0.0, "must be > 0")?;
        check("beta", v.beta, v.beta > 0.0, "must be > 0")?;
        check("gamma", v.gamma, v.gamma > 0.0, "must be > 0")?;
        check("mu", v.mu, v.mu > 0.0, "must be > 0")?;
        check("nu", v.nu, v.nu >= 0.0, "must be >= 0")?;
        check(
            "alpha",
            v.alpha,
            (0.0..=1.0).contains(&v.alpha),
            "must lie in [0, 1]",
        )?;
        check(
            "xi",
            v.xi,
            (0.0..=1.0).contains(&v.xi),
            "must lie in [0, 1]",
        )?;
        check(
            "sigma_beta",
            v.sigma_beta,
            v.sigma_beta >= 0.0,
            "must be >= 0",
        )?;
        check("sigma_mu", v.sigma_mu, v.sigma_mu >= 0.0, "must be >= 0")?;
        Ok(ModelParams(values))
    }

    /// Copy with edited values, validated again.
    pub fn with(&self, edit: impl FnOnce(&mut ParamValues)) -> Result<Self, ParamError> {
        let mut values = self.0;
        edit(&mut values);
        Self::new(values)
    }

    pub fn values(&self) -> &ParamValues {
        &self.0
    }

    /// Steady-state total population `b/δ`.
    #[inline]
    pub fn capacity(&self) -> f64 {
        self.0.b / self.0.delta
    }

    /// Whether `b/δ >= 1`, i.e. a population normalized to 1 at `t = 0`
    /// stays below the steady-state total.
    pub fn is_normalized(&self) -> bool {
        self.capacity() >= 1.0
    }
}

impl Deref for ModelParams {
    type Target = ParamValues;

    fn deref(&self) -> &ParamValues {
        &self.0
    }
}

impl TryFrom<ParamValues> for ModelParams {
    type Error = ParamError;

    fn try_from(values: ParamValues) -> Result<Self, ParamError> {
        Self::new(values)
    }
}

impl From<ModelParams> for ParamValues {
    fn from(p: ModelParams) -> Self {
        p.0
    }
}

/// Compartment densities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "S_star")]
    pub s_star: f64,
    #[serde(rename = "I_star")]
    pub i_star: f64,
    #[serde(rename = "R_star")]
    pub r_star: f64,
}

impl State {
    pub const fn new(s: f64, i: f64, r: f64, s_star: f64, i_star: f64, r_star: f64) -> Self {
        State {
            s,
            i,
            r,
            s_star,
            i_star,
            r_star,
        }
    }

    /// The disease-free point `(s, 0, 0, s*, 0, 0)`.
    pub const fn disease_free(s: f64, s_star: f64) -> Self {
        State::new(s, 0.0, 0.0, s_star, 0.0, 0.0)
    }

    #[inline]
    pub fn to_array(self) -> [f64; DIM] {
        [
            self.s,
            self.i,
            self.r,
            self.s_star,
            self.i_star,
            self.r_star,
        ]
    }

    #[inline]
    pub fn from_array(x: [f64; DIM]) -> Self {
        State::new(x[0], x[1], x[2], x[3], x[4], x[5])
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.s_star + self.i_star + self.r_star
    }

    pub fn min_component(&self) -> f64 {
        self.to_array().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Squared Euclidean distance `|self - other|²`.
    pub fn distance_sq(&self, other: &State) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Actively mixing infectious density `(1-α)I + I*`.
    pub i_mixing: f64,
    /// Total noncompliant density `S* + I* + R*`.
    pub n_star: f64,
    pub n_total: f64,
}

pub fn derived(state: &State, params: &ModelParams) -> DerivedQuantities {
    DerivedQuantities {
        i_mixing: (1.0 - params.alpha) * state.i + state.i_star,
        n_star: state.s_star + state.i_star + state.r_star,
        n_total: state.total(),
    }
}

/// Right-hand side of the deterministic system.
pub fn drift(x: &State, p: &ModelParams) -> [f64; DIM] {
    let one_minus_alpha = 1.0 - p.alpha;
    let i_m = one_minus_alpha * x.i + x.i_star;
    let n_star = x.s_star + x.i_star + x.r_star;

    let infect = p.beta * one_minus_alpha * x.s * i_m;
    let infect_star = p.beta * x.s_star * i_m;
    let convert_s = p.mu * x.s * n_star;
    let convert_i = p.mu * x.i * n_star;
    let convert_r = p.mu * x.r * n_star;
    let revert_s = p.nu * x.s_star;
    let revert_i = p.nu * x.i_star;
    let revert_r = p.nu * x.r_star;

    [
        (1.0 - p.xi) * p.b - infect - convert_s + revert_s - p.delta * x.s,
        infect - p.gamma * x.i - convert_i + revert_i - p.delta * x.i,
        p.gamma * x.i - convert_r + revert_r - p.delta * x.r,
        p.xi * p.b - infect_star + convert_s - revert_s - p.delta * x.s_star,
        infect_star - p.gamma * x.i_star + convert_i - revert_i - p.delta * x.i_star,
        p.gamma * x.i_star + convert_r - revert_r - p.delta * x.r_star,
    ]
}

/// The bilinear map `B` with `diffusion(x) = B(x, x)`.
fn diffusion_bilinear(x: &State, y: &State, p: &ModelParams) -> [f64; DIM] {
    let one_minus_alpha = 1.0 - p.alpha;
    let (sb, sm) = (p.sigma_beta, p.sigma_mu);
    let (disease, disease_star, conv_s, conv_i, conv_r) = match p.variant {
        NoiseVariant::Reduced => (
            sb * one_minus_alpha * one_minus_alpha * x.s * y.i,
            sb * x.s_star * y.i_star,
            sm * x.s * y.s_star,
            sm * x.i * y.i_star,
            sm * x.r * y.r_star,
        ),
        NoiseVariant::Full => {
            let i_m = one_minus_alpha * y.i + y.i_star;
            let n_star = y.s_star + y.i_star + y.r_star;
            (
                sb * one_minus_alpha * x.s * i_m,
                sb * x.s_star * i_m,
                sm * x.s * n_star,
                sm * x.i * n_star,
                sm * x.r * n_star,
            )
        }
    };
    closed([
        -disease - conv_s,
        disease - conv_i,
        -conv_r,
        -disease_star + conv_s,
        disease_star + conv_i,
        0.0,
    ])
}

/// Sets the last component to minus the left-to-right sum of the others, so
/// the components add to exactly zero in floating point. The last analytic
/// entry equals that sum, so this only moves it by rounding.
#[inline]
fn closed(mut g: [f64; DIM]) -> [f64; DIM] {
    g[DIM - 1] = -g[..DIM - 1].iter().sum::<f64>();
    g
}

/// Coefficients of `dW` in each equation.
pub fn diffusion(x: &State, p: &ModelParams) -> [f64; DIM] {
    diffusion_bilinear(x, x, p)
}

/// Derivative of the diffusion field at `x` in the direction `v`.
pub fn diffusion_derivative(x: &State, v: &State, p: &ModelParams) -> [f64; DIM] {
    let a = diffusion_bilinear(x, v, p);
    let b = diffusion_bilinear(v, x, p);
    closed(std::array::from_fn(|k| a[k] + b[k]))
}

/// `(DG·G)(x)`: the derivative of the diffusion field along itself, which is
/// the Milstein correction for a single driving Wiener process.
pub fn diffusion_directional_derivative(x: &State, p: &ModelParams) -> [f64; DIM] {
    let g = State::from_array(diffusion(x, p));
    diffusion_derivative(x, &g, p)
}

#[cfg(test)]
mod tests {
    use super::*;

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
            variant: NoiseVariant::Reduced,
        })
        .unwrap()
    }

    fn x0() -> State {
        State::new(0.25, 0.25 - 1e-8, 1e-8, 0.25, 0.25 - 1e-8, 1e-8)
    }

    #[test]
    fn derived_identities() {
        let p = fig1();
        let z = derived(&State::default(), &p);
        assert_eq!((z.i_mixing, z.n_star, z.n_total), (0.0, 0.0, 0.0));

        let st = State::new(0.0, 0.25, 0.0, 0.0, 0.25, 0.0);
        assert_eq!(derived(&st, &p).i_mixing, 0.4375);

        let st = State::new(0.0, 0.0, 0.0, 0.25, 0.25 - 1e-8, 1e-8);
        assert!((derived(&st, &p).n_star - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        let p = fig1();
        assert_eq!(p.with(|v| v.beta = 0.0).unwrap_err().field, "beta");
        assert_eq!(p.with(|v| v.alpha = 1.5).unwrap_err().field, "alpha");
        assert_eq!(p.with(|v| v.xi = -0.1).unwrap_err().field, "xi");
        assert_eq!(p.with(|v| v.nu = -1.0).unwrap_err().field, "nu");
        assert_eq!(
            p.with(|v| v.sigma_mu = f64::NAN).unwrap_err().field,
            "sigma_mu"
        );
        assert!(p.with(|v| v.nu = 0.0).is_ok());
    }

    #[test]
    fn compliant_dfe_is_fixed_point() {
        let p = fig1();
        let x = State::disease_free(p.capacity(), 0.0);
        assert_eq!(drift(&x, &p), [0.0; DIM]);
    }

    #[test]
    fn drift_matches_symbolic_evaluation() {
        // Exact rational evaluation of the six equations at the initial condition.
        let expected = [
            0.09296875328125,
            -0.06796874728125,
            0.124999994,
            -0.184374995625,
            -0.090624996375,
            0.124999992,
        ];
        let got = drift(&x0(), &fig1());
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn diffusion_hand_value() {
        let p = fig1();
        let st = State::new(0.25, 0.25, 0.0, 0.25, 0.25, 0.0);
        let g = diffusion(&st, &p);
        let expected = -0.5 * 0.5625 * 0.0625 - 0.5 * 0.0625;
        assert!((g[0] - expected).abs() < 1e-14);
        assert!(g.iter().sum::<f64>().abs() < 1e-16);
    }

    #[test]
    fn diffusion_vanishes_without_infection_or_noncompliance() {
        let p = fig1();
        let st = State::new(0.7, 0.0, 0.3, 0.0, 0.0, 0.0);
        assert_eq!(diffusion(&st, &p), [0.0; DIM]);
        assert_eq!(
            diffusion(&st, &p.with(|v| v.variant = NoiseVariant::Full).unwrap()),
            [0.0; DIM]
        );
    }

    #[test]
    fn milstein_correction_symbolic_value() {
        let expected = [
            0.010498046317749029,
            -0.010498046073608413,
            0.0,
            -0.013916015068359376,
            0.01391601482421876,
            0.0,
        ];
        let got = diffusion_directional_derivative(&x0(), &fig1());
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn zero_noise_has_zero_correction() {
        let p = fig1()
            .with(|v| {
                v.sigma_beta = 0.0;
                v.sigma_mu = 0.0;
            })
            .unwrap();
        assert_eq!(diffusion_directional_derivative(&x0(), &p), [0.0; DIM]);
    }

    #[test]
    fn params_json_roundtrip_and_default_variant() {
        let json = r#"{"b":0.2,"delta":0.2,"beta":1,"gamma":0.5,"alpha":0.25,
            "mu":0.2,"nu":0.2,"xi":0,"sigma_beta":0.5,"sigma_mu":0.5}"#;
        let p: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, fig1());
        let back: ModelParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);

        let bad = json.replace("\"beta\":1", "\"beta\":-1");
        assert!(serde_json::from_str::<ModelParams>(&bad).is_err());
    }
}

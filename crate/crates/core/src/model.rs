//! Nonlinear cart-pendulum dynamics.
//!
//! The angle is measured from the upright position (`theta = 0` is the
//! inverted equilibrium). Two state layouts are supported:
//!
//! * [`Variant::Ipoc`]: `(x, x_dot, theta, theta_dot)`
//! * [`Variant::Aipoc`]: `(x, x_dot, x_ddot, theta, theta_dot, theta_ddot)`
//!
//! The augmented layout closes the chain with the linear and angular jerk
//! equations, obtained by differentiating the acceleration rows along the
//! flow with the control rate `u_dot` as an extra input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the cart-pendulum and the actuator limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Pendulum mass `m` [kg].
    pub pendulum_mass: f64,
    /// Cart mass `M` [kg].
    pub cart_mass: f64,
    /// Gravity [m/s^2].
    pub gravity: f64,
    /// Pendulum length [m].
    pub length: f64,
    /// Friction coefficient [kg/s].
    pub friction: f64,
    /// Actuator saturation limit [m/s^2].
    pub u_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let gravity = 9.81;
        Self {
            pendulum_mass: 1.0,
            cart_mass: 5.0,
            gravity,
            length: 1.25,
            friction: 0.8,
            u_max: 3.0 * gravity,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.pendulum_mass", self.pendulum_mass),
            ("model.cart_mass", self.cart_mass),
            ("model.gravity", self.gravity),
            ("model.length", self.length),
            ("model.u_max", self.u_max),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(Error::invalid(
                "model.friction",
                format!("must be finite and >= 0, got {}", self.friction),
            ));
        }
        Ok(())
    }

    /// `M + m sin^2(theta)`, the common denominator of the acceleration rows.
    #[inline]
    pub fn gamma(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.cart_mass + self.pendulum_mass * s * s
    }
}

/// Model variant: classical four-state or acceleration-augmented six-state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ipoc,
    Aipoc,
}

impl Variant {
    pub const fn dim(self) -> usize {
        match self {
            Variant::Ipoc => 4,
            Variant::Aipoc => 6,
        }
    }

    /// Number of control inputs: `u` for IPoC, `(u, u_dot)` for A-IPoC.
    pub const fn inputs(self) -> usize {
        match self {
            Variant::Ipoc => 1,
            Variant::Aipoc => 2,
        }
    }

    pub const fn theta_index(self) -> usize {
        match self {
            Variant::Ipoc => 2,
            Variant::Aipoc => 3,
        }
    }

    pub const fn theta_dot_index(self) -> usize {
        self.theta_index() + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Ipoc => "IPoC",
            Variant::Aipoc => "A-IPoC",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ipoc => "ipoc",
            Variant::Aipoc => "aipoc",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "ipoc" => Ok(Variant::Ipoc),
            "aipoc" => Ok(Variant::Aipoc),
            _ => Err(Error::invalid(
                "variant",
                format!("unknown variant '{s}' (expected ipoc|aipoc)"),
            )),
        }
    }
}

/// A state vector tagged with its layout. Entries beyond `variant.dim()` are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVec {
    variant: Variant,
    data: [f64; 6],
}

impl StateVec {
    pub fn new(variant: Variant, values: &[f64]) -> Result<Self> {
        if values.len() != variant.dim() {
            return Err(Error::Dimension {
                what: "state vector",
                expected: variant.dim(),
                got: values.len(),
            });
        }
        let mut data = [0.0; 6];
        data[..values.len()].copy_from_slice(values);
        Ok(Self { variant, data })
    }

    pub fn zeros(variant: Variant) -> Self {
        Self {
            variant,
            data: [0.0; 6],
        }
    }

    pub fn ipoc(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            variant: Variant::Ipoc,
            data: [x, x_dot, theta, theta_dot, 0.0, 0.0],
        }
    }

    pub fn aipoc(values: [f64; 6]) -> Self {
        Self {
            variant: Variant::Aipoc,
            data: values,
        }
    }

    pub(crate) fn from_raw(variant: Variant, data: [f64; 6]) -> Self {
        Self { variant, data }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.variant.dim()]
    }

    pub(crate) fn raw(&self) -> &[f64; 6] {
        &self.data
    }

    pub fn x(&self) -> f64 {
        self.data[0]
    }

    pub fn x_dot(&self) -> f64 {
        self.data[1]
    }

    pub fn theta(&self) -> f64 {
        self.data[self.variant.theta_index()]
    }

    pub fn theta_dot(&self) -> f64 {
        self.data[self.variant.theta_dot_index()]
    }

    pub fn x_ddot(&self) -> Option<f64> {
        (self.variant == Variant::Aipoc).then_some(self.data[2])
    }

    pub fn theta_ddot(&self) -> Option<f64> {
        (self.variant == Variant::Aipoc).then_some(self.data[5])
    }

    /// The shared configuration sub-state `(x, x_dot, theta, theta_dot)`.
    pub fn core(&self) -> [f64; 4] {
        [self.x(), self.x_dot(), self.theta(), self.theta_dot()]
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { what })
        }
    }

    /// Lift a configuration state into the augmented layout, filling the
    /// accelerations from the nonlinear model under control `u`.
    pub fn augment(core: [f64; 4], u: f64, p: &ModelParams) -> Self {
        let d = ipoc_rhs(core, u, p);
        Self::aipoc([core[0], core[1], d[1], core[2], core[3], d[3]])
    }

    /// Convert to the requested layout. Going up fills accelerations from the
    /// model at `u = 0`; going down drops them.
    pub fn to_variant(&self, variant: Variant, p: &ModelParams) -> Self {
        match (self.variant, variant) {
            (a, b) if a == b => *self,
            (Variant::Aipoc, Variant::Ipoc) => {
                let c = self.core();
                Self::ipoc(c[0], c[1], c[2], c[3])
            }
            _ => Self::augment(self.core(), 0.0, p),
        }
    }
}

impl std::ops::Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

/// Right-hand side of the four-state model.
#[inline]
pub(crate) fn ipoc_rhs(s: [f64; 4], u: f64, p: &ModelParams) -> [f64; 4] {
    let [_, x_dot, theta, theta_dot] = s;
    let (m, big_m, g, l, d) = (p.pendulum_mass, p.cart_mass, p.gravity, p.length, p.friction);
    let (sin, cos) = theta.sin_cos();
    let sin2 = (2.0 * theta).sin();
    let gamma = big_m + m * sin * sin;
    let x_ddot = (-0.5 * m * g * sin2 + m * l * theta_dot * theta_dot * sin - d * x_dot + u) / gamma;
    let theta_ddot =
        ((big_m + m) * g * sin - 0.5 * m * l * theta_dot * theta_dot * sin2 + cos * (d * x_dot + u)) / (gamma * l);
    [x_dot, x_ddot, theta_dot, theta_ddot]
}

/// Right-hand side of the six-state model. Rows 2 and 5 are the model
/// accelerations; rows 3 and 6 are the jerk equations, which read the
/// acceleration entries of the state itself.
#[inline]
pub(crate) fn aipoc_rhs(s: [f64; 6], u: f64, u_dot: f64, p: &ModelParams) -> [f64; 6] {
    let [_, x_dot, x_ddot_s, theta, theta_dot, theta_ddot_s] = s;
    let (m, big_m, g, l, d) = (p.pendulum_mass, p.cart_mass, p.gravity, p.length, p.friction);
    let (sin, cos) = theta.sin_cos();
    let sin2 = (2.0 * theta).sin();
    let cos2 = (2.0 * theta).cos();
    let gamma = big_m + m * sin * sin;
    let gamma_dot = m * theta_dot * sin2;
    let w2 = theta_dot * theta_dot;

    // numerators of the acceleration rows
    let lin = -0.5 * m * g * sin2 + m * l * w2 * sin - d * x_dot + u;
    let ang = (big_m + m) * g * sin - 0.5 * m * l * w2 * sin2 + cos * (d * x_dot + u);

    let lin_dot =
        -m * g * theta_dot * cos2 + m * l * theta_dot * (2.0 * theta_ddot_s * sin + w2 * cos) - d * x_ddot_s + u_dot;
    let ang_dot = (big_m + m) * g * theta_dot * cos
        - m * l * (theta_dot * theta_ddot_s * sin2 + w2 * theta_dot * cos2)
        - theta_dot * sin * (d * x_dot + u)
        + cos * (d * x_ddot_s + u_dot);

    let x_jerk = lin_dot / gamma - lin * gamma_dot / (gamma * gamma);
    let theta_jerk = ang_dot / (gamma * l) - ang * gamma_dot / (gamma * gamma * l);

    [x_dot, lin / gamma, x_jerk, theta_dot, ang / (gamma * l), theta_jerk]
}

/// Time derivative of an IPoC state under control `u`.
pub fn ipoc_derivative(s: &StateVec, u: f64, p: &ModelParams) -> Result<StateVec> {
    if s.variant() != Variant::Ipoc {
        return Err(Error::VariantMismatch {
            expected: Variant::Ipoc,
            got: s.variant(),
        });
    }
    s.ensure_finite("ipoc state")?;
    if !u.is_finite() {
        return Err(Error::NonFinite { what: "control" });
    }
    let d = ipoc_rhs(s.core(), u, p);
    Ok(StateVec::ipoc(d[0], d[1], d[2], d[3]))
}

/// Time derivative of an A-IPoC state under control `u` and control rate `u_dot`.
pub fn aipoc_derivative(s: &StateVec, u: f64, u_dot: f64, p: &ModelParams) -> Result<StateVec> {
    if s.variant() != Variant::Aipoc {
        return Err(Error::VariantMismatch {
            expected: Variant::Aipoc,
            got: s.variant(),
        });
    }
    s.ensure_finite("aipoc state")?;
    if !(u.is_finite() && u_dot.is_finite()) {
        return Err(Error::NonFinite { what: "control" });
    }
    Ok(StateVec::aipoc(aipoc_rhs(*s.raw(), u, u_dot, p)))
}

/// Dispatch on the state layout. `inputs[1]` (the control rate) is only read
/// for A-IPoC and defaults to zero when absent.
pub fn derivative(s: &StateVec, inputs: &[f64], p: &ModelParams) -> Result<StateVec> {
    let u = inputs.first().copied().unwrap_or(0.0);
    match s.variant() {
        Variant::Ipoc => ipoc_derivative(s, u, p),
        Variant::Aipoc => aipoc_derivative(s, u, inputs.get(1).copied().unwrap_or(0.0), p),
    }
}

/// Clamp a command to the actuator band `[-u_max, u_max]`.
#[inline]
pub fn saturate(u: f64, p: &ModelParams) -> f64 {
    u.clamp(-p.u_max, p.u_max)
}

/// Flat output `eps = x + l sin(theta)` and its derivatives.
///
/// `eps_d2 = g sin(theta)` ties the second derivative to the pendulum angle;
/// the third follows as `g theta_dot cos(theta)`. The fourth is filled only
/// when the angular acceleration is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    pub eps: f64,
    pub eps_d1: f64,
    pub eps_d2: f64,
    pub eps_d3: f64,
    pub eps_d4: Option<f64>,
}

/// Map a state to the flat output. Requires `|theta| <= pi/2`.
pub fn flat_forward(s: &StateVec, p: &ModelParams) -> Result<FlatOutput> {
    s.ensure_finite("state")?;
    let theta = s.theta();
    if theta.abs() > std::f64::consts::FRAC_PI_2 {
        return Err(Error::Domain(format!("flat output needs |theta| <= pi/2, got {theta}")));
    }
    let (sin, cos) = theta.sin_cos();
    let (l, g) = (p.length, p.gravity);
    let w = s.theta_dot();
    Ok(FlatOutput {
        eps: s.x() + l * sin,
        eps_d1: s.x_dot() + w * l * cos,
        eps_d2: g * sin,
        eps_d3: g * w * cos,
        eps_d4: s.theta_ddot().map(|a| g * (a * cos - w * w * sin)),
    })
}

/// Recover `(x, x_dot, theta, theta_dot)` from the flat output. Requires `|eps_d2| < g`.
pub fn flat_inverse(f: &FlatOutput, p: &ModelParams) -> Result<StateVec> {
    let g = p.gravity;
    if ![f.eps, f.eps_d1, f.eps_d2, f.eps_d3].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "flat output" });
    }
    let alpha = g * g - f.eps_d2 * f.eps_d2;
    if f.eps_d2.abs() >= g || alpha <= 0.0 {
        return Err(Error::Domain(format!(
            "flat map singular: |eps_d2| = {} >= g (pendulum horizontal)",
            f.eps_d2.abs()
        )));
    }
    let theta = (f.eps_d2 / g).asin();
    let x = f.eps - f.eps_d2 * p.length / g;
    let x_dot = f.eps_d1 - f.eps_d3 * p.length / g;
    let theta_dot = f.eps_d3 / alpha.sqrt();
    Ok(StateVec::ipoc(x, x_dot, theta, theta_dot))
}

/// Total mechanical energy with the upright-referenced angle (bob height `l cos(theta)`).
pub fn mechanical_energy(s: &StateVec, p: &ModelParams) -> f64 {
    let (m, big_m, g, l) = (p.pendulum_mass, p.cart_mass, p.gravity, p.length);
    let [_, v, th, w] = s.core();
    0.5 * (big_m + m) * v * v + m * l * v * w * th.cos() + 0.5 * m * l * l * w * w + m * g * l * th.cos()
}

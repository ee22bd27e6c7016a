//! Equilibria, Jacobians and measurement matrices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{derivative, ModelParams, StateVec, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumKind {
    Upright,
    Bottom,
}

impl EquilibriumKind {
    pub fn theta(self) -> f64 {
        match self {
            EquilibriumKind::Upright => 0.0,
            EquilibriumKind::Bottom => PI,
        }
    }

    /// `cos(theta_e)`: +1 upright, -1 hanging.
    fn sign(self) -> f64 {
        match self {
            EquilibriumKind::Upright => 1.0,
            EquilibriumKind::Bottom => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub x_e: StateVec,
    pub u_e: Vec<f64>,
    pub kind: EquilibriumKind,
    pub x_ref: f64,
}

impl Equilibrium {
    pub fn new(variant: Variant, kind: EquilibriumKind, x_ref: f64) -> Self {
        let mut v = [0.0; 6];
        v[0] = x_ref;
        v[variant.theta_index()] = kind.theta();
        Self {
            x_e: StateVec::from_raw(variant, v),
            u_e: vec![0.0; variant.inputs()],
            kind,
            x_ref,
        }
    }

    pub fn upright(variant: Variant) -> Self {
        Self::new(variant, EquilibriumKind::Upright, 0.0)
    }

    pub fn bottom(variant: Variant) -> Self {
        Self::new(variant, EquilibriumKind::Bottom, 0.0)
    }

    pub fn variant(&self) -> Variant {
        self.x_e.variant()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    /// Position and angle, the ideal two-sensor layout.
    Full,
    /// Position, linear acceleration and angular rate.
    Inertial,
}

impl MeasurementMode {
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Ipoc => MeasurementMode::Full,
            Variant::Aipoc => MeasurementMode::Inertial,
        }
    }
}

/// Linearized plant `(A, B, C)` around an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub equilibrium: Equilibrium,
}

impl LinearModel {
    /// Analytic Jacobians with the default measurement layout of the variant.
    pub fn build(variant: Variant, kind: EquilibriumKind, p: &ModelParams) -> Result<Self> {
        let eq = Equilibrium::new(variant, kind, 0.0);
        let (a, b) = analytic_jacobians(variant, &eq, p)?;
        let c = measurement_matrix(variant, MeasurementMode::default_for(variant))?;
        Self::new(a, b, c, eq)
    }

    pub fn new(a: Mat, b: Mat, c: Mat, equilibrium: Equilibrium) -> Result<Self> {
        let n = equilibrium.variant().dim();
        let k = equilibrium.variant().inputs();
        if a.shape() != (n, n) {
            return Err(Error::Dimension {
                what: "A",
                expected: n,
                got: a.nrows(),
            });
        }
        if b.shape() != (n, k) {
            return Err(Error::Dimension {
                what: "B columns",
                expected: k,
                got: b.ncols(),
            });
        }
        if c.ncols() != n {
            return Err(Error::Dimension {
                what: "C columns",
                expected: n,
                got: c.ncols(),
            });
        }
        if !(a.iter().chain(b.iter()).chain(c.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite { what: "linear model" });
        }
        Ok(Self { a, b, c, equilibrium })
    }

    pub fn variant(&self) -> Variant {
        self.equilibrium.variant()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Closed-form Jacobians of the implemented nonlinear model at `theta_e` in {0, pi}.
pub fn analytic_jacobians(variant: Variant, eq: &Equilibrium, p: &ModelParams) -> Result<(Mat, Mat)> {
    if eq.variant() != variant {
        return Err(Error::VariantMismatch {
            expected: variant,
            got: eq.variant(),
        });
    }
    let (m, big_m, g, l, d) = (p.pendulum_mass, p.cart_mass, p.gravity, p.length, p.friction);
    let s = eq.kind.sign();
    let a_xv = -d / big_m;
    let a_xt = -m * g / big_m;
    let a_tv = s * d / (big_m * l);
    let a_tt = s * (big_m + m) * g / (big_m * l);
    let b_x = 1.0 / big_m;
    let b_t = s / (big_m * l);

    Ok(match variant {
        Variant::Ipoc => {
            #[rustfmt::skip]
            let a = Mat::from_row_slice(4, 4, &[
                0.0, 1.0,  0.0,  0.0,
                0.0, a_xv, a_xt, 0.0,
                0.0, 0.0,  0.0,  1.0,
                0.0, a_tv, a_tt, 0.0,
            ]);
            let b = Mat::from_column_slice(4, 1, &[0.0, b_x, 0.0, b_t]);
            (a, b)
        }
        Variant::Aipoc => {
            #[rustfmt::skip]
            let a = Mat::from_row_slice(6, 6, &[
                0.0, 1.0,  0.0,  0.0,  0.0,  0.0,
                0.0, a_xv, 0.0,  a_xt, 0.0,  0.0,
                0.0, 0.0,  a_xv, 0.0,  a_xt, 0.0,
                0.0, 0.0,  0.0,  0.0,  1.0,  0.0,
                0.0, a_tv, 0.0,  a_tt, 0.0,  0.0,
                0.0, 0.0,  a_tv, 0.0,  a_tt, 0.0,
            ]);
            #[rustfmt::skip]
            let b = Mat::from_row_slice(6, 2, &[
                0.0, 0.0,
                b_x, 0.0,
                0.0, b_x,
                0.0, 0.0,
                b_t, 0.0,
                0.0, b_t,
            ]);
            (a, b)
        }
    })
}

/// Central-difference Jacobians of `f(x, u)` at `(x, u)`.
pub fn numeric_jacobian<F>(f: F, x: &[f64], u: &[f64], h: f64) -> Result<(Mat, Mat)>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("h", "finite-difference step must be > 0"));
    }
    let n = x.len();
    let k = u.len();
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, k);

    let column = |plus: Vec<f64>, minus: Vec<f64>| -> Result<Vector> {
        if plus.len() != n || minus.len() != n {
            return Err(Error::Dimension {
                what: "f(x, u)",
                expected: n,
                got: plus.len(),
            });
        }
        let col = (Vector::from_vec(plus) - Vector::from_vec(minus)) / (2.0 * h);
        if col.iter().all(|v| v.is_finite()) {
            Ok(col)
        } else {
            Err(Error::NonFinite {
                what: "finite-difference evaluation",
            })
        }
    };

    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &column(f(&xp, u)?, f(&xm, u)?)?);
    }
    for j in 0..k {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[j] += h;
        um[j] -= h;
        b.set_column(j, &column(f(x, &up)?, f(x, &um)?)?);
    }
    Ok((a, b))
}

/// Finite-difference Jacobians of the nonlinear model at an equilibrium.
pub fn model_jacobian(eq: &Equilibrium, p: &ModelParams, h: f64) -> Result<(Mat, Mat)> {
    let variant = eq.variant();
    let f = |x: &[f64], u: &[f64]| -> Result<Vec<f64>> {
        let s = StateVec::new(variant, x)?;
        Ok(derivative(&s, u, p)?.as_slice().to_vec())
    };
    numeric_jacobian(f, eq.x_e.as_slice(), &eq.u_e, h)
}

/// 0/1 selection matrix for a supported variant/mode pair.
pub fn measurement_matrix(variant: Variant, mode: MeasurementMode) -> Result<Mat> {
    let (n, rows): (usize, &[usize]) = match (variant, mode) {
        (Variant::Ipoc, MeasurementMode::Full) => (4, &[0, 2]),
        (Variant::Aipoc, MeasurementMode::Inertial) => (6, &[0, 2, 4]),
        _ => {
            return Err(Error::invalid(
                "filter.measurement",
                format!("{mode:?} measurements are not available for {}", variant.label()),
            ))
        }
    };
    let mut c = Mat::zeros(rows.len(), n);
    for (i, &j) in rows.iter().enumerate() {
        c[(i, j)] = 1.0;
    }
    Ok(c)
}

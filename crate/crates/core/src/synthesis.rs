//! Riccati solvers and LQR/LQE gain synthesis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linearize::LinearModel;
use crate::model::Variant;

pub const RESIDUAL_TOL: f64 = 1e-8;
const MAX_REFINE: usize = 50;

/// Q/R weights and the noise covariances used by the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub q: Mat,
    pub r: Mat,
    pub w: Mat,
    pub v: Mat,
}

impl Weights {
    pub fn new(q: Mat, r: Mat, w: Mat, v: Mat) -> Result<Self> {
        let out = Self { q, r, w, v };
        out.validate()?;
        Ok(out)
    }

    pub fn from_profile(variant: Variant, profile: TuningProfile, noise: &NoiseConfig) -> Result<Self> {
        let (qs, rs) = profile.scales();
        let n = variant.dim();
        let k = variant.inputs();
        Self::new(
            Mat::identity(n, n) * qs,
            Mat::identity(k, k) * rs,
            noise.process_matrix(variant),
            noise.measurement_matrix(variant),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !linalg::is_psd(&self.q, 1e-12) {
            return Err(Error::invalid("weights.q", "must be symmetric positive semidefinite"));
        }
        if !linalg::is_pd(&self.r) {
            return Err(Error::invalid("weights.r", "must be symmetric positive definite"));
        }
        if !linalg::is_psd(&self.w, 1e-15) {
            return Err(Error::invalid(
                "filter.process",
                "W must be symmetric positive semidefinite",
            ));
        }
        if !linalg::is_psd(&self.v, 1e-15) {
            return Err(Error::invalid(
                "filter.measurement",
                "V must be symmetric positive semidefinite",
            ));
        }
        Ok(())
    }
}

/// Diagonal noise levels (variances). Channels not used by a variant are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Process-noise intensity, applied to every state.
    pub process: f64,
    /// Position sensor [m^2].
    pub position: f64,
    /// Accelerometer [(m/s^2)^2].
    pub accelerometer: f64,
    /// Gyroscope [(rad/s)^2].
    pub gyroscope: f64,
    /// Angle sensor of the classical layout [rad^2].
    pub angle: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            process: 1e-6,
            position: 1e-4,
            accelerometer: 1e-2,
            gyroscope: 1e-5,
            angle: 1e-3,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            process: 0.0,
            position: 0.0,
            accelerometer: 0.0,
            gyroscope: 0.0,
            angle: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("filter.process", self.process),
            ("filter.position", self.position),
            ("filter.accelerometer", self.accelerometer),
            ("filter.gyroscope", self.gyroscope),
            ("filter.angle", self.angle),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    key,
                    format!("variance must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn process_matrix(&self, variant: Variant) -> Mat {
        let n = variant.dim();
        Mat::identity(n, n) * self.process
    }

    /// Per-row variances in the order of the variant's measurement matrix.
    pub fn channels(&self, variant: Variant) -> Vec<f64> {
        match variant {
            Variant::Ipoc => vec![self.position, self.angle],
            Variant::Aipoc => vec![self.position, self.accelerometer, self.gyroscope],
        }
    }

    pub fn measurement_matrix(&self, variant: Variant) -> Mat {
        Mat::from_diagonal(&Vector::from_vec(self.channels(variant)))
    }

    pub fn is_silent(&self) -> bool {
        *self == Self::zero()
    }
}

/// Named Q/R scalings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningProfile {
    LowPower,
    Utility,
    Ours,
    Agile,
}

impl TuningProfile {
    pub const ALL: [TuningProfile; 4] = [
        TuningProfile::LowPower,
        TuningProfile::Utility,
        TuningProfile::Ours,
        TuningProfile::Agile,
    ];

    /// `(q, r)` with `Q = q I` and `R = r I`.
    pub fn scales(self) -> (f64, f64) {
        match self {
            TuningProfile::LowPower => (0.1, 10.0),
            TuningProfile::Utility => (1.0, 1.0),
            TuningProfile::Ours => (1.0, 0.1),
            TuningProfile::Agile => (10.0, 0.01),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TuningProfile::LowPower => "low-power",
            TuningProfile::Utility => "utility",
            TuningProfile::Ours => "ours",
            TuningProfile::Agile => "agile",
        }
    }
}

impl fmt::Display for TuningProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TuningProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| {
                Error::invalid(
                    "profile",
                    format!("unknown profile '{s}' (expected low-power|utility|ours|agile)"),
                )
            })
    }
}

pub fn tuning_profile(name: &str, variant: Variant) -> Result<(Mat, Mat)> {
    let (qs, rs) = name.parse::<TuningProfile>()?.scales();
    let n = variant.dim();
    let k = variant.inputs();
    Ok((Mat::identity(n, n) * qs, Mat::identity(k, k) * rs))
}

/// Stabilizing solution of a continuous ARE and its gain.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub x: Mat,
    pub gain: Mat,
    /// Frobenius residual relative to the constant term.
    pub residual: f64,
    pub refinements: usize,
}

/// `A^T X + X A - X B R^-1 B^T X + Q`
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, x: &Mat) -> Option<Mat> {
    let ri = r.clone().try_inverse()?;
    Some(a.transpose() * x + x * a - x * b * ri * b.transpose() * x + q)
}

fn relative(res: &Mat, q: &Mat) -> f64 {
    let scale = q.norm();
    res.norm() / if scale > 0.0 { scale } else { 1.0 }
}

fn sqrt_psd(m: &Mat) -> Mat {
    let e = linalg::symmetrize(m).symmetric_eigen();
    let d = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose()
}

/// Controller ARE `A^T S + S A - S B R^-1 B^T S + Q = 0`, `K = R^-1 B^T S`.
pub fn solve_care(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::Dimension {
            what: "A rows",
            expected: a.ncols(),
            got: n,
        });
    }
    if b.nrows() != n {
        return Err(Error::Dimension {
            what: "B rows",
            expected: n,
            got: b.nrows(),
        });
    }
    if q.shape() != (n, n) {
        return Err(Error::Dimension {
            what: "Q",
            expected: n,
            got: q.nrows(),
        });
    }
    if r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension {
            what: "R",
            expected: b.ncols(),
            got: r.nrows(),
        });
    }
    if ![a, b, q, r].iter().all(|m| m.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite { what: "Riccati data" });
    }
    if !linalg::is_pd(r) {
        return Err(Error::invalid("weights.r", "must be symmetric positive definite"));
    }
    if !linalg::is_psd(q, 1e-12) {
        return Err(Error::invalid("weights.q", "must be symmetric positive semidefinite"));
    }
    if !linalg::is_stabilizable(a, b) {
        return Err(Error::Synthesis("(A, B) is not stabilizable".into()));
    }
    if !linalg::is_detectable(a, &sqrt_psd(q)) {
        return Err(Error::Synthesis("(Q^1/2, A) is not detectable".into()));
    }

    let ri = r.clone().try_inverse().expect("R is positive definite");
    let g = b * &ri * b.transpose();

    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = linalg::sign_function(&h, 100)
        .ok_or_else(|| Error::Synthesis("Hamiltonian sign iteration did not converge".into()))?;
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(w.view((0, 0), (n, n)) + &eye));
    rhs.view_mut((n, 0), (n, n)).copy_from(&w.view((n, 0), (n, n)));
    let mut x = linalg::lstsq(&lhs, &(-rhs))
        .map(|x| linalg::symmetrize(&x))
        .ok_or_else(|| Error::Synthesis("invariant subspace solve failed".into()))?;

    let residual_of = |x: &Mat| a.transpose() * x + x * a - x * &g * x + q;
    let mut res_mat = residual_of(&x);
    let mut res = relative(&res_mat, q);
    let mut refinements = 0;

    // Newton-Kleinman in correction form
    while refinements < MAX_REFINE && res > 1e-14 {
        let acl = a - &g * &x;
        if !linalg::is_hurwitz(&acl) {
            break;
        }
        let Some(delta) = linalg::lyapunov(&acl, &res_mat) else {
            break;
        };
        let next = linalg::symmetrize(&(&x + delta));
        let next_mat = residual_of(&next);
        let next_res = relative(&next_mat, q);
        if next_res.is_nan() || next_res >= res {
            break;
        }
        x = next;
        res_mat = next_mat;
        res = next_res;
        refinements += 1;
    }

    if !res.is_finite() || res > RESIDUAL_TOL {
        return Err(Error::Residual {
            residual: res,
            tol: RESIDUAL_TOL,
        });
    }
    let gain = &ri * b.transpose() * &x;
    if !linalg::is_hurwitz(&(a - b * &gain)) {
        return Err(Error::Synthesis("closed loop A - BK is not Hurwitz".into()));
    }
    Ok(RiccatiSolution {
        x,
        gain,
        residual: res,
        refinements,
    })
}

/// Filter ARE `A P + P A^T - P C^T V^-1 C P + W = 0`, `L = P C^T V^-1`, by duality.
pub fn solve_fare(a: &Mat, c: &Mat, w: &Mat, v: &Mat) -> Result<RiccatiSolution> {
    let dual = solve_care(&a.transpose(), &c.transpose(), w, v).map_err(|e| match e {
        Error::Synthesis(msg) => Error::Synthesis(
            msg.replace("(A, B) is not stabilizable", "(C, A) is not detectable")
                .replace("(Q^1/2, A) is not detectable", "(A, W^1/2) is not stabilizable")
                .replace("A - BK", "A - LC"),
        ),
        Error::Invalid { key, msg } => Error::Invalid {
            key: key
                .replace("weights.r", "filter.measurement")
                .replace("weights.q", "filter.process"),
            msg,
        },
        other => other,
    })?;
    Ok(RiccatiSolution {
        gain: dual.gain.transpose(),
        ..dual
    })
}

/// LQR gain plus, when the filter ARE is solvable, the steady-state Kalman gain.
#[derive(Debug, Clone)]
pub struct GainSet {
    pub k: Mat,
    pub s: Mat,
    pub lqr_residual: f64,
    pub kalman: Result<KalmanGain>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanGain {
    pub l: Mat,
    pub p: Mat,
    pub residual: f64,
}

impl GainSet {
    pub fn synthesize(lm: &LinearModel, weights: &Weights) -> Result<Self> {
        weights.validate()?;
        let lqr = solve_care(&lm.a, &lm.b, &weights.q, &weights.r)?;
        let kalman = solve_fare(&lm.a, &lm.c, &weights.w, &weights.v).map(|s| KalmanGain {
            l: s.gain,
            p: s.x,
            residual: s.residual,
        });
        Ok(Self {
            k: lqr.gain,
            s: lqr.x,
            lqr_residual: lqr.residual,
            kalman,
        })
    }
}

/// Closed loop in (state, estimation error) coordinates:
/// `[[A - BK, BK], [0, A - LC]]`.
pub fn separation_matrix(lm: &LinearModel, k: &Mat, l: &Mat) -> Mat {
    let n = lm.n();
    let bk = &lm.b * k;
    let mut m = Mat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&lm.a - &bk));
    m.view_mut((0, n), (n, n)).copy_from(&bk);
    m.view_mut((n, n), (n, n)).copy_from(&(&lm.a - l * &lm.c));
    m
}

//! Time-varying Kalman filter with rate-limited measurement corrections.
//!
//! The filter runs in deviation coordinates around the linearization point.
//! Prediction happens every step; a correction is applied only on the steps
//! selected by the [`UpdateSchedule`], so between corrections the estimate is
//! propagated by the model alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linearize::LinearModel;
use crate::model::StateVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// Correct on every `round(1/rho)`-th step, starting at step 0.
    #[default]
    Periodic,
    /// Correct each step with probability `rho`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub rho: f64,
    pub mode: ScheduleMode,
    /// Rows subject to `rho`. Rows marked `false` are corrected every step.
    /// `None` gates all rows together.
    pub channel_mask: Option<Vec<bool>>,
}

impl UpdateSchedule {
    pub fn periodic(rho: f64) -> Self {
        Self {
            rho,
            mode: ScheduleMode::Periodic,
            channel_mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid(
                "filter.rho",
                format!("must lie in (0, 1], got {}", self.rho),
            ));
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        ((1.0 / self.rho).round() as usize).max(1)
    }

    fn fires(&self, step: usize, rng: &mut impl Rng) -> bool {
        match self.mode {
            ScheduleMode::Periodic => step.is_multiple_of(self.period()),
            ScheduleMode::Bernoulli => self.rho >= 1.0 || rng.random::<f64>() < self.rho,
        }
    }

    /// Per-row enablement for `rows` measurement channels at `step`.
    pub fn should_update(&self, step: usize, rows: usize, rng: &mut impl Rng) -> Vec<bool> {
        let fire = self.fires(step, rng);
        (0..rows)
            .map(|i| {
                let gated = self
                    .channel_mask
                    .as_ref()
                    .is_none_or(|m| m.get(i).copied().unwrap_or(true));
                fire || !gated
            })
            .collect()
    }
}

/// Zero-order-hold discretization of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub ad: Mat,
    pub bd: Mat,
    pub qd: Mat,
    pub dt: f64,
}

impl Discretization {
    /// Exact `(Ad, Bd)` from the exponential of `[[A, B], [0, 0]] dt`; `Qd = W dt`.
    pub fn new(lm: &LinearModel, w: &Mat, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("sim.dt", format!("must be > 0, got {dt}")));
        }
        let n = lm.n();
        let k = lm.inputs();
        if w.shape() != (n, n) {
            return Err(Error::Dimension {
                what: "W",
                expected: n,
                got: w.nrows(),
            });
        }
        let mut aug = Mat::zeros(n + k, n + k);
        aug.view_mut((0, 0), (n, n)).copy_from(&lm.a);
        aug.view_mut((0, n), (n, k)).copy_from(&lm.b);
        let e = (aug * dt).exp();
        Ok(Self {
            ad: e.view((0, 0), (n, n)).into_owned(),
            bd: e.view((0, n), (n, k)).into_owned(),
            qd: w * dt,
            dt,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Deviation from the equilibrium.
    pub xhat: Vector,
    pub pcov: Mat,
    pub step_count: usize,
    pub schedule: UpdateSchedule,
}

impl FilterState {
    pub fn new(xhat: Vector, pcov: Mat, schedule: UpdateSchedule) -> Result<Self> {
        if pcov.shape() != (xhat.len(), xhat.len()) {
            return Err(Error::Dimension {
                what: "P0",
                expected: xhat.len(),
                got: pcov.nrows(),
            });
        }
        if !linalg::is_psd(&pcov, 1e-12) {
            return Err(Error::invalid("filter.p0", "initial covariance must be symmetric PSD"));
        }
        schedule.validate()?;
        Ok(Self {
            xhat,
            pcov,
            step_count: 0,
            schedule,
        })
    }

    /// Absolute estimate `x_e + xhat`.
    pub fn estimate(&self, lm: &LinearModel) -> StateVec {
        let mut v = lm.equilibrium.x_e.as_slice().to_vec();
        for (a, d) in v.iter_mut().zip(self.xhat.iter()) {
            *a += d;
        }
        StateVec::new(lm.variant(), &v).expect("estimate has the model dimension")
    }
}

fn finish_cov(p: Mat) -> Mat {
    let p = linalg::symmetrize(&p);
    if p.clone().cholesky().is_some() {
        return p;
    }
    if linalg::min_sym_eigenvalue(&p) < -1e-10 || !p.iter().all(|v| v.is_finite()) {
        return linalg::clip_psd(&p);
    }
    p
}

/// Propagate the estimate and covariance over one step.
pub fn predict(fs: &FilterState, u: &[f64], disc: &Discretization) -> Result<FilterState> {
    if u.len() != disc.bd.ncols() {
        return Err(Error::Dimension {
            what: "control vector",
            expected: disc.bd.ncols(),
            got: u.len(),
        });
    }
    let u = Vector::from_column_slice(u);
    let xhat = &disc.ad * &fs.xhat + &disc.bd * u;
    if !xhat.iter().all(|v| v.is_finite()) {
        return Err(Error::FilterDivergence { step: fs.step_count });
    }
    let pcov = finish_cov(&disc.ad * &fs.pcov * disc.ad.transpose() + &disc.qd);
    Ok(FilterState {
        xhat,
        pcov,
        step_count: fs.step_count + 1,
        schedule: fs.schedule.clone(),
    })
}

/// Kalman correction on the enabled rows of `C`. `y` holds all rows; disabled
/// entries are ignored.
pub fn update(fs: &FilterState, y: &[f64], enabled: &[bool], c: &Mat, v: &Mat) -> Result<FilterState> {
    let m = c.nrows();
    if y.len() != m {
        return Err(Error::Dimension {
            what: "measurement",
            expected: m,
            got: y.len(),
        });
    }
    if enabled.len() != m {
        return Err(Error::Dimension {
            what: "measurement mask",
            expected: m,
            got: enabled.len(),
        });
    }
    if v.shape() != (m, m) {
        return Err(Error::Dimension {
            what: "V",
            expected: m,
            got: v.nrows(),
        });
    }
    let rows: Vec<usize> = (0..m).filter(|&i| enabled[i]).collect();
    if rows.is_empty() {
        return Ok(fs.clone());
    }
    let n = fs.xhat.len();
    let cs = c.select_rows(rows.iter());
    let vs = v.select_rows(rows.iter()).select_columns(rows.iter());
    let ys = Vector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));

    let pct = &fs.pcov * cs.transpose();
    let s = &cs * &pct + &vs;
    let Some(s_inv) = s.clone().cholesky().map(|ch| ch.inverse()).or_else(|| s.try_inverse()) else {
        return Ok(fs.clone());
    };
    let gain = pct * s_inv;
    let innovation = ys - &cs * &fs.xhat;
    let xhat = &fs.xhat + &gain * innovation;
    if !xhat.iter().all(|v| v.is_finite()) {
        return Err(Error::FilterDivergence { step: fs.step_count });
    }
    let ikc = Mat::identity(n, n) - &gain * &cs;
    let pcov = finish_cov(&ikc * &fs.pcov * ikc.transpose() + &gain * vs * gain.transpose());
    Ok(FilterState {
        xhat,
        pcov,
        step_count: fs.step_count,
        schedule: fs.schedule.clone(),
    })
}

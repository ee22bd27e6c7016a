//! Seeded closed-loop simulation of the nonlinear plant under LQG control.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::estimator::{self, Discretization, FilterState, ScheduleMode, UpdateSchedule};
use crate::linalg::{Mat, Vector};
use crate::linearize::{EquilibriumKind, LinearModel};
use crate::model::{aipoc_rhs, ipoc_rhs, saturate, ModelParams, StateVec, Variant};
use crate::synthesis::{NoiseConfig, TuningProfile, Weights};

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub variant: Variant,
    pub params: ModelParams,
    pub profile: TuningProfile,
    /// Diagonal of Q in the six-state layout; overrides the profile when set.
    pub q_diag: Option<Vec<f64>>,
    /// Diagonal of R as `(u, u_dot)`; overrides the profile when set.
    pub r_diag: Option<Vec<f64>>,
    pub noise: NoiseConfig,
    /// Sample and inject noise. When false the filter keeps its covariances
    /// but the plant and sensors are exact.
    pub inject_noise: bool,
    pub rho: f64,
    pub schedule: ScheduleMode,
    pub channel_mask: Option<Vec<bool>>,
    /// Initial `(x, x_dot, theta, theta_dot)`; the augmented variant fills its
    /// accelerations from the model.
    pub x0: [f64; 4],
    pub x_ref: f64,
    /// Initial covariance scale of the configuration states.
    pub p0: f64,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Aipoc,
            params: ModelParams::default(),
            profile: TuningProfile::Ours,
            q_diag: None,
            r_diag: None,
            noise: NoiseConfig::default(),
            inject_noise: true,
            rho: 1.0,
            schedule: ScheduleMode::Periodic,
            channel_mask: None,
            x0: DEFAULT_X0,
            x_ref: 0.0,
            p0: 1.0,
            t_final: 15.0,
            dt: 0.005,
            seed: 0,
        }
    }
}

pub const DEFAULT_X0: [f64; 4] = [-2.0, -0.5, 0.1, 0.0];
pub const X_LIMIT: f64 = 50.0;

impl ScenarioConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.noise.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("sim.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::invalid(
                "sim.t_final",
                format!("must be > 0, got {}", self.t_final),
            ));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::invalid("sim.dt", "t_final must be an integer number of steps"));
        }
        self.schedule().validate()?;
        if !(self.p0.is_finite() && self.p0 >= 0.0) {
            return Err(Error::invalid("filter.p0", format!("must be >= 0, got {}", self.p0)));
        }
        if !self.x0.iter().all(|v| v.is_finite()) || !self.x_ref.is_finite() {
            return Err(Error::invalid("sim.x0", "initial state must be finite"));
        }
        if let Some(q) = &self.q_diag {
            if q.len() != 6 || q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("weights.q", "expected 6 finite entries >= 0"));
            }
        }
        if let Some(r) = &self.r_diag {
            if r.len() != 2 || r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid("weights.r", "expected 2 finite entries > 0"));
            }
        }
        if let Some(m) = &self.channel_mask {
            let rows = self.noise.channels(self.variant).len();
            if m.len() != rows {
                return Err(Error::invalid(
                    "filter.channel_mask",
                    format!("expected {rows} entries for {}", self.variant.label()),
                ));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> UpdateSchedule {
        UpdateSchedule {
            rho: self.rho,
            mode: self.schedule,
            channel_mask: self.channel_mask.clone(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut out = self.clone();
        if variant != self.variant {
            out.channel_mask = None;
        }
        out.variant = variant;
        out
    }

    /// Q and R for the configured variant. The classical layout takes the
    /// configuration-state entries of Q and the first entry of R.
    pub fn weights(&self) -> Result<Weights> {
        let (qs, rs) = self.profile.scales();
        let q6 = self.q_diag.clone().unwrap_or_else(|| vec![qs; 6]);
        let r2 = self.r_diag.clone().unwrap_or_else(|| vec![rs; 2]);
        let (q, r) = match self.variant {
            Variant::Ipoc => (vec![q6[0], q6[1], q6[3], q6[4]], vec![r2[0]]),
            Variant::Aipoc => (q6, r2),
        };
        Weights::new(
            Mat::from_diagonal(&Vector::from_vec(q)),
            Mat::from_diagonal(&Vector::from_vec(r)),
            self.noise.process_matrix(self.variant),
            self.noise.measurement_matrix(self.variant),
        )
    }

    pub fn initial_state(&self) -> StateVec {
        let [x, v, th, w] = self.x0;
        match self.variant {
            Variant::Ipoc => StateVec::ipoc(x, v, th, w),
            Variant::Aipoc => StateVec::augment(self.x0, 0.0, &self.params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Settled,
    Running,
    Crashed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Settled => "settled",
            Status::Running => "running",
            Status::Crashed => "crashed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: [f64; 6],
    pub estimate: [f64; 6],
    pub u_raw: f64,
    pub u_sat: f64,
    pub u_dot: f64,
    /// Bit `i` set when measurement row `i` was applied.
    pub applied: u8,
    /// Innovation per row, zero where the row was not applied.
    pub innovation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub variant: Variant,
    pub dt: f64,
    pub x_ref: f64,
    pub theta_e: f64,
    pub u_max: f64,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub status: Status,
    /// First step whose state violated the crash limits.
    pub crash_step: Option<usize>,
    pub measurement_rows: usize,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn theta_index(&self) -> usize {
        self.variant.theta_index()
    }

    pub fn position_error(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state[0] - self.x_ref).collect()
    }

    pub fn angle_error(&self) -> Vec<f64> {
        let i = self.theta_index();
        self.records.iter().map(|r| r.state[i] - self.theta_e).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn terminal(&self) -> &StepRecord {
        self.records.last().expect("trace is never empty")
    }

    pub fn crashed(&self) -> bool {
        self.status == Status::Crashed
    }
}

/// Synthesized controller, filter discretization and noise factors, shared
/// across runs that differ only in initial state and seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub lm: LinearModel,
    pub k: Mat,
    pub weights: Weights,
    disc: Discretization,
    p0: Mat,
    w_std: Vec<f64>,
    v_std: [f64; 4],
}

impl Prepared {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let variant = cfg.variant;
        let p = &cfg.params;
        let lm = LinearModel::build(variant, EquilibriumKind::Upright, p)?;
        let weights = cfg.weights()?;
        let k = crate::synthesis::solve_care(&lm.a, &lm.b, &weights.q, &weights.r)?.gain;
        let disc = Discretization::new(&lm, &weights.w, cfg.dt)?;
        let p0 = initial_covariance(variant, cfg.p0, &lm);
        let n = variant.dim();
        let w_std = (0..n).map(|i| weights.w[(i, i)].max(0.0).sqrt()).collect();
        let nz = &cfg.noise;
        let v_std = [nz.position, nz.accelerometer, nz.gyroscope, nz.angle].map(|v| v.max(0.0).sqrt());
        Ok(Self {
            cfg: cfg.clone(),
            lm,
            k,
            weights,
            disc,
            p0,
            w_std,
            v_std,
        })
    }

    pub fn run(&self) -> Result<SimTrace> {
        self.run_from(self.cfg.x0, self.cfg.seed)
    }

    /// Run from a different initial configuration state and seed.
    pub fn run_from(&self, x0: [f64; 4], seed: u64) -> Result<SimTrace> {
        simulate(self, x0, seed)
    }
}

/// Prior covariance. For the augmented layout the accelerations are tied to
/// the configuration states through the linear model, so the prior carries
/// the same correlations a model-consistent initial state has.
pub fn initial_covariance(variant: Variant, scale: f64, lm: &LinearModel) -> Mat {
    match variant {
        Variant::Ipoc => Mat::identity(4, 4) * scale,
        Variant::Aipoc => {
            let mut t = Mat::zeros(6, 4);
            t[(0, 0)] = 1.0;
            t[(1, 1)] = 1.0;
            t[(3, 2)] = 1.0;
            t[(4, 3)] = 1.0;
            // acceleration rows of the configuration-state Jacobian
            for (dst, src) in [(2, 1), (5, 4)] {
                for (j, col) in [0, 1, 3, 4].into_iter().enumerate() {
                    t[(dst, j)] = lm.a[(src, col)];
                }
            }
            &t * (Mat::identity(4, 4) * scale) * t.transpose() + Mat::identity(6, 6) * 1e-6
        }
    }
}

#[inline]
fn rhs(variant: Variant, s: &[f64; 6], u: f64, u_dot: f64, p: &ModelParams) -> [f64; 6] {
    match variant {
        Variant::Ipoc => {
            let d = ipoc_rhs([s[0], s[1], s[2], s[3]], u, p);
            [d[0], d[1], d[2], d[3], 0.0, 0.0]
        }
        Variant::Aipoc => aipoc_rhs(*s, u, u_dot, p),
    }
}

fn axpy(a: &[f64; 6], h: f64, k: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| a[i] + h * k[i])
}

/// One classical RK4 step with the inputs held over `dt`.
pub fn step(s: &StateVec, inputs: &[f64], p: &ModelParams, dt: f64) -> Result<StateVec> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("sim.dt", "must be > 0"));
    }
    s.ensure_finite("plant state")?;
    let u = inputs.first().copied().unwrap_or(0.0);
    let u_dot = inputs.get(1).copied().unwrap_or(0.0);
    let next = rk4(s.variant(), s.raw(), u, u_dot, p, dt);
    let out = StateVec::from_raw(s.variant(), next);
    out.ensure_finite("plant state")?;
    Ok(out)
}

#[inline]
fn rk4(variant: Variant, s: &[f64; 6], u: f64, u_dot: f64, p: &ModelParams, dt: f64) -> [f64; 6] {
    let k1 = rhs(variant, s, u, u_dot, p);
    let k2 = rhs(variant, &axpy(s, 0.5 * dt, &k1), u, u_dot, p);
    let k3 = rhs(variant, &axpy(s, 0.5 * dt, &k2), u, u_dot, p);
    let k4 = rhs(variant, &axpy(s, dt, &k3), u, u_dot, p);
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn crashed(variant: Variant, s: &[f64; 6], theta_e: f64) -> bool {
    let n = variant.dim();
    !s[..n].iter().all(|v| v.is_finite())
        || s[0].abs() > X_LIMIT
        || (s[variant.theta_index()] - theta_e).abs() > FRAC_PI_2
}

/// Noise draw indices per step: 6 process entries in the augmented layout
/// followed by position, accelerometer, gyroscope and angle sensor noise.
/// Both variants consume the same stream so matched seeds share realizations.
const PROCESS_SLOTS: [usize; 4] = [0, 1, 3, 4];

fn simulate(prep: &Prepared, x0: [f64; 4], seed: u64) -> Result<SimTrace> {
    let cfg = &prep.cfg;
    let variant = cfg.variant;
    let p = &cfg.params;
    let lm = &prep.lm;
    let n = variant.dim();
    let m = lm.outputs();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let theta_e = 0.0;
    let x_e = lm.equilibrium.x_e.as_slice();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sched_rng = ChaCha8Rng::seed_from_u64(seed);
    sched_rng.set_stream(1);

    let mut x = match variant {
        Variant::Ipoc => *StateVec::ipoc(x0[0], x0[1], x0[2], x0[3]).raw(),
        Variant::Aipoc => *StateVec::augment(x0, 0.0, p).raw(),
    };
    let mut x_ref_dev = [0.0; 6];
    x_ref_dev[0] = cfg.x_ref;

    let mut fs = FilterState::new(Vector::zeros(n), prep.p0.clone(), cfg.schedule())?;
    let mut records = Vec::with_capacity(steps + 1);
    let mut u_prev = 0.0;
    let mut inputs_prev = vec![0.0; variant.inputs()];
    let mut status = Status::Running;
    let mut crash_step = None;

    let noise_on = cfg.inject_noise && !cfg.noise.is_silent();

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            fs = estimator::predict(&fs, &inputs_prev, &prep.disc)?;
        }

        let mut draws = [0.0f64; 10];
        if noise_on {
            for d in draws.iter_mut() {
                *d = StandardNormal.sample(&mut noise_rng);
            }
        }
        let vn = &draws[6..];
        let y: Vec<f64> = match variant {
            Variant::Ipoc => vec![
                x[0] - x_e[0] + prep.v_std[0] * vn[0],
                x[2] - x_e[2] + prep.v_std[3] * vn[3],
            ],
            Variant::Aipoc => vec![
                x[0] - x_e[0] + prep.v_std[0] * vn[0],
                x[2] - x_e[2] + prep.v_std[1] * vn[1],
                x[4] - x_e[4] + prep.v_std[2] * vn[2],
            ],
        };
        let enabled = fs.schedule.should_update(k, m, &mut sched_rng);
        let prior = fs.xhat.clone();
        fs = estimator::update(&fs, &y, &enabled, &lm.c, &prep.weights.v)?;
        let mut applied = 0u8;
        let mut innovation = [0.0; 3];
        let cx = &lm.c * &prior;
        for i in 0..m {
            if enabled[i] {
                applied |= 1 << i;
                innovation[i] = y[i] - cx[i];
            }
        }

        // deviation of the estimate from the setpoint
        let mut dev = fs.xhat.clone();
        dev[0] -= x_ref_dev[0] - x_e[0];
        let u_vec = -(&prep.k * dev);
        let u_raw = u_vec[0];
        let u_sat = saturate(u_raw, p);
        let u_dot = (u_sat - u_prev) / dt;
        u_prev = u_sat;
        let inputs = match variant {
            Variant::Ipoc => vec![u_sat],
            Variant::Aipoc => vec![u_sat, u_dot],
        };

        let mut estimate = [0.0; 6];
        for i in 0..n {
            estimate[i] = x_e[i] + fs.xhat[i];
        }
        records.push(StepRecord {
            t,
            state: x,
            estimate,
            u_raw,
            u_sat,
            u_dot,
            applied,
            innovation,
        });

        if k == steps {
            break;
        }
        let mut next = rk4(variant, &x, u_sat, u_dot, p, dt);
        if noise_on {
            let sq = dt.sqrt();
            match variant {
                Variant::Ipoc => {
                    for (i, &slot) in PROCESS_SLOTS.iter().enumerate() {
                        next[i] += sq * prep.w_std[i] * draws[slot];
                    }
                }
                Variant::Aipoc => {
                    for i in 0..6 {
                        next[i] += sq * prep.w_std[i] * draws[i];
                    }
                }
            }
        }
        if crashed(variant, &next, theta_e) {
            status = Status::Crashed;
            crash_step = Some(k + 1);
            let terminal = if next[..n].iter().all(|v| v.is_finite()) {
                next
            } else {
                x
            };
            let last = *records.last().expect("pushed above");
            for j in (k + 1)..=steps {
                records.push(StepRecord {
                    t: j as f64 * dt,
                    state: terminal,
                    applied: 0,
                    innovation: [0.0; 3],
                    ..last
                });
            }
            break;
        }
        x = next;
        inputs_prev = inputs;
    }

    let mut trace = SimTrace {
        variant,
        dt,
        x_ref: cfg.x_ref,
        theta_e,
        u_max: p.u_max,
        seed,
        records,
        status,
        crash_step,
        measurement_rows: m,
    };
    if trace.status != Status::Crashed && analysis::is_settled(&trace, analysis::DEFAULT_BAND) {
        trace.status = Status::Settled;
    }
    Ok(trace)
}

pub fn run(cfg: &ScenarioConfig) -> Result<SimTrace> {
    Prepared::new(cfg)?.run()
}

/// Matched-seed runs of both variants from the same configuration state.
pub fn run_pair(cfg: &ScenarioConfig) -> Result<(SimTrace, SimTrace)> {
    let a = run(&cfg.with_variant(Variant::Ipoc))?;
    let b = run(&cfg.with_variant(Variant::Aipoc))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet(variant: Variant) -> ScenarioConfig {
        ScenarioConfig {
            variant,
            inject_noise: false,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn equilibrium_is_fixed_by_rk4() {
        let p = ModelParams::default();
        for v in [Variant::Ipoc, Variant::Aipoc] {
            let s = StateVec::zeros(v);
            assert_eq!(step(&s, &[0.0, 0.0], &p, 0.005).unwrap(), s);
        }
    }

    #[test]
    fn trace_shape_and_time_stamps() {
        let tr = run(&quiet(Variant::Aipoc)).unwrap();
        assert_eq!(tr.len(), 3001);
        assert_eq!(tr.records[0].t, 0.0);
        assert_abs_diff_eq!(tr.t_final(), 15.0, epsilon = 1e-9);
        assert!(tr.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn at_rest_stays_at_rest() {
        for v in [Variant::Ipoc, Variant::Aipoc] {
            let cfg = ScenarioConfig {
                x0: [0.0; 4],
                ..quiet(v)
            };
            let tr = run(&cfg).unwrap();
            assert!(tr.records.iter().all(|r| r.state == [0.0; 6] && r.u_sat == 0.0));
            assert_eq!(tr.status, Status::Settled);
        }
    }

    #[test]
    fn crash_pads_with_terminal_state() {
        let cfg = ScenarioConfig {
            x0: [0.0, 0.0, 1.5, 3.0],
            ..quiet(Variant::Ipoc)
        };
        let tr = run(&cfg).unwrap();
        assert_eq!(tr.status, Status::Crashed);
        assert_eq!(tr.len(), 3001);
        let c = tr.crash_step.unwrap();
        assert!(tr.records[c..].iter().all(|r| r.state == tr.records[c].state));
    }

    #[test]
    fn invalid_config_names_key() {
        let cfg = ScenarioConfig {
            dt: 0.0,
            ..ScenarioConfig::default()
        };
        match run(&cfg).unwrap_err() {
            Error::Invalid { key, .. } => assert_eq!(key, "sim.dt"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn aipoc_prior_ties_accelerations_to_configuration() {
        let cfg = quiet(Variant::Aipoc);
        let prep = Prepared::new(&cfg).unwrap();
        // Var(x_ddot) = delta^2/M^2 + (mg/M)^2 for a unit prior
        let want = 0.16f64.powi(2) + 1.962f64.powi(2) + 1e-6;
        assert_abs_diff_eq!(prep.p0[(2, 2)], want, epsilon = 1e-12);
    }
}

//! Performance metrics and Monte Carlo stability-region mapping.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Variant;
use crate::simengine::{Prepared, ScenarioConfig, SimTrace};

pub const DEFAULT_BAND: f64 = 0.02;
/// Smallest half-width of a tolerance band, in the channel's units.
pub const BAND_FLOOR: f64 = 0.01;

pub fn band_width(initial_error: f64, band: f64) -> f64 {
    (band * initial_error.abs()).max(BAND_FLOOR)
}

/// Peak, transient and settling times of one error signal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelTiming {
    pub t_p: f64,
    pub t_tr: Option<f64>,
    pub t_s: Option<f64>,
}

/// Time where `|e|` crosses `width` between samples `i` and `i + 1`.
fn crossing(t: &[f64], e: &[f64], i: usize, width: f64) -> f64 {
    let (a, b) = (e[i].abs(), e[i + 1].abs());
    if (a - b).abs() < f64::MIN_POSITIVE {
        return t[i + 1];
    }
    let s = ((a - width) / (a - b)).clamp(0.0, 1.0);
    t[i] + s * (t[i + 1] - t[i])
}

pub fn channel_timing(t: &[f64], e: &[f64], band: f64) -> ChannelTiming {
    assert_eq!(t.len(), e.len());
    if e.is_empty() {
        return ChannelTiming::default();
    }
    let width = band_width(e[0], band);
    let inside = |v: f64| v.abs() <= width;

    let (ip, _) = e.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
        if v.abs() > bv {
            (i, v.abs())
        } else {
            (bi, bv)
        }
    });
    let t_p = t[ip];

    // first entry at or after the peak
    let t_tr = if inside(e[ip]) {
        Some(t_p)
    } else {
        (ip..e.len() - 1)
            .find(|&i| !inside(e[i]) && inside(e[i + 1]))
            .map(|i| crossing(t, e, i, width))
    };

    let t_s = match e.iter().rposition(|&v| !inside(v)) {
        None => Some(t[0]),
        Some(j) if j + 1 == e.len() => None,
        Some(j) => Some(crossing(t, e, j, width)),
    };
    ChannelTiming {
        t_p,
        t_tr,
        t_s: t_s.map(|s| s.max(t_tr.unwrap_or(s))),
    }
}

/// Both configuration errors held inside their bands until the end.
pub fn is_settled(trace: &SimTrace, band: f64) -> bool {
    if trace.crashed() {
        return false;
    }
    let t = trace.times();
    channel_timing(&t, &trace.position_error(), band).t_s.is_some()
        && channel_timing(&t, &trace.angle_error(), band).t_s.is_some()
}

/// Trapezoidal integral of `f` over the sample times `t`.
pub fn trapz(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2)
        .zip(f.windows(2))
        .map(|(tw, fw)| 0.5 * (tw[1] - tw[0]) * (fw[0] + fw[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorIntegrals {
    pub iae: f64,
    pub itae: f64,
    pub e_ss: f64,
}

pub fn error_integrals(t: &[f64], e: &[f64]) -> ErrorIntegrals {
    let abs: Vec<f64> = e.iter().map(|v| v.abs()).collect();
    let weighted: Vec<f64> = t.iter().zip(&abs).map(|(t, a)| t * a).collect();
    ErrorIntegrals {
        iae: trapz(t, &abs),
        itae: trapz(t, &weighted),
        e_ss: abs.last().copied().unwrap_or(0.0),
    }
}

/// `100 * (steps at the bound) / steps`.
pub fn saturation_pct(u_sat: &[f64], u_max: f64) -> f64 {
    if u_sat.is_empty() {
        return 0.0;
    }
    let at = u_sat.iter().filter(|u| u.abs() >= u_max * (1.0 - 1e-12)).count();
    100.0 * at as f64 / u_sat.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub position: ChannelTiming,
    pub angle: ChannelTiming,
    pub position_err: ErrorIntegrals,
    pub angle_err: ErrorIntegrals,
    pub u_tot: f64,
    pub u_sat_pct: f64,
    pub settled: bool,
    pub crashed: bool,
}

pub fn transient_metrics(trace: &SimTrace, band: f64) -> (ChannelTiming, ChannelTiming) {
    let t = trace.times();
    (
        channel_timing(&t, &trace.position_error(), band),
        channel_timing(&t, &trace.angle_error(), band),
    )
}

pub fn metrics(trace: &SimTrace) -> MetricsReport {
    let t = trace.times();
    let (position, angle) = transient_metrics(trace, DEFAULT_BAND);
    let u: Vec<f64> = trace.records.iter().map(|r| r.u_sat).collect();
    let u_abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    MetricsReport {
        position,
        angle,
        position_err: error_integrals(&t, &trace.position_error()),
        angle_err: error_integrals(&t, &trace.angle_error()),
        u_tot: trapz(&t, &u_abs),
        u_sat_pct: saturation_pct(&u, trace.u_max),
        settled: !trace.crashed() && position.t_s.is_some() && angle.t_s.is_some(),
        crashed: trace.crashed(),
    }
}

/// Errors scaled by their initial values against normalized time-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub tgo: Vec<f64>,
    pub position: Vec<f64>,
    pub angle: Vec<f64>,
    /// Per channel: true when scaled, false when the initial error was zero.
    pub scaled: [bool; 2],
}

pub fn normalize_tgo(trace: &SimTrace) -> Normalized {
    let t_end = trace.t_final();
    let tgo = trace
        .times()
        .iter()
        .map(|t| if t_end > 0.0 { (t_end - t) / t_end } else { 0.0 })
        .collect();
    let scale = |e: Vec<f64>| -> (Vec<f64>, bool) {
        let e0 = e.first().copied().unwrap_or(0.0);
        if e0.abs() > f64::EPSILON {
            (e.iter().map(|v| v / e0).collect(), true)
        } else {
            (e, false)
        }
    };
    let (position, sp) = scale(trace.position_error());
    let (angle, sa) = scale(trace.angle_error());
    Normalized {
        tgo,
        position,
        angle,
        scaled: [sp, sa],
    }
}

/// The four response surfaces of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    FinalPosition,
    FinalAngle,
    Saturation,
    ControlEffort,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::FinalPosition,
        Criterion::FinalAngle,
        Criterion::Saturation,
        Criterion::ControlEffort,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Criterion::FinalPosition => "|x(T)|",
            Criterion::FinalAngle => "|theta(T)|",
            Criterion::Saturation => "u_sat",
            Criterion::ControlEffort => "U_tot",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Upper bounds that make a sample count as stable on each criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub x_final: f64,
    pub theta_final: f64,
    pub u_sat_pct: f64,
    pub u_tot: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            x_final: 0.1,
            theta_final: PI / 40.0,
            u_sat_pct: 5.0,
            u_tot: 100.0,
        }
    }
}

impl Thresholds {
    pub fn bound(&self, c: Criterion) -> f64 {
        match c {
            Criterion::FinalPosition => self.x_final,
            Criterion::FinalAngle => self.theta_final,
            Criterion::Saturation => self.u_sat_pct,
            Criterion::ControlEffort => self.u_tot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub samples: usize,
    /// Update ratio used for every sample.
    pub rho: f64,
    /// Cells along `x_dot0` and `theta_dot0`.
    pub grid: [usize; 2],
    pub xdot_range: [f64; 2],
    pub thetadot_range: [f64; 2],
    pub thresholds: Thresholds,
    /// Outlier isolation radius in cells.
    pub outlier_radius: usize,
    pub seed: u64,
    /// Inject process and sensor noise into the sampled runs. Off by default:
    /// with noise the final-position criterion turns into a sparse random
    /// scatter whose hull grows with the sample count.
    pub noise: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            rho: 0.2,
            grid: [80, 80],
            xdot_range: [-10.0, 10.0],
            thetadot_range: [-PI, PI],
            thresholds: Thresholds::default(),
            outlier_radius: 2,
            seed: 0,
            noise: false,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("scan.samples", "must be >= 1"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid(
                "scan.rho",
                format!("must lie in (0, 1], got {}", self.rho),
            ));
        }
        if self.grid.contains(&0) {
            return Err(Error::invalid("scan.grid", "cell counts must be >= 1"));
        }
        for (key, r) in [
            ("scan.xdot_range", self.xdot_range),
            ("scan.thetadot_range", self.thetadot_range),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::invalid(key, "expected [lo, hi] with lo < hi"));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.xdot_range[1] - self.xdot_range[0]) * (self.thetadot_range[1] - self.thetadot_range[0])
    }

    fn cell_of(&self, xd: f64, td: f64) -> (usize, usize) {
        let f = |v: f64, r: [f64; 2], n: usize| {
            (((v - r[0]) / (r[1] - r[0]) * n as f64).floor().max(0.0) as usize).min(n - 1)
        };
        (
            f(xd, self.xdot_range, self.grid[0]),
            f(td, self.thetadot_range, self.grid[1]),
        )
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let c = |k: usize, r: [f64; 2], n: usize| r[0] + (k as f64 + 0.5) * (r[1] - r[0]) / n as f64;
        (
            c(i, self.xdot_range, self.grid[0]),
            c(j, self.thetadot_range, self.grid[1]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub xdot0: f64,
    pub thetadot0: f64,
    pub x_final: f64,
    pub theta_final: f64,
    pub u_tot: f64,
    pub u_sat_pct: f64,
    pub crashed: bool,
}

impl SampleRecord {
    pub fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::FinalPosition => self.x_final,
            Criterion::FinalAngle => self.theta_final,
            Criterion::Saturation => self.u_sat_pct,
            Criterion::ControlEffort => self.u_tot,
        }
    }

    pub fn stable_on(&self, c: Criterion, th: &Thresholds) -> bool {
        !self.crashed && self.value(c) <= th.bound(c)
    }

    /// Both configuration variables returned to the equilibrium.
    pub fn stable(&self, th: &Thresholds) -> bool {
        self.stable_on(Criterion::FinalPosition, th) && self.stable_on(Criterion::FinalAngle, th)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    pub scan: ScanConfig,
    pub samples: Vec<SampleRecord>,
    /// Row-major `grid[0] x grid[1]` tallies: +1 stable, -1 unstable.
    pub tally: Vec<i32>,
    /// Same, per criterion.
    pub criterion_tally: [Vec<i32>; 4],
}

impl StabilityMap {
    pub fn cell(&self, i: usize, j: usize) -> i32 {
        self.tally[i * self.scan.grid[1] + j]
    }

    /// Mean of a criterion value over the samples in each cell (NaN if empty).
    pub fn surface(&self, c: Criterion) -> Vec<f64> {
        let [gx, gy] = self.scan.grid;
        let mut sum = vec![0.0; gx * gy];
        let mut cnt = vec![0usize; gx * gy];
        for s in &self.samples {
            let (i, j) = self.scan.cell_of(s.xdot0, s.thetadot0);
            sum[i * gy + j] += s.value(c);
            cnt[i * gy + j] += 1;
        }
        sum.iter()
            .zip(&cnt)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { f64::NAN })
            .collect()
    }
}

/// Per-sample seed independent of scheduling order.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Initial velocities of sample `index`.
pub fn sample_point(scan: &ScanConfig, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    rng.set_stream(index);
    let xd = rng.random_range(scan.xdot_range[0]..scan.xdot_range[1]);
    let td = rng.random_range(scan.thetadot_range[0]..scan.thetadot_range[1]);
    (xd, td)
}

fn run_sample(prep: &Prepared, scan: &ScanConfig, index: u64) -> Result<SampleRecord> {
    let (xd, td) = sample_point(scan, index);
    let x0 = [prep.cfg.x_ref, xd, 0.0, td];
    let trace = prep.run_from(x0, sample_seed(scan.seed, index))?;
    let m = metrics(&trace);
    let last = trace.terminal();
    Ok(SampleRecord {
        xdot0: xd,
        thetadot0: td,
        x_final: (last.state[0] - trace.x_ref).abs(),
        theta_final: (last.state[trace.theta_index()] - trace.theta_e).abs(),
        u_tot: m.u_tot,
        u_sat_pct: m.u_sat_pct,
        crashed: trace.crashed(),
    })
}

#[cfg(feature = "parallel")]
fn run_samples(prep: &Prepared, scan: &ScanConfig, parallel: bool) -> Result<Vec<SampleRecord>> {
    use rayon::prelude::*;
    let n = scan.samples as u64;
    if parallel {
        (0..n).into_par_iter().map(|i| run_sample(prep, scan, i)).collect()
    } else {
        (0..n).map(|i| run_sample(prep, scan, i)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_samples(prep: &Prepared, scan: &ScanConfig, _parallel: bool) -> Result<Vec<SampleRecord>> {
    (0..scan.samples as u64).map(|i| run_sample(prep, scan, i)).collect()
}

/// Scan one variant of `base` at the scan's update ratio and noise setting.
pub fn scan_variant(base: &ScenarioConfig, variant: Variant, scan: &ScanConfig) -> Result<StabilityMap> {
    let cfg = ScenarioConfig {
        rho: scan.rho,
        inject_noise: scan.noise,
        ..base.with_variant(variant)
    };
    stability_scan(&Prepared::new(&cfg)?, scan)
}

/// Monte Carlo scan over initial velocities with the configuration states at
/// the equilibrium. Uses rayon when the `parallel` feature is enabled.
pub fn stability_scan(prep: &Prepared, scan: &ScanConfig) -> Result<StabilityMap> {
    stability_scan_with(prep, scan, true)
}

pub fn stability_scan_sequential(prep: &Prepared, scan: &ScanConfig) -> Result<StabilityMap> {
    stability_scan_with(prep, scan, false)
}

fn stability_scan_with(prep: &Prepared, scan: &ScanConfig, parallel: bool) -> Result<StabilityMap> {
    scan.validate()?;
    let samples = run_samples(prep, scan, parallel)?;
    Ok(tally(scan, samples))
}

/// Accumulate per-cell tallies from sample records.
pub fn tally(scan: &ScanConfig, samples: Vec<SampleRecord>) -> StabilityMap {
    let [gx, gy] = scan.grid;
    let mut tally = vec![0i32; gx * gy];
    let mut criterion_tally: [Vec<i32>; 4] = std::array::from_fn(|_| vec![0i32; gx * gy]);
    let th = &scan.thresholds;
    for s in &samples {
        let (i, j) = scan.cell_of(s.xdot0, s.thetadot0);
        tally[i * gy + j] += if s.stable(th) { 1 } else { -1 };
        for c in Criterion::ALL {
            criterion_tally[c.index()][i * gy + j] += if s.stable_on(c, th) { 1 } else { -1 };
        }
    }
    StabilityMap {
        scan: scan.clone(),
        samples,
        tally,
        criterion_tally,
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (Andrew's monotone chain), no collinear vertices.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
}

pub fn is_convex(poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    n < 3 || (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) > 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub criterion: Criterion,
    pub hull: Vec<(f64, f64)>,
    pub area: f64,
    /// `area / area(Gamma_0)`.
    pub normalized: f64,
    /// Samples failing this criterion, in percent of all samples.
    pub crash_rate_pct: f64,
    pub stable_points: usize,
    pub outliers: usize,
}

/// Positive-tally cells with no other positive cell within `radius` cells are dropped.
pub fn isolated_cells(tally: &[i32], grid: [usize; 2], radius: usize) -> Vec<bool> {
    let [gx, gy] = grid;
    let r = radius as isize;
    (0..gx * gy)
        .map(|idx| {
            if tally[idx] <= 0 {
                return false;
            }
            let (i, j) = ((idx / gy) as isize, (idx % gy) as isize);
            let has_neighbor = (-r..=r).any(|di| {
                (-r..=r).any(|dj| {
                    let (a, b) = (i + di, j + dj);
                    (di, dj) != (0, 0)
                        && a >= 0
                        && b >= 0
                        && (a as usize) < gx
                        && (b as usize) < gy
                        && tally[a as usize * gy + b as usize] > 0
                })
            });
            !has_neighbor
        })
        .collect()
}

pub fn region(map: &StabilityMap, c: Criterion) -> RegionReport {
    let scan = &map.scan;
    let gy = scan.grid[1];
    let tally = &map.criterion_tally[c.index()];
    let isolated = isolated_cells(tally, scan.grid, scan.outlier_radius);
    let mut points = Vec::new();
    let mut outliers = 0;
    for s in &map.samples {
        if !s.stable_on(c, &scan.thresholds) {
            continue;
        }
        let (i, j) = scan.cell_of(s.xdot0, s.thetadot0);
        let idx = i * gy + j;
        if tally[idx] > 0 && !isolated[idx] {
            points.push((s.xdot0, s.thetadot0));
        } else {
            outliers += 1;
        }
    }
    let hull = if points.len() >= 3 {
        convex_hull(&points)
    } else {
        Vec::new()
    };
    let area = polygon_area(&hull);
    let failed = map.samples.iter().filter(|s| !s.stable_on(c, &scan.thresholds)).count();
    RegionReport {
        criterion: c,
        area,
        normalized: area / scan.area(),
        hull,
        crash_rate_pct: 100.0 * failed as f64 / map.samples.len().max(1) as f64,
        stable_points: points.len(),
        outliers,
    }
}

/// Hull, area and failure rate for each of the four criteria.
pub fn hull_and_rates(map: &StabilityMap) -> [RegionReport; 4] {
    Criterion::ALL.map(|c| region(map, c))
}

/// Samples whose run left the crash limits, in percent.
pub fn crash_rate(map: &StabilityMap) -> f64 {
    100.0 * map.samples.iter().filter(|s| s.crashed).count() as f64 / map.samples.len().max(1) as f64
}

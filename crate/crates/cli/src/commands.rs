//! Experiment orchestration for each subcommand.

use std::path::PathBuf;

use aipoc_core::analysis::{self, Criterion, MetricsReport, RegionReport, StabilityMap};
use aipoc_core::{simengine, ScenarioConfig, SimTrace, Status, TuningProfile, Variant};
use serde::Serialize;

use crate::config::{Command, ExperimentSpec};
use crate::error::CliError;
use crate::output::{self, cell};

/// What a command wrote, plus the text table it printed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub table: String,
}

#[derive(Debug, Default)]
pub struct RunOptions {
    /// Clip surface values above this bound in the map CSV.
    pub surface_cap: Option<f64>,
}

struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        output::ensure_dir(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        output::write(&self.dir, name, contents)?;
        self.files.push(self.dir.join(name));
        Ok(())
    }
}

#[derive(Serialize)]
struct RunSummary {
    variant: Variant,
    rho: f64,
    seed: u64,
    status: Status,
    crash_step: Option<usize>,
    metrics: MetricsReport,
}

impl RunSummary {
    fn of(trace: &SimTrace, rho: f64) -> Self {
        Self {
            variant: trace.variant,
            rho,
            seed: trace.seed,
            status: trace.status,
            crash_step: trace.crash_step,
            metrics: analysis::metrics(trace),
        }
    }
}

pub fn execute(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut sink = Sink::new(spec.out.clone())?;
    sink.put("config.toml", &spec.echo()?)?;
    let table = match spec.command {
        Command::Simulate => simulate(spec, &mut sink)?,
        Command::SweepRho => sweep_rho(spec, &mut sink)?,
        Command::Compare => compare(spec, &mut sink)?,
        Command::Profiles => profiles(spec, &mut sink)?,
        Command::StabilityMap => stability_map(spec, opts, &mut sink)?,
    };
    sink.put("summary.txt", &table)?;
    Ok(Outcome {
        files: sink.files,
        table,
    })
}

fn at_rho(base: &ScenarioConfig, rho: f64) -> ScenarioConfig {
    ScenarioConfig { rho, ..base.clone() }
}

/// Position and angle sub-rows in the transient-response layout.
fn transient_rows(label: String, m: &MetricsReport, crashed: bool) -> [Vec<String>; 2] {
    let tp = |v: f64| if crashed { "-".to_string() } else { cell(Some(v), 2) };
    [
        vec![
            label,
            "position".into(),
            tp(m.position.t_p),
            cell(m.position.t_tr, 2),
            cell(m.position.t_s, 2),
            cell(Some(m.u_sat_pct), 2),
            cell(Some(m.u_tot), 2),
        ],
        vec![
            String::new(),
            "angle".into(),
            tp(m.angle.t_p),
            cell(m.angle.t_tr, 2),
            cell(m.angle.t_s, 2),
            String::new(),
            String::new(),
        ],
    ]
}

const TRANSIENT_HEADER: [&str; 7] = [
    "rho",
    "channel",
    "t_p [s]",
    "t_tr [s]",
    "t_s [s]",
    "u_sat [%]",
    "U_tot [N s]",
];

fn simulate(spec: &ExperimentSpec, sink: &mut Sink) -> Result<String, CliError> {
    let trace = simengine::run(&spec.scenario)?;
    sink.put("trace.csv", &output::trace_csv(&trace))?;
    sink.put("normalized.csv", &output::normalized_csv(&trace))?;
    let summary = RunSummary::of(&trace, spec.scenario.rho);
    sink.put("summary.json", &output::json(&summary))?;
    let rows = transient_rows(output::g9(spec.scenario.rho), &summary.metrics, trace.crashed());
    Ok(format!(
        "{} ({}), status {}\n{}",
        trace.variant.label(),
        spec.scenario.profile,
        trace.status.as_str(),
        output::table(&TRANSIENT_HEADER, &rows)
    ))
}

fn sweep_rho(spec: &ExperimentSpec, sink: &mut Sink) -> Result<String, CliError> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &rho in &spec.rho_list {
        let trace = simengine::run(&at_rho(&spec.scenario, rho))?;
        let tag = output::rho_tag(rho);
        sink.put(&format!("trace_rho{tag}.csv"), &output::trace_csv(&trace))?;
        sink.put(&format!("normalized_rho{tag}.csv"), &output::normalized_csv(&trace))?;
        let s = RunSummary::of(&trace, rho);
        rows.extend(transient_rows(output::g9(rho), &s.metrics, trace.crashed()));
        runs.push(s);
    }
    sink.put("summary.json", &output::json(&runs))?;
    Ok(format!(
        "{} ({})\n{}",
        spec.scenario.variant.label(),
        spec.scenario.profile,
        output::table(&TRANSIENT_HEADER, &rows)
    ))
}

#[derive(Serialize)]
struct ComparePair {
    rho: f64,
    ipoc: RunSummary,
    aipoc: RunSummary,
}

fn compare(spec: &ExperimentSpec, sink: &mut Sink) -> Result<String, CliError> {
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for &rho in &spec.rho_list {
        let (a, b) = simengine::run_pair(&at_rho(&spec.scenario, rho))?;
        let tag = output::rho_tag(rho);
        for t in [&a, &b] {
            sink.put(&format!("trace_{}_rho{tag}.csv", t.variant), &output::trace_csv(t))?;
        }
        let pair = ComparePair {
            rho,
            ipoc: RunSummary::of(&a, rho),
            aipoc: RunSummary::of(&b, rho),
        };
        let v = |s: &RunSummary, x: f64| {
            if s.metrics.crashed {
                "-".to_string()
            } else {
                cell(Some(x), 3)
            }
        };
        let (i, j) = (&pair.ipoc.metrics, &pair.aipoc.metrics);
        rows.push(vec![
            output::g9(rho),
            "position".into(),
            v(&pair.ipoc, i.position_err.iae),
            v(&pair.aipoc, j.position_err.iae),
            v(&pair.ipoc, i.position_err.itae),
            v(&pair.aipoc, j.position_err.itae),
            v(&pair.ipoc, i.position_err.e_ss),
            v(&pair.aipoc, j.position_err.e_ss),
        ]);
        rows.push(vec![
            String::new(),
            "angle".into(),
            v(&pair.ipoc, i.angle_err.iae),
            v(&pair.aipoc, j.angle_err.iae),
            v(&pair.ipoc, i.angle_err.itae),
            v(&pair.aipoc, j.angle_err.itae),
            v(&pair.ipoc, i.angle_err.e_ss),
            v(&pair.aipoc, j.angle_err.e_ss),
        ]);
        pairs.push(pair);
    }
    sink.put("summary.json", &output::json(&pairs))?;
    let header = [
        "rho",
        "channel",
        "IAE IPoC",
        "IAE A-IPoC",
        "ITAE IPoC",
        "ITAE A-IPoC",
        "|e_ss| IPoC",
        "|e_ss| A-IPoC",
    ];
    Ok(output::table(&header, &rows))
}

#[derive(Serialize)]
struct ProfileRow {
    profile: TuningProfile,
    q: f64,
    r: f64,
    settling_time: Option<f64>,
    run: RunSummary,
}

fn profiles(spec: &ExperimentSpec, sink: &mut Sink) -> Result<String, CliError> {
    let mut rows = Vec::new();
    let mut out = Vec::new();
    for profile in TuningProfile::ALL {
        let cfg = ScenarioConfig {
            profile,
            q_diag: None,
            r_diag: None,
            ..spec.scenario.clone()
        };
        let trace = simengine::run(&cfg)?;
        sink.put(&format!("trace_{profile}.csv"), &output::trace_csv(&trace))?;
        let run = RunSummary::of(&trace, cfg.rho);
        let (q, r) = profile.scales();
        let ts = output::settling_time(&run.metrics);
        rows.push(vec![
            profile.name().into(),
            format!("{} 1_{}", output::g9(q), cfg.variant.dim()),
            format!("{} 1_{}", output::g9(r), cfg.variant.inputs()),
            cell(ts, 2),
            cell(Some(run.metrics.u_tot), 2),
        ]);
        out.push(ProfileRow {
            profile,
            q,
            r,
            settling_time: ts,
            run,
        });
    }
    sink.put("summary.json", &output::json(&out))?;
    Ok(format!(
        "{}\n{}",
        spec.scenario.variant.label(),
        output::table(&["mode", "diag(Q)", "diag(R)", "time [s]", "U_tot [N s]"], &rows)
    ))
}

#[derive(Serialize)]
struct VariantRegions {
    variant: Variant,
    crash_rate_pct: f64,
    regions: [RegionReport; 4],
}

#[derive(Serialize)]
struct MapSummary {
    samples: usize,
    rho: f64,
    gamma0_area: f64,
    variants: Vec<VariantRegions>,
}

fn stability_map(spec: &ExperimentSpec, opts: &RunOptions, sink: &mut Sink) -> Result<String, CliError> {
    let mut maps: Vec<(Variant, StabilityMap)> = Vec::new();
    for v in [Variant::Ipoc, Variant::Aipoc] {
        let map = analysis::scan_variant(&spec.scenario, v, &spec.scan)?;
        sink.put(&format!("map_{v}.csv"), &output::map_csv(&map, opts.surface_cap))?;
        sink.put(&format!("hull_{v}.csv"), &output::hull_csv(&map))?;
        maps.push((v, map));
    }
    let summary = MapSummary {
        samples: spec.scan.samples,
        rho: spec.scan.rho,
        gamma0_area: spec.scan.area(),
        variants: maps
            .iter()
            .map(|(v, m)| VariantRegions {
                variant: *v,
                crash_rate_pct: analysis::crash_rate(m),
                regions: analysis::hull_and_rates(m),
            })
            .collect(),
    };
    sink.put("summary.json", &output::json(&summary))?;
    let (ip, ap) = (&summary.variants[0], &summary.variants[1]);
    let ratio = |a: f64, b: f64| if b > 0.0 { Some(a / b) } else { None };
    let rows: Vec<Vec<String>> = Criterion::ALL
        .iter()
        .map(|c| {
            let (ri, ra) = (&ip.regions[c.index()], &ap.regions[c.index()]);
            vec![
                c.label().into(),
                cell(ratio(ri.area, ri.area), 2),
                cell(ratio(ra.area, ri.area), 2),
                cell(Some(ri.normalized), 3),
                cell(Some(ra.normalized), 3),
                cell(Some(ri.crash_rate_pct), 2),
                cell(Some(ra.crash_rate_pct), 2),
            ]
        })
        .collect();
    let header = [
        "criterion",
        "S/S_IPoC IPoC",
        "S/S_IPoC A-IPoC",
        "S/G0 IPoC",
        "S/G0 A-IPoC",
        "crash [%] IPoC",
        "crash [%] A-IPoC",
    ];
    Ok(format!(
        "{}crashed runs [%]: IPoC {:.2}, A-IPoC {:.2}\n",
        output::table(&header, &rows),
        ip.crash_rate_pct,
        ap.crash_rate_pct
    ))
}

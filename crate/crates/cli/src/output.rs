//! Trace CSV, plain-text tables and summary documents.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use aipoc_core::analysis::{self, Criterion, MetricsReport, StabilityMap};
use aipoc_core::{SimTrace, Status, Variant};
use serde::Serialize;

use crate::error::CliError;

/// `printf("%.9g")`.
pub fn g9(v: f64) -> String {
    const P: i32 = 9;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant), exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Fixed-point cell, or "-" when absent.
pub fn cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        _ => "-".into(),
    }
}

pub fn state_names(variant: Variant) -> &'static [&'static str] {
    match variant {
        Variant::Ipoc => &["x", "xdot", "theta", "thetadot"],
        Variant::Aipoc => &["x", "xdot", "xddot", "theta", "thetadot", "thetaddot"],
    }
}

/// Time at which both channels are settled.
pub fn settling_time(m: &MetricsReport) -> Option<f64> {
    match (m.settled, m.position.t_s, m.angle.t_s) {
        (true, Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    }
}

/// Row status: crashed from the crash step on, settled once both channels
/// have entered their final band, running otherwise.
pub fn row_status(trace: &SimTrace) -> Vec<Status> {
    let settle_at = settling_time(&analysis::metrics(trace));
    trace
        .records
        .iter()
        .enumerate()
        .map(|(k, r)| match (trace.crash_step, settle_at) {
            (Some(c), _) if k >= c => Status::Crashed,
            (_, Some(ts)) if r.t >= ts => Status::Settled,
            _ => Status::Running,
        })
        .collect()
}

pub fn trace_csv(trace: &SimTrace) -> String {
    let names = state_names(trace.variant);
    let n = names.len();
    let mut out = String::new();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend(names.iter().map(|s| format!("xhat_{s}")));
    header.extend(["u_raw", "u_sat", "meas_applied", "status"].map(String::from));
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, status) in trace.records.iter().zip(row_status(trace)) {
        let mut row: Vec<String> = vec![g9(r.t)];
        row.extend(r.state[..n].iter().map(|v| g9(*v)));
        row.extend(r.estimate[..n].iter().map(|v| g9(*v)));
        row.push(g9(r.u_raw));
        row.push(g9(r.u_sat));
        row.push(r.applied.to_string());
        row.push(status.as_str().into());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Normalized errors against time-to-go.
pub fn normalized_csv(trace: &SimTrace) -> String {
    let nz = analysis::normalize_tgo(trace);
    let mut out = String::from("tgo,position,angle\n");
    for k in 0..nz.tgo.len() {
        let _ = writeln!(out, "{},{},{}", g9(nz.tgo[k]), g9(nz.position[k]), g9(nz.angle[k]));
    }
    out
}

/// Per-cell tallies and mean criterion values.
pub fn map_csv(map: &StabilityMap, cap: Option<f64>) -> String {
    let surfaces = Criterion::ALL.map(|c| map.surface(c));
    let [gx, gy] = map.scan.grid;
    let mut out = String::from("xdot_bin,thetadot_bin,xdot,thetadot,tally");
    for c in Criterion::ALL {
        let _ = write!(out, ",{}", csv_name(c));
    }
    out.push('\n');
    for i in 0..gx {
        for j in 0..gy {
            let idx = i * gy + j;
            let (xd, td) = map.scan.cell_center(i, j);
            let _ = write!(out, "{i},{j},{},{},{}", g9(xd), g9(td), map.tally[idx]);
            for s in &surfaces {
                let v = match cap {
                    Some(c) if s[idx] > c => c,
                    _ => s[idx],
                };
                let _ = write!(out, ",{}", g9(v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn csv_name(c: Criterion) -> &'static str {
    match c {
        Criterion::FinalPosition => "x_final",
        Criterion::FinalAngle => "theta_final",
        Criterion::Saturation => "u_sat_pct",
        Criterion::ControlEffort => "u_tot",
    }
}

pub fn hull_csv(map: &StabilityMap) -> String {
    let mut out = String::from("criterion,vertex,xdot,thetadot\n");
    for rep in analysis::hull_and_rates(map) {
        for (k, (x, y)) in rep.hull.iter().enumerate() {
            let _ = writeln!(out, "{},{k},{},{}", csv_name(rep.criterion), g9(*x), g9(*y));
        }
    }
    out
}

/// Column-aligned table with a rule under the header.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:>width$}", width = w[i]))
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(
        w.iter()
            .map(|n| "-".repeat(*n))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    ));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Stable file-name fragment for an update ratio, e.g. `0.05` -> `0p05`.
pub fn rho_tag(rho: f64) -> String {
    g9(rho).replace('.', "p")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.1"),
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (std::f64::consts::PI, "3.14159265"),
            (9.9999999999, "10"),
            (-0.0, "0"),
        ];
        for (v, want) in cases {
            assert_eq!(g9(v), want, "{v}");
        }
    }

    #[test]
    fn absent_cells_render_as_dash() {
        assert_eq!(cell(None, 2), "-");
        assert_eq!(cell(Some(f64::NAN), 2), "-");
        assert_eq!(cell(Some(1.234), 2), "1.23");
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "bbb"], &[vec!["10".into(), "-".into()]]);
        assert_eq!(t, " a  bbb\n--  ---\n10    -\n");
    }
}

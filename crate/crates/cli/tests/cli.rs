use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use aipoc_cli::{config, CliError, Command, ConfigFile, ExperimentSpec, Overrides, RunOptions};
use aipoc_core::{TuningProfile, Variant};

fn resolve(text: &str, ov: &Overrides) -> Result<ExperimentSpec, CliError> {
    let file = ConfigFile::parse(text)?;
    ExperimentSpec::resolve(Command::Simulate, file, text, ov, "out".into())
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_aipoc"))
}

#[test]
fn empty_config_gives_table_one_defaults() {
    let spec = resolve("", &Overrides::default()).unwrap();
    let s = &spec.scenario;
    assert_eq!(s.variant, Variant::Aipoc);
    assert_eq!(s.profile, TuningProfile::Ours);
    assert_eq!(s.params.pendulum_mass, 1.0);
    assert_eq!(s.params.cart_mass, 5.0);
    assert_eq!(s.params.gravity, 9.81);
    assert_eq!(s.params.length, 1.25);
    assert_eq!(s.params.friction, 0.8);
    assert_eq!(s.t_final, 15.0);
    assert_eq!(s.dt, 0.005);
    assert_eq!(spec.rho_list, vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.01]);
}

#[test]
fn zero_dt_names_the_key_and_line() {
    let text = "[sim]\nseed = 3\ndt = 0.0\n";
    match resolve(text, &Overrides::default()) {
        Err(CliError::Config { key, line, .. }) => {
            assert!(key.unwrap().ends_with("dt"));
            assert_eq!(line, Some(3));
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_key_and_type_mismatch_are_located() {
    let cases = [
        ("[filter]\nrho = 0.5\nrhoo = 0.2\n", "filter.rhoo", 3),
        ("[model]\n\ncart_mass = \"heavy\"\n", "model.cart_mass", 3),
        ("[scan.thresholds]\nx_finall = 1.0\n", "scan.thresholds.x_finall", 2),
    ];
    for (text, want_key, want_line) in cases {
        match ConfigFile::parse(text) {
            Err(CliError::Config { key, line, msg }) => {
                assert_eq!(key.as_deref(), Some(want_key), "{msg}");
                assert_eq!(line, Some(want_line));
            }
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn oversized_seed_is_rejected() {
    let text = format!("[sim]\nseed = {}\n", i64::MAX);
    assert!(resolve(&text, &Overrides::default()).is_ok());
    let ov = Overrides {
        seed: Some(u64::MAX),
        ..Overrides::default()
    };
    let err = resolve("", &ov).unwrap_err();
    assert!(err.to_string().contains("sim.seed"), "{err}");
}

#[test]
fn rho_one_fifth_gives_one_in_five_schedule() {
    let spec = resolve("[filter]\nrho = 0.2\n", &Overrides::default()).unwrap();
    let sched = spec.scenario.schedule();
    assert_eq!(sched.period(), 5);
    let trace = aipoc_core::simengine::run(&spec.scenario).unwrap();
    let fired: Vec<usize> = trace
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.applied != 0)
        .map(|(k, _)| k)
        .collect();
    assert!(fired.windows(2).all(|w| w[1] - w[0] == 5));
    assert_eq!(fired.len(), 3000 / 5 + 1);
}

#[test]
fn overrides_take_precedence() {
    let ov = Overrides {
        seed: Some(9),
        variant: Some(Variant::Ipoc),
        rho: Some(0.1),
        profile: Some(TuningProfile::Agile),
        samples: Some(17),
    };
    let spec = resolve("[sim]\nseed = 1\nvariant = \"aipoc\"\n", &ov).unwrap();
    assert_eq!(spec.scenario.seed, 9);
    assert_eq!(spec.scan.seed, 9);
    assert_eq!(spec.scenario.variant, Variant::Ipoc);
    assert_eq!(spec.scenario.rho, 0.1);
    assert_eq!(spec.scan.rho, 0.1);
    assert_eq!(spec.rho_list, vec![0.1]);
    assert_eq!(spec.scenario.profile, TuningProfile::Agile);
    assert_eq!(spec.scan.samples, 17);
}

#[test]
fn config_echo_round_trips() {
    let text = "[weights]\nq = [1.0, 2.0, 0.5, 3.0, 1.0, 0.25]\nr = [0.2, 0.3]\n\
                [filter]\nrho = 0.25\nschedule = \"bernoulli\"\nchannel_mask = [true, false, true]\n\
                [sim]\nx0 = [0.5, 0.0, -0.2, 0.1]\nseed = 77\ninject_noise = false\nrho_list = [0.5, 0.125]\n\
                [scan]\nsamples = 123\ngrid = [7, 9]\n[scan.thresholds]\nu_tot = 42.0\n";
    let spec = resolve(text, &Overrides::default()).unwrap();
    let echo = spec.echo().unwrap();
    let again = resolve(&echo, &Overrides::default()).unwrap();
    assert_eq!(again, spec);
    assert_eq!(again.echo().unwrap(), echo);

    let defaults = resolve("", &Overrides::default()).unwrap();
    assert_eq!(
        resolve(&defaults.echo().unwrap(), &Overrides::default()).unwrap(),
        defaults
    );
}

fn run_simulate(dir: &Path, extra: &[&str]) -> std::process::ExitStatus {
    bin()
        .args(["simulate", "--out"])
        .arg(dir)
        .args(extra)
        .output()
        .unwrap()
        .status
}

#[test]
fn simulate_writes_full_trace_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_simulate(&a, &["--seed", "5"]).success());
    assert!(run_simulate(&b, &["--seed", "5"]).success());
    let csv = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3002);
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,x,xdot,xddot,theta,thetadot,thetaddot,xhat_x"));
    assert!(header.ends_with("u_raw,u_sat,meas_applied,status"));
    for name in [
        "trace.csv",
        "normalized.csv",
        "summary.json",
        "summary.txt",
        "config.toml",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let echo = fs::read_to_string(a.join("config.toml")).unwrap();
    let spec = config::load(
        Some(&a.join("config.toml")),
        Command::Simulate,
        &Overrides::default(),
        "x".into(),
    )
    .unwrap();
    assert_eq!(spec.scenario.seed, 5);
    assert_eq!(spec.echo().unwrap(), echo);
}

#[test]
fn ipoc_trace_has_four_state_columns() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_simulate(tmp.path(), &["--variant", "ipoc"]).success());
    let csv = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 4 + 4 + 4);
    assert!(!header.contains(&"xddot"));
}

#[test]
fn equilibrium_trace_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eq.toml");
    fs::write(&cfg, "[sim]\nx0 = [0.0, 0.0, 0.0, 0.0]\ninject_noise = false\n").unwrap();
    assert!(run_simulate(&tmp.path().join("o"), &["--config", cfg.to_str().unwrap()]).success());
    let csv = fs::read_to_string(tmp.path().join("o/trace.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let first: Vec<String> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .take(6)
        .map(String::from)
        .collect();
    for l in lines {
        let row: Vec<&str> = l.split(',').skip(1).take(6).collect();
        assert_eq!(row, first);
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[sim]\ndt = 0\n").unwrap();
    assert_eq!(code(&["simulate", "--config", bad.to_str().unwrap()]), 1);
    assert_eq!(code(&["simulate", "--variant", "nope"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);

    // a 1e12 kg cart leaves the pendulum uncontrollable in double precision
    let num = tmp.path().join("num.toml");
    fs::write(&num, "[model]\ncart_mass = 1e12\n").unwrap();
    let out = tmp.path().join("n");
    assert_eq!(
        code(&[
            "simulate",
            "--config",
            num.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        2
    );

    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&["simulate", "--config", missing.to_str().unwrap()]), 3);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let under = blocker.join("sub");
    assert_eq!(code(&["simulate", "--out", under.to_str().unwrap()]), 3);
}

#[test]
fn summary_tables_follow_the_layouts() {
    let tmp = tempfile::tempdir().unwrap();
    let base = r#"
[sim]
t_final = 2.0
rho_list = [1.0, 0.01]
inject_noise = false
[scan]
samples = 40
grid = [6, 6]
"#;
    let file = ConfigFile::parse(base).unwrap();
    let run = |cmd: Command, sub: &str| {
        let spec =
            ExperimentSpec::resolve(cmd, file.clone(), base, &Overrides::default(), tmp.path().join(sub)).unwrap();
        aipoc_cli::execute(&spec, &RunOptions::default()).unwrap()
    };

    let sweep = run(Command::SweepRho, "sweep").table;
    assert!(sweep.contains("t_p [s]") && sweep.contains("u_sat [%]"));
    assert_eq!(sweep.matches("position").count(), 2);
    assert_eq!(sweep.matches("angle").count(), 2);
    // two seconds is too short to settle, so t_s is absent
    assert!(sweep.lines().nth(3).unwrap().contains('-'));

    let cmp = run(Command::Compare, "cmp");
    for col in [
        "IAE IPoC",
        "IAE A-IPoC",
        "ITAE IPoC",
        "ITAE A-IPoC",
        "|e_ss| IPoC",
        "|e_ss| A-IPoC",
    ] {
        assert!(cmp.table.contains(col), "{col}");
    }
    assert_eq!(
        cmp.files
            .iter()
            .filter(|f| f.extension().is_some_and(|e| e == "csv"))
            .count(),
        4
    );

    let prof = run(Command::Profiles, "prof").table;
    for p in ["low-power", "utility", "ours", "agile"] {
        assert!(prof.contains(p));
    }

    let map = run(Command::StabilityMap, "map");
    for col in ["S/S_IPoC IPoC", "S/G0 A-IPoC", "crash [%] IPoC"] {
        assert!(map.table.contains(col), "{col}");
    }
    let csv = fs::read_to_string(tmp.path().join("map/map_aipoc.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "xdot_bin,thetadot_bin,xdot,thetadot,tally,x_final,theta_final,u_sat_pct,u_tot"
    );
    assert_eq!(csv.lines().count(), 1 + 36);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("map/summary.json")).unwrap()).unwrap();
    assert_eq!(json["variants"].as_array().unwrap().len(), 2);
}

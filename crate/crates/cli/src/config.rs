//! Sectioned TOML configuration and the resolved experiment specification.

use std::path::{Path, PathBuf};

use aipoc_core::analysis::ScanConfig;
use aipoc_core::estimator::ScheduleMode;
use aipoc_core::simengine::{ScenarioConfig, DEFAULT_X0};
use aipoc_core::{ModelParams, NoiseConfig, TuningProfile, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default update ratios of the sweep commands.
pub const DEFAULT_RHO_LIST: [f64; 6] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub profile: TuningProfile,
    /// Six-entry Q diagonal; overrides the profile scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Two-entry R diagonal; overrides the profile scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            profile: TuningProfile::Ours,
            q: None,
            r: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub rho: f64,
    pub schedule: ScheduleMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_mask: Option<Vec<bool>>,
    pub p0: f64,
    pub process: f64,
    pub position: f64,
    pub accelerometer: f64,
    pub gyroscope: f64,
    pub angle: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            rho: 1.0,
            schedule: ScheduleMode::Periodic,
            channel_mask: None,
            p0: 1.0,
            process: n.process,
            position: n.position,
            accelerometer: n.accelerometer,
            gyroscope: n.gyroscope,
            angle: n.angle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub variant: Variant,
    pub x0: [f64; 4],
    pub x_ref: f64,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    pub inject_noise: bool,
    pub rho_list: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            variant: s.variant,
            x0: DEFAULT_X0,
            x_ref: s.x_ref,
            t_final: s.t_final,
            dt: s.dt,
            seed: s.seed,
            inject_noise: s.inject_noise,
            rho_list: DEFAULT_RHO_LIST.to_vec(),
        }
    }
}

/// On-disk layout: `[model]`, `[weights]`, `[filter]`, `[sim]`, `[scan]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelParams,
    pub weights: WeightsSection,
    pub filter: FilterSection,
    pub sim: SimSection,
    pub scan: ScanConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SweepRho,
    Compare,
    Profiles,
    StabilityMap,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SweepRho => "sweep-rho",
            Command::Compare => "compare",
            Command::Profiles => "profiles",
            Command::StabilityMap => "stability-map",
        }
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub scenario: ScenarioConfig,
    pub rho_list: Vec<f64>,
    pub scan: ScanConfig,
    pub out: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub rho: Option<f64>,
    pub profile: Option<TuningProfile>,
    pub samples: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            CliError::Config {
                key: line.and_then(|l| key_on_line(text, l)),
                line,
                msg: e.message().trim().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config {
            key: None,
            line: None,
            msg: format!("cannot serialize configuration: {e}"),
        })
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let f = &self.filter;
        ScenarioConfig {
            variant: self.sim.variant,
            params: self.model,
            profile: self.weights.profile,
            q_diag: self.weights.q.clone(),
            r_diag: self.weights.r.clone(),
            noise: NoiseConfig {
                process: f.process,
                position: f.position,
                accelerometer: f.accelerometer,
                gyroscope: f.gyroscope,
                angle: f.angle,
            },
            inject_noise: self.sim.inject_noise,
            rho: f.rho,
            schedule: f.schedule,
            channel_mask: f.channel_mask.clone(),
            x0: self.sim.x0,
            x_ref: self.sim.x_ref,
            p0: f.p0,
            t_final: self.sim.t_final,
            dt: self.sim.dt,
            seed: self.sim.seed,
        }
    }

    pub fn from_parts(scenario: &ScenarioConfig, rho_list: &[f64], scan: &ScanConfig) -> Self {
        let s = scenario;
        Self {
            model: s.params,
            weights: WeightsSection {
                profile: s.profile,
                q: s.q_diag.clone(),
                r: s.r_diag.clone(),
            },
            filter: FilterSection {
                rho: s.rho,
                schedule: s.schedule,
                channel_mask: s.channel_mask.clone(),
                p0: s.p0,
                process: s.noise.process,
                position: s.noise.position,
                accelerometer: s.noise.accelerometer,
                gyroscope: s.noise.gyroscope,
                angle: s.noise.angle,
            },
            sim: SimSection {
                variant: s.variant,
                x0: s.x0,
                x_ref: s.x_ref,
                t_final: s.t_final,
                dt: s.dt,
                seed: s.seed,
                inject_noise: s.inject_noise,
                rho_list: rho_list.to_vec(),
            },
            scan: scan.clone(),
        }
    }
}

impl ExperimentSpec {
    /// Resolve file contents, overrides and validation into a spec.
    /// `text` is used to point diagnostics at the offending line.
    pub fn resolve(
        command: Command,
        file: ConfigFile,
        text: &str,
        ov: &Overrides,
        out: PathBuf,
    ) -> Result<Self, CliError> {
        let mut scenario = file.scenario();
        let mut rho_list = file.sim.rho_list.clone();
        let mut scan = file.scan.clone();
        if let Some(seed) = ov.seed {
            scenario.seed = seed;
            scan.seed = seed;
        }
        if let Some(v) = ov.variant {
            scenario = scenario.with_variant(v);
        }
        if let Some(rho) = ov.rho {
            scenario.rho = rho;
            scan.rho = rho;
            rho_list = vec![rho];
        }
        if let Some(p) = ov.profile {
            scenario.profile = p;
        }
        if let Some(n) = ov.samples {
            scan.samples = n;
        }
        let spec = Self {
            command,
            scenario,
            rho_list,
            scan,
            out,
        };
        spec.validate().map_err(|e| e.located(text))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario.validate()?;
        self.scan.validate()?;
        if self.rho_list.is_empty() {
            return Err(CliError::invalid("sim.rho_list", "must not be empty"));
        }
        if let Some(r) = self
            .rho_list
            .iter()
            .find(|r| !(r.is_finite() && **r > 0.0 && **r <= 1.0))
        {
            return Err(CliError::invalid(
                "sim.rho_list",
                format!("entries must lie in (0, 1], got {r}"),
            ));
        }
        for (key, seed) in [("sim.seed", self.scenario.seed), ("scan.seed", self.scan.seed)] {
            if seed > i64::MAX as u64 {
                return Err(CliError::invalid(key, "must fit a signed 64-bit integer"));
            }
        }
        Ok(())
    }

    pub fn config_file(&self) -> ConfigFile {
        ConfigFile::from_parts(&self.scenario, &self.rho_list, &self.scan)
    }

    /// Config echo that re-parses to this spec.
    pub fn echo(&self) -> Result<String, CliError> {
        self.config_file().to_toml()
    }
}

/// Read and resolve a config file, or the defaults when `path` is `None`.
pub fn load(path: Option<&Path>, command: Command, ov: &Overrides, out: PathBuf) -> Result<ExperimentSpec, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    let file = ConfigFile::parse(&text)?;
    ExperimentSpec::resolve(command, file, &text, ov, out)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Dotted path of the key assigned on 1-based line `line`.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate().take(line) {
        let l = raw.trim();
        if let Some(h) = l.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.trim().to_string();
        } else if i + 1 == line {
            let (k, _) = l.split_once('=')?;
            let k = k.trim();
            return Some(if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            });
        }
    }
    None
}

/// 1-based line of `section.key` (or a dotted sub-table key) in `text`.
pub fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let (section, field) = key.rsplit_once('.')?;
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        let k = k.trim();
        let full = if current.is_empty() {
            k.to_string()
        } else {
            format!("{current}.{k}")
        };
        if full == key || (current == section && k == field) {
            return Some(i + 1);
        }
    }
    None
}

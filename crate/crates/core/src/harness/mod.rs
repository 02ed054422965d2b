//! Experiment configuration, the built-in six-profile preset, the runner and its reports.

mod report;
mod run;

pub use report::{
    export, read_summary_csv, reduction, render_table, summarize, write_summary_csv, Comparison, ProfileSummary,
    Summary,
};
pub use run::{run_experiment, run_one, RunReport, SeriesRow};

use std::collections::BTreeSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpa::HpaConfig;
use crate::msra::MsRaConfig;
use crate::sim::{ConfigWarning, ScalingRequirements, ServerKind, ServerProfile, ServiceSpec, DEFAULT_TIMEOUT};
use crate::slo::{SloSpec, Strategy};
use crate::workload::{paper_profile, LoadProfile, ThinkTimeDistribution};

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT
}

fn default_sample_interval() -> f64 {
    5.0
}

fn default_violation_interval() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    MsRa(MsRaConfig),
    Hpa {
        config: HpaConfig,
        /// Objectives the run is scored against; the autoscaler ignores them.
        slos: Vec<SloSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerType {
    MsRa,
    Hpa,
}

impl ControllerType {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerType::MsRa => "ms_ra",
            ControllerType::Hpa => "hpa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ControllerProfile {
    pub name: String,
    pub controller: ControllerKind,
}

impl ControllerProfile {
    pub fn slos(&self) -> &[SloSpec] {
        match &self.controller {
            ControllerKind::MsRa(cfg) => &cfg.slos,
            ControllerKind::Hpa { slos, .. } => slos,
        }
    }

    pub fn controller_type(&self) -> ControllerType {
        match self.controller {
            ControllerKind::MsRa(_) => ControllerType::MsRa,
            ControllerKind::Hpa { .. } => ControllerType::Hpa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExperimentConfig {
    pub services: Vec<ServiceSpec>,
    pub workload: LoadProfile,
    pub controllers: Vec<ControllerProfile>,
    pub repetitions: u32,
    pub seed: u64,
    /// Seconds before an unfinished request fails.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Seconds between resource samples.
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    /// Seconds between objective checks that count violations.
    #[serde(default = "default_violation_interval")]
    pub violation_interval: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON schema of the configuration file.
    pub fn json_schema() -> String {
        let schema = schemars::schema_for!(ExperimentConfig);
        serde_json::to_string_pretty(&schema).expect("schema serializes")
    }

    /// Keeps only the named profiles, in the given order.
    pub fn select_profiles(&mut self, names: &[String]) -> Result<()> {
        let mut picked = Vec::new();
        for name in names {
            let p = self
                .controllers
                .iter()
                .find(|p| &p.name == name)
                .ok_or_else(|| Error::config(format!("unknown profile `{name}`")))?;
            picked.push(p.clone());
        }
        self.controllers = picked;
        Ok(())
    }

    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        if self.services.is_empty() {
            return Err(Error::config("no services configured"));
        }
        let mut warnings = Vec::new();
        let mut names = BTreeSet::new();
        for s in &self.services {
            warnings.extend(s.validate()?);
            if !names.insert(s.name.as_str()) {
                return Err(Error::config(format!("duplicate service `{}`", s.name)));
            }
        }
        self.workload.validate()?;
        if !names.contains(self.workload.target_service.as_str()) {
            return Err(Error::config(format!("workload targets unknown service `{}`", self.workload.target_service)));
        }
        if self.controllers.is_empty() {
            return Err(Error::config("no controller profiles configured"));
        }
        let mut profiles = BTreeSet::new();
        for p in &self.controllers {
            if !profiles.insert(p.name.as_str()) {
                return Err(Error::config(format!("duplicate profile `{}`", p.name)));
            }
            let ctx = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("profile `{}`: {m}", p.name)),
                other => other,
            };
            match &p.controller {
                ControllerKind::MsRa(cfg) => cfg.validate().map_err(ctx)?,
                ControllerKind::Hpa { config, slos } => {
                    config.validate().map_err(ctx)?;
                    for slo in slos {
                        slo.validate().map_err(ctx)?;
                    }
                    let target = self.service(&self.workload.target_service).expect("checked above");
                    let r = &target.requirements;
                    if !r.horizontal_enabled {
                        return Err(ctx(Error::config("hpa needs horizontal scaling on the target service")));
                    }
                    if config.min_replicas < r.min_replicas || config.max_replicas > r.max_replicas {
                        return Err(ctx(Error::config("hpa replica bounds exceed the service's scaling requirements")));
                    }
                }
            }
            for slo in p.slos() {
                if !names.contains(slo.service.as_str()) {
                    return Err(ctx_unknown(&p.name, &slo.service));
                }
            }
        }
        if self.repetitions < 1 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        if !(self.timeout > 0.0 && self.sample_interval > 0.0 && self.violation_interval > 0.0) {
            return Err(Error::config("timeout, sample_interval and violation_interval must be > 0"));
        }
        Ok(warnings)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }
}

fn ctx_unknown(profile: &str, service: &str) -> Error {
    Error::config(format!("profile `{profile}`: slo on unknown service `{service}`"))
}

pub const SLO_DEADLINE: f64 = 2.5;
pub const SLO_WINDOW: f64 = 60.0;

/// The two objectives of one letter-profile: X percent within the deadline,
/// failure rate below Y percent.
pub fn paper_slos(service: &str, x: f64, y: f64) -> Vec<SloSpec> {
    vec![
        SloSpec::latency("slo1", service, x, SLO_DEADLINE, SLO_WINDOW),
        SloSpec::failure_rate("slo2", service, y, SLO_WINDOW),
    ]
}

/// Calibrated front-door service: one 200 millicpu replica keeps up with the
/// 10- and 20-user phases and falls behind at 30 users.
pub fn paper_service() -> ServiceSpec {
    ServiceSpec {
        name: "front".to_string(),
        profile: ServerProfile {
            server_kind: ServerKind::Web,
            nominal_service_time: 0.13,
            reference_cpu: 200.0,
            startup_duration: 30.0,
            startup_cpu_surge: 2.0,
            memory_base: 256.0,
            memory_per_inflight: 2.0,
            stateful: false,
        },
        requirements: ScalingRequirements {
            horizontal_enabled: true,
            vertical_enabled: true,
            min_replicas: 1,
            max_replicas: 20,
            min_cpu: 100.0,
            max_cpu: 1000.0,
            min_mem: 128.0,
            max_mem: 2048.0,
        },
        initial_replicas: 1,
        initial_cpu: 200.0,
        initial_mem: 256.0,
    }
}

/// The stepped user profile with exponentially distributed think times, so
/// repetitions differ.
pub fn paper_workload() -> LoadProfile {
    LoadProfile { think_time: 0.5, think_distribution: ThinkTimeDistribution::Exponential, ..paper_profile() }
}

/// Letter, X, Y, vertical rate, strategy, HPA CPU threshold, stabilization window.
pub const PAPER_PROFILES: [(&str, f64, f64, f64, Strategy, f64, f64); 3] = [
    ("A", 95.0, 0.5, 20.0, Strategy::Conservative, 60.0, 90.0),
    ("B", 90.0, 1.0, 10.0, Strategy::Normal, 70.0, 90.0),
    ("C", 85.0, 2.0, 0.0, Strategy::BestEffort, 80.0, 45.0),
];

/// Six profiles, ten repetitions. Each autoscaler profile is scored against
/// the objectives of the controller profile with the same letter.
pub fn paper_config() -> ExperimentConfig {
    let service = paper_service();
    let mut controllers = Vec::new();
    for (letter, x, y, rate, strategy, _, _) in PAPER_PROFILES {
        controllers.push(ControllerProfile {
            name: format!("MS-RA-{letter}"),
            controller: ControllerKind::MsRa(MsRaConfig {
                // one full window of post-rollout data before the next decision
                cooldown: SLO_WINDOW,
                ..MsRaConfig::new(paper_slos(&service.name, x, y), strategy, rate)
            }),
        });
    }
    for (letter, x, y, _, _, threshold, window) in PAPER_PROFILES {
        let r = &service.requirements;
        controllers.push(ControllerProfile {
            name: format!("HPA-{letter}"),
            controller: ControllerKind::Hpa {
                config: HpaConfig::new(threshold, window, r.min_replicas, r.max_replicas),
                slos: paper_slos(&service.name, x, y),
            },
        });
    }
    ExperimentConfig {
        services: vec![service],
        workload: paper_workload(),
        controllers,
        repetitions: 10,
        seed: 42,
        timeout: DEFAULT_TIMEOUT,
        sample_interval: default_sample_interval(),
        violation_interval: default_violation_interval(),
    }
}

//! Deterministic discrete-event model of the managed cluster.

mod cluster;
mod log;

pub use cluster::{
    ArrivalSource, Cluster, DesiredState, Outcome, Phase, ReplicaId, ReplicaState, RequestId, RequestRecord,
    ResourceUsage, StaticArrivals, UsageTotals, DEFAULT_TIMEOUT,
};
pub use log::{EventKind, EventLog, LogEntry};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ServerKind {
    Web,
    Application,
    Database,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ServerProfile {
    pub server_kind: ServerKind,
    /// Seconds per request at `reference_cpu`.
    pub nominal_service_time: f64,
    /// Millicpu at which `nominal_service_time` holds.
    pub reference_cpu: f64,
    /// Seconds a new replica spends before it is ready.
    pub startup_duration: f64,
    /// CPU multiplier applied while a replica is starting.
    pub startup_cpu_surge: f64,
    /// Megabytes held by an idle replica.
    pub memory_base: f64,
    /// Megabytes per request resident on a replica.
    pub memory_per_inflight: f64,
    pub stateful: bool,
}

impl ServerProfile {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.nominal_service_time > 0.0, "nominal_service_time must be > 0"),
            (self.reference_cpu > 0.0, "reference_cpu must be > 0"),
            (self.startup_duration >= 0.0, "startup_duration must be >= 0"),
            (self.startup_cpu_surge >= 1.0, "startup_cpu_surge must be >= 1"),
            (self.memory_base >= 0.0, "memory_base must be >= 0"),
            (self.memory_per_inflight >= 0.0, "memory_per_inflight must be >= 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::config(*msg)),
            None => Ok(()),
        }
    }

    /// Service time on a replica holding `cpu_alloc` millicpu.
    pub fn effective_service_time(&self, cpu_alloc: f64) -> f64 {
        self.nominal_service_time * (self.reference_cpu / cpu_alloc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScalingRequirements {
    pub horizontal_enabled: bool,
    pub vertical_enabled: bool,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub min_cpu: f64,
    pub max_cpu: f64,
    pub min_mem: f64,
    pub max_mem: f64,
}

impl ScalingRequirements {
    pub fn validate(&self) -> Result<()> {
        if !self.horizontal_enabled && !self.vertical_enabled {
            return Err(Error::config("at least one of horizontal/vertical scaling must be enabled"));
        }
        if self.min_replicas < 1 {
            return Err(Error::config("min_replicas must be >= 1"));
        }
        if self.min_replicas > self.max_replicas {
            return Err(Error::config("min_replicas exceeds max_replicas"));
        }
        if !(self.min_cpu > 0.0 && self.min_cpu <= self.max_cpu) {
            return Err(Error::config("cpu bounds must satisfy 0 < min_cpu <= max_cpu"));
        }
        if !(self.min_mem >= 0.0 && self.min_mem <= self.max_mem) {
            return Err(Error::config("memory bounds must satisfy 0 <= min_mem <= max_mem"));
        }
        Ok(())
    }

    pub fn clamp_replicas(&self, n: i64) -> u32 {
        n.clamp(self.min_replicas as i64, self.max_replicas as i64) as u32
    }

    pub fn clamp_cpu(&self, cpu: f64) -> f64 {
        cpu.clamp(self.min_cpu, self.max_cpu)
    }

    pub fn clamp_mem(&self, mem: f64) -> f64 {
        mem.clamp(self.min_mem, self.max_mem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigWarning {
    pub service: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ServiceSpec {
    pub name: String,
    pub profile: ServerProfile,
    pub requirements: ScalingRequirements,
    pub initial_replicas: u32,
    /// Millicpu per replica at start.
    pub initial_cpu: f64,
    /// Megabytes per replica at start.
    pub initial_mem: f64,
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        let ctx = |e: Error| match e {
            Error::Config(msg) => Error::Config(format!("service `{}`: {msg}", self.name)),
            other => other,
        };
        self.profile.validate().map_err(ctx)?;
        self.requirements.validate().map_err(ctx)?;
        let r = &self.requirements;
        if self.initial_replicas < r.min_replicas || self.initial_replicas > r.max_replicas {
            return Err(ctx(Error::config("initial_replicas outside [min_replicas, max_replicas]")));
        }
        if self.initial_cpu < r.min_cpu || self.initial_cpu > r.max_cpu {
            return Err(ctx(Error::config("initial_cpu outside [min_cpu, max_cpu]")));
        }
        if self.initial_mem < r.min_mem || self.initial_mem > r.max_mem {
            return Err(ctx(Error::config("initial_mem outside [min_mem, max_mem]")));
        }
        let mut warnings = Vec::new();
        if self.profile.stateful && r.horizontal_enabled {
            warnings.push(ConfigWarning {
                service: self.name.clone(),
                message: "stateful service has horizontal scaling enabled; vertical scaling usually suits it better"
                    .to_string(),
            });
        }
        Ok(warnings)
    }
}

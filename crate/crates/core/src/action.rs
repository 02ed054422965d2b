//! Scaling actions and the decision log shared by both controllers.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{Cluster, DesiredState};
use crate::slo::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingAction {
    pub service: String,
    pub horizontal_delta: i32,
    /// Millicpu; `None` keeps the current allocation.
    pub new_cpu_per_replica: Option<f64>,
    /// Megabytes; `None` keeps the current allocation.
    pub new_mem_per_replica: Option<f64>,
    pub reason: String,
}

impl ScalingAction {
    pub fn noop(service: &str, reason: impl Into<String>) -> Self {
        Self {
            service: service.to_string(),
            horizontal_delta: 0,
            new_cpu_per_replica: None,
            new_mem_per_replica: None,
            reason: reason.into(),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.horizontal_delta == 0 && self.new_cpu_per_replica.is_none() && self.new_mem_per_replica.is_none()
    }

    /// The desired state this action leads to from `current`.
    pub fn target(&self, current: DesiredState) -> DesiredState {
        DesiredState {
            replicas: (current.replicas as i64 + self.horizontal_delta as i64).max(0) as u32,
            cpu: self.new_cpu_per_replica.unwrap_or(current.cpu),
            mem: self.new_mem_per_replica.unwrap_or(current.mem),
        }
    }

    /// Short form for the decision log, e.g. `replicas+1 cpu=240`.
    pub fn describe(&self) -> String {
        if self.is_noop() {
            return "noop".to_string();
        }
        let mut parts = Vec::new();
        if self.horizontal_delta != 0 {
            parts.push(format!("replicas{:+}", self.horizontal_delta));
        }
        if let Some(cpu) = self.new_cpu_per_replica {
            parts.push(format!("cpu={cpu}"));
        }
        if let Some(mem) = self.new_mem_per_replica {
            parts.push(format!("mem={mem}"));
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub verdict: Option<String>,
    pub strategy: Option<Strategy>,
    pub service: String,
    pub action: String,
    pub reason: String,
    pub min_error_budget: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    records: Vec<DecisionRecord>,
}

impl DecisionLog {
    pub fn push(&mut self, record: DecisionRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns `time,verdict,strategy,service,action,reason,min_error_budget`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,verdict,strategy,service,action,reason,min_error_budget")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.time,
                r.verdict.as_deref().unwrap_or(""),
                r.strategy.map(Strategy::as_str).unwrap_or(""),
                csv_field(&r.service),
                csv_field(&r.action),
                csv_field(&r.reason),
                r.min_error_budget.map(|b| b.to_string()).unwrap_or_default(),
            )?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Applies one action through a rolling update. Returns the outcome text for
/// the decision log; bound violations are reported, not raised.
pub fn apply_action(cluster: &mut Cluster, action: &ScalingAction) -> Result<String> {
    if action.is_noop() {
        return Ok("skipped".to_string());
    }
    let current = cluster
        .service(&action.service)
        .ok_or_else(|| Error::config(format!("unknown service `{}`", action.service)))?
        .desired();
    let t = action.target(current);
    match cluster.apply_rolling_update(&action.service, t.replicas, t.cpu, t.mem) {
        Ok(()) => Ok("applied".to_string()),
        Err(Error::BoundViolation { detail, .. }) => Ok(format!("rejected: {detail}")),
        Err(e) => Err(e),
    }
}

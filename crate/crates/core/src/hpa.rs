//! Baseline horizontal autoscaler driven by average CPU utilization.

use std::collections::VecDeque;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::action::{apply_action, DecisionLog, DecisionRecord, ScalingAction};
use crate::error::{Error, Result};
use crate::sim::Cluster;
use crate::telemetry::{Aggregation, MetricStore, MetricWindow, CPU_USAGE};

fn default_sync_period() -> f64 {
    15.0
}

fn default_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HpaConfig {
    /// Target average utilization, percent.
    pub cpu_threshold: f64,
    /// Seconds during which the highest recent recommendation is kept.
    pub stabilization_window: f64,
    #[serde(default = "default_sync_period")]
    pub sync_period: f64,
    pub min_replicas: u32,
    pub max_replicas: u32,
    /// Relative deviation from the threshold that is ignored.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl HpaConfig {
    pub fn new(cpu_threshold: f64, stabilization_window: f64, min_replicas: u32, max_replicas: u32) -> Self {
        Self {
            cpu_threshold,
            stabilization_window,
            sync_period: default_sync_period(),
            min_replicas,
            max_replicas,
            tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cpu_threshold > 0.0 && self.cpu_threshold <= 100.0) {
            return Err(Error::config("cpu_threshold must lie in (0, 100]"));
        }
        if !(self.stabilization_window > 0.0 && self.sync_period > 0.0) {
            return Err(Error::config("stabilization_window and sync_period must be > 0"));
        }
        if self.min_replicas < 1 || self.min_replicas > self.max_replicas {
            return Err(Error::config("hpa replica bounds must satisfy 1 <= min <= max"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance must be >= 0"));
        }
        Ok(())
    }
}

/// `ceil(current * utilization / threshold)` clamped to the configured
/// bounds; ratios within the tolerance band keep `current`.
pub fn desired_replicas(current: u32, avg_cpu_utilization: f64, cfg: &HpaConfig) -> u32 {
    let ratio = avg_cpu_utilization / cfg.cpu_threshold;
    let raw = if (ratio - 1.0).abs() <= cfg.tolerance {
        current as f64
    } else {
        (current as f64 * avg_cpu_utilization / cfg.cpu_threshold).ceil()
    };
    (raw as i64).clamp(cfg.min_replicas as i64, cfg.max_replicas as i64) as u32
}

/// The largest of `raw` and every recommendation still inside the window.
pub fn stabilized_desired(history: impl IntoIterator<Item = u32>, raw: u32) -> u32 {
    history.into_iter().fold(raw, u32::max)
}

#[derive(Debug, Clone)]
pub struct HpaController {
    cfg: HpaConfig,
    service: String,
    history: VecDeque<(f64, u32)>,
    log: DecisionLog,
    warnings: u64,
}

impl HpaController {
    pub fn new(cfg: HpaConfig, service: &str) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            service: service.to_string(),
            history: VecDeque::new(),
            log: DecisionLog::default(),
            warnings: 0,
        })
    }

    pub fn config(&self) -> &HpaConfig {
        &self.cfg
    }

    pub fn decisions(&self) -> &DecisionLog {
        &self.log
    }

    /// Ticks that found nothing to measure.
    pub fn warnings(&self) -> u64 {
        self.warnings
    }

    /// One sync: reads mean utilization of the last sync period, stabilizes
    /// the recommendation and applies a horizontal-only change.
    pub fn tick(&mut self, now: f64, cluster: &mut Cluster, store: &MetricStore) -> Result<ScalingAction> {
        let state = cluster
            .service(&self.service)
            .ok_or_else(|| Error::config(format!("unknown service `{}`", self.service)))?;
        let current = state.desired().replicas;
        let window = MetricWindow {
            metric: CPU_USAGE.to_string(),
            window_length: self.cfg.sync_period,
            aggregation: Aggregation::Mean,
        };
        let utilization = match store.aggregate(&self.service, &window, now)? {
            Some(u) if state.ready_count() > 0 => u,
            _ => {
                self.warnings += 1;
                let action = ScalingAction::noop(&self.service, "warning: no ready replicas to measure");
                self.record(now, &action, "skipped");
                return Ok(action);
            }
        };
        let raw = desired_replicas(current, utilization, &self.cfg);
        while self.history.front().is_some_and(|&(t, _)| t <= now - self.cfg.stabilization_window) {
            self.history.pop_front();
        }
        let target = stabilized_desired(self.history.iter().map(|&(_, r)| r), raw);
        self.history.push_back((now, raw));
        let reason = format!("utilization {utilization:.1}% raw {raw} stabilized {target}");
        let action = ScalingAction {
            service: self.service.clone(),
            horizontal_delta: target as i32 - current as i32,
            new_cpu_per_replica: None,
            new_mem_per_replica: None,
            reason,
        };
        let outcome = apply_action(cluster, &action)?;
        self.record(now, &action, &outcome);
        Ok(action)
    }

    fn record(&mut self, now: f64, action: &ScalingAction, outcome: &str) {
        self.log.push(DecisionRecord {
            time: now,
            verdict: None,
            strategy: None,
            service: self.service.clone(),
            action: if action.is_noop() { "none".to_string() } else { action.describe() },
            reason: format!("{}; {outcome}", action.reason),
            min_error_budget: None,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ScalingRequirements, ServerKind, ServerProfile, ServiceSpec, DEFAULT_TIMEOUT};
    use crate::telemetry::MetricSample;

    fn cfg(threshold: f64) -> HpaConfig {
        HpaConfig::new(threshold, 90.0, 1, 20)
    }

    #[test]
    fn formula_examples() {
        assert_eq!(desired_replicas(5, 90.0, &cfg(60.0)), 8);
        assert_eq!(desired_replicas(5, 60.0, &cfg(60.0)), 5);
        assert_eq!(desired_replicas(4, 30.0, &cfg(60.0)), 2);
    }

    #[test]
    fn tolerance_band_suppresses_changes() {
        assert_eq!(desired_replicas(4, 65.0, &cfg(60.0)), 4);
        assert_eq!(desired_replicas(4, 54.5, &cfg(60.0)), 4);
        assert_eq!(desired_replicas(4, 70.0, &cfg(60.0)), 5);
    }

    #[test]
    fn output_clamped() {
        assert_eq!(desired_replicas(20, 100.0, &cfg(60.0)), 20);
        assert_eq!(desired_replicas(1, 1.0, &cfg(60.0)), 1);
    }

    #[test]
    fn stabilization_examples() {
        assert_eq!(stabilized_desired([8, 8, 6], 2), 8);
        assert_eq!(stabilized_desired([8, 8, 6], 10), 10);
        assert_eq!(stabilized_desired([], 3), 3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(HpaConfig::new(0.0, 90.0, 1, 5).validate().is_err());
        assert!(HpaConfig::new(120.0, 90.0, 1, 5).validate().is_err());
        assert!(HpaConfig::new(60.0, 90.0, 3, 2).validate().is_err());
    }

    fn cluster(replicas: u32) -> Cluster {
        let spec = ServiceSpec {
            name: "front".into(),
            profile: ServerProfile {
                server_kind: ServerKind::Web,
                nominal_service_time: 0.1,
                reference_cpu: 200.0,
                startup_duration: 0.0,
                startup_cpu_surge: 1.0,
                memory_base: 256.0,
                memory_per_inflight: 2.0,
                stateful: false,
            },
            requirements: ScalingRequirements {
                horizontal_enabled: true,
                vertical_enabled: false,
                min_replicas: 1,
                max_replicas: 20,
                min_cpu: 100.0,
                max_cpu: 1000.0,
                min_mem: 128.0,
                max_mem: 2048.0,
            },
            initial_replicas: replicas,
            initial_cpu: 200.0,
            initial_mem: 256.0,
        };
        Cluster::new(&[spec], DEFAULT_TIMEOUT).unwrap()
    }

    fn store_with(util: &[(f64, f64)]) -> MetricStore {
        let mut store = MetricStore::new();
        for &(t, u) in util {
            store.record(MetricSample::new(t, "front", CPU_USAGE, u)).unwrap();
        }
        store
    }

    #[test]
    fn spike_scales_up_immediately() {
        let mut hpa = HpaController::new(cfg(60.0), "front").unwrap();
        let mut c = cluster(5);
        let a = hpa.tick(15.0, &mut c, &store_with(&[(10.0, 90.0)])).unwrap();
        assert_eq!(a.horizontal_delta, 3);
        assert_eq!(c.service("front").unwrap().desired().replicas, 8);
        assert!(a.new_cpu_per_replica.is_none() && a.new_mem_per_replica.is_none());
    }

    #[test]
    fn scale_down_waits_for_window() {
        let mut hpa = HpaController::new(cfg(60.0), "front").unwrap();
        let mut c = cluster(4);
        let busy = store_with(&[(10.0, 60.0)]);
        hpa.tick(15.0, &mut c, &busy).unwrap();
        let mut t = 30.0;
        let samples: Vec<(f64, f64)> = (1..40).map(|i| (15.0 * i as f64 + 10.0, 30.0)).collect();
        let idle = store_with(&samples);
        while t < 105.0 {
            let a = hpa.tick(t, &mut c, &idle).unwrap();
            assert_eq!(a.horizontal_delta, 0, "scaled down at {t}");
            t += 15.0;
        }
        let a = hpa.tick(105.0, &mut c, &idle).unwrap();
        assert_eq!(a.horizontal_delta, -2);
        assert_eq!(c.service("front").unwrap().desired().replicas, 2);
    }

    #[test]
    fn missing_data_is_noop_with_warning() {
        let mut hpa = HpaController::new(cfg(60.0), "front").unwrap();
        let mut c = cluster(2);
        let a = hpa.tick(15.0, &mut c, &MetricStore::new()).unwrap();
        assert!(a.is_noop());
        assert_eq!(hpa.warnings(), 1);
    }
}

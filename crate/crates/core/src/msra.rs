//! The SLO-driven controller: monitor, analyze, pick a strategy, plan, execute.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::action::{apply_action, DecisionLog, DecisionRecord, ScalingAction};
use crate::error::{Error, Result};
use crate::sim::Cluster;
use crate::slo::{compliance, SloSpec, SloStatus, Strategy};
use crate::telemetry::MetricStore;

fn default_evaluation_interval() -> f64 {
    15.0
}

fn default_cooldown() -> f64 {
    30.0
}

fn default_two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MsRaConfig {
    pub slos: Vec<SloSpec>,
    pub preferred_strategy: Strategy,
    /// Percent added to per-replica CPU on each scale-up.
    pub vertical_cpu_rate: f64,
    /// Percent added to per-replica memory on each scale-up.
    pub vertical_mem_rate: f64,
    #[serde(default = "default_evaluation_interval")]
    pub evaluation_interval: f64,
    #[serde(default = "default_cooldown")]
    pub cooldown: f64,
    /// Percentage points above target before a measurement counts as exceeded.
    #[serde(default = "default_two")]
    pub exceed_hysteresis: f64,
    /// Smallest error budget (percentage points) still considered wide.
    #[serde(default = "default_two")]
    pub tight_budget_threshold: f64,
}

impl MsRaConfig {
    pub fn new(slos: Vec<SloSpec>, preferred_strategy: Strategy, vertical_rate: f64) -> Self {
        Self {
            slos,
            preferred_strategy,
            vertical_cpu_rate: vertical_rate,
            vertical_mem_rate: vertical_rate,
            evaluation_interval: default_evaluation_interval(),
            cooldown: default_cooldown(),
            exceed_hysteresis: 2.0,
            tight_budget_threshold: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slos.is_empty() {
            return Err(Error::config("controller needs at least one slo"));
        }
        for slo in &self.slos {
            slo.validate()?;
        }
        if !(self.vertical_cpu_rate >= 0.0 && self.vertical_mem_rate >= 0.0) {
            return Err(Error::config("vertical rates must be >= 0"));
        }
        if !(self.evaluation_interval > 0.0 && self.cooldown >= 0.0) {
            return Err(Error::config("evaluation_interval must be > 0 and cooldown >= 0"));
        }
        if !(self.exceed_hysteresis >= 0.0 && self.tight_budget_threshold >= 0.0) {
            return Err(Error::config("exceed_hysteresis and tight_budget_threshold must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Met,
    Exceeded,
    Poor,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Met => "met",
            VerdictKind::Exceeded => "exceeded",
            VerdictKind::Poor => "poor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub value: VerdictKind,
    pub per_slo: Vec<SloStatus>,
}

fn exceeds(status: &SloStatus, hysteresis: f64) -> bool {
    status.measured_compliance >= status.target + hysteresis
}

pub fn analyze(statuses: &[SloStatus], cfg: &MsRaConfig) -> Result<Verdict> {
    if statuses.is_empty() {
        return Err(Error::config("no slo statuses to analyze"));
    }
    let value = if statuses.iter().any(|s| s.violated) {
        VerdictKind::Poor
    } else if statuses.iter().any(|s| exceeds(s, cfg.exceed_hysteresis)) {
        VerdictKind::Exceeded
    } else {
        VerdictKind::Met
    };
    Ok(Verdict { value, per_slo: statuses.to_vec() })
}

/// Smallest budget among objectives that had data.
pub fn min_error_budget(statuses: &[SloStatus]) -> Option<f64> {
    statuses.iter().filter(|s| !s.absent).map(|s| s.error_budget).min_by(f64::total_cmp)
}

pub fn select_strategy(statuses: &[SloStatus], cfg: &MsRaConfig) -> Strategy {
    if statuses.iter().any(|s| s.violated) {
        return Strategy::Conservative;
    }
    match min_error_budget(statuses) {
        Some(b) if b < cfg.tight_budget_threshold => Strategy::Conservative,
        _ => cfg.preferred_strategy,
    }
}

/// Whether the service's statuses call for more capacity under `strategy`.
fn wants_more(statuses: &[&SloStatus], strategy: Strategy) -> bool {
    match strategy {
        Strategy::BestEffort => statuses.iter().any(|s| s.violated),
        _ => statuses.iter().any(|s| s.violated || s.below_target()),
    }
}

fn scaled(current: f64, factor: f64, lo: f64, hi: f64, what: &str, notes: &mut Vec<String>) -> Option<f64> {
    let raw = current * factor;
    let v = raw.clamp(lo, hi);
    if v != raw {
        notes.push(format!("{what} clamped to {v}"));
    }
    (v != current).then_some(v)
}

fn scale_up(cluster: &Cluster, service: &str, cfg: &MsRaConfig, why: String) -> ScalingAction {
    let Some(state) = cluster.service(service) else {
        return ScalingAction::noop(service, format!("{why}; unknown service"));
    };
    let req = state.requirements();
    let d = state.desired();
    let mut notes = Vec::new();
    let mut action = ScalingAction::noop(service, String::new());
    if req.vertical_enabled {
        if cfg.vertical_cpu_rate > 0.0 {
            let f = 1.0 + cfg.vertical_cpu_rate / 100.0;
            action.new_cpu_per_replica = scaled(d.cpu, f, req.min_cpu, req.max_cpu, "cpu", &mut notes);
        }
        if cfg.vertical_mem_rate > 0.0 {
            let f = 1.0 + cfg.vertical_mem_rate / 100.0;
            action.new_mem_per_replica = scaled(d.mem, f, req.min_mem, req.max_mem, "mem", &mut notes);
        }
    }
    if req.horizontal_enabled {
        if d.replicas < req.max_replicas {
            action.horizontal_delta = 1;
        } else {
            notes.push(format!("replicas clamped to {}", req.max_replicas));
        }
    }
    action.reason = std::iter::once(why).chain(notes).collect::<Vec<_>>().join("; ");
    action
}

fn scale_down(cluster: &Cluster, service: &str, cfg: &MsRaConfig, why: String) -> ScalingAction {
    let Some(state) = cluster.service(service) else {
        return ScalingAction::noop(service, format!("{why}; unknown service"));
    };
    let req = state.requirements();
    let d = state.desired();
    let mut notes = Vec::new();
    let mut action = ScalingAction::noop(service, String::new());
    if req.horizontal_enabled && d.replicas > req.min_replicas {
        action.horizontal_delta = -1;
    } else if req.vertical_enabled {
        if cfg.vertical_cpu_rate > 0.0 {
            let f = 1.0 / (1.0 + cfg.vertical_cpu_rate / 100.0);
            action.new_cpu_per_replica = scaled(d.cpu, f, req.min_cpu, req.max_cpu, "cpu", &mut notes);
        }
        if cfg.vertical_mem_rate > 0.0 {
            let f = 1.0 / (1.0 + cfg.vertical_mem_rate / 100.0);
            action.new_mem_per_replica = scaled(d.mem, f, req.min_mem, req.max_mem, "mem", &mut notes);
        }
    }
    if action.is_noop() {
        notes.push("already at minimum".to_string());
    }
    action.reason = std::iter::once(why).chain(notes).collect::<Vec<_>>().join("; ");
    action
}

/// Actions for this evaluation. Services still cooling down since their last
/// executed action get an explicit no-op.
///
/// A service scales up when one of its objectives is violated or, except
/// under best effort, has slipped below the strategy target; it scales down
/// when the verdict is exceeded, one of its objectives clears the target by
/// the hysteresis and none is below target.
pub fn plan(
    verdict: &Verdict,
    strategy: Strategy,
    cluster: &Cluster,
    cfg: &MsRaConfig,
    last_action: &BTreeMap<String, f64>,
    now: f64,
) -> Vec<ScalingAction> {
    let mut by_service: BTreeMap<&str, Vec<&SloStatus>> = BTreeMap::new();
    for s in &verdict.per_slo {
        by_service.entry(s.service.as_str()).or_default().push(s);
    }
    let mut actions = Vec::new();
    for (service, statuses) in by_service {
        let up = wants_more(&statuses, strategy);
        let down = !up
            && verdict.value == VerdictKind::Exceeded
            && !statuses.iter().any(|s| s.below_target())
            && statuses.iter().any(|s| exceeds(s, cfg.exceed_hysteresis));
        if !up && !down {
            continue;
        }
        if let Some(&t) = last_action.get(service) {
            if now - t < cfg.cooldown {
                actions.push(ScalingAction::noop(service, format!("cooldown until {}", t + cfg.cooldown)));
                continue;
            }
        }
        let ids = |pred: &dyn Fn(&SloStatus) -> bool| {
            statuses.iter().filter(|s| pred(s)).map(|s| s.slo_id.as_str()).collect::<Vec<_>>().join("+")
        };
        let action = if up {
            let violated = ids(&|s| s.violated);
            let why = if violated.is_empty() {
                format!("{} below target", ids(&|s| s.below_target()))
            } else {
                format!("{violated} violated")
            };
            scale_up(cluster, service, cfg, why)
        } else {
            let why = format!("{} above target", ids(&|s| exceeds(s, cfg.exceed_hysteresis)));
            scale_down(cluster, service, cfg, why)
        };
        actions.push(action);
    }
    actions
}

/// What one evaluation saw and did.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub verdict: Verdict,
    pub strategy: Strategy,
    pub actions: Vec<ScalingAction>,
    /// Objectives whose window held no samples.
    pub absent: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MsRaController {
    cfg: MsRaConfig,
    last_action: BTreeMap<String, f64>,
    log: DecisionLog,
}

impl MsRaController {
    pub fn new(cfg: MsRaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, last_action: BTreeMap::new(), log: DecisionLog::default() })
    }

    pub fn config(&self) -> &MsRaConfig {
        &self.cfg
    }

    pub fn decisions(&self) -> &DecisionLog {
        &self.log
    }

    /// Monitor step: one status per objective at `now`. Empty windows yield
    /// stand-in statuses that read as met.
    pub fn monitor(&self, store: &MetricStore, now: f64, strategy: Strategy) -> Result<Vec<SloStatus>> {
        measure(&self.cfg.slos, store, now, strategy)
    }

    /// Applies planned actions and records them; bound violations are logged
    /// and the loop carries on.
    pub fn execute(
        &mut self,
        now: f64,
        verdict: &Verdict,
        strategy: Strategy,
        actions: &[ScalingAction],
        cluster: &mut Cluster,
    ) -> Result<()> {
        let budget = min_error_budget(&verdict.per_slo);
        let record = |service: &str, action: String, reason: String| DecisionRecord {
            time: now,
            verdict: Some(verdict.value.as_str().to_string()),
            strategy: Some(strategy),
            service: service.to_string(),
            action,
            reason,
            min_error_budget: budget,
        };
        if actions.is_empty() {
            let r = record("", "none".to_string(), String::new());
            self.log.push(r);
            return Ok(());
        }
        for a in actions {
            let outcome = apply_action(cluster, a)?;
            if outcome == "applied" {
                self.last_action.insert(a.service.clone(), now);
            }
            let r = record(&a.service, a.describe(), format!("{}; {outcome}", a.reason));
            self.log.push(r);
        }
        Ok(())
    }

    pub fn tick(&mut self, now: f64, cluster: &mut Cluster, store: &MetricStore) -> Result<TickReport> {
        // cooldown runs from the end of a rollout, not its start
        for slo in &self.cfg.slos {
            if cluster.service(&slo.service).is_some_and(|s| !s.is_converged()) {
                self.last_action.insert(slo.service.clone(), now);
            }
        }
        let mut statuses = self.monitor(store, now, self.cfg.preferred_strategy)?;
        let strategy = select_strategy(&statuses, &self.cfg);
        for s in &mut statuses {
            s.retarget(strategy);
        }
        let absent = statuses.iter().filter(|s| s.absent).map(|s| s.slo_id.clone()).collect();
        let verdict = analyze(&statuses, &self.cfg)?;
        let actions = plan(&verdict, strategy, cluster, &self.cfg, &self.last_action, now);
        self.execute(now, &verdict, strategy, &actions, cluster)?;
        Ok(TickReport { verdict, strategy, actions, absent })
    }
}

/// Statuses of `slos` from the telemetry windows ending at `now`.
pub fn measure(slos: &[SloSpec], store: &MetricStore, now: f64, strategy: Strategy) -> Result<Vec<SloStatus>> {
    slos.iter()
        .map(|slo| match store.aggregate(&slo.service, &slo.metric_window(), now)? {
            Some(v) => Ok(SloStatus::new(slo, compliance(slo, v)?, strategy)),
            None => Ok(SloStatus::absent(slo, strategy)),
        })
        .collect()
}

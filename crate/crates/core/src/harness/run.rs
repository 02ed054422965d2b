use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{ControllerKind, ControllerProfile, ControllerType, ExperimentConfig};
use crate::action::DecisionLog;
use crate::error::Result;
use crate::hpa::HpaController;
use crate::msra::{measure, MsRaController};
use crate::sim::{Cluster, Outcome, RequestRecord, UsageTotals};
use crate::slo::Strategy;
use crate::telemetry::{MetricSample, MetricStore, CPU_USAGE, FAILURE, MEM_USAGE, RESPONSE_TIME};
use crate::workload::ClosedLoopGenerator;

/// One resource sample of one service.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub time: f64,
    pub service: String,
    pub ready_replicas: usize,
    pub replicas: usize,
    pub desired_replicas: u32,
    pub cpu_per_replica: f64,
    pub total_cpu: f64,
    pub total_mem: f64,
    /// Percent busy over the last sample interval; `None` without ready replicas.
    pub utilization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub profile: String,
    pub controller: ControllerType,
    pub repetition: u32,
    pub seed: u64,
    pub duration: f64,
    /// Time-averaged ready replicas, summed over services.
    pub average_replicas: f64,
    /// Time-averaged millicpu held, start-up surge included.
    pub cpu: f64,
    /// Time-averaged megabytes held.
    pub mem: f64,
    pub slo1_violations: u64,
    pub slo2_violations: u64,
    /// Violating checks per objective id.
    pub violations: BTreeMap<String, u64>,
    pub requests: u64,
    pub failed: u64,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
    #[serde(skip)]
    pub decisions: DecisionLog,
    #[serde(skip)]
    pub telemetry: Option<MetricStore>,
}

enum Controller {
    MsRa(MsRaController, f64),
    Hpa(HpaController, f64),
}

impl Controller {
    fn build(profile: &ControllerProfile, target_service: &str) -> Result<Self> {
        Ok(match &profile.controller {
            ControllerKind::MsRa(cfg) => Controller::MsRa(MsRaController::new(cfg.clone())?, cfg.evaluation_interval),
            ControllerKind::Hpa { config, .. } => {
                Controller::Hpa(HpaController::new(config.clone(), target_service)?, config.sync_period)
            }
        })
    }

    fn interval(&self) -> f64 {
        match self {
            Controller::MsRa(_, i) | Controller::Hpa(_, i) => *i,
        }
    }

    fn tick(&mut self, now: f64, cluster: &mut Cluster, store: &MetricStore) -> Result<()> {
        match self {
            Controller::MsRa(c, _) => c.tick(now, cluster, store).map(drop),
            Controller::Hpa(c, _) => c.tick(now, cluster, store).map(drop),
        }
    }

    fn into_log(self) -> DecisionLog {
        match self {
            Controller::MsRa(c, _) => c.decisions().clone(),
            Controller::Hpa(c, _) => c.decisions().clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Due {
    sample: bool,
    check: bool,
    control: bool,
}

/// Every instant at which something besides the simulator acts.
fn schedule(duration: f64, sample: f64, check: f64, control: f64) -> Vec<(f64, Due)> {
    let mut points: Vec<(f64, Due)> = Vec::new();
    let mut add = |interval: f64, set: fn(&mut Due)| {
        let mut k = 1u64;
        loop {
            let t = k as f64 * interval;
            if t > duration {
                break;
            }
            let mut due = Due::default();
            set(&mut due);
            points.push((t, due));
            k += 1;
        }
    };
    add(sample, |d| d.sample = true);
    add(check, |d| d.check = true);
    add(control, |d| d.control = true);
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, Due)> = Vec::with_capacity(points.len());
    for (t, d) in points {
        match merged.last_mut() {
            Some((last, m)) if *last == t => {
                m.sample |= d.sample;
                m.check |= d.check;
                m.control |= d.control;
            }
            _ => merged.push((t, d)),
        }
    }
    merged
}

fn ingest(store: &mut MetricStore, records: &[RequestRecord]) -> Result<()> {
    for r in records {
        let t = r.completion_time;
        store.record(MetricSample::new(t, &r.service, RESPONSE_TIME, r.response_time()))?;
        let failed = if r.outcome == Outcome::FailedTimeout { 1.0 } else { 0.0 };
        store.record(MetricSample::new(t, &r.service, FAILURE, failed))?;
    }
    Ok(())
}

/// Simulates one profile once with `seed`.
pub fn run_one(
    cfg: &ExperimentConfig,
    profile: &ControllerProfile,
    repetition: u32,
    seed: u64,
    keep_telemetry: bool,
) -> Result<RunReport> {
    let mut cluster = Cluster::new(&cfg.services, cfg.timeout)?;
    let mut source = ClosedLoopGenerator::new(cfg.workload.clone(), seed)?;
    let mut store = MetricStore::new();
    let mut controller = Controller::build(profile, &cfg.workload.target_service)?;
    let duration = cfg.workload.duration();
    let slos = profile.slos();
    let mut violations: BTreeMap<String, u64> = slos.iter().map(|s| (s.id.clone(), 0)).collect();
    let mut series = Vec::new();
    let mut last_totals: BTreeMap<String, UsageTotals> = BTreeMap::new();
    let (mut requests, mut failed) = (0u64, 0u64);

    for (now, due) in schedule(duration, cfg.sample_interval, cfg.violation_interval, controller.interval()) {
        let records = cluster.advance_with(&mut source, now)?;
        requests += records.len() as u64;
        failed += records.iter().filter(|r| r.outcome == Outcome::FailedTimeout).count() as u64;
        ingest(&mut store, &records)?;
        if due.sample {
            let usage = cluster.resource_usage();
            let names: Vec<String> = cluster.service_names().map(str::to_string).collect();
            for name in names {
                let s = cluster.service(&name).expect("listed");
                let totals = s.totals();
                let prev = last_totals.insert(name.clone(), totals).unwrap_or_default();
                let ready_cpu = totals.ready_cpu_seconds - prev.ready_cpu_seconds;
                let utilization =
                    (ready_cpu > 0.0).then(|| 100.0 * (totals.busy_cpu_seconds - prev.busy_cpu_seconds) / ready_cpu);
                if let Some(u) = utilization {
                    store.record(MetricSample::new(now, &name, CPU_USAGE, u))?;
                }
                let u = usage[&name];
                store.record(MetricSample::new(now, &name, MEM_USAGE, u.total_mem))?;
                series.push(SeriesRow {
                    time: now,
                    service: name.clone(),
                    ready_replicas: u.ready_replicas,
                    replicas: s.replicas().len(),
                    desired_replicas: s.desired().replicas,
                    cpu_per_replica: s.desired().cpu,
                    total_cpu: u.total_cpu,
                    total_mem: u.total_mem,
                    utilization,
                });
            }
        }
        if due.check {
            for status in measure(slos, &store, now, Strategy::BestEffort)? {
                if status.violated && !status.absent {
                    *violations.get_mut(&status.slo_id).expect("seeded") += 1;
                }
            }
        }
        if due.control {
            controller.tick(now, &mut cluster, &store)?;
        }
    }
    cluster.advance_with(&mut source, duration)?;

    let (mut replica_s, mut cpu_s, mut mem_s) = (0.0, 0.0, 0.0);
    for name in cluster.service_names() {
        let t = cluster.service(name).expect("listed").totals();
        replica_s += t.ready_replica_seconds;
        cpu_s += t.cpu_seconds;
        mem_s += t.mem_seconds;
    }
    let count = |i: usize| slos.get(i).map_or(0, |s| violations[&s.id]);
    Ok(RunReport {
        profile: profile.name.clone(),
        controller: profile.controller_type(),
        repetition,
        seed,
        duration,
        average_replicas: replica_s / duration,
        cpu: cpu_s / duration,
        mem: mem_s / duration,
        slo1_violations: count(0),
        slo2_violations: count(1),
        violations,
        requests,
        failed,
        series,
        decisions: controller.into_log(),
        telemetry: keep_telemetry.then_some(store),
    })
}

/// Every profile times every repetition; repetition `r` runs with seed
/// `cfg.seed + r`. Runs execute in parallel and come back in profile, then
/// repetition order.
pub fn run_experiment(cfg: &ExperimentConfig, keep_telemetry: bool) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let jobs: Vec<(&ControllerProfile, u32)> =
        cfg.controllers.iter().flat_map(|p| (0..cfg.repetitions).map(move |r| (p, r))).collect();
    jobs.into_par_iter().map(|(p, r)| run_one(cfg, p, r, cfg.seed.wrapping_add(r as u64), keep_telemetry)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_merges_coincident_points() {
        let s = schedule(30.0, 5.0, 15.0, 15.0);
        let times: Vec<f64> = s.iter().map(|p| p.0).collect();
        assert_eq!(times, [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert!(s[2].1.sample && s[2].1.check && s[2].1.control);
        assert!(s[0].1.sample && !s[0].1.check);
    }
}

#![allow(dead_code)]

use std::collections::BTreeSet;

use msra::sim::{
    Cluster, EventKind, Phase, ScalingRequirements, ServerKind, ServerProfile, ServiceSpec, DEFAULT_TIMEOUT,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn spec(replicas: u32, service_time: f64, startup: f64) -> ServiceSpec {
    ServiceSpec {
        name: "front".into(),
        profile: ServerProfile {
            server_kind: ServerKind::Application,
            nominal_service_time: service_time,
            reference_cpu: 200.0,
            startup_duration: startup,
            startup_cpu_surge: 1.5,
            memory_base: 100.0,
            memory_per_inflight: 10.0,
            stateful: false,
        },
        requirements: ScalingRequirements {
            horizontal_enabled: true,
            vertical_enabled: true,
            min_replicas: 1,
            max_replicas: 10,
            min_cpu: 100.0,
            max_cpu: 1000.0,
            min_mem: 128.0,
            max_mem: 1024.0,
        },
        initial_replicas: replicas,
        initial_cpu: 200.0,
        initial_mem: 256.0,
    }
}

pub fn at(times: impl IntoIterator<Item = f64>) -> Vec<(f64, String)> {
    times.into_iter().map(|t| (t, "front".to_string())).collect()
}

#[derive(Debug, Clone)]
pub struct Update {
    pub time: f64,
    pub replicas: u32,
    pub cpu: f64,
}

#[derive(Debug, Clone)]
pub struct RolloutCase {
    pub initial: u32,
    pub startup: f64,
    pub schedule: Vec<Update>,
    pub arrival_ticks: Vec<u32>,
}

pub fn rollout_cases() -> impl Strategy<Value = RolloutCase> {
    let updates =
        prop::collection::vec(
            (0u32..400, 1u32..8, prop::sample::select(vec![100.0, 200.0, 250.0, 400.0]))
                .prop_map(|(t, n, cpu)| Update { time: t as f64 * 0.25, replicas: n, cpu }),
            1..6,
        )
        .prop_map(|mut v| {
            v.sort_by(|a, b| a.time.total_cmp(&b.time));
            v
        });
    (
        1u32..5,
        prop_oneof![Just(0.0), (1u32..80).prop_map(|s| s as f64 * 0.25)],
        updates,
        prop::collection::vec(0u32..1200, 0..80),
    )
        .prop_map(|(initial, startup, schedule, mut arrival_ticks)| {
            arrival_ticks.sort();
            RolloutCase { initial, startup, schedule, arrival_ticks }
        })
}

/// Runs the schedule and checks, from the event log, that ready capacity
/// never drops below `min(ready before the update, target)`, that every
/// request resolves once and that the service converges on the last target.
pub fn check_rollout(case: &RolloutCase) -> Result<(), TestCaseError> {
    let arrivals = at(case.arrival_ticks.iter().map(|&t| t as f64 * 0.1));
    let mut c = Cluster::new(&[spec(case.initial, 0.4, case.startup)], DEFAULT_TIMEOUT).unwrap().with_event_log();

    // (log index at which the update was issued, floor for what follows)
    let mut floors: Vec<(usize, usize)> = Vec::new();
    let mut records = Vec::new();
    let mut next = 0;
    for u in &case.schedule {
        let end = arrivals[next..].partition_point(|a| a.0 <= u.time) + next;
        records.extend(c.advance(&arrivals[next..end], u.time).unwrap());
        next = end;
        let before = c.service("front").unwrap().ready_count();
        let idx = c.event_log().unwrap().len();
        c.apply_rolling_update("front", u.replicas, u.cpu, 256.0).unwrap();
        floors.push((idx, before.min(u.replicas as usize)));
    }
    records.extend(c.advance(&arrivals[next..], 130.0).unwrap());
    let horizon = 130.0 + (case.startup + 10.0) * 22.0;
    records.extend(c.advance(&[], horizon).unwrap());

    let mut ready = case.initial as usize;
    let mut floor = 0;
    let mut f = floors.iter().peekable();
    for (i, e) in c.event_log().unwrap().entries().iter().enumerate() {
        while let Some(&&(idx, fl)) = f.peek() {
            if idx > i {
                break;
            }
            floor = fl;
            f.next();
        }
        match e.kind {
            EventKind::ReplicaReady => ready += 1,
            EventKind::ReplicaTerminating if e.detail == "from=ready" => {
                prop_assert!(ready > floor, "ready {} would drop below {} at {}", ready, floor, e.time);
                ready -= 1;
            }
            _ => {}
        }
    }
    let s = c.service("front").unwrap();
    prop_assert_eq!(ready, s.ready_count());

    prop_assert_eq!(records.len(), arrivals.len());
    let ids: BTreeSet<u64> = records.iter().map(|r| r.request_id).collect();
    prop_assert_eq!(ids.len(), records.len());
    prop_assert_eq!(c.active_requests(), 0);

    let last = case.schedule.last().unwrap();
    prop_assert!(s.is_converged());
    prop_assert_eq!(s.replicas().len(), last.replicas as usize);
    prop_assert!(s.replicas().iter().all(|r| r.phase == Phase::Ready && r.cpu_alloc == last.cpu));
    Ok(())
}

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use serde::Serialize;

use super::log::{EventKind, EventLog, LogEntry};
use super::{ScalingRequirements, ServerProfile, ServiceSpec};
use crate::error::{Error, Result};

pub type ReplicaId = u64;
pub type RequestId = u64;

/// Seconds after arrival at which an unfinished request fails.
pub const DEFAULT_TIMEOUT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Starting,
    Ready,
    Terminating,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Starting => "starting",
            Phase::Ready => "ready",
            Phase::Terminating => "terminating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct InService {
    request: RequestId,
    started: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub replica_id: ReplicaId,
    pub cpu_alloc: f64,
    pub mem_alloc: f64,
    pub phase: Phase,
    pub started_at: f64,
    serving: Option<InService>,
    queue: VecDeque<RequestId>,
}

impl ReplicaState {
    pub fn in_flight(&self) -> usize {
        usize::from(self.serving.is_some())
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Requests held by the replica, in service or waiting.
    pub fn backlog(&self) -> usize {
        self.in_flight() + self.queue.len()
    }

    fn is_live(&self) -> bool {
        self.phase != Phase::Terminating
    }

    fn is_drained(&self) -> bool {
        self.serving.is_none() && self.queue.is_empty()
    }

    fn matches(&self, cpu: f64, mem: f64) -> bool {
        self.cpu_alloc == cpu && self.mem_alloc == mem
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    FailedTimeout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestRecord {
    pub request_id: RequestId,
    pub service: String,
    pub arrival_time: f64,
    pub start_service_time: Option<f64>,
    /// For timeouts this is `arrival_time + timeout`.
    pub completion_time: f64,
    pub outcome: Outcome,
}

impl RequestRecord {
    pub fn response_time(&self) -> f64 {
        self.completion_time - self.arrival_time
    }
}

/// Replica count and per-replica allocation a service converges to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesiredState {
    pub replicas: u32,
    pub cpu: f64,
    pub mem: f64,
}

/// Instantaneous resource footprint of one service.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ResourceUsage {
    pub total_cpu: f64,
    pub total_mem: f64,
    pub ready_replicas: usize,
}

/// Time integrals of a service's resource footprint since the cluster was built.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UsageTotals {
    pub ready_replica_seconds: f64,
    pub cpu_seconds: f64,
    pub mem_seconds: f64,
    /// Millicpu-seconds allocated to ready replicas.
    pub ready_cpu_seconds: f64,
    /// Millicpu-seconds during which ready replicas were serving.
    pub busy_cpu_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ServiceState {
    name: String,
    profile: ServerProfile,
    requirements: ScalingRequirements,
    replicas: Vec<ReplicaState>,
    pending: VecDeque<RequestId>,
    desired: DesiredState,
    totals: UsageTotals,
}

impl ServiceState {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn profile(&self) -> &ServerProfile {
        &self.profile
    }

    pub fn requirements(&self) -> &ScalingRequirements {
        &self.requirements
    }

    /// Replicas ordered by id.
    pub fn replicas(&self) -> &[ReplicaState] {
        &self.replicas
    }

    pub fn desired(&self) -> DesiredState {
        self.desired
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn totals(&self) -> UsageTotals {
        self.totals
    }

    pub fn ready_count(&self) -> usize {
        self.replicas.iter().filter(|r| r.phase == Phase::Ready).count()
    }

    /// Every replica is ready at the desired allocation and the count matches.
    pub fn is_converged(&self) -> bool {
        let d = self.desired;
        self.replicas.len() == d.replicas as usize
            && self.replicas.iter().all(|r| r.phase == Phase::Ready && r.matches(d.cpu, d.mem))
    }

    pub fn usage(&self) -> ResourceUsage {
        let p = &self.profile;
        let mut usage = ResourceUsage::default();
        for r in &self.replicas {
            let surge = if r.phase == Phase::Starting { p.startup_cpu_surge } else { 1.0 };
            usage.total_cpu += r.cpu_alloc * surge;
            usage.total_mem += p.memory_base + p.memory_per_inflight * r.backlog() as f64;
            if r.phase == Phase::Ready {
                usage.ready_replicas += 1;
            }
        }
        usage
    }

    fn replica_index(&self, id: ReplicaId) -> Option<usize> {
        self.replicas.binary_search_by_key(&id, |r| r.replica_id).ok()
    }

    fn integrate(&mut self, dt: f64) {
        let usage = self.usage();
        let (ready_cpu, busy_cpu) =
            self.replicas.iter().filter(|r| r.phase == Phase::Ready).fold((0.0, 0.0), |(alloc, busy), r| {
                let serving = if r.serving.is_some() { r.cpu_alloc } else { 0.0 };
                (alloc + r.cpu_alloc, busy + serving)
            });
        let t = &mut self.totals;
        t.ready_replica_seconds += usage.ready_replicas as f64 * dt;
        t.cpu_seconds += usage.total_cpu * dt;
        t.mem_seconds += usage.total_mem * dt;
        t.ready_cpu_seconds += ready_cpu * dt;
        t.busy_cpu_seconds += busy_cpu * dt;
    }
}

/// Supplies arrivals to [`Cluster::advance_with`] and observes finished requests.
pub trait ArrivalSource {
    /// Time of the next arrival, if any.
    fn peek_time(&mut self) -> Option<f64>;
    /// Consumes the next arrival, which the cluster names `request_id`;
    /// returns the target service.
    fn take(&mut self, request_id: RequestId) -> String;
    /// Called as soon as a request completes or fails.
    fn on_record(&mut self, _record: &RequestRecord) {}
}

/// A fixed, time-ordered arrival list.
pub struct StaticArrivals<'a> {
    arrivals: &'a [(f64, String)],
    pos: usize,
}

impl<'a> StaticArrivals<'a> {
    pub fn new(arrivals: &'a [(f64, String)]) -> Self {
        Self { arrivals, pos: 0 }
    }
}

impl ArrivalSource for StaticArrivals<'_> {
    fn peek_time(&mut self) -> Option<f64> {
        self.arrivals.get(self.pos).map(|a| a.0)
    }

    fn take(&mut self, _request_id: RequestId) -> String {
        let service = self.arrivals[self.pos].1.clone();
        self.pos += 1;
        service
    }
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    ReplicaReady { svc: usize, replica: ReplicaId },
    ServiceComplete { svc: usize, replica: ReplicaId, request: RequestId },
    Timeout { request: RequestId },
}

impl Pending {
    // Same-time ordering: readiness, then completions, then timeouts, then arrivals.
    fn rank(&self) -> u8 {
        match self {
            Pending::ReplicaReady { .. } => 0,
            Pending::ServiceComplete { .. } => 1,
            Pending::Timeout { .. } => 2,
        }
    }

    fn id(&self) -> u64 {
        match *self {
            Pending::ReplicaReady { replica, .. } => replica,
            Pending::ServiceComplete { request, .. } | Pending::Timeout { request } => request,
        }
    }
}

#[derive(Debug, Clone)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Pending,
}

impl Scheduled {
    fn key(&self) -> (f64, u8, u64, u64) {
        (self.time, self.event.rank(), self.event.id(), self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)).then(b.3.cmp(&a.3))
    }
}

#[derive(Debug, Clone, Copy)]
enum Location {
    Pending,
    Queued(ReplicaId),
    Serving(ReplicaId),
}

#[derive(Debug, Clone)]
struct ActiveRequest {
    svc: usize,
    arrival: f64,
    start: Option<f64>,
    location: Location,
}

/// The simulated cluster. Single-threaded; a value that may move between
/// threads but is never shared mutably.
#[derive(Debug, Clone)]
pub struct Cluster {
    now: f64,
    timeout: f64,
    services: Vec<ServiceState>,
    by_name: BTreeMap<String, usize>,
    replica_owner: HashMap<ReplicaId, usize>,
    requests: HashMap<RequestId, ActiveRequest>,
    queue: BinaryHeap<Scheduled>,
    next_replica: ReplicaId,
    next_request: RequestId,
    seq: u64,
    log: Option<EventLog>,
    finished: Vec<RequestRecord>,
}

impl Cluster {
    /// Builds a cluster at time 0 with each service's initial replicas ready.
    pub fn new(specs: &[ServiceSpec], timeout: f64) -> Result<Self> {
        if !(timeout > 0.0) {
            return Err(Error::config("timeout must be positive"));
        }
        let mut sorted: Vec<&ServiceSpec> = specs.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut cluster = Cluster {
            now: 0.0,
            timeout,
            services: Vec::new(),
            by_name: BTreeMap::new(),
            replica_owner: HashMap::new(),
            requests: HashMap::new(),
            queue: BinaryHeap::new(),
            next_replica: 1,
            next_request: 1,
            seq: 0,
            log: None,
            finished: Vec::new(),
        };
        for spec in sorted {
            spec.validate()?;
            if cluster.by_name.contains_key(&spec.name) {
                return Err(Error::config(format!("duplicate service `{}`", spec.name)));
            }
            let svc = cluster.services.len();
            let mut state = ServiceState {
                name: spec.name.clone(),
                profile: spec.profile.clone(),
                requirements: spec.requirements.clone(),
                replicas: Vec::new(),
                pending: VecDeque::new(),
                desired: DesiredState { replicas: spec.initial_replicas, cpu: spec.initial_cpu, mem: spec.initial_mem },
                totals: UsageTotals::default(),
            };
            for _ in 0..spec.initial_replicas {
                let id = cluster.next_replica;
                cluster.next_replica += 1;
                cluster.replica_owner.insert(id, svc);
                state.replicas.push(ReplicaState {
                    replica_id: id,
                    cpu_alloc: spec.initial_cpu,
                    mem_alloc: spec.initial_mem,
                    phase: Phase::Ready,
                    started_at: -spec.profile.startup_duration,
                    serving: None,
                    queue: VecDeque::new(),
                });
            }
            cluster.by_name.insert(spec.name.clone(), svc);
            cluster.services.push(state);
        }
        Ok(cluster)
    }

    /// Turns on the event log.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(EventLog::default());
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn timeout(&self) -> f64 {
        self.timeout
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    pub fn service_names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceState> {
        self.by_name.get(name).map(|&i| &self.services[i])
    }

    fn service_index(&self, name: &str) -> Result<usize> {
        self.by_name.get(name).copied().ok_or_else(|| Error::config(format!("unknown service `{name}`")))
    }

    /// Requests that have arrived and not yet finished.
    pub fn active_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn resource_usage(&self) -> BTreeMap<String, ResourceUsage> {
        self.services.iter().map(|s| (s.name.clone(), s.usage())).collect()
    }

    /// Runs the simulation to `until` with a fixed arrival list, returning
    /// every request that finished on the way.
    pub fn advance(&mut self, arrivals: &[(f64, String)], until: f64) -> Result<Vec<RequestRecord>> {
        let mut prev = self.now;
        for (t, service) in arrivals {
            self.service_index(service)?;
            if !t.is_finite() || *t < prev {
                return Err(Error::input(format!("arrival at {t} is out of order or before now")));
            }
            if *t > until {
                return Err(Error::input(format!("arrival at {t} is after the horizon {until}")));
            }
            prev = *t;
        }
        self.advance_with(&mut StaticArrivals::new(arrivals), until)
    }

    /// Runs the simulation to `until`, pulling arrivals from `source` and
    /// reporting finished requests back to it as they happen.
    pub fn advance_with<S: ArrivalSource + ?Sized>(
        &mut self,
        source: &mut S,
        until: f64,
    ) -> Result<Vec<RequestRecord>> {
        if !(until >= self.now) {
            return Err(Error::input(format!("horizon {until} is before now {}", self.now)));
        }
        let mut out = Vec::new();
        loop {
            let internal = self.queue.peek().map(|e| e.time);
            let external = source.peek_time();
            let (time, is_internal) = match (internal, external) {
                (Some(ti), Some(te)) if ti <= te => (ti, true),
                (_, Some(te)) => (te, false),
                (Some(ti), None) => (ti, true),
                (None, None) => break,
            };
            if time > until {
                break;
            }
            if time < self.now {
                return Err(Error::input(format!("arrival at {time} is before now {}", self.now)));
            }
            self.integrate_to(time);
            if is_internal {
                let event = self.queue.pop().expect("peeked").event;
                self.handle(event);
            } else {
                let id = self.next_request;
                self.next_request += 1;
                let service = source.take(id);
                let svc = self.service_index(&service)?;
                self.arrive(svc, id);
            }
            for record in self.finished.drain(..) {
                source.on_record(&record);
                out.push(record);
            }
        }
        self.integrate_to(until);
        Ok(out)
    }

    fn integrate_to(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            for s in &mut self.services {
                s.integrate(dt);
            }
        }
        self.now = t;
    }

    fn schedule(&mut self, time: f64, event: Pending) {
        self.seq += 1;
        self.queue.push(Scheduled { time, seq: self.seq, event });
    }

    fn log(
        &mut self,
        kind: EventKind,
        svc: usize,
        replica: Option<ReplicaId>,
        request: Option<RequestId>,
        detail: String,
    ) {
        if let Some(log) = &mut self.log {
            log.push(LogEntry {
                time: self.now,
                kind,
                service: self.services[svc].name.clone(),
                replica_id: replica,
                request_id: request,
                detail,
            });
        }
    }

    fn handle(&mut self, event: Pending) {
        match event {
            Pending::ReplicaReady { svc, replica } => self.on_ready(svc, replica),
            Pending::ServiceComplete { svc, replica, request } => self.on_complete(svc, replica, request),
            Pending::Timeout { request } => self.on_timeout(request),
        }
    }

    fn arrive(&mut self, svc: usize, request: RequestId) {
        self.requests
            .insert(request, ActiveRequest { svc, arrival: self.now, start: None, location: Location::Pending });
        self.schedule(self.now + self.timeout, Pending::Timeout { request });
        self.log(EventKind::Arrival, svc, None, Some(request), String::new());
        self.dispatch(svc, request);
    }

    /// Join-shortest-backlog over ready replicas, lowest id on ties.
    fn dispatch(&mut self, svc: usize, request: RequestId) {
        let target = self.services[svc]
            .replicas
            .iter()
            .enumerate()
            .filter(|(_, r)| r.phase == Phase::Ready)
            .min_by_key(|(_, r)| (r.backlog(), r.replica_id))
            .map(|(i, _)| i);
        let Some(idx) = target else {
            self.services[svc].pending.push_back(request);
            return;
        };
        let replica = &mut self.services[svc].replicas[idx];
        replica.queue.push_back(request);
        let id = replica.replica_id;
        self.requests.get_mut(&request).expect("active").location = Location::Queued(id);
        self.try_start(svc, idx);
    }

    fn try_start(&mut self, svc: usize, idx: usize) {
        let now = self.now;
        let service = &mut self.services[svc];
        let replica = &mut service.replicas[idx];
        if replica.serving.is_some() {
            return;
        }
        let Some(request) = replica.queue.pop_front() else {
            return;
        };
        replica.serving = Some(InService { request, started: now });
        let rid = replica.replica_id;
        let done = now + service.profile.effective_service_time(replica.cpu_alloc);
        let active = self.requests.get_mut(&request).expect("active");
        active.start = Some(now);
        active.location = Location::Serving(rid);
        self.schedule(done, Pending::ServiceComplete { svc, replica: rid, request });
        self.log(EventKind::ServiceStart, svc, Some(rid), Some(request), String::new());
    }

    fn on_complete(&mut self, svc: usize, replica: ReplicaId, request: RequestId) {
        let Some(idx) = self.services[svc].replica_index(replica) else {
            return;
        };
        let r = &mut self.services[svc].replicas[idx];
        if r.serving.map(|s| s.request) != Some(request) {
            return; // aborted by a timeout
        }
        r.serving = None;
        let active = self.requests.remove(&request).expect("active");
        self.finish(svc, request, active, self.now, Outcome::Completed);
        self.log(EventKind::Completed, svc, Some(replica), Some(request), String::new());
        self.try_start(svc, idx);
        self.remove_if_drained(svc, replica);
    }

    fn on_timeout(&mut self, request: RequestId) {
        let Some(active) = self.requests.remove(&request) else {
            return;
        };
        let svc = active.svc;
        match active.location {
            Location::Pending => self.services[svc].pending.retain(|&q| q != request),
            Location::Queued(rid) => {
                if let Some(idx) = self.services[svc].replica_index(rid) {
                    self.services[svc].replicas[idx].queue.retain(|&q| q != request);
                }
            }
            Location::Serving(rid) => {
                if let Some(idx) = self.services[svc].replica_index(rid) {
                    self.services[svc].replicas[idx].serving = None;
                    self.try_start(svc, idx);
                }
            }
        }
        let replica = match active.location {
            Location::Queued(r) | Location::Serving(r) => Some(r),
            Location::Pending => None,
        };
        let completion = active.arrival + self.timeout;
        self.finish(svc, request, active, completion, Outcome::FailedTimeout);
        self.log(EventKind::Timeout, svc, replica, Some(request), String::new());
        if let Some(rid) = replica {
            self.remove_if_drained(svc, rid);
        }
    }

    fn finish(&mut self, svc: usize, request: RequestId, active: ActiveRequest, completion: f64, outcome: Outcome) {
        self.finished.push(RequestRecord {
            request_id: request,
            service: self.services[svc].name.clone(),
            arrival_time: active.arrival,
            start_service_time: active.start,
            completion_time: completion,
            outcome,
        });
    }

    fn on_ready(&mut self, svc: usize, replica: ReplicaId) {
        let Some(idx) = self.services[svc].replica_index(replica) else {
            return;
        };
        if self.services[svc].replicas[idx].phase != Phase::Starting {
            return;
        }
        self.services[svc].replicas[idx].phase = Phase::Ready;
        self.log(EventKind::ReplicaReady, svc, Some(replica), None, String::new());
        self.drain_pending(svc);
        self.reconcile(svc);
    }

    fn drain_pending(&mut self, svc: usize) {
        if self.services[svc].ready_count() == 0 {
            return;
        }
        while let Some(request) = self.services[svc].pending.pop_front() {
            self.dispatch(svc, request);
        }
    }

    fn remove_if_drained(&mut self, svc: usize, replica: ReplicaId) {
        let service = &mut self.services[svc];
        let Some(idx) = service.replica_index(replica) else {
            return;
        };
        let r = &service.replicas[idx];
        if r.phase == Phase::Terminating && r.is_drained() {
            service.replicas.remove(idx);
            self.replica_owner.remove(&replica);
            self.log(EventKind::ReplicaRemoved, svc, Some(replica), None, String::new());
        }
    }

    fn spawn(&mut self, svc: usize) {
        let id = self.next_replica;
        self.next_replica += 1;
        let service = &mut self.services[svc];
        let startup = service.profile.startup_duration;
        let phase = if startup > 0.0 { Phase::Starting } else { Phase::Ready };
        let DesiredState { cpu, mem, .. } = service.desired;
        service.replicas.push(ReplicaState {
            replica_id: id,
            cpu_alloc: cpu,
            mem_alloc: mem,
            phase,
            started_at: self.now,
            serving: None,
            queue: VecDeque::new(),
        });
        self.replica_owner.insert(id, svc);
        self.log(EventKind::ReplicaCreated, svc, Some(id), None, format!("cpu={cpu} mem={mem}"));
        if phase == Phase::Starting {
            self.schedule(self.now + startup, Pending::ReplicaReady { svc, replica: id });
        } else {
            self.log(EventKind::ReplicaReady, svc, Some(id), None, String::new());
        }
    }

    fn terminate(&mut self, svc: usize, replica: ReplicaId) {
        let idx = self.services[svc].replica_index(replica).expect("replica exists");
        let r = &mut self.services[svc].replicas[idx];
        let from = r.phase;
        r.phase = Phase::Terminating;
        self.log(EventKind::ReplicaTerminating, svc, Some(replica), None, format!("from={}", from.as_str()));
        self.remove_if_drained(svc, replica);
    }

    /// Drives a service toward its desired state with at most one surplus
    /// replica and without reducing ready capacity below the desired count.
    fn reconcile(&mut self, svc: usize) {
        loop {
            let service = &self.services[svc];
            let DesiredState { replicas: n, cpu, mem } = service.desired;
            let n = n as usize;
            let live: Vec<&ReplicaState> = service.replicas.iter().filter(|r| r.is_live()).collect();
            let ready = live.iter().filter(|r| r.phase == Phase::Ready).count();
            let (current, outdated): (Vec<&ReplicaState>, Vec<&ReplicaState>) =
                live.iter().partition(|r| r.matches(cpu, mem));
            let newest = |set: &[&ReplicaState], phase: Phase| {
                set.iter().filter(|r| r.phase == phase).map(|r| r.replica_id).max()
            };

            let victim = if current.len() > n {
                newest(&current, Phase::Starting).or_else(|| newest(&current, Phase::Ready))
            } else if let Some(id) = newest(&outdated, Phase::Starting) {
                Some(id)
            } else if ready > n {
                newest(&outdated, Phase::Ready)
            } else {
                None
            };
            if let Some(id) = victim {
                self.terminate(svc, id);
                continue;
            }
            if current.len() < n && live.len() < n + 1 {
                self.spawn(svc);
                continue;
            }
            break;
        }
        self.drain_pending(svc);
    }

    /// Sets a new desired replica count and per-replica allocation and starts
    /// converging to it. Nothing changes when the target is rejected.
    pub fn apply_rolling_update(
        &mut self,
        service: &str,
        target_replicas: u32,
        target_cpu: f64,
        target_mem: f64,
    ) -> Result<()> {
        let svc = self.service_index(service)?;
        let s = &self.services[svc];
        let req = &s.requirements;
        let violation = |detail: String| Error::BoundViolation { service: service.to_string(), detail };
        if target_replicas < req.min_replicas || target_replicas > req.max_replicas {
            return Err(violation(format!(
                "replicas {target_replicas} outside [{}, {}]",
                req.min_replicas, req.max_replicas
            )));
        }
        if !(target_cpu >= req.min_cpu && target_cpu <= req.max_cpu) {
            return Err(violation(format!("cpu {target_cpu} outside [{}, {}]", req.min_cpu, req.max_cpu)));
        }
        if !(target_mem >= req.min_mem && target_mem <= req.max_mem) {
            return Err(violation(format!("mem {target_mem} outside [{}, {}]", req.min_mem, req.max_mem)));
        }
        let current = s.desired;
        if target_replicas != current.replicas && !req.horizontal_enabled {
            return Err(violation("horizontal scaling is disabled".to_string()));
        }
        if (target_cpu != current.cpu || target_mem != current.mem) && !req.vertical_enabled {
            return Err(violation("vertical scaling is disabled".to_string()));
        }
        self.services[svc].desired = DesiredState { replicas: target_replicas, cpu: target_cpu, mem: target_mem };
        self.log(
            EventKind::Rollout,
            svc,
            None,
            None,
            format!("replicas={target_replicas} cpu={target_cpu} mem={target_mem}"),
        );
        self.reconcile(svc);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ServerKind, ServiceSpec};

    fn spec(startup: f64) -> ServiceSpec {
        ServiceSpec {
            name: "front".into(),
            profile: ServerProfile {
                server_kind: ServerKind::Web,
                nominal_service_time: 1.0,
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
            initial_replicas: 1,
            initial_cpu: 200.0,
            initial_mem: 256.0,
        }
    }

    fn cluster(replicas: u32, startup: f64) -> Cluster {
        let mut s = spec(startup);
        s.initial_replicas = replicas;
        Cluster::new(&[s], DEFAULT_TIMEOUT).unwrap().with_event_log()
    }

    fn arrivals(times: &[f64]) -> Vec<(f64, String)> {
        times.iter().map(|&t| (t, "front".to_string())).collect()
    }

    #[test]
    fn single_request_no_queueing() {
        let mut c = cluster(1, 0.0);
        let recs = c.advance(&arrivals(&[0.0]), 5.0).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].completion_time, 1.0);
        assert_eq!(recs[0].outcome, Outcome::Completed);
        assert_eq!(c.now(), 5.0);
    }

    #[test]
    fn second_request_waits_fifo() {
        let mut c = cluster(1, 0.0);
        let recs = c.advance(&arrivals(&[0.0, 0.2]), 5.0).unwrap();
        assert_eq!(recs[1].start_service_time, Some(1.0));
        assert_eq!(recs[1].completion_time, 2.0);
    }

    #[test]
    fn unknown_service_is_config_error() {
        let mut c = cluster(1, 0.0);
        let err = c.advance(&[(0.0, "nope".to_string())], 1.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn non_monotone_arrivals_rejected() {
        let mut c = cluster(1, 0.0);
        let err = c.advance(&arrivals(&[1.0, 0.5]), 2.0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn overloaded_request_times_out() {
        let mut c = cluster(1, 0.0);
        // 12 simultaneous 1 s requests: the last ones cannot finish within 10 s
        let recs = c.advance(&arrivals(&[0.0; 12]), 30.0).unwrap();
        assert_eq!(recs.len(), 12);
        let failed: Vec<_> = recs.iter().filter(|r| r.outcome == Outcome::FailedTimeout).collect();
        assert_eq!(failed.len(), 2);
        for r in failed {
            assert_eq!(r.completion_time, r.arrival_time + 10.0);
        }
    }

    #[test]
    fn completion_exactly_at_timeout_counts_as_completed() {
        let mut c = cluster(1, 0.0);
        let recs = c.advance(&arrivals(&[0.0; 10]), 30.0).unwrap();
        assert!(recs.iter().all(|r| r.outcome == Outcome::Completed));
        assert_eq!(recs.last().unwrap().completion_time, 10.0);
    }

    #[test]
    fn resource_usage_idle_replica() {
        let c = cluster(1, 0.0);
        let u = c.resource_usage()["front"];
        assert_eq!(u.total_mem, 100.0);
        assert_eq!(u.total_cpu, 200.0);
        assert_eq!(u.ready_replicas, 1);
    }

    #[test]
    fn starting_replica_counts_surge_cpu() {
        let mut c = cluster(1, 30.0);
        c.services[0].replicas[0].phase = Phase::Starting;
        assert_eq!(c.resource_usage()["front"].total_cpu, 300.0);
    }

    #[test]
    fn resident_requests_add_memory() {
        let mut c = cluster(2, 0.0);
        c.advance(&arrivals(&[0.0; 6]), 0.0).unwrap();
        let s = c.service("front").unwrap();
        assert!(s.replicas().iter().all(|r| r.backlog() == 3));
        assert_eq!(c.resource_usage()["front"].total_mem, 260.0);
    }

    #[test]
    fn scale_out_adds_starting_replica() {
        let mut c = cluster(3, 20.0);
        c.apply_rolling_update("front", 4, 200.0, 256.0).unwrap();
        let s = c.service("front").unwrap();
        assert_eq!(s.replicas().len(), 4);
        assert_eq!(s.ready_count(), 3);
        assert_eq!(s.replicas()[3].phase, Phase::Starting);
        c.advance(&[], 19.9).unwrap();
        assert_eq!(c.service("front").unwrap().ready_count(), 3);
        c.advance(&[], 20.0).unwrap();
        assert_eq!(c.service("front").unwrap().ready_count(), 4);
    }

    #[test]
    fn vertical_update_replaces_after_ready() {
        let mut c = cluster(1, 10.0);
        c.apply_rolling_update("front", 1, 240.0, 256.0).unwrap();
        {
            let s = c.service("front").unwrap();
            assert_eq!(s.replicas().len(), 2);
            assert_eq!(s.replicas()[0].phase, Phase::Ready);
            assert_eq!(s.replicas()[1].cpu_alloc, 240.0);
        }
        c.advance(&[], 10.0).unwrap();
        let s = c.service("front").unwrap();
        assert_eq!(s.replicas().len(), 1);
        assert_eq!(s.replicas()[0].cpu_alloc, 240.0);
        assert_eq!(s.ready_count(), 1);
        let trace = c.event_log().unwrap().ready_trace("front", 1);
        assert!(trace.iter().all(|&(_, n)| n >= 1));
    }

    #[test]
    fn scale_in_drains_highest_id() {
        let mut c = cluster(2, 0.0);
        c.advance(&arrivals(&[0.0, 0.0, 0.0, 0.0]), 0.5).unwrap();
        c.apply_rolling_update("front", 1, 200.0, 256.0).unwrap();
        {
            let s = c.service("front").unwrap();
            assert_eq!(s.replicas()[1].phase, Phase::Terminating);
            assert_eq!(s.replicas()[1].backlog(), 2);
        }
        let recs = c.advance(&[], 10.0).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.outcome == Outcome::Completed));
        let s = c.service("front").unwrap();
        assert_eq!(s.replicas().len(), 1);
        assert_eq!(s.replicas()[0].replica_id, 1);
    }

    #[test]
    fn out_of_bounds_update_rejected_without_change() {
        let mut c = cluster(1, 0.0);
        let before = c.service("front").unwrap().desired();
        assert!(matches!(c.apply_rolling_update("front", 11, 200.0, 256.0), Err(Error::BoundViolation { .. })));
        assert!(c.apply_rolling_update("front", 2, 2000.0, 256.0).is_err());
        assert_eq!(c.service("front").unwrap().desired(), before);
        assert_eq!(c.service("front").unwrap().replicas().len(), 1);
    }

    #[test]
    fn disabled_dimension_rejected() {
        let mut s = spec(0.0);
        s.requirements.vertical_enabled = false;
        let mut c = Cluster::new(&[s], DEFAULT_TIMEOUT).unwrap();
        assert!(c.apply_rolling_update("front", 1, 240.0, 256.0).is_err());
        assert!(c.apply_rolling_update("front", 2, 200.0, 256.0).is_ok());
    }

    #[test]
    fn requests_wait_in_pending_queue_without_ready_replicas() {
        let mut c = cluster(1, 5.0);
        // replace the only replica; arrivals while old one still serves go to it
        c.services[0].replicas[0].phase = Phase::Starting;
        c.schedule(2.0, Pending::ReplicaReady { svc: 0, replica: 1 });
        let recs = c.advance(&arrivals(&[0.0]), 5.0).unwrap();
        assert_eq!(recs[0].start_service_time, Some(2.0));
        assert_eq!(recs[0].completion_time, 3.0);
    }

    #[test]
    fn busy_and_ready_integrals() {
        let mut c = cluster(1, 0.0);
        c.advance(&arrivals(&[0.0, 2.0]), 4.0).unwrap();
        let t = c.service("front").unwrap().totals();
        assert_eq!(t.ready_replica_seconds, 4.0);
        assert_eq!(t.ready_cpu_seconds, 800.0);
        assert_eq!(t.busy_cpu_seconds, 400.0);
    }
}

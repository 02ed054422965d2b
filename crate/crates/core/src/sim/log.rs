use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    ServiceStart,
    Completed,
    Timeout,
    ReplicaCreated,
    ReplicaReady,
    ReplicaTerminating,
    ReplicaRemoved,
    Rollout,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service_start",
            EventKind::Completed => "completed",
            EventKind::Timeout => "timeout",
            EventKind::ReplicaCreated => "replica_created",
            EventKind::ReplicaReady => "replica_ready",
            EventKind::ReplicaTerminating => "replica_terminating",
            EventKind::ReplicaRemoved => "replica_removed",
            EventKind::Rollout => "rollout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub kind: EventKind,
    pub service: String,
    pub replica_id: Option<u64>,
    pub request_id: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub(crate) fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ready-replica count of `service` after every log entry that changes it,
    /// as `(time, count)`.
    pub fn ready_trace(&self, service: &str, initial_ready: usize) -> Vec<(f64, usize)> {
        let mut ready = initial_ready;
        let mut trace = vec![(f64::NEG_INFINITY, ready)];
        for e in self.entries.iter().filter(|e| e.service == service) {
            match e.kind {
                EventKind::ReplicaReady => ready += 1,
                EventKind::ReplicaTerminating if e.detail == "from=ready" => ready -= 1,
                _ => continue,
            }
            trace.push((e.time, ready));
        }
        trace
    }

    /// CSV with columns `time,event_kind,service,replica_id,request_id,detail`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "time,event_kind,service,replica_id,request_id,detail")?;
        for e in &self.entries {
            let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.time,
                e.kind.as_str(),
                e.service,
                opt(e.replica_id),
                opt(e.request_id),
                e.detail
            )?;
        }
        Ok(())
    }
}

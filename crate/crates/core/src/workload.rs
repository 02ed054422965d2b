//! Closed-loop synthetic users driving a single front-door service.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ArrivalSource, RequestId, RequestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LoadPhase {
    /// Seconds.
    pub duration: f64,
    pub users: u32,
}

/// How a user's pause between a response and its next request is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ThinkTimeDistribution {
    /// Always exactly `think_time`.
    #[default]
    Fixed,
    /// Exponential with mean `think_time`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LoadProfile {
    pub phases: Vec<LoadPhase>,
    /// Seconds between a response and the same user's next request.
    pub think_time: f64,
    #[serde(default)]
    pub think_distribution: ThinkTimeDistribution,
    pub target_service: String,
}

/// Six five-minute phases: 10, 20, 30, 10, 30 and 20 users.
pub fn paper_profile() -> LoadProfile {
    LoadProfile {
        phases: [10, 20, 30, 10, 30, 20].into_iter().map(|users| LoadPhase { duration: 300.0, users }).collect(),
        think_time: 1.0,
        think_distribution: ThinkTimeDistribution::Fixed,
        target_service: "front".to_string(),
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("load profile needs at least one phase"));
        }
        if let Some(p) = self.phases.iter().find(|p| !(p.duration > 0.0 && p.duration.is_finite())) {
            return Err(Error::config(format!("phase duration {} must be positive", p.duration)));
        }
        if !(self.think_time >= 0.0 && self.think_time.is_finite()) {
            return Err(Error::config("think_time must be >= 0"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Phases as `(start, end, users)`.
    pub fn intervals(&self) -> Vec<(f64, f64, u32)> {
        let mut start = 0.0;
        self.phases
            .iter()
            .map(|p| {
                let iv = (start, start + p.duration, p.users);
                start += p.duration;
                iv
            })
            .collect()
    }

    /// Users wanted at `t`; phases are half-open `[start, end)` and nobody is
    /// active outside the profile.
    pub fn users_at(&self, t: f64) -> u32 {
        self.intervals().into_iter().find(|&(s, e, _)| t >= s && t < e).map_or(0, |(_, _, u)| u)
    }

    /// Whether user `id` stays active over the whole of `[from, to]`.
    fn active_throughout(&self, id: u32, from: f64, to: f64) -> bool {
        if id >= self.users_at(from) || id >= self.users_at(to) {
            return false;
        }
        self.intervals().into_iter().filter(|&(s, e, _)| e > from && s <= to).all(|(_, _, u)| id < u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum UserState {
    Idle,
    Thinking { since: f64, token: u64 },
    InFlight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Wake {
    Activate,
    AfterThink(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    user: u32,
    seq: u64,
    wake: Wake,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.user.cmp(&other.user)).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Arrival source for [`crate::sim::Cluster::advance_with`]: every user sends
/// a request, waits for its outcome, thinks, and repeats.
#[derive(Debug, Clone)]
pub struct ClosedLoopGenerator {
    profile: LoadProfile,
    rng: ChaCha8Rng,
    think: Option<Exp<f64>>,
    users: Vec<UserState>,
    heap: BinaryHeap<Reverse<Entry>>,
    owner: HashMap<RequestId, u32>,
    /// Activations seen while the user still had a request out.
    deferred: Vec<Vec<f64>>,
    seq: u64,
    issued: u64,
}

impl ClosedLoopGenerator {
    pub fn new(profile: LoadProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let think = match profile.think_distribution {
            ThinkTimeDistribution::Exponential if profile.think_time > 0.0 => {
                Some(Exp::new(1.0 / profile.think_time).map_err(|e| Error::config(e.to_string()))?)
            }
            _ => None,
        };
        let max_users = profile.phases.iter().map(|p| p.users).max().unwrap_or(0);
        let mut generator = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            think,
            users: vec![UserState::Idle; max_users as usize],
            heap: BinaryHeap::new(),
            owner: HashMap::new(),
            deferred: vec![Vec::new(); max_users as usize],
            seq: 0,
            issued: 0,
            profile,
        };
        let mut prev = 0;
        for (start, _, users) in generator.profile.intervals() {
            for user in prev..users {
                generator.push(start, user, Wake::Activate);
            }
            prev = users;
        }
        Ok(generator)
    }

    pub fn profile(&self) -> &LoadProfile {
        &self.profile
    }

    /// Requests handed to the cluster so far.
    pub fn issued(&self) -> u64 {
        self.issued
    }

    /// Users with a request outstanding.
    pub fn in_flight(&self) -> usize {
        self.users.iter().filter(|u| **u == UserState::InFlight).count()
    }

    fn push(&mut self, time: f64, user: u32, wake: Wake) {
        self.seq += 1;
        self.heap.push(Reverse(Entry { time, user, seq: self.seq, wake }));
    }

    fn think_time(&mut self) -> f64 {
        match &self.think {
            Some(exp) => exp.sample(&mut self.rng),
            None => self.profile.think_time,
        }
    }

    /// Whether the entry still produces a request; drops dead state on the way.
    fn still_valid(&mut self, e: Entry) -> bool {
        let idx = e.user as usize;
        let active = e.user < self.profile.users_at(e.time);
        match (e.wake, self.users[idx]) {
            (Wake::AfterThink(token), UserState::Thinking { since, token: current }) if token == current => {
                if !active {
                    self.users[idx] = UserState::Idle;
                    return false;
                }
                // a retire/re-activate in between already issued a fresh request
                self.profile.active_throughout(e.user, since, e.time)
            }
            (Wake::AfterThink(_), _) => false,
            (Wake::Activate, UserState::Idle) => active,
            (Wake::Activate, UserState::Thinking { since, .. }) => {
                if active && !self.profile.active_throughout(e.user, since, e.time) {
                    self.users[idx] = UserState::Idle;
                    true
                } else {
                    false
                }
            }
            (Wake::Activate, UserState::InFlight) => {
                // peeked ahead of time; the request may still resolve first
                self.deferred[idx].push(e.time);
                false
            }
        }
    }
}

impl ArrivalSource for ClosedLoopGenerator {
    fn peek_time(&mut self) -> Option<f64> {
        while let Some(&Reverse(e)) = self.heap.peek() {
            if self.still_valid(e) {
                return Some(e.time);
            }
            self.heap.pop();
        }
        None
    }

    fn take(&mut self, request_id: RequestId) -> String {
        let Reverse(e) = self.heap.pop().expect("take follows a successful peek");
        self.users[e.user as usize] = UserState::InFlight;
        self.owner.insert(request_id, e.user);
        self.issued += 1;
        self.profile.target_service.clone()
    }

    fn on_record(&mut self, record: &RequestRecord) {
        let Some(user) = self.owner.remove(&record.request_id) else {
            return;
        };
        let now = record.completion_time;
        for t in std::mem::take(&mut self.deferred[user as usize]) {
            if t > now {
                self.push(t, user, Wake::Activate);
            }
        }
        if user >= self.profile.users_at(now) {
            self.users[user as usize] = UserState::Idle;
            return;
        }
        self.seq += 1;
        let token = self.seq;
        self.users[user as usize] = UserState::Thinking { since: now, token };
        let wake = now + self.think_time();
        self.push(wake, user, Wake::AfterThink(token));
    }
}

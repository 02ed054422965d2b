use std::cmp::Reverse;
use std::collections::BinaryHeap;

use msra::sim::{
    ArrivalSource, Cluster, Outcome, RequestRecord, ScalingRequirements, ServerKind, ServerProfile, ServiceSpec,
    DEFAULT_TIMEOUT,
};
use msra::workload::{ClosedLoopGenerator, LoadPhase, LoadProfile, ThinkTimeDistribution};
use proptest::prelude::*;

fn profile(phases: &[(f64, u32)], think: f64, dist: ThinkTimeDistribution) -> LoadProfile {
    LoadProfile {
        phases: phases.iter().map(|&(duration, users)| LoadPhase { duration, users }).collect(),
        think_time: think,
        think_distribution: dist,
        target_service: "front".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Due(f64, u64);
impl Eq for Due {}
impl Ord for Due {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}
impl PartialOrd for Due {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// Drives the generator against a server that answers every request after
/// exactly `response` seconds. Returns (time, id) of each arrival; calls
/// `check` after every step with the number of unanswered requests.
fn drive(
    g: &mut ClosedLoopGenerator,
    response: f64,
    horizon: f64,
    mut check: impl FnMut(&ClosedLoopGenerator, usize),
) -> Vec<(f64, u64)> {
    let mut pending: BinaryHeap<Reverse<Due>> = BinaryHeap::new();
    let mut arrivals = Vec::new();
    let mut next_id = 0u64;
    loop {
        let arrival = g.peek_time().filter(|&t| t < horizon);
        let completion = pending.peek().map(|r| r.0 .0);
        match (arrival, completion) {
            (None, None) => break,
            // completions first on ties, as in the simulator
            (a, Some(c)) if a.is_none_or(|a| c <= a) => {
                let Reverse(Due(t, id)) = pending.pop().unwrap();
                g.on_record(&RequestRecord {
                    request_id: id,
                    service: "front".into(),
                    arrival_time: t - response,
                    start_service_time: Some(t - response),
                    completion_time: t,
                    outcome: Outcome::Completed,
                });
                if t >= horizon {
                    break;
                }
            }
            (Some(a), _) => {
                let service = g.take(next_id);
                assert_eq!(service, "front");
                arrivals.push((a, next_id));
                pending.push(Reverse(Due(a + response, next_id)));
                next_id += 1;
            }
            (None, Some(_)) => unreachable!(),
        }
        check(g, pending.len());
    }
    arrivals
}

#[test]
fn one_user_hand_trace() {
    let mut g = ClosedLoopGenerator::new(profile(&[(10.0, 1)], 1.0, ThinkTimeDistribution::Fixed), 0).unwrap();
    let times: Vec<f64> = drive(&mut g, 1.0, 10.0, |_, _| {}).into_iter().map(|a| a.0).collect();
    assert_eq!(times, [0.0, 2.0, 4.0, 6.0, 8.0]);
}

#[test]
fn one_user_through_the_simulator() {
    let spec = ServiceSpec {
        name: "front".into(),
        profile: ServerProfile {
            server_kind: ServerKind::Application,
            nominal_service_time: 1.0,
            reference_cpu: 200.0,
            startup_duration: 0.0,
            startup_cpu_surge: 1.0,
            memory_base: 100.0,
            memory_per_inflight: 0.0,
            stateful: false,
        },
        requirements: ScalingRequirements {
            horizontal_enabled: true,
            vertical_enabled: true,
            min_replicas: 1,
            max_replicas: 4,
            min_cpu: 100.0,
            max_cpu: 1000.0,
            min_mem: 128.0,
            max_mem: 1024.0,
        },
        initial_replicas: 1,
        initial_cpu: 200.0,
        initial_mem: 256.0,
    };
    let mut c = Cluster::new(&[spec], DEFAULT_TIMEOUT).unwrap();
    let mut g = ClosedLoopGenerator::new(profile(&[(10.0, 1)], 1.0, ThinkTimeDistribution::Fixed), 0).unwrap();
    let recs = c.advance_with(&mut g, 10.0).unwrap();
    let arrivals: Vec<f64> = recs.iter().map(|r| r.arrival_time).collect();
    assert_eq!(arrivals, [0.0, 2.0, 4.0, 6.0, 8.0]);
    assert_eq!(g.issued(), 5);
}

#[test]
fn idle_phase_has_no_arrivals() {
    let p = profile(&[(10.0, 2), (10.0, 0), (10.0, 1)], 0.5, ThinkTimeDistribution::Fixed);
    let mut g = ClosedLoopGenerator::new(p, 3).unwrap();
    let arrivals = drive(&mut g, 0.5, 30.0, |_, _| {});
    assert!(!arrivals.is_empty());
    assert!(arrivals.iter().all(|&(t, _)| !(10.0..20.0).contains(&t)));
    assert!(arrivals.iter().any(|&(t, _)| t == 20.0), "{arrivals:?}");
}

#[test]
fn zero_users_throughout() {
    let mut g = ClosedLoopGenerator::new(profile(&[(60.0, 0)], 1.0, ThinkTimeDistribution::Fixed), 1).unwrap();
    assert!(drive(&mut g, 1.0, 60.0, |_, _| {}).is_empty());
    assert_eq!(g.issued(), 0);
}

#[test]
fn boundary_adds_exactly_the_new_users() {
    // existing users cycle every 1.7 s, so none of them lands on t = 10
    let p = profile(&[(10.0, 10), (10.0, 20)], 1.0, ThinkTimeDistribution::Fixed);
    let mut g = ClosedLoopGenerator::new(p, 0).unwrap();
    let arrivals = drive(&mut g, 0.7, 20.0, |_, _| {});
    let at_boundary: Vec<u64> = arrivals.iter().filter(|a| a.0 == 10.0).map(|a| a.1).collect();
    assert_eq!(at_boundary.len(), 10);
    assert!(at_boundary.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(arrivals.iter().filter(|a| a.0 == 0.0).count(), 10);
}

#[test]
fn zero_think_time_rate_is_one_over_response() {
    let mut g = ClosedLoopGenerator::new(profile(&[(10.0, 3)], 0.0, ThinkTimeDistribution::Fixed), 0).unwrap();
    let arrivals = drive(&mut g, 0.5, 10.0, |_, _| {});
    assert_eq!(arrivals.len(), 3 * 20);
}

fn phases() -> impl Strategy<Value = Vec<(f64, u32)>> {
    prop::collection::vec(((1u32..40).prop_map(|d| d as f64 * 0.5), 0u32..8), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn never_two_requests_in_flight_per_user(
        phases in phases(),
        think in (0u32..8).prop_map(|t| t as f64 * 0.25),
        response in (1u32..12).prop_map(|r| r as f64 * 0.3),
        exponential in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let dist = if exponential { ThinkTimeDistribution::Exponential } else { ThinkTimeDistribution::Fixed };
        let p = profile(&phases, think, dist);
        let max_users = phases.iter().map(|p| p.1).max().unwrap() as usize;
        let horizon = p.duration();
        let mut g = ClosedLoopGenerator::new(p.clone(), seed).unwrap();
        let mut ok = true;
        let arrivals = drive(&mut g, response, horizon, |g, outstanding| {
            // a user holding two requests would show up as fewer in-flight users
            ok &= g.in_flight() == outstanding && outstanding <= max_users;
        });
        prop_assert!(ok);
        for &(t, _) in &arrivals {
            prop_assert!(p.users_at(t) > 0, "arrival at {} in an idle phase", t);
        }
        if !exponential {
            // every active user, whatever it was doing, asks again within one cycle
            for (start, end, users) in p.intervals() {
                let cycle = start + response + think;
                if cycle < end {
                    let n = arrivals.iter().filter(|a| a.0 >= start && a.0 <= cycle).count();
                    prop_assert!(n >= users as usize, "{} of {} users in [{}, {}]", n, users, start, cycle);
                }
            }
        }

        let mut again = ClosedLoopGenerator::new(p, seed).unwrap();
        prop_assert_eq!(drive(&mut again, response, horizon, |_, _| {}), arrivals);
    }
}

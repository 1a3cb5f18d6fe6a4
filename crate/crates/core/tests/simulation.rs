mod common;

use std::collections::BTreeMap;

use qurd_core::kernel::random::Rng;
use qurd_core::sim::Simulation;
use qurd_core::{
    simulate, Action, ActorId, ClientId, EdgeLabel, Entry, MachineId, Message, Phase, Scenario,
    SimTime, StateName, Trace,
};

fn units(u: u64) -> SimTime {
    SimTime::from_units(u)
}

#[test]
fn same_seed_same_trace_bytes() {
    for i in 0..50 {
        let s = common::scenario(&common::COVERAGE, 11, i);
        assert_eq!(simulate(&s, 3).to_text(), simulate(&s, 3).to_text());
    }
}

#[test]
fn different_seeds_usually_differ() {
    let s = Scenario::preset("deadlock-fail-semantics").unwrap();
    let distinct: std::collections::BTreeSet<String> =
        (0..20).map(|seed| simulate(&s, seed).to_text()).collect();
    assert!(distinct.len() > 10);
}

#[test]
fn trace_text_round_trips() {
    for i in 0..50 {
        let s = common::scenario(&common::COVERAGE, 12, i);
        let t = simulate(&s, s.seed);
        let text = t.to_text();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
    }
}

#[test]
fn time_never_goes_backwards_and_stays_within_horizon() {
    for i in 0..200 {
        let s = common::scenario(&common::COVERAGE, 13, i);
        let t = simulate(&s, s.seed);
        for w in t.records().windows(2) {
            assert!(w[0].at <= w[1].at);
        }
        assert!(t.iter().all(|r| r.at <= s.horizon));
    }
}

/// Every delivery matches an earlier send, exactly one latency later.
#[test]
fn deliveries_respect_latency() {
    for i in 0..200 {
        let s = common::scenario(&common::COVERAGE, 14, i);
        let t = simulate(&s, s.seed);
        let mut in_flight: BTreeMap<String, Vec<SimTime>> = BTreeMap::new();
        for r in &t {
            match &r.entry {
                Entry::Send(m) if !m.action.is_multicast() => {
                    in_flight.entry(m.to_string()).or_default().push(r.at);
                }
                Entry::Recv(m) => {
                    let sends = in_flight
                        .get_mut(&m.to_string())
                        .expect("received message was sent");
                    let sent = sends.remove(0);
                    assert_eq!(r.at, sent + s.net.latency, "{m}");
                }
                _ => {}
            }
        }
    }
}

#[test]
fn actor_streams_do_not_depend_on_creation_order() {
    let actors = [
        ActorId::Machine(MachineId(0)),
        ActorId::Machine(MachineId(3)),
        ActorId::Client(ClientId(1)),
    ];
    let draws = |order: &[ActorId]| -> BTreeMap<ActorId, Vec<bool>> {
        let mut rngs: Vec<(ActorId, Rng)> =
            order.iter().map(|&a| (a, Rng::for_actor(9, a))).collect();
        let p = "0.5".parse().unwrap();
        let mut out = BTreeMap::new();
        for _ in 0..32 {
            for (a, rng) in &mut rngs {
                out.entry(*a)
                    .or_insert_with(Vec::new)
                    .push(rng.bernoulli(p));
            }
        }
        out
    };
    let forward = draws(&actors);
    let mut reversed = actors;
    reversed.reverse();
    assert_eq!(forward, draws(&reversed));
}

/// Adding a client that never submits leaves every machine's draws alone.
#[test]
fn extra_actor_does_not_perturb_others() {
    let base =
        "n_machines = 2\nmachine.lambda = 0.5\nmachine.exec_jitter = 3\nclient.0.nb_nodes = 1\n";
    let a = Scenario::parse(base).unwrap();
    let b = Scenario::parse(&format!(
        "{base}client.1.nb_nodes = 1\nclient.1.submit_at = 5000\n"
    ))
    .unwrap();
    let launches = |t: &Trace| -> Vec<String> {
        t.iter()
            .filter_map(|r| match &r.entry {
                Entry::Transition {
                    label: EdgeLabel::Launch,
                    info,
                    ..
                } => Some(format!("{} {} {info}", r.at, r.actor)),
                _ => None,
            })
            .collect()
    };
    for seed in 0..20 {
        assert_eq!(launches(&simulate(&a, seed)), launches(&simulate(&b, seed)));
    }
}

#[test]
fn launch_failure_frequency_matches_lambda() {
    let s = Scenario::parse(
        "n_machines = 1\nmachine.lambda = 0.3\nclient.0.nb_nodes = 1\nhorizon = 100\n",
    )
    .unwrap();
    let n = 10_000u32;
    let mut fragile = 0u32;
    for seed in 0..n {
        let t = simulate(&s, u64::from(seed));
        fragile += t
            .iter()
            .filter(|r| matches!(r.transition(), Some((_, StateName::RunningFragile, _))))
            .count() as u32;
    }
    let p = 0.3;
    let sigma = (p * (1.0 - p) / f64::from(n)).sqrt();
    let rate = f64::from(fragile) / f64::from(n);
    assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate}");
}

#[test]
fn cancelled_timers_leave_no_record() {
    // A reply timeout is armed for every request and cancelled by the
    // reply; without failures no silence edge may appear.
    let s =
        Scenario::parse("n_machines = 3\nclient.0.nb_nodes = 2\nclient.1.nb_nodes = 2\n").unwrap();
    for seed in 0..50 {
        let t = simulate(&s, seed);
        assert!(!t
            .iter()
            .any(|r| matches!(r.transition(), Some((_, _, EdgeLabel::Silence)))));
    }
}

fn discoveries(t: &Trace, client: u32) -> Vec<(SimTime, MachineId, u32, bool)> {
    t.iter()
        .filter(|r| r.actor == ActorId::Client(ClientId(client)))
        .filter_map(|r| match r.entry {
            Entry::Discover {
                machine,
                epoch,
                stale,
            } => Some((r.at, machine, epoch, stale)),
            _ => None,
        })
        .collect()
}

#[test]
fn two_listeners_each_discover_once() {
    let s = Scenario::parse(
        "n_machines = 1\nclient.0.nb_nodes = 1\nclient.1.nb_nodes = 1\nhorizon = 5\n",
    )
    .unwrap();
    let t = simulate(&s, 0);
    for c in 0..2 {
        let first: Vec<_> = discoveries(&t, c)
            .into_iter()
            .filter(|d| d.2 == 1)
            .collect();
        assert_eq!(first.len(), 1, "client {c}");
    }
}

#[test]
fn no_listeners_no_discoveries() {
    let s = Scenario::parse("n_machines = 3\nhorizon = 50\n").unwrap();
    let t = simulate(&s, 0);
    assert!(!t.iter().any(|r| matches!(r.entry, Entry::Discover { .. })));
}

#[test]
fn stale_entry_is_discovered_and_refused() {
    // c0 takes m0 at t=2; the withdrawal reaches the bus at t=3 and the
    // entry lingers for 5 more units. c1 subscribes at t=6 (withdrawal + 3).
    let s = Scenario::parse(
        "n_machines = 1\nbus.staleness = 5\nhorizon = 12\n\
         client.0.nb_nodes = 1\nclient.1.nb_nodes = 1\nclient.1.submit_at = 6\n",
    )
    .unwrap();
    let t = simulate(&s, 0);
    let seen = discoveries(&t, 1);
    assert_eq!(seen, [(units(7), MachineId(0), 1, true)]);
    let ko = Message::job(
        Action::ReplyKo,
        MachineId(0),
        ClientId(1),
        ClientId(1).job(),
        1,
    );
    assert!(t.iter().any(|r| r.entry == Entry::Recv(ko)));
}

#[test]
fn nothing_discovered_after_staleness_window() {
    let s = Scenario::parse(
        "n_machines = 1\nbus.staleness = 5\nhorizon = 40\n\
         client.0.nb_nodes = 1\nclient.1.nb_nodes = 1\nclient.1.submit_at = 9\n",
    )
    .unwrap();
    let t = simulate(&s, 0);
    // The stale window closed at t=8; c1 only learns of m0 once it is
    // re-advertised after c0's job.
    assert!(discoveries(&t, 1).iter().all(|d| !d.3 && d.2 >= 2));
}

#[test]
fn one_winner_among_stale_discoverers() {
    let s = Scenario::parse(
        "n_machines = 1\nbus.staleness = 5\nhorizon = 8\n\
         client.0.nb_nodes = 1\nclient.1.nb_nodes = 1\nclient.1.submit_at = 4\nclient.2.nb_nodes = 1\nclient.2.submit_at = 4\n",
    )
    .unwrap();
    let t = simulate(&s, 0);
    let oks = t
        .iter()
        .filter(|r| matches!(&r.entry, Entry::Send(m) if m.action == Action::ReplyOk))
        .count();
    assert_eq!(oks, 1);
    assert!(qurd_core::check_exclusive_access(&t).holds);
}

#[test]
fn resubscription_gets_a_fresh_snapshot() {
    // NB=2 with one machine under fail semantics: every attempt frees and
    // retries, and each new attempt rediscovers m0.
    let s = Scenario::parse(
        "n_machines = 1\nhorizon = 60\nclient.0.nb_nodes = 2\nclient.0.semantics = fail\nclient.0.retry_delay = 5\n",
    )
    .unwrap();
    let t = simulate(&s, 0);
    let retries = t
        .iter()
        .filter(|r| matches!(r.transition(), Some((_, _, EdgeLabel::Retry))))
        .count();
    assert!(retries >= 2);
    assert!(discoveries(&t, 0).len() >= retries);
}

#[test]
fn steps_keep_client_invariants() {
    for i in 0..300 {
        let s = common::scenario(&common::COVERAGE, 15, i);
        let mut sim = Simulation::seeded(&s, s.seed);
        while sim.step(s.horizon) {
            for c in sim.clients() {
                match c.phase() {
                    Phase::Begin | Phase::Aborted => assert!(c.reserved().is_empty()),
                    Phase::Reserve => assert!(c.ok_count() <= c.spec().nb_nodes),
                    _ => assert!(c.reserved().len() as u32 <= c.spec().nb_nodes),
                }
            }
        }
    }
}

//! Post-hoc property checks over traces.
//!
//! Exclusive access is checked on reservation intervals: a machine is
//! attributed to job `J` from the moment it sends `ReplyOK` to `J` until it
//! receives the matching `Cancel`, receives `Release` from `J`, or dies.
//! Two such intervals for different jobs on one machine must not overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::error::TraceError;
use crate::kernel::message::{Action, ActorId, ClientId, JobId, MachineId};
use crate::kernel::trace::{EdgeLabel, Entry, StateName, Trace};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    ExclusiveAccess,
    AllJobsComplete,
    /// Every job done at or before the given time.
    DeadlineMet(SimTime),
    /// Every automaton edge exercised across a batch of traces.
    NoDeadTransitions,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::ExclusiveAccess => "exclusive-access",
            Property::AllJobsComplete => "complete",
            Property::DeadlineMet(_) => "deadline",
            Property::NoDeadTransitions => "no-dead-transitions",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::DeadlineMet(d) => write!(f, "deadline({d})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub at: SimTime,
    pub actors: Vec<ActorId>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyResult {
    pub property: Property,
    pub holds: bool,
    pub violations: Vec<Violation>,
}

impl PropertyResult {
    fn from_violations(property: Property, violations: Vec<Violation>) -> Self {
        PropertyResult {
            property,
            holds: violations.is_empty(),
            violations,
        }
    }

    /// Result document: a header with the verdict, then one line per
    /// violation.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        writeln!(out, "property\t{}", self.property).unwrap();
        writeln!(out, "holds\t{}", self.holds).unwrap();
        writeln!(out, "violations\t{}", self.violations.len()).unwrap();
        for v in &self.violations {
            let actors: Vec<String> = v.actors.iter().map(ToString::to_string).collect();
            writeln!(out, "{}\t{}\t{}", v.at, actors.join(","), v.description).unwrap();
        }
        out
    }
}

struct Open {
    job: JobId,
    attempt: u32,
    since: SimTime,
}

/// Overlapping reservation intervals across different jobs.
pub fn check_exclusive_access(trace: &Trace) -> PropertyResult {
    let mut open: BTreeMap<MachineId, Vec<Open>> = BTreeMap::new();
    let mut violations = Vec::new();
    for r in trace {
        let ActorId::Machine(machine) = r.actor else {
            continue;
        };
        let held = open.entry(machine).or_default();
        match &r.entry {
            Entry::Send(m) if m.action == Action::ReplyOk => {
                let Some(job) = m.job_id() else { continue };
                for other in held.iter().filter(|o| o.job != job) {
                    violations.push(Violation {
                        at: r.at,
                        actors: vec![
                            machine.into(),
                            other.job.client().into(),
                            job.client().into(),
                        ],
                        description: format!(
                            "{machine} granted {job} while held by {} since {}",
                            other.job, other.since
                        ),
                    });
                }
                held.push(Open {
                    job,
                    attempt: m.attempt(),
                    since: r.at,
                });
            }
            Entry::Recv(m) if m.action == Action::Cancel => {
                held.retain(|o| !(Some(o.job) == m.job_id() && o.attempt == m.attempt()));
            }
            Entry::Recv(m) if m.action == Action::Release => {
                held.retain(|o| Some(o.job) != m.job_id());
            }
            Entry::Transition {
                to: StateName::Dead,
                ..
            } => held.clear(),
            _ => {}
        }
    }
    PropertyResult::from_violations(Property::ExclusiveAccess, violations)
}

/// Time each client reached `done`, indexed by client id. Fails on a
/// client id outside `0..n_clients`.
pub fn completion_times(
    trace: &Trace,
    n_clients: usize,
) -> Result<Vec<Option<SimTime>>, TraceError> {
    let mut done = vec![None; n_clients];
    for r in trace {
        let ActorId::Client(c) = r.actor else {
            continue;
        };
        let slot = done
            .get_mut(c.0 as usize)
            .ok_or_else(|| TraceError::UnknownClient(c.to_string()))?;
        if let Entry::Transition {
            to: StateName::Done,
            ..
        } = r.entry
        {
            slot.get_or_insert(r.at);
        }
    }
    Ok(done)
}

/// `AllJobsComplete` when `deadline` is `None`, `DeadlineMet` otherwise.
pub fn check_completion(
    trace: &Trace,
    n_clients: usize,
    deadline: Option<SimTime>,
) -> Result<PropertyResult, TraceError> {
    let done = completion_times(trace, n_clients)?;
    let end = trace.records().last().map_or(SimTime::ZERO, |r| r.at);
    let mut last_phase: BTreeMap<ClientId, (SimTime, StateName)> = BTreeMap::new();
    for r in trace {
        if let (ActorId::Client(c), Some((_, to, _))) = (r.actor, r.transition()) {
            last_phase.insert(c, (r.at, to));
        }
    }
    let mut violations = Vec::new();
    for (i, at) in done.iter().enumerate() {
        let client = ClientId(i as u32);
        match (at, deadline) {
            (Some(t), Some(d)) if *t > d => violations.push(Violation {
                at: *t,
                actors: vec![client.into()],
                description: format!("{} done at {t}, after deadline {d}", client.job()),
            }),
            (Some(_), _) => {}
            (None, _) => {
                let (at, phase) = last_phase
                    .get(&client)
                    .copied()
                    .map_or((end, "never started".to_string()), |(t, s)| {
                        (t, format!("ended in {s}"))
                    });
                violations.push(Violation {
                    at,
                    actors: vec![client.into()],
                    description: format!("{} not done: {phase}", client.job()),
                });
            }
        }
    }
    let property = deadline.map_or(Property::AllJobsComplete, Property::DeadlineMet);
    Ok(PropertyResult::from_violations(property, violations))
}

/// One automaton edge. `from` is `None` for initial placement.
pub type Edge = (Option<StateName>, StateName, EdgeLabel);

use EdgeLabel as L;
use StateName as S;

pub const MACHINE_EDGES: &[Edge] = &[
    (None, S::Available, L::Init),
    (Some(S::Available), S::Reserved, L::Request),
    (Some(S::Available), S::Unavailable, L::LocalLeave),
    (Some(S::Unavailable), S::Available, L::Return),
    (Some(S::Available), S::Unavailable, L::IdleFailure),
    (Some(S::Available), S::Dead, L::IdleFailure),
    (Some(S::Reserved), S::Available, L::Cancel),
    (Some(S::Reserved), S::RunningSustain, L::Launch),
    (Some(S::Reserved), S::RunningFragile, L::Launch),
    (Some(S::Reserved), S::Dead, L::ReservedFailure),
    (Some(S::RunningFragile), S::Dead, L::Death),
    (Some(S::RunningSustain), S::Finished, L::Complete),
    (Some(S::Finished), S::Available, L::Release),
    (Some(S::Finished), S::Unavailable, L::FinishedFailure),
];

/// Client edges. Self-loops record counter updates; when one event both
/// updates a counter and changes phase only the phase change is recorded.
pub const CLIENT_EDGES: &[Edge] = &[
    (None, S::Begin, L::Init),
    (Some(S::Begin), S::Reserve, L::Submit),
    (Some(S::Begin), S::Reserve, L::Retry),
    (Some(S::Reserve), S::Reserve, L::Request),
    (Some(S::Reserve), S::Reserve, L::Ok),
    (Some(S::Reserve), S::Reserve, L::Ko),
    (Some(S::Reserve), S::Reserve, L::Silence),
    (Some(S::Reserve), S::Launch, L::Enough),
    (Some(S::Reserve), S::Begin, L::Free),
    (Some(S::Reserve), S::Begin, L::Timeout),
    (Some(S::Reserve), S::Aborted, L::GiveUp),
    (Some(S::Launch), S::Launch, L::Ack2),
    (Some(S::Launch), S::Launch, L::Ack3),
    (Some(S::Launch), S::Wait, L::Started),
    (Some(S::Launch), S::Failure, L::LaunchTimeout),
    (Some(S::Launch), S::Failure, L::FailureDetected),
    (Some(S::Wait), S::Wait, L::Ack3),
    (Some(S::Wait), S::Done, L::AllDone),
    (Some(S::Wait), S::Failure, L::FailureDetected),
    (Some(S::Failure), S::Failure, L::Request),
    (Some(S::Failure), S::Failure, L::Ok),
    (Some(S::Failure), S::Failure, L::Ko),
    (Some(S::Failure), S::Failure, L::Silence),
    (Some(S::Failure), S::Failure, L::FailureDetected),
    (Some(S::Failure), S::Failure, L::LaunchTimeout),
    (Some(S::Failure), S::Failure, L::Ack2),
    (Some(S::Failure), S::Failure, L::Ack3),
    (Some(S::Failure), S::Wait, L::Replaced),
];

fn fmt_edge(kind: &str, (from, to, label): Edge) -> String {
    let from = from.map_or("-", StateName::as_str);
    format!("{kind} {from} -> {to} [{label}]")
}

/// Edge coverage accumulated over any number of traces.
#[derive(Clone, Debug, Default)]
pub struct Coverage {
    machine: BTreeMap<Edge, u64>,
    client: BTreeMap<Edge, u64>,
    unknown: BTreeSet<(String, SimTime)>,
    traces: u64,
}

impl Coverage {
    pub fn new() -> Self {
        Coverage::default()
    }

    pub fn add(&mut self, trace: &Trace) {
        self.traces += 1;
        for r in trace {
            let Some(edge) = r.transition() else {
                continue;
            };
            let (kind, table, counts) = match r.actor {
                ActorId::Machine(_) => ("machine", MACHINE_EDGES, &mut self.machine),
                ActorId::Client(_) => ("client", CLIENT_EDGES, &mut self.client),
                ActorId::Bus => continue,
            };
            if table.contains(&edge) {
                *counts.entry(edge).or_default() += 1;
            } else if self.unknown.len() < 64 {
                self.unknown.insert((fmt_edge(kind, edge), r.at));
            }
        }
    }

    pub fn traces(&self) -> u64 {
        self.traces
    }

    pub fn visits(&self, edge: Edge, machine_side: bool) -> u64 {
        let counts = if machine_side {
            &self.machine
        } else {
            &self.client
        };
        counts.get(&edge).copied().unwrap_or(0)
    }

    /// Table edges never seen, machine edges first.
    pub fn unvisited(&self) -> Vec<String> {
        let machine = MACHINE_EDGES
            .iter()
            .filter(|e| !self.machine.contains_key(e))
            .map(|&e| fmt_edge("machine", e));
        let client = CLIENT_EDGES
            .iter()
            .filter(|e| !self.client.contains_key(e))
            .map(|&e| fmt_edge("client", e));
        machine.chain(client).collect()
    }

    /// Transitions seen in traces that are not edges of either automaton.
    pub fn unknown(&self) -> Vec<String> {
        self.unknown
            .iter()
            .map(|(e, at)| format!("{e} at {at}"))
            .collect()
    }

    pub fn result(&self) -> PropertyResult {
        let violations = self
            .unknown
            .iter()
            .map(|(e, at)| Violation {
                at: *at,
                actors: Vec::new(),
                description: format!("transition outside the automaton: {e}"),
            })
            .chain(self.unvisited().into_iter().map(|e| Violation {
                at: SimTime::ZERO,
                actors: Vec::new(),
                description: format!("never exercised: {e}"),
            }))
            .collect();
        PropertyResult::from_violations(Property::NoDeadTransitions, violations)
    }

    /// Human-readable report: visit counts for every edge.
    pub fn report(&self) -> String {
        let mut out = String::new();
        writeln!(out, "traces\t{}", self.traces).unwrap();
        for (kind, table, counts) in [
            ("machine", MACHINE_EDGES, &self.machine),
            ("client", CLIENT_EDGES, &self.client),
        ] {
            for &edge in table {
                let n = counts.get(&edge).copied().unwrap_or(0);
                writeln!(out, "{n}\t{}", fmt_edge(kind, edge)).unwrap();
            }
        }
        for u in self.unknown() {
            writeln!(out, "unknown\t{u}").unwrap();
        }
        writeln!(out, "unvisited\t{}", self.unvisited().len()).unwrap();
        out
    }
}

/// Dispatches a single-trace property. `NoDeadTransitions` is judged on
/// this trace alone.
pub fn check(
    trace: &Trace,
    property: Property,
    n_clients: usize,
) -> Result<PropertyResult, TraceError> {
    match property {
        Property::ExclusiveAccess => Ok(check_exclusive_access(trace)),
        Property::AllJobsComplete => check_completion(trace, n_clients, None),
        Property::DeadlineMet(d) => check_completion(trace, n_clients, Some(d)),
        Property::NoDeadTransitions => {
            let mut c = Coverage::new();
            c.add(trace);
            Ok(c.result())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(lines: &[&str]) -> Trace {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        Trace::parse(&text).unwrap()
    }

    #[test]
    fn double_grant_is_flagged() {
        let t = trace(&[
            "1.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=1",
            "2.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c1 job=j1 attempt=1",
        ]);
        let r = check_exclusive_access(&t);
        assert!(!r.holds);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert!(v.actors.contains(&ActorId::Client(ClientId(0))));
        assert!(v.actors.contains(&ActorId::Client(ClientId(1))));
    }

    #[test]
    fn grant_after_release_is_clean() {
        let t = trace(&[
            "1.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=1",
            "5.000000\tm0\trecv\t-\t-\tCancel from=c0 to=m0 job=j0 attempt=2",
            "6.000000\tm0\trecv\t-\t-\tRelease from=c0 to=m0 job=j0 attempt=1",
            "7.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c1 job=j1 attempt=1",
            "8.000000\tm0\trecv\t-\t-\tCancel from=c1 to=m0 job=j1 attempt=1",
            "9.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=3",
        ]);
        assert!(check_exclusive_access(&t).holds);
        assert!(check_exclusive_access(&Trace::new()).holds);
    }

    #[test]
    fn stale_cancel_does_not_close() {
        let t = trace(&[
            "1.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=2",
            "2.000000\tm0\trecv\t-\t-\tCancel from=c0 to=m0 job=j0 attempt=1",
            "3.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c1 job=j1 attempt=1",
        ]);
        assert!(!check_exclusive_access(&t).holds);
    }

    #[test]
    fn deadline_boundary_is_inclusive() {
        let t = trace(&["17.000000\tc0\ttransition\twait\tdone\tall-done"]);
        let ten = check_completion(&t, 1, Some(SimTime::from_units(10))).unwrap();
        assert!(!ten.holds);
        let seventeen = check_completion(&t, 1, Some(SimTime::from_units(17))).unwrap();
        assert!(seventeen.holds);
        assert!(check_completion(&t, 1, None).unwrap().holds);
    }

    #[test]
    fn aborted_client_is_listed() {
        let t = trace(&[
            "0.000000\tc0\ttransition\t-\tbegin\tinit",
            "0.000000\tc1\ttransition\t-\tbegin\tinit",
            "9.000000\tc1\ttransition\treserve\taborted\tgive-up",
            "17.000000\tc0\ttransition\twait\tdone\tall-done",
        ]);
        let r = check_completion(&t, 2, None).unwrap();
        assert!(!r.holds);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].actors, [ActorId::Client(ClientId(1))]);
        assert!(r.violations[0].description.contains("aborted"));
    }

    #[test]
    fn unknown_client_is_an_input_error() {
        let t = trace(&["0.000000\tc5\ttransition\t-\tbegin\tinit"]);
        assert!(matches!(
            check_completion(&t, 2, None),
            Err(TraceError::UnknownClient(_))
        ));
    }

    #[test]
    fn coverage_flags_foreign_edges() {
        let t = trace(&["3.000000\tm0\ttransition\tdead\tavailable\treturn"]);
        let mut c = Coverage::new();
        c.add(&t);
        assert_eq!(c.unknown().len(), 1);
        assert!(!c.result().holds);
        assert_eq!(
            c.unvisited().len(),
            MACHINE_EDGES.len() + CLIENT_EDGES.len()
        );
    }

    #[test]
    fn result_document_lists_violations() {
        let t = trace(&[
            "1.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=1",
            "2.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c1 job=j1 attempt=1",
        ]);
        let doc = check_exclusive_access(&t).to_document();
        assert!(doc.starts_with("property\texclusive-access\nholds\tfalse\nviolations\t1\n"));
    }
}

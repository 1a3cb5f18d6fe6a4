//! The client-side reservation automaton.
//!
//! A client moves through `begin → reserve → launch → wait → done`, with a
//! `failure` detour whenever a launched machine is lost. Inside `reserve`
//! two sub-automata run interleaved: discovery (bus notifications feed a
//! backlog of machines to contact) and acknowledgement counting (OK/KO
//! replies). They meet when the OK count reaches `nb_nodes`.
//!
//! Under fail semantics an attempt ends once the discovery backlog is
//! exhausted and nothing new shows up for `attempt_window`; under wait
//! semantics it ends at `timeout`. Either way every held machine is
//! cancelled before the retry. Hold semantics never gives anything back and
//! exists to reproduce the deadlock that the other two avoid.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::message::{Action, ClientId, JobId, MachineId, Message};
use crate::kernel::queue::EventHandle;
use crate::kernel::trace::{EdgeLabel, StateName};
use crate::kernel::{Event, Guard, Kernel};
use crate::time::SimTime;

/// Behaviour when not enough machines can be reserved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semantics {
    /// Keep what is held until `timeout`, then release and retry.
    Wait { timeout: SimTime },
    /// Release as soon as the discovered machines are exhausted, retry later.
    Fail,
    /// Never release. Only useful to exhibit deadlock.
    Hold,
}

impl Semantics {
    pub fn name(self) -> &'static str {
        match self {
            Semantics::Wait { .. } => "wait",
            Semantics::Fail => "fail",
            Semantics::Hold => "hold",
        }
    }
}

/// Delay before a new attempt. A range is sampled uniformly per retry,
/// which breaks the symmetry that can livelock identical clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetryDelay {
    Fixed(SimTime),
    Uniform { lo: SimTime, hi: SimTime },
}

/// Which discovered machine to contact next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactOrder {
    /// In the order the bus reported them.
    Discovery,
    /// Highest machine id first.
    HighestId,
}

impl ContactOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            ContactOrder::Discovery => "discovery",
            ContactOrder::HighestId => "highest-id",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientSpec {
    pub nb_nodes: u32,
    pub semantics: Semantics,
    pub retry_delay: RetryDelay,
    pub submit_at: SimTime,
    /// `None` retries forever.
    pub max_retries: Option<u32>,
    /// Requests allowed in flight at once; 1 contacts machines one by one.
    pub max_outstanding: u32,
    /// Silence after a request for this long counts as KO.
    pub reply_timeout: SimTime,
    /// A launched machine that has not confirmed start-up by then is
    /// considered failed.
    pub launch_timeout: SimTime,
    /// Fail semantics: quiet period that ends an attempt.
    pub attempt_window: SimTime,
    pub contact_order: ContactOrder,
}

impl Default for ClientSpec {
    fn default() -> Self {
        ClientSpec {
            nb_nodes: 1,
            semantics: Semantics::Wait {
                timeout: SimTime::from_units(20),
            },
            retry_delay: RetryDelay::Uniform {
                lo: SimTime::from_units(2),
                hi: SimTime::from_units(20),
            },
            submit_at: SimTime::ZERO,
            max_retries: None,
            max_outstanding: 1,
            reply_timeout: SimTime::from_units(4),
            launch_timeout: SimTime::from_units(4),
            attempt_window: SimTime::from_units(2),
            contact_order: ContactOrder::Discovery,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Begin,
    Reserve,
    Launch,
    Wait,
    Failure,
    Done,
    Aborted,
}

impl Phase {
    pub fn name(self) -> StateName {
        match self {
            Phase::Begin => StateName::Begin,
            Phase::Reserve => StateName::Reserve,
            Phase::Launch => StateName::Launch,
            Phase::Wait => StateName::Wait,
            Phase::Failure => StateName::Failure,
            Phase::Done => StateName::Done,
            Phase::Aborted => StateName::Aborted,
        }
    }

    fn is_contacting(self) -> bool {
        matches!(self, Phase::Reserve | Phase::Failure)
    }
}

#[derive(Clone, Copy, Debug)]
struct PendingRequest {
    attempt: u32,
    timeout: EventHandle,
}

/// What the client does in response to one discovery, for the pure
/// decision helper [`on_discover`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscoverAction {
    Contact,
    Queue,
    Ignore,
}

/// Decision rule for a freshly discovered machine while reserving: contact
/// it if fewer than `needed` machines are held or requested and the
/// outstanding-request cap allows, queue it if only the cap is in the way,
/// ignore it if already contacted or nothing more is needed.
pub fn on_discover(
    held: u32,
    in_flight: u32,
    needed: u32,
    max_outstanding: u32,
    already_contacted: bool,
) -> DiscoverAction {
    if already_contacted || held >= needed {
        DiscoverAction::Ignore
    } else if held + in_flight < needed && in_flight < max_outstanding {
        DiscoverAction::Contact
    } else {
        DiscoverAction::Queue
    }
}

/// A client actor driving one job.
#[derive(Clone, Debug)]
pub struct Client {
    id: ClientId,
    spec: ClientSpec,
    phase: Phase,
    /// Contact round: bumped for each reservation attempt and each entry
    /// into failure handling. Carried by every request.
    attempt: u32,
    retries: u32,
    reserved: BTreeSet<MachineId>,
    contacted: BTreeSet<(MachineId, u32)>,
    ever_contacted: BTreeSet<MachineId>,
    backlog: Vec<(MachineId, u32)>,
    pending: BTreeMap<MachineId, PendingRequest>,
    awaiting_ack2: BTreeMap<MachineId, EventHandle>,
    ack3: BTreeSet<MachineId>,
    replacements_needed: u32,
    attempt_timer: Option<EventHandle>,
    idle_timer: Option<EventHandle>,
    done_at: Option<SimTime>,
}

impl Client {
    pub fn new(id: ClientId, spec: ClientSpec) -> Self {
        Client {
            id,
            spec,
            phase: Phase::Begin,
            attempt: 0,
            retries: 0,
            reserved: BTreeSet::new(),
            contacted: BTreeSet::new(),
            ever_contacted: BTreeSet::new(),
            backlog: Vec::new(),
            pending: BTreeMap::new(),
            awaiting_ack2: BTreeMap::new(),
            ack3: BTreeSet::new(),
            replacements_needed: 0,
            attempt_timer: None,
            idle_timer: None,
            done_at: None,
        }
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn job(&self) -> JobId {
        self.id.job()
    }

    pub fn spec(&self) -> &ClientSpec {
        &self.spec
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn reserved(&self) -> &BTreeSet<MachineId> {
        &self.reserved
    }

    /// OK answers held in the current attempt.
    pub fn ok_count(&self) -> u32 {
        self.reserved.len() as u32
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    fn nb(&self) -> u32 {
        self.spec.nb_nodes
    }

    fn set(&mut self, k: &mut Kernel, next: Phase, label: EdgeLabel, info: String) {
        let from = self.phase.name();
        self.phase = next;
        k.transition(self.id, Some(from), next.name(), label, info);
    }

    fn counters(&self) -> String {
        format!("ok={}/{}", self.reserved.len(), self.nb())
    }

    pub fn start(&mut self, k: &mut Kernel) {
        k.transition(self.id, None, StateName::Begin, EdgeLabel::Init, "");
        k.schedule_at(self.spec.submit_at, Event::Submit(self.id));
    }

    pub fn on_submit(&mut self, k: &mut Kernel) {
        if self.phase == Phase::Begin && self.attempt == 0 {
            self.enter_reserve(k, EdgeLabel::Submit);
        }
    }

    pub fn on_retry(&mut self, k: &mut Kernel, attempt: u32) {
        if self.phase == Phase::Begin && attempt == self.attempt {
            self.enter_reserve(k, EdgeLabel::Retry);
        }
    }

    fn enter_reserve(&mut self, k: &mut Kernel, label: EdgeLabel) {
        debug_assert!(self.reserved.is_empty());
        self.attempt += 1;
        self.contacted.clear();
        self.backlog.clear();
        let info = format!("attempt={}", self.attempt);
        self.set(k, Phase::Reserve, label, info);
        k.subscribe(self.id);
        match self.spec.semantics {
            Semantics::Wait { timeout } => {
                let attempt = self.attempt;
                self.attempt_timer =
                    Some(k.timer(self.id, timeout, Guard::AttemptTimeout { attempt }));
            }
            Semantics::Fail => self.arm_idle(k),
            Semantics::Hold => {}
        }
    }

    /// Machines still to obtain in the current phase.
    fn needed(&self) -> u32 {
        match self.phase {
            Phase::Reserve => self.nb() - self.ok_count(),
            Phase::Failure => self.replacements_needed,
            _ => 0,
        }
    }

    /// Discoveries for this client, in bus order.
    pub fn on_discoveries(&mut self, k: &mut Kernel, found: &[(MachineId, u32)]) {
        if !self.phase.is_contacting() {
            return;
        }
        for &(machine, epoch) in found {
            let seen = self.contacted.contains(&(machine, epoch))
                || self.backlog.contains(&(machine, epoch))
                || self.reserved.contains(&machine);
            if !seen {
                self.backlog.push((machine, epoch));
            }
        }
        self.pump(k);
    }

    fn next_from_backlog(&mut self) -> Option<(MachineId, u32)> {
        if self.backlog.is_empty() {
            return None;
        }
        let idx = match self.spec.contact_order {
            ContactOrder::Discovery => 0,
            ContactOrder::HighestId => {
                let (idx, _) = self
                    .backlog
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, (m, _))| *m)
                    .expect("non-empty");
                idx
            }
        };
        Some(self.backlog.remove(idx))
    }

    /// Contacts backlog machines while the phase needs more and the
    /// outstanding-request cap allows.
    fn pump(&mut self, k: &mut Kernel) {
        while self.phase.is_contacting() {
            let action = on_discover(
                0,
                self.pending.len() as u32,
                self.needed(),
                self.spec.max_outstanding,
                false,
            );
            if action != DiscoverAction::Contact {
                break;
            }
            let Some((machine, epoch)) = self.next_from_backlog() else {
                break;
            };
            if self.contacted.contains(&(machine, epoch))
                || self.reserved.contains(&machine)
                || self.pending.contains_key(&machine)
            {
                continue;
            }
            self.contact(k, machine, epoch);
        }
        self.refresh_idle(k);
    }

    fn contact(&mut self, k: &mut Kernel, machine: MachineId, epoch: u32) {
        let attempt = self.attempt;
        self.contacted.insert((machine, epoch));
        self.ever_contacted.insert(machine);
        let info = format!("{machine} {}", self.counters());
        self.set(k, self.phase, EdgeLabel::Request, info);
        k.send(Message::job(
            Action::Request,
            self.id,
            machine,
            self.job(),
            attempt,
        ));
        let timeout = k.timer(
            self.id,
            self.spec.reply_timeout,
            Guard::ReplyTimeout { machine, attempt },
        );
        self.pending
            .insert(machine, PendingRequest { attempt, timeout });
    }

    fn arm_idle(&mut self, k: &mut Kernel) {
        k.cancel_opt(&mut self.idle_timer);
        let attempt = self.attempt;
        self.idle_timer = Some(k.timer(
            self.id,
            self.spec.attempt_window,
            Guard::AttemptIdle { attempt },
        ));
    }

    /// Under fail semantics, keep an idle timer armed exactly while the
    /// attempt has nothing left to do.
    fn refresh_idle(&mut self, k: &mut Kernel) {
        if self.spec.semantics != Semantics::Fail || self.phase != Phase::Reserve {
            return;
        }
        if self.pending.is_empty() && self.backlog.is_empty() {
            self.arm_idle(k);
        } else {
            k.cancel_opt(&mut self.idle_timer);
        }
    }

    pub fn on_message(&mut self, k: &mut Kernel, message: &Message) {
        let crate::kernel::message::ActorId::Machine(machine) = message.from else {
            k.note(self.id, format!("unexpected sender {}", message.from));
            return;
        };
        match message.action {
            Action::ReplyOk | Action::ReplyKo => self.on_reply(k, machine, message),
            Action::Ack2 => self.on_ack2(k, machine),
            Action::Ack3 => self.on_ack3(k, machine),
            other => k.note(self.id, format!("unexpected {other} ignored")),
        }
    }

    fn on_reply(&mut self, k: &mut Kernel, machine: MachineId, reply: &Message) {
        let attempt = reply.attempt();
        let current = self
            .pending
            .get(&machine)
            .is_some_and(|p| p.attempt == attempt && attempt == self.attempt)
            && self.phase.is_contacting();
        if !current {
            if reply.action == Action::ReplyOk {
                if self.ever_contacted.contains(&machine) {
                    // A grant we no longer want: hand it straight back.
                    k.note(
                        self.id,
                        format!("stale ok from {machine} attempt={attempt}, cancelling"),
                    );
                    k.send(Message::job(
                        Action::Cancel,
                        self.id,
                        machine,
                        self.job(),
                        attempt,
                    ));
                } else {
                    k.note(
                        self.id,
                        format!("protocol violation: ok from uncontacted {machine}"),
                    );
                }
            }
            return;
        }
        let pending = self.pending.remove(&machine).expect("checked above");
        k.cancel(pending.timeout);
        match reply.action {
            Action::ReplyOk => self.on_ok(k, machine),
            _ => {
                let info = format!("{machine} {}", self.counters());
                self.set(k, self.phase, EdgeLabel::Ko, info);
                self.pump(k);
            }
        }
    }

    fn on_ok(&mut self, k: &mut Kernel, machine: MachineId) {
        self.reserved.insert(machine);
        match self.phase {
            Phase::Reserve if self.ok_count() == self.nb() => self.enter_launch(k),
            Phase::Reserve => {
                let info = format!("{machine} {}", self.counters());
                self.set(k, Phase::Reserve, EdgeLabel::Ok, info);
                self.pump(k);
            }
            Phase::Failure => {
                self.replacements_needed -= 1;
                let info = format!(
                    "{machine} replacement, still needed={}",
                    self.replacements_needed
                );
                self.set(k, Phase::Failure, EdgeLabel::Ok, info);
                self.launch_one(k, machine);
                if self.replacements_needed == 0 {
                    k.unsubscribe(self.id);
                    self.backlog.clear();
                } else {
                    self.pump(k);
                }
            }
            _ => unreachable!("replies are only current while contacting"),
        }
    }

    pub fn on_timer(&mut self, k: &mut Kernel, guard: Guard) {
        match guard {
            Guard::ReplyTimeout { machine, attempt } => {
                let live = self
                    .pending
                    .get(&machine)
                    .is_some_and(|p| p.attempt == attempt);
                if live && self.phase.is_contacting() && attempt == self.attempt {
                    self.pending.remove(&machine);
                    let info = format!("{machine} {}", self.counters());
                    self.set(k, self.phase, EdgeLabel::Silence, info);
                    self.pump(k);
                }
            }
            Guard::AttemptTimeout { attempt } => {
                self.attempt_timer = None;
                if self.phase == Phase::Reserve && attempt == self.attempt {
                    self.end_attempt(k, EdgeLabel::Timeout);
                }
            }
            Guard::AttemptIdle { attempt } => {
                self.idle_timer = None;
                if self.phase == Phase::Reserve
                    && attempt == self.attempt
                    && self.pending.is_empty()
                    && self.backlog.is_empty()
                {
                    self.end_attempt(k, EdgeLabel::Free);
                }
            }
            Guard::LaunchTimeout { machine, .. } => {
                if self.awaiting_ack2.remove(&machine).is_some() {
                    self.lose_machine(k, machine, EdgeLabel::LaunchTimeout);
                }
            }
            other => k.note(self.id, format!("unexpected timer {other:?}")),
        }
    }

    /// Gives back every held machine and either schedules a retry or gives
    /// up when the retry budget is spent.
    fn end_attempt(&mut self, k: &mut Kernel, label: EdgeLabel) {
        for &machine in &self.reserved {
            k.send(Message::job(
                Action::Cancel,
                self.id,
                machine,
                self.job(),
                self.attempt,
            ));
        }
        let released = self.reserved.len();
        self.reserved.clear();
        for (_, p) in std::mem::take(&mut self.pending) {
            k.cancel(p.timeout);
        }
        self.backlog.clear();
        k.unsubscribe(self.id);
        k.cancel_opt(&mut self.attempt_timer);
        k.cancel_opt(&mut self.idle_timer);

        let exhausted = self.spec.max_retries.is_some_and(|max| self.retries >= max);
        if exhausted {
            let info = format!("released={released} retries={}", self.retries);
            self.set(k, Phase::Aborted, EdgeLabel::GiveUp, info);
            return;
        }
        self.retries += 1;
        let delay = match self.spec.retry_delay {
            RetryDelay::Fixed(d) => d,
            RetryDelay::Uniform { lo, hi } => k.uniform_closed(self.id, lo, hi),
        };
        let info = format!("released={released} retry_in={delay}");
        self.set(k, Phase::Begin, label, info);
        k.schedule_in(
            delay,
            Event::RetryTimer {
                client: self.id,
                attempt: self.attempt,
            },
        );
    }

    fn enter_launch(&mut self, k: &mut Kernel) {
        k.cancel_opt(&mut self.attempt_timer);
        k.cancel_opt(&mut self.idle_timer);
        k.unsubscribe(self.id);
        self.backlog.clear();
        self.ack3.clear();
        let info = self.counters();
        self.set(k, Phase::Launch, EdgeLabel::Enough, info);
        let machines: Vec<_> = self.reserved.iter().copied().collect();
        for machine in machines {
            self.launch_one(k, machine);
        }
    }

    fn launch_one(&mut self, k: &mut Kernel, machine: MachineId) {
        let attempt = self.attempt;
        k.send(Message::job(
            Action::Launch,
            self.id,
            machine,
            self.job(),
            attempt,
        ));
        let timer = k.timer(
            self.id,
            self.spec.launch_timeout,
            Guard::LaunchTimeout { machine, attempt },
        );
        self.awaiting_ack2.insert(machine, timer);
    }

    fn on_ack2(&mut self, k: &mut Kernel, machine: MachineId) {
        let Some(timer) = self.awaiting_ack2.remove(&machine) else {
            return;
        };
        k.cancel(timer);
        let all_started = self.awaiting_ack2.is_empty();
        match self.phase {
            Phase::Launch if all_started => {
                self.set(k, Phase::Wait, EdgeLabel::Started, format!("{machine}"));
            }
            Phase::Failure if all_started && self.replacements_needed == 0 => {
                self.set(k, Phase::Wait, EdgeLabel::Replaced, format!("{machine}"));
            }
            phase => self.set(k, phase, EdgeLabel::Ack2, format!("{machine}")),
        }
    }

    fn on_ack3(&mut self, k: &mut Kernel, machine: MachineId) {
        if !self.reserved.contains(&machine) || !self.ack3.insert(machine) {
            return;
        }
        if self.phase == Phase::Wait && self.all_done() {
            self.finish(k);
        } else {
            let info = format!("{machine} done={}/{}", self.ack3.len(), self.nb());
            self.set(k, self.phase, EdgeLabel::Ack3, info);
        }
    }

    fn all_done(&self) -> bool {
        self.reserved.len() as u32 == self.nb()
            && self.awaiting_ack2.is_empty()
            && self.replacements_needed == 0
            && self.reserved.iter().all(|m| self.ack3.contains(m))
    }

    fn finish(&mut self, k: &mut Kernel) {
        let info = format!("done={}/{}", self.ack3.len(), self.nb());
        self.set(k, Phase::Done, EdgeLabel::AllDone, info);
        self.done_at = Some(k.now());
        for &machine in &self.reserved {
            k.send(Message::job(
                Action::Release,
                self.id,
                machine,
                self.job(),
                self.attempt,
            ));
        }
    }

    pub fn on_failure_detected(&mut self, k: &mut Kernel, machine: MachineId) {
        if !matches!(self.phase, Phase::Launch | Phase::Wait | Phase::Failure) {
            return;
        }
        if let Some(timer) = self.awaiting_ack2.remove(&machine) {
            k.cancel(timer);
        }
        self.lose_machine(k, machine, EdgeLabel::FailureDetected);
    }

    /// A launched machine is gone: drop it and look for a replacement that
    /// will rerun its process from the start.
    fn lose_machine(&mut self, k: &mut Kernel, machine: MachineId, label: EdgeLabel) {
        if !self.reserved.remove(&machine) {
            return;
        }
        self.ack3.remove(&machine);
        self.replacements_needed += 1;
        let info = format!("{machine} needed={}", self.replacements_needed);
        if self.phase == Phase::Failure {
            self.set(k, Phase::Failure, label, info);
            if !k.bus().is_subscribed(self.id) {
                k.subscribe(self.id);
            }
            self.pump(k);
        } else {
            self.attempt += 1;
            self.contacted.clear();
            self.backlog.clear();
            self.set(k, Phase::Failure, label, info);
            k.subscribe(self.id);
        }
    }
}

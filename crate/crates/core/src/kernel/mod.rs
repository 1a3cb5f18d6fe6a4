//! Deterministic virtual-time engine shared by all automata.
//!
//! A [`Kernel`] owns the event queue, the trace, the randomness source and
//! the discovery bus. Automata are plain structs whose handlers take
//! `&mut Kernel` to send messages, arm timers and log transitions.

pub mod message;
pub mod queue;
pub mod random;
pub mod trace;

use crate::bus::{Bus, BusConfig};
use crate::time::SimTime;

use message::{Action, ActorId, ClientId, MachineId, Message, Target};
use queue::{Dispatched, EventHandle, EventQueue};
use random::{Probability, Randomness};
use trace::{EdgeLabel, Entry, StateName, Trace, TraceRecord};

/// Clock guards. Each names the timer an automaton armed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Guard {
    ExecutionDone,
    Death,
    IdleFailure,
    LocalLeave,
    Return,
    ReservedFailure,
    FinishedFailure,
    ReplyTimeout { machine: MachineId, attempt: u32 },
    AttemptTimeout { attempt: u32 },
    AttemptIdle { attempt: u32 },
    LaunchTimeout { machine: MachineId, attempt: u32 },
    Snapshot { client: ClientId, subscription: u32 },
    StaleExpiry { machine: MachineId, epoch: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Deliver(Message),
    ClockExpire {
        owner: ActorId,
        guard: Guard,
    },
    FailureDetected {
        machine: MachineId,
        client: ClientId,
    },
    Submit(ClientId),
    RetryTimer {
        client: ClientId,
        attempt: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    /// Unicast delivery delay.
    pub latency: SimTime,
}

pub struct Kernel {
    queue: EventQueue<Event>,
    trace: Trace,
    random: Box<dyn Randomness>,
    bus: Bus,
    net: NetConfig,
}

impl Kernel {
    pub fn new(net: NetConfig, bus: BusConfig, random: Box<dyn Randomness>) -> Self {
        Kernel {
            queue: EventQueue::new(),
            trace: Trace::new(),
            random,
            bus: Bus::new(bus),
            net,
        }
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn net(&self) -> NetConfig {
        self.net
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Schedules an event. Scheduling in the past is a programming error and
    /// aborts the run.
    pub fn schedule_at(&mut self, at: SimTime, event: Event) -> EventHandle {
        match self.queue.schedule(at, event) {
            Ok(h) => h,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: Event) -> EventHandle {
        let at = self.now() + delay;
        self.schedule_at(at, event)
    }

    pub fn timer(
        &mut self,
        owner: impl Into<ActorId>,
        delay: SimTime,
        guard: Guard,
    ) -> EventHandle {
        self.schedule_in(
            delay,
            Event::ClockExpire {
                owner: owner.into(),
                guard,
            },
        )
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.queue.cancel(handle)
    }

    pub fn cancel_opt(&mut self, handle: &mut Option<EventHandle>) {
        if let Some(h) = handle.take() {
            self.queue.cancel(h);
        }
    }

    pub(crate) fn next_event(&mut self, horizon: SimTime) -> Option<Dispatched<Event>> {
        self.queue.pop_until(horizon)
    }

    fn record(&mut self, actor: ActorId, entry: Entry) {
        let at = self.now();
        self.trace.push(TraceRecord { at, actor, entry });
    }

    pub fn transition(
        &mut self,
        actor: impl Into<ActorId>,
        from: Option<StateName>,
        to: StateName,
        label: EdgeLabel,
        info: impl Into<String>,
    ) {
        self.record(
            actor.into(),
            Entry::Transition {
                from,
                to,
                label,
                info: info.into(),
            },
        );
    }

    pub fn note(&mut self, actor: impl Into<ActorId>, text: impl Into<String>) {
        self.record(actor.into(), Entry::Note(text.into()));
    }

    pub(crate) fn record_recv(&mut self, message: Message) {
        if let Target::Actor(actor) = message.to {
            self.record(actor, Entry::Recv(message));
        }
    }

    pub(crate) fn record_discover(
        &mut self,
        client: ClientId,
        machine: MachineId,
        epoch: u32,
        stale: bool,
    ) {
        self.record(
            ActorId::Client(client),
            Entry::Discover {
                machine,
                epoch,
                stale,
            },
        );
    }

    /// Sends a unicast message, delivered after the network latency.
    pub fn send(&mut self, message: Message) {
        assert!(
            message.is_well_addressed() && !message.action.is_multicast(),
            "unicast send of {message}"
        );
        self.record(message.from, Entry::Send(message));
        let latency = self.net.latency;
        self.schedule_in(latency, Event::Deliver(message));
    }

    fn announce(&mut self, action: Action, machine: MachineId, epoch: u32) {
        let message = Message::announcement(action, machine, epoch);
        self.record(ActorId::Machine(machine), Entry::Send(message));
        let latency = self.bus.config().latency;
        self.schedule_in(latency, Event::Deliver(message));
    }

    pub fn advertise(&mut self, machine: MachineId) {
        match self.bus.advertise(machine) {
            Some(epoch) => self.announce(Action::Advertise, machine, epoch),
            None => self.note(machine, "advertise ignored: already advertised"),
        }
    }

    pub fn withdraw(&mut self, machine: MachineId) {
        match self.bus.withdraw(machine) {
            Some(epoch) => self.announce(Action::Withdraw, machine, epoch),
            None => self.note(machine, "withdraw ignored: not advertised"),
        }
    }

    /// Starts listening; the snapshot of visible machines arrives after the
    /// bus latency.
    pub fn subscribe(&mut self, client: ClientId) {
        let subscription = self.bus.subscribe(client);
        let latency = self.bus.config().latency;
        self.timer(
            ActorId::Bus,
            latency,
            Guard::Snapshot {
                client,
                subscription,
            },
        );
    }

    pub fn unsubscribe(&mut self, client: ClientId) {
        self.bus.unsubscribe(client);
    }

    pub fn bernoulli(&mut self, actor: impl Into<ActorId>, p: Probability) -> bool {
        self.random.bernoulli(actor.into(), p)
    }

    pub fn uniform_open(&mut self, actor: impl Into<ActorId>, lo: SimTime, hi: SimTime) -> SimTime {
        self.random.uniform_open(actor.into(), lo, hi)
    }

    pub fn uniform_closed(
        &mut self,
        actor: impl Into<ActorId>,
        lo: SimTime,
        hi: SimTime,
    ) -> SimTime {
        self.random.uniform_closed(actor.into(), lo, hi)
    }
}

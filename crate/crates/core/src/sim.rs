//! Wires machines, clients and the bus to the kernel and dispatches events.

use crate::client::{Client, Phase};
use crate::kernel::message::{Action, ActorId, ClientId, MachineId, Target};
use crate::kernel::random::{Randomness, SeededStreams};
use crate::kernel::trace::Trace;
use crate::kernel::{Event, Guard, Kernel};
use crate::machine::{FailureBudget, Machine, MachineParams};
use crate::scenario::Scenario;
use crate::time::SimTime;

pub struct Simulation {
    kernel: Kernel,
    machines: Vec<Machine>,
    clients: Vec<Client>,
    params: MachineParams,
    budget: Option<FailureBudget>,
    horizon: SimTime,
}

impl Simulation {
    /// Builds every actor and places it in its initial state at time zero,
    /// machines first, in id order.
    pub fn new(scenario: &Scenario, random: Box<dyn Randomness>) -> Self {
        let mut kernel = Kernel::new(scenario.net, scenario.bus, random);
        let params = scenario.machine;
        let mut machines: Vec<Machine> = (0..scenario.n_machines)
            .map(|i| Machine::new(MachineId(i)))
            .collect();
        for m in &mut machines {
            m.start(&mut kernel, &params);
        }
        let mut clients: Vec<Client> = scenario
            .clients
            .iter()
            .enumerate()
            .map(|(i, spec)| Client::new(ClientId(i as u32), *spec))
            .collect();
        for c in &mut clients {
            c.start(&mut kernel);
        }
        let budget = scenario
            .budget_kills()
            .map(|kills| FailureBudget::new(kills, scenario.clients.len()));
        Simulation {
            kernel,
            machines,
            clients,
            params,
            budget,
            horizon: scenario.horizon,
        }
    }

    pub fn seeded(scenario: &Scenario, seed: u64) -> Self {
        Simulation::new(scenario, Box::new(SeededStreams::new(seed)))
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    /// Dispatches one event due at or before `horizon`. Returns false once
    /// nothing is left to do before it.
    pub fn step(&mut self, horizon: SimTime) -> bool {
        match self.kernel.next_event(horizon) {
            Some(d) => {
                self.dispatch(d.payload);
                true
            }
            None => false,
        }
    }

    /// Runs until the queue drains or the next event lies past `horizon`.
    /// The clock never passes `horizon`.
    pub fn run_until(&mut self, horizon: SimTime) {
        while self.step(horizon) {}
    }

    /// Runs to the scenario horizon and returns the trace.
    pub fn run(mut self) -> Trace {
        self.run_until(self.horizon);
        self.kernel.into_trace()
    }

    /// Runs to the scenario horizon and also reports each client's fate.
    pub fn run_with_outcome(mut self) -> (Trace, Vec<Phase>) {
        self.run_until(self.horizon);
        let phases = self.clients.iter().map(Client::phase).collect();
        (self.kernel.into_trace(), phases)
    }

    fn dispatch(&mut self, event: Event) {
        let k = &mut self.kernel;
        match event {
            Event::Deliver(message) => match message.to {
                Target::Multicast => {
                    let machine = message
                        .payload
                        .machine
                        .expect("announcements name a machine");
                    let epoch = message.payload.epoch.expect("announcements carry an epoch");
                    match message.action {
                        Action::Advertise => {
                            let sent_at = k.now() - k.bus().config().latency;
                            let found = k.bus_mut().advertisement_arrived(machine, epoch, sent_at);
                            for d in found {
                                k.record_discover(d.client, d.machine, d.epoch, d.stale);
                                self.clients[d.client.0 as usize]
                                    .on_discoveries(k, &[(d.machine, d.epoch)]);
                            }
                        }
                        Action::Withdraw => {
                            if k.bus_mut().withdrawal_arrived(machine, epoch) {
                                let staleness = k.bus().config().staleness;
                                k.timer(
                                    ActorId::Bus,
                                    staleness,
                                    Guard::StaleExpiry { machine, epoch },
                                );
                            }
                        }
                        other => unreachable!("{other} is not multicast"),
                    }
                }
                Target::Actor(actor) => {
                    k.record_recv(message);
                    match actor {
                        ActorId::Machine(m) => self.machines[m.0 as usize].on_message(
                            k,
                            &message,
                            &self.params,
                            self.budget.as_mut(),
                        ),
                        ActorId::Client(c) => self.clients[c.0 as usize].on_message(k, &message),
                        ActorId::Bus => k.note(ActorId::Bus, format!("unexpected {message}")),
                    }
                }
            },
            Event::ClockExpire { owner, guard } => match owner {
                ActorId::Machine(m) => self.machines[m.0 as usize].on_timer(k, guard, &self.params),
                ActorId::Client(c) => self.clients[c.0 as usize].on_timer(k, guard),
                ActorId::Bus => match guard {
                    Guard::Snapshot {
                        client,
                        subscription,
                    } => {
                        let found = k.bus_mut().snapshot(client, subscription);
                        if found.is_empty() {
                            return;
                        }
                        for d in &found {
                            k.record_discover(d.client, d.machine, d.epoch, d.stale);
                        }
                        let batch: Vec<_> = found.iter().map(|d| (d.machine, d.epoch)).collect();
                        self.clients[client.0 as usize].on_discoveries(k, &batch);
                    }
                    Guard::StaleExpiry { machine, epoch } => k.bus_mut().expire(machine, epoch),
                    other => k.note(ActorId::Bus, format!("unexpected timer {other:?}")),
                },
            },
            Event::FailureDetected { machine, client } => {
                self.clients[client.0 as usize].on_failure_detected(k, machine);
            }
            Event::Submit(client) => self.clients[client.0 as usize].on_submit(k),
            Event::RetryTimer { client, attempt } => {
                self.clients[client.0 as usize].on_retry(k, attempt)
            }
        }
    }
}

/// One seeded run of `scenario` to its horizon.
pub fn simulate(scenario: &Scenario, seed: u64) -> Trace {
    Simulation::seeded(scenario, seed).run()
}

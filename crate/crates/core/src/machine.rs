//! Per-machine automaton with the running-state volatility refinement and
//! the exclusive-access reply rule.
//!
//! The pure transition functions (`handle_request`, `handle_cancel`,
//! `start_execution`, `complete`, `release`) decide the next state; the
//! [`Machine`] actor applies their side effects through the kernel.

use crate::kernel::message::{Action, ClientId, JobId, MachineId, Message};
use crate::kernel::queue::EventHandle;
use crate::kernel::random::Probability;
use crate::kernel::trace::{EdgeLabel, StateName};
use crate::kernel::{Event, Guard, Kernel};
use crate::time::SimTime;

/// What happens to a machine that fails while idle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdleFailureMode {
    /// Goes to `unavailable` and answers KO.
    Unavailable,
    /// Dies but may linger on the bus; never answers requests.
    Silent,
}

impl IdleFailureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            IdleFailureMode::Unavailable => "unavailable",
            IdleFailureMode::Silent => "silent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MachineParams {
    /// Probability that a launched process's machine dies during execution.
    pub lambda: Probability,
    /// Process execution time `T`.
    pub exec_time: SimTime,
    /// Extra execution time drawn uniformly from `[0, exec_jitter]`.
    pub exec_jitter: SimTime,
    /// Chance, on each entry into `available`, that a local user takes the
    /// machine away for `unavailable_duration`.
    pub unavailable_rate: Probability,
    pub unavailable_duration: SimTime,
    /// Chance, on each entry into `available`, of an idle failure.
    pub idle_failure: Probability,
    pub idle_failure_mode: IdleFailureMode,
    /// Chance that a machine dies right after granting a reservation.
    pub reserved_failure: Probability,
    /// Chance that a machine fails after reporting completion.
    pub finished_failure: Probability,
    /// Failure detector latency.
    pub detection_delay: SimTime,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            lambda: Probability::ZERO,
            exec_time: SimTime::from_units(10),
            exec_jitter: SimTime::ZERO,
            unavailable_rate: Probability::ZERO,
            unavailable_duration: SimTime::from_units(10),
            idle_failure: Probability::ZERO,
            idle_failure_mode: IdleFailureMode::Unavailable,
            reserved_failure: Probability::ZERO,
            finished_failure: Probability::ZERO,
            detection_delay: SimTime::from_units(1),
        }
    }
}

/// Running sub-state: a sustained process finishes, a fragile one dies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    Sustain { finish_at: SimTime },
    Fragile { death_at: SimTime },
}

/// The job binding of a reserved, running or finished machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Binding {
    pub job: JobId,
    pub attempt: u32,
}

impl Binding {
    fn of(message: &Message) -> Option<Binding> {
        Some(Binding {
            job: message.job_id()?,
            attempt: message.attempt(),
        })
    }

    fn matches(&self, message: &Message) -> bool {
        Binding::of(message) == Some(*self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MachineState {
    Available,
    Unavailable,
    Reserved(Binding),
    Running {
        binding: Binding,
        started_at: SimTime,
        fate: Fate,
    },
    Finished(Binding),
    Dead,
}

impl MachineState {
    pub fn name(&self) -> StateName {
        match self {
            MachineState::Available => StateName::Available,
            MachineState::Unavailable => StateName::Unavailable,
            MachineState::Reserved(_) => StateName::Reserved,
            MachineState::Running {
                fate: Fate::Sustain { .. },
                ..
            } => StateName::RunningSustain,
            MachineState::Running {
                fate: Fate::Fragile { .. },
                ..
            } => StateName::RunningFragile,
            MachineState::Finished(_) => StateName::Finished,
            MachineState::Dead => StateName::Dead,
        }
    }

    pub fn binding(&self) -> Option<Binding> {
        match *self {
            MachineState::Reserved(b)
            | MachineState::Finished(b)
            | MachineState::Running { binding: b, .. } => Some(b),
            _ => None,
        }
    }
}

/// Reply and successor state for a reservation request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestOutcome {
    /// `None` means the machine stays silent.
    pub reply: Option<Action>,
    pub next: MachineState,
}

/// Only an available machine can be reserved; every other live state
/// answers KO and a dead machine answers nothing.
pub fn handle_request(state: &MachineState, request: &Message) -> RequestOutcome {
    debug_assert_eq!(request.action, Action::Request);
    match (state, Binding::of(request)) {
        (MachineState::Available, Some(binding)) => RequestOutcome {
            reply: Some(Action::ReplyOk),
            next: MachineState::Reserved(binding),
        },
        (MachineState::Dead, _) => RequestOutcome {
            reply: None,
            next: MachineState::Dead,
        },
        _ => RequestOutcome {
            reply: Some(Action::ReplyKo),
            next: *state,
        },
    }
}

/// A cancel frees a reservation only before launch, and only for the
/// holder's own contact round.
pub fn handle_cancel(state: &MachineState, cancel: &Message) -> MachineState {
    debug_assert_eq!(cancel.action, Action::Cancel);
    match state {
        MachineState::Reserved(b) if b.matches(cancel) => MachineState::Available,
        other => *other,
    }
}

/// Starts the process for the reserved job. Returns `None` when the launch
/// does not match the reservation.
pub fn start_execution(
    state: &MachineState,
    launch: &Message,
    fate: Fate,
    now: SimTime,
) -> Option<MachineState> {
    debug_assert_eq!(launch.action, Action::Launch);
    match state {
        MachineState::Reserved(b) if b.matches(launch) => Some(MachineState::Running {
            binding: *b,
            started_at: now,
            fate,
        }),
        _ => None,
    }
}

/// Execution guard expiry: a sustained process reaches `finished`.
pub fn complete(state: &MachineState, now: SimTime) -> Option<MachineState> {
    match state {
        MachineState::Running {
            binding,
            fate: Fate::Sustain { finish_at },
            ..
        } if now >= *finish_at => Some(MachineState::Finished(*binding)),
        _ => None,
    }
}

/// The job's owner releases a finished machine.
pub fn release(state: &MachineState, message: &Message) -> Option<MachineState> {
    debug_assert_eq!(message.action, Action::Release);
    match state {
        MachineState::Finished(b) if b.job == message.job_id()? => Some(MachineState::Available),
        _ => None,
    }
}

/// Draws a running fate for a launch at `now`. With probability `lambda` the
/// process is doomed and the death instant is uniform over the execution
/// interval; otherwise it finishes after `T` plus optional jitter.
pub fn draw_fate(k: &mut Kernel, machine: MachineId, params: &MachineParams) -> Fate {
    let now = k.now();
    let doomed = k.bernoulli(machine, params.lambda);
    fate_for(k, machine, params, now, doomed)
}

fn fate_for(
    k: &mut Kernel,
    machine: MachineId,
    params: &MachineParams,
    now: SimTime,
    doomed: bool,
) -> Fate {
    if doomed {
        Fate::Fragile {
            death_at: k.uniform_open(machine, now, now + params.exec_time),
        }
    } else {
        let jitter = if params.exec_jitter > SimTime::ZERO {
            k.uniform_closed(machine, SimTime::ZERO, params.exec_jitter)
        } else {
            SimTime::ZERO
        };
        Fate::Sustain {
            finish_at: now + params.exec_time + jitter,
        }
    }
}

/// Worst-case failure mode: instead of per-launch draws, a fixed number of
/// machines die right after launch, spread over distinct jobs first.
#[derive(Clone, Debug)]
pub struct FailureBudget {
    remaining: u32,
    jobs_hit: Vec<JobId>,
    n_jobs: usize,
}

impl FailureBudget {
    pub fn new(kills: u32, n_jobs: usize) -> Self {
        FailureBudget {
            remaining: kills,
            jobs_hit: Vec::new(),
            n_jobs,
        }
    }

    pub fn remaining(&self) -> u32 {
        self.remaining
    }

    /// Decides whether the launch of `job` consumes one kill.
    pub fn take(&mut self, job: JobId) -> bool {
        if self.remaining == 0 {
            return false;
        }
        let fresh = !self.jobs_hit.contains(&job);
        if fresh || self.jobs_hit.len() >= self.n_jobs {
            self.remaining -= 1;
            if fresh {
                self.jobs_hit.push(job);
            }
            true
        } else {
            false
        }
    }
}

/// A machine actor.
#[derive(Clone, Debug)]
pub struct Machine {
    id: MachineId,
    state: MachineState,
    idle_timer: Option<EventHandle>,
}

impl Machine {
    pub fn new(id: MachineId) -> Self {
        Machine {
            id,
            state: MachineState::Available,
            idle_timer: None,
        }
    }

    pub fn id(&self) -> MachineId {
        self.id
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    fn owner(&self) -> Option<ClientId> {
        self.state.binding().map(|b| b.job.client())
    }

    fn set(&mut self, k: &mut Kernel, next: MachineState, label: EdgeLabel, info: String) {
        let from = self.state.name();
        self.state = next;
        k.transition(self.id, Some(from), next.name(), label, info);
    }

    /// Places the machine in `available` at time zero.
    pub fn start(&mut self, k: &mut Kernel, params: &MachineParams) {
        self.state = MachineState::Available;
        k.transition(self.id, None, StateName::Available, EdgeLabel::Init, "");
        self.on_enter_available(k, params);
    }

    fn become_available(
        &mut self,
        k: &mut Kernel,
        params: &MachineParams,
        label: EdgeLabel,
        info: String,
    ) {
        self.set(k, MachineState::Available, label, info);
        self.on_enter_available(k, params);
    }

    /// Advertise, then draw the idle-period hazards.
    fn on_enter_available(&mut self, k: &mut Kernel, params: &MachineParams) {
        k.advertise(self.id);
        let fails = k.bernoulli(self.id, params.idle_failure);
        let leaves = k.bernoulli(self.id, params.unavailable_rate);
        let guard = if fails {
            Guard::IdleFailure
        } else if leaves {
            Guard::LocalLeave
        } else {
            return;
        };
        let delay = k.uniform_open(self.id, SimTime::ZERO, params.exec_time);
        self.idle_timer = Some(k.timer(self.id, delay, guard));
    }

    fn leave_available(&mut self, k: &mut Kernel) {
        k.cancel_opt(&mut self.idle_timer);
        k.withdraw(self.id);
    }

    pub fn on_message(
        &mut self,
        k: &mut Kernel,
        message: &Message,
        params: &MachineParams,
        budget: Option<&mut FailureBudget>,
    ) {
        match message.action {
            Action::Request => self.on_request(k, message, params),
            Action::Cancel => self.on_cancel(k, message, params),
            Action::Launch => self.on_launch(k, message, params, budget),
            Action::Release => self.on_release(k, message, params),
            other => k.note(self.id, format!("unexpected {other} ignored")),
        }
    }

    fn on_request(&mut self, k: &mut Kernel, request: &Message, params: &MachineParams) {
        let outcome = handle_request(&self.state, request);
        let Some(reply) = outcome.reply else {
            return;
        };
        let (Some(job), attempt) = (request.job_id(), request.attempt()) else {
            k.note(self.id, "request without job ignored");
            return;
        };
        if reply == Action::ReplyOk {
            self.set(
                k,
                outcome.next,
                EdgeLabel::Request,
                format!("job={job} attempt={attempt}"),
            );
        }
        k.send(Message::job(
            reply,
            self.id,
            request.sender_client(),
            job,
            attempt,
        ));
        if reply == Action::ReplyOk {
            self.leave_available(k);
            if k.bernoulli(self.id, params.reserved_failure) {
                k.timer(self.id, SimTime::ZERO, Guard::ReservedFailure);
            }
        }
    }

    fn on_cancel(&mut self, k: &mut Kernel, cancel: &Message, params: &MachineParams) {
        let next = handle_cancel(&self.state, cancel);
        if next == self.state {
            if matches!(self.state, MachineState::Reserved(_)) {
                k.note(self.id, "cancel for another reservation ignored");
            }
            return;
        }
        let info = format!("job={} attempt={}", fmt_job(cancel), cancel.attempt());
        self.become_available(k, params, EdgeLabel::Cancel, info);
    }

    fn on_launch(
        &mut self,
        k: &mut Kernel,
        launch: &Message,
        params: &MachineParams,
        budget: Option<&mut FailureBudget>,
    ) {
        let MachineState::Reserved(binding) = self.state else {
            k.note(
                self.id,
                format!("launch ignored in state {}", self.state.name()),
            );
            return;
        };
        if !binding.matches(launch) {
            k.note(self.id, "launch for another reservation ignored");
            return;
        }
        k.send(Message::job(
            Action::Ack2,
            self.id,
            binding.job.client(),
            binding.job,
            binding.attempt,
        ));
        let now = k.now();
        let fate = match budget {
            Some(budget) => {
                if budget.take(binding.job) {
                    Fate::Fragile {
                        death_at: now + SimTime::from_ticks(1),
                    }
                } else {
                    fate_for(k, self.id, params, now, false)
                }
            }
            None => draw_fate(k, self.id, params),
        };
        let next = start_execution(&self.state, launch, fate, now).expect("launch matches");
        let info = match fate {
            Fate::Sustain { finish_at } => format!("job={} finish_at={finish_at}", binding.job),
            Fate::Fragile { death_at } => format!("job={} death_at={death_at}", binding.job),
        };
        self.set(k, next, EdgeLabel::Launch, info);
        match fate {
            Fate::Sustain { finish_at } => {
                k.schedule_at(
                    finish_at,
                    Event::ClockExpire {
                        owner: self.id.into(),
                        guard: Guard::ExecutionDone,
                    },
                );
            }
            Fate::Fragile { death_at } => {
                k.schedule_at(
                    death_at,
                    Event::ClockExpire {
                        owner: self.id.into(),
                        guard: Guard::Death,
                    },
                );
            }
        }
    }

    fn on_release(&mut self, k: &mut Kernel, message: &Message, params: &MachineParams) {
        match release(&self.state, message) {
            Some(_) => {
                let info = format!("job={}", fmt_job(message));
                self.become_available(k, params, EdgeLabel::Release, info);
            }
            None => {
                if !matches!(self.state, MachineState::Dead | MachineState::Unavailable) {
                    k.note(
                        self.id,
                        format!("release ignored in state {}", self.state.name()),
                    );
                }
            }
        }
    }

    pub fn on_timer(&mut self, k: &mut Kernel, guard: Guard, params: &MachineParams) {
        match guard {
            Guard::ExecutionDone => {
                let Some(next) = complete(&self.state, k.now()) else {
                    return;
                };
                let binding = next.binding().expect("finished is bound");
                self.set(k, next, EdgeLabel::Complete, format!("job={}", binding.job));
                k.send(Message::job(
                    Action::Ack3,
                    self.id,
                    binding.job.client(),
                    binding.job,
                    binding.attempt,
                ));
                if k.bernoulli(self.id, params.finished_failure) {
                    k.timer(self.id, SimTime::ZERO, Guard::FinishedFailure);
                }
            }
            Guard::Death => {
                if !matches!(
                    self.state,
                    MachineState::Running {
                        fate: Fate::Fragile { .. },
                        ..
                    }
                ) {
                    return;
                }
                let owner = self.owner().expect("running is bound");
                self.set(
                    k,
                    MachineState::Dead,
                    EdgeLabel::Death,
                    format!("job={}", owner.job()),
                );
                k.schedule_in(
                    params.detection_delay,
                    Event::FailureDetected {
                        machine: self.id,
                        client: owner,
                    },
                );
            }
            Guard::ReservedFailure => {
                if let MachineState::Reserved(b) = self.state {
                    self.set(
                        k,
                        MachineState::Dead,
                        EdgeLabel::ReservedFailure,
                        format!("job={}", b.job),
                    );
                }
            }
            Guard::FinishedFailure => {
                if let MachineState::Finished(b) = self.state {
                    self.set(
                        k,
                        MachineState::Unavailable,
                        EdgeLabel::FinishedFailure,
                        format!("job={}", b.job),
                    );
                }
            }
            Guard::IdleFailure => {
                self.idle_timer = None;
                if self.state != MachineState::Available {
                    return;
                }
                let next = match params.idle_failure_mode {
                    IdleFailureMode::Unavailable => MachineState::Unavailable,
                    IdleFailureMode::Silent => MachineState::Dead,
                };
                self.set(
                    k,
                    next,
                    EdgeLabel::IdleFailure,
                    params.idle_failure_mode.as_str().into(),
                );
                self.leave_available(k);
            }
            Guard::LocalLeave => {
                self.idle_timer = None;
                if self.state != MachineState::Available {
                    return;
                }
                self.set(
                    k,
                    MachineState::Unavailable,
                    EdgeLabel::LocalLeave,
                    String::new(),
                );
                self.leave_available(k);
                k.timer(self.id, params.unavailable_duration, Guard::Return);
            }
            Guard::Return => {
                if self.state == MachineState::Unavailable {
                    self.become_available(k, params, EdgeLabel::Return, String::new());
                }
            }
            other => k.note(self.id, format!("unexpected timer {other:?}")),
        }
    }
}

fn fmt_job(message: &Message) -> String {
    message
        .job_id()
        .map_or_else(|| "-".to_string(), |j| j.to_string())
}

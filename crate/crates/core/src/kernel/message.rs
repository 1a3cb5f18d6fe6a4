//! Actor identifiers and the protocol message vocabulary.

use std::fmt;
use std::str::FromStr;

use crate::error::TraceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MachineId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub u32);

/// Every client submits exactly one job, so a job is named after its client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u32);

impl JobId {
    pub fn client(self) -> ClientId {
        ClientId(self.0)
    }
}

impl ClientId {
    pub fn job(self) -> JobId {
        JobId(self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorId {
    Machine(MachineId),
    Client(ClientId),
    Bus,
}

/// Destination of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Actor(ActorId),
    Multicast,
}

impl From<MachineId> for ActorId {
    fn from(m: MachineId) -> Self {
        ActorId::Machine(m)
    }
}

impl From<ClientId> for ActorId {
    fn from(c: ClientId) -> Self {
        ActorId::Client(c)
    }
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}", self.0)
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Machine(m) => m.fmt(f),
            ActorId::Client(c) => c.fmt(f),
            ActorId::Bus => f.write_str("bus"),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Actor(a) => a.fmt(f),
            Target::Multicast => f.write_str("*"),
        }
    }
}

fn parse_index(s: &str, prefix: char) -> Option<u32> {
    s.strip_prefix(prefix)?.parse().ok()
}

impl FromStr for MachineId {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_index(s, 'm')
            .map(MachineId)
            .ok_or_else(|| TraceError::field("machine id", s))
    }
}

impl FromStr for ClientId {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_index(s, 'c')
            .map(ClientId)
            .ok_or_else(|| TraceError::field("client id", s))
    }
}

impl FromStr for JobId {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_index(s, 'j')
            .map(JobId)
            .ok_or_else(|| TraceError::field("job id", s))
    }
}

impl FromStr for ActorId {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bus" {
            return Ok(ActorId::Bus);
        }
        match s.chars().next() {
            Some('m') => s.parse().map(ActorId::Machine),
            Some('c') => s.parse().map(ActorId::Client),
            _ => Err(TraceError::field("actor", s)),
        }
    }
}

impl FromStr for Target {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            Ok(Target::Multicast)
        } else {
            s.parse().map(Target::Actor)
        }
    }
}

/// Protocol actions exchanged between clients, machines and the bus.
///
/// `ReplyOk` is the request acknowledgement (`ack1`) of the five-step
/// client/machine exchange; `Ack2` confirms a launch and `Ack3` reports
/// that the local process finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Request,
    ReplyOk,
    ReplyKo,
    Launch,
    Ack2,
    Ack3,
    Cancel,
    Release,
    Advertise,
    Withdraw,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::Request,
        Action::ReplyOk,
        Action::ReplyKo,
        Action::Launch,
        Action::Ack2,
        Action::Ack3,
        Action::Cancel,
        Action::Release,
        Action::Advertise,
        Action::Withdraw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Request => "Request",
            Action::ReplyOk => "ReplyOK",
            Action::ReplyKo => "ReplyKO",
            Action::Launch => "Launch",
            Action::Ack2 => "Ack2",
            Action::Ack3 => "Ack3",
            Action::Cancel => "Cancel",
            Action::Release => "Release",
            Action::Advertise => "Advertise",
            Action::Withdraw => "Withdraw",
        }
    }

    /// Bus announcements travel by multicast; everything else is unicast.
    pub fn is_multicast(self) -> bool {
        matches!(self, Action::Advertise | Action::Withdraw)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| TraceError::field("action", s))
    }
}

/// Message payload. `attempt` identifies the client's contact round so that
/// replies and cancellations from earlier rounds can be told apart; `epoch`
/// numbers a machine's successive advertisements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Payload {
    pub job: Option<JobId>,
    pub attempt: Option<u32>,
    pub machine: Option<MachineId>,
    pub epoch: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub action: Action,
    pub from: ActorId,
    pub to: Target,
    pub payload: Payload,
}

impl Message {
    /// A unicast message tied to a job and contact round.
    pub fn job(
        action: Action,
        from: impl Into<ActorId>,
        to: impl Into<ActorId>,
        job: JobId,
        attempt: u32,
    ) -> Self {
        debug_assert!(!action.is_multicast());
        Message {
            action,
            from: from.into(),
            to: Target::Actor(to.into()),
            payload: Payload {
                job: Some(job),
                attempt: Some(attempt),
                ..Payload::default()
            },
        }
    }

    pub fn announcement(action: Action, machine: MachineId, epoch: u32) -> Self {
        debug_assert!(action.is_multicast());
        Message {
            action,
            from: ActorId::Machine(machine),
            to: Target::Multicast,
            payload: Payload {
                machine: Some(machine),
                epoch: Some(epoch),
                ..Payload::default()
            },
        }
    }

    pub fn job_id(&self) -> Option<JobId> {
        self.payload.job
    }

    pub fn attempt(&self) -> u32 {
        self.payload.attempt.unwrap_or(0)
    }

    /// The client behind a client-originated message: its sender, or the
    /// owner of the job it names.
    pub fn sender_client(&self) -> ClientId {
        match (self.from, self.payload.job) {
            (ActorId::Client(c), _) => c,
            (_, Some(job)) => job.client(),
            _ => panic!("{self} names no client"),
        }
    }

    /// Multicast is only legal for bus announcements.
    pub fn is_well_addressed(&self) -> bool {
        matches!(self.to, Target::Multicast) == self.action.is_multicast()
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} from={} to={}", self.action, self.from, self.to)?;
        let p = &self.payload;
        if let Some(job) = p.job {
            write!(f, " job={job}")?;
        }
        if let Some(attempt) = p.attempt {
            write!(f, " attempt={attempt}")?;
        }
        if let Some(machine) = p.machine {
            write!(f, " machine={machine}")?;
        }
        if let Some(epoch) = p.epoch {
            write!(f, " epoch={epoch}")?;
        }
        Ok(())
    }
}

impl FromStr for Message {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut words = s.split(' ');
        let action: Action = words
            .next()
            .ok_or_else(|| TraceError::field("message", s))?
            .parse()?;
        let mut from = None;
        let mut to = None;
        let mut payload = Payload::default();
        for word in words {
            let (key, value) = word
                .split_once('=')
                .ok_or_else(|| TraceError::field("message field", word))?;
            let num = |v: &str| {
                v.parse::<u32>()
                    .map_err(|_| TraceError::field("message number", v))
            };
            match key {
                "from" => from = Some(value.parse::<ActorId>()?),
                "to" => to = Some(value.parse::<Target>()?),
                "job" => payload.job = Some(value.parse()?),
                "attempt" => payload.attempt = Some(num(value)?),
                "machine" => payload.machine = Some(value.parse()?),
                "epoch" => payload.epoch = Some(num(value)?),
                _ => return Err(TraceError::field("message key", key)),
            }
        }
        Ok(Message {
            action,
            from: from.ok_or_else(|| TraceError::field("message sender", s))?,
            to: to.ok_or_else(|| TraceError::field("message recipient", s))?,
            payload,
        })
    }
}

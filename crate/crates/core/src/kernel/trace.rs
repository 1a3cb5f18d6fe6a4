//! Append-only run log and its tab-separated text form.
//!
//! One record per line:
//!
//! ```text
//! time<TAB>actor<TAB>kind<TAB>from_state<TAB>to_state<TAB>detail
//! ```
//!
//! `kind` is one of `transition`, `send`, `recv`, `discover`, `note`. Only
//! transitions use the state columns; the others write `-` there.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::TraceError;
use crate::kernel::message::{ActorId, MachineId, Message};
use crate::time::SimTime;

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $what:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = TraceError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(TraceError::field($what, s)),
                }
            }
        }
    };
}

named_enum!(
    /// Automaton locations of both machines and clients, as written in traces.
    StateName, "state" {
        Available => "available",
        Unavailable => "unavailable",
        Reserved => "reserved",
        RunningSustain => "running.sustain",
        RunningFragile => "running.fragile",
        Finished => "finished",
        Dead => "dead",
        Begin => "begin",
        Reserve => "reserve",
        Launch => "launch",
        Wait => "wait",
        Failure => "failure",
        Done => "done",
        Aborted => "aborted",
    }
);

named_enum!(
    /// Why a transition was taken.
    EdgeLabel, "edge label" {
        Init => "init",
        // machine
        Request => "request",
        LocalLeave => "local-leave",
        Return => "return",
        IdleFailure => "idle-failure",
        Cancel => "cancel",
        Launch => "launch",
        ReservedFailure => "reserved-failure",
        Death => "death",
        Complete => "complete",
        Release => "release",
        FinishedFailure => "finished-failure",
        // client
        Submit => "submit",
        Retry => "retry",
        Ok => "ok",
        Ko => "ko",
        Silence => "silence",
        Enough => "enough",
        Free => "free",
        Timeout => "timeout",
        GiveUp => "give-up",
        Ack2 => "ack2",
        Ack3 => "ack3",
        Started => "started",
        LaunchTimeout => "launch-timeout",
        FailureDetected => "failure-detected",
        Replaced => "replaced",
        AllDone => "all-done",
    }
);

impl StateName {
    pub fn is_machine_state(self) -> bool {
        matches!(
            self,
            StateName::Available
                | StateName::Unavailable
                | StateName::Reserved
                | StateName::RunningSustain
                | StateName::RunningFragile
                | StateName::Finished
                | StateName::Dead
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    /// `from` is `None` for the initial placement of an automaton.
    Transition {
        from: Option<StateName>,
        to: StateName,
        label: EdgeLabel,
        info: String,
    },
    Send(Message),
    Recv(Message),
    Discover {
        machine: MachineId,
        epoch: u32,
        stale: bool,
    },
    Note(String),
}

impl Entry {
    pub fn kind(&self) -> &'static str {
        match self {
            Entry::Transition { .. } => "transition",
            Entry::Send(_) => "send",
            Entry::Recv(_) => "recv",
            Entry::Discover { .. } => "discover",
            Entry::Note(_) => "note",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub at: SimTime,
    pub actor: ActorId,
    pub entry: Entry,
}

impl TraceRecord {
    pub fn transition(&self) -> Option<(Option<StateName>, StateName, EdgeLabel)> {
        match &self.entry {
            Entry::Transition {
                from, to, label, ..
            } => Some((*from, *to, *label)),
            _ => None,
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c == '\t' || c == '\n' || c == '\r' {
                ' '
            } else {
                c
            }
        })
        .collect()
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.at, self.actor, self.entry.kind())?;
        match &self.entry {
            Entry::Transition {
                from,
                to,
                label,
                info,
            } => {
                let from = from.map_or("-", StateName::as_str);
                write!(f, "{from}\t{to}\t{label}")?;
                if !info.is_empty() {
                    write!(f, " {}", sanitize(info))?;
                }
                Ok(())
            }
            Entry::Send(m) | Entry::Recv(m) => write!(f, "-\t-\t{m}"),
            Entry::Discover {
                machine,
                epoch,
                stale,
            } => {
                write!(f, "-\t-\tmachine={machine} epoch={epoch}")?;
                if *stale {
                    f.write_str(" stale")?;
                }
                Ok(())
            }
            Entry::Note(text) => write!(f, "-\t-\t{}", sanitize(text)),
        }
    }
}

impl FromStr for TraceRecord {
    type Err = TraceError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(TraceError::Arity {
                line: 0,
                found: fields.len(),
            });
        }
        let at: SimTime = fields[0]
            .parse()
            .map_err(|_| TraceError::field("time", fields[0]))?;
        let actor: ActorId = fields[1].parse()?;
        let (from, to, detail) = (fields[3], fields[4], fields[5]);
        let entry = match fields[2] {
            "transition" => {
                let from = if from == "-" {
                    None
                } else {
                    Some(from.parse()?)
                };
                let (label, info) = detail.split_once(' ').unwrap_or((detail, ""));
                Entry::Transition {
                    from,
                    to: to.parse()?,
                    label: label.parse()?,
                    info: info.to_string(),
                }
            }
            "send" => Entry::Send(detail.parse()?),
            "recv" => Entry::Recv(detail.parse()?),
            "discover" => {
                let mut machine = None;
                let mut epoch = None;
                let mut stale = false;
                for word in detail.split(' ') {
                    match word.split_once('=') {
                        Some(("machine", v)) => machine = Some(v.parse()?),
                        Some(("epoch", v)) => {
                            epoch = Some(v.parse().map_err(|_| TraceError::field("epoch", v))?)
                        }
                        None if word == "stale" => stale = true,
                        _ => return Err(TraceError::field("discover detail", word)),
                    }
                }
                Entry::Discover {
                    machine: machine.ok_or_else(|| TraceError::field("discover", detail))?,
                    epoch: epoch.ok_or_else(|| TraceError::field("discover", detail))?,
                    stale,
                }
            }
            "note" => Entry::Note(detail.to_string()),
            other => return Err(TraceError::field("record kind", other)),
        };
        Ok(TraceRecord { at, actor, entry })
    }
}

/// The complete log of one run, in dispatch order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn from_records(records: Vec<TraceRecord>) -> Self {
        Trace { records }
    }

    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|last| last.at <= record.at));
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceRecord> {
        self.records.iter()
    }

    /// Serializes to the line-oriented text form, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 64);
        for r in &self.records {
            writeln!(out, "{r}").expect("writing to a String cannot fail");
        }
        out
    }

    /// Parses the text form. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut records: Vec<TraceRecord> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = line.parse().map_err(|e| match e {
                TraceError::Arity { found, .. } => TraceError::Arity {
                    line: line_no,
                    found,
                },
                other => other.at_line(line_no),
            })?;
            if records.last().is_some_and(|last| last.at > record.at) {
                return Err(TraceError::NonMonotonic { line: line_no });
            }
            records.push(record);
        }
        Ok(Trace { records })
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a TraceRecord;
    type IntoIter = std::slice::Iter<'a, TraceRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::message::{Action, ClientId, JobId};

    fn sample() -> Trace {
        let t = SimTime::from_units;
        Trace::from_records(vec![
            TraceRecord {
                at: t(0),
                actor: ActorId::Machine(MachineId(0)),
                entry: Entry::Transition {
                    from: None,
                    to: StateName::Available,
                    label: EdgeLabel::Init,
                    info: String::new(),
                },
            },
            TraceRecord {
                at: t(0),
                actor: ActorId::Machine(MachineId(0)),
                entry: Entry::Send(Message::announcement(Action::Advertise, MachineId(0), 1)),
            },
            TraceRecord {
                at: t(1),
                actor: ActorId::Client(ClientId(0)),
                entry: Entry::Discover {
                    machine: MachineId(0),
                    epoch: 1,
                    stale: true,
                },
            },
            TraceRecord {
                at: t(2),
                actor: ActorId::Machine(MachineId(0)),
                entry: Entry::Recv(Message::job(
                    Action::Request,
                    ClientId(0),
                    MachineId(0),
                    JobId(0),
                    1,
                )),
            },
            TraceRecord {
                at: t(2),
                actor: ActorId::Machine(MachineId(0)),
                entry: Entry::Transition {
                    from: Some(StateName::Available),
                    to: StateName::Reserved,
                    label: EdgeLabel::Request,
                    info: "job=j0 attempt=1".into(),
                },
            },
            TraceRecord {
                at: t(2),
                actor: ActorId::Bus,
                entry: Entry::Note("withdraw of unadvertised m3 ignored".into()),
            },
        ])
    }

    #[test]
    fn text_form_round_trips() {
        let trace = sample();
        let text = trace.to_text();
        assert_eq!(Trace::parse(&text).unwrap(), trace);
        assert!(text.ends_with('\n'));
        assert!(text.lines().all(|l| l.split('\t').count() == 6));
    }

    #[test]
    fn golden_lines() {
        let text = sample().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "0.000000\tm0\ttransition\t-\tavailable\tinit");
        assert_eq!(
            lines[1],
            "0.000000\tm0\tsend\t-\t-\tAdvertise from=m0 to=* machine=m0 epoch=1"
        );
        assert_eq!(
            lines[4],
            "2.000000\tm0\ttransition\tavailable\treserved\trequest job=j0 attempt=1"
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Trace::parse("0.000000\tm0\ttransition\t-\tavailable\n").unwrap_err();
        assert_eq!(err, TraceError::Arity { line: 1, found: 5 });

        let err = Trace::parse("0.000000\tm0\ttransition\t-\tnowhere\tinit\n").unwrap_err();
        assert!(matches!(err, TraceError::Line { line: 1, .. }));

        let text = "5.000000\tm0\tnote\t-\t-\tx\n1.000000\tm0\tnote\t-\t-\ty\n";
        assert_eq!(
            Trace::parse(text).unwrap_err(),
            TraceError::NonMonotonic { line: 2 }
        );
    }
}

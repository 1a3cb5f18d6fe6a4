//! Scenario documents: flat `key = value` text with dotted keys.
//!
//! ```text
//! # three machines, two competing clients
//! n_machines = 3
//! machine.lambda = 0.1
//! machine.exec_time = 10
//! client.0.nb_nodes = 2
//! client.1.nb_nodes = 3
//! client.1.semantics = fail
//! ```
//!
//! Global keys: `n_machines` (required), `horizon`, `seed`,
//! `failure_budget`, `net.latency`, `bus.latency`, `bus.staleness`.
//!
//! Machine keys (`machine.`): `lambda`, `exec_time`, `exec_jitter`,
//! `unavailable_rate`, `unavailable_duration`, `idle_failure`,
//! `idle_failure_mode` (`unavailable` | `silent`), `reserved_failure`,
//! `finished_failure`, `detection_delay`.
//!
//! Client keys (`client.<i>.`, indices contiguous from 0): `nb_nodes`
//! (required), `semantics` (`wait` | `fail` | `hold`), `timeout` (wait
//! only), `retry_delay` (`d` or `lo..hi`), `submit_at`, `max_retries`
//! (integer or `unbounded`), `max_outstanding`, `reply_timeout`,
//! `launch_timeout`, `attempt_window`, `contact_order` (`discovery` |
//! `highest-id`).
//!
//! Durations are decimal time units. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bus::BusConfig;
use crate::client::{ClientSpec, ContactOrder, RetryDelay, Semantics};
use crate::error::ScenarioError;
use crate::kernel::random::Probability;
use crate::kernel::NetConfig;
use crate::machine::{IdleFailureMode, MachineParams};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub n_machines: u32,
    pub machine: MachineParams,
    pub clients: Vec<ClientSpec>,
    pub net: NetConfig,
    pub bus: BusConfig,
    pub horizon: SimTime,
    pub seed: u64,
    /// Worst-case mode: instead of per-launch λ draws, exactly
    /// `⌊budget · n_machines⌋` machines die right after launch.
    pub failure_budget: Option<Probability>,
}

const GLOBAL_KEYS: &[&str] = &[
    "n_machines",
    "horizon",
    "seed",
    "failure_budget",
    "net.latency",
    "bus.latency",
    "bus.staleness",
];

const MACHINE_KEYS: &[&str] = &[
    "lambda",
    "exec_time",
    "exec_jitter",
    "unavailable_rate",
    "unavailable_duration",
    "idle_failure",
    "idle_failure_mode",
    "reserved_failure",
    "finished_failure",
    "detection_delay",
];

const CLIENT_KEYS: &[&str] = &[
    "nb_nodes",
    "semantics",
    "timeout",
    "retry_delay",
    "submit_at",
    "max_retries",
    "max_outstanding",
    "reply_timeout",
    "launch_timeout",
    "attempt_window",
    "contact_order",
];

const DEFAULT_HORIZON: u64 = 1000;

/// Built-in scenarios, addressable by name from the command line.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "single-machine",
        "n_machines = 1\nmachine.lambda = 0.2\nclient.0.nb_nodes = 1\n",
    ),
    (
        "replacement",
        "n_machines = 2\nmachine.lambda = 0.2\nclient.0.nb_nodes = 1\n",
    ),
    (
        "deadlock-hold",
        "n_machines = 3\n\
         client.0.nb_nodes = 2\nclient.0.semantics = hold\nclient.0.submit_at = 1\n\
         client.1.nb_nodes = 3\nclient.1.semantics = hold\nclient.1.contact_order = highest-id\n",
    ),
    (
        "deadlock-fail-semantics",
        "n_machines = 3\n\
         client.0.nb_nodes = 2\nclient.0.semantics = fail\nclient.0.submit_at = 1\n\
         client.1.nb_nodes = 3\nclient.1.semantics = fail\nclient.1.contact_order = highest-id\n",
    ),
    (
        "deadlock-wait-semantics",
        "n_machines = 3\n\
         client.0.nb_nodes = 2\nclient.0.semantics = wait\nclient.0.submit_at = 1\n\
         client.1.nb_nodes = 3\nclient.1.semantics = wait\nclient.1.contact_order = highest-id\n",
    ),
];

struct Doc {
    entries: BTreeMap<String, String>,
}

impl Doc {
    fn parse(text: &str) -> Result<Doc, ScenarioError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ScenarioError::Syntax { line: idx + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ScenarioError::Syntax { line: idx + 1 });
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ScenarioError::DuplicateKey { key: key.into() });
            }
        }
        Ok(Doc { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }
}

fn bad(key: &str, value: &str, expected: &'static str) -> ScenarioError {
    ScenarioError::BadValue {
        key: key.into(),
        value: value.into(),
        expected,
    }
}

fn parse_prob(key: &str, value: &str) -> Result<Probability, ScenarioError> {
    value.parse().map_err(|_| ScenarioError::ProbabilityRange {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_time(key: &str, value: &str) -> Result<SimTime, ScenarioError> {
    value.parse().map_err(|_| bad(key, value, "duration"))
}

fn parse_positive(key: &str, value: &str) -> Result<SimTime, ScenarioError> {
    let t = parse_time(key, value).map_err(|_| ScenarioError::NonPositiveDuration {
        key: key.into(),
        value: value.into(),
    })?;
    if t == SimTime::ZERO {
        return Err(ScenarioError::NonPositiveDuration {
            key: key.into(),
            value: value.into(),
        });
    }
    Ok(t)
}

fn parse_u32(key: &str, value: &str) -> Result<u32, ScenarioError> {
    value
        .parse()
        .map_err(|_| bad(key, value, "non-negative integer"))
}

fn constraint(key: &str, text: &str) -> ScenarioError {
    ScenarioError::Constraint {
        key: key.into(),
        constraint: text.into(),
    }
}

fn fmt_time(t: SimTime) -> String {
    let s = t.to_string();
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn fmt_retry(d: RetryDelay) -> String {
    match d {
        RetryDelay::Fixed(t) => fmt_time(t),
        RetryDelay::Uniform { lo, hi } => format!("{}..{}", fmt_time(lo), fmt_time(hi)),
    }
}

impl Scenario {
    /// Parses and validates a scenario document, filling defaults.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut doc = Doc::parse(text)?;

        for key in doc.entries.keys() {
            let known = GLOBAL_KEYS.contains(&key.as_str())
                || key
                    .strip_prefix("machine.")
                    .is_some_and(|k| MACHINE_KEYS.contains(&k))
                || key.strip_prefix("client.").is_some_and(|rest| {
                    rest.split_once('.').is_some_and(|(idx, k)| {
                        idx.parse::<u32>().is_ok() && CLIENT_KEYS.contains(&k)
                    })
                });
            if !known {
                return Err(ScenarioError::UnknownKey { key: key.clone() });
            }
        }

        let n_machines = match doc.take("n_machines") {
            Some(v) => parse_u32("n_machines", &v)?,
            None => {
                return Err(ScenarioError::MissingKey {
                    key: "n_machines".into(),
                })
            }
        };
        if n_machines == 0 {
            return Err(constraint("n_machines", "at least one machine"));
        }

        let horizon = match doc.take("horizon") {
            Some(v) => parse_positive("horizon", &v)?,
            None => SimTime::from_units(DEFAULT_HORIZON),
        };
        let seed = match doc.take("seed") {
            Some(v) => v
                .parse()
                .map_err(|_| bad("seed", &v, "64-bit unsigned integer"))?,
            None => 0,
        };
        let failure_budget = doc
            .take("failure_budget")
            .map(|v| parse_prob("failure_budget", &v))
            .transpose()?;
        let net = NetConfig {
            latency: match doc.take("net.latency") {
                Some(v) => parse_positive("net.latency", &v)?,
                None => SimTime::from_units(1),
            },
        };
        let bus = BusConfig {
            latency: match doc.take("bus.latency") {
                Some(v) => parse_positive("bus.latency", &v)?,
                None => SimTime::from_units(1),
            },
            staleness: match doc.take("bus.staleness") {
                Some(v) => parse_time("bus.staleness", &v)?,
                None => SimTime::ZERO,
            },
        };

        let machine = Self::parse_machine(&mut doc)?;
        let clients = Self::parse_clients(&mut doc, net, bus)?;
        debug_assert!(doc.entries.is_empty(), "all keys consumed");

        Ok(Scenario {
            n_machines,
            machine,
            clients,
            net,
            bus,
            horizon,
            seed,
            failure_budget,
        })
    }

    fn parse_machine(doc: &mut Doc) -> Result<MachineParams, ScenarioError> {
        let mut take = |k: &str| {
            doc.take(&format!("machine.{k}"))
                .map(|v| (format!("machine.{k}"), v))
        };
        let mut p = MachineParams::default();
        if let Some((k, v)) = take("lambda") {
            p.lambda = parse_prob(&k, &v)?;
        }
        if let Some((k, v)) = take("exec_time") {
            p.exec_time = parse_positive(&k, &v)?;
        }
        if let Some((k, v)) = take("exec_jitter") {
            p.exec_jitter = parse_time(&k, &v)?;
        }
        if let Some((k, v)) = take("unavailable_rate") {
            p.unavailable_rate = parse_prob(&k, &v)?;
        }
        p.unavailable_duration = match take("unavailable_duration") {
            Some((k, v)) => parse_positive(&k, &v)?,
            None => p.exec_time,
        };
        if let Some((k, v)) = take("idle_failure") {
            p.idle_failure = parse_prob(&k, &v)?;
        }
        if let Some((k, v)) = take("idle_failure_mode") {
            p.idle_failure_mode = match v.as_str() {
                "unavailable" => IdleFailureMode::Unavailable,
                "silent" => IdleFailureMode::Silent,
                _ => return Err(bad(&k, &v, "mode (unavailable | silent)")),
            };
        }
        if let Some((k, v)) = take("reserved_failure") {
            p.reserved_failure = parse_prob(&k, &v)?;
        }
        if let Some((k, v)) = take("finished_failure") {
            p.finished_failure = parse_prob(&k, &v)?;
        }
        if let Some((k, v)) = take("detection_delay") {
            p.detection_delay = parse_time(&k, &v)?;
        }
        Ok(p)
    }

    fn parse_clients(
        doc: &mut Doc,
        net: NetConfig,
        bus: BusConfig,
    ) -> Result<Vec<ClientSpec>, ScenarioError> {
        let mut indices: Vec<u32> = doc
            .entries
            .keys()
            .filter_map(|k| k.strip_prefix("client."))
            .filter_map(|rest| rest.split_once('.'))
            .filter_map(|(idx, _)| idx.parse().ok())
            .collect();
        indices.sort_unstable();
        indices.dedup();
        for (expected, &idx) in indices.iter().enumerate() {
            if idx as usize != expected {
                return Err(constraint(
                    &format!("client.{idx}"),
                    "client indices must be contiguous from 0",
                ));
            }
        }

        let mut clients = Vec::with_capacity(indices.len());
        for idx in indices {
            let prefix = format!("client.{idx}.");
            let mut take = |k: &str| {
                doc.take(&format!("{prefix}{k}"))
                    .map(|v| (format!("{prefix}{k}"), v))
            };
            let mut spec = ClientSpec {
                reply_timeout: net.latency.checked_mul(4).expect("latency fits"),
                launch_timeout: net.latency.checked_mul(4).expect("latency fits"),
                attempt_window: bus.latency.checked_mul(2).expect("latency fits"),
                ..ClientSpec::default()
            };
            spec.nb_nodes = match take("nb_nodes") {
                Some((k, v)) => {
                    let n = parse_u32(&k, &v)?;
                    if n == 0 {
                        return Err(constraint(&k, "nb_nodes >= 1"));
                    }
                    n
                }
                None => {
                    return Err(ScenarioError::MissingKey {
                        key: format!("{prefix}nb_nodes"),
                    })
                }
            };
            let timeout = take("timeout");
            spec.semantics = match take("semantics") {
                None => Semantics::Wait {
                    timeout: SimTime::from_units(20),
                },
                Some((k, v)) => match v.as_str() {
                    "wait" => Semantics::Wait {
                        timeout: SimTime::from_units(20),
                    },
                    "fail" => Semantics::Fail,
                    "hold" => Semantics::Hold,
                    _ => return Err(bad(&k, &v, "semantics (wait | fail | hold)")),
                },
            };
            if let Some((k, v)) = timeout {
                match &mut spec.semantics {
                    Semantics::Wait { timeout } => *timeout = parse_positive(&k, &v)?,
                    _ => return Err(constraint(&k, "timeout only applies to wait semantics")),
                }
            }
            if let Some((k, v)) = take("retry_delay") {
                spec.retry_delay = match v.split_once("..") {
                    Some((lo, hi)) => {
                        let lo = parse_positive(&k, lo.trim())?;
                        let hi = parse_positive(&k, hi.trim())?;
                        if hi < lo {
                            return Err(constraint(&k, "retry_delay range needs lo <= hi"));
                        }
                        RetryDelay::Uniform { lo, hi }
                    }
                    None => RetryDelay::Fixed(parse_positive(&k, &v)?),
                };
            }
            if let Some((k, v)) = take("submit_at") {
                spec.submit_at = parse_time(&k, &v)?;
            }
            if let Some((k, v)) = take("max_retries") {
                spec.max_retries = if v == "unbounded" {
                    None
                } else {
                    Some(parse_u32(&k, &v)?)
                };
            }
            if let Some((k, v)) = take("max_outstanding") {
                spec.max_outstanding = parse_u32(&k, &v)?;
                if spec.max_outstanding == 0 {
                    return Err(constraint(&k, "max_outstanding >= 1"));
                }
            }
            if let Some((k, v)) = take("reply_timeout") {
                spec.reply_timeout = parse_positive(&k, &v)?;
            }
            if let Some((k, v)) = take("launch_timeout") {
                spec.launch_timeout = parse_positive(&k, &v)?;
            }
            if let Some((k, v)) = take("attempt_window") {
                spec.attempt_window = parse_positive(&k, &v)?;
            }
            if let Some((k, v)) = take("contact_order") {
                spec.contact_order = match v.as_str() {
                    "discovery" => ContactOrder::Discovery,
                    "highest-id" => ContactOrder::HighestId,
                    _ => return Err(bad(&k, &v, "contact order (discovery | highest-id)")),
                };
            }
            clients.push(spec);
        }
        Ok(clients)
    }

    pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, doc)| Scenario::parse(doc))
            .unwrap_or_else(|| Err(ScenarioError::UnknownPreset(name.into())))
    }

    /// Normalized document: every key written out, in a fixed order.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("write to String");
        };
        kv("n_machines", self.n_machines.to_string());
        kv("horizon", fmt_time(self.horizon));
        kv("seed", self.seed.to_string());
        if let Some(b) = self.failure_budget {
            kv("failure_budget", b.to_string());
        }
        kv("net.latency", fmt_time(self.net.latency));
        kv("bus.latency", fmt_time(self.bus.latency));
        kv("bus.staleness", fmt_time(self.bus.staleness));
        let m = &self.machine;
        kv("machine.lambda", m.lambda.to_string());
        kv("machine.exec_time", fmt_time(m.exec_time));
        kv("machine.exec_jitter", fmt_time(m.exec_jitter));
        kv("machine.unavailable_rate", m.unavailable_rate.to_string());
        kv(
            "machine.unavailable_duration",
            fmt_time(m.unavailable_duration),
        );
        kv("machine.idle_failure", m.idle_failure.to_string());
        kv(
            "machine.idle_failure_mode",
            m.idle_failure_mode.as_str().into(),
        );
        kv("machine.reserved_failure", m.reserved_failure.to_string());
        kv("machine.finished_failure", m.finished_failure.to_string());
        kv("machine.detection_delay", fmt_time(m.detection_delay));
        for (i, c) in self.clients.iter().enumerate() {
            let p = format!("client.{i}.");
            kv(&format!("{p}nb_nodes"), c.nb_nodes.to_string());
            kv(&format!("{p}semantics"), c.semantics.name().into());
            if let Semantics::Wait { timeout } = c.semantics {
                kv(&format!("{p}timeout"), fmt_time(timeout));
            }
            kv(&format!("{p}retry_delay"), fmt_retry(c.retry_delay));
            kv(&format!("{p}submit_at"), fmt_time(c.submit_at));
            kv(
                &format!("{p}max_retries"),
                c.max_retries
                    .map_or_else(|| "unbounded".to_string(), |n| n.to_string()),
            );
            kv(
                &format!("{p}max_outstanding"),
                c.max_outstanding.to_string(),
            );
            kv(&format!("{p}reply_timeout"), fmt_time(c.reply_timeout));
            kv(&format!("{p}launch_timeout"), fmt_time(c.launch_timeout));
            kv(&format!("{p}attempt_window"), fmt_time(c.attempt_window));
            kv(
                &format!("{p}contact_order"),
                c.contact_order.as_str().into(),
            );
        }
        out
    }

    /// True when `key` names a parameter that [`with_override`] accepts.
    /// `client.*.<field>` addresses every client at once.
    ///
    /// [`with_override`]: Scenario::with_override
    pub fn is_parameter(key: &str) -> bool {
        GLOBAL_KEYS.contains(&key)
            || key
                .strip_prefix("machine.")
                .is_some_and(|k| MACHINE_KEYS.contains(&k))
            || key.strip_prefix("client.").is_some_and(|rest| {
                rest.split_once('.').is_some_and(|(idx, k)| {
                    (idx == "*" || idx.parse::<u32>().is_ok()) && CLIENT_KEYS.contains(&k)
                })
            })
    }

    /// Returns a copy with one parameter replaced, re-validated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Scenario, ScenarioError> {
        if !Self::is_parameter(key) {
            return Err(ScenarioError::UnknownKey { key: key.into() });
        }
        let mut doc = Doc::parse(&self.to_document())?;
        if let Some(field) = key.strip_prefix("client.*.") {
            for i in 0..self.clients.len() {
                doc.entries
                    .insert(format!("client.{i}.{field}"), value.into());
            }
        } else {
            doc.entries.insert(key.into(), value.into());
        }
        // Switching semantics away from wait drops its timeout.
        for i in 0..self.clients.len() {
            let sem = doc.entries.get(&format!("client.{i}.semantics"));
            if sem.is_some_and(|s| s != "wait") {
                doc.entries.remove(&format!("client.{i}.timeout"));
            }
        }
        let text: String = doc
            .entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        Scenario::parse(&text)
    }

    /// Number of machines the failure budget kills.
    pub fn budget_kills(&self) -> Option<u32> {
        self.failure_budget.map(|b| {
            let exact =
                b.as_ratio() * num_rational::BigRational::from_integer(self.n_machines.into());
            let floor = exact.floor().to_integer();
            u32::try_from(floor).expect("kills bounded by n_machines")
        })
    }
}

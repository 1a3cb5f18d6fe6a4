//! Randomized scenario generation shared by the integration suites.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qurd_core::Scenario;

pub struct Ranges {
    pub machines: (u32, u32),
    pub clients: (u32, u32),
    pub lambdas: &'static [&'static str],
    pub semantics: &'static [&'static str],
    /// Turns on every hazard besides λ.
    pub hazards: bool,
    pub horizon: u32,
}

pub const EXCLUSIVE: Ranges = Ranges {
    machines: (1, 10),
    clients: (1, 4),
    lambdas: &["0", "0.05", "0.1", "0.2", "0.25", "0.3", "0.4", "0.5"],
    semantics: &["wait", "fail"],
    hazards: true,
    horizon: 300,
};

pub const COVERAGE: Ranges = Ranges {
    machines: (1, 6),
    clients: (1, 3),
    lambdas: &["0", "0.2", "0.5", "0.8"],
    semantics: &["wait", "fail", "wait", "fail", "hold"],
    hazards: true,
    horizon: 300,
};

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty")
}

/// Scenario document `index` of a randomized family.
pub fn document(ranges: &Ranges, family_seed: u64, index: u64) -> String {
    let mut rng =
        ChaCha8Rng::seed_from_u64(family_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = rng.gen_range(ranges.machines.0..=ranges.machines.1);
    let k = rng.gen_range(ranges.clients.0..=ranges.clients.1);
    let mut doc = format!(
        "n_machines = {n}\nhorizon = {}\nseed = {index}\nmachine.lambda = {}\nmachine.exec_time = {}\n",
        ranges.horizon,
        pick(&mut rng, ranges.lambdas),
        pick(&mut rng, &["1", "3", "10"]),
    );
    if ranges.hazards {
        doc += &format!(
            "machine.exec_jitter = {}\nmachine.unavailable_rate = {}\nmachine.idle_failure = {}\n\
             machine.idle_failure_mode = {}\nmachine.reserved_failure = {}\nmachine.finished_failure = {}\n\
             bus.staleness = {}\n",
            pick(&mut rng, &["0", "2"]),
            pick(&mut rng, &["0", "0.2"]),
            pick(&mut rng, &["0", "0.1"]),
            pick(&mut rng, &["unavailable", "silent"]),
            pick(&mut rng, &["0", "0.1"]),
            pick(&mut rng, &["0", "0.2"]),
            pick(&mut rng, &["0", "3"]),
        );
    }
    for c in 0..k {
        let nb = rng.gen_range(1..=n.min(3));
        let sem = pick(&mut rng, ranges.semantics);
        doc += &format!("client.{c}.nb_nodes = {nb}\nclient.{c}.semantics = {sem}\n");
        doc += &format!("client.{c}.submit_at = {}\n", rng.gen_range(0..5));
        doc += &format!(
            "client.{c}.max_retries = {}\n",
            pick(&mut rng, &["unbounded", "unbounded", "0", "3"])
        );
        doc += &format!(
            "client.{c}.max_outstanding = {}\n",
            pick(&mut rng, &["1", "1", "2"])
        );
        doc += &format!(
            "client.{c}.contact_order = {}\n",
            pick(&mut rng, &["discovery", "highest-id"])
        );
    }
    doc
}

pub fn scenario(ranges: &Ranges, family_seed: u64, index: u64) -> Scenario {
    let doc = document(ranges, family_seed, index);
    Scenario::parse(&doc).unwrap_or_else(|e| panic!("generated scenario invalid: {e}\n{doc}"))
}

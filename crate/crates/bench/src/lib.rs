//! Fixed workloads shared by the benchmarks.

use qurd_core::Scenario;

/// A crowded scenario: many machines, several competing multi-node jobs and
/// every hazard switched on.
pub const CROWDED: &str = "\
n_machines = 32
horizon = 1000
machine.lambda = 0.1
machine.exec_jitter = 5
machine.unavailable_rate = 0.1
machine.idle_failure = 0.05
machine.reserved_failure = 0.05
bus.staleness = 2
client.0.nb_nodes = 8
client.1.nb_nodes = 8
client.1.semantics = fail
client.2.nb_nodes = 12
client.2.submit_at = 3
client.3.nb_nodes = 4
client.3.contact_order = highest-id
";

/// Named scenarios, smallest first.
pub fn workloads() -> Vec<(&'static str, Scenario)> {
    vec![
        (
            "single-machine",
            Scenario::preset("single-machine").expect("preset"),
        ),
        (
            "deadlock-wait",
            Scenario::preset("deadlock-wait-semantics").expect("preset"),
        ),
        ("crowded", Scenario::parse(CROWDED).expect("valid workload")),
    ]
}

mod common;

use proptest::prelude::{prop_assert_eq, proptest};

use qurd_core::scenario::PRESETS;
use qurd_core::{simulate, Scenario, ScenarioError};

proptest! {
    #[test]
    fn generated_documents_round_trip(index in 0u64..10_000) {
        let s = common::scenario(&common::COVERAGE, 41, index);
        let again = Scenario::parse(&s.to_document()).unwrap();
        prop_assert_eq!(&again, &s);
        prop_assert_eq!(again.to_document(), s.to_document());
    }

    #[test]
    fn normalized_documents_simulate_identically(index in 0u64..10_000) {
        let s = common::scenario(&common::EXCLUSIVE, 42, index);
        let again = Scenario::parse(&s.to_document()).unwrap();
        prop_assert_eq!(simulate(&s, 5).to_text(), simulate(&again, 5).to_text());
    }
}

#[test]
fn presets_parse_and_round_trip() {
    for (name, _) in PRESETS {
        let s = Scenario::preset(name).unwrap();
        assert_eq!(Scenario::parse(&s.to_document()).unwrap(), s, "{name}");
    }
    assert!(matches!(
        Scenario::preset("nope"),
        Err(ScenarioError::UnknownPreset(_))
    ));
}

type Matcher = fn(&ScenarioError) -> bool;

#[test]
fn invalid_documents_name_the_problem() {
    let cases: [(&str, Matcher); 8] = [
        ("n_machines = 1\nbogus\n", |e| matches!(e, ScenarioError::Syntax { line: 2 })),
        ("n_machines = 1\nmachine.colour = red\n", |e| matches!(e, ScenarioError::UnknownKey { .. })),
        ("n_machines = 1\nn_machines = 2\n", |e| matches!(e, ScenarioError::DuplicateKey { .. })),
        ("horizon = 5\n", |e| matches!(e, ScenarioError::MissingKey { .. })),
        ("n_machines = 1\nmachine.lambda = 1.5\n", |e| matches!(e, ScenarioError::ProbabilityRange { .. })),
        ("n_machines = 1\nmachine.exec_time = 0\n", |e| matches!(e, ScenarioError::NonPositiveDuration { .. })),
        ("n_machines = 1\nclient.0.nb_nodes = 1\nclient.0.semantics = fail\nclient.0.timeout = 3\n", |e| {
            matches!(e, ScenarioError::Constraint { .. })
        }),
        ("n_machines = 1\nclient.1.nb_nodes = 1\n", |e| matches!(e, ScenarioError::Constraint { .. })),
    ];
    for (doc, expected) in cases {
        let err = Scenario::parse(doc).unwrap_err();
        assert!(expected(&err), "{doc:?} gave {err}");
    }
}

#[test]
fn overrides_reach_every_client() {
    let s = Scenario::preset("deadlock-hold").unwrap();
    let t = s.with_override("client.*.semantics", "fail").unwrap();
    assert!(t
        .clients
        .iter()
        .all(|c| c.semantics == qurd_core::Semantics::Fail));
    let u = s.with_override("client.1.nb_nodes", "1").unwrap();
    assert_eq!((u.clients[0].nb_nodes, u.clients[1].nb_nodes), (2, 1));
    assert!(s.with_override("client.9.nb_nodes", "1").is_err());
}

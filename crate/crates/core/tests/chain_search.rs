mod common;

use appnet_core::{conforms, RegistryError};
use common::{brute_force_chains, graph, payload_for};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn search_equals_enumeration(g in graph(12, 10), max_len in 0usize..=3) {
        let r = g.registry();
        for from in g.names() {
            for to in g.names() {
                let got = r.find_adapter_chains(&from, &to, max_len).unwrap();
                let want = brute_force_chains(&g.adapters, &from, &to, max_len);
                prop_assert_eq!(got, want, "{} -> {} (max {})", from, to, max_len);
            }
        }
    }

    #[test]
    fn every_found_chain_type_checks_and_runs(g in graph(12, 10), salt in any::<u8>()) {
        let r = g.registry();
        for from in &g.messages {
            let input = payload_for(&from.schema, salt);
            for to in &g.messages {
                for chain in r.find_adapter_chains(&from.name, &to.name, 3).unwrap() {
                    prop_assert_eq!(r.chain_target(&from.name, &chain).unwrap(), to.name.clone());
                    let out = r.apply_chain(&input, &chain).unwrap();
                    prop_assert!(conforms(&out, &to.schema).is_empty());
                }
            }
        }
    }

    #[test]
    fn compatible_targets_pick_the_first_chain(g in graph(12, 10), max_len in 0usize..=3) {
        let r = g.registry();
        let names = g.names();
        for from in &names {
            let targets = r.compatible_targets(from, names.iter(), max_len).unwrap();
            for to in &names {
                let first = brute_force_chains(&g.adapters, from, to, max_len).into_iter().next();
                prop_assert_eq!(targets.get(to).cloned(), first);
            }
        }
    }

    #[test]
    fn chains_compose(g in graph(8, 10), salt in any::<u8>()) {
        let r = g.registry();
        for a in &g.messages {
            let p = payload_for(&a.schema, salt);
            for b in &g.messages {
                for c1 in r.find_adapter_chains(&a.name, &b.name, 2).unwrap() {
                    let mid = r.apply_chain(&p, &c1).unwrap();
                    for c in &g.messages {
                        for c2 in r.find_adapter_chains(&b.name, &c.name, 2).unwrap() {
                            let joined: Vec<String> = c1.iter().chain(&c2).cloned().collect();
                            prop_assert_eq!(
                                r.apply_chain(&p, &joined).unwrap(),
                                r.apply_chain(&mid, &c2).unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn search_is_deterministic(g in graph(12, 10)) {
        let r1 = g.registry();
        let mut rev = g.clone();
        rev.adapters.reverse();
        let r2 = rev.registry();
        for from in g.names() {
            for to in g.names() {
                let a = serde_json::to_string(&r1.find_adapter_chains(&from, &to, 3).unwrap()).unwrap();
                let b = serde_json::to_string(&r2.find_adapter_chains(&from, &to, 3).unwrap()).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn unknown_endpoints_are_errors() {
    let r = appnet_core::MessageRegistry::new();
    assert!(matches!(
        r.find_adapter_chains("a.b", "a.b", 3),
        Err(RegistryError::UnknownMessage(_))
    ));
}

#[test]
fn generated_graphs_exercise_long_chains() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strategy = graph(12, 10);
    let (mut multi, mut parallel) = (0, 0);
    for _ in 0..200 {
        let g = strategy.new_tree(&mut runner).unwrap().current();
        let r = g.registry();
        let mut longest = 0;
        for from in g.names() {
            for to in g.names() {
                let chains = r.find_adapter_chains(&from, &to, 3).unwrap();
                longest = longest.max(chains.iter().map(Vec::len).max().unwrap_or(0));
                if chains.iter().filter(|c| c.len() == 1).count() > 1 {
                    parallel += 1;
                }
            }
        }
        if longest >= 2 {
            multi += 1;
        }
    }
    assert!(
        multi >= 40,
        "only {multi} of 200 graphs have a chain of length >= 2"
    );
    assert!(parallel > 0, "no parallel adapters generated");
}

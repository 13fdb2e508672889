mod common;

use appnet_core::{recommend, Connection, ConnectionId, ConnectionStatus, Origin, Reason, UserId};
use common::{apps, brute_force_recommendations, graph, Existing, Expected};
use proptest::prelude::*;

fn status(e: Existing) -> ConnectionStatus {
    match e {
        Existing::Recommended => ConnectionStatus::Recommended,
        Existing::Confirmed => ConnectionStatus::Confirmed,
        Existing::Rejected => ConnectionStatus::Rejected,
        Existing::Revoked => ConnectionStatus::Revoked,
    }
}

fn existing_strategy() -> impl Strategy<Value = Vec<(usize, Existing)>> {
    prop::collection::vec(
        (
            any::<prop::sample::Index>().prop_map(|i| i.index(1 << 16)),
            prop_oneof![
                Just(Existing::Recommended),
                Just(Existing::Confirmed),
                Just(Existing::Rejected),
                Just(Existing::Revoked),
            ],
        ),
        0..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recommendations_equal_brute_force(
        (g, installed) in graph(12, 10).prop_flat_map(|g| { let n = g.names(); (Just(g), apps(n, 8)) }),
        picks in existing_strategy(),
        max_len in 0usize..=3,
    ) {
        let r = g.registry();
        // Existing connections are taken from the unrestricted candidate list
        // so that suppression actually gets exercised.
        let all = brute_force_recommendations(&g, &installed, &[], max_len);
        let now = chrono::DateTime::from_timestamp(0, 0).unwrap();
        let mut existing_oracle = Vec::new();
        let mut existing = Vec::new();
        if !all.is_empty() {
            for (k, (i, st)) in picks.iter().enumerate() {
                let e: &Expected = &all[i % all.len()];
                existing_oracle.push((e.producer.clone(), e.message.clone(), e.consumer.clone(), e.chain.clone(), *st));
                existing.push(Connection {
                    connection_id: ConnectionId::new(format!("c{k}")),
                    user_id: UserId::new("u"),
                    producer: e.producer.as_str().into(),
                    message: e.message.clone(),
                    chain: e.chain.clone(),
                    consumer: e.consumer.as_str().into(),
                    status: status(*st),
                    origin: Origin::Recommended,
                    created_at: now,
                    updated_at: now,
                });
            }
        }

        let got: Vec<Expected> = recommend(&r, &installed, &existing, max_len)
            .unwrap()
            .into_iter()
            .map(|c| Expected {
                class: match c.reason {
                    Reason::IntentMatch => 0,
                    Reason::Direct => 1,
                    Reason::AdapterChain => 2,
                },
                len: c.chain.len(),
                producer: c.producer.to_string(),
                message: c.message,
                consumer: c.consumer.to_string(),
                chain: c.chain,
            })
            .collect();
        let want = brute_force_recommendations(&g, &installed, &existing_oracle, max_len);
        prop_assert_eq!(got, want);
    }
}

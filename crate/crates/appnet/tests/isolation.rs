mod support;

use support::{isolation_fuzz, unconfirmed_queries};

#[test]
fn fuzzed_operations_stay_inside_one_userspace() {
    for seed in [1u64, 2, 3] {
        let r = isolation_fuzz(seed, 300, 5);
        assert!(r.store_errors.is_empty(), "{:?}", r.store_errors);
        assert!(
            r.violations.is_empty(),
            "seed {seed}: {:#?}",
            &r.violations[..r.violations.len().min(10)]
        );
        assert_eq!(r.foreign_descriptors, 0);
        assert!(r.user_ops > 250);
    }
}

#[test]
fn queries_only_follow_confirmation() {
    let r = isolation_fuzz(7, 400, 5);
    let (checked, bad) = unconfirmed_queries(&r.audit);
    assert!(bad.is_empty(), "{bad:?}");
    assert!(checked > 0 || r.descriptors == 0);
}

#[test]
fn fuzz_is_not_vacuous() {
    let r = isolation_fuzz(11, 1000, 5);
    assert!(
        r.descriptors >= 20,
        "{} descriptors, ops {:?}",
        r.descriptors,
        r.kinds
    );
    for kind in [
        "install",
        "exchange",
        "confirm",
        "query",
        "verify",
        "uninstall",
        "foreign-confirm",
    ] {
        assert!(r.kinds.get(kind).copied().unwrap_or(0) > 0, "no {kind} ops");
    }
}

#[test]
fn the_detector_sees_cross_user_reads() {
    use appnet::broker::BrokerConfig;
    use appnet::store::MemoryStore;
    use std::sync::Arc;
    use support::{owner_of, RecordingStore, World};

    let rec = Arc::new(RecordingStore::new(Arc::new(MemoryStore::new())));
    let w = World::new(rec.clone(), BrokerConfig::default());
    w.market.create_user("alice").unwrap();
    w.market.create_user("bob").unwrap();
    rec.take();
    // Listing every userspace is an operator view, not a user operation.
    w.market.userspaces().unwrap();
    let owners: Vec<String> = rec.take().iter().filter_map(owner_of).collect();
    assert!(owners.contains(&"alice".to_string()) && owners.contains(&"bob".to_string()));
}

#![allow(dead_code)]

use std::collections::BTreeMap;

use appnet_core::{
    AdapterDefinition, AppId, ApplicationDefinition, Field, Intent, MappingRule, MessageRegistry,
    MessageSchema, NamedMessage, Payload, PrimitiveType,
};
use proptest::prelude::*;
use serde_json::{json, Value};

pub const TYPES: [PrimitiveType; 5] = [
    PrimitiveType::String,
    PrimitiveType::Integer,
    PrimitiveType::Decimal,
    PrimitiveType::Boolean,
    PrimitiveType::Timestamp,
];

pub fn literal(ty: PrimitiveType, salt: u8) -> Value {
    match ty {
        PrimitiveType::String => json!(format!("v{salt}")),
        PrimitiveType::Integer => json!(i64::from(salt) - 100),
        PrimitiveType::Decimal => json!(f64::from(salt) / 4.0),
        PrimitiveType::Boolean => json!(salt.is_multiple_of(2)),
        PrimitiveType::Timestamp => json!(format!("2024-05-{:02}T10:00:00Z", salt % 28 + 1)),
    }
}

/// A payload conforming to `schema`.
pub fn payload_for(schema: &MessageSchema, salt: u8) -> Payload {
    schema
        .fields()
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), literal(f.ty, salt.wrapping_add(i as u8))))
        .collect()
}

/// Schema with up to six fields drawn from a small name pool.
pub fn schema() -> impl Strategy<Value = MessageSchema> {
    prop::collection::btree_map(0u8..6, 0usize..TYPES.len(), 1..=5).prop_map(|m| {
        MessageSchema::from_fields(
            m.into_iter()
                .map(|(n, t)| Field {
                    name: format!("f{n}"),
                    ty: TYPES[t],
                })
                .collect(),
        )
    })
}

/// Rules covering every target field exactly once: a same-typed copy where
/// the choice byte asks for one and the source has one, else a constant.
pub fn covering_rules(
    from: &MessageSchema,
    to: &MessageSchema,
    choices: &[u8],
) -> Vec<MappingRule> {
    to.fields()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let c = choices.get(i).copied().unwrap_or(0);
            let sources: Vec<&Field> = from.fields().iter().filter(|f| f.ty == t.ty).collect();
            if c % 3 != 0 && !sources.is_empty() {
                MappingRule::copy(
                    sources[c as usize % sources.len()].name.clone(),
                    t.name.clone(),
                )
            } else {
                MappingRule::constant(t.name.clone(), literal(t.ty, c))
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Graph {
    pub messages: Vec<NamedMessage>,
    pub adapters: Vec<AdapterDefinition>,
}

impl Graph {
    pub fn registry(&self) -> MessageRegistry {
        let mut r = MessageRegistry::new();
        for m in &self.messages {
            r.register_message(m.clone())
                .expect("generated message is valid");
        }
        for a in &self.adapters {
            r.register_adapter(a.clone())
                .expect("generated adapter is valid");
        }
        r
    }

    pub fn names(&self) -> Vec<String> {
        self.messages.iter().map(|m| m.name.clone()).collect()
    }
}

/// Up to `max_msgs` messages and `max_adapters` valid adapters, with
/// parallel edges, self-loops excluded, and cycles allowed.
pub fn graph(max_msgs: usize, max_adapters: usize) -> impl Strategy<Value = Graph> {
    prop::collection::vec(schema(), 1..=max_msgs).prop_flat_map(move |schemas| {
        let n = schemas.len();
        let adapter = (0..n, 0..n, prop::collection::vec(any::<u8>(), 6), 0u8..26);
        prop::collection::vec(adapter, 0..=max_adapters).prop_map(move |raw| {
            let messages: Vec<NamedMessage> = schemas
                .iter()
                .enumerate()
                .map(|(i, s)| NamedMessage {
                    name: format!("msg.m{i}"),
                    schema: s.clone(),
                    owner: AppId::new("owner"),
                })
                .collect();
            let adapters = raw
                .into_iter()
                .enumerate()
                .filter(|(_, (f, t, _, _))| f != t)
                .map(|(i, (f, t, choices, letter))| AdapterDefinition {
                    adapter_id: format!("{}{i}", (b'a' + letter) as char),
                    from_message: messages[f].name.clone(),
                    to_message: messages[t].name.clone(),
                    rules: covering_rules(&messages[f].schema, &messages[t].schema, &choices),
                })
                .collect();
            Graph { messages, adapters }
        })
    })
}

/// Every adapter-id sequence of length `<= max_len` over `adapters`, by
/// plain cartesian enumeration, kept if it links `from` to `to` without
/// visiting a message twice. Sorted by length, then ids.
pub fn brute_force_chains(
    adapters: &[AdapterDefinition],
    from: &str,
    to: &str,
    max_len: usize,
) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut seqs: Vec<Vec<usize>> = vec![vec![]];
    for len in 0..=max_len {
        for seq in &seqs {
            let mut at = from.to_string();
            let mut seen = vec![at.clone()];
            let mut ok = true;
            for &i in seq {
                let a = &adapters[i];
                if a.from_message != at || seen.contains(&a.to_message) {
                    ok = false;
                    break;
                }
                at = a.to_message.clone();
                seen.push(at.clone());
            }
            if ok && at == to {
                out.push(
                    seq.iter()
                        .map(|&i| adapters[i].adapter_id.clone())
                        .collect(),
                );
            }
        }
        if len == max_len {
            break;
        }
        seqs = seqs
            .iter()
            .flat_map(|s| {
                (0..adapters.len()).map(move |i| {
                    let mut n = s.clone();
                    n.push(i);
                    n
                })
            })
            .collect();
    }
    out.sort_by(|a: &Vec<String>, b: &Vec<String>| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// A status for an existing connection in oracle instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Existing {
    Recommended,
    Confirmed,
    Rejected,
    Revoked,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Expected {
    pub class: u8,
    pub len: usize,
    pub producer: String,
    pub message: String,
    pub consumer: String,
    pub chain: Vec<String>,
}

/// The recommendation list by brute force: all ordered pairs, all fired
/// messages, every handled target with its minimal chain from the
/// enumeration oracle, minus tuples already confirmed or rejected.
pub fn brute_force_recommendations(
    graph: &Graph,
    apps: &BTreeMap<AppId, ApplicationDefinition>,
    existing: &[(String, String, String, Vec<String>, Existing)],
    max_len: usize,
) -> Vec<Expected> {
    let mut out = Vec::new();
    for p in apps.values() {
        for c in apps.values() {
            if p.app_id == c.app_id {
                continue;
            }
            for m in &p.fired {
                for t in &c.handled {
                    let chains = brute_force_chains(&graph.adapters, m, t, max_len);
                    let Some(chain) = chains
                        .into_iter()
                        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
                    else {
                        continue;
                    };
                    let blocked = existing.iter().any(|(ep, em, ec, ech, st)| {
                        matches!(st, Existing::Confirmed | Existing::Rejected)
                            && ep == p.app_id.as_str()
                            && em == m
                            && ec == c.app_id.as_str()
                            && *ech == chain
                    });
                    if blocked {
                        continue;
                    }
                    let class = if c.intents.iter().any(|i| &i.message_name == t) {
                        0
                    } else if chain.is_empty() {
                        1
                    } else {
                        2
                    };
                    out.push(Expected {
                        class,
                        len: chain.len(),
                        producer: p.app_id.to_string(),
                        message: m.clone(),
                        consumer: c.app_id.to_string(),
                        chain,
                    });
                }
            }
        }
    }
    out.sort();
    out
}

/// Up to `max_apps` apps over the graph's messages. Intents are a subset of
/// the handled set.
pub fn apps(
    names: Vec<String>,
    max_apps: usize,
) -> impl Strategy<Value = BTreeMap<AppId, ApplicationDefinition>> {
    let n = names.len();
    let app = (
        prop::collection::btree_set(0..n, 0..=3.min(n)),
        prop::collection::btree_set(0..n, 0..=3.min(n)),
        any::<u8>(),
    );
    prop::collection::vec(app, 0..=max_apps).prop_map(move |raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (fired, handled, intent_mask))| {
                let id = AppId::new(format!("app{i}"));
                let handled: std::collections::BTreeSet<String> =
                    handled.iter().map(|&j| names[j].clone()).collect();
                let intents = handled
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| intent_mask & (1 << k) != 0)
                    .map(|(_, m)| Intent::on(m.clone()))
                    .collect();
                let def = ApplicationDefinition {
                    app_id: id.clone(),
                    display_name: format!("App {i}"),
                    provider_name: "p".into(),
                    endpoint: "http://127.0.0.1:1".into(),
                    fired: fired.iter().map(|&j| names[j].clone()).collect(),
                    handled,
                    intents,
                };
                (id, def)
            })
            .collect()
    })
}

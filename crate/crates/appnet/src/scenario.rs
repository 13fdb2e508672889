//! The Bob scenario, end to end over HTTP.
//!
//! Bob buys a book from ShopMart, shipped to his home in Beijing, then books
//! a hotel in Shanghai through StayFinder. With the `booking2location`
//! adapter registered and the recommended connection confirmed, the booking
//! event reaches ShopMart as a location change and the order's shipping
//! address follows Bob to the hotel.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use appnet_core::{
    count_participant_actions, ActionKind, ActionTrace, AdapterDefinition, AppId, Intent,
    MappingRule, MessageSchema, NamedMessage, Participant, Payload, PrimitiveType, UserId,
};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

use crate::broker::{AuditKind, Broker, BrokerConfig};
use crate::clock::SystemClock;
use crate::http::{market_router, runtime_router, Server};
use crate::market::{ApplicationSubmission, ManualConnection, Market};
use crate::runtime::{DeliveryOutcome, Runtime};
use crate::sdk::{AppClient, Delivery, MarketClient, SdkError};
use crate::store::{Collection, Store};

pub const BOOKING: &str = "travel.booking.created";
pub const LOCATION: &str = "user.location.changed";
pub const ORDER: &str = "shop.order.created";
pub const ADAPTER: &str = "booking2location";
pub const HOME_ADDRESS: &str = "Home, Beijing";
pub const HOTEL_ADDRESS: &str = "Pudong Hotel, Shanghai";
pub const NO_CONNECTION: &str = "no connection available";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    /// Leave the recommendation pending.
    pub skip_confirmation: bool,
    pub register_adapter: bool,
    /// Draw the connection by hand instead of confirming the recommendation.
    pub manual_connection: bool,
    /// Who is charged for registering the adapter.
    pub adapter_owner: Participant,
    pub broker: BrokerConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            skip_confirmation: false,
            register_adapter: true,
            manual_connection: false,
            adapter_owner: Participant::Intermediary,
            broker: BrokerConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
#[error("scenario step `{step}` failed: {message}")]
pub struct ScenarioError {
    pub step: String,
    pub message: String,
}

fn step<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Result<T, ScenarioError> {
    r.map_err(|e| ScenarioError {
        step: name.into(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub success: bool,
    pub notes: Vec<String>,
    pub trace: ActionTrace,
    pub action_counts: BTreeMap<String, u64>,
    pub recommendations: usize,
    pub confirmations: usize,
    pub manual_connections: usize,
    pub connection_queries: usize,
    pub deliveries: usize,
    pub shipping_address_before: String,
    pub shipping_address_after: String,
    pub booking: Payload,
    /// What ShopMart's handler received, if anything.
    pub received: Option<Payload>,
    pub assertions: Vec<Assertion>,
    pub elapsed_ms: u64,
}

impl ScenarioResult {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "scenario {}: {} recommendation(s), {} confirmation(s), {} manual connection(s), {} query(ies), {} delivery(ies)\n",
            if self.success { "succeeded" } else { "FAILED" },
            self.recommendations,
            self.confirmations,
            self.manual_connections,
            self.connection_queries,
            self.deliveries,
        );
        out.push_str(&format!(
            "shipping address: {:?} -> {:?}\n",
            self.shipping_address_before, self.shipping_address_after
        ));
        for (who, n) in &self.action_counts {
            out.push_str(&format!("  {who}: {n} action(s)\n"));
        }
        for a in self.assertions.iter().filter(|a| !a.passed) {
            out.push_str(&format!("  failed: {} ({})\n", a.name, a.detail));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }
}

pub fn booking_message(owner: &AppId) -> NamedMessage {
    NamedMessage {
        name: BOOKING.into(),
        schema: MessageSchema::new()
            .with("hotel_address", PrimitiveType::String)
            .with("checkin", PrimitiveType::Timestamp)
            .with("city", PrimitiveType::String),
        owner: owner.clone(),
    }
}

pub fn location_message(owner: &AppId) -> NamedMessage {
    NamedMessage {
        name: LOCATION.into(),
        schema: MessageSchema::new()
            .with("new_address", PrimitiveType::String)
            .with("effective", PrimitiveType::Timestamp),
        owner: owner.clone(),
    }
}

pub fn order_message(owner: &AppId) -> NamedMessage {
    NamedMessage {
        name: ORDER.into(),
        schema: MessageSchema::new()
            .with("order_id", PrimitiveType::String)
            .with("item", PrimitiveType::String)
            .with("shipping_address", PrimitiveType::String),
        owner: owner.clone(),
    }
}

pub fn booking2location() -> AdapterDefinition {
    AdapterDefinition {
        adapter_id: ADAPTER.into(),
        from_message: BOOKING.into(),
        to_message: LOCATION.into(),
        rules: vec![
            MappingRule::copy("hotel_address", "new_address"),
            MappingRule::copy("checkin", "effective"),
        ],
    }
}

pub fn booking_payload() -> Payload {
    let mut p = Payload::new();
    p.insert("hotel_address".into(), json!(HOTEL_ADDRESS));
    p.insert("checkin".into(), json!("2024-05-01T14:00:00Z"));
    p.insert("city".into(), json!("Shanghai"));
    p
}

pub fn stayfinder_submission(endpoint: &str) -> ApplicationSubmission {
    ApplicationSubmission {
        display_name: "StayFinder".into(),
        provider_name: "StayFinder Travel".into(),
        endpoint: endpoint.into(),
        fired: [BOOKING.to_string()].into(),
        handled: Default::default(),
        intents: vec![],
        messages: vec![],
    }
}

pub fn shopmart_submission(endpoint: &str) -> ApplicationSubmission {
    ApplicationSubmission {
        display_name: "ShopMart".into(),
        provider_name: "ShopMart Retail".into(),
        endpoint: endpoint.into(),
        fired: [ORDER.to_string()].into(),
        handled: [LOCATION.to_string()].into(),
        intents: vec![Intent::on(LOCATION)],
        messages: vec![order_message(&"shopmart".into())],
    }
}

#[derive(Clone, Debug)]
struct Order {
    shipping_address: String,
}

fn check(out: &mut Vec<Assertion>, name: &str, passed: bool, detail: String) {
    out.push(Assertion {
        name: name.into(),
        passed,
        detail,
    });
}

fn store_is_clean(store: &dyn Store) -> Result<bool, crate::store::StoreError> {
    for c in Collection::ALL {
        if !store.list(c)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs the scenario against `store`, which must be empty.
pub async fn run_scenario(
    config: &ScenarioConfig,
    store: Arc<dyn Store>,
) -> Result<ScenarioResult, ScenarioError> {
    let started = Instant::now();
    if !step("check store", store_is_clean(&*store))? {
        return Err(ScenarioError {
            step: "check store".into(),
            message: "store is not clean".into(),
        });
    }
    let broker_config = BrokerConfig {
        expose_audit: true,
        ..config.broker.clone()
    };
    let broker = step(
        "open broker",
        Broker::open(store, Arc::new(SystemClock), broker_config),
    )?;
    let market_server = step(
        "start market",
        Server::ephemeral(market_router(Market::new(broker.clone()))).await,
    )?;
    let runtime = Runtime::new(broker.clone());
    let runtime_server = step(
        "start runtime",
        Server::ephemeral(runtime_router(runtime.clone())).await,
    )?;
    let market_url = market_server.url();
    let runtime_url = runtime_server.url();
    let market = MarketClient::new(market_url.clone());

    let stay_listener = step("bind stayfinder", TcpListener::bind("127.0.0.1:0").await)?;
    let shop_listener = step("bind shopmart", TcpListener::bind("127.0.0.1:0").await)?;
    let stay_endpoint = format!(
        "http://{}",
        step("bind stayfinder", stay_listener.local_addr())?
    );
    let shop_endpoint = format!(
        "http://{}",
        step("bind shopmart", shop_listener.local_addr())?
    );

    let mut trace = ActionTrace::new();
    let now = || broker.now();
    let stayfinder_id = AppId::new("stayfinder");
    let shopmart_id = AppId::new("shopmart");
    let stay_p = Participant::Provider(stayfinder_id.clone());
    let shop_p = Participant::Provider(shopmart_id.clone());

    // Configuration stage: providers.
    step(
        "register travel.booking.created",
        market
            .register_message(&booking_message(&stayfinder_id))
            .await,
    )?;
    trace.record(stay_p.clone(), ActionKind::RegisterMessage, now());
    let stayfinder = step(
        "submit stayfinder",
        AppClient::register(
            &market_url,
            &runtime_url,
            &stayfinder_submission(&stay_endpoint),
        )
        .await,
    )?;
    trace.record(stay_p.clone(), ActionKind::SubmitApp, now());

    step(
        "register user.location.changed",
        market
            .register_message(&location_message(&shopmart_id))
            .await,
    )?;
    trace.record(shop_p.clone(), ActionKind::RegisterMessage, now());
    let shopmart = step(
        "submit shopmart",
        AppClient::register(
            &market_url,
            &runtime_url,
            &shopmart_submission(&shop_endpoint),
        )
        .await,
    )?;
    trace.record(shop_p.clone(), ActionKind::SubmitApp, now());
    if stayfinder.app_id() != &stayfinder_id || shopmart.app_id() != &shopmart_id {
        return Err(ScenarioError {
            step: "submit apps".into(),
            message: format!(
                "unexpected app ids {} / {}",
                stayfinder.app_id(),
                shopmart.app_id()
            ),
        });
    }

    if config.register_adapter {
        step(
            "register booking2location",
            market.register_adapter(&booking2location()).await,
        )?;
        trace.record(
            config.adapter_owner.clone(),
            ActionKind::RegisterAdapter,
            now(),
        );
    }

    // Apps start listening.
    let bob = UserId::new("bob");
    let orders: Arc<Mutex<BTreeMap<UserId, Order>>> = Arc::default();
    orders.lock().insert(
        bob.clone(),
        Order {
            shipping_address: HOME_ADDRESS.into(),
        },
    );
    let received: Arc<Mutex<Option<Payload>>> = Arc::default();
    let shop_inbox = step("shopmart inbox", shopmart.inbox().await)?;
    {
        let orders = orders.clone();
        let received = received.clone();
        step(
            "shopmart handler",
            shop_inbox.on_message(LOCATION, move |d: Delivery| {
                let user = d.user_id.ok_or("delivery without a verified user")?;
                let address = d.instance.payload["new_address"]
                    .as_str()
                    .ok_or("new_address is not a string")?
                    .to_string();
                let mut orders = orders.lock();
                let order = orders
                    .get_mut(&user)
                    .ok_or_else(|| format!("no order for {user}"))?;
                order.shipping_address = address;
                *received.lock() = Some(d.instance.payload);
                Ok(())
            }),
        )?;
    }
    let stay_inbox = step("stayfinder inbox", stayfinder.inbox().await)?;
    let _shop_server = step(
        "serve shopmart",
        Server::on(shop_listener, shop_inbox.router()),
    )?;
    let _stay_server = step(
        "serve stayfinder",
        Server::on(stay_listener, stay_inbox.router()),
    )?;

    // Configuration stage: the user.
    step("create bob", market.create_user(bob.as_str()).await)?;
    trace.record(Participant::User, ActionKind::CreateAccount, now());
    for (app, client, who) in [
        (&shopmart_id, &shopmart, &shop_p),
        (&stayfinder_id, &stayfinder, &stay_p),
    ] {
        let grant = step(&format!("install {app}"), market.install(&bob, app).await)?;
        trace.record(Participant::User, ActionKind::Install, now());
        step(
            &format!("exchange grant for {app}"),
            client.exchange_grant(&bob, &grant.grant_code).await,
        )?;
        trace.record(who.clone(), ActionKind::ExchangeGrant, now());
    }

    let recs = step("list recommendations", market.recommendations(&bob).await)?;
    let mut notes = Vec::new();
    let mut connected = false;
    if config.manual_connection {
        let req = ManualConnection {
            producer: stayfinder_id.clone(),
            message: BOOKING.into(),
            consumer: shopmart_id.clone(),
            chain: None,
        };
        match market.connect(&bob, &req).await {
            Ok(_) => {
                trace.record(Participant::User, ActionKind::ManualConnect, now());
                connected = true;
            }
            Err(e @ SdkError::Api { .. }) if e.code() == Some("incompatible") => {
                notes.push(NO_CONNECTION.into())
            }
            Err(e) => return step("manual connection", Err(e)),
        }
    } else if recs.is_empty() {
        notes.push(NO_CONNECTION.into());
    } else if !config.skip_confirmation {
        step(
            "confirm recommendation",
            market
                .confirm(&bob, &recs[0].connection.connection_id)
                .await,
        )?;
        trace.record(Participant::User, ActionKind::Confirm, now());
        connected = true;
    }

    // Execution stage.
    let address_before = orders.lock()[&bob].shipping_address.clone();
    let verified_before = shop_inbox.stats().verified;
    let reports = step(
        "fire booking",
        stayfinder.fire(&bob, BOOKING, booking_payload()).await,
    )?;
    trace.record(stay_p.clone(), ActionKind::QueryConnections, now());
    for r in &reports {
        trace.record(stay_p.clone(), ActionKind::Deliver, now());
        if r.reported {
            trace.record(stay_p.clone(), ActionKind::ReportDelivery, now());
        }
    }
    for _ in verified_before..shop_inbox.stats().verified {
        trace.record(shop_p.clone(), ActionKind::VerifyCommunication, now());
    }
    if reports.is_empty() && notes.is_empty() {
        notes.push("no confirmed connection for the booking".into());
    }
    let deliveries = reports
        .iter()
        .filter(|r| r.outcome == DeliveryOutcome::Delivered)
        .count();
    let address_after = orders.lock()[&bob].shipping_address.clone();
    let received = received.lock().clone();

    let audit = step("read audit", runtime.audit())?;
    let audited = |k: AuditKind| audit.iter().filter(|r| r.kind == k).count();
    let connection_queries = audited(AuditKind::Query);

    let confirmations = trace.count_of(ActionKind::Confirm);
    let manual_connections = trace.count_of(ActionKind::ManualConnect);
    let mut assertions = Vec::new();
    let expected_recs = usize::from(config.register_adapter);
    check(
        &mut assertions,
        "recommendations",
        recs.len() == expected_recs,
        format!("{} (expected {expected_recs})", recs.len()),
    );
    check(
        &mut assertions,
        "connection queries",
        connection_queries == 1 && trace.count_of(ActionKind::QueryConnections) == 1,
        format!("{connection_queries} (expected 1)"),
    );
    if connected {
        let expected_conf = usize::from(!config.manual_connection);
        check(
            &mut assertions,
            "confirmations",
            confirmations == expected_conf && audited(AuditKind::Confirm) == expected_conf,
            format!("{confirmations} (expected {expected_conf})"),
        );
        check(
            &mut assertions,
            "deliveries",
            deliveries == 1 && audited(AuditKind::DeliveryReported) == 1,
            format!("{deliveries} (expected 1)"),
        );
        check(
            &mut assertions,
            "shipping address follows the booking",
            address_after == HOTEL_ADDRESS,
            format!("{address_after:?} (expected {HOTEL_ADDRESS:?})"),
        );
        let mut expected = Payload::new();
        expected.insert("new_address".into(), json!(HOTEL_ADDRESS));
        expected.insert("effective".into(), json!("2024-05-01T14:00:00Z"));
        check(
            &mut assertions,
            "received payload",
            received.as_ref() == Some(&expected),
            format!("{received:?}"),
        );
    } else {
        check(
            &mut assertions,
            "deliveries",
            deliveries == 0,
            format!("{deliveries} (expected 0)"),
        );
        check(
            &mut assertions,
            "shipping address unchanged",
            address_after == HOME_ADDRESS,
            format!("{address_after:?}"),
        );
    }
    if !config.register_adapter {
        check(
            &mut assertions,
            "reports no connection",
            notes.iter().any(|n| n == NO_CONNECTION),
            format!("{notes:?}"),
        );
    }

    step("stop market", market_server.stop().await)?;
    step("stop runtime", runtime_server.stop().await)?;

    Ok(ScenarioResult {
        success: assertions.iter().all(|a| a.passed),
        notes,
        action_counts: count_participant_actions(&trace),
        trace,
        recommendations: recs.len(),
        confirmations,
        manual_connections,
        connection_queries,
        deliveries,
        shipping_address_before: address_before,
        shipping_address_after: address_after,
        booking: booking_payload(),
        received,
        assertions,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

//! Client side of AppNet: what an application (and a user agent) links
//! against.
//!
//! [`MarketClient`] speaks the market API. [`AppClient`] is one registered
//! application: it exchanges grants, caches tokens per user and fires
//! messages end to end. [`Inbox`] receives deliveries.
//!
//! Deliveries are at-least-once when retries happen after a timeout, so a
//! handler may see the same instance twice.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use appnet_core::{
    conforms, run_chain, AdapterDefinition, AppId, ApplicationDefinition, Connection, ConnectionId,
    MessageInstance, MessageSchema, NamedMessage, Payload, Recommendation, Timestamp, UserId,
    Userspace, Violation,
};
use futures::future::join_all;
use parking_lot::Mutex;
use reqwest::{Method, RequestBuilder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::error::ErrorBody;
use crate::http::{
    Descriptors, GrantResponse, ReportRequest, TokenRequest, TokenResponse, VerifyRequest,
    COMM_ID_HEADER, CREDENTIAL_HEADER,
};
use crate::market::{ApplicationSubmission, ManualConnection, SubmittedApp};
use crate::runtime::{ConnectionDescriptor, DeliveryOutcome, UserspaceView, Verification};

mod inbox;

pub use inbox::{Delivery, Inbox, InboxStats};

#[derive(Debug, Error)]
pub enum SdkError {
    /// The service answered with an error; code and detail are verbatim.
    #[error("{status} {}: {}", .body.error, .body.detail)]
    Api { status: u16, body: ErrorBody },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("nonconforming payload: {}", join(.0))]
    NonconformingPayload(Vec<Violation>),
    #[error("{0} is not a handled message of this app")]
    UnknownHandledMessage(String),
    #[error("no unexpired token cached for user {0}")]
    NoToken(UserId),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl SdkError {
    /// The service's error code, if the failure came from the service.
    pub fn code(&self) -> Option<&str> {
        match self {
            SdkError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type SdkResult<T> = Result<T, SdkError>;

async fn call<T: DeserializeOwned>(req: RequestBuilder) -> SdkResult<T> {
    let resp = req.send().await?;
    let status = resp.status();
    let bytes = resp.bytes().await?;
    if !status.is_success() {
        let body = serde_json::from_slice::<ErrorBody>(&bytes).unwrap_or_else(|_| ErrorBody {
            error: format!("http-{}", status.as_u16()),
            detail: String::from_utf8_lossy(&bytes).into_owned(),
        });
        return Err(SdkError::Api {
            status: status.as_u16(),
            body,
        });
    }
    let bytes: &[u8] = if bytes.is_empty() { b"null" } else { &bytes };
    serde_json::from_slice(bytes).map_err(|e| SdkError::Decode(e.to_string()))
}

fn base(url: &str) -> &str {
    url.trim_end_matches('/')
}

/// Market API client. Covers provider calls (messages, adapters, apps) and
/// the user calls the portal makes.
#[derive(Clone, Debug)]
pub struct MarketClient {
    http: reqwest::Client,
    url: String,
}

impl MarketClient {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_http(reqwest::Client::new(), url)
    }

    pub fn with_http(http: reqwest::Client, url: impl Into<String>) -> Self {
        Self {
            http,
            url: url.into(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http
            .request(method, format!("{}{path}", base(&self.url)))
    }

    pub async fn register_message(&self, m: &NamedMessage) -> SdkResult<()> {
        call::<serde_json::Value>(self.req(Method::POST, "/messages").json(m))
            .await
            .map(drop)
    }

    pub async fn message(&self, name: &str) -> SdkResult<NamedMessage> {
        call(self.req(Method::GET, &format!("/messages/{name}"))).await
    }

    pub async fn register_adapter(&self, a: &AdapterDefinition) -> SdkResult<()> {
        call::<serde_json::Value>(self.req(Method::POST, "/adapters").json(a))
            .await
            .map(drop)
    }

    pub async fn submit_application(&self, sub: &ApplicationSubmission) -> SdkResult<SubmittedApp> {
        call(self.req(Method::POST, "/apps").json(sub)).await
    }

    pub async fn update_application(
        &self,
        app: &AppId,
        credential: &str,
        sub: &ApplicationSubmission,
    ) -> SdkResult<ApplicationDefinition> {
        call(
            self.req(Method::PUT, &format!("/apps/{app}"))
                .header(CREDENTIAL_HEADER, credential)
                .json(sub),
        )
        .await
    }

    pub async fn application(&self, app: &AppId) -> SdkResult<ApplicationDefinition> {
        call(self.req(Method::GET, &format!("/apps/{app}"))).await
    }

    pub async fn applications(&self) -> SdkResult<Vec<ApplicationDefinition>> {
        call(self.req(Method::GET, "/apps")).await
    }

    pub async fn create_user(&self, name: &str) -> SdkResult<UserId> {
        #[derive(Deserialize)]
        struct Created {
            user_id: UserId,
        }
        let c: Created = call(
            self.req(Method::POST, "/users")
                .json(&json!({ "name": name })),
        )
        .await?;
        Ok(c.user_id)
    }

    pub async fn install(&self, user: &UserId, app: &AppId) -> SdkResult<GrantResponse> {
        call(
            self.req(Method::POST, &format!("/users/{user}/installs"))
                .json(&json!({ "app_id": app })),
        )
        .await
    }

    pub async fn uninstall(&self, user: &UserId, app: &AppId) -> SdkResult<()> {
        call(self.req(Method::DELETE, &format!("/users/{user}/installs/{app}"))).await
    }

    pub async fn recommendations(&self, user: &UserId) -> SdkResult<Vec<Recommendation>> {
        call(self.req(Method::GET, &format!("/users/{user}/recommendations"))).await
    }

    pub async fn confirm(&self, user: &UserId, id: &ConnectionId) -> SdkResult<Connection> {
        call(self.req(
            Method::POST,
            &format!("/users/{user}/connections/{id}/confirm"),
        ))
        .await
    }

    pub async fn reject(&self, user: &UserId, id: &ConnectionId) -> SdkResult<Connection> {
        call(self.req(
            Method::POST,
            &format!("/users/{user}/connections/{id}/reject"),
        ))
        .await
    }

    pub async fn connect(&self, user: &UserId, req: &ManualConnection) -> SdkResult<Connection> {
        call(
            self.req(Method::POST, &format!("/users/{user}/connections"))
                .json(req),
        )
        .await
    }

    pub async fn userspace(&self, user: &UserId) -> SdkResult<Userspace> {
        call(self.req(Method::GET, &format!("/users/{user}/userspace"))).await
    }

    pub async fn exchange_grant(&self, req: &TokenRequest) -> SdkResult<TokenResponse> {
        call(self.req(Method::POST, "/oauth/token").json(req)).await
    }
}

#[derive(Clone, Debug)]
pub struct AppRuntimeConfig {
    pub market_url: String,
    pub runtime_url: String,
    pub app_id: AppId,
    pub credential: String,
    /// Verify inbound comm-ids with the runtime before dispatching.
    pub verify_inbound: bool,
    pub delivery_timeout: Duration,
    /// Extra attempts after a network failure. HTTP error statuses are
    /// never retried.
    pub retries: u32,
    pub backoff_base: Duration,
}

impl AppRuntimeConfig {
    pub fn new(
        market_url: impl Into<String>,
        runtime_url: impl Into<String>,
        app_id: AppId,
        credential: impl Into<String>,
    ) -> Self {
        Self {
            market_url: market_url.into(),
            runtime_url: runtime_url.into(),
            app_id,
            credential: credential.into(),
            verify_inbound: true,
            delivery_timeout: Duration::from_secs(5),
            retries: 2,
            backoff_base: Duration::from_millis(250),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedToken {
    pub token: String,
    pub expires_at: Timestamp,
}

/// Result of one delivery attempt sequence for one descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub connection_id: ConnectionId,
    pub consumer: AppId,
    pub target_message: String,
    pub outcome: DeliveryOutcome,
    /// Status of the last response, if any arrived.
    pub http_status: Option<u16>,
    pub attempts: u32,
    pub detail: String,
    /// The payload after the chain, as sent.
    pub payload: Option<Payload>,
    /// Whether the outcome reached the runtime.
    pub reported: bool,
}

/// One application's handle on the broker.
#[derive(Clone)]
pub struct AppClient {
    config: Arc<AppRuntimeConfig>,
    http: reqwest::Client,
    market: MarketClient,
    clock: Arc<dyn Clock>,
    tokens: Arc<Mutex<HashMap<UserId, CachedToken>>>,
    schemas: Arc<Mutex<HashMap<String, MessageSchema>>>,
}

impl std::fmt::Debug for AppClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppClient")
            .field("app_id", &self.config.app_id)
            .finish_non_exhaustive()
    }
}

impl AppClient {
    pub fn new(config: AppRuntimeConfig) -> Self {
        let http = reqwest::Client::new();
        Self {
            market: MarketClient::with_http(http.clone(), config.market_url.clone()),
            config: Arc::new(config),
            http,
            clock: Arc::new(SystemClock),
            tokens: Arc::default(),
            schemas: Arc::default(),
        }
    }

    /// Submits `sub` and returns a client for the new app.
    pub async fn register(
        market_url: impl Into<String>,
        runtime_url: impl Into<String>,
        sub: &ApplicationSubmission,
    ) -> SdkResult<Self> {
        let market_url = market_url.into();
        let created = MarketClient::new(market_url.clone())
            .submit_application(sub)
            .await?;
        Ok(Self::new(AppRuntimeConfig::new(
            market_url,
            runtime_url,
            created.app_id,
            created.credential,
        )))
    }

    /// Judges token expiry by `clock` instead of the system clock.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_config(mut self, f: impl FnOnce(&mut AppRuntimeConfig)) -> Self {
        let mut config = (*self.config).clone();
        f(&mut config);
        self.config = Arc::new(config);
        self
    }

    pub fn config(&self) -> &AppRuntimeConfig {
        &self.config
    }

    pub fn app_id(&self) -> &AppId {
        &self.config.app_id
    }

    pub fn market(&self) -> &MarketClient {
        &self.market
    }

    fn runtime(&self, method: Method, path: &str) -> RequestBuilder {
        self.http
            .request(method, format!("{}{path}", base(&self.config.runtime_url)))
    }

    /// Trades a grant code handed over at install time for a token and
    /// caches it for `user`.
    pub async fn exchange_grant(&self, user: &UserId, grant_code: &str) -> SdkResult<CachedToken> {
        let resp = self
            .market
            .exchange_grant(&TokenRequest {
                grant_code: grant_code.into(),
                app_id: self.config.app_id.clone(),
                credential: self.config.credential.clone(),
            })
            .await?;
        let cached = CachedToken {
            token: resp.token,
            expires_at: resp.expires_at,
        };
        self.tokens.lock().insert(user.clone(), cached.clone());
        Ok(cached)
    }

    /// The cached token for `user`. Expired tokens are evicted, never served.
    pub fn token_for(&self, user: &UserId) -> SdkResult<String> {
        let now = self.clock.now();
        let mut tokens = self.tokens.lock();
        match tokens.get(user) {
            Some(t) if now < t.expires_at => Ok(t.token.clone()),
            Some(_) => {
                tokens.remove(user);
                Err(SdkError::NoToken(user.clone()))
            }
            None => Err(SdkError::NoToken(user.clone())),
        }
    }

    pub fn forget_token(&self, user: &UserId) {
        self.tokens.lock().remove(user);
    }

    pub async fn schema(&self, message: &str) -> SdkResult<MessageSchema> {
        if let Some(s) = self.schemas.lock().get(message) {
            return Ok(s.clone());
        }
        let m = self.market.message(message).await?;
        self.schemas.lock().insert(message.into(), m.schema.clone());
        Ok(m.schema)
    }

    pub async fn query(&self, token: &str, message: &str) -> SdkResult<Vec<ConnectionDescriptor>> {
        let d: Descriptors = call(
            self.runtime(Method::GET, "/connections")
                .query(&[("message", message)])
                .bearer_auth(token),
        )
        .await?;
        Ok(d.descriptors)
    }

    pub async fn userspace(&self, token: &str) -> SdkResult<UserspaceView> {
        call(self.runtime(Method::GET, "/userspace").bearer_auth(token)).await
    }

    pub async fn verify(&self, comm_id: &str, req: &VerifyRequest) -> SdkResult<Verification> {
        call(
            self.runtime(Method::POST, &format!("/communications/{comm_id}/verify"))
                .json(req),
        )
        .await
    }

    pub async fn report(
        &self,
        comm_id: &str,
        outcome: DeliveryOutcome,
        detail: &str,
    ) -> SdkResult<()> {
        call(
            self.runtime(Method::POST, &format!("/communications/{comm_id}/report"))
                .json(&ReportRequest {
                    outcome,
                    detail: detail.into(),
                }),
        )
        .await
    }

    /// Fires `message` on behalf of `user`, using the cached token.
    pub async fn fire(
        &self,
        user: &UserId,
        message: &str,
        payload: Payload,
    ) -> SdkResult<Vec<DeliveryReport>> {
        let token = self.token_for(user)?;
        self.fire_with_token(&token, message, payload).await
    }

    /// Query, transform, deliver and report. Deliveries run concurrently;
    /// reports come back in descriptor order and one failure does not stop
    /// the others.
    pub async fn fire_with_token(
        &self,
        token: &str,
        message: &str,
        payload: Payload,
    ) -> SdkResult<Vec<DeliveryReport>> {
        let schema = self.schema(message).await?;
        let violations = conforms(&payload, &schema);
        if !violations.is_empty() {
            return Err(SdkError::NonconformingPayload(violations));
        }
        let descriptors = self.query(token, message).await?;
        Ok(join_all(descriptors.into_iter().map(|d| self.deliver(d, &payload))).await)
    }

    async fn deliver(&self, d: ConnectionDescriptor, payload: &Payload) -> DeliveryReport {
        let mut report = DeliveryReport {
            connection_id: d.connection_id.clone(),
            consumer: d.consumer.clone(),
            target_message: d.target_message.clone(),
            outcome: DeliveryOutcome::Failed,
            http_status: None,
            attempts: 0,
            detail: String::new(),
            payload: None,
            reported: false,
        };
        match run_chain(payload, &d.chain) {
            Ok(transformed) => {
                let instance = MessageInstance {
                    message_name: d.target_message.clone(),
                    payload: transformed.clone(),
                    comm_id: d.comm_id.clone(),
                    producer: self.config.app_id.clone(),
                };
                report.payload = Some(transformed);
                self.post_inbox(&d, &instance, &mut report).await;
            }
            Err(e) => report.detail = format!("chain: {e}"),
        }
        let detail = report.detail.clone();
        match self.report(&d.comm_id, report.outcome, &detail).await {
            Ok(()) => report.reported = true,
            Err(e) => {
                tracing::warn!(error = %e, connection = %d.connection_id, "delivery report failed")
            }
        }
        report
    }

    async fn post_inbox(
        &self,
        d: &ConnectionDescriptor,
        instance: &MessageInstance,
        report: &mut DeliveryReport,
    ) {
        let url = format!("{}/inbox", base(&d.consumer_endpoint));
        let mut backoff = self.config.backoff_base;
        loop {
            report.attempts += 1;
            let sent = self
                .http
                .post(&url)
                .header(COMM_ID_HEADER, &d.comm_id)
                .timeout(self.config.delivery_timeout)
                .json(instance)
                .send()
                .await;
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    report.http_status = Some(status.as_u16());
                    if status.is_success() {
                        report.outcome = DeliveryOutcome::Delivered;
                        report.detail = format!("http {}", status.as_u16());
                    } else {
                        let body = resp.text().await.unwrap_or_default();
                        report.detail = format!("http {}: {body}", status.as_u16());
                    }
                    return;
                }
                Err(e) if report.attempts <= self.config.retries => {
                    tracing::debug!(error = %e, attempt = report.attempts, "delivery attempt failed, retrying");
                    tokio::time::sleep(backoff).await;
                    backoff *= 2;
                }
                Err(e) => {
                    report.detail = format!("network: {e}");
                    return;
                }
            }
        }
    }

    /// An inbox for this app with the schemas of its handled messages,
    /// fetched from the market.
    pub async fn inbox(&self) -> SdkResult<Inbox> {
        let def = self.market.application(&self.config.app_id).await?;
        let mut schemas = std::collections::BTreeMap::new();
        for m in &def.handled {
            schemas.insert(m.clone(), self.schema(m).await?);
        }
        let verifier = self.config.verify_inbound.then(|| self.clone());
        Ok(Inbox::new(self.config.app_id.clone(), schemas, verifier))
    }
}

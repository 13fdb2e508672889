use std::collections::BTreeMap;
use std::sync::Arc;

use appnet_core::{conforms, AppId, MessageInstance, MessageSchema, UserId};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AppClient, SdkError};
use crate::http::{header, VerifyRequest, COMM_ID_HEADER};

/// A received message. `user_id` is known when the inbox verifies inbound
/// communications.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub instance: MessageInstance,
    pub user_id: Option<UserId>,
}

type Handler = Arc<dyn Fn(Delivery) -> Result<(), String> + Send + Sync>;

struct Slot {
    handler: Handler,
    // Serializes dispatch per message name.
    turn: tokio::sync::Mutex<()>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxStats {
    pub received: u64,
    pub verified: u64,
    pub forbidden: u64,
    pub nonconforming: u64,
    pub handled: u64,
    pub handler_errors: u64,
}

struct Inner {
    app_id: AppId,
    schemas: BTreeMap<String, MessageSchema>,
    verifier: Option<AppClient>,
    handlers: RwLock<BTreeMap<String, Arc<Slot>>>,
    stats: Mutex<InboxStats>,
}

/// Receives `POST /inbox` deliveries and dispatches them to handlers.
///
/// Responses: 200 handled, 403 verification failed, 422 nonconforming or
/// unhandled message, 400 unreadable body, 500 handler error.
#[derive(Clone)]
pub struct Inbox {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Inbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Inbox")
            .field("app_id", &self.inner.app_id)
            .finish_non_exhaustive()
    }
}

impl Inbox {
    /// `schemas` holds the app's handled messages. With a `verifier`, every
    /// delivery is checked with the runtime before dispatch.
    pub fn new(
        app_id: AppId,
        schemas: BTreeMap<String, MessageSchema>,
        verifier: Option<AppClient>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                app_id,
                schemas,
                verifier,
                handlers: RwLock::default(),
                stats: Mutex::default(),
            }),
        }
    }

    pub fn on_message(
        &self,
        message: &str,
        handler: impl Fn(Delivery) -> Result<(), String> + Send + Sync + 'static,
    ) -> Result<(), SdkError> {
        if !self.inner.schemas.contains_key(message) {
            return Err(SdkError::UnknownHandledMessage(message.into()));
        }
        self.inner.handlers.write().insert(
            message.into(),
            Arc::new(Slot {
                handler: Arc::new(handler),
                turn: tokio::sync::Mutex::new(()),
            }),
        );
        Ok(())
    }

    pub fn stats(&self) -> InboxStats {
        *self.inner.stats.lock()
    }

    fn bump(&self, f: impl FnOnce(&mut InboxStats)) {
        f(&mut self.inner.stats.lock());
    }

    /// Handles one delivery; returns the status and a short reason.
    pub async fn accept(&self, comm_header: Option<&str>, body: &[u8]) -> (StatusCode, String) {
        self.bump(|s| s.received += 1);
        let instance: MessageInstance = match serde_json::from_slice(body) {
            Ok(i) => i,
            Err(e) => return (StatusCode::BAD_REQUEST, format!("body: {e}")),
        };
        if comm_header.is_some_and(|h| h != instance.comm_id) {
            self.bump(|s| s.forbidden += 1);
            return (
                StatusCode::FORBIDDEN,
                "comm-id header does not match body".into(),
            );
        }

        let mut user_id = None;
        if let Some(v) = &self.inner.verifier {
            let req = VerifyRequest {
                producer: instance.producer.clone(),
                consumer: self.inner.app_id.clone(),
                message: instance.message_name.clone(),
            };
            match v.verify(&instance.comm_id, &req).await {
                Ok(verdict) if verdict.valid => {
                    self.bump(|s| s.verified += 1);
                    user_id = verdict.user_id;
                }
                Ok(verdict) => {
                    self.bump(|s| s.forbidden += 1);
                    let reason = verdict
                        .reason
                        .and_then(|r| serde_json::to_value(r).ok())
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default();
                    return (
                        StatusCode::FORBIDDEN,
                        format!("verification failed: {reason}"),
                    );
                }
                Err(e) => {
                    return (
                        StatusCode::SERVICE_UNAVAILABLE,
                        format!("verification unavailable: {e}"),
                    )
                }
            }
        }

        let Some(schema) = self.inner.schemas.get(&instance.message_name) else {
            self.bump(|s| s.nonconforming += 1);
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("{} is not handled", instance.message_name),
            );
        };
        let violations = conforms(&instance.payload, schema);
        if !violations.is_empty() {
            self.bump(|s| s.nonconforming += 1);
            let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return (StatusCode::UNPROCESSABLE_ENTITY, text.join("; "));
        }
        let slot = self
            .inner
            .handlers
            .read()
            .get(&instance.message_name)
            .cloned();
        let Some(slot) = slot else {
            self.bump(|s| s.nonconforming += 1);
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("no handler for {}", instance.message_name),
            );
        };
        let _turn = slot.turn.lock().await;
        match (slot.handler)(Delivery { instance, user_id }) {
            Ok(()) => {
                self.bump(|s| s.handled += 1);
                (StatusCode::OK, "handled".into())
            }
            Err(e) => {
                self.bump(|s| s.handler_errors += 1);
                (StatusCode::INTERNAL_SERVER_ERROR, e)
            }
        }
    }

    pub fn router(&self) -> Router {
        async fn inbox(
            State(inbox): State<Inbox>,
            headers: HeaderMap,
            body: Bytes,
        ) -> (StatusCode, Json<serde_json::Value>) {
            let (status, detail) = inbox.accept(header(&headers, COMM_ID_HEADER), &body).await;
            (
                status,
                Json(json!({ "status": status.as_u16(), "detail": detail })),
            )
        }
        Router::new()
            .route("/inbox", post(inbox))
            .with_state(self.clone())
    }
}

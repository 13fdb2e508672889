use appnet_core::AppId;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{bearer, parse, with_cors, ApiResult};
use crate::error::Error;
use crate::runtime::{ConnectionDescriptor, DeliveryOutcome, Runtime};

#[derive(Deserialize)]
struct ConnectionsQuery {
    message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    pub descriptors: Vec<ConnectionDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub producer: AppId,
    pub consumer: AppId,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub outcome: DeliveryOutcome,
    #[serde(default)]
    pub detail: String,
}

#[derive(Clone)]
struct Ctx {
    runtime: Runtime,
    expose_audit: bool,
}

async fn get_connections(
    State(ctx): State<Ctx>,
    headers: HeaderMap,
    Query(q): Query<ConnectionsQuery>,
) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?;
    let message = q
        .message
        .ok_or_else(|| Error::InvalidRequest("missing query parameter `message`".into()))?;
    Ok(Json(Descriptors {
        descriptors: ctx.runtime.query_connections(token, &message)?,
    }))
}

async fn post_verify(
    State(ctx): State<Ctx>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: VerifyRequest = parse(&body)?;
    Ok(Json(ctx.runtime.verify_communication(
        &id,
        &req.producer,
        &req.consumer,
        &req.message,
    )?))
}

async fn post_report(
    State(ctx): State<Ctx>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: ReportRequest = parse(&body)?;
    ctx.runtime.report_delivery(&id, req.outcome, &req.detail)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_userspace(State(ctx): State<Ctx>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    Ok(Json(ctx.runtime.userspace_query(bearer(&headers)?)?))
}

async fn get_audit(State(ctx): State<Ctx>) -> ApiResult<impl IntoResponse> {
    if !ctx.expose_audit {
        return Err(Error::NotFound.into());
    }
    Ok(Json(ctx.runtime.audit()?))
}

pub fn router(runtime: Runtime) -> Router {
    let expose_audit = runtime.broker().config().expose_audit;
    with_cors(
        Router::new()
            .route("/connections", get(get_connections))
            .route("/communications/{id}/verify", post(post_verify))
            .route("/communications/{id}/report", post(post_report))
            .route("/userspace", get(get_userspace))
            .route("/audit", get(get_audit))
            .with_state(Ctx {
                runtime,
                expose_audit,
            }),
    )
}

use appnet_core::{
    AdapterDefinition, AppId, ConnectionId, NamedMessage, RegisterOutcome, Timestamp, UserId,
};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{header, parse, with_cors, ApiResult, CREDENTIAL_HEADER};
use crate::error::Error;
use crate::market::{ApplicationSubmission, ManualConnection, Market};

#[derive(Deserialize)]
struct NewUser {
    name: String,
}

#[derive(Deserialize)]
struct NewInstall {
    app_id: AppId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantResponse {
    pub grant_code: String,
    pub expires_at: Timestamp,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TokenRequest {
    pub grant_code: String,
    pub app_id: AppId,
    pub credential: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub token: String,
    pub expires_at: Timestamp,
}

fn outcome(o: RegisterOutcome, name: &str) -> impl IntoResponse {
    let (status, text) = match o {
        RegisterOutcome::Registered => (StatusCode::CREATED, "registered"),
        RegisterOutcome::AlreadyRegistered => (StatusCode::OK, "already-registered"),
    };
    (status, Json(json!({ "name": name, "outcome": text })))
}

async fn post_message(State(m): State<Market>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let msg: NamedMessage = parse(&body)?;
    let name = msg.name.clone();
    Ok(outcome(m.register_message(msg)?, &name))
}

async fn list_messages(State(m): State<Market>) -> impl IntoResponse {
    Json(m.messages())
}

async fn get_message(
    State(m): State<Market>,
    Path(name): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.message(&name)?))
}

async fn post_adapter(State(m): State<Market>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let a: AdapterDefinition = parse(&body)?;
    let id = a.adapter_id.clone();
    Ok(outcome(m.register_adapter(a)?, &id))
}

async fn list_adapters(State(m): State<Market>) -> impl IntoResponse {
    Json(m.adapters())
}

async fn post_app(State(m): State<Market>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let sub: ApplicationSubmission = parse(&body)?;
    Ok((StatusCode::CREATED, Json(m.submit_application(sub)?)))
}

async fn put_app(
    State(m): State<Market>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let credential = header(&headers, CREDENTIAL_HEADER).ok_or(Error::AuthFailure)?;
    let sub: ApplicationSubmission = parse(&body)?;
    Ok(Json(m.update_application(
        &AppId::new(id),
        credential,
        sub,
    )?))
}

async fn list_apps(State(m): State<Market>) -> impl IntoResponse {
    Json(m.applications())
}

async fn get_app(State(m): State<Market>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.application(&AppId::new(id))?))
}

async fn post_user(State(m): State<Market>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: NewUser = parse(&body)?;
    let user_id = m.create_user(&req.name)?;
    Ok((StatusCode::CREATED, Json(json!({ "user_id": user_id }))))
}

async fn get_userspace(
    State(m): State<Market>,
    Path(uid): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.userspace(&UserId::new(uid))?))
}

async fn post_install(
    State(m): State<Market>,
    Path(uid): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: NewInstall = parse(&body)?;
    let grant = m.install_app(&UserId::new(uid), &req.app_id)?;
    Ok((
        StatusCode::CREATED,
        Json(GrantResponse {
            grant_code: grant.code,
            expires_at: grant.expires_at,
        }),
    ))
}

async fn delete_install(
    State(m): State<Market>,
    Path((uid, app)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    m.uninstall_app(&UserId::new(uid), &AppId::new(app))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_token(State(m): State<Market>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TokenRequest = parse(&body)?;
    let token = m.exchange_grant(&req.grant_code, &req.app_id, &req.credential)?;
    Ok(Json(TokenResponse {
        token: token.token,
        expires_at: token.expires_at,
    }))
}

async fn get_recommendations(
    State(m): State<Market>,
    Path(uid): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.recommend_connections(&UserId::new(uid))?))
}

async fn post_confirm(
    State(m): State<Market>,
    Path((uid, cid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.confirm_connection(
        &UserId::new(uid),
        &ConnectionId::new(cid),
    )?))
}

async fn post_reject(
    State(m): State<Market>,
    Path((uid, cid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.reject_connection(
        &UserId::new(uid),
        &ConnectionId::new(cid),
    )?))
}

async fn post_connection(
    State(m): State<Market>,
    Path(uid): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: ManualConnection = parse(&body)?;
    Ok((
        StatusCode::CREATED,
        Json(m.create_manual_connection(&UserId::new(uid), &req)?),
    ))
}

pub fn router(market: Market) -> Router {
    with_cors(
        Router::new()
            .route("/messages", post(post_message).get(list_messages))
            .route("/messages/{name}", get(get_message))
            .route("/adapters", post(post_adapter).get(list_adapters))
            .route("/apps", post(post_app).get(list_apps))
            .route("/apps/{id}", get(get_app).put(put_app))
            .route("/users", post(post_user))
            .route("/users/{uid}/userspace", get(get_userspace))
            .route("/users/{uid}/installs", post(post_install))
            .route("/users/{uid}/installs/{app_id}", delete(delete_install))
            .route("/users/{uid}/recommendations", get(get_recommendations))
            .route("/users/{uid}/connections", post(post_connection))
            .route("/users/{uid}/connections/{cid}/confirm", post(post_confirm))
            .route("/users/{uid}/connections/{cid}/reject", post(post_reject))
            .route("/oauth/token", post(post_token))
            .with_state(market),
    )
}

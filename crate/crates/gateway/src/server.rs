//! HTTP front end for a [`SharedStore`].
//!
//! Routes:
//!
//! | method | path               | body / reply                                  |
//! |--------|--------------------|-----------------------------------------------|
//! | GET    | `/api/getcommand`  | `?robot=` → envelope JSON, or 204 when empty   |
//! | GET    | `/api/readtouch`   | `?robot=` → one byte `0xFF`, queues code 6     |
//! | POST   | `/api/command`     | `{robot, code, args?}` → `{seq}`               |
//! | POST   | `/api/setdata`     | `{robot, seq, data}` → `{ack: true}`           |
//! | GET    | `/api/getdata`     | `?robot=&seq=` → pending/complete JSON, or 404 |
//! | GET    | `/api/robots`      | array of robot summaries                       |

use std::future::Future;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::{GatewayError, SharedStore, ACK_BYTE, DEFAULT_ROBOT};

#[derive(Clone)]
struct AppState {
    store: SharedStore,
    delay: Duration,
}

/// Build the router. `delay` is added once on the way in and once on the
/// way out of every request to emulate a slow network.
pub fn router(store: SharedStore, delay: Duration) -> Router {
    Router::new()
        .route("/api/getcommand", get(get_command))
        .route("/api/readtouch", get(read_touch))
        .route("/api/command", post(post_command))
        .route("/api/setdata", post(set_data))
        .route("/api/getdata", get(get_data))
        .route("/api/robots", get(robots))
        .layer(CorsLayer::permissive())
        .with_state(AppState { store, delay })
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: SharedStore,
    delay: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store, delay))
        .with_graceful_shutdown(shutdown)
        .await
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

async fn lag(d: Duration) {
    if !d.is_zero() {
        tokio::time::sleep(d).await;
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match self {
            GatewayError::UnknownCommand(_) | GatewayError::InvalidRobot(_) => {
                StatusCode::BAD_REQUEST
            }
            GatewayError::NotFound { .. } => StatusCode::NOT_FOUND,
            GatewayError::NotFetched { .. } | GatewayError::Duplicate { .. } => {
                StatusCode::CONFLICT
            }
            GatewayError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

#[derive(Deserialize)]
struct RobotQuery {
    robot: Option<String>,
}

impl RobotQuery {
    fn robot(&self) -> &str {
        self.robot.as_deref().unwrap_or(DEFAULT_ROBOT)
    }
}

async fn get_command(State(st): State<AppState>, Query(q): Query<RobotQuery>) -> Response {
    lag(st.delay).await;
    let res = st.store.lock().get_command(q.robot(), now());
    lag(st.delay).await;
    match res {
        Ok(Some(env)) => Json(env).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn read_touch(State(st): State<AppState>, Query(q): Query<RobotQuery>) -> Response {
    lag(st.delay).await;
    let res = st.store.lock().read_touch(q.robot(), now());
    lag(st.delay).await;
    match res {
        Ok(_) => (
            [(header::CONTENT_TYPE, "application/octet-stream")],
            vec![ACK_BYTE],
        )
            .into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct CommandBody {
    robot: Option<String>,
    code: u64,
    #[serde(default)]
    args: Option<Value>,
}

async fn post_command(State(st): State<AppState>, Json(body): Json<CommandBody>) -> Response {
    lag(st.delay).await;
    let robot = body.robot.as_deref().unwrap_or(DEFAULT_ROBOT);
    let res = st.store.lock().enqueue(robot, body.code, body.args, now());
    lag(st.delay).await;
    match res {
        Ok(seq) => Json(json!({"robot": robot, "seq": seq})).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct SetDataBody {
    robot: Option<String>,
    seq: u64,
    data: Value,
}

async fn set_data(State(st): State<AppState>, Json(body): Json<SetDataBody>) -> Response {
    lag(st.delay).await;
    let robot = body.robot.as_deref().unwrap_or(DEFAULT_ROBOT);
    let res = st.store.lock().set_data(robot, body.seq, body.data, now());
    lag(st.delay).await;
    match res {
        Ok(()) => Json(json!({"ack": true})).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct DataQuery {
    robot: Option<String>,
    seq: u64,
}

async fn get_data(State(st): State<AppState>, Query(q): Query<DataQuery>) -> Response {
    lag(st.delay).await;
    let robot = q.robot.as_deref().unwrap_or(DEFAULT_ROBOT);
    let res = st.store.lock().get_data(robot, q.seq);
    lag(st.delay).await;
    match res {
        Ok(status) => Json(status.to_json()).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn robots(State(st): State<AppState>) -> Response {
    lag(st.delay).await;
    let list = st.store.lock().robots();
    lag(st.delay).await;
    Json(list).into_response()
}

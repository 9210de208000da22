//! The HTTP game host.
//!
//! Each live session sits behind its own async mutex, so requests on one
//! session run strictly one after another while different sessions proceed
//! in parallel. A session leaves memory as soon as it closes; from then on
//! it is served from the store.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use robbins_core::namur::{
    new_session, DistributionBasket, Objective, Session, SessionEvent, SessionRecord, SessionView, TableSet,
};
use robbins_core::rng::derive_seed;
use robbins_core::{Decision, Error as CoreError};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc};

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::stats::{Stats, StatsView};
use crate::store::{Player, ScanReport, SessionStore};

/// Largest M a session may have; the belief state grows linearly in M.
pub const MAX_M: u32 = 5_000;

struct Live {
    session: Session,
    player: Player,
    touched: Instant,
    evicted: bool,
}

struct Slot {
    live: tokio::sync::Mutex<Live>,
    /// Wakes event streams after every change.
    changed: broadcast::Sender<()>,
}

pub struct AppState {
    config: ServiceConfig,
    basket: DistributionBasket,
    tables: &'static TableSet,
    store: Mutex<SessionStore>,
    stats: Mutex<Stats>,
    live: Mutex<HashMap<String, Arc<Slot>>>,
    counter: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Core(CoreError::Conflict(_)) => StatusCode::CONFLICT,
            ServiceError::Core(CoreError::InvalidArgument(_) | CoreError::UndefinedFit(_)) => StatusCode::BAD_REQUEST,
            ServiceError::Core(CoreError::ResourceBound(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        ServiceError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(rename = "M")]
    m: Option<u32>,
    basket: Option<DistributionBasket>,
    #[serde(default)]
    mode: Player,
    objective: Option<Objective>,
    #[serde(default)]
    secret: bool,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionRequest {
    decision: Decision,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    after: Option<usize>,
}

/// Player-facing view of a stored, closed session.
fn view_of_record(r: &SessionRecord) -> SessionView {
    SessionView {
        id: r.id.clone(),
        m: r.m,
        a: r.basket.a,
        b: r.basket.b,
        basket_names: r.basket.names(),
        objective: r.objective,
        objective_secret: r.objective_secret,
        arrivals: r.arrivals.clone(),
        decisions: r.decisions.clone(),
        pending: false,
        closed: true,
        outcome: r.outcome.clone(),
    }
}

fn sse_event(id: usize, ev: &SessionEvent) -> Event {
    let kind = match ev {
        SessionEvent::Arrival { .. } => "arrival",
        SessionEvent::Decision { .. } => "decision",
        SessionEvent::Closed { .. } => "closed",
    };
    Event::default().id(id.to_string()).event(kind).json_data(ev).expect("events serialize")
}

impl AppState {
    /// Validates the configuration, opens the store and recounts the
    /// scoreboard and ledger from it.
    pub fn open(config: ServiceConfig) -> Result<(Arc<Self>, ScanReport), ServiceError> {
        config.validate()?;
        let basket = config.basket()?;
        let tables = TableSet::shipped();
        let (store, report) = SessionStore::open(&config.data_dir)?;
        let stats = Stats::rebuild(config.beta, &store.all()?, tables)?;
        let state = AppState {
            config,
            basket,
            tables,
            store: Mutex::new(store),
            stats: Mutex::new(stats),
            live: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        };
        Ok((Arc::new(state), report))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn stats(&self) -> Stats {
        lock(&self.stats).clone()
    }

    /// Scoreboard and ledger recounted from the stored records.
    pub fn recount(&self) -> Result<Stats, ServiceError> {
        let all = lock(&self.store).all()?;
        Ok(Stats::rebuild(self.config.beta, &all, self.tables)?)
    }

    fn taken(&self, id: &str) -> bool {
        lock(&self.store).contains(id) || lock(&self.live).contains_key(id)
    }

    fn evict_idle(&self) {
        let ttl = Duration::from_secs(self.config.session_ttl_secs);
        let mut live = lock(&self.live);
        live.retain(|_, slot| match slot.live.try_lock() {
            Ok(mut l) if l.touched.elapsed() > ttl => {
                l.evicted = true;
                let _ = slot.changed.send(());
                false
            }
            _ => true,
        });
    }

    fn create(&self, req: CreateRequest) -> ApiResult<String> {
        self.evict_idle();
        let m = req.m.unwrap_or(self.config.default_m);
        if m > MAX_M {
            return Err(CoreError::ResourceBound(format!("M = {m} exceeds the cap of {MAX_M}")).into());
        }
        if req.secret && req.objective.is_none() {
            return Err(CoreError::InvalidArgument("a secret objective needs an objective".into()).into());
        }
        let basket = req.basket.unwrap_or_else(|| self.basket.clone());
        let seed = match req.seed {
            Some(s) => {
                if self.taken(&format!("{s:016x}")) {
                    return Err(CoreError::Conflict(format!("a session with seed {s} already exists")).into());
                }
                s
            }
            None => loop {
                let s = derive_seed(self.config.master_seed, self.counter.fetch_add(1, Ordering::Relaxed));
                if !self.taken(&format!("{s:016x}")) {
                    break s;
                }
            },
        };
        // The machine needs a goal; without one it takes the ledger's guess.
        let objective = match (req.mode, req.objective) {
            (Player::Machine, None) => Some(lock(&self.stats).ledger.argmax()),
            (_, o) => o,
        };
        let session = new_session(m, &basket, seed)?.with_objective(objective, req.secret)?;
        let id = session.id.clone();
        let (changed, _) = broadcast::channel(16);
        let slot = Slot {
            live: tokio::sync::Mutex::new(Live { session, player: req.mode, touched: Instant::now(), evicted: false }),
            changed,
        };
        let mut live = lock(&self.live);
        if live.contains_key(&id) {
            return Err(CoreError::Conflict(format!("session {id} already exists")).into());
        }
        live.insert(id.clone(), Arc::new(slot));
        Ok(id)
    }

    /// The live slot of an open session. A stored session is closed, so
    /// asking to change it is a conflict.
    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        if let Some(s) = lock(&self.live).get(id) {
            return Ok(s.clone());
        }
        if lock(&self.store).contains(id) {
            return Err(CoreError::Conflict(format!("session {id} is closed")).into());
        }
        Err(ServiceError::NotFound(format!("session {id}")).into())
    }

    fn stored(&self, id: &str) -> ApiResult<SessionRecord> {
        let store = lock(&self.store);
        if !store.contains(id) {
            return Err(ServiceError::NotFound(format!("session {id}")).into());
        }
        Ok(store.get(id)?.record)
    }

    /// Bookkeeping after a session moved: store it if it closed, then wake
    /// the event streams.
    fn after_change(&self, id: &str, slot: &Slot, live: &mut Live) -> ApiResult<()> {
        live.touched = Instant::now();
        if !live.session.is_open() {
            let mut stats = lock(&self.stats);
            let stored = stats.finish(&mut live.session, live.player, self.tables)?;
            lock(&self.store).put(&stored)?;
            stats.apply(&stored, self.tables);
            drop(stats);
            lock(&self.live).remove(id);
        }
        let _ = slot.changed.send(());
        Ok(())
    }
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let id = st.create(req)?;
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let slot = lock(&st.live).get(&id).cloned();
    match slot {
        Some(slot) => Ok(Json(slot.live.lock().await.session.view())),
        None => Ok(Json(view_of_record(&st.stored(&id)?))),
    }
}

async fn advance(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let slot = st.slot(&id)?;
    let mut live = slot.live.lock().await;
    if live.evicted {
        return Err(ServiceError::NotFound(format!("session {id} expired")).into());
    }
    live.session.advance()?;
    if live.player == Player::Machine && live.session.pending() {
        let objective = live.session.objective.expect("machine sessions carry an objective");
        let d = live.session.machine_decide(objective, st.tables)?;
        live.session.decide(d)?;
    }
    st.after_change(&id, &slot, &mut live)?;
    Ok(Json(live.session.view()))
}

async fn decide(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: DecisionRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let slot = st.slot(&id)?;
    let mut live = slot.live.lock().await;
    if live.evicted {
        return Err(ServiceError::NotFound(format!("session {id} expired")).into());
    }
    if live.player == Player::Machine {
        return Err(CoreError::Conflict("the machine plays this session".into()).into());
    }
    live.session.decide(req.decision)?;
    st.after_change(&id, &slot, &mut live)?;
    Ok(Json(live.session.view()))
}

async fn reveal(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    if lock(&st.live).contains_key(&id) {
        return Err(CoreError::Conflict(format!("session {id} is still open")).into());
    }
    let bytes = lock(&st.store).get_bytes(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<StatsView> {
    Json(lock(&st.stats).view())
}

enum Source {
    Live(Arc<Slot>),
    Done(Vec<SessionEvent>),
}

/// Server-sent events. Event ids are 1-based positions in the session's
/// event log; a client resumes with `Last-Event-ID` or `?after=`.
async fn events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .or(q.after)
        .unwrap_or(0);
    let slot = lock(&st.live).get(&id).cloned();
    let source = match slot {
        Some(slot) => Source::Live(slot),
        None => Source::Done(Session::replay(&st.stored(&id)?)?.event_log()),
    };
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(async move {
        let mut sent = after;
        match source {
            Source::Done(log) => {
                for (i, ev) in log.iter().enumerate().skip(sent) {
                    if tx.send(sse_event(i + 1, ev)).await.is_err() {
                        return;
                    }
                }
            }
            Source::Live(slot) => {
                let mut wake = slot.changed.subscribe();
                loop {
                    let (log, done) = {
                        let l = slot.live.lock().await;
                        (l.session.event_log(), !l.session.is_open() || l.evicted)
                    };
                    for (i, ev) in log.iter().enumerate().skip(sent) {
                        if tx.send(sse_event(i + 1, ev)).await.is_err() {
                            return;
                        }
                    }
                    sent = sent.max(log.len());
                    if done {
                        return;
                    }
                    if let Err(broadcast::error::RecvError::Closed) = wake.recv().await {
                        return;
                    }
                }
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (Ok(e), rx)) });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/decision", post(decide))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/reveal", get(reveal))
        .route("/stats", get(stats))
        .with_state(state)
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let bind = config.bind;
    let (state, report) = AppState::open(config)?;
    if !report.is_clean() {
        eprintln!(
            "store repaired: {} dropped, {} adopted, {} rejected, {} temp files removed",
            report.dropped.len(),
            report.adopted.len(),
            report.rejected.len(),
            report.removed_temp
        );
    }
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

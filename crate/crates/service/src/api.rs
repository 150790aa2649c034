//! HTTP API over one engine. Reads take a shared lock; every mutation goes
//! through the single writer and is persisted before the response.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use arbiter_core::engine::{Decision, Engine, EngineConfig, EngineError, RejectReason};
use arbiter_core::orchestrator::InfrastructurePool;
use arbiter_core::{VerticalId, VsiId};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::report::{BudgetReport, NsiReport, OutcomeReport, PoolReport, TerminationReport, VsiReport};
use crate::scenario::{convert_request, convert_resources, decode, RawRequest, RawResources, ScenarioError};
use crate::store::{Store, StoreError};

/// Everything that is persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceState {
    pub engine: Engine,
    /// Default priority of each vertical's requests.
    pub priorities: BTreeMap<VerticalId, i64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterVertical {
    pub id: String,
    #[serde(default)]
    pub priority: i64,
    pub budget: RawResources,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalView {
    pub id: VerticalId,
    pub priority: i64,
    pub budget: BudgetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl ToString) -> Self {
        Self {
            status,
            error: error.to_string(),
            details: Vec::new(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownVertical(_) | EngineError::UnknownVsi(_) => StatusCode::NOT_FOUND,
            EngineError::DuplicateVertical(_)
            | EngineError::NotRequested(_)
            | EngineError::NotRunning(_)
            | EngineError::NotInFlight(_)
            | EngineError::NotActive(_)
            | EngineError::Transition(_) => StatusCode::CONFLICT,
            EngineError::InvalidGraph(_) | EngineError::InvalidSlo(_) | EngineError::Budget(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            EngineError::Solver(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut err = ApiError::new(status, &e);
        if let EngineError::InvalidGraph(violations) = &e {
            err.details = violations.iter().map(ToString::to_string).collect();
        }
        err
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e);
        if let ScenarioError::Graph { violations, .. } = &e {
            err.error = "invalid forwarding graph".to_owned();
            err.details = violations.iter().map(ToString::to_string).collect();
        }
        err
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

pub struct Service {
    state: RwLock<ServiceState>,
    store: Option<Store>,
}

impl Service {
    /// Restores from the configured store when it holds a snapshot.
    pub fn open(config: &ServiceConfig) -> Result<Self, StoreError> {
        let store = config.store_dir.as_ref().map(Store::open).transpose()?;
        let restored = match &store {
            Some(s) => s.load::<ServiceState>()?,
            None => None,
        };
        let state = match restored {
            Some(state) => {
                tracing::info!(vsis = state.engine.vsis().len(), "restored records from snapshot");
                state
            }
            None => ServiceState {
                engine: Engine::new(
                    InfrastructurePool::new(config.pool.clone()),
                    EngineConfig {
                        tolerance: config.tolerance,
                    },
                ),
                priorities: BTreeMap::new(),
            },
        };
        Ok(Self {
            state: RwLock::new(state),
            store,
        })
    }

    pub fn in_memory(config: &ServiceConfig) -> Self {
        let mut config = config.clone();
        config.store_dir = None;
        Self::open(&config).expect("no store to fail")
    }

    pub fn snapshot(&self) -> ServiceState {
        self.state.read().expect("lock").clone()
    }

    fn mutate<R>(&self, f: impl FnOnce(&mut ServiceState) -> Result<R, ApiError>) -> Result<R, ApiError> {
        let mut state = self.state.write().expect("lock");
        let before = state.engine.journal().len() as u64;
        let result = f(&mut state);
        if let Some(store) = &self.store {
            if state.engine.journal().len() as u64 != before || result.is_ok() {
                store.save(&*state, state.engine.journal().since(before))?;
            }
        }
        result
    }

    pub fn api_register_vertical(&self, body: &str) -> Result<VerticalView, ApiError> {
        let request: RegisterVertical = decode(body)?;
        let budget = convert_resources(&request.budget, "budget")?;
        let id = VerticalId::new(request.id);
        self.mutate(|state| {
            state.engine.register_vertical(id.clone(), budget)?;
            state.priorities.insert(id.clone(), request.priority);
            Ok(VerticalView {
                budget: BudgetReport::from(state.engine.budget(&id).expect("just registered")),
                priority: request.priority,
                id,
            })
        })
    }

    pub fn api_request_vsi(&self, vertical: &str, body: &str) -> Result<(StatusCode, OutcomeReport), ApiError> {
        let raw: RawRequest = decode(body)?;
        let vertical_id = VerticalId::new(vertical);
        self.mutate(|state| {
            let priority = *state
                .priorities
                .get(&vertical_id)
                .ok_or(EngineError::UnknownVertical(vertical_id.clone()))?;
            if let Some(v) = &raw.vertical {
                if v != vertical {
                    return Err(ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        format!("payload names vertical `{v}` but the path names `{vertical}`"),
                    ));
                }
            }
            let request = convert_request(&raw, "request", Some(vertical), priority)?;
            let outcome = state.engine.arbitrate(request)?;
            let status = match &outcome.decision {
                Decision::Rejected {
                    reason: RejectReason::DuplicateVsi,
                } => StatusCode::CONFLICT,
                Decision::Deployed { .. } | Decision::Degraded { .. } | Decision::Partial { .. } => {
                    StatusCode::CREATED
                }
                Decision::Rejected { .. } | Decision::Cancelled { .. } => StatusCode::OK,
            };
            Ok((status, OutcomeReport::from(&outcome)))
        })
    }

    pub fn api_terminate_vsi(&self, vsi_id: &str) -> Result<TerminationReport, ApiError> {
        let id = VsiId::new(vsi_id);
        self.mutate(|state| {
            let outcome = state.engine.terminate(&id)?;
            Ok(TerminationReport {
                vsi_id: outcome.vsi_id,
                error: None,
                rescaled_vsis: outcome.rescaled_vsis,
            })
        })
    }

    pub fn verticals(&self) -> Vec<VerticalView> {
        let state = self.state.read().expect("lock");
        state
            .engine
            .budgets()
            .iter()
            .map(|(id, b)| VerticalView {
                id: id.clone(),
                priority: state.priorities.get(id).copied().unwrap_or_default(),
                budget: BudgetReport::from(b),
            })
            .collect()
    }

    pub fn vertical(&self, id: &str) -> Result<VerticalView, ApiError> {
        let id = VerticalId::new(id);
        self.verticals()
            .into_iter()
            .find(|v| v.id == id)
            .ok_or_else(|| EngineError::UnknownVertical(id).into())
    }

    pub fn vsis(&self) -> BTreeMap<VsiId, VsiReport> {
        let state = self.state.read().expect("lock");
        state.engine.vsis().iter().map(|(id, v)| (id.clone(), VsiReport::from(v))).collect()
    }

    pub fn vsi(&self, id: &str) -> Result<VsiReport, ApiError> {
        let id = VsiId::new(id);
        let state = self.state.read().expect("lock");
        state
            .engine
            .vsi(&id)
            .map(VsiReport::from)
            .ok_or_else(|| EngineError::UnknownVsi(id).into())
    }

    pub fn nsis(&self) -> BTreeMap<String, NsiReport> {
        let state = self.state.read().expect("lock");
        state
            .engine
            .nsis()
            .iter()
            .map(|(id, n)| (id.to_string(), NsiReport::from(n)))
            .collect()
    }

    pub fn pool(&self) -> PoolReport {
        PoolReport::from(self.state.read().expect("lock").engine.orchestrator())
    }
}

type Shared = State<Arc<Service>>;

async fn list_verticals(State(s): Shared) -> Json<Vec<VerticalView>> {
    Json(s.verticals())
}

async fn register_vertical(State(s): Shared, body: String) -> Result<(StatusCode, Json<VerticalView>), ApiError> {
    Ok((StatusCode::CREATED, Json(s.api_register_vertical(&body)?)))
}

async fn get_vertical(State(s): Shared, Path(id): Path<String>) -> Result<Json<VerticalView>, ApiError> {
    s.vertical(&id).map(Json)
}

async fn request_vsi(
    State(s): Shared,
    Path(id): Path<String>,
    body: String,
) -> Result<(StatusCode, Json<OutcomeReport>), ApiError> {
    let (status, outcome) = s.api_request_vsi(&id, &body)?;
    Ok((status, Json(outcome)))
}

async fn list_vsis(State(s): Shared) -> Json<BTreeMap<VsiId, VsiReport>> {
    Json(s.vsis())
}

async fn get_vsi(State(s): Shared, Path(id): Path<String>) -> Result<Json<VsiReport>, ApiError> {
    s.vsi(&id).map(Json)
}

async fn terminate_vsi(State(s): Shared, Path(id): Path<String>) -> Result<Json<TerminationReport>, ApiError> {
    s.api_terminate_vsi(&id).map(Json)
}

async fn list_nsis(State(s): Shared) -> Json<BTreeMap<String, NsiReport>> {
    Json(s.nsis())
}

async fn get_pool(State(s): Shared) -> Json<PoolReport> {
    Json(s.pool())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/verticals", get(list_verticals).post(register_vertical))
        .route("/verticals/{id}", get(get_vertical))
        .route("/verticals/{id}/vsis", post(request_vsi))
        .route("/vsis", get(list_vsis))
        .route("/vsis/{id}", get(get_vsi).delete(terminate_vsi))
        .route("/nsis", get(list_nsis))
        .route("/pool", get(get_pool))
        .with_state(service)
}

pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let service = Arc::new(Service::open(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

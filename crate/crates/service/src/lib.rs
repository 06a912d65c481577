//! HTTP/JSON service over a loaded model store.
//!
//! Routes: `GET /models`, `GET /models/{id}`, `POST /predict`,
//! `POST /whatif`, `POST /doe`. Models are loaded once at start and shared
//! read-only; every response is a function of the loaded models and the
//! request body. Evaluation time is reported in the `x-evaluation-micros`
//! header so bodies stay reproducible.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use qmon_core::doe::{assemble_row, run_doe, DoeError, DoeResult, LevelSpec, OperatingPoint, Response, Warning};
use qmon_core::ensemble::Strategy;
use qmon_core::store::{ModelRecord, ModelStore, RecordMetadata, StoreError};
use qmon_core::{Fusion, Schema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TIMING_HEADER: &str = "x-evaluation-micros";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("store holds no models")]
    NoModels,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub id: String,
    pub record: ModelRecord,
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub models: Arc<Vec<LoadedModel>>,
}

impl AppState {
    pub fn new(models: Vec<LoadedModel>) -> Result<Self, ServiceError> {
        if models.is_empty() {
            return Err(ServiceError::NoModels);
        }
        Ok(AppState {
            models: Arc::new(models),
        })
    }

    /// Loads every model of the store, in id order.
    pub fn from_store(store: &ModelStore) -> Result<Self, ServiceError> {
        let index = store.index()?;
        let models = index
            .models
            .keys()
            .map(|id| {
                Ok(LoadedModel {
                    id: id.clone(),
                    record: store.load(id)?,
                })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        AppState::new(models)
    }

    fn select(&self, ids: Option<&[String]>) -> Result<Vec<&LoadedModel>, ApiError> {
        match ids {
            None => Ok(self.models.iter().collect()),
            Some(ids) if ids.is_empty() => Err(ApiError::BadRequest("empty model list".into())),
            Some(ids) => ids.iter().map(|id| self.find(id)).collect(),
        }
    }

    fn find(&self, id: &str) -> Result<&LoadedModel, ApiError> {
        self.models
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown model {id:?}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model))
        .route("/predict", post(predict))
        .route("/whatif", post(whatif))
        .route("/doe", post(doe))
        .with_state(state)
}

/// Loads the store and serves until ctrl-c.
pub async fn serve(store: &Path, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::from_store(&ModelStore::open(store)?)?;
    log::info!("serving {} model(s) on {addr}", state.models.len());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub status: u16,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> HttpResponse {
        let (status, error) = match self {
            ApiError::BadRequest(e) => (StatusCode::BAD_REQUEST, e),
            ApiError::NotFound(e) => (StatusCode::NOT_FOUND, e),
            ApiError::Internal(e) => (StatusCode::INTERNAL_SERVER_ERROR, e),
        };
        let body = ErrorBody {
            error,
            status: status.as_u16(),
        };
        (status, Json(body)).into_response()
    }
}

impl From<DoeError> for ApiError {
    fn from(e: DoeError) -> Self {
        match e {
            DoeError::DimensionMismatch { .. } | DoeError::Ensemble(_) => {
                ApiError::Internal(e.to_string())
            }
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

/// 200 without warnings, 422 with; the body is the same either way.
fn evaluated<T: Serialize>(body: &T, warned: bool, started: Instant) -> HttpResponse {
    let status = if warned {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    };
    let mut response = (status, Json(body)).into_response();
    let micros = started.elapsed().as_micros().to_string();
    response
        .headers_mut()
        .insert(TIMING_HEADER, HeaderValue::from_str(&micros).expect("digits"));
    response
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub defect: String,
    pub members: usize,
    pub fusion: Fusion,
    pub strategy: Strategy,
    pub validation_error: f64,
    pub schema: Schema,
    pub reference: OperatingPoint,
    pub metadata: RecordMetadata,
}

impl From<&LoadedModel> for ModelInfo {
    fn from(m: &LoadedModel) -> Self {
        let r = &m.record;
        ModelInfo {
            id: m.id.clone(),
            defect: r.defect.clone(),
            members: r.ensemble.len(),
            fusion: r.ensemble.fusion,
            strategy: r.ensemble.provenance.strategy,
            validation_error: r.ensemble.provenance.validation_error,
            schema: r.schema.clone(),
            reference: r.reference.clone(),
            metadata: r.metadata.clone(),
        }
    }
}

async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(state.models.iter().map(ModelInfo::from).collect())
}

async fn get_model(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ModelInfo>, ApiError> {
    Ok(Json(ModelInfo::from(state.find(&id)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    /// Natural-unit value of every factor, keyed by name.
    pub values: BTreeMap<String, f64>,
    /// Restricts evaluation to these model ids; all models when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    /// Uncontrollable factor values. Factors left out take the model's
    /// reference value.
    #[serde(default)]
    pub operating_point: OperatingPoint,
    /// Candidate value of every controllable factor.
    pub setting: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoeRequest {
    /// Required when more than one model is loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub operating_point: OperatingPoint,
    #[serde(default)]
    pub levels: LevelSpec,
    #[serde(default)]
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRisk {
    pub model: String,
    pub defect: String,
    pub class: u8,
    /// `"defect"` or `"no defect"`.
    pub label: String,
    pub risk: f64,
    pub fusion: Fusion,
    /// The natural-unit row that was evaluated.
    pub evaluated: BTreeMap<String, f64>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskResponse {
    pub results: Vec<ModelRisk>,
    /// Echo of the submitted values.
    pub setting: BTreeMap<String, f64>,
    /// Out-of-bounds values over all models.
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeResponse {
    pub model: String,
    pub defect: String,
    #[serde(flatten)]
    pub result: DoeResult,
}

fn check_known(names: impl Iterator<Item = String>, models: &[&LoadedModel]) -> Result<(), ApiError> {
    for name in names {
        if !models.iter().any(|m| m.record.schema.index_of(&name).is_some()) {
            return Err(ApiError::BadRequest(format!("unknown factor {name:?}")));
        }
    }
    Ok(())
}

/// Operating point for one model: its reference, overridden by any
/// uncontrollable values the request names.
fn operating_point(schema: &Schema, reference: &OperatingPoint, given: &BTreeMap<String, f64>) -> OperatingPoint {
    let mut values = reference.values.clone();
    for (_, f) in schema.uncontrollable() {
        if let Some(&v) = given.get(&f.name) {
            values.insert(f.name.clone(), v);
        }
    }
    OperatingPoint { values }
}

fn controllable_part(schema: &Schema, given: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    schema
        .controllable()
        .filter_map(|(_, f)| given.get(&f.name).map(|&v| (f.name.clone(), v)))
        .collect()
}

fn evaluate(model: &LoadedModel, op: &OperatingPoint, setting: &BTreeMap<String, f64>) -> Result<ModelRisk, ApiError> {
    let r = &model.record;
    let (row, warnings) = assemble_row(&r.schema, op, setting)?;
    let (class, risk) = r.predict_raw(&row).map_err(ApiError::Internal)?;
    Ok(ModelRisk {
        model: model.id.clone(),
        defect: r.defect.clone(),
        class,
        label: if class == 1 { "defect" } else { "no defect" }.to_string(),
        risk,
        fusion: r.ensemble.fusion,
        evaluated: r
            .schema
            .factors
            .iter()
            .zip(&row)
            .map(|(f, &v)| (f.name.clone(), v))
            .collect(),
        warnings,
    })
}

fn collect(results: Vec<ModelRisk>, setting: BTreeMap<String, f64>) -> RiskResponse {
    let mut warnings: Vec<Warning> = Vec::new();
    for w in results.iter().flat_map(|r| &r.warnings) {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    RiskResponse {
        results,
        setting,
        warnings,
    }
}

async fn predict(State(state): State<AppState>, body: Bytes) -> Result<HttpResponse, ApiError> {
    let started = Instant::now();
    let req: PredictRequest = parse(&body)?;
    let response = blocking(move || {
        let models = state.select(req.models.as_deref())?;
        check_known(req.values.keys().cloned(), &models)?;
        let results = models
            .iter()
            .map(|m| {
                let schema = &m.record.schema;
                let op = OperatingPoint {
                    values: schema
                        .uncontrollable()
                        .filter_map(|(_, f)| req.values.get(&f.name).map(|&v| (f.name.clone(), v)))
                        .collect(),
                };
                evaluate(m, &op, &controllable_part(schema, &req.values))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(collect(results, req.values))
    })
    .await?;
    Ok(evaluated(&response, !response.warnings.is_empty(), started))
}

async fn whatif(State(state): State<AppState>, body: Bytes) -> Result<HttpResponse, ApiError> {
    let started = Instant::now();
    let req: WhatIfRequest = parse(&body)?;
    let response = blocking(move || {
        let models = state.select(req.models.as_deref())?;
        check_known(req.operating_point.values.keys().cloned(), &models)?;
        check_known(req.setting.keys().cloned(), &models)?;
        let results = models
            .iter()
            .map(|m| {
                let r = &m.record;
                let op = operating_point(&r.schema, &r.reference, &req.operating_point.values);
                let setting = controllable_part(&r.schema, &req.setting);
                for name in req.operating_point.values.keys() {
                    if let Some(i) = r.schema.index_of(name) {
                        if r.schema.factors[i].controllable {
                            return Err(DoeError::Controllable(name.clone()).into());
                        }
                    }
                }
                evaluate(m, &op, &setting)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(collect(results, req.setting))
    })
    .await?;
    Ok(evaluated(&response, !response.warnings.is_empty(), started))
}

async fn doe(State(state): State<AppState>, body: Bytes) -> Result<HttpResponse, ApiError> {
    let started = Instant::now();
    let req: DoeRequest = parse(&body)?;
    let response = blocking(move || {
        let model = match &req.model {
            Some(id) => state.find(id)?,
            None if state.models.len() == 1 => &state.models[0],
            None => {
                return Err(ApiError::BadRequest(
                    "several models are loaded; name one in \"model\"".into(),
                ))
            }
        };
        let r = &model.record;
        check_known(req.operating_point.values.keys().cloned(), &[model])?;
        for name in req.operating_point.values.keys() {
            let i = r.schema.index_of(name).expect("checked");
            if r.schema.factors[i].controllable {
                return Err(DoeError::Controllable(name.clone()).into());
            }
        }
        let op = operating_point(&r.schema, &r.reference, &req.operating_point.values);
        let result = run_doe(&r.ensemble, &r.encoder, &op, &req.levels, req.response)?;
        Ok(DoeResponse {
            model: model.id.clone(),
            defect: r.defect.clone(),
            result,
        })
    })
    .await?;
    Ok(evaluated(&response, !response.result.warnings.is_empty(), started))
}

//! Thin async client of the session service.

use motion_compose::motion::{MotionError, MotionFile};
use motion_compose::session::{
    AppendOutcome, AppendRequest, CreateSessionRequest, CreatedSession, ErrorBody, JointPositions, SessionInfo,
};
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server answered {status}: {message}")]
    Api { status: StatusCode, code: Option<String>, message: String },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("malformed motion file from server: {0}")]
    Motion(#[from] MotionError),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
            ClientError::Motion(_) => None,
        }
    }

    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => code.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// Client of the service at `base_url`, e.g. `http://127.0.0.1:7860`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Client { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send(req: RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Api { status, code: Some(body.code), message: body.error },
            Err(_) => ClientError::Api { status, code: None, message: text },
        })
    }

    async fn json<T: DeserializeOwned>(req: RequestBuilder) -> Result<T, ClientError> {
        Ok(Self::send(req).await?.json().await?)
    }

    pub async fn create_session(&self, seed: Option<u64>) -> Result<CreatedSession, ClientError> {
        Self::json(self.http.post(self.url("/sessions")).json(&CreateSessionRequest { seed })).await
    }

    pub async fn append(
        &self,
        id: &str,
        text: &str,
        duration_s: f64,
        idempotency_key: Option<&str>,
    ) -> Result<AppendOutcome, ClientError> {
        let body = AppendRequest {
            text: text.to_string(),
            duration_s,
            idempotency_key: idempotency_key.map(str::to_string),
        };
        Self::json(self.http.post(self.url(&format!("/sessions/{id}/actions"))).json(&body)).await
    }

    pub async fn info(&self, id: &str) -> Result<SessionInfo, ClientError> {
        Self::json(self.http.get(self.url(&format!("/sessions/{id}")))).await
    }

    /// Raw bytes of the session's motion file.
    pub async fn motion_bytes(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        Ok(Self::send(self.http.get(self.url(&format!("/sessions/{id}/motion")))).await?.bytes().await?.to_vec())
    }

    pub async fn motion(&self, id: &str) -> Result<MotionFile, ClientError> {
        Ok(MotionFile::from_json_bytes(&self.motion_bytes(id).await?)?)
    }

    pub async fn positions(&self, id: &str) -> Result<JointPositions, ClientError> {
        Self::json(self.http.get(self.url(&format!("/sessions/{id}/positions")))).await
    }

    pub async fn delete(&self, id: &str) -> Result<(), ClientError> {
        Self::send(self.http.delete(self.url(&format!("/sessions/{id}")))).await?;
        Ok(())
    }
}

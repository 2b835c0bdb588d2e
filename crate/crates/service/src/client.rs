use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;

use trustloop::bandit::{ArmCatalog, Role};
use trustloop::report::{ArmReport, ExportFilter};

use crate::error::ServiceError;
use crate::http::{CatalogsBody, ErrorBody};
use crate::service::{Ack, SessionStart, StepPayload, Submission, SurveyService};

/// The survey operations a rater (human UI or simulator) needs.
pub trait SurveyApi {
    fn catalogs(&self) -> Result<(ArmCatalog, ArmCatalog), ServiceError>;
    fn start_session(&self, role: Role) -> Result<SessionStart, ServiceError>;
    fn next_step(&self, session_id: &str) -> Result<StepPayload, ServiceError>;
    fn submit(&self, session_id: &str, sub: &Submission) -> Result<Ack, ServiceError>;
    fn report(&self, filter: &ExportFilter) -> Result<ArmReport, ServiceError>;
    fn export_csv(&self, filter: &ExportFilter) -> Result<String, ServiceError>;
}

/// In-process calls, no network.
#[derive(Clone)]
pub struct Embedded(pub Arc<SurveyService>);

impl SurveyApi for Embedded {
    fn catalogs(&self) -> Result<(ArmCatalog, ArmCatalog), ServiceError> {
        Ok(self.0.catalogs())
    }

    fn start_session(&self, role: Role) -> Result<SessionStart, ServiceError> {
        self.0.start_session(role)
    }

    fn next_step(&self, session_id: &str) -> Result<StepPayload, ServiceError> {
        self.0.next_step(session_id)
    }

    fn submit(&self, session_id: &str, sub: &Submission) -> Result<Ack, ServiceError> {
        self.0.submit(session_id, sub)
    }

    fn report(&self, filter: &ExportFilter) -> Result<ArmReport, ServiceError> {
        self.0.report(filter)
    }

    fn export_csv(&self, filter: &ExportFilter) -> Result<String, ServiceError> {
        self.0.export_csv(filter)
    }
}

/// Blocking HTTP client for a running service.
pub struct HttpApi {
    base: String,
    client: Client,
}

impl HttpApi {
    pub fn new(base_url: &str) -> Result<Self, ServiceError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ServiceError::Unreachable(e.to_string()))?;
        Ok(HttpApi { base: base_url.trim_end_matches('/').to_owned(), client })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn query(filter: &ExportFilter) -> Vec<(&'static str, String)> {
        let mut q = Vec::new();
        if let Some(r) = filter.role {
            q.push(("role", r.as_str().to_owned()));
        }
        if let Some(p) = filter.part {
            q.push(("part", p.number().to_string()));
        }
        q
    }

    fn check(resp: reqwest::Result<Response>) -> Result<Response, ServiceError> {
        let resp = resp.map_err(|e| ServiceError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => ServiceError::Remote { status: status.as_u16(), code: b.code, message: b.message },
            Err(_) => ServiceError::Remote { status: status.as_u16(), code: "unknown".into(), message: text },
        })
    }

    fn json<T: DeserializeOwned>(resp: reqwest::Result<Response>) -> Result<T, ServiceError> {
        Self::check(resp)?.json().map_err(|e| ServiceError::Invalid(format!("malformed response: {e}")))
    }

    fn text(resp: reqwest::Result<Response>) -> Result<String, ServiceError> {
        Self::check(resp)?.text().map_err(|e| ServiceError::Unreachable(e.to_string()))
    }
}

impl SurveyApi for HttpApi {
    fn catalogs(&self) -> Result<(ArmCatalog, ArmCatalog), ServiceError> {
        let b: CatalogsBody = Self::json(self.client.get(self.url("/api/catalogs")).send())?;
        Ok((b.part1, b.part2))
    }

    fn start_session(&self, role: Role) -> Result<SessionStart, ServiceError> {
        let body = serde_json::json!({ "role": role });
        Self::json(self.client.post(self.url("/api/sessions")).json(&body).send())
    }

    fn next_step(&self, session_id: &str) -> Result<StepPayload, ServiceError> {
        Self::json(self.client.get(self.url(&format!("/api/sessions/{session_id}/next"))).send())
    }

    fn submit(&self, session_id: &str, sub: &Submission) -> Result<Ack, ServiceError> {
        Self::json(self.client.post(self.url(&format!("/api/sessions/{session_id}/ratings"))).json(sub).send())
    }

    fn report(&self, filter: &ExportFilter) -> Result<ArmReport, ServiceError> {
        Self::json(self.client.get(self.url("/api/report")).query(&Self::query(filter)).send())
    }

    fn export_csv(&self, filter: &ExportFilter) -> Result<String, ServiceError> {
        Self::text(self.client.get(self.url("/api/export.csv")).query(&Self::query(filter)).send())
    }
}

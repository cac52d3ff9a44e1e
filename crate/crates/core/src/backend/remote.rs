//! Client for chat-completion style HTTP endpoints.

use std::env;

use serde_json::{json, Value};

use super::{BackendProfile, Transport, TransportError, TransportRequest};

/// POSTs `{model, temperature, messages}` to the configured URL with a
/// bearer credential and returns `choices[0].message.content`.
pub struct RemoteTransport {
    http: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
}

impl RemoteTransport {
    /// Reads the credential from the environment variable named by
    /// `profile.api_key_ref`.
    pub fn new(profile: &BackendProfile) -> Result<Self, TransportError> {
        let api_key = env::var(&profile.api_key_ref).map_err(|_| {
            TransportError::Credential(format!("environment variable {} is not set", profile.api_key_ref))
        })?;
        Self::with_key(profile, api_key)
    }

    pub fn with_key(profile: &BackendProfile, api_key: String) -> Result<Self, TransportError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(profile.timeout)
            .build()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: profile.endpoint.clone(),
            model: profile.model_name.clone(),
            api_key,
        })
    }
}

impl Transport for RemoteTransport {
    fn send(&self, req: &TransportRequest<'_>) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.prompt},
            ],
        });
        let mut call = self.http.post(&self.endpoint).json(&body);
        if !self.api_key.is_empty() {
            call = call.bearer_auth(&self.api_key);
        }
        let response = call.send().map_err(|e| TransportError::Request(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(TransportError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let envelope: Value = response.json().map_err(|e| TransportError::Envelope(e.to_string()))?;
        envelope["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Envelope("missing choices[0].message.content".into()))
    }
}

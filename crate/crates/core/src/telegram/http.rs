//! Live Bot API client over HTTPS.

use std::path::Path;
use std::time::Duration;

use reqwest::blocking::{multipart, Client, Response};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{BotToken, Transport, TransportError, Update};

#[derive(Clone)]
pub struct HttpTransport {
    client: Client,
    base: String,
    token: BotToken,
}

#[derive(Deserialize)]
struct Envelope {
    ok: bool,
    #[serde(default)]
    result: Value,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    error_code: Option<u16>,
    #[serde(default)]
    parameters: Option<Parameters>,
}

#[derive(Deserialize)]
struct Parameters {
    retry_after: Option<f64>,
}

impl HttpTransport {
    pub fn new(api_base: &str, token: BotToken) -> Result<Self, TransportError> {
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(15))
            .build()
            .map_err(|e| TransportError::Network(e.without_url().to_string()))?;
        Ok(Self {
            client,
            base: api_base.trim_end_matches('/').to_string(),
            token,
        })
    }

    fn url(&self, method: &str) -> String {
        format!("{}/bot{}/{method}", self.base, self.token.expose())
    }

    fn decode(resp: reqwest::Result<Response>) -> Result<Value, TransportError> {
        // the request URL embeds the token, so it is stripped from every error
        let resp = resp.map_err(|e| TransportError::Network(e.without_url().to_string()))?;
        let status = resp.status().as_u16();
        let env: Envelope = resp
            .json()
            .map_err(|e| TransportError::Network(format!("bad response (HTTP {status}): {}", e.without_url())))?;
        if env.ok {
            return Ok(env.result);
        }
        let code = env.error_code.unwrap_or(status);
        let desc = env.description.unwrap_or_else(|| format!("HTTP {code}"));
        Err(match code {
            401 | 403 | 404 => TransportError::Auth(desc),
            429 => TransportError::Throttled {
                retry_after_s: env.parameters.and_then(|p| p.retry_after),
            },
            500..=599 => TransportError::Network(desc),
            _ => TransportError::Rejected(desc),
        })
    }

    fn message_id(v: &Value) -> i64 {
        v.get("message_id").and_then(Value::as_i64).unwrap_or(0)
    }
}

impl Transport for HttpTransport {
    fn send_message(&mut self, chat_id: i64, text: &str) -> Result<i64, TransportError> {
        let r = self
            .client
            .post(self.url("sendMessage"))
            .timeout(Duration::from_secs(30))
            .json(&json!({ "chat_id": chat_id, "text": text }))
            .send();
        Self::decode(r).map(|v| Self::message_id(&v))
    }

    fn send_photo(&mut self, chat_id: i64, photo: &Path, caption: &str) -> Result<i64, TransportError> {
        let part = multipart::Part::file(photo).map_err(|e| TransportError::Rejected(format!("snapshot: {e}")))?;
        let form = multipart::Form::new()
            .text("chat_id", chat_id.to_string())
            .text("caption", caption.to_string())
            .part("photo", part);
        let r = self
            .client
            .post(self.url("sendPhoto"))
            .timeout(Duration::from_secs(120))
            .multipart(form)
            .send();
        Self::decode(r).map(|v| Self::message_id(&v))
    }

    fn get_updates(&mut self, offset: Option<i64>, timeout_s: u64) -> Result<Vec<Update>, TransportError> {
        let mut body = json!({ "timeout": timeout_s, "allowed_updates": ["message"] });
        if let Some(o) = offset {
            body["offset"] = json!(o);
        }
        let r = self
            .client
            .post(self.url("getUpdates"))
            .timeout(Duration::from_secs(timeout_s + 15))
            .json(&body)
            .send();
        let v = Self::decode(r)?;
        Ok(parse_updates(&v))
    }
}

/// Keeps text messages; other update kinds become text-less updates so their
/// ids are still confirmed.
fn parse_updates(v: &Value) -> Vec<Update> {
    v.as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|u| {
                    let update_id = u.get("update_id")?.as_i64()?;
                    let msg = u.get("message");
                    Some(Update {
                        update_id,
                        chat_id: msg
                            .and_then(|m| m.pointer("/chat/id"))
                            .and_then(Value::as_i64)
                            .unwrap_or(0),
                        text: msg
                            .and_then(|m| m.get("text"))
                            .and_then(Value::as_str)
                            .map(str::to_string),
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

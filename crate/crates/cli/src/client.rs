//! Blocking HTTP client for the services.
//!
//! Every request carries an `X-Request-Id`. A request that fails in transit
//! is sent again with the same id, so the server can answer a repeated write
//! from its replay cache instead of running it twice.

use std::thread::sleep;
use std::time::Duration;

use reqwest::blocking::{Client as Http, Response};
use reqwest::{Method, Url};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::ClientConfig;
use crate::error::{CliError, ErrorBody};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

pub fn new_request_id() -> String {
    format!("cli-{}", uuid::Uuid::new_v4())
}

pub struct Client {
    http: Http,
    base: Url,
    attempts: u32,
    backoff: Duration,
}

impl Client {
    pub fn new(cfg: &ClientConfig) -> Result<Self, CliError> {
        let http = Http::builder()
            .timeout(cfg.timeout)
            .user_agent(concat!("gatekeep/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Client {
            http,
            base: cfg.broker()?.clone(),
            attempts: cfg.retries,
            backoff: Duration::from_millis(200),
        })
    }

    pub fn url(&self, path: &str) -> Result<Url, CliError> {
        let mut base = self.base.clone();
        if !base.path().ends_with('/') {
            let p = format!("{}/", base.path());
            base.set_path(&p);
        }
        base.join(path.trim_start_matches('/'))
            .map_err(|e| CliError::Config(format!("bad path {path}: {e}")))
    }

    fn send_once(
        &self,
        method: &Method,
        url: &Url,
        bearer: Option<&str>,
        body: Option<&Value>,
        request_id: &str,
    ) -> reqwest::Result<Response> {
        let mut req = self.http.request(method.clone(), url.clone()).header(REQUEST_ID_HEADER, request_id);
        if let Some(b) = bearer {
            req = req.bearer_auth(b);
        }
        if let Some(body) = body {
            req = req.json(body);
        }
        req.send()
    }

    /// Sends one logical request, retrying transport failures under one
    /// request id.
    pub fn request<T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        bearer: Option<&str>,
        body: Option<Value>,
    ) -> Result<T, CliError> {
        let url = self.url(path)?;
        let request_id = new_request_id();
        let mut last = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                sleep(self.backoff * attempt);
            }
            match self.send_once(&method, &url, bearer, body.as_ref(), &request_id) {
                Ok(resp) if resp.status().is_server_error() && attempt + 1 < self.attempts => {
                    last = Some(format!("{} answered {}", url, resp.status()));
                }
                Ok(resp) => return decode(resp),
                Err(e) => last = Some(describe(&e)),
            }
        }
        Err(CliError::BrokerUnreachable(last.unwrap_or_else(|| url.to_string())))
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str, bearer: Option<&str>) -> Result<T, CliError> {
        self.request(Method::GET, path, bearer, None)
    }

    pub fn post<T: DeserializeOwned>(&self, path: &str, bearer: Option<&str>, body: impl Serialize) -> Result<T, CliError> {
        let body = serde_json::to_value(body).map_err(|e| CliError::Protocol(e.to_string()))?;
        self.request(Method::POST, path, bearer, Some(body))
    }

    pub fn delete<T: DeserializeOwned>(&self, path: &str, bearer: Option<&str>) -> Result<T, CliError> {
        self.request(Method::DELETE, path, bearer, None)
    }
}

fn describe(e: &reqwest::Error) -> String {
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}

fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, CliError> {
    let status = resp.status();
    let text = resp.text().map_err(|e| CliError::BrokerUnreachable(describe(&e)))?;
    if status.is_success() {
        return serde_json::from_str(&text).map_err(|e| CliError::Protocol(format!("{e}: {text}")));
    }
    Err(match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => CliError::Server {
            status: status.as_u16(),
            code: body.error,
            message: body.message,
        },
        Err(_) => CliError::Server {
            status: status.as_u16(),
            code: status.canonical_reason().unwrap_or("HttpError").to_owned(),
            message: text,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(broker: &str) -> Client {
        let cfg = ClientConfig {
            broker: Some(Url::parse(broker).unwrap()),
            ..ClientConfig::default()
        };
        Client::new(&cfg).unwrap()
    }

    #[test]
    fn paths_join_under_the_broker_prefix() {
        assert_eq!(client("http://b.example").url("/token").unwrap().as_str(), "http://b.example/token");
        assert_eq!(client("http://b.example/api").url("/token").unwrap().as_str(), "http://b.example/api/token");
        assert_eq!(client("http://b.example/api/").url("token").unwrap().as_str(), "http://b.example/api/token");
    }

    #[test]
    fn request_ids_are_fresh() {
        let a = new_request_id();
        assert!(a.starts_with("cli-"));
        assert_ne!(a, new_request_id());
    }
}

//! Common service plumbing: the service trait, heartbeats and request/response
//! envelopes.

use hrc_core::bus::{Envelope, Publisher, RpcDir, Topic};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Heartbeat period of every service.
pub const HEARTBEAT_MS: u64 = 2_000;

/// A bus participant driven by a single logical loop.
pub trait Service {
    fn name(&self) -> &str;

    /// Subscription filter covering everything the service consumes.
    fn filter(&self) -> String;

    fn on_message(&mut self, env: &Envelope, now_ms: u64);

    fn on_tick(&mut self, now_ms: u64);
}

impl<S: Service + ?Sized> Service for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn filter(&self) -> String {
        (**self).filter()
    }

    fn on_message(&mut self, env: &Envelope, now_ms: u64) {
        (**self).on_message(env, now_ms)
    }

    fn on_tick(&mut self, now_ms: u64) {
        (**self).on_tick(now_ms)
    }
}

/// Publishes a retained heartbeat on `service/<name>/status` every
/// [`HEARTBEAT_MS`].
#[derive(Debug)]
pub struct Heartbeat {
    ws: String,
    name: String,
    next_ms: Option<u64>,
    pub detail: Option<String>,
}

impl Heartbeat {
    pub fn new(ws: &str, name: &str) -> Self {
        Heartbeat { ws: ws.into(), name: name.into(), next_ms: None, detail: None }
    }

    pub fn tick(&mut self, publisher: &Publisher, now_ms: u64) {
        if self.next_ms.is_some_and(|n| now_ms < n) {
            return;
        }
        self.next_ms = Some(now_ms + HEARTBEAT_MS);
        let state = if self.detail.is_some() { "degraded" } else { "ok" };
        let topic = Topic::ServiceStatus { ws: self.ws.clone(), name: self.name.clone() };
        let _ = publisher.publish_to(
            &topic,
            json!({"service": self.name, "state": state, "t_ms": now_ms, "detail": self.detail}),
            true,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub request_id: String,
    pub op: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcResponse {
    pub request_id: String,
    pub ok: bool,
    #[serde(default)]
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RpcResponse {
    pub fn ok(request_id: &str, result: Value) -> Self {
        RpcResponse { request_id: request_id.into(), ok: true, result, error: None }
    }

    pub fn err(request_id: &str, error: impl ToString) -> Self {
        RpcResponse { request_id: request_id.into(), ok: false, result: Value::Null, error: Some(error.to_string()) }
    }
}

pub fn rpc_topic(ws: &str, service: &str, dir: RpcDir) -> Topic {
    Topic::Rpc { ws: ws.into(), service: service.into(), dir }
}

/// Issues requests with unique ids.
#[derive(Debug, Default)]
pub struct RequestIds {
    prefix: String,
    n: u64,
}

impl RequestIds {
    pub fn new(prefix: &str) -> Self {
        RequestIds { prefix: prefix.into(), n: 0 }
    }

    pub fn issue(&mut self) -> String {
        self.n += 1;
        format!("{}:{}", self.prefix, self.n)
    }
}

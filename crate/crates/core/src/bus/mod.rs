//! Publish/subscribe transport with JSON envelopes.
//!
//! Two backends implement [`Transport`]: [`InProcessBus`] for tests and
//! single-process deployments, and an MQTT 3.1.1 client (feature `mqtt`).
//! Ordering is FIFO per topic and publisher. Retained messages are replayed to
//! late subscribers before live traffic.

mod inproc;
#[cfg(feature = "mqtt")]
mod mqtt;
pub mod topic;

pub use inproc::InProcessBus;
#[cfg(feature = "mqtt")]
pub use mqtt::MqttTransport;
pub use topic::{matches, validate_filter, ConfigCategory, EventStream, RpcDir, Topic, TopicError};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

/// Environment variable naming the external broker, e.g. `mqtt://localhost:1883`.
pub const BROKER_ENV: &str = "ARTHUR_BROKER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: String,
    pub payload: Value,
    pub retained: bool,
    pub publisher: String,
    /// Monotonic per publisher.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("transport unavailable ({backend}): {reason}; {hint}")]
    Unavailable { backend: String, reason: String, hint: String },
    #[error("subscriber on '{filter}' lagged; messages were dropped")]
    Lagged { filter: String },
    #[error("subscription closed")]
    Closed,
}

impl BusError {
    pub fn unavailable(backend: &str, reason: impl Into<String>) -> Self {
        BusError::Unavailable {
            backend: backend.into(),
            reason: reason.into(),
            hint: format!("check {BROKER_ENV} / --broker and retry"),
        }
    }
}

/// Delivery backend.
pub trait Transport: Send + Sync {
    fn publish(&self, envelope: Envelope) -> Result<(), BusError>;
    fn subscribe(&self, filter: &str) -> Result<Subscription, BusError>;
    /// Removes the retained message on `topic`, if any.
    fn clear_retained(&self, topic: &str) -> Result<(), BusError>;
    fn name(&self) -> &'static str;
}

/// Ordered stream of envelopes matching one filter.
pub struct Subscription {
    filter: String,
    rx: Receiver<Envelope>,
    lagged: Arc<AtomicBool>,
}

impl Subscription {
    pub(crate) fn new(filter: &str, rx: Receiver<Envelope>, lagged: Arc<AtomicBool>) -> Self {
        Subscription { filter: filter.to_string(), rx, lagged }
    }

    pub fn filter(&self) -> &str {
        &self.filter
    }

    fn check_lag(&self) -> Result<(), BusError> {
        if self.lagged.swap(false, Ordering::SeqCst) {
            return Err(BusError::Lagged { filter: self.filter.clone() });
        }
        Ok(())
    }

    /// Next queued envelope without blocking.
    pub fn try_recv(&self) -> Result<Option<Envelope>, BusError> {
        self.check_lag()?;
        match self.rx.try_recv() {
            Ok(e) => Ok(Some(e)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(BusError::Closed),
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Envelope>, BusError> {
        self.check_lag()?;
        match self.rx.recv_timeout(timeout) {
            Ok(e) => Ok(Some(e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(BusError::Closed),
        }
    }

    pub fn drain(&self) -> Result<Vec<Envelope>, BusError> {
        let mut out = Vec::new();
        while let Some(e) = self.try_recv()? {
            out.push(e);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub seq: u64,
}

/// Publishing handle stamping envelopes with a publisher id and sequence number.
#[derive(Clone)]
pub struct Publisher {
    transport: Arc<dyn Transport>,
    id: String,
    seq: Arc<AtomicU64>,
}

impl Publisher {
    pub fn new(transport: Arc<dyn Transport>, name: &str) -> Self {
        static INSTANCE: AtomicU64 = AtomicU64::new(0);
        let n = INSTANCE.fetch_add(1, Ordering::Relaxed);
        Publisher {
            transport,
            id: format!("{name}@{}.{n}", std::process::id()),
            seq: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    pub fn publish(&self, topic: &str, payload: Value, retained: bool) -> Result<Ack, BusError> {
        Topic::parse(topic)?;
        let seq = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        self.transport.publish(Envelope {
            topic: topic.to_string(),
            payload,
            retained,
            publisher: self.id.clone(),
            seq,
        })?;
        Ok(Ack { seq })
    }

    pub fn publish_to(&self, topic: &Topic, payload: Value, retained: bool) -> Result<Ack, BusError> {
        self.publish(&topic.to_string(), payload, retained)
    }

    pub fn clear_retained(&self, topic: &Topic) -> Result<(), BusError> {
        self.transport.clear_retained(&topic.to_string())
    }

    pub fn subscribe(&self, filter: &str) -> Result<Subscription, BusError> {
        self.transport.subscribe(filter)
    }
}

/// Drops redelivered envelopes: accepts a message only if its sequence number
/// exceeds the last one seen for the same publisher and topic.
#[derive(Debug, Default)]
pub struct Dedup {
    last: HashMap<(String, String), u64>,
}

impl Dedup {
    pub fn accept(&mut self, env: &Envelope) -> bool {
        let key = (env.publisher.clone(), env.topic.clone());
        match self.last.get(&key) {
            Some(&s) if env.seq <= s => false,
            _ => {
                self.last.insert(key, env.seq);
                true
            }
        }
    }
}

/// Connects to the backend named by `broker` (an `mqtt://host:port` URL), or
/// by the environment when `broker` is `None`.
#[cfg(feature = "mqtt")]
pub fn connect_external(broker: Option<&str>, client_id: &str) -> Result<Arc<dyn Transport>, BusError> {
    let url = match broker {
        Some(b) => b.to_string(),
        None => std::env::var(BROKER_ENV).map_err(|_| BusError::Unavailable {
            backend: "mqtt".into(),
            reason: format!("no broker configured: {BROKER_ENV} is not set"),
            hint: format!("set {BROKER_ENV}, pass --broker, or use --in-process"),
        })?,
    };
    Ok(Arc::new(MqttTransport::connect(&url, client_id)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dedup_by_publisher_and_topic() {
        let mut d = Dedup::default();
        let e = |p: &str, t: &str, s| Envelope { topic: t.into(), payload: json!(null), retained: false, publisher: p.into(), seq: s };
        assert!(d.accept(&e("a", "x", 1)));
        assert!(!d.accept(&e("a", "x", 1)));
        assert!(d.accept(&e("a", "y", 1)));
        assert!(d.accept(&e("b", "x", 1)));
        assert!(d.accept(&e("a", "x", 3)));
        assert!(!d.accept(&e("a", "x", 2)));
    }

    #[test]
    fn publisher_rejects_malformed_topics() {
        let p = Publisher::new(Arc::new(InProcessBus::new()), "t");
        assert!(matches!(p.publish("nope", json!({}), false), Err(BusError::Topic(_))));
    }
}

use super::{matches, validate_filter, BusError, Envelope, Subscription, Transport};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};

pub const DEFAULT_QUEUE: usize = 1 << 16;

struct Subscriber {
    filter: String,
    tx: SyncSender<Envelope>,
    lagged: Arc<AtomicBool>,
}

#[derive(Default)]
struct State {
    subscribers: Vec<Subscriber>,
    retained: BTreeMap<String, Envelope>,
    closed: bool,
}

/// Broker living inside the process. Delivery happens synchronously inside
/// `publish`, under one lock, so per-topic order equals publish order.
pub struct InProcessBus {
    state: Mutex<State>,
    queue: usize,
}

impl Default for InProcessBus {
    fn default() -> Self {
        Self::new()
    }
}

impl InProcessBus {
    pub fn new() -> Self {
        Self::with_queue(DEFAULT_QUEUE)
    }

    /// Bus whose subscriber queues hold at most `queue` envelopes.
    pub fn with_queue(queue: usize) -> Self {
        InProcessBus { state: Mutex::new(State::default()), queue }
    }

    /// Makes every later call fail with `Unavailable`.
    pub fn close(&self) {
        let mut st = self.state.lock().unwrap();
        st.closed = true;
        st.subscribers.clear();
    }

    pub fn retained(&self, topic: &str) -> Option<Envelope> {
        self.state.lock().unwrap().retained.get(topic).cloned()
    }

    /// Retained envelopes whose topic matches `filter`, sorted by topic.
    pub fn retained_matching(&self, filter: &str) -> Vec<Envelope> {
        let st = self.state.lock().unwrap();
        st.retained.values().filter(|e| matches(filter, &e.topic)).cloned().collect()
    }
}

fn unavailable() -> BusError {
    BusError::unavailable("in-process", "bus closed")
}

impl Transport for InProcessBus {
    fn publish(&self, envelope: Envelope) -> Result<(), BusError> {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return Err(unavailable());
        }
        if envelope.retained {
            st.retained.insert(envelope.topic.clone(), envelope.clone());
        }
        st.subscribers.retain(|s| {
            if !matches(&s.filter, &envelope.topic) {
                return true;
            }
            match s.tx.try_send(envelope.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    s.lagged.store(true, Ordering::SeqCst);
                    true
                }
                Err(TrySendError::Disconnected(_)) => false,
            }
        });
        Ok(())
    }

    fn subscribe(&self, filter: &str) -> Result<Subscription, BusError> {
        validate_filter(filter)?;
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return Err(unavailable());
        }
        let (tx, rx) = sync_channel(self.queue);
        let lagged = Arc::new(AtomicBool::new(false));
        for env in st.retained.values().filter(|e| matches(filter, &e.topic)) {
            if tx.try_send(env.clone()).is_err() {
                lagged.store(true, Ordering::SeqCst);
                break;
            }
        }
        st.subscribers.push(Subscriber { filter: filter.to_string(), tx, lagged: lagged.clone() });
        Ok(Subscription::new(filter, rx, lagged))
    }

    fn clear_retained(&self, topic: &str) -> Result<(), BusError> {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return Err(unavailable());
        }
        st.retained.remove(topic);
        Ok(())
    }

    fn name(&self) -> &'static str {
        "in-process"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Publisher;
    use serde_json::json;

    #[test]
    fn overflow_surfaces_as_lag() {
        let bus = Arc::new(InProcessBus::with_queue(2));
        let sub = bus.subscribe("arthur/ws/#").unwrap();
        let p = Publisher::new(bus.clone(), "p");
        for i in 0..3 {
            p.publish("arthur/ws/events/input", json!(i), false).unwrap();
        }
        assert!(matches!(sub.try_recv(), Err(BusError::Lagged { .. })));
        assert_eq!(sub.drain().unwrap().len(), 2);
    }

    #[test]
    fn closed_bus_is_unavailable() {
        let bus = Arc::new(InProcessBus::new());
        bus.close();
        let p = Publisher::new(bus.clone(), "p");
        assert!(matches!(p.publish("arthur/ws/control", json!({}), false), Err(BusError::Unavailable { .. })));
        assert!(bus.subscribe("#").is_err());
    }
}

//! MQTT 3.1.1 backend (QoS 1). Envelopes travel as the JSON message body so
//! publisher ids and sequence numbers survive the broker.

use super::{matches, validate_filter, BusError, Envelope, Subscription, Transport};
use rumqttc::{Client, ConnectionError, Event, MqttOptions, Packet, QoS};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;
use tracing::{debug, warn};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(3);
const QUEUE: usize = 1 << 16;

struct Subscriber {
    filter: String,
    tx: SyncSender<Envelope>,
    lagged: Arc<AtomicBool>,
}

pub struct MqttTransport {
    client: Client,
    subscribers: Arc<Mutex<Vec<Subscriber>>>,
    broken: Arc<Mutex<Option<String>>>,
}

/// Splits `mqtt://host:port`, `tcp://host:port` or `host:port`.
pub fn parse_broker_url(url: &str) -> Result<(String, u16), BusError> {
    let rest = url
        .strip_prefix("mqtt://")
        .or_else(|| url.strip_prefix("tcp://"))
        .unwrap_or(url);
    let (host, port) = match rest.rsplit_once(':') {
        Some((h, p)) => (
            h,
            p.parse::<u16>()
                .map_err(|_| BusError::unavailable("mqtt", format!("bad broker port in '{url}'")))?,
        ),
        None => (rest, 1883),
    };
    if host.is_empty() {
        return Err(BusError::unavailable("mqtt", format!("bad broker url '{url}'")));
    }
    Ok((host.to_string(), port))
}

impl MqttTransport {
    pub fn connect(url: &str, client_id: &str) -> Result<Self, BusError> {
        let (host, port) = parse_broker_url(url)?;
        let mut opts = MqttOptions::new(client_id, host, port);
        opts.set_keep_alive(Duration::from_secs(5));
        opts.set_max_packet_size(1 << 22, 1 << 22);
        let (client, mut connection) = Client::new(opts, 1024);
        let subscribers: Arc<Mutex<Vec<Subscriber>>> = Arc::default();
        let broken: Arc<Mutex<Option<String>>> = Arc::default();
        let (ready_tx, ready_rx) = channel::<Result<(), String>>();

        let subs = subscribers.clone();
        let broken_flag = broken.clone();
        thread::Builder::new()
            .name(format!("mqtt-{client_id}"))
            .spawn(move || {
                let mut ready = Some(ready_tx);
                for note in connection.iter() {
                    match note {
                        Ok(Event::Incoming(Packet::ConnAck(_))) => {
                            *broken_flag.lock().unwrap() = None;
                            if let Some(tx) = ready.take() {
                                let _ = tx.send(Ok(()));
                            }
                        }
                        Ok(Event::Incoming(Packet::Publish(p))) => {
                            if p.payload.is_empty() {
                                continue;
                            }
                            let env: Envelope = match serde_json::from_slice(&p.payload) {
                                Ok(e) => e,
                                Err(e) => {
                                    warn!(topic = %p.topic, "dropping non-envelope payload: {e}");
                                    continue;
                                }
                            };
                            let mut subs = subs.lock().unwrap();
                            subs.retain(|s| {
                                if !matches(&s.filter, &p.topic) {
                                    return true;
                                }
                                match s.tx.try_send(env.clone()) {
                                    Ok(()) => true,
                                    Err(TrySendError::Full(_)) => {
                                        s.lagged.store(true, Ordering::SeqCst);
                                        true
                                    }
                                    Err(TrySendError::Disconnected(_)) => false,
                                }
                            });
                        }
                        Ok(_) => {}
                        Err(e) => {
                            let msg = e.to_string();
                            *broken_flag.lock().unwrap() = Some(msg.clone());
                            if let Some(tx) = ready.take() {
                                let _ = tx.send(Err(msg));
                                return;
                            }
                            if matches!(e, ConnectionError::RequestsDone) {
                                return;
                            }
                            debug!("mqtt connection error, reconnecting: {e}");
                            thread::sleep(Duration::from_millis(500));
                        }
                    }
                }
            })
            .map_err(|e| BusError::unavailable("mqtt", e.to_string()))?;

        match ready_rx.recv_timeout(CONNECT_TIMEOUT) {
            Ok(Ok(())) => Ok(MqttTransport { client, subscribers, broken }),
            Ok(Err(reason)) => Err(BusError::unavailable("mqtt", format!("cannot reach broker {url}: {reason}"))),
            Err(_) => Err(BusError::unavailable("mqtt", format!("no CONNACK from broker {url}"))),
        }
    }

    fn check(&self) -> Result<(), BusError> {
        match &*self.broken.lock().unwrap() {
            Some(reason) => Err(BusError::unavailable("mqtt", reason.clone())),
            None => Ok(()),
        }
    }
}

impl Transport for MqttTransport {
    fn publish(&self, envelope: Envelope) -> Result<(), BusError> {
        self.check()?;
        let body = serde_json::to_vec(&envelope).expect("envelope serializes");
        self.client
            .publish(envelope.topic, QoS::AtLeastOnce, envelope.retained, body)
            .map_err(|e| BusError::unavailable("mqtt", e.to_string()))
    }

    fn subscribe(&self, filter: &str) -> Result<Subscription, BusError> {
        validate_filter(filter)?;
        self.check()?;
        let (tx, rx) = sync_channel(QUEUE);
        let lagged = Arc::new(AtomicBool::new(false));
        self.subscribers.lock().unwrap().push(Subscriber {
            filter: filter.to_string(),
            tx,
            lagged: lagged.clone(),
        });
        self.client
            .subscribe(filter, QoS::AtLeastOnce)
            .map_err(|e| BusError::unavailable("mqtt", e.to_string()))?;
        Ok(Subscription::new(filter, rx, lagged))
    }

    fn clear_retained(&self, topic: &str) -> Result<(), BusError> {
        self.check()?;
        self.client
            .publish(topic, QoS::AtLeastOnce, true, Vec::new())
            .map_err(|e| BusError::unavailable("mqtt", e.to_string()))
    }

    fn name(&self) -> &'static str {
        "mqtt"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broker_urls() {
        assert_eq!(parse_broker_url("mqtt://localhost:1883").unwrap(), ("localhost".into(), 1883));
        assert_eq!(parse_broker_url("10.0.0.2:1999").unwrap(), ("10.0.0.2".into(), 1999));
        assert_eq!(parse_broker_url("broker").unwrap(), ("broker".into(), 1883));
        assert!(parse_broker_url("mqtt://:x").is_err());
    }

    #[test]
    fn unreachable_broker_is_unavailable() {
        // port 9 (discard) is closed on the loopback interface
        let err = MqttTransport::connect("mqtt://127.0.0.1:9", "probe").err().unwrap();
        assert!(matches!(err, BusError::Unavailable { .. }));
        assert!(err.to_string().contains("ARTHUR_BROKER"));
    }
}

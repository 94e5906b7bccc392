//! Event records (drops, reconfigurations, link state) fanned out to
//! subscribers.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NoRoute,
    Drop,
    LinkDown,
    LinkUp,
    Deployed,
    TornDown,
    ReconfigFull,
    ReconfigPrr,
    ParamSet,
    SharedUnitError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub unix_ms: u64,
    pub kind: EventKind,
    pub detail: String,
}

const SUBSCRIBER_DEPTH: usize = 1024;

/// Slow subscribers lose events rather than stalling the publisher.
#[derive(Debug, Clone, Default)]
pub struct EventBus {
    inner: Arc<BusInner>,
}

#[derive(Debug, Default)]
struct BusInner {
    seq: AtomicU64,
    subscribers: Mutex<Vec<Sender<Event>>>,
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, kind: EventKind, detail: impl Into<String>) {
        let event = Event {
            seq: self.inner.seq.fetch_add(1, Ordering::Relaxed),
            unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            kind,
            detail: detail.into(),
        };
        let mut subs = self.inner.subscribers.lock().unwrap_or_else(|e| e.into_inner());
        subs.retain(|tx| !matches!(tx.try_send(event.clone()), Err(TrySendError::Disconnected(_))));
    }

    pub fn subscribe(&self) -> Receiver<Event> {
        let (tx, rx) = crossbeam_channel::bounded(SUBSCRIBER_DEPTH);
        self.inner
            .subscribers
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(tx);
        rx
    }

    pub fn published(&self) -> u64 {
        self.inner.seq.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_and_disconnect() {
        let bus = EventBus::new();
        let a = bus.subscribe();
        let b = bus.subscribe();
        bus.publish(EventKind::NoRoute, "dst 9/9");
        assert_eq!(a.try_recv().unwrap().kind, EventKind::NoRoute);
        assert_eq!(b.try_recv().unwrap().detail, "dst 9/9");
        drop(b);
        bus.publish(EventKind::Drop, "x");
        assert_eq!(a.try_recv().unwrap().seq, 1);
        assert_eq!(bus.inner.subscribers.lock().unwrap().len(), 1);
    }
}

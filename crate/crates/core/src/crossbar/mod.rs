//! CHDR crossbar: routes packets among local endpoints and remote devices by
//! the destination half of the stream id.

mod adapter;
mod endpoint;
mod shared;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventBus, EventKind};
use crate::framing::{ChdrPacket, EndpointAddr, SequenceCounter, StreamId, DEFAULT_MTU};
use crate::unit::{encode_samples, Fifo, Sample, SAMPLE_WIRE_BYTES};

pub use adapter::{CrossbarHop, WindowFn, END_OF_STREAM_NOTE};
pub use endpoint::ChdrEndpoint;
pub use shared::{
    decode_pairs, encode_pairs, SharedUnit, SharedUnitStats, STATUS_MALFORMED, STATUS_OK,
    STATUS_OUT_OF_RANGE, STATUS_UNKNOWN_OFFSET,
};

/// Samples carried by one full data packet at the default MTU.
pub const SAMPLES_PER_PACKET: usize = DEFAULT_MTU / SAMPLE_WIRE_BYTES;
pub const DEFAULT_ENDPOINT_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrossbarError {
    #[error("route {0} already present")]
    DuplicateRoute(RouteKey),
    #[error("no route to {0}")]
    NoRoute(EndpointAddr),
    #[error("link to device {0} is down")]
    LinkDown(u8),
    #[error("endpoint {0} closed")]
    EndpointClosed(EndpointAddr),
    #[error("no free endpoint ids on device {0}")]
    EndpointsExhausted(u8),
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("timed out waiting for a response")]
    Timeout,
}

impl CrossbarError {
    pub fn code(&self) -> &'static str {
        match self {
            CrossbarError::DuplicateRoute(_) => "DuplicateRoute",
            CrossbarError::NoRoute(_) => "NoRoute",
            CrossbarError::LinkDown(_) => "LinkDown",
            CrossbarError::EndpointClosed(_) => "EndpointClosed",
            CrossbarError::EndpointsExhausted(_) => "EndpointsExhausted",
            CrossbarError::MalformedCommand(_) => "MalformedCommand",
            CrossbarError::Timeout => "Timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteKey {
    Endpoint(EndpointAddr),
    /// Every endpoint on a device; used for remote nodes.
    Device(u8),
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteKey::Endpoint(a) => write!(f, "{a}"),
            RouteKey::Device(d) => write!(f, "{d}/*"),
        }
    }
}

/// A packet the transport could not carry, handed back for drop accounting.
#[derive(Debug)]
pub struct Undelivered {
    pub device: u8,
    pub packet: ChdrPacket,
}

/// Outbound side of a connection to another node.
pub trait RemoteTransport: Send + Sync {
    fn peer_device(&self) -> u8;
    fn forward(&self, packet: ChdrPacket) -> Result<(), Undelivered>;
    fn label(&self) -> String;
}

#[derive(Clone)]
pub enum RouteTarget {
    Local(Fifo<ChdrPacket>),
    Remote(Arc<dyn RemoteTransport>),
}

impl fmt::Debug for RouteTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteTarget::Local(q) => write!(f, "Local({} queued)", q.len()),
            RouteTarget::Remote(t) => write!(f, "Remote({})", t.label()),
        }
    }
}

impl RouteTarget {
    fn label(&self) -> String {
        match self {
            RouteTarget::Local(_) => "local".into(),
            RouteTarget::Remote(t) => t.label(),
        }
    }
}

#[derive(Debug, Default)]
struct PortCounters {
    packets: AtomicU64,
    bytes: AtomicU64,
    drops: AtomicU64,
}

struct Route {
    target: RouteTarget,
    counters: Arc<PortCounters>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortStats {
    pub port: String,
    pub packets: u64,
    pub bytes: u64,
    pub drops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarStats {
    pub local_device: u8,
    pub packets_in: u64,
    pub delivered: u64,
    pub dropped_no_route: u64,
    pub dropped_link_down: u64,
    pub dropped_closed: u64,
    pub ports: Vec<PortStats>,
}

impl CrossbarStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_no_route + self.dropped_link_down + self.dropped_closed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub key: RouteKey,
    pub target: String,
}

struct Inner {
    local_device: u8,
    table: RwLock<HashMap<RouteKey, Arc<Route>>>,
    /// Port counters by route key; kept after a route is removed.
    ports: Mutex<BTreeMap<RouteKey, Arc<PortCounters>>>,
    packets_in: AtomicU64,
    delivered: AtomicU64,
    dropped_no_route: AtomicU64,
    dropped_link_down: AtomicU64,
    dropped_closed: AtomicU64,
    events: EventBus,
}

/// Cloneable handle to one device's switch.
#[derive(Clone)]
pub struct Crossbar {
    inner: Arc<Inner>,
}

impl fmt::Debug for Crossbar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Crossbar")
            .field("local_device", &self.inner.local_device)
            .field("routes", &self.read_table().len())
            .finish()
    }
}

impl Crossbar {
    pub fn new(local_device: u8) -> Self {
        Self::with_events(local_device, EventBus::new())
    }

    pub fn with_events(local_device: u8, events: EventBus) -> Self {
        Self {
            inner: Arc::new(Inner {
                local_device,
                table: RwLock::new(HashMap::new()),
                ports: Mutex::new(BTreeMap::new()),
                packets_in: AtomicU64::new(0),
                delivered: AtomicU64::new(0),
                dropped_no_route: AtomicU64::new(0),
                dropped_link_down: AtomicU64::new(0),
                dropped_closed: AtomicU64::new(0),
                events,
            }),
        }
    }

    pub fn local_device(&self) -> u8 {
        self.inner.local_device
    }

    pub fn events(&self) -> &EventBus {
        &self.inner.events
    }

    fn read_table(&self) -> std::sync::RwLockReadGuard<'_, HashMap<RouteKey, Arc<Route>>> {
        self.inner.table.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_table(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<RouteKey, Arc<Route>>> {
        self.inner.table.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn add_route(&self, key: RouteKey, target: RouteTarget) -> Result<(), CrossbarError> {
        let mut table = self.write_table();
        if table.contains_key(&key) {
            return Err(CrossbarError::DuplicateRoute(key));
        }
        let counters = Arc::clone(
            self.inner
                .ports
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .entry(key)
                .or_default(),
        );
        table.insert(key, Arc::new(Route { target, counters }));
        Ok(())
    }

    pub fn remove_route(&self, key: RouteKey) -> Option<RouteTarget> {
        self.write_table().remove(&key).map(|r| r.target.clone())
    }

    pub fn has_route(&self, key: RouteKey) -> bool {
        self.read_table().contains_key(&key)
    }

    pub fn routes(&self) -> Vec<RouteEntry> {
        let mut out: Vec<RouteEntry> = self
            .read_table()
            .iter()
            .map(|(k, r)| RouteEntry {
                key: *k,
                target: r.target.label(),
            })
            .collect();
        out.sort_by_key(|e| e.key);
        out
    }

    fn lookup(&self, dst: EndpointAddr) -> Option<Arc<Route>> {
        let table = self.read_table();
        table
            .get(&RouteKey::Endpoint(dst))
            .or_else(|| table.get(&RouteKey::Device(dst.device)))
            .cloned()
    }

    /// Delivers `packet` to the target matching its destination. Blocks while
    /// a local target queue is full. Unroutable packets are dropped and
    /// counted.
    pub fn route(&self, packet: ChdrPacket) -> Result<(), CrossbarError> {
        self.inner.packets_in.fetch_add(1, Ordering::Relaxed);
        let dst = packet.header.sid.dst();
        let Some(route) = self.lookup(dst) else {
            self.inner.dropped_no_route.fetch_add(1, Ordering::Relaxed);
            self.inner
                .events
                .publish(EventKind::NoRoute, format!("sid {:08x} dst {dst}", crate::framing::pack_sid(packet.header.sid)));
            return Err(CrossbarError::NoRoute(dst));
        };
        let bytes = packet.wire_len() as u64;
        let result = match &route.target {
            RouteTarget::Local(queue) => queue.push(packet).map_err(|_| {
                self.inner.dropped_closed.fetch_add(1, Ordering::Relaxed);
                CrossbarError::EndpointClosed(dst)
            }),
            RouteTarget::Remote(t) => t.forward(packet).map_err(|u| {
                self.inner.dropped_link_down.fetch_add(1, Ordering::Relaxed);
                self.inner.events.publish(
                    EventKind::LinkDown,
                    format!("dropped packet for device {}", u.device),
                );
                CrossbarError::LinkDown(u.device)
            }),
        };
        match &result {
            Ok(()) => {
                route.counters.packets.fetch_add(1, Ordering::Relaxed);
                route.counters.bytes.fetch_add(bytes, Ordering::Relaxed);
                self.inner.delivered.fetch_add(1, Ordering::Relaxed);
            }
            Err(_) => {
                route.counters.drops.fetch_add(1, Ordering::Relaxed);
            }
        }
        result
    }

    /// Registers a local endpoint. `None` picks the lowest free id above 0.
    pub fn attach_endpoint(
        &self,
        endpoint: Option<u8>,
        depth: usize,
    ) -> Result<ChdrEndpoint, CrossbarError> {
        let dev = self.inner.local_device;
        let queue = Fifo::new(depth.max(1)).expect("nonzero depth");
        let mut table = self.write_table();
        let id = match endpoint {
            Some(id) => id,
            None => (1..=255u8)
                .find(|&id| !table.contains_key(&RouteKey::Endpoint(EndpointAddr::new(dev, id))))
                .ok_or(CrossbarError::EndpointsExhausted(dev))?,
        };
        let addr = EndpointAddr::new(dev, id);
        let key = RouteKey::Endpoint(addr);
        if table.contains_key(&key) {
            return Err(CrossbarError::DuplicateRoute(key));
        }
        let counters = Arc::clone(
            self.inner
                .ports
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .entry(key)
                .or_default(),
        );
        table.insert(
            key,
            Arc::new(Route {
                target: RouteTarget::Local(queue.clone()),
                counters,
            }),
        );
        Ok(ChdrEndpoint::new(addr, queue, self.clone()))
    }

    pub fn stats(&self) -> CrossbarStats {
        let ports = self
            .inner
            .ports
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|(k, c)| PortStats {
                port: k.to_string(),
                packets: c.packets.load(Ordering::Relaxed),
                bytes: c.bytes.load(Ordering::Relaxed),
                drops: c.drops.load(Ordering::Relaxed),
            })
            .collect();
        CrossbarStats {
            local_device: self.inner.local_device,
            packets_in: self.inner.packets_in.load(Ordering::Relaxed),
            delivered: self.inner.delivered.load(Ordering::Relaxed),
            dropped_no_route: self.inner.dropped_no_route.load(Ordering::Relaxed),
            dropped_link_down: self.inner.dropped_link_down.load(Ordering::Relaxed),
            dropped_closed: self.inner.dropped_closed.load(Ordering::Relaxed),
            ports,
        }
    }
}

/// Splits a sample burst into data packets of at most [`SAMPLES_PER_PACKET`]
/// samples. The last packet carries end-of-burst; an empty burst becomes one
/// empty end-of-burst packet.
pub fn packetize_burst(sid: StreamId, seq: &mut SequenceCounter, burst: &[Sample]) -> Vec<ChdrPacket> {
    if burst.is_empty() {
        return vec![ChdrPacket::data(sid, seq.next(), true, Vec::new())];
    }
    let chunks: Vec<&[Sample]> = burst.chunks(SAMPLES_PER_PACKET).collect();
    let last = chunks.len() - 1;
    chunks
        .into_iter()
        .enumerate()
        .map(|(k, c)| ChdrPacket::data(sid, seq.next(), k == last, encode_samples(c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::PacketType;

    fn pkt(src: u8, dst: EndpointAddr, n: u8) -> ChdrPacket {
        ChdrPacket::data(
            StreamId::between(EndpointAddr::new(0, src), dst),
            n as u16,
            false,
            vec![n],
        )
    }

    #[test]
    fn local_delivery_and_duplicate() {
        let xb = Crossbar::new(0);
        let ep = xb.attach_endpoint(Some(5), 16).unwrap();
        assert!(matches!(
            xb.attach_endpoint(Some(5), 16),
            Err(CrossbarError::DuplicateRoute(_))
        ));
        xb.route(pkt(1, ep.addr(), 7)).unwrap();
        let got = ep.try_recv().unwrap();
        assert_eq!(got.payload, vec![7]);
        assert_eq!(got.header.packet_type, PacketType::Data);
    }

    #[test]
    fn no_route_is_counted_and_announced() {
        let xb = Crossbar::new(0);
        let events = xb.events().subscribe();
        let err = xb.route(pkt(1, EndpointAddr::new(0, 9), 0)).unwrap_err();
        assert_eq!(err, CrossbarError::NoRoute(EndpointAddr::new(0, 9)));
        let s = xb.stats();
        assert_eq!((s.packets_in, s.delivered, s.dropped_no_route), (1, 0, 1));
        assert_eq!(events.try_recv().unwrap().kind, EventKind::NoRoute);
    }

    #[test]
    fn endpoint_beats_device_wildcard() {
        struct Sink(Mutex<Vec<ChdrPacket>>);
        impl RemoteTransport for Sink {
            fn peer_device(&self) -> u8 {
                2
            }
            fn forward(&self, packet: ChdrPacket) -> Result<(), Undelivered> {
                self.0.lock().unwrap().push(packet);
                Ok(())
            }
            fn label(&self) -> String {
                "sink".into()
            }
        }
        let xb = Crossbar::new(0);
        let sink = Arc::new(Sink(Mutex::new(Vec::new())));
        xb.add_route(RouteKey::Device(2), RouteTarget::Remote(sink.clone()))
            .unwrap();
        let q = Fifo::new(4).unwrap();
        xb.add_route(
            RouteKey::Endpoint(EndpointAddr::new(2, 1)),
            RouteTarget::Local(q.clone()),
        )
        .unwrap();
        xb.route(pkt(1, EndpointAddr::new(2, 1), 1)).unwrap();
        xb.route(pkt(1, EndpointAddr::new(2, 3), 2)).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(sink.0.lock().unwrap().len(), 1);
    }

    #[test]
    fn packetizing_splits_at_mtu() {
        let sid = StreamId::new(0, 1, 0, 2);
        let mut seq = SequenceCounter::default();
        let burst = vec![Sample::new(0.5, -0.5); SAMPLES_PER_PACKET * 2 + 3];
        let pkts = packetize_burst(sid, &mut seq, &burst);
        assert_eq!(pkts.len(), 3);
        assert!(pkts.iter().all(|p| p.pack().is_ok()));
        assert_eq!(
            pkts.iter().map(|p| p.header.end_of_burst).collect::<Vec<_>>(),
            vec![false, false, true]
        );
        assert_eq!(pkts[2].header.sequence, 2);
        let empty = packetize_burst(sid, &mut seq, &[]);
        assert!(empty[0].header.end_of_burst && empty[0].payload.is_empty());
    }
}

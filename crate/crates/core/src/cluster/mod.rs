//! Links between crossbars on different nodes. Packets travel as VRT frames
//! with a length prefix over TCP; each link registers itself as the route
//! for the peer's device id.

mod wire;

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{Crossbar, RemoteTransport, RouteKey, RouteTarget, Undelivered};
use crate::events::EventKind;
use crate::framing::ChdrPacket;

pub use wire::{
    decode_frame, encode_frame, handshake, hello, parse_hello, FrameDecoder, HELLO_BYTES, MAGIC,
    MAX_FRAME_BYTES, VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("device {0} is already routed")]
    DuplicateDevice(u8),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("link to device {0} is down")]
    LinkDown(u8),
    #[error("framing: {0}")]
    Framing(String),
    #[error("io: {0}")]
    Io(String),
}

impl ClusterError {
    pub fn code(&self) -> &'static str {
        match self {
            ClusterError::ConnectionRefused(_) => "ConnectionRefused",
            ClusterError::DuplicateDevice(_) => "DuplicateDevice",
            ClusterError::Handshake(_) => "Handshake",
            ClusterError::LinkDown(_) => "LinkDown",
            ClusterError::Framing(_) => "Framing",
            ClusterError::Io(_) => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub local_device: u8,
    pub peer_device: u8,
    pub up: bool,
    pub tx_frames: u64,
    pub rx_frames: u64,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub rx_errors: u64,
}

struct LinkInner {
    local: u8,
    peer: u8,
    peer_addr: Option<SocketAddr>,
    writer: Mutex<TcpStream>,
    up: AtomicBool,
    count: AtomicU8,
    tx_frames: AtomicU64,
    rx_frames: AtomicU64,
    tx_bytes: AtomicU64,
    rx_bytes: AtomicU64,
    rx_errors: AtomicU64,
    crossbar: Crossbar,
}

impl LinkInner {
    fn mark_down(&self, why: &str) {
        if self.up.swap(false, Ordering::AcqRel) {
            let w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            let _ = w.shutdown(std::net::Shutdown::Both);
            self.crossbar
                .events()
                .publish(EventKind::LinkDown, format!("device {}: {why}", self.peer));
        }
    }
}

impl RemoteTransport for LinkInner {
    fn peer_device(&self) -> u8 {
        self.peer
    }

    fn forward(&self, packet: ChdrPacket) -> Result<(), Undelivered> {
        if !self.up.load(Ordering::Acquire) {
            return Err(Undelivered {
                device: self.peer,
                packet,
            });
        }
        let count = self.count.fetch_add(1, Ordering::Relaxed) % 16;
        let frame = match encode_frame(&packet, count) {
            Ok(f) => f,
            Err(_) => {
                return Err(Undelivered {
                    device: self.peer,
                    packet,
                })
            }
        };
        let res = {
            let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            w.write_all(&frame)
        };
        match res {
            Ok(()) => {
                self.tx_frames.fetch_add(1, Ordering::Relaxed);
                self.tx_bytes.fetch_add(frame.len() as u64, Ordering::Relaxed);
                Ok(())
            }
            Err(e) => {
                self.mark_down(&e.to_string());
                Err(Undelivered {
                    device: self.peer,
                    packet,
                })
            }
        }
    }

    fn label(&self) -> String {
        match self.peer_addr {
            Some(a) => format!("vrt/tcp {a} dev {}", self.peer),
            None => format!("vrt/tcp dev {}", self.peer),
        }
    }
}

/// An established link. Dropping the handle leaves the link running; call
/// [`NodeLink::close`] to take it down.
#[derive(Clone)]
pub struct NodeLink {
    inner: Arc<LinkInner>,
    reader: Arc<Mutex<Option<JoinHandle<()>>>>,
}

impl std::fmt::Debug for NodeLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeLink").field("stats", &self.stats()).finish()
    }
}

impl NodeLink {
    fn establish(mut stream: TcpStream, crossbar: &Crossbar) -> Result<Self, ClusterError> {
        let local = crossbar.local_device();
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .map_err(|e| ClusterError::Io(e.to_string()))?;
        let peer = handshake(&mut stream, local, |p| {
            p == local || crossbar.has_route(RouteKey::Device(p))
        })?;
        stream
            .set_read_timeout(None)
            .map_err(|e| ClusterError::Io(e.to_string()))?;
        let _ = stream.set_nodelay(true);
        let reader_stream = stream.try_clone().map_err(|e| ClusterError::Io(e.to_string()))?;
        let inner = Arc::new(LinkInner {
            local,
            peer,
            peer_addr: stream.peer_addr().ok(),
            writer: Mutex::new(stream),
            up: AtomicBool::new(true),
            count: AtomicU8::new(0),
            tx_frames: AtomicU64::new(0),
            rx_frames: AtomicU64::new(0),
            tx_bytes: AtomicU64::new(0),
            rx_bytes: AtomicU64::new(0),
            rx_errors: AtomicU64::new(0),
            crossbar: crossbar.clone(),
        });
        crossbar
            .add_route(RouteKey::Device(peer), RouteTarget::Remote(inner.clone()))
            .map_err(|_| ClusterError::DuplicateDevice(peer))?;
        crossbar
            .events()
            .publish(EventKind::LinkUp, format!("device {peer}"));
        let r = Arc::clone(&inner);
        let reader = std::thread::Builder::new()
            .name(format!("link-rx-{peer}"))
            .spawn(move || read_loop(r, reader_stream))
            .expect("spawn link reader");
        Ok(Self {
            inner,
            reader: Arc::new(Mutex::new(Some(reader))),
        })
    }

    pub fn local_device(&self) -> u8 {
        self.inner.local
    }

    pub fn peer_device(&self) -> u8 {
        self.inner.peer
    }

    pub fn is_up(&self) -> bool {
        self.inner.up.load(Ordering::Acquire)
    }

    /// Sends one packet straight over the link, bypassing route lookup.
    pub fn forward(&self, packet: ChdrPacket) -> Result<(), ClusterError> {
        self.inner
            .forward(packet)
            .map_err(|u| ClusterError::LinkDown(u.device))
    }

    pub fn stats(&self) -> LinkStats {
        let i = &self.inner;
        LinkStats {
            local_device: i.local,
            peer_device: i.peer,
            up: self.is_up(),
            tx_frames: i.tx_frames.load(Ordering::Relaxed),
            rx_frames: i.rx_frames.load(Ordering::Relaxed),
            tx_bytes: i.tx_bytes.load(Ordering::Relaxed),
            rx_bytes: i.rx_bytes.load(Ordering::Relaxed),
            rx_errors: i.rx_errors.load(Ordering::Relaxed),
        }
    }

    /// Takes the link down. The route stays so later packets count as
    /// link-down drops; [`NodeLink::unregister`] removes it.
    pub fn close(&self) {
        self.inner.mark_down("closed locally");
        if let Some(h) = self.reader.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = h.join();
        }
    }

    pub fn unregister(&self) {
        self.close();
        self.inner.crossbar.remove_route(RouteKey::Device(self.inner.peer));
    }
}

fn read_loop(link: Arc<LinkInner>, mut stream: TcpStream) {
    let mut dec = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match stream.read(&mut buf) {
            Ok(0) => {
                link.mark_down("peer closed");
                return;
            }
            Ok(n) => n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => {
                link.mark_down(&e.to_string());
                return;
            }
        };
        link.rx_bytes.fetch_add(n as u64, Ordering::Relaxed);
        dec.push(&buf[..n]);
        loop {
            match dec.next_frame() {
                Ok(Some(frame)) => {
                    link.rx_frames.fetch_add(1, Ordering::Relaxed);
                    match decode_frame(&frame) {
                        Ok(p) => {
                            // Drops are counted by the switch.
                            let _ = link.crossbar.route(p);
                        }
                        Err(_) => {
                            link.rx_errors.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    link.rx_errors.fetch_add(1, Ordering::Relaxed);
                    link.mark_down(&e.to_string());
                    return;
                }
            }
        }
    }
}

/// Dials `addr` and registers the peer on `crossbar`.
pub fn connect(addr: &str, crossbar: &Crossbar) -> Result<NodeLink, ClusterError> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| ClusterError::ConnectionRefused(format!("{addr}: {e}")))?
        .collect();
    let mut last = String::from("no address");
    for a in addrs {
        match TcpStream::connect_timeout(&a, Duration::from_secs(5)) {
            Ok(s) => return NodeLink::establish(s, crossbar),
            Err(e) => last = format!("{a}: {e}"),
        }
    }
    Err(ClusterError::ConnectionRefused(last))
}

/// Accepts node links on one address.
pub struct ClusterListener {
    listener: TcpListener,
    crossbar: Crossbar,
}

impl ClusterListener {
    pub fn bind(addr: &str, crossbar: &Crossbar) -> Result<Self, ClusterError> {
        let listener = TcpListener::bind(addr).map_err(|e| ClusterError::Io(format!("{addr}: {e}")))?;
        Ok(Self {
            listener,
            crossbar: crossbar.clone(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound socket")
    }

    /// Blocks for the next peer.
    pub fn accept(&self) -> Result<NodeLink, ClusterError> {
        let (s, _) = self.listener.accept().map_err(|e| ClusterError::Io(e.to_string()))?;
        NodeLink::establish(s, &self.crossbar)
    }

    /// Accepts peers on a background thread until the returned handle is
    /// stopped or dropped.
    pub fn serve(self) -> AcceptLoop {
        let links = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let addr = self.local_addr();
        let handle = {
            let links = Arc::clone(&links);
            let stop = Arc::clone(&stop);
            std::thread::Builder::new()
                .name("cluster-accept".into())
                .spawn(move || {
                    let _ = self.listener.set_nonblocking(true);
                    while !stop.load(Ordering::Acquire) {
                        match self.listener.accept() {
                            Ok((s, _)) => {
                                let _ = s.set_nonblocking(false);
                                if let Ok(link) = NodeLink::establish(s, &self.crossbar) {
                                    links.lock().unwrap_or_else(|e| e.into_inner()).push(link);
                                }
                            }
                            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                                std::thread::sleep(Duration::from_millis(10));
                            }
                            Err(_) => std::thread::sleep(Duration::from_millis(10)),
                        }
                    }
                })
                .expect("spawn accept loop")
        };
        AcceptLoop {
            addr,
            links,
            stop,
            handle: Some(handle),
        }
    }
}

pub struct AcceptLoop {
    addr: SocketAddr,
    links: Arc<Mutex<Vec<NodeLink>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl AcceptLoop {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn links(&self) -> Vec<NodeLink> {
        self.links.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for AcceptLoop {
    fn drop(&mut self) {
        self.stop();
    }
}

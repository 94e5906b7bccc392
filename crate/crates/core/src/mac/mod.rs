//! Medium access boundary: packets in and out of sample-level chains through
//! a pair of DMA-style rings, with completion notifications.
//!
//! Transmit: [`Mac::send_packet`] places the packet in the tx ring; a pump
//! frames it into bit blocks and feeds the chain. Once the chain has pulled
//! every bit of it, a `Sent` completion fires.
//!
//! Receive: a pump cuts the chain output into blocks and rebuilds packets.
//! Each packet fills the oldest buffer posted with [`Mac::receive_packet`]
//! and fires `Received`; with no buffer posted it waits in the rx ring, and
//! when that ring is full the oldest waiting packet is dropped.

mod framer;
mod hp;
mod ring;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unit::{bits_to_samples, samples_to_bits, Link};

pub use framer::{blocks_for, frame_packet, Deframed, Deframer, LENGTH_BITS, MAX_PACKET_BYTES};
pub use hp::{stream_demand_bps, HpBudget, HpPortCheck, HpVerdict, BYTES_PER_SAMPLE, HP_PORTS, HP_TOTAL_BPS};
pub use ring::{dma_ring, RingConsumer, RingProducer};

const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("tx ring full")]
    RingFull,
    #[error("packet of {size} bytes exceeds the {slot}-byte slot")]
    OversizePacket { size: usize, slot: usize },
    #[error("buffer of {capacity} bytes cannot hold {size}")]
    BufferTooSmall { capacity: usize, size: usize },
    #[error("HP budget {requested} B/s exceeds {total} B/s")]
    BudgetExceeded { requested: f64, total: f64 },
    #[error("invalid HP budget {0}")]
    InvalidBudget(String),
    #[error("MAC is closed")]
    Closed,
}

impl MacError {
    pub fn code(&self) -> &'static str {
        match self {
            MacError::RingFull => "RingFull",
            MacError::OversizePacket { .. } => "OversizePacket",
            MacError::BufferTooSmall { .. } => "BufferTooSmall",
            MacError::BudgetExceeded { .. } => "BudgetExceeded",
            MacError::InvalidBudget(_) => "InvalidBudget",
            MacError::Closed => "Closed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacConfig {
    pub tx_slots: usize,
    pub rx_slots: usize,
    pub slot_bytes: usize,
    /// Bits per framing block; the chain's first unit should consume whole
    /// blocks.
    pub block_bits: usize,
    /// Chain output carries one check-flag bit after every block.
    pub checked: bool,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            tx_slots: 64,
            rx_slots: 64,
            slot_bytes: 4096,
            block_bits: 1496,
            checked: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ticket(pub u64);

impl std::fmt::Display for Ticket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completion {
    /// sent_IRQ
    Sent { ticket: Ticket },
    /// received_IRQ. `buffer[..len]` holds the packet.
    Received {
        ticket: Ticket,
        len: usize,
        buffer: Vec<u8>,
        truncated: bool,
    },
}

impl Completion {
    pub fn ticket(&self) -> Ticket {
        match self {
            Completion::Sent { ticket } | Completion::Received { ticket, .. } => *ticket,
        }
    }

    pub fn payload(&self) -> Option<&[u8]> {
        match self {
            Completion::Received { len, buffer, .. } => Some(&buffer[..*len]),
            Completion::Sent { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacStats {
    pub sent: u64,
    pub sent_irqs: u64,
    pub tx_ring: u64,
    pub arrivals: u64,
    pub delivered: u64,
    pub received_irqs: u64,
    pub rx_ring: u64,
    pub dropped: u64,
    pub corrupt: u64,
    pub posted: u64,
    pub cancelled: u64,
}

pub type CompletionCallback = Box<dyn Fn(&Completion) + Send + Sync>;

#[derive(Default)]
struct Counters {
    sent: AtomicU64,
    sent_irqs: AtomicU64,
    arrivals: AtomicU64,
    delivered: AtomicU64,
    received_irqs: AtomicU64,
    dropped: AtomicU64,
    corrupt: AtomicU64,
    cancelled: AtomicU64,
}

struct PostedBuffer {
    ticket: Ticket,
    buffer: Vec<u8>,
    size: usize,
}

#[derive(Default)]
struct RxState {
    posted: VecDeque<PostedBuffer>,
    ring: VecDeque<Vec<u8>>,
}

enum Dispatch {
    TxPending { ticket: Ticket, mark: u64 },
    Ready(Completion),
}

struct Shared {
    config: MacConfig,
    counters: Counters,
    rx: Mutex<RxState>,
    stop: AtomicBool,
    finish_tx: AtomicBool,
    next_ticket: AtomicU64,
    callback: RwLock<Option<CompletionCallback>>,
    dispatch: Sender<Dispatch>,
    hp: Mutex<HpBudget>,
}

impl Shared {
    fn ticket(&self) -> Ticket {
        Ticket(self.next_ticket.fetch_add(1, Ordering::Relaxed) + 1)
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }
}

/// Packet interface of one tx chain and one rx chain.
pub struct Mac {
    shared: Arc<Shared>,
    producer: Mutex<RingProducer<(Ticket, Vec<u8>)>>,
    doorbell: Sender<()>,
    completions: Receiver<Completion>,
    threads: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for Mac {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mac").field("stats", &self.stats()).finish()
    }
}

impl Mac {
    /// `tx` is the transmit chain's input, `rx` the receive chain's output.
    pub fn attach(tx: Link, rx: Link, config: MacConfig) -> Self {
        assert!(config.block_bits > LENGTH_BITS, "block_bits must exceed the length field");
        assert!(config.slot_bytes <= MAX_PACKET_BYTES, "slot larger than the length field allows");
        let (producer, consumer) = dma_ring(config.tx_slots.max(1));
        let (dispatch_tx, dispatch_rx) = crossbeam_channel::unbounded();
        let (done_tx, completions) = crossbeam_channel::unbounded();
        let (doorbell, bell) = crossbeam_channel::bounded(1);
        let shared = Arc::new(Shared {
            config,
            counters: Counters::default(),
            rx: Mutex::new(RxState::default()),
            stop: AtomicBool::new(false),
            finish_tx: AtomicBool::new(false),
            next_ticket: AtomicU64::new(0),
            callback: RwLock::new(None),
            dispatch: dispatch_tx,
            hp: Mutex::new(HpBudget::default()),
        });
        let spawn = |name: &str, f: Box<dyn FnOnce() + Send>| {
            std::thread::Builder::new()
                .name(name.into())
                .spawn(f)
                .expect("spawn MAC thread")
        };
        let threads = vec![
            {
                let s = Arc::clone(&shared);
                let tx = tx.clone();
                spawn("mac-tx", Box::new(move || tx_pump(s, consumer, bell, tx)))
            },
            {
                let s = Arc::clone(&shared);
                spawn("mac-rx", Box::new(move || rx_pump(s, rx)))
            },
            {
                let s = Arc::clone(&shared);
                spawn("mac-irq", Box::new(move || dispatcher(s, dispatch_rx, done_tx, tx)))
            },
        ];
        Self {
            shared,
            producer: Mutex::new(producer),
            doorbell,
            completions,
            threads,
        }
    }

    pub fn config(&self) -> MacConfig {
        self.shared.config
    }

    /// Queues `buffer[..packet_size]` for transmission.
    pub fn send_packet(&self, buffer: &[u8], packet_size: usize) -> Result<Ticket, MacError> {
        if self.shared.stopped() || self.shared.finish_tx.load(Ordering::Acquire) {
            return Err(MacError::Closed);
        }
        let slot = self.shared.config.slot_bytes;
        if packet_size > slot {
            return Err(MacError::OversizePacket { size: packet_size, slot });
        }
        if packet_size > buffer.len() {
            return Err(MacError::BufferTooSmall {
                capacity: buffer.len(),
                size: packet_size,
            });
        }
        let mut p = self.producer.lock().unwrap_or_else(|e| e.into_inner());
        if p.is_full() {
            return Err(MacError::RingFull);
        }
        let ticket = self.shared.ticket();
        p.push((ticket, buffer[..packet_size].to_vec()))
            .map_err(|_| MacError::RingFull)?;
        drop(p);
        self.shared.counters.sent.fetch_add(1, Ordering::Relaxed);
        let _ = self.doorbell.try_send(());
        Ok(ticket)
    }

    /// Posts `buffer` for the next packet of up to `packet_size` bytes.
    pub fn receive_packet(&self, buffer: Vec<u8>, packet_size: usize) -> Result<Ticket, MacError> {
        if self.shared.stopped() {
            return Err(MacError::Closed);
        }
        if buffer.len() < packet_size {
            return Err(MacError::BufferTooSmall {
                capacity: buffer.len(),
                size: packet_size,
            });
        }
        let ticket = self.shared.ticket();
        let mut rx = self.shared.rx.lock().unwrap_or_else(|e| e.into_inner());
        let posted = PostedBuffer {
            ticket,
            buffer,
            size: packet_size,
        };
        match rx.ring.pop_front() {
            Some(packet) => {
                drop(rx);
                deliver(&self.shared, posted, packet);
            }
            None => rx.posted.push_back(posted),
        }
        Ok(ticket)
    }

    /// Completions go to `cb` (on the MAC's notification thread) instead of
    /// the poll queue.
    pub fn set_callback(&self, cb: CompletionCallback) {
        *self.shared.callback.write().unwrap_or_else(|e| e.into_inner()) = Some(cb);
    }

    pub fn poll_completion(&self, timeout: Duration) -> Option<Completion> {
        self.completions.recv_timeout(timeout).ok()
    }

    pub fn try_completion(&self) -> Option<Completion> {
        self.completions.try_recv().ok()
    }

    /// Closes the chain input once every queued packet went out.
    pub fn finish_tx(&self) {
        self.shared.finish_tx.store(true, Ordering::Release);
        let _ = self.doorbell.try_send(());
    }

    pub fn set_hp_budget(&self, per_port_bps: [f64; HP_PORTS]) -> Result<(), MacError> {
        self.shared.hp.lock().unwrap_or_else(|e| e.into_inner()).set_hp_budget(per_port_bps)
    }

    pub fn check_hp(&self, demand_bps: [f64; HP_PORTS]) -> HpVerdict {
        self.shared.hp.lock().unwrap_or_else(|e| e.into_inner()).check_hp(demand_bps)
    }

    pub fn hp_budget(&self) -> HpBudget {
        *self.shared.hp.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn stats(&self) -> MacStats {
        let c = &self.shared.counters;
        let rx = self.shared.rx.lock().unwrap_or_else(|e| e.into_inner());
        let tx_ring = self.producer.lock().unwrap_or_else(|e| e.into_inner()).len() as u64;
        MacStats {
            sent: c.sent.load(Ordering::Relaxed),
            sent_irqs: c.sent_irqs.load(Ordering::Relaxed),
            tx_ring,
            arrivals: c.arrivals.load(Ordering::Relaxed),
            delivered: c.delivered.load(Ordering::Relaxed),
            received_irqs: c.received_irqs.load(Ordering::Relaxed),
            rx_ring: rx.ring.len() as u64,
            dropped: c.dropped.load(Ordering::Relaxed),
            corrupt: c.corrupt.load(Ordering::Relaxed),
            posted: rx.posted.len() as u64,
            cancelled: c.cancelled.load(Ordering::Relaxed),
        }
    }

    /// Stops the pumps. Outstanding tickets are cancelled and never complete.
    pub fn close(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        for h in self.threads.drain(..) {
            let _ = h.join();
        }
        let mut rx = self.shared.rx.lock().unwrap_or_else(|e| e.into_inner());
        let n = rx.posted.len() as u64;
        rx.posted.clear();
        self.shared.counters.cancelled.fetch_add(n, Ordering::Relaxed);
    }
}

impl Drop for Mac {
    fn drop(&mut self) {
        self.close();
    }
}

fn emit(shared: &Shared, done: &Sender<Completion>, c: Completion) {
    if shared.stopped() {
        shared.counters.cancelled.fetch_add(1, Ordering::Relaxed);
        return;
    }
    match &c {
        Completion::Sent { .. } => shared.counters.sent_irqs.fetch_add(1, Ordering::Relaxed),
        Completion::Received { .. } => shared.counters.received_irqs.fetch_add(1, Ordering::Relaxed),
    };
    let cb = shared.callback.read().unwrap_or_else(|e| e.into_inner());
    match cb.as_ref() {
        Some(f) => f(&c),
        None => {
            let _ = done.send(c);
        }
    }
}

fn deliver(shared: &Shared, mut posted: PostedBuffer, packet: Vec<u8>) {
    let len = packet.len().min(posted.size);
    posted.buffer[..len].copy_from_slice(&packet[..len]);
    shared.counters.delivered.fetch_add(1, Ordering::Relaxed);
    let _ = shared.dispatch.send(Dispatch::Ready(Completion::Received {
        ticket: posted.ticket,
        len,
        buffer: posted.buffer,
        truncated: len < packet.len(),
    }));
}

fn tx_pump(shared: Arc<Shared>, mut ring: RingConsumer<(Ticket, Vec<u8>)>, bell: Receiver<()>, tx: Link) {
    let block = shared.config.block_bits;
    let chunk = block.min(tx.capacity());
    'outer: while !shared.stopped() {
        let Some((ticket, packet)) = ring.pop() else {
            if shared.finish_tx.load(Ordering::Acquire) {
                tx.close();
                break;
            }
            let _ = bell.recv_timeout(POLL);
            continue;
        };
        let samples = bits_to_samples(&frame_packet(&packet, block));
        for piece in samples.chunks(chunk) {
            loop {
                if shared.stopped() {
                    break 'outer;
                }
                match tx.try_push_slice(piece) {
                    Ok(true) => break,
                    Ok(false) => {
                        tx.wait_writable(piece.len(), POLL);
                    }
                    Err(_) => {
                        shared.counters.cancelled.fetch_add(1, Ordering::Relaxed);
                        continue 'outer;
                    }
                }
            }
        }
        let mark = tx.counters().0;
        let _ = shared.dispatch.send(Dispatch::TxPending { ticket, mark });
    }
}

fn rx_pump(shared: Arc<Shared>, rx: Link) {
    let mut deframer = Deframer::new(shared.config.block_bits, shared.config.checked);
    let stride = deframer.stride();
    let mut buf = Vec::with_capacity(stride);
    while !shared.stopped() {
        buf.clear();
        if !rx.try_pop_exact(stride, &mut buf) {
            if !rx.wait_readable(stride, POLL) && rx.is_closed() && rx.len() < stride {
                break;
            }
            continue;
        }
        let bits = samples_to_bits(&buf);
        match deframer.push_block(&bits) {
            None => {}
            Some(Deframed::Corrupt { .. }) => {
                shared.counters.corrupt.fetch_add(1, Ordering::Relaxed);
            }
            Some(Deframed::Packet(p)) => {
                shared.counters.arrivals.fetch_add(1, Ordering::Relaxed);
                let mut st = shared.rx.lock().unwrap_or_else(|e| e.into_inner());
                match st.posted.pop_front() {
                    Some(posted) => {
                        drop(st);
                        deliver(&shared, posted, p);
                    }
                    None => {
                        st.ring.push_back(p);
                        if st.ring.len() > shared.config.rx_slots {
                            st.ring.pop_front();
                            shared.counters.dropped.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
        }
    }
}

fn dispatcher(shared: Arc<Shared>, inbox: Receiver<Dispatch>, done: Sender<Completion>, tx: Link) {
    let mut pending: VecDeque<(Ticket, u64)> = VecDeque::new();
    loop {
        match inbox.recv_timeout(POLL) {
            Ok(Dispatch::TxPending { ticket, mark }) => pending.push_back((ticket, mark)),
            Ok(Dispatch::Ready(c)) => emit(&shared, &done, c),
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {}
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => break,
        }
        if !pending.is_empty() {
            let popped = tx.counters().1;
            while pending.front().is_some_and(|&(_, mark)| popped >= mark) {
                let (ticket, _) = pending.pop_front().expect("front checked");
                emit(&shared, &done, Completion::Sent { ticket });
            }
        }
        if shared.stopped() {
            shared.counters.cancelled.fetch_add(pending.len() as u64, Ordering::Relaxed);
            break;
        }
    }
}

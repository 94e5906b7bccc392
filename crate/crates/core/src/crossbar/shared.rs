//! Crossbar wrapper that time-multiplexes one unit among several flows, one
//! end-of-burst-delimited burst at a time.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::events::EventKind;
use crate::framing::{ChdrPacket, EndpointAddr, PacketType, SequenceCounter, StreamId};
use crate::unit::{decode_samples, RegisterFile, Sample, UnitError, UnitInstance};

use super::{packetize_burst, ChdrEndpoint, Crossbar, CrossbarError};

pub const STATUS_OK: u32 = 0;
pub const STATUS_UNKNOWN_OFFSET: u32 = 1;
pub const STATUS_OUT_OF_RANGE: u32 = 2;
pub const STATUS_MALFORMED: u32 = 3;

const IDLE_POLL: Duration = Duration::from_millis(20);

/// Big-endian (u32, u32) pairs, the command and response payload format.
pub fn encode_pairs(pairs: &[(u32, u32)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(pairs.len() * 8);
    for (a, b) in pairs {
        out.extend_from_slice(&a.to_be_bytes());
        out.extend_from_slice(&b.to_be_bytes());
    }
    out
}

pub fn decode_pairs(bytes: &[u8]) -> Option<Vec<(u32, u32)>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| {
                (
                    u32::from_be_bytes(c[..4].try_into().unwrap()),
                    u32::from_be_bytes(c[4..].try_into().unwrap()),
                )
            })
            .collect(),
    )
}

fn status_of(result: Result<(), UnitError>) -> u32 {
    match result {
        Ok(()) => STATUS_OK,
        Err(UnitError::UnknownOffset(_)) => STATUS_UNKNOWN_OFFSET,
        Err(_) => STATUS_OUT_OF_RANGE,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedUnitStats {
    pub bursts: u64,
    pub commands: u64,
    pub errors: u64,
}

#[derive(Default)]
struct Counters {
    bursts: AtomicU64,
    commands: AtomicU64,
    errors: AtomicU64,
}

/// A unit behind a crossbar endpoint. Data bursts are processed whole and
/// sent back to the sender (SID halves swapped) unless the return map says
/// otherwise. Command packets write registers and are answered with a
/// Response listing (offset, status) per pair.
pub struct SharedUnit {
    endpoint: ChdrEndpoint,
    registers: Arc<RegisterFile>,
    return_map: Arc<Mutex<HashMap<StreamId, StreamId>>>,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for SharedUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedUnit")
            .field("addr", &self.endpoint.addr())
            .field("kind", &self.registers.kind())
            .finish()
    }
}

impl SharedUnit {
    pub fn spawn(
        crossbar: &Crossbar,
        endpoint: Option<u8>,
        unit: UnitInstance,
        depth: usize,
    ) -> Result<Self, CrossbarError> {
        let ep = crossbar.attach_endpoint(endpoint, depth)?;
        let registers = unit.registers();
        let return_map = Arc::new(Mutex::new(HashMap::new()));
        let counters = Arc::new(Counters::default());
        let stop = Arc::new(AtomicBool::new(false));
        let worker = Worker {
            ep: ep.clone(),
            unit,
            return_map: Arc::clone(&return_map),
            counters: Arc::clone(&counters),
            stop: Arc::clone(&stop),
            partial: HashMap::new(),
            seq: HashMap::new(),
        };
        let handle = std::thread::Builder::new()
            .name(format!("shared-{}", ep.addr()))
            .spawn(move || worker.run())
            .expect("spawn shared unit thread");
        Ok(Self {
            endpoint: ep,
            registers,
            return_map,
            counters,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> EndpointAddr {
        self.endpoint.addr()
    }

    pub fn registers(&self) -> Arc<RegisterFile> {
        Arc::clone(&self.registers)
    }

    /// Output for bursts arriving on `from` goes to `to` instead of the
    /// swapped SID.
    pub fn set_return(&self, from: StreamId, to: StreamId) {
        self.return_map
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(from, to);
    }

    pub fn stats(&self) -> SharedUnitStats {
        SharedUnitStats {
            bursts: self.counters.bursts.load(Ordering::Relaxed),
            commands: self.counters.commands.load(Ordering::Relaxed),
            errors: self.counters.errors.load(Ordering::Relaxed),
        }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.endpoint.detach();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SharedUnit {
    fn drop(&mut self) {
        self.stop();
    }
}

struct Worker {
    ep: ChdrEndpoint,
    unit: UnitInstance,
    return_map: Arc<Mutex<HashMap<StreamId, StreamId>>>,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    partial: HashMap<StreamId, Vec<Sample>>,
    seq: HashMap<StreamId, SequenceCounter>,
}

impl Worker {
    fn run(mut self) {
        loop {
            match self.ep.recv_timeout(IDLE_POLL) {
                Ok(Some(p)) => self.handle(p),
                Ok(None) => {
                    if self.stop.load(Ordering::Acquire) {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    }

    fn reply_sid(&self, sid: StreamId) -> StreamId {
        self.return_map
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&sid)
            .copied()
            .unwrap_or_else(|| sid.swapped())
    }

    fn respond(&mut self, to: StreamId, pairs: &[(u32, u32)]) {
        let seq = self.seq.entry(to).or_default().next();
        let p = ChdrPacket::new(PacketType::Response, to, seq, true, None, encode_pairs(pairs));
        let _ = self.ep.send(p);
    }

    fn fail(&mut self, sid: StreamId, detail: String) {
        self.counters.errors.fetch_add(1, Ordering::Relaxed);
        self.ep
            .crossbar()
            .events()
            .publish(EventKind::SharedUnitError, format!("{}: {detail}", self.ep.addr()));
        self.respond(sid.swapped(), &[(0, STATUS_MALFORMED)]);
    }

    fn handle(&mut self, p: ChdrPacket) {
        let sid = p.header.sid;
        match p.header.packet_type {
            PacketType::Data => {
                let Some(samples) = decode_samples(&p.payload) else {
                    self.partial.remove(&sid);
                    self.fail(sid, format!("payload of {} bytes is not whole samples", p.payload.len()));
                    return;
                };
                let buf = self.partial.entry(sid).or_default();
                buf.extend_from_slice(&samples);
                if !p.header.end_of_burst {
                    return;
                }
                let burst = self.partial.remove(&sid).unwrap_or_default();
                let out = if burst.is_empty() {
                    // Empty bursts are passed through untouched.
                    Vec::new()
                } else {
                    match self.unit.process_burst(&burst) {
                        Ok(out) => out,
                        Err(e) => {
                            self.fail(sid, e.to_string());
                            return;
                        }
                    }
                };
                self.counters.bursts.fetch_add(1, Ordering::Relaxed);
                let to = self.reply_sid(sid);
                let seq = self.seq.entry(to).or_default();
                for pkt in packetize_burst(to, seq, &out) {
                    if self.ep.send(pkt).is_err() {
                        break;
                    }
                }
            }
            PacketType::Command => {
                self.counters.commands.fetch_add(1, Ordering::Relaxed);
                let Some(pairs) = decode_pairs(&p.payload) else {
                    self.fail(sid, "command payload is not (offset, value) pairs".into());
                    return;
                };
                let regs = self.unit.registers();
                let statuses: Vec<(u32, u32)> = pairs
                    .iter()
                    .map(|&(off, v)| (off, status_of(regs.write_reg(off, v))))
                    .collect();
                self.respond(sid.swapped(), &statuses);
            }
            PacketType::FlowControl | PacketType::Response => {}
        }
    }
}

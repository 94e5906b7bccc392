//! Bridges between sample links and the crossbar.
//!
//! A hop owns one endpoint. Its egress thread cuts the input link into
//! bursts and sends them to the target endpoint; its ingress thread turns
//! whatever arrives on the endpoint back into samples on the output link. With
//! the target set to a wrapped unit the reply comes back to the same
//! endpoint; with no target the hop addresses itself.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use crate::framing::{ChdrPacket, EndpointAddr, PacketType, SequenceCounter, StreamId};
use crate::unit::{decode_samples, Link};

use super::{decode_pairs, encode_pairs, packetize_burst, ChdrEndpoint, Crossbar, CrossbarError};

/// Burst size source, read before every burst.
pub type WindowFn = Arc<dyn Fn() -> usize + Send + Sync>;

pub const END_OF_STREAM_NOTE: &str =
    "an empty end-of-burst data packet outside a burst marks end of stream";

const POLL: Duration = Duration::from_millis(20);

pub struct CrossbarHop {
    endpoint: ChdrEndpoint,
    target: EndpointAddr,
    input: Link,
    output: Link,
    seq: Arc<Mutex<SequenceCounter>>,
    responses: Receiver<ChdrPacket>,
    stop: Arc<AtomicBool>,
    ingress_done: Arc<AtomicBool>,
    egress: Option<JoinHandle<()>>,
    ingress: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for CrossbarHop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrossbarHop")
            .field("endpoint", &self.endpoint.addr())
            .field("target", &self.target)
            .finish()
    }
}

impl CrossbarHop {
    pub fn spawn(
        crossbar: &Crossbar,
        input: Link,
        output: Link,
        target: Option<EndpointAddr>,
        window: WindowFn,
        depth: usize,
    ) -> Result<Self, CrossbarError> {
        let endpoint = crossbar.attach_endpoint(None, depth)?;
        let target = target.unwrap_or(endpoint.addr());
        let sid = StreamId::between(endpoint.addr(), target);
        let seq = Arc::new(Mutex::new(SequenceCounter::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let ingress_done = Arc::new(AtomicBool::new(false));
        let (resp_tx, responses) = crossbeam_channel::bounded(64);

        let egress = {
            let xb = crossbar.clone();
            let input = input.clone();
            let seq = Arc::clone(&seq);
            std::thread::Builder::new()
                .name(format!("hop-out-{}", endpoint.addr()))
                .spawn(move || egress_loop(xb, input, sid, seq, window))
                .expect("spawn egress")
        };
        let ingress = {
            let ep = endpoint.clone();
            let output = output.clone();
            let stop = Arc::clone(&stop);
            let done = Arc::clone(&ingress_done);
            std::thread::Builder::new()
                .name(format!("hop-in-{}", endpoint.addr()))
                .spawn(move || {
                    ingress_loop(ep, output, resp_tx, stop);
                    done.store(true, Ordering::Release);
                })
                .expect("spawn ingress")
        };
        Ok(Self {
            endpoint,
            target,
            input,
            output,
            seq,
            responses,
            stop,
            ingress_done,
            egress: Some(egress),
            ingress: Some(ingress),
        })
    }

    pub fn addr(&self) -> EndpointAddr {
        self.endpoint.addr()
    }

    pub fn target(&self) -> EndpointAddr {
        self.target
    }

    pub fn sid(&self) -> StreamId {
        StreamId::between(self.addr(), self.target)
    }

    /// True once end of stream came back and the output link was closed.
    pub fn is_finished(&self) -> bool {
        self.ingress_done.load(Ordering::Acquire)
    }

    /// Sends register writes to the target and waits for its response.
    pub fn command(
        &self,
        pairs: &[(u32, u32)],
        timeout: Duration,
    ) -> Result<Vec<(u32, u32)>, CrossbarError> {
        while self.responses.try_recv().is_ok() {}
        let seq = self.seq.lock().unwrap_or_else(|e| e.into_inner()).next();
        let p = ChdrPacket::new(PacketType::Command, self.sid(), seq, true, None, encode_pairs(pairs));
        self.endpoint.send(p)?;
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let resp = self
                .responses
                .recv_timeout(left)
                .map_err(|_| CrossbarError::Timeout)?;
            let decoded = decode_pairs(&resp.payload)
                .ok_or_else(|| CrossbarError::MalformedCommand("response payload".into()))?;
            // Error responses to data bursts carry offset 0; skip those unless
            // they answer this command.
            if decoded.len() == pairs.len() {
                return Ok(decoded);
            }
        }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.input.close();
        self.output.close();
        self.endpoint.detach();
        for h in [self.egress.take(), self.ingress.take()].into_iter().flatten() {
            let _ = h.join();
        }
    }
}

impl Drop for CrossbarHop {
    fn drop(&mut self) {
        self.stop();
    }
}

fn egress_loop(
    xb: Crossbar,
    input: Link,
    sid: StreamId,
    seq: Arc<Mutex<SequenceCounter>>,
    window: WindowFn,
) {
    let mut buf = Vec::new();
    loop {
        let w = window().max(1);
        buf.clear();
        if !input.pop_exact(w, &mut buf) {
            break;
        }
        let packets = {
            let mut s = seq.lock().unwrap_or_else(|e| e.into_inner());
            packetize_burst(sid, &mut s, &buf)
        };
        for p in packets {
            // Failures are counted by the switch.
            let _ = xb.route(p);
        }
    }
    let s = seq.lock().unwrap_or_else(|e| e.into_inner()).next();
    let _ = xb.route(ChdrPacket::data(sid, s, true, Vec::new()));
}

fn ingress_loop(ep: ChdrEndpoint, output: Link, responses: Sender<ChdrPacket>, stop: Arc<AtomicBool>) {
    let mut mid_burst = false;
    loop {
        let p = match ep.recv_timeout(POLL) {
            Ok(Some(p)) => p,
            Ok(None) if stop.load(Ordering::Acquire) => break,
            Ok(None) => continue,
            Err(_) => break,
        };
        match p.header.packet_type {
            PacketType::Data => {
                if p.payload.is_empty() && p.header.end_of_burst && !mid_burst {
                    break;
                }
                mid_burst = !p.header.end_of_burst;
                let Some(samples) = decode_samples(&p.payload) else {
                    continue;
                };
                if output.push_slice(&samples).is_err() {
                    break;
                }
            }
            PacketType::Response => {
                let _ = responses.try_send(p);
            }
            _ => {}
        }
    }
    output.close();
}

use std::time::Duration;

use crate::framing::{ChdrPacket, EndpointAddr};
use crate::unit::fifo::Pop;
use crate::unit::Fifo;

use super::{Crossbar, CrossbarError, RouteKey};

/// A crossbar port on the local device. Packets addressed to it land in the
/// bounded ingress queue; `send` goes through the switch.
#[derive(Debug, Clone)]
pub struct ChdrEndpoint {
    addr: EndpointAddr,
    ingress: Fifo<ChdrPacket>,
    crossbar: Crossbar,
}

impl ChdrEndpoint {
    pub(super) fn new(addr: EndpointAddr, ingress: Fifo<ChdrPacket>, crossbar: Crossbar) -> Self {
        Self {
            addr,
            ingress,
            crossbar,
        }
    }

    pub fn addr(&self) -> EndpointAddr {
        self.addr
    }

    pub fn crossbar(&self) -> &Crossbar {
        &self.crossbar
    }

    pub fn send(&self, packet: ChdrPacket) -> Result<(), CrossbarError> {
        self.crossbar.route(packet)
    }

    pub fn try_recv(&self) -> Option<ChdrPacket> {
        self.ingress.try_pop()
    }

    pub fn recv(&self) -> Option<ChdrPacket> {
        self.ingress.pop()
    }

    /// `Ok(None)` on timeout, `Err` once detached and drained.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<ChdrPacket>, CrossbarError> {
        match self.ingress.pop_timeout(timeout) {
            Pop::Item(p) => Ok(Some(p)),
            Pop::Timeout => Ok(None),
            Pop::Closed => Err(CrossbarError::EndpointClosed(self.addr)),
        }
    }

    pub fn queued(&self) -> usize {
        self.ingress.len()
    }

    /// Removes the route and closes the ingress queue. Later packets to this
    /// address count as NoRoute.
    pub fn detach(&self) {
        let key = RouteKey::Endpoint(self.addr);
        if let Some(super::RouteTarget::Local(q)) = self.crossbar.remove_route(key) {
            if !q.same_as(&self.ingress) {
                // Someone re-used the address; put their route back.
                let _ = self
                    .crossbar
                    .add_route(key, super::RouteTarget::Local(q));
            }
        }
        self.ingress.close();
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Link, UnitError, UnitId, UnitInstance};

pub const DEFAULT_LINK_CAPACITY: usize = 1024;

/// Smallest link that cannot wedge a writer stepping `produce` items against a
/// reader stepping `consume`. Below it the link can sit with fewer than
/// `consume` items buffered and less than `produce` free.
pub fn min_link_capacity(produce: usize, consume: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    if produce == 0 || consume == 0 {
        return produce.max(consume);
    }
    produce + consume - gcd(produce, consume)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRef {
    pub unit: UnitId,
    pub port: usize,
}

impl PortRef {
    pub fn new(unit: UnitId, port: usize) -> Self {
        Self { unit, port }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Direct,
    #[serde(alias = "via_crossbar")]
    Crossbar,
}

#[derive(Debug, Clone)]
pub struct StreamLink {
    pub src: PortRef,
    pub dst: PortRef,
    pub capacity: usize,
    pub kind: LinkKind,
    pub fifo: Link,
}

/// Port bookkeeping for a set of units: enforces arity and the
/// one-incoming-link-per-input rule.
#[derive(Debug, Default)]
pub struct Wiring {
    arity: BTreeMap<UnitId, (usize, usize)>,
    links: Vec<StreamLink>,
}

impl Wiring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_unit(&mut self, unit: &UnitInstance) {
        let d = unit.descriptor();
        self.arity.insert(unit.id(), (d.n_inputs, d.n_outputs));
    }

    pub fn connect(
        &mut self,
        src: PortRef,
        dst: PortRef,
        capacity: usize,
        kind: LinkKind,
    ) -> Result<StreamLink, UnitError> {
        let (_, src_outs) = self.arity.get(&src.unit).ok_or(UnitError::NoSuchPort)?;
        let (dst_ins, _) = self.arity.get(&dst.unit).ok_or(UnitError::NoSuchPort)?;
        if src.port >= *src_outs || dst.port >= *dst_ins {
            return Err(UnitError::NoSuchPort);
        }
        if self.links.iter().any(|l| l.dst == dst) {
            return Err(UnitError::PortOccupied);
        }
        if self.links.iter().any(|l| l.src == src) {
            return Err(UnitError::PortOccupied);
        }
        let fifo = Link::new(capacity).map_err(|_| UnitError::ZeroCapacity)?;
        let link = StreamLink {
            src,
            dst,
            capacity,
            kind,
            fifo,
        };
        self.links.push(link.clone());
        Ok(link)
    }

    pub fn links(&self) -> &[StreamLink] {
        &self.links
    }

    pub fn input(&self, port: PortRef) -> Option<Link> {
        self.links
            .iter()
            .find(|l| l.dst == port)
            .map(|l| l.fifo.clone())
    }

    pub fn output(&self, port: PortRef) -> Option<Link> {
        self.links
            .iter()
            .find(|l| l.src == port)
            .map(|l| l.fifo.clone())
    }

    /// Items currently buffered across all links.
    pub fn in_flight(&self) -> usize {
        self.links.iter().map(|l| l.fifo.len()).sum()
    }

    pub fn total_capacity(&self) -> usize {
        self.links.iter().map(|l| l.capacity).sum()
    }
}

//! Turns a validated graph into running threads: one runner per local unit,
//! crossbar hops for crossbar links and wrapped units.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use crate::crossbar::{Crossbar, CrossbarHop, DEFAULT_ENDPOINT_DEPTH};
use crate::framing::EndpointAddr;
use crate::unit::{Catalog, Link, LinkKind, RegisterFile, Sample, UnitRunner};

use super::{ChainError, ChainGraph, PortName};

/// The chain's boundary: unlinked input ports to feed and unlinked output
/// ports to read.
#[derive(Debug, Clone)]
pub struct ChainIo {
    pub inputs: Vec<(PortName, Link)>,
    pub outputs: Vec<(PortName, Link)>,
}

impl ChainIo {
    pub fn input(&self, n: usize) -> Option<Link> {
        self.inputs.get(n).map(|(_, l)| l.clone())
    }

    pub fn output(&self, n: usize) -> Option<Link> {
        self.outputs.get(n).map(|(_, l)| l.clone())
    }

    pub fn close_inputs(&self) {
        for (_, l) in &self.inputs {
            l.close();
        }
    }

    /// Reads `n` samples from output `port`, or fewer if the stream ends or
    /// `timeout` passes.
    pub fn read(&self, port: usize, n: usize, timeout: Duration) -> Vec<Sample> {
        let Some(link) = self.output(port) else {
            return Vec::new();
        };
        let deadline = Instant::now() + timeout;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            let got = link.pop_up_to(n - out.len(), &mut out, left.min(Duration::from_millis(50)));
            if got == 0 && link.is_finished() {
                break;
            }
        }
        out
    }

    /// Everything left on output `port` until the stream ends.
    pub fn read_to_end(&self, port: usize, timeout: Duration) -> Vec<Sample> {
        self.read(port, usize::MAX, timeout)
    }
}

/// How a wrapped unit is reached.
pub(crate) struct WrappedTarget {
    pub addr: EndpointAddr,
    pub registers: Arc<RegisterFile>,
}

/// Current register file of a unit; replaced when a PRR occupant is swapped.
#[derive(Clone)]
pub(crate) struct RegSlot(Arc<RwLock<Arc<RegisterFile>>>);

impl RegSlot {
    pub fn new(r: Arc<RegisterFile>) -> Self {
        Self(Arc::new(RwLock::new(r)))
    }

    pub fn get(&self) -> Arc<RegisterFile> {
        Arc::clone(&self.0.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn set(&self, r: Arc<RegisterFile>) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = r;
    }
}

pub(crate) struct ChainRuntime {
    pub io: ChainIo,
    pub runners: BTreeMap<String, UnitRunner>,
    pub registers: BTreeMap<String, RegSlot>,
    /// Input and output links of every unit.
    pub ports: BTreeMap<String, (Vec<Link>, Vec<Link>)>,
    /// Hops in front of wrapped units, by unit name.
    pub unit_hops: BTreeMap<String, CrossbarHop>,
    /// Self-addressed hops carrying crossbar links between local units.
    pub link_hops: Vec<CrossbarHop>,
    pub input_links: Vec<Link>,
}

impl ChainRuntime {
    pub fn build(
        graph: &ChainGraph,
        catalog: &Catalog,
        crossbar: &Crossbar,
        wrapped: &BTreeMap<String, WrappedTarget>,
    ) -> Result<Self, ChainError> {
        let n = graph.units.len();
        let mut ins: Vec<Vec<Option<Link>>> = graph.units.iter().map(|u| vec![None; u.descriptor.n_inputs]).collect();
        let mut outs: Vec<Vec<Option<Link>>> =
            graph.units.iter().map(|u| vec![None; u.descriptor.n_outputs]).collect();
        let mut registers = BTreeMap::new();
        let mut instances = Vec::with_capacity(n);
        for u in &graph.units {
            if u.is_wrapped() {
                let w = wrapped
                    .get(&u.name)
                    .ok_or_else(|| ChainError::Remote(format!("no endpoint for wrapped unit {}", u.name)))?;
                registers.insert(u.name.clone(), RegSlot::new(Arc::clone(&w.registers)));
                instances.push(None);
            } else {
                let inst = catalog
                    .create_unit_in(&u.kind, &u.params, u.clock.clone())
                    .map_err(|source| ChainError::Unit {
                        unit: u.name.clone(),
                        source,
                    })?;
                registers.insert(u.name.clone(), RegSlot::new(inst.registers()));
                instances.push(Some(inst));
            }
        }

        let new_link = |cap: usize| Link::new(cap).expect("capacity checked at resolve");
        let mut link_hops = Vec::new();
        for l in &graph.links {
            let touches_wrapped = graph.units[l.src_unit].is_wrapped() || graph.units[l.dst_unit].is_wrapped();
            if l.via == LinkKind::Direct || touches_wrapped {
                let f = new_link(l.capacity);
                outs[l.src_unit][l.src.port] = Some(f.clone());
                ins[l.dst_unit][l.dst.port] = Some(f);
            } else {
                let a = new_link(l.capacity);
                let b = new_link(l.capacity);
                outs[l.src_unit][l.src.port] = Some(a.clone());
                ins[l.dst_unit][l.dst.port] = Some(b.clone());
                let dst_regs = registers[&graph.units[l.dst_unit].name].clone();
                let hop = CrossbarHop::spawn(
                    crossbar,
                    a,
                    b,
                    None,
                    Arc::new(move || dst_regs.get().current_shape().consume),
                    DEFAULT_ENDPOINT_DEPTH,
                )?;
                link_hops.push(hop);
            }
        }

        let mut io = ChainIo {
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        for p in &graph.inputs {
            let i = graph.unit_index(&p.unit).expect("boundary of known unit");
            let f = new_link(graph.boundary_capacity(p, true));
            ins[i][p.port] = Some(f.clone());
            io.inputs.push((p.clone(), f));
        }
        for p in &graph.outputs {
            let i = graph.unit_index(&p.unit).expect("boundary of known unit");
            let f = new_link(graph.boundary_capacity(p, false));
            outs[i][p.port] = Some(f.clone());
            io.outputs.push((p.clone(), f));
        }

        let mut unit_hops = BTreeMap::new();
        let mut runners = BTreeMap::new();
        let mut input_links = Vec::new();
        let mut ports = BTreeMap::new();
        for (i, (u, inst)) in graph.units.iter().zip(instances).enumerate() {
            let i_links: Vec<Link> = ins[i].iter().map(|l| l.clone().expect("every port linked")).collect();
            let o_links: Vec<Link> = outs[i].iter().map(|l| l.clone().expect("every port linked")).collect();
            input_links.extend(i_links.iter().cloned());
            ports.insert(u.name.clone(), (i_links.clone(), o_links.clone()));
            match inst {
                Some(inst) => {
                    runners.insert(u.name.clone(), UnitRunner::spawn(&u.name, inst, i_links, o_links));
                }
                None => {
                    let w = &wrapped[&u.name];
                    let regs = Arc::clone(&w.registers);
                    let hop = CrossbarHop::spawn(
                        crossbar,
                        i_links[0].clone(),
                        o_links[0].clone(),
                        Some(w.addr),
                        Arc::new(move || regs.current_shape().consume),
                        DEFAULT_ENDPOINT_DEPTH,
                    )?;
                    unit_hops.insert(u.name.clone(), hop);
                }
            }
        }

        Ok(Self {
            io,
            runners,
            registers,
            ports,
            unit_hops,
            link_hops,
            input_links,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.runners.values().all(|r| r.is_finished())
            && self.unit_hops.values().all(|h| h.is_finished())
            && self.link_hops.iter().all(|h| h.is_finished())
    }

    pub fn steps(&self, unit: &str) -> u64 {
        self.runners.get(unit).map_or(0, |r| r.steps())
    }

    /// Closes the inputs, lets in-flight data drain for up to `timeout`,
    /// then stops whatever is still running.
    pub fn shutdown(mut self, timeout: Duration) -> bool {
        self.io.close_inputs();
        let deadline = Instant::now() + timeout;
        while !self.is_finished() && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(2));
        }
        let drained = self.is_finished();
        for l in &self.input_links {
            l.close();
        }
        for (_, mut r) in std::mem::take(&mut self.runners) {
            r.stop();
        }
        for (_, mut h) in std::mem::take(&mut self.unit_hops) {
            h.stop();
        }
        for mut h in std::mem::take(&mut self.link_hops) {
            h.stop();
        }
        for (_, l) in &self.io.outputs {
            l.close();
        }
        drained
    }
}

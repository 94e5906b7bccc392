//! Deployment, teardown and reconfiguration of chains on one node.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::crossbar::{
    Crossbar, RouteKey, SharedUnit, SharedUnitStats, DEFAULT_ENDPOINT_DEPTH, STATUS_OK,
    STATUS_UNKNOWN_OFFSET,
};
use crate::dsp::default_catalog;
use crate::events::{EventBus, EventKind};
use crate::framing::EndpointAddr;
use crate::unit::{min_link_capacity, Catalog, IoShape, LinkKind, UnitError};

use super::admission::{evaluate, validate};
use super::runtime::{ChainRuntime, RegSlot, WrappedTarget};
use super::spec::{resolve, ChainSection};
use super::{
    AdmissionReport, ChainError, ChainGraph, ChainIo, ChainSpec, PlatformModel, RemoteCheck,
    ResourceBudget, UnitSpec,
};

const DRAIN_TIMEOUT: Duration = Duration::from_secs(1);
const QUIESCE_TIMEOUT: Duration = Duration::from_millis(100);
const COMMAND_TIMEOUT: Duration = Duration::from_secs(2);

/// Request to run one unit on another node on behalf of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostRequest {
    pub chain: String,
    pub unit: String,
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, u32>,
    pub clock_hz: f64,
    pub sample_rate_sps: f64,
    #[serde(default)]
    pub share: Option<String>,
}

/// A reservation that passed the host's admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostGrant {
    pub token: String,
    pub report: AdmissionReport,
}

/// Two-phase admission on a peer node: reserve checks the peer's budget and
/// holds it, commit starts the unit and returns its endpoint.
pub trait PeerHost: Send + Sync {
    fn reserve(&self, request: &HostRequest) -> Result<HostGrant, ChainError>;
    fn commit(&self, token: &str) -> Result<EndpointAddr, ChainError>;
    fn release(&self, token: &str) -> Result<(), ChainError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub name: String,
    pub kind: String,
    /// `fabric`, `prr:<id>`, `shared:<name>`, `node:<device>`.
    pub placement: String,
    pub steps: u64,
    pub registers: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub id: String,
    pub name: String,
    /// `running` or `drained` once every unit has seen end of stream.
    pub state: String,
    pub sample_rate_sps: f64,
    pub units: Vec<UnitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrRecord {
    pub id: String,
    pub size_logic_cells: u64,
    pub size_dsp_slices: u64,
    /// `chain/unit:kind` entries.
    pub occupants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullReconfigReport {
    pub bitstream_bytes: u64,
    pub downtime_s: f64,
    pub torn_down: Vec<String>,
    /// (chain id, chain name) of the new set.
    pub deployed: Vec<(String, String)>,
    pub report: AdmissionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrReport {
    pub prr: String,
    pub chain: String,
    pub unit: String,
    pub old_kind: String,
    pub new_kind: String,
    pub partial_bitstream_bytes: u64,
    pub swap_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerStats {
    pub local_device: u8,
    pub chains: usize,
    pub hosted: usize,
    pub deploys: u64,
    pub teardowns: u64,
    pub rejections: u64,
    pub full_reconfigs: u64,
    pub prr_swaps: u64,
    pub param_writes: u64,
    pub budget: ResourceBudget,
    pub shared: BTreeMap<String, SharedUnitStats>,
}

struct SharedEntry {
    unit: SharedUnit,
    kind: String,
    params: BTreeMap<String, u32>,
    users: BTreeSet<String>,
}

struct Deployed {
    graph: ChainGraph,
    runtime: ChainRuntime,
    private: Vec<SharedUnit>,
    remote: Vec<(u8, String)>,
}

struct Hosted {
    graph: ChainGraph,
    unit: Option<SharedUnit>,
    committed: bool,
}

#[derive(Default)]
struct State {
    next_chain: u64,
    next_token: u64,
    chains: BTreeMap<String, Deployed>,
    shared: BTreeMap<String, SharedEntry>,
    hosted: BTreeMap<String, Hosted>,
}

#[derive(Default)]
struct Counters {
    deploys: AtomicU64,
    teardowns: AtomicU64,
    rejections: AtomicU64,
    full_reconfigs: AtomicU64,
    prr_swaps: AtomicU64,
    param_writes: AtomicU64,
}

struct Inner {
    catalog: Arc<Catalog>,
    platform: PlatformModel,
    crossbar: Crossbar,
    structural: Mutex<()>,
    state: Mutex<State>,
    peers: RwLock<BTreeMap<u8, Arc<dyn PeerHost>>>,
    time_scale: Mutex<f64>,
    counters: Counters,
}

/// Owns every chain on a node. Structural operations are serialized;
/// parameter writes and reads go straight to the register files.
#[derive(Clone)]
pub struct ChainManager {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for ChainManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChainManager")
            .field("device", &self.local_device())
            .finish()
    }
}

impl ChainManager {
    pub fn new(catalog: Arc<Catalog>, platform: PlatformModel, crossbar: Crossbar) -> Self {
        Self {
            inner: Arc::new(Inner {
                catalog,
                platform,
                crossbar,
                structural: Mutex::new(()),
                state: Mutex::new(State::default()),
                peers: RwLock::new(BTreeMap::new()),
                time_scale: Mutex::new(1.0),
                counters: Counters::default(),
            }),
        }
    }

    /// Default catalog and platform on a fresh crossbar.
    pub fn with_defaults(device: u8) -> Self {
        Self::new(
            default_catalog(),
            PlatformModel::default(),
            Crossbar::with_events(device, EventBus::new()),
        )
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.inner.catalog
    }

    pub fn platform(&self) -> &PlatformModel {
        &self.inner.platform
    }

    pub fn crossbar(&self) -> &Crossbar {
        &self.inner.crossbar
    }

    pub fn events(&self) -> &EventBus {
        self.inner.crossbar.events()
    }

    pub fn local_device(&self) -> u8 {
        self.inner.crossbar.local_device()
    }

    /// Scales imposed reconfiguration pauses; reported times are unaffected.
    pub fn set_time_scale(&self, scale: f64) {
        *self.inner.time_scale.lock().unwrap_or_else(|e| e.into_inner()) = scale.max(0.0);
    }

    pub fn time_scale(&self) -> f64 {
        *self.inner.time_scale.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn add_peer(&self, device: u8, host: Arc<dyn PeerHost>) {
        self.inner.peers.write().unwrap_or_else(|e| e.into_inner()).insert(device, host);
    }

    pub fn remove_peer(&self, device: u8) {
        self.inner.peers.write().unwrap_or_else(|e| e.into_inner()).remove(&device);
    }

    pub fn peers(&self) -> Vec<u8> {
        self.inner.peers.read().unwrap_or_else(|e| e.into_inner()).keys().copied().collect()
    }

    fn peer(&self, device: u8) -> Option<Arc<dyn PeerHost>> {
        self.inner.peers.read().unwrap_or_else(|e| e.into_inner()).get(&device).cloned()
    }

    fn structural(&self) -> MutexGuard<'_, ()> {
        self.inner.structural.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn is_remote(&self, node: Option<u8>) -> bool {
        matches!(node, Some(n) if n != self.local_device())
    }

    fn sleep_scaled(&self, seconds: f64) {
        let s = seconds * self.time_scale();
        if s > 0.0 && s.is_finite() {
            std::thread::sleep(Duration::from_secs_f64(s));
        }
    }

    pub fn parse(&self, text: &str) -> Result<ChainGraph, ChainError> {
        super::parse_chain_spec(text, &self.inner.catalog)
    }

    /// Admission of `graph` against everything currently placed here,
    /// without deploying it.
    pub fn check(&self, graph: &ChainGraph) -> AdmissionReport {
        let st = self.state();
        let existing = placed_graphs(&st);
        validate(graph, &self.inner.platform, &existing, self.local_device())
    }

    pub fn budget(&self) -> ResourceBudget {
        let st = self.state();
        let placed = placed_graphs(&st);
        let r = evaluate(&self.inner.platform, &placed, self.local_device());
        ResourceBudget::new(&self.inner.platform, r.resources.cells_demanded, r.resources.dsp_demanded)
    }

    pub fn deploy_text(&self, text: &str) -> Result<(String, AdmissionReport), ChainError> {
        let graph = self.parse(text)?;
        self.deploy(graph)
    }

    /// Admits and starts `graph`. Returns the chain id and the report.
    pub fn deploy(&self, graph: ChainGraph) -> Result<(String, AdmissionReport), ChainError> {
        let _g = self.structural();
        self.deploy_locked(graph)
    }

    fn deploy_locked(&self, graph: ChainGraph) -> Result<(String, AdmissionReport), ChainError> {
        let mut report = {
            let st = self.state();
            check_sharing(&st, &graph, |n| self.is_remote(n))?;
            let existing = placed_graphs(&st);
            validate(&graph, &self.inner.platform, &existing, self.local_device())
        };

        let mut grants: Vec<(u8, String, String)> = Vec::new();
        if report.resource_ok && report.throughput_ok && report.latency_ok {
            for u in graph.units.iter().filter(|u| self.is_remote(u.node)) {
                let dev = u.node.expect("remote has a node");
                let check = self.reserve_remote(&graph, u, dev);
                match check {
                    Ok(token) => {
                        report.remote.push(RemoteCheck {
                            unit: u.name.clone(),
                            device: dev,
                            ok: true,
                            detail: format!("reserved {token}"),
                        });
                        grants.push((dev, token, u.name.clone()));
                    }
                    Err(detail) => report.remote.push(RemoteCheck {
                        unit: u.name.clone(),
                        device: dev,
                        ok: false,
                        detail,
                    }),
                }
            }
        }
        if !report.admitted() {
            self.release_remote(grants.iter().map(|(d, t, _)| (*d, t.clone())));
            self.inner.counters.rejections.fetch_add(1, Ordering::Relaxed);
            return Err(ChainError::AdmissionFailed(Box::new(report)));
        }

        let mut st = self.state();
        st.next_chain += 1;
        let id = format!("chain{}", st.next_chain);
        match self.start(&mut st, &id, &graph, &grants) {
            Ok((runtime, private)) => {
                st.chains.insert(
                    id.clone(),
                    Deployed {
                        graph,
                        runtime,
                        private,
                        remote: grants.iter().map(|(d, t, _)| (*d, t.clone())).collect(),
                    },
                );
                drop(st);
                self.inner.counters.deploys.fetch_add(1, Ordering::Relaxed);
                self.events().publish(EventKind::Deployed, id.clone());
                Ok((id, report))
            }
            Err(e) => {
                drop_shared_user(&mut st, &id);
                drop(st);
                self.release_remote(grants.iter().map(|(d, t, _)| (*d, t.clone())));
                Err(e)
            }
        }
    }

    fn reserve_remote(&self, graph: &ChainGraph, u: &super::GraphUnit, dev: u8) -> Result<String, String> {
        if !self.inner.crossbar.has_route(RouteKey::Device(dev)) {
            return Err(format!("no link to device {dev}"));
        }
        let peer = self.peer(dev).ok_or_else(|| format!("no control channel to device {dev}"))?;
        let req = HostRequest {
            chain: graph.name.clone(),
            unit: u.name.clone(),
            kind: u.kind.clone(),
            params: u.params.clone(),
            clock_hz: u.clock.hz,
            sample_rate_sps: graph.sample_rate_sps,
            share: u.share.clone(),
        };
        peer.reserve(&req).map(|g| g.token).map_err(|e| match e {
            ChainError::AdmissionFailed(r) => format!("peer rejected:\n{}", r.render()),
            other => other.to_string(),
        })
    }

    fn release_remote(&self, tokens: impl Iterator<Item = (u8, String)>) {
        for (dev, token) in tokens {
            if let Some(p) = self.peer(dev) {
                let _ = p.release(&token);
            }
        }
    }

    fn start(
        &self,
        st: &mut State,
        id: &str,
        graph: &ChainGraph,
        grants: &[(u8, String, String)],
    ) -> Result<(ChainRuntime, Vec<SharedUnit>), ChainError> {
        let catalog = &self.inner.catalog;
        let mut wrapped = BTreeMap::new();
        let mut private = Vec::new();
        for u in graph.units.iter().filter(|u| u.is_wrapped()) {
            let unit_err = |source| ChainError::Unit {
                unit: u.name.clone(),
                source,
            };
            let target = if self.is_remote(u.node) {
                let (dev, token, _) = grants
                    .iter()
                    .find(|(_, _, name)| *name == u.name)
                    .expect("reserved above");
                let peer = self.peer(*dev).ok_or_else(|| ChainError::Remote(format!("peer {dev} went away")))?;
                let addr = peer.commit(token)?;
                // Local copy of the remote registers, kept in step by set_param.
                let shadow = catalog
                    .create_unit_in(&u.kind, &u.params, u.clock.clone())
                    .map_err(unit_err)?;
                WrappedTarget {
                    addr,
                    registers: shadow.registers(),
                }
            } else if let Some(share) = &u.share {
                if !st.shared.contains_key(share) {
                    let inst = catalog
                        .create_unit_in(&u.kind, &u.params, u.clock.clone())
                        .map_err(unit_err)?;
                    let unit = SharedUnit::spawn(&self.inner.crossbar, None, inst, DEFAULT_ENDPOINT_DEPTH)?;
                    st.shared.insert(
                        share.clone(),
                        SharedEntry {
                            unit,
                            kind: u.kind.clone(),
                            params: u.params.clone(),
                            users: BTreeSet::new(),
                        },
                    );
                }
                let e = st.shared.get_mut(share).expect("inserted above");
                e.users.insert(id.to_string());
                WrappedTarget {
                    addr: e.unit.addr(),
                    registers: e.unit.registers(),
                }
            } else {
                let inst = catalog
                    .create_unit_in(&u.kind, &u.params, u.clock.clone())
                    .map_err(unit_err)?;
                let unit = SharedUnit::spawn(&self.inner.crossbar, None, inst, DEFAULT_ENDPOINT_DEPTH)?;
                let t = WrappedTarget {
                    addr: unit.addr(),
                    registers: unit.registers(),
                };
                private.push(unit);
                t
            };
            wrapped.insert(u.name.clone(), target);
        }
        let runtime = ChainRuntime::build(graph, catalog, &self.inner.crossbar, &wrapped)?;
        Ok((runtime, private))
    }

    /// Stops a chain after letting in-flight data drain, and frees its
    /// resources.
    pub fn teardown(&self, id: &str) -> Result<(), ChainError> {
        let _g = self.structural();
        self.teardown_locked(id)
    }

    fn teardown_locked(&self, id: &str) -> Result<(), ChainError> {
        let d = {
            let mut st = self.state();
            st.chains
                .remove(id)
                .ok_or_else(|| ChainError::UnknownChain(id.to_string()))?
        };
        let Deployed {
            runtime,
            private,
            remote,
            ..
        } = d;
        runtime.shutdown(DRAIN_TIMEOUT);
        drop(private);
        self.release_remote(remote.into_iter());
        {
            let mut st = self.state();
            drop_shared_user(&mut st, id);
        }
        self.inner.counters.teardowns.fetch_add(1, Ordering::Relaxed);
        self.events().publish(EventKind::TornDown, id.to_string());
        Ok(())
    }

    pub fn teardown_all(&self) {
        let _g = self.structural();
        let ids: Vec<String> = self.state().chains.keys().cloned().collect();
        for id in ids {
            let _ = self.teardown_locked(&id);
        }
    }

    /// Boundary links of a deployed chain.
    pub fn io(&self, id: &str) -> Result<ChainIo, ChainError> {
        self.state()
            .chains
            .get(id)
            .map(|d| d.runtime.io.clone())
            .ok_or_else(|| ChainError::UnknownChain(id.to_string()))
    }

    pub fn graph(&self, id: &str) -> Result<ChainGraph, ChainError> {
        self.state()
            .chains
            .get(id)
            .map(|d| d.graph.clone())
            .ok_or_else(|| ChainError::UnknownChain(id.to_string()))
    }

    /// Writes a register on a live unit. Takes effect at the unit's next step
    /// boundary; streaming is never interrupted.
    pub fn set_param(&self, id: &str, unit: &str, register: &str, value: u32) -> Result<(), ChainError> {
        let st = self.state();
        let d = st.chains.get(id).ok_or_else(|| ChainError::UnknownChain(id.to_string()))?;
        let gu = d
            .graph
            .unit(unit)
            .ok_or_else(|| ChainError::UnknownUnit(format!("{id}/{unit}")))?;
        let regs = d.runtime.registers[unit].get();
        let unit_err = |source| ChainError::Unit {
            unit: unit.to_string(),
            source,
        };
        let offset = regs.offset_of(register).map_err(unit_err)?;
        let shape = regs.preview(offset, value).map_err(unit_err)?;
        check_live_links(&d.graph, &d.runtime.registers, unit, shape)?;
        if self.is_remote(gu.node) {
            let hop = &d.runtime.unit_hops[unit];
            let resp = hop.command(&[(offset, value)], COMMAND_TIMEOUT)?;
            match resp.first().map(|&(_, s)| s) {
                Some(STATUS_OK) => regs.write_reg(offset, value).map_err(unit_err)?,
                Some(STATUS_UNKNOWN_OFFSET) => return Err(unit_err(UnitError::UnknownOffset(offset))),
                _ => return Err(unit_err(UnitError::ValueOutOfRange { offset, value })),
            }
        } else {
            regs.write_reg(offset, value).map_err(unit_err)?;
        }
        drop(st);
        self.inner.counters.param_writes.fetch_add(1, Ordering::Relaxed);
        self.events()
            .publish(EventKind::ParamSet, format!("{id}/{unit}.{register} = {value}"));
        Ok(())
    }

    pub fn get_param(&self, id: &str, unit: &str, register: &str) -> Result<u32, ChainError> {
        let st = self.state();
        let d = st.chains.get(id).ok_or_else(|| ChainError::UnknownChain(id.to_string()))?;
        let slot = d
            .runtime
            .registers
            .get(unit)
            .ok_or_else(|| ChainError::UnknownUnit(format!("{id}/{unit}")))?;
        slot.get().read_named(register).map_err(|source| ChainError::Unit {
            unit: unit.to_string(),
            source,
        })
    }

    pub fn list(&self) -> Vec<ChainRecord> {
        let st = self.state();
        st.chains
            .iter()
            .map(|(id, d)| ChainRecord {
                id: id.clone(),
                name: d.graph.name.clone(),
                state: if d.runtime.is_finished() { "drained" } else { "running" }.into(),
                sample_rate_sps: d.graph.sample_rate_sps,
                units: d
                    .graph
                    .units
                    .iter()
                    .map(|u| {
                        let placement = if self.is_remote(u.node) {
                            format!("node:{}", u.node.unwrap_or_default())
                        } else if let Some(s) = &u.share {
                            format!("shared:{s}")
                        } else if let Some(p) = &u.prr {
                            format!("prr:{p}")
                        } else {
                            "fabric".into()
                        };
                        let (_, regs) = d.runtime.registers[&u.name].get().snapshot();
                        UnitRecord {
                            name: u.name.clone(),
                            kind: u.kind.clone(),
                            placement,
                            steps: d.runtime.steps(&u.name),
                            registers: regs.iter().map(|(r, v)| (r.name.clone(), v)).collect(),
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn prrs(&self) -> Vec<PrrRecord> {
        let st = self.state();
        self.inner
            .platform
            .prrs
            .iter()
            .map(|p| PrrRecord {
                id: p.id.clone(),
                size_logic_cells: p.size_logic_cells,
                size_dsp_slices: p.size_dsp_slices,
                occupants: st
                    .chains
                    .iter()
                    .flat_map(|(id, d)| {
                        d.graph
                            .units
                            .iter()
                            .filter(|u| u.prr.as_deref() == Some(p.id.as_str()))
                            .map(move |u| format!("{id}/{}:{}", u.name, u.kind))
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn stats(&self) -> ManagerStats {
        let budget = self.budget();
        let st = self.state();
        let c = &self.inner.counters;
        ManagerStats {
            local_device: self.local_device(),
            chains: st.chains.len(),
            hosted: st.hosted.len(),
            deploys: c.deploys.load(Ordering::Relaxed),
            teardowns: c.teardowns.load(Ordering::Relaxed),
            rejections: c.rejections.load(Ordering::Relaxed),
            full_reconfigs: c.full_reconfigs.load(Ordering::Relaxed),
            prr_swaps: c.prr_swaps.load(Ordering::Relaxed),
            param_writes: c.param_writes.load(Ordering::Relaxed),
            budget,
            shared: st.shared.iter().map(|(k, e)| (k.clone(), e.unit.stats())).collect(),
        }
    }

    /// Replaces every chain, modeling a whole-fabric bitstream load. The new
    /// set is checked on its own first; if it fails nothing is touched.
    pub fn reconfigure_full(
        &self,
        new_set: Vec<ChainGraph>,
        bitstream_bytes: u64,
    ) -> Result<FullReconfigReport, ChainError> {
        let _g = self.structural();
        let report = {
            let st = self.state();
            let mut set: Vec<&ChainGraph> = st.hosted.values().map(|h| &h.graph).collect();
            set.extend(new_set.iter());
            evaluate(&self.inner.platform, &set, self.local_device())
        };
        if !report.admitted() {
            self.inner.counters.rejections.fetch_add(1, Ordering::Relaxed);
            return Err(ChainError::AdmissionFailed(Box::new(report)));
        }
        let downtime_s = self.inner.platform.reconfig_seconds(bitstream_bytes);
        let torn_down: Vec<String> = self.state().chains.keys().cloned().collect();
        for id in &torn_down {
            self.teardown_locked(id)?;
        }
        self.sleep_scaled(downtime_s);
        let mut deployed = Vec::new();
        for g in new_set {
            let name = g.name.clone();
            let (id, _) = self.deploy_locked(g)?;
            deployed.push((id, name));
        }
        self.inner.counters.full_reconfigs.fetch_add(1, Ordering::Relaxed);
        self.events().publish(
            EventKind::ReconfigFull,
            format!("{bitstream_bytes} bytes, downtime {downtime_s} s"),
        );
        Ok(FullReconfigReport {
            bitstream_bytes,
            downtime_s,
            torn_down,
            deployed,
            report,
        })
    }

    /// Swaps the single unit occupying `prr` for `occupant` (kind and params;
    /// the name is kept). Only that unit pauses.
    pub fn reconfigure_prr(
        &self,
        prr: &str,
        occupant: &UnitSpec,
        partial_bitstream_bytes: u64,
    ) -> Result<PrrReport, ChainError> {
        let _g = self.structural();
        let spec = self
            .inner
            .platform
            .prr(prr)
            .cloned()
            .ok_or_else(|| ChainError::UnknownPrr(prr.to_string()))?;
        let catalog = &self.inner.catalog;
        let descriptor = catalog
            .descriptor(&occupant.kind)
            .ok_or_else(|| ChainError::UnknownKind(occupant.kind.clone()))?;
        if descriptor.cost_logic_cells > spec.size_logic_cells || descriptor.cost_dsp_slices > spec.size_dsp_slices {
            return Err(ChainError::OccupantTooLarge {
                prr: prr.to_string(),
                cells: descriptor.cost_logic_cells,
                dsp: descriptor.cost_dsp_slices,
                size_cells: spec.size_logic_cells,
                size_dsp: spec.size_dsp_slices,
            });
        }

        let mut st = self.state();
        let (chain_id, unit_idx) = {
            let mut found = Vec::new();
            for (id, d) in &st.chains {
                for (i, u) in d.graph.units.iter().enumerate() {
                    if u.prr.as_deref() == Some(prr) {
                        found.push((id.clone(), i));
                    }
                }
            }
            match found.len() {
                0 => return Err(ChainError::UnknownUnit(format!("PRR {prr} has no occupant"))),
                1 => found.pop().expect("one element"),
                n => {
                    return Err(ChainError::IncompatibleBoundary(format!(
                        "PRR {prr} holds {n} units; a swap replaces exactly one"
                    )))
                }
            }
        };

        let d = st.chains.get(&chain_id).expect("found above");
        let old = d.graph.units[unit_idx].clone();
        if descriptor.n_inputs != old.descriptor.n_inputs || descriptor.n_outputs != old.descriptor.n_outputs {
            return Err(ChainError::IncompatibleBoundary(format!(
                "{} has {}/{} ports, occupant {} has {}/{}",
                old.name,
                old.descriptor.n_inputs,
                old.descriptor.n_outputs,
                occupant.kind,
                descriptor.n_inputs,
                descriptor.n_outputs
            )));
        }
        let params = occupant
            .params
            .iter()
            .map(|(k, &v)| (k.clone(), v as u32))
            .collect::<BTreeMap<_, _>>();
        let unit_err = |source| ChainError::Unit {
            unit: old.name.clone(),
            source,
        };
        let regs = catalog.resolve_params(&occupant.kind, &params).map_err(unit_err)?;
        let entry = catalog.get(&occupant.kind).expect("descriptor found above");
        let shape = entry.io_shape(&regs).map_err(unit_err)?;
        let (in_links, out_links) = &d.runtime.ports[&old.name];
        for l in in_links {
            if l.capacity() < shape.consume {
                return Err(ChainError::CapacityTooSmall {
                    link: format!("into {}", old.name),
                    capacity: l.capacity(),
                    needed: shape.consume,
                });
            }
        }
        for l in out_links {
            if l.capacity() < shape.produce {
                return Err(ChainError::CapacityTooSmall {
                    link: format!("out of {}", old.name),
                    capacity: l.capacity(),
                    needed: shape.produce,
                });
            }
        }
        check_live_links(&d.graph, &d.runtime.registers, &old.name, shape)?;

        let mut new_graph = d.graph.clone();
        {
            let u = &mut new_graph.units[unit_idx];
            u.kind = occupant.kind.clone();
            u.params = params.clone();
            u.descriptor = descriptor.clone();
            u.shape = shape;
        }
        let others: Vec<&ChainGraph> = st
            .chains
            .iter()
            .filter(|(id, _)| **id != chain_id)
            .map(|(_, d)| &d.graph)
            .chain(st.hosted.values().map(|h| &h.graph))
            .collect();
        let report = validate(&new_graph, &self.inner.platform, &others, self.local_device());
        if !report.admitted() {
            return Err(ChainError::AdmissionFailed(Box::new(report)));
        }

        let inst = catalog
            .create_unit_in(&occupant.kind, &params, old.clock.clone())
            .map_err(unit_err)?;
        let new_regs = inst.registers();
        let runner = &d.runtime.runners[&old.name];
        runner.pause(QUIESCE_TIMEOUT)?;
        runner.replace(inst);
        d.runtime.registers[&old.name].set(new_regs);
        let swap_time_s = self.inner.platform.reconfig_seconds(partial_bitstream_bytes);
        self.sleep_scaled(swap_time_s);
        runner.resume();
        st.chains.get_mut(&chain_id).expect("found above").graph = new_graph;
        drop(st);

        self.inner.counters.prr_swaps.fetch_add(1, Ordering::Relaxed);
        self.events().publish(
            EventKind::ReconfigPrr,
            format!("{prr}: {} -> {} in {swap_time_s} s", old.kind, occupant.kind),
        );
        Ok(PrrReport {
            prr: prr.to_string(),
            chain: chain_id,
            unit: old.name.clone(),
            old_kind: old.kind.clone(),
            new_kind: occupant.kind.clone(),
            partial_bitstream_bytes,
            swap_time_s,
        })
    }

    /// First phase of hosting a unit for a chain on another node.
    pub fn host_reserve(&self, req: &HostRequest) -> Result<HostGrant, ChainError> {
        let _g = self.structural();
        let clock = "host".to_string();
        let spec = ChainSpec {
            chain: ChainSection {
                name: format!("{}@{}", req.chain, req.unit),
                latency_budget_us: None,
                sample_rate_sps: req.sample_rate_sps,
                clocks: BTreeMap::from([(clock.clone(), req.clock_hz)]),
            },
            unit: vec![UnitSpec {
                name: req.unit.clone(),
                kind: req.kind.clone(),
                params: req.params.iter().map(|(k, &v)| (k.clone(), v as i64)).collect(),
                prr: None,
                node: None,
                share: req.share.clone(),
                clock: Some(clock),
            }],
            link: Vec::new(),
        };
        let graph = resolve(spec, &self.inner.catalog)?;
        let mut st = self.state();
        check_sharing(&st, &graph, |_| false)?;
        let existing = placed_graphs(&st);
        let report = validate(&graph, &self.inner.platform, &existing, self.local_device());
        if !report.admitted() {
            self.inner.counters.rejections.fetch_add(1, Ordering::Relaxed);
            return Err(ChainError::AdmissionFailed(Box::new(report)));
        }
        st.next_token += 1;
        let token = format!("h{}", st.next_token);
        st.hosted.insert(
            token.clone(),
            Hosted {
                graph,
                unit: None,
                committed: false,
            },
        );
        Ok(HostGrant { token, report })
    }

    /// Second phase: starts the reserved unit behind a crossbar endpoint.
    pub fn host_commit(&self, token: &str) -> Result<EndpointAddr, ChainError> {
        let _g = self.structural();
        let mut st = self.state();
        let h = st
            .hosted
            .get(token)
            .ok_or_else(|| ChainError::Remote(format!("unknown reservation {token}")))?;
        if h.committed {
            return Err(ChainError::Remote(format!("reservation {token} already committed")));
        }
        let u = h.graph.units[0].clone();
        let inst = self
            .inner
            .catalog
            .create_unit_in(&u.kind, &u.params, u.clock.clone())
            .map_err(|source| ChainError::Unit {
                unit: u.name.clone(),
                source,
            })?;
        let user = format!("host:{token}");
        let addr = match &u.share {
            Some(share) => {
                if !st.shared.contains_key(share) {
                    let unit = SharedUnit::spawn(&self.inner.crossbar, None, inst, DEFAULT_ENDPOINT_DEPTH)?;
                    st.shared.insert(
                        share.clone(),
                        SharedEntry {
                            unit,
                            kind: u.kind.clone(),
                            params: u.params.clone(),
                            users: BTreeSet::new(),
                        },
                    );
                }
                let e = st.shared.get_mut(share).expect("inserted above");
                e.users.insert(user);
                e.unit.addr()
            }
            None => {
                let unit = SharedUnit::spawn(&self.inner.crossbar, None, inst, DEFAULT_ENDPOINT_DEPTH)?;
                let addr = unit.addr();
                st.hosted.get_mut(token).expect("checked above").unit = Some(unit);
                addr
            }
        };
        st.hosted.get_mut(token).expect("checked above").committed = true;
        Ok(addr)
    }

    /// Drops a reservation or stops a hosted unit.
    pub fn host_release(&self, token: &str) -> Result<(), ChainError> {
        let _g = self.structural();
        let mut st = self.state();
        let h = st
            .hosted
            .remove(token)
            .ok_or_else(|| ChainError::Remote(format!("unknown reservation {token}")))?;
        drop_shared_user(&mut st, &format!("host:{token}"));
        drop(st);
        drop(h.unit);
        Ok(())
    }

    /// Tokens of units hosted here for other nodes.
    pub fn hosted(&self) -> Vec<String> {
        self.state().hosted.keys().cloned().collect()
    }
}

impl PeerHost for ChainManager {
    fn reserve(&self, request: &HostRequest) -> Result<HostGrant, ChainError> {
        self.host_reserve(request)
    }

    fn commit(&self, token: &str) -> Result<EndpointAddr, ChainError> {
        self.host_commit(token)
    }

    fn release(&self, token: &str) -> Result<(), ChainError> {
        self.host_release(token)
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        let st = self.state.get_mut().unwrap_or_else(|e| e.into_inner());
        for (_, d) in std::mem::take(&mut st.chains) {
            d.runtime.shutdown(Duration::ZERO);
        }
    }
}

/// A live shape change must still fit every direct link it touches.
fn check_live_links(
    graph: &ChainGraph,
    registers: &BTreeMap<String, RegSlot>,
    unit: &str,
    shape: IoShape,
) -> Result<(), ChainError> {
    let live = |name: &str| registers.get(name).map(|r| r.get().current_shape());
    for l in graph.links.iter().filter(|l| l.via == LinkKind::Direct) {
        let needed = if l.src.unit == unit {
            live(&l.dst.unit).map(|o| min_link_capacity(shape.produce, o.consume))
        } else if l.dst.unit == unit {
            live(&l.src.unit).map(|o| min_link_capacity(o.produce, shape.consume))
        } else {
            None
        };
        if let Some(needed) = needed.filter(|&n| n > l.capacity) {
            return Err(ChainError::CapacityTooSmall {
                link: format!("{} -> {}", l.src, l.dst),
                capacity: l.capacity,
                needed,
            });
        }
    }
    Ok(())
}

fn placed_graphs(st: &State) -> Vec<&ChainGraph> {
    st.hosted
        .values()
        .map(|h| &h.graph)
        .chain(st.chains.values().map(|d| &d.graph))
        .collect()
}

/// A shared name must always mean the same kind with the same parameters.
fn check_sharing(st: &State, graph: &ChainGraph, remote: impl Fn(Option<u8>) -> bool) -> Result<(), ChainError> {
    for u in graph.units.iter().filter(|u| !remote(u.node)) {
        let Some(share) = &u.share else { continue };
        if let Some(e) = st.shared.get(share) {
            if e.kind != u.kind || e.params != u.params {
                return Err(ChainError::InvalidSharing(format!(
                    "{share} already runs as {} with different parameters",
                    e.kind
                )));
            }
        }
        for other in graph.units.iter().filter(|o| o.name != u.name && o.share.as_ref() == Some(share)) {
            if !remote(other.node) {
                return Err(ChainError::InvalidSharing(format!(
                    "{share} used twice in chain {}",
                    graph.name
                )));
            }
        }
    }
    Ok(())
}

fn drop_shared_user(st: &mut State, user: &str) {
    let empty: Vec<String> = st
        .shared
        .iter_mut()
        .filter_map(|(k, e)| {
            e.users.remove(user);
            e.users.is_empty().then(|| k.clone())
        })
        .collect();
    for k in empty {
        st.shared.remove(&k);
    }
}

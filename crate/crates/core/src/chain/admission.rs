//! Resource, throughput and latency admission. Everything here is a pure
//! function of the declared descriptors, clocks and the platform model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::unit::{LinkKind, UnitDescriptor};

use super::{ChainGraph, GraphUnit, PlatformModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrCheck {
    pub prr: String,
    pub chains: Vec<String>,
    pub cells_demanded: u64,
    pub size_cells: u64,
    pub dsp_demanded: u64,
    pub size_dsp: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCheck {
    pub cells_demanded: u64,
    pub cells_available: u64,
    pub dsp_demanded: u64,
    pub dsp_available: u64,
    /// Part of the demand that is PRR reservation.
    pub reserved_cells: u64,
    pub reserved_dsp: u64,
    pub prr: Vec<PrrCheck>,
    pub errors: Vec<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputCheck {
    pub instance: String,
    pub kind: String,
    pub chains: Vec<String>,
    pub clock_hz: f64,
    pub demanded_sps: f64,
    pub available_sps: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyCheck {
    pub chain: String,
    pub critical_path_s: f64,
    pub budget_s: Option<f64>,
    pub path: Vec<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteCheck {
    pub unit: String,
    pub device: u8,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionReport {
    pub chain: String,
    pub resource_ok: bool,
    pub throughput_ok: bool,
    pub latency_ok: bool,
    pub resources: ResourceCheck,
    pub throughput: Vec<ThroughputCheck>,
    pub latency: Vec<LatencyCheck>,
    #[serde(default)]
    pub remote: Vec<RemoteCheck>,
}

impl AdmissionReport {
    pub fn remote_ok(&self) -> bool {
        self.remote.iter().all(|r| r.ok)
    }

    pub fn admitted(&self) -> bool {
        self.resource_ok && self.throughput_ok && self.latency_ok && self.remote_ok()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let verdict = if self.admitted() { "admitted" } else { "rejected" };
        let _ = writeln!(s, "admission chain={} verdict={verdict}", self.chain);
        let r = &self.resources;
        let _ = writeln!(
            s,
            "resources ok={} cells={}/{} dsp={}/{} prr_reserved_cells={} prr_reserved_dsp={}",
            self.resource_ok,
            r.cells_demanded,
            r.cells_available,
            r.dsp_demanded,
            r.dsp_available,
            r.reserved_cells,
            r.reserved_dsp
        );
        for p in &r.prr {
            let _ = writeln!(
                s,
                "  prr={} ok={} cells={}/{} dsp={}/{} chains={}",
                p.prr,
                p.ok,
                p.cells_demanded,
                p.size_cells,
                p.dsp_demanded,
                p.size_dsp,
                p.chains.join(",")
            );
        }
        for e in &r.errors {
            let _ = writeln!(s, "  error={e}");
        }
        let _ = writeln!(s, "throughput ok={}", self.throughput_ok);
        for t in &self.throughput {
            let _ = writeln!(
                s,
                "  unit={} kind={} ok={} demanded_sps={:.6e} available_sps={:.6e} clock_hz={:.6e} chains={}",
                t.instance,
                t.kind,
                t.ok,
                t.demanded_sps,
                t.available_sps,
                t.clock_hz,
                t.chains.join(",")
            );
        }
        let _ = writeln!(s, "latency ok={}", self.latency_ok);
        for l in &self.latency {
            let budget = l
                .budget_s
                .map(|b| format!("{b:.6e}"))
                .unwrap_or_else(|| "none".into());
            let _ = writeln!(
                s,
                "  chain={} ok={} critical_path_s={:.6e} budget_s={budget} path={}",
                l.chain,
                l.ok,
                l.critical_path_s,
                l.path.join(">")
            );
        }
        if !self.remote.is_empty() {
            let _ = writeln!(s, "remote ok={}", self.remote_ok());
            for r in &self.remote {
                let _ = writeln!(s, "  unit={} device={} ok={} detail={}", r.unit, r.device, r.ok, r.detail);
            }
        }
        s
    }
}

/// Where a unit's cost lands.
enum Placement {
    Shared(String),
    Fabric,
    Prr(String),
    Remote,
}

fn placement(u: &GraphUnit, local_device: u8) -> Placement {
    if matches!(u.node, Some(n) if n != local_device) {
        return Placement::Remote;
    }
    if let Some(p) = &u.prr {
        return Placement::Prr(p.clone());
    }
    match &u.share {
        Some(s) => Placement::Shared(s.clone()),
        None => Placement::Fabric,
    }
}

#[derive(Default)]
struct PrrUse {
    chains: Vec<String>,
    users: BTreeSet<usize>,
    cells: u64,
    dsp: u64,
}

struct Instance<'a> {
    label: String,
    in_prr: bool,
    descriptor: &'a UnitDescriptor,
    clock_hz: f64,
    chains: Vec<String>,
    demand: f64,
}

/// Checks a whole set of chains as if deployed together.
pub fn evaluate(platform: &PlatformModel, chains: &[&ChainGraph], local_device: u8) -> AdmissionReport {
    // Private units are keyed by chain position so equal chain names stay apart.
    let mut instances: BTreeMap<(u8, String, usize), Instance> = BTreeMap::new();
    let mut prr_use: BTreeMap<String, PrrUse> = BTreeMap::new();
    let mut errors = Vec::new();

    for (ci, c) in chains.iter().enumerate() {
        for u in &c.units {
            let (key, label, in_prr) = match placement(u, local_device) {
                Placement::Remote => continue,
                Placement::Prr(p) => {
                    let e = prr_use.entry(p.clone()).or_default();
                    if e.users.insert(ci) {
                        e.chains.push(c.name.clone());
                    }
                    e.cells += u.descriptor.cost_logic_cells;
                    e.dsp += u.descriptor.cost_dsp_slices;
                    let label = format!("{p}/{}/{}", c.name, u.name);
                    ((2, label.clone(), ci), label, true)
                }
                Placement::Shared(name) => {
                    let label = format!("share:{name}");
                    ((0, label.clone(), 0), label, false)
                }
                Placement::Fabric => {
                    let label = format!("{}/{}", c.name, u.name);
                    ((1, label.clone(), ci), label, false)
                }
            };
            let inst = instances.entry(key).or_insert_with(|| Instance {
                label,
                in_prr,
                descriptor: &u.descriptor,
                clock_hz: u.clock.hz,
                chains: Vec::new(),
                demand: 0.0,
            });
            if inst.descriptor.kind != u.descriptor.kind {
                errors.push(format!("{} is shared by different kinds", inst.label));
            }
            inst.chains.push(c.name.clone());
            inst.demand += c.sample_rate_sps;
        }
    }

    let mut cells = platform.reserved_cells();
    let mut dsp = platform.reserved_dsp();
    for inst in instances.values().filter(|i| !i.in_prr) {
        cells += inst.descriptor.cost_logic_cells;
        dsp += inst.descriptor.cost_dsp_slices;
    }
    let mut prr_checks = Vec::new();
    for (id, PrrUse { chains: users, users: seen, cells: c, dsp: d }) in &prr_use {
        match platform.prr(id) {
            Some(spec) => {
                let ok = *c <= spec.size_logic_cells && *d <= spec.size_dsp_slices && seen.len() == 1;
                prr_checks.push(PrrCheck {
                    prr: id.clone(),
                    chains: users.clone(),
                    cells_demanded: *c,
                    size_cells: spec.size_logic_cells,
                    dsp_demanded: *d,
                    size_dsp: spec.size_dsp_slices,
                    ok,
                });
            }
            None => errors.push(format!("unknown PRR {id}")),
        }
    }
    let resource_ok = cells <= platform.logic_cells_total
        && dsp <= platform.dsp_slices_total
        && prr_checks.iter().all(|p| p.ok)
        && errors.is_empty();

    let throughput: Vec<ThroughputCheck> = instances
        .values()
        .map(|inst| {
            let clock_ok = inst.clock_hz <= platform.fabric_clock_hz;
            let available = inst.descriptor.effective_throughput(inst.clock_hz);
            ThroughputCheck {
                instance: inst.label.clone(),
                kind: inst.descriptor.kind.clone(),
                chains: inst.chains.clone(),
                clock_hz: inst.clock_hz,
                demanded_sps: inst.demand,
                available_sps: available,
                ok: clock_ok && inst.demand <= available,
            }
        })
        .collect();
    let throughput_ok = throughput.iter().all(|t| t.ok);

    let latency: Vec<LatencyCheck> = chains
        .iter()
        .map(|c| {
            let (critical, path) = critical_path(c, platform.crossbar_hop_latency_s);
            LatencyCheck {
                chain: c.name.clone(),
                critical_path_s: critical,
                budget_s: c.latency_budget_s,
                path,
                ok: c.latency_budget_s.is_none_or(|b| critical <= b),
            }
        })
        .collect();
    let latency_ok = latency.iter().all(|l| l.ok);

    AdmissionReport {
        chain: chains.last().map(|c| c.name.clone()).unwrap_or_default(),
        resource_ok,
        throughput_ok,
        latency_ok,
        resources: ResourceCheck {
            cells_demanded: cells,
            cells_available: platform.logic_cells_total,
            dsp_demanded: dsp,
            dsp_available: platform.dsp_slices_total,
            reserved_cells: platform.reserved_cells(),
            reserved_dsp: platform.reserved_dsp(),
            prr: prr_checks,
            errors,
            ok: resource_ok,
        },
        throughput,
        latency,
        remote: Vec::new(),
    }
}

/// Checks `graph` together with the chains already deployed.
pub fn validate(
    graph: &ChainGraph,
    platform: &PlatformModel,
    existing: &[&ChainGraph],
    local_device: u8,
) -> AdmissionReport {
    let mut all: Vec<&ChainGraph> = existing.to_vec();
    all.push(graph);
    let mut report = evaluate(platform, &all, local_device);
    report.chain = graph.name.clone();
    report
}

/// Longest source-to-sink latency: unit latencies at their clocks plus a
/// fixed cost per crossbar hop.
pub fn critical_path(chain: &ChainGraph, hop_latency_s: f64) -> (f64, Vec<String>) {
    let n = chain.units.len();
    let order = topo_order(chain, false).or_else(|| topo_order(chain, true)).unwrap_or_else(|| (0..n).collect());
    let mut pos = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    let weight: Vec<f64> = chain
        .units
        .iter()
        .map(|u| u.descriptor.latency_cycles as f64 / u.clock.hz)
        .collect();
    let mut best = weight.clone();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    for &i in &order {
        for l in chain.links.iter().filter(|l| l.dst_unit == i && pos[l.src_unit] < pos[i]) {
            let hop = if l.via == LinkKind::Crossbar { hop_latency_s } else { 0.0 };
            let cand = best[l.src_unit] + hop + weight[i];
            if cand > best[i] {
                best[i] = cand;
                prev[i] = Some(l.src_unit);
            }
        }
    }
    let Some((end, &total)) = best.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
        return (0.0, Vec::new());
    };
    let mut path = vec![chain.units[end].name.clone()];
    let mut cur = end;
    while let Some(p) = prev[cur] {
        path.push(chain.units[p].name.clone());
        cur = p;
    }
    path.reverse();
    (total, path)
}

fn topo_order(chain: &ChainGraph, direct_only: bool) -> Option<Vec<usize>> {
    let n = chain.units.len();
    let mut indeg = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for l in &chain.links {
        if direct_only && l.via != LinkKind::Direct {
            continue;
        }
        adj[l.src_unit].push(l.dst_unit);
        indeg[l.dst_unit] += 1;
    }
    let mut q: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(i) = q.pop_front() {
        out.push(i);
        for &j in &adj[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                q.push_back(j);
            }
        }
    }
    (out.len() == n).then_some(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chain::parse_chain_spec;
    use crate::dsp::PassThroughKind;
    use crate::unit::{Catalog, RegisterSpec};

    fn kind(name: &str, throughput: f64, latency: u64, cells: u64, dsp: u64) -> UnitDescriptor {
        UnitDescriptor {
            kind: name.into(),
            n_inputs: 1,
            n_outputs: 1,
            samples_in_per_step: 64,
            samples_out_per_step: 64,
            throughput_sps: throughput,
            latency_cycles: latency,
            cycles_per_step: 64,
            cost_logic_cells: cells,
            cost_dsp_slices: dsp,
            register_map: vec![RegisterSpec::new(0, "window", 1, 4096, 64)],
        }
    }

    fn catalog() -> Catalog {
        let c = Catalog::new();
        for d in [
            kind("a", 3e8, 1500, 1000, 1),
            kind("b", 3e8, 1470, 1000, 1),
            kind("slow", 79e6, 1, 10, 0),
        ] {
            c.register_kind(d, Arc::new(PassThroughKind)).unwrap();
        }
        c
    }

    fn two(cat: &Catalog, k1: &str, k2: &str, budget_us: f64, rate: f64) -> ChainGraph {
        let text = format!(
            "[chain]\nname = \"c\"\nsample_rate_sps = {rate}\nlatency_budget_us = {budget_us}\n\
             [[unit]]\nname = \"x\"\nkind = \"{k1}\"\n[[unit]]\nname = \"y\"\nkind = \"{k2}\"\n\
             [[link]]\nsrc = \"x\"\ndst = \"y\"\n"
        );
        parse_chain_spec(&text, cat).unwrap()
    }

    #[test]
    fn latency_sums_unit_latencies() {
        let cat = catalog();
        let g = two(&cat, "a", "b", 10.0, 1.0);
        let (t, path) = critical_path(&g, 1e-6);
        assert!((t - 9.9e-6).abs() < 1e-15);
        assert_eq!(path, vec!["x", "y"]);
        let r = evaluate(&PlatformModel::default(), &[&g], 0);
        assert!(r.latency_ok && r.admitted());
    }

    #[test]
    fn slow_unit_fails_throughput() {
        let cat = catalog();
        let g = two(&cat, "a", "slow", 100.0, 80e6);
        let r = evaluate(&PlatformModel::default(), &[&g], 0);
        assert!(!r.throughput_ok);
        assert!(r.resource_ok && r.latency_ok);
        assert!(r.render().contains("verdict=rejected"));
    }

    #[test]
    fn prr_reservation_counts_once() {
        let cat = catalog();
        let mut g = two(&cat, "a", "b", 100.0, 1.0);
        g.units[0].prr = Some("p0".into());
        let platform = PlatformModel::default().with_prr("p0", 4000, 4);
        let r = evaluate(&platform, &[&g], 0);
        assert_eq!(r.resources.cells_demanded, 4000 + 1000);
        assert!(r.resource_ok);
        let small = PlatformModel::default().with_prr("p0", 999, 4);
        assert!(!evaluate(&small, &[&g], 0).resource_ok);
    }
}

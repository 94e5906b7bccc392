//! Chain-spec files: TOML with `[chain]`, `[[unit]]` and `[[link]]` tables,
//! or the same structure as a single JSON object.
//!
//! ```toml
//! [chain]
//! name = "tx"
//! sample_rate_sps = 20e6
//! latency_budget_us = 10.0
//!
//! [[unit]]
//! name = "crc0"
//! kind = "crc"
//!
//! [[unit]]
//! name = "coder0"
//! kind = "coder"
//! params = { rate = 0 }
//!
//! [[link]]
//! src = "crc0"
//! dst = "coder0:0"
//! via = "direct"
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::unit::{
    min_link_capacity, Catalog, ClockDomain, IoShape, LinkKind, UnitDescriptor, UnitError,
    DEFAULT_LINK_CAPACITY,
};

use super::ChainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub name: String,
    #[serde(default)]
    pub latency_budget_us: Option<f64>,
    #[serde(default)]
    pub sample_rate_sps: f64,
    /// Clock domain name → frequency in Hz.
    #[serde(default)]
    pub clocks: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    pub name: String,
    pub kind: String,
    /// Register name → value. Negative values are stored two's complement.
    #[serde(default)]
    pub params: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<String>,
}

fn direct() -> LinkKind {
    LinkKind::Direct
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub src: String,
    pub dst: String,
    #[serde(default = "direct")]
    pub via: LinkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub chain: ChainSection,
    #[serde(default, alias = "units")]
    pub unit: Vec<UnitSpec>,
    #[serde(default, alias = "links")]
    pub link: Vec<LinkSpec>,
}

impl ChainSpec {
    pub fn parse(text: &str) -> Result<Self, ChainError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ChainError::SyntaxError(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ChainError::SyntaxError(e.to_string()))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortName {
    pub unit: String,
    pub port: usize,
}

impl PortName {
    fn parse(s: &str) -> Result<Self, ChainError> {
        let (unit, port) = match s.split_once(':') {
            Some((u, p)) => (
                u,
                p.trim()
                    .parse()
                    .map_err(|_| ChainError::SyntaxError(format!("bad port in {s:?}")))?,
            ),
            None => (s, 0),
        };
        let unit = unit.trim();
        if unit.is_empty() {
            return Err(ChainError::SyntaxError(format!("empty unit name in {s:?}")));
        }
        Ok(Self {
            unit: unit.to_string(),
            port,
        })
    }
}

impl fmt::Display for PortName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.unit, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphUnit {
    pub name: String,
    pub kind: String,
    pub params: BTreeMap<String, u32>,
    pub descriptor: UnitDescriptor,
    pub shape: IoShape,
    pub clock: ClockDomain,
    pub prr: Option<String>,
    pub node: Option<u8>,
    pub share: Option<String>,
}

impl GraphUnit {
    /// Runs behind a crossbar endpoint rather than on its own thread.
    pub fn is_wrapped(&self) -> bool {
        self.share.is_some() || self.node.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLink {
    pub src: PortName,
    pub dst: PortName,
    pub src_unit: usize,
    pub dst_unit: usize,
    pub via: LinkKind,
    pub capacity: usize,
}

/// A validated chain: units resolved against the catalog, links checked,
/// boundary ports identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGraph {
    pub name: String,
    pub sample_rate_sps: f64,
    pub latency_budget_s: Option<f64>,
    pub units: Vec<GraphUnit>,
    pub links: Vec<GraphLink>,
    /// Unlinked input ports, fed by the chain's user.
    pub inputs: Vec<PortName>,
    /// Unlinked output ports.
    pub outputs: Vec<PortName>,
}

impl ChainGraph {
    pub fn unit(&self, name: &str) -> Option<&GraphUnit> {
        self.units.iter().find(|u| u.name == name)
    }

    pub fn unit_index(&self, name: &str) -> Option<usize> {
        self.units.iter().position(|u| u.name == name)
    }

    pub fn boundary_capacity(&self, port: &PortName, input: bool) -> usize {
        let u = self.unit(&port.unit).expect("boundary port of a known unit");
        let need = if input { u.shape.consume } else { u.shape.produce };
        DEFAULT_LINK_CAPACITY.max(need)
    }
}

fn param_value(unit: &str, name: &str, v: i64) -> Result<u32, ChainError> {
    if (0..=u32::MAX as i64).contains(&v) {
        Ok(v as u32)
    } else if (i32::MIN as i64..0).contains(&v) {
        Ok(v as i32 as u32)
    } else {
        Err(ChainError::Unit {
            unit: unit.to_string(),
            source: UnitError::ParamOutOfRange {
                name: name.to_string(),
                value: v as u32,
            },
        })
    }
}

pub fn parse_chain_spec(text: &str, catalog: &Catalog) -> Result<ChainGraph, ChainError> {
    resolve(ChainSpec::parse(text)?, catalog)
}

/// Resolves and checks an already-parsed spec.
pub fn resolve(spec: ChainSpec, catalog: &Catalog) -> Result<ChainGraph, ChainError> {
    let header = &spec.chain;
    if header.name.trim().is_empty() {
        return Err(ChainError::SyntaxError("chain name is empty".into()));
    }
    if !(header.sample_rate_sps >= 0.0 && header.sample_rate_sps.is_finite()) {
        return Err(ChainError::SyntaxError("sample_rate_sps must be finite and ≥ 0".into()));
    }
    if let Some(b) = header.latency_budget_us {
        if !(b > 0.0 && b.is_finite()) {
            return Err(ChainError::SyntaxError("latency_budget_us must be positive".into()));
        }
    }
    if spec.unit.is_empty() {
        return Err(ChainError::SyntaxError("chain has no units".into()));
    }

    let mut units = Vec::with_capacity(spec.unit.len());
    let mut seen = BTreeSet::new();
    for u in &spec.unit {
        if !seen.insert(u.name.as_str()) {
            return Err(ChainError::SyntaxError(format!("duplicate unit name {}", u.name)));
        }
        let entry = catalog
            .get(&u.kind)
            .ok_or_else(|| ChainError::UnknownKind(u.kind.clone()))?;
        let params = u
            .params
            .iter()
            .map(|(k, &v)| Ok((k.clone(), param_value(&u.name, k, v)?)))
            .collect::<Result<BTreeMap<_, _>, ChainError>>()?;
        let unit_err = |source| ChainError::Unit {
            unit: u.name.clone(),
            source,
        };
        let regs = catalog.resolve_params(&u.kind, &params).map_err(unit_err)?;
        let shape = entry.io_shape(&regs).map_err(unit_err)?;
        let clock_name = u.clock.clone().unwrap_or_else(|| "fabric".to_string());
        let hz = match header.clocks.get(&clock_name) {
            Some(&hz) => hz,
            None if clock_name == "fabric" => ClockDomain::default().hz,
            None => return Err(ChainError::InvalidClock(format!("{} uses undeclared clock {clock_name}", u.name))),
        };
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(ChainError::InvalidClock(format!("{clock_name} = {hz}")));
        }
        let d = &entry.descriptor;
        let wrapped = u.share.is_some() || u.node.is_some();
        if wrapped && (d.n_inputs != 1 || d.n_outputs != 1) {
            return Err(ChainError::InvalidSharing(format!(
                "{} must have one input and one output to sit behind the crossbar",
                u.name
            )));
        }
        if wrapped && u.prr.is_some() {
            return Err(ChainError::InvalidSharing(format!(
                "{} cannot be both wrapped and in a PRR",
                u.name
            )));
        }
        units.push(GraphUnit {
            name: u.name.clone(),
            kind: u.kind.clone(),
            params,
            descriptor: d.clone(),
            shape,
            clock: ClockDomain { name: clock_name, hz },
            prr: u.prr.clone(),
            node: u.node,
            share: u.share.clone(),
        });
    }

    let index: BTreeMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.name.as_str(), i)).collect();
    let mut links = Vec::with_capacity(spec.link.len());
    let mut used_in = BTreeSet::new();
    let mut used_out = BTreeSet::new();
    for l in &spec.link {
        let src = PortName::parse(&l.src)?;
        let dst = PortName::parse(&l.dst)?;
        let &si = index
            .get(src.unit.as_str())
            .ok_or_else(|| ChainError::DanglingPort(src.to_string()))?;
        let &di = index
            .get(dst.unit.as_str())
            .ok_or_else(|| ChainError::DanglingPort(dst.to_string()))?;
        if src.port >= units[si].descriptor.n_outputs {
            return Err(ChainError::DanglingPort(src.to_string()));
        }
        if dst.port >= units[di].descriptor.n_inputs {
            return Err(ChainError::DanglingPort(dst.to_string()));
        }
        if !used_in.insert(dst.clone()) {
            return Err(ChainError::Unit {
                unit: dst.unit.clone(),
                source: UnitError::PortOccupied,
            });
        }
        if !used_out.insert(src.clone()) {
            return Err(ChainError::Unit {
                unit: src.unit.clone(),
                source: UnitError::PortOccupied,
            });
        }
        let wrapped = units[si].is_wrapped() || units[di].is_wrapped();
        if wrapped && l.via != LinkKind::Crossbar {
            return Err(ChainError::InvalidSharing(format!(
                "link {src} -> {dst} touches a wrapped unit and must go via crossbar"
            )));
        }
        let needed = min_link_capacity(units[si].shape.produce, units[di].shape.consume);
        let capacity = match l.capacity {
            Some(0) => {
                return Err(ChainError::Unit {
                    unit: dst.unit.clone(),
                    source: UnitError::ZeroCapacity,
                })
            }
            Some(c) if c < needed => {
                return Err(ChainError::CapacityTooSmall {
                    link: format!("{src} -> {dst}"),
                    capacity: c,
                    needed,
                })
            }
            Some(c) => c,
            None => DEFAULT_LINK_CAPACITY.max(needed),
        };
        links.push(GraphLink {
            src,
            dst,
            src_unit: si,
            dst_unit: di,
            via: l.via,
            capacity,
        });
    }

    check_direct_acyclic(&units, &links)?;
    check_connected(&units, &links)?;

    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for u in &units {
        for port in 0..u.descriptor.n_inputs {
            let p = PortName {
                unit: u.name.clone(),
                port,
            };
            if !used_in.contains(&p) {
                inputs.push(p);
            }
        }
        for port in 0..u.descriptor.n_outputs {
            let p = PortName {
                unit: u.name.clone(),
                port,
            };
            if !used_out.contains(&p) {
                outputs.push(p);
            }
        }
    }

    Ok(ChainGraph {
        name: header.name.clone(),
        sample_rate_sps: header.sample_rate_sps,
        latency_budget_s: header.latency_budget_us.map(|us| us * 1e-6),
        units,
        links,
        inputs,
        outputs,
    })
}

fn check_direct_acyclic(units: &[GraphUnit], links: &[GraphLink]) -> Result<(), ChainError> {
    let n = units.len();
    let mut indeg = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for l in links.iter().filter(|l| l.via == LinkKind::Direct) {
        adj[l.src_unit].push(l.dst_unit);
        indeg[l.dst_unit] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut visited = 0;
    while let Some(i) = queue.pop_front() {
        visited += 1;
        for &j in &adj[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push_back(j);
            }
        }
    }
    if visited == n {
        Ok(())
    } else {
        let stuck: Vec<&str> = (0..n).filter(|&i| indeg[i] > 0).map(|i| units[i].name.as_str()).collect();
        Err(ChainError::DirectCycle(stuck.join(", ")))
    }
}

fn check_connected(units: &[GraphUnit], links: &[GraphLink]) -> Result<(), ChainError> {
    let n = units.len();
    let mut adj = vec![Vec::new(); n];
    for l in links {
        adj[l.src_unit].push(l.dst_unit);
        adj[l.dst_unit].push(l.src_unit);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    let unreached: Vec<&str> = (0..n).filter(|&i| !seen[i]).map(|i| units[i].name.as_str()).collect();
    if unreached.is_empty() {
        Ok(())
    } else {
        Err(ChainError::Disconnected(format!("unreachable: {}", unreached.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::default_catalog;

    const TX: &str = r#"
[chain]
name = "tx"
sample_rate_sps = 20e6

[[unit]]
name = "crc0"
kind = "crc"

[[unit]]
name = "coder0"
kind = "coder"
params = { rate = 0 }

[[unit]]
name = "qam0"
kind = "qam"

[[unit]]
name = "ifft0"
kind = "ifft"

[[link]]
src = "crc0"
dst = "coder0"

[[link]]
src = "coder0:0"
dst = "qam0:0"

[[link]]
src = "qam0"
dst = "ifft0"
capacity = 4096
"#;

    #[test]
    fn four_unit_tx() {
        let g = parse_chain_spec(TX, &default_catalog()).unwrap();
        assert_eq!(g.units.len(), 4);
        assert_eq!(g.links.len(), 3);
        assert!(g.links.iter().all(|l| l.via == LinkKind::Direct));
        assert_eq!(g.inputs, vec![PortName { unit: "crc0".into(), port: 0 }]);
        assert_eq!(g.outputs, vec![PortName { unit: "ifft0".into(), port: 0 }]);
        // coder emits 3072-bit windows, above the default depth.
        assert_eq!(g.links[0].capacity, 1530);
        assert_eq!(g.links[1].capacity, 3072);
    }

    #[test]
    fn json_form_matches() {
        let spec = ChainSpec::parse(TX).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let a = parse_chain_spec(&json, &default_catalog()).unwrap();
        let b = parse_chain_spec(TX, &default_catalog()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_kinds() {
        let cat = default_catalog();
        let e = parse_chain_spec(&TX.replace("\"coder\"", "\"ldpc\""), &cat).unwrap_err();
        assert_eq!(e, ChainError::UnknownKind("ldpc".into()));
        let e = parse_chain_spec(&TX.replace("dst = \"ifft0\"", "dst = \"ifft0:3\""), &cat).unwrap_err();
        assert!(matches!(e, ChainError::DanglingPort(_)));
        let e = parse_chain_spec(&TX.replace("dst = \"ifft0\"", "dst = \"fft9\""), &cat).unwrap_err();
        assert!(matches!(e, ChainError::DanglingPort(_)));
        let e = parse_chain_spec("[chain\nname=", &cat).unwrap_err();
        assert!(matches!(e, ChainError::SyntaxError(_)));
        let e = parse_chain_spec(&TX.replace("capacity = 4096", "capacity = 16"), &cat).unwrap_err();
        assert!(matches!(e, ChainError::CapacityTooSmall { needed: 64, .. }));
        let e = parse_chain_spec(&TX.replace("params = { rate = 0 }", "params = { rate = 7 }"), &cat)
            .unwrap_err();
        assert_eq!(e.code(), "ParamOutOfRange");
    }

    #[test]
    fn cycles_and_islands() {
        let cat = default_catalog();
        let cyc = r#"
[chain]
name = "loop"
[[unit]]
name = "a"
kind = "passthrough"
[[unit]]
name = "b"
kind = "passthrough"
[[link]]
src = "a"
dst = "b"
[[link]]
src = "b"
dst = "a"
"#;
        assert!(matches!(parse_chain_spec(cyc, &cat), Err(ChainError::DirectCycle(_))));
        let ok = cyc.replacen("dst = \"a\"", "dst = \"a\"\nvia = \"crossbar\"", 1);
        assert!(parse_chain_spec(&ok, &cat).is_ok());
        let island = r#"
[chain]
name = "two"
[[unit]]
name = "a"
kind = "passthrough"
[[unit]]
name = "b"
kind = "passthrough"
"#;
        assert!(matches!(parse_chain_spec(island, &cat), Err(ChainError::Disconnected(_))));
    }

    #[test]
    fn shared_units_need_crossbar_links() {
        let cat = default_catalog();
        let text = r#"
[chain]
name = "s"
[[unit]]
name = "a"
kind = "passthrough"
[[unit]]
name = "s"
kind = "passthrough"
share = "pool"
[[link]]
src = "a"
dst = "s"
"#;
        assert!(matches!(parse_chain_spec(text, &cat), Err(ChainError::InvalidSharing(_))));
        let fixed = text.replace("dst = \"s\"", "dst = \"s\"\nvia = \"crossbar\"");
        assert!(parse_chain_spec(&fixed, &cat).is_ok());
    }
}

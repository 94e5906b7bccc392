use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::chain::{
    format_rate, fronthaul_rate, ChainError, ChainManager, HostRequest, UnitSpec,
};
use crate::cluster::{connect, AcceptLoop, ClusterError, ClusterListener, NodeLink};
use crate::crossbar::Crossbar;
use crate::mac::{Mac, MacError};
use crate::rf::{RfError, RfFrontend};

use super::{ControlClient, ControlError, ControlRequest, ControlResponse, ErrorBody, RemoteHost};

/// One radio node: chain manager, RF registers, node links and an optional
/// MAC. Answers control requests.
pub struct Node {
    manager: ChainManager,
    rf: RfFrontend,
    links: Mutex<Vec<NodeLink>>,
    accept: Mutex<Option<AcceptLoop>>,
    mac: Mutex<Option<Mac>>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("device", &self.manager.local_device()).finish()
    }
}

fn fail(code: &str, detail: impl Into<String>) -> ErrorBody {
    ErrorBody {
        code: code.to_string(),
        detail: detail.into(),
        report: None,
    }
}

impl From<ChainError> for ErrorBody {
    fn from(e: ChainError) -> Self {
        let report = match &e {
            ChainError::AdmissionFailed(r) => Some((**r).clone()),
            _ => None,
        };
        ErrorBody {
            code: e.code().to_string(),
            detail: e.to_string(),
            report,
        }
    }
}

impl From<RfError> for ErrorBody {
    fn from(e: RfError) -> Self {
        fail(e.code(), e.to_string())
    }
}

impl From<ClusterError> for ErrorBody {
    fn from(e: ClusterError) -> Self {
        fail(e.code(), e.to_string())
    }
}

impl From<MacError> for ErrorBody {
    fn from(e: MacError) -> Self {
        fail(e.code(), e.to_string())
    }
}

impl From<ControlError> for ErrorBody {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Rejected { code, detail, report } => ErrorBody {
                code,
                detail,
                report: report.map(|r| *r),
            },
            other => fail(other.code(), other.to_string()),
        }
    }
}

fn args<T: DeserializeOwned>(v: &Value) -> Result<T, ErrorBody> {
    let v = if v.is_null() { json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| fail("BadArguments", e.to_string()))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("control payloads serialize")
}

#[derive(Deserialize)]
struct DeployArgs {
    spec: String,
}

#[derive(Deserialize)]
struct ChainArg {
    chain: String,
}

#[derive(Deserialize)]
struct ParamArgs {
    chain: String,
    unit: String,
    register: String,
    #[serde(default)]
    value: Option<u32>,
}

#[derive(Deserialize)]
struct RfArgs {
    param: String,
    #[serde(default)]
    value: Option<f64>,
}

#[derive(Deserialize)]
struct FullArgs {
    specs: Vec<String>,
    bitstream_bytes: u64,
}

#[derive(Deserialize)]
struct PrrArgs {
    prr: String,
    kind: String,
    #[serde(default)]
    params: BTreeMap<String, i64>,
    bitstream_bytes: u64,
}

#[derive(Deserialize)]
struct FronthaulArgs {
    antennas: u32,
    rate: f64,
    bits: u32,
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum HostArgs {
    Reserve { request: HostRequest },
    Commit { token: String },
    Release { token: String },
}

impl Node {
    pub fn new(device: u8) -> Self {
        Self::with_manager(ChainManager::with_defaults(device))
    }

    pub fn with_manager(manager: ChainManager) -> Self {
        Self {
            manager,
            rf: RfFrontend::new(),
            links: Mutex::new(Vec::new()),
            accept: Mutex::new(None),
            mac: Mutex::new(None),
        }
    }

    pub fn manager(&self) -> &ChainManager {
        &self.manager
    }

    pub fn rf(&self) -> &RfFrontend {
        &self.rf
    }

    pub fn crossbar(&self) -> &Crossbar {
        self.manager.crossbar()
    }

    pub fn device(&self) -> u8 {
        self.manager.local_device()
    }

    /// Starts accepting node links on `addr`.
    pub fn listen_cluster(&self, addr: &str) -> Result<SocketAddr, ClusterError> {
        let l = ClusterListener::bind(addr, self.crossbar())?.serve();
        let a = l.local_addr();
        *self.accept.lock().unwrap_or_else(|e| e.into_inner()) = Some(l);
        Ok(a)
    }

    pub fn connect_peer(&self, addr: &str) -> Result<NodeLink, ClusterError> {
        let link = connect(addr, self.crossbar())?;
        self.links.lock().unwrap_or_else(|e| e.into_inner()).push(link.clone());
        Ok(link)
    }

    /// Lets chains place units on the node whose control service is at
    /// `addr`. Returns that node's device id.
    pub fn add_peer_control(&self, addr: &str) -> Result<u8, ControlError> {
        let mut c = ControlClient::connect(addr)?;
        let stats = c.call("stats", json!({}))?;
        let dev = stats["manager"]["local_device"]
            .as_u64()
            .and_then(|d| u8::try_from(d).ok())
            .ok_or_else(|| ControlError::Protocol("stats without local_device".into()))?;
        self.manager.add_peer(dev, Arc::new(RemoteHost::new(c)));
        Ok(dev)
    }

    pub fn links(&self) -> Vec<NodeLink> {
        let mut v = self.links.lock().unwrap_or_else(|e| e.into_inner()).clone();
        if let Some(a) = self.accept.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            v.extend(a.links());
        }
        v
    }

    pub fn attach_mac(&self, mac: Mac) {
        *self.mac.lock().unwrap_or_else(|e| e.into_inner()) = Some(mac);
    }

    pub fn with_mac<R>(&self, f: impl FnOnce(Option<&Mac>) -> R) -> R {
        f(self.mac.lock().unwrap_or_else(|e| e.into_inner()).as_ref())
    }

    /// Answers one request line. Never panics on bad input.
    pub fn handle_line(&self, line: &str) -> ControlResponse {
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return ControlResponse::error(None, fail("MalformedRequest", e.to_string())),
        };
        let id = v.get("id").and_then(Value::as_u64);
        match serde_json::from_value::<ControlRequest>(v) {
            Ok(req) => self.handle(&req),
            Err(e) => ControlResponse::error(id, fail("MalformedRequest", e.to_string())),
        }
    }

    pub fn handle(&self, req: &ControlRequest) -> ControlResponse {
        match self.dispatch(&req.verb, &req.args) {
            Ok(p) => ControlResponse::ok(req.id, p),
            Err(e) => ControlResponse::error(Some(req.id), e),
        }
    }

    fn dispatch(&self, verb: &str, a: &Value) -> Result<Value, ErrorBody> {
        let m = &self.manager;
        match verb {
            "catalog" => Ok(json!({ "kinds": m.catalog().descriptors() })),
            "deploy" => {
                let a: DeployArgs = args(a)?;
                let (id, report) = m.deploy_text(&a.spec)?;
                Ok(json!({ "id": id, "report": report }))
            }
            "teardown" => {
                let a: ChainArg = args(a)?;
                m.teardown(&a.chain)?;
                Ok(json!({ "id": a.chain }))
            }
            "list" => Ok(json!({ "chains": m.list(), "prrs": m.prrs() })),
            "set-param" => {
                let a: ParamArgs = args(a)?;
                let value = a.value.ok_or_else(|| fail("BadArguments", "missing value"))?;
                m.set_param(&a.chain, &a.unit, &a.register, value)?;
                Ok(json!({ "chain": a.chain, "unit": a.unit, "register": a.register, "value": value }))
            }
            "get-param" => {
                let a: ParamArgs = args(a)?;
                let value = m.get_param(&a.chain, &a.unit, &a.register)?;
                Ok(json!({ "chain": a.chain, "unit": a.unit, "register": a.register, "value": value }))
            }
            "rf-set" => {
                let a: RfArgs = args(a)?;
                let value = a.value.ok_or_else(|| fail("BadArguments", "missing value"))?;
                Ok(to_value(&self.rf.set_rf_param(&a.param, value)?))
            }
            "rf-get" => {
                let a: RfArgs = args(a)?;
                let value = self.rf.get_rf_param(&a.param)?;
                Ok(json!({ "param": a.param, "value": value }))
            }
            "stats" => Ok(self.stats()),
            "reconfig-full" => {
                let a: FullArgs = args(a)?;
                let graphs = a
                    .specs
                    .iter()
                    .map(|s| m.parse(s))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(to_value(&m.reconfigure_full(graphs, a.bitstream_bytes)?))
            }
            "reconfig-prr" => {
                let a: PrrArgs = args(a)?;
                let occupant = UnitSpec {
                    name: String::new(),
                    kind: a.kind,
                    params: a.params,
                    prr: Some(a.prr.clone()),
                    node: None,
                    share: None,
                    clock: None,
                };
                Ok(to_value(&m.reconfigure_prr(&a.prr, &occupant, a.bitstream_bytes)?))
            }
            "fronthaul-rate" => {
                let a: FronthaulArgs = args(a)?;
                let bps = fronthaul_rate(a.antennas, a.rate, a.bits)?;
                let (plain, human) = format_rate(bps);
                Ok(json!({ "bps": bps, "plain": plain, "human": human }))
            }
            "host" => match args::<HostArgs>(a)? {
                HostArgs::Reserve { request } => Ok(to_value(&m.host_reserve(&request)?)),
                HostArgs::Commit { token } => Ok(json!({ "addr": m.host_commit(&token)? })),
                HostArgs::Release { token } => {
                    m.host_release(&token)?;
                    Ok(json!({ "token": token }))
                }
            },
            "subscribe" => Err(fail("Unsupported", "subscribe needs a control connection")),
            other => Err(fail("UnknownVerb", other)),
        }
    }

    pub fn stats(&self) -> Value {
        let links: Vec<_> = self.links().iter().map(NodeLink::stats).collect();
        let mac = self.with_mac(|m| m.map(|m| (m.stats(), m.hp_budget())));
        let mut v = json!({
            "manager": self.manager.stats(),
            "crossbar": self.crossbar().stats(),
            "links": links,
            "rf": self.rf.config(),
            "events_published": self.manager.events().published(),
        });
        if let Some((s, hp)) = mac {
            v["mac"] = to_value(&s);
            v["hp"] = to_value(&hp);
        }
        v
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        for l in self.links.lock().unwrap_or_else(|e| e.into_inner()).drain(..) {
            l.close();
        }
        if let Some(mut a) = self.accept.lock().unwrap_or_else(|e| e.into_inner()).take() {
            a.stop();
            for l in a.links() {
                l.close();
            }
        }
        self.manager.teardown_all();
    }
}

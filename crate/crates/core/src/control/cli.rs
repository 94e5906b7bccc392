//! The `sdrctl` command line. Verbs mirror the control protocol one to one.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::chain::{AdmissionReport, ChainRecord, FullReconfigReport, PrrReport};

use super::{ControlClient, ControlError, ControlServer, Node, Status};

pub const DEFAULT_CONTROL: &str = "127.0.0.1:7700";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONNECTION: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sdrctl", version, about = "Control a software radio node")]
pub struct Cli {
    /// Control service address. Verbs without it run against an in-process
    /// node; `node` serves on it.
    #[arg(long, global = true, value_name = "HOST:PORT", conflicts_with = "local")]
    pub control: Option<String>,
    /// Run against a node inside this process.
    #[arg(long, global = true)]
    pub local: bool,
    /// Device id of the in-process node.
    #[arg(long, global = true, default_value_t = 1)]
    pub device: u8,
    /// Print the raw JSON payload instead of the rendered text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List unit kinds with their descriptors.
    Catalog,
    /// Admit and start a chain from a chain spec file.
    Deploy { spec: PathBuf },
    Teardown { chain: String },
    List,
    SetParam {
        chain: String,
        unit: String,
        register: String,
        value: u32,
    },
    GetParam {
        chain: String,
        unit: String,
        register: String,
    },
    RfSet { param: String, value: f64 },
    RfGet { param: String },
    Stats,
    /// Replace every chain with the given specs.
    ReconfigFull {
        #[arg(long, value_name = "BYTES")]
        bitstream_bytes: u64,
        #[arg(required = true)]
        specs: Vec<PathBuf>,
    },
    /// Swap the occupant of one reconfigurable region.
    ReconfigPrr {
        prr: String,
        kind: String,
        #[arg(long, value_name = "BYTES")]
        bitstream_bytes: u64,
        /// Register assignment `name=value`; repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    FronthaulRate {
        #[arg(long)]
        antennas: u32,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        bits: u32,
    },
    /// Stream event records until interrupted or `--count` arrive.
    Subscribe {
        #[arg(long)]
        count: Option<u64>,
    },
    /// Two-phase unit hosting for peer nodes.
    #[command(subcommand)]
    Host(HostCommand),
    /// Run a node: control service plus optional node links.
    Node(NodeArgs),
}

#[derive(Debug, Subcommand)]
pub enum HostCommand {
    /// Reserve with a JSON host request.
    Reserve { request: String },
    Commit { token: String },
    Release { token: String },
}

#[derive(Debug, Args)]
pub struct NodeArgs {
    /// Accept node links on this address.
    #[arg(long, value_name = "HOST:PORT")]
    pub listen: Option<String>,
    /// Dial a node link; repeatable.
    #[arg(long, value_name = "HOST:PORT")]
    pub peer: Vec<String>,
    /// Control address of a peer that may host units; repeatable.
    #[arg(long = "peer-control", value_name = "HOST:PORT")]
    pub peer_control: Vec<String>,
    /// Scales reconfiguration pauses.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
}

/// Protocol verb a subcommand maps to.
pub fn verb_of(c: &Command) -> Option<&'static str> {
    Some(match c {
        Command::Catalog => "catalog",
        Command::Deploy { .. } => "deploy",
        Command::Teardown { .. } => "teardown",
        Command::List => "list",
        Command::SetParam { .. } => "set-param",
        Command::GetParam { .. } => "get-param",
        Command::RfSet { .. } => "rf-set",
        Command::RfGet { .. } => "rf-get",
        Command::Stats => "stats",
        Command::ReconfigFull { .. } => "reconfig-full",
        Command::ReconfigPrr { .. } => "reconfig-prr",
        Command::FronthaulRate { .. } => "fronthaul-rate",
        Command::Subscribe { .. } => "subscribe",
        Command::Host(_) => "host",
        Command::Node(_) => return None,
    })
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Connection(String),
    Rejected(String),
}

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Connection(m) => Failure::Connection(m),
            ControlError::Protocol(m) => Failure::Connection(format!("protocol: {m}")),
            ControlError::EndpointBusy(m) => Failure::Rejected(format!("EndpointBusy: {m}")),
            ControlError::Rejected { code, detail, report } => {
                let mut s = format!("{code}: {detail}");
                if let Some(r) = report {
                    s.push('\n');
                    s.push_str(r.render().trim_end());
                }
                Failure::Rejected(s)
            }
        }
    }
}

fn read_file(p: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn parse_assignments(v: &[String]) -> Result<serde_json::Map<String, Value>, Failure> {
    v.iter()
        .map(|a| {
            let (k, val) = a
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("expected NAME=VALUE, got {a}")))?;
            let n: i64 = val
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("{k}: not an integer: {val}")))?;
            Ok((k.trim().to_string(), json!(n)))
        })
        .collect()
}

/// Request arguments for a verb subcommand.
fn request_args(c: &Command) -> Result<Value, Failure> {
    Ok(match c {
        Command::Catalog | Command::List | Command::Stats | Command::Subscribe { .. } => json!({}),
        Command::Deploy { spec } => json!({ "spec": read_file(spec)? }),
        Command::Teardown { chain } => json!({ "chain": chain }),
        Command::SetParam {
            chain,
            unit,
            register,
            value,
        } => json!({ "chain": chain, "unit": unit, "register": register, "value": value }),
        Command::GetParam {
            chain,
            unit,
            register,
        } => json!({ "chain": chain, "unit": unit, "register": register }),
        Command::RfSet { param, value } => json!({ "param": param, "value": value }),
        Command::RfGet { param } => json!({ "param": param }),
        Command::ReconfigFull {
            bitstream_bytes,
            specs,
        } => {
            let texts = specs.iter().map(read_file).collect::<Result<Vec<_>, _>>()?;
            json!({ "specs": texts, "bitstream_bytes": bitstream_bytes })
        }
        Command::ReconfigPrr {
            prr,
            kind,
            bitstream_bytes,
            params,
        } => json!({
            "prr": prr,
            "kind": kind,
            "params": parse_assignments(params)?,
            "bitstream_bytes": bitstream_bytes,
        }),
        Command::FronthaulRate {
            antennas,
            rate,
            bits,
        } => json!({ "antennas": antennas, "rate": rate, "bits": bits }),
        Command::Host(HostCommand::Reserve { request }) => {
            let r: Value = serde_json::from_str(request)
                .map_err(|e| Failure::Usage(format!("host request: {e}")))?;
            json!({ "op": "reserve", "request": r })
        }
        Command::Host(HostCommand::Commit { token }) => json!({ "op": "commit", "token": token }),
        Command::Host(HostCommand::Release { token }) => json!({ "op": "release", "token": token }),
        Command::Node(_) => unreachable!("node is not a protocol verb"),
    })
}

/// Flattens a JSON value into sorted `path=value` lines.
pub fn flatten(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            Value::String(s) => out.push(format!("{prefix}={s}")),
            other => out.push(format!("{prefix}={other}")),
        }
    }
    let mut out = Vec::new();
    walk("", v, &mut out);
    out.sort();
    out.join("\n")
}

fn render_chains(chains: &[ChainRecord]) -> String {
    let mut s = String::new();
    for c in chains {
        let _ = writeln!(
            s,
            "{} name={} state={} sample_rate_sps={}",
            c.id, c.name, c.state, c.sample_rate_sps
        );
        for u in &c.units {
            let regs: Vec<String> = u.registers.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(
                s,
                "  {} kind={} placement={} steps={} {}",
                u.name,
                u.kind,
                u.placement,
                u.steps,
                regs.join(" ")
            );
        }
    }
    s
}

/// Human-readable rendering of an ok payload.
pub fn render(verb: &str, p: &Value) -> String {
    let typed = || -> Option<String> {
        Some(match verb {
            "catalog" => {
                let kinds: Vec<crate::unit::UnitDescriptor> =
                    serde_json::from_value(p["kinds"].clone()).ok()?;
                kinds.iter().map(|d| d.render()).collect::<Vec<_>>().join("\n")
            }
            "deploy" => {
                let r: AdmissionReport = serde_json::from_value(p["report"].clone()).ok()?;
                format!("{}\n{}", p["id"].as_str()?, r.render().trim_end())
            }
            "teardown" => format!("torn down {}", p["id"].as_str()?),
            "list" => {
                let chains: Vec<ChainRecord> = serde_json::from_value(p["chains"].clone()).ok()?;
                if chains.is_empty() {
                    "no chains".to_string()
                } else {
                    render_chains(&chains).trim_end().to_string()
                }
            }
            "set-param" | "get-param" => format!(
                "{}.{}.{}={}",
                p["chain"].as_str()?,
                p["unit"].as_str()?,
                p["register"].as_str()?,
                p["value"]
            ),
            "rf-set" => {
                let mut s = format!("{}={}", p["param"].as_str()?, p["applied"]);
                if p["snapped"].as_bool()? {
                    let _ = write!(s, " (snapped from {})", p["requested"]);
                }
                s
            }
            "rf-get" => format!("{}={}", p["param"].as_str()?, p["value"]),
            "reconfig-full" => {
                let r: FullReconfigReport = serde_json::from_value(p.clone()).ok()?;
                let ids: Vec<String> = r.deployed.iter().map(|(i, n)| format!("{i}:{n}")).collect();
                format!(
                    "bitstream_bytes={} downtime_s={:.4} torn_down={} deployed={}",
                    r.bitstream_bytes,
                    r.downtime_s,
                    r.torn_down.join(","),
                    ids.join(",")
                )
            }
            "reconfig-prr" => {
                let r: PrrReport = serde_json::from_value(p.clone()).ok()?;
                format!(
                    "prr={} chain={} unit={} {}->{} partial_bitstream_bytes={} swap_time_s={:.4}",
                    r.prr, r.chain, r.unit, r.old_kind, r.new_kind, r.partial_bitstream_bytes, r.swap_time_s
                )
            }
            "fronthaul-rate" => format!("{} b/s ({})", p["plain"].as_str()?, p["human"].as_str()?),
            _ => return None,
        })
    };
    typed().unwrap_or_else(|| flatten(p))
}

enum Target {
    Remote(ControlClient),
    Local(Node),
}

impl Target {
    fn call(&mut self, verb: &str, args: Value) -> Result<Value, ControlError> {
        match self {
            Target::Remote(c) => c.call(verb, args),
            Target::Local(n) => {
                let r = n.handle(&super::ControlRequest {
                    id: 1,
                    verb: verb.to_string(),
                    args,
                });
                match (r.status, r.error) {
                    (Status::Ok, _) => Ok(r.payload.unwrap_or(Value::Null)),
                    (_, Some(b)) => Err(b.into()),
                    (_, None) => Err(ControlError::Protocol("error without detail".into())),
                }
            }
        }
    }
}

fn run_verb(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let verb = verb_of(&cli.command).expect("verb subcommand");
    let args = request_args(&cli.command)?;
    let mut target = match &cli.control {
        Some(addr) => Target::Remote(ControlClient::connect(addr)?),
        None => Target::Local(Node::new(cli.device)),
    };
    if let Command::Subscribe { count } = &cli.command {
        let Target::Remote(c) = &mut target else {
            return Err(Failure::Usage("subscribe needs --control".into()));
        };
        c.call("subscribe", args)?;
        let mut seen = 0u64;
        while count.is_none_or(|n| seen < n) {
            if let Some(e) = c.next_event(Duration::from_secs(1))? {
                let _ = writeln!(out, "{}", serde_json::to_string(&e).expect("events serialize"));
                let _ = out.flush();
                seen += 1;
            }
        }
        return Ok(());
    }
    let p = target.call(verb, args)?;
    let text = if cli.json {
        serde_json::to_string_pretty(&p).expect("payloads serialize")
    } else {
        render(verb, &p)
    };
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn run_node(cli: &Cli, a: &NodeArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let node = Arc::new(Node::new(cli.device));
    node.manager().set_time_scale(a.time_scale);
    if let Some(l) = &a.listen {
        let addr = node
            .listen_cluster(l)
            .map_err(|e| Failure::Connection(e.to_string()))?;
        let _ = writeln!(out, "cluster {addr}");
    }
    for p in &a.peer {
        let link = node
            .connect_peer(p)
            .map_err(|e| Failure::Connection(format!("{p}: {e}")))?;
        let _ = writeln!(out, "link {} -> device {}", p, link.peer_device());
    }
    for p in &a.peer_control {
        let dev = node.add_peer_control(p)?;
        let _ = writeln!(out, "peer-control {p} device {dev}");
    }
    let bind = cli.control.as_deref().unwrap_or(DEFAULT_CONTROL);
    let server = ControlServer::bind(bind, Arc::clone(&node))?;
    let _ = writeln!(out, "control {}", server.local_addr());
    let _ = writeln!(out, "device {} ready", cli.device);
    let _ = out.flush();
    // Serve until stdin closes.
    let mut sink = Vec::new();
    let _ = std::io::Read::read_to_end(&mut std::io::stdin(), &mut sink);
    drop(server);
    Ok(())
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Node(a) => run_node(&cli, a, out),
        _ => run_verb(&cli, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "usage: {m}");
            EXIT_USAGE
        }
        Err(Failure::Connection(m)) => {
            let _ = writeln!(err, "connection: {m}");
            EXIT_CONNECTION
        }
        Err(Failure::Rejected(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_REJECTED
        }
    }
}

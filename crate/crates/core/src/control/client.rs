use std::collections::VecDeque;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::Value;

use crate::chain::{ChainError, HostGrant, HostRequest, PeerHost};
use crate::events::Event;
use crate::framing::EndpointAddr;

use super::{ControlError, ControlRequest, ControlResponse, Status};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Deserialize)]
struct EventLine {
    event: Event,
}

/// Blocking client for one control connection.
pub struct ControlClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    events: VecDeque<Event>,
    /// Bytes of a line cut off by a read timeout.
    partial: String,
}

impl std::fmt::Debug for ControlClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlClient").field("peer", &self.writer.peer_addr().ok()).finish()
    }
}

impl ControlClient {
    pub fn connect(addr: &str) -> Result<Self, ControlError> {
        let addrs = addr
            .to_socket_addrs()
            .map_err(|e| ControlError::Connection(format!("{addr}: {e}")))?;
        let mut last = format!("{addr}: no address");
        for a in addrs {
            match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                Ok(s) => {
                    let _ = s.set_nodelay(true);
                    let writer = s.try_clone().map_err(|e| ControlError::Connection(e.to_string()))?;
                    return Ok(Self {
                        reader: BufReader::new(s),
                        writer,
                        next_id: 1,
                        events: VecDeque::new(),
                        partial: String::new(),
                    });
                }
                Err(e) => last = format!("{a}: {e}"),
            }
        }
        Err(ControlError::Connection(last))
    }

    /// Sends a raw line and returns the next response, for probing the
    /// service with arbitrary bytes.
    pub fn send_raw(&mut self, line: &[u8]) -> Result<ControlResponse, ControlError> {
        let io = |e: std::io::Error| ControlError::Connection(e.to_string());
        self.writer.write_all(line).map_err(io)?;
        if line.last() != Some(&b'\n') {
            self.writer.write_all(b"\n").map_err(io)?;
        }
        self.read_response(None)
    }

    pub fn request(&mut self, verb: &str, args: Value) -> Result<ControlResponse, ControlError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = ControlRequest {
            id,
            verb: verb.to_string(),
            args,
        };
        let mut line = serde_json::to_vec(&req).expect("requests serialize");
        line.push(b'\n');
        self.writer
            .write_all(&line)
            .map_err(|e| ControlError::Connection(e.to_string()))?;
        self.read_response(Some(id))
    }

    /// Payload of an ok response; error responses become `Rejected`.
    pub fn call(&mut self, verb: &str, args: Value) -> Result<Value, ControlError> {
        let r = self.request(verb, args)?;
        match (r.status, r.error) {
            (Status::Ok, _) => Ok(r.payload.unwrap_or(Value::Null)),
            (Status::Error, Some(b)) => Err(b.into()),
            (Status::Error, None) => Err(ControlError::Protocol("error without detail".into())),
        }
    }

    fn read_line(&mut self) -> Result<String, ControlError> {
        match self.reader.read_line(&mut self.partial) {
            Ok(0) => Err(ControlError::Connection("service closed the connection".into())),
            Ok(_) => Ok(std::mem::take(&mut self.partial)),
            Err(e) => Err(ControlError::Connection(e.to_string())),
        }
    }

    fn read_response(&mut self, id: Option<u64>) -> Result<ControlResponse, ControlError> {
        let _ = self.reader.get_ref().set_read_timeout(None);
        loop {
            let line = self.read_line()?;
            if let Ok(e) = serde_json::from_str::<EventLine>(&line) {
                self.events.push_back(e.event);
                continue;
            }
            let r: ControlResponse = serde_json::from_str(&line)
                .map_err(|e| ControlError::Protocol(format!("{e}: {}", line.trim())))?;
            if id.is_none() || r.id == id || r.id.is_none() {
                return Ok(r);
            }
        }
    }

    /// Next event after `subscribe`, or None on timeout.
    pub fn next_event(&mut self, timeout: Duration) -> Result<Option<Event>, ControlError> {
        if let Some(e) = self.events.pop_front() {
            return Ok(Some(e));
        }
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            let _ = self.reader.get_ref().set_read_timeout(Some(left));
            match self.reader.read_line(&mut self.partial) {
                Ok(0) => return Err(ControlError::Connection("service closed the connection".into())),
                Ok(_) => {
                    let line = std::mem::take(&mut self.partial);
                    if let Ok(e) = serde_json::from_str::<EventLine>(&line) {
                        return Ok(Some(e.event));
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Ok(None)
                }
                Err(e) => return Err(ControlError::Connection(e.to_string())),
            }
        }
    }
}

/// Places units on another node through its control service.
pub struct RemoteHost {
    client: Mutex<ControlClient>,
}

impl RemoteHost {
    pub fn new(client: ControlClient) -> Self {
        Self {
            client: Mutex::new(client),
        }
    }

    fn host(&self, args: Value) -> Result<Value, ChainError> {
        let mut c = self.client.lock().unwrap_or_else(|e| e.into_inner());
        c.call("host", args).map_err(|e| match e {
            ControlError::Rejected {
                report: Some(r), ..
            } => ChainError::AdmissionFailed(r),
            other => ChainError::Remote(other.to_string()),
        })
    }
}

fn decode<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, ChainError> {
    serde_json::from_value(v).map_err(|e| ChainError::Remote(e.to_string()))
}

impl PeerHost for RemoteHost {
    fn reserve(&self, request: &HostRequest) -> Result<HostGrant, ChainError> {
        decode(self.host(serde_json::json!({ "op": "reserve", "request": request }))?)
    }

    fn commit(&self, token: &str) -> Result<EndpointAddr, ChainError> {
        let v = self.host(serde_json::json!({ "op": "commit", "token": token }))?;
        decode(v["addr"].clone())
    }

    fn release(&self, token: &str) -> Result<(), ChainError> {
        self.host(serde_json::json!({ "op": "release", "token": token }))
            .map(|_| ())
    }
}

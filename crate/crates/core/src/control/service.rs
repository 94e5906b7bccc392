use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;

use super::{ControlError, ControlRequest, ControlResponse, ErrorBody, Node, MAX_LINE_BYTES};

/// Serves the control protocol for one node. Each connection gets its own
/// thread; responses on a connection come back in request order.
pub struct ControlServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ControlServer {
    pub fn bind(addr: &str, node: Arc<Node>) -> Result<Self, ControlError> {
        let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
            ErrorKind::AddrInUse => ControlError::EndpointBusy(addr.to_string()),
            _ => ControlError::Connection(format!("{addr}: {e}")),
        })?;
        let local = listener.local_addr().map_err(|e| ControlError::Connection(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| ControlError::Connection(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let s = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name("control-accept".into())
            .spawn(move || accept_loop(listener, node, s))
            .expect("spawn control accept");
        Ok(Self {
            addr: local,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, node: Arc<Node>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((s, _)) => {
                let _ = s.set_nonblocking(false);
                let node = Arc::clone(&node);
                let stop = Arc::clone(&stop);
                let _ = std::thread::Builder::new()
                    .name("control-conn".into())
                    .spawn(move || serve_connection(s, node, stop));
            }
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn write_line(w: &Mutex<TcpStream>, v: &impl serde::Serialize) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(v).expect("responses serialize");
    line.push(b'\n');
    w.lock().unwrap_or_else(|e| e.into_inner()).write_all(&line)
}

fn serve_connection(stream: TcpStream, node: Arc<Node>, stop: Arc<AtomicBool>) {
    let Ok(w) = stream.try_clone() else { return };
    let writer = Arc::new(Mutex::new(w));
    let closed = Arc::new(AtomicBool::new(false));
    // Wakes up now and then so a stopped server lets its connections go.
    let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        if stop.load(Ordering::Acquire) {
            break;
        }
        let limit = (MAX_LINE_BYTES + 1 - buf.len().min(MAX_LINE_BYTES)) as u64;
        match (&mut reader).take(limit).read_until(b'\n', &mut buf) {
            Ok(0) if buf.is_empty() => break,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                continue
            }
            Err(_) => break,
        }
        if buf.last() != Some(&b'\n')
            && buf.len() > MAX_LINE_BYTES {
                let r = ControlResponse::error(
                    None,
                    ErrorBody {
                        code: "MalformedRequest".into(),
                        detail: format!("line longer than {MAX_LINE_BYTES} bytes"),
                        report: None,
                    },
                );
                let _ = write_line(&writer, &r);
                break;
            }
        let line = String::from_utf8_lossy(&buf).trim().to_string();
        buf.clear();
        if line.is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<ControlRequest>(&line) {
            Ok(req) if req.verb == "subscribe" => {
                spawn_event_pump(&node, &writer, &closed);
                ControlResponse::ok(req.id, json!({ "subscribed": true }))
            }
            _ => node.handle_line(&line),
        };
        if write_line(&writer, &resp).is_err() {
            break;
        }
    }
    closed.store(true, Ordering::Release);
}

fn spawn_event_pump(node: &Node, writer: &Arc<Mutex<TcpStream>>, closed: &Arc<AtomicBool>) {
    let rx = node.manager().events().subscribe();
    let w = Arc::clone(writer);
    let closed = Arc::clone(closed);
    let _ = std::thread::Builder::new()
        .name("control-events".into())
        .spawn(move || {
            while !closed.load(Ordering::Acquire) {
                match rx.recv_timeout(Duration::from_millis(200)) {
                    Ok(ev) => {
                        if write_line(&w, &json!({ "event": ev })).is_err() {
                            return;
                        }
                    }
                    Err(crossbeam_channel::RecvTimeoutError::Timeout) => {}
                    Err(_) => return,
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use serde_json::json;

    use super::*;
    use crate::control::{ControlClient, Status};
    use crate::events::EventKind;

    fn server() -> (Arc<Node>, ControlServer) {
        let node = Arc::new(Node::new(1));
        let s = ControlServer::bind("127.0.0.1:0", Arc::clone(&node)).unwrap();
        (node, s)
    }

    #[test]
    fn concurrent_clients_get_their_own_answers() {
        let (_n, s) = server();
        let addr = s.local_addr().to_string();
        let workers: Vec<_> = (0..4)
            .map(|k| {
                let addr = addr.clone();
                std::thread::spawn(move || {
                    let mut c = ControlClient::connect(&addr).unwrap();
                    for i in 0..20 {
                        let r = c
                            .request("fronthaul-rate", json!({"antennas": k + 1, "rate": 1e6, "bits": 8}))
                            .unwrap();
                        assert_eq!(r.id, Some(i + 1));
                        assert_eq!(r.payload.unwrap()["bps"], (k + 1) as f64 * 1e6 * 8.0 * 2.0);
                    }
                })
            })
            .collect();
        for w in workers {
            w.join().unwrap();
        }
    }

    #[test]
    fn malformed_lines_keep_the_connection() {
        let (_n, s) = server();
        let mut c = ControlClient::connect(&s.local_addr().to_string()).unwrap();
        let r = c.send_raw(b"\xff\xfe garbage").unwrap();
        assert_eq!(r.status, Status::Error);
        assert_eq!(r.error.unwrap().code, "MalformedRequest");
        let r = c.request("list", json!({})).unwrap();
        assert_eq!(r.status, Status::Ok);
    }

    #[test]
    fn busy_endpoint() {
        let (n, s) = server();
        let e = ControlServer::bind(&s.local_addr().to_string(), n).err().unwrap();
        assert_eq!(e.code(), "EndpointBusy");
    }

    #[test]
    fn subscribe_streams_events() {
        let (n, s) = server();
        let mut c = ControlClient::connect(&s.local_addr().to_string()).unwrap();
        c.call("subscribe", json!({})).unwrap();
        n.manager().events().publish(EventKind::Drop, "test");
        let e = c.next_event(Duration::from_secs(5)).unwrap().unwrap();
        assert_eq!(e.kind, EventKind::Drop);
        assert_eq!(c.call("stats", json!({})).unwrap()["manager"]["local_device"], 1);
    }
}

//! Resource-manager service.
//!
//! Connections are handled on their own threads; every accepted job goes
//! through the optimization pass hook and then onto a single FIFO worker that
//! owns the backend simulator. Each message leg is delayed by the configured
//! one-way latency to model the distance between host and quantum resource.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{read_frame, write_frame, ErrorCode, FrameError, WireRequest, WireResponse};
use crate::circuit::{Circuit, Histogram, DEFAULT_MAX_QUBITS};
use crate::emit::parse_qasm;
use crate::runtime::JobStatus;
use crate::sim::{Seed, Simulator};

/// How often idle connections check the shutdown flag.
const IDLE_POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatencyConfig {
    /// Delay applied to every message leg, request and response alike.
    pub one_way: Duration,
}

impl LatencyConfig {
    pub fn from_millis(ms: u64) -> Self {
        Self {
            one_way: Duration::from_millis(ms),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    /// Largest register the backend simulator accepts.
    pub capacity: usize,
    pub latency: LatencyConfig,
    /// Fetched results are evicted this long after their first fetch.
    pub result_ttl: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:7117".into(),
            capacity: DEFAULT_MAX_QUBITS,
            latency: LatencyConfig::default(),
            result_ttl: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("server i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Circuit rewrite applied to each job before it is queued.
pub trait CircuitPass: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, circuit: Circuit) -> Circuit;
}

pub struct IdentityPass;

impl CircuitPass for IdentityPass {
    fn name(&self) -> &str {
        "identity"
    }

    fn run(&self, circuit: Circuit) -> Circuit {
        circuit
    }
}

struct JobRecord {
    status: JobStatus,
    outcome: Option<Result<(Histogram, Duration), String>>,
    fetched_at: Option<Instant>,
}

#[derive(Default)]
struct JobTable {
    next_id: u64,
    jobs: HashMap<u64, JobRecord>,
}

struct QueuedJob {
    id: u64,
    circuit: Circuit,
    shots: u64,
    seed: Seed,
    accepted_at: Instant,
}

struct Shared {
    config: ServerConfig,
    table: Mutex<JobTable>,
    queue: Mutex<Option<Sender<QueuedJob>>>,
    shutting_down: AtomicBool,
    passes: Vec<Box<dyn CircuitPass>>,
}

impl Shared {
    fn table(&self) -> std::sync::MutexGuard<'_, JobTable> {
        self.table.lock().expect("job table poisoned")
    }

    fn evict_expired(&self, now: Instant) {
        let ttl = self.config.result_ttl;
        self.table()
            .jobs
            .retain(|_, rec| rec.fetched_at.is_none_or(|t| now.duration_since(t) < ttl));
    }

    fn handle(&self, request: WireRequest) -> WireResponse {
        self.evict_expired(Instant::now());
        match request {
            WireRequest::Ping => WireResponse::Pong,
            WireRequest::SubmitJob { qasm, shots, seed } => self.submit(&qasm, shots, seed),
            WireRequest::QueryStatus { job_id } => match self.table().jobs.get(&job_id) {
                Some(rec) => WireResponse::Status {
                    job_id,
                    status: rec.status,
                },
                None => unknown_job(job_id),
            },
            WireRequest::FetchResult { job_id } => {
                let mut table = self.table();
                let Some(rec) = table.jobs.get_mut(&job_id) else {
                    return unknown_job(job_id);
                };
                match &rec.outcome {
                    None => error(ErrorCode::NotReady, format!("job {job_id} is {:?}", rec.status)),
                    Some(Err(reason)) => error(ErrorCode::JobFailed, reason.clone()),
                    Some(Ok((histogram, wall))) => {
                        rec.fetched_at.get_or_insert_with(Instant::now);
                        WireResponse::Result {
                            job_id,
                            histogram: histogram.clone(),
                            server_wall_time_us: wall.as_micros() as u64,
                        }
                    }
                }
            }
        }
    }

    fn submit(&self, qasm: &str, shots: u64, seed: Seed) -> WireResponse {
        if self.shutting_down.load(Ordering::SeqCst) {
            return error(ErrorCode::ShuttingDown, "server is shutting down".into());
        }
        if shots == 0 {
            return error(ErrorCode::BadRequest, "shots must be at least 1".into());
        }
        let circuit = match parse_qasm(qasm) {
            Ok(c) => c,
            Err(e) => return error(ErrorCode::Parse, e.to_string()),
        };
        if circuit.num_qubits() > self.config.capacity {
            return error(
                ErrorCode::Capacity,
                format!(
                    "circuit needs {} qubits, backend capacity is {}",
                    circuit.num_qubits(),
                    self.config.capacity
                ),
            );
        }
        let circuit = self.passes.iter().fold(circuit, |c, pass| pass.run(c));
        let queue = self.queue.lock().expect("queue poisoned");
        let Some(sender) = queue.as_ref() else {
            return error(ErrorCode::ShuttingDown, "server is shutting down".into());
        };
        let id = {
            let mut table = self.table();
            table.next_id += 1;
            let id = table.next_id;
            table.jobs.insert(
                id,
                JobRecord {
                    status: JobStatus::Queued,
                    outcome: None,
                    fetched_at: None,
                },
            );
            id
        };
        let job = QueuedJob {
            id,
            circuit,
            shots,
            seed,
            accepted_at: Instant::now(),
        };
        if sender.send(job).is_err() {
            self.finish(id, Err("backend worker stopped".into()));
            return error(ErrorCode::ShuttingDown, "backend worker stopped".into());
        }
        WireResponse::Accepted { job_id: id }
    }

    fn finish(&self, id: u64, outcome: Result<(Histogram, Duration), String>) {
        if let Some(rec) = self.table().jobs.get_mut(&id) {
            rec.status = if outcome.is_ok() {
                JobStatus::Done
            } else {
                JobStatus::Failed
            };
            rec.outcome = Some(outcome);
        }
    }
}

fn error(code: ErrorCode, message: String) -> WireResponse {
    WireResponse::Error { code, message }
}

fn unknown_job(job_id: u64) -> WireResponse {
    error(ErrorCode::UnknownJob, format!("no job with id {job_id}"))
}

fn run_worker(shared: Arc<Shared>, jobs: Receiver<QueuedJob>) {
    let simulator = Simulator::new(shared.config.capacity);
    for job in jobs {
        if shared.shutting_down.load(Ordering::SeqCst) {
            shared.finish(job.id, Err("server shut down before the job started".into()));
            continue;
        }
        if let Some(rec) = shared.table().jobs.get_mut(&job.id) {
            rec.status = JobStatus::Running;
        }
        let outcome = simulator
            .execute(&job.circuit, job.shots, job.seed)
            .map(|h| (h, job.accepted_at.elapsed()))
            .map_err(|e| e.to_string());
        shared.finish(job.id, outcome);
    }
}

fn handle_connection(shared: Arc<Shared>, mut stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let latency = shared.config.latency.one_way;
    let mut probe = [0u8; 1];
    loop {
        // Wait for the next request while staying responsive to shutdown.
        let _ = stream.set_read_timeout(Some(IDLE_POLL));
        match stream.peek(&mut probe) {
            Ok(0) => return,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if shared.shutting_down.load(Ordering::SeqCst) {
                    return;
                }
                continue;
            }
            Err(_) => return,
        }
        let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
        let (response, keep_open) = match read_frame::<WireRequest, _>(&mut stream) {
            Ok(None) => return,
            Ok(Some(request)) => {
                thread::sleep(latency);
                (shared.handle(request), true)
            }
            Err(FrameError::UnknownKind(kind)) => {
                thread::sleep(latency);
                (error(ErrorCode::BadRequest, format!("unknown message kind `{kind}`")), true)
            }
            Err(FrameError::Malformed(msg)) => {
                thread::sleep(latency);
                (error(ErrorCode::BadRequest, msg), true)
            }
            // The stream position is lost; answer once and close.
            Err(e @ FrameError::Oversized(_)) => (error(ErrorCode::BadRequest, e.to_string()), false),
            Err(_) => return,
        };
        thread::sleep(latency);
        if write_frame(&mut stream, &response).is_err() || !keep_open {
            return;
        }
    }
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running until process exit.
pub struct ServerHandle {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    worker: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Stops accepting connections, lets the running job finish, fails jobs
    /// still queued, and joins the server threads.
    pub fn shutdown(mut self) {
        self.shared.shutting_down.store(true, Ordering::SeqCst);
        // Unblock accept() with a throwaway connection.
        let _ = TcpStream::connect_timeout(&wake_addr(self.local_addr), Duration::from_secs(1));
        if let Some(acceptor) = self.acceptor.take() {
            let _ = acceptor.join();
        }
        self.shared.queue.lock().expect("queue poisoned").take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    let mut addr = addr;
    if addr.ip().is_unspecified() {
        addr.set_ip(match addr {
            SocketAddr::V4(_) => std::net::Ipv4Addr::LOCALHOST.into(),
            SocketAddr::V6(_) => std::net::Ipv6Addr::LOCALHOST.into(),
        });
    }
    addr
}

pub fn serve(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    serve_with_passes(config, vec![Box::new(IdentityPass)])
}

pub fn serve_with_passes(
    config: ServerConfig,
    passes: Vec<Box<dyn CircuitPass>>,
) -> Result<ServerHandle, ServerError> {
    let listener = TcpListener::bind(&config.bind).map_err(|source| ServerError::Bind {
        addr: config.bind.clone(),
        source,
    })?;
    let local_addr = listener.local_addr()?;
    let (tx, rx) = mpsc::channel();
    let shared = Arc::new(Shared {
        config,
        table: Mutex::new(JobTable::default()),
        queue: Mutex::new(Some(tx)),
        shutting_down: AtomicBool::new(false),
        passes,
    });
    let worker = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("resman-worker".into())
            .spawn(move || run_worker(shared, rx))?
    };
    let acceptor = {
        let shared = Arc::clone(&shared);
        thread::Builder::new().name("resman-accept".into()).spawn(move || {
            for stream in listener.incoming() {
                if shared.shutting_down.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let shared = Arc::clone(&shared);
                let _ = thread::Builder::new()
                    .name("resman-conn".into())
                    .spawn(move || handle_connection(shared, stream));
            }
        })?
    };
    Ok(ServerHandle {
        local_addr,
        shared,
        acceptor: Some(acceptor),
        worker: Some(worker),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};

    fn start(latency_ms: u64, ttl: Duration) -> ServerHandle {
        serve(ServerConfig {
            bind: "127.0.0.1:0".into(),
            capacity: 8,
            latency: LatencyConfig::from_millis(latency_ms),
            result_ttl: ttl,
        })
        .unwrap()
    }

    fn roundtrip(stream: &mut TcpStream, req: &WireRequest) -> WireResponse {
        write_frame(stream, req).unwrap();
        read_frame::<WireResponse, _>(stream).unwrap().unwrap()
    }

    const BELL: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\nh q[0];\ncx q[0],q[1];\nmeasure q -> c;\n";

    fn wait_done(stream: &mut TcpStream, job_id: u64) {
        loop {
            match roundtrip(stream, &WireRequest::QueryStatus { job_id }) {
                WireResponse::Status { status: JobStatus::Done, .. } => return,
                WireResponse::Status { .. } => thread::sleep(Duration::from_millis(1)),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn ping_submit_fetch_and_errors() {
        let server = start(0, Duration::from_secs(600));
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        assert_eq!(roundtrip(&mut s, &WireRequest::Ping), WireResponse::Pong);

        let WireResponse::Accepted { job_id } = roundtrip(
            &mut s,
            &WireRequest::SubmitJob {
                qasm: BELL.into(),
                shots: 100,
                seed: 7,
            },
        ) else {
            panic!("not accepted")
        };
        wait_done(&mut s, job_id);
        let WireResponse::Result { histogram, .. } = roundtrip(&mut s, &WireRequest::FetchResult { job_id }) else {
            panic!("no result")
        };
        assert_eq!(histogram.shots(), 100);

        let resp = roundtrip(
            &mut s,
            &WireRequest::SubmitJob {
                qasm: "OPENQASM 2.0;\nqreg".into(),
                shots: 1,
                seed: 0,
            },
        );
        match resp {
            WireResponse::Error { code: ErrorCode::Parse, message } => {
                assert!(message.contains("line 2"), "{message}")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            roundtrip(&mut s, &WireRequest::FetchResult { job_id: 999 }),
            WireResponse::Error { code: ErrorCode::UnknownJob, .. }
        ));
        let wide = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[9];\ncreg c[9];\nmeasure q -> c;\n";
        assert!(matches!(
            roundtrip(&mut s, &WireRequest::SubmitJob { qasm: wide.into(), shots: 1, seed: 0 }),
            WireResponse::Error { code: ErrorCode::Capacity, .. }
        ));
        assert!(matches!(
            roundtrip(&mut s, &WireRequest::SubmitJob { qasm: BELL.into(), shots: 0, seed: 0 }),
            WireResponse::Error { code: ErrorCode::BadRequest, .. }
        ));
        // Unknown kinds get an error response and the connection survives.
        let body = br#"{"kind":"Reboot"}"#;
        s.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
        s.write_all(body).unwrap();
        assert!(matches!(
            read_frame::<WireResponse, _>(&mut s).unwrap().unwrap(),
            WireResponse::Error { code: ErrorCode::BadRequest, .. }
        ));
        assert_eq!(roundtrip(&mut s, &WireRequest::Ping), WireResponse::Pong);
        server.shutdown();
    }

    #[test]
    fn oversized_frame_gets_error_then_close() {
        let server = start(0, Duration::from_secs(600));
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        s.write_all(&(1u32 << 25).to_be_bytes()).unwrap();
        let resp = read_frame::<WireResponse, _>(&mut s).unwrap().unwrap();
        assert!(matches!(resp, WireResponse::Error { code: ErrorCode::BadRequest, .. }));
        let mut rest = Vec::new();
        assert_eq!(s.read_to_end(&mut rest).unwrap(), 0);
        server.shutdown();
    }

    #[test]
    fn fetched_results_expire_after_ttl() {
        let server = start(0, Duration::from_millis(50));
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        let WireResponse::Accepted { job_id } =
            roundtrip(&mut s, &WireRequest::SubmitJob { qasm: BELL.into(), shots: 10, seed: 1 })
        else {
            panic!()
        };
        wait_done(&mut s, job_id);
        assert!(matches!(roundtrip(&mut s, &WireRequest::FetchResult { job_id }), WireResponse::Result { .. }));
        // Still retained within the TTL.
        assert!(matches!(roundtrip(&mut s, &WireRequest::FetchResult { job_id }), WireResponse::Result { .. }));
        thread::sleep(Duration::from_millis(80));
        assert!(matches!(
            roundtrip(&mut s, &WireRequest::FetchResult { job_id }),
            WireResponse::Error { code: ErrorCode::UnknownJob, .. }
        ));
        server.shutdown();
    }

    #[test]
    fn latency_is_applied_per_leg() {
        let server = start(30, Duration::from_secs(600));
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        let t = Instant::now();
        assert_eq!(roundtrip(&mut s, &WireRequest::Ping), WireResponse::Pong);
        assert!(t.elapsed() >= Duration::from_millis(60));
        server.shutdown();
    }

    #[test]
    fn bind_failure_is_reported() {
        let server = start(0, Duration::from_secs(1));
        let err = serve(ServerConfig {
            bind: server.local_addr().to_string(),
            ..ServerConfig::default()
        });
        assert!(matches!(err, Err(ServerError::Bind { .. })));
        server.shutdown();
    }
}

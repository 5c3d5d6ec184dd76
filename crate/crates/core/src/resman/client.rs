//! Blocking resource-manager client.

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{read_frame, write_frame, ErrorCode, FrameError, WireRequest, WireResponse};
use crate::circuit::{Circuit, Histogram};
use crate::emit::{emit_qasm, EmitError};
use crate::runtime::{JobResult, JobStatus};
use crate::sim::Seed;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const RESPONSE_TIMEOUT: Duration = Duration::from_secs(120);
const STATUS_BACKOFF: Duration = Duration::from_micros(200);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection to {endpoint} refused: {reason}")]
    ConnectionRefused { endpoint: String, reason: String },
    #[error("cannot connect to {endpoint}: {reason}")]
    Connect { endpoint: String, reason: String },
    #[error("server error {code}: {message}")]
    Server { code: ErrorCode, message: String },
    #[error("unexpected response: {0}")]
    UnexpectedResponse(String),
    #[error("server closed the connection")]
    Closed,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

/// One connection to a resource manager. Every request/response pair costs
/// two message legs; `injected_latency` is slept on each of them.
pub struct Client {
    stream: TcpStream,
    endpoint: String,
    injected_latency: Duration,
}

impl Client {
    pub fn connect(endpoint: &str) -> Result<Self, ClientError> {
        let connect_err = |e: io::Error| {
            if e.kind() == io::ErrorKind::ConnectionRefused {
                ClientError::ConnectionRefused {
                    endpoint: endpoint.to_string(),
                    reason: e.to_string(),
                }
            } else {
                ClientError::Connect {
                    endpoint: endpoint.to_string(),
                    reason: e.to_string(),
                }
            }
        };
        let addrs: Vec<_> = endpoint.to_socket_addrs().map_err(connect_err)?.collect();
        let mut last = io::Error::new(io::ErrorKind::AddrNotAvailable, "endpoint resolved to no addresses");
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
                Ok(stream) => {
                    stream.set_nodelay(true).map_err(connect_err)?;
                    stream
                        .set_read_timeout(Some(RESPONSE_TIMEOUT))
                        .map_err(connect_err)?;
                    return Ok(Self {
                        stream,
                        endpoint: endpoint.to_string(),
                        injected_latency: Duration::ZERO,
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(connect_err(last))
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.injected_latency = latency;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn request(&mut self, request: &WireRequest) -> Result<WireResponse, ClientError> {
        thread::sleep(self.injected_latency);
        write_frame(&mut self.stream, request)?;
        let response = read_frame::<WireResponse, _>(&mut self.stream)?.ok_or(ClientError::Closed)?;
        thread::sleep(self.injected_latency);
        match response {
            WireResponse::Error { code, message } => Err(ClientError::Server { code, message }),
            other => Ok(other),
        }
    }

    pub fn ping(&mut self) -> Result<(), ClientError> {
        match self.request(&WireRequest::Ping)? {
            WireResponse::Pong => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub fn submit(&mut self, qasm: &str, shots: u64, seed: Seed) -> Result<u64, ClientError> {
        let request = WireRequest::SubmitJob {
            qasm: qasm.to_string(),
            shots,
            seed,
        };
        match self.request(&request)? {
            WireResponse::Accepted { job_id } => Ok(job_id),
            other => Err(unexpected(other)),
        }
    }

    pub fn status(&mut self, job_id: u64) -> Result<JobStatus, ClientError> {
        match self.request(&WireRequest::QueryStatus { job_id })? {
            WireResponse::Status { status, .. } => Ok(status),
            other => Err(unexpected(other)),
        }
    }

    /// Histogram and server-side wall time of a finished job.
    pub fn fetch(&mut self, job_id: u64) -> Result<(Histogram, Duration), ClientError> {
        match self.request(&WireRequest::FetchResult { job_id })? {
            WireResponse::Result {
                histogram,
                server_wall_time_us,
                ..
            } => Ok((histogram, Duration::from_micros(server_wall_time_us))),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(response: WireResponse) -> ClientError {
    ClientError::UnexpectedResponse(format!("{response:?}"))
}

pub fn client_submit(endpoint: &str, circuit: &Circuit, shots: u64, seed: Seed) -> Result<JobResult, ClientError> {
    client_submit_with_latency(endpoint, circuit, shots, seed, Duration::ZERO)
}

/// Transpiles to QASM, submits, polls until the job leaves the queue and
/// fetches the histogram. `wall_time` is the full round trip.
pub fn client_submit_with_latency(
    endpoint: &str,
    circuit: &Circuit,
    shots: u64,
    seed: Seed,
    latency: Duration,
) -> Result<JobResult, ClientError> {
    let started_at = Instant::now();
    let qasm = emit_qasm(circuit)?;
    let mut client = Client::connect(endpoint)?.with_latency(latency);
    let job_id = client.submit(qasm.as_str(), shots, seed)?;
    loop {
        match client.status(job_id)? {
            JobStatus::Done | JobStatus::Failed => break,
            JobStatus::Queued | JobStatus::Running => thread::sleep(STATUS_BACKOFF),
        }
    }
    let (histogram, _) = client.fetch(job_id)?;
    if histogram.shots() != shots {
        return Err(ClientError::UnexpectedResponse(format!(
            "histogram has {} shots, requested {shots}",
            histogram.shots()
        )));
    }
    let finished_at = Instant::now();
    Ok(JobResult {
        histogram,
        wall_time: finished_at - started_at,
        device: endpoint.to_string(),
        started_at,
        finished_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::bell;
    use crate::resman::server::{serve, LatencyConfig, ServerConfig};
    use crate::sim::Simulator;

    fn start(latency_ms: u64) -> crate::resman::ServerHandle {
        serve(ServerConfig {
            bind: "127.0.0.1:0".into(),
            latency: LatencyConfig::from_millis(latency_ms),
            ..ServerConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn remote_matches_local() {
        let server = start(0);
        let endpoint = server.local_addr().to_string();
        let remote = client_submit(&endpoint, &bell(), 1000, 7).unwrap();
        let local = Simulator::default().execute(&bell(), 1000, 7).unwrap();
        assert_eq!(remote.histogram, local);
        assert_eq!(remote.device, endpoint);
        server.shutdown();
    }

    #[test]
    fn latency_lower_bound() {
        let server = start(50);
        let endpoint = server.local_addr().to_string();
        let r = client_submit(&endpoint, &bell(), 100, 1).unwrap();
        assert!(r.wall_time >= Duration::from_millis(100), "{:?}", r.wall_time);
        server.shutdown();
    }

    #[test]
    fn client_side_latency_adds_up() {
        let server = start(0);
        let endpoint = server.local_addr().to_string();
        let mut client = Client::connect(&endpoint).unwrap().with_latency(Duration::from_millis(20));
        let t = Instant::now();
        client.ping().unwrap();
        assert!(t.elapsed() >= Duration::from_millis(40));
        server.shutdown();
    }

    #[test]
    fn closed_port_is_refused() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = listener.local_addr().unwrap().to_string();
        drop(listener);
        assert!(matches!(
            client_submit(&endpoint, &bell(), 10, 0),
            Err(ClientError::ConnectionRefused { .. })
        ));
    }

    #[test]
    fn server_errors_propagate_with_code() {
        let server = start(0);
        let mut client = Client::connect(&server.local_addr().to_string()).unwrap();
        match client.submit("not qasm", 10, 0) {
            Err(ClientError::Server { code: ErrorCode::Parse, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            client.fetch(12345),
            Err(ClientError::Server { code: ErrorCode::UnknownJob, .. })
        ));
        server.shutdown();
    }
}

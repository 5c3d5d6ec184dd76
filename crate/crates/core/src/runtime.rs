//! Offload runtime: a registry of devices, each served by one worker thread
//! draining a FIFO queue.
//!
//! [`DeviceRegistry::submit_sync`] blocks the caller until the histogram is
//! mapped back, like a synchronising target region. [`DeviceRegistry::submit_async`]
//! is the `nowait` form: it returns a [`JobHandle`] immediately and the caller
//! joins later with [`JobHandle::wait`] or checks progress with
//! [`JobHandle::poll`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Histogram};
use crate::resman::client::{self, ClientError};
use crate::sim::{Seed, SimError, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceKind {
    LocalSimulator,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub name: String,
    pub kind: DeviceKind,
    /// Largest register the device accepts.
    pub capacity: usize,
    /// Resource-manager address, `Remote` only.
    pub endpoint: Option<String>,
    /// Extra one-way delay the client adds to every message leg, `Remote` only.
    pub injected_latency: Duration,
}

impl DeviceConfig {
    pub fn local(name: impl Into<String>, capacity: usize) -> Self {
        Self {
            name: name.into(),
            kind: DeviceKind::LocalSimulator,
            capacity,
            endpoint: None,
            injected_latency: Duration::ZERO,
        }
    }

    pub fn remote(name: impl Into<String>, endpoint: impl Into<String>, capacity: usize) -> Self {
        Self {
            name: name.into(),
            kind: DeviceKind::Remote,
            capacity,
            endpoint: Some(endpoint.into()),
            injected_latency: Duration::ZERO,
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.injected_latency = latency;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// A finalized circuit with its shot count and sampling seed.
#[derive(Debug, Clone)]
pub struct Job {
    circuit: Arc<Circuit>,
    shots: u64,
    seed: Seed,
    submitted_at: Instant,
}

impl Job {
    pub fn new(circuit: Circuit, shots: u64, seed: Seed) -> Result<Self, RuntimeError> {
        Self::shared(Arc::new(circuit), shots, seed)
    }

    pub fn shared(circuit: Arc<Circuit>, shots: u64, seed: Seed) -> Result<Self, RuntimeError> {
        if !circuit.is_measured() {
            return Err(RuntimeError::InvalidJob("circuit has no terminal measurement".into()));
        }
        if shots == 0 {
            return Err(RuntimeError::InvalidJob("shots must be at least 1".into()));
        }
        Ok(Self {
            circuit,
            shots,
            seed,
            submitted_at: Instant::now(),
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn submitted_at(&self) -> Instant {
        self.submitted_at
    }
}

/// Histogram mapped back to the host plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub histogram: Histogram,
    /// Submission to completion: queueing plus execution, or the full
    /// network round trip for a remote client call.
    pub wall_time: Duration,
    pub device: String,
    pub started_at: Instant,
    pub finished_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("connection to {endpoint} refused: {reason}")]
    ConnectionRefused { endpoint: String, reason: String },
    #[error("connection to {endpoint} failed: {reason}")]
    Connection { endpoint: String, reason: String },
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
}

impl From<ClientError> for DeviceError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::ConnectionRefused { endpoint, reason } => {
                DeviceError::ConnectionRefused { endpoint, reason }
            }
            ClientError::Connect { endpoint, reason } => DeviceError::Connection { endpoint, reason },
            ClientError::Server { code, message } => DeviceError::Remote {
                code: code.to_string(),
                message,
            },
            other => DeviceError::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("device `{0}` is already registered")]
    DuplicateDevice(String),
    #[error("invalid device configuration: {0}")]
    InvalidDevice(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("circuit needs {required} qubits but device `{device}` has capacity {capacity}")]
    CapacityExceeded {
        device: String,
        required: usize,
        capacity: usize,
    },
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("job {job_id} on `{device}` failed: {source}")]
    JobFailed {
        job_id: u64,
        device: String,
        source: DeviceError,
    },
    #[error("device `{0}` worker has stopped")]
    WorkerStopped(String),
}

/// Executes jobs for one device. Called only from that device's worker.
pub trait Backend: Send {
    fn execute(&mut self, job: &Job) -> Result<Histogram, DeviceError>;
}

pub struct LocalBackend {
    simulator: Simulator,
}

impl LocalBackend {
    pub fn new(max_qubits: usize) -> Self {
        Self {
            simulator: Simulator::new(max_qubits),
        }
    }
}

impl Backend for LocalBackend {
    fn execute(&mut self, job: &Job) -> Result<Histogram, DeviceError> {
        Ok(self.simulator.execute(job.circuit(), job.shots(), job.seed())?)
    }
}

/// Ships jobs to a resource manager as QASM.
pub struct RemoteBackend {
    endpoint: String,
    latency: Duration,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, latency: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            latency,
        }
    }
}

impl Backend for RemoteBackend {
    fn execute(&mut self, job: &Job) -> Result<Histogram, DeviceError> {
        let result = client::client_submit_with_latency(
            &self.endpoint,
            job.circuit(),
            job.shots(),
            job.seed(),
            self.latency,
        )?;
        Ok(result.histogram)
    }
}

#[derive(Debug)]
struct SlotState {
    status: JobStatus,
    outcome: Option<Result<JobResult, DeviceError>>,
}

#[derive(Debug)]
struct JobSlot {
    state: Mutex<SlotState>,
    done: Condvar,
}

impl JobSlot {
    fn new() -> Self {
        Self {
            state: Mutex::new(SlotState {
                status: JobStatus::Queued,
                outcome: None,
            }),
            done: Condvar::new(),
        }
    }

    fn set_running(&self) {
        self.state.lock().expect("job slot poisoned").status = JobStatus::Running;
    }

    fn complete(&self, outcome: Result<JobResult, DeviceError>) {
        let mut state = self.state.lock().expect("job slot poisoned");
        state.status = if outcome.is_ok() {
            JobStatus::Done
        } else {
            JobStatus::Failed
        };
        state.outcome = Some(outcome);
        self.done.notify_all();
    }
}

/// Token for an asynchronously submitted job. Cheap to clone and safe to
/// poll or wait on from any thread.
#[derive(Debug, Clone)]
pub struct JobHandle {
    id: u64,
    device: String,
    slot: Arc<JobSlot>,
}

impl JobHandle {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn device(&self) -> &str {
        &self.device
    }

    /// Current status, without blocking.
    pub fn poll(&self) -> JobStatus {
        self.slot.state.lock().expect("job slot poisoned").status
    }

    /// Blocks until the job is done or failed. Repeated calls return the same
    /// outcome.
    pub fn wait(&self) -> Result<JobResult, RuntimeError> {
        let mut state = self.slot.state.lock().expect("job slot poisoned");
        while state.outcome.is_none() {
            state = self.slot.done.wait(state).expect("job slot poisoned");
        }
        match state.outcome.as_ref().expect("loop exits with an outcome") {
            Ok(result) => Ok(result.clone()),
            Err(e) => Err(RuntimeError::JobFailed {
                job_id: self.id,
                device: self.device.clone(),
                source: e.clone(),
            }),
        }
    }
}

struct QueuedJob {
    job: Job,
    slot: Arc<JobSlot>,
}

struct DeviceEntry {
    config: DeviceConfig,
    queue: Option<Sender<QueuedJob>>,
    worker: Option<JoinHandle<()>>,
}

fn run_worker(name: String, mut backend: Box<dyn Backend>, jobs: Receiver<QueuedJob>) {
    for QueuedJob { job, slot } in jobs {
        slot.set_running();
        let started_at = Instant::now();
        let outcome = backend.execute(&job).map(|histogram| {
            let finished_at = Instant::now();
            JobResult {
                histogram,
                wall_time: finished_at - job.submitted_at(),
                device: name.clone(),
                started_at,
                finished_at,
            }
        });
        slot.complete(outcome);
    }
}

/// Named devices, each with its own worker thread and FIFO queue.
///
/// Shareable across threads once populated. Dropping the registry lets each
/// worker finish its queue and joins it.
#[derive(Default)]
pub struct DeviceRegistry {
    devices: HashMap<String, DeviceEntry>,
    next_id: AtomicU64,
    submitted: AtomicU64,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a device with the backend implied by its kind.
    pub fn register_device(&mut self, config: DeviceConfig) -> Result<(), RuntimeError> {
        let backend: Box<dyn Backend> = match config.kind {
            DeviceKind::LocalSimulator => Box::new(LocalBackend::new(config.capacity)),
            DeviceKind::Remote => {
                let endpoint = config.endpoint.clone().ok_or_else(|| {
                    RuntimeError::InvalidDevice(format!("remote device `{}` has no endpoint", config.name))
                })?;
                Box::new(RemoteBackend::new(endpoint, config.injected_latency))
            }
        };
        self.register_device_with_backend(config, backend)
    }

    pub fn register_device_with_backend(
        &mut self,
        config: DeviceConfig,
        backend: Box<dyn Backend>,
    ) -> Result<(), RuntimeError> {
        if self.devices.contains_key(&config.name) {
            return Err(RuntimeError::DuplicateDevice(config.name));
        }
        if config.capacity == 0 {
            return Err(RuntimeError::InvalidDevice(format!(
                "device `{}` has zero capacity",
                config.name
            )));
        }
        let (tx, rx) = mpsc::channel();
        let name = config.name.clone();
        let worker = thread::Builder::new()
            .name(format!("qdevice-{name}"))
            .spawn(move || run_worker(name, backend, rx))
            .map_err(|e| RuntimeError::InvalidDevice(format!("cannot spawn worker: {e}")))?;
        self.devices.insert(
            config.name.clone(),
            DeviceEntry {
                config,
                queue: Some(tx),
                worker: Some(worker),
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn device(&self, name: &str) -> Option<&DeviceConfig> {
        self.devices.get(name).map(|d| &d.config)
    }

    /// Number of jobs accepted so far across all devices.
    pub fn jobs_submitted(&self) -> u64 {
        self.submitted.load(Ordering::SeqCst)
    }

    /// Queues the job and returns at once. Unknown devices and oversized
    /// circuits are rejected here, before anything is queued.
    pub fn submit_async(&self, device_name: &str, job: Job) -> Result<JobHandle, RuntimeError> {
        let entry = self
            .devices
            .get(device_name)
            .ok_or_else(|| RuntimeError::UnknownDevice(device_name.to_string()))?;
        let required = job.circuit().num_qubits();
        if required > entry.config.capacity {
            return Err(RuntimeError::CapacityExceeded {
                device: device_name.to_string(),
                required,
                capacity: entry.config.capacity,
            });
        }
        let slot = Arc::new(JobSlot::new());
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        entry
            .queue
            .as_ref()
            .ok_or_else(|| RuntimeError::WorkerStopped(device_name.to_string()))?
            .send(QueuedJob {
                job,
                slot: Arc::clone(&slot),
            })
            .map_err(|_| RuntimeError::WorkerStopped(device_name.to_string()))?;
        self.submitted.fetch_add(1, Ordering::SeqCst);
        Ok(JobHandle {
            id,
            device: device_name.to_string(),
            slot,
        })
    }

    /// Blocks until the device has produced the histogram.
    pub fn submit_sync(&self, device_name: &str, job: Job) -> Result<JobResult, RuntimeError> {
        self.submit_async(device_name, job)?.wait()
    }
}

impl Drop for DeviceRegistry {
    fn drop(&mut self) {
        for entry in self.devices.values_mut() {
            entry.queue.take();
        }
        for entry in self.devices.values_mut() {
            if let Some(worker) = entry.worker.take() {
                let _ = worker.join();
            }
        }
    }
}

//! Host-side runtime for offloading quantum circuits.
//!
//! Circuits are built gate by gate ([`circuit`]), executed on a statevector
//! simulator ([`sim`]) or shipped to a remote resource manager ([`resman`])
//! through a device registry ([`runtime`]) with blocking and asynchronous
//! submission. [`emit`] lowers circuits to OpenQASM 2.0 and QIR text, and
//! [`vqe`] drives a variational eigensolver through the same runtime.
//!
//! ```
//! use qoffload::circuit::bell;
//! use qoffload::runtime::{DeviceConfig, DeviceRegistry, Job};
//!
//! let mut registry = DeviceRegistry::new();
//! registry.register_device(DeviceConfig::local("sim", 24)).unwrap();
//! let result = registry.submit_sync("sim", Job::new(bell(), 1000, 7).unwrap()).unwrap();
//! let counts = result.histogram.counts();
//! assert_eq!(counts[0b01] + counts[0b10], 0);
//! assert_eq!(counts[0b00] + counts[0b11], 1000);
//! ```

pub mod circuit;
pub mod emit;
pub mod resman;
pub mod runtime;
pub mod sim;
pub mod vqe;

pub use circuit::{Circuit, CircuitError, Gate, GateKind, Histogram, QuantumRegister};
pub use runtime::{DeviceConfig, DeviceKind, DeviceRegistry, Job, JobHandle, JobResult, JobStatus};
pub use sim::{Seed, Simulator, StateVector};

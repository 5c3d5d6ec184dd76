//! Quantum resource manager: a job service speaking length-prefixed JSON
//! over TCP, and the blocking client the runtime uses for remote devices.
//!
//! Circuits travel as OpenQASM 2.0 text. The host transpiles, the server
//! parses, queues the job FIFO onto its simulator backend and keeps the
//! histogram until it is fetched. See `docs/protocol.md` for the byte layout.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{client_submit, client_submit_with_latency, Client, ClientError};
pub use server::{
    serve, serve_with_passes, CircuitPass, IdentityPass, LatencyConfig, ServerConfig, ServerError,
    ServerHandle,
};
pub use wire::{
    decode_frame, encode_frame, read_frame, write_frame, ErrorCode, FrameError, WireMessage, WireRequest,
    WireResponse, MAX_FRAME_LEN,
};

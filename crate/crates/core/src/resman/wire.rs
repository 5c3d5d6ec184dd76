//! Wire format: a 4-byte big-endian body length followed by a UTF-8 JSON
//! object whose `"kind"` field names the message.

use std::fmt;
use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Histogram;
use crate::runtime::JobStatus;

/// Largest accepted body, 16 MiB.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WireRequest {
    SubmitJob { qasm: String, shots: u64, seed: u64 },
    QueryStatus { job_id: u64 },
    FetchResult { job_id: u64 },
    Ping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WireResponse {
    Accepted {
        job_id: u64,
    },
    Status {
        job_id: u64,
        status: JobStatus,
    },
    Result {
        job_id: u64,
        histogram: Histogram,
        /// Server-side queue plus execution time in microseconds.
        server_wall_time_us: u64,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Pong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    /// SubmitJob QASM did not parse.
    Parse,
    /// Malformed frame body or field values.
    BadRequest,
    /// Circuit wider than the backend.
    Capacity,
    UnknownJob,
    /// FetchResult before the job finished.
    NotReady,
    JobFailed,
    ShuttingDown,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::Parse => "PARSE",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::Capacity => "CAPACITY",
            ErrorCode::UnknownJob => "UNKNOWN_JOB",
            ErrorCode::NotReady => "NOT_READY",
            ErrorCode::JobFailed => "JOB_FAILED",
            ErrorCode::ShuttingDown => "SHUTTING_DOWN",
        };
        f.write_str(s)
    }
}

/// A message type carried in frames; `KINDS` lists its discriminators.
pub trait WireMessage: Serialize + DeserializeOwned {
    const KINDS: &'static [&'static str];
}

impl WireMessage for WireRequest {
    const KINDS: &'static [&'static str] = &["SubmitJob", "QueryStatus", "FetchResult", "Ping"];
}

impl WireMessage for WireResponse {
    const KINDS: &'static [&'static str] = &["Accepted", "Status", "Result", "Error", "Pong"];
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("frame body of {0} bytes exceeds the 16 MiB limit")]
    Oversized(usize),
    #[error("unknown message kind `{0}`")]
    UnknownKind(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub fn encode_frame<M: WireMessage>(message: &M) -> Result<Vec<u8>, FrameError> {
    let body = serde_json::to_vec(message).map_err(|e| FrameError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(body.len()));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame<M: WireMessage>(bytes: &[u8]) -> Result<M, FrameError> {
    let Some(prefix) = bytes.get(..4) else {
        return Err(FrameError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    };
    let len = u32::from_be_bytes(prefix.try_into().expect("4-byte slice")) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(len));
    }
    let body = &bytes[4..];
    if body.len() < len {
        return Err(FrameError::Truncated {
            needed: 4 + len,
            available: bytes.len(),
        });
    }
    if body.len() > len {
        return Err(FrameError::Malformed(format!(
            "{} trailing bytes after frame",
            body.len() - len
        )));
    }
    decode_body(body)
}

fn decode_body<M: WireMessage>(body: &[u8]) -> Result<M, FrameError> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| FrameError::Malformed(e.to_string()))?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| FrameError::Malformed("missing string field `kind`".into()))?;
    if !M::KINDS.contains(&kind) {
        return Err(FrameError::UnknownKind(kind.to_string()));
    }
    serde_json::from_value(value).map_err(|e| FrameError::Malformed(e.to_string()))
}

/// Reads one frame. `Ok(None)` on a clean end of stream before the prefix.
pub fn read_frame<M: WireMessage, R: Read>(reader: &mut R) -> Result<Option<M>, FrameError> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(FrameError::Truncated {
                    needed: 4,
                    available: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::Oversized(len));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated {
            needed: 4 + len,
            available: 4,
        },
        _ => FrameError::Io(e),
    })?;
    decode_body(&body).map(Some)
}

pub fn write_frame<M: WireMessage, W: Write>(writer: &mut W, message: &M) -> Result<(), FrameError> {
    writer.write_all(&encode_frame(message)?)?;
    writer.flush()?;
    Ok(())
}

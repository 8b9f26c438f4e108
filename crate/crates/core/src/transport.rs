//! Length-prefixed binary framing for server/worker messages.
//!
//! A frame is a 4-byte big-endian length, counting the tag byte and the
//! payload, followed by a 1-byte tag and the payload. Integers are 8-byte
//! big-endian, booleans one byte (0 or 1), and parameter vectors an 8-byte
//! big-endian count followed by that many little-endian IEEE-754 `f64`s.

use alloc::vec::Vec;

use crate::ParamVector;

pub const TAG_TRIGGER: u8 = 1;
pub const TAG_PULL_REQUEST: u8 = 2;
pub const TAG_PULL_RESPONSE: u8 = 3;
pub const TAG_PUSH: u8 = 4;
pub const TAG_PUSH_ACK: u8 = 5;
pub const TAG_SHUTDOWN: u8 = 6;

/// Frames declaring more than this many bytes are refused.
pub const DEFAULT_MAX_FRAME: usize = 256 << 20;

const LEN_PREFIX: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Trigger { epoch: u64 },
    PullRequest { worker_id: u64 },
    PullResponse { epoch: u64, params: ParamVector },
    Push { worker_id: u64, tau: u64, local_iters: u64, params: ParamVector },
    PushAck { accepted: bool, current_epoch: u64 },
    Shutdown,
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Trigger { .. } => TAG_TRIGGER,
            Message::PullRequest { .. } => TAG_PULL_REQUEST,
            Message::PullResponse { .. } => TAG_PULL_RESPONSE,
            Message::Push { .. } => TAG_PUSH,
            Message::PushAck { .. } => TAG_PUSH_ACK,
            Message::Shutdown => TAG_SHUTDOWN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("frame length {declared} does not match the payload of tag {tag} ({detail})")]
    LengthMismatch { tag: u8, declared: usize, detail: &'static str },
    #[error("frame of {declared} bytes exceeds the {max}-byte limit")]
    Oversize { declared: usize, max: usize },
    #[error("boolean byte must be 0 or 1, got {0}")]
    InvalidBool(u8),
    #[error("parameter vector is empty or holds a non-finite value")]
    InvalidParams,
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(msg, &mut out);
    out
}

/// Appends one frame for `msg` to `out`.
pub fn encode_into(msg: &Message, out: &mut Vec<u8>) {
    let start = out.len();
    out.extend_from_slice(&[0; LEN_PREFIX]);
    out.push(msg.tag());
    match msg {
        Message::Trigger { epoch } => put_u64(out, *epoch),
        Message::PullRequest { worker_id } => put_u64(out, *worker_id),
        Message::PullResponse { epoch, params } => {
            put_u64(out, *epoch);
            put_params(out, params);
        }
        Message::Push {
            worker_id,
            tau,
            local_iters,
            params,
        } => {
            put_u64(out, *worker_id);
            put_u64(out, *tau);
            put_u64(out, *local_iters);
            put_params(out, params);
        }
        Message::PushAck {
            accepted,
            current_epoch,
        } => {
            out.push(u8::from(*accepted));
            put_u64(out, *current_epoch);
        }
        Message::Shutdown => {}
    }
    let len = (out.len() - start - LEN_PREFIX) as u32;
    out[start..start + LEN_PREFIX].copy_from_slice(&len.to_be_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_params(out: &mut Vec<u8>, params: &ParamVector) {
    put_u64(out, params.dim() as u64);
    out.reserve(params.dim() * 8);
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes the frame at the start of `buf`.
///
/// Returns `Ok(None)` when `buf` does not yet hold a whole frame, and
/// otherwise the message together with the number of bytes it occupied.
pub fn decode(buf: &[u8], max_frame: usize) -> Result<Option<(Message, usize)>, ProtocolError> {
    let Some(prefix) = buf.get(..LEN_PREFIX) else {
        return Ok(None);
    };
    let declared = u32::from_be_bytes(prefix.try_into().expect("4 bytes")) as usize;
    if declared > max_frame {
        return Err(ProtocolError::Oversize {
            declared,
            max: max_frame,
        });
    }
    if declared == 0 {
        return Err(ProtocolError::LengthMismatch {
            tag: 0,
            declared,
            detail: "frame has no tag byte",
        });
    }
    let Some(frame) = buf.get(LEN_PREFIX..LEN_PREFIX + declared) else {
        return Ok(None);
    };
    let tag = frame[0];
    let mut r = Reader {
        tag,
        declared,
        rest: &frame[1..],
    };
    let msg = match tag {
        TAG_TRIGGER => Message::Trigger { epoch: r.u64()? },
        TAG_PULL_REQUEST => Message::PullRequest { worker_id: r.u64()? },
        TAG_PULL_RESPONSE => Message::PullResponse {
            epoch: r.u64()?,
            params: r.params()?,
        },
        TAG_PUSH => Message::Push {
            worker_id: r.u64()?,
            tau: r.u64()?,
            local_iters: r.u64()?,
            params: r.params()?,
        },
        TAG_PUSH_ACK => Message::PushAck {
            accepted: r.bool()?,
            current_epoch: r.u64()?,
        },
        TAG_SHUTDOWN => Message::Shutdown,
        other => return Err(ProtocolError::UnknownTag(other)),
    };
    if !r.rest.is_empty() {
        return Err(r.mismatch("trailing bytes after payload"));
    }
    Ok(Some((msg, LEN_PREFIX + declared)))
}

struct Reader<'a> {
    tag: u8,
    declared: usize,
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    fn mismatch(&self, detail: &'static str) -> ProtocolError {
        ProtocolError::LengthMismatch {
            tag: self.tag,
            declared: self.declared,
            detail,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.rest.len() < n {
            return Err(self.mismatch("payload shorter than its fields"));
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bool(&mut self) -> Result<bool, ProtocolError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(ProtocolError::InvalidBool(b)),
        }
    }

    fn params(&mut self) -> Result<ParamVector, ProtocolError> {
        let count = self.u64()?;
        let bytes = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(8))
            .filter(|&b| b == self.rest.len())
            .ok_or_else(|| self.mismatch("vector count disagrees with remaining bytes"))?;
        let values = self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        ParamVector::new(values).map_err(|_| ProtocolError::InvalidParams)
    }
}

//! Binary layouts, all integers and floats little-endian unless noted:
//!
//! | type | payload |
//! |------|---------|
//! | 1 Activation | client_id u32, batch_id u32, matrix, labels matrix |
//! | 2 Gradient | client_id u32, batch_id u32, matrix, loss f64 |
//! | 3 Params | client_id u32, round u32, count u32, then per tensor: name_len u32, UTF-8 name, matrix |
//! | 4 ImportanceReport | client_id u32, round u32, beta f64, gamma f64 |
//! | 5 Digest | client_id u32, row_count u64, 32 digest bytes |
//! | 6 Control | kind u8 (1 join, 2 round start, 3 round end, 4 shutdown), client_id u32, round u32 |
//!
//! A matrix is `rows u32, cols u32` followed by `rows * cols` f64 values in
//! row-major order. The frame header is the payload length as a big-endian
//! u32 followed by the type byte.

use std::io::{Read, Write};

use super::{Control, ControlKind, ImportanceReport, Message, MessageType, ParamsMessage};
use crate::data::PartitionDigest;
use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamSet};
use crate::split::{ActivationBatch, GradientBatch};

pub const HEADER_LEN: usize = 5;
pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Protocol(format!("{what} {v} does not fit in 32 bits")))
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) -> Result<()> {
    put_u32(out, to_u32(m.rows(), "rows")?);
    put_u32(out, to_u32(m.cols(), "cols")?);
    for &v in m.as_slice() {
        put_f64(out, v);
    }
    Ok(())
}

pub fn encode_payload(msg: &Message) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match msg {
        Message::Activation(ab) => {
            put_u32(&mut out, ab.client_id);
            put_u32(&mut out, ab.batch_id);
            put_matrix(&mut out, &ab.activations)?;
            put_matrix(&mut out, &ab.labels)?;
        }
        Message::Gradient(gb) => {
            if !gb.loss.is_finite() {
                return Err(Error::NonFinite("gradient loss".into()));
            }
            put_u32(&mut out, gb.client_id);
            put_u32(&mut out, gb.batch_id);
            put_matrix(&mut out, &gb.cut_grad)?;
            put_f64(&mut out, gb.loss);
        }
        Message::Params(pm) => {
            put_u32(&mut out, pm.client_id);
            put_u32(&mut out, pm.round);
            put_u32(&mut out, to_u32(pm.params.len(), "tensor count")?);
            for (name, t) in pm.params.entries() {
                put_u32(&mut out, to_u32(name.len(), "name length")?);
                out.extend_from_slice(name.as_bytes());
                put_matrix(&mut out, t)?;
            }
        }
        Message::ImportanceReport(r) => {
            if !(r.beta.is_finite() && r.gamma.is_finite()) {
                return Err(Error::NonFinite("importance report".into()));
            }
            put_u32(&mut out, r.client_id);
            put_u32(&mut out, r.round);
            put_f64(&mut out, r.beta);
            put_f64(&mut out, r.gamma);
        }
        Message::Digest(d) => {
            put_u32(&mut out, d.client_id);
            out.extend_from_slice(&d.row_count.to_le_bytes());
            out.extend_from_slice(&d.digest);
        }
        Message::Control(c) => {
            out.push(c.kind as u8);
            put_u32(&mut out, c.client_id);
            put_u32(&mut out, c.round);
        }
    }
    if out.len() > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "payload of {} bytes exceeds the {MAX_PAYLOAD} byte limit",
            out.len()
        )));
    }
    Ok(out)
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>> {
    let payload = encode_payload(msg)?;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.message_type() as u8);
    frame.extend_from_slice(&payload);
    Ok(frame)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Protocol(format!(
                "truncated payload: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Protocol("non-finite value in payload".into()))
        }
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| Error::Protocol(format!("truncated {rows}x{cols} matrix")))?;
        let data = self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::new(rows, cols, data).map_err(|e| Error::Protocol(e.to_string()))
    }

    fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )))
        }
    }
}

pub fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<Message> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let msg = match kind {
        MessageType::Activation => Message::Activation(ActivationBatch {
            client_id: c.u32()?,
            batch_id: c.u32()?,
            activations: c.matrix()?,
            labels: c.matrix()?,
        }),
        MessageType::Gradient => Message::Gradient(GradientBatch {
            client_id: c.u32()?,
            batch_id: c.u32()?,
            cut_grad: c.matrix()?,
            loss: c.f64()?,
        }),
        MessageType::Params => {
            let client_id = c.u32()?;
            let round = c.u32()?;
            let count = c.u32()?;
            let mut params = ParamSet::new();
            for _ in 0..count {
                let len = c.u32()? as usize;
                let name = std::str::from_utf8(c.take(len)?)
                    .map_err(|_| Error::Protocol("tensor name is not UTF-8".into()))?
                    .to_string();
                params.push(name, c.matrix()?);
            }
            Message::Params(ParamsMessage { client_id, round, params })
        }
        MessageType::ImportanceReport => Message::ImportanceReport(ImportanceReport {
            client_id: c.u32()?,
            round: c.u32()?,
            beta: c.f64()?,
            gamma: c.f64()?,
        }),
        MessageType::Digest => Message::Digest(PartitionDigest {
            client_id: c.u32()?,
            row_count: c.u64()?,
            digest: c.take(32)?.try_into().unwrap(),
        }),
        MessageType::Control => {
            let kind = match c.u8()? {
                1 => ControlKind::Join,
                2 => ControlKind::RoundStart,
                3 => ControlKind::RoundEnd,
                4 => ControlKind::Shutdown,
                other => return Err(Error::Protocol(format!("unknown control kind {other}"))),
            };
            Message::Control(Control {
                kind,
                client_id: c.u32()?,
                round: c.u32()?,
            })
        }
    };
    c.finish()?;
    Ok(msg)
}

/// Parses the 5-byte header into (payload length, type).
pub fn decode_header(header: [u8; HEADER_LEN]) -> Result<(usize, MessageType)> {
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    let kind = MessageType::try_from(header[4])?;
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "declared payload of {len} bytes exceeds the {MAX_PAYLOAD} byte limit"
        )));
    }
    Ok((len, kind))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Protocol(format!("truncated frame header ({} bytes)", bytes.len())));
    }
    let (len, kind) = decode_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(Error::Protocol(format!(
            "frame declares {len} payload bytes, has {}",
            payload.len()
        )));
    }
    decode_payload(kind, payload)
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Blocking read of one frame.
pub fn read_frame(r: &mut impl Read) -> Result<Message> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(eof_as_closed)?;
    let (len, kind) = decode_header(header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(eof_as_closed)?;
    decode_payload(kind, &payload)
}

fn eof_as_closed(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::PeerClosed
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one() -> Message {
        Message::Gradient(GradientBatch {
            client_id: 0,
            batch_id: 0,
            cut_grad: Matrix::new(1, 1, vec![1.0]).unwrap(),
            loss: 0.5,
        })
    }

    #[test]
    fn matrix_block_layout() {
        let msg = Message::Activation(ActivationBatch {
            client_id: 0,
            batch_id: 0,
            activations: Matrix::new(1, 1, vec![1.0]).unwrap(),
            labels: Matrix::new(1, 1, vec![0.0]).unwrap(),
        });
        let frame = encode_frame(&msg).unwrap();
        let payload = &frame[HEADER_LEN..];
        // ids + dims, then one value
        assert_eq!(&payload[..16], &[0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&payload[16..24], &[0, 0, 0, 0, 0, 0, 0xF0, 0x3F]);
        // labels matrix: dims + one value
        assert_eq!(payload.len(), 24 + 8 + 8);
        assert_eq!(&frame[..4], &(payload.len() as u32).to_be_bytes());
        assert_eq!(frame[4], 1);
        assert_eq!(decode_frame(&frame).unwrap(), msg);
    }

    #[test]
    fn gradient_layout() {
        let frame = encode_frame(&one_by_one()).unwrap();
        assert_eq!(frame.len(), HEADER_LEN + 24 + 8);
        assert_eq!(&frame[HEADER_LEN + 16..HEADER_LEN + 24], &1.0f64.to_le_bytes());
        assert_eq!(&frame[HEADER_LEN + 24..], &0.5f64.to_le_bytes());
    }

    #[test]
    fn unknown_type_is_rejected() {
        let mut frame = encode_frame(&one_by_one()).unwrap();
        frame[4] = 0x09;
        assert!(matches!(decode_frame(&frame), Err(Error::Protocol(_))));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let frame = encode_frame(&one_by_one()).unwrap();
        assert!(decode_frame(&frame[..frame.len() - 1]).is_err());
        assert!(decode_frame(&frame[..3]).is_err());
        let mut long = frame.clone();
        long.push(0);
        assert!(decode_frame(&long).is_err());
        // length field consistent but payload too short for the matrix
        let mut bad = frame[..HEADER_LEN].to_vec();
        bad[..4].copy_from_slice(&12u32.to_be_bytes());
        bad.extend_from_slice(&frame[HEADER_LEN..HEADER_LEN + 12]);
        assert!(decode_frame(&bad).is_err());
    }

    #[test]
    fn oversized_length_is_rejected() {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(&((MAX_PAYLOAD + 1) as u32).to_be_bytes());
        header[4] = 2;
        assert!(decode_header(header).is_err());
    }

    #[test]
    fn huge_matrix_dims_do_not_allocate() {
        let mut payload = Vec::new();
        put_u32(&mut payload, 0);
        put_u32(&mut payload, 0);
        put_u32(&mut payload, u32::MAX);
        put_u32(&mut payload, u32::MAX);
        assert!(decode_payload(MessageType::Gradient, &payload).is_err());
    }

    #[test]
    fn non_finite_payload_value_is_rejected() {
        let mut frame = encode_frame(&one_by_one()).unwrap();
        let at = HEADER_LEN + 16;
        frame[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_frame(&frame).is_err());
    }

    #[test]
    fn stream_read_write() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &one_by_one()).unwrap();
        let ctl = Message::Control(Control { kind: ControlKind::Shutdown, client_id: 3, round: 9 });
        write_frame(&mut buf, &ctl).unwrap();
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), one_by_one());
        assert_eq!(read_frame(&mut r).unwrap(), ctl);
        assert!(matches!(read_frame(&mut r), Err(Error::PeerClosed)));
    }
}

//! Message framing and delivery between clients and the server.
//!
//! Every message travels as one frame: a 4-byte big-endian payload length,
//! a 1-byte message type, then the payload. Numeric payload fields are
//! little-endian; see [`codec`] for the per-type layouts.

pub mod codec;
mod inproc;
mod tcp;

pub use codec::{decode_frame, encode_frame, read_frame, write_frame, HEADER_LEN, MAX_PAYLOAD};
pub use inproc::{pair as inproc_pair, InProcEndpoint};
pub use tcp::{TcpEndpoint, TcpHub};

use std::time::Duration;

use crate::data::PartitionDigest;
use crate::error::Result;
use crate::nn::ParamSet;
use crate::split::{ActivationBatch, GradientBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Activation = 1,
    Gradient = 2,
    Params = 3,
    ImportanceReport = 4,
    Digest = 5,
    Control = 6,
}

impl TryFrom<u8> for MessageType {
    type Error = crate::Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => MessageType::Activation,
            2 => MessageType::Gradient,
            3 => MessageType::Params,
            4 => MessageType::ImportanceReport,
            5 => MessageType::Digest,
            6 => MessageType::Control,
            other => {
                return Err(crate::Error::Protocol(format!("unknown message type 0x{other:02x}")))
            }
        })
    }
}

/// Client-half parameters, sent client to server for scoring and
/// averaging, and server to client for the global broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsMessage {
    pub client_id: u32,
    pub round: u32,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceReport {
    pub client_id: u32,
    pub round: u32,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ControlKind {
    Join = 1,
    RoundStart = 2,
    RoundEnd = 3,
    Shutdown = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub kind: ControlKind,
    pub client_id: u32,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Activation(ActivationBatch),
    Gradient(GradientBatch),
    Params(ParamsMessage),
    ImportanceReport(ImportanceReport),
    Digest(PartitionDigest),
    Control(Control),
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::Activation(_) => MessageType::Activation,
            Message::Gradient(_) => MessageType::Gradient,
            Message::Params(_) => MessageType::Params,
            Message::ImportanceReport(_) => MessageType::ImportanceReport,
            Message::Digest(_) => MessageType::Digest,
            Message::Control(_) => MessageType::Control,
        }
    }
}

/// One side of a point-to-point, FIFO message channel.
pub trait Endpoint: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;

    /// Waits up to `timeout` for the next message.
    fn recv(&mut self, timeout: Duration) -> Result<Message>;
}

impl Endpoint for Box<dyn Endpoint> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message> {
        (**self).recv(timeout)
    }
}

pub fn channel_send(endpoint: &mut dyn Endpoint, msg: &Message) -> Result<()> {
    endpoint.send(msg)
}

pub fn channel_recv(endpoint: &mut dyn Endpoint, timeout: Duration) -> Result<Message> {
    endpoint.recv(timeout)
}

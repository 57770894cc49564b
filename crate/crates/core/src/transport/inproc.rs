use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::{Endpoint, Message};
use crate::error::{Error, Result};

/// In-process endpoint backed by a pair of unbounded queues.
pub struct InProcEndpoint {
    tx: Sender<Message>,
    rx: Receiver<Message>,
}

/// Two connected endpoints.
pub fn pair() -> (InProcEndpoint, InProcEndpoint) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        InProcEndpoint { tx: a_tx, rx: a_rx },
        InProcEndpoint { tx: b_tx, rx: b_rx },
    )
}

impl Endpoint for InProcEndpoint {
    fn send(&mut self, msg: &Message) -> Result<()> {
        self.tx.send(msg.clone()).map_err(|_| Error::PeerClosed)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message> {
        self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Timeout,
            RecvTimeoutError::Disconnected => Error::PeerClosed,
        })
    }
}

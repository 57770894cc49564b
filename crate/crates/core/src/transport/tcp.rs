use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::codec::{decode_header, decode_payload, encode_frame, HEADER_LEN};
use super::{Endpoint, Message};
use crate::error::{Error, Result};

/// Upper bound on how long the rest of a frame may take once its first
/// byte has arrived.
const FRAME_COMPLETION_TIMEOUT: Duration = Duration::from_secs(30);

/// One persistent TCP connection carrying length-prefixed frames.
///
/// Any protocol violation or partial frame poisons the endpoint; every
/// later call then fails with [`Error::Poisoned`].
pub struct TcpEndpoint {
    stream: TcpStream,
    poisoned: bool,
}

enum Fill {
    Done,
    Nothing,
}

impl TcpEndpoint {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Self::from_stream(stream)
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpEndpoint { stream, poisoned: false })
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn peer_addr(&self) -> Result<SocketAddr> {
        Ok(self.stream.peer_addr()?)
    }

    fn poison(&mut self, err: Error) -> Error {
        self.poisoned = true;
        err
    }

    /// Fills `buf` completely. Returns `Fill::Nothing` if the first read
    /// timed out before any byte arrived.
    fn fill(&mut self, buf: &mut [u8], first_timeout: Duration, allow_empty: bool) -> Result<Fill> {
        let mut got = 0;
        let mut deadline = Instant::now() + first_timeout;
        while got < buf.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                if got == 0 && allow_empty {
                    return Ok(Fill::Nothing);
                }
                return Err(self.poison(Error::Protocol("timed out inside a frame".into())));
            }
            self.stream.set_read_timeout(Some(left))?;
            match self.stream.read(&mut buf[got..]) {
                Ok(0) if got == 0 && allow_empty => return Err(Error::PeerClosed),
                Ok(0) => return Err(self.poison(Error::Protocol("connection closed inside a frame".into()))),
                Ok(n) => {
                    if got == 0 {
                        deadline = Instant::now() + FRAME_COMPLETION_TIMEOUT;
                    }
                    got += n;
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    if got == 0 && allow_empty {
                        return Ok(Fill::Nothing);
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(self.poison(Error::Io(e))),
            }
        }
        Ok(Fill::Done)
    }
}

impl Endpoint for TcpEndpoint {
    fn send(&mut self, msg: &Message) -> Result<()> {
        if self.poisoned {
            return Err(Error::Poisoned);
        }
        let frame = encode_frame(msg)?;
        if let Err(e) = self.stream.write_all(&frame).and_then(|_| self.stream.flush()) {
            return Err(self.poison(Error::Io(e)));
        }
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message> {
        if self.poisoned {
            return Err(Error::Poisoned);
        }
        let mut header = [0u8; HEADER_LEN];
        let first = timeout.max(Duration::from_millis(1));
        if let Fill::Nothing = self.fill(&mut header, first, true)? {
            return Err(Error::Timeout);
        }
        let (len, kind) = match decode_header(header) {
            Ok(h) => h,
            Err(e) => return Err(self.poison(e)),
        };
        let mut payload = vec![0u8; len];
        self.fill(&mut payload, FRAME_COMPLETION_TIMEOUT, false)?;
        decode_payload(kind, &payload).map_err(|e| self.poison(e))
    }
}

/// Server-side listener handing out one [`TcpEndpoint`] per client.
pub struct TcpHub {
    listener: TcpListener,
}

impl TcpHub {
    /// Binds on loopback. Port 0 picks a free port.
    pub fn bind(port: u16) -> Result<Self> {
        Ok(TcpHub {
            listener: TcpListener::bind(("127.0.0.1", port))?,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn accept(&self) -> Result<TcpEndpoint> {
        let (stream, _) = self.listener.accept()?;
        TcpEndpoint::from_stream(stream)
    }
}

//! Frame transports: TCP and an in-memory pair with fault injection.

use std::io::{self, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::frame::Frame;
use super::NetError;

/// A reliable, ordered frame channel.
pub trait Transport: Send {
    /// Writes already-encoded frame bytes.
    fn send_raw(&mut self, bytes: &[u8]) -> Result<(), NetError>;

    fn send(&mut self, frame: &Frame) -> Result<(), NetError> {
        self.send_raw(&frame.encode())
    }

    /// Waits at most `timeout` for the next frame.
    fn recv(&mut self, timeout: Duration) -> Result<Frame, NetError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send_raw(&mut self, bytes: &[u8]) -> Result<(), NetError> {
        (**self).send_raw(bytes)
    }

    fn send(&mut self, frame: &Frame) -> Result<(), NetError> {
        (**self).send(frame)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, NetError> {
        (**self).recv(timeout)
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, NetError> {
        use std::net::ToSocketAddrs;
        let mut last = None;
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => return Ok(Self::new(s)?),
                Err(e) => last = Some(e),
            }
        }
        Err(last
            .unwrap_or_else(|| {
                io::Error::new(io::ErrorKind::NotFound, format!("{addr} did not resolve"))
            })
            .into())
    }

    pub fn peer(&self) -> Option<std::net::SocketAddr> {
        self.stream.peer_addr().ok()
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Transport for TcpTransport {
    fn send_raw(&mut self, bytes: &[u8]) -> Result<(), NetError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, NetError> {
        self.stream
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        match Frame::read_from(&mut self.stream) {
            Ok(Ok(f)) => Ok(f),
            Ok(Err(e)) => Err(NetError::Frame(e)),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Err(NetError::Timeout)
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(NetError::Closed),
            Err(e) => Err(e.into()),
        }
    }
}

/// What the fault hook does with one outgoing frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Pass,
    Drop,
    Duplicate,
    /// XOR `mask` into the encoded byte at `offset` (CRC left stale).
    CorruptByte {
        offset: usize,
        mask: u8,
    },
    Delay(Duration),
    /// Send this frame instead, correctly encoded.
    Replace(Frame),
}

/// Called for every outgoing frame with its zero-based index.
pub type FaultHook = Box<dyn FnMut(usize, &Frame) -> Fault + Send>;

/// Applies a [`FaultHook`] to frames sent through the inner transport.
pub struct Faulty<T> {
    inner: T,
    hook: FaultHook,
    sent: usize,
}

impl<T: Transport> Faulty<T> {
    pub fn new(inner: T, hook: FaultHook) -> Self {
        Self {
            inner,
            hook,
            sent: 0,
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Faulty<T> {
    fn send_raw(&mut self, bytes: &[u8]) -> Result<(), NetError> {
        self.inner.send_raw(bytes)
    }

    fn send(&mut self, frame: &Frame) -> Result<(), NetError> {
        let index = self.sent;
        self.sent += 1;
        match (self.hook)(index, frame) {
            Fault::Pass => self.inner.send(frame),
            Fault::Drop => Ok(()),
            Fault::Duplicate => {
                self.inner.send(frame)?;
                self.inner.send(frame)
            }
            Fault::CorruptByte { offset, mask } => {
                let mut bytes = frame.encode();
                let i = offset % bytes.len();
                bytes[i] ^= mask;
                self.inner.send_raw(&bytes)
            }
            Fault::Delay(d) => {
                std::thread::sleep(d);
                self.inner.send(frame)
            }
            Fault::Replace(f) => self.inner.send(&f),
        }
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, NetError> {
        self.inner.recv(timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

type Entry = (Direction, Vec<u8>);

/// Shared record of every encoded frame put on an in-memory link.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<Entry>>>);

impl Transcript {
    pub fn frames(&self) -> Vec<(Direction, Vec<u8>)> {
        self.0.lock().expect("transcript lock").clone()
    }

    pub fn clear(&self) {
        self.0.lock().expect("transcript lock").clear();
    }

    fn push(&self, d: Direction, bytes: Vec<u8>) {
        self.0.lock().expect("transcript lock").push((d, bytes));
    }
}

/// One end of an in-memory link.
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    direction: Direction,
    transcript: Transcript,
}

/// Connected ends `(a, b)` sharing one transcript.
pub fn memory_pair() -> (MemoryTransport, MemoryTransport) {
    let (tx_ab, rx_ab) = channel();
    let (tx_ba, rx_ba) = channel();
    let transcript = Transcript::default();
    (
        MemoryTransport {
            tx: tx_ab,
            rx: rx_ba,
            direction: Direction::AToB,
            transcript: transcript.clone(),
        },
        MemoryTransport {
            tx: tx_ba,
            rx: rx_ab,
            direction: Direction::BToA,
            transcript,
        },
    )
}

impl MemoryTransport {
    pub fn transcript(&self) -> Transcript {
        self.transcript.clone()
    }
}

impl Transport for MemoryTransport {
    fn send_raw(&mut self, bytes: &[u8]) -> Result<(), NetError> {
        self.transcript.push(self.direction, bytes.to_vec());
        self.tx.send(bytes.to_vec()).map_err(|_| NetError::Closed)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, NetError> {
        match self.rx.recv_timeout(timeout) {
            Ok(bytes) => Frame::decode(&bytes).map_err(NetError::Frame),
            Err(RecvTimeoutError::Timeout) => Err(NetError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(NetError::Closed),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::net::TcpListener;

    use super::*;
    use crate::net::frame::{FrameError, MsgType};

    fn frame(n: u8) -> Frame {
        Frame::new(MsgType::M1, 1, vec![n; 4])
    }

    #[test]
    fn memory_faults() {
        let (a, mut b) = memory_pair();
        let transcript = a.transcript();
        let mut a = Faulty::new(
            a,
            Box::new(|i, _| match i {
                0 => Fault::Drop,
                1 => Fault::Duplicate,
                2 => Fault::CorruptByte {
                    offset: 19,
                    mask: 1,
                },
                3 => Fault::Replace(frame(9)),
                _ => Fault::Delay(Duration::from_millis(5)),
            }),
        );
        let t = Duration::from_millis(200);
        for n in 0..5 {
            a.send(&frame(n)).unwrap();
        }
        assert_eq!(b.recv(t).unwrap(), frame(1));
        assert_eq!(b.recv(t).unwrap(), frame(1));
        assert!(matches!(
            b.recv(t),
            Err(NetError::Frame(FrameError::Crc { .. }))
        ));
        assert_eq!(b.recv(t).unwrap(), frame(9));
        assert_eq!(b.recv(t).unwrap(), frame(4));
        assert!(matches!(
            b.recv(Duration::from_millis(10)),
            Err(NetError::Timeout)
        ));
        assert_eq!(transcript.frames().len(), 5);
        drop(a);
        assert!(matches!(b.recv(t), Err(NetError::Closed)));
    }

    #[test]
    fn tcp_round_trip_and_timeout() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut t = TcpTransport::new(s).unwrap();
            let f = t.recv(Duration::from_secs(5)).unwrap();
            t.send(&f).unwrap();
            assert!(matches!(
                t.recv(Duration::from_secs(5)),
                Err(NetError::Closed)
            ));
        });
        let mut c = TcpTransport::connect(&addr, Duration::from_secs(5)).unwrap();
        assert!(matches!(
            c.recv(Duration::from_millis(20)),
            Err(NetError::Timeout)
        ));
        c.send(&frame(5)).unwrap();
        assert_eq!(c.recv(Duration::from_secs(5)).unwrap(), frame(5));
        c.shutdown();
        server.join().unwrap();
    }
}

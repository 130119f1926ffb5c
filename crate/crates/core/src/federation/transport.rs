//! Reliable, ordered, frame-preserving duplex links.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::frame_len;
use crate::error::{Error, Result};

pub trait Link: Send {
    fn send(&mut self, frame: Vec<u8>) -> Result<()>;
    /// Next frame, or `Ok(None)` if nothing arrived within `timeout`.
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>>;
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        (**self).send(frame)
    }
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        (**self).recv(timeout)
    }
}

/// Shared record of every frame a site sent.
pub type Transcript = Arc<Mutex<Vec<Vec<u8>>>>;

/// Records outbound frames before forwarding them.
pub struct Tapped<L> {
    inner: L,
    transcript: Option<Transcript>,
}

impl<L: Link> Tapped<L> {
    pub fn new(inner: L, transcript: Option<Transcript>) -> Self {
        Self { inner, transcript }
    }
}

pub(crate) fn record(transcript: &Option<Transcript>, frame: &[u8]) {
    if let Some(t) = transcript {
        t.lock().expect("transcript lock").push(frame.to_vec());
    }
}

impl<L: Link> Link for Tapped<L> {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        record(&self.transcript, &frame);
        self.inner.send(frame)
    }
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        self.inner.recv(timeout)
    }
}

/// In-process link over channels.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (a_tx, a_rx) = mpsc::channel();
    let (b_tx, b_rx) = mpsc::channel();
    (ChannelLink { tx: a_tx, rx: b_rx }, ChannelLink { tx: b_tx, rx: a_rx })
}

impl Link for ChannelLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx.send(frame).map_err(|_| Error::TransportClosed)
    }
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        match self.rx.recv_timeout(timeout) {
            Ok(f) => Ok(Some(f)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::TransportClosed),
        }
    }
}

/// TCP link; frames are re-assembled from the byte stream using the header length.
pub struct TcpLink {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream, buf: Vec::new() })
    }

    /// Connects, retrying until `deadline` elapses (the center may start later).
    pub fn connect(addr: impl ToSocketAddrs + Copy, deadline: Duration) -> Result<Self> {
        let start = Instant::now();
        loop {
            match TcpStream::connect(addr) {
                Ok(s) => return Self::new(s),
                Err(e) if start.elapsed() >= deadline => return Err(e.into()),
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    fn take_frame(&mut self) -> Result<Option<Vec<u8>>> {
        match frame_len(&self.buf)? {
            Some(len) if self.buf.len() >= len => {
                let rest = self.buf.split_off(len);
                Ok(Some(std::mem::replace(&mut self.buf, rest)))
            }
            _ => Ok(None),
        }
    }
}

impl Link for TcpLink {
    fn send(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream.write_all(&frame).map_err(|e| match e.kind() {
            ErrorKind::BrokenPipe | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted => Error::TransportClosed,
            _ => e.into(),
        })
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>> {
        let deadline = Instant::now() + timeout;
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if let Some(f) = self.take_frame()? {
                return Ok(Some(f));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.stream.set_read_timeout(Some(left))?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(Error::TransportClosed),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Ok(None),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) if matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted) => {
                    return Err(Error::TransportClosed)
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Accepts `k` connections, giving up after `deadline`.
pub fn accept_links(listener: &TcpListener, k: usize, deadline: Duration) -> Result<Vec<TcpLink>> {
    listener.set_nonblocking(true)?;
    let start = Instant::now();
    let mut links = Vec::with_capacity(k);
    while links.len() < k {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                links.push(TcpLink::new(stream)?);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if start.elapsed() >= deadline {
                    return Err(Error::SiteTimeout { site: links.len(), retries: 0 });
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    listener.set_nonblocking(false)?;
    Ok(links)
}

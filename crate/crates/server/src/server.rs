//! TCP front end: one session and two threads per connection.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam_channel::{bounded, Receiver};
use lnoi_core::TimeTag;

use crate::protocol::{END_CHANNEL, OVERFLOW_CHANNEL, QUEUE_CAPACITY, RESPONSE_CHANNEL};
use crate::session::{Frame, Pacing, Session};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    pub pacing: Pacing,
    pub queue_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            pacing: Pacing::Simulated,
            queue_capacity: QUEUE_CAPACITY,
        }
    }
}

pub struct Server {
    listener: TcpListener,
    config: ServerConfig,
    next_id: Arc<AtomicU64>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config,
            next_id: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails.
    pub fn serve(self) -> io::Result<()> {
        for conn in self.listener.incoming() {
            let stream = conn?;
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            let config = self.config;
            thread::Builder::new().name(format!("session-{id}")).spawn(move || {
                let _ = handle_connection(stream, id, config);
            })?;
        }
        Ok(())
    }

    /// Runs [`Server::serve`] on a background thread.
    pub fn spawn(self) -> JoinHandle<io::Result<()>> {
        thread::spawn(move || self.serve())
    }
}

/// Serves one client until it disconnects.
pub fn handle_connection(stream: TcpStream, id: u64, config: ServerConfig) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (tx, rx) = bounded(config.queue_capacity.max(1));
    let out = stream.try_clone()?;
    let writer = thread::Builder::new()
        .name(format!("session-{id}-writer"))
        .spawn(move || write_frames(out, rx))?;

    let mut session = Session::new(id, config.pacing, tx);
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        session.handle_command(line.trim_end());
    }
    // dropping the session stops its generator and closes the queue
    drop(session);
    writer.join().unwrap_or(Ok(()))
}

fn record(channel: u32, time_ps: u64) -> [u8; 12] {
    TimeTag::new(channel, time_ps).to_bytes()
}

fn write_frames(stream: TcpStream, rx: Receiver<Frame>) -> io::Result<()> {
    let mut w = BufWriter::with_capacity(1 << 16, stream);
    let mut binary = false;
    while let Ok(first) = rx.recv() {
        let mut next = Some(first);
        while let Some(f) = next {
            match f {
                Frame::Line(text) => {
                    let mut bytes = text.into_bytes();
                    bytes.push(b'\n');
                    if binary {
                        w.write_all(&record(RESPONSE_CHANNEL, bytes.len() as u64))?;
                    }
                    w.write_all(&bytes)?;
                    // a reply never straddles a flush
                    w.flush()?;
                }
                Frame::BeginStream => binary = true,
                Frame::Tag(t) => w.write_all(&t.to_bytes())?,
                Frame::Overflow(n) => w.write_all(&record(OVERFLOW_CHANNEL, n))?,
                Frame::End(n) => {
                    w.write_all(&record(END_CHANNEL, n))?;
                    binary = false;
                }
            }
            next = rx.try_recv().ok();
        }
        w.flush()?;
    }
    w.flush()
}

//! Minimal blocking client for the control and data planes.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};

use lnoi_core::{Scenario, TimeTag};

use crate::protocol::{END_CHANNEL, OVERFLOW_CHANNEL, RESPONSE_CHANNEL};

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Everything received between `START` and the end marker.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Capture {
    pub tags: Vec<TimeTag>,
    /// Raw record bytes, markers excluded.
    pub bytes: Vec<u8>,
    pub dropped: u64,
    pub overflow_markers: u64,
    /// Replies that arrived in-band while records were flowing.
    pub replies: Vec<String>,
    /// Record count announced by the end marker.
    pub announced: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(Self {
            writer: s.try_clone()?,
            reader: BufReader::new(s),
        })
    }

    pub fn send(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")
    }

    /// Sends a control line and reads the plain-text reply.
    pub fn command(&mut self, line: &str) -> io::Result<String> {
        self.send(line)?;
        self.read_reply()
    }

    pub fn read_reply(&mut self) -> io::Result<String> {
        let mut s = String::new();
        if self.reader.read_line(&mut s)? == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        Ok(s.trim_end().to_string())
    }

    pub fn configure(&mut self, s: &Scenario) -> io::Result<String> {
        let json = serde_json::to_string(s).map_err(io::Error::other)?;
        self.command(&format!("CONFIG {json}"))
    }

    fn read_record(&mut self) -> io::Result<TimeTag> {
        let mut b = [0u8; 12];
        self.reader.read_exact(&mut b)?;
        Ok(TimeTag::from_bytes(&b))
    }

    /// Reads records until the end marker of the current run.
    pub fn capture(&mut self) -> io::Result<Capture> {
        let mut c = Capture::default();
        loop {
            let r = self.read_record()?;
            match r.channel {
                END_CHANNEL => {
                    c.announced = r.time_ps;
                    return Ok(c);
                }
                OVERFLOW_CHANNEL => {
                    c.dropped += r.time_ps;
                    c.overflow_markers += 1;
                }
                RESPONSE_CHANNEL => {
                    let mut buf = vec![0u8; r.time_ps as usize];
                    self.reader.read_exact(&mut buf)?;
                    let text = String::from_utf8(buf).map_err(io::Error::other)?;
                    c.replies.push(text.trim_end().to_string());
                }
                _ => {
                    c.bytes.extend_from_slice(&r.to_bytes());
                    c.tags.push(r);
                }
            }
        }
    }
}

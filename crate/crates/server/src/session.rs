//! Per-connection session state and the tag generator it drives.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{SendTimeoutError, Sender, TrySendError};
use lnoi_core::timetag::{DET1_CHANNEL, DET2_CHANNEL};
use lnoi_core::{run_scenario, Scenario, TimeTag};

use crate::protocol::{parse_command, Command, ErrorCode, ProtocolError};

/// Item queued for the connection writer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    /// A reply line, without terminator.
    Line(String),
    /// Records follow until [`Frame::End`].
    BeginStream,
    Tag(TimeTag),
    Overflow(u64),
    End(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunState {
    Idle,
    Running,
    Stopped,
}

impl RunState {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Idle => "idle",
            Self::Running => "running",
            Self::Stopped => "stopped",
        }
    }
}

/// How the generator reacts to a full queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pacing {
    /// Simulated time: generate as fast as the consumer reads. A full queue
    /// stalls the generator, so nothing is lost.
    #[default]
    Simulated,
    /// Emit each record no earlier than its timestamp in wall-clock time. A
    /// full queue drops records and reports how many in-band.
    Realtime,
}

/// Counters shared between a session and its generator.
#[derive(Debug, Default)]
struct Progress {
    tags: AtomicU64,
    elapsed_ps: AtomicU64,
    dropped: AtomicU64,
    stop: AtomicBool,
    done: AtomicBool,
}

struct Run {
    progress: Arc<Progress>,
    worker: Option<JoinHandle<()>>,
}

impl Run {
    fn halt(&mut self) {
        if let Some(w) = self.worker.take() {
            self.progress.stop.store(true, Ordering::Release);
            let _ = w.join();
        }
        self.progress.done.store(true, Ordering::Release);
    }
}

pub struct Session {
    pub id: u64,
    pacing: Pacing,
    scenario: Option<Scenario>,
    channels: Option<Vec<u32>>,
    run: Option<Run>,
    sink: Sender<Frame>,
}

impl Session {
    pub fn new(id: u64, pacing: Pacing, sink: Sender<Frame>) -> Self {
        Self {
            id,
            pacing,
            scenario: None,
            channels: None,
            run: None,
            sink,
        }
    }

    pub fn state(&self) -> RunState {
        match &self.run {
            None => RunState::Idle,
            Some(r) if r.progress.done.load(Ordering::Acquire) => RunState::Stopped,
            Some(_) => RunState::Running,
        }
    }

    /// Handles one control line and returns the reply it queued.
    pub fn handle_command(&mut self, line: &str) -> String {
        let reply = match parse_command(line) {
            Ok(cmd) => self.apply(cmd),
            Err(e) => e.to_string(),
        };
        // the START path has already queued its own reply
        if !reply.is_empty() {
            let _ = self.sink.send(Frame::Line(reply.clone()));
            reply
        } else {
            "OK started".to_string()
        }
    }

    fn apply(&mut self, cmd: Command) -> String {
        let busy = self.state() == RunState::Running;
        let conflict = |m: &str| ProtocolError::new(ErrorCode::Conflict, m).to_string();
        match cmd {
            Command::Config(_) | Command::Subscribe(_) if busy => conflict("run in progress"),
            Command::Config(s) => {
                if let Some(mut r) = self.run.take() {
                    r.halt();
                }
                self.scenario = Some(*s);
                "OK configured".into()
            }
            Command::Subscribe(chs) => {
                let list: Vec<String> = chs.iter().map(u32::to_string).collect();
                self.channels = Some(chs);
                format!("OK subscribed {}", list.join(","))
            }
            Command::Start if busy => conflict("already running"),
            Command::Start => match self.scenario.clone() {
                None => conflict("no scenario loaded"),
                Some(s) => {
                    self.start(s);
                    String::new()
                }
            },
            Command::Stop if !busy => conflict("not running"),
            Command::Stop => {
                let p = self.finish_run().expect("running session has a run");
                format!("OK stopped tags={} elapsed_ps={}", p.0, p.1)
            }
            Command::Status => self.status(),
        }
    }

    fn status(&self) -> String {
        let (tags, elapsed, dropped) = match &self.run {
            None => (0, 0, 0),
            Some(r) => (
                r.progress.tags.load(Ordering::Acquire),
                r.progress.elapsed_ps.load(Ordering::Acquire),
                r.progress.dropped.load(Ordering::Acquire),
            ),
        };
        let mut s = format!("OK {} tags={tags} elapsed_ps={elapsed}", self.state().as_str());
        if dropped > 0 {
            s.push_str(&format!(" dropped={dropped}"));
        }
        s
    }

    fn start(&mut self, scenario: Scenario) {
        if let Some(mut r) = self.run.take() {
            r.halt();
        }
        let _ = self.sink.send(Frame::Line("OK started".into()));
        let emit = self.channels.is_some();
        if emit {
            let _ = self.sink.send(Frame::BeginStream);
        }
        // unsubscribed runs still advance the cursor over the detector channels
        let channels = self
            .channels
            .clone()
            .unwrap_or_else(|| vec![DET1_CHANNEL, DET2_CHANNEL]);
        let progress = Arc::new(Progress::default());
        let p = Arc::clone(&progress);
        let sink = self.sink.clone();
        let pacing = self.pacing;
        let worker = thread::Builder::new()
            .name(format!("session-{}-generator", self.id))
            .spawn(move || generate(&scenario, &channels, emit, pacing, &p, &sink))
            .expect("spawn generator thread");
        self.run = Some(Run {
            progress,
            worker: Some(worker),
        });
    }

    /// Stops the current run and waits for its generator. Returns
    /// (tags, elapsed_ps). The counters stay visible to STATUS afterwards.
    fn finish_run(&mut self) -> Option<(u64, u64)> {
        let run = self.run.as_mut()?;
        run.halt();
        Some((
            run.progress.tags.load(Ordering::Acquire),
            run.progress.elapsed_ps.load(Ordering::Acquire),
        ))
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(r) = self.run.as_mut() {
            r.halt();
        }
    }
}

fn generate(s: &Scenario, channels: &[u32], emit: bool, pacing: Pacing, p: &Progress, sink: &Sender<Frame>) {
    let mut sent = 0u64;
    match run_scenario(s) {
        Ok(out) => {
            let t0 = Instant::now();
            let mut pending_drop = 0u64;
            for tag in out.stream(channels) {
                if p.stop.load(Ordering::Acquire) {
                    break;
                }
                if emit {
                    let ok = match pacing {
                        Pacing::Simulated => send_blocking(sink, Frame::Tag(tag), &p.stop),
                        Pacing::Realtime => {
                            wait_until(t0, tag.time_ps, &p.stop);
                            send_or_drop(sink, tag, &mut pending_drop, p)
                        }
                    };
                    match ok {
                        Some(true) => sent += 1,
                        Some(false) => {}
                        None => break,
                    }
                }
                p.tags.fetch_add(1, Ordering::AcqRel);
                p.elapsed_ps.store(tag.time_ps, Ordering::Release);
            }
            if emit && pending_drop > 0 {
                send_blocking(sink, Frame::Overflow(pending_drop), &p.stop);
            }
        }
        Err(e) => {
            let _ = sink.send(Frame::Line(
                ProtocolError::new(ErrorCode::Unprocessable, e.to_string()).to_string(),
            ));
        }
    }
    if emit {
        let _ = sink.send(Frame::End(sent));
    }
    p.done.store(true, Ordering::Release);
}

/// Blocks until queued. `Some(true)` on success, `None` when the run was
/// stopped or the connection is gone.
fn send_blocking(sink: &Sender<Frame>, mut f: Frame, stop: &AtomicBool) -> Option<bool> {
    loop {
        match sink.send_timeout(f, Duration::from_millis(20)) {
            Ok(()) => return Some(true),
            Err(SendTimeoutError::Disconnected(_)) => return None,
            Err(SendTimeoutError::Timeout(back)) => {
                if stop.load(Ordering::Acquire) {
                    return None;
                }
                f = back;
            }
        }
    }
}

/// Realtime path: never waits on the consumer. Dropped records are counted
/// and reported by an overflow marker ahead of the next record that fits.
fn send_or_drop(sink: &Sender<Frame>, tag: TimeTag, pending: &mut u64, p: &Progress) -> Option<bool> {
    if *pending > 0 {
        match sink.try_send(Frame::Overflow(*pending)) {
            Ok(()) => *pending = 0,
            Err(TrySendError::Full(_)) => {
                *pending += 1;
                p.dropped.fetch_add(1, Ordering::AcqRel);
                return Some(false);
            }
            Err(TrySendError::Disconnected(_)) => return None,
        }
    }
    match sink.try_send(Frame::Tag(tag)) {
        Ok(()) => Some(true),
        Err(TrySendError::Full(_)) => {
            *pending += 1;
            p.dropped.fetch_add(1, Ordering::AcqRel);
            Some(false)
        }
        Err(TrySendError::Disconnected(_)) => None,
    }
}

fn wait_until(t0: Instant, time_ps: u64, stop: &AtomicBool) {
    let due = Duration::from_nanos(time_ps / 1000);
    loop {
        let now = t0.elapsed();
        if now >= due || stop.load(Ordering::Acquire) {
            return;
        }
        thread::sleep((due - now).min(Duration::from_millis(50)));
    }
}

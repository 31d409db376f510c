use std::f64::consts::{FRAC_PI_2, PI};
use std::net::SocketAddr;
use std::thread;
use std::time::Duration;

use lnoi_core::timetag::{encode_tags, TRIGGER_CHANNEL};
use lnoi_core::{run_scenario, CircuitSpec, DriveWaveform, EomSpec, MziSpec, Scenario, SourceSpec, TimeTag};
use lnoi_server::{Client, Pacing, Server, ServerConfig};

fn start_server(config: ServerConfig) -> SocketAddr {
    let server = Server::bind("127.0.0.1:0", config).unwrap();
    let addr = server.local_addr().unwrap();
    server.spawn();
    addr
}

fn sine_scenario(seed: u64) -> Scenario {
    let mut s = Scenario::new(SourceSpec::cw(3e5, 1550.0).at_detector(2), 0.05, seed);
    s.eom = EomSpec::cryo_ac();
    s.drive = DriveWaveform::sine(5.0, 100e6);
    s.operating_phase_rad = Some(FRAC_PI_2);
    s
}

#[test]
fn start_before_config_is_a_conflict() {
    let addr = start_server(ServerConfig::default());
    let mut c = Client::connect(addr).unwrap();
    assert_eq!(c.command("START").unwrap(), "ERR 409 no scenario loaded");
    assert_eq!(c.command("BOGUS").unwrap(), "ERR 400 unknown command BOGUS");
    assert!(c.command("CONFIG {not json").unwrap().starts_with("ERR 400 "));
    assert_eq!(c.command("STATUS").unwrap(), "OK idle tags=0 elapsed_ps=0");
}

#[test]
fn trigger_records_are_one_ramp_period_apart() {
    let addr = start_server(ServerConfig::default());
    let mut s = Scenario::new(SourceSpec::cw(1e4, 1550.0), 0.01, 4);
    s.drive = DriveWaveform::ramp(20.0, 1e3);
    let mut c = Client::connect(addr).unwrap();
    assert_eq!(c.configure(&s).unwrap(), "OK configured");
    assert_eq!(c.command("SUBSCRIBE 0").unwrap(), "OK subscribed 0");
    assert_eq!(c.command("START").unwrap(), "OK started");
    let cap = c.capture().unwrap();
    assert_eq!(cap.tags.len(), 10);
    assert_eq!(cap.announced, 10);
    assert!(cap.tags.iter().all(|t| t.channel == TRIGGER_CHANNEL));
    assert!(cap
        .tags
        .windows(2)
        .all(|w| w[1].time_ps - w[0].time_ps == 1_000_000_000));
}

#[test]
fn wire_stream_matches_the_simulation_and_repeats() {
    let addr = start_server(ServerConfig::default());
    let s = sine_scenario(17);
    let expected = encode_tags(&run_scenario(&s).unwrap().stream(&[1, 2]).collect::<Vec<_>>());
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut c = Client::connect(addr).unwrap();
        c.configure(&s).unwrap();
        c.command("SUBSCRIBE 2,1").unwrap();
        assert_eq!(c.command("START").unwrap(), "OK started");
        runs.push(c.capture().unwrap());
    }
    assert!(!expected.is_empty());
    assert_eq!(runs[0].bytes, expected);
    assert_eq!(runs[1].bytes, expected);
    assert_eq!(runs[0].announced as usize, runs[0].tags.len());
    for ch in [1, 2] {
        let t: Vec<u64> = runs[0]
            .tags
            .iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.time_ps)
            .collect();
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn restart_on_one_connection_replays_from_cursor_zero() {
    let addr = start_server(ServerConfig::default());
    let mut c = Client::connect(addr).unwrap();
    c.configure(&sine_scenario(5)).unwrap();
    c.command("SUBSCRIBE 1,2").unwrap();
    c.command("START").unwrap();
    let a = c.capture().unwrap();
    let st = c.command("STATUS").unwrap();
    assert_eq!(
        st,
        format!(
            "OK stopped tags={} elapsed_ps={}",
            a.tags.len(),
            a.tags.last().unwrap().time_ps
        )
    );
    c.command("START").unwrap();
    assert_eq!(c.capture().unwrap().bytes, a.bytes);
}

#[test]
fn replies_during_a_stream_arrive_framed() {
    let addr = start_server(ServerConfig::default());
    let mut c = Client::connect(addr).unwrap();
    let mut s = sine_scenario(8);
    // long enough that both commands land while the run is in progress
    s.duration_s = 1.0;
    c.configure(&s).unwrap();
    c.command("SUBSCRIBE 1,2").unwrap();
    assert_eq!(c.command("START").unwrap(), "OK started");
    c.send("STATUS").unwrap();
    c.send("START").unwrap();
    let cap = c.capture().unwrap();
    assert_eq!(cap.replies.len(), 2, "{:?}", cap.replies);
    assert!(cap.replies[0].starts_with("OK "), "{}", cap.replies[0]);
    assert_eq!(cap.replies[1], "ERR 409 already running");
}

#[test]
fn stop_ends_the_stream_early() {
    let addr = start_server(ServerConfig::default());
    let mut c = Client::connect(addr).unwrap();
    let mut s = Scenario::new(SourceSpec::cw(1e3, 1550.0), 1.0, 2);
    s.drive = DriveWaveform::sine(1.0, 1e9);
    c.configure(&s).unwrap();
    c.command("SUBSCRIBE 0").unwrap();
    c.command("START").unwrap();
    thread::sleep(Duration::from_millis(50));
    c.send("STOP").unwrap();
    let cap = c.capture().unwrap();
    assert!(cap.tags.len() < 1_000_000_000);
    assert_eq!(cap.announced as usize, cap.tags.len());
    let reply = c.read_reply().unwrap();
    assert!(reply.starts_with("OK stopped tags="), "{reply}");
}

#[test]
fn sessions_are_isolated() {
    let addr = start_server(ServerConfig::default());
    let (sa, sb) = (sine_scenario(1), sine_scenario(2));
    let mut a = Client::connect(addr).unwrap();
    let mut b = Client::connect(addr).unwrap();
    a.configure(&sa).unwrap();
    b.configure(&sb).unwrap();
    a.command("SUBSCRIBE 1").unwrap();
    b.command("SUBSCRIBE 1,2").unwrap();
    a.command("START").unwrap();
    b.command("START").unwrap();
    // reconfiguring A must not touch B's run
    let ca = a.capture().unwrap();
    a.configure(&sine_scenario(99)).unwrap();
    let cb = b.capture().unwrap();
    let want_b = encode_tags(&run_scenario(&sb).unwrap().stream(&[1, 2]).collect::<Vec<_>>());
    let want_a = encode_tags(&run_scenario(&sa).unwrap().stream(&[1]).collect::<Vec<_>>());
    assert_eq!(cb.bytes, want_b);
    assert_eq!(ca.bytes, want_a);
}

#[test]
fn extinction_off_state_streams_only_dark_counts() {
    let addr = start_server(ServerConfig::default());
    let mut s = Scenario::new(SourceSpec::cw(1e6, 1550.0).at_detector(2), 10.0, 6);
    s.circuit = CircuitSpec {
        mzi: MziSpec {
            residual_opd_um: CircuitSpec::default().mzi.residual_opd_um,
            ..MziSpec::with_split(0.56, 0.82)
        },
        ..CircuitSpec::default()
    };
    s.operating_phase_rad = Some(PI);
    let mut c = Client::connect(addr).unwrap();
    c.configure(&s).unwrap();
    c.command("SUBSCRIBE 2").unwrap();
    c.command("START").unwrap();
    let cap = c.capture().unwrap();
    // 2 cps for 10 s: Poisson mean 20
    let n = cap.tags.len();
    assert!((4..=40).contains(&n), "{n}");
}

#[test]
fn realtime_overflow_is_reported_in_band() {
    let addr = start_server(ServerConfig {
        pacing: Pacing::Realtime,
        queue_capacity: 64,
    });
    let mut s = Scenario::new(SourceSpec::cw(1e3, 1550.0), 0.004, 3);
    s.drive = DriveWaveform::sine(1.0, 1e9);
    let mut c = Client::connect(addr).unwrap();
    c.configure(&s).unwrap();
    c.command("SUBSCRIBE 0").unwrap();
    c.command("START").unwrap();
    // stall long enough for the socket buffers and the queue to fill
    thread::sleep(Duration::from_millis(400));
    let cap = c.capture().unwrap();
    let total = 4_000_000u64;
    assert!(cap.overflow_markers > 0);
    assert_eq!(cap.tags.len() as u64 + cap.dropped, total);
    assert_eq!(cap.announced, cap.tags.len() as u64);
    assert!(cap.tags.windows(2).all(|w| w[0].time_ps < w[1].time_ps));
    let last: &TimeTag = cap.tags.last().unwrap();
    assert!(last.time_ps < 4_000_000_000);
}

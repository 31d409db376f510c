//! Control-plane grammar and wire markers.
//!
//! Control lines are UTF-8 terminated by `\n`. Every reply is a single line,
//! either `OK ...` or `ERR <code> <message>`. Once a subscribed run starts the
//! connection carries 12-byte tag records until an end marker; replies sent
//! while records are flowing are framed as a [`RESPONSE_CHANNEL`] record whose
//! time field is the byte length of the reply line that follows it.

use std::fmt;

use lnoi_core::timetag::{DET1_CHANNEL, DET2_CHANNEL, LASER_REF_CHANNEL, TRIGGER_CHANNEL};
use lnoi_core::Scenario;

pub const DEFAULT_PORT: u16 = 8471;
/// Per-subscriber queue depth in records.
pub const QUEUE_CAPACITY: usize = 1 << 16;

/// Dropped-record marker; its time field is the number of records dropped.
pub const OVERFLOW_CHANNEL: u32 = 0xFFFF_FFFF;
/// End of a run's record stream; its time field is the number of tag records sent.
pub const END_CHANNEL: u32 = 0xFFFF_FFFE;
/// In-band reply frame; its time field is the length of the reply line.
pub const RESPONSE_CHANNEL: u32 = 0xFFFF_FFFD;

pub const KNOWN_CHANNELS: [u32; 4] = [TRIGGER_CHANNEL, DET1_CHANNEL, DET2_CHANNEL, LASER_REF_CHANNEL];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCode {
    /// The line is not a known command, or its JSON does not parse.
    BadRequest = 400,
    /// Command not allowed in the current run state.
    Conflict = 409,
    /// Well-formed request with invalid content.
    Unprocessable = 422,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep replies on one line whatever the message contains
        let msg: String = self
            .message
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        write!(f, "ERR {} {}", self.code as u16, msg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Config(Box<Scenario>),
    Start,
    Stop,
    Status,
    Subscribe(Vec<u32>),
}

/// Parses one control line (without its terminator).
pub fn parse_command(line: &str) -> Result<Command, ProtocolError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (verb, rest) = match line.split_once(char::is_whitespace) {
        Some((v, r)) => (v, r.trim()),
        None => (line, ""),
    };
    let no_args = |cmd: Command| {
        if rest.is_empty() {
            Ok(cmd)
        } else {
            Err(ProtocolError::new(
                ErrorCode::BadRequest,
                format!("{verb} takes no arguments"),
            ))
        }
    };
    match verb {
        "CONFIG" => parse_scenario(rest).map(|s| Command::Config(Box::new(s))),
        "START" => no_args(Command::Start),
        "STOP" => no_args(Command::Stop),
        "STATUS" => no_args(Command::Status),
        "SUBSCRIBE" => parse_channels(rest).map(Command::Subscribe),
        "" => Err(ProtocolError::new(ErrorCode::BadRequest, "empty command")),
        other => Err(ProtocolError::new(
            ErrorCode::BadRequest,
            format!("unknown command {other}"),
        )),
    }
}

fn parse_scenario(json: &str) -> Result<Scenario, ProtocolError> {
    if json.is_empty() {
        return Err(ProtocolError::new(
            ErrorCode::BadRequest,
            "CONFIG needs a scenario document",
        ));
    }
    let s: Scenario = serde_json::from_str(json).map_err(|e| {
        let code = if e.is_data() {
            ErrorCode::Unprocessable
        } else {
            ErrorCode::BadRequest
        };
        ProtocolError::new(code, format!("malformed scenario: {e}"))
    })?;
    s.validate()
        .map_err(|e| ProtocolError::new(ErrorCode::Unprocessable, e.to_string()))?;
    Ok(s)
}

/// Channel list separated by commas and/or spaces, e.g. `1,2` or `0 2`.
fn parse_channels(list: &str) -> Result<Vec<u32>, ProtocolError> {
    let mut out = Vec::new();
    for tok in list.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
        let ch: u32 = tok
            .parse()
            .map_err(|_| ProtocolError::new(ErrorCode::BadRequest, format!("bad channel {tok}")))?;
        if !KNOWN_CHANNELS.contains(&ch) {
            return Err(ProtocolError::new(
                ErrorCode::Unprocessable,
                format!("unknown channel {ch}"),
            ));
        }
        if !out.contains(&ch) {
            out.push(ch);
        }
    }
    if out.is_empty() {
        return Err(ProtocolError::new(
            ErrorCode::BadRequest,
            "SUBSCRIBE needs at least one channel",
        ));
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lnoi_core::SourceSpec;

    #[test]
    fn simple_verbs() {
        assert_eq!(parse_command("START").unwrap(), Command::Start);
        assert_eq!(parse_command("STOP\r\n").unwrap(), Command::Stop);
        assert_eq!(parse_command("STATUS").unwrap(), Command::Status);
        assert_eq!(parse_command("START now").unwrap_err().code, ErrorCode::BadRequest);
        assert_eq!(parse_command("start").unwrap_err().code, ErrorCode::BadRequest);
        assert_eq!(parse_command("").unwrap_err().code, ErrorCode::BadRequest);
    }

    #[test]
    fn channel_lists() {
        assert_eq!(parse_command("SUBSCRIBE 2,1").unwrap(), Command::Subscribe(vec![1, 2]));
        assert_eq!(
            parse_command("SUBSCRIBE 0 2, 2").unwrap(),
            Command::Subscribe(vec![0, 2])
        );
        assert_eq!(parse_command("SUBSCRIBE").unwrap_err().code, ErrorCode::BadRequest);
        assert_eq!(parse_command("SUBSCRIBE x").unwrap_err().code, ErrorCode::BadRequest);
        assert_eq!(parse_command("SUBSCRIBE 9").unwrap_err().code, ErrorCode::Unprocessable);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut s = Scenario::new(SourceSpec::cw(1e6, 1550.0), 0.01, 1);
        let ok = format!("CONFIG {}", serde_json::to_string(&s).unwrap());
        assert!(matches!(parse_command(&ok).unwrap(), Command::Config(_)));

        assert_eq!(parse_command("CONFIG {oops").unwrap_err().code, ErrorCode::BadRequest);
        let missing = parse_command(r#"CONFIG {"seed": 1}"#).unwrap_err();
        assert_eq!(missing.code, ErrorCode::Unprocessable);

        s.duration_s = -1.0;
        let bad = parse_command(&format!("CONFIG {}", serde_json::to_string(&s).unwrap())).unwrap_err();
        assert_eq!(bad.code, ErrorCode::Unprocessable);
        assert!(bad.message.contains("duration"), "{}", bad.message);
    }

    #[test]
    fn replies_stay_on_one_line() {
        let e = ProtocolError::new(ErrorCode::Conflict, "a\nb");
        assert_eq!(e.to_string(), "ERR 409 a b");
    }
}

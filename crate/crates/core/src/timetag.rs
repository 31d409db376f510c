//! Time-tagger emulation. Tag records and their 12-byte encoding live here
//! along with the folding and start-stop histograms built from them.

use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Read, Write};

use crate::error::{invalid, Result};

/// Size of one binary tag record: channel u32 LE followed by time u64 LE.
pub const RECORD_BYTES: usize = 12;

/// Channel of the function-generator trigger output.
pub const TRIGGER_CHANNEL: u32 = 0;
pub const DET1_CHANNEL: u32 = 1;
pub const DET2_CHANNEL: u32 = 2;
/// Channel of the pulsed laser's electrical reference output.
pub const LASER_REF_CHANNEL: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u32,
    pub time_ps: u64,
}

impl TimeTag {
    pub fn new(channel: u32, time_ps: u64) -> Self {
        Self { channel, time_ps }
    }

    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[..4].copy_from_slice(&self.channel.to_le_bytes());
        b[4..].copy_from_slice(&self.time_ps.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Self {
        let mut ch = [0u8; 4];
        let mut t = [0u8; 8];
        ch.copy_from_slice(&b[..4]);
        t.copy_from_slice(&b[4..]);
        Self {
            channel: u32::from_le_bytes(ch),
            time_ps: u64::from_le_bytes(t),
        }
    }
}

pub fn write_tags<W: Write>(mut w: W, tags: &[TimeTag]) -> io::Result<()> {
    for t in tags {
        w.write_all(&t.to_bytes())?;
    }
    Ok(())
}

pub fn encode_tags(tags: &[TimeTag]) -> Vec<u8> {
    let mut out = Vec::with_capacity(tags.len() * RECORD_BYTES);
    write_tags(&mut out, tags).expect("writing to a Vec cannot fail");
    out
}

/// Reads whole records until EOF; a trailing partial record is an error.
pub fn read_tags<R: Read>(mut r: R) -> io::Result<Vec<TimeTag>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % RECORD_BYTES != 0 {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("{} trailing bytes after last record", buf.len() % RECORD_BYTES),
        ));
    }
    Ok(buf
        .chunks_exact(RECORD_BYTES)
        .map(|c| TimeTag::from_bytes(c.try_into().expect("exact chunk")))
        .collect())
}

/// Merges per-channel streams into one stream ordered by time, then channel,
/// then input order.
pub fn merge_streams(streams: &[&[TimeTag]]) -> Vec<TimeTag> {
    let mut all: Vec<TimeTag> = streams.iter().flat_map(|s| s.iter().copied()).collect();
    all.sort_by_key(|t| (t.time_ps, t.channel));
    all
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: u64,
    pub origin_ps: i64,
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_period_ps: Option<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start(&self, i: usize) -> i64 {
        self.origin_ps + (i as u64 * self.bin_width_ps) as i64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) as f64 + self.bin_width_ps as f64 / 2.0
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Bin-wise sum of two histograms with identical binning.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        if self.bin_width_ps != other.bin_width_ps
            || self.origin_ps != other.origin_ps
            || self.counts.len() != other.counts.len()
            || self.fold_period_ps != other.fold_period_ps
        {
            return Err(invalid("histogram", "binning differs"));
        }
        let mut h = self.clone();
        for (a, b) in h.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(h)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_start_ps,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_start(i), c)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("ascii")
    }

    /// Parses the `bin_start_ps,count` format. Bins must be evenly spaced.
    pub fn read_csv<R: BufRead>(r: R) -> io::Result<Histogram> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "bin_start_ps,count" {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| bad(format!("line {}: expected two fields", n + 2)))?;
            starts.push(a.trim().parse::<i64>().map_err(|e| bad(e.to_string()))?);
            counts.push(b.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?);
        }
        let width = match starts.as_slice() {
            [a, b, ..] if b > a => (b - a) as u64,
            [_] => 1,
            [] => return Err(bad("no bins".into())),
            _ => return Err(bad("bin starts must increase".into())),
        };
        if starts.windows(2).any(|w| (w[1] - w[0]) as u64 != width) {
            return Err(bad("bins are not evenly spaced".into()));
        }
        Ok(Histogram {
            bin_width_ps: width,
            origin_ps: starts[0],
            counts,
            fold_period_ps: None,
        })
    }
}

/// Folds tags modulo a trigger period, as a tagger histogramming stop events
/// against a periodic start.
pub fn fold_histogram(
    tags: &[TimeTag],
    trigger_period_ps: u64,
    trigger_phase_ps: u64,
    bin_width_ps: u64,
) -> Result<Histogram> {
    if bin_width_ps == 0 {
        return Err(invalid("bin_width_ps", "must be > 0"));
    }
    if trigger_period_ps <= bin_width_ps {
        return Err(invalid("trigger_period_ps", "must exceed the bin width"));
    }
    let nbins = trigger_period_ps.div_ceil(bin_width_ps) as usize;
    let mut counts = vec![0u64; nbins];
    let period = i128::from(trigger_period_ps);
    for t in tags {
        let x = (i128::from(t.time_ps) - i128::from(trigger_phase_ps)).rem_euclid(period) as u64;
        counts[(x / bin_width_ps) as usize] += 1;
    }
    Ok(Histogram {
        bin_width_ps,
        origin_ps: 0,
        counts,
        fold_period_ps: Some(trigger_period_ps),
    })
}

/// Start-stop histogram: each start is paired with the next stop at or after
/// it; delays above `max_delta_ps` are discarded.
pub fn start_stop_histogram(
    starts: &[TimeTag],
    stops: &[TimeTag],
    bin_width_ps: u64,
    max_delta_ps: u64,
) -> Result<Histogram> {
    if bin_width_ps == 0 {
        return Err(invalid("bin_width_ps", "must be > 0"));
    }
    let nbins = (max_delta_ps / bin_width_ps + 1) as usize;
    let mut counts = vec![0u64; nbins];
    let mut j = 0;
    for s in starts {
        while j < stops.len() && stops[j].time_ps < s.time_ps {
            j += 1;
        }
        let Some(stop) = stops.get(j) else { break };
        let delta = stop.time_ps - s.time_ps;
        if delta <= max_delta_ps {
            counts[(delta / bin_width_ps) as usize] += 1;
        }
    }
    Ok(Histogram {
        bin_width_ps,
        origin_ps: 0,
        counts,
        fold_period_ps: None,
    })
}

/// Tags per second inside `[start, end)`.
pub fn count_rate(tags: &[TimeTag], window_start_ps: u64, window_end_ps: u64) -> Result<f64> {
    if window_end_ps <= window_start_ps {
        return Err(invalid("window_end_ps", "must be after window_start_ps"));
    }
    let n = tags
        .iter()
        .filter(|t| (window_start_ps..window_end_ps).contains(&t.time_ps))
        .count();
    Ok(n as f64 / ((window_end_ps - window_start_ps) as f64 * 1e-12))
}

/// A strictly periodic tag source (function-generator trigger, laser
/// reference output), kept in closed form instead of as a list of tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicTrain {
    pub channel: u32,
    pub period_ps: u64,
    pub offset_ps: u64,
    pub count: u64,
}

impl PeriodicTrain {
    /// Ticks at `offset + k·period` that fall inside `[0, end_ps)`.
    pub fn within(channel: u32, period_ps: u64, offset_ps: u64, end_ps: u64) -> Self {
        let count = if period_ps == 0 || offset_ps >= end_ps {
            0
        } else {
            (end_ps - offset_ps).div_ceil(period_ps)
        };
        Self {
            channel,
            period_ps,
            offset_ps,
            count,
        }
    }

    pub fn time_of(&self, k: u64) -> u64 {
        self.offset_ps + k * self.period_ps
    }

    /// First tick at or after `t_ps`.
    pub fn next_at_or_after(&self, t_ps: u64) -> Option<u64> {
        if self.count == 0 {
            return None;
        }
        let k = if t_ps <= self.offset_ps {
            0
        } else {
            (t_ps - self.offset_ps).div_ceil(self.period_ps)
        };
        (k < self.count).then(|| self.time_of(k))
    }

    pub fn iter(&self) -> impl Iterator<Item = TimeTag> + '_ {
        (0..self.count).map(move |k| TimeTag::new(self.channel, self.time_of(k)))
    }

    pub fn to_tags(&self) -> Vec<TimeTag> {
        self.iter().collect()
    }
}

/// Start-stop histogram against a periodic stop train. Identical to
/// [`start_stop_histogram`] with the train's ticks as stops.
pub fn start_stop_histogram_periodic(
    starts: &[TimeTag],
    stops: &PeriodicTrain,
    bin_width_ps: u64,
    max_delta_ps: u64,
) -> Result<Histogram> {
    if bin_width_ps == 0 {
        return Err(invalid("bin_width_ps", "must be > 0"));
    }
    let nbins = (max_delta_ps / bin_width_ps + 1) as usize;
    let mut counts = vec![0u64; nbins];
    for s in starts {
        let Some(stop) = stops.next_at_or_after(s.time_ps) else {
            break;
        };
        let delta = stop - s.time_ps;
        if delta <= max_delta_ps {
            counts[(delta / bin_width_ps) as usize] += 1;
        }
    }
    Ok(Histogram {
        bin_width_ps,
        origin_ps: 0,
        counts,
        fold_period_ps: None,
    })
}

/// Lazily merges time-sorted tag sources into one stream ordered by time,
/// then channel, then source order.
pub struct TagMerge<'a> {
    sources: Vec<std::iter::Peekable<Box<dyn Iterator<Item = TimeTag> + Send + 'a>>>,
}

impl<'a> TagMerge<'a> {
    pub fn new(sources: Vec<Box<dyn Iterator<Item = TimeTag> + Send + 'a>>) -> Self {
        Self {
            sources: sources.into_iter().map(Iterator::peekable).collect(),
        }
    }
}

impl Iterator for TagMerge<'_> {
    type Item = TimeTag;

    fn next(&mut self) -> Option<TimeTag> {
        let mut best: Option<(usize, (u64, u32))> = None;
        for (i, s) in self.sources.iter_mut().enumerate() {
            if let Some(t) = s.peek() {
                let key = (t.time_ps, t.channel);
                if best.is_none_or(|(_, k)| key < k) {
                    best = Some((i, key));
                }
            }
        }
        let (i, _) = best?;
        self.sources[i].next()
    }
}

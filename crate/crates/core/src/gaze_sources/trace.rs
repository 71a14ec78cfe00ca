//! Gaze trace files.
//!
//! ```text
//! # frame=interface
//! t,x,y,valid
//! # trial experiment=accuracy subject=0 ...
//! 0,812.5,433.125,1
//! 0.02,,,0
//! ```
//!
//! The first line names the frame of `x`/`y`. A `# trial` comment opens a new
//! segment and its text is kept verbatim; timestamps must increase strictly
//! within a segment. Any other `#` line is ignored. Invalid samples may leave
//! `x`/`y` empty.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::fixation::GazeSample;
use crate::geometry::{Frame, Point2};

const SEGMENT_TAG: &str = "# trial";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSegment {
    /// Text after `# trial`, if the segment was opened by one.
    pub header: Option<String>,
    pub samples: Vec<GazeSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub frame: Frame,
    pub segments: Vec<TraceSegment>,
}

impl Trace {
    pub fn new(frame: Frame) -> Self {
        Trace { frame, segments: Vec::new() }
    }

    pub fn samples(&self) -> impl Iterator<Item = &GazeSample> {
        self.segments.iter().flat_map(|s| s.samples.iter())
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedTrace { line, reason: reason.into() }
}

pub fn read_trace(reader: impl BufRead) -> Result<Trace, TraceError> {
    let mut frame = None;
    let mut seen_header = false;
    let mut segments: Vec<TraceSegment> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('#') {
            if let Some(f) = rest.trim().strip_prefix("frame=") {
                if frame.is_some() || seen_header {
                    return Err(malformed(n, "frame must be declared once, before the header"));
                }
                frame = Some(match f.trim() {
                    "camera" => Frame::Camera,
                    "interface" => Frame::Interface,
                    other => return Err(malformed(n, format!("unknown frame `{other}`"))),
                });
            } else if let Some(h) = text.strip_prefix(SEGMENT_TAG) {
                if !seen_header {
                    return Err(malformed(n, "segment before the column header"));
                }
                segments.push(TraceSegment { header: Some(h.trim().to_string()), samples: Vec::new() });
            }
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = text.split(',').map(str::trim).collect();
            if cols != ["t", "x", "y", "valid"] {
                return Err(malformed(n, format!("expected header `t,x,y,valid`, found `{text}`")));
            }
            if frame.is_none() {
                return Err(malformed(n, "missing `# frame=` line"));
            }
            seen_header = true;
            continue;
        }
        let s = parse_row(text).map_err(|r| malformed(n, r))?;
        if segments.is_empty() {
            segments.push(TraceSegment { header: None, samples: Vec::new() });
        }
        let seg = segments.last_mut().expect("just pushed");
        if let Some(prev) = seg.samples.last() {
            if s.t.partial_cmp(&prev.t) != Some(std::cmp::Ordering::Greater) {
                return Err(malformed(n, format!("timestamp {} does not follow {}", s.t, prev.t)));
            }
        }
        seg.samples.push(s);
    }
    // an empty file is an empty interface-frame trace
    Ok(Trace { frame: frame.unwrap_or(Frame::Interface), segments })
}

fn parse_row(text: &str) -> Result<GazeSample, String> {
    let cols: Vec<&str> = text.split(',').map(str::trim).collect();
    if cols.len() != 4 {
        return Err(format!("expected 4 columns, found {}", cols.len()));
    }
    let num = |name: &str, v: &str| v.parse::<f64>().map_err(|_| format!("bad {name} `{v}`"));
    let t = num("t", cols[0])?;
    if !t.is_finite() {
        return Err(format!("non-finite t `{}`", cols[0]));
    }
    let valid = match cols[3] {
        "1" | "true" => true,
        "0" | "false" => false,
        v => return Err(format!("bad valid flag `{v}`")),
    };
    if !valid {
        return Ok(GazeSample::lost(t));
    }
    let p = Point2::new(num("x", cols[1])?, num("y", cols[2])?);
    if !p.is_finite() {
        return Err("non-finite coordinates on a valid sample".into());
    }
    Ok(GazeSample::new(t, p))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let f = std::fs::File::open(path)?;
    read_trace(io::BufReader::new(f))
}

/// Samples of the file at `path`, in file order.
pub fn replay(path: impl AsRef<Path>) -> Result<impl Iterator<Item = GazeSample>, TraceError> {
    let trace = load_trace(path)?;
    Ok(trace.segments.into_iter().flat_map(|s| s.samples))
}

pub fn write_trace(mut w: impl Write, trace: &Trace) -> io::Result<()> {
    let frame = match trace.frame {
        Frame::Camera => "camera",
        Frame::Interface => "interface",
        Frame::Robot => return Err(io::Error::new(io::ErrorKind::InvalidInput, "traces hold camera or interface samples")),
    };
    let mut out = String::new();
    let _ = writeln!(out, "# frame={frame}");
    out.push_str("t,x,y,valid\n");
    for seg in &trace.segments {
        if let Some(h) = &seg.header {
            let _ = writeln!(out, "{SEGMENT_TAG} {h}");
        }
        for s in &seg.samples {
            if s.valid {
                let _ = writeln!(out, "{},{},{},1", s.t, s.p.x, s.p.y);
            } else {
                let _ = writeln!(out, "{},,,0", s.t);
            }
        }
    }
    w.write_all(out.as_bytes())
}

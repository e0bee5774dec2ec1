//! Trace events and the line-oriented trace file format.
//!
//! ```text
//! # comment
//! <timestamp_ns> A <page_id> <ANON|FILE>
//! <timestamp_ns> L <page_id>
//! <timestamp_ns> S <page_id>
//! <timestamp_ns> F <page_id>
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{PageId, PageType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Alloc(PageId, PageType),
    Load(PageId),
    Store(PageId),
    Free(PageId),
}

impl Op {
    pub fn page(&self) -> PageId {
        match *self {
            Op::Alloc(p, _) | Op::Load(p) | Op::Store(p) | Op::Free(p) => p,
        }
    }

    pub fn is_access(&self) -> bool {
        matches!(self, Op::Load(_) | Op::Store(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub time: u64,
    pub op: Op,
}

impl TraceEvent {
    pub fn new(time: u64, op: Op) -> Self {
        Self { time, op }
    }
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.op {
            Op::Alloc(p, PageType::Anon) => write!(f, "{} A {} ANON", self.time, p),
            Op::Alloc(p, PageType::File) => write!(f, "{} A {} FILE", self.time, p),
            Op::Load(p) => write!(f, "{} L {}", self.time, p),
            Op::Store(p) => write!(f, "{} S {}", self.time, p),
            Op::Free(p) => write!(f, "{} F {}", self.time, p),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {index}: timestamp {time} is before {previous}")]
    OutOfOrder { index: usize, time: u64, previous: u64 },
    #[error("event {index}: page {page} {problem}")]
    BadPage {
        index: usize,
        page: PageId,
        problem: &'static str,
    },
}

/// Parses one non-comment line.
pub fn parse_line(text: &str, line: usize) -> Result<TraceEvent, TraceError> {
    let err = |message: String| TraceError::Parse { line, message };
    let mut fields = text.split_whitespace();
    let time = fields
        .next()
        .ok_or_else(|| err("empty line".into()))?
        .parse::<u64>()
        .map_err(|e| err(format!("bad timestamp: {e}")))?;
    let code = fields.next().ok_or_else(|| err("missing op code".into()))?;
    let page = fields
        .next()
        .ok_or_else(|| err("missing page id".into()))?
        .parse::<u64>()
        .map(PageId)
        .map_err(|e| err(format!("bad page id: {e}")))?;
    let op = match code {
        "A" => {
            let kind = match fields.next() {
                Some("ANON") => PageType::Anon,
                Some("FILE") => PageType::File,
                Some(other) => return Err(err(format!("bad page type '{other}'"))),
                None => return Err(err("alloc without page type".into())),
            };
            Op::Alloc(page, kind)
        }
        "L" => Op::Load(page),
        "S" => Op::Store(page),
        "F" => Op::Free(page),
        other => return Err(err(format!("unknown op code '{other}'"))),
    };
    if let Some(extra) = fields.next() {
        return Err(err(format!("trailing field '{extra}'")));
    }
    Ok(TraceEvent { time, op })
}

/// Streaming reader; yields events and enforces non-decreasing timestamps.
pub struct TraceReader<R> {
    lines: io::Lines<R>,
    line: usize,
    index: usize,
    previous: u64,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            index: 0,
            previous: 0,
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let trimmed = text.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let ev = match parse_line(trimmed, self.line) {
                Ok(ev) => ev,
                Err(e) => return Some(Err(e)),
            };
            if ev.time < self.previous {
                return Some(Err(TraceError::OutOfOrder {
                    index: self.index,
                    time: ev.time,
                    previous: self.previous,
                }));
            }
            self.previous = ev.time;
            self.index += 1;
            return Some(Ok(ev));
        }
    }
}

pub fn open_trace(path: &Path) -> Result<TraceReader<BufReader<File>>, TraceError> {
    Ok(TraceReader::new(BufReader::new(File::open(path)?)))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    open_trace(path)?.collect()
}

pub fn write_events<W: Write>(
    out: W,
    events: impl IntoIterator<Item = TraceEvent>,
) -> Result<u64, TraceError> {
    let mut out = BufWriter::new(out);
    let mut n = 0;
    for ev in events {
        writeln!(out, "{ev}")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

pub fn write_trace(
    path: &Path,
    events: impl IntoIterator<Item = TraceEvent>,
) -> Result<u64, TraceError> {
    write_events(File::create(path)?, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_all(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
        TraceReader::new(text.as_bytes()).collect()
    }

    #[test]
    fn parses_every_op() {
        let evs = parse_all("# hdr\n0 A 1 ANON\n5 A 2 FILE\n\n6 L 1\n6 S 2\n9 F 1\n").unwrap();
        assert_eq!(
            evs.iter().map(|e| e.op).collect::<Vec<_>>(),
            vec![
                Op::Alloc(PageId(1), PageType::Anon),
                Op::Alloc(PageId(2), PageType::File),
                Op::Load(PageId(1)),
                Op::Store(PageId(2)),
                Op::Free(PageId(1)),
            ]
        );
    }

    #[test]
    fn display_is_the_file_format() {
        let ev = TraceEvent::new(12, Op::Alloc(PageId(3), PageType::File));
        assert_eq!(ev.to_string(), "12 A 3 FILE");
        assert_eq!(parse_line(&ev.to_string(), 1).unwrap(), ev);
    }

    #[test]
    fn bad_op_code_names_the_line() {
        let err = parse_all("0 A 1 ANON\n# c\n3 X 1\n").unwrap_err();
        match err {
            TraceError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains('X'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_fields_are_rejected() {
        for bad in ["x A 1 ANON", "1 A 1", "1 A 1 HUGE", "1 L", "1 L 2 3", "1 L -4"] {
            assert!(matches!(parse_all(bad), Err(TraceError::Parse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn decreasing_timestamps_are_rejected() {
        let err = parse_all("5 A 1 ANON\n4 L 1\n").unwrap_err();
        assert!(matches!(
            err,
            TraceError::OutOfOrder { index: 1, time: 4, previous: 5 }
        ));
    }
}

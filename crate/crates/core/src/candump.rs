//! candump-style log ingestion: `(timestamp) channel ID#DATA`.

use std::fs;
use std::io;
use std::path::Path;

use crate::codec::CanFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    /// Seconds, as printed by `candump -l`.
    pub timestamp: Option<f64>,
    pub channel: Option<String>,
    pub frame: CanFrame,
    /// 1-based source line.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    /// 1-based numbers of lines that could not be parsed (extended IDs, CAN-FD, garbage).
    pub skipped: Vec<usize>,
}

impl ParsedLog {
    pub fn frames(&self) -> impl Iterator<Item = &CanFrame> {
        self.records.iter().map(|r| &r.frame)
    }
}

fn parse_line(line: &str, number: usize) -> Option<LogRecord> {
    let mut timestamp = None;
    let mut channel = None;
    let mut frame = None;
    for token in line.split_whitespace() {
        if let Some(inner) = token.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
            timestamp = Some(inner.parse::<f64>().ok()?);
        } else if token.contains('#') {
            frame = Some(token.parse::<CanFrame>().ok()?);
        } else if frame.is_none() {
            channel = Some(token.to_string());
        } else {
            // Trailing flags (e.g. candump's `R`/`T` direction markers) are ignored.
        }
    }
    frame.map(|frame| LogRecord { timestamp, channel, frame, line: number })
}

/// Parses log text. Blank lines and `;`/`//` comments are ignored; anything
/// else that does not parse as a classic base frame is counted as skipped.
pub fn parse_candump(text: &str) -> ParsedLog {
    let mut log = ParsedLog::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') || line.starts_with("//") {
            continue;
        }
        match parse_line(line, i + 1) {
            Some(record) => log.records.push(record),
            None => log.skipped.push(i + 1),
        }
    }
    log
}

pub fn read_candump(path: &Path) -> io::Result<ParsedLog> {
    Ok(parse_candump(&fs::read_to_string(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_standard_lines_and_skips_bad_ones() {
        let text = "\
(1600000000.000100) can0 1A2#0011223344556677
(1600000000.000400) can0 38D#R
; comment

can0 123#DEADBEEF
(1600000000.000900) can0 12345678#00
(1600000000.001000) can0 1A2#XYZ
7FF#
";
        let log = parse_candump(text);
        assert_eq!(log.records.len(), 4);
        assert_eq!(log.skipped, vec![6, 7]);
        assert_eq!(log.records[0].timestamp, Some(1600000000.0001));
        assert_eq!(log.records[0].channel.as_deref(), Some("can0"));
        assert_eq!(log.records[1].frame.to_string(), "38D#R");
        assert_eq!(log.records[2].timestamp, None);
        assert_eq!(log.records[3].line, 8);
    }
}

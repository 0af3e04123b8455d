use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compat::{bus_view, compat_prefix, id_end, CompatSpace};
use crate::codec::CanFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSpace {
    pub name: String,
    pub space: CompatSpace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub protocol: String,
    pub prefix: usize,
    pub id_covered: bool,
    pub full_frame: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRow {
    pub index: usize,
    pub frame: CanFrame,
    pub stuffed_len: usize,
    pub id_end: usize,
    pub results: Vec<ProtocolResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub protocol: String,
    /// prefix length -> number of messages.
    pub histogram: BTreeMap<usize, u64>,
    pub messages: usize,
    pub id_covered_messages: usize,
    pub full_frame_messages: usize,
    pub unique_ids: usize,
    pub id_covered_unique: usize,
    /// Fractions are absent for an empty corpus.
    pub id_coverage_messages: Option<f64>,
    pub id_coverage_unique: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub frames: Vec<FrameRow>,
    pub protocols: Vec<ProtocolSummary>,
    /// Input lines that did not hold a base frame.
    pub skipped_lines: usize,
}

fn analyze_frame(index: usize, frame: &CanFrame, spaces: &[NamedSpace]) -> FrameRow {
    let (bits, layout) = bus_view(frame);
    let id_end = id_end(&layout);
    let results = spaces
        .iter()
        .map(|s| {
            let r = compat_prefix(&bits, &s.space);
            ProtocolResult {
                protocol: s.name.clone(),
                prefix: r.prefix,
                id_covered: r.prefix >= id_end,
                full_frame: r.is_full(),
            }
        })
        .collect();
    FrameRow { index, frame: frame.clone(), stuffed_len: bits.len(), id_end, results }
}

fn ratio(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

/// Compat prefixes of every frame under every space. Frames are processed in
/// parallel; rows keep input order, so the report does not depend on
/// scheduling. An ID counts as covered when all of its messages are.
pub fn analyze_corpus(frames: &[CanFrame], spaces: &[NamedSpace], skipped_lines: usize) -> CompatReport {
    let rows: Vec<FrameRow> = frames.par_iter().enumerate().map(|(i, f)| analyze_frame(i, f, spaces)).collect();

    let protocols = spaces
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut histogram = BTreeMap::new();
            let mut ids = BTreeSet::new();
            let mut uncovered_ids = BTreeSet::new();
            let (mut id_cov, mut full) = (0, 0);
            for row in &rows {
                let r = &row.results[k];
                *histogram.entry(r.prefix).or_insert(0) += 1;
                ids.insert(row.frame.id());
                if r.id_covered {
                    id_cov += 1;
                } else {
                    uncovered_ids.insert(row.frame.id());
                }
                full += r.full_frame as usize;
            }
            let covered_unique = ids.len() - uncovered_ids.len();
            ProtocolSummary {
                protocol: s.name.clone(),
                histogram,
                messages: rows.len(),
                id_covered_messages: id_cov,
                full_frame_messages: full,
                unique_ids: ids.len(),
                id_covered_unique: covered_unique,
                id_coverage_messages: ratio(id_cov, rows.len()),
                id_coverage_unique: ratio(covered_unique, ids.len()),
            }
        })
        .collect();
    CompatReport { frames: rows, protocols, skipped_lines }
}

impl CompatReport {
    /// `protocol,prefix_len,count`, one row per histogram bucket.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["protocol", "prefix_len", "count"])?;
        for p in &self.protocols {
            for (len, count) in &p.histogram {
                w.write_record([p.protocol.as_str(), &len.to_string(), &count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per frame with each protocol's prefix and coverage flags.
    pub fn write_frames_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "frame".into(), "id".into(), "stuffed_len".into(), "id_end".into()];
        for p in &self.protocols {
            header.push(format!("{}_prefix", p.protocol));
            header.push(format!("{}_id", p.protocol));
            header.push(format!("{}_full", p.protocol));
        }
        w.write_record(&header)?;
        for row in &self.frames {
            let mut cells = vec![
                row.index.to_string(),
                row.frame.to_string(),
                format!("{:03X}", row.frame.id()),
                row.stuffed_len.to_string(),
                row.id_end.to_string(),
            ];
            for r in &row.results {
                cells.push(r.prefix.to_string());
                cells.push(r.id_covered.to_string());
                cells.push(r.full_frame.to_string());
            }
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periph::{i2c_template, I2cTimings};

    fn spaces() -> Vec<NamedSpace> {
        vec![
            NamedSpace { name: "uart".into(), space: CompatSpace::uart_all() },
            NamedSpace {
                name: "i2c".into(),
                space: CompatSpace::i2c(i2c_template(&I2cTimings::LPC11C24, 5.0).unwrap()),
            },
        ]
    }

    #[test]
    fn report_is_order_stable() {
        let frames: Vec<CanFrame> =
            ["38D#R", "123#DEADBEEF", "7FF#", "38D#R", "000#00"].iter().map(|t| t.parse().unwrap()).collect();
        let a = analyze_corpus(&frames, &spaces(), 1);
        let b = analyze_corpus(&frames, &spaces(), 1);
        assert_eq!(a, b);
        assert_eq!(a.frames.len(), 5);
        assert_eq!(a.protocols[0].histogram.values().sum::<u64>(), 5);
        assert_eq!(a.protocols[0].unique_ids, 4);
        let mut csv = Vec::new();
        a.write_histogram_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("protocol,prefix_len,count\n"));
    }

    #[test]
    fn empty_corpus() {
        let r = analyze_corpus(&[], &spaces(), 0);
        assert!(r.frames.is_empty());
        assert_eq!(r.protocols[0].id_coverage_messages, None);
    }
}

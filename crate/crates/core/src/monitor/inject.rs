use serde::{Deserialize, Serialize};

use crate::bus::RECOVERY_RUN;
use crate::codec::{Bit, DecodeStatus, Field, FrameDecoder};

pub const MIN_BURST_BITS: usize = 6;
pub const FINDING_LABEL: &str = "error-flag-shaped burst";

/// A dominant burst inside a frame, after arbitration, that the frame itself
/// cannot contain. An attacker's burst and a node's own error flag look the
/// same on the wire, so findings carry no attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// First burst bit inside the DLC/data/trailer region.
    pub tick: u64,
    pub frame_id: Option<u16>,
    /// Length of the whole dominant run, including dominant bits just before the region.
    pub run_len: usize,
    pub label: String,
}

struct Window {
    decoder: FrameDecoder,
    region_start: Option<usize>,
    reported: bool,
}

/// Scans a contiguous bus trace whose first bit is at `start_tick`. Frames
/// open on a dominant bit after at least 11 recessive bits (the trace is
/// assumed to begin idle); each frame yields at most one finding: the first
/// run of at least six dominant bits that reaches past r0.
pub fn detect_short_injection(trace: &[Bit], start_tick: u64) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut recessive_run = RECOVERY_RUN as usize;
    let mut dominant_run = 0usize;
    let mut frame: Option<Window> = None;

    for (i, &bit) in trace.iter().enumerate() {
        if frame.is_none() && bit.is_dominant() && recessive_run >= RECOVERY_RUN as usize {
            frame = Some(Window { decoder: FrameDecoder::new(), region_start: None, reported: false });
        }
        if let Some(w) = &mut frame {
            if w.region_start.is_none() && w.decoder.next_field() == Some(Field::Dlc) {
                w.region_start = Some(i);
            }
            if !w.decoder.is_finished() {
                if let DecodeStatus::Complete(_) = w.decoder.push(bit) {
                    // A clean frame has no error signalling left to watch.
                    if !w.reported {
                        frame = None;
                    }
                }
            }
        }
        dominant_run = if bit.is_dominant() { dominant_run + 1 } else { 0 };
        recessive_run = if bit.is_recessive() { recessive_run + 1 } else { 0 };

        if let Some(w) = &mut frame {
            if let Some(region) = w.region_start {
                let run_start = i + 1 - dominant_run;
                if !w.reported && dominant_run >= MIN_BURST_BITS && i >= region {
                    w.reported = true;
                    findings.push(Finding {
                        tick: start_tick + run_start.max(region) as u64,
                        frame_id: w.decoder.id(),
                        run_len: dominant_run,
                        label: FINDING_LABEL.to_string(),
                    });
                }
            }
            if recessive_run >= RECOVERY_RUN as usize {
                frame = None;
            }
        }
    }
    // Runs still growing at the end of the trace were reported when they hit six bits.
    findings
}

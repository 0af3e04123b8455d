use std::cmp::Reverse;

use super::plan::{PlanPacket, PolyglotPlan, Protocol};
use super::SynthError;
use crate::codec::Bit;
use crate::periph::{uart_template, UartConfig};

/// Search order: longer data fields, then fewer stop bits.
fn ordered(allowed: &[UartConfig]) -> Vec<UartConfig> {
    let mut v = allowed.to_vec();
    v.sort_by_key(|c| (Reverse(c.data_bits()), c.stop_bits()));
    v.dedup();
    v
}

struct Search<'a> {
    target: &'a [Bit],
    configs: Vec<UartConfig>,
    max_idle: usize,
    failed: Vec<bool>,
    deepest: usize,
}

impl Search<'_> {
    fn idle_to_end(&self, p: usize) -> bool {
        self.target[p..].iter().all(|b| b.is_recessive())
    }

    /// Chain of (idle gap, config) covering `target[p..]`, trailing idle allowed.
    fn cover(&mut self, p: usize) -> Option<Vec<(usize, UartConfig)>> {
        if self.idle_to_end(p) {
            return Some(Vec::new());
        }
        if self.failed[p] {
            return None;
        }
        let configs = self.configs.clone();
        for cfg in configs {
            let template = uart_template(cfg);
            for gap in 0..=self.max_idle {
                let start = p + gap;
                if gap > 0 && self.target[start - 1].is_dominant() {
                    break;
                }
                let end = start + cfg.len();
                if end > self.target.len() {
                    break;
                }
                if template.admitted_prefix(&self.target[start..end]) != cfg.len() {
                    continue;
                }
                self.deepest = self.deepest.max(end);
                if let Some(mut rest) = self.cover(end) {
                    rest.insert(0, (gap, cfg));
                    return Some(rest);
                }
            }
        }
        self.failed[p] = true;
        None
    }
}

/// Packetizes `target` into back-to-back UART packets with up to `max_idle`
/// recessive bits between packets. Trailing recessive bits after the last
/// packet are line idle. Backtracking is exhaustive, so `Infeasible` means
/// no chain exists.
pub fn synth_uart(target: &[Bit], allowed: &[UartConfig], max_idle: usize) -> Result<PolyglotPlan, SynthError> {
    if target.first() != Some(&Bit::Dominant) {
        return Err(SynthError::NotStartOfFrame);
    }
    let mut search =
        Search { target, configs: ordered(allowed), max_idle, failed: vec![false; target.len() + 1], deepest: 0 };
    let chain = search.cover(0).ok_or(SynthError::UartInfeasible { deepest: search.deepest })?;

    let mut packets = Vec::new();
    let mut p = 0;
    for (gap, cfg) in chain {
        if gap > 0 {
            packets.push(PlanPacket::idle(gap));
        }
        let start = p + gap;
        let d = cfg.data_bits() as usize;
        packets.push(PlanPacket { template: uart_template(cfg), payload: target[start + 1..start + 1 + d].to_vec() });
        p = start + cfg.len();
    }
    if p < target.len() {
        packets.push(PlanPacket::idle(target.len() - p));
    }
    let plan = PolyglotPlan::new(Protocol::Uart, packets).expect("payload sizes follow the templates");
    debug_assert_eq!(plan.emitted(), target);
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_bits;

    #[test]
    fn single_8n1_packet() {
        let target = parse_bits("0101100111").unwrap();
        let plan = synth_uart(&target, &UartConfig::all(), 0).unwrap();
        assert_eq!(plan.packet_count(), 1);
        assert_eq!(plan.packets()[0].template.to_string(), "0........1");
        assert_eq!(plan.packets()[0].payload, parse_bits("10110011").unwrap());
        assert_eq!(plan.emitted(), target.as_slice());
    }

    #[test]
    fn prefers_long_data_fields() {
        // 9N1 at bit 0 would need a stop bit at 10, which is dominant.
        let target = parse_bits("010101101100110000001").unwrap();
        let plan = synth_uart(&target, &UartConfig::all(), 0).unwrap();
        assert_eq!(plan.emitted(), target.as_slice());
        let shapes: Vec<_> = plan.packets().iter().map(|p| p.template.label().to_string()).collect();
        assert_eq!(shapes, ["uart-8N1", "uart-9N1"]);
    }

    #[test]
    fn infeasible_reports_depth() {
        let target = parse_bits("0000000000000").unwrap();
        assert_eq!(synth_uart(&target, &UartConfig::all(), 2), Err(SynthError::UartInfeasible { deepest: 0 }));
        assert_eq!(synth_uart(&parse_bits("10").unwrap(), &UartConfig::all(), 0), Err(SynthError::NotStartOfFrame));
    }
}

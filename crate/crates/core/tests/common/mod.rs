//! Oracles and harness helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use canlab::bus::{BusConfig, BusEvent, EventKind, MessageSpec, Node, NodeSpec, Scenario, World};
use canlab::codec::{Bit, CanFrame};
use canlab::periph::{uart_template, BitReceiver, BitSender, Replay, UartConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// CRC-15 by polynomial long division over a plain bit vector.
pub fn crc_oracle(bits: &[Bit]) -> u16 {
    const GEN: [u8; 16] = [1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1]; // x^15 .. x^0
    let mut work: Vec<u8> = bits.iter().map(|b| b.value() as u8).collect();
    work.extend([0u8; 15]);
    for i in 0..bits.len() {
        if work[i] == 1 {
            for (j, g) in GEN.iter().enumerate() {
                work[i + j] ^= g;
            }
        }
    }
    work[bits.len()..].iter().fold(0u16, |acc, &b| (acc << 1) | b as u16)
}

pub fn max_run(bits: &[Bit]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut last = None;
    for &b in bits {
        run = if Some(b) == last { run + 1 } else { 1 };
        last = Some(b);
        best = best.max(run);
    }
    best
}

/// Enumerates UART packetizations of `target` without memoization: every
/// sequence of (gap, config) whose instantiated emission, followed by idle,
/// reproduces the target. Returns the first such emission found.
pub fn uart_cover_oracle(target: &[Bit], allowed: &[UartConfig], max_idle: usize) -> Option<Vec<Bit>> {
    fn go(target: &[Bit], allowed: &[UartConfig], max_idle: usize, built: &mut Vec<Bit>) -> bool {
        let p = built.len();
        if target[p..].iter().all(|b| *b == Bit::Recessive) {
            let keep = built.len();
            built.resize(target.len(), Bit::Recessive);
            if built == target {
                return true;
            }
            built.truncate(keep);
        }
        let gaps = if p == 0 { 0 } else { max_idle };
        for gap in 0..=gaps {
            for &cfg in allowed {
                let t = uart_template(cfg);
                if p + gap + t.len() > target.len() {
                    continue;
                }
                let data = &target[p + gap + 1..p + gap + 1 + cfg.data_bits() as usize];
                let mut candidate = vec![Bit::Recessive; gap];
                candidate.extend(t.instantiate(data).unwrap());
                if candidate[..] != target[p..p + candidate.len()] {
                    continue;
                }
                let keep = built.len();
                built.extend(candidate);
                if go(target, allowed, max_idle, built) {
                    return true;
                }
                built.truncate(keep);
            }
        }
        false
    }
    if target.first() != Some(&Bit::Dominant) {
        return None;
    }
    let mut built = Vec::new();
    go(target, allowed, max_idle, &mut built).then_some(built)
}

/// Outcome of replaying raw bits into a bus with passive receivers.
pub struct ReplayResult {
    pub events: Vec<BusEvent>,
    pub received: Vec<Vec<CanFrame>>,
}

impl ReplayResult {
    pub fn error_flags(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::ErrorFlag { .. })).count()
    }

    pub fn completed(&self) -> Vec<CanFrame> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::FrameComplete { frame, .. } => Some(frame.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Drives `emissions` onto an idle bus, each after the 11 recessive bits a
/// controller needs to integrate, and lets `receivers` standard nodes listen.
pub fn replay_to_receivers(emissions: &[Vec<Bit>], receivers: usize, bit_time_us: f64) -> ReplayResult {
    let mut world = World::new(BusConfig { bit_time_us, seed: 0 }).unwrap();
    for i in 0..receivers {
        world.add_node(Node::new(format!("rx{i}")));
    }
    let mut bits = Vec::new();
    for e in emissions {
        bits.extend([Bit::Recessive; 11]);
        bits.extend(e);
    }
    bits.extend([Bit::Recessive; 11]);
    let ticks = bits.len() as u64;
    world.attach_injector("peripheral", Box::new(Replay::new(0, bits)));
    let events = world.run(ticks);
    let received = world.nodes().iter().map(|n| n.received().to_vec()).collect();
    ReplayResult { events, received }
}

/// Longest prefix of `bits` a UART chain can read, by enumeration: full
/// packets separated by recessive gaps of any length, then possibly a gap and
/// a packet cut short by the end of the prefix.
pub fn uart_prefix_oracle(bits: &[Bit], allowed: &[UartConfig]) -> usize {
    fn reads(bits: &[Bit], allowed: &[UartConfig], p: usize) -> bool {
        if p == bits.len() {
            return true;
        }
        let first = p == 0;
        let mut gap = 0;
        loop {
            let start = p + gap;
            for &cfg in allowed {
                let t = uart_template(cfg);
                let n = t.len().min(bits.len() - start);
                if t.cells()[..n].iter().zip(&bits[start..start + n]).all(|(c, b)| c.admits(*b))
                    && (n < t.len() || reads(bits, allowed, start + n))
                {
                    return true;
                }
            }
            if first || start >= bits.len() || bits[start] == Bit::Dominant {
                return false;
            }
            gap += 1;
            if p + gap == bits.len() {
                return true;
            }
        }
    }
    (0..=bits.len()).rev().find(|&l| reads(&bits[..l], allowed, 0)).unwrap()
}

/// Dominant glitches of random length at random ticks.
pub struct Glitches(pub Vec<(u64, u64)>);

impl BitSender for Glitches {
    fn drive(&mut self, tick: u64) -> Bit {
        Bit::from_level(!self.0.iter().any(|&(s, len)| tick >= s && tick < s + len))
    }
}

impl BitReceiver for Glitches {
    fn observe(&mut self, _: u64, _: Bit) {}
}

pub fn random_world(seed: u64) -> (World, BTreeMap<u16, String>, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Every eighth trace has a single node, so ACK errors drive it through bus-off and recovery.
    let n_nodes = if seed.is_multiple_of(8) { 1 } else { rng.gen_range(2..=5) };
    let mut ids: Vec<u16> = Vec::new();
    let mut nodes = Vec::new();
    for k in 0..n_nodes {
        let mut messages = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let id = loop {
                let id = rng.gen_range(0..=0x7ff);
                if !ids.contains(&id) {
                    break id;
                }
            };
            ids.push(id);
            let len = rng.gen_range(0..=8);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            messages.push(MessageSpec {
                frame: CanFrame::data_frame(id, &data).unwrap(),
                period: rng.gen_range(300..3_000),
                offset: rng.gen_range(0..500),
                jitter: rng.gen_range(0..200),
                count: None,
            });
        }
        nodes.push(NodeSpec { name: format!("n{k}"), messages, counters: None });
    }
    let duration = 30_000;
    let scenario = Scenario { seed, bit_time_us: 1.0, duration, nodes, replay: None, owners: Default::default() };
    let owners = scenario.id_owners().unwrap();
    let mut world = scenario.build().unwrap();
    let glitches = (0..rng.gen_range(0..60)).map(|_| (rng.gen_range(0..duration), rng.gen_range(1..9))).collect();
    world.attach_injector("glitch", Box::new(Glitches(glitches)));
    (world, owners, duration)
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::counters::Counters;
use super::node::{Node, INTERMISSION_BITS};
use super::world::{BusConfig, ConfigError, World};
use crate::candump::read_candump;
use crate::codec::{encode_frame, CanFrame};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid scenario: {0}")]
    Parse(Box<toml::de::Error>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("node {node:?}: {reason}")]
    Node { node: String, reason: String },
}

/// A periodic message sent by one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSpec {
    pub frame: CanFrame,
    /// Ticks between releases.
    pub period: u64,
    #[serde(default)]
    pub offset: u64,
    /// Each release is delayed by a uniform draw from `0..=jitter` ticks.
    #[serde(default)]
    pub jitter: u64,
    /// Stop after this many releases.
    pub count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterSpec {
    #[serde(default)]
    pub tec: u32,
    #[serde(default)]
    pub rec: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub messages: Vec<MessageSpec>,
    pub counters: Option<CounterSpec>,
}

/// Replays a candump log, one node per distinct identifier (`replay-<ID>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    pub log: PathBuf,
    /// Tick of the first logged frame.
    #[serde(default)]
    pub start: u64,
    /// Stretch or compress the log clock (1.0 keeps logged timing).
    #[serde(default = "one")]
    pub time_scale: f64,
    /// Identifiers to leave out, e.g. because a scripted node owns them.
    #[serde(default)]
    pub exclude: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn default_bit_time() -> f64 {
    1.0
}

fn default_duration() -> u64 {
    100_000
}

/// Declarative bus traffic description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bit_time")]
    pub bit_time_us: f64,
    /// Simulation length in ticks.
    #[serde(default = "default_duration")]
    pub duration: u64,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    pub replay: Option<ReplaySpec>,
    /// Explicit identifier to node-name map for the monitor; derived from
    /// the message lists when absent.
    #[serde(default)]
    pub owners: BTreeMap<String, String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            bit_time_us: default_bit_time(),
            duration: default_duration(),
            nodes: Vec::new(),
            replay: None,
            owners: BTreeMap::new(),
        }
    }
}

pub(crate) fn parse_hex_id(text: &str) -> Option<u16> {
    let t = text.trim().trim_start_matches("0x").trim_start_matches("0X");
    u16::from_str_radix(t, 16).ok().filter(|&id| id <= crate::codec::MAX_ID)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(Box::new(e)))
    }

    /// Loads a scenario; relative replay paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let mut s: Scenario =
            toml::from_str(&text).map_err(|e| ScenarioError::Toml { path: path.into(), source: Box::new(e) })?;
        s.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(s)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(r) = &mut self.replay {
            if r.log.is_relative() {
                r.log = base.join(&r.log);
            }
        }
    }

    pub fn config(&self) -> BusConfig {
        BusConfig { bit_time_us: self.bit_time_us, seed: self.seed }
    }

    /// Identifier to node-name map for the monitor.
    pub fn id_owners(&self) -> Result<BTreeMap<u16, String>, ScenarioError> {
        let mut map = BTreeMap::new();
        for node in &self.nodes {
            for m in &node.messages {
                map.insert(m.frame.id(), node.name.clone());
            }
        }
        if let Some(r) = &self.replay {
            let log = read_candump(&r.log).map_err(|source| ScenarioError::Io { path: r.log.clone(), source })?;
            let excluded = self.excluded_ids(r)?;
            for f in log.frames() {
                if !excluded.contains(&f.id()) {
                    map.entry(f.id()).or_insert_with(|| replay_node_name(f.id()));
                }
            }
        }
        for (id, name) in &self.owners {
            let id = parse_hex_id(id)
                .ok_or_else(|| ScenarioError::Node { node: name.clone(), reason: format!("bad identifier {id:?}") })?;
            map.insert(id, name.clone());
        }
        Ok(map)
    }

    fn excluded_ids(&self, r: &ReplaySpec) -> Result<Vec<u16>, ScenarioError> {
        r.exclude
            .iter()
            .map(|t| {
                parse_hex_id(t).ok_or_else(|| ScenarioError::Node {
                    node: "replay".into(),
                    reason: format!("bad excluded identifier {t:?}"),
                })
            })
            .collect()
    }

    /// Builds the world with every node's queue filled for the whole duration.
    pub fn build(&self) -> Result<World, ScenarioError> {
        let mut world = World::new(self.config())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for spec in &self.nodes {
            if spec.name.trim().is_empty() {
                return Err(ScenarioError::Node { node: spec.name.clone(), reason: "empty name".into() });
            }
            let mut node = Node::new(spec.name.clone());
            if let Some(c) = spec.counters {
                node = node.with_counters(Counters::with_values(c.tec, c.rec));
            }
            for m in &spec.messages {
                if m.period == 0 {
                    return Err(ScenarioError::Node {
                        node: spec.name.clone(),
                        reason: "message period must be positive".into(),
                    });
                }
                let mut k = 0u64;
                loop {
                    if m.count.is_some_and(|c| k >= c) {
                        break;
                    }
                    let base = m.offset + k * m.period;
                    if base >= self.duration {
                        break;
                    }
                    let jitter = if m.jitter > 0 { rng.gen_range(0..=m.jitter) } else { 0 };
                    node.enqueue(base + jitter, m.frame.clone());
                    k += 1;
                }
            }
            world.add_node(node);
        }
        if let Some(r) = &self.replay {
            self.add_replay(&mut world, r)?;
        }
        Ok(world)
    }

    fn add_replay(&self, world: &mut World, r: &ReplaySpec) -> Result<(), ScenarioError> {
        let log = read_candump(&r.log).map_err(|source| ScenarioError::Io { path: r.log.clone(), source })?;
        let excluded = self.excluded_ids(r)?;
        let schedule = quantize_schedule(
            log.records.iter().filter(|rec| !excluded.contains(&rec.frame.id())).map(|rec| (rec.timestamp, &rec.frame)),
            self.bit_time_us,
            r.time_scale,
            r.start,
        );
        let mut by_id: BTreeMap<u16, Node> = BTreeMap::new();
        for (tick, frame) in schedule {
            by_id.entry(frame.id()).or_insert_with(|| Node::new(replay_node_name(frame.id()))).enqueue(tick, frame);
        }
        for (_, node) in by_id {
            world.add_node(node);
        }
        Ok(())
    }
}

pub fn replay_node_name(id: u16) -> String {
    format!("replay-{id:03X}")
}

/// Maps log timestamps to release ticks. Frames closer than the previous
/// frame's length plus the intermission are pushed back to keep the log order
/// feasible on the bus. Records without a timestamp follow back to back.
pub fn quantize_schedule<'a>(
    records: impl IntoIterator<Item = (Option<f64>, &'a CanFrame)>,
    bit_time_us: f64,
    time_scale: f64,
    start: u64,
) -> Vec<(u64, CanFrame)> {
    let mut out = Vec::new();
    let mut t0: Option<f64> = None;
    let mut earliest = start;
    for (ts, frame) in records {
        let wanted = match ts {
            Some(ts) => {
                let origin = *t0.get_or_insert(ts);
                let ticks = ((ts - origin) * time_scale * 1e6 / bit_time_us).round().max(0.0);
                start + ticks as u64
            }
            None => earliest,
        };
        let tick = wanted.max(earliest);
        let len = encode_frame(frame).map(|(b, _)| b.len()).unwrap_or(0) as u64;
        earliest = tick + len + INTERMISSION_BITS as u64;
        out.push((tick, frame.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
seed = 3
duration = 5000

[[nodes]]
name = "ecu"
[[nodes.messages]]
frame = "1A2#0011223344556677"
period = 1000
jitter = 50

[[nodes]]
name = "listener"
"#;

    #[test]
    fn builds_queues_deterministically() {
        let s = Scenario::from_toml(TOML).unwrap();
        assert_eq!(s.nodes[0].messages[0].frame.id(), 0x1a2);
        let a = s.build().unwrap();
        assert_eq!(a.node(0).pending(), 5);
        assert_eq!(a.node(1).pending(), 0);
        let mut w1 = s.build().unwrap();
        let mut w2 = s.build().unwrap();
        assert_eq!(w1.run(5000), w2.run(5000));
        assert_eq!(s.id_owners().unwrap()[&0x1a2], "ecu");
    }

    #[test]
    fn rejects_unknown_fields_and_bad_frames() {
        assert!(Scenario::from_toml("[[nodes]]\nname='a'\nbogus=1\n").is_err());
        assert!(Scenario::from_toml("[[nodes]]\nname='a'\n[[nodes.messages]]\nframe='800#'\nperiod=10\n").is_err());
    }

    #[test]
    fn quantized_schedule_keeps_minimum_spacing() {
        let f: CanFrame = "100#00".parse().unwrap();
        let len = encode_frame(&f).unwrap().0.len() as u64;
        let recs = [(Some(1.0), &f), (Some(1.000001), &f), (Some(1.01), &f), (None, &f)];
        let s = quantize_schedule(recs, 1.0, 1.0, 10);
        assert_eq!(s[0].0, 10);
        assert_eq!(s[1].0, 10 + len + 3);
        assert_eq!(s[2].0, 10 + 10_000);
        assert_eq!(s[3].0, s[2].0 + len + 3);
    }
}

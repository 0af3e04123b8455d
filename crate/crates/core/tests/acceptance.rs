//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use canlab::attack::*;
use canlab::bus::*;
use canlab::codec::*;
use canlab::monitor::{observe, ShadowState};
use canlab::periph::*;
use canlab::synth::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{crc_oracle, max_run, random_world, replay_to_receivers, uart_cover_oracle};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const C1_SEEDS: u64 = 20;
const C1_PER_SEED: Duration = Duration::from_secs(10);
const C2_BUDGET: Duration = Duration::from_secs(30);
const C4_TARGETS: usize = 1_000;
const C4_MAX_BITS: usize = 40;
const C4_BUDGET: Duration = Duration::from_secs(60);
const C5_CASES: usize = 10_000;
const C6_SEQUENCES: usize = 2_000;
const C7_TRACES: u64 = 100;
const C8_CORPORA: u64 = 50;

fn msg(text: &str, period: u64, offset: u64, jitter: u64) -> MessageSpec {
    MessageSpec { frame: text.parse().unwrap(), period, offset, jitter, count: None }
}

fn dos_traffic(seed: u64) -> Scenario {
    let node = |name: &str, messages| NodeSpec { name: name.into(), messages, counters: None };
    Scenario {
        seed,
        bit_time_us: 5.0,
        duration: 200_000,
        nodes: vec![
            node("victim", vec![msg("1A2#1122334455667788", 1_000, 37, 200)]),
            node("engine", vec![msg("100#0102", 700, 0, 150), msg("1A3#FF", 1_300, 11, 300)]),
            node("body", vec![msg("1A0#00", 900, 5, 250), msg("3FF#DEADBEEF", 2_100, 0, 400)]),
            node("chassis", vec![msg("0F0#", 500, 3, 100), msg("1E2#A5A5A5A5A5A5A5A5", 1_700, 0, 300)]),
        ],
        replay: None,
        owners: Default::default(),
    }
}

fn targeted(seed: u64, repetitions: usize, writer: Protocol) -> AttackScenario {
    AttackScenario {
        traffic: dos_traffic(seed),
        attack: AttackSpec {
            kind: AttackKind::TargetedDos { victim: HexId(0x1a2), flag_bits: 6, repetitions },
            reader: Protocol::Spi,
            writer,
            timings: None,
        },
    }
}

fn bus_off_arithmetic() -> Check {
    let writers = [Protocol::Spi, Protocol::Uart, Protocol::I2c];
    let mut slowest = Duration::ZERO;
    for seed in 0..C1_SEEDS {
        let writer = writers[seed as usize % writers.len()];
        let t = Instant::now();
        // A generous cap: the run stops by itself once the victim is bus-off.
        let o = run_targeted_dos(&targeted(seed, 64, writer)).map_err(|e| e.to_string())?.outcome;
        let dt = t.elapsed();
        slowest = slowest.max(dt);
        ensure!(
            o.victim_final_state == Some(ErrorState::BusOff),
            "seed {seed}: victim ended {:?}",
            o.victim_final_state
        );
        ensure!(o.injections_performed == 32, "seed {seed}: {} injections", o.injections_performed);
        ensure!(o.collateral_errors == 0, "seed {seed}: {} collateral errors", o.collateral_errors);
        ensure!(dt < C1_PER_SEED, "seed {seed}: {dt:?}");
    }
    let o = run_targeted_dos(&targeted(0, 31, Protocol::Spi)).map_err(|e| e.to_string())?.outcome;
    ensure!(o.victim_tec == Some(248), "31 injections left TEC {:?}", o.victim_tec);
    ensure!(o.victim_final_state == Some(ErrorState::ErrorPassive), "31 injections: {:?}", o.victim_final_state);
    Ok(format!("{C1_SEEDS} seeds, 32 injections each, 0 collateral, slowest seed {slowest:.2?}"))
}

fn check_receivers(label: &str, emissions: &[Vec<Bit>], expected: &[CanFrame], bit_time_us: f64) -> Result<(), String> {
    let r = replay_to_receivers(emissions, 2, bit_time_us);
    ensure!(r.error_flags() == 0, "{label}: {} error flags", r.error_flags());
    ensure!(r.completed() == expected, "{label}: {} of {} frames completed", r.completed().len(), expected.len());
    ensure!(r.received.iter().all(|rx| rx == expected), "{label}: receivers decoded different frames");
    Ok(())
}

/// First 2-byte payload of 0x1A2 whose stuffed encoding has a full UART cover.
fn crafted_uart_frame() -> Option<(CanFrame, PolyglotPlan)> {
    (0u16..=u16::MAX).find_map(|v| {
        let f = CanFrame::data_frame(0x1a2, &v.to_be_bytes()).unwrap();
        let (s, _) = encode_frame(&f).unwrap();
        synth_uart(s.bits(), &UartConfig::all(), 0).ok().map(|p| (f, p))
    })
}

fn full_frame_polyglots() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1);
    let generic = CanFrame::data_frame(0x123, &rng.gen::<[u8; 8]>()).unwrap();
    let mut frames = vec![generic];
    while frames.len() < 100 {
        let n = rng.gen_range(0..=8);
        let data: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        frames.push(CanFrame::data_frame(rng.gen_range(0..=MAX_ID), &data).unwrap());
    }
    let spi: Vec<Vec<Bit>> =
        frames.iter().map(|f| synth_spi(encode_frame(f).unwrap().0.bits()).emitted().to_vec()).collect();
    check_receivers("spi", &spi, &frames, 1.0)?;

    let (uart_frame, uart_plan) = crafted_uart_frame().ok_or("no 2-byte frame has a UART cover")?;
    ensure!(uart_plan.emitted() == encode_frame(&uart_frame).unwrap().0.bits(), "uart emission differs from encoder");
    check_receivers("uart", &vec![uart_plan.emitted().to_vec(); 100], &vec![uart_frame.clone(); 100], 1.0)?;

    let remote = CanFrame::remote_frame(0x38d, 0).unwrap();
    let i2c = synth_i2c(&FrameSpec::exact(&remote), &I2cTimings::LPC11C24, 5.0, &I2cSynthOptions::default())
        .map_err(|e| e.to_string())?;
    check_receivers("i2c", &vec![i2c.plan.emitted().to_vec(); 100], &vec![remote; 100], 5.0)?;

    let dt = t.elapsed();
    ensure!(dt < C2_BUDGET, "took {dt:?}");
    Ok(format!(
        "100 SPI frames, 100x UART {uart_frame} ({} packets), 100x I2C 38D#R ({} packets), 0 error flags, {dt:.2?}",
        uart_plan.packet_count(),
        i2c.packets
    ))
}

fn i2c_timing_feasibility() -> Check {
    let l = i2c_template(&I2cTimings::LPC11C24, 5.0).map_err(|e| e.to_string())?;
    ensure!(l.widths() == (1, 1, 1, 2), "widths {:?}", l.widths());
    ensure!(l.template().to_string() == "0........1011", "template {}", l.template());
    let at_400k = i2c_template(&I2cTimings::LPC11C24, 2.5);
    ensure!(matches!(at_400k, Err(I2cError::Infeasible { .. })), "2.5 us gave {at_400k:?}");
    Ok("5 us -> (1,1,1,2), 2.5 us -> infeasible".into())
}

fn random_uart_target(rng: &mut ChaCha8Rng) -> Vec<Bit> {
    let len = rng.gen_range(1..=C4_MAX_BITS);
    if rng.gen_bool(0.5) {
        let mut t: Vec<Bit> = (0..len).map(|_| Bit::from_level(rng.gen())).collect();
        t[0] = Bit::Dominant;
        return t;
    }
    let all = UartConfig::all();
    let mut t = Vec::new();
    while t.len() < len {
        if !t.is_empty() {
            t.extend(std::iter::repeat_n(Bit::Recessive, rng.gen_range(0..3)));
        }
        let cfg = all[rng.gen_range(0..all.len())];
        let payload: Vec<Bit> = (0..cfg.data_bits()).map(|_| Bit::from_level(rng.gen())).collect();
        t.extend(uart_template(cfg).instantiate(&payload).unwrap());
    }
    t.truncate(len);
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(1..len.max(2)).min(len - 1);
        t[i] = t[i].complement();
    }
    t
}

fn synth_oracle_equivalence() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc4);
    let all = UartConfig::all();
    let mut feasible = 0;
    for k in 0..C4_TARGETS {
        let target = random_uart_target(&mut rng);
        let allowed: Vec<UartConfig> = all.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        let allowed = if allowed.is_empty() { all.clone() } else { allowed };
        let max_idle = rng.gen_range(0..4);
        let plan = synth_uart(&target, &allowed, max_idle);
        let oracle = uart_cover_oracle(&target, &allowed, max_idle);
        ensure!(plan.is_ok() == oracle.is_some(), "target {k} ({}): synth {:?}", bits_to_string(&target), plan.err());
        if let Ok(p) = plan {
            ensure!(p.emitted() == target.as_slice(), "target {k}: emission differs");
            ensure!(p.is_consistent(), "target {k}: packets do not concatenate to the emission");
            feasible += 1;
        }
    }
    let dt = t.elapsed();
    ensure!(dt < C4_BUDGET, "took {dt:?}");
    Ok(format!("{C4_TARGETS} targets ({feasible} feasible) agree with enumeration, {dt:.2?}"))
}

fn codec_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc5);
    for k in 0..C5_CASES {
        let id = rng.gen_range(0..=MAX_ID);
        let f = if rng.gen_bool(0.2) {
            CanFrame::remote_frame(id, rng.gen_range(0..=8)).unwrap()
        } else {
            let n = rng.gen_range(0..=8);
            CanFrame::data_frame(id, &(0..n).map(|_| rng.gen()).collect::<Vec<u8>>()).unwrap()
        };
        let (s, layout) = encode_frame(&f).map_err(|e| e.to_string())?;
        ensure!(decode_frame(s.bits()).as_ref() == Ok(&f), "frame {k} {f}: roundtrip failed");
        ensure!(max_run(&s.bits()[..layout.stuffed_region_end()]) <= 5, "frame {k} {f}: run of six");
        ensure!(f.crc() == crc_oracle(&f.header_and_data_bits()), "frame {k} {f}: CRC differs from oracle");
    }
    for k in 0..C5_CASES {
        let bits: Vec<Bit> = (0..rng.gen_range(1..=128)).map(|_| Bit::from_level(rng.gen())).collect();
        ensure!(crc15(&bits) == crc_oracle(&bits), "input {k}: CRC differs from oracle");
        let stuffed = stuff(&bits);
        ensure!(max_run(stuffed.bits()) <= 5, "input {k}: run of six after stuffing");
        ensure!(stuffed.destuffed() == bits, "input {k}: destuffing differs");
    }
    Ok(format!("{C5_CASES} roundtrips, {C5_CASES} CRC oracle checks, no runs of six"))
}

/// Independent model of the counting rules.
#[derive(Clone, Copy)]
struct Model {
    tec: u32,
    rec: u32,
    off: bool,
}

impl Model {
    fn apply(&mut self, role: CountingRole, outcome: Outcome) {
        if self.off {
            return;
        }
        match (role, outcome) {
            (CountingRole::Transmitter, Outcome::Error) => self.tec += 8,
            (CountingRole::Receiver, Outcome::Error) => self.rec += 1,
            (CountingRole::ErrorCausingReceiver, Outcome::Error) => self.rec += 8,
            (CountingRole::Transmitter, Outcome::Success) => self.tec = self.tec.saturating_sub(1),
            (_, Outcome::Success) => self.rec = self.rec.saturating_sub(1),
        }
        if self.tec >= 256 {
            self.tec = 256;
            self.off = true;
        }
    }

    fn state(&self) -> ErrorState {
        if self.off {
            ErrorState::BusOff
        } else if self.tec >= 128 || self.rec >= 128 {
            ErrorState::ErrorPassive
        } else {
            ErrorState::ErrorActive
        }
    }
}

fn fault_confinement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc6);
    let roles = [CountingRole::Transmitter, CountingRole::Receiver, CountingRole::ErrorCausingReceiver];
    for k in 0..C6_SEQUENCES {
        let mut c = Counters::new();
        let mut m = Model { tec: 0, rec: 0, off: false };
        for _ in 0..rng.gen_range(1..200) {
            let role = roles[rng.gen_range(0..3)];
            let outcome = if rng.gen_bool(0.6) { Outcome::Error } else { Outcome::Success };
            c.apply(role, outcome);
            m.apply(role, outcome);
            ensure!((c.tec(), c.rec(), c.state()) == (m.tec, m.rec, m.state()), "sequence {k}: counters diverge");
        }
    }
    for (tec, state) in [
        (127, ErrorState::ErrorActive),
        (128, ErrorState::ErrorPassive),
        (255, ErrorState::ErrorPassive),
        (256, ErrorState::BusOff),
    ] {
        ensure!(Counters::with_values(tec, 0).state() == state, "TEC {tec} is not {state}");
    }
    ensure!(Counters::with_values(0, 128).state() == ErrorState::ErrorPassive, "REC 128 is not passive");

    let need = (RECOVERY_RUNS * RECOVERY_RUN) as usize;
    let off = Counters::with_values(256, 0);
    ensure!(recover_bus_off(off, &vec![Bit::Recessive; need - 1]).state() == ErrorState::BusOff, "recovered early");
    ensure!(
        recover_bus_off(off, &vec![Bit::Recessive; need]).state() == ErrorState::ErrorActive,
        "no recovery after {need} bits"
    );
    let mut broken = vec![Bit::Recessive; need];
    broken[10] = Bit::Dominant;
    ensure!(recover_bus_off(off, &broken).state() == ErrorState::BusOff, "a dominant bit did not restart the run");

    // The same recovery inside the simulator.
    let mut w = World::new(BusConfig::default()).unwrap();
    w.add_node(Node::new("n").with_counters(off));
    let mut events = Vec::new();
    let hit = w.run_until(10_000, &mut events, |_, new| {
        new.iter().any(|e| matches!(e.kind, EventKind::StateChange { to: ErrorState::ErrorActive, .. }))
    });
    ensure!(hit, "simulated node never recovered");
    ensure!(w.tick() as usize == need, "simulated recovery after {} ticks", w.tick());
    Ok(format!("{C6_SEQUENCES} counting sequences, thresholds 128/256, recovery after {need} recessive bits"))
}

fn monitor_ground_truth() -> Check {
    let mut ticks = 0u64;
    for seed in 0..C7_TRACES {
        let (mut world, owners, duration) = random_world(seed);
        let names: Vec<String> = world.nodes().iter().map(|n| n.name().to_string()).collect();
        let mut shadow = ShadowState::new(owners, names.clone());
        let mut events = Vec::new();
        for _ in 0..duration {
            let start = events.len();
            world.step_into(&mut events);
            for e in &events[start..] {
                observe(e, &mut shadow).map_err(|e| e.to_string())?;
            }
            for (i, node) in world.nodes().iter().enumerate() {
                ensure!(
                    shadow.tec(&names[i]) == node.tec(),
                    "trace {seed} tick {}: {} differs",
                    world.tick(),
                    names[i]
                );
            }
        }
        ticks += duration;
    }
    Ok(format!("{C7_TRACES} traces, {ticks} ticks, shadow TEC exact"))
}

fn analyzer_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc8);
    let spaces = vec![
        NamedSpace { name: "uart".into(), space: CompatSpace::uart_all() },
        NamedSpace { name: "i2c".into(), space: CompatSpace::i2c(i2c_template(&I2cTimings::LPC11C24, 5.0).unwrap()) },
    ];
    for k in 0..C8_CORPORA {
        let pool: Vec<CanFrame> = (0..rng.gen_range(1..10))
            .map(|_| {
                let n = rng.gen_range(0..=8);
                CanFrame::data_frame(rng.gen_range(0..=MAX_ID), &(0..n).map(|_| rng.gen()).collect::<Vec<u8>>())
                    .unwrap()
            })
            .collect();
        let frames: Vec<CanFrame> =
            (0..rng.gen_range(0..200)).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
        let a = analyze_corpus(&frames, &spaces, 0);
        ensure!(a == analyze_corpus(&frames, &spaces, 0), "corpus {k}: reports differ between runs");
        let mut shuffled = frames.clone();
        shuffled.reverse();
        let b = analyze_corpus(&shuffled, &spaces, 0);
        let ids: BTreeSet<u16> = frames.iter().map(|f| f.id()).collect();
        for (pa, pb) in a.protocols.iter().zip(&b.protocols) {
            ensure!(pa.histogram == pb.histogram, "corpus {k}: histogram depends on order");
            ensure!(pa.histogram.values().sum::<u64>() as usize == frames.len(), "corpus {k}: histogram mass");
            ensure!(pa.unique_ids == ids.len(), "corpus {k}: unique ID count");
            ensure!(pa.id_coverage_messages.is_some() == !frames.is_empty(), "corpus {k}: coverage fraction");
        }
        ensure!(
            a.frames.iter().all(|r| r.results.iter().all(|p| p.prefix <= r.stuffed_len)),
            "corpus {k}: prefix too long"
        );
    }
    Ok(format!("{C8_CORPORA} synthetic corpora: deterministic, order-free, counts preserved"))
}

fn one_microsecond_bus() -> Check {
    for bit_time_us in [1.0, 2.0, 5.0, 8.0] {
        let s = Scenario { bit_time_us, ..dos_traffic(4) };
        let mut world = s.build().map_err(|e| e.to_string())?;
        let events = world.run(50_000);
        let flags = events.iter().filter(|e| matches!(e.kind, EventKind::ErrorFlag { .. })).count();
        let done = events.iter().filter(|e| matches!(e.kind, EventKind::FrameComplete { .. })).count();
        ensure!(flags == 0 && done > 100, "{bit_time_us} us: {flags} error flags, {done} frames");
    }
    let frame: CanFrame = "38D#R".parse().unwrap();
    let i2c = synth_i2c(&FrameSpec::exact(&frame), &I2cTimings::aligned(1.0), 1.0, &I2cSynthOptions::default())
        .map_err(|e| e.to_string())?;
    check_receivers("i2c at 1 us", &[i2c.plan.emitted().to_vec()], &[frame], 1.0)?;
    let mut dos = targeted(2, 64, Protocol::I2c);
    dos.traffic.bit_time_us = 1.0;
    dos.attack.timings = Some(I2cTimings::aligned(1.0));
    let o = run_targeted_dos(&dos).map_err(|e| e.to_string())?.outcome;
    ensure!(
        o.injections_performed == 32 && o.victim_final_state == Some(ErrorState::BusOff),
        "1 us targeted DoS: {o:?}"
    );
    Ok("clean traffic at 1/2/5/8 us, I2C polyglot and targeted DoS at 1 us".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("bus-off arithmetic", bus_off_arithmetic),
        ("full-frame polyglot validity", full_frame_polyglots),
        ("I2C timing feasibility", i2c_timing_feasibility),
        ("UART synthesizer vs enumeration", synth_oracle_equivalence),
        ("codec properties", codec_properties),
        ("fault-confinement FSM", fault_confinement),
        ("monitor ground truth", monitor_ground_truth),
        ("analyzer determinism", analyzer_properties),
        ("protocol correctness at any bit time", one_microsecond_bus),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

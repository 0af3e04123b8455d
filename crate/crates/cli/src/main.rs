use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use canlab::attack::{run_attack, AttackKind, AttackScenario, HexId};
use canlab::bus::{read_jsonl, write_jsonl, BusEvent, EventKind, Scenario, World};
use canlab::candump::read_candump;
use canlab::codec::{bits_to_string, decode_frame, encode_frame, parse_bits, Bitstream, CanFrame, DecodeError, Field};
use canlab::monitor::{detect_short_injection, monitor_trace, node_names, write_alerts_jsonl, AlertKind};
use canlab::periph::{i2c_template, I2cTimings, UartConfig};
use canlab::synth::{
    analyze_corpus, synth_i2c, synth_spi, synth_uart, CompatSpace, FrameSpec, I2cSynthOptions, NamedSpace,
    PolyglotPlan, Protocol, SynthError,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_BUS_OFF: u8 = 3;

#[derive(Parser)]
#[command(
    name = "canlab",
    version,
    about = "Bit-level CAN laboratory: frames, polyglot peripherals, link-layer attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stuffed bitstream of a frame (`ID#DATA` or `ID#R`) with field boundaries.
    Encode { frame: String },
    /// Decode a bitstream (`|` stuff markers and `#` comment lines allowed); `-` reads stdin.
    Decode { bits: String },
    /// Build a peripheral packet plan that emits a frame.
    Synth(SynthArgs),
    /// Run a traffic scenario and write its event trace.
    Simulate(SimulateArgs),
    /// Run an attack scenario and report the outcome.
    Attack(AttackArgs),
    /// Compatible-prefix analysis of a candump log.
    Analyze(AnalyzeArgs),
    /// Shadow error counters over an event trace; exits 3 on a bus-off alert.
    Monitor(MonitorArgs),
}

#[derive(Args)]
struct TimingArgs {
    /// Bit time in microseconds.
    #[arg(long, default_value_t = 5.0)]
    bit_time: f64,
    /// I2C start,ack,stop,interframe durations in microseconds.
    #[arg(long, value_parser = parse_timings, default_value = "5.2,4.41,5.33,9.58")]
    timings: [f64; 4],
    /// Measurement tolerance in microseconds.
    #[arg(long, default_value_t = 0.25)]
    tolerance: f64,
}

impl TimingArgs {
    fn i2c(&self) -> I2cTimings {
        let [start_us, ack_us, stop_us, interframe_us] = self.timings;
        I2cTimings { start_us, ack_us, stop_us, interframe_us, tolerance_us: self.tolerance }
    }
}

#[derive(Args)]
struct SynthArgs {
    frame: String,
    #[arg(long, default_value = "spi")]
    proto: Protocol,
    #[command(flatten)]
    timing: TimingArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// UART: recessive bits allowed between packets.
    #[arg(long, default_value_t = 0)]
    max_idle: usize,
    /// UART: allowed configs, e.g. `8N1,7N2`; all of 5..9 data and 1..2 stop bits by default.
    #[arg(long, value_delimiter = ',')]
    uart: Vec<UartConfig>,
    /// I2C: restarts per packet count before giving up.
    #[arg(long, default_value_t = canlab::synth::DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bit_time: Option<f64>,
    /// Simulation length in ticks.
    #[arg(long)]
    ticks: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, s: &mut Scenario) -> BTreeMap<String, String> {
        let mut applied = BTreeMap::new();
        if let Some(seed) = self.seed {
            s.seed = seed;
            applied.insert("seed".into(), seed.to_string());
        }
        if let Some(bt) = self.bit_time {
            s.bit_time_us = bt;
            applied.insert("bit_time_us".into(), bt.to_string());
        }
        if let Some(t) = self.ticks {
            s.duration = t;
            applied.insert("duration".into(), t.to_string());
        }
        applied
    }
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[command(flatten)]
    run: RunOverrides,
    /// Event trace (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resolved bus levels, one `0`/`1` per tick.
    #[arg(long)]
    bits: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    scenario: PathBuf,
    #[command(flatten)]
    run: RunOverrides,
    #[arg(long, value_parser = parse_victim)]
    victim: Option<HexId>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    flag_bits: Option<usize>,
    /// Writing peripheral.
    #[arg(long)]
    proto: Option<Protocol>,
    /// Reading peripheral.
    #[arg(long)]
    reader: Option<Protocol>,
    #[arg(long, value_parser = parse_timings)]
    timings: Option<[f64; 4]>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Outcome JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    bits: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    log: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "uart,i2c")]
    proto: Vec<Protocol>,
    #[command(flatten)]
    timing: TimingArgs,
    /// UART: cap on idle bits between packets; unlimited by default.
    #[arg(long)]
    max_idle: Option<usize>,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `protocol,prefix_len,count` histogram.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Per-frame CSV.
    #[arg(long)]
    frames: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    /// Event trace (JSON lines) from `simulate` or `attack`.
    trace: PathBuf,
    /// Scenario file giving node names and identifier owners.
    #[arg(long)]
    scenario: PathBuf,
    /// Bus bit trace to scan for short dominant injections.
    #[arg(long)]
    bits: Option<PathBuf>,
    /// Alerts (JSON lines); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Injection findings (JSON lines).
    #[arg(long)]
    findings: Option<PathBuf>,
}

fn parse_timings(text: &str) -> Result<[f64; 4], String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 durations (start,ack,stop,interframe), got {}", v.len()))
}

fn parse_victim(text: &str) -> Result<HexId, String> {
    HexId::try_from(text.to_string()).map_err(|e| e.to_string())
}

/// Inputs, seed and outputs of one run, written next to each artifact.
#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    inputs: Vec<String>,
    seed: u64,
    overrides: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl RunManifest<'_> {
    fn write_beside(&self) -> Result<()> {
        for out in &self.outputs {
            let path = PathBuf::from(format!("{out}.manifest.json"));
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, self)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn display(paths: &[&Option<PathBuf>]) -> Vec<String> {
    paths.iter().filter_map(|p| p.as_ref().map(|p| p.display().to_string())).collect()
}

fn parse_frame(text: &str) -> Result<CanFrame> {
    text.trim().parse().map_err(|e| anyhow!("{e}"))
}

fn cmd_encode(text: &str) -> Result<ExitCode> {
    let frame = parse_frame(text)?;
    let (stream, layout) = encode_frame(&frame)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{stream}")?;
    writeln!(
        out,
        "# {frame}: {} bits, {} stuff bits ('|' precedes each)",
        stream.len(),
        stream.stuff_positions().len()
    )?;
    for (field, _) in layout.fields().iter().filter(|(f, _)| *f != Field::Ifs) {
        let r = layout.physical_range(*field);
        let bits = &stream.bits()[r.clone()];
        writeln!(out, "# {:<9} {:>3}..{:<3} {}", field.name(), r.start, r.end, bits_to_string(bits))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_decode(arg: &str) -> Result<ExitCode> {
    let text = if arg == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        arg.to_string()
    };
    let body: String = text.lines().filter(|l| !l.trim_start().starts_with('#')).collect();
    let stream: Bitstream = body.parse().map_err(|e| anyhow!("{e}"))?;
    match decode_frame(stream.bits()) {
        Ok(frame) => {
            writeln!(io::stdout(), "{frame}")?;
            Ok(ExitCode::SUCCESS)
        }
        Err(DecodeError::Bus(e)) => bail!("{:?} at bit {}", e.kind, e.bit_index),
        Err(e) => bail!("{e}"),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<ExitCode> {
    let frame = parse_frame(&a.frame)?;
    let (stream, _) = encode_frame(&frame)?;
    let result: Result<PolyglotPlan, SynthError> = match a.proto {
        Protocol::Spi => Ok(synth_spi(stream.bits())),
        Protocol::Uart => {
            let allowed = if a.uart.is_empty() { UartConfig::all() } else { a.uart.clone() };
            synth_uart(stream.bits(), &allowed, a.max_idle)
        }
        Protocol::I2c => {
            let opts = I2cSynthOptions { seed: a.seed, max_attempts: a.max_attempts, ..Default::default() };
            synth_i2c(&FrameSpec::exact(&frame), &a.timing.i2c(), a.timing.bit_time, &opts).map(|s| s.plan)
        }
        Protocol::Adc => bail!("an ADC only reads the bus; it cannot emit a frame"),
    };
    let plan = match result {
        Ok(plan) => plan,
        Err(e @ (SynthError::UartInfeasible { .. } | SynthError::I2cInfeasible { .. })) => {
            eprintln!("infeasible: {e}");
            return Ok(ExitCode::from(EXIT_INFEASIBLE));
        }
        Err(e) => bail!("{e}"),
    };
    let text = format!("# {frame} seed={} bit_time_us={}\n{plan}", a.seed, a.timing.bit_time);
    match &a.out {
        Some(path) => {
            create(path)?.write_all(text.as_bytes())?;
            let mut overrides = BTreeMap::from([("proto".to_string(), a.proto.to_string())]);
            overrides.insert("bit_time_us".into(), a.timing.bit_time.to_string());
            RunManifest {
                subcommand: "synth",
                inputs: vec![frame.to_string()],
                seed: a.seed,
                overrides,
                outputs: display(&[&a.out]),
            }
            .write_beside()?;
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn write_trace(path: &Option<PathBuf>, events: &[BusEvent]) -> Result<()> {
    if let Some(p) = path {
        let mut w = create(p)?;
        write_jsonl(&mut w, events)?;
        w.flush()?;
    }
    Ok(())
}

fn write_bits(path: &Option<PathBuf>, world: &World) -> Result<()> {
    if let Some(p) = path {
        let log = world.bus_log().expect("recording was enabled");
        let mut w = create(p)?;
        writeln!(w, "{}", bits_to_string(log))?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct NodeSummary {
    name: String,
    tec: u32,
    rec: u32,
    state: String,
    sent: usize,
    received: usize,
}

#[derive(Serialize)]
struct SimSummary {
    seed: u64,
    bit_time_us: f64,
    ticks: u64,
    frames_completed: usize,
    error_flags: usize,
    nodes: Vec<NodeSummary>,
}

fn summarize(scenario: &Scenario, world: &World, events: &[BusEvent]) -> SimSummary {
    SimSummary {
        seed: scenario.seed,
        bit_time_us: scenario.bit_time_us,
        ticks: world.tick(),
        frames_completed: events.iter().filter(|e| matches!(e.kind, EventKind::FrameComplete { .. })).count(),
        error_flags: events.iter().filter(|e| matches!(e.kind, EventKind::ErrorFlag { .. })).count(),
        nodes: world
            .nodes()
            .iter()
            .map(|n| NodeSummary {
                name: n.name().to_string(),
                tec: n.tec(),
                rec: n.rec(),
                state: n.error_state().to_string(),
                sent: n.sent().len(),
                received: n.received().len(),
            })
            .collect(),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode> {
    let mut scenario = Scenario::load(&a.scenario)?;
    let overrides = a.run.apply(&mut scenario);
    let mut world = scenario.build()?;
    if a.bits.is_some() {
        world.record_bus();
    }
    let events = world.run(scenario.duration);
    write_trace(&a.out, &events)?;
    write_bits(&a.bits, &world)?;
    let summary = summarize(&scenario, &world, &events);
    writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&summary)?)?;
    RunManifest {
        subcommand: "simulate",
        inputs: vec![a.scenario.display().to_string()],
        seed: scenario.seed,
        overrides,
        outputs: display(&[&a.out, &a.bits]),
    }
    .write_beside()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack(a: &AttackArgs) -> Result<ExitCode> {
    let mut scenario = AttackScenario::load(&a.scenario)?;
    let mut overrides = a.run.apply(&mut scenario.traffic);
    match &mut scenario.attack.kind {
        AttackKind::TargetedDos { victim, flag_bits, repetitions } => {
            if let Some(v) = a.victim {
                *victim = v;
            }
            if let Some(f) = a.flag_bits {
                *flag_bits = f;
            }
            if let Some(r) = a.repetitions {
                *repetitions = r;
            }
        }
        AttackKind::ArbitrationDenial { victim, repetitions } => {
            if let Some(v) = a.victim {
                *victim = v;
            }
            if let Some(r) = a.repetitions {
                *repetitions = r;
            }
        }
        AttackKind::CompleteDos { .. } => {}
    }
    let given = [
        ("victim", a.victim.map(|v| v.to_string())),
        ("repetitions", a.repetitions.map(|r| r.to_string())),
        ("flag_bits", a.flag_bits.map(|f| f.to_string())),
    ];
    overrides.extend(given.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
    if let Some(p) = a.proto {
        scenario.attack.writer = p;
        overrides.insert("writer".into(), p.to_string());
    }
    if let Some(p) = a.reader {
        scenario.attack.reader = p;
        overrides.insert("reader".into(), p.to_string());
    }
    if a.timings.is_some() || a.tolerance.is_some() {
        let mut t = scenario.attack.timings.unwrap_or(I2cTimings::LPC11C24);
        if let Some([s, k, p, i]) = a.timings {
            (t.start_us, t.ack_us, t.stop_us, t.interframe_us) = (s, k, p, i);
        }
        if let Some(tol) = a.tolerance {
            t.tolerance_us = tol;
        }
        scenario.attack.timings = Some(t);
        overrides.insert("timings".into(), format!("{t:?}"));
    }

    let run = run_attack(&scenario)?;
    write_trace(&a.trace, &run.events)?;
    write_bits(&a.bits, &run.world)?;
    let json = serde_json::to_string_pretty(&run.outcome)?;
    match &a.out {
        Some(p) => writeln!(create(p)?, "{json}")?,
        None => writeln!(io::stdout(), "{json}")?,
    }
    RunManifest {
        subcommand: "attack",
        inputs: vec![a.scenario.display().to_string()],
        seed: scenario.traffic.seed,
        overrides,
        outputs: display(&[&a.out, &a.trace, &a.bits]),
    }
    .write_beside()?;
    Ok(ExitCode::SUCCESS)
}

fn percent(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<ExitCode> {
    let log = read_candump(&a.log).with_context(|| format!("cannot read {}", a.log.display()))?;
    let mut spaces = Vec::new();
    for p in &a.proto {
        let space = match p {
            Protocol::Spi => CompatSpace::Spi,
            Protocol::Adc => CompatSpace::Adc,
            Protocol::Uart => CompatSpace::Uart { configs: UartConfig::all(), max_idle: a.max_idle },
            Protocol::I2c => CompatSpace::i2c(
                i2c_template(&a.timing.i2c(), a.timing.bit_time)
                    .with_context(|| format!("I2C timings at {} us", a.timing.bit_time))?,
            ),
        };
        spaces.push(NamedSpace { name: p.to_string(), space });
    }
    let frames: Vec<CanFrame> = log.frames().cloned().collect();
    let report = analyze_corpus(&frames, &spaces, log.skipped.len());

    if let Some(p) = &a.out {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
    }
    if let Some(p) = &a.histogram {
        report.write_histogram_csv(create(p)?)?;
    }
    if let Some(p) = &a.frames {
        report.write_frames_csv(create(p)?)?;
    }
    if !log.skipped.is_empty() {
        eprintln!("skipped {} unparseable lines", log.skipped.len());
    }
    for s in &report.protocols {
        writeln!(
            io::stdout(),
            "{}: {} messages, {} IDs; full ID read in {} of messages and {} of IDs; full frame in {} messages",
            s.protocol,
            s.messages,
            s.unique_ids,
            percent(s.id_coverage_messages),
            percent(s.id_coverage_unique),
            s.full_frame_messages
        )?;
    }
    RunManifest {
        subcommand: "analyze",
        inputs: vec![a.log.display().to_string()],
        seed: 0,
        overrides: BTreeMap::from([("bit_time_us".to_string(), a.timing.bit_time.to_string())]),
        outputs: display(&[&a.out, &a.histogram, &a.frames]),
    }
    .write_beside()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_monitor(a: &MonitorArgs) -> Result<ExitCode> {
    let scenario = Scenario::load(&a.scenario)?;
    let world = scenario.build()?;
    let file = File::open(&a.trace).with_context(|| format!("cannot open {}", a.trace.display()))?;
    let events = read_jsonl(BufReader::new(file)).with_context(|| format!("in {}", a.trace.display()))?;
    let (_, alerts) = monitor_trace(&events, scenario.id_owners()?, node_names(&world))?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_alerts_jsonl(&mut w, &alerts)?;
            w.flush()?;
        }
        None => write_alerts_jsonl(io::stdout().lock(), &alerts)?,
    }
    if let Some(bits_path) = &a.bits {
        let mut text = String::new();
        for line in BufReader::new(File::open(bits_path)?).lines() {
            text.push_str(line?.trim());
        }
        let bits = parse_bits(&text).map_err(|e| anyhow!("{}: {e}", bits_path.display()))?;
        let findings = detect_short_injection(&bits, 0);
        eprintln!("{} injection-shaped bursts", findings.len());
        if let Some(p) = &a.findings {
            let mut w = create(p)?;
            for f in &findings {
                serde_json::to_writer(&mut w, f)?;
                writeln!(w)?;
            }
            w.flush()?;
        }
    }
    RunManifest {
        subcommand: "monitor",
        inputs: vec![a.trace.display().to_string(), a.scenario.display().to_string()],
        seed: scenario.seed,
        overrides: BTreeMap::new(),
        outputs: display(&[&a.out, &a.findings]),
    }
    .write_beside()?;
    if alerts.iter().any(|al| al.alert == AlertKind::BusOff) {
        return Ok(ExitCode::from(EXIT_BUS_OFF));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Encode { frame } => cmd_encode(frame),
        Command::Decode { bits } => cmd_decode(bits),
        Command::Synth(a) => cmd_synth(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Monitor(a) => cmd_monitor(a),
    };
    match result {
        Ok(code) => code,
        // A closed pipe (`canlab ... | head`) is not a failure.
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

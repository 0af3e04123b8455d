use canlab::codec::Bit;
use canlab::periph::*;
use proptest::prelude::*;

fn bits_of(v: Vec<bool>) -> Vec<Bit> {
    v.into_iter().map(Bit::from_level).collect()
}

fn any_template() -> impl Strategy<Value = PacketTemplate> {
    prop::collection::vec(prop_oneof![Just('0'), Just('1'), Just('.')], 1..24)
        .prop_map(|cs| cs.into_iter().collect::<String>().parse().unwrap())
}

#[test]
fn template_text_notation() {
    let t: PacketTemplate = "0..1".parse().unwrap();
    assert_eq!(t.len(), 4);
    assert_eq!(t.free_count(), 2);
    assert_eq!(t.to_string(), "0..1");
    assert!("0x1".parse::<PacketTemplate>().is_err());
    assert!("".parse::<PacketTemplate>().is_err());
    assert_eq!(spi_template(4).unwrap().to_string(), "....");
}

#[test]
fn uart_frames_from_the_wire() {
    let cfg = UartConfig::new(8, 1).unwrap();
    let wire = canlab::codec::parse_bits("0101100111").unwrap();
    let c = uart_receive(&wire, cfg).unwrap();
    assert_eq!(canlab::codec::bits_to_string(&c.data), "10110011");
    assert_eq!(uart_receive(&wire[..7], cfg), Err(UartError::Truncated { len: 7 }));
    // Every config frames the start bit at 0 and stop bits at the end.
    for cfg in UartConfig::all() {
        let s = uart_template(cfg).to_string();
        assert!(s.starts_with('0'));
        assert!(s.ends_with(&"1".repeat(cfg.stop_bits() as usize)));
        assert_eq!(s.matches('.').count(), cfg.data_bits() as usize);
    }
}

#[test]
fn i2c_timings_on_the_bit_grid() {
    let l = i2c_template(&I2cTimings::LPC11C24, 5.0).unwrap();
    assert_eq!(l.widths(), (1, 1, 1, 2));
    assert_eq!(l.template().to_string(), "0........1011");
    assert!(matches!(
        i2c_template(&I2cTimings::LPC11C24, 2.5),
        Err(I2cError::Infeasible { portion: I2cPortion::Ack, .. })
    ));
}

#[test]
fn i2c_feasibility_is_monotone_in_tolerance() {
    for step in 1..=40 {
        let bt = step as f64 * 0.25;
        let mut seen_feasible = false;
        for k in 0..=40 {
            let t = I2cTimings { tolerance_us: k as f64 * 0.05, ..I2cTimings::LPC11C24 };
            let ok = i2c_template(&t, bt).is_ok();
            assert!(ok || !seen_feasible, "bit time {bt}: feasibility lost as tolerance grew");
            seen_feasible |= ok;
        }
    }
}

#[test]
fn aligned_timings_are_always_feasible() {
    for bt in [0.5, 1.0, 2.0, 5.0, 8.0] {
        let l = i2c_template_with(&I2cTimings::aligned(bt), bt, 0.0).unwrap();
        assert_eq!(l.widths(), (1, 1, 1, 2));
        assert!(l.residuals.iter().all(|r| *r < 1e-9));
    }
}

#[test]
fn adc_reads_a_digital_trace() {
    let trace = canlab::codec::parse_bits("0110100011").unwrap();
    for spb in 1..5 {
        let cfg = AdcConfig::new(0.5, spb).unwrap();
        assert_eq!(adc_read(&to_analog(&trace, spb), &cfg), trace);
    }
    assert!(AdcConfig::new(1.0, 1).is_err());
    assert!(AdcConfig::new(0.5, 0).is_err());
}

proptest! {
    #[test]
    fn capture_inverts_instantiate(t in any_template(), fill in prop::collection::vec(any::<bool>(), 24)) {
        let payload = bits_of(fill[..t.free_count()].to_vec());
        let emitted = t.instantiate(&payload).unwrap();
        prop_assert_eq!(emitted.len(), t.len());
        prop_assert_eq!(t.admitted_prefix(&emitted), t.len());
        prop_assert_eq!(t.capture(&emitted).unwrap(), payload);
    }

    #[test]
    fn admitted_prefix_stops_at_first_fixed_mismatch(t in any_template(), raw in prop::collection::vec(any::<bool>(), 24)) {
        let trace = bits_of(raw[..t.len()].to_vec());
        let a = t.admitted_prefix(&trace);
        let first_bad = t.cells().iter().zip(&trace).position(|(c, b)| !c.admits(*b)).unwrap_or(t.len());
        prop_assert_eq!(a, first_bad);
        prop_assert_eq!(t.capture(&trace).is_ok(), a == t.len());
    }

    #[test]
    fn uart_receive_agrees_with_template(raw in prop::collection::vec(any::<bool>(), 12), d in 5u8..=9, s in 1u8..=2) {
        let cfg = UartConfig::new(d, s).unwrap();
        let trace = bits_of(raw);
        let t = uart_template(cfg);
        prop_assert_eq!(uart_receive(&trace, cfg).is_ok(), t.capture(&trace[..cfg.len()]).is_ok());
    }
}

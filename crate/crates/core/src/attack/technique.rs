use crate::codec::{encode_frame, Bit, CanFrame, Field};
use crate::periph::{i2c_template, uart_template, I2cTimings, UartConfig, I2C_PAYLOAD_BITS};
use crate::synth::{compat_prefix, CompatSpace, Protocol};

use super::AttackError;

/// Physical bits of the victim's data frame from SOF through r0. Every data
/// frame with this ID starts this way, whatever its DLC and payload.
pub fn victim_prefix(victim_id: u16) -> Vec<Bit> {
    let frame = CanFrame::data_frame(victim_id, &[]).expect("identifier checked by the caller");
    let (stream, layout) = encode_frame(&frame).expect("valid frame");
    stream.bits()[..layout.physical_range(Field::R0).end].to_vec()
}

/// Checks that `reader` can capture `pattern` from SOF onward.
pub fn check_reader(reader: Protocol, pattern: &[Bit]) -> Result<(), AttackError> {
    match reader {
        Protocol::Spi | Protocol::Adc => Ok(()),
        Protocol::I2c => {
            Err(AttackError::ReaderIncapable { reader, reason: "I2C cannot read arbitrary bus bits".into() })
        }
        Protocol::Uart => {
            let r = compat_prefix(pattern, &CompatSpace::uart_all());
            if r.is_full() {
                Ok(())
            } else {
                Err(AttackError::ReaderIncapable {
                    reader,
                    reason: format!(
                        "UART framing breaks at bit {} of the {}-bit match pattern",
                        r.prefix,
                        pattern.len()
                    ),
                })
            }
        }
    }
}

/// What `writer` puts on the pin to force `flag_bits` dominant bits, starting
/// with the first dominant bit. Trailing cells are whatever the peripheral
/// must still send after the burst.
pub fn burst_emission(
    writer: Protocol,
    flag_bits: usize,
    timings: &I2cTimings,
    bit_time_us: f64,
) -> Result<Vec<Bit>, AttackError> {
    if flag_bits == 0 {
        return Err(AttackError::FlagBits);
    }
    let burst = |payload_len: usize, dominant: usize| -> Vec<Bit> {
        (0..payload_len).map(|i| Bit::from_level(i >= dominant)).collect()
    };
    match writer {
        Protocol::Spi => Ok(vec![Bit::Dominant; flag_bits]),
        Protocol::Adc => Err(AttackError::WriterIncapable { writer, reason: "an ADC pin only reads".into() }),
        Protocol::Uart => {
            let data = (flag_bits - 1).max(5);
            let cfg = UartConfig::new(data as u8, 1).map_err(|_| AttackError::WriterIncapable {
                writer,
                reason: format!("a UART packet holds at most 10 dominant bits, {flag_bits} requested"),
            })?;
            Ok(uart_template(cfg).instantiate(&burst(data, flag_bits - 1)).expect("payload sized to the template"))
        }
        Protocol::I2c => {
            let layout = i2c_template(timings, bit_time_us)
                .map_err(|e| AttackError::WriterIncapable { writer, reason: e.to_string() })?;
            if flag_bits < layout.start || flag_bits > layout.start + I2C_PAYLOAD_BITS {
                return Err(AttackError::WriterIncapable {
                    writer,
                    reason: format!(
                        "an I2C packet forces {}..={} leading dominant bits, {flag_bits} requested",
                        layout.start,
                        layout.start + I2C_PAYLOAD_BITS
                    ),
                });
            }
            let payload = burst(I2C_PAYLOAD_BITS, flag_bits - layout.start);
            Ok(layout.template().instantiate(&payload).expect("payload sized to the template"))
        }
    }
}

/// Only a peripheral that emits arbitrary bits can hold the bus or forge a frame.
pub fn check_free_writer(writer: Protocol, what: &str) -> Result<(), AttackError> {
    match writer {
        Protocol::Spi => Ok(()),
        _ => Err(AttackError::WriterIncapable { writer, reason: format!("{writer} cannot {what}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::bits_to_string;

    #[test]
    fn bursts_per_writer() {
        let t = I2cTimings::LPC11C24;
        assert_eq!(bits_to_string(&burst_emission(Protocol::Spi, 6, &t, 5.0).unwrap()), "000000");
        assert_eq!(bits_to_string(&burst_emission(Protocol::Uart, 6, &t, 5.0).unwrap()), "0000001");
        assert_eq!(bits_to_string(&burst_emission(Protocol::I2c, 6, &t, 5.0).unwrap()), "0000001111011");
        assert!(burst_emission(Protocol::Uart, 11, &t, 5.0).is_err());
        assert!(burst_emission(Protocol::Adc, 6, &t, 5.0).is_err());
        assert!(burst_emission(Protocol::I2c, 6, &t, 2.5).is_err());
    }

    #[test]
    fn readers() {
        let p = victim_prefix(0x1a2);
        assert!(check_reader(Protocol::Spi, &p).is_ok());
        assert!(matches!(check_reader(Protocol::I2c, &p), Err(AttackError::ReaderIncapable { .. })));
    }
}

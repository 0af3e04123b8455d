//! Peripheral models for pins shared with the CAN controller: what SPI, UART,
//! I2C and ADC peripherals can emit or capture, as bit-cell templates.

mod actor;
mod adc;
mod i2c;
mod template;
mod uart;

pub use actor::{BitReceiver, BitSender, DominantHold, Replay, Silent};
pub use adc::{adc_read, to_analog, AdcConfig, AdcError};
pub use i2c::{
    i2c_template, i2c_template_with, I2cError, I2cLayout, I2cPortion, I2cTimings, DEFAULT_RESYNC_FRACTION,
    I2C_PAYLOAD_BITS,
};
pub use template::{spi_template, Cell, PacketTemplate, TemplateError};
pub use uart::{uart_receive, uart_template, UartCapture, UartConfig, UartError, MAX_DATA_BITS, MIN_DATA_BITS};

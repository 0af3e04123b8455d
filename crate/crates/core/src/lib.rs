pub mod attack;
pub mod bus;
pub mod candump;
pub mod codec;
pub mod monitor;
pub mod periph;
pub mod synth;

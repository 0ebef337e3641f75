//! Link-level simulator for multiple-access visible light communication on a
//! single photodiode behind a pixelated LCD shutter.
//!
//! The crate is organised bottom-up:
//!
//! * [`optics`] - emitter separation, angular separation and emitter to pixel mapping.
//! * [`modem`] - OOK and GMSK intensity modulation and demodulation.
//! * [`framing`] - Barker-coded transmitter IDs, packet framing and detection.
//! * [`channel`] - the gated, additive single-photodiode channel.
//! * [`protocol`] - the Discovery / Identification shutter controller and its latency model.
//! * [`metrics`] - BER, PER, SNR and goodput.
//! * [`harness`] - scenario files, end-to-end runs, traces, replay and reference tables.

pub mod bits;
pub mod channel;
pub mod framing;
pub mod harness;
pub mod metrics;
pub mod modem;
pub mod optics;
pub mod protocol;

pub use channel::{ChannelConfig, PixelMask, SnrEstimate};
pub use framing::{Detection, IdKind, IdLookupTable, Packet, TransmitterId};
pub use modem::{ModemConfig, PhaseOffset, SampleBlock, Scheme, ThresholdMode};
pub use optics::{EmitterPlacement, OpticalSetup};

//! Link quality figures: BER, PER, SNR and goodput.

use crate::channel::{received_snr_db, ChannelError, SnrEstimate};
use crate::framing::Detection;
use crate::modem::SampleBlock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("bit sequences differ in length ({tx} vs {rx})")]
    LengthMismatch { tx: usize, rx: usize },
    #[error("no bits to compare")]
    Empty,
    #[error("expected packet count must be positive")]
    ZeroExpected,
}

/// Per-emitter summary of a run. Figures without data to back them are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    /// Emitter label (index in the scenario).
    pub label: usize,
    pub ber: Option<f64>,
    pub bit_errors: usize,
    pub bits_compared: usize,
    pub per_percent: Option<f64>,
    pub packets_expected: usize,
    pub packets_detected_valid: usize,
    pub snr_db: Option<SnrEstimate>,
    pub goodput_bps: Option<f64>,
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize, MetricsError> {
    if tx.len() != rx.len() {
        return Err(MetricsError::LengthMismatch { tx: tx.len(), rx: rx.len() });
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}

/// Hamming distance over length.
pub fn bit_error_rate(tx: &[u8], rx: &[u8]) -> Result<f64, MetricsError> {
    let errors = bit_errors(tx, rx)?;
    if tx.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(errors as f64 / tx.len() as f64)
}

/// `100 * (1 - valid / expected)`, clamped to `[0, 100]`.
///
/// Every detection with a complete payload counts as valid; callers filter
/// out detections of the wrong transmitter or at implausible offsets first
/// (see [`plausible_detections`]). Payload bit errors do not invalidate a packet.
pub fn packet_error_rate(detections: &[Detection], expected: usize) -> Result<f64, MetricsError> {
    let valid = detections.iter().filter(|d| d.is_complete()).count();
    per_from_counts(valid, expected)
}

pub fn per_from_counts(valid: usize, expected: usize) -> Result<f64, MetricsError> {
    if expected == 0 {
        return Err(MetricsError::ZeroExpected);
    }
    let valid = valid.min(expected);
    Ok(100.0 - 100.0 * valid as f64 / expected as f64)
}

/// Detections of `label` whose header sits on a true packet boundary.
///
/// `stream_start` is the absolute bit index of the first decoded bit, so a
/// detection at `offset` is plausible when `stream_start + offset` is a
/// multiple of `packet_bits`.
pub fn plausible_detections<'a>(
    detections: &'a [Detection],
    label: usize,
    stream_start: u64,
    packet_bits: usize,
) -> impl Iterator<Item = &'a Detection> + 'a {
    detections.iter().filter(move |d| {
        d.label == label && (stream_start + d.offset as u64).is_multiple_of(packet_bits as u64) && d.is_complete()
    })
}

/// Packets that start and end inside `[stream_start, stream_start + len)`.
pub fn packets_in_window(stream_start: u64, len: usize, packet_bits: usize) -> usize {
    let p = packet_bits as u64;
    let first = stream_start.div_ceil(p);
    let end = stream_start + len as u64;
    if end < p {
        return 0;
    }
    let last = end / p; // exclusive index of the first packet not fully inside
    last.saturating_sub(first) as usize
}

/// `(1 - BER) * code_rate * symbol_rate * bits_per_symbol` in bits per second.
pub fn goodput(ber: f64, code_rate: f64, symbol_rate: f64, bits_per_symbol: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&ber));
    debug_assert!(code_rate > 0.0 && code_rate <= 1.0);
    (1.0 - ber) * code_rate * symbol_rate * bits_per_symbol
}

/// SNR of a recorded (signal dwell, noise dwell) pair.
pub fn snr_from_trace(signal: &SampleBlock, noise: &SampleBlock) -> Result<SnrEstimate, ChannelError> {
    received_snr_db(signal, noise)
}

use super::run::ID_CONFIRMATIONS;
use super::scenario::{Scenario, SCHEMA_VERSION};
use super::HarnessError;
use crate::channel::{PixelMask, SnrEstimate};
use crate::framing::{detect_packets, frame_sync, Detection, IdLookupTable, PACKET_BITS};
use crate::metrics::{bit_errors, goodput, packets_in_window, per_from_counts, plausible_detections, LinkReport};
use crate::protocol::ControllerEvent;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One reception slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellRecord {
    pub index: usize,
    pub start_time_s: f64,
    pub mask: PixelMask,
    /// Emitter whose stream this slot is decoded for.
    pub label: usize,
    /// Stream index of the first decoded bit.
    pub start_bit: u64,
    pub decoded_bits: String,
    /// Ground truth sent by `label` over the same symbols.
    pub tx_bits: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// The scenario held a fixed mask; the controller did not run.
    FixedMask,
    Locked {
        pixels: Vec<usize>,
        labels: Vec<usize>,
        cycles: usize,
        dwells: usize,
        lock_time_s: f64,
    },
    NonConvergence {
        cycles: usize,
        dwells: usize,
    },
}

/// Everything needed to audit and replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    /// SHA-256 of the scenario JSON (after any seed override).
    pub scenario_hash: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub id_table: IdLookupTable,
    pub corr_threshold: i32,
    pub packet_bits: usize,
    pub outcome: Outcome,
    pub events: Vec<ControllerEvent>,
    /// Measured SNR per emitter label.
    pub snr: BTreeMap<usize, SnrEstimate>,
    pub dwells: Vec<DwellRecord>,
    pub reports: Vec<LinkReport>,
}

fn parse(bits: &str) -> Result<Vec<u8>, HarnessError> {
    crate::bits::parse(bits).map_err(|c| HarnessError::Invalid(format!("trace bit string contains {c:?}")))
}

/// Detections in one decoded slot.
pub(crate) fn detect(
    decoded: &[u8],
    table: &IdLookupTable,
    corr_threshold: i32,
) -> Result<Vec<Detection>, HarnessError> {
    Ok(detect_packets(decoded, table, corr_threshold)?)
}

/// Recomputes every report from the decoded and transmitted bits of each slot.
///
/// Each slot is first synchronized to the earliest header of the slot's
/// emitter that repeats at packet spacing ([`frame_sync`]). Bits before it
/// are skipped and packet detection starts there; without sync the whole
/// slot is compared and scanned. A packet is valid when its header sits on a
/// true packet boundary with a full payload.
pub fn compute_reports(
    dwells: &[DwellRecord],
    table: &IdLookupTable,
    corr_threshold: i32,
    snr: &BTreeMap<usize, SnrEstimate>,
    scenario: &Scenario,
) -> Result<Vec<LinkReport>, HarnessError> {
    #[derive(Default)]
    struct Tally {
        errors: usize,
        compared: usize,
        expected: usize,
        valid: usize,
    }
    let mut tallies: BTreeMap<usize, Tally> = BTreeMap::new();
    for dwell in dwells {
        let rx = parse(&dwell.decoded_bits)?;
        let tx = parse(&dwell.tx_bits)?;
        let id = table.id_of(dwell.label).ok_or_else(|| {
            HarnessError::Invalid(format!("slot {} decodes unregistered emitter {}", dwell.index, dwell.label))
        })?;
        let start = frame_sync(&rx, &id, corr_threshold, ID_CONFIRMATIONS).unwrap_or(0);
        let mut found = detect(&rx[start..], table, corr_threshold)?;
        for d in &mut found {
            d.offset += start;
        }
        let t = tallies.entry(dwell.label).or_default();
        t.errors += bit_errors(&tx[start..], &rx[start..])?;
        t.compared += rx.len() - start;
        t.expected += packets_in_window(dwell.start_bit, rx.len(), PACKET_BITS);
        t.valid += plausible_detections(&found, dwell.label, dwell.start_bit, PACKET_BITS).count();
    }

    let mut reports = Vec::with_capacity(tallies.len());
    for (label, t) in tallies {
        let ber = (t.compared > 0).then(|| t.errors as f64 / t.compared as f64);
        let modem = &scenario.emitters[label].modem;
        reports.push(LinkReport {
            label,
            ber,
            bit_errors: t.errors,
            bits_compared: t.compared,
            per_percent: per_from_counts(t.valid, t.expected).ok(),
            packets_expected: t.expected,
            packets_detected_valid: t.valid.min(t.expected),
            snr_db: snr.get(&label).copied(),
            goodput_bps: ber.map(|b| goodput(b, scenario.code_rate, modem.symbol_rate, modem.bits_per_symbol as f64)),
        });
    }
    Ok(reports)
}

/// Recomputes the reports of an in-memory trace, ignoring its stored reports and detections.
pub fn replay_record(record: &TraceRecord) -> Result<Vec<LinkReport>, HarnessError> {
    compute_reports(&record.dwells, &record.id_table, record.corr_threshold, &record.snr, &record.scenario)
}

/// Loads a trace file and recomputes its reports from the stored bits.
pub fn replay_trace(path: impl AsRef<Path>) -> Result<Vec<LinkReport>, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != SCHEMA_VERSION as u64 {
        return Err(HarnessError::SchemaVersionMismatch { found, expected: SCHEMA_VERSION });
    }
    let record: TraceRecord = serde_json::from_value(value)?;
    replay_record(&record)
}

/// Writes `(sim time s, intensity)` rows.
pub fn write_samples_csv(path: impl AsRef<Path>, samples: &[(f64, f64)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["sim_time_s", "intensity"])?;
    for (t, y) in samples {
        w.write_record([t.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path.as_ref(), e))?;
    Ok(())
}

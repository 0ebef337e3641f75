//! Automated shutter control.
//!
//! The controller finds which shutter pixels carry registered transmitters in
//! two passes. Discovery opens one pixel at a time for a slot of `T_s` and
//! keeps the pixels whose SNR clears a threshold. Identification decodes each
//! surviving pixel alone and keeps those whose packet headers match the ID
//! lookup table. Failure of either pass closes the shutter and starts over,
//! up to a retry budget.

use crate::channel::{PixelMask, SnrEstimate};
use crate::framing::{IdLookupTable, TransmitterId};
use crate::modem::SampleBlock;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 10.0;
pub const DEFAULT_RETRY_BUDGET: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("controller is in {actual:?}, expected {expected:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("identification needs at least one candidate pixel")]
    EmptyCandidates,
    #[error("invalid latency model: {0}")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Init,
    Discovery,
    Identification,
    Locked,
    Reset,
}

/// State of the shutter controller.
#[derive(Debug, Clone)]
pub struct ShutterController {
    pub phase: Phase,
    pub mask: PixelMask,
    /// Dwell per switching slot, seconds.
    pub t_s: f64,
    pub snr_threshold_db: f64,
    pub pixel_snr_db: Vec<Option<SnrEstimate>>,
    pub candidate_pixels: BTreeSet<usize>,
    /// Locked pixel -> label of the transmitter identified on it.
    pub locked_pixels: BTreeMap<usize, usize>,
    pub id_table: IdLookupTable,
    /// When set, only the pixel carrying this ID is locked.
    pub select_target: Option<TransmitterId>,
    registered: IdLookupTable,
}

impl ShutterController {
    pub fn new(grid_pixels: usize, t_s: f64, snr_threshold_db: f64, id_table: IdLookupTable) -> Self {
        ShutterController {
            phase: Phase::Init,
            mask: PixelMask::all_closed(grid_pixels),
            t_s,
            snr_threshold_db,
            pixel_snr_db: vec![None; grid_pixels],
            candidate_pixels: BTreeSet::new(),
            locked_pixels: BTreeMap::new(),
            registered: id_table.clone(),
            id_table,
            select_target: None,
        }
    }

    pub fn with_target(mut self, target: Option<TransmitterId>) -> Self {
        self.select_target = target;
        self
    }

    pub fn grid_pixels(&self) -> usize {
        self.mask.len()
    }

    fn expect(&self, expected: Phase) -> Result<(), ProtocolError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(ProtocolError::WrongPhase { expected, actual: self.phase })
        }
    }

    /// INIT: open every pixel, reload the registered IDs and move to DISCOVERY.
    pub fn initialize(&mut self) -> Result<(), ProtocolError> {
        self.expect(Phase::Init)?;
        self.mask = PixelMask::all_open(self.grid_pixels());
        self.id_table = self.registered.clone();
        self.phase = Phase::Discovery;
        Ok(())
    }

    /// RESET: reload the registered IDs and go back to DISCOVERY with the shutter closed.
    pub fn refresh(&mut self) -> Result<(), ProtocolError> {
        self.expect(Phase::Reset)?;
        self.id_table = self.registered.clone();
        self.mask = PixelMask::all_closed(self.grid_pixels());
        self.phase = Phase::Discovery;
        Ok(())
    }

    /// Scans every pixel alone; `probe` measures the SNR of one `T_s` dwell
    /// under the single-pixel mask it is handed.
    pub fn step_discovery<E: From<ProtocolError>>(
        &mut self,
        mut probe: impl FnMut(usize, &PixelMask) -> Result<SnrEstimate, E>,
    ) -> Result<(), E> {
        self.expect(Phase::Discovery)?;
        let pixels = self.grid_pixels();
        self.candidate_pixels.clear();
        self.locked_pixels.clear();
        for p in 0..pixels {
            self.mask = PixelMask::single(pixels, p);
            let snr = probe(p, &self.mask)?;
            self.pixel_snr_db[p] = Some(snr);
            if snr.db() >= self.snr_threshold_db {
                self.candidate_pixels.insert(p);
            }
        }
        if self.candidate_pixels.is_empty() {
            self.mask = PixelMask::all_closed(pixels);
            self.phase = Phase::Reset;
        } else {
            let open: Vec<usize> = self.candidate_pixels.iter().copied().collect();
            self.mask = PixelMask::from_open_set(pixels, &open);
            self.phase = Phase::Identification;
        }
        Ok(())
    }

    /// Decodes each candidate pixel alone; `detect` returns the headers found
    /// in one dwell under the single-pixel mask it is handed.
    pub fn step_identification<E: From<ProtocolError>>(
        &mut self,
        mut detect: impl FnMut(usize, &PixelMask) -> Result<Vec<TransmitterId>, E>,
    ) -> Result<(), E> {
        self.expect(Phase::Identification)?;
        if self.candidate_pixels.is_empty() {
            return Err(ProtocolError::EmptyCandidates.into());
        }
        let pixels = self.grid_pixels();
        self.locked_pixels.clear();
        let candidates: Vec<usize> = self.candidate_pixels.iter().copied().collect();
        for p in candidates {
            self.mask = PixelMask::single(pixels, p);
            let ids = detect(p, &self.mask)?;
            let matched = ids.iter().find_map(|id| {
                let wanted = self.select_target.is_none_or(|t| t == *id);
                self.id_table.lookup(id).filter(|_| wanted)
            });
            if let Some(label) = matched {
                self.locked_pixels.insert(p, label);
            }
        }
        if self.locked_pixels.is_empty() {
            self.mask = PixelMask::all_closed(pixels);
            self.phase = Phase::Discovery;
        } else {
            let open: Vec<usize> = self.locked_pixels.keys().copied().collect();
            self.mask = PixelMask::from_open_set(pixels, &open);
            self.phase = Phase::Locked;
        }
        Ok(())
    }
}

/// What the controller needs from the receiver front end.
pub trait ShutterLink {
    type Error: From<ProtocolError>;

    fn grid_pixels(&self) -> usize;

    /// Simulated time at which the next dwell would start.
    fn sim_time_s(&self) -> f64;

    /// Holds `mask` for one slot of `T_s` and returns the photodiode output.
    fn dwell(&mut self, mask: &PixelMask) -> Result<SampleBlock, Self::Error>;

    /// Holds `mask` for one identification window and returns the registered
    /// headers decoded from it.
    fn identify(&mut self, mask: &PixelMask) -> Result<Vec<TransmitterId>, Self::Error>;

    /// SNR of a dwell against a noise reference dwell.
    fn snr(&self, signal: &SampleBlock, noise: &SampleBlock) -> Result<SnrEstimate, Self::Error>;
}

/// One line of the controller event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub sim_time_s: f64,
    pub phase: Phase,
    pub mask: PixelMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_snr_db: Option<Vec<Option<SnrEstimate>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_ids: Option<Vec<TransmitterId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerOptions {
    pub t_s: f64,
    pub snr_threshold_db: f64,
    /// Maximum number of Discovery passes.
    pub retry_budget: usize,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        ControllerOptions { t_s: 1.0, snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB, retry_budget: DEFAULT_RETRY_BUDGET }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub state: ShutterController,
    pub events: Vec<ControllerEvent>,
    pub converged: bool,
    /// Discovery passes started.
    pub cycles: usize,
    /// Dwells spent before the controller stopped.
    pub dwells: usize,
    pub finished_at_s: f64,
}

/// Drives INIT -> DISCOVERY -> IDENTIFICATION -> LOCKED, looping through
/// RESET or back to DISCOVERY until the retry budget is spent.
///
/// Every Discovery pass spends one all-closed noise reference dwell followed
/// by one dwell per pixel; Identification spends one window per candidate.
pub fn run_controller<L: ShutterLink>(
    link: &mut L,
    id_table: IdLookupTable,
    options: ControllerOptions,
    select_target: Option<TransmitterId>,
) -> Result<ControllerRun, L::Error> {
    let pixels = link.grid_pixels();
    let mut state =
        ShutterController::new(pixels, options.t_s, options.snr_threshold_db, id_table).with_target(select_target);
    let mut events = Vec::new();
    let mut dwells = 0usize;
    let mut cycles = 0usize;

    let log = |events: &mut Vec<ControllerEvent>, time: f64, state: &ShutterController| {
        events.push(ControllerEvent {
            sim_time_s: time,
            phase: state.phase,
            mask: state.mask.clone(),
            pixel_snr_db: None,
            detected_ids: None,
        });
    };

    log(&mut events, link.sim_time_s(), &state);
    state.initialize()?;
    log(&mut events, link.sim_time_s(), &state);

    while cycles < options.retry_budget {
        cycles += 1;
        if state.phase == Phase::Reset {
            state.refresh()?;
            log(&mut events, link.sim_time_s(), &state);
        }

        let closed = PixelMask::all_closed(pixels);
        events.push(ControllerEvent {
            sim_time_s: link.sim_time_s(),
            phase: Phase::Discovery,
            mask: closed.clone(),
            pixel_snr_db: None,
            detected_ids: None,
        });
        let reference = link.dwell(&closed)?;
        dwells += 1;

        state.step_discovery(|_, mask| {
            events.push(ControllerEvent {
                sim_time_s: link.sim_time_s(),
                phase: Phase::Discovery,
                mask: mask.clone(),
                pixel_snr_db: None,
                detected_ids: None,
            });
            let block = link.dwell(mask)?;
            dwells += 1;
            link.snr(&block, &reference)
        })?;
        events.push(ControllerEvent {
            sim_time_s: link.sim_time_s(),
            phase: state.phase,
            mask: state.mask.clone(),
            pixel_snr_db: Some(state.pixel_snr_db.clone()),
            detected_ids: None,
        });
        if state.phase == Phase::Reset {
            continue;
        }

        state.step_identification::<L::Error>(|_, mask| {
            let start = link.sim_time_s();
            let ids = link.identify(mask)?;
            dwells += 1;
            events.push(ControllerEvent {
                sim_time_s: start,
                phase: Phase::Identification,
                mask: mask.clone(),
                pixel_snr_db: None,
                detected_ids: Some(ids.clone()),
            });
            Ok(ids)
        })?;
        log(&mut events, link.sim_time_s(), &state);
        if state.phase == Phase::Locked {
            break;
        }
    }

    let converged = state.phase == Phase::Locked;
    if !converged && !state.mask.open.iter().all(|o| !o) {
        state.mask = PixelMask::all_closed(pixels);
        log(&mut events, link.sim_time_s(), &state);
    }
    Ok(ControllerRun { converged, cycles, dwells, finished_at_s: link.sim_time_s(), events, state })
}

/// Inputs of the Discovery + Identification latency estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    grid_pixels: u64,
    n_transmitters: u64,
    packet_bits: u64,
    bit_time: Duration,
    t_s: Duration,
}

impl LatencyModel {
    pub fn new(
        grid_pixels: u64,
        n_transmitters: u64,
        packet_bits: u64,
        bit_time: Duration,
        t_s: Duration,
    ) -> Result<Self, ProtocolError> {
        if grid_pixels == 0 || n_transmitters == 0 || packet_bits == 0 {
            return Err(ProtocolError::InvalidModel("counts must be positive"));
        }
        if bit_time.is_zero() || t_s.is_zero() {
            return Err(ProtocolError::InvalidModel("durations must be positive"));
        }
        Ok(LatencyModel { grid_pixels, n_transmitters, packet_bits, bit_time, t_s })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyEstimate {
    pub discovery: Duration,
    pub identification: Duration,
    pub total: Duration,
}

fn scale(d: Duration, n: u64) -> Duration {
    let nanos = d.as_nanos() * n as u128;
    Duration::new((nanos / 1_000_000_000) as u64, (nanos % 1_000_000_000) as u32)
}

/// Discovery costs one `T_s` per pixel; Identification one packet time per transmitter.
pub fn estimate_latency(model: &LatencyModel) -> LatencyEstimate {
    let discovery = scale(model.t_s, model.grid_pixels);
    let identification = scale(model.bit_time, model.n_transmitters * model.packet_bits);
    LatencyEstimate { discovery, identification, total: discovery + identification }
}

/// Whole packets that fit in one slot: `floor(rate * bits_per_symbol * T_s / packet_bits)`.
pub fn packets_per_slot(symbol_rate: f64, bits_per_symbol: u32, t_s: f64, packet_bits: usize) -> u64 {
    (symbol_rate * bits_per_symbol as f64 * t_s / packet_bits as f64).floor() as u64
}
